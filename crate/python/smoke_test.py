#!/usr/bin/env python3
"""Smoke test for the shrinktm_py extension module.

Build the extension first:

    cargo build --release -p shrinktm-py

The script locates the compiled cdylib under target/, stages it as an
importable module, and runs a miniature simulate -> fit -> sample -> score
pipeline with basic consistency checks.
"""
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def stage_module() -> None:
    candidates = [
        ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libshrinktm_py.so", "libshrinktm_py.dylib", "shrinktm_py.dll")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("extension not built; run: cargo build --release -p shrinktm-py")
    stage = pathlib.Path(tempfile.mkdtemp(prefix="shrinktm_py_"))
    suffix = ".so" if built.suffix != ".dll" else ".pyd"
    shutil.copy2(built, stage / f"shrinktm_py{suffix}")
    sys.path.insert(0, str(stage))


def approx(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def main() -> None:
    stage_module()
    import shrinktm_py as stm

    print(f"shrinktm_py {stm.__version__}")

    points, data = stm.simulate(design="lr", grid=(6, 6), n=3, seed=11)
    assert len(points) == 36 and len(data) == 3 and len(data[0]) == 36
    print(f"simulated {len(data)} replicates at {len(points)} locations")

    model = stm.fit(points, data, method="shrinktm", iterations=80, seed=1)
    assert model.n_locations() == 36
    print(f"fitted {model.method()} with m' = {model.m_prime()}")

    # forward/inverse round trip
    z = [((i * 37) % 11 - 5) / 3.0 for i in range(36)]
    field = model.inverse(z)
    z_back = model.forward(field)
    err = max(abs(a - b) for a, b in zip(z, z_back))
    assert err < 1e-8, f"round trip error {err}"
    print(f"round trip max error {err:.2e}")

    draws = model.sample(4, seed=3)
    assert len(draws) == 4 and all(len(r) == 36 for r in draws)
    assert draws == model.sample(4, seed=3), "sampling must be reproducible"

    per_field, per_loc = model.log_score(data)
    assert math.isfinite(per_field) and approx(per_field, per_loc * 36, 1e-9)
    print(f"in-sample log score {per_field:.3f} per field")

    cond = model.conditional_sample(data[0], observed_k=10, count=2, seed=5)
    assert len(cond) == 2
    rmse = model.conditional_rmse(data[0], observed_k=10, draws=20, seed=5)
    assert math.isfinite(rmse) and rmse >= 0.0
    print(f"conditional RMSE at 10 observed locations: {rmse:.4f}")

    with tempfile.TemporaryDirectory() as tmp:
        path = str(pathlib.Path(tmp) / "model.stm")
        model.save(path)
        loaded = stm.load(path)
        assert loaded.log_density(field) == model.log_density(field)
    print("save/load round trip ok")

    gauss = stm.fit(points, data, method="matcov", iterations=120, seed=1)
    g_field, _ = gauss.log_score(data)
    assert math.isfinite(g_field)
    print(f"matcov in-sample log score {g_field:.3f} per field")

    print("PASS")


if __name__ == "__main__":
    main()
