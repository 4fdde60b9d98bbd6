//! Single-file persistence of fitted models.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! ```text
//! offset size  field
//! 0      4     magic bytes "STM1"
//! 4      4     u32 format version (currently 1)
//! 8      1     u8 method tag: 0 = shrinktm, 1 = simpletm, 2 = matcov
//! 9      3     reserved, zero
//! 12     4     u32 spatial dimension
//! 16     8     u64 number of locations N
//! 24     8     u64 number of training replicates n
//! 32     4     u32 base conditioning size m
//! 36     4     u32 kernel sparsity level m'
//! 40     8     f64 training 1st percentile (rendering scale)
//! 48     8     f64 training 99th percentile
//! 56     4     u32 byte length L of the hyperparameter block
//! 60     L     hyperparameter block: flat key-value JSON text
//! --- locations, in original file order ---
//!        per location: u32 id byte length, id bytes, dim x f64 coords
//! --- ordering ---
//!        u32 m_max
//!        N x u64 perm (ordered position -> original index)
//!        N x f64 scales
//!        per ordered index: u32 count, count x u32 neighbors (ordered idx)
//! --- per-component payload (absent for matcov) ---
//!        u32 |g_m|,  |g_m| x u32 ordered indices
//!        u32 |g_mp|, |g_mp| x u32 ordered indices
//!        |g_m| x f64 base weights xi
//!        f64 tau2, sigma2, alpha, beta, alpha_post, beta_post
//!        u8 has_kernel
//!        n(n+1)/2 x f64 lower triangle of chol(K + I), row-major
//!        n x f64 smoothed residual w
//!        n|g_mp| x f64 training design rows, row-major
//! ```
//!
//! Every float is copied bit-exactly, so save -> load -> save reproduces
//! the file byte for byte.

use std::path::Path;
use std::sync::atomic::AtomicU64;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{Locations, Ordering};
use crate::mapkernel::{HyperParams, Method};
use crate::posterior::{FitComponent, FittedMap};
use crate::score::{FittedModel, GaussianModel};

const MAGIC: &[u8; 4] = b"STM1";
const VERSION: u32 = 1;

/// A model file's contents: the fitted model plus the geometry it was
/// trained on.
pub struct SavedModel {
    pub method: Method,
    pub hp: HyperParams,
    pub locs: Locations,
    pub ordering: Ordering,
    pub model: FittedModel,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::ModelFile("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn method_tag(m: Method) -> u8 {
    match m {
        Method::ShrinkTm => 0,
        Method::SimpleTm => 1,
        Method::MatCov => 2,
    }
}

fn tag_method(t: u8) -> Result<Method> {
    match t {
        0 => Ok(Method::ShrinkTm),
        1 => Ok(Method::SimpleTm),
        2 => Ok(Method::MatCov),
        other => Err(Error::ModelFile(format!("unknown method tag {other}"))),
    }
}

/// Serialize a fitted model (with its geometry) to bytes.
pub fn to_bytes(
    method: Method,
    hp: &HyperParams,
    locs: &Locations,
    ordering: &Ordering,
    model: &FittedModel,
) -> Result<Vec<u8>> {
    let hp_json = hp.to_json();
    if hp_json.contains("null") {
        return Err(Error::ModelFile(
            "hyperparameters must be finite to be saved".into(),
        ));
    }
    let (n, m_prime, lo, hi) = match model {
        FittedModel::Map(map) => (map.n, map.m_prime, map.train_lo, map.train_hi),
        FittedModel::Gaussian(_) => (0, 0, 0.0, 0.0),
    };
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(method_tag(method));
    w.u8(0);
    w.u8(0);
    w.u8(0);
    w.u32(locs.dim() as u32);
    w.u64(locs.len() as u64);
    w.u64(n as u64);
    w.u32(hp.m as u32);
    w.u32(m_prime as u32);
    w.f64(lo);
    w.f64(hi);
    w.u32(hp_json.len() as u32);
    w.bytes(hp_json.as_bytes());

    for i in 0..locs.len() {
        let id = locs.ids()[i].as_bytes();
        w.u32(id.len() as u32);
        w.bytes(id);
        for &c in locs.point(i) {
            w.f64(c);
        }
    }

    w.u32(ordering.m_max as u32);
    for &p in &ordering.perm {
        w.u64(p as u64);
    }
    for &s in &ordering.scales {
        w.f64(s);
    }
    for nb in &ordering.neighbors {
        w.u32(nb.len() as u32);
        for &j in nb {
            w.u32(j as u32);
        }
    }

    if let FittedModel::Map(map) = model {
        for c in &map.comps {
            w.u32(c.g_m.len() as u32);
            for &j in &c.g_m {
                w.u32(j as u32);
            }
            w.u32(c.g_mp.len() as u32);
            for &j in &c.g_mp {
                w.u32(j as u32);
            }
            for &x in &c.xi {
                w.f64(x);
            }
            w.f64(c.tau2);
            w.f64(c.sigma2);
            w.f64(c.alpha);
            w.f64(c.beta);
            w.f64(c.alpha_post);
            w.f64(c.beta_post);
            w.u8(u8::from(c.has_kernel));
            for r in 0..n {
                for s in 0..=r {
                    w.f64(c.chol_g[(r, s)]);
                }
            }
            for &v in &c.w {
                w.f64(v);
            }
            for r in 0..n {
                for s in 0..c.g_mp.len() {
                    w.f64(c.design[(r, s)]);
                }
            }
        }
    }
    Ok(w.buf)
}

/// Parse a model file back into a fitted model.
pub fn from_bytes(bytes: &[u8]) -> Result<SavedModel> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::ModelFile("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::ModelFile(format!("unsupported version {version}")));
    }
    let method = tag_method(r.u8()?)?;
    r.take(3)?;
    let dim = r.u32()? as usize;
    let n_loc = r.u64()? as usize;
    let n = r.u64()? as usize;
    let m = r.u32()? as usize;
    let m_prime = r.u32()? as usize;
    let train_lo = r.f64()?;
    let train_hi = r.f64()?;
    let json_len = r.u32()? as usize;
    let hp_json = std::str::from_utf8(r.take(json_len)?)
        .map_err(|_| Error::ModelFile("hyperparameter block is not UTF-8".into()))?;
    let hp = HyperParams::from_json(hp_json)?;
    if hp.m != m {
        return Err(Error::ModelFile("header m disagrees with hyperparameters".into()));
    }

    let mut ids = Vec::with_capacity(n_loc);
    let mut pts = Vec::with_capacity(n_loc);
    for _ in 0..n_loc {
        let id_len = r.u32()? as usize;
        let id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| Error::ModelFile("location id is not UTF-8".into()))?
            .to_string();
        let mut p = Vec::with_capacity(dim);
        for _ in 0..dim {
            p.push(r.f64()?);
        }
        ids.push(id);
        pts.push(p);
    }
    let locs = Locations::with_ids(pts, ids)?;

    let m_max = r.u32()? as usize;
    let mut perm = Vec::with_capacity(n_loc);
    for _ in 0..n_loc {
        perm.push(r.u64()? as usize);
    }
    let mut scales = Vec::with_capacity(n_loc);
    for _ in 0..n_loc {
        scales.push(r.f64()?);
    }
    let mut neighbors = Vec::with_capacity(n_loc);
    for _ in 0..n_loc {
        let count = r.u32()? as usize;
        let mut nb = Vec::with_capacity(count);
        for _ in 0..count {
            nb.push(r.u32()? as usize);
        }
        neighbors.push(nb);
    }
    let mut rank = vec![0usize; n_loc];
    for (k, &orig) in perm.iter().enumerate() {
        if orig >= n_loc {
            return Err(Error::ModelFile("permutation entry out of range".into()));
        }
        rank[orig] = k;
    }
    let ordering = Ordering { perm, rank, scales, neighbors, m_max };

    let model = match method {
        Method::MatCov => {
            if !r.done() {
                return Err(Error::ModelFile("trailing bytes after gaussian model".into()));
            }
            FittedModel::Gaussian(GaussianModel::new(hp.base_family(), &locs, &ordering)?)
        }
        Method::ShrinkTm | Method::SimpleTm => {
            let mut comps = Vec::with_capacity(n_loc);
            for _ in 0..n_loc {
                let gm_len = r.u32()? as usize;
                let mut g_m = Vec::with_capacity(gm_len);
                for _ in 0..gm_len {
                    g_m.push(r.u32()? as usize);
                }
                let gmp_len = r.u32()? as usize;
                let mut g_mp = Vec::with_capacity(gmp_len);
                for _ in 0..gmp_len {
                    g_mp.push(r.u32()? as usize);
                }
                let mut xi = Vec::with_capacity(gm_len);
                for _ in 0..gm_len {
                    xi.push(r.f64()?);
                }
                let tau2 = r.f64()?;
                let sigma2 = r.f64()?;
                let alpha = r.f64()?;
                let beta = r.f64()?;
                let alpha_post = r.f64()?;
                let beta_post = r.f64()?;
                let has_kernel = r.u8()? != 0;
                let mut chol_g = Array2::zeros((n, n));
                for row in 0..n {
                    for col in 0..=row {
                        chol_g[(row, col)] = r.f64()?;
                    }
                }
                let mut wv = Vec::with_capacity(n);
                for _ in 0..n {
                    wv.push(r.f64()?);
                }
                let mut design = Array2::zeros((n, gmp_len));
                for row in 0..n {
                    for col in 0..gmp_len {
                        design[(row, col)] = r.f64()?;
                    }
                }
                comps.push(FitComponent {
                    g_m,
                    g_mp,
                    xi,
                    tau2,
                    sigma2,
                    alpha,
                    beta,
                    alpha_post,
                    beta_post,
                    dhat: (beta_post / alpha_post).sqrt(),
                    chol_g,
                    w: wv,
                    design,
                    has_kernel,
                });
            }
            if !r.done() {
                return Err(Error::ModelFile("trailing bytes after components".into()));
            }
            FittedModel::Map(FittedMap {
                hp,
                method,
                ordering: ordering.clone(),
                m_prime,
                q: hp.q_weights(m_prime),
                comps,
                n,
                train_lo,
                train_hi,
                clamp_events: AtomicU64::new(0),
            })
        }
    };

    Ok(SavedModel { method, hp, locs, ordering, model })
}

pub fn save(
    path: &Path,
    method: Method,
    hp: &HyperParams,
    locs: &Locations,
    ordering: &Ordering,
    model: &FittedModel,
) -> Result<()> {
    std::fs::write(path, to_bytes(method, hp, locs, ordering, model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SavedModel> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basegauss::vecchia_coefficients;
    use crate::geometry::maximin_order;
    use crate::posterior::{fit_components, DataMatrix};
    use crate::simulate::{simulate, SimDesign};

    fn fitted_setup() -> (HyperParams, Locations, Ordering, FittedModel) {
        let design = SimDesign { grid: (3, 3), seed: 4, ..SimDesign::default() };
        let sim = simulate(&design, 2).unwrap();
        let hp = HyperParams {
            family: crate::basegauss::FamilyKind::Exponential,
            log_range: (0.3_f64).ln(),
            ..HyperParams::default()
        };
        let base =
            vecchia_coefficients(&hp.base_family(), &sim.locs, &sim.ordering, hp.m).unwrap();
        let map =
            fit_components(&sim.data, &hp, &sim.ordering, &base, Method::ShrinkTm).unwrap();
        (hp, sim.locs, sim.ordering, FittedModel::Map(map))
    }

    #[test]
    fn round_trip_is_bit_identical_and_behaviorally_equal() {
        let (hp, locs, ordering, model) = fitted_setup();
        let bytes = to_bytes(Method::ShrinkTm, &hp, &locs, &ordering, &model).unwrap();
        let loaded = from_bytes(&bytes).unwrap();
        let bytes2 = to_bytes(
            loaded.method,
            &loaded.hp,
            &loaded.locs,
            &loaded.ordering,
            &loaded.model,
        )
        .unwrap();
        assert_eq!(bytes, bytes2, "model file round trip is not bit-identical");

        // identical behavior
        let y: Vec<f64> = (0..9).map(|i| 0.1 * i as f64 - 0.4).collect();
        let (orig_map, new_map) = match (&model, &loaded.model) {
            (FittedModel::Map(a), FittedModel::Map(b)) => (a, b),
            _ => unreachable!(),
        };
        assert_eq!(orig_map.forward(&y).unwrap(), new_map.forward(&y).unwrap());
        assert_eq!(
            orig_map.log_density(&y).unwrap(),
            new_map.log_density(&y).unwrap()
        );
    }

    #[test]
    fn matcov_round_trip() {
        let design = SimDesign { grid: (3, 3), seed: 4, ..SimDesign::default() };
        let sim = simulate(&design, 1).unwrap();
        let hp = HyperParams {
            family: crate::basegauss::FamilyKind::Exponential,
            log_range: (0.4_f64).ln(),
            log_variance: 0.2,
            ..HyperParams::default()
        };
        let model = FittedModel::Gaussian(
            GaussianModel::new(hp.base_family(), &sim.locs, &sim.ordering).unwrap(),
        );
        let bytes = to_bytes(Method::MatCov, &hp, &sim.locs, &sim.ordering, &model).unwrap();
        let loaded = from_bytes(&bytes).unwrap();
        assert_eq!(loaded.method, Method::MatCov);
        let y = vec![0.2; 9];
        assert_eq!(
            loaded.model.log_density(&y).unwrap(),
            model.log_density(&y).unwrap()
        );
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let (hp, locs, ordering, model) = fitted_setup();
        let bytes = to_bytes(Method::ShrinkTm, &hp, &locs, &ordering, &model).unwrap();
        assert!(from_bytes(&bytes[..40]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(from_bytes(&bad_magic).is_err());
        let mut truncated = bytes.clone();
        truncated.pop();
        assert!(from_bytes(&truncated).is_err());
    }
}
