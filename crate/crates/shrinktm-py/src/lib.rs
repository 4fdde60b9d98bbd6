//! Python bindings: simulate benchmark fields, fit the map models, push
//! fields through the forward/inverse transport, sample (conditionally),
//! and score held-out data.
//!
//! Fields cross the boundary as plain lists in original (file) location
//! order; the wrapper reorders to the internal maximin order and back.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use shrinktm::basegauss::{matcov_mle, FamilyKind, MatCovConfig};
use shrinktm::error::Error as ShrinkError;
use shrinktm::geometry::{maximin_order, Locations, Ordering};
use shrinktm::mapkernel::{HyperParams, Method};
use shrinktm::model;
use shrinktm::optimize::{fit_ordered, FitConfig, OptimizerConfig};
use shrinktm::posterior::DataMatrix;
use shrinktm::score::{self, FittedModel, GaussianModel};
use shrinktm::simulate::{simulate as run_simulate, DesignKind, SimDesign};

fn err(e: ShrinkError) -> PyErr {
    match e {
        ShrinkError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn build_locations(points: Vec<Vec<f64>>) -> PyResult<Locations> {
    Locations::new(points).map_err(err)
}

fn to_rows(data: &DataMatrix, ordering: &Ordering) -> Vec<Vec<f64>> {
    let original = data.to_original_order(ordering);
    (0..original.nrows()).map(|r| original.row(r).to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], ordering: &Ordering) -> PyResult<DataMatrix> {
    let n_loc = ordering.len();
    let mut arr = ndarray::Array2::zeros((rows.len(), n_loc));
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n_loc {
            return Err(PyValueError::new_err(format!(
                "row {r} has {} values, expected {n_loc}",
                row.len()
            )));
        }
        for (c, v) in row.iter().enumerate() {
            arr[(r, c)] = *v;
        }
    }
    DataMatrix::from_original_order(&arr, ordering).map_err(err)
}

/// A fitted model (transport map or Gaussian baseline) bound to its
/// locations and ordering.
#[pyclass(name = "FittedModel")]
struct PyFittedModel {
    model: FittedModel,
    hp: HyperParams,
    method: Method,
    locs: Locations,
    ordering: Ordering,
}

#[pymethods]
impl PyFittedModel {
    /// Number of locations the model is defined over.
    fn n_locations(&self) -> usize {
        self.locs.len()
    }

    fn method(&self) -> String {
        self.method.as_str().to_string()
    }

    /// Learned sparsity level of the nonlinear kernel.
    fn m_prime(&self) -> usize {
        match &self.model {
            FittedModel::Map(m) => m.m_prime,
            FittedModel::Gaussian(_) => 0,
        }
    }

    /// Hyperparameters as a JSON string (unconstrained scale).
    fn hyperparameters_json(&self) -> String {
        self.hp.to_json()
    }

    /// Map a field (original location order) to the Gaussian reference.
    fn forward(&self, field: Vec<f64>) -> PyResult<Vec<f64>> {
        let map = self.require_map()?;
        let data = from_rows(std::slice::from_ref(&field), &self.ordering)?;
        let z = map.forward(&data.row(0)).map_err(err)?;
        Ok(z)
    }

    /// Pull a reference vector back to a field in original location order.
    fn inverse(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let map = self.require_map()?;
        let y = map.inverse(&z).map_err(err)?;
        let data = DataMatrix::new(ndarray::Array2::from_shape_vec((1, y.len()), y).unwrap())
            .map_err(err)?;
        Ok(data.to_original_order(&self.ordering).row(0).to_vec())
    }

    /// Log predictive density of a field given in original location order.
    fn log_density(&self, field: Vec<f64>) -> PyResult<f64> {
        let data = from_rows(std::slice::from_ref(&field), &self.ordering)?;
        self.model.log_density(&data.row(0)).map_err(err)
    }

    /// Mean log score over held-out fields (rows, original order);
    /// returns (per_field, per_location).
    fn log_score(&self, fields: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
        let data = from_rows(&fields, &self.ordering)?;
        let s = score::log_score(&self.model, &data).map_err(err)?;
        Ok((s.per_field, s.per_location))
    }

    /// Draw fields; rows come back in original location order.
    #[pyo3(signature = (count, seed = 0))]
    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let draws = self.model.sample(count, seed).map_err(err)?;
        Ok(to_rows(&draws, &self.ordering))
    }

    /// Conditional simulation: pin the first `observed_k` *ordered* values
    /// of `field` and resimulate the rest.
    #[pyo3(signature = (field, observed_k, count, seed = 0))]
    fn conditional_sample(
        &self,
        field: Vec<f64>,
        observed_k: usize,
        count: usize,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let data = from_rows(std::slice::from_ref(&field), &self.ordering)?;
        let ordered = data.row(0);
        if observed_k > ordered.len() {
            return Err(PyValueError::new_err("observed_k exceeds the field length"));
        }
        let draws = self
            .model
            .conditional_sample(count, seed, &ordered[..observed_k])
            .map_err(err)?;
        Ok(to_rows(&draws, &self.ordering))
    }

    /// RMSE of the conditional-simulation predictor at held-out locations.
    #[pyo3(signature = (field, observed_k, draws = 50, seed = 0))]
    fn conditional_rmse(
        &self,
        field: Vec<f64>,
        observed_k: usize,
        draws: usize,
        seed: u64,
    ) -> PyResult<f64> {
        let data = from_rows(std::slice::from_ref(&field), &self.ordering)?;
        score::conditional_rmse(&self.model, &data.row(0), observed_k, draws, seed).map_err(err)
    }

    /// Persist to the single-file model format.
    fn save(&self, path: String) -> PyResult<()> {
        model::save(
            std::path::Path::new(&path),
            self.method,
            &self.hp,
            &self.locs,
            &self.ordering,
            &self.model,
        )
        .map_err(err)
    }
}

impl PyFittedModel {
    fn require_map(&self) -> PyResult<&shrinktm::FittedMap> {
        match &self.model {
            FittedModel::Map(m) => Ok(m),
            FittedModel::Gaussian(_) => Err(PyValueError::new_err(
                "forward/inverse are transport-map operations; this is a Gaussian model",
            )),
        }
    }
}

/// Simulate benchmark fields.
///
/// Returns `(locations, data)`: grid points as `[x, y]` pairs and replicate
/// rows in original location order.
#[pyfunction]
#[pyo3(signature = (design = "lr", grid = (30, 30), n = 10, seed = 0, variance = 1.0, range = 0.3, amplitude = 2.0, frequency = 4.0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    design: &str,
    grid: (usize, usize),
    n: usize,
    seed: u64,
    variance: f64,
    range: f64,
    amplitude: f64,
    frequency: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let design = SimDesign {
        kind: DesignKind::parse(design).map_err(err)?,
        grid,
        variance,
        range,
        amplitude,
        frequency,
        seed,
        ..SimDesign::default()
    };
    let sim = run_simulate(&design, n).map_err(err)?;
    let points = (0..sim.locs.len()).map(|i| sim.locs.point(i).to_vec()).collect();
    Ok((points, to_rows(&sim.data, &sim.ordering)))
}

/// Fit a model. `points` are `[x[, y[, z]]]` coordinates; `data` rows are
/// replicates in the same order as `points`.
#[pyfunction]
#[pyo3(signature = (points, data, method = "shrinktm", family = "matern", iterations = 200, learning_rate = 0.01, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fit(
    points: Vec<Vec<f64>>,
    data: Vec<Vec<f64>>,
    method: &str,
    family: &str,
    iterations: usize,
    learning_rate: f64,
    seed: u64,
) -> PyResult<PyFittedModel> {
    let method = Method::parse(method).map_err(err)?;
    let family = match family.to_ascii_lowercase().as_str() {
        "matern" => FamilyKind::Matern,
        "exponential" | "exp" => FamilyKind::Exponential,
        other => return Err(PyValueError::new_err(format!("unknown family '{other}'"))),
    };
    let locs = build_locations(points)?;
    let ordering = maximin_order(&locs, None).map_err(err)?;
    let y = from_rows(&data, &ordering)?;
    let optimizer = OptimizerConfig {
        iterations,
        learning_rate,
        seed,
        ..OptimizerConfig::default()
    };
    let init = HyperParams { family, ..HyperParams::default() };
    let (hp, model) = match method {
        Method::ShrinkTm | Method::SimpleTm => {
            let cfg = FitConfig {
                method,
                init,
                optimizer,
                first: None,
                freeze: Vec::new(),
                multi_start: true,
                auto_bounds: true,
            };
            let result = fit_ordered(&y, &locs, &ordering, &cfg).map_err(err)?;
            (result.hp, FittedModel::Map(result.map))
        }
        Method::MatCov => {
            let cfg = MatCovConfig { kind: family, optimizer, ..MatCovConfig::default() };
            let fit = matcov_mle(&y, &locs, &ordering, &cfg).map_err(err)?;
            let mut hp = init;
            hp.family = fit.family.kind;
            hp.log_variance = fit.family.log_variance;
            hp.log_range = fit.family.log_range;
            hp.log_smoothness = fit.family.log_smoothness;
            let g = GaussianModel::new(fit.family, &locs, &ordering).map_err(err)?;
            (hp, FittedModel::Gaussian(g))
        }
    };
    Ok(PyFittedModel { model, hp, method, locs, ordering })
}

/// Load a model file written by `FittedModel.save` or the CLI.
#[pyfunction]
fn load(path: String) -> PyResult<PyFittedModel> {
    let saved = model::load(std::path::Path::new(&path)).map_err(err)?;
    Ok(PyFittedModel {
        model: saved.model,
        hp: saved.hp,
        method: saved.method,
        locs: saved.locs,
        ordering: saved.ordering,
    })
}

#[pymodule]
fn shrinktm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyFittedModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    Ok(())
}
