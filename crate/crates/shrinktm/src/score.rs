//! Evaluation harness: held-out log-scores, conditional-simulation RMSE,
//! and the method-comparison experiment driver.
//!
//! Scores are reported per field and per location (the latter is the former
//! divided by the number of locations); comparisons across methods use the
//! same test replicates for every method so differences reflect the fits,
//! not the test draw.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::basegauss::{matcov_mle, BaseFamily, MatCovConfig, PairwiseDistances};
use crate::error::{Error, Result};
use crate::geometry::{Locations, Ordering};
use crate::linalg;
use crate::mapkernel::{HyperParams, Method};
use crate::optimize::{fit_ordered, FitConfig, OptimizerConfig};
use crate::posterior::{DataMatrix, FittedMap};
use crate::simulate::{simulate_from, SimDesign};

/// Gaussian process model over the ordered locations; the baseline method
/// and the scoring backend for it.
pub struct GaussianModel {
    pub family: BaseFamily,
    /// Lower Cholesky factor of the ordered covariance matrix.
    chol: Array2<f64>,
    log_det: f64,
}

impl GaussianModel {
    pub fn new(family: BaseFamily, locs: &Locations, ordering: &Ordering) -> Result<Self> {
        let pts: Vec<&[f64]> = ordering.perm.iter().map(|&o| locs.point(o)).collect();
        let sigma = PairwiseDistances::build(&pts).covariance_matrix(&family);
        let chol = linalg::cholesky(&sigma)?;
        let log_det = linalg::chol_log_det(&chol);
        Ok(Self { family, chol, log_det })
    }

    pub fn n_locations(&self) -> usize {
        self.chol.nrows()
    }

    pub fn log_density(&self, y_ordered: &[f64]) -> Result<f64> {
        if y_ordered.len() != self.n_locations() {
            return Err(Error::ShapeMismatch("field length vs model".into()));
        }
        Ok(linalg::mvn_log_density(&self.chol, self.log_det, y_ordered))
    }

    /// Draws with the first `observed.len()` ordered values pinned; exact
    /// Gaussian conditioning read off the Cholesky factor blocks.
    pub fn conditional_sample(
        &self,
        count: usize,
        seed: u64,
        observed: &[f64],
    ) -> Result<DataMatrix> {
        let n = self.n_locations();
        let k = observed.len();
        if k > n {
            return Err(Error::InvalidArgument("prefix longer than the field".into()));
        }
        // mean of the tail: L21 L11^{-1} y_obs; fluctuation: L22 z
        let mut alpha = observed.to_vec();
        for i in 0..k {
            let mut s = alpha[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * alpha[j];
            }
            alpha[i] = s / self.chol[(i, i)];
        }
        let rows: Vec<Vec<f64>> = (0..count)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(rep as u64 + 1);
                let mut y = vec![0.0; n];
                y[..k].copy_from_slice(observed);
                let mut zs = vec![0.0; n];
                for zi in zs.iter_mut().skip(k) {
                    *zi = StandardNormal.sample(&mut rng);
                }
                for i in k..n {
                    let mut s = 0.0;
                    for (j, a) in alpha.iter().enumerate() {
                        s += self.chol[(i, j)] * a;
                    }
                    for j in k..=i {
                        s += self.chol[(i, j)] * zs[j];
                    }
                    y[i] = s;
                }
                y
            })
            .collect();
        let mut values = Array2::zeros((count, n));
        for (r, row) in rows.into_iter().enumerate() {
            for (c, v) in row.into_iter().enumerate() {
                values[(r, c)] = v;
            }
        }
        DataMatrix::new(values)
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<DataMatrix> {
        self.conditional_sample(count, seed, &[])
    }
}

/// A fitted model of either kind, scoring and sampling behind one surface.
pub enum FittedModel {
    Map(FittedMap),
    Gaussian(GaussianModel),
}

impl FittedModel {
    pub fn n_locations(&self) -> usize {
        match self {
            FittedModel::Map(m) => m.n_locations(),
            FittedModel::Gaussian(g) => g.n_locations(),
        }
    }

    pub fn log_density(&self, y_ordered: &[f64]) -> Result<f64> {
        match self {
            FittedModel::Map(m) => m.log_density(y_ordered),
            FittedModel::Gaussian(g) => g.log_density(y_ordered),
        }
    }

    pub fn conditional_sample(
        &self,
        count: usize,
        seed: u64,
        observed: &[f64],
    ) -> Result<DataMatrix> {
        match self {
            FittedModel::Map(m) => m.conditional_sample(count, seed, observed),
            FittedModel::Gaussian(g) => g.conditional_sample(count, seed, observed),
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<DataMatrix> {
        self.conditional_sample(count, seed, &[])
    }
}

/// Mean held-out log predictive density.
#[derive(Debug, Clone, Copy)]
pub struct ScoreSummary {
    pub per_field: f64,
    pub per_location: f64,
    pub n_fields: usize,
}

pub fn log_score(model: &FittedModel, test: &DataMatrix) -> Result<ScoreSummary> {
    if test.n_replicates() == 0 {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if test.n_locations() != model.n_locations() {
        return Err(Error::ShapeMismatch(format!(
            "test has {} locations, model has {}",
            test.n_locations(),
            model.n_locations()
        )));
    }
    let per: Vec<f64> = (0..test.n_replicates())
        .into_par_iter()
        .map(|r| model.log_density(&test.row(r)))
        .collect::<Result<_>>()?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok(ScoreSummary {
        per_field: mean,
        per_location: mean / model.n_locations() as f64,
        n_fields: per.len(),
    })
}

/// RMSE of the conditional-simulation predictor at the held-out locations:
/// condition on the first `k` ordered values of the truth, predict the rest
/// by the mean of `draws` conditional samples.
pub fn conditional_rmse(
    model: &FittedModel,
    truth_ordered: &[f64],
    k: usize,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let n = model.n_locations();
    if truth_ordered.len() != n {
        return Err(Error::ShapeMismatch("truth length vs model".into()));
    }
    if k >= n {
        return Err(Error::InvalidArgument(format!(
            "observed prefix {k} leaves no held-out locations"
        )));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let sim = model.conditional_sample(draws, seed, &truth_ordered[..k])?;
    let values = sim.values();
    let mut sq = 0.0;
    for i in k..n {
        let mut mean = 0.0;
        for r in 0..draws {
            mean += values[(r, i)];
        }
        mean /= draws as f64;
        let d = mean - truth_ordered[i];
        sq += d * d;
    }
    Ok((sq / (n - k) as f64).sqrt())
}

/// One row of an experiment: a metric value for (method, n, replication).
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    pub n: usize,
    pub replication: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub seconds: f64,
}

pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("method,n,replication,metric,value,seed,seconds\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method.as_str(),
            r.n,
            r.replication,
            r.metric,
            r.value,
            r.seed,
            r.seconds
        ));
    }
    out
}

/// Mean and standard deviation per (method, n, metric).
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: Method,
    pub n: usize,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, usize, String)> = Vec::new();
    for r in records {
        let key = (r.method, r.n, r.metric.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, n, metric)| {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.n == n && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let count = vals.len();
            let mean = vals.iter().sum::<f64>() / count as f64;
            let var = if count > 1 {
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            SummaryRow { method, n, metric, mean, sd: var.sqrt(), count }
        })
        .collect()
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,n,metric,mean,sd,count\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method.as_str(),
            r.n,
            r.metric,
            r.mean,
            r.sd,
            r.count
        ));
    }
    out
}

/// Per-method fitting configuration shared by the CLI and the experiment
/// driver.
#[derive(Debug, Clone, Default)]
pub struct MethodFit {
    pub init: HyperParams,
    pub optimizer: OptimizerConfig,
    /// Hyperparameters pinned at their initial values during map fits.
    pub freeze: Vec<String>,
}

/// Fit one method on ordered data.
pub fn fit_model(
    method: Method,
    y: &DataMatrix,
    locs: &Locations,
    ordering: &Ordering,
    cfg: &MethodFit,
) -> Result<FittedModel> {
    match method {
        Method::ShrinkTm | Method::SimpleTm => {
            let fit_cfg = FitConfig {
                method,
                init: cfg.init,
                optimizer: cfg.optimizer.clone(),
                first: None,
                freeze: cfg.freeze.clone(),
                multi_start: true,
                auto_bounds: true,
            };
            let result = fit_ordered(y, locs, ordering, &fit_cfg)?;
            Ok(FittedModel::Map(result.map))
        }
        Method::MatCov => {
            let mc = MatCovConfig {
                kind: cfg.init.family,
                optimizer: cfg.optimizer.clone(),
                ..MatCovConfig::default()
            };
            let fit = matcov_mle(y, locs, ordering, &mc)?;
            Ok(FittedModel::Gaussian(GaussianModel::new(fit.family, locs, ordering)?))
        }
    }
}

/// Experiment grid: methods x training sizes x replications on one design.
#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub design: SimDesign,
    pub methods: Vec<Method>,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub n_test: usize,
    pub fit: MethodFit,
    /// Also emit per-location score rows (doubles the row count).
    pub per_location_rows: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            design: SimDesign::default(),
            methods: vec![Method::ShrinkTm, Method::SimpleTm, Method::MatCov],
            ns: vec![1, 2, 5, 10],
            replications: 10,
            n_test: 50,
            fit: MethodFit::default(),
            per_location_rows: false,
        }
    }
}

/// Run the comparison: shared test set, disjoint training windows per
/// replication, every method scored on the same data. Runs are independent
/// and execute in parallel; record order is deterministic.
pub fn compare(cfg: &CompareConfig) -> Result<Vec<RunRecord>> {
    if cfg.ns.is_empty() || cfg.methods.is_empty() || cfg.replications == 0 {
        return Err(Error::InvalidArgument("empty experiment grid".into()));
    }
    let max_n = *cfg.ns.iter().max().unwrap();
    // one generator serves test and all training windows
    let base = simulate_from(&cfg.design, 0, cfg.n_test)?;
    let test = &base.data;
    let mut tasks = Vec::new();
    for rep in 0..cfg.replications {
        for &n in &cfg.ns {
            for &method in &cfg.methods {
                tasks.push((rep, n, method));
            }
        }
    }
    let runs: Vec<Result<(ScoreSummary, f64)>> = tasks
        .par_iter()
        .map(|&(rep, n, method)| {
            let start = cfg.n_test + rep * max_n;
            let train = base.generator.replicates(start, n);
            let t0 = std::time::Instant::now();
            let model = fit_model(method, &train, &base.locs, &base.ordering, &cfg.fit)?;
            let score = log_score(&model, test)?;
            Ok((score, t0.elapsed().as_secs_f64()))
        })
        .collect();
    let mut records = Vec::new();
    for (&(rep, n, method), run) in tasks.iter().zip(runs) {
        let (score, seconds) = run?;
        records.push(RunRecord {
            method,
            n,
            replication: rep,
            metric: "log_score_field".into(),
            value: score.per_field,
            seed: cfg.design.seed,
            seconds,
        });
        if cfg.per_location_rows {
            records.push(RunRecord {
                method,
                n,
                replication: rep,
                metric: "log_score_location".into(),
                value: score.per_location,
                seed: cfg.design.seed,
                seconds,
            });
        }
    }
    Ok(records)
}
