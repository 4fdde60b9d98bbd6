//! Empirical-Bayes maximization of the integrated log likelihood over the
//! hyperparameters: Adam ascent with a cosine-annealed learning rate and
//! central-difference gradients.
//!
//! The sparsity level is a step function of its hyperparameter, so the
//! objective is only piecewise smooth in that coordinate. Each iteration
//! therefore freezes the level at the current iterate before any gradient
//! evaluation and lets it jump between iterations; within an iteration the
//! objective seen by the difference stencil is smooth.

use rayon::prelude::*;
use std::time::Instant;

use crate::basegauss::{self, BaseCoefficients, FamilyKind, VecchiaPlan};
use crate::error::{Error, Result};
use crate::geometry::{maximin_order, Locations, Ordering};
use crate::mapkernel::{HyperParams, Method};
use crate::posterior::{self, DataMatrix, FittedMap};

/// Objective for the Adam driver. `prepare` runs once per iteration at the
/// center iterate (to freeze discrete structure); `eval` must then be smooth
/// in a neighborhood.
pub trait Objective {
    fn prepare(&mut self, _theta: &[f64]) {}
    fn eval(&self, theta: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Central finite differences, two evaluations per coordinate.
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Floor of the cosine-annealed learning rate.
    pub lr_floor: f64,
    pub grad: GradMode,
    /// Relative step for the difference stencil.
    pub fd_step: f64,
    pub seed: u64,
    /// Stop early when the best objective improves by less than this
    /// relative amount over `early_stop_window` iterations.
    pub early_stop_rel: f64,
    pub early_stop_window: usize,
    /// Set the stall warning after this many iterations without improvement.
    pub warn_window: usize,
    /// Per-coordinate box constraints; iterates are clamped after every
    /// update. Empty means unconstrained.
    pub bounds: Vec<(f64, f64)>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            iterations: 200,
            lr_floor: 0.0,
            grad: GradMode::FiniteDifference,
            fd_step: 1e-4,
            seed: 0,
            early_stop_rel: 1e-6,
            early_stop_window: 20,
            warn_window: 50,
            bounds: Vec::new(),
        }
    }
}

/// Cosine-annealed learning rate at update index `t` of `total`.
pub fn cosine_lr(lr0: f64, floor: f64, t: usize, total: usize) -> f64 {
    let total = total.max(1);
    floor + (lr0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos())
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub theta: Vec<f64>,
    pub seconds: f64,
}

/// Per-iteration record of an optimization run.
#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    pub rows: Vec<TraceRow>,
    pub theta_names: Vec<String>,
    /// Set when the best objective went unimproved for the warn window.
    pub stalled: bool,
}

impl FitTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,objective,grad_norm");
        for name in &self.theta_names {
            out.push_str(",theta_");
            out.push_str(name);
        }
        out.push_str(",seconds\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{}", row.iter, row.objective, row.grad_norm));
            for v in &row.theta {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", row.seconds));
        }
        out
    }
}

/// Central-difference gradient of a prepared objective.
pub fn fd_gradient(obj: &dyn Objective, theta: &[f64], rel_step: f64) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for j in 0..theta.len() {
        let h = rel_step * theta[j].abs().max(1.0);
        work[j] = theta[j] + h;
        let up = obj.eval(&work);
        work[j] = theta[j] - h;
        let down = obj.eval(&work);
        work[j] = theta[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    grad
}

/// Maximize the objective with Adam; returns the best iterate seen, its
/// objective value, and the trace. The iteration count is the number of
/// center evaluations; parameter updates happen between them.
pub fn adam_maximize(
    obj: &mut dyn Objective,
    init: &[f64],
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, f64, FitTrace)> {
    let dim = init.len();
    let mut theta = init.to_vec();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);

    let mut trace = FitTrace::default();
    let mut best_theta = theta.clone();
    let mut best_obj = f64::NEG_INFINITY;
    let mut best_iter = 0usize;
    let mut best_history: Vec<f64> = Vec::with_capacity(cfg.iterations);
    let start = Instant::now();

    for t in 0..cfg.iterations.max(1) {
        obj.prepare(&theta);
        let f = obj.eval(&theta);
        if !f.is_finite() {
            if t == 0 {
                return Err(Error::numeric("bad initialization: objective is not finite"));
            }
            return Err(Error::OptimizerDiverged { iterations: t, last_theta: theta });
        }
        if f > best_obj {
            best_obj = f;
            best_theta = theta.clone();
            best_iter = t;
        }
        if t.saturating_sub(best_iter) >= cfg.warn_window {
            trace.stalled = true;
        }

        let last = t + 1 == cfg.iterations.max(1);
        let grad = if last { vec![0.0; dim] } else { fd_gradient(obj, &theta, cfg.fd_step) };
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        trace.rows.push(TraceRow {
            iter: t,
            objective: f,
            grad_norm,
            theta: theta.clone(),
            seconds: start.elapsed().as_secs_f64(),
        });

        // plateau detection: best objective barely moved across the window
        best_history.push(best_obj);
        if cfg.early_stop_rel > 0.0 && t >= cfg.early_stop_window {
            let past = best_history[t - cfg.early_stop_window];
            if best_obj - past <= cfg.early_stop_rel * best_obj.abs().max(1.0) {
                break;
            }
        }
        if last {
            break;
        }

        let lr = cosine_lr(cfg.learning_rate, cfg.lr_floor, t, cfg.iterations);
        let tt = (t + 1) as f64;
        for j in 0..dim {
            m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j];
            let m_hat = m[j] / (1.0 - beta1.powf(tt));
            let v_hat = v[j] / (1.0 - beta2.powf(tt));
            theta[j] += lr * m_hat / (v_hat.sqrt() + eps);
            if let Some(&(lo, hi)) = cfg.bounds.get(j) {
                theta[j] = theta[j].clamp(lo, hi);
            }
        }
    }

    Ok((best_theta, best_obj, trace))
}

// ---------------------------------------------------------------------------
// Transport-map objective and the end-to-end fit
// ---------------------------------------------------------------------------

/// Names of the free hyperparameters for a method/family pair, in the order
/// they are packed into the optimizer vector.
pub fn theta_names(method: Method, family: FamilyKind) -> Vec<&'static str> {
    match method {
        Method::ShrinkTm => {
            let mut names = vec!["log_variance", "log_range"];
            if family == FamilyKind::Matern {
                names.push("log_smoothness");
            }
            names.extend_from_slice(&[
                "log_cd",
                "sigma1",
                "sigma2",
                "q",
                "gamma",
                "sigma0",
            ]);
            names
        }
        Method::SimpleTm => vec![
            "d1", "d2", "log_cd", "sigma1", "sigma2", "q", "gamma", "sigma0",
        ],
        Method::MatCov => {
            let mut names = vec!["log_variance", "log_range"];
            if family == FamilyKind::Matern {
                names.push("log_smoothness");
            }
            names
        }
    }
}

/// Pack the free hyperparameters into the optimizer vector.
pub fn pack_theta(hp: &HyperParams, method: Method) -> Vec<f64> {
    match method {
        Method::ShrinkTm => {
            let mut theta = vec![hp.log_variance, hp.log_range];
            if hp.family == FamilyKind::Matern {
                theta.push(hp.log_smoothness);
            }
            theta.extend_from_slice(&[
                hp.log_cd,
                hp.theta_sigma1,
                hp.theta_sigma2,
                hp.theta_q,
                hp.theta_gamma,
                hp.theta_sigma0,
            ]);
            theta
        }
        Method::SimpleTm => vec![
            hp.theta_d1,
            hp.theta_d2,
            hp.log_cd,
            hp.theta_sigma1,
            hp.theta_sigma2,
            hp.theta_q,
            hp.theta_gamma,
            hp.theta_sigma0,
        ],
        Method::MatCov => {
            let mut theta = vec![hp.log_variance, hp.log_range];
            if hp.family == FamilyKind::Matern {
                theta.push(hp.log_smoothness);
            }
            theta
        }
    }
}

/// Scatter an optimizer vector back into a hyperparameter struct.
pub fn unpack_theta(theta: &[f64], template: &HyperParams, method: Method) -> HyperParams {
    let mut hp = *template;
    match method {
        Method::ShrinkTm => {
            let mut k = 0;
            hp.log_variance = theta[k];
            k += 1;
            hp.log_range = theta[k];
            k += 1;
            if hp.family == FamilyKind::Matern {
                hp.log_smoothness = theta[k];
                k += 1;
            }
            hp.log_cd = theta[k];
            hp.theta_sigma1 = theta[k + 1];
            hp.theta_sigma2 = theta[k + 2];
            hp.theta_q = theta[k + 3];
            hp.theta_gamma = theta[k + 4];
            hp.theta_sigma0 = theta[k + 5];
        }
        Method::SimpleTm => {
            hp.theta_d1 = theta[0];
            hp.theta_d2 = theta[1];
            hp.log_cd = theta[2];
            hp.theta_sigma1 = theta[3];
            hp.theta_sigma2 = theta[4];
            hp.theta_q = theta[5];
            hp.theta_gamma = theta[6];
            hp.theta_sigma0 = theta[7];
        }
        Method::MatCov => {
            hp.log_variance = theta[0];
            hp.log_range = theta[1];
            if hp.family == FamilyKind::Matern {
                hp.log_smoothness = theta[2];
            }
        }
    }
    hp
}

/// Base coefficients for a hyperparameter setting: Vecchia regression under
/// the base family for the shrinkage method, a zero-mean scale-profile for
/// the unshrunk one.
pub fn base_for(
    hp: &HyperParams,
    method: Method,
    ordering: &Ordering,
    plan: &VecchiaPlan,
) -> Result<BaseCoefficients> {
    match method {
        Method::ShrinkTm => basegauss::vecchia_coefficients_planned(&hp.base_family(), plan),
        Method::SimpleTm => {
            let tau2 = ordering
                .scales
                .iter()
                .map(|&l| hp.theta_d1.exp() * l.powf(hp.theta_d2))
                .collect();
            Ok(BaseCoefficients::zero_mean(tau2))
        }
        Method::MatCov => Err(Error::InvalidArgument(
            "the Gaussian baseline is fit by its own maximum-likelihood routine".into(),
        )),
    }
}

/// Integrated-likelihood objective over the packed hyperparameter vector.
/// The base coefficients are memoized on the base-family slice of the
/// vector, so difference stencils in the other coordinates skip the solves.
pub struct MapObjective<'a> {
    pub y: &'a DataMatrix,
    pub ordering: &'a Ordering,
    pub plan: &'a VecchiaPlan,
    pub template: HyperParams,
    pub method: Method,
    frozen_m_prime: usize,
    base_cache: std::sync::Mutex<Option<(Vec<f64>, BaseCoefficients)>>,
}

impl<'a> MapObjective<'a> {
    pub fn new(
        y: &'a DataMatrix,
        ordering: &'a Ordering,
        plan: &'a VecchiaPlan,
        template: HyperParams,
        method: Method,
    ) -> Self {
        let frozen = template.sparsity_level();
        Self {
            y,
            ordering,
            plan,
            template,
            method,
            frozen_m_prime: frozen,
            base_cache: std::sync::Mutex::new(None),
        }
    }

    /// Slice of the packed vector the base coefficients depend on.
    fn base_key(&self, theta: &[f64]) -> Vec<f64> {
        match self.method {
            Method::ShrinkTm => {
                let k = if self.template.family == FamilyKind::Matern { 3 } else { 2 };
                theta[..k].to_vec()
            }
            Method::SimpleTm => theta[..2].to_vec(),
            Method::MatCov => Vec::new(),
        }
    }

    fn base_coefficients(&self, hp: &HyperParams, theta: &[f64]) -> Result<BaseCoefficients> {
        let key = self.base_key(theta);
        {
            let cache = self.base_cache.lock().unwrap();
            if let Some((k, base)) = cache.as_ref() {
                if *k == key {
                    return Ok(base.clone());
                }
            }
        }
        let base = base_for(hp, self.method, self.ordering, self.plan)?;
        *self.base_cache.lock().unwrap() = Some((key, base.clone()));
        Ok(base)
    }

    pub fn frozen_m_prime(&self) -> usize {
        self.frozen_m_prime
    }
}

impl Objective for MapObjective<'_> {
    fn prepare(&mut self, theta: &[f64]) {
        let hp = unpack_theta(theta, &self.template, self.method);
        self.frozen_m_prime = hp.sparsity_level();
    }

    fn eval(&self, theta: &[f64]) -> f64 {
        let hp = unpack_theta(theta, &self.template, self.method);
        let base = match self.base_coefficients(&hp, theta) {
            Ok(b) => b,
            Err(_) => return f64::NAN,
        };
        posterior::integrated_loglik_with_sparsity(
            self.y,
            &hp,
            self.ordering,
            &base,
            self.frozen_m_prime,
        )
        .unwrap_or(f64::NAN)
    }
}

/// How a transport-map fit is set up.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub method: Method,
    /// Template carrying the family, kernel choice, structural constants,
    /// and the starting values of every free hyperparameter.
    pub init: HyperParams,
    pub optimizer: OptimizerConfig,
    /// Optional override of the ordering's starting location.
    pub first: Option<usize>,
    /// Hyperparameters (by [`theta_names`] name) pinned at their initial
    /// values instead of being optimized.
    pub freeze: Vec<String>,
    /// Also start from data-driven base-family values (field variance,
    /// a fifth of the domain diameter) and keep the better optimum. The
    /// marginal-likelihood surface of the base parameters has a
    /// variance/range ridge that can trap a single far-off start.
    pub multi_start: bool,
    /// Constrain the base-family block to a sanity box: variance within a
    /// factor of the empirical data scale, range between the finest
    /// ordering scale and twice the domain diameter, smoothness in
    /// [0.1, 10]. With very few replicates the marginal likelihood can
    /// otherwise wander into collapsed-variance configurations that score
    /// terribly out of sample.
    pub auto_bounds: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: Method::ShrinkTm,
            init: HyperParams::default(),
            optimizer: OptimizerConfig::default(),
            first: None,
            freeze: Vec::new(),
            multi_start: true,
            auto_bounds: true,
        }
    }
}

/// Sanity box for the base-family parameters, on the log scale: the
/// variance stays within a factor of the empirical mean square, the range
/// between the finest ordering scale and the domain diameter (beyond which
/// it is not identifiable from one window), and the smoothness in a wide
/// but finite interval.
pub fn base_family_bounds(
    mean_sq: f64,
    finest_scale: f64,
    diameter: f64,
    family: FamilyKind,
) -> Vec<(f64, f64)> {
    let v = mean_sq.max(1e-12).ln();
    let spread = 4.0_f64.ln();
    let mut bounds = vec![
        (v - spread, v + spread),
        (finest_scale.max(1e-12).ln(), diameter.max(1e-12).ln()),
    ];
    if family == FamilyKind::Matern {
        bounds.push((0.1_f64.ln(), 10.0_f64.ln()));
    }
    bounds
}

/// Objective adapter exposing only the unfrozen coordinates.
struct FrozenObjective<'a> {
    inner: MapObjective<'a>,
    full: Vec<f64>,
    free_idx: Vec<usize>,
}

impl FrozenObjective<'_> {
    fn expand(&self, theta: &[f64]) -> Vec<f64> {
        let mut full = self.full.clone();
        for (&idx, &v) in self.free_idx.iter().zip(theta) {
            full[idx] = v;
        }
        full
    }
}

impl Objective for FrozenObjective<'_> {
    fn prepare(&mut self, theta: &[f64]) {
        let full = self.expand(theta);
        self.inner.prepare(&full);
    }

    fn eval(&self, theta: &[f64]) -> f64 {
        self.inner.eval(&self.expand(theta))
    }
}

/// Fit result: optimized hyperparameters, the trained map, and the trace.
pub struct FitResult {
    pub hp: HyperParams,
    pub map: FittedMap,
    pub trace: FitTrace,
    pub objective: f64,
}

/// End-to-end estimation on data whose columns are in original (file)
/// order: order the locations, maximize the integrated likelihood, refit
/// the map at the optimum.
pub fn fit(data_original: &ndarray::Array2<f64>, locs: &Locations, cfg: &FitConfig) -> Result<FitResult> {
    let ordering = maximin_order(locs, cfg.first)?;
    let y = DataMatrix::from_original_order(data_original, &ordering)?;
    fit_ordered(&y, locs, &ordering, cfg)
}

/// Same, for data already in maximin order.
pub fn fit_ordered(
    y: &DataMatrix,
    locs: &Locations,
    ordering: &Ordering,
    cfg: &FitConfig,
) -> Result<FitResult> {
    if y.n_replicates() == 0 {
        return Err(Error::InvalidArgument("fitting needs at least one replicate".into()));
    }
    if cfg.method == Method::MatCov {
        return Err(Error::InvalidArgument(
            "use the Gaussian maximum-likelihood routine for the baseline".into(),
        ));
    }
    let plan = VecchiaPlan::build(locs, ordering, cfg.init.m)?;
    let names = theta_names(cfg.method, cfg.init.family);
    for f in &cfg.freeze {
        if !names.contains(&f.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "cannot freeze unknown hyperparameter '{f}'"
            )));
        }
    }
    let free_idx: Vec<usize> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| !cfg.freeze.iter().any(|f| f == *n))
        .map(|(i, _)| i)
        .collect();
    if free_idx.is_empty() {
        return Err(Error::InvalidArgument("every hyperparameter is frozen".into()));
    }

    let mean_sq =
        y.values().iter().map(|v| v * v).sum::<f64>() / y.values().len().max(1) as f64;
    let mut starts = vec![cfg.init];
    if cfg.multi_start && cfg.method == Method::ShrinkTm && mean_sq > 0.0 {
        let mut data_init = cfg.init;
        data_init.log_variance = mean_sq.ln();
        data_init.log_range = (0.2 * ordering.scales[0].max(1e-12)).ln();
        if pack_theta(&data_init, cfg.method) != pack_theta(&cfg.init, cfg.method) {
            starts.push(data_init);
        }
    }

    let mut optimizer = cfg.optimizer.clone();
    if optimizer.bounds.is_empty() && cfg.auto_bounds && cfg.method == Method::ShrinkTm {
        let finest = *ordering.scales.last().unwrap_or(&1e-12);
        let base_block =
            base_family_bounds(mean_sq, finest, ordering.scales[0], cfg.init.family);
        let unbounded = (f64::NEG_INFINITY, f64::INFINITY);
        let full: Vec<(f64, f64)> = (0..names.len())
            .map(|i| base_block.get(i).copied().unwrap_or(unbounded))
            .collect();
        optimizer.bounds = free_idx.iter().map(|&i| full[i]).collect();
    }

    // starting points outside the feasible box are dropped when a feasible
    // alternative exists; a lone infeasible start gets projected instead
    if !optimizer.bounds.is_empty() && starts.len() > 1 {
        let feasible: Vec<HyperParams> = starts
            .iter()
            .copied()
            .filter(|s| {
                let full = pack_theta(s, cfg.method);
                free_idx
                    .iter()
                    .zip(&optimizer.bounds)
                    .all(|(&i, &(lo, hi))| full[i] >= lo && full[i] <= hi)
            })
            .collect();
        if !feasible.is_empty() {
            starts = feasible;
        }
    }

    let runs: Vec<Result<(Vec<f64>, f64, FitTrace)>> = starts
        .par_iter()
        .map(|start| {
            let init_full = pack_theta(start, cfg.method);
            let mut objective = FrozenObjective {
                inner: MapObjective::new(y, ordering, &plan, *start, cfg.method),
                full: init_full.clone(),
                free_idx: free_idx.clone(),
            };
            let init_theta: Vec<f64> = free_idx.iter().map(|&i| init_full[i]).collect();
            let (theta_free, best, trace) = adam_maximize(&mut objective, &init_theta, &optimizer)?;
            Ok((objective.expand(&theta_free), best, trace))
        })
        .collect();
    let mut best_run: Option<(Vec<f64>, f64, FitTrace)> = None;
    for run in runs {
        let run = run?;
        if best_run.as_ref().map_or(true, |b| run.1 > b.1) {
            best_run = Some(run);
        }
    }
    let (theta_hat, best, mut trace) = best_run.expect("at least one start");
    trace.theta_names = free_idx.iter().map(|&i| names[i].to_owned()).collect();

    let hp = unpack_theta(&theta_hat, &cfg.init, cfg.method);
    let base = base_for(&hp, cfg.method, ordering, &plan)?;
    let map = posterior::fit_components(y, &hp, ordering, &base, cfg.method)?;
    Ok(FitResult { hp, map, trace, objective: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        target: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn eval(&self, theta: &[f64]) -> f64 {
            -theta
                .iter()
                .zip(&self.target)
                .map(|(t, c)| (t - c) * (t - c))
                .sum::<f64>()
        }
    }

    #[test]
    fn default_initialization_matches_documented_values() {
        let hp = HyperParams::default();
        let theta = pack_theta(&hp, Method::ShrinkTm);
        // family block: variance, range, smoothness
        assert_eq!(theta[0], 0.0);
        assert_eq!(theta[1], 2.0);
        assert!((theta[2] - 1.5_f64.ln()).abs() < 1e-15);
        // shrinkage block: log_cd, sigma1, sigma2, q, gamma, sigma0
        assert_eq!(&theta[3..], &[0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        let names = theta_names(Method::ShrinkTm, hp.family);
        assert_eq!(names.len(), theta.len());
    }

    #[test]
    fn pack_unpack_round_trip() {
        let mut hp = HyperParams::default();
        hp.log_cd = -0.7;
        hp.theta_q = 0.3;
        hp.theta_d2 = 1.1;
        for method in [Method::ShrinkTm, Method::SimpleTm] {
            let theta = pack_theta(&hp, method);
            let back = unpack_theta(&theta, &hp, method);
            assert_eq!(pack_theta(&back, method), theta);
        }
    }

    #[test]
    fn single_iteration_returns_initial_point() {
        let mut obj = Quadratic { target: vec![1.0, -2.0] };
        let cfg = OptimizerConfig { iterations: 1, ..OptimizerConfig::default() };
        let (theta, best, trace) = adam_maximize(&mut obj, &[0.5, 0.5], &cfg).unwrap();
        assert_eq!(theta, vec![0.5, 0.5]);
        assert_eq!(trace.rows.len(), 1);
        assert!((best - obj.eval(&[0.5, 0.5])).abs() < 1e-15);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut obj = Quadratic { target: vec![0.8, -0.4, 0.05] };
        let cfg = OptimizerConfig {
            iterations: 500,
            learning_rate: 0.05,
            early_stop_rel: 0.0,
            ..OptimizerConfig::default()
        };
        let (theta, _, _) = adam_maximize(&mut obj, &[0.0, 0.0, 0.0], &cfg).unwrap();
        for (t, c) in theta.iter().zip(&obj.target) {
            assert!((t - c).abs() < 1e-3, "{t} vs {c}");
        }
    }

    #[test]
    fn best_objective_never_below_initial() {
        let mut obj = Quadratic { target: vec![2.0] };
        let cfg = OptimizerConfig { iterations: 30, ..OptimizerConfig::default() };
        let init = [0.0];
        let f0 = obj.eval(&init);
        let (_, best, _) = adam_maximize(&mut obj, &init, &cfg).unwrap();
        assert!(best >= f0);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        struct Constant;
        impl Objective for Constant {
            fn eval(&self, _: &[f64]) -> f64 {
                3.25
            }
        }
        let g = fd_gradient(&Constant, &[0.3, -4.0, 7.0], 1e-4);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_schedule_formula() {
        let lr0 = 0.01;
        for t in 0..200 {
            let want = 0.5 * lr0 * (1.0 + (std::f64::consts::PI * t as f64 / 200.0).cos());
            assert!((cosine_lr(lr0, 0.0, t, 200) - want).abs() < 1e-18);
        }
        assert_eq!(cosine_lr(lr0, 0.0, 0, 200), lr0);
        // floor respected
        assert!(cosine_lr(lr0, 1e-3, 200, 200) >= 1e-3 - 1e-18);
    }

    #[test]
    fn stalled_runs_set_the_warning_flag() {
        // a flat objective never improves on its first value
        struct Flat;
        impl Objective for Flat {
            fn eval(&self, _: &[f64]) -> f64 {
                1.0
            }
        }
        let cfg = OptimizerConfig {
            iterations: 60,
            warn_window: 50,
            early_stop_rel: 0.0,
            ..OptimizerConfig::default()
        };
        let (_, _, trace) = adam_maximize(&mut Flat, &[0.0], &cfg).unwrap();
        assert!(trace.stalled);
    }

    #[test]
    fn nan_at_init_is_an_error() {
        struct Bad;
        impl Objective for Bad {
            fn eval(&self, _: &[f64]) -> f64 {
                f64::NAN
            }
        }
        let err = adam_maximize(&mut Bad, &[0.0], &OptimizerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn trace_length_matches_iterations_run() {
        let mut obj = Quadratic { target: vec![0.0] };
        let cfg = OptimizerConfig {
            iterations: 40,
            early_stop_rel: 0.0,
            ..OptimizerConfig::default()
        };
        let (_, _, trace) = adam_maximize(&mut obj, &[1.0], &cfg).unwrap();
        assert_eq!(trace.rows.len(), 40);
        let csv = {
            let mut t = trace.clone();
            t.theta_names = vec!["x".into()];
            t.to_csv()
        };
        assert!(csv.starts_with("iter,objective,grad_norm,theta_x,seconds\n"));
        assert_eq!(csv.lines().count(), 41);
    }
}
