//! Parametric base covariance families, Vecchia regression coefficients,
//! and the standalone Gaussian maximum-likelihood baseline.
//!
//! The base family supplies the conditional means and variances that the
//! nonparametric map components are shrunk toward: for each ordered index
//! `i`, regressing `y_i` on its conditioning set under a Gaussian with
//! covariance `S` gives weights `xi_i = S_{g,g}^{-1} S_{g,i}` and residual
//! variance `tau_i^2 = S_{i,i} - S_{i,g} xi_i`. Repeated evaluations during
//! hyperparameter optimization are served off a precomputed unique-distance
//! plan so the covariance function runs once per distinct distance rather
//! than once per matrix entry.

use std::collections::HashMap;

use ndarray::Array2;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::bessel::ln_bessel_k;
use crate::error::{Error, Result};
use crate::geometry::{DistanceMetric, Euclidean, Locations, Ordering};
use crate::linalg;
use crate::optimize::{self, FitTrace, Objective, OptimizerConfig};
use crate::posterior::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FamilyKind {
    Exponential,
    Matern,
}

/// Stationary isotropic covariance family; parameters are stored on the
/// unconstrained log scale.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct BaseFamily {
    pub kind: FamilyKind,
    pub log_variance: f64,
    pub log_range: f64,
    /// Only read for the Matern kind; the exponential family is the
    /// smoothness-1/2 member with this field pinned.
    pub log_smoothness: f64,
}

impl BaseFamily {
    pub fn exponential(variance: f64, range: f64) -> Result<Self> {
        check_positive("variance", variance)?;
        check_positive("range", range)?;
        Ok(Self {
            kind: FamilyKind::Exponential,
            log_variance: variance.ln(),
            log_range: range.ln(),
            log_smoothness: 0.5_f64.ln(),
        })
    }

    pub fn matern(variance: f64, range: f64, smoothness: f64) -> Result<Self> {
        check_positive("variance", variance)?;
        check_positive("range", range)?;
        check_positive("smoothness", smoothness)?;
        Ok(Self {
            kind: FamilyKind::Matern,
            log_variance: variance.ln(),
            log_range: range.ln(),
            log_smoothness: smoothness.ln(),
        })
    }

    pub fn variance(&self) -> f64 {
        self.log_variance.exp()
    }

    pub fn range(&self) -> f64 {
        self.log_range.exp()
    }

    pub fn smoothness(&self) -> f64 {
        match self.kind {
            FamilyKind::Exponential => 0.5,
            FamilyKind::Matern => self.log_smoothness.exp(),
        }
    }

    /// Correlation at distance `d` (unit variance).
    pub fn correlation(&self, d: f64) -> f64 {
        debug_assert!(d >= 0.0);
        if d == 0.0 {
            return 1.0;
        }
        let r = self.range();
        match self.kind {
            FamilyKind::Exponential => (-d / r).exp(),
            FamilyKind::Matern => {
                let nu = self.smoothness();
                let s = (2.0 * nu).sqrt() * d / r;
                if nu == 0.5 {
                    (-s).exp()
                } else if nu == 1.5 {
                    (1.0 + s) * (-s).exp()
                } else if nu == 2.5 {
                    (1.0 + s + s * s / 3.0) * (-s).exp()
                } else {
                    ((1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu)
                        + nu * s.ln()
                        + ln_bessel_k(nu, s))
                    .exp()
                }
            }
        }
    }

    pub fn cov(&self, d: f64) -> f64 {
        self.variance() * self.correlation(d)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// Cross-covariance matrix between two point lists.
pub fn covariance(family: &BaseFamily, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Array2<f64>> {
    let metric = Euclidean;
    let mut out = Array2::zeros((a.len(), b.len()));
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            if p.len() != q.len() {
                return Err(Error::ShapeMismatch("mixed point dimensions".into()));
            }
            out[(i, j)] = family.cov(metric.dist(p, q));
        }
    }
    Ok(out)
}

/// Per-component regression weights, residual variances, and the
/// conditioning sets they were computed over (ordered indices).
#[derive(Debug, Clone)]
pub struct BaseCoefficients {
    pub g_sets: Vec<Vec<usize>>,
    pub xi: Vec<Vec<f64>>,
    pub tau2: Vec<f64>,
}

impl BaseCoefficients {
    pub fn len(&self) -> usize {
        self.tau2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau2.is_empty()
    }

    /// Conditional mean of ordered component `i` given an ordered field.
    pub fn conditional_mean(&self, i: usize, y_ordered: &[f64]) -> f64 {
        self.xi[i]
            .iter()
            .zip(&self.g_sets[i])
            .map(|(w, &j)| w * y_ordered[j])
            .sum()
    }

    /// Zero-mean coefficients with a supplied variance profile; used by the
    /// mode that shrinks toward an uninformative linear base.
    pub fn zero_mean(tau2: Vec<f64>) -> Self {
        let n = tau2.len();
        Self { g_sets: vec![Vec::new(); n], xi: vec![Vec::new(); n], tau2 }
    }
}

/// Log density of the implied factorized Gaussian at one ordered field.
pub fn vecchia_log_density(coeffs: &BaseCoefficients, y_ordered: &[f64]) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    (0..y_ordered.len())
        .map(|i| {
            let resid = y_ordered[i] - coeffs.conditional_mean(i, y_ordered);
            let tau2 = coeffs.tau2[i];
            -0.5 * (ln_2pi + tau2.ln() + resid * resid / tau2)
        })
        .sum()
}

/// Precomputed geometry for repeated Vecchia coefficient evaluations: the
/// conditioning sets and, for every needed pair, an index into a
/// deduplicated distance table.
#[derive(Debug, Clone)]
pub struct VecchiaPlan {
    pub m: usize,
    unique: Vec<f64>,
    comps: Vec<PlanComponent>,
}

#[derive(Debug, Clone)]
struct PlanComponent {
    g: Vec<usize>,
    /// distance indices i -> g_j
    d_ig: Vec<u32>,
    /// strict lower triangle of the g x g distances, row-major (j, k) k < j
    d_gg: Vec<u32>,
}

struct DistanceInterner {
    map: HashMap<u64, u32>,
    unique: Vec<f64>,
}

impl DistanceInterner {
    fn new() -> Self {
        Self { map: HashMap::new(), unique: Vec::new() }
    }

    fn intern(&mut self, d: f64) -> u32 {
        let unique = &mut self.unique;
        *self.map.entry(d.to_bits()).or_insert_with(|| {
            unique.push(d);
            (unique.len() - 1) as u32
        })
    }
}

impl VecchiaPlan {
    pub fn build(locs: &Locations, ordering: &Ordering, m: usize) -> Result<Self> {
        if m == 0 || m > ordering.m_max {
            return Err(Error::InvalidArgument(format!(
                "conditioning size m = {m} outside 1..={}",
                ordering.m_max
            )));
        }
        let metric = Euclidean;
        let mut interner = DistanceInterner::new();
        let mut comps = Vec::with_capacity(ordering.len());
        for i in 0..ordering.len() {
            let g = ordering.conditioning_set(i, m).to_vec();
            let pi = locs.point(ordering.perm[i]);
            let d_ig = g
                .iter()
                .map(|&j| interner.intern(metric.dist(pi, locs.point(ordering.perm[j]))))
                .collect();
            let mut d_gg = Vec::with_capacity(g.len() * g.len().saturating_sub(1) / 2);
            for (j, &gj) in g.iter().enumerate() {
                let pj = locs.point(ordering.perm[gj]);
                for &gk in g.iter().take(j) {
                    d_gg.push(interner.intern(metric.dist(pj, locs.point(ordering.perm[gk]))));
                }
            }
            comps.push(PlanComponent { g, d_ig, d_gg });
        }
        Ok(Self { m, unique: interner.unique, comps })
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn unique_distances(&self) -> usize {
        self.unique.len()
    }

    fn cov_table(&self, family: &BaseFamily) -> Vec<f64> {
        let variance = family.variance();
        self.unique.iter().map(|&d| variance * family.correlation(d)).collect()
    }
}

/// Vecchia regression coefficients from a prebuilt plan; this is the hot
/// path of hyperparameter optimization.
pub fn vecchia_coefficients_planned(
    family: &BaseFamily,
    plan: &VecchiaPlan,
) -> Result<BaseCoefficients> {
    let table = plan.cov_table(family);
    let variance = family.variance();
    let per: Vec<Result<(Vec<f64>, f64)>> = plan
        .comps
        .par_iter()
        .enumerate()
        .map(|(i, comp)| {
            let k = comp.g.len();
            if k == 0 {
                return Ok((Vec::new(), variance));
            }
            let mut sgg = Array2::zeros((k, k));
            let mut idx = 0;
            for j in 0..k {
                sgg[(j, j)] = variance;
                for l in 0..j {
                    let v = table[comp.d_gg[idx] as usize];
                    idx += 1;
                    sgg[(j, l)] = v;
                    sgg[(l, j)] = v;
                }
            }
            let sig: Vec<f64> = comp.d_ig.iter().map(|&t| table[t as usize]).collect();
            let chol = linalg::cholesky(&sgg).map_err(|_| {
                Error::numeric_in(i, "conditioning covariance numerically singular")
            })?;
            let xi = linalg::chol_solve(&chol, &sig);
            let tau2 = variance - linalg::dot(&sig, &xi);
            if !(tau2 > 0.0) || !tau2.is_finite() {
                return Err(Error::numeric_in(
                    i,
                    format!("nonpositive conditional variance {tau2:e}"),
                ));
            }
            Ok((xi, tau2))
        })
        .collect();
    let mut coeffs = BaseCoefficients {
        g_sets: Vec::with_capacity(plan.len()),
        xi: Vec::with_capacity(plan.len()),
        tau2: Vec::with_capacity(plan.len()),
    };
    for (r, comp) in per.into_iter().zip(&plan.comps) {
        let (x, t) = r?;
        coeffs.g_sets.push(comp.g.clone());
        coeffs.xi.push(x);
        coeffs.tau2.push(t);
    }
    Ok(coeffs)
}

/// Vecchia regression coefficients for conditioning sets of size `m`.
pub fn vecchia_coefficients(
    family: &BaseFamily,
    locs: &Locations,
    ordering: &Ordering,
    m: usize,
) -> Result<BaseCoefficients> {
    let plan = VecchiaPlan::build(locs, ordering, m)?;
    vecchia_coefficients_planned(family, &plan)
}

/// Dense pairwise distance table over a fixed point set, deduplicated, for
/// repeated full-covariance builds during maximum likelihood.
pub struct PairwiseDistances {
    n: usize,
    unique: Vec<f64>,
    idx: Vec<u32>,
}

impl PairwiseDistances {
    pub fn build(points: &[&[f64]]) -> Self {
        let metric = Euclidean;
        let n = points.len();
        let mut interner = DistanceInterner::new();
        let mut idx = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in 0..i {
                idx.push(interner.intern(metric.dist(points[i], points[j])));
            }
        }
        Self { n, unique: interner.unique, idx }
    }

    pub fn covariance_matrix(&self, family: &BaseFamily) -> Array2<f64> {
        let variance = family.variance();
        let table: Vec<f64> =
            self.unique.iter().map(|&d| variance * family.correlation(d)).collect();
        let mut out = Array2::zeros((self.n, self.n));
        let mut k = 0;
        for i in 0..self.n {
            out[(i, i)] = variance;
            for j in 0..i {
                let v = table[self.idx[k] as usize];
                k += 1;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

/// Exact mean-zero Gaussian log likelihood of replicate rows under the
/// family's covariance over the point set behind `dists`.
pub fn gaussian_log_likelihood(
    family: &BaseFamily,
    dists: &PairwiseDistances,
    rows: &Array2<f64>,
) -> Result<f64> {
    let n = rows.nrows() as f64;
    let p = rows.ncols();
    if p != dists.n {
        return Err(Error::ShapeMismatch(format!(
            "{p} data columns vs {} locations",
            dists.n
        )));
    }
    let sigma = dists.covariance_matrix(family);
    let chol = linalg::cholesky(&sigma)?;
    let log_det = linalg::chol_log_det(&chol);
    let mut quad = 0.0;
    for row in rows.rows() {
        quad += linalg::chol_quad_form(&chol, row.as_slice().unwrap());
    }
    Ok(-0.5 * (n * log_det + quad + n * p as f64 * (2.0 * std::f64::consts::PI).ln()))
}

/// Sum of factorized Gaussian log densities over all replicate rows.
pub fn vecchia_replicate_log_likelihood(coeffs: &BaseCoefficients, data: &DataMatrix) -> f64 {
    let y = data.values();
    let per_row: Vec<f64> = (0..y.nrows())
        .into_par_iter()
        .map(|r| vecchia_log_density(coeffs, y.row(r).as_slice().unwrap()))
        .collect();
    per_row.iter().sum()
}

/// Configuration for the Gaussian maximum-likelihood baseline.
#[derive(Debug, Clone)]
pub struct MatCovConfig {
    pub kind: FamilyKind,
    /// Pin the smoothness instead of learning it (always pinned for the
    /// exponential kind).
    pub fixed_smoothness: Option<f64>,
    pub optimizer: OptimizerConfig,
    /// Above this many locations the exact likelihood switches to a Vecchia
    /// factorization.
    pub dense_limit: usize,
    pub vecchia_m: usize,
}

impl Default for MatCovConfig {
    fn default() -> Self {
        Self {
            kind: FamilyKind::Matern,
            fixed_smoothness: None,
            optimizer: OptimizerConfig::default(),
            dense_limit: 2000,
            vecchia_m: 30,
        }
    }
}

enum MatCovLik {
    Dense(PairwiseDistances),
    Vecchia(VecchiaPlan),
}

struct MatCovObjective<'a> {
    data: &'a DataMatrix,
    lik: MatCovLik,
    kind: FamilyKind,
    fixed_smoothness: Option<f64>,
}

impl MatCovObjective<'_> {
    fn family(&self, theta: &[f64]) -> BaseFamily {
        let log_smoothness = match (self.kind, self.fixed_smoothness) {
            (FamilyKind::Exponential, _) => 0.5_f64.ln(),
            (FamilyKind::Matern, Some(nu)) => nu.ln(),
            (FamilyKind::Matern, None) => theta[2],
        };
        BaseFamily { kind: self.kind, log_variance: theta[0], log_range: theta[1], log_smoothness }
    }
}

impl Objective for MatCovObjective<'_> {
    fn eval(&self, theta: &[f64]) -> f64 {
        let family = self.family(theta);
        match &self.lik {
            MatCovLik::Dense(d) => {
                gaussian_log_likelihood(&family, d, self.data.values()).unwrap_or(f64::NAN)
            }
            MatCovLik::Vecchia(plan) => match vecchia_coefficients_planned(&family, plan) {
                Ok(coeffs) => vecchia_replicate_log_likelihood(&coeffs, self.data),
                Err(_) => f64::NAN,
            },
        }
    }
}

/// Fitted Gaussian baseline: the family at the likelihood optimum.
#[derive(Debug)]
pub struct MatCovFit {
    pub family: BaseFamily,
    pub log_likelihood: f64,
    pub trace: FitTrace,
}

/// Maximum-likelihood fit of the base family to replicate data (columns in
/// maximin order, matching `ordering`).
pub fn matcov_mle(
    data: &DataMatrix,
    locs: &Locations,
    ordering: &Ordering,
    cfg: &MatCovConfig,
) -> Result<MatCovFit> {
    if data.n_replicates() == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    if data.n_locations() != locs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} data columns vs {} locations",
            data.n_locations(),
            locs.len()
        )));
    }
    let mean_sq =
        data.values().iter().map(|v| v * v).sum::<f64>() / (data.values().len().max(1) as f64);
    if mean_sq == 0.0 {
        return Err(Error::DegenerateData("zero-variance field".into()));
    }

    let ordered_points: Vec<&[f64]> = ordering.perm.iter().map(|&orig| locs.point(orig)).collect();
    let lik = if locs.len() <= cfg.dense_limit {
        MatCovLik::Dense(PairwiseDistances::build(&ordered_points))
    } else {
        MatCovLik::Vecchia(VecchiaPlan::build(locs, ordering, cfg.vecchia_m)?)
    };
    let mut objective =
        MatCovObjective { data, lik, kind: cfg.kind, fixed_smoothness: cfg.fixed_smoothness };

    // data-driven starting point: field variance, a fifth of the diameter
    let diameter = ordering.scales[0].max(1e-12);
    let mut init = vec![mean_sq.ln(), (0.2 * diameter).ln()];
    if cfg.kind == FamilyKind::Matern && cfg.fixed_smoothness.is_none() {
        init.push(1.5_f64.ln());
    }
    let mut optimizer = cfg.optimizer.clone();
    if optimizer.bounds.is_empty() {
        let finest = *ordering.scales.last().unwrap_or(&1e-12);
        optimizer.bounds = optimize::base_family_bounds(mean_sq, finest, diameter, cfg.kind);
        optimizer.bounds.truncate(init.len());
    }

    let (theta_hat, best, trace) = optimize::adam_maximize(&mut objective, &init, &optimizer)?;
    let family = objective.family(&theta_hat);
    Ok(MatCovFit { family, log_likelihood: best, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{maximin_order, maximin_order_with};
    use ndarray::Array2;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn line(n: usize, spacing: f64) -> Locations {
        Locations::new((0..n).map(|i| vec![i as f64 * spacing]).collect()).unwrap()
    }

    #[test]
    fn exponential_values() {
        let fam = BaseFamily::exponential(1.0, 0.3).unwrap();
        assert_eq!(fam.cov(0.0), 1.0);
        assert!((fam.cov(0.3) - (-1.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn matern_half_equals_exponential() {
        let e = BaseFamily::exponential(1.7, 0.4).unwrap();
        let m = BaseFamily::matern(1.7, 0.4, 0.5).unwrap();
        for k in 0..60 {
            let d = 0.03 * k as f64;
            assert!((e.cov(d) - m.cov(d)).abs() < 1e-12 * e.cov(d).max(1e-3));
        }
    }

    #[test]
    fn matern_general_matches_closed_forms() {
        // the generic Bessel path evaluated at the half-integer orders must
        // agree with the dedicated closed forms
        for &nu in &[1.5, 2.5] {
            let closed = BaseFamily::matern(1.0, 0.5, nu).unwrap();
            let generic = BaseFamily {
                kind: FamilyKind::Matern,
                log_variance: 0.0,
                log_range: 0.5_f64.ln(),
                log_smoothness: (nu + 1e-13).ln(),
            };
            for k in 1..40 {
                let d = 0.05 * k as f64;
                let a = closed.cov(d);
                let b = generic.cov(d);
                assert!((a - b).abs() < 1e-9 * a.max(1e-12), "nu={nu} d={d} {a} {b}");
            }
        }
    }

    #[test]
    fn non_positive_parameters_rejected() {
        assert!(BaseFamily::exponential(0.0, 0.3).is_err());
        assert!(BaseFamily::exponential(1.0, -0.1).is_err());
        assert!(BaseFamily::matern(1.0, 0.3, 0.0).is_err());
    }

    #[test]
    fn two_point_coefficients_analytic() {
        // covariance [[1, .5], [.5, 1]]: xi = 0.5, tau2 = 0.75
        let locs = line(2, 1.0);
        let ord = maximin_order(&locs, Some(0)).unwrap();
        // exp(-1/range) = 0.5 at unit spacing
        let fam = BaseFamily::exponential(1.0, 1.0 / std::f64::consts::LN_2).unwrap();
        let coeffs = vecchia_coefficients(&fam, &locs, &ord, 1).unwrap();
        assert!(coeffs.xi[0].is_empty());
        assert!((coeffs.tau2[0] - 1.0).abs() < 1e-14);
        assert_eq!(coeffs.xi[1].len(), 1);
        assert!((coeffs.xi[1][0] - 0.5).abs() < 1e-14);
        assert!((coeffs.tau2[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn first_component_gets_marginal_variance() {
        let locs = line(5, 0.2);
        let ord = maximin_order(&locs, None).unwrap();
        let fam = BaseFamily::matern(2.3, 0.4, 1.5).unwrap();
        let coeffs = vecchia_coefficients(&fam, &locs, &ord, 3).unwrap();
        assert!(coeffs.xi[0].is_empty());
        assert!((coeffs.tau2[0] - 2.3).abs() < 1e-14);
    }

    #[test]
    fn full_conditioning_matches_dense_density() {
        // with every predecessor in the conditioning set, the factorized
        // density equals the dense joint Gaussian density
        let n = 20;
        let locs = line(n, 0.13);
        let ord = maximin_order_with(&locs, None, n - 1, &Euclidean).unwrap();
        let fam = BaseFamily::exponential(1.0, 0.3).unwrap();
        let coeffs = vecchia_coefficients(&fam, &locs, &ord, n - 1).unwrap();

        let ordered_points: Vec<&[f64]> = ord.perm.iter().map(|&o| locs.point(o)).collect();
        let dists = PairwiseDistances::build(&ordered_points);
        let sigma = dists.covariance_matrix(&fam);
        let chol = linalg::cholesky(&sigma).unwrap();
        let log_det = linalg::chol_log_det(&chol);

        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..5 {
            let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let dense = linalg::mvn_log_density(&chol, log_det, &y);
            let vecchia = vecchia_log_density(&coeffs, &y);
            assert!(
                (dense - vecchia).abs() < 1e-8 * dense.abs(),
                "dense={dense} vecchia={vecchia}"
            );
        }
    }

    #[test]
    fn tau2_weakly_decreases_in_m() {
        let locs = line(25, 0.11);
        let ord = maximin_order(&locs, None).unwrap();
        let fam = BaseFamily::exponential(1.0, 0.5).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for m in [1, 2, 4, 8, 16] {
            let coeffs = vecchia_coefficients(&fam, &locs, &ord, m).unwrap();
            if let Some(p) = &prev {
                for i in 0..coeffs.tau2.len() {
                    assert!(coeffs.tau2[i] <= p[i] + 1e-12, "tau2 grew at i={i} m={m}");
                }
            }
            prev = Some(coeffs.tau2.clone());
        }
    }

    #[test]
    fn conditional_mean_matches_monte_carlo() {
        // draw joint Gaussians, check E[y_i | y_g] against the regression
        // by averaging draws whose conditioning values fall in a window
        let locs = line(5, 0.3);
        let ord = maximin_order(&locs, Some(0)).unwrap();
        let fam = BaseFamily::exponential(1.0, 0.5).unwrap();
        let m = 2;
        let coeffs = vecchia_coefficients(&fam, &locs, &ord, m).unwrap();

        let ordered_points: Vec<&[f64]> = ord.perm.iter().map(|&o| locs.point(o)).collect();
        let dists = PairwiseDistances::build(&ordered_points);
        let sigma = dists.covariance_matrix(&fam);
        let chol = linalg::cholesky(&sigma).unwrap();

        let i = 4;
        assert_eq!(coeffs.g_sets[i].len(), 2);
        let mut rng = StdRng::seed_from_u64(9);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut target = vec![0.0; 5];
        for &j in &coeffs.g_sets[i] {
            target[j] = 0.3 * (j as f64 - 1.5);
        }
        let draws = 400_000;
        for _ in 0..draws {
            let z: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut y = vec![0.0; 5];
            for a in 0..5 {
                for b in 0..=a {
                    y[a] += chol[(a, b)] * z[b];
                }
            }
            let close = coeffs.g_sets[i].iter().all(|&j| (y[j] - target[j]).abs() < 0.2);
            if close {
                num += y[i];
                den += 1.0;
            }
        }
        assert!(den > 2000.0, "window too narrow: {den} hits");
        let mc = num / den;
        let pred = coeffs.conditional_mean(i, &target);
        // MC error plus window bias
        assert!((mc - pred).abs() < 0.08, "mc={mc} pred={pred} hits={den}");
    }

    #[test]
    fn matcov_recovers_exponential_range() {
        // simulate from exponential(1, 0.3) on a 10x10 grid, n = 50
        let mut pts = Vec::new();
        for iy in 0..10 {
            for ix in 0..10 {
                pts.push(vec![ix as f64 / 9.0, iy as f64 / 9.0]);
            }
        }
        let locs = Locations::new(pts).unwrap();
        let ord = maximin_order(&locs, None).unwrap();
        let fam = BaseFamily::exponential(1.0, 0.3).unwrap();
        let ordered_points: Vec<&[f64]> = ord.perm.iter().map(|&o| locs.point(o)).collect();
        let dists = PairwiseDistances::build(&ordered_points);
        let sigma = dists.covariance_matrix(&fam);
        let chol = linalg::cholesky(&sigma).unwrap();
        let mut rng = StdRng::seed_from_u64(2024);
        let n = 50;
        let mut y = Array2::zeros((n, 100));
        for r in 0..n {
            let z: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
            for a in 0..100 {
                let mut s = 0.0;
                for b in 0..=a {
                    s += chol[(a, b)] * z[b];
                }
                y[(r, a)] = s;
            }
        }
        let data = DataMatrix::new(y).unwrap();
        let cfg = MatCovConfig {
            kind: FamilyKind::Exponential,
            optimizer: OptimizerConfig { iterations: 400, ..OptimizerConfig::default() },
            ..MatCovConfig::default()
        };
        let fit = matcov_mle(&data, &locs, &ord, &cfg).unwrap();
        let range = fit.family.range();
        assert!(
            (range - 0.3).abs() < 0.09,
            "recovered range {range}, wanted 0.3 +- 30%"
        );
        // optimality: likelihood at the fit beats the truth
        let ll_true = gaussian_log_likelihood(&fam, &dists, data.values()).unwrap();
        assert!(fit.log_likelihood >= ll_true - 1e-6);
    }

    #[test]
    fn matcov_rejects_zero_field() {
        let locs = line(4, 0.5);
        let ord = maximin_order(&locs, None).unwrap();
        let data = DataMatrix::new(Array2::zeros((1, 4))).unwrap();
        let err = matcov_mle(&data, &locs, &ord, &MatCovConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }
}
