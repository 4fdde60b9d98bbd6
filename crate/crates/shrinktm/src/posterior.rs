//! The trained triangular map: per-component posterior statistics, forward
//! and inverse evaluation, conditional simulation, predictive log density,
//! and the integrated likelihood that drives hyperparameter optimization.
//!
//! Each component regresses one ordered variable on its conditioning set
//! under a conjugate pair: an inverse-gamma prior on the conditional
//! variance and, given it, a Gaussian-process prior on the regression
//! function centered at the base family's linear predictor. Conjugacy keeps
//! the posterior in the same family, so the trained map needs only a handful
//! of per-component sufficient statistics: updated shape/scale, the
//! factorized kernel Gram matrix, and the smoothed residual vector. The
//! predictive at every component is a location-scale t distribution, which
//! makes each map component a composition of a t CDF and a normal quantile.

use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::basegauss::BaseCoefficients;
use crate::error::{Error, Result};
use crate::geometry::Ordering;
use crate::linalg;
use crate::mapkernel::{
    prior_moments_with_sparsity, ComponentKernel, HyperParams, Method, PriorMoments,
};
use crate::special::{ln_t_pdf, t_to_z, z_to_t, Z_CLAMP};

/// Replicate-by-location data matrix with columns in maximin order.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: Array2<f64>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite data entry".into()));
        }
        Ok(Self { values })
    }

    /// Zero-replicate matrix (prior-only fitting).
    pub fn empty(n_locations: usize) -> Self {
        Self { values: Array2::zeros((0, n_locations)) }
    }

    /// Reorder columns from original (file) order into maximin order.
    pub fn from_original_order(original: &Array2<f64>, ordering: &Ordering) -> Result<Self> {
        if original.ncols() != ordering.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} data columns vs {} ordered locations",
                original.ncols(),
                ordering.len()
            )));
        }
        let mut values = Array2::zeros((original.nrows(), original.ncols()));
        for r in 0..original.nrows() {
            for (k, &orig) in ordering.perm.iter().enumerate() {
                values[(r, k)] = original[(r, orig)];
            }
        }
        Self::new(values)
    }

    /// Columns back in original (file) order.
    pub fn to_original_order(&self, ordering: &Ordering) -> Array2<f64> {
        let mut out = Array2::zeros(self.values.dim());
        for r in 0..self.values.nrows() {
            for (k, &orig) in ordering.perm.iter().enumerate() {
                out[(r, orig)] = self.values[(r, k)];
            }
        }
        out
    }

    pub fn n_replicates(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_locations(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.values.row(r).to_vec()
    }
}

/// Posterior sufficient statistics of one map component.
#[derive(Debug, Clone)]
pub struct FitComponent {
    /// Conditioning set of the linear base predictor (ordered indices).
    pub g_m: Vec<usize>,
    /// Effective inputs of the nonlinear kernel (ordered indices).
    pub g_mp: Vec<usize>,
    /// Base regression weights over `g_m`.
    pub xi: Vec<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_post: f64,
    pub beta_post: f64,
    /// Posterior point scale: sqrt(beta_post / alpha_post).
    pub dhat: f64,
    /// Lower Cholesky factor of the regularized Gram matrix K + I.
    pub chol_g: Array2<f64>,
    /// Smoothed residual (K + I)^{-1} (y_i - Y_{g_m} xi).
    pub w: Vec<f64>,
    /// Training rows of the effective inputs, n x |g_mp|.
    pub design: Array2<f64>,
    /// The first ordered component has no regression function at all.
    pub has_kernel: bool,
}

/// A trained map: immutable after construction and safe to share across
/// threads; evaluation never mutates anything except the clamp counter.
#[derive(Debug)]
pub struct FittedMap {
    pub hp: HyperParams,
    pub method: Method,
    pub ordering: Ordering,
    pub m_prime: usize,
    /// Relevance weights shared by all components (rank order).
    pub q: Vec<f64>,
    pub comps: Vec<FitComponent>,
    pub n: usize,
    /// 1st/99th percentile of the training data; used for rendering scales.
    pub train_lo: f64,
    pub train_hi: f64,
    pub(crate) clamp_events: AtomicU64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

fn build_component(
    y: &DataMatrix,
    hp: &HyperParams,
    ordering: &Ordering,
    base: &BaseCoefficients,
    moments: &PriorMoments,
    i: usize,
) -> Result<FitComponent> {
    let n = y.n_replicates();
    let g_m = base.g_sets[i].clone();
    let xi = base.xi[i].clone();
    let width = moments.m_prime.min(i);
    let g_mp: Vec<usize> = ordering.conditioning_set(i, width).to_vec();
    let has_kernel = i > 0;

    let values = y.values();
    let mut design = Array2::zeros((n, g_mp.len()));
    for r in 0..n {
        for (c, &j) in g_mp.iter().enumerate() {
            design[(r, c)] = values[(r, j)];
        }
    }
    let mut resid = vec![0.0; n];
    for r in 0..n {
        let mut mean = 0.0;
        for (wgt, &j) in xi.iter().zip(&g_m) {
            mean += wgt * values[(r, j)];
        }
        resid[r] = values[(r, i)] - mean;
    }

    let mut gram = Array2::eye(n);
    if has_kernel && n > 0 {
        let kernel = ComponentKernel {
            q: &moments.q[..g_mp.len()],
            sigma0_sq: hp.sigma0_sq(),
            sigma2: moments.sigma2[i],
            gamma: hp.gamma(),
            rho: hp.rho,
            tau2: base.tau2[i],
        };
        for r in 0..n {
            let xr = design.row(r);
            let xr = xr.as_slice().unwrap();
            gram[(r, r)] += kernel.eval_diag(xr);
            for s in 0..r {
                let v = kernel.eval(xr, design.row(s).as_slice().unwrap());
                gram[(r, s)] += v;
                gram[(s, r)] += v;
            }
        }
    }
    let chol_g = linalg::cholesky(&gram)
        .map_err(|_| Error::numeric_in(i, "Gram matrix K + I not positive definite"))?;
    let w = linalg::chol_solve(&chol_g, &resid);
    let alpha = moments.alpha;
    let beta = moments.beta[i];
    let alpha_post = alpha + 0.5 * n as f64;
    let beta_post = beta + 0.5 * linalg::dot(&resid, &w);
    if !beta_post.is_finite() || beta_post <= 0.0 {
        return Err(Error::numeric_in(i, format!("bad posterior scale {beta_post:e}")));
    }
    Ok(FitComponent {
        g_m,
        g_mp,
        xi,
        tau2: base.tau2[i],
        sigma2: moments.sigma2[i],
        alpha,
        beta,
        alpha_post,
        beta_post,
        dhat: (beta_post / alpha_post).sqrt(),
        chol_g,
        w,
        design,
        has_kernel,
    })
}

fn build_components(
    y: &DataMatrix,
    hp: &HyperParams,
    ordering: &Ordering,
    base: &BaseCoefficients,
    m_prime: usize,
) -> Result<Vec<FitComponent>> {
    let n_loc = ordering.len();
    if y.n_locations() != n_loc {
        return Err(Error::ShapeMismatch(format!(
            "{} data columns vs {} ordered locations",
            y.n_locations(),
            n_loc
        )));
    }
    if base.len() != n_loc {
        return Err(Error::ShapeMismatch("base coefficients do not match ordering".into()));
    }
    let moments = prior_moments_with_sparsity(hp, base, ordering, m_prime);
    (0..n_loc)
        .into_par_iter()
        .map(|i| build_component(y, hp, ordering, base, &moments, i))
        .collect()
}

/// Fit the per-component posterior statistics; `method` records which
/// hyperparameter layout produced `base`.
pub fn fit_components(
    y: &DataMatrix,
    hp: &HyperParams,
    ordering: &Ordering,
    base: &BaseCoefficients,
    method: Method,
) -> Result<FittedMap> {
    let m_prime = hp.sparsity_level();
    let comps = build_components(y, hp, ordering, base, m_prime)?;
    let (train_lo, train_hi) = if y.n_replicates() > 0 {
        let mut sorted: Vec<f64> = y.values().iter().copied().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (percentile(&sorted, 0.01), percentile(&sorted, 0.99))
    } else {
        let spread = 3.0 * base.tau2[0].sqrt();
        (-spread, spread)
    };
    Ok(FittedMap {
        hp: *hp,
        method,
        ordering: ordering.clone(),
        m_prime,
        q: hp.q_weights(m_prime),
        comps,
        n: y.n_replicates(),
        train_lo,
        train_hi,
        clamp_events: AtomicU64::new(0),
    })
}

/// Integrated log likelihood of the data with the regression functions and
/// conditional variances marginalized out. Additive constants that do not
/// depend on the hyperparameters are dropped, specifically
/// `-(n N / 2) ln(2 pi)`; oracle comparisons must add that term back.
pub fn integrated_loglik(
    y: &DataMatrix,
    hp: &HyperParams,
    ordering: &Ordering,
    base: &BaseCoefficients,
) -> Result<f64> {
    integrated_loglik_with_sparsity(y, hp, ordering, base, hp.sparsity_level())
}

/// Same objective with the sparsity level pinned by the caller, which is how
/// the optimizer keeps the objective smooth within an iteration.
pub fn integrated_loglik_with_sparsity(
    y: &DataMatrix,
    hp: &HyperParams,
    ordering: &Ordering,
    base: &BaseCoefficients,
    m_prime: usize,
) -> Result<f64> {
    if y.n_replicates() == 0 {
        return Err(Error::InvalidArgument("integrated likelihood needs replicates".into()));
    }
    let comps = build_components(y, hp, ordering, base, m_prime)?;
    let mut total = 0.0;
    for (i, c) in comps.iter().enumerate() {
        let term = -0.5 * linalg::chol_log_det(&c.chol_g) + c.alpha * c.beta.ln()
            - c.alpha_post * c.beta_post.ln()
            + ln_gamma(c.alpha_post)
            - ln_gamma(c.alpha);
        if !term.is_finite() {
            return Err(Error::numeric_in(i, format!("non-finite likelihood term {term}")));
        }
        total += term;
    }
    Ok(total)
}

impl FittedMap {
    pub fn n_locations(&self) -> usize {
        self.comps.len()
    }

    /// Number of forward/inverse evaluations that hit the z-scale clamp.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_events.load(AtomicOrdering::Relaxed)
    }

    /// Reconstruct the base coefficient view of the fitted components.
    pub fn base_coefficients(&self) -> BaseCoefficients {
        BaseCoefficients {
            g_sets: self.comps.iter().map(|c| c.g_m.clone()).collect(),
            xi: self.comps.iter().map(|c| c.xi.clone()).collect(),
            tau2: self.comps.iter().map(|c| c.tau2).collect(),
        }
    }

    fn kernel_for(&self, i: usize) -> Option<ComponentKernel<'_>> {
        let c = &self.comps[i];
        if !c.has_kernel {
            return None;
        }
        Some(ComponentKernel {
            q: &self.q[..c.g_mp.len()],
            sigma0_sq: self.hp.sigma0_sq(),
            sigma2: c.sigma2,
            gamma: self.hp.gamma(),
            rho: self.hp.rho,
            tau2: c.tau2,
        })
    }

    /// Predictive location and scale of component `i` given the earlier
    /// (ordered) entries of `y`; only indices below `i` are read.
    fn predictive(&self, i: usize, y: &[f64]) -> (f64, f64) {
        let c = &self.comps[i];
        let mut f_hat: f64 = c.xi.iter().zip(&c.g_m).map(|(w, &j)| w * y[j]).sum();
        let mut v = 0.0;
        if let Some(kernel) = self.kernel_for(i) {
            let x: Vec<f64> = c.g_mp.iter().map(|&j| y[j]).collect();
            let kxx = kernel.eval_diag(&x);
            if self.n > 0 {
                let kvec: Vec<f64> = (0..self.n)
                    .map(|r| kernel.eval(&x, c.design.row(r).as_slice().unwrap()))
                    .collect();
                f_hat += linalg::dot(&kvec, &c.w);
                let half = linalg::chol_solve(&c.chol_g, &kvec);
                v = (kxx - linalg::dot(&kvec, &half)).max(0.0);
            } else {
                v = kxx;
            }
        }
        (f_hat, c.dhat * (v + 1.0).sqrt())
    }

    /// Predictive t parameters of component `i` given the earlier ordered
    /// entries of `y`: (location, scale, degrees of freedom). Only indices
    /// below `i` are read.
    pub fn predictive_t(&self, i: usize, y: &[f64]) -> (f64, f64, f64) {
        let (location, scale) = self.predictive(i, y);
        (location, scale, 2.0 * self.comps[i].alpha_post)
    }

    fn check_field(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n_locations() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} entries, map has {} locations",
                y.len(),
                self.n_locations()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite field entry".into()));
        }
        Ok(())
    }

    /// Forward map: ordered field to the Gaussian reference scale. Each
    /// output is clamped to +-8.2 (counted) so finite inputs never produce
    /// infinities.
    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_field(y)?;
        let results: Vec<(f64, bool)> = (0..self.n_locations())
            .into_par_iter()
            .map(|i| {
                let (f_hat, spread) = self.predictive(i, y);
                let u = (y[i] - f_hat) / spread;
                t_to_z(u, 2.0 * self.comps[i].alpha_post)
            })
            .collect();
        let clamps = results.iter().filter(|r| r.1).count() as u64;
        if clamps > 0 {
            self.clamp_events.fetch_add(clamps, AtomicOrdering::Relaxed);
        }
        Ok(results.into_iter().map(|r| r.0).collect())
    }

    /// Inverse map: reference-scale vector to an ordered field, solving the
    /// triangular system sequentially.
    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.conditional_inverse(z, &[])
    }

    /// Inverse map with the first `observed.len()` ordered entries pinned.
    pub fn conditional_inverse(&self, z: &[f64], observed: &[f64]) -> Result<Vec<f64>> {
        let n_loc = self.n_locations();
        if z.len() != n_loc {
            return Err(Error::ShapeMismatch(format!(
                "reference vector has {} entries, map has {n_loc}",
                z.len()
            )));
        }
        let k = observed.len();
        if k > n_loc {
            return Err(Error::InvalidArgument(format!(
                "observed prefix of {k} exceeds {n_loc} locations"
            )));
        }
        if z.iter().any(|v| !v.is_finite()) || observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input".into()));
        }
        let mut y = vec![0.0; n_loc];
        y[..k].copy_from_slice(observed);
        let mut clamps = 0;
        for i in k..n_loc {
            let mut zi = z[i];
            if zi.abs() > Z_CLAMP {
                zi = zi.clamp(-Z_CLAMP, Z_CLAMP);
                clamps += 1;
            }
            let u = z_to_t(zi, 2.0 * self.comps[i].alpha_post);
            let (f_hat, spread) = self.predictive(i, &y);
            y[i] = f_hat + u * spread;
        }
        if clamps > 0 {
            self.clamp_events.fetch_add(clamps, AtomicOrdering::Relaxed);
        }
        Ok(y)
    }

    /// Predictive log density of an ordered field: a sum of location-scale
    /// t log densities along the triangular factorization.
    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        self.check_field(y)?;
        let per: Vec<f64> = (0..self.n_locations())
            .into_par_iter()
            .map(|i| {
                let (f_hat, spread) = self.predictive(i, y);
                let u = (y[i] - f_hat) / spread;
                ln_t_pdf(u, 2.0 * self.comps[i].alpha_post) - spread.ln()
            })
            .collect();
        Ok(per.iter().sum())
    }

    /// Draw independent fields by pushing reference draws through the
    /// inverse map; each replicate gets its own counter-based stream so the
    /// output is reproducible regardless of thread count.
    pub fn sample(&self, count: usize, seed: u64) -> Result<DataMatrix> {
        self.conditional_sample(count, seed, &[])
    }

    /// Conditional simulation given a fixed prefix of ordered values.
    pub fn conditional_sample(
        &self,
        count: usize,
        seed: u64,
        observed: &[f64],
    ) -> Result<DataMatrix> {
        let n_loc = self.n_locations();
        let rows: Vec<Result<Vec<f64>>> = (0..count)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(rep as u64 + 1);
                let z: Vec<f64> =
                    (0..n_loc).map(|_| StandardNormal.sample(&mut rng)).collect();
                self.conditional_inverse(&z, observed)
            })
            .collect();
        let mut values = Array2::zeros((count, n_loc));
        for (r, row) in rows.into_iter().enumerate() {
            let row = row?;
            for (c, v) in row.into_iter().enumerate() {
                values[(r, c)] = v;
            }
        }
        DataMatrix::new(values)
    }
}
