//! Hyperparameters, relevance weights with data-driven sparsity, the
//! nonlinear prior covariance of the map components, and the conjugate
//! prior moments.
//!
//! Every learnable quantity lives on an unconstrained scale (logs for
//! positive parameters), so the optimizer works in a flat vector while the
//! constrained values are derived on demand. The relevance weights
//! `q_k = exp(-e^{theta_q} k)` decay with neighbor rank and are truncated at
//! the rank where they fall below a fixed threshold, which is what prunes
//! the nonlinear kernel down to its effective input set.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::basegauss::{BaseCoefficients, BaseFamily, FamilyKind};
use crate::error::{Error, Result};
use crate::geometry::Ordering;

/// Which model the hyperparameter vector parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Nonparametric map shrunk toward the parametric base family.
    ShrinkTm,
    /// Zero-mean map with a scale-decay variance profile instead of a base
    /// family (the unshrunk predecessor, kept for comparisons).
    SimpleTm,
    /// Gaussian process with the base covariance alone.
    MatCov,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ShrinkTm => "shrinktm",
            Method::SimpleTm => "simpletm",
            Method::MatCov => "matcov",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shrinktm" => Ok(Method::ShrinkTm),
            "simpletm" => Ok(Method::SimpleTm),
            "matcov" => Ok(Method::MatCov),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Isotropic correlation used for the nonlinear part of the component
/// kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhoKind {
    SquaredExponential,
    Matern32,
}

impl RhoKind {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RhoKind::SquaredExponential => (-0.5 * t * t).exp(),
            RhoKind::Matern32 => {
                let s = 3.0_f64.sqrt() * t;
                (1.0 + s) * (-s).exp()
            }
        }
    }
}

/// Full hyperparameter set. All continuous fields are unconstrained; fixed
/// structural constants (conditioning sizes, sparsity threshold) ride along.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HyperParams {
    pub family: FamilyKind,
    pub log_variance: f64,
    pub log_range: f64,
    pub log_smoothness: f64,
    /// log of the coefficient of variation of the conditional-variance
    /// prior; small values pin the variances to the base values.
    pub log_cd: f64,
    pub theta_sigma1: f64,
    pub theta_sigma2: f64,
    pub theta_q: f64,
    pub theta_gamma: f64,
    pub theta_sigma0: f64,
    /// Variance profile of the zero-mean mode: tau_i^2 = e^{theta_d1} * scale_i^{theta_d2}.
    pub theta_d1: f64,
    pub theta_d2: f64,
    pub rho: RhoKind,
    pub m: usize,
    pub m_max: usize,
    pub epsilon: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            family: FamilyKind::Matern,
            log_variance: 0.0,
            log_range: 2.0,
            log_smoothness: 1.5_f64.ln(),
            log_cd: 0.0,
            theta_sigma1: 0.0,
            theta_sigma2: 0.0,
            theta_q: -1.0,
            theta_gamma: 0.0,
            theta_sigma0: 0.0,
            theta_d1: 0.0,
            theta_d2: 0.0,
            rho: RhoKind::SquaredExponential,
            m: 30,
            m_max: 30,
            epsilon: 0.01,
        }
    }
}

impl HyperParams {
    pub fn base_family(&self) -> BaseFamily {
        BaseFamily {
            kind: self.family,
            log_variance: self.log_variance,
            log_range: self.log_range,
            log_smoothness: self.log_smoothness,
        }
    }

    pub fn cd(&self) -> f64 {
        self.log_cd.exp()
    }

    pub fn gamma(&self) -> f64 {
        self.theta_gamma.exp()
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.theta_sigma0.exp()
    }

    /// Shape of the conditional-variance prior: always above 2, so means
    /// and variances of the inverse-gamma exist.
    pub fn alpha(&self) -> f64 {
        2.0 + 1.0 / (self.cd() * self.cd())
    }

    /// sigma_i^2 = e^{theta_sigma1} * scale^{theta_sigma2}.
    pub fn sigma_i_sq(&self, scale: f64) -> f64 {
        self.theta_sigma1.exp() * scale.powf(self.theta_sigma2)
    }

    pub fn sparsity_level(&self) -> usize {
        sparsity_level(self.theta_q, self.epsilon, self.m_max)
    }

    /// Relevance weights for neighbor ranks 1..=count.
    pub fn q_weights(&self, count: usize) -> Vec<f64> {
        let rate = self.theta_q.exp();
        (1..=count).map(|k| (-rate * k as f64).exp()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("hyperparameters serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s)
            .map_err(|e| Error::ModelFile(format!("bad hyperparameter block: {e}")))
    }
}

/// Largest neighbor rank whose relevance weight stays at or above the
/// threshold, capped by the stored neighbor lists.
pub fn sparsity_level(theta_q: f64, epsilon: f64, m_max: usize) -> usize {
    assert!(epsilon > 0.0 && epsilon < 1.0, "threshold must be in (0,1)");
    let rate = theta_q.exp();
    let mut m_prime = 0;
    for k in 1..=m_max {
        if (-rate * k as f64).exp() >= epsilon {
            m_prime = k;
        } else {
            break;
        }
    }
    m_prime
}

/// Per-component prior moments and the shared relevance weights.
#[derive(Debug, Clone)]
pub struct PriorMoments {
    /// Shape of the conditional-variance prior (identical across components).
    pub alpha: f64,
    /// beta_i = (1 + 1/c_d^2) tau_i^2.
    pub beta: Vec<f64>,
    /// Nonlinear prior variance sigma_i^2 from the scale decay.
    pub sigma2: Vec<f64>,
    /// Relevance weights q_1..q_{m'} (shared across components).
    pub q: Vec<f64>,
    pub m_prime: usize,
}

/// Prior moments implied by the hyperparameters and base coefficients.
pub fn prior_moments(
    hp: &HyperParams,
    base: &BaseCoefficients,
    ordering: &Ordering,
) -> PriorMoments {
    prior_moments_with_sparsity(hp, base, ordering, hp.sparsity_level())
}

/// Same, with the sparsity level pinned by the caller (the optimizer holds
/// it fixed within an iteration).
pub fn prior_moments_with_sparsity(
    hp: &HyperParams,
    base: &BaseCoefficients,
    ordering: &Ordering,
    m_prime: usize,
) -> PriorMoments {
    let alpha = hp.alpha();
    let shrink = 1.0 + 1.0 / (hp.cd() * hp.cd());
    let beta = base.tau2.iter().map(|t| shrink * t).collect();
    let sigma2 = ordering.scales.iter().map(|&l| hp.sigma_i_sq(l)).collect();
    let q = hp.q_weights(m_prime);
    PriorMoments { alpha, beta, sigma2, q, m_prime }
}

/// Kernel of one map component: normalized sum of a weighted linear part
/// and an isotropic correlation in the weighted input metric.
#[derive(Debug, Clone)]
pub struct ComponentKernel<'a> {
    /// Relevance weights for the component's effective inputs (rank order).
    pub q: &'a [f64],
    pub sigma0_sq: f64,
    pub sigma2: f64,
    pub gamma: f64,
    pub rho: RhoKind,
    /// Normalizer: the prior expectation of the conditional variance.
    pub tau2: f64,
}

impl ComponentKernel<'_> {
    /// K(x, x') = [sigma_0^2 x'Qx + sigma_i^2 rho(h/gamma)] / tau_i^2 with
    /// h^2 = (x-x')'Q(x-x') and Q = diag(q_k^2).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        debug_assert_eq!(x.len(), self.q.len());
        let mut lin = 0.0;
        let mut h2 = 0.0;
        for k in 0..x.len() {
            let w2 = self.q[k] * self.q[k];
            lin += w2 * x[k] * y[k];
            let d = x[k] - y[k];
            h2 += w2 * d * d;
        }
        (self.sigma0_sq * lin + self.sigma2 * self.rho.eval(h2.sqrt() / self.gamma)) / self.tau2
    }

    /// K(x, x) without forming the zero distance.
    pub fn eval_diag(&self, x: &[f64]) -> f64 {
        let mut lin = 0.0;
        for k in 0..x.len() {
            lin += self.q[k] * self.q[k] * x[k] * x[k];
        }
        (self.sigma0_sq * lin + self.sigma2) / self.tau2
    }
}

/// Kernel matrix of component `comp` between two row sets of its effective
/// inputs.
pub fn kernel_matrix(
    hp: &HyperParams,
    moments: &PriorMoments,
    base: &BaseCoefficients,
    comp: usize,
    x: &Array2<f64>,
    x2: &Array2<f64>,
) -> Result<Array2<f64>> {
    let width = moments.m_prime.min(comp);
    if x.ncols() != width || x2.ncols() != width {
        return Err(Error::ShapeMismatch(format!(
            "component {comp} expects rows of width {width}, got {} and {}",
            x.ncols(),
            x2.ncols()
        )));
    }
    let kernel = ComponentKernel {
        q: &moments.q[..width],
        sigma0_sq: hp.sigma0_sq(),
        sigma2: moments.sigma2[comp],
        gamma: hp.gamma(),
        rho: hp.rho,
        tau2: base.tau2[comp],
    };
    let mut out = Array2::zeros((x.nrows(), x2.nrows()));
    for i in 0..x.nrows() {
        let xi = x.row(i);
        for j in 0..x2.nrows() {
            out[(i, j)] = kernel.eval(xi.as_slice().unwrap(), x2.row(j).as_slice().unwrap());
        }
    }
    Ok(out)
}
