//! Likelihood building blocks and the chain state of the additive model.
//!
//! The asymmetric Laplace error with scale `delta0` is handled through its
//! normal-exponential mixture:
//!
//! ```text
//! y_i = f_i + k1 e_i + sqrt(k2 delta0 e_i) z_i,   e_i ~ Exp(mean delta0)
//! k1  = (1 - 2 tau) / (tau (1 - tau)),   k2 = 2 / (tau (1 - tau))
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Check (pinball) loss `u (tau - I(u <= 0))`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u <= 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Log density of the asymmetric Laplace error at `eps`.
pub fn ald_log_density(eps: f64, tau: f64, delta0: f64) -> Result<f64> {
    if delta0.is_nan() || delta0 <= 0.0 {
        return Err(Error::Domain(format!(
            "scale delta0 must be positive, got {delta0}"
        )));
    }
    let spec = QuantileSpec::new(tau)?;
    Ok((spec.tau * (1.0 - spec.tau) / delta0).ln() - check_loss(eps, spec.tau) / delta0)
}

/// Quantile level together with its mixture constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    pub tau: f64,
    pub k1: f64,
    pub k2: f64,
}

impl QuantileSpec {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0, 1), got {tau}"
            )));
        }
        let v = tau * (1.0 - tau);
        Ok(Self {
            tau,
            k1: (1.0 - 2.0 * tau) / v,
            k2: 2.0 / v,
        })
    }
}

/// Alias matching the mixture-representation vocabulary.
pub fn mixture_constants(tau: f64) -> Result<QuantileSpec> {
    QuantileSpec::new(tau)
}

/// A nonlinear block: design columns plus the curvature penalty of the slab.
#[derive(Debug, Clone)]
pub struct NonlinearBlock {
    pub basis: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
    pub penalty_log_det: f64,
}

impl NonlinearBlock {
    pub fn new(basis: DMatrix<f64>, penalty: DMatrix<f64>) -> Result<Self> {
        if basis.ncols() != penalty.nrows() || !penalty.is_square() {
            return Err(Error::Dimension(format!(
                "design has {} columns but penalty is {}x{}",
                basis.ncols(),
                penalty.nrows(),
                penalty.ncols()
            )));
        }
        let chol = penalty.clone().cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "penalty matrix is not positive definite: {penalty}"
            ))
        })?;
        let penalty_log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            basis,
            penalty,
            penalty_log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Columns attached to one covariate.
#[derive(Debug, Clone, Default)]
pub struct ComponentDesign {
    pub linear: Option<DVector<f64>>,
    pub nonlinear: Option<NonlinearBlock>,
}

/// Per-covariate design blocks of an engine, all evaluated on the same `n` rows.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    components: Vec<ComponentDesign>,
}

impl Design {
    pub fn new(n: usize, components: Vec<ComponentDesign>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Dimension(
                "design needs at least one covariate".into(),
            ));
        }
        for (j, c) in components.iter().enumerate() {
            let bad_linear = c.linear.as_ref().is_some_and(|b| b.len() != n);
            let bad_nonlinear = c.nonlinear.as_ref().is_some_and(|b| b.basis.nrows() != n);
            if bad_linear || bad_nonlinear {
                return Err(Error::Dimension(format!(
                    "covariate {j} design does not have {n} rows"
                )));
            }
        }
        Ok(Self { n, components })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn n_covariates(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, j: usize) -> &ComponentDesign {
        &self.components[j]
    }

    pub fn components(&self) -> &[ComponentDesign] {
        &self.components
    }

    /// Width of the nonlinear block of covariate `j` (0 when absent).
    pub fn nonlinear_dim(&self, j: usize) -> usize {
        self.components[j]
            .nonlinear
            .as_ref()
            .map_or(0, NonlinearBlock::dim)
    }
}

/// Every latent quantity of one chain.
///
/// `delta0` is the asymmetric Laplace scale for quantile engines and the
/// error variance for the Gaussian mean-regression engine, where `e` is unused.
/// `fitted` caches `mu 1 + sum_j (alpha_j B_j0 + B_j beta_j)` and is kept in
/// sync by every coefficient update.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<DVector<f64>>,
    pub gamma_alpha: Vec<bool>,
    pub gamma_beta: Vec<bool>,
    pub e: DVector<f64>,
    pub delta0: f64,
    pub sigma2: Vec<f64>,
    pub tau2: Vec<f64>,
    pub fitted: DVector<f64>,
}

impl ChainState {
    /// Zero coefficients, unit scales, indicators set from `gamma_alpha` /
    /// `gamma_beta`, intercept `mu`.
    pub fn new(design: &Design, mu: f64, gamma_alpha: Vec<bool>, gamma_beta: Vec<bool>) -> Self {
        let p = design.n_covariates();
        let n = design.n_obs();
        let beta = (0..p)
            .map(|j| DVector::zeros(design.nonlinear_dim(j)))
            .collect();
        let mut state = Self {
            mu,
            alpha: vec![0.0; p],
            beta,
            gamma_alpha,
            gamma_beta,
            e: DVector::from_element(n, 1.0),
            delta0: 1.0,
            sigma2: vec![1.0; p],
            tau2: vec![1.0; p],
            fitted: DVector::zeros(n),
        };
        state.refresh_fitted(design);
        state
    }

    pub fn n_covariates(&self) -> usize {
        self.alpha.len()
    }

    /// Recomputes the fitted-value cache from the coefficients.
    pub fn refresh_fitted(&mut self, design: &Design) {
        self.fitted = eval_f(self, design).expect("state matches its design");
    }

    /// Number of active entries in an indicator vector.
    pub fn active_count(gamma: &[bool]) -> usize {
        gamma.iter().filter(|g| **g).count()
    }

    /// Spike consistency and positivity of all scale quantities.
    pub fn check_invariants(&self) -> Result<()> {
        for j in 0..self.n_covariates() {
            if !self.gamma_alpha[j] && self.alpha[j] != 0.0 {
                return Err(Error::Numerical(format!(
                    "alpha[{j}] = {} with inactive indicator",
                    self.alpha[j]
                )));
            }
            if !self.gamma_beta[j] && self.beta[j].iter().any(|b| *b != 0.0) {
                return Err(Error::Numerical(format!(
                    "beta[{j}] nonzero with inactive indicator"
                )));
            }
            if !(self.sigma2[j] > 0.0 && self.tau2[j] > 0.0) {
                return Err(Error::Numerical(format!(
                    "nonpositive variance at component {j}"
                )));
            }
        }
        if self.delta0.is_nan()
            || self.delta0 <= 0.0
            || self.e.iter().any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(Error::Numerical("nonpositive scale or latent".into()));
        }
        Ok(())
    }
}

/// Regression function `f = mu 1 + B_0 alpha + sum_j B_j beta_j` at the design rows.
pub fn eval_f(state: &ChainState, design: &Design) -> Result<DVector<f64>> {
    let p = design.n_covariates();
    if state.alpha.len() != p || state.beta.len() != p {
        return Err(Error::Dimension(format!(
            "state has {} covariates, design has {p}",
            state.alpha.len()
        )));
    }
    let mut f = DVector::from_element(design.n_obs(), state.mu);
    for (j, comp) in design.components().iter().enumerate() {
        if let Some(b0) = &comp.linear {
            if state.alpha[j] != 0.0 {
                f.axpy(state.alpha[j], b0, 1.0);
            }
        }
        match &comp.nonlinear {
            Some(block) => {
                if state.beta[j].len() != block.dim() {
                    return Err(Error::Dimension(format!(
                        "beta[{j}] has length {}, block has {} columns",
                        state.beta[j].len(),
                        block.dim()
                    )));
                }
                if state.beta[j].iter().any(|b| *b != 0.0) {
                    f.gemv(1.0, &block.basis, &state.beta[j], 1.0);
                }
            }
            None if !state.beta[j].is_empty() => {
                return Err(Error::Dimension(format!(
                    "beta[{j}] given for a covariate without nonlinear block"
                )));
            }
            None => {}
        }
    }
    Ok(f)
}
