//! Partially collapsed Gibbs sampler for the spike-and-slab additive model.
//!
//! One sweep updates, in order:
//!
//! 1. for each covariate, the linear indicator with `alpha_j` integrated out,
//!    then `alpha_j` given the new indicator;
//! 2. the intercept;
//! 3. for each covariate, the nonlinear indicator with `beta_j` integrated
//!    out, then `beta_j` given the new indicator;
//! 4. the scale `delta0`;
//! 5. the slab variances `sigma_j^2`, `tau_j^2`;
//! 6. the mixture latents `e_i` (quantile likelihood only).
//!
//! Each indicator/coefficient pair is a blocked draw from its joint
//! conditional, which is what keeps the collapsed updates valid.

pub mod steps;
mod summary;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainState, Design, QuantileSpec};
use crate::samplers::RngHandle;

pub use steps::*;
pub use summary::{Moments, PatternCounts, PosteriorSummary, TraceRow};

/// Inverse-gamma prior with the given shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// Prior on each indicator vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IndicatorPrior {
    /// Equal mass on every model size, uniform within a size.
    Combinatorial,
    /// Independent inclusion with probability `pi`.
    Bernoulli(f64),
}

/// Hyperpriors. The intercept always has a flat prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub delta0: InvGammaPrior,
    pub sigma2: InvGammaPrior,
    pub tau2: InvGammaPrior,
    pub indicator: IndicatorPrior,
}

impl PriorConfig {
    /// `IG(a1, a2)` on every scale and variance, combinatorial indicator prior.
    pub fn new(a1: f64, a2: f64) -> Result<Self> {
        let ig = InvGammaPrior {
            shape: a1,
            rate: a2,
        };
        let cfg = Self {
            delta0: ig,
            sigma2: ig,
            tau2: ig,
            indicator: IndicatorPrior::Combinatorial,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_indicator(mut self, indicator: IndicatorPrior) -> Result<Self> {
        self.indicator = indicator;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ig) in [
            ("delta0", self.delta0),
            ("sigma2", self.sigma2),
            ("tau2", self.tau2),
        ] {
            if !(ig.shape > 0.0 && ig.rate > 0.0) {
                return Err(Error::Config(format!(
                    "{name} hyperprior needs positive shape and rate"
                )));
            }
        }
        if let IndicatorPrior::Bernoulli(pi) = self.indicator {
            if !(pi > 0.0 && pi < 1.0) {
                return Err(Error::Config(format!(
                    "Bernoulli inclusion probability must lie in (0, 1), got {pi}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self::new(0.5, 0.5).expect("default hyperparameters are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Total sweeps including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub priors: PriorConfig,
    /// Store per-draw traces of `mu`, `delta0`, `alpha` and both indicators.
    pub keep_traces: bool,
}

impl GibbsConfig {
    pub fn new(iterations: usize, burn_in: usize) -> Self {
        Self {
            iterations,
            burn_in,
            thin: 1,
            priors: PriorConfig::default(),
            keep_traces: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} leaves no draws out of {} iterations",
                self.burn_in, self.iterations
            )));
        }
        self.priors.validate()
    }

    pub fn kept_draws(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

impl Default for GibbsConfig {
    /// 20000 sweeps with 10000 of burn-in.
    fn default() -> Self {
        Self::new(20_000, 10_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    /// Asymmetric Laplace through its normal-exponential mixture.
    AsymmetricLaplace(QuantileSpec),
    /// `N(0, delta0)` errors (mean regression).
    Gaussian,
}

/// Everything the sampler conditions on: response, design, likelihood and
/// which indicators are free.
#[derive(Debug, Clone)]
pub struct Model {
    pub y: DVector<f64>,
    pub design: Design,
    pub likelihood: Likelihood,
    pub priors: PriorConfig,
    pub indicator_prior: IndicatorPrior,
    select_alpha: bool,
    select_beta: bool,
    /// Covariates whose nonlinear indicator is pinned to 0.
    linear_only: Vec<bool>,
}

impl Model {
    pub fn new(
        y: DVector<f64>,
        design: Design,
        likelihood: Likelihood,
        priors: PriorConfig,
        select_alpha: bool,
        select_beta: bool,
        linear_only: Vec<bool>,
    ) -> Result<Self> {
        if y.len() != design.n_obs() {
            return Err(Error::Dimension(format!(
                "{} responses for a design with {} rows",
                y.len(),
                design.n_obs()
            )));
        }
        if linear_only.len() != design.n_covariates() {
            return Err(Error::Dimension(format!(
                "{} force-linear flags for {} covariates",
                linear_only.len(),
                design.n_covariates()
            )));
        }
        priors.validate()?;
        Ok(Self {
            y,
            design,
            likelihood,
            indicator_prior: priors.indicator,
            priors,
            select_alpha,
            select_beta,
            linear_only,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.design.n_obs()
    }

    pub fn n_covariates(&self) -> usize {
        self.design.n_covariates()
    }

    pub fn quantile(&self) -> Option<QuantileSpec> {
        match self.likelihood {
            Likelihood::AsymmetricLaplace(q) => Some(q),
            Likelihood::Gaussian => None,
        }
    }

    /// Whether the linear indicator of `j` is sampled (rather than fixed).
    pub fn selects_alpha(&self, j: usize) -> bool {
        self.select_alpha && self.design.component(j).linear.is_some()
    }

    pub fn selects_beta(&self, j: usize) -> bool {
        self.select_beta && self.design.component(j).nonlinear.is_some() && !self.linear_only[j]
    }

    /// The all-in starting state: intercept at the sample quantile of `y`,
    /// zero coefficients, every available indicator on, unit scales.
    pub fn initial_state(&self) -> ChainState {
        let tau = self.quantile().map_or(0.5, |q| q.tau);
        let mu = sample_quantile(self.y.as_slice(), tau);
        let p = self.n_covariates();
        let gamma_alpha = (0..p)
            .map(|j| self.design.component(j).linear.is_some())
            .collect();
        let gamma_beta = (0..p)
            .map(|j| self.design.component(j).nonlinear.is_some() && !self.linear_only[j])
            .collect();
        ChainState::new(&self.design, mu, gamma_alpha, gamma_beta)
    }
}

/// Linear-interpolation sample quantile; 0 for empty input.
pub fn sample_quantile(values: &[f64], tau: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = tau * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Coefficient and indicator updates (the first three stages of a sweep).
pub fn sweep_coefficients<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    let p = model.n_covariates();
    for j in 0..p {
        if model.design.component(j).linear.is_some() {
            step_gamma_alpha(model, state, rng, j)?;
            step_alpha(model, state, rng, j)?;
        }
    }
    step_mu(model, state, rng)?;
    for j in 0..p {
        if model.design.component(j).nonlinear.is_some() {
            step_gamma_beta(model, state, rng, j)?;
            step_beta(model, state, rng, j)?;
        }
    }
    Ok(())
}

/// One full sweep.
pub fn sweep<R: Rng + ?Sized>(model: &Model, state: &mut ChainState, rng: &mut R) -> Result<()> {
    sweep_coefficients(model, state, rng)?;
    step_delta0(model, state, rng)?;
    step_variances(model, state, rng)?;
    step_latent_e(model, state, rng)?;
    Ok(())
}

/// Sweeps between full recomputations of the incrementally updated fit.
const FITTED_REFRESH: usize = 64;

/// Runs a chain from the all-in starting state.
pub fn run_chain(
    model: &Model,
    config: &GibbsConfig,
    rng: &mut RngHandle,
) -> Result<PosteriorSummary> {
    run_chain_from(model, config, model.initial_state(), rng)
}

/// Runs a chain from a caller-supplied state.
pub fn run_chain_from(
    model: &Model,
    config: &GibbsConfig,
    mut state: ChainState,
    rng: &mut RngHandle,
) -> Result<PosteriorSummary> {
    config.validate()?;
    if model.n_obs() == 0 {
        return Err(Error::Data("cannot fit an empty data set".into()));
    }
    state.refresh_fitted(&model.design);
    let mut summary = PosteriorSummary::empty(model, config.keep_traces);
    for it in 0..config.iterations {
        if it % FITTED_REFRESH == 0 {
            state.refresh_fitted(&model.design);
        }
        sweep(model, &mut state, rng).map_err(|e| e.at_iteration(it))?;
        state.check_invariants().map_err(|e| e.at_iteration(it))?;
        if it >= config.burn_in && (it - config.burn_in).is_multiple_of(config.thin) {
            summary.record(it, &state);
        }
    }
    summary.finish();
    Ok(summary)
}
