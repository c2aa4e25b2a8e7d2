//! Full conditional updates of one sweep.
//!
//! Every update reads the current [`ChainState`] and writes back its own
//! block, keeping the fitted-value cache in sync. The `*_conditional` and
//! `*_probability` functions expose the exact conditional laws so they can be
//! checked independently of the random draws.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::{IndicatorPrior, Likelihood, Model};
use crate::error::{Error, Result};
use crate::model::ChainState;
use crate::samplers::{
    precision_noise, sample_gig, sample_inverse_gamma, standard_normal, GigParams,
};

/// Per-observation precision `1 / E_ii` under the current latents.
pub fn weights(model: &Model, state: &ChainState) -> DVector<f64> {
    match model.likelihood {
        Likelihood::AsymmetricLaplace(q) => state.e.map(|e| 1.0 / (q.k2 * state.delta0 * e)),
        Likelihood::Gaussian => DVector::from_element(model.n_obs(), 1.0 / state.delta0),
    }
}

/// Mixture location shift `k1 e` (zero for the Gaussian likelihood).
fn offsets(model: &Model, state: &ChainState) -> DVector<f64> {
    match model.likelihood {
        Likelihood::AsymmetricLaplace(q) => &state.e * q.k1,
        Likelihood::Gaussian => DVector::zeros(model.n_obs()),
    }
}

/// `y - f - k1 e` with the current fitted values.
fn working_residual(model: &Model, state: &ChainState) -> DVector<f64> {
    &model.y - &state.fitted - offsets(model, state)
}

/// Log prior odds `log P(gamma_j = 0 | rest) - log P(gamma_j = 1 | rest)`.
pub fn prior_log_odds(prior: IndicatorPrior, gamma: &[bool], j: usize) -> f64 {
    match prior {
        IndicatorPrior::Combinatorial => {
            let p = gamma.len() as f64;
            let others = gamma
                .iter()
                .enumerate()
                .filter(|(i, g)| *i != j && **g)
                .count() as f64;
            ((p - others) / (1.0 + others)).ln()
        }
        IndicatorPrior::Bernoulli(pi) => ((1.0 - pi) / pi).ln(),
    }
}

/// `1 / (1 + exp(log_h))` without overflow.
fn inclusion_from_log_h(log_h: f64) -> f64 {
    if log_h > 0.0 {
        let t = (-log_h).exp();
        t / (1.0 + t)
    } else {
        1.0 / (1.0 + log_h.exp())
    }
}

struct ScalarSufficient {
    /// `B^T E^-1 B`
    gram: f64,
    /// `B^T E^-1 y*`
    cross: f64,
}

fn alpha_sufficient(model: &Model, state: &ChainState, j: usize) -> Result<ScalarSufficient> {
    let b0 = model
        .design
        .component(j)
        .linear
        .as_ref()
        .ok_or_else(|| Error::Config(format!("covariate {j} has no linear column")))?;
    let w = weights(model, state);
    let mut ystar = working_residual(model, state);
    ystar.axpy(state.alpha[j], b0, 1.0);
    let gram = b0.iter().zip(w.iter()).map(|(b, w)| w * b * b).sum();
    let cross = b0
        .iter()
        .zip(w.iter())
        .zip(ystar.iter())
        .map(|((b, w), y)| w * b * y)
        .sum();
    Ok(ScalarSufficient { gram, cross })
}

/// Mean and variance of `alpha_j` given `gamma_alpha_j = 1` and everything else.
pub fn alpha_conditional(model: &Model, state: &ChainState, j: usize) -> Result<(f64, f64)> {
    let s = alpha_sufficient(model, state, j)?;
    let var = 1.0 / (s.gram + 1.0 / state.sigma2[j]);
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Numerical(format!(
            "alpha[{j}] conditional variance {var}"
        )));
    }
    Ok((var * s.cross, var))
}

fn set_alpha(model: &Model, state: &mut ChainState, j: usize, value: f64) {
    let delta = value - state.alpha[j];
    if delta != 0.0 {
        let b0 = model
            .design
            .component(j)
            .linear
            .as_ref()
            .expect("linear column present");
        state.fitted.axpy(delta, b0, 1.0);
    }
    state.alpha[j] = value;
}

/// Draws `alpha_j`; exactly zero when its indicator is off.
pub fn step_alpha<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    rng: &mut R,
    j: usize,
) -> Result<()> {
    if !state.gamma_alpha[j] {
        if model.design.component(j).linear.is_some() {
            set_alpha(model, state, j, 0.0);
        }
        return Ok(());
    }
    let (mean, var) = alpha_conditional(model, state, j)?;
    let draw = mean + var.sqrt() * standard_normal(rng);
    set_alpha(model, state, j, draw);
    Ok(())
}

/// `P(gamma_alpha_j = 1 | y, rest)` with `alpha_j` integrated out.
pub fn gamma_alpha_probability(model: &Model, state: &ChainState, j: usize) -> Result<f64> {
    let s = alpha_sufficient(model, state, j)?;
    let sigma2 = state.sigma2[j];
    let log_h1 =
        -0.5 * s.cross * s.cross / (s.gram + 1.0 / sigma2) + 0.5 * (sigma2 * s.gram).ln_1p();
    let log_h = log_h1 + prior_log_odds(model.indicator_prior, &state.gamma_alpha, j);
    Ok(inclusion_from_log_h(log_h))
}

/// Collapsed indicator draw for the linear term of covariate `j`.
///
/// Switching off zeroes `alpha_j` at once; the following [`step_alpha`]
/// redraws it when the indicator is on.
pub fn step_gamma_alpha<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    rng: &mut R,
    j: usize,
) -> Result<()> {
    if !model.selects_alpha(j) {
        return Ok(());
    }
    let prob = gamma_alpha_probability(model, state, j)?;
    let on = rng.random::<f64>() < prob;
    state.gamma_alpha[j] = on;
    if !on {
        set_alpha(model, state, j, 0.0);
    }
    Ok(())
}

/// Mean and variance of the intercept under its flat prior.
pub fn mu_conditional(model: &Model, state: &ChainState) -> Result<(f64, f64)> {
    if model.n_obs() == 0 {
        return Err(Error::Dimension("intercept update needs data".into()));
    }
    let w = weights(model, state);
    let mut ystar = working_residual(model, state);
    ystar.add_scalar_mut(state.mu);
    let total: f64 = w.sum();
    let var = 1.0 / total;
    Ok((var * w.dot(&ystar), var))
}

pub fn step_mu<R: Rng + ?Sized>(model: &Model, state: &mut ChainState, rng: &mut R) -> Result<()> {
    let (mean, var) = mu_conditional(model, state)?;
    let draw = mean + var.sqrt() * standard_normal(rng);
    state.fitted.add_scalar_mut(draw - state.mu);
    state.mu = draw;
    Ok(())
}

/// Gaussian conditional of `beta_j` in precision form.
pub struct BetaPosterior {
    pub mean: DVector<f64>,
    /// `B^T E^-1 B + Omega / tau^2`
    pub precision: DMatrix<f64>,
    /// `B^T E^-1 y*`
    pub cross: DVector<f64>,
    factor: Cholesky<f64, Dyn>,
}

impl BetaPosterior {
    pub fn covariance(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }

    pub fn log_det_precision(&self) -> f64 {
        2.0 * self
            .factor
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
    }
}

pub fn beta_conditional(model: &Model, state: &ChainState, j: usize) -> Result<BetaPosterior> {
    let block = model
        .design
        .component(j)
        .nonlinear
        .as_ref()
        .ok_or_else(|| Error::Config(format!("covariate {j} has no nonlinear block")))?;
    let w = weights(model, state);
    let mut ystar = working_residual(model, state);
    if state.beta[j].iter().any(|b| *b != 0.0) {
        ystar.gemv(1.0, &block.basis, &state.beta[j], 1.0);
    }
    let mut weighted = block.basis.clone();
    for (mut row, wi) in weighted.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    let cross = weighted.tr_mul(&ystar);
    let mut precision = weighted.tr_mul(&block.basis);
    precision += &block.penalty / state.tau2[j];
    // symmetrize against rounding in the weighted product
    let precision = (&precision + precision.transpose()) * 0.5;
    let factor = precision.clone().cholesky().ok_or_else(|| {
        log::error!(
            "beta[{j}] precision not positive definite (tau2 = {}, delta0 = {}): {precision}",
            state.tau2[j],
            state.delta0
        );
        Error::Numerical(format!(
            "beta[{j}] conditional precision is not positive definite"
        ))
    })?;
    let mean = factor.solve(&cross);
    Ok(BetaPosterior {
        mean,
        precision,
        cross,
        factor,
    })
}

fn set_beta(model: &Model, state: &mut ChainState, j: usize, value: DVector<f64>) {
    let delta = &value - &state.beta[j];
    if delta.iter().any(|d| *d != 0.0) {
        let block = model
            .design
            .component(j)
            .nonlinear
            .as_ref()
            .expect("nonlinear block present");
        state.fitted.gemv(1.0, &block.basis, &delta, 1.0);
    }
    state.beta[j] = value;
}

/// Draws `beta_j`; the exact zero vector when its indicator is off.
pub fn step_beta<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    rng: &mut R,
    j: usize,
) -> Result<()> {
    let dim = model.design.nonlinear_dim(j);
    if !state.gamma_beta[j] {
        if dim > 0 {
            set_beta(model, state, j, DVector::zeros(dim));
        }
        return Ok(());
    }
    let post = beta_conditional(model, state, j)?;
    let z = DVector::from_fn(dim, |_, _| standard_normal(rng));
    let draw = &post.mean + precision_noise(&post.factor, z);
    set_beta(model, state, j, draw);
    Ok(())
}

/// `P(gamma_beta_j = 1 | y, rest)` with `beta_j` integrated out.
pub fn gamma_beta_probability(model: &Model, state: &ChainState, j: usize) -> Result<f64> {
    let block = model
        .design
        .component(j)
        .nonlinear
        .as_ref()
        .ok_or_else(|| Error::Config(format!("covariate {j} has no nonlinear block")))?;
    let post = beta_conditional(model, state, j)?;
    let dim = block.dim() as f64;
    let quad = post.cross.dot(&post.mean);
    let log_det_prior = block.penalty_log_det - dim * state.tau2[j].ln();
    let log_h1 = -0.5 * quad - 0.5 * log_det_prior + 0.5 * post.log_det_precision();
    let log_h = log_h1 + prior_log_odds(model.indicator_prior, &state.gamma_beta, j);
    Ok(inclusion_from_log_h(log_h))
}

/// Collapsed indicator draw for the nonlinear block of covariate `j`.
pub fn step_gamma_beta<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    rng: &mut R,
    j: usize,
) -> Result<()> {
    if !model.selects_beta(j) {
        return Ok(());
    }
    let prob = gamma_beta_probability(model, state, j)?;
    let on = rng.random::<f64>() < prob;
    state.gamma_beta[j] = on;
    if !on {
        let dim = model.design.nonlinear_dim(j);
        set_beta(model, state, j, DVector::zeros(dim));
    }
    Ok(())
}

/// Inverse-gamma `(shape, rate)` of the scale `delta0` (error variance for
/// the Gaussian likelihood).
pub fn delta0_conditional(model: &Model, state: &ChainState) -> (f64, f64) {
    let prior = model.priors.delta0;
    let n = model.n_obs() as f64;
    let resid = &model.y - &state.fitted;
    match model.likelihood {
        Likelihood::AsymmetricLaplace(q) => {
            let sum: f64 = resid
                .iter()
                .zip(state.e.iter())
                .map(|(r, e)| {
                    let u = r - q.k1 * e;
                    u * u / (2.0 * q.k2 * e) + e
                })
                .sum();
            (prior.shape + 1.5 * n, prior.rate + sum)
        }
        Likelihood::Gaussian => (
            prior.shape + 0.5 * n,
            prior.rate + 0.5 * resid.norm_squared(),
        ),
    }
}

pub fn step_delta0<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    let (shape, rate) = delta0_conditional(model, state);
    state.delta0 = sample_inverse_gamma(rng, shape, rate)?;
    Ok(())
}

/// Inverse-gamma `(shape, rate)` of `sigma_j^2`: posterior when the linear
/// term is active, the prior otherwise.
pub fn sigma2_conditional(model: &Model, state: &ChainState, j: usize) -> (f64, f64) {
    let prior = model.priors.sigma2;
    if state.gamma_alpha[j] {
        (
            prior.shape + 0.5,
            prior.rate + 0.5 * state.alpha[j] * state.alpha[j],
        )
    } else {
        (prior.shape, prior.rate)
    }
}

/// Inverse-gamma `(shape, rate)` of `tau_j^2`.
pub fn tau2_conditional(model: &Model, state: &ChainState, j: usize) -> (f64, f64) {
    let prior = model.priors.tau2;
    match &model.design.component(j).nonlinear {
        Some(block) if state.gamma_beta[j] => {
            let b = &state.beta[j];
            let quad = b.dot(&(&block.penalty * b));
            (
                prior.shape + 0.5 * block.dim() as f64,
                prior.rate + 0.5 * quad,
            )
        }
        _ => (prior.shape, prior.rate),
    }
}

pub fn step_variances<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    for j in 0..state.n_covariates() {
        let (shape, rate) = sigma2_conditional(model, state, j);
        state.sigma2[j] = sample_inverse_gamma(rng, shape, rate)?;
        let (shape, rate) = tau2_conditional(model, state, j);
        state.tau2[j] = sample_inverse_gamma(rng, shape, rate)?;
    }
    Ok(())
}

/// GIG law of the mixture latent `e_i`.
pub fn latent_conditional(model: &Model, state: &ChainState, i: usize) -> Result<GigParams> {
    let q = match model.likelihood {
        Likelihood::AsymmetricLaplace(q) => q,
        Likelihood::Gaussian => {
            return Err(Error::Config(
                "Gaussian likelihood has no mixture latents".into(),
            ))
        }
    };
    let d = state.delta0;
    let r = model.y[i] - state.fitted[i];
    let m = r.abs() / (q.k2 * d).sqrt();
    let n = (q.k1 * q.k1 / (q.k2 * d) + 2.0 / d).sqrt();
    GigParams::half(m, n)
}

pub fn step_latent_e<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    if matches!(model.likelihood, Likelihood::Gaussian) {
        return Ok(());
    }
    for i in 0..model.n_obs() {
        let params = latent_conditional(model, state, i)?;
        state.e[i] = sample_gig(rng, &params);
    }
    Ok(())
}
