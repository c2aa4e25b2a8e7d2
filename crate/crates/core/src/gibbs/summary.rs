use serde::{Deserialize, Serialize};

use super::Model;
use crate::model::ChainState;

/// Posterior mean and standard deviation of a scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn moments(&self) -> Moments {
        let sd = if self.count > 1.0 {
            (self.m2 / (self.count - 1.0)).sqrt()
        } else {
            0.0
        };
        Moments {
            mean: self.mean,
            sd,
        }
    }
}

/// How often each component was nonlinear (`gamma_beta = 1`), linear
/// (`gamma_alpha = 1, gamma_beta = 0`) or zero across the kept draws.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub nonlinear: u64,
    pub linear: u64,
    pub zero: u64,
}

impl PatternCounts {
    pub fn push(&mut self, gamma_alpha: bool, gamma_beta: bool) {
        match (gamma_alpha, gamma_beta) {
            (_, true) => self.nonlinear += 1,
            (true, false) => self.linear += 1,
            (false, false) => self.zero += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.nonlinear + self.linear + self.zero
    }
}

/// One stored draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mu: f64,
    pub delta0: f64,
    pub alpha: Vec<f64>,
    pub gamma_alpha: Vec<bool>,
    pub gamma_beta: Vec<bool>,
}

/// Post-burn-in summaries of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub mu: Moments,
    pub delta0: Moments,
    pub alpha: Vec<Moments>,
    pub beta: Vec<Vec<Moments>>,
    pub patterns: Vec<PatternCounts>,
    /// Posterior mean of the regression function at the training rows.
    pub fitted: Vec<f64>,
    pub traces: Option<Vec<TraceRow>>,
    acc_mu: Running,
    acc_delta0: Running,
    acc_alpha: Vec<Running>,
    acc_beta: Vec<Vec<Running>>,
    acc_fitted: Vec<Running>,
}

impl PosteriorSummary {
    pub(crate) fn empty(model: &Model, keep_traces: bool) -> Self {
        let p = model.n_covariates();
        let n = model.n_obs();
        let widths: Vec<usize> = (0..p).map(|j| model.design.nonlinear_dim(j)).collect();
        Self {
            n_draws: 0,
            mu: Moments::default(),
            delta0: Moments::default(),
            alpha: vec![Moments::default(); p],
            beta: widths
                .iter()
                .map(|w| vec![Moments::default(); *w])
                .collect(),
            patterns: vec![PatternCounts::default(); p],
            fitted: vec![0.0; n],
            traces: keep_traces.then(Vec::new),
            acc_mu: Running::default(),
            acc_delta0: Running::default(),
            acc_alpha: vec![Running::default(); p],
            acc_beta: widths
                .iter()
                .map(|w| vec![Running::default(); *w])
                .collect(),
            acc_fitted: vec![Running::default(); n],
        }
    }

    pub(crate) fn record(&mut self, iteration: usize, state: &ChainState) {
        self.n_draws += 1;
        self.acc_mu.push(state.mu);
        self.acc_delta0.push(state.delta0);
        for (acc, a) in self.acc_alpha.iter_mut().zip(&state.alpha) {
            acc.push(*a);
        }
        for (accs, b) in self.acc_beta.iter_mut().zip(&state.beta) {
            for (acc, v) in accs.iter_mut().zip(b.iter()) {
                acc.push(*v);
            }
        }
        for (acc, f) in self.acc_fitted.iter_mut().zip(state.fitted.iter()) {
            acc.push(*f);
        }
        for (j, counts) in self.patterns.iter_mut().enumerate() {
            counts.push(state.gamma_alpha[j], state.gamma_beta[j]);
        }
        if let Some(traces) = &mut self.traces {
            traces.push(TraceRow {
                iteration,
                mu: state.mu,
                delta0: state.delta0,
                alpha: state.alpha.clone(),
                gamma_alpha: state.gamma_alpha.clone(),
                gamma_beta: state.gamma_beta.clone(),
            });
        }
    }

    pub(crate) fn finish(&mut self) {
        self.mu = self.acc_mu.moments();
        self.delta0 = self.acc_delta0.moments();
        self.alpha = self.acc_alpha.iter().map(Running::moments).collect();
        self.beta = self
            .acc_beta
            .iter()
            .map(|accs| accs.iter().map(Running::moments).collect())
            .collect();
        self.fitted = self.acc_fitted.iter().map(|a| a.moments().mean).collect();
    }

    pub fn alpha_means(&self) -> Vec<f64> {
        self.alpha.iter().map(|m| m.mean).collect()
    }

    pub fn beta_means(&self, j: usize) -> Vec<f64> {
        self.beta[j].iter().map(|m| m.mean).collect()
    }
}
