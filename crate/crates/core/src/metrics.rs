//! Estimation, prediction and selection metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{PatternCounts, TraceRow};
use crate::model::check_loss;

/// Default number of grid points for integrated squared errors.
pub const ISE_GRID: usize = 1000;

/// `t` equally spaced points covering `[0, 1]`, endpoints included.
pub fn unit_grid(t: usize) -> Vec<f64> {
    match t {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..t).map(|i| i as f64 / (t - 1) as f64).collect(),
    }
}

/// Grid approximation `(1/T) sum (f_hat(t_i) - f(t_i))^2`.
pub fn ise(f_hat: &[f64], f_true: &[f64]) -> Result<f64> {
    if f_hat.len() != f_true.len() {
        return Err(Error::Dimension(format!(
            "estimate on {} points, truth on {}",
            f_hat.len(),
            f_true.len()
        )));
    }
    if f_hat.is_empty() {
        return Err(Error::Dimension("ISE grid is empty".into()));
    }
    let sum: f64 = f_hat
        .iter()
        .zip(f_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / f_hat.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestErrors {
    pub rmse: f64,
    pub ad: f64,
}

fn check_pair(y_hat: &[f64], y: &[f64]) -> Result<()> {
    if y_hat.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} responses",
            y_hat.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Dimension("no test responses".into()));
    }
    Ok(())
}

/// Root mean squared and mean absolute prediction errors.
pub fn test_errors(y_hat: &[f64], y: &[f64]) -> Result<TestErrors> {
    check_pair(y_hat, y)?;
    let n = y.len() as f64;
    let (sq, abs) = y_hat.iter().zip(y).fold((0.0, 0.0), |(s, a), (p, t)| {
        let d = p - t;
        (s + d * d, a + d.abs())
    });
    Ok(TestErrors {
        rmse: (sq / n).sqrt(),
        ad: abs / n,
    })
}

/// Average check loss `mean rho_tau(y_hat - y)`.
pub fn acl(y_hat: &[f64], y: &[f64], tau: f64) -> Result<f64> {
    check_pair(y_hat, y)?;
    let sum: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(p, t)| check_loss(p - t, tau))
        .sum();
    Ok(sum / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Nonlinear,
    Linear,
    Zero,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Nonlinear => "nonlinear",
            Label::Linear => "linear",
            Label::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "nonlinear" => Some(Label::Nonlinear),
            "linear" => Some(Label::Linear),
            "zero" => Some(Label::Zero),
            _ => None,
        }
    }
}

/// Posterior probabilities of the three effect types and the largest one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentLabel {
    pub label: Label,
    pub p_nonlinear: f64,
    pub p_linear: f64,
    pub p_zero: f64,
}

impl ComponentLabel {
    /// Argmax of the three probabilities; ties go to the simpler effect
    /// (zero before linear before nonlinear).
    pub fn from_probabilities(p_nonlinear: f64, p_linear: f64, p_zero: f64) -> Self {
        let mut label = Label::Zero;
        let mut best = p_zero;
        for (l, p) in [(Label::Linear, p_linear), (Label::Nonlinear, p_nonlinear)] {
            if p > best {
                best = p;
                label = l;
            }
        }
        Self {
            label,
            p_nonlinear,
            p_linear,
            p_zero,
        }
    }

    pub fn from_counts(counts: &PatternCounts) -> Self {
        let total = counts.total() as f64;
        if total == 0.0 {
            return Self::from_probabilities(0.0, 0.0, 1.0);
        }
        Self::from_probabilities(
            counts.nonlinear as f64 / total,
            counts.linear as f64 / total,
            counts.zero as f64 / total,
        )
    }
}

/// Labels every component from the indicator draws in `traces`.
pub fn classify_components(traces: &[TraceRow]) -> Result<Vec<ComponentLabel>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Dimension("empty indicator trace".into()))?;
    let p = first.gamma_alpha.len();
    let mut counts = vec![PatternCounts::default(); p];
    for row in traces {
        if row.gamma_alpha.len() != p || row.gamma_beta.len() != p {
            return Err(Error::Dimension("ragged indicator trace".into()));
        }
        for (j, c) in counts.iter_mut().enumerate() {
            c.push(row.gamma_alpha[j], row.gamma_beta[j]);
        }
    }
    Ok(counts.iter().map(ComponentLabel::from_counts).collect())
}

/// Selection tallies against known truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub selected_nonzero: usize,
    pub correct_nonzero: usize,
    pub selected_linear: usize,
    pub correct_linear: usize,
}

pub fn selection_counts(labels: &[Label], truth: &[Label]) -> Result<SelectionCounts> {
    if labels.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} true components",
            labels.len(),
            truth.len()
        )));
    }
    let mut c = SelectionCounts::default();
    for (l, t) in labels.iter().zip(truth) {
        if *l != Label::Zero {
            c.selected_nonzero += 1;
            if *t != Label::Zero {
                c.correct_nonzero += 1;
            }
        }
        if *l == Label::Linear {
            c.selected_linear += 1;
            if *t == Label::Linear {
                c.correct_linear += 1;
            }
        }
    }
    Ok(c)
}
