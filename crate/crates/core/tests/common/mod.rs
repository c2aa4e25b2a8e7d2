//! Shared helpers for the integration tests: quadrature and a tiny model.
#![allow(dead_code)]

use bqplam::gibbs::{IndicatorPrior, Likelihood, Model, PriorConfig};
use bqplam::model::{ChainState, ComponentDesign, Design, NonlinearBlock, QuantileSpec};
use nalgebra::{DMatrix, DVector};

/// Composite Simpson weights for `n` (odd) equally spaced points with step `h`.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(
        n >= 3 && n % 2 == 1,
        "Simpson needs an odd number of points"
    );
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Adaptive Simpson on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Moments of a one-dimensional unnormalized log density on a grid.
#[derive(Debug, Clone, Copy)]
pub struct GridMoments {
    /// `log integral exp(logf)`.
    pub log_mass: f64,
    pub mean: f64,
    pub var: f64,
}

pub fn grid_moments_1d(logf: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> GridMoments {
    let xs = linspace(lo, hi, n);
    let w = simpson_weights(n, (hi - lo) / (n - 1) as f64);
    let lv: Vec<f64> = xs.iter().map(|x| logf(*x)).collect();
    let top = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut s1) = (0.0, 0.0);
    for i in 0..n {
        let d = w[i] * (lv[i] - top).exp();
        z += d;
        s1 += d * xs[i];
    }
    let mean = s1 / z;
    let var = xs
        .iter()
        .zip(&lv)
        .zip(&w)
        .map(|((x, l), wi)| wi * (l - top).exp() * (x - mean) * (x - mean))
        .sum::<f64>()
        / z;
    GridMoments {
        log_mass: top + z.ln(),
        mean,
        var,
    }
}

/// Mode and curvature scale of a unimodal log density, found by a coarse
/// scan followed by golden-section refinement.
pub fn locate_1d(logf: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let xs = linspace(lo, hi, 20_001);
    let mut best = xs[0];
    let mut best_v = f64::NEG_INFINITY;
    for &x in &xs {
        let v = logf(x);
        if v > best_v {
            best_v = v;
            best = x;
        }
    }
    let step = (hi - lo) / 20_000.0;
    let (mut a, mut b) = (best - step, best + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if logf(c) > logf(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mode = 0.5 * (a + b);
    let h = 1e-4 * (1.0 + mode.abs());
    let curv = (logf(mode + h) - 2.0 * logf(mode) + logf(mode - h)) / (h * h);
    (mode, (-1.0 / curv).sqrt())
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

/// Knot at 0.5, degree 2: raw basis `x, x^2, (x - 0.5)^2_+`.
pub fn toy_raw(x: f64) -> [f64; 3] {
    let h = (x - 0.5).max(0.0);
    [x, x * x, h * h]
}

/// Closed-form curvature Gram matrix of `x^2, (x - 0.5)^2_+` on `[0, 1]`.
pub fn toy_omega() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0])
}

pub const TOY_X: [[f64; 2]; 4] = [[0.1, 0.7], [0.4, 0.2], [0.65, 0.9], [0.95, 0.45]];
pub const TOY_Y: [f64; 4] = [0.3, -0.2, 1.1, 0.6];

/// Centered toy design columns: `(linear, nonlinear)` for covariate `j`.
pub fn toy_columns(j: usize) -> (DVector<f64>, DMatrix<f64>) {
    let raw: Vec<[f64; 3]> = TOY_X.iter().map(|r| toy_raw(r[j])).collect();
    let mean = |c: usize| raw.iter().map(|r| r[c]).sum::<f64>() / 4.0;
    let means = [mean(0), mean(1), mean(2)];
    let lin = DVector::from_fn(4, |i, _| raw[i][0] - means[0]);
    let nl = DMatrix::from_fn(4, 2, |i, c| raw[i][c + 1] - means[c + 1]);
    (lin, nl)
}

pub fn toy_model(likelihood: Likelihood, priors: PriorConfig) -> Model {
    let comps = (0..2)
        .map(|j| {
            let (lin, nl) = toy_columns(j);
            ComponentDesign {
                linear: Some(lin),
                nonlinear: Some(NonlinearBlock::new(nl, toy_omega()).unwrap()),
            }
        })
        .collect();
    let design = Design::new(4, comps).unwrap();
    Model::new(
        DVector::from_row_slice(&TOY_Y),
        design,
        likelihood,
        priors,
        true,
        true,
        vec![false; 2],
    )
    .unwrap()
}

pub fn toy_quantile_model(tau: f64) -> Model {
    toy_model(
        Likelihood::AsymmetricLaplace(QuantileSpec::new(tau).unwrap()),
        PriorConfig::new(0.7, 0.4)
            .unwrap()
            .with_indicator(IndicatorPrior::Combinatorial)
            .unwrap(),
    )
}

pub fn toy_state(model: &Model) -> ChainState {
    let mut s = ChainState::new(&model.design, 0.2, vec![true, true], vec![true, true]);
    s.alpha = vec![0.5, -0.3];
    s.beta = vec![
        DVector::from_row_slice(&[0.4, -0.1]),
        DVector::from_row_slice(&[0.2, 0.3]),
    ];
    s.e = DVector::from_row_slice(&[0.3, 0.8, 1.5, 0.5]);
    s.delta0 = 0.7;
    s.sigma2 = vec![1.3, 0.6];
    s.tau2 = vec![0.9, 2.0];
    s.refresh_fitted(&model.design);
    s
}

/// Regression function at the toy rows from the raw coefficients, without
/// using the library's design matrices.
pub fn toy_f(mu: f64, alpha: &[f64], beta: &[[f64; 2]]) -> [f64; 4] {
    let mut f = [mu; 4];
    for j in 0..2 {
        let (lin, nl) = toy_columns(j);
        for i in 0..4 {
            f[i] += alpha[j] * lin[i] + beta[j][0] * nl[(i, 0)] + beta[j][1] * nl[(i, 1)];
        }
    }
    f
}

pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean) * (x - mean) / (2.0 * var)
}

/// `log N(b; 0, tau2 Omega^-1)` for the toy penalty.
pub fn log_slab(b: [f64; 2], tau2: f64) -> f64 {
    let o = toy_omega();
    let det = o[(0, 0)] * o[(1, 1)] - o[(0, 1)] * o[(1, 0)];
    let quad = o[(0, 0)] * b[0] * b[0] + 2.0 * o[(0, 1)] * b[0] * b[1] + o[(1, 1)] * b[1] * b[1];
    -(2.0 * std::f64::consts::PI).ln() + 0.5 * (det / (tau2 * tau2)).ln() - quad / (2.0 * tau2)
}

pub fn log_inv_gamma(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}
pub mod gig_oracle;
pub mod oracle;
