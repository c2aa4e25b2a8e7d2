//! Grid-integration oracle for every conditional of the toy model.
#![allow(dead_code)]

use bqplam::gibbs::*;
use bqplam::model::ChainState;

use super::*;

/// One compared quantity.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub got: f64,
    pub want: f64,
}

impl Check {
    pub fn rel(&self) -> f64 {
        rel_err(self.got, self.want)
    }
}

fn check(out: &mut Vec<Check>, name: impl Into<String>, got: f64, want: f64) {
    out.push(Check {
        name: name.into(),
        got,
        want,
    });
}

/// Everything the log joint needs, in plain arrays.
#[derive(Debug, Clone)]
struct Params {
    mu: f64,
    alpha: [f64; 2],
    beta: [[f64; 2]; 2],
    e: [f64; 4],
    delta0: f64,
}

impl Params {
    fn from_state(s: &ChainState) -> Self {
        Self {
            mu: s.mu,
            alpha: [s.alpha[0], s.alpha[1]],
            beta: [[s.beta[0][0], s.beta[0][1]], [s.beta[1][0], s.beta[1][1]]],
            e: [s.e[0], s.e[1], s.e[2], s.e[3]],
            delta0: s.delta0,
        }
    }
}

/// Log likelihood of `y` together with the exponential mixing density of
/// `e` (quantile case) or plain Gaussian errors with variance `delta0`.
fn log_lik(model: &Model, p: &Params) -> f64 {
    let f = toy_f(p.mu, &p.alpha, &p.beta);
    match model.likelihood {
        Likelihood::AsymmetricLaplace(q) => (0..4)
            .map(|i| {
                log_normal(TOY_Y[i], f[i] + q.k1 * p.e[i], q.k2 * p.delta0 * p.e[i])
                    - p.delta0.ln()
                    - p.e[i] / p.delta0
            })
            .sum(),
        Likelihood::Gaussian => (0..4).map(|i| log_normal(TOY_Y[i], f[i], p.delta0)).sum(),
    }
}

/// Mean and covariance of a bivariate unnormalized log density by 2-D
/// Simpson integration around its numerically located mode.
struct Grid2 {
    log_mass: f64,
    mean: [f64; 2],
    cov: [[f64; 3]; 1],
}

fn grid_2d(logf: &dyn Fn([f64; 2]) -> f64) -> Grid2 {
    // Newton step from the origin with central-difference derivatives; the
    // target is Gaussian so one step lands on the mode up to rounding.
    let mut x = [0.0, 0.0];
    for _ in 0..3 {
        let h = 1e-3;
        let f = |a: f64, b: f64| logf([a, b]);
        let g0 = (f(x[0] + h, x[1]) - f(x[0] - h, x[1])) / (2.0 * h);
        let g1 = (f(x[0], x[1] + h) - f(x[0], x[1] - h)) / (2.0 * h);
        let c = f(x[0], x[1]);
        let h00 = (f(x[0] + h, x[1]) - 2.0 * c + f(x[0] - h, x[1])) / (h * h);
        let h11 = (f(x[0], x[1] + h) - 2.0 * c + f(x[0], x[1] - h)) / (h * h);
        let h01 = (f(x[0] + h, x[1] + h) - f(x[0] + h, x[1] - h) - f(x[0] - h, x[1] + h)
            + f(x[0] - h, x[1] - h))
            / (4.0 * h * h);
        let det = h00 * h11 - h01 * h01;
        x = [
            x[0] - (h11 * g0 - h01 * g1) / det,
            x[1] - (-h01 * g0 + h00 * g1) / det,
        ];
        if x.iter().any(|v| !v.is_finite()) {
            panic!("mode search diverged");
        }
        let _ = c;
    }
    let h = 1e-3;
    let f = |a: f64, b: f64| logf([a, b]);
    let c = f(x[0], x[1]);
    let h00 = (f(x[0] + h, x[1]) - 2.0 * c + f(x[0] - h, x[1])) / (h * h);
    let h11 = (f(x[0], x[1] + h) - 2.0 * c + f(x[0], x[1] - h)) / (h * h);
    let h01 = (f(x[0] + h, x[1] + h) - f(x[0] + h, x[1] - h) - f(x[0] - h, x[1] + h)
        + f(x[0] - h, x[1] - h))
        / (4.0 * h * h);
    let det = h00 * h11 - h01 * h01;
    let sd = [(-h11 / det).sqrt(), (-h00 / det).sqrt()];

    let n = 1201;
    let span = 12.0;
    let a0 = linspace(x[0] - span * sd[0], x[0] + span * sd[0], n);
    let a1 = linspace(x[1] - span * sd[1], x[1] + span * sd[1], n);
    let w0 = simpson_weights(n, a0[1] - a0[0]);
    let w1 = simpson_weights(n, a1[1] - a1[0]);
    let top = logf(x);
    let mut z = 0.0;
    let mut s = [0.0; 2];
    let mut ss = [0.0; 3];
    for (i, u) in a0.iter().enumerate() {
        for (k, v) in a1.iter().enumerate() {
            let d = w0[i] * w1[k] * (logf([*u, *v]) - top).exp();
            let (du, dv) = (u - x[0], v - x[1]);
            z += d;
            s[0] += d * du;
            s[1] += d * dv;
            ss[0] += d * du * du;
            ss[1] += d * du * dv;
            ss[2] += d * dv * dv;
        }
    }
    let m = [s[0] / z, s[1] / z];
    Grid2 {
        log_mass: top + z.ln(),
        mean: [x[0] + m[0], x[1] + m[1]],
        cov: [[
            ss[0] / z - m[0] * m[0],
            ss[1] / z - m[0] * m[1],
            ss[2] / z - m[1] * m[1],
        ]],
    }
}

/// `log p(gamma)` under the size-uniform prior for `p` indicators.
fn log_size_uniform(gamma: &[bool]) -> f64 {
    let p = gamma.len() as f64;
    let q = gamma.iter().filter(|g| **g).count() as f64;
    let ln_choose = statrs::function::factorial::ln_binomial(p as u64, q as u64);
    -(p + 1.0).ln() - ln_choose
}

fn inclusion_from_masses(log_m1: f64, log_m0: f64, gamma: &[bool], j: usize) -> f64 {
    let mut on = gamma.to_vec();
    on[j] = true;
    let mut off = gamma.to_vec();
    off[j] = false;
    let l1 = log_m1 + log_size_uniform(&on);
    let l0 = log_m0 + log_size_uniform(&off);
    1.0 / (1.0 + (l0 - l1).exp())
}

/// Compares each conditional law used by the sampler with direct numerical
/// integration of the unnormalized joint on the toy instance.
pub fn conditional_checks(model: &Model, state: &ChainState) -> Vec<Check> {
    let mut out = Vec::new();
    let base = Params::from_state(state);
    let priors = model.priors;
    let tag = match model.likelihood {
        Likelihood::AsymmetricLaplace(q) => format!("tau={}", q.tau),
        Likelihood::Gaussian => "gaussian".to_string(),
    };

    // intercept, flat prior
    let logf = |m: f64| {
        let mut p = base.clone();
        p.mu = m;
        log_lik(model, &p)
    };
    let (mode, sd) = locate_1d(&logf, -50.0, 50.0);
    let g = grid_moments_1d(&logf, mode - 14.0 * sd, mode + 14.0 * sd, 4001);
    let (mean, var) = mu_conditional(model, state).unwrap();
    check(&mut out, format!("{tag} mu mean"), mean, g.mean);
    check(&mut out, format!("{tag} mu var"), var, g.var);

    for j in 0..2 {
        // linear coefficient given gamma_alpha = 1
        let logf = |a: f64| {
            let mut p = base.clone();
            p.alpha[j] = a;
            log_lik(model, &p) + log_normal(a, 0.0, state.sigma2[j])
        };
        let (mode, sd) = locate_1d(&logf, -50.0, 50.0);
        let g = grid_moments_1d(&logf, mode - 14.0 * sd, mode + 14.0 * sd, 4001);
        let (mean, var) = alpha_conditional(model, state, j).unwrap();
        check(&mut out, format!("{tag} alpha[{j}] mean"), mean, g.mean);
        check(&mut out, format!("{tag} alpha[{j}] var"), var, g.var);

        // linear indicator: marginal likelihood ratio with alpha_j integrated out
        let mut p0 = base.clone();
        p0.alpha[j] = 0.0;
        let log_m0 = log_lik(model, &p0);
        for other in [true, false] {
            let mut s = state.clone();
            s.gamma_alpha[1 - j] = other;
            let want = inclusion_from_masses(g.log_mass, log_m0, &s.gamma_alpha, j);
            let got = gamma_alpha_probability(model, &s, j).unwrap();
            check(
                &mut out,
                format!("{tag} P(gamma_alpha[{j}]=1 | other={other})"),
                got,
                want,
            );
        }

        // nonlinear block given gamma_beta = 1
        let tau2 = state.tau2[j];
        let logf2 = |b: [f64; 2]| {
            let mut p = base.clone();
            p.beta[j] = b;
            log_lik(model, &p) + log_slab(b, tau2)
        };
        let g2 = grid_2d(&logf2);
        let post = beta_conditional(model, state, j).unwrap();
        let cov = post.covariance();
        check(
            &mut out,
            format!("{tag} beta[{j}] mean[0]"),
            post.mean[0],
            g2.mean[0],
        );
        check(
            &mut out,
            format!("{tag} beta[{j}] mean[1]"),
            post.mean[1],
            g2.mean[1],
        );
        check(
            &mut out,
            format!("{tag} beta[{j}] cov[0,0]"),
            cov[(0, 0)],
            g2.cov[0][0],
        );
        check(
            &mut out,
            format!("{tag} beta[{j}] cov[0,1]"),
            cov[(0, 1)],
            g2.cov[0][1],
        );
        check(
            &mut out,
            format!("{tag} beta[{j}] cov[1,1]"),
            cov[(1, 1)],
            g2.cov[0][2],
        );

        let mut p0 = base.clone();
        p0.beta[j] = [0.0, 0.0];
        let log_m0 = log_lik(model, &p0);
        for other in [true, false] {
            let mut s = state.clone();
            s.gamma_beta[1 - j] = other;
            let want = inclusion_from_masses(g2.log_mass, log_m0, &s.gamma_beta, j);
            let got = gamma_beta_probability(model, &s, j).unwrap();
            check(
                &mut out,
                format!("{tag} P(gamma_beta[{j}]=1 | other={other})"),
                got,
                want,
            );
        }
    }

    // scale, integrated on the log scale
    let logf = |u: f64| {
        let d = u.exp();
        let mut p = base.clone();
        p.delta0 = d;
        log_lik(model, &p) + log_inv_gamma(d, priors.delta0.shape, priors.delta0.rate) + u
    };
    let (mode, sd) = locate_1d(&logf, -15.0, 15.0);
    let (m1, m2) = transformed_moments(&logf, mode - 30.0 * sd, mode + 80.0, 400_001, f64::exp);
    // the inverse-gamma tail is polynomial, hence the long upper range
    let (shape, rate) = delta0_conditional(model, state);
    let ig_mean = rate / (shape - 1.0);
    let ig_var = rate * rate / ((shape - 1.0).powi(2) * (shape - 2.0));
    check(&mut out, format!("{tag} delta0 mean"), ig_mean, m1);
    check(&mut out, format!("{tag} delta0 var"), ig_var, m2 - m1 * m1);

    // mixture latents
    if let Likelihood::AsymmetricLaplace(q) = model.likelihood {
        let f = toy_f(base.mu, &base.alpha, &base.beta);
        for i in 0..4 {
            let d = base.delta0;
            let logf = |u: f64| {
                let e = u.exp();
                log_normal(TOY_Y[i], f[i] + q.k1 * e, q.k2 * d * e) - e / d + u
            };
            let (mode, sd) = locate_1d(&logf, -25.0, 10.0);
            let (m1, m2) =
                transformed_moments(&logf, mode - 40.0 * sd, mode + 40.0 * sd, 40_001, f64::exp);
            let gig = latent_conditional(model, state, i).unwrap();
            let (m, n) = (gig.m(), gig.n());
            let z = m * n;
            let mean = m / n + 1.0 / (n * n);
            let second = (m / n).powi(2) * (1.0 + 3.0 / z + 3.0 / (z * z));
            check(&mut out, format!("{tag} e[{i}] mean"), mean, m1);
            check(
                &mut out,
                format!("{tag} e[{i}] var"),
                second - mean * mean,
                m2 - m1 * m1,
            );
        }
    }
    out
}

/// First two moments of `t(u)` under the density `exp(logf(u))`.
fn transformed_moments(
    logf: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
    t: fn(f64) -> f64,
) -> (f64, f64) {
    let us = linspace(lo, hi, n);
    let w = simpson_weights(n, us[1] - us[0]);
    let lv: Vec<f64> = us.iter().map(|u| logf(*u)).collect();
    let top = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let d = w[k] * (lv[k] - top).exp();
        let x = t(us[k]);
        z += d;
        s1 += d * x;
        s2 += d * x * x;
    }
    (s1 / z, s2 / z)
}

/// The toy models and states covered by the oracle suite.
pub fn oracle_instances() -> Vec<(Model, ChainState)> {
    let mut v = Vec::new();
    for tau in [0.5, 0.25, 0.8] {
        let m = toy_quantile_model(tau);
        let s = toy_state(&m);
        v.push((m, s));
    }
    let g = toy_model(Likelihood::Gaussian, PriorConfig::new(0.7, 0.4).unwrap());
    let s = toy_state(&g);
    v.push((g, s));
    v
}
