//! Quadrature reference for the half-order GIG sampler.
#![allow(dead_code)]

use bqplam::samplers::{sample_gig, GigParams, RngHandle};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const DRAWS: usize = 1_000_000;
pub const BINS: usize = 50;
pub const GRID: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Debug, Clone)]
pub struct GigReport {
    pub m: f64,
    pub n: f64,
    pub mean: f64,
    pub want_mean: f64,
    pub mean_z: f64,
    pub var: f64,
    pub want_var: f64,
    pub var_z: f64,
    pub chi2_p: f64,
}

impl GigReport {
    pub fn passes(&self) -> bool {
        self.mean_z.abs() <= 3.0 && self.var_z.abs() <= 3.0 && self.chi2_p > 0.001
    }
}

/// Reference law on a log-scale grid: abscissae `x`, normalized CDF and the
/// first four raw moments.
struct Reference {
    x: Vec<f64>,
    cdf: Vec<f64>,
    raw: [f64; 4],
}

fn reference(m: f64, n: f64) -> Reference {
    // u = ln x; the Jacobian turns x^{-1/2} dx into e^{u/2} du
    let logf = |u: f64| 0.5 * u - 0.5 * (m * m * (-u).exp() + n * n * u.exp());
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let peak = (0..=8000)
        .map(|i| lo + (hi - lo) * i as f64 / 8000.0)
        .map(logf)
        .fold(f64::NEG_INFINITY, f64::max);
    while logf(lo) - peak < -60.0 {
        lo += 0.01;
    }
    while logf(hi) - peak < -60.0 {
        hi -= 0.01;
    }
    lo -= 0.5;
    hi += 0.5;
    let k = 400_001;
    let h = (hi - lo) / (k - 1) as f64;
    let us: Vec<f64> = (0..k).map(|i| lo + h * i as f64).collect();
    let dens: Vec<f64> = us.iter().map(|u| (logf(*u) - peak).exp()).collect();
    let mut cdf = vec![0.0; k];
    for i in 1..k {
        cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
    }
    let total = cdf[k - 1];
    cdf.iter_mut().for_each(|c| *c /= total);
    let w = super::simpson_weights(k, h);
    let mut raw = [0.0; 4];
    let mut z = 0.0;
    for i in 0..k {
        let d = w[i] * dens[i];
        let x = us[i].exp();
        z += d;
        let mut p = 1.0;
        for r in raw.iter_mut() {
            p *= x;
            *r += d * p;
        }
    }
    raw.iter_mut().for_each(|r| *r /= z);
    Reference {
        x: us.iter().map(|u| u.exp()).collect(),
        cdf,
        raw,
    }
}

fn quantile(r: &Reference, p: f64) -> f64 {
    let i = r.cdf.partition_point(|c| *c < p).clamp(1, r.cdf.len() - 1);
    let (c0, c1) = (r.cdf[i - 1], r.cdf[i]);
    let t = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
    r.x[i - 1] + t * (r.x[i] - r.x[i - 1])
}

pub fn gig_report(m: f64, n: f64, seed: u64) -> GigReport {
    let r = reference(m, n);
    let [m1, m2, m3, m4] = r.raw;
    let var = m2 - m1 * m1;
    let mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
    let edges: Vec<f64> = (1..BINS)
        .map(|b| quantile(&r, b as f64 / BINS as f64))
        .collect();

    let params = GigParams::half(m, n).expect("valid parameters");
    let mut rng = RngHandle::new(seed, 0);
    let mut counts = vec![0usize; BINS];
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..DRAWS {
        let x = sample_gig(&mut rng, &params);
        s1 += x;
        s2 += x * x;
        counts[edges.partition_point(|e| *e < x)] += 1;
    }
    let nd = DRAWS as f64;
    let mean = s1 / nd;
    let svar = (s2 - nd * mean * mean) / (nd - 1.0);
    let expected = nd / BINS as f64;
    let chi2: f64 = counts
        .iter()
        .map(|c| (*c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((BINS - 1) as f64).unwrap();
    GigReport {
        m,
        n,
        mean,
        want_mean: m1,
        mean_z: (mean - m1) / (var / nd).sqrt(),
        var: svar,
        want_var: var,
        var_z: (svar - var) / ((mu4 - var * var) / nd).sqrt(),
        chi2_p: 1.0 - dist.cdf(chi2),
    }
}

pub fn all_reports() -> Vec<GigReport> {
    let mut out = Vec::new();
    for (a, m) in GRID.iter().enumerate() {
        for (b, n) in GRID.iter().enumerate() {
            out.push(gig_report(*m, *n, 1000 + (3 * a + b) as u64));
        }
    }
    out
}
