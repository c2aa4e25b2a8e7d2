//! Centered truncated power spline bases and their curvature penalties.
//!
//! For degree `q` and internal knots `t_1 < ... < t_k` the raw basis on
//! `[0, 1]` is
//!
//! ```text
//! x, x^2, ..., x^q, (x - t_1)^q_+, ..., (x - t_k)^q_+
//! ```
//!
//! Column 0 is the linear term. The remaining `K = q + k - 1` columns form
//! the nonlinear block, which is the only part with curvature and therefore
//! the only part covered by the penalty matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree and internal knots of a truncated power basis on the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotGrid {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree < 2 {
            return Err(Error::Parameter(format!(
                "spline degree must be at least 2 to carry curvature, got {degree}"
            )));
        }
        if knots
            .iter()
            .any(|t| !(t.is_finite() && *t > 0.0 && *t < 1.0))
        {
            return Err(Error::Parameter(
                "internal knots must lie strictly inside (0, 1)".into(),
            ));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(
                "internal knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { degree, knots })
    }

    /// `count` equally spaced internal knots `i / (count + 1)`.
    pub fn equally_spaced(degree: usize, count: usize) -> Result<Self> {
        let knots = (1..=count).map(|i| i as f64 / (count + 1) as f64).collect();
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of raw basis functions, `K + 1 = q + k`.
    pub fn n_basis(&self) -> usize {
        self.degree + self.knots.len()
    }

    /// Number of nonlinear columns, `K = q + k - 1`.
    pub fn n_nonlinear(&self) -> usize {
        self.n_basis() - 1
    }
}

impl Default for KnotGrid {
    /// Cubic basis with four equally spaced internal knots (`K = 6`).
    fn default() -> Self {
        Self::equally_spaced(3, 4).expect("default grid is valid")
    }
}

/// Evaluates the raw (uncentered) basis at `x`.
pub fn raw_basis(x: f64, grid: &KnotGrid) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("basis argument {x} outside [0, 1]")));
    }
    let mut out = vec![0.0; grid.n_basis()];
    raw_basis_into(x, grid, &mut out);
    Ok(out)
}

fn raw_basis_into(x: f64, grid: &KnotGrid, out: &mut [f64]) {
    let q = grid.degree;
    let mut power = x;
    for slot in out.iter_mut().take(q) {
        *slot = power;
        power *= x;
    }
    for (slot, &t) in out[q..].iter_mut().zip(&grid.knots) {
        *slot = if x > t { (x - t).powi(q as i32) } else { 0.0 };
    }
}

/// Second derivative of a raw basis column, written as `coef * (x - shift)^power`
/// on `[shift, 1]` and zero below the shift.
#[derive(Debug, Clone, Copy)]
struct Curvature {
    coef: f64,
    shift: f64,
    power: i32,
}

fn curvature(grid: &KnotGrid, raw_index: usize) -> Curvature {
    let q = grid.degree;
    if raw_index < q {
        let d = raw_index + 1;
        Curvature {
            coef: (d * (d - 1)) as f64,
            shift: 0.0,
            power: d as i32 - 2,
        }
    } else {
        Curvature {
            coef: (q * (q - 1)) as f64,
            shift: grid.knots[raw_index - q],
            power: q as i32 - 2,
        }
    }
}

fn binomial(n: i32, k: i32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact `int_0^1` of the product of two curvature terms.
fn curvature_inner(a: Curvature, b: Curvature) -> f64 {
    let (hi, lo) = if a.shift >= b.shift { (a, b) } else { (b, a) };
    let length = 1.0 - hi.shift;
    if length <= 0.0 {
        return 0.0;
    }
    // with u = x - hi.shift: (x - lo.shift)^lo.power = (u + gap)^lo.power
    let gap = hi.shift - lo.shift;
    let integral: f64 = (0..=lo.power)
        .map(|i| {
            let e = hi.power + i + 1;
            binomial(lo.power, i) * gap.powi(lo.power - i) * length.powi(e) / e as f64
        })
        .sum();
    a.coef * b.coef * integral
}

/// Curvature penalty over the nonlinear columns:
/// entry `(k, k')` is `int_0^1 B''_k(x) B''_k'(x) dx`.
pub fn penalty_matrix(grid: &KnotGrid) -> Result<DMatrix<f64>> {
    if grid.degree < 2 {
        return Err(Error::Parameter(
            "penalty matrix requires degree >= 2".into(),
        ));
    }
    let k = grid.n_nonlinear();
    let terms: Vec<Curvature> = (1..=k).map(|r| curvature(grid, r)).collect();
    Ok(DMatrix::from_fn(k, k, |r, c| {
        curvature_inner(terms[r], terms[c])
    }))
}

/// Centered basis evaluator: the knot grid plus the per-covariate training
/// means that were subtracted from every raw column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredBasis {
    grid: KnotGrid,
    offsets: Vec<Vec<f64>>,
}

impl CenteredBasis {
    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn n_covariates(&self) -> usize {
        self.offsets.len()
    }

    /// Training-sample means `c_0, ..., c_K` of the raw columns for covariate `j`.
    pub fn offsets(&self, j: usize) -> &[f64] {
        &self.offsets[j]
    }

    /// Centered basis of covariate `j` at `x`; column 0 is the linear term.
    ///
    /// Arguments outside `[0, 1]` are clamped with a warning.
    pub fn eval(&self, j: usize, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_basis()];
        self.eval_into(j, x, &mut out);
        out
    }

    pub fn eval_into(&self, j: usize, x: f64, out: &mut [f64]) {
        let x = if (0.0..=1.0).contains(&x) {
            x
        } else {
            log::warn!("covariate {j}: value {x} outside [0, 1], clamped");
            x.clamp(0.0, 1.0)
        };
        raw_basis_into(x, &self.grid, out);
        for (v, c) in out.iter_mut().zip(&self.offsets[j]) {
            *v -= c;
        }
    }
}

/// Centered designs and penalty for every covariate of a training sample.
#[derive(Debug, Clone)]
pub struct SplineSystem {
    basis: CenteredBasis,
    linear: Vec<DVector<f64>>,
    nonlinear: Vec<DMatrix<f64>>,
    penalty: DMatrix<f64>,
}

impl SplineSystem {
    /// Builds centered designs for the `n x p` covariate matrix `x`.
    pub fn build(x: &DMatrix<f64>, grid: &KnotGrid) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::Dimension(format!(
                "covariate matrix must be non-empty, got {n} x {p}"
            )));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(
                "all covariate values must lie in [0, 1]".into(),
            ));
        }
        let width = grid.n_basis();
        if n <= width {
            log::warn!("only {n} observations for {width} basis columns per covariate");
        }
        let penalty = penalty_matrix(grid)?;
        let mut offsets = Vec::with_capacity(p);
        let mut linear = Vec::with_capacity(p);
        let mut nonlinear = Vec::with_capacity(p);
        let mut row = vec![0.0; width];
        for j in 0..p {
            let col = x.column(j);
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            if hi - lo <= 0.0 {
                return Err(Error::Data(format!("covariate {j} is constant")));
            }
            let mut raw = DMatrix::zeros(n, width);
            for (i, &v) in col.iter().enumerate() {
                raw_basis_into(v, grid, &mut row);
                for (c, &b) in row.iter().enumerate() {
                    raw[(i, c)] = b;
                }
            }
            let means: Vec<f64> = raw.column_iter().map(|c| c.mean()).collect();
            for (c, m) in means.iter().enumerate() {
                raw.column_mut(c).add_scalar_mut(-m);
            }
            linear.push(raw.column(0).into_owned());
            nonlinear.push(raw.columns(1, width - 1).into_owned());
            offsets.push(means);
        }
        Ok(Self {
            basis: CenteredBasis {
                grid: grid.clone(),
                offsets,
            },
            linear,
            nonlinear,
            penalty,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.linear[0].len()
    }

    pub fn n_covariates(&self) -> usize {
        self.linear.len()
    }

    pub fn grid(&self) -> &KnotGrid {
        self.basis.grid()
    }

    pub fn basis(&self) -> &CenteredBasis {
        &self.basis
    }

    /// Centered linear column `B_j0`.
    pub fn linear_column(&self, j: usize) -> &DVector<f64> {
        &self.linear[j]
    }

    /// Centered nonlinear design `B_j` (`n x K`).
    pub fn nonlinear_design(&self, j: usize) -> &DMatrix<f64> {
        &self.nonlinear[j]
    }

    /// Penalty `Omega_j`; all covariates share one knot grid, so this is the
    /// same matrix for every `j`.
    pub fn penalty(&self, _j: usize) -> &DMatrix<f64> {
        &self.penalty
    }
}
