//! Seeded random-variate generation for the conditional updates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// A reproducible random stream identified by `(seed, stream)`.
///
/// Streams of one seed are independent ChaCha substreams, so every chain or
/// replicate can own a handle without any shared state.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Exponential draw with the given mean.
pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Parameter(format!(
            "exponential mean must be positive, got {mean}"
        )));
    }
    let unit: f64 = Exp1.sample(rng);
    Ok(mean * unit)
}

/// Gamma draw with `shape` and `rate`.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::Parameter(format!(
            "gamma needs positive shape and rate, got ({shape}, {rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Inverse-gamma draw: the reciprocal of a `Gamma(shape, rate)` variate.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let g = sample_gamma(rng, shape, rate).map_err(|_| {
        Error::Parameter(format!(
            "inverse gamma needs positive shape and rate, got ({shape}, {rate})"
        ))
    })?;
    Ok(1.0 / g)
}

/// Parameters of `GIG(rho, m, n)` with density proportional to
/// `x^(rho - 1) exp(-(m^2 / x + n^2 x) / 2)`.
///
/// Only `rho = 1/2` and `rho = -1/2` are supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    rho: f64,
    m: f64,
    n: f64,
}

/// Below this value of `m n` the `rho = 1/2` law is replaced by its `m = 0`
/// gamma limit; the total-variation error is of order `m n`.
const GIG_GAMMA_LIMIT: f64 = 1e-12;

impl GigParams {
    pub fn new(rho: f64, m: f64, n: f64) -> Result<Self> {
        if rho != 0.5 && rho != -0.5 {
            return Err(Error::Parameter(format!(
                "GIG sampler supports rho = +-1/2 only, got {rho}"
            )));
        }
        if !(m >= 0.0 && n >= 0.0 && m.is_finite() && n.is_finite()) {
            return Err(Error::Parameter(format!(
                "GIG needs finite m, n >= 0, got ({m}, {n})"
            )));
        }
        if m == 0.0 && n == 0.0 {
            return Err(Error::Parameter("GIG with m = n = 0 is improper".into()));
        }
        // rho > 0 needs n > 0 for integrability at infinity, rho < 0 needs m > 0 at zero
        if (rho > 0.0 && n == 0.0) || (rho < 0.0 && m == 0.0) {
            return Err(Error::Parameter(format!(
                "GIG({rho}, {m}, {n}) is improper"
            )));
        }
        Ok(Self { rho, m, n })
    }

    /// The `rho = 1/2` law used for the mixture latents.
    pub fn half(m: f64, n: f64) -> Result<Self> {
        Self::new(0.5, m, n)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    /// Mean of the law; closed form because half-integer Bessel ratios are
    /// elementary.
    pub fn mean(&self) -> f64 {
        let (m, n) = (self.m, self.n);
        if self.rho > 0.0 {
            m / n + 1.0 / (n * n)
        } else {
            // reciprocal of a GIG(1/2, n, m) is inverse Gaussian with mean m / n
            m / n
        }
    }
}

/// Draws from `GIG(rho, m, n)` through the inverse-Gaussian connection.
pub fn sample_gig<R: Rng + ?Sized>(rng: &mut R, params: &GigParams) -> f64 {
    if params.rho > 0.0 {
        sample_gig_half(rng, params.m, params.n)
    } else {
        1.0 / sample_gig_half(rng, params.n, params.m)
    }
}

/// `GIG(1/2, m, n)`: `1 / X` is inverse Gaussian with mean `n / m` and
/// shape `n^2`, sampled by the Michael–Schucany–Haas transformation.
fn sample_gig_half<R: Rng + ?Sized>(rng: &mut R, m: f64, n: f64) -> f64 {
    if m * n < GIG_GAMMA_LIMIT {
        let g = Gamma::new(0.5, 2.0 / (n * n)).expect("n > 0 checked by GigParams");
        return loop {
            let x: f64 = g.sample(rng);
            if x > 0.0 {
                break x;
            }
        };
    }
    let mean = n / m;
    let shape = n * n;
    let nu: f64 = StandardNormal.sample(rng);
    let y = nu * nu;
    let c = mean / (2.0 * shape);
    // larger root computed directly, smaller one via the product of roots = mean^2
    let big = mean + c * (mean * y + (4.0 * mean * shape * y + mean * mean * y * y).sqrt());
    let small = mean * mean / big;
    let u: f64 = rng.random();
    if u <= mean / (mean + small) {
        1.0 / small
    } else {
        1.0 / big
    }
}

/// Second-moment parameterization for [`sample_mvn`].
#[derive(Debug, Clone, Copy)]
pub enum Spread<'a> {
    Covariance(&'a DMatrix<f64>),
    Precision(&'a DMatrix<f64>),
}

fn factor(matrix: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    matrix.clone().cholesky().ok_or_else(|| {
        log::error!("Cholesky factorization failed for {matrix}");
        Error::Numerical(format!(
            "matrix of order {} is not positive definite",
            matrix.nrows()
        ))
    })
}

/// Multivariate normal draw with the given mean and covariance or precision.
pub fn sample_mvn<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    spread: Spread<'_>,
) -> Result<DVector<f64>> {
    let matrix = match spread {
        Spread::Covariance(m) | Spread::Precision(m) => m,
    };
    if !matrix.is_square() || matrix.nrows() != mean.len() {
        return Err(Error::Dimension(format!(
            "mean has length {}, matrix is {}x{}",
            mean.len(),
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let chol = factor(matrix)?;
    let z = DVector::from_fn(mean.len(), |_, _| standard_normal(rng));
    let noise = match spread {
        Spread::Covariance(_) => chol.l() * z,
        Spread::Precision(_) => precision_noise(&chol, z),
    };
    Ok(mean + noise)
}

/// `L^{-T} z` for a precision factor `Q = L L^T`, which has covariance `Q^{-1}`.
pub(crate) fn precision_noise(chol: &Cholesky<f64, Dyn>, z: DVector<f64>) -> DVector<f64> {
    chol.l_dirty()
        .tr_solve_lower_triangular(&z)
        .expect("Cholesky factor has a positive diagonal")
}
