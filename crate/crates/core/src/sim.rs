//! Simulation design, data generator and replicate experiments.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gibbs::GibbsConfig;
use crate::io::Dataset;
use crate::metrics::{
    acl, ise, selection_counts, test_errors, unit_grid, Label, SelectionCounts, ISE_GRID,
};
use crate::samplers::{standard_normal, RngHandle};
use crate::spline::KnotGrid;
use crate::variants::{build_engine, EngineVariant};

/// Correlation between neighbouring latent Gaussian covariates.
pub const COVARIATE_RHO: f64 = 0.5;
/// Components reported individually (`f_1` .. `f_6`).
pub const REPORTED_COMPONENTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ErrorFamily {
    /// `N(0, sd^2)`.
    Normal { sd: f64 },
    /// `scale * t_df`.
    StudentT { scale: f64, df: f64 },
}

impl ErrorFamily {
    pub fn normal() -> Self {
        ErrorFamily::Normal { sd: 0.5 }
    }

    pub fn student_t() -> Self {
        ErrorFamily::StudentT {
            scale: 1.0 / 3.0,
            df: 2.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ErrorFamily::Normal { .. } => "normal",
            ErrorFamily::StudentT { .. } => "t",
        }
    }

    fn sample(&self, rng: &mut RngHandle) -> Result<f64> {
        Ok(match *self {
            ErrorFamily::Normal { sd } => sd * standard_normal(rng),
            ErrorFamily::StudentT { scale, df } => {
                let t = StudentT::new(df)
                    .map_err(|e| Error::Parameter(format!("Student t with df {df}: {e}")))?;
                scale * t.sample(rng)
            }
        })
    }

    /// The `tau`-quantile of the error law.
    pub fn quantile(&self, tau: f64) -> f64 {
        match *self {
            ErrorFamily::Normal { sd } => sd * Normal::standard().inverse_cdf(tau),
            ErrorFamily::StudentT { scale, df } => {
                if (df - 2.0).abs() < 1e-12 {
                    // closed form for two degrees of freedom
                    scale * (2.0 * tau - 1.0) / (2.0 * tau * (1.0 - tau)).sqrt()
                } else {
                    scale
                        * statrs::distribution::StudentsT::new(0.0, 1.0, df)
                            .map(|d| d.inverse_cdf(tau))
                            .unwrap_or(f64::NAN)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub n_test: usize,
    pub error: ErrorFamily,
    pub taus: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl SimDesign {
    /// Ten covariates, 100 training and 10 000 test points, 20 replicates
    /// at the median.
    pub fn desk(error: ErrorFamily, seed: u64) -> Self {
        Self {
            n: 100,
            p: 10,
            n_test: 10_000,
            error,
            taus: vec![0.5],
            replicates: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 5 {
            return Err(Error::Config(format!(
                "the generator needs at least 5 covariates, got {}",
                self.p
            )));
        }
        if self.n == 0 || self.n_test == 0 {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Config(format!("quantile level {t} outside (0, 1)")));
        }
        Ok(())
    }
}

/// True component `f_j` (1-based `j`).
pub fn true_components(j: usize, x: f64) -> Result<f64> {
    use std::f64::consts::PI;
    Ok(match j {
        0 => return Err(Error::Domain("components are numbered from 1".into())),
        1 => {
            let s = (2.0 * PI * x).sin();
            s / (2.0 - s)
        }
        2 => 5.0 * x * (1.0 - x),
        3 => 2.0 * x,
        4 => x,
        5 => -x,
        _ => 0.0,
    })
}

/// Effect types of the generator's components.
pub fn truth_labels(p: usize) -> Vec<Label> {
    (1..=p)
        .map(|j| match j {
            1 | 2 => Label::Nonlinear,
            3..=5 => Label::Linear,
            _ => Label::Zero,
        })
        .collect()
}

/// `n x p` covariates: AR(1) Gaussians with correlation `rho^|j1 - j2|`,
/// mapped through the standard normal cdf.
pub fn generate_covariates(n: usize, p: usize, rng: &mut RngHandle) -> DMatrix<f64> {
    let phi = Normal::standard();
    let innov = (1.0 - COVARIATE_RHO * COVARIATE_RHO).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut z = standard_normal(rng);
        for j in 0..p {
            if j > 0 {
                z = COVARIATE_RHO * z + innov * standard_normal(rng);
            }
            x[(i, j)] = phi.cdf(z);
        }
    }
    x
}

/// Noise-free mean `sum_j f_j(x_ij)` of each row.
pub fn signal(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(x.nrows(), |i, _| {
        (0..x.ncols())
            .map(|j| true_components(j + 1, x[(i, j)]).expect("j >= 1"))
            .sum()
    })
}

/// Responses `sum_j f_j(x_ij) + (0.5 + x_i2) eps_i`.
pub fn generate_response(
    x: &DMatrix<f64>,
    family: ErrorFamily,
    rng: &mut RngHandle,
) -> Result<DVector<f64>> {
    let mut y = signal(x);
    for i in 0..x.nrows() {
        y[i] += (0.5 + x[(i, 1)]) * family.sample(rng)?;
    }
    Ok(y)
}

/// Purposes of the independent data streams of one replicate.
#[derive(Debug, Clone, Copy)]
enum DataStream {
    TrainCovariates = 0,
    TrainErrors = 1,
    TestCovariates = 2,
    TestErrors = 3,
}

fn data_rng(seed: u64, replicate: usize, purpose: DataStream) -> RngHandle {
    RngHandle::new(seed, ((replicate as u64) << 8) | purpose as u64)
}

fn chain_rng(seed: u64, replicate: usize, engine: EngineVariant, tau_index: usize) -> RngHandle {
    let e = EngineVariant::ALL
        .iter()
        .position(|v| *v == engine)
        .unwrap_or(0) as u64;
    RngHandle::new(
        seed,
        (1 << 40) | ((replicate as u64) << 16) | (e << 8) | tau_index as u64,
    )
}

/// Training set of replicate `replicate`, with truth labels attached.
///
/// Covariates and errors come from separate streams, so the covariates do
/// not depend on the error family.
pub fn generate_dataset(design: &SimDesign, replicate: usize) -> Result<Dataset> {
    design.validate()?;
    let x = generate_covariates(
        design.n,
        design.p,
        &mut data_rng(design.seed, replicate, DataStream::TrainCovariates),
    );
    let y = generate_response(
        &x,
        design.error,
        &mut data_rng(design.seed, replicate, DataStream::TrainErrors),
    )?;
    let mut data = Dataset::from_parts(x, y)?;
    data.truth = Some(truth_labels(design.p));
    Ok(data)
}

/// Fresh test set of replicate `replicate`.
pub fn generate_test_set(
    design: &SimDesign,
    replicate: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let x = generate_covariates(
        design.n_test,
        design.p,
        &mut data_rng(design.seed, replicate, DataStream::TestCovariates),
    );
    let y = generate_response(
        &x,
        design.error,
        &mut data_rng(design.seed, replicate, DataStream::TestErrors),
    )?;
    Ok((x, y))
}

fn centered(v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - m).collect()
}

/// Metrics of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub engine: EngineVariant,
    pub tau: f64,
    /// `sqrt(ISE)` of `f_1..f_6` followed by the full regression function,
    /// all on the unit grid.
    pub sqrt_ise: Vec<f64>,
    /// `sqrt(ISE)` of `mu + f` against the conditional quantile over test rows.
    pub sqrt_ise_rows: f64,
    pub rmse: f64,
    pub ad: f64,
    pub acl: f64,
    pub selection: SelectionCounts,
    pub labels: Vec<Label>,
}

/// Outcome of one (replicate, engine, tau) job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub engine: EngineVariant,
    pub tau: f64,
    pub result: std::result::Result<ReplicateRecord, String>,
}

fn evaluate(
    design: &SimDesign,
    engine: EngineVariant,
    tau: f64,
    tau_index: usize,
    replicate: usize,
    grid: &KnotGrid,
    config: &GibbsConfig,
) -> Result<ReplicateRecord> {
    let data = generate_dataset(design, replicate)?;
    let (x_test, y_test) = generate_test_set(design, replicate)?;
    let eng = build_engine(engine, &data, grid, tau, config)?;
    let fit = eng.run(&mut chain_rng(design.seed, replicate, engine, tau_index))?;
    let tau = fit.tau;
    // mean regression targets the (symmetric) error mean
    let shift = if engine.is_quantile() {
        design.error.quantile(tau)
    } else {
        0.0
    };

    let t = unit_grid(ISE_GRID);
    let mut sqrt_ise = Vec::with_capacity(REPORTED_COMPONENTS + 1);
    // pointwise error of the sum of all components on the grid
    let mut total_err = vec![0.0; t.len()];
    for j in 0..design.p {
        let est = centered(fit.component_curve(j, &t));
        let truth = centered(
            t.iter()
                .map(|&u| {
                    let heterosced = if j == 1 { shift * u } else { 0.0 };
                    true_components(j + 1, u).map(|f| f + heterosced)
                })
                .collect::<Result<Vec<_>>>()?,
        );
        if j < REPORTED_COMPONENTS {
            sqrt_ise.push(ise(&est, &truth)?.sqrt());
        }
        for (acc, (a, b)) in total_err.iter_mut().zip(est.iter().zip(&truth)) {
            *acc += a - b;
        }
    }
    let zeros = vec![0.0; t.len()];
    sqrt_ise.push(ise(&total_err, &zeros)?.sqrt());

    // the same function, intercept included, over the first T test rows
    let rows = ISE_GRID.min(design.n_test);
    let x_eval = x_test.rows(0, rows).into_owned();
    let f_hat = fit.predict(&x_eval)?;
    let f_sig = signal(&x_eval);
    let f_true: Vec<f64> = (0..rows)
        .map(|i| f_sig[i] + (0.5 + x_eval[(i, 1)]) * shift)
        .collect();
    let sqrt_ise_rows = ise(&f_hat, &f_true)?.sqrt();

    let y_hat = fit.predict(&x_test)?;
    let errs = test_errors(&y_hat, y_test.as_slice())?;
    let loss = acl(&y_hat, y_test.as_slice(), tau)?;
    let labels: Vec<Label> = fit.labels().iter().map(|l| l.label).collect();
    let selection = selection_counts(&labels, &truth_labels(design.p))?;
    Ok(ReplicateRecord {
        replicate,
        engine,
        tau,
        sqrt_ise,
        sqrt_ise_rows,
        rmse: errs.rmse,
        ad: errs.ad,
        acl: loss,
        selection,
        labels,
    })
}

/// Mean and standard deviation of one metric over the successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    /// Fewer successful replicates than requested.
    pub incomplete: bool,
}

impl Cell {
    fn from_values(values: &[f64], requested: usize) -> Self {
        let n = values.len();
        let mean = if n > 0 {
            values.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            sd,
            n,
            incomplete: n < requested,
        }
    }
}

/// Names of the aggregated metrics, in table order.
pub fn metric_names(p: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=REPORTED_COMPONENTS.min(p))
        .map(|j| format!("sqrt_ise_f{j}"))
        .collect();
    names.extend(
        [
            "sqrt_ise_f",
            "sqrt_ise_f_rows",
            "rmse",
            "ad",
            "acl",
            "selected_nonzero",
            "correct_nonzero",
            "selected_linear",
            "correct_linear",
        ]
        .map(String::from),
    );
    names
}

fn metric_values(r: &ReplicateRecord) -> Vec<f64> {
    let mut v = r.sqrt_ise.clone();
    v.extend([
        r.sqrt_ise_rows,
        r.rmse,
        r.ad,
        r.acl,
        r.selection.selected_nonzero as f64,
        r.selection.correct_nonzero as f64,
        r.selection.selected_linear as f64,
        r.selection.correct_linear as f64,
    ]);
    v
}

/// Aggregated table for one (engine, tau) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub engine: EngineVariant,
    pub tau: f64,
    pub cells: BTreeMap<String, Cell>,
    pub failures: Vec<String>,
}

impl AggregateRow {
    pub fn get(&self, metric: &str) -> Option<&Cell> {
        self.cells.get(metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub design: SimDesign,
    pub outcomes: Vec<ReplicateOutcome>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn aggregate(&self, engine: EngineVariant, tau: f64) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.engine == engine && (a.tau - tau).abs() < 1e-12)
    }
}

/// Worker count from `BQPLAM_THREADS`, when set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("BQPLAM_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

/// Fits every engine at every quantile level on every replicate.
///
/// `BPLAM` is fitted once per replicate regardless of the quantile list.
/// Failed jobs are kept as outcomes with their error message and make the
/// affected aggregate cells incomplete.
pub fn run_experiment(
    design: &SimDesign,
    engines: &[EngineVariant],
    grid: &KnotGrid,
    config: &GibbsConfig,
) -> Result<ExperimentResult> {
    design.validate()?;
    config.validate()?;
    let mut jobs = Vec::new();
    for r in 0..design.replicates {
        for &e in engines {
            if e.is_quantile() {
                for (k, &tau) in design.taus.iter().enumerate() {
                    jobs.push((r, e, tau, k));
                }
            } else {
                jobs.push((r, e, 0.5, 0));
            }
        }
    }
    let work = || -> Vec<ReplicateOutcome> {
        jobs.par_iter()
            .map(|&(r, e, tau, k)| {
                let result = evaluate(design, e, tau, k, r, grid, config).map_err(|err| {
                    log::warn!("replicate {r}, {e} at tau {tau} failed: {err}");
                    err.to_string()
                });
                ReplicateOutcome {
                    replicate: r,
                    engine: e,
                    tau,
                    result,
                }
            })
            .collect()
    };
    let outcomes = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let names = metric_names(design.p);
    let mut aggregates = Vec::new();
    let mut keys: Vec<(EngineVariant, f64)> = Vec::new();
    for o in &outcomes {
        if !keys.iter().any(|(e, t)| *e == o.engine && *t == o.tau) {
            keys.push((o.engine, o.tau));
        }
    }
    for (engine, tau) in keys {
        let group: Vec<&ReplicateOutcome> = outcomes
            .iter()
            .filter(|o| o.engine == engine && o.tau == tau)
            .collect();
        let ok: Vec<Vec<f64>> = group
            .iter()
            .filter_map(|o| o.result.as_ref().ok().map(metric_values))
            .collect();
        let failures = group
            .iter()
            .filter_map(|o| {
                o.result
                    .as_ref()
                    .err()
                    .map(|e| format!("replicate {}: {e}", o.replicate))
            })
            .collect();
        let cells = names
            .iter()
            .enumerate()
            .map(|(m, name)| {
                let vals: Vec<f64> = ok.iter().map(|v| v[m]).collect();
                (name.clone(), Cell::from_values(&vals, design.replicates))
            })
            .collect();
        aggregates.push(AggregateRow {
            engine,
            tau,
            cells,
            failures,
        });
    }
    Ok(ExperimentResult {
        design: design.clone(),
        outcomes,
        aggregates,
    })
}
