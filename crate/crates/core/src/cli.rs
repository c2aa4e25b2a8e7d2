//! Command-line entry points.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{GibbsConfig, IndicatorPrior, PriorConfig};
use crate::io::{emit_summary, ingest_csv, write_dataset, Dataset, IngestOptions, RunMeta};
use crate::samplers::RngHandle;
use crate::sim::{
    generate_dataset, generate_test_set, metric_names, run_experiment, ErrorFamily,
    ExperimentResult, SimDesign,
};
use crate::spline::KnotGrid;
use crate::variants::{build_engine, EngineVariant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "bqplam",
    version,
    about = "Bayesian quantile regression for partially linear additive models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one data set with one engine at each requested quantile level.
    Fit(FitArgs),
    /// Write a data set drawn from the simulation generator.
    Simulate(SimulateArgs),
    /// Run replicate experiments and write aggregate tables.
    ReplicateTable(TableArgs),
}

#[derive(Debug, Clone, Args)]
struct ChainArgs {
    /// Total sweeps, burn-in included.
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 10_000)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Number of equally spaced internal knots.
    #[arg(long, default_value_t = 4)]
    knots: usize,
    /// Degree of the truncated power basis.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Shape of every inverse-gamma hyperprior.
    #[arg(long, default_value_t = 0.5)]
    a1: f64,
    /// Rate of every inverse-gamma hyperprior.
    #[arg(long, default_value_t = 0.5)]
    a2: f64,
    /// Independent Bernoulli(pi) indicator prior instead of the size-uniform one.
    #[arg(long)]
    bernoulli_pi: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl ChainArgs {
    fn gibbs(&self, keep_traces: bool) -> Result<GibbsConfig> {
        let mut priors = PriorConfig::new(self.a1, self.a2)?;
        if let Some(pi) = self.bernoulli_pi {
            priors = priors.with_indicator(IndicatorPrior::Bernoulli(pi))?;
        }
        let cfg = GibbsConfig {
            iterations: self.iters,
            burn_in: self.burnin,
            thin: self.thin,
            priors,
            keep_traces,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn grid(&self) -> Result<KnotGrid> {
        KnotGrid::equally_spaced(self.degree, self.knots)
    }
}

fn parse_tau(s: &str) -> std::result::Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(format!("quantile level {t} must lie in (0, 1)"))
    }
}

fn parse_engine(s: &str) -> std::result::Result<EngineVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Response column (default: last column).
    #[arg(long)]
    response: Option<String>,
    #[arg(long, default_value = "BQPLAM", value_parser = parse_engine)]
    engine: EngineVariant,
    /// Quantile level; repeat for several.
    #[arg(long = "tau", value_parser = parse_tau)]
    taus: Vec<f64>,
    /// Covariate allowed only a linear or zero effect; repeatable.
    #[arg(long = "force-linear")]
    force_linear: Vec<String>,
    /// Use covariates as given (they must already lie in [0, 1]).
    #[arg(long)]
    no_standardize: bool,
    /// Also write per-draw traces.
    #[arg(long)]
    traces: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ErrorArg {
    Normal,
    T,
}

impl ErrorArg {
    fn family(self) -> ErrorFamily {
        match self {
            ErrorArg::Normal => ErrorFamily::normal(),
            ErrorArg::T => ErrorFamily::student_t(),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    /// Also write a test set of this size.
    #[arg(long, default_value_t = 0)]
    n_test: usize,
    #[arg(long, value_enum, default_value_t = ErrorArg::Normal)]
    error: ErrorArg,
    /// Replicate index (selects the random streams).
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TableArgs {
    /// Engine to include; repeat for several (default: all five).
    #[arg(long = "engine", value_parser = parse_engine)]
    engines: Vec<EngineVariant>,
    #[arg(long = "tau", value_parser = parse_tau)]
    taus: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ErrorArg::Normal)]
    error: ErrorArg,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
    #[arg(long)]
    out: PathBuf,
    /// Total sweeps per fit.
    #[arg(long, default_value_t = 5_000)]
    iters: usize,
    #[arg(long, default_value_t = 2_500)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 4)]
    knots: usize,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Parses `argv` (program name first), runs the command, returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => run_fit(&a),
        Command::Simulate(a) => run_simulate(&a),
        Command::ReplicateTable(a) => run_table(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            EXIT_RUNTIME
        }
    }
}

fn tau_dir(engine: EngineVariant, tau: f64) -> String {
    format!("{}_tau{tau}", engine.tag())
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let options = IngestOptions {
        response: a.response.clone(),
        standardize: !a.no_standardize,
        force_linear: a.force_linear.clone(),
    };
    let data = ingest_csv(&a.input, &options)?;
    let grid = a.chain.grid()?;
    let config = a.chain.gibbs(a.traces)?;
    let mut taus = if a.taus.is_empty() {
        vec![0.5]
    } else {
        a.taus.clone()
    };
    if !a.engine.is_quantile() {
        taus.truncate(1);
    }
    for (k, &tau) in taus.iter().enumerate() {
        let engine = build_engine(a.engine, &data, &grid, tau, &config)?;
        let stream = k as u64;
        let fit = engine.run(&mut RngHandle::new(a.chain.seed, stream))?;
        let meta = RunMeta::new(
            &fit,
            &data,
            &grid,
            &config,
            a.chain.seed,
            stream,
            Some(a.input.display().to_string()),
        );
        let dir = a.out.join(tau_dir(a.engine, fit.tau));
        let files = emit_summary(&fit, &meta, &dir)?;
        log::info!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let design = SimDesign {
        n: a.n,
        p: a.p,
        n_test: a.n_test.max(1),
        error: a.error.family(),
        taus: vec![0.5],
        replicates: a.replicate + 1,
        seed: a.seed,
    };
    let data = generate_dataset(&design, a.replicate)?;
    write_dataset(&data, &a.out.join("dataset.csv"))?;
    if a.n_test > 0 {
        let (x, y) = generate_test_set(&design, a.replicate)?;
        let mut test = Dataset::from_parts(x, y)?;
        test.truth = data.truth.clone();
        write_dataset(&test, &a.out.join("test.csv"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TableMeta<'a> {
    program_version: &'a str,
    design: &'a SimDesign,
    engines: Vec<&'static str>,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    degree: usize,
    knots: Vec<f64>,
    priors: PriorConfig,
}

fn run_table(a: &TableArgs) -> Result<()> {
    let engines = if a.engines.is_empty() {
        EngineVariant::ALL.to_vec()
    } else {
        a.engines.clone()
    };
    let design = SimDesign {
        n: a.n,
        p: a.p,
        n_test: a.n_test,
        error: a.error.family(),
        taus: if a.taus.is_empty() {
            vec![0.5]
        } else {
            a.taus.clone()
        },
        replicates: a.replicates,
        seed: a.seed,
    };
    let grid = KnotGrid::equally_spaced(a.degree, a.knots)?;
    let mut config = GibbsConfig::new(a.iters, a.burnin);
    config.thin = a.thin;
    config.validate()?;
    let result = run_experiment(&design, &engines, &grid, &config)?;
    write_tables(&result, &a.out)?;
    let meta = TableMeta {
        program_version: env!("CARGO_PKG_VERSION"),
        design: &design,
        engines: engines.iter().map(EngineVariant::tag).collect(),
        iterations: config.iterations,
        burn_in: config.burn_in,
        thin: config.thin,
        degree: grid.degree(),
        knots: grid.knots().to_vec(),
        priors: config.priors,
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Config(format!("serializing metadata: {e}")))?;
    let path = a.out.join("run_meta.json");
    fs::write(&path, format!("{json}\n")).map_err(|e| Error::io(&path, e))
}

/// Writes `replicates.csv`, `summary.csv` and a plain-text `tables.txt`.
pub fn write_tables(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = metric_names(result.design.p);

    let mut rep = String::from("# bqplam-replicates v1\n");
    rep.push_str("replicate,engine,tau,status,");
    rep.push_str(&names.join(","));
    rep.push('\n');
    for o in &result.outcomes {
        let _ = write!(rep, "{},{},{},", o.replicate, o.engine, o.tau);
        match &o.result {
            Ok(r) => {
                let mut vals: Vec<String> = r.sqrt_ise.iter().map(f64::to_string).collect();
                vals.extend([r.sqrt_ise_rows, r.rmse, r.ad, r.acl].map(|v| v.to_string()));
                let s = r.selection;
                vals.extend(
                    [
                        s.selected_nonzero,
                        s.correct_nonzero,
                        s.selected_linear,
                        s.correct_linear,
                    ]
                    .map(|v| v.to_string()),
                );
                let _ = writeln!(rep, "ok,{}", vals.join(","));
            }
            Err(e) => {
                let msg = e.replace(['"', ','], ";");
                let _ = writeln!(rep, "failed: {msg}{}", ",".repeat(names.len()));
            }
        }
    }
    let path = dir.join("replicates.csv");
    fs::write(&path, rep).map_err(|e| Error::io(&path, e))?;

    let mut sum = String::from("# bqplam-summary v1\nengine,tau,metric,mean,sd,n,incomplete\n");
    let mut txt = String::new();
    let _ = writeln!(
        txt,
        "{} errors, n = {}, p = {}, {} replicates (mean with sd in parentheses; * = incomplete)",
        result.design.error.name(),
        result.design.n,
        result.design.p,
        result.design.replicates
    );
    let _ = writeln!(txt, "{:<10}{:>6}  {}", "engine", "tau", names.join("  "));
    for agg in &result.aggregates {
        let mut line = format!("{:<10}{:>6}", agg.engine.tag(), agg.tau);
        for name in &names {
            let c = agg.cells[name];
            let _ = writeln!(
                sum,
                "{},{},{},{},{},{},{}",
                agg.engine, agg.tau, name, c.mean, c.sd, c.n, c.incomplete
            );
            let mark = if c.incomplete { "*" } else { "" };
            let _ = write!(line, "  {:.3}({:.3}){mark}", c.mean, c.sd);
        }
        let _ = writeln!(txt, "{line}");
        for f in &agg.failures {
            let _ = writeln!(txt, "    failed {f}");
        }
    }
    let path = dir.join("summary.csv");
    fs::write(&path, sum).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("tables.txt");
    fs::write(&path, txt).map_err(|e| Error::io(&path, e))
}
