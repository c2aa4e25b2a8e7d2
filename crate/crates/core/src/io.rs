//! Data ingestion and result files.
//!
//! Every file written here starts with a `#`-comment line naming its schema
//! and version; readers skip comment lines.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{GibbsConfig, Moments, PriorConfig};
use crate::metrics::{unit_grid, ComponentLabel, Label};
use crate::spline::KnotGrid;
use crate::variants::FittedModel;

pub const DATASET_SCHEMA: &str = "# bqplam-dataset v1";
pub const SELECTION_SCHEMA: &str = "# bqplam-selection v1";
pub const COEFFICIENT_SCHEMA: &str = "# bqplam-coefficients v1";
pub const CURVE_SCHEMA: &str = "# bqplam-curves v1";
pub const TRACE_SCHEMA: &str = "# bqplam-traces v1";
/// Grid points per covariate in `fitted_curves.csv`.
pub const CURVE_POINTS: usize = 200;
/// Value at which the other covariates are held in `fitted_curves.csv`.
pub const CURVE_HOLD: f64 = 0.5;

/// Affine map `x -> (x - min) / (max - min)` applied to a covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub min: f64,
    pub max: f64,
}

impl ColumnScaling {
    pub fn forward(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn back(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

/// Covariates on `[0, 1]` and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub response: String,
    /// `n x p`, every entry in `[0, 1]`.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Present when the columns were standardized on ingestion.
    pub scaling: Option<Vec<ColumnScaling>>,
    pub force_linear: Vec<bool>,
    /// Columns with exactly two distinct values.
    pub binary_candidates: Vec<bool>,
    /// True effect types, when known (simulated data).
    pub truth: Option<Vec<Label>>,
}

impl Dataset {
    /// Wraps an in-memory design with default names `x1..xp` and `y`.
    pub fn from_parts(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "{} covariate rows for {} responses",
                x.nrows(),
                y.len()
            )));
        }
        let p = x.ncols();
        let binary_candidates = (0..p)
            .map(|j| distinct_count(x.column(j).iter()) == 2)
            .collect();
        Ok(Self {
            names: (1..=p).map(|j| format!("x{j}")).collect(),
            response: "y".into(),
            x,
            y,
            scaling: None,
            force_linear: vec![false; p],
            binary_candidates,
            truth: None,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    /// Marks the named columns as linear-only.
    pub fn set_force_linear(&mut self, names: &[String]) -> Result<()> {
        for name in names {
            let j = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("no covariate named '{name}'")))?;
            self.force_linear[j] = true;
        }
        Ok(())
    }
}

fn distinct_count<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    values.map(|v| v.to_bits()).collect::<BTreeSet<_>>().len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Response column; the last column when `None`.
    pub response: Option<String>,
    pub standardize: bool,
    pub force_linear: Vec<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            response: None,
            standardize: true,
            force_linear: Vec::new(),
        }
    }
}

fn is_missing(field: &str) -> bool {
    matches!(
        field.trim(),
        "" | "NA" | "na" | "NaN" | "nan" | "null" | "."
    )
}

fn map_csv_error(path: &Path, err: csv::Error) -> Error {
    match err.kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => Error::Parse {
            line: pos.as_ref().map_or(0, |p| p.line()),
            column: (*len as usize).min(*expected_len as usize) + 1,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        _ => Error::csv(path, err),
    }
}

/// Reads a numeric CSV with a header row.
///
/// Lines starting with `#` are skipped; a `# truth=` comment restores the
/// effect labels written by [`write_dataset`].
pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let truth = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# truth="))
        .map(|s| {
            s.split(',')
                .map(|t| {
                    Label::parse(t.trim())
                        .ok_or_else(|| Error::Data(format!("unknown truth label '{t}'")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| map_csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(Error::Data(format!(
            "{}: need a response and at least one covariate column",
            path.display()
        )));
    }
    let response_idx = match &options.response {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("no response column named '{name}'")))?,
        None => header.len() - 1,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut missing_rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| map_csv_error(path, e))?;
        let line = record.position().map_or(k as u64 + 2, |p| p.line());
        if record.iter().any(is_missing) {
            missing_rows.push(line);
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: c + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: c + 1,
                    message: format!("'{field}' is not finite"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if !missing_rows.is_empty() {
        let list: Vec<String> = missing_rows.iter().map(u64::to_string).collect();
        return Err(Error::Data(format!(
            "{}: missing values on line(s) {}",
            path.display(),
            list.join(", ")
        )));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }

    let n = rows.len();
    let cov_idx: Vec<usize> = (0..header.len()).filter(|c| *c != response_idx).collect();
    let p = cov_idx.len();
    let mut x = DMatrix::from_fn(n, p, |i, j| rows[i][cov_idx[j]]);
    let y = DVector::from_fn(n, |i, _| rows[i][response_idx]);
    let names: Vec<String> = cov_idx.iter().map(|c| header[*c].clone()).collect();

    let mut scaling = Vec::with_capacity(p);
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j);
        let min = col.min();
        let max = col.max();
        if max <= min {
            return Err(Error::Data(format!("covariate '{name}' is constant")));
        }
        scaling.push(ColumnScaling { min, max });
        if !options.standardize && (min < 0.0 || max > 1.0) {
            return Err(Error::Data(format!(
                "covariate '{name}' leaves [0, 1] (range {min}..{max}); enable standardization"
            )));
        }
    }
    let scaling = if options.standardize {
        for (j, s) in scaling.iter().enumerate() {
            for v in x.column_mut(j).iter_mut() {
                *v = s.forward(*v).clamp(0.0, 1.0);
            }
        }
        Some(scaling)
    } else {
        None
    };

    if let Some(t) = &truth {
        if t.len() != p {
            return Err(Error::Data(format!(
                "{} truth labels for {p} covariates",
                t.len()
            )));
        }
    }
    let binary_candidates: Vec<bool> = (0..p)
        .map(|j| distinct_count(x.column(j).iter()) == 2)
        .collect();
    for (name, b) in names.iter().zip(&binary_candidates) {
        if *b && !options.force_linear.contains(name) {
            log::info!("covariate '{name}' is binary; consider --force-linear {name}");
        }
    }
    let mut data = Dataset {
        names,
        response: header[response_idx].clone(),
        x,
        y,
        scaling,
        force_linear: vec![false; p],
        binary_candidates,
        truth,
    };
    data.set_force_linear(&options.force_linear)?;
    Ok(data)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_body(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| Error::csv("<buffer>", e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv("<buffer>", e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes covariates (as stored) and response; [`ingest_csv`] without
/// standardization reads it back exactly.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut text = String::from(DATASET_SCHEMA);
    text.push('\n');
    if let Some(t) = &data.truth {
        let labels: Vec<&str> = t.iter().map(Label::as_str).collect();
        text.push_str(&format!("# truth={}\n", labels.join(",")));
    }
    let mut header = data.names.clone();
    header.push(data.response.clone());
    let rows = (0..data.n_obs()).map(|i| {
        let mut r: Vec<String> = data.x.row(i).iter().map(|v| v.to_string()).collect();
        r.push(data.y[i].to_string());
        r
    });
    text.push_str(&csv_body(&header, rows)?);
    write_text(path, &text)
}

/// Everything needed to repeat a fit bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub program_version: String,
    pub engine: String,
    pub tau: f64,
    pub seed: u64,
    pub stream: u64,
    pub degree: usize,
    pub knots: Vec<f64>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub priors: PriorConfig,
    pub input: Option<String>,
    pub response: String,
    pub covariates: Vec<String>,
    pub standardize: bool,
    pub scaling: Option<Vec<ColumnScaling>>,
    pub force_linear: Vec<String>,
    pub n_obs: usize,
    pub n_draws: usize,
    /// Ridge on the linear direction of a combined penalty, if any.
    pub penalty_ridge: Option<f64>,
    pub label_rule: String,
}

impl RunMeta {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fit: &FittedModel,
        data: &Dataset,
        grid: &KnotGrid,
        config: &GibbsConfig,
        seed: u64,
        stream: u64,
        input: Option<String>,
    ) -> Self {
        Self {
            program_version: env!("CARGO_PKG_VERSION").into(),
            engine: fit.variant.tag().into(),
            tau: fit.tau,
            seed,
            stream,
            degree: grid.degree(),
            knots: grid.knots().to_vec(),
            iterations: config.iterations,
            burn_in: config.burn_in,
            thin: config.thin,
            priors: config.priors,
            input,
            response: data.response.clone(),
            covariates: data.names.clone(),
            standardize: data.scaling.is_some(),
            scaling: data.scaling.clone(),
            force_linear: data
                .names
                .iter()
                .zip(&data.force_linear)
                .filter(|(_, f)| **f)
                .map(|(n, _)| n.clone())
                .collect(),
            n_obs: data.n_obs(),
            n_draws: fit.summary.n_draws,
            penalty_ridge: fit.penalty_ridge,
            label_rule:
                "largest of P(nonlinear), P(linear), P(zero); ties favour zero, then linear".into(),
        }
    }
}

fn fmt_moments(m: &Moments) -> [String; 2] {
    [m.mean.to_string(), m.sd.to_string()]
}

/// Writes `selection_probs.csv`, `coefficients.csv`, `fitted_curves.csv`,
/// `traces.csv` (when traces were kept) and `run_meta.json` into `dir`.
pub fn emit_summary(fit: &FittedModel, meta: &RunMeta, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = &meta.covariates;
    let mut written = Vec::new();
    let strs = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    let path = dir.join("selection_probs.csv");
    let rows = fit.labels().into_iter().enumerate().map(|(j, l)| {
        vec![
            names[j].clone(),
            l.p_nonlinear.to_string(),
            l.p_linear.to_string(),
            l.p_zero.to_string(),
            l.label.as_str().to_string(),
        ]
    });
    let body = csv_body(
        &strs(&["covariate", "p_nonlinear", "p_linear", "p_zero", "label"]),
        rows,
    )?;
    write_text(&path, &format!("{SELECTION_SCHEMA}\n{body}"))?;
    written.push(path);

    let path = dir.join("coefficients.csv");
    let s = &fit.summary;
    let mut rows = Vec::new();
    let push = |rows: &mut Vec<Vec<String>>, param: &str, cov: &str, idx: usize, m: &Moments| {
        let [mean, sd] = fmt_moments(m);
        rows.push(vec![param.into(), cov.into(), idx.to_string(), mean, sd]);
    };
    push(&mut rows, "mu", "", 0, &s.mu);
    push(&mut rows, "delta0", "", 0, &s.delta0);
    for (j, m) in s.alpha.iter().enumerate() {
        push(&mut rows, "alpha", &names[j], 0, m);
    }
    for (j, b) in s.beta.iter().enumerate() {
        for (k, m) in b.iter().enumerate() {
            push(&mut rows, "beta", &names[j], k, m);
        }
    }
    let body = csv_body(
        &strs(&["parameter", "covariate", "index", "mean", "sd"]),
        rows,
    )?;
    write_text(&path, &format!("{COEFFICIENT_SCHEMA}\n{body}"))?;
    written.push(path);

    let path = dir.join("fitted_curves.csv");
    let grid = unit_grid(CURVE_POINTS);
    let held: Vec<f64> = (0..fit.n_covariates())
        .map(|j| fit.component_value(j, CURVE_HOLD))
        .collect();
    let held_total: f64 = held.iter().sum();
    let mut rows = Vec::new();
    for j in 0..fit.n_covariates() {
        for &t in &grid {
            let f = fit.component_value(j, t);
            let surface = fit.intercept() + held_total - held[j] + f;
            let original = meta.scaling.as_ref().map_or(t, |sc| sc[j].back(t));
            rows.push(vec![
                names[j].clone(),
                t.to_string(),
                original.to_string(),
                f.to_string(),
                surface.to_string(),
            ]);
        }
    }
    let body = csv_body(
        &strs(&["covariate", "x", "x_original", "f_hat", "surface"]),
        rows,
    )?;
    write_text(&path, &format!("{CURVE_SCHEMA}\n{body}"))?;
    written.push(path);

    if let Some(traces) = &s.traces {
        let path = dir.join("traces.csv");
        let mut header = strs(&["iteration", "mu", "delta0"]);
        for prefix in ["alpha", "gamma_alpha", "gamma_beta"] {
            header.extend(names.iter().map(|n| format!("{prefix}:{n}")));
        }
        let rows = traces.iter().map(|r| {
            let mut row = vec![
                r.iteration.to_string(),
                r.mu.to_string(),
                r.delta0.to_string(),
            ];
            row.extend(r.alpha.iter().map(f64::to_string));
            row.extend(r.gamma_alpha.iter().map(|g| u8::from(*g).to_string()));
            row.extend(r.gamma_beta.iter().map(|g| u8::from(*g).to_string()));
            row
        });
        let body = csv_body(&header, rows)?;
        write_text(&path, &format!("{TRACE_SCHEMA}\n{body}"))?;
        written.push(path);
    }

    let path = dir.join("run_meta.json");
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Config(format!("serializing run metadata: {e}")))?;
    write_text(&path, &format!("{json}\n"))?;
    written.push(path);
    Ok(written)
}

fn read_rows(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_csv_error(path, e))
}

fn field_f64(rec: &csv::StringRecord, c: usize) -> Result<f64> {
    let s = rec.get(c).unwrap_or("");
    s.parse().map_err(|_| Error::Parse {
        line: rec.position().map_or(0, |p| p.line()),
        column: c + 1,
        message: format!("'{s}' is not a number"),
    })
}

/// Reads `selection_probs.csv` back as `(covariate, label)` pairs.
pub fn read_selection_probs(path: &Path) -> Result<Vec<(String, ComponentLabel)>> {
    read_rows(path)?
        .iter()
        .map(|r| {
            let label = Label::parse(r.get(4).unwrap_or(""))
                .ok_or_else(|| Error::Data(format!("{}: bad label", path.display())))?;
            Ok((
                r.get(0).unwrap_or("").to_string(),
                ComponentLabel {
                    label,
                    p_nonlinear: field_f64(r, 1)?,
                    p_linear: field_f64(r, 2)?,
                    p_zero: field_f64(r, 3)?,
                },
            ))
        })
        .collect()
}

/// One row of `coefficients.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub parameter: String,
    pub covariate: String,
    pub index: usize,
    pub moments: Moments,
}

pub fn read_coefficients(path: &Path) -> Result<Vec<CoefficientRow>> {
    read_rows(path)?
        .iter()
        .map(|r| {
            Ok(CoefficientRow {
                parameter: r.get(0).unwrap_or("").to_string(),
                covariate: r.get(1).unwrap_or("").to_string(),
                index: field_f64(r, 2)? as usize,
                moments: Moments {
                    mean: field_f64(r, 3)?,
                    sd: field_f64(r, 4)?,
                },
            })
        })
        .collect()
}

/// Reads `fitted_curves.csv` into `(covariate, x, f_hat)` triples.
pub fn read_fitted_curves(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    read_rows(path)?
        .iter()
        .map(|r| {
            Ok((
                r.get(0).unwrap_or("").to_string(),
                field_f64(r, 1)?,
                field_f64(r, 3)?,
            ))
        })
        .collect()
}
