//! The proposed engine and its four comparison variants.
//!
//! | tag       | likelihood | separate linear basis | select alpha | select beta |
//! |-----------|------------|-----------------------|--------------|-------------|
//! | `BQPLAM`  | ALD        | yes                   | yes          | yes         |
//! | `BPLAM`   | Gaussian   | yes                   | yes          | yes         |
//! | `BQAM_V`  | ALD        | no                    | -            | yes         |
//! | `BQLM_V`  | ALD        | linear terms only     | yes          | -           |
//! | `BQAM_NV` | ALD        | yes                   | no           | no          |

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{run_chain, GibbsConfig, Likelihood, Model, PosteriorSummary};
use crate::io::Dataset;
use crate::metrics::ComponentLabel;
use crate::model::{ComponentDesign, Design, NonlinearBlock, QuantileSpec};
use crate::samplers::RngHandle;
use crate::spline::{CenteredBasis, KnotGrid, SplineSystem};

/// Diagonal ridge on the linear direction of the combined penalty used by
/// `BQAM_V`, whose linear column has no curvature.
pub const COMBINED_RIDGE: f64 = 1e-6;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EngineVariant {
    BQPLAM,
    BPLAM,
    BQAM_V,
    BQLM_V,
    BQAM_NV,
}

impl EngineVariant {
    pub const ALL: [EngineVariant; 5] = [
        EngineVariant::BQPLAM,
        EngineVariant::BPLAM,
        EngineVariant::BQAM_V,
        EngineVariant::BQLM_V,
        EngineVariant::BQAM_NV,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            EngineVariant::BQPLAM => "BQPLAM",
            EngineVariant::BPLAM => "BPLAM",
            EngineVariant::BQAM_V => "BQAM_V",
            EngineVariant::BQLM_V => "BQLM_V",
            EngineVariant::BQAM_NV => "BQAM_NV",
        }
    }

    pub fn uses_mixture_latents(&self) -> bool {
        !matches!(self, EngineVariant::BPLAM)
    }

    pub fn separates_linear_basis(&self) -> bool {
        !matches!(self, EngineVariant::BQAM_V)
    }

    pub fn has_nonlinear_terms(&self) -> bool {
        !matches!(self, EngineVariant::BQLM_V)
    }

    pub fn selection_enabled_alpha(&self) -> bool {
        matches!(
            self,
            EngineVariant::BQPLAM | EngineVariant::BPLAM | EngineVariant::BQLM_V
        )
    }

    pub fn selection_enabled_beta(&self) -> bool {
        matches!(
            self,
            EngineVariant::BQPLAM | EngineVariant::BPLAM | EngineVariant::BQAM_V
        )
    }

    /// Mean regression ignores the quantile level.
    pub fn is_quantile(&self) -> bool {
        self.uses_mixture_latents()
    }
}

impl fmt::Display for EngineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EngineVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        EngineVariant::ALL
            .into_iter()
            .find(|v| v.tag() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown engine '{s}' (expected one of BQPLAM, BPLAM, BQAM_V, BQLM_V, BQAM_NV)"
                ))
            })
    }
}

/// Which centered basis columns a covariate's coefficients multiply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentLayout {
    /// `alpha_j` multiplies column 0.
    pub linear: bool,
    /// `beta_j` multiplies columns `start..`.
    pub nonlinear_start: Option<usize>,
}

/// A configured sampler for one data set, variant and quantile level.
#[derive(Debug, Clone)]
pub struct Engine {
    variant: EngineVariant,
    tau: f64,
    model: Model,
    basis: CenteredBasis,
    layout: Vec<ComponentLayout>,
    config: GibbsConfig,
}

/// Builds the design, penalties and likelihood of `variant` for `data`.
///
/// `tau` is ignored by `BPLAM`, which is recorded as a fit at 0.5.
pub fn build_engine(
    variant: EngineVariant,
    data: &Dataset,
    grid: &KnotGrid,
    tau: f64,
    config: &GibbsConfig,
) -> Result<Engine> {
    config.validate()?;
    let system = SplineSystem::build(&data.x, grid)?;
    let p = system.n_covariates();
    let n = system.n_obs();
    if data.force_linear.len() != p {
        return Err(Error::Dimension(format!(
            "{} force-linear flags for {p} covariates",
            data.force_linear.len()
        )));
    }
    let omega = system.penalty(0).clone();
    let k = omega.nrows();
    let combined_penalty = {
        let mut m = DMatrix::zeros(k + 1, k + 1);
        m.view_mut((1, 1), (k, k)).copy_from(&omega);
        m[(0, 0)] = COMBINED_RIDGE;
        m
    };

    let mut components = Vec::with_capacity(p);
    let mut layout = Vec::with_capacity(p);
    for j in 0..p {
        let linear_col = system.linear_column(j);
        let forced = data.force_linear[j];
        let (comp, lay) = match variant {
            EngineVariant::BQLM_V => (
                ComponentDesign {
                    linear: Some(linear_col.clone()),
                    nonlinear: None,
                },
                ComponentLayout {
                    linear: true,
                    nonlinear_start: None,
                },
            ),
            EngineVariant::BQAM_V if forced => (
                ComponentDesign {
                    linear: Some(linear_col.clone()),
                    nonlinear: None,
                },
                ComponentLayout {
                    linear: true,
                    nonlinear_start: None,
                },
            ),
            EngineVariant::BQAM_V => {
                let mut combined = DMatrix::zeros(n, k + 1);
                combined.set_column(0, linear_col);
                combined
                    .view_mut((0, 1), (n, k))
                    .copy_from(system.nonlinear_design(j));
                (
                    ComponentDesign {
                        linear: None,
                        nonlinear: Some(NonlinearBlock::new(combined, combined_penalty.clone())?),
                    },
                    ComponentLayout {
                        linear: false,
                        nonlinear_start: Some(0),
                    },
                )
            }
            _ => (
                ComponentDesign {
                    linear: Some(linear_col.clone()),
                    nonlinear: Some(NonlinearBlock::new(
                        system.nonlinear_design(j).clone(),
                        omega.clone(),
                    )?),
                },
                ComponentLayout {
                    linear: true,
                    nonlinear_start: Some(1),
                },
            ),
        };
        components.push(comp);
        layout.push(lay);
    }
    let design = Design::new(n, components)?;

    let (likelihood, tau) = if variant.uses_mixture_latents() {
        (Likelihood::AsymmetricLaplace(QuantileSpec::new(tau)?), tau)
    } else {
        (Likelihood::Gaussian, 0.5)
    };
    let model = Model::new(
        data.y.clone(),
        design,
        likelihood,
        config.priors,
        variant.selection_enabled_alpha(),
        variant.selection_enabled_beta(),
        data.force_linear.clone(),
    )?;
    Ok(Engine {
        variant,
        tau,
        model,
        basis: system.basis().clone(),
        layout,
        config: *config,
    })
}

impl Engine {
    pub fn variant(&self) -> EngineVariant {
        self.variant
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &GibbsConfig {
        &self.config
    }

    /// Ridge added to the combined penalty, when the variant needs one.
    pub fn penalty_ridge(&self) -> Option<f64> {
        (self.variant == EngineVariant::BQAM_V).then_some(COMBINED_RIDGE)
    }

    pub fn run(&self, rng: &mut RngHandle) -> Result<FittedModel> {
        let summary = run_chain(&self.model, &self.config, rng)?;
        Ok(FittedModel {
            variant: self.variant,
            tau: self.tau,
            summary,
            basis: self.basis.clone(),
            layout: self.layout.clone(),
            penalty_ridge: self.penalty_ridge(),
        })
    }
}

/// Posterior summaries together with everything needed to evaluate the
/// fitted components at new covariate values.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub variant: EngineVariant,
    pub tau: f64,
    pub summary: PosteriorSummary,
    pub basis: CenteredBasis,
    pub layout: Vec<ComponentLayout>,
    pub penalty_ridge: Option<f64>,
}

impl FittedModel {
    pub fn n_covariates(&self) -> usize {
        self.layout.len()
    }

    pub fn intercept(&self) -> f64 {
        self.summary.mu.mean
    }

    /// Posterior mean of `f_j` at `x` (centered at the training sample).
    pub fn component_value(&self, j: usize, x: f64) -> f64 {
        let b = self.basis.eval(j, x);
        let lay = self.layout[j];
        let mut v = 0.0;
        if lay.linear {
            v += self.summary.alpha[j].mean * b[0];
        }
        if let Some(start) = lay.nonlinear_start {
            v += self.summary.beta[j]
                .iter()
                .zip(&b[start..])
                .map(|(m, bk)| m.mean * bk)
                .sum::<f64>();
        }
        v
    }

    pub fn component_curve(&self, j: usize, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|x| self.component_value(j, *x)).collect()
    }

    /// `mu + sum_j f_j(x_j)` for each row of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_covariates() {
            return Err(Error::Dimension(format!(
                "{} columns for a model with {} covariates",
                x.ncols(),
                self.n_covariates()
            )));
        }
        let mu = self.intercept();
        Ok(x.row_iter()
            .map(|row| {
                mu + row
                    .iter()
                    .enumerate()
                    .map(|(j, v)| self.component_value(j, *v))
                    .sum::<f64>()
            })
            .collect())
    }

    pub fn labels(&self) -> Vec<ComponentLabel> {
        self.summary
            .patterns
            .iter()
            .map(ComponentLabel::from_counts)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn tags_round_trip() {
        for v in EngineVariant::ALL {
            assert_eq!(v.tag().parse::<EngineVariant>().unwrap(), v);
        }
        assert_eq!(
            "bqam-nv".parse::<EngineVariant>().unwrap(),
            EngineVariant::BQAM_NV
        );
        assert!("BQXYZ".parse::<EngineVariant>().is_err());
    }

    #[test]
    fn flag_table() {
        use EngineVariant::*;
        let rows = [
            (BQPLAM, true, true, true, true),
            (BPLAM, false, true, true, true),
            (BQAM_V, true, false, false, true),
            (BQLM_V, true, true, true, false),
            (BQAM_NV, true, true, false, false),
        ];
        for (v, latents, sep, sa, sb) in rows {
            assert_eq!(v.uses_mixture_latents(), latents, "{v}");
            assert_eq!(v.separates_linear_basis(), sep, "{v}");
            assert_eq!(v.selection_enabled_alpha(), sa, "{v}");
            assert_eq!(v.selection_enabled_beta(), sb, "{v}");
        }
    }

    fn toy_data() -> Dataset {
        let n = 30;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 3) * 7 + 1) % 31) as f64 / 30.0);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 2.0 + (6.0 * x[(i, 1)]).sin());
        Dataset::from_parts(x, y).unwrap()
    }

    #[test]
    fn combined_penalty_is_ridged() {
        let data = toy_data();
        let grid = KnotGrid::default();
        let cfg = GibbsConfig::new(10, 5);
        let engine = build_engine(EngineVariant::BQAM_V, &data, &grid, 0.5, &cfg).unwrap();
        let block = engine
            .model()
            .design
            .component(0)
            .nonlinear
            .as_ref()
            .unwrap();
        assert_eq!(block.dim(), grid.n_basis());
        assert_eq!(block.penalty[(0, 0)], COMBINED_RIDGE);
        assert!(block.penalty.row(0).iter().skip(1).all(|v| *v == 0.0));
        let omega = crate::spline::penalty_matrix(&grid).unwrap();
        assert_eq!(block.penalty.view((1, 1), (6, 6)), omega);
        assert!(engine.model().design.component(0).linear.is_none());
        assert_eq!(engine.penalty_ridge(), Some(COMBINED_RIDGE));
    }

    #[test]
    fn bplam_ignores_tau() {
        let data = toy_data();
        let cfg = GibbsConfig::new(10, 5);
        let e = build_engine(EngineVariant::BPLAM, &data, &KnotGrid::default(), 0.1, &cfg).unwrap();
        assert_eq!(e.tau(), 0.5);
        assert!(e.model().quantile().is_none());
        assert!(build_engine(
            EngineVariant::BQPLAM,
            &data,
            &KnotGrid::default(),
            1.5,
            &cfg
        )
        .is_err());
    }

    #[test]
    fn force_linear_pins_nonlinear_indicator() {
        let mut data = toy_data();
        data.force_linear = vec![false, true];
        let mut cfg = GibbsConfig::new(60, 10);
        cfg.keep_traces = true;
        let engine = build_engine(
            EngineVariant::BQPLAM,
            &data,
            &KnotGrid::default(),
            0.5,
            &cfg,
        )
        .unwrap();
        let fit = engine.run(&mut RngHandle::new(3, 0)).unwrap();
        let traces = fit.summary.traces.as_ref().unwrap();
        assert!(traces.iter().all(|r| !r.gamma_beta[1]));
        assert!(fit.summary.beta[1].iter().all(|m| m.mean == 0.0));
    }
}
