//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "spectrum": {"kind": "dirichlet", "J": 16},
//!   "nonlinearity": {"variant": "LINEAR_IN_Y", "params": {"c": 1.0}},
//!   "scheme": "COUPLED_MODIFIED",
//!   "T": 1.0, "N": 64, "eps": 0.1,
//!   "phi": {"kind": "NORM_SQUARED"},
//!   "n_samples": 1000, "master_seed": 0, "output_dir": "out"
//! }
//! ```
//!
//! Optional keys: `x0`, `y0` (coefficient lists, zero-padded to `J`),
//! `dt_list`, `eps_list`, `tau_list`, `oracle`, `refinement`,
//! `drop_coarsest`, `threads`, `empirical_samples`, `empirical_steps`,
//! `sample_index`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::experiments::{McSettings, OracleMode};
use crate::harness::functional::FunctionalSpec;
use crate::integrators::{Problem, RunConfig, SchemeKind, DEFAULT_REFINEMENT};
use crate::nonlinearity::{NonlinearitySpec, DEFAULT_QUADRATURE_ORDER};
use crate::spectral::{SpectralField, SpectrumKind, SpectrumSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub kind: SpectrumKind,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
}

impl SpectrumConfig {
    pub fn build(&self) -> Result<SpectrumSpec> {
        match self.kind {
            SpectrumKind::Dirichlet => {
                if self.lambdas.is_some() {
                    return Err(Error::InvalidConfig("dirichlet spectrum takes only J".into()));
                }
                let j = self
                    .modes
                    .ok_or_else(|| Error::InvalidConfig("spectrum.J is required".into()))?;
                SpectrumSpec::dirichlet(j)
            }
            SpectrumKind::Custom => {
                let l = self
                    .lambdas
                    .clone()
                    .ok_or_else(|| Error::InvalidConfig("custom spectrum needs lambdas".into()))?;
                if let Some(j) = self.modes {
                    if j != l.len() {
                        return Err(Error::DimensionMismatch {
                            expected: j,
                            found: l.len(),
                        });
                    }
                }
                SpectrumSpec::new(l)
            }
        }
    }
}

fn default_order() -> usize {
    DEFAULT_QUADRATURE_ORDER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NonlinearityConfig {
    LinearInY {
        c: f64,
    },
    Affine {
        c_x: f64,
        c_y: f64,
    },
    PointwiseSquare {
        c: f64,
    },
    Saturating {
        c: f64,
        #[serde(default = "default_order")]
        order: usize,
    },
    Sine {
        c: f64,
        #[serde(default = "default_order")]
        order: usize,
    },
}

impl NonlinearityConfig {
    pub fn build(&self) -> Result<NonlinearitySpec> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be finite"))
            }
        };
        Ok(match *self {
            NonlinearityConfig::LinearInY { c } => {
                finite("c", c)?;
                NonlinearitySpec::LinearInY { c }
            }
            NonlinearityConfig::Affine { c_x, c_y } => {
                finite("c_x", c_x)?;
                finite("c_y", c_y)?;
                NonlinearitySpec::Affine { c_x, c_y }
            }
            NonlinearityConfig::PointwiseSquare { c } => {
                finite("c", c)?;
                NonlinearitySpec::PointwiseSquare { c }
            }
            NonlinearityConfig::Saturating { c, order } => {
                finite("c", c)?;
                NonlinearitySpec::saturating(c, order)?
            }
            NonlinearityConfig::Sine { c, order } => {
                finite("c", c)?;
                NonlinearitySpec::sine(c, order)?
            }
        })
    }
}

fn one() -> f64 {
    1.0
}
fn default_steps() -> usize {
    64
}
fn default_eps() -> f64 {
    0.1
}
fn default_samples() -> usize {
    1000
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_refinement() -> usize {
    DEFAULT_REFINEMENT
}
fn default_scheme() -> SchemeKind {
    SchemeKind::CoupledModified
}
fn default_phi() -> FunctionalSpec {
    FunctionalSpec::NormSquared
}
fn default_empirical_steps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spectrum: SpectrumConfig,
    pub nonlinearity: NonlinearityConfig,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeKind,
    #[serde(rename = "T", default = "one")]
    pub t_final: f64,
    #[serde(rename = "N", default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_phi")]
    pub phi: FunctionalSpec,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleMode>,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    #[serde(default)]
    pub drop_coarsest: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_samples: Option<usize>,
    #[serde(default = "default_empirical_steps")]
    pub empirical_steps: usize,
    #[serde(default)]
    pub sample_index: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spectrum: SpectrumConfig {
                kind: SpectrumKind::Dirichlet,
                modes: Some(16),
                lambdas: None,
            },
            nonlinearity: NonlinearityConfig::LinearInY { c: 1.0 },
            scheme: default_scheme(),
            t_final: 1.0,
            steps: default_steps(),
            eps: default_eps(),
            phi: default_phi(),
            n_samples: default_samples(),
            master_seed: 0,
            output_dir: default_output(),
            x0: None,
            y0: None,
            dt_list: None,
            eps_list: None,
            tau_list: None,
            oracle: None,
            refinement: default_refinement(),
            drop_coarsest: false,
            threads: None,
            empirical_samples: None,
            empirical_steps: default_empirical_steps(),
            sample_index: 0,
        }
    }
}

/// Everything a command needs, built and validated from the JSON.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: Problem,
    pub run: RunConfig,
    pub phi: FunctionalSpec,
    pub mc: McSettings,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    fn field(&self, name: &'static str, v: &Option<Vec<f64>>, modes: usize) -> Result<SpectralField> {
        match v {
            None => Ok(SpectralField::zeros(modes)),
            Some(c) if c.len() > modes => Err(Error::InvalidConfig(format!(
                "{name} has {} coefficients but J = {modes}",
                c.len()
            ))),
            Some(c) if c.iter().any(|v| !v.is_finite()) => Err(Error::param(name, "must be finite")),
            Some(c) => Ok(SpectralField::padded(c, modes)),
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let spec = self.spectrum.build()?;
        let modes = spec.modes();
        let x0 = match &self.x0 {
            None => crate::harness::experiments::default_initial(modes).0,
            v => self.field("x0", v, modes)?,
        };
        let y0 = self.field("y0", &self.y0, modes)?;
        let phi = match &self.phi {
            FunctionalSpec::Linear { h, offset } if h.len() < modes => FunctionalSpec::Linear {
                h: SpectralField::padded(h.coeffs(), modes),
                offset: *offset,
            },
            p => p.clone(),
        };
        phi.check(&spec)?;
        let mut run = RunConfig::new(self.t_final, self.steps, self.eps, self.scheme, x0, y0);
        run.refinement = self.refinement;
        run.validate(&spec)?;
        if self.n_samples < 2 {
            return Err(Error::param("n_samples", "must be at least 2"));
        }
        if self.threads == Some(0) {
            return Err(Error::param("threads", "must be positive"));
        }
        let problem = Problem::new(spec, self.nonlinearity.build()?)?;
        Ok(Resolved {
            problem,
            run,
            phi,
            mc: McSettings {
                n_samples: self.n_samples,
                master_seed: self.master_seed,
                refinement: self.refinement,
            },
        })
    }
}
