//! Experiment configuration: one JSON document per run.

use std::fs;
use std::path::{Path, PathBuf};

use ruinlab_core::estimators::{ChainConfig, CompoundTailProblem};
use ruinlab_core::model::{Mixing, ModelSpec};
use ruinlab_core::montecarlo::{HorizonPolicy, McConfig};
use ruinlab_core::runoff::RunoffExposure;
use serde::{Deserialize, Serialize};

use crate::exposure::read_levels;
use crate::AppError;

/// One estimator to run on every `(λ, u)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Mc,
    Hybrid {
        lambda0: f64,
    },
    AsymptoticRunoff,
    AsymptoticGrowth {
        #[serde(default)]
        chain: ChainConfig,
        #[serde(default = "default_chains")]
        chains: usize,
    },
    CompoundTail {
        problem: CompoundTailProblem,
    },
    Decomposition {
        n_max: usize,
        #[serde(default = "default_draws")]
        mc_draws: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_chains() -> usize {
    4
}

fn default_draws() -> usize {
    100_000
}

/// Per-year records of the first few paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub path: PathBuf,
    pub paths: u64,
    pub years: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSpec>,
    /// Fill the `wall_ms` column. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    /// Past exposure levels as CSV rows `(m, pi)`; replaces the levels of a
    /// reporting-delay model. Relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_csv: Option<PathBuf>,
    pub estimators: Vec<EstimatorSpec>,
    pub u: Vec<f64>,
    /// Claim intensities to sweep; empty means the model's own `λ`.
    #[serde(default)]
    pub lambda: Vec<f64>,
    pub mc: McConfig,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    /// Parses and validates; relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, AppError> {
        let mut cfg: Self =
            serde_json::from_str(text).map_err(|e| AppError::Schema(e.to_string()))?;
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        cfg.load_exposure()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.exposure_csv.as_mut() {
            fix(p);
        }
        if let Some(p) = self.outputs.csv.as_mut() {
            fix(p);
        }
        if let Some(p) = self.outputs.report.as_mut() {
            fix(p);
        }
        if let Some(t) = self.outputs.trace.as_mut() {
            fix(&mut t.path);
        }
    }

    fn load_exposure(&mut self) -> Result<(), AppError> {
        let Some(path) = &self.exposure_csv else {
            return Ok(());
        };
        let ModelSpec::Runoff(m) = &mut self.model else {
            return Err(AppError::Schema(
                "exposure_csv needs a run-off model".into(),
            ));
        };
        let Mixing::ReportingDelay { exposure } = &mut m.mixing else {
            return Err(AppError::Schema(
                "exposure_csv needs reporting_delay mixing".into(),
            ));
        };
        let file =
            fs::File::open(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
        let levels = read_levels(file)?;
        let p = exposure.params().clone();
        *exposure = RunoffExposure::new(levels, p.structure, p.delay)
            .map_err(|e| AppError::Schema(e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let schema = |m: String| Err(AppError::Schema(m));
        if self.estimators.is_empty() {
            return schema("estimator list is empty".into());
        }
        if self.u.is_empty() || self.u.iter().any(|u| !(u.is_finite() && *u > 0.0)) {
            return schema("u grid must be non-empty with finite positive values".into());
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return schema("lambda grid values must be finite and positive".into());
        }
        self.model
            .validate()
            .map_err(|e| AppError::Schema(e.to_string()))?;
        if self.mc.replications == 0 {
            return schema("mc.replications must be at least 1".into());
        }
        if self.mc.workers == 0 {
            return schema("mc.workers must be at least 1".into());
        }
        let needs_mc = self
            .estimators
            .iter()
            .any(|e| matches!(e, EstimatorSpec::Mc));
        match (self.mc.horizon, &self.model) {
            (HorizonPolicy::AdaptiveRunoff { intensity_floor: f }, ModelSpec::Runoff(_))
            | (HorizonPolicy::AdaptiveGrowth { discount_floor: f }, ModelSpec::Growth(_)) => {
                if !(f > 0.0 && f < 1.0) {
                    return schema(format!("horizon floor must lie in (0, 1), got {f}"));
                }
            }
            (HorizonPolicy::Fixed { .. }, _) => {}
            (p, _) if needs_mc => {
                return schema(format!(
                    "horizon policy {p:?} does not fit the model regime"
                ));
            }
            _ => {}
        }
        for e in &self.estimators {
            match e {
                EstimatorSpec::Hybrid { lambda0 } if !(lambda0.is_finite() && *lambda0 > 0.0) => {
                    return schema(format!("hybrid lambda0 must be positive, got {lambda0}"));
                }
                EstimatorSpec::AsymptoticGrowth { chain, .. }
                    if chain.samples == 0 || chain.thinning == 0 =>
                {
                    return schema("chain samples and thinning must be positive".into());
                }
                EstimatorSpec::Decomposition { n_max: 0, .. } => {
                    return schema("decomposition n_max must be positive".into());
                }
                EstimatorSpec::CompoundTail { problem } => {
                    for part in problem.eta.parts.iter().chain(&problem.w.parts) {
                        part.dist
                            .validate()
                            .map_err(|e| AppError::Schema(e.to_string()))?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// The `λ` values to sweep.
    pub fn lambdas(&self) -> Vec<f64> {
        if self.lambda.is_empty() {
            vec![self.model.lambda()]
        } else {
            self.lambda.clone()
        }
    }
}
