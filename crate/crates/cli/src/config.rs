use std::path::{Path, PathBuf};

use asdep::experiments::{DbEstimator, ExperimentSettings};
use asdep::testfns::FunctionParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CprimeAnalytic,
    CprimePlugin,
    CprimeDirect,
    SigmaTot,
    DSigmaTot,
    ShapleyDb,
    ShapleyVar,
    Bounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GradientKind {
    Analytic,
    Estimated,
}

/// Everything a run needs; loaded from `--config` and overridden by flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default)]
    pub parameters: FunctionParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<f64>,
    /// Inner draws of the plug-in and derivative-based estimators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<GradientKind>,
    /// Shapley order (2 or 3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u8>,
    /// Retained dimensions at which approximation errors are reported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ell_sweep: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Settings of `reproduce`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSettings>,
}

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_N: usize = 10_000;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(DEFAULT_N)
    }

    pub fn function_name(&self) -> Result<&str, CliError> {
        self.function
            .as_deref()
            .ok_or_else(|| CliError::Input("no function given (use --function)".into()))
    }

    /// Experiment settings with the run-level seed, sample size and estimator folded in.
    pub fn experiment_settings(&self, figure: u8) -> ExperimentSettings {
        let mut s = self.experiment.clone().unwrap_or_default();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(n) = self.n {
            if figure == 3 {
                s.n_points = n;
            } else {
                s.n_cprime = n;
            }
        }
        if let Some(p) = self.n_points {
            s.n_points = p;
        }
        if let Some(ns) = self.ns {
            s.ns = ns;
        }
        if let Some(tau) = self.tau {
            s.tau = tau;
        }
        if let Some(m2) = self.m2 {
            s.m2 = m2;
        }
        match self.method {
            Some(Method::CprimeAnalytic) => s.db_estimator = DbEstimator::Analytic,
            Some(Method::CprimePlugin) => s.db_estimator = DbEstimator::Plugin,
            Some(Method::CprimeDirect) => s.db_estimator = DbEstimator::Direct,
            _ => {}
        }
        if let Some(f) = &self.function {
            s.functions = vec![f.clone()];
        }
        s
    }
}
