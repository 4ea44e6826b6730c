//! Experiment configuration: one JSON document per run.

use hmq_core::{ModelParams, Support};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Fig1Densities,
    Fig2LossVsA,
    ExponentSweep,
    NpTest,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Fig1Densities => "fig1_densities",
            ExperimentKind::Fig2LossVsA => "fig2_loss_vs_a",
            ExperimentKind::ExponentSweep => "exponent_sweep",
            ExperimentKind::NpTest => "np_test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    Iid,
    Optimal,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Iid => "iid",
            Strategy::Optimal => "optimal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMethod {
    /// Kernel regression of simulated window scores.
    MonteCarlo,
    /// Exact conditional second moment of the linear Gaussian score.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub a: f64,
    pub sigma: f64,
    pub state_trunc: f64,
    pub state_grid_size: usize,
    /// Defaults to `[-10 sigma, 10 sigma]`.
    pub obs_support: Option<[f64; 2]>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            a: 0.5,
            sigma: 1.0,
            state_trunc: hmq_core::model::DEFAULT_STATE_TRUNC,
            state_grid_size: hmq_core::model::DEFAULT_STATE_GRID_SIZE,
            obs_support: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Correlation values for the figure experiments; each has its own default.
    pub a_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerSection {
    pub strategy: Strategy,
    /// Cell count for `np_test`; absent means the unquantized test only.
    pub n: Option<usize>,
    /// Cell counts for `exponent_sweep`.
    pub n_list: Vec<usize>,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        QuantizerSection {
            strategy: Strategy::Optimal,
            n: None,
            n_list: vec![4, 8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub path_len: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            path_len: 20_000,
            n_paths: 32,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FSection {
    pub window_m: usize,
    pub window_k: usize,
    pub bandwidth: Option<f64>,
    pub eval_grid_size: usize,
    pub method: FMethod,
}

impl Default for FSection {
    fn default() -> Self {
        FSection {
            window_m: hmq_core::likelihood::DEFAULT_WINDOW,
            window_k: hmq_core::likelihood::DEFAULT_WINDOW,
            bandwidth: None,
            eval_grid_size: hmq_core::quantizer::DEFAULT_DENSITY_GRID,
            method: FMethod::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub alpha: f64,
    pub n_list: Vec<usize>,
    pub n_trials: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            alpha: 0.1,
            n_list: vec![20, 50, 100, 200],
            n_trials: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub quantizer: QuantizerSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub f_estimation: FSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// A rejected configuration, located by dotted field path and, when found, line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: field `{}`: {}", self.field, self.message),
            None => write!(f, "field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            line: None,
            message: message.into(),
        }
    }
}

/// Line of the key named by `path` (`"model.sigma"`, `"sweep.a_values[2]"`).
fn locate(text: &str, path: &str) -> Option<usize> {
    let mut pos = 0;
    let mut found = false;
    for seg in path.split('.') {
        let key = seg.split('[').next().unwrap_or(seg);
        if key.is_empty() {
            continue;
        }
        let needle = format!("\"{key}\"");
        let off = text[pos..].find(&needle)?;
        pos += off;
        found = true;
    }
    found.then(|| text[..pos].matches('\n').count() + 1)
}

const FIG1_DEFAULT_A: [f64; 3] = [0.1, 0.5, 0.9];

impl ExperimentConfig {
    /// Parses and validates a document; errors carry the field path and line.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError {
                field: if path == "." { "<document>".into() } else { path },
                line: Some(inner.line()),
                message: inner.to_string(),
            }
        })?;
        de.end().map_err(|e| ConfigError {
            field: "<document>".into(),
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|mut e| {
            e.line = locate(text, &e.field);
            e
        })?;
        Ok(cfg)
    }

    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        self.model_params_for(self.model.a)
    }

    pub fn model_params_for(&self, a: f64) -> Result<ModelParams, ConfigError> {
        let m = &self.model;
        let support = match m.obs_support {
            Some([lo, hi]) => Support { lo, hi },
            None => Support {
                lo: -hmq_core::model::DEFAULT_SUPPORT_SIGMAS * m.sigma,
                hi: hmq_core::model::DEFAULT_SUPPORT_SIGMAS * m.sigma,
            },
        };
        let p = ModelParams {
            a,
            sigma: m.sigma,
            state_trunc: m.state_trunc,
            state_grid_size: m.state_grid_size,
            obs_support: support,
        };
        p.validate().map_err(|e| match e {
            hmq_core::Error::InvalidParameter { field, reason } => ConfigError::new(format!("model.{field}"), reason),
            other => ConfigError::new("model", other.to_string()),
        })?;
        Ok(p)
    }

    /// Correlation values swept by the figure experiments.
    pub fn a_values(&self) -> Vec<f64> {
        if let Some(v) = &self.sweep.a_values {
            return v.clone();
        }
        match self.experiment {
            ExperimentKind::Fig2LossVsA => (1..=19).map(|i| i as f64 * 0.05).collect(),
            _ => FIG1_DEFAULT_A.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model_params()?;
        if let Some(values) = &self.sweep.a_values {
            if values.is_empty() {
                return Err(ConfigError::new("sweep.a_values", "need at least one value"));
            }
            for (i, &a) in values.iter().enumerate() {
                self.model_params_for(a).map_err(|e| ConfigError {
                    field: format!("sweep.a_values[{i}]"),
                    ..e
                })?;
            }
        }

        let q = &self.quantizer;
        if let Some(n) = q.n {
            if n < 2 {
                return Err(ConfigError::new("quantizer.n", format!("need N >= 2, got {n}")));
            }
        }
        if q.n_list.is_empty() || q.n_list.iter().any(|&n| n < 2) || q.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::new("quantizer.n_list", "need increasing cell counts, each >= 2"));
        }

        let mc = &self.mc;
        if mc.path_len < 100 {
            return Err(ConfigError::new("mc.path_len", format!("need >= 100, got {}", mc.path_len)));
        }
        if mc.n_paths == 0 {
            return Err(ConfigError::new("mc.n_paths", "need at least one path"));
        }

        let f = &self.f_estimation;
        if f.window_m == 0 {
            return Err(ConfigError::new("f_estimation.window_m", "need >= 1"));
        }
        if f.window_k == 0 {
            return Err(ConfigError::new("f_estimation.window_k", "need >= 1"));
        }
        if mc.path_len <= 2 * f.window_m.max(f.window_k) {
            return Err(ConfigError::new("mc.path_len", "paths must be longer than two score windows"));
        }
        if let Some(h) = f.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(ConfigError::new("f_estimation.bandwidth", format!("need > 0, got {h}")));
            }
        }
        if f.eval_grid_size < 9 || f.eval_grid_size % 2 == 0 {
            return Err(ConfigError::new(
                "f_estimation.eval_grid_size",
                format!("need an odd size >= 9, got {}", f.eval_grid_size),
            ));
        }

        let d = &self.detector;
        if !(d.alpha > 0.0 && d.alpha < 1.0) {
            return Err(ConfigError::new("detector.alpha", format!("need 0 < alpha < 1, got {}", d.alpha)));
        }
        if d.n_list.is_empty() || d.n_list.contains(&0) {
            return Err(ConfigError::new("detector.n_list", "need positive block lengths"));
        }
        if d.n_trials < 100 {
            return Err(ConfigError::new("detector.n_trials", format!("need >= 100, got {}", d.n_trials)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical configuration, ignoring `mc.workers` and `output_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
            if let Some(mc) = obj.get_mut("mc").and_then(|m| m.as_object_mut()) {
                mc.remove("workers");
            }
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}
