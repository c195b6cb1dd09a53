//! Pipeline configuration: defaults, `key = value` config files, and the
//! ablation switch for the two retrieval banks.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hopfield::RetrievalMode;
use crate::metrics::NUM_DISEASES;

/// Which Hopfield banks participate in stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnhanceMode {
    None,
    VisualOnly,
    ReportOnly,
    Both,
}

impl EnhanceMode {
    pub fn uses_visual(self) -> bool {
        matches!(self, Self::VisualOnly | Self::Both)
    }

    pub fn uses_report(self) -> bool {
        matches!(self, Self::ReportOnly | Self::Both)
    }

    pub const ALL: [EnhanceMode; 4] = [Self::None, Self::VisualOnly, Self::ReportOnly, Self::Both];
}

impl FromStr for EnhanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "visual" => Ok(Self::VisualOnly),
            "report" => Ok(Self::ReportOnly),
            "both" => Ok(Self::Both),
            other => Err(Error::InvalidInput(format!(
                "unknown ablation mode `{other}` (expected none, visual, report, or both)"
            ))),
        }
    }
}

impl fmt::Display for EnhanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::VisualOnly => "visual",
            Self::ReportOnly => "report",
            Self::Both => "both",
        })
    }
}

/// Every knob of the end-to-end flow. All randomness anywhere in a run is
/// derived from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub n_diseases: usize,
    pub patch_size: usize,
    pub image_size: usize,
    pub channels: usize,
    /// Patch encoder output dimension; the visual bank and disease queries
    /// live in this space.
    pub feature_dim: usize,
    /// Sentence embedding dimension; the report memory lives in this space.
    /// A seeded query projection bridges the two when they differ.
    pub sentence_dim: usize,
    pub beta: f64,
    pub cap_per_disease: usize,
    pub report_memory_size: usize,
    pub tau: f64,
    pub top_k: Option<usize>,
    pub mode: RetrievalMode,
    pub step_size: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Output dimension of each enhanced half. Identity value projections are
    /// used when this equals `feature_dim`, seeded random projections
    /// otherwise.
    pub d_out: usize,
    /// Stage-1 training rate for the pipeline's synthetic corpus. The
    /// classifier's own `TrainConfig::default()` keeps the much smaller
    /// production-scale rate.
    pub learning_rate: f64,
    pub epochs: usize,
    pub n_cases: usize,
    pub visual_bank_path: Option<PathBuf>,
    pub report_bank_path: Option<PathBuf>,
    pub classifier_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_diseases: NUM_DISEASES,
            patch_size: 16,
            image_size: 224,
            channels: 3,
            feature_dim: 768,
            sentence_dim: 768,
            beta: 4.0,
            cap_per_disease: 500,
            report_memory_size: 6000,
            tau: 0.5,
            top_k: None,
            mode: RetrievalMode::Cccp,
            step_size: 0.01,
            max_iters: 32,
            tolerance: 1e-6,
            d_out: 4096,
            learning_rate: 1.0,
            epochs: 200,
            n_cases: 64,
            visual_bank_path: None,
            report_bank_path: None,
            classifier_path: None,
            out_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_diseases != NUM_DISEASES {
            return Err(Error::InvalidInput(format!(
                "only the canonical {NUM_DISEASES}-disease configuration is supported, got {}",
                self.n_diseases
            )));
        }
        if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::InvalidInput(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.feature_dim == 0 || self.sentence_dim == 0 || self.d_out == 0 || self.channels == 0 {
            return Err(Error::InvalidInput("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidInput(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::InvalidInput(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.cap_per_disease == 0 || self.report_memory_size == 0 {
            return Err(Error::InvalidInput("bank budgets must be positive".into()));
        }
        if self.n_cases == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput("n_cases and epochs must be positive".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting; used by both config files and CLI
    /// overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::InvalidInput(format!("cannot parse `{value}` for config key `{key}`"))
            })
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "n_diseases" => self.n_diseases = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "sentence_dim" => self.sentence_dim = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "cap_per_disease" => self.cap_per_disease = parse(key, value)?,
            "report_memory_size" => self.report_memory_size = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "top_k" => self.top_k = Some(parse(key, value)?),
            "mode" => self.mode = value.parse()?,
            "step_size" => self.step_size = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "d_out" => self.d_out = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "n_cases" => self.n_cases = parse(key, value)?,
            "visual_bank_path" => self.visual_bank_path = Some(PathBuf::from(value)),
            "report_bank_path" => self.report_bank_path = Some(PathBuf::from(value)),
            "classifier_path" => self.classifier_path = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            other => return Err(Error::InvalidInput(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a plain-text config file of `key = value` lines. Blank lines
    /// and `#` comments are ignored.
    pub fn apply_file(&mut self, path: &std::path::Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!(
                    "config line {} is not `key = value`: `{raw}`",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }
}
