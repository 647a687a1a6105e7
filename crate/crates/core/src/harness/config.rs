use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::ShiftGenConfig;
use crate::error::{Result, SplashError};
use crate::features::{AugConfig, Process};
use crate::harness::io::LoadOptions;
use crate::harness::split::validate_fractions;
use crate::node2vec::{SkipGramConfig, WalkConfig};
use crate::par::Parallelism;
use crate::select::{LinearConfig, DEFAULT_FRACTIONS};
use crate::slim::{SlimConfig, TrainConfig};
use crate::task::TaskKind;

pub const SCHEMA_VERSION: u32 = 1;

/// `auto` or `fixed:<process>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProcessMode {
    #[default]
    Auto,
    Fixed(Process),
}

impl FromStr for ProcessMode {
    type Err = SplashError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ProcessMode::Auto),
            _ => match s.strip_prefix("fixed:") {
                Some(p) => Ok(ProcessMode::Fixed(p.parse()?)),
                None => Err(SplashError::Config(format!(
                    "process mode '{s}' is neither 'auto' nor 'fixed:<R|P|S|Joint|ZF|RF>'"
                ))),
            },
        }
    }
}

impl TryFrom<String> for ProcessMode {
    type Error = SplashError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProcessMode> for String {
    fn from(m: ProcessMode) -> String {
        m.to_string()
    }
}

impl fmt::Display for ProcessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessMode::Auto => f.write_str("auto"),
            ProcessMode::Fixed(p) => write!(f, "fixed:{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// An edge CSV on disk.
    File {
        path: PathBuf,
        #[serde(flatten)]
        options: FileOptions,
    },
    /// The class-shift generator.
    Synthetic(ShiftGenConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FileOptions {
    #[serde(default)]
    pub format: Option<crate::harness::io::EdgeFormat>,
    #[serde(default)]
    pub label_dim: Option<usize>,
    #[serde(default)]
    pub affinity_window: Option<f64>,
}

impl FileOptions {
    pub fn load_options(&self, task: TaskKind) -> LoadOptions {
        LoadOptions {
            task,
            format: self.format,
            label_dim: self.label_dim,
            affinity_window: self.affinity_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: TaskKind,
    pub data: DataSource,
    pub split: [f64; 3],
    pub process: ProcessMode,
    /// Candidates for automatic selection.
    pub candidates: Vec<Process>,
    pub selection_fractions: Vec<f64>,
    pub linear: LinearConfig,
    /// Recent neighbors kept per node.
    pub k: usize,
    pub aug: AugConfig,
    pub walk: WalkConfig,
    pub skipgram: SkipGramConfig,
    pub slim: SlimConfig,
    pub train: TrainConfig,
    /// Values of the skip-branch weight tried; the best on validation is kept.
    pub skip_weights: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub parallelism: Parallelism,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task: TaskKind::Classification,
            data: DataSource::Synthetic(ShiftGenConfig::default()),
            split: [0.1, 0.1, 0.8],
            process: ProcessMode::Auto,
            candidates: Process::SELECTABLE.to_vec(),
            selection_fractions: DEFAULT_FRACTIONS.to_vec(),
            linear: LinearConfig::default(),
            k: 100,
            aug: AugConfig::default(),
            walk: WalkConfig::default(),
            skipgram: SkipGramConfig::default(),
            slim: SlimConfig::default(),
            train: TrainConfig::default(),
            skip_weights: vec![0.0, 1.0],
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            parallelism: Parallelism::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: Self = serde_json::from_str(&text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(SplashError::Config(format!(
                "config schema version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        // relative data paths resolve against the config file
        let mut cfg = cfg;
        if let DataSource::File { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.as_ref().parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        validate_fractions(self.split)?;
        if self.seeds.is_empty() {
            return Err(SplashError::Config("at least one seed is required".into()));
        }
        if self.skip_weights.is_empty() {
            return Err(SplashError::Config("at least one skip weight is required".into()));
        }
        if self.candidates.is_empty() || self.candidates.iter().any(|p| !Process::SELECTABLE.contains(p)) {
            return Err(SplashError::Config("selection candidates must be a non-empty subset of R, P, S".into()));
        }
        if let DataSource::Synthetic(g) = &self.data {
            g.validate()?;
            if self.task != TaskKind::Classification {
                return Err(SplashError::Config("the synthetic generator only produces classification labels".into()));
            }
        }
        if self.skipgram.embed_dim != self.aug.d_v {
            return Err(SplashError::Config(format!(
                "positional embedding size {} differs from d_v {}",
                self.skipgram.embed_dim, self.aug.d_v
            )));
        }
        if self.k == 0 {
            return Err(SplashError::Config("k must be positive".into()));
        }
        self.aug.validate()?;
        self.walk.validate()?;
        self.slim.validate()
    }

    /// Applies `SPLASH_SEED`, if set, as the only seed.
    pub fn apply_env(&mut self) {
        if let Some(seed) = crate::rng::seed_override() {
            self.seeds = vec![seed];
        }
    }
}
