use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Command, PipelineConfig};
use crate::error::{Error, Result};

/// Where and how a command runs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunContext {
    pub out: PathBuf,
    pub config_path: Option<PathBuf>,
    /// Single-threaded numeric paths.
    pub deterministic: bool,
    /// `train` only: continue from the saved training state.
    pub resume: bool,
}

impl RunContext {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into(), config_path: None, deterministic: false, resume: false }
    }
}

/// Record of one command invocation; its `config` table alone reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: String,
    pub toolkit_version: String,
    pub deterministic: bool,
    pub resume: bool,
    pub started: String,
    pub finished: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Stage seeds as hexadecimal strings (TOML integers are signed 64-bit).
    pub seeds: BTreeMap<String, String>,
    pub config: PipelineConfig,
}

impl RunManifest {
    pub(crate) fn start(command: Command, config: &PipelineConfig, ctx: &RunContext) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("base".into(), format!("{:#018x}", config.seed));
        Self {
            subcommand: command.name().into(),
            config_path: ctx.config_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            deterministic: ctx.deterministic,
            resume: ctx.resume,
            started: now(),
            finished: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds,
            config: config.clone(),
        }
    }

    pub(crate) fn seed(&mut self, stage: &str, seed: u64) {
        self.seeds.insert(stage.into(), format!("{seed:#018x}"));
    }

    pub fn file_name(subcommand: &str) -> String {
        format!("{subcommand}.run.toml")
    }

    pub(crate) fn finish(&mut self, out: &Path) -> Result<()> {
        self.finished = now();
        fs::write(out.join(Self::file_name(&self.subcommand)), self.to_text()?)?;
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::format("run manifest", e.to_string()))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
