use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::train::TrainConfig;

/// Prefix of environment variables that override config entries:
/// `CSRECON_SEED`, or `CSRECON_<SECTION>_<KEY>` (e.g. `CSRECON_TRAIN_MAX_EPOCHS`).
pub const ENV_PREFIX: &str = "CSRECON_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub volumes: usize,
    pub slices_per_volume: usize,
    pub nc: usize,
    pub ny: usize,
    pub nz: usize,
    /// Relative train / validation / test weights, split by whole volumes.
    pub split: Vec<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { volumes: 10, slices_per_volume: 8, nc: 4, ny: 64, nz: 64, split: vec![43.0, 18.0, 50.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub accelerations: Vec<f64>,
    pub center_radius: usize,
    /// Masks written per acceleration.
    pub count: usize,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self { accelerations: vec![2.0, 4.0, 8.0], center_radius: 4, count: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `I`/`K` string or `deepcascade`.
    pub spec: String,
    /// `sc` or `mc`.
    pub configuration: String,
    pub base_width: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { spec: "IK".into(), configuration: "mc".into(), base_width: 8 }
    }
}

impl ModelSection {
    /// File stem used for this model's artifacts.
    pub fn name(&self) -> String {
        format!("{}_{}", self.spec.to_lowercase(), self.configuration.to_lowercase())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub accelerations: Vec<f64>,
    pub center_radius: usize,
    pub foreground_level: f64,
    pub min_foreground: f64,
    /// Include the zero-filled baseline as a method.
    pub zero_filled: bool,
    /// Model manifests relative to the output directory; empty means the trained model.
    pub models: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            accelerations: vec![2.0, 4.0, 8.0],
            center_radius: 4,
            foreground_level: 0.05,
            min_foreground: 0.02,
            zero_filled: true,
            models: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSection {
    pub acceleration: f64,
    pub center_radius: usize,
    /// Mask file relative to the output directory; generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    /// Model manifest relative to the output directory; defaults to the trained model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        Self { acceleration: 4.0, center_radius: 4, mask: None, model: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub slices: usize,
    pub warmup: usize,
    pub acceleration: f64,
    pub center_radius: usize,
    pub zero_filled: bool,
    pub models: Vec<String>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { slices: 256, warmup: 8, acceleration: 4.0, center_radius: 4, zero_filled: false, models: Vec::new() }
    }
}

/// Everything a pipeline run needs. All randomness derives from `seed`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataSection,
    pub mask: MaskSection,
    pub model: ModelSection,
    /// `train.seed` is ignored; the training seed derives from `seed`.
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub reconstruct: ReconstructSection,
    pub bench: BenchSection,
}

/// Seeds handed to each stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageSeeds {
    pub data: u64,
    pub mask: u64,
    pub model: u64,
    pub train: u64,
    pub eval: u64,
    pub reconstruct: u64,
}

impl PipelineConfig {
    /// Reads a config file (or the `config` table of a run manifest), then
    /// applies `CSRECON_*` environment overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_text_with_env(&text, std::env::vars())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_text_with_env(text, std::iter::empty())
    }

    pub fn from_text_with_env(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if table.contains_key("subcommand") {
            table = match table.remove("config") {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(Error::Config("run manifest has no [config] table".into())),
            };
        }
        let overrides: BTreeMap<String, String> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        for (key, value) in overrides {
            apply_override(&mut table, &key[ENV_PREFIX.len()..], &value)?;
        }
        let config: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let d = &self.data;
        if d.volumes == 0 || d.slices_per_volume == 0 {
            return bad("data.volumes and data.slices_per_volume must be positive".into());
        }
        if d.split.len() != 3 || d.split.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || d.split.iter().sum::<f64>() <= 0.0 {
            return bad(format!("data.split needs three nonnegative weights, got {:?}", d.split));
        }
        if self.mask.count == 0 {
            return bad("mask.count must be positive".into());
        }
        for r in self.mask.accelerations.iter().chain(&self.eval.accelerations) {
            if !(*r >= 1.0 && r.is_finite()) {
                return bad(format!("accelerations must be >= 1, got {r}"));
            }
        }
        if self.bench.slices == 0 {
            return bad("bench.slices must be positive".into());
        }
        self.train.validate()
    }

    pub fn seeds(&self) -> StageSeeds {
        let s = |tag: u64| derive_seed(self.seed, &[tag]);
        StageSeeds {
            data: s(0x4441_5441),
            mask: s(0x4D41_534B),
            model: s(0x4D4F_4445),
            train: s(0x5452_4149),
            eval: s(0x4556_414C),
            reconstruct: s(0x5245_4343),
        }
    }

    /// Training settings with the derived seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seeds().train, ..self.train.clone() }
    }
}

fn apply_override(table: &mut toml::Table, name: &str, raw: &str) -> Result<()> {
    let value = parse_value(raw);
    let lower = name.to_lowercase();
    if lower == "seed" {
        table.insert("seed".into(), value);
        return Ok(());
    }
    let (section, key) = lower
        .split_once('_')
        .ok_or_else(|| Error::Config(format!("override {ENV_PREFIX}{name} must be {ENV_PREFIX}<SECTION>_<KEY>")))?;
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{section}` is not a section"))),
    }
}

/// TOML literal if it parses as one, otherwise a plain string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Splits `n` items by `weights` with the largest-remainder rule.
pub fn split_counts(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable: ties go to the earlier part
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}
