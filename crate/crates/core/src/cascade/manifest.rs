//! Model manifest: a `key = value` text file naming the cascade layout, the
//! initialisation seed and the weight checkpoint, enough to rebuild a model.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{BlockKind, BlockWidths, CascadeModel, CascadeSpec, Configuration};
use crate::error::{Error, Result};
use crate::network::Checkpoint;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelManifest {
    pub spec: String,
    pub kind: BlockKind,
    pub config: Configuration,
    pub nc: usize,
    pub c_in: usize,
    pub widths: Vec<usize>,
    pub seed: u64,
    /// Relative paths are resolved against the manifest's directory.
    pub checkpoint: PathBuf,
}

impl ModelManifest {
    pub fn describe(model: &CascadeModel<f32>, checkpoint: impl Into<PathBuf>) -> Self {
        let spec = model.spec();
        Self {
            spec: spec.name(),
            kind: spec.kind(),
            config: spec.config(),
            nc: spec.nc(),
            c_in: spec.c_in(),
            widths: model.widths().to_list(),
            seed: model.seed(),
            checkpoint: checkpoint.into(),
        }
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        format!(
            "spec = {}\nkind = {}\nconfig = {}\nnc = {}\nc_in = {}\nwidths = {}\nseed = {}\ncheckpoint = {}\n",
            self.spec,
            self.kind,
            self.config,
            self.nc,
            self.c_in,
            widths.join(","),
            self.seed,
            self.checkpoint.display()
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("manifest line `{line}` is not key = value")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).ok_or_else(|| Error::Config(format!("manifest is missing `{k}`")));
        let num = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| Error::Config(format!("manifest `{k}` is not an integer")))
        };
        let widths = get("widths")?
            .split(',')
            .map(|w| w.trim().parse().map_err(|_| Error::Config(format!("bad width `{w}`"))))
            .collect::<Result<Vec<usize>>>()?;
        Ok(Self {
            spec: get("spec")?.clone(),
            kind: get("kind")?.parse()?,
            config: get("config")?.parse()?,
            nc: num("nc")? as usize,
            c_in: num("c_in")? as usize,
            widths,
            seed: num("seed")?,
            checkpoint: PathBuf::from(get("checkpoint")?),
        })
    }

    /// Rebuilds the model with its initial weights (no checkpoint applied).
    pub fn build(&self) -> Result<CascadeModel<f32>> {
        let spec = CascadeSpec::parse(&self.spec, self.config, self.nc)?;
        if spec.kind() != self.kind || spec.c_in() != self.c_in {
            return Err(Error::Config(format!(
                "manifest is inconsistent: spec {} implies kind {} with {} input channels",
                self.spec,
                spec.kind(),
                spec.c_in()
            )));
        }
        CascadeModel::new(spec, BlockWidths::from_list(self.kind, &self.widths)?, self.seed)
    }
}

fn resolve(manifest_path: &Path, checkpoint: &Path) -> PathBuf {
    if checkpoint.is_absolute() {
        checkpoint.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(checkpoint)
    }
}

/// Writes the manifest and its checkpoint (named in the manifest).
pub fn save_model(model: &CascadeModel<f32>, manifest_path: impl AsRef<Path>, checkpoint: impl AsRef<Path>) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let manifest = ModelManifest::describe(model, checkpoint.as_ref());
    let mut ckpt = Checkpoint::default();
    ckpt.meta.insert("spec".into(), manifest.spec.clone());
    ckpt.meta.insert("config".into(), manifest.config.to_string());
    for p in model.params() {
        ckpt.push(&p.name, &p.value);
    }
    ckpt.save(resolve(manifest_path, checkpoint.as_ref()))?;
    fs::write(manifest_path, manifest.to_text())?;
    Ok(())
}

pub fn load_model(manifest_path: impl AsRef<Path>) -> Result<CascadeModel<f32>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = ModelManifest::parse(&fs::read_to_string(manifest_path)?)?;
    let mut model = manifest.build()?;
    let ckpt = Checkpoint::load(resolve(manifest_path, &manifest.checkpoint))?;
    let mut next = 0;
    for block in model.blocks_mut() {
        next = ckpt.restore_params(next, block.params_mut())?;
    }
    if next != ckpt.tensors.len() {
        return Err(Error::Shape(format!("checkpoint holds {} tensors, model uses {next}", ckpt.tensors.len())));
    }
    Ok(model)
}
