//! Config-driven pipeline behind the command-line tool: synthesis, masks,
//! training, reconstruction, evaluation and benchmarking, each writing one
//! run manifest next to its outputs.

mod config;
mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    split_counts, BenchSection, DataSection, EvalSection, MaskSection, ModelSection, PipelineConfig, ReconstructSection,
    StageSeeds, ENV_PREFIX,
};
pub use run::{RunContext, RunManifest};

use crate::cascade::{load_model, reconstruct, save_model, BlockKind, BlockWidths, CascadeModel, CascadeSpec};
use crate::data::{load_dataset, save_dataset, synthesize_phantom, KSpaceVolume, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{benchmark_time, evaluate, EvalOptions, Method, MetricsReport};
use crate::network::DEEP_CASCADE_WIDTH;
use crate::sampling::{load_mask, poisson_disc_mask, save_mask, SamplingMask};
use crate::seed::derive_seed;
use crate::train::Trainer;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Synth,
    Mask,
    Train,
    Reconstruct,
    Evaluate,
    Bench,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::Synth, Command::Mask, Command::Train, Command::Reconstruct, Command::Evaluate, Command::Bench];

    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Mask => "mask",
            Command::Train => "train",
            Command::Reconstruct => "reconstruct",
            Command::Evaluate => "evaluate",
            Command::Bench => "bench",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Config(format!("unknown subcommand `{s}`")))
    }
}

/// Runs `command` and writes its manifest; single-threaded when `ctx.deterministic`.
pub fn run_command(command: Command, config: &PipelineConfig, ctx: &RunContext) -> Result<RunManifest> {
    let mut manifest = RunManifest::start(command, config, ctx);
    fs::create_dir_all(&ctx.out)?;
    let mut body = || match command {
        Command::Synth => cmd_synth(config, ctx, &mut manifest),
        Command::Mask => cmd_mask(config, ctx, &mut manifest),
        Command::Train => cmd_train(config, ctx, &mut manifest),
        Command::Reconstruct => cmd_reconstruct(config, ctx, &mut manifest),
        Command::Evaluate => cmd_evaluate(config, ctx, &mut manifest),
        Command::Bench => cmd_bench(config, ctx, &mut manifest),
    };
    if ctx.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?
            .install(body)?;
    } else {
        body()?;
    }
    manifest.finish(&ctx.out)?;
    Ok(manifest)
}

/// Volume files of each part, relative to the output directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

pub const SPLIT_FILE: &str = "data/split.toml";

impl Split {
    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(SPLIT_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e} (run `synth` first)", path.display()))))?;
        toml::from_str(&text).map_err(|e| Error::format("split", e.to_string()))
    }

    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

fn load_part(out: &Path, files: &[String], what: &str) -> Result<KSpaceVolume> {
    if files.is_empty() {
        return Err(Error::Config(format!("the {what} split is empty; adjust data.volumes or data.split")));
    }
    let parts = files.iter().map(|f| load_dataset(out.join(f))).collect::<Result<Vec<_>>>()?;
    KSpaceVolume::concat(&parts)
}

fn cmd_synth(config: &PipelineConfig, ctx: &RunContext, manifest: &mut RunManifest) -> Result<()> {
    let d = &config.data;
    let seed = config.seeds().data;
    manifest.seed("data", seed);
    fs::create_dir_all(ctx.out.join("data"))?;
    let files: Vec<String> = (0..d.volumes).map(|v| format!("data/vol_{v:03}.csr")).collect();
    files.par_iter().enumerate().try_for_each(|(v, file)| {
        let cfg = SynthConfig::new(derive_seed(seed, &[v as u64]), d.slices_per_volume, d.nc, d.ny, d.nz);
        let (kspace, _) = synthesize_phantom(&cfg)?;
        save_dataset(ctx.out.join(file), &kspace)
    })?;

    let counts = split_counts(d.volumes, &d.split);
    let mut order: Vec<usize> = (0..d.volumes).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5350_4C54])));
    let pick = |range: std::ops::Range<usize>| {
        let mut part: Vec<usize> = order[range].to_vec();
        part.sort_unstable();
        part.into_iter().map(|v| files[v].clone()).collect::<Vec<_>>()
    };
    let split = Split {
        train: pick(0..counts[0]),
        val: pick(counts[0]..counts[0] + counts[1]),
        test: pick(counts[0] + counts[1]..d.volumes),
    };
    fs::write(ctx.out.join(SPLIT_FILE), toml::to_string(&split).map_err(|e| Error::Config(e.to_string()))?)?;
    manifest.outputs.extend(files);
    manifest.outputs.push(SPLIT_FILE.into());
    Ok(())
}

pub fn mask_file(r: f64, index: usize) -> String {
    format!("masks/mask_r{r}_{index:02}.csm")
}

fn cmd_mask(config: &PipelineConfig, ctx: &RunContext, manifest: &mut RunManifest) -> Result<()> {
    let m = &config.mask;
    let seed = config.seeds().mask;
    manifest.seed("mask", seed);
    fs::create_dir_all(ctx.out.join("masks"))?;
    let jobs: Vec<(f64, usize)> = m.accelerations.iter().flat_map(|&r| (0..m.count).map(move |i| (r, i))).collect();
    let masks = jobs
        .par_iter()
        .map(|&(r, i)| poisson_disc_mask(config.data.ny, config.data.nz, r, m.center_radius, derive_seed(seed, &[r.to_bits(), i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = csv::Writer::from_path(ctx.out.join("masks/masks.csv")).map_err(csv_err)?;
    summary.write_record(["file", "target_r", "achieved_r", "sampled", "min_distance"]).map_err(csv_err)?;
    for (&(r, i), mask) in jobs.iter().zip(&masks) {
        let file = mask_file(r, i);
        save_mask(ctx.out.join(&file), mask)?;
        summary
            .write_record([
                file.clone(),
                format!("{r:?}"),
                format!("{:?}", mask.achieved_acceleration()?),
                mask.sampled_count().to_string(),
                format!("{:?}", mask.min_distance()),
            ])
            .map_err(csv_err)?;
        manifest.outputs.push(file);
    }
    summary.flush()?;
    manifest.outputs.push("masks/masks.csv".into());
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Fresh model described by the `[model]` section for data with `nc` coils.
pub fn build_model(section: &ModelSection, nc: usize, seed: u64) -> Result<CascadeModel<f32>> {
    let spec = CascadeSpec::parse(&section.spec, section.configuration.parse()?, nc)?;
    match spec.kind() {
        BlockKind::UNet => CascadeModel::unet(spec, section.base_width, seed),
        BlockKind::DeepCascade => CascadeModel::new(spec, BlockWidths::Flat(DEEP_CASCADE_WIDTH), seed),
    }
}

/// Paths (relative to the output directory) of a trained model's artifacts.
pub struct ModelPaths {
    pub manifest: String,
    pub weights: String,
    pub history: String,
    pub state: String,
}

impl ModelPaths {
    pub fn of(section: &ModelSection) -> Self {
        let n = section.name();
        Self {
            manifest: format!("model/{n}.model"),
            weights: format!("{n}.cswgt"),
            history: format!("model/{n}.history.csv"),
            state: format!("model/{n}.state"),
        }
    }
}

fn cmd_train(config: &PipelineConfig, ctx: &RunContext, manifest: &mut RunManifest) -> Result<()> {
    let split = Split::load(&ctx.out)?;
    let train = load_part(&ctx.out, &split.train, "training")?;
    let val = load_part(&ctx.out, &split.val, "validation")?;
    manifest.inputs.extend(split.train.iter().chain(&split.val).cloned());
    let seeds = config.seeds();
    manifest.seed("model", seeds.model);
    manifest.seed("train", seeds.train);
    let model = build_model(&config.model, train.nc(), seeds.model)?;
    let paths = ModelPaths::of(&config.model);
    fs::create_dir_all(ctx.out.join("model"))?;
    let state = ctx.out.join(&paths.state);
    let mut trainer = if ctx.resume {
        manifest.inputs.push(paths.state.clone());
        Trainer::resume(&state, model, config.train_config())?
    } else {
        Trainer::new(model, config.train_config())?
    };
    log::info!("training {} ({} parameters)", config.model.name(), trainer.model().param_count());
    while trainer.run_epoch(&train, &val)? {
        trainer.save_state(&state)?;
    }
    trainer.save_state(&state)?;
    let (best, history) = trainer.finish();
    save_model(&best, ctx.out.join(&paths.manifest), &paths.weights)?;
    history.write_csv(fs::File::create(ctx.out.join(&paths.history))?)?;
    manifest.outputs.extend([paths.manifest, format!("model/{}", paths.weights), paths.history, paths.state]);
    Ok(())
}

/// Method name shown in reports for a model manifest path.
fn model_label(path: &str) -> String {
    Path::new(path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.to_string())
}

fn model_list(config: &PipelineConfig, listed: &[String]) -> Vec<String> {
    if listed.is_empty() {
        vec![ModelPaths::of(&config.model).manifest]
    } else {
        listed.to_vec()
    }
}

fn load_models(out: &Path, paths: &[String], manifest: &mut RunManifest) -> Result<Vec<(String, CascadeModel<f32>)>> {
    let mut models: Vec<(String, CascadeModel<f32>)> = Vec::new();
    for p in paths {
        manifest.inputs.push(p.clone());
        let mut label = model_label(p);
        // repeated entries stay separate methods
        let seen = models.iter().filter(|(l, _)| l == &label || l.starts_with(&format!("{label}#"))).count();
        if seen > 0 {
            label = format!("{label}#{}", seen + 1);
        }
        models.push((label, load_model(out.join(p))?));
    }
    Ok(models)
}

fn cmd_reconstruct(config: &PipelineConfig, ctx: &RunContext, manifest: &mut RunManifest) -> Result<()> {
    let rc = &config.reconstruct;
    let split = Split::load(&ctx.out)?;
    let model_path = rc.model.clone().unwrap_or_else(|| ModelPaths::of(&config.model).manifest);
    let (label, model) = load_models(&ctx.out, &[model_path], manifest)?.remove(0);
    let mask = match &rc.mask {
        Some(path) => {
            manifest.inputs.push(path.clone());
            load_mask(ctx.out.join(path))?
        }
        None => {
            let seed = config.seeds().reconstruct;
            manifest.seed("reconstruct", seed);
            poisson_disc_mask(config.data.ny, config.data.nz, rc.acceleration, rc.center_radius, seed)?
        }
    };
    let dir = format!("recon/{label}");
    fs::create_dir_all(ctx.out.join(&dir))?;
    for file in &split.test {
        manifest.inputs.push(file.clone());
        let x = load_dataset(ctx.out.join(file))?;
        let image = reconstruct(&model, &x, &mask)?;
        let image = image.combined().expect("reconstruction is combined");
        let name = format!("{dir}/{}.npy", model_label(file));
        write_npy(&ctx.out.join(&name), image.shape(), image.data())?;
        manifest.outputs.push(name);
    }
    Ok(())
}

/// Writes a little-endian float32 `.npy` array.
pub fn write_npy(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    use npyz::WriterBuilder;
    let shape: Vec<u64> = shape.iter().map(|&s| s as u64).collect();
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    let mut w = npyz::WriteOptions::new().default_dtype().shape(&shape).writer(file).begin_nd()?;
    w.extend(data.iter().copied())?;
    w.finish()?;
    Ok(())
}

fn methods<'a>(models: &'a [(String, CascadeModel<f32>)], zero_filled: bool) -> Vec<(String, Method<'a>)> {
    let mut out: Vec<(String, Method<'a>)> = Vec::new();
    if zero_filled {
        out.push(("zero-filled".into(), Method::ZeroFilled));
    }
    out.extend(models.iter().map(|(n, m)| (n.clone(), Method::Cascade(m))));
    out
}

/// Evaluates every test volume separately (foreground exclusion is per
/// volume) and merges the reports with global slice indices.
pub fn evaluate_split(
    out: &Path,
    split: &Split,
    methods: &[(String, Method<'_>)],
    section: &EvalSection,
    seed: u64,
) -> Result<MetricsReport> {
    let mut merged = MetricsReport::default();
    let mut offset = 0;
    for (j, file) in split.test.iter().enumerate() {
        let x = load_dataset(out.join(file))?;
        let opts = EvalOptions {
            accelerations: section.accelerations.clone(),
            center_radius: section.center_radius,
            seed: derive_seed(seed, &[j as u64]),
            foreground_level: section.foreground_level,
            min_foreground: section.min_foreground,
        };
        let mut report = evaluate(methods, &x, &opts)?;
        for r in &mut report.records {
            r.slice += offset;
        }
        merged.records.extend(report.records);
        merged.excluded.extend(report.excluded.iter().map(|s| s + offset));
        merged.policy = report.policy;
        offset += x.ns();
    }
    if split.test.is_empty() {
        return Err(Error::Config("the test split is empty; adjust data.volumes or data.split".into()));
    }
    // order by acceleration, then model, then slice
    let rank: BTreeMap<&str, usize> = methods.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();
    merged.records.sort_by(|a, b| {
        a.r.total_cmp(&b.r).then(rank[a.model.as_str()].cmp(&rank[b.model.as_str()])).then(a.slice.cmp(&b.slice))
    });
    Ok(merged)
}

fn cmd_evaluate(config: &PipelineConfig, ctx: &RunContext, manifest: &mut RunManifest) -> Result<()> {
    let section = &config.eval;
    let split = Split::load(&ctx.out)?;
    let models = load_models(&ctx.out, &model_list(config, &section.models), manifest)?;
    let methods = methods(&models, section.zero_filled);
    let seed = config.seeds().eval;
    manifest.seed("eval", seed);
    manifest.inputs.extend(split.test.iter().cloned());
    let report = evaluate_split(&ctx.out, &split, &methods, section, seed)?;
    fs::create_dir_all(ctx.out.join("eval"))?;
    report.write_slices_csv(fs::File::create(ctx.out.join("eval/slices.csv"))?)?;
    report.write_aggregate_csv(fs::File::create(ctx.out.join("eval/aggregate.csv"))?)?;
    fs::write(ctx.out.join("eval/statistics.txt"), report.statistics_text()?)?;
    manifest.outputs.extend(["eval/slices.csv", "eval/aggregate.csv", "eval/statistics.txt"].map(String::from));
    Ok(())
}

fn cmd_bench(config: &PipelineConfig, ctx: &RunContext, manifest: &mut RunManifest) -> Result<()> {
    let b = &config.bench;
    let split = Split::load(&ctx.out)?;
    let data = load_part(&ctx.out, &split.test, "test")?;
    manifest.inputs.extend(split.test.iter().cloned());
    let models = load_models(&ctx.out, &model_list(config, &b.models), manifest)?;
    let seed = config.seeds().reconstruct;
    manifest.seed("reconstruct", seed);
    let (ny, nz) = data.plane();
    let mask: SamplingMask = poisson_disc_mask(ny, nz, b.acceleration, b.center_radius, seed)?;
    fs::create_dir_all(ctx.out.join("bench"))?;
    let mut w = csv::Writer::from_path(ctx.out.join("bench/timing.csv")).map_err(csv_err)?;
    w.write_record(["method", "slices", "ms_per_slice"]).map_err(csv_err)?;
    for (name, method) in methods(&models, b.zero_filled) {
        let ms = benchmark_time(&method, &data, &mask, b.slices, b.warmup)?;
        log::info!("{name}: {ms:.3} ms per slice over {} slices", b.slices);
        w.write_record([name, b.slices.to_string(), format!("{ms:.4}")]).map_err(csv_err)?;
    }
    w.flush()?;
    manifest.outputs.push("bench/timing.csv".into());
    Ok(())
}
