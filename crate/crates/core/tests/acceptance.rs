//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//! Run a subset with `cargo test --release --test acceptance -- 4 8`.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csrecon::cascade::{cascade_forward, reconstruct, zero_filled, CascadeModel, Configuration};
use csrecon::data::{phantom_slice, synthesize_phantom, KSpaceVolume, SynthConfig};
use csrecon::eval::{
    benchmark_time, dunn_posthoc, evaluate, friedman_test, nrmse, nrmse_slice, psnr_slice, vif_slice, EvalOptions,
    Method, MetricsReport,
};
use csrecon::network::Array;
use csrecon::pipeline::{run_command, Command, ModelPaths, PipelineConfig, RunContext};
use csrecon::sampling::{apply_mask, poisson_disc_mask};
use csrecon::train::{gradient_check, TrainConfig, Trainer};
use csrecon::transform::{ifft2c, sum_of_squares};

const SPECS: [&str; 7] = ["II", "KK", "IK", "KI", "IIII", "IKIK", "deepcascade"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn volume(seed: u64, ns: usize, nc: usize, n: usize) -> KSpaceVolume {
    synthesize_phantom(&SynthConfig::new(seed, ns, nc, n, n)).unwrap().0
}

fn model(spec: &str, config: Configuration, nc: usize, width: usize, seed: u64) -> CascadeModel<f32> {
    let section = csrecon::pipeline::ModelSection {
        spec: spec.into(),
        configuration: config.to_string(),
        base_width: width,
    };
    csrecon::pipeline::build_model(&section, nc, seed).unwrap()
}

/// 1. Sampled k-space positions of the cascade output equal the measurement.
fn dc_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut pure_k_exact = true;
    for i in 0..100u64 {
        let spec = SPECS[i as usize % SPECS.len()];
        let nc = 1 + (i as usize / 7) % 3;
        let config = if i % 2 == 0 { Configuration::SingleChannel } else { Configuration::MultiChannel };
        let m = model(spec, config, nc, 4, 1000 + i);
        let x = volume(2000 + i, 1, nc, 64);
        let r = [2.0, 4.0, 6.0][i as usize % 3];
        let mask = poisson_disc_mask(64, 64, r, 4, 3000 + i).unwrap();
        let x_u = apply_mask(&x, &mask).unwrap();
        let out = cascade_forward(&m, &x_u, &mask).unwrap();
        for (plane_out, plane_u) in out.data().data().chunks(4096).zip(x_u.data().data().chunks(4096)) {
            for (p, (&o, &u)) in plane_out.iter().zip(plane_u).enumerate() {
                if mask.grid()[p] == 0 {
                    continue;
                }
                let diff = (o - u).norm() as f64;
                let rel = if u.norm() > 0.0 { diff / u.norm() as f64 } else { diff };
                worst = worst.max(rel);
                if spec == "KK" && o != u {
                    pure_k_exact = false;
                }
            }
        }
    }
    outcome(
        worst <= 1e-6 && pure_k_exact,
        format!("max relative deviation {worst:.3e} over 100 triples; pure-K chains exact: {pure_k_exact}"),
    )
}

/// 2. Reverse-mode gradients of a full IK cascade agree with central differences.
fn gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = model("IK", Configuration::MultiChannel, 2, 4, 22).cast::<f64>();
    let shape = [1, 4, 8, 8];
    let n = 4 * 64;
    let target: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grid: Vec<u8> = (0..64).map(|_| u8::from(rng.random_bool(0.4))).collect();
    let keep: Vec<f64> = (0..n).map(|i| if grid[i % 64] == 1 { 0.0 } else { 1.0 }).collect();
    let x_u: Vec<f64> = target.iter().zip(&keep).map(|(t, k)| t * (1.0 - k)).collect();
    let arr = |v: Vec<f64>| Array::from_vec(&shape, v).unwrap();
    let report = gradient_check(&m, &arr(x_u), &arr(keep), &arr(target), 1e-5, 1e-8, 1).unwrap();
    // a relative error is meaningless for gradients below the finite-difference resolution
    let resolution = 100.0 * report.roundoff();
    let max = report.max_resolved_error(resolution);
    let unresolved: Vec<String> = report
        .unresolved(resolution)
        .iter()
        .map(|t| format!("{} (|a| {:.1e}, |n| {:.1e})", t.name, t.analytic_norm, t.numeric_norm))
        .collect();
    let resolved = report.tensor_errors.len() - unresolved.len();
    let (name, idx, a, fd) = &report.worst_element;
    outcome(
        max < 1e-4 && report.checked == m.param_count() && resolved + 2 >= report.tensor_errors.len(),
        format!(
            "max per-tensor relative error {max:.3e} over {resolved} tensors / {} parameters; \
             numerically zero (both norms <= {resolution:.1e}): {unresolved:?}; worst element {name}[{idx}]: {a:.3e} vs {fd:.3e}",
            report.checked
        ),
    )
}

/// 3. Zero-weight cascades reproduce the zero-filled baseline.
fn identity_cascades() -> Outcome {
    let x = volume(31, 2, 2, 64);
    let mask = poisson_disc_mask(64, 64, 4.0, 4, 32).unwrap();
    let reference = sum_of_squares(&ifft2c(&x).unwrap()).unwrap();
    let base = nrmse(&zero_filled(&x, &mask).unwrap(), &reference).unwrap();
    let mut worst = 0.0f64;
    for spec in SPECS {
        for config in [Configuration::SingleChannel, Configuration::MultiChannel] {
            let mut m = model(spec, config, 2, 4, 33);
            m.zero_all();
            let e = nrmse(&reconstruct(&m, &x, &mask).unwrap(), &reference).unwrap();
            worst = worst.max((e - base).abs() / base);
        }
    }
    outcome(worst <= 1e-6, format!("max relative NRMSE difference {worst:.3e} (baseline NRMSE {base:.4})"))
}

/// 4. Masks hit the target fraction and fully sample the centre disc.
fn mask_contract() -> Outcome {
    let (ny, nz) = (218usize, 170usize);
    // brute-force enumeration of the centre disc, independent of the generator
    let (cy, cz) = (ny as i64 / 2, nz as i64 / 2);
    let disc: Vec<(usize, usize)> = (0..ny as i64)
        .flat_map(|y| (0..nz as i64).map(move |z| (y, z)))
        .filter(|&(y, z)| (y - cy).pow(2) + (z - cz).pow(2) <= 256)
        .map(|(y, z)| (y as usize, z as usize))
        .collect();
    let mut worst = 0.0f64;
    let mut centre_ok = true;
    for r in [2.0, 4.0, 8.0, 20.0] {
        for seed in 0..20 {
            let m = poisson_disc_mask(ny, nz, r, 16, 4000 + seed).unwrap();
            worst = worst.max((m.achieved_fraction() * r - 1.0).abs());
            centre_ok &= disc.iter().all(|&(y, z)| m.grid()[y * nz + z] == 1);
        }
    }
    outcome(
        disc.len() == 797 && worst <= 0.02 && centre_ok,
        format!("disc points {}, max relative fraction error {worst:.4}, centre fully sampled: {centre_ok}", disc.len()),
    )
}

struct Toy {
    report: MetricsReport,
    train_seconds: f64,
    epochs: usize,
}

/// Trains the toy IK cascade once; criteria 5 and 6 share it.
fn toy() -> &'static Toy {
    static TOY: OnceLock<Toy> = OnceLock::new();
    TOY.get_or_init(|| {
        // many small volumes, so the network sees many coil configurations
        let volumes = |seed: u64, n: u64| {
            let parts: Vec<KSpaceVolume> = (0..n).map(|v| volume(seed + v, 4, 4, 64)).collect();
            KSpaceVolume::concat(&parts).unwrap()
        };
        let (train, val, test) = (volumes(100, 25), volumes(200, 4), volumes(300, 6));
        let m = model("IK", Configuration::MultiChannel, 4, 8, 7);
        let config = TrainConfig {
            learning_rate: 3e-3,
            max_epochs: 30,
            patience: 5,
            batch_size: 2,
            seed: 1,
            acceleration: 4.0,
            center_radius: 5,
            ..TrainConfig::default()
        };
        let start = Instant::now();
        let (best, history) = Trainer::new(m, config).unwrap().run(&train, &val).unwrap();
        let train_seconds = start.elapsed().as_secs_f64();
        let opts = EvalOptions { accelerations: vec![2.0, 4.0, 8.0], center_radius: 5, seed: 3, ..EvalOptions::default() };
        let methods = vec![("zero-filled".to_string(), Method::ZeroFilled), ("IK".to_string(), Method::Cascade(&best))];
        let report = evaluate(&methods, &test, &opts).unwrap();
        Toy { report, train_seconds, epochs: history.epochs.len() }
    })
}

fn mean_of(report: &MetricsReport, model: &str, r: f64) -> (f64, f64) {
    let a = report.aggregate().into_iter().find(|a| a.model == model && a.r == r).unwrap();
    (a.nrmse.0, a.vif.0)
}

/// 5. A small trained cascade beats the zero-filled baseline on held-out slices.
fn toy_learning() -> Outcome {
    let t = toy();
    let (zf_e, zf_v) = mean_of(&t.report, "zero-filled", 4.0);
    let (ik_e, ik_v) = mean_of(&t.report, "IK", 4.0);
    outcome(
        ik_e <= 0.8 * zf_e && ik_v > zf_v && t.train_seconds <= 1800.0,
        format!(
            "R=4 NRMSE {ik_e:.4} vs zero-filled {zf_e:.4} (ratio {:.3}), VIF {ik_v:.4} vs {zf_v:.4}; {} epochs in {:.0} s",
            ik_e / zf_e,
            t.epochs,
            t.train_seconds
        ),
    )
}

/// 6. Errors grow and fidelity drops with acceleration.
fn monotone_degradation() -> Outcome {
    let t = toy();
    let rows: Vec<(f64, f64)> = [2.0, 4.0, 8.0].iter().map(|&r| mean_of(&t.report, "IK", r)).collect();
    let ok = rows.windows(2).all(|w| {
        let (e0, v0) = w[0];
        let (e1, v1) = w[1];
        (e1 >= e0 || (e0 - e1) <= 0.01 * e0) && (v1 <= v0 || (v1 - v0) <= 0.01 * v0)
    });
    let text: Vec<String> = [2, 4, 8].iter().zip(&rows).map(|(r, (e, v))| format!("R={r}: NRMSE {e:.4} VIF {v:.4}")).collect();
    outcome(ok, text.join("; "))
}

/// 7. Two cascaded U-nets take about twice as long as one.
fn timing_scaling() -> Outcome {
    let data = volume(71, 32, 4, 64);
    let mask = poisson_disc_mask(64, 64, 4.0, 5, 72).unwrap();
    let w = model("I", Configuration::MultiChannel, 4, 8, 73);
    let ww = model("II", Configuration::MultiChannel, 4, 8, 73);
    let tw = benchmark_time(&Method::Cascade(&w), &data, &mask, 256, 8).unwrap();
    let tww = benchmark_time(&Method::Cascade(&ww), &data, &mask, 256, 8).unwrap();
    let ratio = tww / tw;
    outcome(
        (1.6..=2.4).contains(&ratio),
        format!("W {tw:.2} ms/slice, WW {tww:.2} ms/slice, ratio {ratio:.3} over 256 slices"),
    )
}

/// 8. Metrics and rank tests against independent oracles.
fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut metric_err = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(16..400);
        let b: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let a: Vec<f32> = b.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
        let (mut sq, mut lo, mut hi) = (0.0f64, f64::MAX, f64::MIN);
        for i in 0..n {
            let d = a[i] as f64 - b[i] as f64;
            sq += d * d;
            lo = lo.min(b[i] as f64);
            hi = hi.max(b[i] as f64);
        }
        let rmse = (sq / n as f64).sqrt();
        metric_err = metric_err.max((nrmse_slice(&a, &b).unwrap() - rmse / (hi - lo)).abs());
        metric_err = metric_err.max((psnr_slice(&a, &b).unwrap() - 20.0 * (hi / rmse).log10()).abs());
    }

    let mut vif_err = 0.0f64;
    let smooth: Vec<f32> =
        (0..64 * 64).map(|p| (1.5 + ((p / 64) as f32 * 0.2).sin() * ((p % 64) as f32 * 0.3).cos()) as f32).collect();
    let ph: Vec<f32> = phantom_slice(82, 64, 64).into_iter().map(|v| v as f32).collect();
    for img in [&smooth, &ph] {
        vif_err = vif_err.max((vif_slice(img, img, 64, 64).unwrap() - 1.0).abs());
    }

    let stat_err = rank_fixtures();
    outcome(
        metric_err <= 1e-10 && vif_err <= 1e-6 && stat_err <= 1e-10,
        format!("NRMSE/pSNR max deviation {metric_err:.2e}; |VIF(x,x)-1| {vif_err:.2e}; rank tests max deviation {stat_err:.2e}"),
    )
}

/// Friedman χ² and Dunn z from rank tables worked out by hand.
fn rank_fixtures() -> f64 {
    let labels = |k: usize| (0..k).map(|i| format!("m{i}")).collect::<Vec<_>>();
    let mut err = 0.0f64;
    let mut diff = |a: f64, b: f64| err = err.max((a - b).abs());

    // no ties: ranks [1,3,2] [1,3,2] [2,1,3] [3,2,1]; sums 7, 9, 8
    let a = vec![vec![0.1, 0.5, 0.3], vec![0.2, 0.9, 0.4], vec![0.7, 0.6, 0.8], vec![0.3, 0.2, 0.1]];
    let (n, k) = (4.0, 3.0);
    let chi2 = 12.0 / (n * k * (k + 1.0)) * (49.0 + 81.0 + 64.0) - 3.0 * n * (k + 1.0);
    let f = friedman_test(&a, &labels(3)).unwrap();
    diff(f.statistic, chi2);
    diff(f.p_value, (-chi2 / 2.0).exp()); // χ² survival with 2 degrees of freedom
    let se = (k * (k + 1.0) / (6.0 * n)).sqrt();
    let d = dunn_posthoc(&a, &labels(3), 0.05).unwrap();
    diff(d.z[0][1], (7.0 - 9.0f64).abs() / n / se);
    diff(d.z[1][2], (9.0 - 8.0f64).abs() / n / se);
    diff(d.raw_p[0][1], 0.4795001221869535); // erfc(1/2)
    diff(d.adjusted_p[0][1], (3.0 * 0.4795001221869535f64).min(1.0));

    // ties: ranks [4,3,1,2] [3.5,3.5,1,2] [4,2,1,3] [3,4,1.5,1.5] [4,1,3,2] [2,3,4,1]
    let b = vec![
        vec![0.9, 0.7, 0.5, 0.6],
        vec![0.8, 0.8, 0.4, 0.6],
        vec![0.95, 0.6, 0.55, 0.7],
        vec![0.7, 0.72, 0.3, 0.3],
        vec![0.85, 0.5, 0.52, 0.51],
        vec![0.6, 0.61, 0.62, 0.5],
    ];
    let sums = [20.5, 16.5, 11.5, 11.5];
    let (n, k) = (6.0, 4.0);
    let raw = 12.0 / (n * k * (k + 1.0)) * sums.iter().map(|r| r * r).sum::<f64>() - 3.0 * n * (k + 1.0);
    let correction = 1.0 - (6.0 + 6.0) / (n * (k * k * k - k));
    let f = friedman_test(&b, &labels(4)).unwrap();
    diff(f.statistic, raw / correction);
    diff(f.p_value, 0.11675312352287351);
    let se = (k * (k + 1.0) / (6.0 * n)).sqrt();
    let d = dunn_posthoc(&b, &labels(4), 0.05).unwrap();
    diff(d.z[0][2], (sums[0] - sums[2]) / n / se);
    diff(d.z[2][3], 0.0);
    diff(d.raw_p[0][2], 0.0441713449084426);

    // all tied
    let c = vec![vec![1.0, 1.0, 1.0]; 5];
    let f = friedman_test(&c, &labels(3)).unwrap();
    diff(f.statistic, 0.0);
    diff(f.p_value, 1.0);
    let d = dunn_posthoc(&c, &labels(3), 0.05).unwrap();
    diff(d.z[0][1], 0.0);
    diff(d.adjusted_p[0][1], 1.0);
    err
}

/// 9. Two deterministic end-to-end runs write identical CSVs.
fn reproducibility() -> Outcome {
    let text = r#"
seed = 91
[data]
volumes = 4
slices_per_volume = 4
nc = 2
ny = 32
nz = 32
split = [2.0, 1.0, 1.0]
[model]
spec = "IK"
base_width = 4
[train]
max_epochs = 3
patience = 3
batch_size = 4
center_radius = 3
[eval]
accelerations = [2.0, 4.0]
center_radius = 3
"#;
    let config = PipelineConfig::from_text(text).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let ctx = RunContext { deterministic: true, ..RunContext::new(dir.path()) };
        for command in [Command::Synth, Command::Train, Command::Evaluate] {
            run_command(command, &config, &ctx).unwrap();
        }
    }
    let history = ModelPaths::of(&config.model).history;
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    let mut same = Vec::new();
    for f in ["eval/slices.csv", "eval/aggregate.csv", "eval/statistics.txt"] {
        same.push((f.to_string(), read(dirs[0].path(), f) == read(dirs[1].path(), f)));
    }
    // the seconds column is wall time; everything else must match
    let losses = |d: &Path| -> Vec<String> {
        String::from_utf8(read(d, &history)).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    let (h0, h1) = (losses(dirs[0].path()), losses(dirs[1].path()));
    same.push((format!("{history} (losses, {} epochs)", h0.len() - 1), h0 == h1 && h0.len() == 4));
    let ok = same.iter().all(|(_, s)| *s);
    let text: Vec<String> = same.iter().map(|(f, s)| format!("{f}: {}", if *s { "identical" } else { "DIFFERENT" })).collect();
    outcome(ok, text.join("; "))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("DC exactness", dc_exactness),
        ("gradient fidelity", gradient_fidelity),
        ("identity-cascade equivalence", identity_cascades),
        ("mask contract", mask_contract),
        ("toy-scale learning", toy_learning),
        ("monotonic degradation", monotone_degradation),
        ("timing scaling", timing_scaling),
        ("metric oracles", metric_oracles),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let status = if result.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!result.pass);
        println!("{status} [{id}] {name}: {} ({:.1} s)", result.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
