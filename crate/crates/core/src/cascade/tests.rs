use super::*;
use crate::data::DatasetMeta;
use crate::sampling::apply_mask_tensor;
use crate::transform::{fft2c_tensor, ifft2c_tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn volume(ns: usize, nc: usize, ny: usize, nz: usize, seed: u64) -> KSpaceVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..ns * nc * ny * nz)
        .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    KSpaceVolume::new(ComplexTensor::from_vec(&[ns, nc, ny, nz], data).unwrap(), DatasetMeta::new(ns, nc, ny, nz))
        .unwrap()
}

fn random_mask(ny: usize, nz: usize, fraction: f64, seed: u64) -> SamplingMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = (0..ny * nz).map(|_| u8::from(rng.random_bool(fraction))).collect();
    SamplingMask::from_grid(ny, nz, grid, 1.0 / fraction, 0, seed).unwrap()
}

fn model(spec: &str, config: Configuration, nc: usize, seed: u64) -> CascadeModel<f32> {
    CascadeModel::unet(CascadeSpec::parse(spec, config, nc).unwrap(), 4, seed).unwrap()
}

fn max_abs_diff(a: &ComplexTensor, b: &ComplexTensor) -> f32 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f32::max)
}

fn max_abs(a: &ComplexTensor) -> f32 {
    a.data().iter().map(|x| x.norm()).fold(0.0, f32::max)
}

fn assert_sampled_exact(out: &KSpaceVolume, x_u: &KSpaceVolume, mask: &SamplingMask) {
    let plane = mask.grid().len();
    for (i, (o, m)) in out.data().data().iter().zip(x_u.data().data()).enumerate() {
        if mask.grid()[i % plane] == 1 {
            assert_eq!(o, m, "sampled position {i}");
        }
    }
}

#[test]
fn spec_strings() {
    for s in ["II", "KK", "IK", "KI", "IIII", "IKIK"] {
        let spec = CascadeSpec::parse(s, Configuration::MultiChannel, 4).unwrap();
        assert_eq!(spec.name(), s);
        assert_eq!(spec.kind(), BlockKind::UNet);
        assert_eq!(spec.c_in(), 8);
    }
    let dc = CascadeSpec::parse("deepcascade", Configuration::SingleChannel, 12).unwrap();
    assert_eq!(dc.domains(), &[Domain::Image; 6]);
    assert_eq!((dc.kind(), dc.c_in(), dc.name().as_str()), (BlockKind::DeepCascade, 2, "deepcascade"));
    for bad in ["", "IX", "wnet"] {
        assert!(matches!(CascadeSpec::parse(bad, Configuration::SingleChannel, 1), Err(Error::Config(_))));
    }
}

#[test]
fn dc_replace_hand_example() {
    let mut tape = Tape::<f64>::new();
    let pred = tape.constant(Array::from_vec(&[1, 2, 2, 2], vec![9.0, 9.0, 9.0, 9.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
    let x_u = tape.constant(Array::from_vec(&[1, 2, 2, 2], vec![1.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
    let mask = SamplingMask::from_grid(2, 2, vec![1, 0, 0, 1], 2.0, 0, 0).unwrap();
    let keep = tape.constant(keep_array(&mask, &[1, 2, 2, 2]).unwrap());
    let out = dc_tape(&mut tape, pred, x_u, keep).unwrap();
    assert_eq!(&tape.value(out).data()[..4], &[1.0, 9.0, 9.0, 4.0]);
}

#[test]
fn dc_replace_limits() {
    let pred = volume(2, 3, 16, 16, 1);
    let x = volume(2, 3, 16, 16, 2);
    let full = SamplingMask::full(16, 16);
    assert_eq!(dc_replace(&pred, &x, &full).unwrap(), x);
    let empty = SamplingMask::empty(16, 16);
    let zero = apply_mask(&x, &empty).unwrap();
    assert_eq!(dc_replace(&pred, &zero, &empty).unwrap(), pred);
    assert!(dc_replace(&pred, &volume(2, 2, 16, 16, 3), &full).is_err());
}

#[test]
fn blocks_with_zero_weights_reduce_to_dc() {
    let mask = random_mask(16, 16, 0.3, 4);
    let x_in = volume(3, 2, 16, 16, 5);
    let x_u = apply_mask(&volume(3, 2, 16, 16, 6), &mask).unwrap();
    let mut m = model("KI", Configuration::MultiChannel, 2, 7);
    m.zero_all();
    let expected = dc_replace(&x_in, &x_u, &mask).unwrap();
    assert_eq!(k_block(&m.blocks()[0], &x_in, &x_u, &mask).unwrap(), expected);
    let via_image = i_block(&m.blocks()[1], &x_in, &x_u, &mask).unwrap();
    assert!(max_abs_diff(via_image.data(), expected.data()) <= 1e-6 * max_abs(expected.data()));
    assert_sampled_exact(&via_image, &x_u, &mask);

    let trained = model("KI", Configuration::MultiChannel, 2, 8);
    let full = SamplingMask::full(16, 16);
    let x = volume(3, 2, 16, 16, 9);
    assert_eq!(k_block(&trained.blocks()[0], &x_in, &x, &full).unwrap(), x);
    assert_eq!(i_block(&trained.blocks()[1], &x_in, &x, &full).unwrap(), x);
}

/// Network applied through the tape alone, on packed data.
fn net_only(block: &Subnet<f32>, x: &ComplexTensor) -> ComplexTensor {
    let mut tape = Tape::inference();
    let v = tape.constant(packed(x).unwrap());
    let y = block.forward(&mut tape, v, 0).unwrap();
    unpacked(tape.value(y).clone()).unwrap()
}

#[test]
fn blocks_match_manual_composition() {
    let mask = random_mask(16, 16, 0.25, 10);
    let x_in = volume(2, 2, 16, 16, 11);
    let x_u = apply_mask(&volume(2, 2, 16, 16, 12), &mask).unwrap();
    let m = model("KI", Configuration::MultiChannel, 2, 13);
    let meta = x_u.meta().clone();

    let pred = KSpaceVolume::new(net_only(&m.blocks()[0], x_in.data()), meta.clone()).unwrap();
    assert_eq!(k_block(&m.blocks()[0], &x_in, &x_u, &mask).unwrap(), dc_replace(&pred, &x_u, &mask).unwrap());

    let img = ifft2c_tensor(x_in.data()).unwrap();
    let pred = KSpaceVolume::new(fft2c_tensor(&net_only(&m.blocks()[1], &img)).unwrap(), meta).unwrap();
    let expected = dc_replace(&pred, &x_u, &mask).unwrap();
    let got = i_block(&m.blocks()[1], &x_in, &x_u, &mask).unwrap();
    assert!(max_abs_diff(got.data(), expected.data()) <= 1e-5 * max_abs(expected.data()));
}

#[test]
fn identity_cascades_leave_measurement_unchanged() {
    let mask = random_mask(16, 16, 0.3, 14);
    let x_u = apply_mask(&volume(2, 2, 16, 16, 15), &mask).unwrap();
    let mut k = model("K", Configuration::MultiChannel, 2, 16);
    k.zero_all();
    assert_eq!(cascade_forward(&k, &x_u, &mask).unwrap(), x_u);
    let mut ik = model("IK", Configuration::MultiChannel, 2, 17);
    ik.zero_all();
    let out = cascade_forward(&ik, &x_u, &mask).unwrap();
    assert!(max_abs_diff(out.data(), x_u.data()) <= 1e-6 * max_abs(x_u.data()));
}

#[test]
fn ikik_matches_fourfold_composition() {
    let mask = random_mask(16, 16, 0.3, 18);
    let x = volume(2, 2, 16, 16, 19);
    let x_u = apply_mask(&x, &mask).unwrap();
    let m = model("IKIK", Configuration::MultiChannel, 2, 20);
    let b = m.blocks();
    let mut manual = i_block(&b[0], &x_u, &x_u, &mask).unwrap();
    manual = k_block(&b[1], &manual, &x_u, &mask).unwrap();
    manual = i_block(&b[2], &manual, &x_u, &mask).unwrap();
    manual = k_block(&b[3], &manual, &x_u, &mask).unwrap();
    let got = cascade_forward(&m, &x, &mask).unwrap();
    assert_eq!(got, manual);
    assert_sampled_exact(&got, &x_u, &mask);
}

#[test]
fn ik_and_ki_differ() {
    let mask = random_mask(16, 16, 0.3, 21);
    let x_u = apply_mask(&volume(1, 2, 16, 16, 22), &mask).unwrap();
    let ik = model("IK", Configuration::MultiChannel, 2, 23);
    let ki = model("KI", Configuration::MultiChannel, 2, 23);
    assert_eq!(ik.blocks(), ki.blocks());
    assert_ne!(cascade_forward(&ik, &x_u, &mask).unwrap(), cascade_forward(&ki, &x_u, &mask).unwrap());
}

#[test]
fn reconstruction_limits() {
    let x = volume(2, 3, 16, 16, 24);
    let reference = sum_of_squares(&ifft2c(&x).unwrap()).unwrap();
    let m = model("IK", Configuration::MultiChannel, 3, 25);
    let full = reconstruct(&m, &x, &SamplingMask::full(16, 16)).unwrap();
    let (a, b) = (full.combined().unwrap(), reference.combined().unwrap());
    let err = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f32::max);
    assert!(err <= 1e-6 * b.max(), "{err}");

    let mask = random_mask(16, 16, 0.25, 26);
    let mut zero = model("IIII", Configuration::MultiChannel, 3, 27);
    zero.zero_all();
    let r = reconstruct(&zero, &x, &mask).unwrap();
    let zf = zero_filled(&x, &mask).unwrap();
    let (a, b) = (r.combined().unwrap(), zf.combined().unwrap());
    let err = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f32::max);
    assert!(err <= 1e-6 * b.max(), "{err}");
}

#[test]
fn single_and_multi_channel_agree_for_one_coil() {
    let mask = random_mask(16, 16, 0.3, 28);
    let x = volume(2, 1, 16, 16, 29);
    let sc = model("IK", Configuration::SingleChannel, 1, 30);
    let mc = model("IK", Configuration::MultiChannel, 1, 30);
    assert_eq!(reconstruct(&sc, &x, &mask).unwrap(), reconstruct(&mc, &x, &mask).unwrap());
}

#[test]
fn single_channel_processes_coils_independently() {
    let mask = random_mask(16, 16, 0.3, 31);
    let x = volume(2, 3, 16, 16, 32);
    let sc = model("KI", Configuration::SingleChannel, 3, 33);
    let joint = cascade_forward(&sc, &x, &mask).unwrap();
    for c in 0..3 {
        let mut coil = Vec::new();
        for s in 0..2 {
            coil.extend_from_slice(&x.data().data()[(s * 3 + c) * 256..(s * 3 + c + 1) * 256]);
        }
        let single = KSpaceVolume::new(
            ComplexTensor::from_vec(&[2, 1, 16, 16], coil).unwrap(),
            DatasetMeta::new(2, 1, 16, 16),
        )
        .unwrap();
        let out = cascade_forward(&sc, &single, &mask).unwrap();
        for s in 0..2 {
            let a = &joint.data().data()[(s * 3 + c) * 256..(s * 3 + c + 1) * 256];
            assert_eq!(a, &out.data().data()[s * 256..(s + 1) * 256]);
        }
    }
    assert!(matches!(
        cascade_forward(&model("KI", Configuration::MultiChannel, 2, 0), &x, &mask),
        Err(Error::Shape(_))
    ));
}

#[test]
fn indivisible_planes_are_padded_per_block() {
    let mask = random_mask(20, 26, 0.3, 34);
    let x = volume(1, 2, 20, 26, 35);
    let m = model("IK", Configuration::MultiChannel, 2, 36);
    let out = cascade_forward(&m, &x, &mask).unwrap();
    assert_eq!(out.data().shape(), &[1, 2, 20, 26]);
    assert_sampled_exact(&out, &apply_mask(&x, &mask).unwrap(), &mask);
    assert!(out.data().is_finite());
}

#[test]
fn deep_cascade_baseline() {
    let sc = build_deep_cascade::<f32>(Configuration::SingleChannel, 12, 6, 0).unwrap();
    assert_eq!(sc.param_count(), 894_348);
    assert!(sc.blocks().iter().all(|b| b.layers().len() == 6));
    let per_block: usize = crate::network::deep_cascade_layers(2, 64).iter().map(|l| l.param_count()).sum();
    assert_eq!(sc.param_count(), 6 * per_block);
    let mc = build_deep_cascade::<f32>(Configuration::MultiChannel, 12, 6, 0).unwrap();
    assert_eq!(mc.param_count(), 978_960);

    let mut small = build_deep_cascade::<f32>(Configuration::MultiChannel, 2, 6, 1).unwrap();
    small.zero_all();
    let x = volume(1, 2, 18, 16, 37);
    let mask = random_mask(18, 16, 0.3, 38);
    let a = reconstruct(&small, &x, &mask).unwrap();
    let b = zero_filled(&x, &mask).unwrap();
    let err = a.combined().unwrap().data().iter().zip(b.combined().unwrap().data()).map(|(p, q)| (p - q).abs());
    assert!(err.fold(0.0, f32::max) <= 1e-6 * b.combined().unwrap().max());
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("IKIK", Configuration::SingleChannel, 4, 39);
    let path = dir.path().join("model.txt");
    save_model(&m, &path, "weights.ckpt").unwrap();
    assert!(dir.path().join("weights.ckpt").exists());
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, m);

    let text = std::fs::read_to_string(&path).unwrap().replace("widths = 4,8,16,32", "widths = 4,8,16,64");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Shape(_))));
}

#[test]
fn masks_are_applied_before_the_cascade() {
    let mask = random_mask(16, 16, 0.3, 40);
    let x = volume(1, 2, 16, 16, 41);
    let m = model("KK", Configuration::MultiChannel, 2, 42);
    let from_full = cascade_forward(&m, &x, &mask).unwrap();
    let from_masked = cascade_forward(&m, &apply_mask(&x, &mask).unwrap(), &mask).unwrap();
    assert_eq!(from_full, from_masked);
    let masked = apply_mask_tensor(x.data(), &mask).unwrap();
    assert_sampled_exact(&from_full, &KSpaceVolume::new(masked, x.meta().clone()).unwrap(), &mask);
}
