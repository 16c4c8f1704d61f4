use flexml::gen::{random_tensor, rng};
use flexml::ir::layer::{Activation, LayerDescriptor};
use flexml::ir::requant::NlFunction;
use flexml::ir::sparsity::{apply_block_sparsity, SparsityIndexMap};
use flexml::ir::svm::{Norm, SvmModel};
use flexml::ir::tensor::{Precision, QuantTensor};
use flexml::ir::workload::{LayerSpec, SvmHost, Workload};
use flexml::oracle::*;
use flexml::FlexError;
use proptest::prelude::*;

fn t(shape: Vec<usize>, data: Vec<i32>) -> QuantTensor {
    QuantTensor::new(shape, Precision::Int8, data).unwrap()
}

/// Brute force with 64-bit accumulators, explicit padded input, wrapped to
/// 32 bits at the end.
fn brute_conv(input: &QuantTensor, w: &QuantTensor, d: &LayerDescriptor) -> Vec<i64> {
    let (iy, ix) = (d.in_y() as i64, d.in_x() as i64);
    let (py, px) = (d.pad_y() as i64, d.pad_x() as i64);
    let mut out = vec![];
    for k in 0..d.k {
        for oy in 0..d.oy {
            for ox in 0..d.ox {
                let mut acc = 0i64;
                for c in 0..d.c {
                    for fy in 0..d.fy {
                        for fx in 0..d.fx {
                            let y = (oy * d.stride + fy * d.dilation) as i64 - py;
                            let x = (ox * d.stride + fx * d.dilation) as i64 - px;
                            if y < 0 || x < 0 || y >= iy || x >= ix {
                                continue;
                            }
                            let a = input.data()[((c as i64 * iy + y) * ix + x) as usize] as i64;
                            let b = w.data()[((k * d.c + c) * d.fy + fy) * d.fx + fx] as i64;
                            acc += a * b;
                        }
                    }
                }
                out.push(acc as i32 as i64);
            }
        }
    }
    out
}

fn requant_floor(acc: i64, shift: u32, relu: bool) -> i32 {
    let a = if relu { acc.max(0) } else { acc };
    a.div_euclid(1 << shift).clamp(-128, 127) as i32
}

#[test]
fn identity_kernel() {
    let d = LayerDescriptor::conv2d(1, 1, 1, 1, 1, 1);
    let out = conv2d_ref(&t(vec![1, 1, 1], vec![-7]), &t(vec![1, 1, 1, 1], vec![1]), &d).unwrap();
    assert_eq!(out.data(), &[-7]);
}

#[test]
fn cnn3x3_matches_brute_force() {
    let mut r = rng(11);
    let d = LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3)
        .with_shift(7)
        .with_activation(Activation::Relu);
    let x = random_tensor(d.input_shape(), Precision::Int8, &mut r);
    let w = random_tensor(d.weight_shape().unwrap(), Precision::Int8, &mut r);
    let got = conv2d_ref(&x, &w, &d).unwrap();
    let want: Vec<i32> = brute_conv(&x, &w, &d)
        .into_iter()
        .map(|a| requant_floor(a, 7, true))
        .collect();
    assert_eq!(got.data(), want.as_slice());
}

#[test]
fn zero_weights_give_zero() {
    let mut r = rng(2);
    let d = LayerDescriptor::conv2d(4, 8, 5, 5, 3, 3).with_activation(Activation::Relu);
    let x = random_tensor(d.input_shape(), Precision::Int8, &mut r);
    let w = QuantTensor::zeros(d.weight_shape().unwrap(), Precision::Int8).unwrap();
    assert!(conv2d_ref(&x, &w, &d).unwrap().data().iter().all(|&v| v == 0));
}

#[test]
fn accumulator_wraps_at_32_bits() {
    // 1-D dense with C large enough that 64-bit sums exceed i32
    let c = 140_000;
    let d = LayerDescriptor::dense(c, 1, 1);
    let x = t(vec![1, c], vec![-128; c]);
    let w = t(vec![1, c], vec![-128; c]);
    let out = dense_ref(&x, &w, &d).unwrap();
    let wrapped = (128i64 * 128 * c as i64) as i32;
    assert_eq!(out.data()[0], wrapped.clamp(-128, 127));
    assert!(wrapped < 0);
}

#[test]
fn shape_mismatch_is_reported() {
    let d = LayerDescriptor::conv2d(2, 2, 4, 4, 3, 3);
    let x = QuantTensor::zeros(vec![2, 4, 5], Precision::Int8).unwrap();
    let w = QuantTensor::zeros(d.weight_shape().unwrap(), Precision::Int8).unwrap();
    assert!(matches!(conv2d_ref(&x, &w, &d), Err(FlexError::ShapeMismatch(_))));
}

fn stuffed(x: &QuantTensor, u: usize) -> QuantTensor {
    let (c, iy, ix) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![0; c * iy * u * ix * u];
    for ch in 0..c {
        for y in 0..iy {
            for xx in 0..ix {
                out[(ch * iy * u + y * u) * ix * u + xx * u] = x.data()[(ch * iy + y) * ix + xx];
            }
        }
    }
    t(vec![c, iy * u, ix * u], out)
}

#[test]
fn deconv_upsample_one_is_conv() {
    let mut r = rng(5);
    let d = LayerDescriptor::deconv2d(3, 4, 5, 5, 3, 1).with_shift(3);
    let x = random_tensor(d.input_shape(), Precision::Int8, &mut r);
    let w = random_tensor(d.weight_shape().unwrap(), Precision::Int8, &mut r);
    let c = LayerDescriptor::conv2d(3, 4, 5, 5, 3, 3).with_shift(3);
    assert_eq!(deconv2d_ref(&x, &w, &d).unwrap(), conv2d_ref(&x, &w, &c).unwrap());
}

#[test]
fn dilated_conv1d_equals_expanded_filter() {
    let mut r = rng(9);
    let d = LayerDescriptor::conv1d_dilated(4, 3, 12, 3, 2).with_shift(2);
    let x = random_tensor(d.input_shape(), Precision::Int8, &mut r);
    let w = random_tensor(d.weight_shape().unwrap(), Precision::Int8, &mut r);
    // expanded filter of width 5 with zeros at odd taps, no dilation
    let mut we = vec![0; 3 * 4 * 5];
    for k in 0..3 {
        for c in 0..4 {
            for f in 0..3 {
                we[(k * 4 + c) * 5 + 2 * f] = w.data()[(k * 4 + c) * 3 + f];
            }
        }
    }
    let de = LayerDescriptor::conv1d_dilated(4, 3, 12, 5, 1).with_shift(2);
    assert_eq!(de.input_shape(), d.input_shape());
    let want = conv1d_dilated_ref(&x, &t(vec![3, 4, 1, 5], we), &de).unwrap();
    assert_eq!(conv1d_dilated_ref(&x, &w, &d).unwrap(), want);
}

#[test]
fn maxpool_constant_and_values() {
    let d = LayerDescriptor::maxpool(2, 2, 2, 2);
    let x = t(vec![2, 4, 4], vec![5; 32]);
    assert!(maxpool_ref(&x, &d).unwrap().data().iter().all(|&v| v == 5));
    let x = t(vec![2, 4, 4], (0..32).map(|v| v - 16).collect());
    assert_eq!(maxpool_ref(&x, &d).unwrap().data(), &[-11, -9, -3, -1, 5, 7, 13, 15]);
}

fn model(sv: Vec<i32>, n: usize, d: usize, norm: Norm) -> SvmModel {
    SvmModel::new(t(vec![n, d], sv), vec![1.0; n], 1.0, 0.0, norm).unwrap()
}

#[test]
fn svm_norm_examples() {
    assert_eq!(svm_norm_ref(&[3, -1], &model(vec![1, 1], 1, 2, Norm::L1)).unwrap(), vec![4]);
    assert_eq!(svm_norm_ref(&[3, -1], &model(vec![1, 1], 1, 2, Norm::L2)).unwrap(), vec![8]);
    assert_eq!(svm_norm_ref(&[3, -1], &model(vec![3, -1], 1, 2, Norm::L2)).unwrap(), vec![0]);
    assert_eq!(svm_norm_ref(&[3, -1, 4], &model(vec![3, 5, 4], 1, 3, Norm::L2)).unwrap(), vec![36]);
    assert!(svm_norm_ref(&[1], &model(vec![1, 1], 1, 2, Norm::L1)).is_err());
}

#[test]
fn svm_decision_examples() {
    let mut m = model(vec![0], 1, 1, Norm::L2);
    assert_eq!(svm_decision_ref(&[0], &m), 1.0);
    m.bias = 1.0;
    assert_eq!(svm_decision_ref(&[0], &m), 0.0);
    let m = SvmModel::new(t(vec![2, 1], vec![0, 0]), vec![0.5, 0.25], 1.0, 0.1, Norm::L2).unwrap();
    let want = 0.5 * (-1.0f64).exp() + 0.25 * (-4.0f64).exp() - 0.1;
    assert!((svm_decision_ref(&[2, 8], &m) - want).abs() < 1e-12);
}

#[test]
fn nlfg_exact_anchors() {
    assert_eq!(nlfg_exact(0, NlFunction::Tanh), 0);
    assert_eq!(nlfg_exact(0, NlFunction::Sigmoid), 64);
    assert_eq!(nlfg_exact(127, NlFunction::Tanh), 127);
    assert_eq!(nlfg_exact(-128, NlFunction::Tanh), -128);
}

#[test]
fn chain_reshapes_between_layers() {
    let mut r = rng(4);
    let conv = LayerDescriptor::conv2d(2, 4, 4, 4, 3, 3).with_shift(6);
    let pool = LayerDescriptor::maxpool(4, 2, 2, 2);
    let fc = LayerDescriptor::dense(16, 3, 1).with_shift(5);
    let layers = vec![
        LayerSpec { weights: Some(random_tensor(conv.weight_shape().unwrap(), Precision::Int8, &mut r)), desc: conv.clone() },
        LayerSpec { weights: None, desc: pool.clone() },
        LayerSpec { weights: Some(random_tensor(vec![3, 16], Precision::Int8, &mut r)), desc: fc.clone() },
    ];
    let x = random_tensor(conv.input_shape(), Precision::Int8, &mut r);
    let outs = run_chain(&x, layers.iter().map(|l| (&l.desc, l.weights.as_ref()))).unwrap();
    assert_eq!(outs.len(), 3);
    assert_eq!(outs[2].shape(), &[1, 3]);
    let a = conv2d_ref(&x, layers[0].weights.as_ref().unwrap(), &conv).unwrap();
    let b = maxpool_ref(&a, &pool).unwrap();
    let c = dense_ref(&b.reshaped(vec![1, 16]).unwrap(), layers[2].weights.as_ref().unwrap(), &fc).unwrap();
    assert_eq!(outs[2], c);
}

#[test]
fn bundle_round_trip_with_svm() {
    let mut r = rng(8);
    let svm = LayerDescriptor::svm_norm(6, 4, 2).with_norm(Norm::L1);
    let w = Workload {
        name: "svm".into(),
        input: random_tensor(vec![2, 6], Precision::Int8, &mut r),
        layers: vec![LayerSpec { weights: Some(random_tensor(vec![4, 6], Precision::Int8, &mut r)), desc: svm }],
        svm: Some(SvmHost { alphas: vec![0.25; 4], sigma: 20.0, bias: 0.1, norm: Norm::L1, norm_squared: false }),
    };
    let b = GoldenBundle::from_workload(&w).unwrap();
    assert_eq!(b.decisions.len(), 2);
    assert_eq!(b.final_output().unwrap().precision(), Precision::Int32);
    let dir = tempdir();
    let p = dir.join("b.fxb");
    b.save(&p).unwrap();
    let back = GoldenBundle::load(&p).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.to_workload().unwrap(), w);
}

fn tempdir() -> std::path::PathBuf {
    let p = std::env::temp_dir().join(format!("flexml-oracle-{}", std::process::id()));
    std::fs::create_dir_all(&p).unwrap();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn deconv_equals_conv_on_stuffed_input(
        seed in any::<u64>(), u in 1usize..=3, c in 1usize..4, k in 1usize..4,
        ix in 1usize..5, iy in 1usize..5, f in prop::sample::select(vec![1usize, 3, 5]),
    ) {
        let mut r = rng(seed);
        let d = LayerDescriptor::deconv2d(c, k, ix, iy, f, u).with_shift(2);
        let x = random_tensor(d.input_shape(), Precision::Int8, &mut r);
        let w = random_tensor(d.weight_shape().unwrap(), Precision::Int8, &mut r);
        let s = stuffed(&x, u);
        let cd = LayerDescriptor::conv2d(c, k, ix * u, iy * u, f, f).with_shift(2);
        prop_assert_eq!(deconv2d_ref(&x, &w, &d).unwrap(), conv2d_ref(&s, &w, &cd).unwrap());
    }

    #[test]
    fn dense_batch_is_concatenation(seed in any::<u64>(), c in 1usize..20, k in 1usize..12, b in 1usize..5) {
        let mut r = rng(seed);
        let d = LayerDescriptor::dense(c, k, b).with_shift(4);
        let x = random_tensor(vec![b, c], Precision::Int8, &mut r);
        let w = random_tensor(vec![k, c], Precision::Int8, &mut r);
        let all = dense_ref(&x, &w, &d).unwrap();
        let one = LayerDescriptor::dense(c, k, 1).with_shift(4);
        let mut cat = vec![];
        for i in 0..b {
            let xi = t(vec![1, c], x.data()[i * c..(i + 1) * c].to_vec());
            cat.extend_from_slice(dense_ref(&xi, &w, &one).unwrap().data());
        }
        prop_assert_eq!(all.data(), cat.as_slice());
    }

    #[test]
    fn l2_norm_nonnegative_and_zero_iff_equal(x in prop::collection::vec(-128i32..=127, 1..16), seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = x.len();
        let other = random_tensor(vec![1, d], Precision::Int8, &mut r);
        let mut sv = x.clone();
        sv.extend_from_slice(other.data());
        let m = model(sv, 2, d, Norm::L2);
        let n = svm_norm_ref(&x, &m).unwrap();
        prop_assert_eq!(n[0], 0);
        prop_assert!(n[1] >= 0);
        prop_assert_eq!(n[1] == 0, other.data() == x.as_slice());
    }

    #[test]
    fn pruned_channels_contribute_nothing(seed in any::<u64>(), frac in 0usize..8) {
        let mut r = rng(seed);
        let pruned: Vec<usize> = (0..frac).collect();
        let map = SparsityIndexMap::uniform(16, 8, &pruned);
        let d = LayerDescriptor::conv2d(8, 16, 4, 4, 3, 3).with_shift(5);
        let x = random_tensor(d.input_shape(), Precision::Int8, &mut r);
        let w = random_tensor(d.weight_shape().unwrap(), Precision::Int8, &mut r);
        let sparse = conv2d_ref(&x, &w, &d.clone().with_sparsity(map.clone())).unwrap();
        let masked = conv2d_ref(&x, &apply_block_sparsity(&w, &map).unwrap(), &d).unwrap();
        prop_assert_eq!(&sparse, &masked);
        // skipping the channels in the input gives the same sum
        let mut xz = x.data().to_vec();
        for c in &pruned { for v in &mut xz[c * 16..(c + 1) * 16] { *v = 0; } }
        let skipped = conv2d_ref(&t(x.shape().to_vec(), xz), &w, &d).unwrap();
        prop_assert_eq!(sparse, skipped);
    }
}
