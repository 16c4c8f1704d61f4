use flexml::accel_sim::{simulate, SimKnobs};
use flexml::compiler::{link_program, MemConfig};
use flexml::gen::random_workload;
use flexml::ir::layer::{Activation, LayerDescriptor};
use flexml::ir::sparsity::SparsityIndexMap;
use flexml::ir::svm::Norm;
use flexml::ir::tensor::Precision;
use proptest::prelude::*;

fn check_exact(layers: &[LayerDescriptor], seed: u64) -> flexml::accel_sim::CycleReport {
    let w = random_workload("t", layers, seed);
    let cfg = MemConfig::default();
    let (img, golden) = link_program(&w, &cfg).unwrap();
    let res = simulate(&img, &cfg, &SimKnobs::default()).unwrap();
    assert_eq!(res.outputs.len(), golden.expected_outputs.len());
    for (n, ((name, got), want)) in res.outputs.iter().zip(&golden.expected_outputs).enumerate() {
        assert_eq!(got, &want.0, "layer {n} ({name}) differs from the oracle");
    }
    res.report
}

fn cycles(layers: &[LayerDescriptor]) -> u64 {
    let w = random_workload("t", layers, 1);
    let cfg = MemConfig::default();
    let (img, _) = link_program(&w, &cfg).unwrap();
    let k = SimKnobs {
        functional: false,
        ..Default::default()
    };
    simulate(&img, &cfg, &k).unwrap().report.total_cycles
}

#[test]
fn cnn3x3_calibration_point() {
    let r = check_exact(&[LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3).with_shift(7)], 3);
    assert_eq!(r.total_cycles, 41_220);
    assert_eq!(r.phases.sum(), r.total_cycles);
    assert_eq!(r.phases.dma_in, 2176);
    assert_eq!(r.phases.dma_out, 1024);
    assert!((r.utilization - 0.894).abs() < 1e-3, "{}", r.utilization);
}

#[test]
fn lower_precision_scales_throughput() {
    let base = LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3);
    let c8 = cycles(&[base.clone()]);
    let c4 = cycles(&[base.clone().with_precision(Precision::Int4)]);
    let c2 = cycles(&[base.with_precision(Precision::Int2)]);
    assert_eq!(c4, 20_612);
    assert!((c8 as f64 / c4 as f64 - 2.0).abs() < 0.01);
    assert!((c8 as f64 / c2 as f64 - 4.0).abs() < 0.02);
}

#[test]
fn sparse_speedups() {
    let base = LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3);
    let dense = cycles(&[base.clone()]) as f64;
    let half: Vec<usize> = (0..16).collect();
    let most: Vec<usize> = (0..28).collect();
    let s50 = dense / cycles(&[base.clone().with_sparsity(SparsityIndexMap::uniform(32, 32, &half))]) as f64;
    let s875 = cycles(&[base.with_sparsity(SparsityIndexMap::uniform(32, 32, &most))]);
    assert!((1.6..2.0).contains(&s50), "{s50}");
    assert_eq!(s875, 7188);
}

#[test]
fn every_kind_is_bit_exact() {
    check_exact(&[LayerDescriptor::conv2d(5, 11, 7, 6, 3, 3).with_shift(6).with_activation(Activation::Relu)], 1);
    check_exact(&[LayerDescriptor::conv1d_dilated(6, 9, 20, 3, 4).with_shift(5)], 2);
    check_exact(&[LayerDescriptor::conv1d_dilated(3, 4, 10, 3, 9).with_shift(5)], 3);
    check_exact(&[LayerDescriptor::deconv2d(4, 9, 5, 4, 3, 2).with_shift(6)], 4);
    check_exact(&[LayerDescriptor::deconv2d(3, 5, 3, 3, 3, 3).with_shift(6)], 5);
    check_exact(&[LayerDescriptor::deconv2d(3, 5, 2, 2, 5, 4).with_shift(6)], 12);
    check_exact(&[LayerDescriptor::dense(37, 21, 3).with_shift(7)], 6);
    check_exact(&[LayerDescriptor::rnn_step(16, 16, 2).with_shift(6)], 7);
    check_exact(&[LayerDescriptor::svm_norm(19, 13, 2)], 8);
    check_exact(&[LayerDescriptor::svm_norm(19, 13, 2).with_norm(Norm::L1)], 9);
    check_exact(&[LayerDescriptor::maxpool(6, 4, 3, 2)], 10);
    check_exact(&[LayerDescriptor::conv2d(8, 8, 8, 8, 3, 3).with_stride(2).with_input_extent(17, 17).with_shift(6)], 11);
}

#[test]
fn sub_byte_and_sparse_are_bit_exact() {
    for p in [Precision::Int4, Precision::Int2] {
        check_exact(&[LayerDescriptor::conv2d(6, 37, 9, 5, 3, 3).with_precision(p).with_shift(3)], 20);
        check_exact(&[LayerDescriptor::dense(21, 45, 3).with_precision(p).with_shift(3)], 21);
    }
    let mut map = SparsityIndexMap::dense(20, 40);
    for (b, row) in map.bits.iter_mut().enumerate() {
        for (c, bit) in row.iter_mut().enumerate() {
            *bit = (b + c) % 3 != 0;
        }
    }
    check_exact(&[LayerDescriptor::conv2d(40, 20, 6, 6, 3, 3).with_sparsity(map.clone()).with_shift(5)], 22);
    check_exact(&[LayerDescriptor::dense(40, 20, 2).with_sparsity(map).with_shift(5)], 23);
}

#[test]
fn multi_tile_layers_are_bit_exact() {
    // weights (64 * 64 * 9 bytes) and activations both exceed one bank
    let r = check_exact(&[LayerDescriptor::conv2d(64, 64, 24, 24, 3, 3).with_shift(8)], 30);
    assert!(r.layers[0].tiles > 2);
    assert_eq!(r.phases.sum(), r.total_cycles);
}

#[test]
fn chains_are_bit_exact() {
    let r = check_exact(
        &[
            LayerDescriptor::conv2d(3, 8, 8, 8, 3, 3).with_shift(5).with_activation(Activation::Relu),
            LayerDescriptor::maxpool(8, 4, 4, 2),
            LayerDescriptor::dense(128, 10, 1).with_shift(7),
        ],
        40,
    );
    assert_eq!(r.layers.len(), 3);
}

#[test]
fn all_pruned_layer_only_pays_overheads() {
    let d = LayerDescriptor::conv2d(16, 16, 8, 8, 3, 3);
    let all: Vec<usize> = (0..16).collect();
    let r = check_exact(&[d.with_sparsity(SparsityIndexMap::uniform(16, 16, &all))], 50);
    assert_eq!(r.macs_effective, 0);
    // per output tile: one index fetch plus write-back
    assert_eq!(r.phases.compute, 8 * 2);
    assert_eq!(r.phases.writeback, 8 * 2 * 8);
}

#[test]
fn naive_deconvolution_costs_more() {
    let d = LayerDescriptor::deconv2d(32, 32, 3, 3, 3, 2);
    let w = random_workload("t", &[d], 5);
    let cfg = MemConfig::default();
    let (img, golden) = link_program(&w, &cfg).unwrap();
    let fast = simulate(&img, &cfg, &SimKnobs::default()).unwrap();
    let slow = simulate(&img, &cfg, &SimKnobs { naive_deconv: true, ..Default::default() }).unwrap();
    assert_eq!(fast.final_output(), golden.final_output());
    assert_eq!(slow.final_output(), golden.final_output());
    let r = &fast.report;
    assert!((r.macs_nominal as f64 / r.macs_effective as f64 - 2.25).abs() < 1e-9);
    assert!(slow.report.phases.compute > r.phases.compute);
}

#[test]
fn functional_and_timing_runs_agree_on_counters() {
    let d = LayerDescriptor::conv2d(12, 20, 10, 9, 3, 3);
    let w = random_workload("t", &[d], 6);
    let cfg = MemConfig::default();
    let (img, _) = link_program(&w, &cfg).unwrap();
    let a = simulate(&img, &cfg, &SimKnobs::default()).unwrap().report;
    let b = simulate(&img, &cfg, &SimKnobs { functional: false, ..Default::default() }).unwrap().report;
    assert_eq!(a, b);
}

#[test]
fn access_counts_follow_closed_forms() {
    // C=16, K=8, 8x8 output, 3x3 filter: one K pass, one OX pass
    let d = LayerDescriptor::conv2d(16, 8, 8, 8, 3, 3);
    let w = random_workload("t", &[d], 7);
    let cfg = MemConfig::default();
    let (img, _) = link_program(&w, &cfg).unwrap();
    let r = simulate(&img, &cfg, &SimKnobs::default()).unwrap().report;
    let (oy, c, fy, fx, span) = (8u64, 16u64, 3u64, 3u64, 10u64);
    // every (row, channel, tap row) refills the FIFO with a full 10-entry window
    let rows = oy * c * fy;
    let (in_elems, outs, w_bytes) = (c * 10 * 10, 8 * 64, 8 * 16 * 9);
    // FIFO fetches, PE write-back, DMA fill of the window, DMA drain
    assert_eq!(r.accesses.l1_act, rows * span + outs + in_elems + outs);
    assert_eq!(r.accesses.l1_weight, 8 * rows * fx + w_bytes);
    assert_eq!(r.accesses.l0, rows * span + rows * fx * 8);
    assert_eq!(r.accesses.l2, w_bytes / 8 + 16 * 64 / 8 + outs / 8);
    assert_eq!(r.accesses.instr_mem, 1);
}

#[test]
fn empty_program() {
    let w = flexml::ir::workload::Workload {
        name: "e".into(),
        input: flexml::ir::tensor::QuantTensor::zeros(vec![1], Precision::Int8).unwrap(),
        layers: vec![],
        svm: None,
    };
    let cfg = MemConfig::default();
    let (img, _) = link_program(&w, &cfg).unwrap();
    let r = simulate(&img, &cfg, &SimKnobs::default()).unwrap();
    assert_eq!(r.report.total_cycles, 0);
    assert!(r.outputs.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_convs_match_oracle(
        c in 1usize..10, k in 1usize..20, ox in 1usize..12, oy in 1usize..6,
        f in prop::sample::select(vec![1usize, 3, 5]), shift in 0u32..10, seed in 0u64..1000,
    ) {
        check_exact(&[LayerDescriptor::conv2d(c, k, ox, oy, f, f).with_shift(shift)], seed);
    }

    #[test]
    fn random_dense_match_oracle(c in 1usize..70, k in 1usize..40, b in 1usize..4, seed in 0u64..1000) {
        check_exact(&[LayerDescriptor::dense(c, k, b).with_shift(6)], seed);
    }

    #[test]
    fn more_channels_never_fewer_cycles(c in 1usize..24, k in 1usize..24) {
        let a = cycles(&[LayerDescriptor::conv2d(c, k, 8, 8, 3, 3)]);
        let b = cycles(&[LayerDescriptor::conv2d(c + 1, k, 8, 8, 3, 3)]);
        let d = cycles(&[LayerDescriptor::conv2d(c, k + 1, 8, 8, 3, 3)]);
        prop_assert!(b >= a && d >= a);
    }
}
