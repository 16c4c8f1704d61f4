//! Benchmark suite: the synthetic peak-performance layers and small
//! stand-ins for the real-time application workloads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accel_sim::{simulate, CycleReport, SimKnobs};
use crate::compiler::{link_program, MemConfig};
use crate::energy_model::{calibrate, Calibration, CalibrationTarget, EnergyParams, FreeParam, OperatingPoint};
use crate::error::{FlexError, Result};
use crate::gen::{random_workload, rng};
use crate::ir::layer::{Activation, LayerDescriptor};
use crate::ir::sparsity::SparsityIndexMap;
use crate::ir::tensor::Precision;
use crate::ir::workload::{SvmHost, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchClass {
    Synthetic,
    Application,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub name: &'static str,
    pub class: BenchClass,
    pub layers: Vec<LayerDescriptor>,
    /// Host decision stage after a trailing SVM_NORM layer.
    pub svm_host: bool,
}

impl BenchCase {
    fn new(name: &'static str, class: BenchClass, layers: Vec<LayerDescriptor>) -> Self {
        Self {
            name,
            class,
            layers,
            svm_host: false,
        }
    }

    /// Random operands; the same seed always gives the same workload.
    pub fn workload(&self, seed: u64) -> Workload {
        let mut w = random_workload(self.name, &self.layers, seed);
        if self.svm_host {
            let n = self.layers.last().map_or(0, |d| d.k);
            let mut r = rng(seed ^ 0x5eed);
            w.svm = Some(SvmHost {
                alphas: (0..n).map(|_| r.gen_range(0.0..1.0)).collect(),
                sigma: 2000.0,
                bias: 0.5,
                norm: self.layers.last().map(|d| d.norm).unwrap_or_default(),
                norm_squared: false,
            });
        }
        w
    }
}

/// The 32-to-32 channel 3x3 layer on a 16x16 map used for peak numbers.
pub fn cnn3x3(p: Precision) -> LayerDescriptor {
    LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3)
        .with_precision(p)
        .with_shift(p.bits() + 3)
}

/// `cnn3x3` with the first `pruned` of 32 input channels removed in every
/// block.
pub fn cnn3x3_sparse(pruned: usize) -> LayerDescriptor {
    let ch: Vec<usize> = (0..pruned).collect();
    cnn3x3(Precision::Int8).with_sparsity(SparsityIndexMap::uniform(32, 32, &ch))
}

pub fn fc_batch16() -> LayerDescriptor {
    LayerDescriptor::dense(32, 32, 16).with_shift(8)
}

/// Deconvolution comparable to the CNN layer: 32 to 32 channels, 3x3 filter,
/// 3x3 input upsampled to 6x6.
pub fn deconv_standin() -> LayerDescriptor {
    LayerDescriptor::deconv2d(32, 32, 3, 3, 3, 2).with_shift(9)
}

fn conv(c: usize, k: usize, hw: usize) -> LayerDescriptor {
    LayerDescriptor::conv2d(c, k, hw, hw, 3, 3)
        .with_shift(9)
        .with_activation(Activation::Relu)
}

/// Keyword spotting: dilated temporal convolutions (1, 2, 4, 8) over 16
/// feature channels, then a 12-class dense head.
pub fn tcn_kws() -> Vec<LayerDescriptor> {
    let dil = [1usize, 2, 4, 8];
    let mut ox = 16;
    let mut layers = Vec::new();
    for (i, &d) in dil.iter().enumerate().rev() {
        let c = if i == 0 { 16 } else { 32 };
        layers.push(
            LayerDescriptor::conv1d_dilated(c, 32, ox, 3, d)
                .with_shift(9)
                .with_activation(Activation::Relu),
        );
        ox += 2 * d;
    }
    layers.reverse();
    layers.push(LayerDescriptor::dense(32 * 16, 12, 1).with_shift(10));
    layers
}

/// Image classification: three stages of 3x3 convolutions (16, 32, 64
/// channels) on a 32x32 RGB input with 2x2 pooling between stages.
pub fn resnet8_like() -> Vec<LayerDescriptor> {
    vec![
        conv(3, 16, 32),
        conv(16, 16, 32),
        conv(16, 16, 32),
        LayerDescriptor::maxpool(16, 16, 16, 2),
        conv(16, 32, 16),
        conv(32, 32, 16),
        LayerDescriptor::maxpool(32, 8, 8, 2),
        conv(32, 64, 8),
        conv(64, 64, 8),
        LayerDescriptor::maxpool(64, 4, 4, 2),
        LayerDescriptor::dense(64 * 16, 10, 1).with_shift(10),
    ]
}

/// Convolutional auto-encoder over 8-channel spectrogram patches.
pub fn cae() -> Vec<LayerDescriptor> {
    vec![
        conv(8, 16, 16),
        LayerDescriptor::maxpool(16, 8, 8, 2),
        conv(16, 32, 8),
        LayerDescriptor::maxpool(32, 4, 4, 2),
        LayerDescriptor::deconv2d(32, 16, 4, 4, 3, 2)
            .with_shift(9)
            .with_activation(Activation::Relu),
        LayerDescriptor::deconv2d(16, 8, 8, 8, 3, 2).with_shift(9),
    ]
}

/// Novelty detection: L2 norms of one 64-feature sample against 64 support
/// vectors.
pub fn oc_svm() -> Vec<LayerDescriptor> {
    vec![LayerDescriptor::svm_norm(64, 64, 1)]
}

pub fn suite() -> Vec<BenchCase> {
    use BenchClass::*;
    let mut svm = BenchCase::new("oc-svm", Application, oc_svm());
    svm.svm_host = true;
    vec![
        BenchCase::new("cnn-int8", Synthetic, vec![cnn3x3(Precision::Int8)]),
        BenchCase::new("cnn-int4", Synthetic, vec![cnn3x3(Precision::Int4)]),
        BenchCase::new("cnn-int2", Synthetic, vec![cnn3x3(Precision::Int2)]),
        BenchCase::new("cnn-sparse50", Synthetic, vec![cnn3x3_sparse(16)]),
        BenchCase::new("cnn-sparse87", Synthetic, vec![cnn3x3_sparse(28)]),
        BenchCase::new("fc-batch16", Synthetic, vec![fc_batch16()]),
        BenchCase::new("deconv", Synthetic, vec![deconv_standin()]),
        BenchCase::new("tcn-kws", Application, tcn_kws()),
        BenchCase::new("cae", Application, cae()),
        BenchCase::new("resnet8", Application, resnet8_like()),
        svm,
    ]
}

/// Streaming keyword-spotting TCN run once per 125 ms audio batch: two
/// stacks of dilated 3-tap layers (dilation 1, 2, 4, 8) taking 16 feature
/// channels to 64, then a per-step 12-class head, over `steps` time steps.
pub fn kws_stream(steps: usize) -> Vec<LayerDescriptor> {
    let dil = [1usize, 2, 4, 8, 1, 2, 4, 8];
    let mut ox = steps;
    let mut layers = vec![LayerDescriptor::conv1d_dilated(64, 12, ox, 1, 1).with_shift(10)];
    for (i, &d) in dil.iter().enumerate().rev() {
        let c = if i == 0 { 16 } else { 64 };
        layers.push(
            LayerDescriptor::conv1d_dilated(c, 64, ox, 3, d)
                .with_shift(10)
                .with_activation(Activation::Relu),
        );
        ox += 2 * d;
    }
    layers.reverse();
    layers
}

/// Output steps of the streaming KWS network used by the scenario preset.
pub const KWS_STREAM_STEPS: usize = 200;

/// Programs known by name: the suite plus the scenario-only networks.
pub fn case(name: &str) -> Option<BenchCase> {
    if name == "kws-stream" {
        return Some(BenchCase::new("kws-stream", BenchClass::Application, kws_stream(KWS_STREAM_STEPS)));
    }
    suite().into_iter().find(|c| c.name == name)
}

/// Timing-only simulation of a case with the default memory configuration.
pub fn timing_report(c: &BenchCase) -> Result<CycleReport> {
    let cfg = MemConfig::default();
    let (img, _) = link_program(&c.workload(1), &cfg)?;
    let knobs = SimKnobs {
        functional: false,
        ..Default::default()
    };
    Ok(simulate(&img, &cfg, &knobs)?.report)
}

/// Measured power of the synthetic rows used to fit the energy model, in
/// watts at the peak-efficiency operating point.
pub const FIT_ROWS: [(&str, f64); 4] = [
    ("cnn-int8", 237e-6),
    ("cnn-int4", 197e-6),
    ("cnn-int2", 197e-6),
    ("fc-batch16", 140e-6),
];

/// Rows held out of the fit.
pub const HELD_OUT_ROWS: [(&str, f64); 4] = [("tcn-kws", 193e-6), ("resnet8", 228e-6), ("cae", 209e-6), ("oc-svm", 129e-6)];

/// Fits MAC, logic-clock, L1 and L2 energy to `FIT_ROWS`.
pub fn fit_energy(base: &EnergyParams) -> Result<Calibration> {
    let op = OperatingPoint::efficient();
    let targets = FIT_ROWS
        .iter()
        .map(|&(n, w)| {
            let c = case(n).ok_or_else(|| FlexError::MissingParam(format!("bench case {n}")))?;
            Ok(CalibrationTarget {
                name: n.to_string(),
                report: timing_report(&c)?,
                op,
                power_w: w,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    calibrate(
        base,
        &[FreeParam::Mac, FreeParam::LogicCycle, FreeParam::L1, FreeParam::L2],
        &targets,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::layer::validate_layer;

    #[test]
    fn suite_layers_are_valid_and_chain() {
        for c in suite().into_iter().chain(case("kws-stream")) {
            let w = c.workload(1);
            let mut prev = w.input.len();
            for d in &c.layers {
                validate_layer(d.clone()).unwrap_or_else(|e| panic!("{}: {e}", c.name));
                assert_eq!(d.input_shape().iter().product::<usize>(), prev, "{}", c.name);
                prev = d.output_shape().iter().product();
            }
        }
    }
}
