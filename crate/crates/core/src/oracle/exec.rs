//! Direct nested-loop executors. Slow on purpose; every index is computed
//! from the descriptor with no tiling or reuse.

use crate::error::{FlexError, Result};
use crate::ir::layer::{LayerDescriptor, LayerKind};
use crate::ir::requant::{output_stage, NlFunction, NLFG_IN_FRAC_BITS, NLFG_OUT_SCALE};
use crate::ir::sparsity::apply_block_sparsity;
use crate::ir::svm::{Norm, SvmModel};
use crate::ir::tensor::{Precision, QuantTensor};

fn expect_shape(what: &str, t: &QuantTensor, want: &[usize]) -> Result<()> {
    if t.shape() != want {
        return Err(FlexError::ShapeMismatch(format!(
            "{what}: expected {want:?}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn expect_kind(desc: &LayerDescriptor, kinds: &[LayerKind]) -> Result<()> {
    if !kinds.contains(&desc.kind) {
        return Err(FlexError::UnsupportedKind(format!(
            "{} passed to the {:?} executor",
            desc.kind, kinds
        )));
    }
    Ok(())
}

/// Weights with pruned channels zeroed, so a pruned channel contributes
/// nothing to the sum.
fn effective_weights(weights: &QuantTensor, desc: &LayerDescriptor) -> Result<QuantTensor> {
    match &desc.sparsity {
        Some(map) => apply_block_sparsity(weights, map),
        None => Ok(weights.clone()),
    }
}

/// Shared convolution body. The input is indexed on the zero-stuffed grid of
/// extent `in * upsample`; only positions that are multiples of `upsample`
/// carry data.
fn conv_core(input: &QuantTensor, weights: &QuantTensor, desc: &LayerDescriptor) -> Result<QuantTensor> {
    expect_shape("input", input, &desc.input_shape())?;
    expect_shape("weights", weights, &desc.weight_shape().unwrap_or_default())?;
    let w = effective_weights(weights, desc)?;
    let (iy, ix) = (desc.in_y(), desc.in_x());
    let u = desc.upsample as isize;
    let (py, px) = (desc.pad_y() as isize, desc.pad_x() as isize);
    let (sy, sx) = (iy as isize * u, ix as isize * u);
    let inp = input.data();
    let wd = w.data();
    let mut out = Vec::with_capacity(desc.k * desc.oy * desc.ox);
    for k in 0..desc.k {
        for oy in 0..desc.oy {
            for ox in 0..desc.ox {
                let mut acc: i32 = 0;
                for c in 0..desc.c {
                    for fy in 0..desc.fy {
                        let y = (oy * desc.stride + fy * desc.dilation) as isize - py;
                        if y < 0 || y >= sy || y % u != 0 {
                            continue;
                        }
                        let y = (y / u) as usize;
                        for fx in 0..desc.fx {
                            let x = (ox * desc.stride + fx * desc.dilation) as isize - px;
                            if x < 0 || x >= sx || x % u != 0 {
                                continue;
                            }
                            let x = (x / u) as usize;
                            let a = inp[(c * iy + y) * ix + x];
                            let b = wd[((k * desc.c + c) * desc.fy + fy) * desc.fx + fx];
                            acc = acc.wrapping_add(a.wrapping_mul(b));
                        }
                    }
                }
                out.push(output_stage(acc, desc.requant_shift, desc.activation, desc.precision));
            }
        }
    }
    QuantTensor::new(desc.output_shape(), desc.output_precision(), out)
}

pub fn conv2d_ref(input: &QuantTensor, weights: &QuantTensor, desc: &LayerDescriptor) -> Result<QuantTensor> {
    expect_kind(desc, &[LayerKind::Conv2d])?;
    conv_core(input, weights, desc)
}

pub fn conv1d_dilated_ref(
    input: &QuantTensor,
    weights: &QuantTensor,
    desc: &LayerDescriptor,
) -> Result<QuantTensor> {
    expect_kind(desc, &[LayerKind::Conv1dDilated])?;
    conv_core(input, weights, desc)
}

/// Zero-stuffed upsampling by `upsample` followed by convolution.
pub fn deconv2d_ref(input: &QuantTensor, weights: &QuantTensor, desc: &LayerDescriptor) -> Result<QuantTensor> {
    expect_kind(desc, &[LayerKind::Deconv2d])?;
    conv_core(input, weights, desc)
}

/// out[b][k] = stage(sum_c in[b][c] * w[k][c]); also serves RNN_STEP.
pub fn dense_ref(input: &QuantTensor, weights: &QuantTensor, desc: &LayerDescriptor) -> Result<QuantTensor> {
    expect_kind(desc, &[LayerKind::Dense, LayerKind::RnnStep])?;
    expect_shape("input", input, &desc.input_shape())?;
    expect_shape("weights", weights, &[desc.k, desc.c])?;
    let w = effective_weights(weights, desc)?;
    let mut out = Vec::with_capacity(desc.batch * desc.k);
    for b in 0..desc.batch {
        let x = &input.data()[b * desc.c..(b + 1) * desc.c];
        for k in 0..desc.k {
            let row = &w.data()[k * desc.c..(k + 1) * desc.c];
            let acc = x
                .iter()
                .zip(row)
                .fold(0i32, |acc, (&a, &b)| acc.wrapping_add(a.wrapping_mul(b)));
            out.push(output_stage(acc, desc.requant_shift, desc.activation, desc.precision));
        }
    }
    QuantTensor::new(desc.output_shape(), desc.precision, out)
}

/// Window max; no requantization.
pub fn maxpool_ref(input: &QuantTensor, desc: &LayerDescriptor) -> Result<QuantTensor> {
    expect_kind(desc, &[LayerKind::Maxpool])?;
    expect_shape("input", input, &desc.input_shape())?;
    let (iy, ix) = (desc.in_y(), desc.in_x());
    let mut out = Vec::with_capacity(desc.c * desc.oy * desc.ox);
    for c in 0..desc.c {
        for oy in 0..desc.oy {
            for ox in 0..desc.ox {
                let mut m = i32::MIN;
                for fy in 0..desc.fy {
                    for fx in 0..desc.fx {
                        let y = oy * desc.stride + fy * desc.dilation;
                        let x = ox * desc.stride + fx * desc.dilation;
                        m = m.max(input.data()[(c * iy + y) * ix + x]);
                    }
                }
                out.push(m);
            }
        }
    }
    QuantTensor::new(desc.output_shape(), input.precision(), out)
}

fn norm_row(x: &[i32], sv: &[i32], norm: Norm) -> i32 {
    x.iter().zip(sv).fold(0i32, |acc, (&a, &b)| {
        let d = a - b;
        let term = match norm {
            Norm::L1 => d.abs(),
            Norm::L2 => d * d,
        };
        acc.wrapping_add(term)
    })
}

/// norms[i] = sum_d |x[d] - sv[i][d]| (L1) or sum_d (x[d] - sv[i][d])^2 (L2).
pub fn svm_norm_ref(x: &[i32], model: &SvmModel) -> Result<Vec<i32>> {
    if x.len() != model.d() {
        return Err(FlexError::ShapeMismatch(format!(
            "vector of length {} against support vectors of length {}",
            x.len(),
            model.d()
        )));
    }
    let d = model.d();
    let sv = model.support_vectors.data();
    Ok((0..model.n())
        .map(|i| norm_row(x, &sv[i * d..(i + 1) * d], model.norm))
        .collect())
}

/// SVM_NORM as a layer: input [batch, D], support vectors [N, D], output
/// [batch, N] 32-bit norms.
pub fn svm_norm_layer_ref(
    input: &QuantTensor,
    support_vectors: &QuantTensor,
    desc: &LayerDescriptor,
) -> Result<QuantTensor> {
    expect_kind(desc, &[LayerKind::SvmNorm])?;
    expect_shape("input", input, &desc.input_shape())?;
    expect_shape("support vectors", support_vectors, &[desc.k, desc.c])?;
    let d = desc.c;
    let mut out = Vec::with_capacity(desc.batch * desc.k);
    for b in 0..desc.batch {
        let x = &input.data()[b * d..(b + 1) * d];
        for i in 0..desc.k {
            out.push(norm_row(x, &support_vectors.data()[i * d..(i + 1) * d], desc.norm));
        }
    }
    QuantTensor::new(desc.output_shape(), Precision::Int32, out)
}

/// f = sum_i alpha_i * exp(-n_i / (2 sigma^2)) - b, with n_i the norm as
/// produced by the array (squared first when `norm_squared` is set).
pub fn svm_decision(norms: &[i32], alphas: &[f64], sigma: f64, bias: f64, norm_squared: bool) -> f64 {
    let denom = 2.0 * sigma * sigma;
    norms
        .iter()
        .zip(alphas)
        .map(|(&n, &a)| {
            let n = n as f64;
            let n = if norm_squared { n * n } else { n };
            a * (-n / denom).exp()
        })
        .sum::<f64>()
        - bias
}

pub fn svm_decision_ref(norms: &[i32], model: &SvmModel) -> f64 {
    svm_decision(norms, &model.alphas, model.sigma, model.bias, model.norm_squared)
}

/// Exact function value quantized to the NLFG output code.
pub fn nlfg_exact(code: i32, function: NlFunction) -> i32 {
    let x = code as f64 / (1 << NLFG_IN_FRAC_BITS) as f64;
    (function.exact(x) * NLFG_OUT_SCALE).round().clamp(-128.0, 127.0) as i32
}

/// Runs one layer with the matching executor.
pub fn run_layer(input: &QuantTensor, weights: Option<&QuantTensor>, desc: &LayerDescriptor) -> Result<QuantTensor> {
    let need = || {
        weights.ok_or_else(|| FlexError::MissingParam(format!("{} layer needs weights", desc.kind)))
    };
    match desc.kind {
        LayerKind::Conv2d => conv2d_ref(input, need()?, desc),
        LayerKind::Conv1dDilated => conv1d_dilated_ref(input, need()?, desc),
        LayerKind::Deconv2d => deconv2d_ref(input, need()?, desc),
        LayerKind::Dense | LayerKind::RnnStep => dense_ref(input, need()?, desc),
        LayerKind::SvmNorm => svm_norm_layer_ref(input, need()?, desc),
        LayerKind::Maxpool => maxpool_ref(input, desc),
    }
}

/// Adapts a tensor to the next layer's expected input: reshaped when element
/// counts agree, re-tagged with the layer precision (values must fit).
pub fn adapt_input(t: &QuantTensor, desc: &LayerDescriptor) -> Result<QuantTensor> {
    let shape = desc.input_shape();
    if shape.iter().product::<usize>() != t.len() {
        return Err(FlexError::ShapeMismatch(format!(
            "{} layer expects input {shape:?}, previous output is {:?}",
            desc.kind,
            t.shape()
        )));
    }
    if t.shape() == shape.as_slice() && t.precision() == desc.precision {
        return Ok(t.clone());
    }
    QuantTensor::new(shape, desc.precision, t.data().to_vec())
}

/// Executes a chain and returns every layer's output in order.
pub fn run_chain<'a, I>(input: &QuantTensor, layers: I) -> Result<Vec<QuantTensor>>
where
    I: IntoIterator<Item = (&'a LayerDescriptor, Option<&'a QuantTensor>)>,
{
    let mut outs: Vec<QuantTensor> = Vec::new();
    for (desc, w) in layers {
        let x = adapt_input(outs.last().unwrap_or(input), desc)?;
        outs.push(run_layer(&x, w, desc)?);
    }
    Ok(outs)
}

