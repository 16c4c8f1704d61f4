//! Seeded random operands for tests, benches and synthetic workloads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::layer::LayerDescriptor;
use crate::ir::tensor::{Precision, QuantTensor};
use crate::ir::workload::{LayerSpec, Workload};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values over the full range of `precision`.
pub fn random_tensor(shape: Vec<usize>, precision: Precision, rng: &mut impl Rng) -> QuantTensor {
    let n = shape.iter().product();
    let (lo, hi) = (precision.min_value(), precision.max_value());
    let data = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    QuantTensor::new(shape, precision, data).expect("values drawn inside the precision range")
}

/// A chain workload with random input and weights for each descriptor.
pub fn random_workload(name: &str, layers: &[LayerDescriptor], seed: u64) -> Workload {
    let mut r = rng(seed);
    let first = &layers[0];
    let input = random_tensor(first.input_shape(), first.precision, &mut r);
    let layers = layers
        .iter()
        .map(|d| LayerSpec {
            desc: d.clone(),
            weights: d.weight_shape().map(|s| random_tensor(s, d.precision, &mut r)),
        })
        .collect();
    Workload {
        name: name.to_string(),
        input,
        layers,
        svm: None,
    }
}
