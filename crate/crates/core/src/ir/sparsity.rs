use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::ir::tensor::QuantTensor;

/// Output channels sharing one pruning pattern; equals the PE array height.
pub const BLOCK_SIZE: usize = 8;

/// Blockwise structured sparsity: `bits[block][c]` is true when input channel
/// `c` is pruned for all filter kernels of the block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityIndexMap {
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    pub bits: Vec<Vec<bool>>,
}

fn default_block_size() -> usize {
    BLOCK_SIZE
}

impl SparsityIndexMap {
    pub fn dense(k: usize, c: usize) -> Self {
        Self {
            block_size: BLOCK_SIZE,
            bits: vec![vec![false; c]; k.div_ceil(BLOCK_SIZE)],
        }
    }

    /// Same channels pruned in every block.
    pub fn uniform(k: usize, c: usize, pruned: &[usize]) -> Self {
        let mut m = Self::dense(k, c);
        for row in &mut m.bits {
            for &ch in pruned {
                row[ch] = true;
            }
        }
        m
    }

    pub fn blocks(&self) -> usize {
        self.bits.len()
    }

    pub fn channels(&self) -> usize {
        self.bits.first().map_or(0, Vec::len)
    }

    pub fn is_pruned(&self, block: usize, c: usize) -> bool {
        self.bits[block][c]
    }

    pub fn kept_channels(&self, block: usize) -> usize {
        self.bits[block].iter().filter(|&&b| !b).count()
    }

    pub fn pruned_fraction(&self) -> f64 {
        let total = self.blocks() * self.channels();
        if total == 0 {
            return 0.0;
        }
        let pruned = self.bits.iter().flatten().filter(|&&b| b).count();
        pruned as f64 / total as f64
    }

    pub fn check_shape(&self, k: usize, c: usize) -> Result<()> {
        if self.block_size != BLOCK_SIZE {
            return Err(FlexError::SparsityShape(format!(
                "block size {} (must be {BLOCK_SIZE})",
                self.block_size
            )));
        }
        let blocks = k.div_ceil(BLOCK_SIZE);
        if self.bits.len() != blocks || self.bits.iter().any(|r| r.len() != c) {
            return Err(FlexError::SparsityShape(format!(
                "expected {blocks} blocks x {c} channels, got {} x {}",
                self.bits.len(),
                self.channels()
            )));
        }
        Ok(())
    }

    /// Element-wise OR of two maps of the same shape.
    pub fn union(&self, other: &Self) -> Result<Self> {
        other.check_shape(self.blocks() * BLOCK_SIZE, self.channels())?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x || y).collect())
            .collect();
        Ok(Self {
            block_size: BLOCK_SIZE,
            bits,
        })
    }
}

/// Zeroes every pruned (block, channel) slice of weights shaped (K, C, ...).
pub fn apply_block_sparsity(weights: &QuantTensor, map: &SparsityIndexMap) -> Result<QuantTensor> {
    let shape = weights.shape();
    if shape.len() != 2 && shape.len() != 4 {
        return Err(FlexError::SparsityShape(format!(
            "weights must be (K, C) or (K, C, FY, FX), got {shape:?}"
        )));
    }
    let (k, c) = (shape[0], shape[1]);
    map.check_shape(k, c)?;
    let inner: usize = shape[2..].iter().product();
    let mut data = weights.data().to_vec();
    for ki in 0..k {
        for ci in 0..c {
            if map.is_pruned(ki / BLOCK_SIZE, ci) {
                let base = (ki * c + ci) * inner;
                data[base..base + inner].fill(0);
            }
        }
    }
    QuantTensor::new(shape.to_vec(), weights.precision(), data)
}
