//! Datapath primitives: precision-scalable PEs, the L0 shifting FIFO, the
//! NLFG and the sparsity index check.

use crate::compiler::FIFO_DEPTH;
use crate::error::{FlexError, Result};
use crate::ir::loopnest::ARRAY_DIM;
use crate::ir::requant::{NlFunction, NlfgTable};
use crate::ir::svm::Norm;
use crate::ir::tensor::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeMode {
    Mac,
    SvmL1,
    SvmL2,
}

impl PeMode {
    pub fn for_norm(norm: Norm) -> Self {
        match norm {
            Norm::L1 => PeMode::SvmL1,
            Norm::L2 => PeMode::SvmL2,
        }
    }
}

/// One PE. Sub-byte precisions split the multiplier into 2 or 4 lanes, each
/// with its own 32-bit accumulator.
#[derive(Debug, Clone, Copy)]
pub struct PeState {
    pub acc: [i32; 4],
    pub mode: PeMode,
    pub precision: Precision,
    pub masked: bool,
}

impl PeState {
    pub fn new(mode: PeMode, precision: Precision) -> Self {
        Self {
            acc: [0; 4],
            mode,
            precision,
            masked: false,
        }
    }

    /// One operation on `lane`; accumulation wraps at 32 bits.
    #[inline]
    pub fn step(&mut self, lane: usize, a: i32, w: i32) {
        let term = match self.mode {
            PeMode::Mac => a.wrapping_mul(w),
            // subtraction block then absolute unit
            PeMode::SvmL1 => (a - w).abs(),
            PeMode::SvmL2 => (a - w) * (a - w),
        };
        self.acc[lane] = self.acc[lane].wrapping_add(term);
    }
}

/// Row adder tree: sums the column partials of one PE row.
pub fn adder_tree(partials: &[i32]) -> i32 {
    let mut level: Vec<i32> = partials.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|p| p.iter().fold(0i32, |a, &b| a.wrapping_add(b)))
            .collect();
    }
    level.first().copied().unwrap_or(0)
}

/// 16-entry activation FIFO between L1 and the array.
#[derive(Debug, Clone)]
pub struct L0Fifo {
    entries: [i32; FIFO_DEPTH],
    len: usize,
    /// Words read from L1 to fill the FIFO.
    pub fetched: u64,
    /// Entries written (fetched or zero-shuffled).
    pub writes: u64,
    pub reads: u64,
}

impl Default for L0Fifo {
    fn default() -> Self {
        Self {
            entries: [0; FIFO_DEPTH],
            len: 0,
            fetched: 0,
            writes: 0,
            reads: 0,
        }
    }
}

impl L0Fifo {
    /// Refills the FIFO. `None` entries are zeros inserted by the shuffle
    /// logic and never touch L1.
    pub fn fill(&mut self, src: impl IntoIterator<Item = Option<i32>>) {
        self.len = 0;
        for v in src {
            assert!(self.len < FIFO_DEPTH, "L0 FIFO overflow");
            self.entries[self.len] = match v {
                Some(x) => {
                    self.fetched += 1;
                    x
                }
                None => 0,
            };
            self.writes += 1;
            self.len += 1;
        }
    }

    #[inline]
    pub fn read(&mut self, idx: usize) -> i32 {
        debug_assert!(idx < self.len);
        self.reads += 1;
        self.entries[idx]
    }
}

pub fn nlfg_eval(x: i32, function: NlFunction) -> i32 {
    NlfgTable::get(function).eval(x)
}

/// Bit `c` of the index words for one K block; set means pruned.
pub fn skip_sparse_block(index_mem: &[u32], block_word: usize, c: usize) -> Result<bool> {
    let at = block_word + c / 32;
    let w = index_mem.get(at).ok_or_else(|| {
        FlexError::IndexUnderflow(format!("word {at} requested, index memory has {}", index_mem.len()))
    })?;
    Ok(w >> (c % 32) & 1 == 1)
}

/// One CK-dataflow SVM pass: D is spread over the eight PE columns, support
/// vectors over rows, and each row's adder tree completes the reduction.
pub fn svm_pe_pass(x: &[i32], sv: &[i32], n: usize, norm: Norm) -> Vec<i32> {
    let d = x.len();
    let mut out = Vec::with_capacity(n);
    for g in (0..n).step_by(ARRAY_DIM) {
        let mut rows = vec![[PeState::new(PeMode::for_norm(norm), Precision::Int8); ARRAY_DIM]; ARRAY_DIM];
        for c0 in (0..d).step_by(ARRAY_DIM) {
            for (r, row) in rows.iter_mut().enumerate().take((n - g).min(ARRAY_DIM)) {
                for (j, pe) in row.iter_mut().enumerate() {
                    if c0 + j < d {
                        pe.step(0, x[c0 + j], sv[(g + r) * d + c0 + j]);
                    }
                }
            }
        }
        for row in rows.iter().take((n - g).min(ARRAY_DIM)) {
            out.push(adder_tree(&row.iter().map(|p| p.acc[0]).collect::<Vec<_>>()));
        }
    }
    out
}
