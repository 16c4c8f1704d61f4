//! Lowers layer chains to 256-bit ucode, ping-pong tile schedules, DMA
//! descriptors and packed sparsity-index memory, and links everything into a
//! portable memory image.

pub mod image;
pub mod link;
pub mod sparsity_pack;
pub mod tiling;
pub mod ucode;

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::ir::layer::{LayerDescriptor, LayerKind};
use crate::ir::loopnest::{Dataflow, ARRAY_DIM};

pub use image::{MemoryImage, Symbol, SymbolRole};
pub use link::link_program;
pub use sparsity_pack::{pack_sparsity_indices, unpack_sparsity_indices, words_per_block};
pub use tiling::{tile, Bank, DmaDescriptor, DmaDirection, Operand, Tile, TileDma, TileSchedule};
pub use ucode::{emit_ucode, UcodeInstruction, Unit};

/// Entries in the L0 activation FIFO.
pub const FIFO_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemConfig {
    /// One ping-pong bank of the weight L1 (two banks in total).
    pub weight_bank_bytes: usize,
    /// One ping-pong bank of the activation L1.
    pub act_bank_bytes: usize,
    pub l2_bytes: usize,
    pub instr_mem_bytes: usize,
    pub index_mem_bytes: usize,
}

impl Default for MemConfig {
    fn default() -> Self {
        Self {
            weight_bank_bytes: 32 * 1024,
            act_bank_bytes: 32 * 1024,
            l2_bytes: 512 * 1024,
            instr_mem_bytes: 4 * 1024,
            index_mem_bytes: 4 * 1024,
        }
    }
}

impl MemConfig {
    pub fn l1_weight_bytes(&self) -> usize {
        2 * self.weight_bank_bytes
    }

    pub fn l1_act_bytes(&self) -> usize {
        2 * self.act_bank_bytes
    }
}

pub fn select_dataflow(desc: &LayerDescriptor) -> Result<Dataflow> {
    match desc.kind {
        LayerKind::Maxpool => Err(FlexError::UnsupportedKind(
            "MAXPOOL runs on the pooling unit".into(),
        )),
        k if k.is_mmm() => Ok(Dataflow::Oxk),
        _ => Ok(Dataflow::Ck),
    }
}

fn fifo_span(n_out: usize, desc: &LayerDescriptor) -> usize {
    (n_out - 1) * desc.stride + (desc.fx - 1) * desc.dilation + 1
}

/// True iff eight parallel outputs fit the 16-entry FIFO window.
pub fn check_fifo_feasible(desc: &LayerDescriptor) -> bool {
    fifo_span(ARRAY_DIM, desc) <= FIFO_DEPTH
}

/// How an OXK layer uses the FIFO: number of active PE columns and whether
/// the FIFO is refilled per filter tap because even one output's window is
/// wider than the FIFO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FifoPlan {
    pub ox_par: usize,
    pub tap_reload: bool,
}

impl FifoPlan {
    pub fn for_layer(desc: &LayerDescriptor) -> Self {
        if fifo_span(1, desc) > FIFO_DEPTH {
            return Self {
                ox_par: ARRAY_DIM,
                tap_reload: true,
            };
        }
        let ox_par = (1..=ARRAY_DIM)
            .rev()
            .find(|&n| fifo_span(n, desc) <= FIFO_DEPTH)
            .unwrap_or(1);
        Self {
            ox_par,
            tap_reload: false,
        }
    }

    /// Entries the FIFO holds per (c, fy) row in shifting-window mode.
    pub fn span(&self, desc: &LayerDescriptor) -> usize {
        if self.tap_reload {
            self.ox_par
        } else {
            fifo_span(self.ox_par, desc)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataflow_by_kind() {
        assert_eq!(select_dataflow(&LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3)).unwrap(), Dataflow::Oxk);
        assert_eq!(select_dataflow(&LayerDescriptor::dense(8, 8, 1)).unwrap(), Dataflow::Ck);
        assert_eq!(select_dataflow(&LayerDescriptor::svm_norm(8, 8, 1)).unwrap(), Dataflow::Ck);
        assert_eq!(select_dataflow(&LayerDescriptor::rnn_step(8, 8, 1)).unwrap(), Dataflow::Ck);
        assert_eq!(select_dataflow(&LayerDescriptor::deconv2d(2, 2, 3, 3, 3, 2)).unwrap(), Dataflow::Oxk);
        assert!(select_dataflow(&LayerDescriptor::maxpool(2, 2, 2, 2)).is_err());
    }

    #[test]
    fn fifo_boundaries() {
        let d = |fx, dil| LayerDescriptor::conv1d_dilated(1, 1, 8, fx, dil);
        // span = 7 + (FX - 1) * dil + 1, enumerated independently
        for fx in 1..=12 {
            for dil in 1..=10 {
                let span = 7 + (fx - 1) * dil + 1;
                assert_eq!(check_fifo_feasible(&d(fx, dil)), span <= 16, "fx={fx} dil={dil}");
            }
        }
        assert!(check_fifo_feasible(&d(3, 1)));
        assert!(check_fifo_feasible(&d(9, 1)));
        assert!(!check_fifo_feasible(&d(3, 8)));
    }

    #[test]
    fn fifo_plan_reduces_columns_then_reloads() {
        let d = |fx, dil| LayerDescriptor::conv1d_dilated(1, 1, 8, fx, dil);
        assert_eq!(FifoPlan::for_layer(&d(3, 1)), FifoPlan { ox_par: 8, tap_reload: false });
        // span(n) = n - 1 + 11 <= 16 gives n = 6
        assert_eq!(FifoPlan::for_layer(&d(3, 5)), FifoPlan { ox_par: 6, tap_reload: false });
        assert_eq!(FifoPlan::for_layer(&d(3, 7)), FifoPlan { ox_par: 2, tap_reload: false });
        assert!(FifoPlan::for_layer(&d(3, 8)).tap_reload);
        assert_eq!(FifoPlan::for_layer(&d(3, 5)).span(&d(3, 5)), 16);
    }
}
