//! C|K dataflow for matrix-vector kinds: input channels across PE columns,
//! output channels (times SIMD lanes) across PE rows, rows reduced by the
//! adder trees.

use crate::accel_sim::oxk::{kept_channels, kernel_offsets};
use crate::accel_sim::pe::{adder_tree, PeMode, PeState};
use crate::accel_sim::{Machine, TileCost};
use crate::compiler::tiling::TileDma;
use crate::compiler::UcodeInstruction;
use crate::error::Result;
use crate::ir::layer::LayerKind;
use crate::ir::loopnest::ARRAY_DIM;
use crate::ir::requant::output_stage;

pub(crate) fn run_tile(m: &mut Machine, i: &UcodeInstruction, dma: &TileDma) -> Result<TileCost> {
    let p = i.precision;
    let out_p = dma.output.precision;
    let lanes = p.lanes();
    let (c, kt, nb) = (i.c as usize, i.k as usize, i.oy as usize);
    let kp_size = ARRAY_DIM * lanes;
    let kpasses = kt.div_ceil(kp_size);
    let svm = i.kind == LayerKind::SvmNorm;
    let mode = if svm { PeMode::for_norm(i.norm) } else { PeMode::Mac };
    let functional = m.knobs.functional;

    let blocks = if i.sparsity_enable { kt.div_ceil(8) } else { 1 };
    let kept = kept_channels(m, i, blocks)?;
    let block_of = |k: usize| if i.sparsity_enable { k / 8 } else { 0 };
    let koff = kernel_offsets(kt, 1, &kept, block_of);
    let (wb, ib, ob) = (i.weights_addr as usize, i.act_in_addr as usize, i.act_out_addr as usize);
    if functional {
        m.l1w.check(wb, koff[kt], p)?;
        m.l1a.check(ib, nb * c, p)?;
        m.l1a.check(ob, nb * kt, out_p)?;
    }

    let mut cost = TileCost::default();
    for b in 0..nb {
        for kp in 0..kpasses {
            let k0 = kp * kp_size;
            let kvalid = (kt - k0).min(kp_size);
            let chans = &kept[block_of(k0)];
            let cpasses = chans.len().div_ceil(ARRAY_DIM);
            if functional {
                let mut pes = [[PeState::new(mode, p); ARRAY_DIM]; ARRAY_DIM];
                for (slot, &ch) in chans.iter().enumerate() {
                    let a = m.l1a.read(ib, b * c + ch, p);
                    let col = slot % ARRAY_DIM;
                    for k in 0..kvalid {
                        let w = m.l1w.read(wb, koff[k0 + k] + slot, p);
                        pes[k / lanes][col].step(k % lanes, a, w);
                    }
                }
                for k in 0..kvalid {
                    let partials: Vec<i32> = pes[k / lanes].iter().map(|pe| pe.acc[k % lanes]).collect();
                    let sum = adder_tree(&partials);
                    let v = if svm {
                        sum
                    } else {
                        output_stage(sum, i.requant_shift as u32, i.activation, p)
                    };
                    m.l1a.write(ob, b * kt + k0 + k, out_p, v);
                }
            }
            let index_fetch = u64::from(i.sparsity_enable);
            cost.compute += cpasses as u64 + m.knobs.adder_tree_cycles + index_fetch;
            cost.writeback += m.knobs.shift_out_cycles;
            cost.macs_nominal += (kvalid * c) as u64;
            cost.macs_effective += (kvalid * chans.len()) as u64;
            cost.acc.l1_weight += (ARRAY_DIM * ARRAY_DIM * cpasses) as u64;
            cost.acc.l1_act += (ARRAY_DIM * cpasses + kvalid) as u64;
            if i.sparsity_enable {
                cost.acc.index_mem += c.div_ceil(32) as u64;
            }
        }
    }
    Ok(cost)
}
