//! OX|K dataflow: output columns across PE columns, output channels (times
//! SIMD lanes) across PE rows, activations streamed through the L0 FIFO.

use crate::accel_sim::pe::{skip_sparse_block, L0Fifo, PeMode, PeState};
use crate::accel_sim::{Machine, TileCost};
use crate::compiler::sparsity_pack::words_per_block;
use crate::compiler::tiling::{window_extent, TileDma};
use crate::compiler::UcodeInstruction;
use crate::error::Result;
use crate::ir::loopnest::ARRAY_DIM;
use crate::ir::requant::output_stage;

/// Kept channels per K block, read from the index memory.
pub(crate) fn kept_channels(m: &Machine, i: &UcodeInstruction, blocks: usize) -> Result<Vec<Vec<usize>>> {
    let c = i.c as usize;
    if !i.sparsity_enable {
        return Ok(vec![(0..c).collect(); blocks]);
    }
    let wpb = words_per_block(c);
    let base = i.index_addr as usize / 4;
    (0..blocks)
        .map(|b| {
            let mut kept = Vec::new();
            for ch in 0..c {
                if !skip_sparse_block(&m.index_mem, base + b * wpb, ch)? {
                    kept.push(ch);
                }
            }
            Ok(kept)
        })
        .collect()
}

/// Element offset of each kernel's weights in L1 (compressed when sparse).
pub(crate) fn kernel_offsets(kt: usize, per_c: usize, kept: &[Vec<usize>], block_of: impl Fn(usize) -> usize) -> Vec<usize> {
    let mut off = Vec::with_capacity(kt + 1);
    let mut acc = 0;
    for k in 0..kt {
        off.push(acc);
        acc += kept[block_of(k)].len() * per_c;
    }
    off.push(acc);
    off
}

pub(crate) fn run_tile(m: &mut Machine, i: &UcodeInstruction, dma: &TileDma) -> Result<TileCost> {
    let p = i.precision;
    let lanes = p.lanes();
    let (c, kt, ox, oy) = (i.c as usize, i.k as usize, i.ox as usize, i.oy as usize);
    let (fx, fy) = (i.fx as usize, i.fy as usize);
    let (stride, dil, u) = (i.stride as usize, i.dilation as usize, i.upsample as usize);
    let (phx, phy) = (i.phase_x as usize, i.phase_y as usize);
    let rows = window_extent(phy, oy, stride, fy, dil, u);
    let cols = window_extent(phx, ox, stride, fx, dil, u);
    let ox_par = i.ox_par as usize;
    let kp_size = ARRAY_DIM * lanes;
    let kpasses = kt.div_ceil(kp_size);
    let oxpasses = ox.div_ceil(ox_par);
    let skip_rows = i.zero_shuffle && u > 1 && !m.knobs.naive_deconv;
    let functional = m.knobs.functional;

    // window rows the DMA filled from real data
    let oy0 = dma.input.origin[1] as i64;
    let iy = dma.input.shape[1] as i64;
    let real_row = |r: usize| (0..iy).contains(&(oy0 + r as i64));

    let blocks = if i.sparsity_enable { kt.div_ceil(8) } else { 1 };
    let kept = kept_channels(m, i, blocks)?;
    let block_of = |k: usize| if i.sparsity_enable { k / 8 } else { 0 };
    let per_c = fy * fx;
    let koff = kernel_offsets(kt, per_c, &kept, block_of);
    let (wb, ib, ob) = (i.weights_addr as usize, i.act_in_addr as usize, i.act_out_addr as usize);
    if functional {
        m.l1w.check(wb, koff[kt], p)?;
        m.l1a.check(ib, c * rows * cols, p)?;
        m.l1a.check(ob, kt * oy * ox, p)?;
    }
    let span = if i.tap_reload {
        ox_par
    } else {
        (ox_par - 1) * stride + (fx - 1) * dil + 1
    };

    let mut cost = TileCost::default();
    let mut fifo = L0Fifo::default();
    let wrd = |m: &Machine, k: usize, slot: usize, fyi: usize, fxi: usize| {
        m.l1w.read(wb, koff[k] + (slot * fy + fyi) * fx + fxi, p)
    };
    for oyl in 0..oy {
        for kp in 0..kpasses {
            let k0 = kp * kp_size;
            let kvalid = (kt - k0).min(kp_size);
            let chans = &kept[block_of(k0)];
            for oxp in 0..oxpasses {
                let x0 = oxp * ox_par;
                let ncols = (ox - x0).min(ox_par);
                let mut pes = [[PeState::new(PeMode::Mac, p); ARRAY_DIM]; ARRAY_DIM];
                let mut n_rows = 0u64;
                for (slot, &ch) in chans.iter().enumerate() {
                    for fyi in 0..fy {
                        let t = phy + oyl * stride + fyi * dil;
                        let on_grid = t % u == 0;
                        if skip_rows && !(on_grid && real_row(t / u)) {
                            continue;
                        }
                        n_rows += 1;
                        let row = on_grid.then_some(t / u);
                        // stuffed x position -> FIFO entry; None entries are
                        // inserted zeros that cost no L1 read
                        let entry = |m: &Machine, pos: usize| -> Option<i32> {
                            let Some(r) = row else {
                                return Some(0);
                            };
                            if pos % u != 0 {
                                return if skip_rows || i.zero_shuffle { None } else { Some(0) };
                            }
                            let col = pos / u;
                            (col < cols).then(|| {
                                if functional {
                                    m.l1a.read(ib, (ch * rows + r) * cols + col, p)
                                } else {
                                    0
                                }
                            })
                        };
                        let p0 = phx + x0 * stride;
                        if i.tap_reload {
                            for fxi in 0..fx {
                                fifo.fill((0..ncols).map(|col| entry(m, p0 + col * stride + fxi * dil)));
                                for col in 0..ncols {
                                    let a = fifo.read(col);
                                    if functional {
                                        mac_column(&mut pes, col, a, kvalid, lanes, |k| wrd(m, k0 + k, slot, fyi, fxi));
                                    }
                                }
                            }
                        } else {
                            fifo.fill((0..span).map(|j| entry(m, p0 + j)));
                            for fxi in 0..fx {
                                for col in 0..ncols {
                                    let a = fifo.read(col * stride + fxi * dil);
                                    if functional {
                                        mac_column(&mut pes, col, a, kvalid, lanes, |k| wrd(m, k0 + k, slot, fyi, fxi));
                                    }
                                }
                            }
                        }
                    }
                }
                if functional {
                    for (r, pe_row) in pes.iter().enumerate() {
                        for l in 0..lanes {
                            let k = r * lanes + l;
                            if k >= kvalid {
                                continue;
                            }
                            for (col, pe) in pe_row.iter().enumerate().take(ncols) {
                                let v = output_stage(pe.acc[l], i.requant_shift as u32, i.activation, p);
                                m.l1a.write(ob, ((k0 + k) * oy + oyl) * ox + x0 + col, p, v);
                            }
                        }
                    }
                }
                // cycle accounting for this output tile
                let compute = n_rows * fx as u64;
                let prologue = match (n_rows, i.tap_reload, m.knobs.prologue_overlap) {
                    (0, _, _) => 0,
                    (_, true, _) => compute,
                    (_, false, true) => m.knobs.prologue_cycles,
                    (_, false, false) => n_rows * m.knobs.prologue_cycles,
                };
                let index_fetch = if i.sparsity_enable { 1 } else { 0 };
                cost.compute += compute + prologue + index_fetch;
                cost.writeback += m.knobs.writeback_cycles;
                cost.macs_nominal += (kvalid * ncols * c * fy * fx) as u64;
                cost.macs_effective += kvalid as u64 * ncols as u64 * n_rows * fx as u64;
                cost.acc.l1_weight += ARRAY_DIM as u64 * compute;
                cost.acc.l1_act += (kvalid * ncols) as u64;
                if i.sparsity_enable {
                    cost.acc.index_mem += c.div_ceil(32) as u64;
                }
            }
        }
    }
    cost.acc.l1_act += fifo.fetched;
    cost.acc.l0 += fifo.writes + fifo.reads;
    Ok(cost)
}

#[inline]
fn mac_column(
    pes: &mut [[PeState; ARRAY_DIM]; ARRAY_DIM],
    col: usize,
    a: i32,
    kvalid: usize,
    lanes: usize,
    w: impl Fn(usize) -> i32,
) {
    for k in 0..kvalid {
        pes[k / lanes][col].step(k % lanes, a, w(k));
    }
}
