//! Max-pooling unit: one comparison per cycle over the L1 window.

use crate::accel_sim::{Machine, TileCost};
use crate::compiler::tiling::window_extent;
use crate::compiler::UcodeInstruction;
use crate::error::Result;

pub(crate) fn run_tile(m: &mut Machine, i: &UcodeInstruction) -> Result<TileCost> {
    let p = i.precision;
    let (ct, ox, oy) = (i.k as usize, i.ox as usize, i.oy as usize);
    let (fx, fy, s, dil) = (i.fx as usize, i.fy as usize, i.stride as usize, i.dilation as usize);
    let rows = window_extent(i.phase_y as usize, oy, s, fy, dil, 1);
    let cols = window_extent(i.phase_x as usize, ox, s, fx, dil, 1);
    let (ib, ob) = (i.act_in_addr as usize, i.act_out_addr as usize);
    if m.knobs.functional {
        m.l1a.check(ib, ct * rows * cols, p)?;
        m.l1a.check(ob, ct * oy * ox, p)?;
        for c in 0..ct {
            for y in 0..oy {
                for x in 0..ox {
                    let mut best = i32::MIN;
                    for a in 0..fy {
                        for b in 0..fx {
                            let r = i.phase_y as usize + y * s + a * dil;
                            let q = i.phase_x as usize + x * s + b * dil;
                            best = best.max(m.l1a.read(ib, (c * rows + r) * cols + q, p));
                        }
                    }
                    m.l1a.write(ob, (c * oy + y) * ox + x, p, best);
                }
            }
        }
    }
    let outs = (ct * oy * ox) as u64;
    let cmps = outs * (fx * fy) as u64;
    Ok(TileCost {
        compute: cmps,
        pool_ops: cmps,
        acc: crate::accel_sim::Accesses {
            l1_act: cmps + outs,
            ..Default::default()
        },
        ..Default::default()
    })
}
