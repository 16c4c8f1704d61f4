//! Bit-exact, cycle-approximate simulator of the PE array, its memories and
//! the tile pipeline.
//!
//! Per layer the controller decodes one instruction per tile. A single DMA
//! engine serves both directions; tile i+1's inputs stream into the idle bank
//! while tile i computes, and tile i's outputs drain once it finishes. Layers
//! run back to back, each starting after the previous one has drained.

mod ck;
pub mod mem;
mod oxk;
pub mod pe;
mod pool;

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::compiler::tiling::{DmaDescriptor, TileDma};
use crate::compiler::{MemConfig, MemoryImage, UcodeInstruction, Unit};
use crate::error::{FlexError, Result};
use crate::ir::layer::LayerKind;
use crate::ir::loopnest::ARRAY_DIM;
use crate::ir::tensor::{Precision, QuantTensor};

use mem::{run_dma, Mem};

/// Timing knobs. Defaults reproduce the reference calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimKnobs {
    /// Hide the FIFO fill behind the previous row's taps.
    pub prologue_overlap: bool,
    pub prologue_cycles: u64,
    pub decode_cycles: u64,
    pub dma_bytes_per_cycle: u64,
    /// Output-stage cycles per OXK output tile.
    pub writeback_cycles: u64,
    pub adder_tree_cycles: u64,
    /// CK result shift-out per pass.
    pub shift_out_cycles: u64,
    /// Run deconvolutions as plain convolutions over zero-stuffed input.
    pub naive_deconv: bool,
    /// Compute values; off gives the timing model alone.
    pub functional: bool,
}

impl Default for SimKnobs {
    fn default() -> Self {
        Self {
            prologue_overlap: true,
            prologue_cycles: 1,
            decode_cycles: 4,
            dma_bytes_per_cycle: 8,
            writeback_cycles: 8,
            adder_tree_cycles: 3,
            shift_out_cycles: 8,
            naive_deconv: false,
            functional: true,
        }
    }
}

/// Memory access counts. L2 in 8-byte bus beats; L1 and L0 in words (one
/// byte of packed operands, or one output element); index memory in 32-bit
/// words.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accesses {
    pub l2: u64,
    pub l1_weight: u64,
    pub l1_act: u64,
    pub l0: u64,
    pub index_mem: u64,
    pub instr_mem: u64,
}

impl AddAssign for Accesses {
    fn add_assign(&mut self, o: Self) {
        self.l2 += o.l2;
        self.l1_weight += o.l1_weight;
        self.l1_act += o.l1_act;
        self.l0 += o.l0;
        self.index_mem += o.index_mem;
        self.instr_mem += o.instr_mem;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phases {
    pub dma_in: u64,
    pub compute: u64,
    pub writeback: u64,
    pub decode: u64,
    pub dma_out: u64,
    pub stall: u64,
}

impl Phases {
    pub fn sum(&self) -> u64 {
        self.dma_in + self.compute + self.writeback + self.decode + self.dma_out + self.stall
    }
}

impl AddAssign for Phases {
    fn add_assign(&mut self, o: Self) {
        self.dma_in += o.dma_in;
        self.compute += o.compute;
        self.writeback += o.writeback;
        self.decode += o.decode;
        self.dma_out += o.dma_out;
        self.stall += o.stall;
    }
}

/// Array-side cost of one tile.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct TileCost {
    pub compute: u64,
    pub writeback: u64,
    pub macs_nominal: u64,
    pub macs_effective: u64,
    pub pool_ops: u64,
    pub acc: Accesses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub kind: LayerKind,
    pub precision: Precision,
    pub tiles: usize,
    pub cycles: u64,
    pub phases: Phases,
    pub macs_nominal: u64,
    pub macs_effective: u64,
    pub pool_ops: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub total_cycles: u64,
    pub phases: Phases,
    /// Logical MACs; zero-stuffed count for deconvolution, dense count for
    /// sparse layers.
    pub macs_nominal: u64,
    /// MACs the array actually performed.
    pub macs_effective: u64,
    pub pool_ops: u64,
    pub accesses: Accesses,
    /// Effective MACs over peak MAC slots (64 PEs times SIMD lanes).
    pub utilization: f64,
    pub layers: Vec<LayerReport>,
}

impl CycleReport {
    /// Effective throughput in GOPS (2 ops per MAC) at clock `f_hz`.
    pub fn gops(&self, f_hz: f64) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        2.0 * self.macs_effective as f64 * f_hz / self.total_cycles as f64 / 1e9
    }

    pub fn seconds(&self, f_hz: f64) -> f64 {
        self.total_cycles as f64 / f_hz
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Output symbols in layer order.
    pub outputs: Vec<(String, QuantTensor)>,
    pub report: CycleReport,
    pub l2: Vec<u8>,
}

impl SimResult {
    pub fn final_output(&self) -> Option<&QuantTensor> {
        self.outputs.last().map(|(_, t)| t)
    }
}

pub(crate) struct Machine {
    pub l2: Mem,
    pub l1w: Mem,
    pub l1a: Mem,
    pub index_mem: Vec<u32>,
    pub knobs: SimKnobs,
}

fn dma_cycles(bytes: usize, k: &SimKnobs) -> u64 {
    (bytes as u64).div_ceil(k.dma_bytes_per_cycle.max(1))
}

fn beats(bytes: usize) -> u64 {
    (bytes as u64).div_ceil(8)
}

type WeightKey = (u32, i32, u32);

fn weight_key(d: &DmaDescriptor) -> WeightKey {
    (d.l2_addr, d.origin[2], d.extent[2])
}

pub struct Simulator {
    m: Machine,
    /// Weight window currently held by each L1 bank.
    held: [Option<WeightKey>; 2],
    acc_total: Accesses,
}

impl Simulator {
    pub fn new(image: &MemoryImage, cfg: &MemConfig, knobs: SimKnobs) -> Self {
        let mut l2 = Mem::new("L2", cfg.l2_bytes.max(image.l2.len()));
        l2.bytes[..image.l2.len()].copy_from_slice(&image.l2);
        Self {
            m: Machine {
                l2,
                l1w: Mem::new("weight L1", cfg.l1_weight_bytes()),
                l1a: Mem::new("activation L1", cfg.l1_act_bytes()),
                index_mem: image.index_mem.clone(),
                knobs,
            },
            held: [None; 2],
            acc_total: Accesses::default(),
        }
    }

    fn bank_of(&self, d: &DmaDescriptor, bank_bytes: usize) -> usize {
        (d.l1_addr as usize / bank_bytes.max(1)).min(1)
    }

    /// Inbound DMA for one tile; returns (bytes moved, accesses).
    fn dma_in(&mut self, t: &TileDma, bank_bytes: usize) -> Result<(usize, Accesses)> {
        let mut bytes = 0;
        let mut acc = Accesses::default();
        if let Some(w) = &t.weights {
            let bank = self.bank_of(w, bank_bytes);
            if self.held[bank] != Some(weight_key(w)) {
                if self.m.knobs.functional {
                    run_dma(w, &mut self.m.l2, &mut self.m.l1w)?;
                }
                self.held[bank] = Some(weight_key(w));
                bytes += w.bytes();
                acc.l2 += beats(w.bytes());
                acc.l1_weight += w.l1_bytes() as u64;
            }
        }
        if self.m.knobs.functional {
            run_dma(&t.input, &mut self.m.l2, &mut self.m.l1a)?;
        }
        bytes += t.input.bytes();
        acc.l2 += beats(t.input.bytes());
        acc.l1_act += t.input.l1_elements() as u64;
        Ok((bytes, acc))
    }

    fn dma_out(&mut self, t: &TileDma) -> Result<(usize, Accesses)> {
        if self.m.knobs.functional {
            run_dma(&t.output, &mut self.m.l2, &mut self.m.l1a)?;
        }
        let b = t.output.bytes();
        Ok((
            b,
            Accesses {
                l2: beats(b),
                l1_act: t.output.l2_elements() as u64,
                ..Default::default()
            },
        ))
    }

    fn exec(&mut self, i: &UcodeInstruction, t: &TileDma) -> Result<TileCost> {
        match i.unit {
            Unit::Oxk => oxk::run_tile(&mut self.m, i, t),
            Unit::Ck => ck::run_tile(&mut self.m, i, t),
            Unit::Pool => pool::run_tile(&mut self.m, i),
        }
    }

    /// Runs one layer's tiles starting at cycle 0 of the layer.
    fn run_layer(&mut self, instrs: &[UcodeInstruction], image: &MemoryImage, cfg: &MemConfig) -> Result<LayerReport> {
        let k = self.m.knobs;
        let tiles: Vec<&TileDma> = instrs
            .iter()
            .map(|i| {
                image.dma.get(i.tile_id as usize).ok_or_else(|| {
                    FlexError::Decode(format!("tile id {} has no DMA descriptors", i.tile_id))
                })
            })
            .collect::<Result<_>>()?;
        let bank_bytes = cfg.weight_bank_bytes;
        let mut ph = Phases::default();
        let mut acc = Accesses::default();
        let (mut nominal, mut effective, mut pool_ops) = (0, 0, 0);

        let mut dec_end = k.decode_cycles;
        ph.decode += k.decode_cycles;
        let (b0, a0) = self.dma_in(tiles[0], bank_bytes)?;
        acc += a0;
        let mut eng = dec_end + dma_cycles(b0, &k);
        let mut in_done = eng;
        let mut comp_end = 0;
        for (n, (instr, t)) in instrs.iter().zip(&tiles).enumerate() {
            acc.instr_mem += 1;
            if n > 0 {
                dec_end = comp_end + k.decode_cycles;
                ph.decode += k.decode_cycles;
            }
            let start = dec_end.max(in_done);
            if n == 0 {
                ph.dma_in += start - dec_end;
            } else {
                ph.stall += start - dec_end;
            }
            let c = self.exec(instr, t)?;
            comp_end = start + c.compute + c.writeback;
            ph.compute += c.compute;
            ph.writeback += c.writeback;
            nominal += c.macs_nominal;
            effective += c.macs_effective;
            pool_ops += c.pool_ops;
            acc += c.acc;
            // prefetch into the other bank while this tile computes; the
            // engine has already drained the tile that last used that bank
            if let Some(next) = tiles.get(n + 1) {
                let (b, a) = self.dma_in(next, bank_bytes)?;
                acc += a;
                eng = eng.max(start) + dma_cycles(b, &k);
                in_done = eng;
            }
            let (b, a) = self.dma_out(t)?;
            acc += a;
            eng = eng.max(comp_end) + dma_cycles(b, &k);
        }
        ph.dma_out += eng.max(comp_end) - comp_end;
        self.acc_total += acc;
        let first = &instrs[0];
        Ok(LayerReport {
            index: tiles[0].layer as usize,
            kind: first.kind,
            precision: first.precision,
            tiles: instrs.len(),
            cycles: ph.sum(),
            phases: ph,
            macs_nominal: nominal,
            macs_effective: effective,
            pool_ops,
        })
    }
}

/// Runs a linked image. Outputs are read back from L2 through the image's
/// output symbols.
pub fn simulate(image: &MemoryImage, cfg: &MemConfig, knobs: &SimKnobs) -> Result<SimResult> {
    let instrs = image.decode()?;
    let mut sim = Simulator::new(image, cfg, *knobs);
    let mut report = CycleReport::default();
    let mut peak_slots = 0u64;
    let mut s = 0;
    while s < instrs.len() {
        let layer_of = |i: &UcodeInstruction| image.dma.get(i.tile_id as usize).map(|d| d.layer);
        let l = layer_of(&instrs[s]);
        let mut e = s + 1;
        while e < instrs.len() && layer_of(&instrs[e]) == l {
            e += 1;
        }
        let lr = sim.run_layer(&instrs[s..e], image, cfg)?;
        peak_slots += (ARRAY_DIM * ARRAY_DIM * lr.precision.lanes()) as u64 * lr.cycles;
        report.total_cycles += lr.cycles;
        report.phases += lr.phases;
        report.macs_nominal += lr.macs_nominal;
        report.macs_effective += lr.macs_effective;
        report.pool_ops += lr.pool_ops;
        report.layers.push(lr);
        s = e;
    }
    report.accesses = sim.acc_total;
    report.utilization = if peak_slots == 0 {
        0.0
    } else {
        report.macs_effective as f64 / peak_slots as f64
    };
    let outputs = if knobs.functional {
        image
            .outputs()
            .map(|sym| Ok((sym.name.clone(), MemoryImage::read_tensor(&sim.m.l2.bytes, sym)?)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(SimResult {
        outputs,
        report,
        l2: sim.m.l2.bytes,
    })
}
