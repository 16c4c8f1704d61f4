//! 256-bit layer instruction and its fixed field layout.
//!
//! | bits    | field                                                    |
//! |---------|----------------------------------------------------------|
//! | 0-3     | layer kind                                               |
//! | 4-5     | unit: 1 OXK, 2 CK, 3 pooling                             |
//! | 8-9     | precision: 0 INT8, 1 INT4, 2 INT2                        |
//! | 10-12   | activation                                               |
//! | 13      | sparsity enable                                          |
//! | 14-15   | upsample - 1                                             |
//! | 16-20   | requant shift                                            |
//! | 21      | zero-shuffle                                             |
//! | 22      | tap reload                                               |
//! | 23-25   | active PE columns - 1                                    |
//! | 26      | weights streamed (layer spans several K tiles)           |
//! | 27-28   | x phase on the upsampled grid                            |
//! | 29-30   | y phase on the upsampled grid                            |
//! | 31      | L1 norm (SVM)                                            |
//! | 32-127  | C, K, OX, OY, FX, FY; 16 bits each (OY holds batch on CK) |
//! | 128-143 | stride, dilation                                         |
//! | 144-239 | L1 weights, L1 act-in, L1 act-out, index memory; 24 bits |
//! | 240-255 | tile id                                                  |

use serde::{Deserialize, Serialize};

use crate::compiler::tiling::TileSchedule;
use crate::compiler::FifoPlan;
use crate::error::{FlexError, Result};
use crate::ir::layer::{Activation, LayerDescriptor, LayerKind};
use crate::ir::loopnest::Dataflow;
use crate::ir::svm::Norm;
use crate::ir::tensor::Precision;

pub const UCODE_BYTES: usize = 32;
const ADDR_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Oxk,
    Ck,
    Pool,
}

impl Unit {
    pub fn dataflow(self) -> Option<Dataflow> {
        match self {
            Unit::Oxk => Some(Dataflow::Oxk),
            Unit::Ck => Some(Dataflow::Ck),
            Unit::Pool => None,
        }
    }

    pub fn for_kind(kind: LayerKind) -> Self {
        match kind {
            LayerKind::Maxpool => Unit::Pool,
            k if k.is_mmm() => Unit::Oxk,
            _ => Unit::Ck,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcodeInstruction {
    pub kind: LayerKind,
    pub unit: Unit,
    pub precision: Precision,
    pub activation: Activation,
    pub sparsity_enable: bool,
    pub upsample: u8,
    pub requant_shift: u8,
    pub zero_shuffle: bool,
    pub tap_reload: bool,
    pub ox_par: u8,
    pub weights_streamed: bool,
    pub phase_x: u8,
    pub phase_y: u8,
    pub norm: Norm,
    pub c: u16,
    pub k: u16,
    pub ox: u16,
    pub oy: u16,
    pub fx: u16,
    pub fy: u16,
    pub stride: u8,
    pub dilation: u8,
    pub weights_addr: u32,
    pub act_in_addr: u32,
    pub act_out_addr: u32,
    pub index_addr: u32,
    pub tile_id: u16,
}

fn kind_code(k: LayerKind) -> u64 {
    match k {
        LayerKind::Conv2d => 1,
        LayerKind::Conv1dDilated => 2,
        LayerKind::Deconv2d => 3,
        LayerKind::Dense => 4,
        LayerKind::RnnStep => 5,
        LayerKind::SvmNorm => 6,
        LayerKind::Maxpool => 7,
    }
}

fn kind_from_code(c: u64) -> Option<LayerKind> {
    LayerKind::ALL.into_iter().find(|&k| kind_code(k) == c)
}

fn prec_code(p: Precision) -> u64 {
    match p {
        Precision::Int8 => 0,
        Precision::Int4 => 1,
        Precision::Int2 => 2,
        Precision::Int32 => 3,
    }
}

#[derive(Default)]
struct Bits([u64; 4]);

impl Bits {
    fn put(&mut self, pos: usize, width: usize, v: u64) {
        debug_assert!(width == 64 || v >> width == 0, "field at {pos} overflows");
        for i in 0..width {
            if v >> i & 1 == 1 {
                let b = pos + i;
                self.0[b / 64] |= 1 << (b % 64);
            }
        }
    }

    fn get(&self, pos: usize, width: usize) -> u64 {
        (0..width).fold(0, |acc, i| {
            let b = pos + i;
            acc | (self.0[b / 64] >> (b % 64) & 1) << i
        })
    }
}

impl UcodeInstruction {
    pub fn pack(&self) -> [u8; UCODE_BYTES] {
        let mut b = Bits::default();
        let unit = match self.unit {
            Unit::Oxk => 1,
            Unit::Ck => 2,
            Unit::Pool => 3,
        };
        b.put(0, 4, kind_code(self.kind));
        b.put(4, 2, unit);
        b.put(8, 2, prec_code(self.precision));
        b.put(10, 3, self.activation.code() as u64);
        b.put(13, 1, self.sparsity_enable as u64);
        b.put(14, 2, self.upsample as u64 - 1);
        b.put(16, 5, self.requant_shift as u64);
        b.put(21, 1, self.zero_shuffle as u64);
        b.put(22, 1, self.tap_reload as u64);
        b.put(23, 3, self.ox_par as u64 - 1);
        b.put(26, 1, self.weights_streamed as u64);
        b.put(27, 2, self.phase_x as u64);
        b.put(29, 2, self.phase_y as u64);
        b.put(31, 1, (self.norm == Norm::L1) as u64);
        for (i, v) in [self.c, self.k, self.ox, self.oy, self.fx, self.fy].into_iter().enumerate() {
            b.put(32 + 16 * i, 16, v as u64);
        }
        b.put(128, 8, self.stride as u64);
        b.put(136, 8, self.dilation as u64);
        let addrs = [self.weights_addr, self.act_in_addr, self.act_out_addr, self.index_addr];
        for (i, a) in addrs.into_iter().enumerate() {
            b.put(144 + 24 * i, 24, a as u64);
        }
        b.put(240, 16, self.tile_id as u64);
        let mut out = [0u8; UCODE_BYTES];
        for (i, w) in b.0.iter().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn unpack(bytes: &[u8; UCODE_BYTES]) -> Result<Self> {
        let mut b = Bits::default();
        for i in 0..4 {
            b.0[i] = u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
        let bad = |what: &str, v: u64| FlexError::Decode(format!("invalid {what} code {v}"));
        let kind = kind_from_code(b.get(0, 4)).ok_or_else(|| bad("opcode", b.get(0, 8)))?;
        let unit = match b.get(4, 2) {
            1 => Unit::Oxk,
            2 => Unit::Ck,
            3 => Unit::Pool,
            v => return Err(bad("unit", v)),
        };
        if unit != Unit::for_kind(kind) || b.get(6, 2) != 0 {
            return Err(bad("opcode", b.get(0, 8)));
        }
        let precision = match b.get(8, 2) {
            0 => Precision::Int8,
            1 => Precision::Int4,
            2 => Precision::Int2,
            v => return Err(bad("precision", v)),
        };
        let activation =
            Activation::from_code(b.get(10, 3) as u8).ok_or_else(|| bad("activation", b.get(10, 3)))?;
        let bound = |i: usize| b.get(32 + 16 * i, 16) as u16;
        let addr = |i: usize| b.get(144 + 24 * i, 24) as u32;
        Ok(Self {
            kind,
            unit,
            precision,
            activation,
            sparsity_enable: b.get(13, 1) == 1,
            upsample: b.get(14, 2) as u8 + 1,
            requant_shift: b.get(16, 5) as u8,
            zero_shuffle: b.get(21, 1) == 1,
            tap_reload: b.get(22, 1) == 1,
            ox_par: b.get(23, 3) as u8 + 1,
            weights_streamed: b.get(26, 1) == 1,
            phase_x: b.get(27, 2) as u8,
            phase_y: b.get(29, 2) as u8,
            norm: if b.get(31, 1) == 1 { Norm::L1 } else { Norm::L2 },
            c: bound(0),
            k: bound(1),
            ox: bound(2),
            oy: bound(3),
            fx: bound(4),
            fy: bound(5),
            stride: b.get(128, 8) as u8,
            dilation: b.get(136, 8) as u8,
            weights_addr: addr(0),
            act_in_addr: addr(1),
            act_out_addr: addr(2),
            index_addr: addr(3),
            tile_id: b.get(240, 16) as u16,
        })
    }

    /// Output rows on OXK/pooling tiles, batch entries on CK tiles.
    pub fn rows(&self) -> usize {
        self.oy as usize
    }
}

fn addr24(v: usize, what: &str) -> Result<u32> {
    if v >= ADDR_LIMIT {
        return Err(FlexError::AddressOverflow(format!("{what} address {v:#x} needs more than 24 bits")));
    }
    Ok(v as u32)
}

fn u16_field(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| FlexError::AddressOverflow(format!("{what} = {v} exceeds 16 bits")))
}

/// One instruction per tile, in schedule order. `first_tile_id` offsets the
/// tile ids when several layers share an image.
pub fn emit_ucode(
    desc: &LayerDescriptor,
    schedule: &TileSchedule,
    first_tile_id: usize,
    index_base: usize,
) -> Result<Vec<UcodeInstruction>> {
    let unit = Unit::for_kind(desc.kind);
    let plan = FifoPlan::for_layer(desc);
    let streamed = schedule.k_tiles() > 1;
    let deconv = desc.kind == LayerKind::Deconv2d && desc.upsample > 1;
    schedule
        .tiles
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let index_addr = match &desc.sparsity {
                Some(map) => index_base + (t.k.start / 8) * super::words_per_block(map.channels()) * 4,
                None => 0,
            };
            Ok(UcodeInstruction {
                kind: desc.kind,
                unit,
                precision: desc.precision,
                activation: desc.activation,
                sparsity_enable: desc.sparsity.is_some(),
                upsample: desc.upsample as u8,
                requant_shift: desc.requant_shift as u8,
                zero_shuffle: deconv,
                tap_reload: unit == Unit::Oxk && plan.tap_reload,
                ox_par: if unit == Unit::Oxk { plan.ox_par as u8 } else { 8 },
                weights_streamed: streamed,
                phase_x: t.phase_x as u8,
                phase_y: t.phase_y as u8,
                norm: desc.norm,
                c: u16_field(desc.c, "C")?,
                k: u16_field(t.k.len(), "K")?,
                ox: u16_field(desc.ox, "OX")?,
                oy: u16_field(t.rows.len(), "OY")?,
                fx: u16_field(desc.fx, "FX")?,
                fy: u16_field(desc.fy, "FY")?,
                stride: desc.stride as u8,
                dilation: desc.dilation as u8,
                weights_addr: addr24(t.weights_l1, "weights")?,
                act_in_addr: addr24(t.act_in_l1, "act-in")?,
                act_out_addr: addr24(t.act_out_l1, "act-out")?,
                index_addr: addr24(index_addr, "index")?,
                tile_id: u16_field(first_tile_id + i, "tile id")?,
            })
        })
        .collect()
}
