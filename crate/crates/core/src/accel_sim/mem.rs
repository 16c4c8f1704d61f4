//! Byte-addressed memories holding packed sub-byte elements, and the DMA
//! engine that moves 3-D windows between L2 and L1.

use crate::compiler::tiling::{DmaDescriptor, DmaDirection};
use crate::error::{FlexError, Result};
use crate::ir::tensor::Precision;

pub struct Mem {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

impl Mem {
    pub fn new(name: &'static str, size: usize) -> Self {
        Self {
            name,
            bytes: vec![0; size],
        }
    }

    pub fn check(&self, base: usize, n: usize, p: Precision) -> Result<()> {
        let end = base + p.bytes_for(n);
        if end > self.bytes.len() {
            return Err(FlexError::AddressFault(format!(
                "{} access [{base:#x}, {end:#x}) beyond {} bytes",
                self.name,
                self.bytes.len()
            )));
        }
        Ok(())
    }

    /// Element `i` of a packed array starting at byte `base`. Callers check
    /// the range first.
    pub fn read(&self, base: usize, i: usize, p: Precision) -> i32 {
        match p {
            Precision::Int8 => self.bytes[base + i] as i8 as i32,
            Precision::Int32 => {
                let a = base + 4 * i;
                i32::from_le_bytes(self.bytes[a..a + 4].try_into().unwrap())
            }
            _ => {
                let bits = p.bits() as usize;
                let bit = i * bits;
                let raw = (self.bytes[base + bit / 8] >> (bit % 8)) as u32 & ((1 << bits) - 1);
                ((raw << (32 - bits)) as i32) >> (32 - bits)
            }
        }
    }

    pub fn write(&mut self, base: usize, i: usize, p: Precision, v: i32) {
        match p {
            Precision::Int8 => self.bytes[base + i] = v as u8,
            Precision::Int32 => {
                let a = base + 4 * i;
                self.bytes[a..a + 4].copy_from_slice(&v.to_le_bytes());
            }
            _ => {
                let bits = p.bits() as usize;
                let bit = i * bits;
                let mask = (((1u32 << bits) - 1) << (bit % 8)) as u8;
                let b = &mut self.bytes[base + bit / 8];
                *b = (*b & !mask) | ((((v as u32) << (bit % 8)) as u8) & mask);
            }
        }
    }
}

/// Executes one descriptor. Inbound windows are zero-filled where they fall
/// outside the tensor or on skipped channels.
pub fn run_dma(d: &DmaDescriptor, l2: &mut Mem, l1: &mut Mem) -> Result<()> {
    let p = d.precision;
    let [s0, s1, s2] = d.shape.map(|v| v as i64);
    let [e0, e1, e2] = d.extent.map(|v| v as usize);
    let (l2b, l1b) = (d.l2_addr as usize, d.l1_addr as usize);
    l1.check(l1b, e0 * e1 * e2, p)?;
    l2.check(l2b, (s0 * s1 * s2) as usize, p)?;
    for a in 0..e0 {
        let g0 = d.origin[0] as i64 + a as i64;
        let skip = d.skip_channels.get(a).copied().unwrap_or(false);
        for b in 0..e1 {
            let g1 = d.origin[1] as i64 + b as i64;
            for c in 0..e2 {
                let g2 = d.origin[2] as i64 + c as i64;
                let inside = (0..s0).contains(&g0) && (0..s1).contains(&g1) && (0..s2).contains(&g2);
                let li = (a * e1 + b) * e2 + c;
                let gi = ((g0 * s1 + g1) * s2 + g2) as usize;
                match d.direction {
                    DmaDirection::In => {
                        let v = if inside && !skip { l2.read(l2b, gi, p) } else { 0 };
                        l1.write(l1b, li, p, v);
                    }
                    DmaDirection::Out => {
                        if inside {
                            l2.write(l2b, gi, p, l1.read(l1b, li, p));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}
