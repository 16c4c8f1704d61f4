//! Portable memory image (`.fxi`): magic `FLEXIMG1`, a section table of
//! (id, offset, length) u32 triples, then the section payloads. All integers
//! are little-endian.
//!
//! Sections: 1 instructions, 2 index memory, 3 L2 init, 4 symbols,
//! 5 per-tile DMA descriptors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compiler::tiling::{DmaDescriptor, DmaDirection, Operand, TileDma};
use crate::compiler::ucode::{UcodeInstruction, UCODE_BYTES};
use crate::error::{FlexError, Result};
use crate::ir::tensor::{Precision, QuantTensor};

pub const IMAGE_MAGIC: &[u8; 8] = b"FLEXIMG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymbolRole {
    Input,
    Weights,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub role: SymbolRole,
    pub layer: u16,
    pub addr: u32,
    pub bytes: u32,
    pub shape: Vec<usize>,
    pub precision: Precision,
}

impl Symbol {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.addr as usize..self.addr as usize + self.bytes as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryImage {
    /// Initialized L2 prefix; the rest of L2 reads as zero.
    pub l2: Vec<u8>,
    pub instructions: Vec<[u8; UCODE_BYTES]>,
    pub index_mem: Vec<u32>,
    pub symbols: Vec<Symbol>,
    /// Indexed by instruction tile id.
    pub dma: Vec<TileDma>,
}

impl MemoryImage {
    pub fn decode(&self) -> Result<Vec<UcodeInstruction>> {
        self.instructions.iter().map(UcodeInstruction::unpack).collect()
    }

    pub fn symbol(&self, name: &str) -> Option<&Symbol> {
        self.symbols.iter().find(|s| s.name == name)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Symbol> {
        self.symbols.iter().filter(|s| s.role == SymbolRole::Output)
    }

    /// Reads a symbol's tensor out of an L2 array.
    pub fn read_tensor(l2: &[u8], sym: &Symbol) -> Result<QuantTensor> {
        let bytes = l2
            .get(sym.range())
            .ok_or_else(|| FlexError::AddressFault(format!("symbol {} outside L2", sym.name)))?;
        let n = sym.shape.iter().product();
        let data = crate::ir::tensor::unpack_values(bytes, sym.precision, n);
        QuantTensor::new(sym.shape.clone(), sym.precision, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut sections: Vec<(u32, Vec<u8>)> = Vec::new();
        sections.push((1, self.instructions.concat()));
        let mut w = W::default();
        for &x in &self.index_mem {
            w.u32(x);
        }
        sections.push((2, w.0));
        sections.push((3, self.l2.clone()));
        let mut w = W::default();
        w.u32(self.symbols.len() as u32);
        for s in &self.symbols {
            w.u16(s.name.len() as u16);
            w.0.extend_from_slice(s.name.as_bytes());
            w.u8(s.role as u8);
            w.u16(s.layer);
            w.u32(s.addr);
            w.u32(s.bytes);
            w.u8(s.precision.bits() as u8);
            w.u8(s.shape.len() as u8);
            for &e in &s.shape {
                w.u32(e as u32);
            }
        }
        sections.push((4, w.0));
        let mut w = W::default();
        w.u32(self.dma.len() as u32);
        for t in &self.dma {
            w.u16(t.layer);
            w.u8(t.weights.is_some() as u8);
            if let Some(d) = &t.weights {
                w.dma(d);
            }
            w.dma(&t.input);
            w.dma(&t.output);
        }
        sections.push((5, w.0));

        let mut out = IMAGE_MAGIC.to_vec();
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        let mut offset = out.len() + 12 * sections.len();
        for (id, data) in &sections {
            for v in [*id, offset as u32, data.len() as u32] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            offset += data.len();
        }
        for (_, data) in sections {
            out.extend_from_slice(&data);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != IMAGE_MAGIC {
            return Err(FlexError::Format("missing FLEXIMG1 magic".into()));
        }
        let mut r = R { b: bytes, at: 8 };
        let n = r.u32()? as usize;
        let mut img = MemoryImage::default();
        for _ in 0..n {
            let (id, off, len) = (r.u32()?, r.u32()? as usize, r.u32()? as usize);
            let data = bytes
                .get(off..off + len)
                .ok_or_else(|| FlexError::Format(format!("section {id} runs past the file")))?;
            let mut s = R { b: data, at: 0 };
            match id {
                1 => {
                    if len % UCODE_BYTES != 0 {
                        return Err(FlexError::Format("instruction section not a multiple of 32 bytes".into()));
                    }
                    img.instructions = data
                        .chunks(UCODE_BYTES)
                        .map(|c| c.try_into().unwrap())
                        .collect();
                }
                2 => {
                    img.index_mem = (0..len / 4).map(|_| s.u32()).collect::<Result<_>>()?;
                }
                3 => img.l2 = data.to_vec(),
                4 => {
                    let count = s.u32()?;
                    for _ in 0..count {
                        let nl = s.u16()? as usize;
                        let name = String::from_utf8(s.take(nl)?.to_vec())
                            .map_err(|_| FlexError::Format("symbol name is not UTF-8".into()))?;
                        let role = match s.u8()? {
                            0 => SymbolRole::Input,
                            1 => SymbolRole::Weights,
                            2 => SymbolRole::Output,
                            v => return Err(FlexError::Format(format!("symbol role {v}"))),
                        };
                        let layer = s.u16()?;
                        let addr = s.u32()?;
                        let nbytes = s.u32()?;
                        let precision = Precision::from_bits(s.u8()? as u32)?;
                        let rank = s.u8()? as usize;
                        let shape = (0..rank).map(|_| s.u32().map(|v| v as usize)).collect::<Result<_>>()?;
                        img.symbols.push(Symbol {
                            name,
                            role,
                            layer,
                            addr,
                            bytes: nbytes,
                            shape,
                            precision,
                        });
                    }
                }
                5 => {
                    let count = s.u32()?;
                    for _ in 0..count {
                        let layer = s.u16()?;
                        let weights = if s.u8()? == 1 { Some(s.dma()?) } else { None };
                        let input = s.dma()?;
                        let output = s.dma()?;
                        img.dma.push(TileDma {
                            layer,
                            weights,
                            input,
                            output,
                        });
                    }
                }
                // unknown sections are skipped so newer images stay readable
                _ => {}
            }
        }
        Ok(img)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Default)]
struct W(Vec<u8>);

impl W {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn dma(&mut self, d: &DmaDescriptor) {
        self.u8(d.direction as u8);
        self.u8(d.operand as u8);
        self.u8(d.precision.bits() as u8);
        self.u32(d.l2_addr);
        self.u32(d.l1_addr);
        for i in 0..3 {
            self.u32(d.shape[i]);
        }
        for i in 0..3 {
            self.u32(d.origin[i] as u32);
        }
        for i in 0..3 {
            self.u32(d.extent[i]);
        }
        self.u32(d.skip_channels.len() as u32);
        let mut bits = vec![0u8; d.skip_channels.len().div_ceil(8)];
        for (i, &s) in d.skip_channels.iter().enumerate() {
            bits[i / 8] |= (s as u8) << (i % 8);
        }
        self.0.extend_from_slice(&bits);
    }
}

struct R<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> R<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .b
            .get(self.at..self.at + n)
            .ok_or_else(|| FlexError::Format("truncated image".into()))?;
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn dma(&mut self) -> Result<DmaDescriptor> {
        let direction = match self.u8()? {
            0 => DmaDirection::In,
            1 => DmaDirection::Out,
            v => return Err(FlexError::Format(format!("DMA direction {v}"))),
        };
        let operand = match self.u8()? {
            0 => Operand::Weights,
            1 => Operand::Input,
            2 => Operand::Output,
            v => return Err(FlexError::Format(format!("DMA operand {v}"))),
        };
        let precision = Precision::from_bits(self.u8()? as u32)?;
        let l2_addr = self.u32()?;
        let l1_addr = self.u32()?;
        let mut shape = [0u32; 3];
        let mut origin = [0i32; 3];
        let mut extent = [0u32; 3];
        for v in &mut shape {
            *v = self.u32()?;
        }
        for v in &mut origin {
            *v = self.u32()? as i32;
        }
        for v in &mut extent {
            *v = self.u32()?;
        }
        let n = self.u32()? as usize;
        let bits = self.take(n.div_ceil(8))?;
        let skip_channels = (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(DmaDescriptor {
            direction,
            operand,
            precision,
            l2_addr,
            l1_addr,
            shape,
            origin,
            extent,
            skip_channels,
        })
    }
}
