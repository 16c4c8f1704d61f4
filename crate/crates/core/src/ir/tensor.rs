//! Signed integer tensors at 2/4/8-bit operand precision (plus 32-bit for raw
//! accumulator outputs) and their little-endian blob format.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"FLEXTNSR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Precision {
    Int2,
    Int4,
    Int8,
    /// Raw accumulator values (SVM norms); never a layer operand precision.
    Int32,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::Int2 => 2,
            Precision::Int4 => 4,
            Precision::Int8 => 8,
            Precision::Int32 => 32,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            2 => Ok(Precision::Int2),
            4 => Ok(Precision::Int4),
            8 => Ok(Precision::Int8),
            32 => Ok(Precision::Int32),
            other => Err(FlexError::Precision(format!("{other} bits"))),
        }
    }

    pub fn min_value(self) -> i32 {
        if self == Precision::Int32 {
            i32::MIN
        } else {
            -(1 << (self.bits() - 1))
        }
    }

    pub fn max_value(self) -> i32 {
        if self == Precision::Int32 {
            i32::MAX
        } else {
            (1 << (self.bits() - 1)) - 1
        }
    }

    pub fn contains(self, v: i32) -> bool {
        v >= self.min_value() && v <= self.max_value()
    }

    /// Operand values packed per 8-bit word; also the number of MACs a PE
    /// retires per cycle at this precision.
    pub fn lanes(self) -> usize {
        match self {
            Precision::Int2 => 4,
            Precision::Int4 => 2,
            Precision::Int8 => 1,
            Precision::Int32 => 1,
        }
    }

    /// Bytes occupied by `n` packed elements.
    pub fn bytes_for(self, n: usize) -> usize {
        (n * self.bits() as usize).div_ceil(8)
    }

    pub fn is_operand(self) -> bool {
        self != Precision::Int32
    }
}

impl TryFrom<u8> for Precision {
    type Error = FlexError;
    fn try_from(v: u8) -> Result<Self> {
        Precision::from_bits(v as u32)
    }
}

impl From<Precision> for u8 {
    fn from(p: Precision) -> u8 {
        p.bits() as u8
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "INT{}", self.bits())
    }
}

/// Row-major signed integer tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantTensor {
    shape: Vec<usize>,
    precision: Precision,
    data: Vec<i32>,
}

impl QuantTensor {
    pub fn new(shape: Vec<usize>, precision: Precision, data: Vec<i32>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(FlexError::Dimension(format!("tensor shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(FlexError::ShapeMismatch(format!(
                "shape {shape:?} holds {n} elements, data has {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| !precision.contains(v)) {
            return Err(FlexError::Precision(format!(
                "value {bad} outside the {precision} range"
            )));
        }
        Ok(Self {
            shape,
            precision,
            data,
        })
    }

    pub fn zeros(shape: Vec<usize>, precision: Precision) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, precision, vec![0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<i32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same data viewed under a different shape with the same element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.precision, self.data.clone())
    }

    pub fn byte_len(&self) -> usize {
        self.precision.bytes_for(self.data.len())
    }

    /// Packed payload without header: sub-byte values little-endian within
    /// each byte, 32-bit values little-endian.
    pub fn packed_data(&self) -> Vec<u8> {
        pack_values(&self.data, self.precision)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 4 * self.shape.len() + self.byte_len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.push(self.precision.bits() as u8);
        out.push(self.shape.len() as u8);
        for &e in &self.shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.packed_data());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        Self::read_from(&mut cursor)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(FlexError::Format("bad tensor magic".into()));
        }
        let mut hdr = [0u8; 2];
        r.read_exact(&mut hdr)?;
        let precision = Precision::from_bits(hdr[0] as u32)?;
        let rank = hdr[1] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut e = [0u8; 4];
            r.read_exact(&mut e)?;
            shape.push(u32::from_le_bytes(e) as usize);
        }
        let n: usize = shape.iter().product();
        let mut payload = vec![0u8; precision.bytes_for(n)];
        r.read_exact(&mut payload)?;
        Self::new(shape, precision, unpack_values(&payload, precision, n))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// 64-bit FNV-1a over the serialized blob.
    pub fn digest(&self) -> u64 {
        crate::fnv1a64(&self.to_bytes())
    }
}

pub fn pack_values(values: &[i32], precision: Precision) -> Vec<u8> {
    match precision {
        Precision::Int8 => values.iter().map(|&v| v as i8 as u8).collect(),
        Precision::Int32 => values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        Precision::Int2 | Precision::Int4 => {
            let bits = precision.bits() as usize;
            let mask = (1u32 << bits) - 1;
            let mut out = vec![0u8; precision.bytes_for(values.len())];
            for (i, &v) in values.iter().enumerate() {
                let bit = i * bits;
                out[bit / 8] |= (((v as u32) & mask) << (bit % 8)) as u8;
            }
            out
        }
    }
}

pub fn unpack_values(bytes: &[u8], precision: Precision, n: usize) -> Vec<i32> {
    match precision {
        Precision::Int8 => bytes[..n].iter().map(|&b| b as i8 as i32).collect(),
        Precision::Int32 => bytes[..4 * n]
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Precision::Int2 | Precision::Int4 => {
            let bits = precision.bits() as usize;
            let mask = (1u32 << bits) - 1;
            let sign = 1u32 << (bits - 1);
            (0..n)
                .map(|i| {
                    let bit = i * bits;
                    let raw = ((bytes[bit / 8] as u32) >> (bit % 8)) & mask;
                    if raw & sign != 0 {
                        raw as i32 - (1 << bits)
                    } else {
                        raw as i32
                    }
                })
                .collect()
        }
    }
}
