//! L1 tiling with ping-pong banks and per-operand DMA descriptors.
//!
//! Tiles split K (channels for pooling) outermost and output rows (batch on
//! CK) inside. C is never split: accumulators live in the PEs and there is
//! no partial-sum path back to memory.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::compiler::MemConfig;
use crate::error::{FlexError, Result};
use crate::ir::layer::{LayerDescriptor, LayerKind};
use crate::ir::loopnest::ARRAY_DIM;
use crate::ir::tensor::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bank {
    Ping,
    Pong,
}

impl Bank {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DmaDirection {
    /// L2 to L1
    In,
    /// L1 to L2
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Weights,
    Input,
    Output,
}

/// Moves a 3-D window between an L2 tensor and a dense L1 buffer. Window
/// positions outside the tensor are zero-filled on the way in, as are
/// channels flagged in `skip_channels`; neither costs an L2 read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaDescriptor {
    pub direction: DmaDirection,
    pub operand: Operand,
    pub precision: Precision,
    pub l2_addr: u32,
    pub l1_addr: u32,
    pub shape: [u32; 3],
    pub origin: [i32; 3],
    pub extent: [u32; 3],
    /// Per window channel (axis 0); empty means none skipped.
    pub skip_channels: Vec<bool>,
}

impl DmaDescriptor {
    fn skipped(&self, ch: usize) -> bool {
        self.skip_channels.get(ch).copied().unwrap_or(false)
    }

    fn in_bounds(&self, axis: usize) -> usize {
        let lo = self.origin[axis].max(0) as i64;
        let hi = (self.origin[axis] as i64 + self.extent[axis] as i64).min(self.shape[axis] as i64);
        (hi - lo).max(0) as usize
    }

    /// Elements actually read from (or written to) L2.
    pub fn l2_elements(&self) -> usize {
        let ch = (0..self.extent[0] as usize)
            .filter(|&c| {
                let g = self.origin[0] as i64 + c as i64;
                g >= 0 && g < self.shape[0] as i64 && !self.skipped(c)
            })
            .count();
        ch * self.in_bounds(1) * self.in_bounds(2)
    }

    pub fn bytes(&self) -> usize {
        self.precision.bytes_for(self.l2_elements())
    }

    pub fn l1_elements(&self) -> usize {
        self.extent.iter().map(|&e| e as usize).product()
    }

    pub fn l1_bytes(&self) -> usize {
        self.precision.bytes_for(self.l1_elements())
    }

    pub fn l2_tensor_bytes(&self) -> usize {
        self.precision
            .bytes_for(self.shape.iter().map(|&e| e as usize).product())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileDma {
    pub layer: u16,
    pub weights: Option<DmaDescriptor>,
    pub input: DmaDescriptor,
    pub output: DmaDescriptor,
}

impl TileDma {
    pub fn in_bytes(&self) -> usize {
        self.weights.as_ref().map_or(0, |w| w.bytes()) + self.input.bytes()
    }

    pub fn out_bytes(&self) -> usize {
        self.output.bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub bank: Bank,
    /// Output channels (pooling: channels).
    pub k: Range<usize>,
    /// Output rows (CK: batch entries).
    pub rows: Range<usize>,
    pub phase_x: usize,
    pub phase_y: usize,
    pub weights_l1: usize,
    pub act_in_l1: usize,
    pub act_out_l1: usize,
    pub dma: TileDma,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSchedule {
    pub tiles: Vec<Tile>,
}

impl TileSchedule {
    pub fn k_tiles(&self) -> usize {
        let mut starts: Vec<usize> = self.tiles.iter().map(|t| t.k.start).collect();
        starts.dedup();
        starts.len()
    }

    /// Sets the L2 base addresses of the layer's tensors.
    pub fn rebase(&mut self, weights: u32, input: u32, output: u32) {
        for t in &mut self.tiles {
            if let Some(w) = &mut t.dma.weights {
                w.l2_addr = weights;
            }
            t.dma.input.l2_addr = input;
            t.dma.output.l2_addr = output;
        }
    }
}

/// Origin, phase and extent of the input window along one axis, in units of
/// the real (un-upsampled) input. Positions are first computed on the
/// upsampled grid, where output `o` reads `o * stride + f * dil - pad`.
pub fn axis_window(
    start: usize,
    n_out: usize,
    stride: usize,
    f: usize,
    dil: usize,
    pad: usize,
    u: usize,
) -> (i64, usize, usize) {
    let s0 = (start * stride) as i64 - pad as i64;
    let origin = s0.div_euclid(u as i64);
    let phase = (s0 - origin * u as i64) as usize;
    (origin, phase, window_extent(phase, n_out, stride, f, dil, u))
}

/// Real input positions spanned by `n_out` outputs starting at `phase`.
pub fn window_extent(phase: usize, n_out: usize, stride: usize, f: usize, dil: usize, u: usize) -> usize {
    (phase + (n_out - 1) * stride + (f - 1) * dil) / u + 1
}

fn align4(v: usize) -> usize {
    v.div_ceil(4) * 4
}

/// Elements of weights for kernels [k0, k1) in the L2 layout: k-major, and
/// for sparse layers only the channels kept by each kernel's block.
fn weight_elems(desc: &LayerDescriptor, ks: Range<usize>) -> usize {
    let per_c = desc.fy * desc.fx;
    ks.map(|k| match &desc.sparsity {
        Some(m) => m.kept_channels(k / 8) * per_c,
        None => desc.c * per_c,
    })
    .sum()
}

/// Channels that no kernel in [k0, k1) uses.
fn skip_mask(desc: &LayerDescriptor, ks: &Range<usize>) -> Vec<bool> {
    match &desc.sparsity {
        Some(m) if desc.kind.is_mmm() => (0..desc.c)
            .map(|c| (ks.start / 8..ks.end.div_ceil(8)).all(|b| m.is_pruned(b, c)))
            .collect(),
        _ => Vec::new(),
    }
}

struct Geometry<'a> {
    desc: &'a LayerDescriptor,
    precision: Precision,
    out_precision: Precision,
}

impl Geometry<'_> {
    fn d(&self) -> &LayerDescriptor {
        self.desc
    }

    /// Worst-case input window bytes for `n` output rows over `ch` channels.
    fn in_bytes(&self, ch: usize, n: usize) -> usize {
        let d = self.d();
        if d.kind.is_mvm() {
            return self.precision.bytes_for(n * d.c);
        }
        let phase = d.upsample - 1;
        let rows = window_extent(phase, n, d.stride, d.fy, d.dilation, d.upsample);
        let cols = window_extent(phase, d.ox, d.stride, d.fx, d.dilation, d.upsample);
        self.precision.bytes_for(ch * rows * cols)
    }

    fn out_bytes(&self, kt: usize, n: usize) -> usize {
        let d = self.d();
        let per_row = if d.kind.is_mvm() { kt } else { kt * d.ox };
        self.out_precision.bytes_for(n * per_row)
    }

    fn act_fits(&self, ch: usize, kt: usize, n: usize, cfg: &MemConfig) -> bool {
        align4(self.in_bytes(ch, n)) + self.out_bytes(kt, n) <= cfg.act_bank_bytes
    }

    fn rows_total(&self) -> usize {
        let d = self.d();
        if d.kind.is_mvm() {
            d.batch
        } else {
            d.oy
        }
    }

    /// Largest row count whose tile fits, or `None` if one row does not.
    fn max_rows(&self, ch: usize, kt: usize, cfg: &MemConfig) -> Option<usize> {
        let total = self.rows_total();
        if !self.act_fits(ch, kt, 1, cfg) {
            return None;
        }
        let (mut lo, mut hi) = (1, total);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.act_fits(ch, kt, mid, cfg) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Some(lo)
    }
}

fn k_ranges(desc: &LayerDescriptor, geo: &Geometry, cfg: &MemConfig) -> Result<Vec<Range<usize>>> {
    if desc.kind == LayerKind::Maxpool {
        // channel split only when one output row across all channels overflows
        let mut ct = desc.c;
        while ct > 0 && !geo.act_fits(ct, ct, 1, cfg) {
            ct -= 1;
        }
        if ct == 0 {
            return Err(FlexError::Untileable(
                "one pooling row of a single channel exceeds an activation bank".into(),
            ));
        }
        return Ok((0..desc.c).step_by(ct).map(|c| c..(c + ct).min(desc.c)).collect());
    }
    let kp = ARRAY_DIM * desc.precision.lanes();
    let step = if desc.sparsity.is_some() { 8 } else { 1 };
    let mut out = Vec::new();
    let mut k0 = 0;
    while k0 < desc.k {
        let bytes = |k1: usize| desc.precision.bytes_for(weight_elems(desc, k0..k1));
        // grow by whole passes, then fall back to smaller steps
        let mut k1 = k0;
        for inc in [kp, step] {
            while k1 < desc.k && bytes((k1 + inc).min(desc.k)) <= cfg.weight_bank_bytes {
                k1 = (k1 + inc).min(desc.k);
            }
        }
        if k1 == k0 {
            return Err(FlexError::Untileable(format!(
                "{} weights for one kernel step exceed a {} byte bank",
                desc.kind, cfg.weight_bank_bytes
            )));
        }
        out.push(k0..k1);
        k0 = k1;
    }
    Ok(out)
}

/// Partitions the layer into tiles that fit the L1 bank budgets.
pub fn tile(desc: &LayerDescriptor, cfg: &MemConfig) -> Result<TileSchedule> {
    let geo = Geometry {
        desc,
        precision: desc.precision,
        out_precision: desc.output_precision(),
    };
    let mut tiles = Vec::new();
    for ks in k_ranges(desc, &geo, cfg)? {
        let kt = ks.len();
        let ch = if desc.kind == LayerKind::Maxpool { kt } else { desc.c };
        let n = geo.max_rows(ch, kt, cfg).ok_or_else(|| {
            FlexError::Untileable(format!(
                "one output row of {} with C = {} exceeds a {} byte activation bank",
                desc.kind, desc.c, cfg.act_bank_bytes
            ))
        })?;
        let total = geo.rows_total();
        let mut r0 = 0;
        while r0 < total {
            let rows = r0..(r0 + n).min(total);
            let bank = if tiles.len() % 2 == 0 { Bank::Ping } else { Bank::Pong };
            tiles.push(make_tile(desc, cfg, bank, ks.clone(), rows));
            r0 += n;
        }
    }
    Ok(TileSchedule { tiles })
}

fn make_tile(desc: &LayerDescriptor, cfg: &MemConfig, bank: Bank, ks: Range<usize>, rows: Range<usize>) -> Tile {
    let p = desc.precision;
    let kt = ks.len();
    let nr = rows.len();
    let (input, phase_x, phase_y, output_shape, output_origin, output_extent);
    if desc.kind.is_mvm() {
        input = DmaDescriptor {
            direction: DmaDirection::In,
            operand: Operand::Input,
            precision: p,
            l2_addr: 0,
            l1_addr: 0,
            shape: [1, desc.batch as u32, desc.c as u32],
            origin: [0, rows.start as i32, 0],
            extent: [1, nr as u32, desc.c as u32],
            skip_channels: Vec::new(),
        };
        phase_x = 0;
        phase_y = 0;
        output_shape = [1, desc.batch as u32, desc.k as u32];
        output_origin = [0, rows.start as i32, ks.start as i32];
        output_extent = [1, nr as u32, kt as u32];
    } else {
        let u = desc.upsample;
        let (oy0, py, ey) = axis_window(rows.start, nr, desc.stride, desc.fy, desc.dilation, desc.pad_y(), u);
        let (ox0, px, ex) = axis_window(0, desc.ox, desc.stride, desc.fx, desc.dilation, desc.pad_x(), u);
        let pool = desc.kind == LayerKind::Maxpool;
        let (c0, ct) = if pool { (ks.start, kt) } else { (0, desc.c) };
        input = DmaDescriptor {
            direction: DmaDirection::In,
            operand: Operand::Input,
            precision: p,
            l2_addr: 0,
            l1_addr: 0,
            shape: [desc.c as u32, desc.in_y() as u32, desc.in_x() as u32],
            origin: [c0 as i32, oy0 as i32, ox0 as i32],
            extent: [ct as u32, ey as u32, ex as u32],
            skip_channels: skip_mask(desc, &ks),
        };
        phase_x = px;
        phase_y = py;
        output_shape = [desc.k as u32, desc.oy as u32, desc.ox as u32];
        output_origin = [ks.start as i32, rows.start as i32, 0];
        output_extent = [kt as u32, nr as u32, desc.ox as u32];
    }
    let act_in_l1 = bank.index() * cfg.act_bank_bytes;
    let act_out_l1 = act_in_l1 + align4(input.l1_bytes());
    let weights_l1 = bank.index() * cfg.weight_bank_bytes;
    let weights = desc.kind.has_weights().then(|| {
        let start = weight_elems(desc, 0..ks.start);
        let n = weight_elems(desc, ks.clone());
        DmaDescriptor {
            direction: DmaDirection::In,
            operand: Operand::Weights,
            precision: p,
            l2_addr: 0,
            l1_addr: weights_l1 as u32,
            shape: [1, 1, weight_elems(desc, 0..desc.k) as u32],
            origin: [0, 0, start as i32],
            extent: [1, 1, n as u32],
            skip_channels: Vec::new(),
        }
    });
    let input = DmaDescriptor {
        l1_addr: act_in_l1 as u32,
        ..input
    };
    let output = DmaDescriptor {
        direction: DmaDirection::Out,
        operand: Operand::Output,
        precision: desc.output_precision(),
        l2_addr: 0,
        l1_addr: act_out_l1 as u32,
        shape: output_shape,
        origin: output_origin,
        extent: output_extent,
        skip_channels: Vec::new(),
    };
    Tile {
        bank,
        k: ks,
        rows,
        phase_x,
        phase_y,
        weights_l1,
        act_in_l1,
        act_out_l1,
        dma: TileDma {
            layer: 0,
            weights,
            input,
            output,
        },
    }
}

/// L2 byte size of a layer's weight tensor in accelerator layout.
pub fn weight_l2_bytes(desc: &LayerDescriptor) -> usize {
    if !desc.kind.has_weights() {
        return 0;
    }
    desc.precision.bytes_for(weight_elems(desc, 0..desc.k))
}

/// Reorders [K, C, FY, FX] weights into the L2 layout, dropping pruned
/// channels per block.
pub fn layout_weights(desc: &LayerDescriptor, weights: &[i32]) -> Vec<i32> {
    let per_c = desc.fy * desc.fx;
    match &desc.sparsity {
        None => weights.to_vec(),
        Some(m) => {
            let mut out = Vec::with_capacity(weight_elems(desc, 0..desc.k));
            for k in 0..desc.k {
                for c in (0..desc.c).filter(|&c| !m.is_pruned(k / 8, c)) {
                    let at = (k * desc.c + c) * per_c;
                    out.extend_from_slice(&weights[at..at + per_c]);
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::sparsity::SparsityIndexMap;

    #[test]
    fn cnn3x3_is_one_tile() {
        let d = LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3);
        let s = tile(&d, &MemConfig::default()).unwrap();
        assert_eq!(s.tiles.len(), 1);
        let t = &s.tiles[0];
        assert_eq!(t.dma.weights.as_ref().unwrap().bytes(), 9216);
        // zero padding is generated, not read
        assert_eq!(t.dma.input.bytes(), 32 * 16 * 16);
        assert_eq!(t.dma.input.l1_bytes(), 32 * 18 * 18);
        assert_eq!(t.dma.input.origin, [0, -1, -1]);
        assert_eq!(t.dma.out_bytes(), 8192);
    }

    #[test]
    fn large_weights_split_over_k_and_alternate() {
        let d = LayerDescriptor::dense(1024, 96, 1);
        let s = tile(&d, &MemConfig::default()).unwrap();
        assert!(s.tiles.len() >= 3);
        for (i, t) in s.tiles.iter().enumerate() {
            assert_eq!(t.bank, if i % 2 == 0 { Bank::Ping } else { Bank::Pong });
            assert!(t.dma.weights.as_ref().unwrap().bytes() <= 32 * 1024);
        }
    }

    #[test]
    fn tiles_partition_outputs() {
        let cfg = MemConfig::default();
        for d in [
            LayerDescriptor::conv2d(64, 80, 40, 40, 3, 3),
            LayerDescriptor::conv2d(16, 200, 64, 64, 5, 5),
            LayerDescriptor::dense(700, 300, 64),
            LayerDescriptor::deconv2d(32, 16, 20, 20, 3, 2),
            LayerDescriptor::maxpool(64, 32, 32, 2),
        ] {
            let s = tile(&d, &cfg).unwrap();
            let out = d.output_shape();
            let mut seen = vec![0u8; out.iter().product()];
            for t in &s.tiles {
                let o = &t.dma.output;
                assert!(o.l1_bytes() + t.dma.input.l1_bytes() <= cfg.act_bank_bytes, "{d:?}");
                for a in 0..o.extent[0] as usize {
                    for b in 0..o.extent[1] as usize {
                        for c in 0..o.extent[2] as usize {
                            let g = [
                                o.origin[0] as usize + a,
                                o.origin[1] as usize + b,
                                o.origin[2] as usize + c,
                            ];
                            let idx = (g[0] * o.shape[1] as usize + g[1]) * o.shape[2] as usize + g[2];
                            seen[idx] += 1;
                        }
                    }
                }
            }
            assert!(seen.iter().all(|&v| v == 1), "{:?} not a partition", d.kind);
        }
    }

    #[test]
    fn sparse_weights_are_compressed() {
        let m = SparsityIndexMap::uniform(32, 32, &(0..16).collect::<Vec<_>>());
        let d = LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3).with_sparsity(m);
        let s = tile(&d, &MemConfig::default()).unwrap();
        let t = &s.tiles[0];
        assert_eq!(t.dma.weights.as_ref().unwrap().bytes(), 9216 / 2);
        assert_eq!(t.dma.input.bytes(), 16 * 256);
        assert_eq!(weight_l2_bytes(&d), 4608);
    }

    #[test]
    fn deconv_window_uses_real_input() {
        let d = LayerDescriptor::deconv2d(4, 4, 3, 3, 3, 2);
        let s = tile(&d, &MemConfig::default()).unwrap();
        let i = &s.tiles[0].dma.input;
        // pad 1 on the upsampled grid: s0 = -1 gives origin -1, phase 1
        assert_eq!(i.origin, [0, -1, -1]);
        assert_eq!((s.tiles[0].phase_x, s.tiles[0].phase_y), (1, 1));
        assert_eq!(i.extent, [4, 5, 5]);
        assert_eq!(i.bytes(), 4 * 9);
    }
}
