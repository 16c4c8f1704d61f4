//! Output-stage semantics shared by the golden executors and the simulator:
//! shift-based requantization, ReLU and the NLFG lookup table.

use std::sync::OnceLock;

use crate::ir::layer::Activation;
use crate::ir::tensor::Precision;

/// ReLU on the 32-bit accumulator, arithmetic right shift (floor), then
/// saturation to the two's-complement range of `precision`.
pub fn requantize(acc: i32, shift: u32, relu: bool, precision: Precision) -> i32 {
    debug_assert!(shift <= 31);
    let acc = if relu { acc.max(0) } else { acc };
    (acc >> shift).clamp(precision.min_value(), precision.max_value())
}

/// Non-linear functions served by the NLFG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlFunction {
    Tanh,
    Sigmoid,
}

impl NlFunction {
    pub fn exact(self, x: f64) -> f64 {
        match self {
            NlFunction::Tanh => x.tanh(),
            NlFunction::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Input codes are Q4.4 (value = code / 16, range [-8, 8)); output codes are
/// Q0.7 (value = code / 128) saturated to the signed 8-bit range.
pub const NLFG_IN_FRAC_BITS: u32 = 4;
pub const NLFG_OUT_SCALE: f64 = 128.0;
pub const NLFG_SEGMENTS: usize = 16;
const CODES_PER_SEGMENT: i32 = 8;
const COEF_FRAC_BITS: u32 = 8;

/// One linear segment in Q.8 fixed point: y = (intercept + slope * t) >> 8,
/// with `t` the code offset inside the segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub intercept: i32,
    pub slope: i32,
}

/// 16 uniform segments over the non-negative half of the input range; the
/// negative half follows from odd symmetry (tanh) or 1 - f(-x) (sigmoid).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NlfgTable {
    pub function: NlFunction,
    pub segments: [Segment; NLFG_SEGMENTS],
}

impl NlfgTable {
    fn build(function: NlFunction) -> Self {
        let mut segments = [Segment {
            intercept: 0,
            slope: 0,
        }; NLFG_SEGMENTS];
        let n = CODES_PER_SEGMENT as f64;
        for (s, seg) in segments.iter_mut().enumerate() {
            // least-squares line through the segment's eight code points
            let pts: Vec<(f64, f64)> = (0..CODES_PER_SEGMENT)
                .map(|t| {
                    let code = s as i32 * CODES_PER_SEGMENT + t;
                    let x = code as f64 / (1 << NLFG_IN_FRAC_BITS) as f64;
                    (t as f64, function.exact(x) * NLFG_OUT_SCALE)
                })
                .collect();
            let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
            // segment 0 is pinned to f(0) so the symmetric halves meet exactly
            let (slope, intercept) = if s == 0 {
                let y0 = pts[0].1;
                let stt: f64 = pts.iter().map(|p| p.0 * p.0).sum();
                let sty: f64 = pts.iter().map(|p| p.0 * (p.1 - y0)).sum();
                (sty / stt, y0)
            } else {
                (sxy / sxx, my - (sxy / sxx) * mt)
            };
            let scale = (1 << COEF_FRAC_BITS) as f64;
            *seg = Segment {
                intercept: (intercept * scale).round() as i32,
                slope: (slope * scale).round() as i32,
            };
        }
        Self { function, segments }
    }

    pub fn get(function: NlFunction) -> &'static NlfgTable {
        static TANH: OnceLock<NlfgTable> = OnceLock::new();
        static SIGMOID: OnceLock<NlfgTable> = OnceLock::new();
        match function {
            NlFunction::Tanh => TANH.get_or_init(|| Self::build(NlFunction::Tanh)),
            NlFunction::Sigmoid => SIGMOID.get_or_init(|| Self::build(NlFunction::Sigmoid)),
        }
    }

    /// Unclamped positive-half evaluation for magnitude codes 0..=127.
    fn eval_magnitude(&self, mag: i32) -> i32 {
        let seg = &self.segments[(mag / CODES_PER_SEGMENT) as usize];
        let t = mag % CODES_PER_SEGMENT;
        (seg.intercept + seg.slope * t + (1 << (COEF_FRAC_BITS - 1))) >> COEF_FRAC_BITS
    }

    /// Evaluates one Q4.4 input code; inputs outside [-128, 127] saturate.
    pub fn eval(&self, code: i32) -> i32 {
        let code = code.clamp(-128, 127);
        let mag = code.unsigned_abs().min(127) as i32;
        let y = self.eval_magnitude(mag);
        let out = match (self.function, code < 0) {
            (_, false) => y,
            (NlFunction::Tanh, true) => -y,
            (NlFunction::Sigmoid, true) => NLFG_OUT_SCALE as i32 - y,
        };
        out.clamp(-128, 127)
    }
}

/// Full output stage for one accumulator: requantize, then ReLU or the NLFG.
pub fn output_stage(acc: i32, shift: u32, activation: Activation, precision: Precision) -> i32 {
    match activation {
        Activation::None => requantize(acc, shift, false, precision),
        Activation::Relu => requantize(acc, shift, true, precision),
        Activation::Tanh => {
            NlfgTable::get(NlFunction::Tanh).eval(requantize(acc, shift, false, Precision::Int8))
        }
        Activation::Sigmoid => {
            NlfgTable::get(NlFunction::Sigmoid).eval(requantize(acc, shift, false, Precision::Int8))
        }
    }
}
