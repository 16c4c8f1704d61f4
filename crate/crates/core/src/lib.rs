//! Simulator, compiler and energy model for a flexible 8x8 PE-array ML
//! accelerator with an always-on wake-up controller.

pub mod accel_sim;
pub mod bench;
pub mod compiler;
pub mod energy_model;
pub mod error;
pub mod gen;
pub mod ir;
pub mod oracle;
pub mod scenario;
pub mod wuc;

pub use error::{FlexError, Result};

/// 64-bit FNV-1a; used for tensor digests in reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
