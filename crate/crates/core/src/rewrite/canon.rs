use std::hash::Hasher;

use fnv::FnvHasher;
use num_complex::Complex64;

use crate::unitary::Unitary;

/// Quantization step is `1 / QUANT_SCALE` (six decimal places).
pub const QUANT_SCALE: f64 = 1e6;

// entries within this of the maximum magnitude count as tied
const PIVOT_TIE_TOL: f64 = 1e-6;

/// Phase-normalized, quantized matrix and its 64-bit hash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalForm {
    pub key: u64,
    /// Interleaved (re, im) of every entry, row-major, scaled by
    /// [`QUANT_SCALE`] and rounded.
    pub quantized: Vec<i32>,
}

/// Removes the global phase by rotating the pivot entry (the first entry in
/// row-major order whose magnitude is within a small tolerance of the
/// maximum) onto the positive real axis, then rounds.
pub fn canonicalize(u: &Unitary) -> CanonicalForm {
    let data = u.data();
    let max = data.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let pivot = data
        .iter()
        .position(|x| x.norm() >= max - PIVOT_TIE_TOL)
        .unwrap_or(0);
    let rot = if max > 0.0 {
        Complex64::from_polar(1.0, -data[pivot].arg())
    } else {
        Complex64::new(1.0, 0.0)
    };
    let mut quantized = Vec::with_capacity(2 * data.len());
    for x in data {
        let y = x * rot;
        quantized.push(quantize(y.re));
        quantized.push(quantize(y.im));
    }
    let mut h = FnvHasher::default();
    h.write_u32(u.qubits() as u32);
    for v in &quantized {
        h.write_i32(*v);
    }
    CanonicalForm {
        key: h.finish(),
        quantized,
    }
}

fn quantize(x: f64) -> i32 {
    (x * QUANT_SCALE).round() as i32
}
