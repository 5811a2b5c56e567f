//! Dense unitary semantics for circuits.
//!
//! Qubit `j` is bit `j` of the basis-state index (qubit 0 is the least
//! significant bit). Two-qubit local matrices are indexed with the first
//! operand as the low bit. Rotations use the half-angle convention
//! `R_G(theta) = exp(-i theta G / 2)`.

use std::ops::Mul;

use num_complex::Complex64;

use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{Error, Result};

/// Largest width for which full matrices are built.
pub const MAX_DENSE_QUBITS: usize = 12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Default tolerance per unit of dimension for [`equal_up_to_phase`].
pub const DEFAULT_PHASE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Unitary {
    qubits: usize,
    dim: usize,
    // row-major
    data: Vec<Complex64>,
}

impl Unitary {
    pub fn identity(qubits: usize) -> Self {
        let dim = 1usize << qubits;
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Unitary { qubits, dim, data }
    }

    pub fn from_rows(qubits: usize, data: Vec<Complex64>) -> Self {
        let dim = 1usize << qubits;
        assert_eq!(data.len(), dim * dim, "matrix size does not match 2^{qubits}");
        Unitary { qubits, dim, data }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn scaled(&self, s: Complex64) -> Unitary {
        Unitary {
            qubits: self.qubits,
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn adjoint(&self) -> Unitary {
        let d = self.dim;
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        Unitary {
            qubits: self.qubits,
            dim: d,
            data,
        }
    }

    /// tr(self^dagger * other).
    pub fn inner(&self, other: &Unitary) -> Complex64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn frobenius_distance(&self, other: &Unitary) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius distance of `self * self^dagger` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let prod = self * &self.adjoint();
        prod.frobenius_distance(&Unitary::identity(self.qubits))
    }

    /// Left-multiplies by `gate` embedded at its operand positions.
    pub fn apply_gate(&mut self, gate: &Gate) {
        let local = local_matrix(gate.kind, gate.angle.unwrap_or(0.0));
        match gate.qubits() {
            [q] => self.apply_1q(*q, &local),
            [a, b] => self.apply_2q(*a, *b, &local),
            _ => unreachable!(),
        }
    }

    fn apply_1q(&mut self, q: usize, m: &LocalMatrix) {
        let d = self.dim;
        let bit = 1usize << q;
        let (m00, m01, m10, m11) = (m.at(0, 0), m.at(0, 1), m.at(1, 0), m.at(1, 1));
        for r0 in (0..d).filter(|r| r & bit == 0) {
            let r1 = r0 | bit;
            let (lo, hi) = self.data.split_at_mut(r1 * d);
            let row0 = &mut lo[r0 * d..r0 * d + d];
            let row1 = &mut hi[..d];
            for (x0, x1) in row0.iter_mut().zip(row1.iter_mut()) {
                let a = *x0;
                let b = *x1;
                *x0 = m00 * a + m01 * b;
                *x1 = m10 * a + m11 * b;
            }
        }
    }

    fn apply_2q(&mut self, qa: usize, qb: usize, m: &LocalMatrix) {
        let d = self.dim;
        let ba = 1usize << qa;
        let bb = 1usize << qb;
        let rows_of = |base: usize| [base, base | ba, base | bb, base | ba | bb];
        let mut tmp = [ZERO; 4];
        for base in (0..d).filter(|r| r & (ba | bb) == 0) {
            let rows = rows_of(base);
            for c in 0..d {
                let v = [
                    self.data[rows[0] * d + c],
                    self.data[rows[1] * d + c],
                    self.data[rows[2] * d + c],
                    self.data[rows[3] * d + c],
                ];
                for (i, t) in tmp.iter_mut().enumerate() {
                    *t = m.at(i, 0) * v[0] + m.at(i, 1) * v[1] + m.at(i, 2) * v[2] + m.at(i, 3) * v[3];
                }
                for (i, &r) in rows.iter().enumerate() {
                    self.data[r * d + c] = tmp[i];
                }
            }
        }
    }
}

impl Mul for &Unitary {
    type Output = Unitary;

    fn mul(self, rhs: &Unitary) -> Unitary {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let d = self.dim;
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == ZERO {
                    continue;
                }
                let out = &mut data[r * d..r * d + d];
                for (o, b) in out.iter_mut().zip(&rhs.data[k * d..k * d + d]) {
                    *o += a * b;
                }
            }
        }
        Unitary {
            qubits: self.qubits,
            dim: d,
            data,
        }
    }
}

/// 2x2 or 4x4 local gate matrix.
#[derive(Clone, Copy, Debug)]
pub struct LocalMatrix {
    n: usize,
    m: [Complex64; 16],
}

impl LocalMatrix {
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.m[r * self.n + c]
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

pub fn local_matrix(kind: GateKind, theta: f64) -> LocalMatrix {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    let re = |x: f64| Complex64::new(x, 0.0);
    let im = |x: f64| Complex64::new(0.0, x);
    let mut m = [ZERO; 16];
    match kind {
        GateKind::RX => {
            m[..4].copy_from_slice(&[re(c), im(-s), im(-s), re(c)]);
            LocalMatrix { n: 2, m }
        }
        GateKind::RY => {
            m[..4].copy_from_slice(&[re(c), re(-s), re(s), re(c)]);
            LocalMatrix { n: 2, m }
        }
        GateKind::RZ => {
            m[..4].copy_from_slice(&[Complex64::new(c, -s), ZERO, ZERO, Complex64::new(c, s)]);
            LocalMatrix { n: 2, m }
        }
        GateKind::RXX => {
            for i in 0..4 {
                m[i * 4 + i] = re(c);
                m[i * 4 + (3 - i)] = im(-s);
            }
            LocalMatrix { n: 4, m }
        }
        GateKind::CZ => {
            m[0] = ONE;
            m[5] = ONE;
            m[10] = ONE;
            m[15] = -ONE;
            LocalMatrix { n: 4, m }
        }
    }
}

fn check_cap(width: usize) -> Result<()> {
    if width > MAX_DENSE_QUBITS {
        Err(Error::WidthOverCap {
            width,
            cap: MAX_DENSE_QUBITS,
        })
    } else {
        Ok(())
    }
}

/// The gate embedded into a `width`-qubit identity.
pub fn gate_unitary(g: &Gate, width: usize) -> Result<Unitary> {
    check_cap(width)?;
    if g.max_qubit() >= width {
        return Err(Error::InvalidGate(format!("{g} outside width {width}")));
    }
    let mut u = Unitary::identity(width);
    u.apply_gate(g);
    Ok(u)
}

/// `gates[L-1] * ... * gates[0]`.
pub fn circuit_unitary(c: &Circuit) -> Result<Unitary> {
    check_cap(c.width())?;
    Ok(gates_unitary(c.width(), c.gates()))
}

/// Unitary of a gate list without the width cap check. Callers stay small.
pub(crate) fn gates_unitary(width: usize, gates: &[Gate]) -> Unitary {
    let mut u = Unitary::identity(width);
    for g in gates {
        u.apply_gate(g);
    }
    u
}

/// Optimal global phase aligning `v` to `u`, i.e. the phi minimizing
/// `||u - e^{i phi} v||_F`.
pub fn phase_alignment(u: &Unitary, v: &Unitary) -> f64 {
    let t = v.inner(u);
    if t.norm() > 1e-12 * u.dim() as f64 {
        return t.arg();
    }
    // trace-orthogonal: fall back to the ratio at v's largest entry
    let (k, _) = v
        .data
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bm), (i, x)| if x.norm() > bm { (i, x.norm()) } else { (bi, bm) });
    if v.data[k].norm() == 0.0 {
        return 0.0;
    }
    (u.data[k] / v.data[k]).arg()
}

/// Whether `u ~ e^{i phi} v` within Frobenius distance `tol`; returns phi.
pub fn equal_up_to_phase(u: &Unitary, v: &Unitary, tol: f64) -> Option<f64> {
    if u.dim != v.dim {
        return None;
    }
    let phi = phase_alignment(u, v);
    let rot = Complex64::from_polar(1.0, phi);
    let dist = u
        .data
        .iter()
        .zip(&v.data)
        .map(|(a, b)| (a - rot * b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (dist <= tol).then_some(phi)
}

/// [`equal_up_to_phase`] at the default tolerance `1e-8 * dim`.
pub fn equivalent(u: &Unitary, v: &Unitary) -> bool {
    equal_up_to_phase(u, v, DEFAULT_PHASE_TOL * u.dim() as f64).is_some()
}

/// `sqrt(1 - |tr(v^dagger u)|^2 / d^2)`, in [0, 1].
pub fn hilbert_schmidt_distance(u: &Unitary, v: &Unitary) -> f64 {
    hs_distance_sqr(u, v).sqrt()
}

pub(crate) fn hs_distance_sqr(u: &Unitary, v: &Unitary) -> f64 {
    let d = u.dim() as f64;
    (1.0 - v.inner(u).norm_sqr() / (d * d)).max(0.0)
}

/// A sub-circuit restricted to the wires it touches.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactedBlock {
    pub sub: Circuit,
    /// Sorted original qubit indices; local qubit `i` is `active[i]`.
    pub active: Vec<usize>,
    inverse: Vec<Option<usize>>,
}

impl CompactedBlock {
    pub fn width(&self) -> usize {
        self.active.len()
    }

    /// Local index of original qubit `q`, if active.
    pub fn local(&self, q: usize) -> Option<usize> {
        self.inverse.get(q).copied().flatten()
    }

    /// Maps a local circuit back onto the original wires.
    pub fn expand(&self, local: &Circuit, width: usize) -> Circuit {
        let gates = local.gates().iter().map(|g| g.remapped(|q| self.active[q])).collect();
        Circuit::from_gates(width, gates).expect("active qubits lie within the original width")
    }
}

/// Drops untouched wires and renumbers the rest order-preservingly.
pub fn compact(sub: &Circuit) -> CompactedBlock {
    let mut touched = vec![false; sub.width()];
    for g in sub.gates() {
        for &q in g.qubits() {
            touched[q] = true;
        }
    }
    let active: Vec<usize> = (0..sub.width()).filter(|&q| touched[q]).collect();
    let mut inverse = vec![None; sub.width()];
    for (i, &q) in active.iter().enumerate() {
        inverse[q] = Some(i);
    }
    let gates = sub
        .gates()
        .iter()
        .map(|g| g.remapped(|q| inverse[q].expect("touched qubit")))
        .collect();
    let width = active.len().max(1);
    CompactedBlock {
        sub: Circuit::from_gates(width, gates).expect("remapped gates fit"),
        active,
        inverse,
    }
}
