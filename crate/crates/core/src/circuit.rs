//! Gate sets, the circuit IR, and the 2D slot grid that windows are cut from.
//!
//! A [`Circuit`] is an ordered gate list: `gates[0]` is applied first, so the
//! circuit unitary is `gates[L-1] * ... * gates[0]`. [`schedule`] lays the
//! list out on a qubit x time-slot grid, and [`split`] / [`splice`] cut a
//! rectangular window out of that grid and put a replacement back.

use std::f64::consts::TAU;
use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    RX,
    RY,
    RZ,
    RXX,
    CZ,
}

impl GateKind {
    pub const ALL: [GateKind; 5] = [
        GateKind::RX,
        GateKind::RY,
        GateKind::RZ,
        GateKind::RXX,
        GateKind::CZ,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::RX | GateKind::RY | GateKind::RZ => 1,
            GateKind::RXX | GateKind::CZ => 2,
        }
    }

    pub fn is_parameterized(self) -> bool {
        !matches!(self, GateKind::CZ)
    }

    /// Lower-case QASM mnemonic.
    pub fn name(self) -> &'static str {
        match self {
            GateKind::RX => "rx",
            GateKind::RY => "ry",
            GateKind::RZ => "rz",
            GateKind::RXX => "rxx",
            GateKind::CZ => "cz",
        }
    }

    /// Stable one-byte code used by the binary file formats.
    pub fn code(self) -> u8 {
        match self {
            GateKind::RX => 0,
            GateKind::RY => 1,
            GateKind::RZ => 2,
            GateKind::RXX => 3,
            GateKind::CZ => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        GateKind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An ordered, duplicate-free list of gate kinds. The order is the one-hot
/// channel order used by the network encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateSet {
    name: String,
    kinds: Vec<GateKind>,
}

impl GateSet {
    pub fn new(name: impl Into<String>, kinds: Vec<GateKind>) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Config("gate set must not be empty".into()));
        }
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(Error::Config(format!("duplicate gate kind {k} in gate set")));
            }
        }
        Ok(GateSet {
            name: name.into(),
            kinds,
        })
    }

    /// RX, RZ, CZ.
    pub fn nisq() -> Self {
        GateSet {
            name: "nisq".into(),
            kinds: vec![GateKind::RX, GateKind::RZ, GateKind::CZ],
        }
    }

    /// RX, RY, RZ, RXX.
    pub fn iontrap() -> Self {
        GateSet {
            name: "iontrap".into(),
            kinds: vec![GateKind::RX, GateKind::RY, GateKind::RZ, GateKind::RXX],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "nisq" => Some(GateSet::nisq()),
            "iontrap" | "ion-trap" | "ion_trap" => Some(GateSet::iontrap()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kinds(&self) -> &[GateKind] {
        &self.kinds
    }

    pub fn contains(&self, kind: GateKind) -> bool {
        self.kinds.contains(&kind)
    }

    pub fn index_of(&self, kind: GateKind) -> Option<usize> {
        self.kinds.iter().position(|&k| k == kind)
    }

    pub fn max_arity(&self) -> usize {
        self.kinds.iter().map(|k| k.arity()).max().unwrap_or(0)
    }

    pub fn min_arity(&self) -> usize {
        self.kinds.iter().map(|k| k.arity()).min().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    qubits: [usize; 2],
    pub angle: Option<f64>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[usize], angle: Option<f64>) -> Result<Self> {
        if qubits.len() != kind.arity() {
            return Err(Error::InvalidGate(format!(
                "{kind} takes {} qubit(s), got {}",
                kind.arity(),
                qubits.len()
            )));
        }
        if kind.arity() == 2 && qubits[0] == qubits[1] {
            return Err(Error::InvalidGate(format!(
                "{kind} operands must be distinct, got {} twice",
                qubits[0]
            )));
        }
        match (kind.is_parameterized(), angle) {
            (true, None) => {
                return Err(Error::InvalidGate(format!("{kind} requires an angle")));
            }
            (false, Some(_)) => {
                return Err(Error::InvalidGate(format!("{kind} takes no angle")));
            }
            (true, Some(a)) if !a.is_finite() => {
                return Err(Error::InvalidGate(format!("{kind} angle must be finite")));
            }
            _ => {}
        }
        let mut q = [0; 2];
        q[..qubits.len()].copy_from_slice(qubits);
        Ok(Gate {
            kind,
            qubits: q,
            angle,
        })
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        Gate::one(GateKind::RX, q, theta)
    }

    pub fn ry(q: usize, theta: f64) -> Self {
        Gate::one(GateKind::RY, q, theta)
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Gate::one(GateKind::RZ, q, theta)
    }

    pub fn rxx(a: usize, b: usize, theta: f64) -> Self {
        assert_ne!(a, b, "rxx operands must be distinct");
        Gate {
            kind: GateKind::RXX,
            qubits: [a, b],
            angle: Some(theta),
        }
    }

    pub fn cz(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "cz operands must be distinct");
        Gate {
            kind: GateKind::CZ,
            qubits: [a, b],
            angle: None,
        }
    }

    fn one(kind: GateKind, q: usize, theta: f64) -> Self {
        Gate {
            kind,
            qubits: [q, 0],
            angle: Some(theta),
        }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn acts_on(&self, q: usize) -> bool {
        self.qubits().contains(&q)
    }

    pub fn shares_qubit(&self, other: &Gate) -> bool {
        self.qubits().iter().any(|&q| other.acts_on(q))
    }

    pub fn max_qubit(&self) -> usize {
        self.qubits().iter().copied().max().unwrap_or(0)
    }

    /// Same gate with its operands renamed through `map`.
    pub fn remapped(&self, map: impl Fn(usize) -> usize) -> Gate {
        let mut g = *self;
        for q in g.qubits[..self.kind.arity()].iter_mut() {
            *q = map(*q);
        }
        g
    }

    /// Same kind and operands with a different angle.
    pub fn with_angle(&self, angle: f64) -> Gate {
        debug_assert!(self.kind.is_parameterized());
        Gate {
            angle: Some(angle),
            ..*self
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(a) = self.angle {
            write!(f, "({a})")?;
        }
        let qs: Vec<String> = self.qubits().iter().map(|q| format!("q{q}")).collect();
        write!(f, " {}", qs.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    width: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(width: usize) -> Self {
        assert!(width >= 1, "circuit width must be at least 1");
        Circuit {
            width,
            gates: Vec::new(),
        }
    }

    pub fn from_gates(width: usize, gates: Vec<Gate>) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidCircuit("width must be at least 1".into()));
        }
        for (i, g) in gates.iter().enumerate() {
            if g.max_qubit() >= width {
                return Err(Error::InvalidCircuit(format!(
                    "gate {i} ({g}) addresses a qubit outside width {width}"
                )));
            }
        }
        Ok(Circuit { width, gates })
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if gate.max_qubit() >= self.width {
            return Err(Error::InvalidCircuit(format!(
                "gate {gate} addresses a qubit outside width {}",
                self.width
            )));
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn into_gates(self) -> Vec<Gate> {
        self.gates
    }

    /// Swaps gates `i` and `i + 1` if they act on disjoint qubits. Returns
    /// whether the swap happened.
    pub fn swap_if_commuting(&mut self, i: usize) -> bool {
        if i + 1 >= self.gates.len() || self.gates[i].shares_qubit(&self.gates[i + 1]) {
            return false;
        }
        self.gates.swap(i, i + 1);
        true
    }

    /// Gate counts in the order of `gs.kinds()`. Kinds outside the set are
    /// not counted.
    pub fn kind_counts(&self, gs: &GateSet) -> Vec<usize> {
        let mut counts = vec![0; gs.kinds().len()];
        for g in &self.gates {
            if let Some(i) = gs.index_of(g.kind) {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Checks every gate kind is drawn from `gs`.
    pub fn check_gate_set(&self, gs: &GateSet) -> Result<()> {
        match self.gates.iter().find(|g| !gs.contains(g.kind)) {
            Some(g) => Err(Error::GateSetMismatch {
                expected: gs.name().to_string(),
                found: format!("gate {}", g.kind),
            }),
            None => Ok(()),
        }
    }
}

/// The 2D token grid: per-gate time slot plus a qubit x slot occupancy map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotLayout {
    width: usize,
    depth: usize,
    slots: Vec<usize>,
    // qubit-major, width x depth
    grid: Vec<Option<usize>>,
}

impl SlotLayout {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn slot(&self, gate: usize) -> usize {
        self.slots[gate]
    }

    /// Index of the gate occupying `(qubit, slot)`, if any.
    pub fn at(&self, qubit: usize, slot: usize) -> Option<usize> {
        self.grid[qubit * self.depth + slot]
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.depth
    }

    /// Gate indices in column order, ties broken by original index.
    pub fn column_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.slots.len()).collect();
        order.sort_by_key(|&i| (self.slots[i], i));
        order
    }
}

/// ASAP layering: each gate lands one slot after the latest earlier gate
/// sharing any of its qubits.
pub fn schedule(c: &Circuit) -> SlotLayout {
    let mut frontier = vec![0usize; c.width];
    let mut slots = Vec::with_capacity(c.len());
    let mut depth = 0;
    for g in &c.gates {
        let s = g.qubits().iter().map(|&q| frontier[q]).max().unwrap_or(0);
        for &q in g.qubits() {
            frontier[q] = s + 1;
        }
        depth = depth.max(s + 1);
        slots.push(s);
    }
    let mut grid = vec![None; c.width * depth];
    for (i, g) in c.gates.iter().enumerate() {
        for &q in g.qubits() {
            grid[q * depth + slots[i]] = Some(i);
        }
    }
    SlotLayout {
        width: c.width,
        depth,
        slots,
        grid,
    }
}

/// Re-serializes the grid column by column.
pub fn flatten(c: &Circuit, layout: &SlotLayout) -> Circuit {
    let gates = layout.column_order().into_iter().map(|i| c.gates[i]).collect();
    Circuit {
        width: c.width,
        gates,
    }
}

/// Inclusive qubit range x inclusive slot range on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Window {
    pub q_lo: usize,
    pub q_hi: usize,
    pub t_lo: usize,
    pub t_hi: usize,
}

impl Window {
    pub fn new(q_lo: usize, q_hi: usize, t_lo: usize, t_hi: usize) -> Self {
        debug_assert!(q_lo <= q_hi && t_lo <= t_hi);
        Window {
            q_lo,
            q_hi,
            t_lo,
            t_hi,
        }
    }

    pub fn qubit_span(&self) -> usize {
        self.q_hi - self.q_lo + 1
    }

    pub fn slot_span(&self) -> usize {
        self.t_hi - self.t_lo + 1
    }

    pub fn contains_qubit(&self, q: usize) -> bool {
        (self.q_lo..=self.q_hi).contains(&q)
    }

    pub fn contains_slot(&self, t: usize) -> bool {
        (self.t_lo..=self.t_hi).contains(&t)
    }

    pub fn contains_cell(&self, q: usize, t: usize) -> bool {
        self.contains_qubit(q) && self.contains_slot(t)
    }

    pub fn fits(&self, layout: &SlotLayout) -> bool {
        self.q_lo <= self.q_hi
            && self.t_lo <= self.t_hi
            && self.q_hi < layout.width()
            && self.t_hi < layout.depth()
    }
}

/// A circuit cut in three: `prefix`, the replaceable `middle`, and `suffix`.
/// All three keep the source width.
#[derive(Clone, Debug, PartialEq)]
pub struct Segments {
    pub prefix: Circuit,
    pub middle: Circuit,
    pub suffix: Circuit,
    /// Sorted original qubits touched by `middle`.
    pub middle_qubits: Vec<usize>,
    /// Original indices of the middle gates, in order.
    pub middle_indices: Vec<usize>,
}

impl Segments {
    /// Concatenation prefix + middle + suffix.
    pub fn concat(&self) -> Circuit {
        let mut gates = Vec::with_capacity(self.prefix.len() + self.middle.len() + self.suffix.len());
        gates.extend_from_slice(&self.prefix.gates);
        gates.extend_from_slice(&self.middle.gates);
        gates.extend_from_slice(&self.suffix.gates);
        Circuit {
            width: self.prefix.width,
            gates,
        }
    }
}

/// Cuts `c` along `w`. Returns `None` (rejected) when a gate inside the slot
/// range straddles the window's qubit boundary.
pub fn split(c: &Circuit, w: &Window) -> Option<Segments> {
    split_with_layout(c, &schedule(c), w)
}

/// [`split`] with a precomputed layout for `c`.
pub fn split_with_layout(c: &Circuit, layout: &SlotLayout, w: &Window) -> Option<Segments> {
    debug_assert!(w.fits(layout), "window {w:?} outside layout");
    let mut prefix = Vec::new();
    let mut middle = Vec::new();
    let mut suffix = Vec::new();
    let mut middle_indices = Vec::new();
    let mut touched = vec![false; c.width];
    for (i, g) in c.gates.iter().enumerate() {
        let s = layout.slots[i];
        if s < w.t_lo {
            prefix.push(*g);
        } else if s > w.t_hi {
            suffix.push(*g);
        } else {
            let inside = g.qubits().iter().filter(|&&q| w.contains_qubit(q)).count();
            if inside == 0 {
                prefix.push(*g);
            } else if inside == g.qubits().len() {
                for &q in g.qubits() {
                    touched[q] = true;
                }
                middle.push(*g);
                middle_indices.push(i);
            } else {
                return None;
            }
        }
    }
    let width = c.width;
    Some(Segments {
        prefix: Circuit { width, gates: prefix },
        middle: Circuit { width, gates: middle },
        suffix: Circuit { width, gates: suffix },
        middle_qubits: (0..width).filter(|&q| touched[q]).collect(),
        middle_indices,
    })
}

/// Puts `new_middle` (over `seg.middle_qubits.len()` local qubits) back in
/// place of the middle segment.
///
/// # Panics
///
/// If `new_middle`'s width differs from the number of middle qubits.
pub fn splice(seg: &Segments, new_middle: &Circuit) -> Circuit {
    assert_eq!(
        new_middle.width,
        seg.middle_qubits.len().max(1),
        "replacement width must equal the number of compacted middle qubits"
    );
    let mut gates = Vec::with_capacity(seg.prefix.len() + new_middle.len() + seg.suffix.len());
    gates.extend_from_slice(&seg.prefix.gates);
    gates.extend(
        new_middle
            .gates
            .iter()
            .map(|g| g.remapped(|q| seg.middle_qubits[q])),
    );
    gates.extend_from_slice(&seg.suffix.gates);
    Circuit {
        width: seg.prefix.width,
        gates,
    }
}

/// Uniform random circuit: kind uniform over the set, operands uniform
/// without replacement, angles uniform in [0, 2pi).
pub fn random_circuit(width: usize, length: usize, gs: &GateSet, seed: u64) -> Result<Circuit> {
    if width == 0 || width < gs.min_arity() {
        return Err(Error::Config(format!(
            "width {width} cannot host any gate of set {}",
            gs.name()
        )));
    }
    let kinds: Vec<GateKind> = gs.kinds().iter().copied().filter(|k| k.arity() <= width).collect();
    if kinds.len() != gs.kinds().len() && length > 0 {
        return Err(Error::Config(format!(
            "width {width} is too narrow for the {}-qubit gates of set {}",
            gs.max_arity(),
            gs.name()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut c = Circuit::new(width);
    for _ in 0..length {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let qs = index::sample(&mut rng, width, kind.arity()).into_vec();
        let angle = kind.is_parameterized().then(|| rng.gen_range(0.0..TAU));
        c.gates.push(Gate {
            kind,
            qubits: if qs.len() == 2 { [qs[0], qs[1]] } else { [qs[0], 0] },
            angle,
        });
    }
    Ok(c)
}
