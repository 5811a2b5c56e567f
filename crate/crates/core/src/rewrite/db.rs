//! Breadth-first shortest-decomposition database.
//!
//! Level `L` of the build holds every unitary (up to global phase) whose
//! shortest circuit over the discrete move set has exactly `L` gates. A
//! minimal circuit's prefixes are themselves minimal, so expanding only the
//! previous level's entries is enough.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use fnv::FnvBuildHasher;
use rayon::prelude::*;

use super::canon::{canonicalize, CanonicalForm};
use crate::binfmt::{ByteReader, ByteWriter};
use crate::circuit::{Circuit, Gate, GateSet};
use crate::error::{Error, Result};
use crate::unitary::{circuit_unitary, equal_up_to_phase, Unitary, DEFAULT_PHASE_TOL};

const MAGIC: &[u8; 4] = b"QRDB";
const VERSION: u16 = 2;

/// Multiples of pi/4 in (-pi, pi].
pub fn pi_quarter_grid() -> Vec<f64> {
    (-3..=4).map(|k| k as f64 * PI / 4.0).collect()
}

/// Every gate placement on `qubits` wires: each kind of `gs` on each operand
/// tuple (unordered pairs, since both two-qubit kinds are symmetric), with
/// each angle of `grid` for parameterized kinds.
pub fn placements(gs: &GateSet, qubits: usize, grid: &[f64]) -> Vec<Gate> {
    let mut out = Vec::new();
    for &kind in gs.kinds() {
        let operands: Vec<Vec<usize>> = match kind.arity() {
            1 => (0..qubits).map(|q| vec![q]).collect(),
            _ => (0..qubits)
                .flat_map(|a| (a + 1..qubits).map(move |b| vec![a, b]))
                .collect(),
        };
        for qs in operands {
            if kind.is_parameterized() {
                for &theta in grid {
                    out.push(Gate::new(kind, &qs, Some(theta)).expect("valid placement"));
                }
            } else {
                out.push(Gate::new(kind, &qs, None).expect("valid placement"));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DbEntry {
    pub key: u64,
    pub quantized: Vec<i32>,
    pub circuit: Circuit,
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Hard cap on stored entries.
    pub max_entries: usize,
    /// Parents expanded per parallel chunk.
    pub chunk: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_entries: 5_000_000,
            chunk: 4096,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RewriteDb {
    gate_set: GateSet,
    qubits: usize,
    grid: Vec<f64>,
    max_depth: usize,
    completed_depth: usize,
    truncated: bool,
    entries: Vec<DbEntry>,
    index: HashMap<u64, Vec<u32>, FnvBuildHasher>,
}

impl PartialEq for RewriteDb {
    fn eq(&self, other: &Self) -> bool {
        self.gate_set == other.gate_set
            && self.qubits == other.qubits
            && self.grid == other.grid
            && self.max_depth == other.max_depth
            && self.completed_depth == other.completed_depth
            && self.truncated == other.truncated
            && self.entries == other.entries
    }
}

impl RewriteDb {
    fn empty(gate_set: GateSet, qubits: usize, grid: Vec<f64>, max_depth: usize) -> Self {
        RewriteDb {
            gate_set,
            qubits,
            grid,
            max_depth,
            completed_depth: 0,
            truncated: false,
            entries: Vec::new(),
            index: HashMap::default(),
        }
    }

    pub fn gate_set(&self) -> &GateSet {
        &self.gate_set
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Deepest level that was fully enumerated.
    pub fn completed_depth(&self) -> usize {
        self.completed_depth
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion (breadth-first) order.
    pub fn entries(&self) -> &[DbEntry] {
        &self.entries
    }

    fn find(&self, form: &CanonicalForm) -> Option<&DbEntry> {
        self.index.get(&form.key)?.iter().map(|&i| &self.entries[i as usize]).find(|e| e.quantized == form.quantized)
    }

    pub fn contains(&self, form: &CanonicalForm) -> bool {
        self.find(form).is_some()
    }

    fn insert(&mut self, form: CanonicalForm, circuit: Circuit) {
        let idx = self.entries.len() as u32;
        self.index.entry(form.key).or_default().push(idx);
        self.entries.push(DbEntry {
            key: form.key,
            quantized: form.quantized,
            circuit,
        });
    }

    /// The stored shortest circuit for `u`, after checking it really is
    /// phase-equivalent to `u`.
    pub fn lookup(&self, u: &Unitary) -> Option<&Circuit> {
        if u.qubits() != self.qubits {
            return None;
        }
        let entry = self.find(&canonicalize(u))?;
        let stored = circuit_unitary(&entry.circuit).ok()?;
        equal_up_to_phase(&stored, u, DEFAULT_PHASE_TOL * u.dim() as f64).map(|_| &entry.circuit)
    }

    /// Re-derives every entry's canonical form from its circuit.
    pub fn verify_entries(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            let form = canonicalize(&circuit_unitary(&e.circuit)?);
            if form.key != e.key || form.quantized != e.quantized {
                return Err(Error::Format {
                    what: "rewrite db",
                    msg: format!("entry {i} does not match its circuit"),
                });
            }
        }
        Ok(())
    }
}

/// Builds the database over `qubits` wires (1 to 3) up to `depth` gates.
pub fn build_db(gs: &GateSet, qubits: usize, grid: &[f64], depth: usize, opts: &BuildOptions) -> Result<RewriteDb> {
    if !(1..=3).contains(&qubits) {
        return Err(Error::Config(format!("rewrite db supports 1 to 3 qubits, got {qubits}")));
    }
    if qubits < gs.min_arity() {
        return Err(Error::Config(format!("{qubits} qubit(s) cannot host any {} gate", gs.name())));
    }
    let moves = placements(gs, qubits, grid);
    let mut db = RewriteDb::empty(gs.clone(), qubits, grid.to_vec(), depth);
    let identity = Unitary::identity(qubits);
    db.insert(canonicalize(&identity), Circuit::new(qubits));
    if db.len() > opts.max_entries {
        db.entries.clear();
        db.index.clear();
        db.truncated = true;
        return Ok(db);
    }

    let mut frontier: Vec<(usize, Unitary)> = vec![(0, identity)];
    for level in 1..=depth {
        let level_start = db.len();
        let mut next: Vec<(usize, Unitary)> = Vec::new();
        for chunk in frontier.chunks(opts.chunk.max(1)) {
            let children: Vec<(usize, usize, CanonicalForm, Unitary)> = chunk
                .par_iter()
                .flat_map_iter(|(parent, u)| {
                    moves.iter().enumerate().map(move |(mi, g)| {
                        let mut child = u.clone();
                        child.apply_gate(g);
                        (*parent, mi, canonicalize(&child), child)
                    })
                })
                .collect();
            for (parent, mi, form, u) in children {
                if db.contains(&form) {
                    continue;
                }
                let mut circuit = db.entries[parent].circuit.clone();
                circuit.push(moves[mi]).expect("move fits the db width");
                let idx = db.len();
                db.insert(form, circuit);
                next.push((idx, u));
            }
            if db.len() > opts.max_entries {
                break;
            }
        }
        if db.len() > opts.max_entries {
            // drop the partial level
            for e in db.entries.drain(level_start..) {
                if let Some(v) = db.index.get_mut(&e.key) {
                    v.retain(|&i| (i as usize) < level_start);
                    if v.is_empty() {
                        db.index.remove(&e.key);
                    }
                }
            }
            db.truncated = true;
            log::warn!("rewrite db hit the {} entry cap at level {level}", opts.max_entries);
            return Ok(db);
        }
        db.completed_depth = level;
        log::debug!("rewrite db level {level}: {} new entries", db.len() - level_start);
        if next.is_empty() {
            db.completed_depth = depth;
            break;
        }
        frontier = next;
    }
    Ok(db)
}

/// Writes the versioned binary format with a trailing CRC32.
pub fn save_db(db: &RewriteDb, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(db))?;
    Ok(())
}

pub fn load_db(path: impl AsRef<Path>) -> Result<RewriteDb> {
    decode(&fs::read(path)?)
}

pub(crate) fn encode(db: &RewriteDb) -> Vec<u8> {
    let mut w = ByteWriter::with_header(MAGIC, VERSION);
    w.gate_set(&db.gate_set);
    w.u8(db.qubits as u8);
    w.u32(db.grid.len() as u32);
    for &a in &db.grid {
        w.f64(a);
    }
    w.u16(db.max_depth as u16);
    w.u16(db.completed_depth as u16);
    w.u8(db.truncated as u8);
    w.u64(db.entries.len() as u64);
    for e in &db.entries {
        w.u64(e.key);
        for &v in &e.quantized {
            w.i32(v);
        }
        w.circuit_gates(&e.circuit);
    }
    w.finish()
}

pub(crate) fn decode(bytes: &[u8]) -> Result<RewriteDb> {
    let mut r = ByteReader::open("rewrite db", bytes, MAGIC, VERSION)?;
    let gate_set = r.gate_set()?;
    let qubits = r.u8()? as usize;
    if !(1..=3).contains(&qubits) {
        return Err(r.err(format!("qubit count {qubits} out of range")));
    }
    let n_grid = r.u32()? as usize;
    let grid = (0..n_grid).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let max_depth = r.u16()? as usize;
    let completed_depth = r.u16()? as usize;
    let truncated = r.u8()? != 0;
    let n = r.u64()? as usize;
    let dim = 1usize << qubits;
    let mut db = RewriteDb::empty(gate_set, qubits, grid, max_depth);
    db.completed_depth = completed_depth;
    db.truncated = truncated;
    for _ in 0..n {
        let key = r.u64()?;
        let quantized = (0..2 * dim * dim).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
        let circuit = r.circuit_gates(qubits)?;
        db.insert(CanonicalForm { key, quantized }, circuit);
    }
    r.expect_end()?;
    Ok(db)
}

/// Databases for 1, 2 and 3 qubits, selected by compacted block width.
#[derive(Clone, Debug, Default)]
pub struct DbSet {
    dbs: Vec<RewriteDb>,
}

impl DbSet {
    pub fn new(dbs: Vec<RewriteDb>) -> Result<Self> {
        let mut set = DbSet::default();
        for db in dbs {
            set.add(db)?;
        }
        Ok(set)
    }

    pub fn add(&mut self, db: RewriteDb) -> Result<()> {
        if let Some(first) = self.dbs.first() {
            if first.gate_set != db.gate_set {
                return Err(Error::GateSetMismatch {
                    expected: first.gate_set.name().to_string(),
                    found: db.gate_set.name().to_string(),
                });
            }
        }
        if self.dbs.iter().any(|d| d.qubits == db.qubits) {
            return Err(Error::Config(format!("duplicate {}-qubit rewrite db", db.qubits)));
        }
        self.dbs.push(db);
        self.dbs.sort_by_key(|d| d.qubits);
        Ok(())
    }

    pub fn for_qubits(&self, k: usize) -> Option<&RewriteDb> {
        self.dbs.iter().find(|d| d.qubits == k)
    }

    pub fn lookup(&self, u: &Unitary) -> Option<&Circuit> {
        self.for_qubits(u.qubits())?.lookup(u)
    }

    pub fn gate_set(&self) -> Option<&GateSet> {
        self.dbs.first().map(|d| &d.gate_set)
    }

    pub fn dbs(&self) -> &[RewriteDb] {
        &self.dbs
    }

    pub fn is_empty(&self) -> bool {
        self.dbs.is_empty()
    }
}
