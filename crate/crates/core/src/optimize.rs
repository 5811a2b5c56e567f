//! The select -> compact -> replace -> splice loop.

use std::io;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::circuit::{schedule, split_with_layout, splice, Circuit, GateSet, Segments, SlotLayout, Window};
use crate::error::{Error, Result};
use crate::guidance::UNetModel;
use crate::rewrite::{fuse_local, synthesize_shorter, DbSet, SynthesisConfig};
use crate::rng_from_seed;
use crate::sampler::{sample_1d, sample_2d_uniform, AttentionMap, GuidedSampler, Strategy, WindowLimits};
use crate::unitary::{circuit_unitary, compact, equal_up_to_phase, Unitary, DEFAULT_PHASE_TOL, MAX_DENSE_QUBITS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyMode {
    EveryStep,
    Final,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verification {
    Passed,
    Failed,
    /// Too wide for dense matrices; nothing was checked.
    Skipped,
    /// Verification was turned off.
    Off,
}

impl Verification {
    pub fn label(self) -> &'static str {
        match self {
            Verification::Passed => "passed",
            Verification::Failed => "failed",
            Verification::Skipped => "skipped",
            Verification::Off => "off",
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeConfig {
    pub strategy: Strategy,
    pub max_iterations: Option<usize>,
    pub budget: Option<Duration>,
    pub target_gates: Option<usize>,
    pub limits: WindowLimits,
    /// Continuous-angle fallback; off when `None`.
    pub synthesis: Option<SynthesisConfig>,
    pub verify: VerifyMode,
    pub seed: u64,
    /// Accepted replacements between attention refreshes (guided only).
    pub refresh_every: usize,
    /// Largest compacted block handed to the replacement oracles.
    pub max_block_qubits: usize,
    /// Equivalence tolerance per unit of matrix dimension.
    pub phase_tol: f64,
    /// Fill `elapsed_ms` in the trace. Off keeps traces reproducible.
    pub record_timing: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            strategy: Strategy::Uniform2d,
            max_iterations: Some(2000),
            budget: None,
            target_gates: None,
            limits: WindowLimits::default(),
            synthesis: None,
            verify: VerifyMode::EveryStep,
            seed: 0,
            refresh_every: 1,
            max_block_qubits: 3,
            phase_tol: DEFAULT_PHASE_TOL,
            record_timing: false,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations.is_none() && self.budget.is_none() && self.target_gates.is_none() {
            return Err(Error::Config("set at least one of max iterations, time budget or target gate count".into()));
        }
        if !(1..=3).contains(&self.max_block_qubits) {
            return Err(Error::Config("max block qubits must be between 1 and 3".into()));
        }
        if self.refresh_every == 0 {
            return Err(Error::Config("attention refresh period must be at least 1".into()));
        }
        self.limits.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub gates: usize,
    pub elapsed_ms: u64,
    pub accepted: bool,
    pub q_lo: usize,
    pub q_hi: usize,
    pub t_lo: usize,
    pub t_hi: usize,
    pub reduced_by: usize,
}

/// Per-iteration records; `gates` never increases.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub initial_gates: usize,
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn final_gates(&self) -> usize {
        self.records.last().map_or(self.initial_gates, |r| r.gates)
    }

    pub fn accepted(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }

    /// Gate count after each iteration, starting with the input count.
    pub fn gate_curve(&self) -> Vec<usize> {
        std::iter::once(self.initial_gates).chain(self.records.iter().map(|r| r.gates)).collect()
    }

    /// CSV with header `iter,gates,elapsed_ms,accepted,q_lo,q_hi,t_lo,t_hi,reduced_by`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        if self.records.is_empty() {
            wr.write_record(["iter", "gates", "elapsed_ms", "accepted", "q_lo", "q_hi", "t_lo", "t_hi", "reduced_by"])?;
        }
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R, initial_gates: usize) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let records = rd.deserialize().collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
        Ok(ConvergenceTrace { initial_gates, records })
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub circuit: Circuit,
    pub trace: ConvergenceTrace,
    pub verification: Verification,
}

/// Full-circuit equivalence at `1e-8 * dim`; `Skipped` above the dense cap.
pub fn verify(original: &Circuit, optimized: &Circuit) -> Verification {
    if original.width() != optimized.width() {
        return Verification::Failed;
    }
    if original.width() > MAX_DENSE_QUBITS {
        return Verification::Skipped;
    }
    match (circuit_unitary(original), circuit_unitary(optimized)) {
        (Ok(u), Ok(v)) if equal_up_to_phase(&u, &v, DEFAULT_PHASE_TOL * u.dim() as f64).is_some() => Verification::Passed,
        _ => Verification::Failed,
    }
}

/// Replacement oracles applied to a compacted block.
#[derive(Clone, Copy)]
pub struct Reducer<'a> {
    pub gate_set: &'a GateSet,
    pub dbs: &'a DbSet,
    pub synthesis: Option<&'a SynthesisConfig>,
    pub phase_tol: f64,
}

impl Reducer<'_> {
    /// A strictly shorter circuit equivalent to `block` (over the same local
    /// wires), checked against `block`'s unitary before it is returned.
    pub fn reduce(&self, block: &Circuit) -> Option<Circuit> {
        let mut best = fuse_local(block);
        let u = circuit_unitary(block).ok()?;
        if let Some(hit) = self.dbs.lookup(&u) {
            if hit.len() < best.len() {
                best = hit.clone();
            }
        }
        if let Some(cfg) = self.synthesis {
            if let Some(s) = synthesize_shorter(&u, self.gate_set, best.len(), cfg, None) {
                best = s;
            }
        }
        if best.len() >= block.len() {
            return None;
        }
        let v = circuit_unitary(&best).ok()?;
        equal_up_to_phase(&u, &v, self.phase_tol * u.dim() as f64)?;
        Some(best)
    }
}

pub struct Optimizer<'a> {
    gate_set: &'a GateSet,
    dbs: &'a DbSet,
    model: Option<&'a UNetModel>,
    cfg: OptimizeConfig,
}

impl<'a> Optimizer<'a> {
    pub fn new(gate_set: &'a GateSet, dbs: &'a DbSet, model: Option<&'a UNetModel>, cfg: OptimizeConfig) -> Result<Self> {
        cfg.validate()?;
        match (cfg.strategy, model) {
            (Strategy::Guided, None) => return Err(Error::Config("guided strategy needs a model".into())),
            (Strategy::Guided, Some(m)) => m.check_gate_set(gate_set)?,
            _ => {}
        }
        if let Some(g) = dbs.gate_set() {
            if g != gate_set {
                return Err(Error::GateSetMismatch {
                    expected: gate_set.name().to_string(),
                    found: g.name().to_string(),
                });
            }
        }
        Ok(Optimizer {
            gate_set,
            dbs,
            model,
            cfg,
        })
    }

    pub fn config(&self) -> &OptimizeConfig {
        &self.cfg
    }

    pub fn run(&self, input: &Circuit) -> Result<Outcome> {
        let cfg = &self.cfg;
        let verifying = cfg.verify != VerifyMode::Off;
        if verifying && input.width() > MAX_DENSE_QUBITS {
            return Err(Error::Config(format!(
                "cannot verify a {}-qubit circuit (dense cap {MAX_DENSE_QUBITS}); turn verification off",
                input.width()
            )));
        }
        let reference: Option<Unitary> = if verifying { Some(circuit_unitary(input)?) } else { None };
        let reducer = Reducer {
            gate_set: self.gate_set,
            dbs: self.dbs,
            synthesis: cfg.synthesis.as_ref(),
            phase_tol: cfg.phase_tol,
        };

        let start = Instant::now();
        let mut rng = rng_from_seed(cfg.seed);
        let mut cur = input.clone();
        let mut layout = schedule(&cur);
        let mut guide: Option<GuidedSampler> = None;
        let mut map: Option<AttentionMap> = None;
        let mut accepted_since_refresh = 0;
        let mut trace = ConvergenceTrace {
            initial_gates: input.len(),
            records: Vec::new(),
        };

        for iter in 1.. {
            if cfg.max_iterations.is_some_and(|m| iter > m)
                || cfg.budget.is_some_and(|b| start.elapsed() >= b)
                || cfg.target_gates.is_some_and(|t| cur.len() <= t)
            {
                break;
            }
            let elapsed = |start: &Instant| if cfg.record_timing { start.elapsed().as_millis() as u64 } else { 0 };

            if cur.is_empty() {
                trace.records.push(record(iter, &cur, elapsed(&start), None, Window::new(0, 0, 0, 0)));
                continue;
            }

            let (window, seg) = match cfg.strategy {
                Strategy::Uniform1d => {
                    // the shuffled order is kept only if this iteration accepts
                    let mut work = cur.clone();
                    let (m, n) = sample_1d(&mut work, &cfg.limits, &mut rng);
                    let seg = run_segments(&work, m, n);
                    let (q_lo, q_hi) = match (seg.middle_qubits.first(), seg.middle_qubits.last()) {
                        (Some(&a), Some(&b)) => (a, b),
                        _ => (0, 0),
                    };
                    (Window::new(q_lo, q_hi, m, m + n.max(1) - 1), Some(seg))
                }
                Strategy::Uniform2d => {
                    let w = sample_2d_uniform(&layout, &cfg.limits, &mut rng);
                    (w, split_with_layout(&cur, &layout, &w))
                }
                Strategy::Guided => {
                    if guide.is_none() {
                        let m = match map.take() {
                            Some(m) => m.fit_to(&layout).masked_to_occupied(&layout),
                            None => self.attention(&cur, &layout)?,
                        };
                        guide = Some(GuidedSampler::new(&m, cfg.limits.floor));
                        map = Some(m);
                    }
                    let w = guide.as_ref().unwrap().sample(&layout, &cfg.limits, &mut rng);
                    (w, split_with_layout(&cur, &layout, &w))
                }
            };

            let Some(seg) = seg else {
                trace.records.push(record(iter, &cur, elapsed(&start), None, window));
                continue;
            };
            let k = seg.middle_qubits.len();
            if seg.middle.is_empty() || k > cfg.max_block_qubits {
                trace.records.push(record(iter, &cur, elapsed(&start), None, window));
                continue;
            }
            let block = compact(&seg.middle);
            let Some(replacement) = reducer.reduce(&block.sub) else {
                trace.records.push(record(iter, &cur, elapsed(&start), None, window));
                continue;
            };

            let reduced_by = seg.middle.len() - replacement.len();
            cur = splice(&seg, &replacement);
            layout = schedule(&cur);
            if cfg.strategy == Strategy::Guided {
                accepted_since_refresh += 1;
                guide = None;
                if accepted_since_refresh >= cfg.refresh_every {
                    accepted_since_refresh = 0;
                    map = None;
                }
            }
            if cfg.verify == VerifyMode::EveryStep {
                let reference = reference.as_ref().expect("reference unitary");
                let now = circuit_unitary(&cur)?;
                if equal_up_to_phase(reference, &now, DEFAULT_PHASE_TOL * now.dim() as f64).is_none() {
                    return Err(Error::VerificationFailed { iteration: iter });
                }
            }
            trace.records.push(record(iter, &cur, elapsed(&start), Some(reduced_by), window));
        }

        let verification = match (&reference, cfg.verify) {
            (_, VerifyMode::Off) => Verification::Off,
            (Some(u), _) => {
                let v = circuit_unitary(&cur)?;
                if equal_up_to_phase(u, &v, DEFAULT_PHASE_TOL * v.dim() as f64).is_some() {
                    Verification::Passed
                } else {
                    Verification::Failed
                }
            }
            (None, _) => Verification::Skipped,
        };
        Ok(Outcome {
            circuit: cur,
            trace,
            verification,
        })
    }

    fn attention(&self, c: &Circuit, layout: &SlotLayout) -> Result<AttentionMap> {
        let model = self.model.expect("guided strategy has a model");
        Ok(model.infer(c, self.gate_set)?.masked_to_occupied(layout))
    }
}

fn record(iter: usize, cur: &Circuit, elapsed_ms: u64, reduced_by: Option<usize>, w: Window) -> TraceRecord {
    TraceRecord {
        iter,
        gates: cur.len(),
        elapsed_ms,
        accepted: reduced_by.is_some(),
        q_lo: w.q_lo,
        q_hi: w.q_hi,
        t_lo: w.t_lo,
        t_hi: w.t_hi,
        reduced_by: reduced_by.unwrap_or(0),
    }
}

/// Segments for the contiguous run `gates[m..m + n]`.
fn run_segments(c: &Circuit, m: usize, n: usize) -> Segments {
    let gates = c.gates();
    let width = c.width();
    let mk = |gs: &[crate::circuit::Gate]| Circuit::from_gates(width, gs.to_vec()).expect("sub-list of a valid circuit");
    let middle = mk(&gates[m..m + n]);
    let mut touched = vec![false; width];
    for g in middle.gates() {
        for &q in g.qubits() {
            touched[q] = true;
        }
    }
    Segments {
        prefix: mk(&gates[..m]),
        suffix: mk(&gates[m + n..]),
        middle,
        middle_qubits: (0..width).filter(|&q| touched[q]).collect(),
        middle_indices: (m..m + n).collect(),
    }
}

/// Convenience wrapper: build an [`Optimizer`] and run it.
pub fn optimize(
    c: &Circuit,
    gs: &GateSet,
    dbs: &DbSet,
    model: Option<&UNetModel>,
    cfg: OptimizeConfig,
) -> Result<Outcome> {
    Optimizer::new(gs, dbs, model, cfg)?.run(c)
}
