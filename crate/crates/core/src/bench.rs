//! Experiment harness: many random circuits times several strategies, with
//! per-run traces, a summary table and median/quartile convergence curves.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::circuit::{random_circuit, GateSet};
use crate::error::{Error, Result};
use crate::guidance::UNetModel;
use crate::optimize::{ConvergenceTrace, OptimizeConfig, Optimizer, Verification, VerifyMode};
use crate::rewrite::{DbSet, SynthesisConfig};
use crate::sampler::{Strategy, WindowLimits};
use crate::derive_seed;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub gate_set: GateSet,
    pub circuits: usize,
    pub width: usize,
    pub length: usize,
    pub strategies: Vec<Strategy>,
    pub iterations: usize,
    pub seed: u64,
    pub limits: WindowLimits,
    pub synthesis: Option<SynthesisConfig>,
    pub verify: VerifyMode,
    /// Fill the `ms` column and trace timings (makes outputs run-dependent).
    pub record_timing: bool,
}

impl BenchConfig {
    pub fn new(gate_set: GateSet) -> Self {
        BenchConfig {
            gate_set,
            circuits: 100,
            width: 8,
            length: 100,
            strategies: vec![Strategy::Uniform1d, Strategy::Uniform2d, Strategy::Guided],
            iterations: 2000,
            seed: 0,
            limits: WindowLimits::default(),
            synthesis: None,
            verify: VerifyMode::Final,
            record_timing: false,
        }
    }

    /// Seed of benchmark circuit `i`; also the optimizer seed of every
    /// strategy on that circuit, so runs are paired.
    pub fn circuit_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, 0x6265_6e63, i as u64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub seed: u64,
    pub strategy: Strategy,
    pub init_gates: usize,
    pub final_gates: usize,
    pub kind_counts: Vec<usize>,
    pub iters: usize,
    pub ms: u64,
    pub verification: Verification,
}

impl RunRow {
    /// Numeric columns in summary order: init, final, kinds..., iters, ms, verified.
    pub fn numeric(&self) -> Vec<f64> {
        let mut v = vec![self.init_gates as f64, self.final_gates as f64];
        v.extend(self.kind_counts.iter().map(|&c| c as f64));
        v.push(self.iters as f64);
        v.push(self.ms as f64);
        v.push((self.verification == Verification::Passed) as u8 as f64);
        v
    }
}

#[derive(Clone, Debug)]
pub struct BenchRun {
    pub circuit: usize,
    pub row: RunRow,
    pub trace: ConvergenceTrace,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub runs: Vec<BenchRun>,
}

impl BenchReport {
    pub fn any_failed(&self) -> bool {
        self.runs.iter().any(|r| r.row.verification == Verification::Failed)
    }

    pub fn rows(&self) -> Vec<RunRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }

    pub fn final_counts(&self, s: Strategy) -> Vec<usize> {
        self.runs.iter().filter(|r| r.row.strategy == s).map(|r| r.row.final_gates).collect()
    }
}

/// Runs every circuit x strategy pair (in parallel) and returns them in
/// circuit-major, strategy-minor order.
pub fn run_bench(cfg: &BenchConfig, dbs: &DbSet, model: Option<&UNetModel>) -> Result<BenchReport> {
    if cfg.strategies.is_empty() {
        return Err(Error::Config("no strategies selected".into()));
    }
    if cfg.strategies.contains(&Strategy::Guided) && model.is_none() {
        return Err(Error::Config("guided strategy needs a model".into()));
    }
    let optimizers = cfg
        .strategies
        .iter()
        .map(|&s| {
            let oc = OptimizeConfig {
                strategy: s,
                max_iterations: Some(cfg.iterations),
                limits: cfg.limits,
                synthesis: cfg.synthesis.clone(),
                verify: cfg.verify,
                record_timing: cfg.record_timing,
                ..Default::default()
            };
            Optimizer::new(&cfg.gate_set, dbs, if s == Strategy::Guided { model } else { None }, oc)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.circuits)
        .flat_map(|i| (0..cfg.strategies.len()).map(move |s| (i, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, s)| {
            let seed = cfg.circuit_seed(i);
            let c = random_circuit(cfg.width, cfg.length, &cfg.gate_set, seed)?;
            let mut oc = optimizers[s].config().clone();
            oc.seed = seed;
            let opt = Optimizer::new(&cfg.gate_set, dbs, if cfg.strategies[s] == Strategy::Guided { model } else { None }, oc)?;
            let start = Instant::now();
            let out = opt.run(&c)?;
            let ms = if cfg.record_timing { start.elapsed().as_millis() as u64 } else { 0 };
            Ok(BenchRun {
                circuit: i,
                row: RunRow {
                    seed,
                    strategy: cfg.strategies[s],
                    init_gates: c.len(),
                    final_gates: out.circuit.len(),
                    kind_counts: out.circuit.kind_counts(&cfg.gate_set),
                    iters: out.trace.records.len(),
                    ms,
                    verification: out.verification,
                },
                trace: out.trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport { runs })
}

/// Writes `trace_<strategy>_<circuit>.csv`, `summary.csv` and `convergence.csv`.
pub fn write_report(report: &BenchReport, cfg: &BenchConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in &report.runs {
        let f = fs::File::create(dir.join(format!("trace_{}_{:04}.csv", r.row.strategy, r.circuit)))?;
        r.trace.write_csv(io::BufWriter::new(f))?;
    }
    write_summary_csv(&report.rows(), &cfg.gate_set, &cfg.strategies, fs::File::create(dir.join("summary.csv"))?)?;
    let conv = convergence(report, &cfg.strategies);
    write_convergence_csv(&conv, fs::File::create(dir.join("convergence.csv"))?)?;
    Ok(())
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const AGGREGATES: [&str; 5] = ["mean", "std", "median", "q1", "q3"];

/// Mean, sample standard deviation, median, first and third quartile.
pub fn aggregate(values: &[f64]) -> [f64; 5] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    [mean, var.sqrt(), quantile(&s, 0.5), quantile(&s, 0.25), quantile(&s, 0.75)]
}

pub fn summary_header(gs: &GateSet) -> Vec<String> {
    let mut h: Vec<String> = ["seed", "strategy", "init_gates", "final_gates"].map(String::from).to_vec();
    h.extend(gs.kinds().iter().map(|k| k.name().to_string()));
    h.extend(["iters", "ms", "verified"].map(String::from));
    h
}

/// Per-run rows, then for each strategy one row per aggregate with the
/// aggregate's name in the `seed` column (the `verified` aggregate is over
/// the 0/1 passed flag).
pub fn write_summary_csv<W: io::Write>(rows: &[RunRow], gs: &GateSet, strategies: &[Strategy], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(summary_header(gs))?;
    for r in rows {
        let mut rec = vec![r.seed.to_string(), r.strategy.to_string(), r.init_gates.to_string(), r.final_gates.to_string()];
        rec.extend(r.kind_counts.iter().map(|c| c.to_string()));
        rec.extend([r.iters.to_string(), r.ms.to_string(), r.verification.label().to_string()]);
        wr.write_record(&rec)?;
    }
    for &s in strategies {
        let block: Vec<Vec<f64>> = rows.iter().filter(|r| r.strategy == s).map(RunRow::numeric).collect();
        if block.is_empty() {
            continue;
        }
        let cols = block[0].len();
        let aggs: Vec<[f64; 5]> = (0..cols)
            .map(|c| aggregate(&block.iter().map(|r| r[c]).collect::<Vec<_>>()))
            .collect();
        for (a, name) in AGGREGATES.iter().enumerate() {
            let mut rec = vec![name.to_string(), s.to_string()];
            rec.extend(aggs.iter().map(|agg| agg[a].to_string()));
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Parsed `summary.csv`: per-run rows and aggregate rows keyed by
/// `(aggregate name, strategy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryTable {
    pub header: Vec<String>,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<(String, Strategy, Vec<f64>)>,
}

pub fn read_summary_csv<R: io::Read>(r: R, gs: &GateSet) -> Result<SummaryTable> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != summary_header(gs) {
        return Err(Error::Format {
            what: "summary",
            msg: format!("unexpected header {header:?}"),
        });
    }
    let bad = |msg: String| Error::Format { what: "summary", msg };
    let k = gs.kinds().len();
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let strategy: Strategy = rec[1].parse().map_err(|_| bad(format!("bad strategy {:?}", &rec[1])))?;
        if AGGREGATES.contains(&&rec[0]) {
            let vals = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad number {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            aggregates.push((rec[0].to_string(), strategy, vals));
            continue;
        }
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(format!("bad integer {:?}", &rec[i])));
        let verification = match &rec[6 + k] {
            "passed" => Verification::Passed,
            "failed" => Verification::Failed,
            "skipped" => Verification::Skipped,
            "off" => Verification::Off,
            v => return Err(bad(format!("bad verification {v:?}"))),
        };
        rows.push(RunRow {
            seed: int(0)?,
            strategy,
            init_gates: int(2)? as usize,
            final_gates: int(3)? as usize,
            kind_counts: (0..k).map(|j| int(4 + j).map(|v| v as usize)).collect::<Result<_>>()?,
            iters: int(4 + k)? as usize,
            ms: int(5 + k)?,
            verification,
        });
    }
    Ok(SummaryTable { header, rows, aggregates })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub strategy: Strategy,
    pub iter: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Median and quartiles of the gate count at each iteration (iteration 0 is
/// the input), per strategy. Shorter traces hold their last value.
pub fn convergence(report: &BenchReport, strategies: &[Strategy]) -> Vec<ConvergencePoint> {
    let mut out = Vec::new();
    for &s in strategies {
        let curves: Vec<Vec<usize>> = report
            .runs
            .iter()
            .filter(|r| r.row.strategy == s)
            .map(|r| r.trace.gate_curve())
            .collect();
        let len = curves.iter().map(Vec::len).max().unwrap_or(0);
        for it in 0..len {
            let mut col: Vec<f64> = curves.iter().map(|c| c[it.min(c.len() - 1)] as f64).collect();
            col.sort_by(f64::total_cmp);
            out.push(ConvergencePoint {
                strategy: s,
                iter: it,
                median: quantile(&col, 0.5),
                q1: quantile(&col, 0.25),
                q3: quantile(&col, 0.75),
            });
        }
    }
    out
}

pub fn write_convergence_csv<W: io::Write>(points: &[ConvergencePoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["strategy", "iter", "median", "q1", "q3"])?;
    for p in points {
        wr.write_record([p.strategy.to_string(), p.iter.to_string(), p.median.to_string(), p.q1.to_string(), p.q3.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_convergence_csv<R: io::Read>(r: R) -> Result<Vec<ConvergencePoint>> {
    let mut rd = csv::Reader::from_reader(r);
    let bad = |msg: String| Error::Format { what: "convergence", msg };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[i])));
        out.push(ConvergencePoint {
            strategy: rec[0].parse().map_err(|_| bad(format!("bad strategy {:?}", &rec[0])))?,
            iter: rec[1].parse().map_err(|_| bad(format!("bad iteration {:?}", &rec[1])))?,
            median: num(2)?,
            q1: num(3)?,
            q3: num(4)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_type7() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.25), 1.75);
        assert_eq!(quantile(&s, 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn aggregate_values() {
        let a = aggregate(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(a[0], 5.0);
        assert!((a[1] - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(a[2], 4.5);
    }

    fn small_cfg(strategies: Vec<Strategy>) -> BenchConfig {
        BenchConfig {
            circuits: 3,
            width: 4,
            length: 30,
            strategies,
            iterations: 60,
            seed: 9,
            ..BenchConfig::new(GateSet::nisq())
        }
    }

    #[test]
    fn bench_outputs_round_trip_and_repeat() {
        let cfg = small_cfg(vec![Strategy::Uniform1d, Strategy::Uniform2d]);
        let dbs = DbSet::new(vec![]).unwrap();
        let rep = run_bench(&cfg, &dbs, None).unwrap();
        assert_eq!(rep.runs.len(), 6);
        assert!(!rep.any_failed());
        let dir = tempfile::tempdir().unwrap();
        write_report(&rep, &cfg, dir.path()).unwrap();
        let summary = fs::read(dir.path().join("summary.csv")).unwrap();
        let table = read_summary_csv(&summary[..], &cfg.gate_set).unwrap();
        assert_eq!(table.rows, rep.rows());
        assert_eq!(table.aggregates.len(), 10);
        for (name, s, vals) in &table.aggregates {
            let block: Vec<Vec<f64>> = table.rows.iter().filter(|r| r.strategy == *s).map(RunRow::numeric).collect();
            let idx = AGGREGATES.iter().position(|a| a == name).unwrap();
            for (c, v) in vals.iter().enumerate() {
                let col: Vec<f64> = block.iter().map(|r| r[c]).collect();
                assert!((aggregate(&col)[idx] - v).abs() < 1e-9);
            }
        }
        let conv = fs::read(dir.path().join("convergence.csv")).unwrap();
        let points = read_convergence_csv(&conv[..]).unwrap();
        assert_eq!(points, convergence(&rep, &cfg.strategies));
        assert_eq!(points.len(), 2 * 61);

        let again = tempfile::tempdir().unwrap();
        write_report(&run_bench(&cfg, &dbs, None).unwrap(), &cfg, again.path()).unwrap();
        for f in ["summary.csv", "convergence.csv", "trace_2d_0001.csv"] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap());
        }
    }

    #[test]
    fn single_strategy_block() {
        let cfg = small_cfg(vec![Strategy::Uniform2d]);
        let rep = run_bench(&cfg, &DbSet::new(vec![]).unwrap(), None).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&rep.rows(), &cfg.gate_set, &cfg.strategies, &mut buf).unwrap();
        let t = read_summary_csv(&buf[..], &cfg.gate_set).unwrap();
        assert!(t.aggregates.iter().all(|(_, s, _)| *s == Strategy::Uniform2d));
        assert_eq!(t.aggregates.len(), 5);
    }

    #[test]
    fn guided_without_model_is_rejected() {
        let cfg = small_cfg(vec![Strategy::Guided]);
        assert!(run_bench(&cfg, &DbSet::new(vec![]).unwrap(), None).is_err());
    }
}
