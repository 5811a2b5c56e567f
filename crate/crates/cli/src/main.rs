use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gridopt::bench::{run_bench, write_report, BenchConfig};
use gridopt::dataset::{generate_dataset, Dataset, DatasetConfig};
use gridopt::guidance::{train, write_loss_csv, Arch, TrainConfig, TrainSample, UNetModel};
use gridopt::optimize::{Optimizer, OptimizeConfig, Reducer, Verification, VerifyMode};
use gridopt::qasm::{emit_qasm, parse_qasm};
use gridopt::rewrite::{build_db, load_db, save_db, BuildOptions, DbSet, SynthesisConfig};
use gridopt::sampler::{Strategy, WindowLimits};
use gridopt::{Error, GateSet};

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_BENCH_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "gridopt", version, about = "Quantum circuit peephole optimizer with 2D window sampling")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Shorten one QASM circuit.
    Optimize(OptimizeArgs),
    /// Run strategies over random circuits and write CSV results.
    Bench(BenchArgs),
    /// Generate a labeled dataset for the attention model.
    GenDataset(DatasetArgs),
    /// Train the attention model on a dataset.
    Train(TrainArgs),
    /// Build a rewrite database.
    DbBuild(DbBuildArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GateSetArg {
    Nisq,
    Iontrap,
}

impl GateSetArg {
    fn get(self) -> GateSet {
        match self {
            GateSetArg::Nisq => GateSet::nisq(),
            GateSetArg::Iontrap => GateSet::iontrap(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyArg {
    Every,
    Final,
    Off,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_enum)]
    gateset: GateSetArg,
    /// Rewrite database file; repeat for several qubit counts.
    #[arg(long)]
    db: Vec<PathBuf>,
    /// Enable the continuous-angle synthesis fallback.
    #[arg(long)]
    synth: bool,
    #[arg(long, default_value_t = 3)]
    max_qubits: usize,
    #[arg(long, default_value_t = 8)]
    max_slots: usize,
    #[arg(long, default_value_t = 6)]
    max_run: usize,
    #[arg(long, default_value_t = 3)]
    shuffles: usize,
    /// Uniform floor added to attention when drawing anchors.
    #[arg(long, default_value_t = 0.02)]
    floor: f64,
}

impl SearchArgs {
    fn limits(&self) -> WindowLimits {
        WindowLimits {
            max_qubits: self.max_qubits,
            max_slots: self.max_slots,
            max_run: self.max_run,
            shuffles: self.shuffles,
            floor: self.floor,
        }
    }

    fn synthesis(&self, seed: u64) -> Option<SynthesisConfig> {
        self.synth.then(|| SynthesisConfig {
            seed,
            ..Default::default()
        })
    }

    fn dbs(&self, gs: &GateSet) -> anyhow::Result<DbSet> {
        let mut set = DbSet::new(vec![])?;
        for p in &self.db {
            let db = load_db(p).with_context(|| format!("loading {}", p.display()))?;
            if db.gate_set() != gs {
                return Err(Error::GateSetMismatch {
                    expected: gs.name().to_string(),
                    found: db.gate_set().name().to_string(),
                }
                .into());
            }
            set.add(db)?;
        }
        Ok(set)
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    strategy: Strategy,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    budget_s: Option<f64>,
    #[arg(long)]
    target: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VerifyArg::Final)]
    verify: VerifyArg,
    /// Accepted replacements between attention refreshes.
    #[arg(long, default_value_t = 1)]
    refresh: usize,
    /// Record wall-clock time in the trace.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    circuits: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 100)]
    length: usize,
    #[arg(long, value_delimiter = ',', default_value = "1d,2d,guided")]
    strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = VerifyArg::Final)]
    verify: VerifyArg,
    /// Record wall-clock times (summary `ms` column and traces).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value_t = 2000)]
    count: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 100)]
    length: usize,
    #[arg(long, default_value_t = 400)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    blur_sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.002)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-epoch loss history here.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Continue from existing weights instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Args)]
struct DbBuildArgs {
    #[arg(long, value_enum)]
    gateset: GateSetArg,
    #[arg(long, short = 'q')]
    qubits: usize,
    #[arg(long, short = 'D')]
    depth: usize,
    /// Angle grid `pi/k`: multiples of pi/k in (-pi, pi].
    #[arg(long, default_value = "pi/4")]
    grid: String,
    #[arg(long, default_value_t = 5_000_000)]
    max_entries: usize,
    #[arg(long)]
    out: PathBuf,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_USAGE,
            err: e.into(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Cmd::Optimize(a) => cmd_optimize(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::GenDataset(a) => cmd_gen_dataset(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::DbBuild(a) => cmd_db_build(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn verify_mode(v: VerifyArg) -> VerifyMode {
    match v {
        VerifyArg::Every => VerifyMode::EveryStep,
        VerifyArg::Final => VerifyMode::Final,
        VerifyArg::Off => VerifyMode::Off,
    }
}

fn load_model(weights: Option<&Path>, strategies: &[Strategy]) -> anyhow::Result<Option<UNetModel>> {
    match weights {
        Some(p) => Ok(Some(UNetModel::load(p).with_context(|| format!("loading {}", p.display()))?)),
        None if strategies.contains(&Strategy::Guided) => bail!("the guided strategy needs --weights"),
        None => Ok(None),
    }
}

fn kinds_json(gs: &GateSet, counts: &[usize]) -> serde_json::Value {
    gs.kinds().iter().zip(counts).map(|(k, &c)| (k.name().to_string(), json!(c))).collect::<serde_json::Map<_, _>>().into()
}

fn cmd_optimize(a: OptimizeArgs) -> Result<(), Failure> {
    let gs = a.search.gateset.get();
    let model = load_model(a.weights.as_deref(), &[a.strategy])?;
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let circuit = parse_qasm(&text).with_context(|| format!("parsing {}", a.input.display()))?;
    circuit.check_gate_set(&gs)?;
    let dbs = a.search.dbs(&gs)?;
    let stop_given = a.iters.is_some() || a.budget_s.is_some() || a.target.is_some();
    let budget = a
        .budget_s
        .map(|s| Duration::try_from_secs_f64(s).map_err(|_| anyhow!("invalid --budget-s {s}")))
        .transpose()?;
    let cfg = OptimizeConfig {
        strategy: a.strategy,
        max_iterations: if stop_given { a.iters } else { Some(2000) },
        budget,
        target_gates: a.target,
        limits: a.search.limits(),
        synthesis: a.search.synthesis(a.seed),
        verify: verify_mode(a.verify),
        seed: a.seed,
        refresh_every: a.refresh,
        record_timing: a.timing,
        ..Default::default()
    };
    let opt = Optimizer::new(&gs, &dbs, model.as_ref(), cfg)?;
    let out = match opt.run(&circuit) {
        Ok(o) => o,
        Err(e @ Error::VerificationFailed { .. }) => {
            return Err(Failure {
                code: EXIT_VERIFY,
                err: e.into(),
            })
        }
        Err(e) => return Err(e.into()),
    };
    if out.verification == Verification::Failed {
        return Err(Failure {
            code: EXIT_VERIFY,
            err: anyhow!("optimized circuit is not equivalent to the input"),
        });
    }
    fs::write(&a.out, emit_qasm(&out.circuit)).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(t) = &a.trace {
        let f = fs::File::create(t).with_context(|| format!("writing {}", t.display()))?;
        out.trace.write_csv(f)?;
    }
    println!(
        "{}",
        json!({
            "command": "optimize",
            "initial_gates": circuit.len(),
            "final_gates": out.circuit.len(),
            "initial_kinds": kinds_json(&gs, &circuit.kind_counts(&gs)),
            "final_kinds": kinds_json(&gs, &out.circuit.kind_counts(&gs)),
            "iterations": out.trace.records.len(),
            "accepted": out.trace.accepted(),
            "verification": out.verification.label(),
        })
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let gs = a.search.gateset.get();
    let model = load_model(a.weights.as_deref(), &a.strategies)?;
    let dbs = a.search.dbs(&gs)?;
    let cfg = BenchConfig {
        circuits: a.circuits,
        width: a.width,
        length: a.length,
        strategies: a.strategies.clone(),
        iterations: a.iters,
        seed: a.seed,
        limits: a.search.limits(),
        synthesis: a.search.synthesis(a.seed),
        verify: verify_mode(a.verify),
        record_timing: a.timing,
        ..BenchConfig::new(gs.clone())
    };
    let report = run_bench(&cfg, &dbs, model.as_ref())?;
    write_report(&report, &cfg, &a.out_dir).with_context(|| format!("writing {}", a.out_dir.display()))?;
    let medians: serde_json::Map<String, serde_json::Value> = cfg
        .strategies
        .iter()
        .map(|&s| {
            let mut f: Vec<f64> = report.final_counts(s).iter().map(|&v| v as f64).collect();
            f.sort_by(f64::total_cmp);
            (s.to_string(), json!(gridopt::bench::quantile(&f, 0.5)))
        })
        .collect();
    let failed = report.runs.iter().filter(|r| r.row.verification == Verification::Failed).count();
    println!(
        "{}",
        json!({
            "command": "bench",
            "runs": report.runs.len(),
            "median_final_gates": medians,
            "verification_failures": failed,
            "out_dir": a.out_dir.display().to_string(),
        })
    );
    if failed > 0 {
        return Err(Failure {
            code: EXIT_BENCH_VERIFY,
            err: anyhow!("{failed} run(s) failed verification"),
        });
    }
    Ok(())
}

fn cmd_gen_dataset(a: DatasetArgs) -> Result<(), Failure> {
    let gs = a.search.gateset.get();
    let dbs = a.search.dbs(&gs)?;
    let synth = a.search.synthesis(a.seed);
    let reducer = Reducer {
        gate_set: &gs,
        dbs: &dbs,
        synthesis: synth.as_ref(),
        phase_tol: gridopt::unitary::DEFAULT_PHASE_TOL,
    };
    let cfg = DatasetConfig {
        count: a.count,
        width: a.width,
        length: a.length,
        probes: a.probes,
        seed: a.seed,
        limits: a.search.limits(),
        blur_sigma: a.blur_sigma,
        ..DatasetConfig::new(gs.clone())
    };
    let ds = generate_dataset(&cfg, &reducer, &a.out, |done, total| log::info!("{done}/{total} samples"))
        .with_context(|| format!("generating {}", a.out.display()))?;
    let positive = ds.samples.iter().filter(|s| s.is_positive()).count();
    println!(
        "{}",
        json!({
            "command": "gen-dataset",
            "samples": ds.samples.len(),
            "positive_samples": positive,
            "gate_set": gs.name(),
            "out": a.out.display().to_string(),
        })
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let ds = Dataset::load(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    let gs = ds.gate_set.clone();
    let samples = ds
        .samples
        .iter()
        .map(|s| TrainSample::from_circuit(&s.circuit, &s.target, &gs))
        .collect::<gridopt::Result<Vec<_>>>()?;
    let init = match &a.init {
        Some(p) => {
            let m = UNetModel::load(p).with_context(|| format!("loading {}", p.display()))?;
            m.check_gate_set(&gs)?;
            m
        }
        None => UNetModel::new_random(gs.clone(), Arch::for_gate_set(&gs), a.seed)?,
    };
    let cfg = TrainConfig {
        batch_size: a.batch,
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        ..Default::default()
    };
    let (model, history) = train(&init, &samples, &cfg, |e, l| log::info!("epoch {e}: loss {l:.6}"))?;
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.loss_csv {
        let f = fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
        write_loss_csv(&history, f)?;
    }
    println!(
        "{}",
        json!({
            "command": "train",
            "samples": samples.len(),
            "epochs": history.len(),
            "first_loss": history.first(),
            "final_loss": history.last(),
            "parameters": model.params().len(),
            "out": a.out.display().to_string(),
        })
    );
    Ok(())
}

/// `pi/k` -> multiples of pi/k in (-pi, pi].
fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let k: i32 = s
        .strip_prefix("pi/")
        .and_then(|k| k.parse().ok())
        .filter(|&k| k >= 1)
        .ok_or_else(|| anyhow!("grid must look like pi/K with K >= 1, got {s:?}"))?;
    Ok((1 - k..=k).map(|j| j as f64 * std::f64::consts::PI / k as f64).collect())
}

fn cmd_db_build(a: DbBuildArgs) -> Result<(), Failure> {
    let gs = a.gateset.get();
    let grid = parse_grid(&a.grid)?;
    let opts = BuildOptions {
        max_entries: a.max_entries,
        ..Default::default()
    };
    let db = build_db(&gs, a.qubits, &grid, a.depth, &opts)?;
    save_db(&db, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let has_identity = db.entries().iter().any(|e| e.circuit.is_empty());
    println!(
        "{}",
        json!({
            "command": "db-build",
            "gate_set": gs.name(),
            "qubits": db.qubits(),
            "grid_size": grid.len(),
            "max_depth": db.max_depth(),
            "completed_depth": db.completed_depth(),
            "truncated": db.truncated(),
            "entries": db.len(),
            "has_identity": has_identity,
            "out": a.out.display().to_string(),
        })
    );
    Ok(())
}
