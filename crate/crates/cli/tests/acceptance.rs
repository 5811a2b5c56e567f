//! End-to-end acceptance checks. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use gridopt::bench::{run_bench, BenchConfig};
use gridopt::circuit::{random_circuit, schedule};
use gridopt::dataset::{generate_dataset, label_circuit, Dataset, DatasetConfig};
use gridopt::guidance::{sample_loss_and_grad, train, Arch, GridTensor, Net, TrainConfig, TrainSample, UNetModel};
use gridopt::optimize::{optimize, OptimizeConfig, Reducer, VerifyMode};
use gridopt::qasm::{emit_qasm, parse_qasm};
use gridopt::rewrite::{build_db, load_db, pi_quarter_grid, save_db, BuildOptions, DbSet, RewriteDb};
use gridopt::sampler::{Strategy, WindowLimits};
use gridopt::{rng_from_seed, Circuit, Error, Gate, GateKind, GateSet};

type M = DMatrix<Complex64>;

const EQUIV_TOL_PER_DIM: f64 = 1e-8;
const FD_STEP: f64 = 1e-4;
const FD_MAX_REL_ERR: f64 = 1e-3;
const LABEL_RECOVERY_MIN: f64 = 0.99;
const AUC_MIN: f64 = 0.75;
const WILCOXON_ALPHA: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli(p: char) -> M {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    match p {
        'I' => M::from_row_slice(2, 2, &[o, z, z, o]),
        'X' => M::from_row_slice(2, 2, &[z, o, o, z]),
        'Y' => M::from_row_slice(2, 2, &[z, c(0.0, -1.0), c(0.0, 1.0), z]),
        'Z' => M::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => unreachable!(),
    }
}

/// Tensor product of single-qubit operators, qubit `j` on bit `j`.
fn pauli_string(width: usize, ops: &[(usize, char)]) -> M {
    let mut m = M::from_element(1, 1, c(1.0, 0.0));
    for q in (0..width).rev() {
        let p = ops.iter().find(|(k, _)| *k == q).map_or('I', |(_, p)| *p);
        m = m.kronecker(&pauli(p));
    }
    m
}

/// Gate matrix from Pauli expansions only.
fn oracle_gate(g: &Gate, width: usize) -> M {
    let id = pauli_string(width, &[]);
    let q = g.qubits();
    let rot = |p: M, t: f64| &id * c((t / 2.0).cos(), 0.0) + p * c(0.0, -(t / 2.0).sin());
    match g.kind {
        GateKind::RX => rot(pauli_string(width, &[(q[0], 'X')]), g.angle.unwrap()),
        GateKind::RY => rot(pauli_string(width, &[(q[0], 'Y')]), g.angle.unwrap()),
        GateKind::RZ => rot(pauli_string(width, &[(q[0], 'Z')]), g.angle.unwrap()),
        GateKind::RXX => rot(pauli_string(width, &[(q[0], 'X'), (q[1], 'X')]), g.angle.unwrap()),
        GateKind::CZ => {
            (&id + pauli_string(width, &[(q[0], 'Z')]) + pauli_string(width, &[(q[1], 'Z')])
                - pauli_string(width, &[(q[0], 'Z'), (q[1], 'Z')]))
                * c(0.5, 0.0)
        }
    }
}

fn oracle_unitary(circ: &Circuit) -> M {
    let mut u = pauli_string(circ.width(), &[]);
    for g in circ.gates() {
        u = oracle_gate(g, circ.width()) * u;
    }
    u
}

/// Frobenius distance between `a` and `b` at the best global phase.
fn oracle_equivalent(a: &M, b: &M, tol: f64) -> bool {
    let tr = (a.adjoint() * b).trace();
    let phase = if tr.norm() > 0.0 { tr.conj() / tr.norm() } else { c(1.0, 0.0) };
    (a - b * phase).norm() <= tol
}

fn report(n: usize, name: &str, out: Outcome, failures: &mut usize) {
    if !out.pass {
        *failures += 1;
    }
    println!("[{}] criterion {n}: {name} ({})", if out.pass { "PASS" } else { "FAIL" }, out.detail);
}

fn standard_dbs(gs: &GateSet) -> DbSet {
    let g = pi_quarter_grid();
    let opts = BuildOptions::default();
    DbSet::new(vec![build_db(gs, 1, &g, 3, &opts).unwrap(), build_db(gs, 2, &g, 2, &opts).unwrap()]).unwrap()
}

fn cz_pair() -> Circuit {
    Circuit::from_gates(4, vec![Gate::cz(0, 1), Gate::rx(2, 0.3), Gate::rz(3, 1.1), Gate::cz(0, 1)]).unwrap()
}

fn criterion_1() -> Outcome {
    let sets = [GateSet::nisq(), GateSet::iontrap()];
    let dbs: Vec<DbSet> = sets.iter().map(standard_dbs).collect();
    let models: Vec<UNetModel> = sets
        .iter()
        .map(|gs| UNetModel::new_random(gs.clone(), Arch::for_gate_set(gs), 17).unwrap())
        .collect();
    let strategies = [Strategy::Uniform1d, Strategy::Uniform2d, Strategy::Guided];
    let (mut failures, mut accepted) = (0, 0);
    for seed in 0..200u64 {
        let g = (seed % 2) as usize;
        let strategy = strategies[(seed / 2 % 3) as usize];
        let width = 3 + (seed % 3) as usize;
        let circ = random_circuit(width, 60, &sets[g], 1000 + seed).unwrap();
        let cfg = OptimizeConfig {
            strategy,
            max_iterations: Some(300),
            verify: VerifyMode::EveryStep,
            seed,
            ..Default::default()
        };
        let model = (strategy == Strategy::Guided).then_some(&models[g]);
        match optimize(&circ, &sets[g], &dbs[g], model, cfg) {
            Ok(out) => {
                accepted += out.trace.accepted();
                let tol = EQUIV_TOL_PER_DIM * (1usize << width) as f64;
                if !oracle_equivalent(&oracle_unitary(&circ), &oracle_unitary(&out.circuit), tol) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    Outcome {
        pass: failures == 0 && accepted > 0,
        detail: format!("200 runs, {accepted} accepted replacements, {failures} failures"),
    }
}

fn criterion_2() -> Outcome {
    let gs = GateSet::nisq();
    let dbs = standard_dbs(&gs);
    let model = UNetModel::new_random(gs.clone(), Arch::for_gate_set(&gs), 5).unwrap();
    let run = |strategy, shuffles, seed| {
        let mut cfg = OptimizeConfig {
            strategy,
            max_iterations: Some(500),
            seed,
            ..Default::default()
        };
        cfg.limits.shuffles = shuffles;
        let m = (strategy == Strategy::Guided).then_some(&model);
        optimize(&cz_pair(), &gs, &dbs, m, cfg).unwrap()
    };
    let mut notes = Vec::new();
    let mut pass = true;
    for seed in 0..5 {
        let a = run(Strategy::Uniform2d, 3, seed).circuit.len();
        let b = run(Strategy::Guided, 3, seed).circuit.len();
        let no_shuffle = run(Strategy::Uniform1d, 0, seed);
        let shuffled = run(Strategy::Uniform1d, 3, seed).circuit.len();
        pass &= a == 2 && b == 2 && no_shuffle.trace.accepted() == 0 && no_shuffle.circuit.len() == 4 && shuffled == 2;
        if seed == 0 {
            notes.push(format!("2d {a}, guided {b}, 1d S=0 {} ({} accepts), 1d S=3 {shuffled}", no_shuffle.circuit.len(), no_shuffle.trace.accepted()));
        }
    }
    Outcome {
        pass,
        detail: format!("{} gates -> {}; 5 seeds", cz_pair().len(), notes.join("")),
    }
}

/// Every placement of every gate kind, built without the library's helper.
fn oracle_placements(gs: &GateSet, q: usize, grid: &[f64]) -> Vec<Gate> {
    let mut out = Vec::new();
    for &k in gs.kinds() {
        let angles: Vec<Option<f64>> = if k.is_parameterized() { grid.iter().map(|&a| Some(a)).collect() } else { vec![None] };
        if k.arity() == 1 {
            for a in 0..q {
                for &t in &angles {
                    out.push(Gate::new(k, &[a], t).unwrap());
                }
            }
        } else {
            for a in 0..q {
                for b in a + 1..q {
                    for &t in &angles {
                        out.push(Gate::new(k, &[a, b], t).unwrap());
                    }
                }
            }
        }
    }
    out
}

/// All unitaries of circuits with exactly `len` gates.
fn enumerate(q: usize, gates: &[Gate], mats: &[M], len: usize) -> Vec<(M, Vec<usize>)> {
    let mut level = vec![(pauli_string(q, &[]), Vec::new())];
    for _ in 0..len {
        let mut next = Vec::with_capacity(level.len() * gates.len());
        for (u, seq) in &level {
            for (i, m) in mats.iter().enumerate() {
                let mut s = seq.clone();
                s.push(i);
                next.push((m * u, s));
            }
        }
        level = next;
    }
    level
}

fn check_db(gs: &GateSet, q: usize, depth: usize) -> (usize, usize, usize) {
    let grid = pi_quarter_grid();
    let db = build_db(gs, q, &grid, depth, &BuildOptions::default()).unwrap();
    let gates = oracle_placements(gs, q, &grid);
    let mats: Vec<M> = gates.iter().map(|g| oracle_gate(g, q)).collect();
    let tol = 1e-6;
    let mut mismatches = 0;
    // shortest known circuits for each length
    let shorter: Vec<Vec<M>> = (0..depth).map(|l| enumerate(q, &gates, &mats, l).into_iter().map(|(u, _)| u).collect()).collect();
    for e in db.entries() {
        let u = oracle_unitary(&e.circuit);
        let l = e.circuit.len();
        if shorter[..l].iter().flatten().any(|v| oracle_equivalent(v, &u, tol)) {
            mismatches += 1;
        }
    }
    // every circuit up to the depth is covered by an entry no longer than it
    let mut checked = 0;
    for len in 0..=depth {
        for (u, _) in enumerate(q, &gates, &mats, len) {
            checked += 1;
            let data: Vec<Complex64> = (0..u.nrows()).flat_map(|r| (0..u.ncols()).map(move |c| (r, c))).map(|(r, c)| u[(r, c)]).collect();
            let uu = gridopt::unitary::Unitary::from_rows(q, data);
            match db.lookup(&uu) {
                Some(hit) if hit.len() <= len && oracle_equivalent(&oracle_unitary(hit), &u, tol) => {}
                _ => mismatches += 1,
            }
        }
    }
    (db.len(), checked, mismatches)
}

fn criterion_3() -> Outcome {
    let mut total = 0;
    let mut parts = Vec::new();
    for gs in [GateSet::nisq(), GateSet::iontrap()] {
        for (q, d) in [(1, 4), (2, 3)] {
            let (n, checked, bad) = check_db(&gs, q, d);
            total += bad;
            parts.push(format!("{} q={q} D={d}: {n} entries, {checked} circuits, {bad} mismatches", gs.name()));
        }
    }
    Outcome {
        pass: total == 0,
        detail: parts.join("; "),
    }
}

fn criterion_4() -> Outcome {
    let gs = GateSet::nisq();
    let arch = Arch {
        base: 4,
        mid: 8,
        ..Arch::for_gate_set(&gs)
    };
    let model = UNetModel::new_random(gs.clone(), arch, 21).unwrap();
    let mut params = model.params_f64();
    let mut rng = rng_from_seed(99);
    // non-zero biases so every path carries signal
    for p in &mut params {
        if *p == 0.0 {
            *p = rng.gen_range(-0.1..0.1);
        }
    }
    let mut worst: f64 = 0.0;
    let (mut count, mut redrawn, mut accepted) = (0, 0, 0u64);
    while accepted < 3 && redrawn < 20 {
        let mut x = GridTensor::zeros(arch.in_channels, 4, 4);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let target: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s = TrainSample {
            input: x,
            target,
            mask: vec![1.0; 16],
        };
        let seed = 1000 + accepted + 100 * redrawn;
        let (_, grad) = sample_loss_and_grad(&Net::new(arch, &params), &s, Some(seed));
        let (_, base_sig) = oracle_loss(arch, &params, &s, seed);
        let mut smooth = true;
        let mut sample_worst: f64 = 0.0;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] = params[i] + FD_STEP;
            let (up, sig_up) = oracle_loss(arch, &p, &s, seed);
            p[i] = params[i] - FD_STEP;
            let (down, sig_down) = oracle_loss(arch, &p, &s, seed);
            // central differences only measure the gradient on a single linear piece
            if sig_up != base_sig || sig_down != base_sig {
                smooth = false;
                break;
            }
            let fd = (up - down) / (2.0 * FD_STEP);
            // absolute floor keeps round-off on vanishing gradients from counting as error
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
            sample_worst = sample_worst.max(rel);
        }
        if smooth {
            worst = worst.max(sample_worst);
            count += params.len();
            accepted += 1;
        } else {
            redrawn += 1;
        }
    }
    Outcome {
        pass: accepted == 3 && worst <= FD_MAX_REL_ERR,
        detail: format!(
            "{count} parameter checks on {accepted} inputs, max relative error {worst:.2e}; inputs redrawn for a kink inside the stencil: {redrawn}"
        ),
    }
}

/// Mean binary cross-entropy from logits, plus the branch signature of the pass.
fn oracle_loss(arch: Arch, params: &[f64], s: &TrainSample, dropout_seed: u64) -> (f64, Vec<usize>) {
    let mut rng = rng_from_seed(dropout_seed);
    let cache = Net::new(arch, params).forward(&s.input, Some(&mut rng));
    let mut total = 0.0;
    for (&z, &y) in cache.logits.data.iter().zip(&s.target) {
        let p = 1.0 / (1.0 + (-z).exp());
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    (total / s.target.len() as f64, cache.branch_signature())
}

fn criterion_5() -> Outcome {
    let gs = GateSet::nisq();
    let dbs = standard_dbs(&gs);
    let red = Reducer {
        gate_set: &gs,
        dbs: &dbs,
        synthesis: None,
        phase_tol: EQUIV_TOL_PER_DIM,
    };
    let instances = 50;
    let recover = |probes_per_cell: usize| {
        let mut recovered = 0;
        for i in 0..instances {
            let base = random_circuit(8, 100, &gs, 5000 + i).unwrap();
            let mut rng = rng_from_seed(i);
            let a = rng.gen_range(0..7);
            let pos = rng.gen_range(0..=base.len());
            let mut gates = base.gates().to_vec();
            gates.insert(pos, Gate::cz(a, a + 1));
            gates.insert(pos, Gate::cz(a, a + 1));
            let circ = Circuit::from_gates(8, gates).unwrap();
            let layout = schedule(&circ);
            let probes = probes_per_cell * 8 * layout.depth();
            let target = label_circuit(&circ, &red, probes, &WindowLimits::default(), &mut rng);
            let d = layout.depth();
            let ok = [pos, pos + 1]
                .iter()
                .all(|&g| [a, a + 1].iter().all(|&q| target[q * d + layout.slot(g)] == 1.0));
            recovered += ok as usize;
        }
        recovered
    };
    let recovered = recover(20);
    let frac = recovered as f64 / instances as f64;
    Outcome {
        pass: frac >= LABEL_RECOVERY_MIN,
        detail: format!(
            "{recovered}/{instances} planted pairs labeled at P = 20x cells; for reference {}/{instances} at 100x",
            recover(100)
        ),
    }
}

/// Mann-Whitney AUC with average ranks for ties.
fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&v| (v, true)).chain(neg.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        rank_sum += all[i..j].iter().filter(|x| x.1).count() as f64 * r;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

fn criterion_6(dir: &Path) -> (Outcome, UNetModel) {
    let gs = GateSet::nisq();
    let dbs = standard_dbs(&gs);
    let red = Reducer {
        gate_set: &gs,
        dbs: &dbs,
        synthesis: None,
        phase_tol: EQUIV_TOL_PER_DIM,
    };
    let cfg = DatasetConfig {
        count: 2200,
        seed: 2024,
        ..DatasetConfig::new(gs.clone())
    };
    let ds = generate_dataset(&cfg, &red, &dir.join("train.qgds"), |_, _| {}).unwrap();
    let samples: Vec<TrainSample> = ds
        .samples
        .iter()
        .map(|s| TrainSample::from_circuit(&s.circuit, &s.target, &gs).unwrap())
        .collect();
    let (train_set, held_out) = samples.split_at(2000);
    let init = UNetModel::new_random(gs.clone(), Arch::for_gate_set(&gs), 1).unwrap();
    let tc = TrainConfig {
        epochs: 20,
        seed: 1,
        ..Default::default()
    };
    let (model, hist) = train(&init, train_set, &tc, |_, _| {}).unwrap();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for s in held_out {
        let y = model.predict(&s.input);
        for i in 0..s.mask.len() {
            if s.mask[i] > 0.0 {
                if s.target[i] > 0.5 { &mut pos } else { &mut neg }.push(y.data[i]);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let a = auc(&pos, &neg);
    let out = Outcome {
        pass: !pos.is_empty() && mean(&pos) > mean(&neg) && a >= AUC_MIN,
        detail: format!(
            "2000 train / 200 held out, loss {:.3} -> {:.3}, mean attention {:.3} vs {:.3}, AUC {a:.3}",
            hist[0],
            hist[hist.len() - 1],
            mean(&pos),
            mean(&neg)
        ),
    };
    (out, model)
}

/// One-sided Wilcoxon signed-rank p-value for `x < y` (normal approximation
/// with tie correction and continuity correction; zero differences dropped).
fn wilcoxon_less(x: &[f64], y: &[f64]) -> f64 {
    let mut d: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).filter(|v| *v != 0.0).collect();
    let n = d.len() as f64;
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < d.len() {
        let mut j = i;
        while j < d.len() && d[j].abs() == d[i].abs() {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        w_plus += d[i..j].iter().filter(|v| **v > 0.0).count() as f64 * r;
        i = j;
    }
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus - mean - 0.5) / var.sqrt();
    1.0 - Normal::new(0.0, 1.0).unwrap().cdf(z)
}

fn median(v: &[usize]) -> f64 {
    let mut s: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    s.sort_by(f64::total_cmp);
    gridopt::bench::quantile(&s, 0.5)
}

fn criterion_7(model: &UNetModel) -> Outcome {
    let gs = GateSet::nisq();
    let dbs = standard_dbs(&gs);
    let cfg = BenchConfig {
        circuits: 100,
        iterations: 2000,
        seed: 77,
        ..BenchConfig::new(gs)
    };
    let t = Instant::now();
    let rep = run_bench(&cfg, &dbs, Some(model)).unwrap();
    let [g, u, o] = [Strategy::Guided, Strategy::Uniform2d, Strategy::Uniform1d].map(|s| rep.final_counts(s));
    let (mg, mu, mo) = (median(&g), median(&u), median(&o));
    let f = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let p = wilcoxon_less(&f(&g), &f(&u));
    Outcome {
        pass: mg <= mu && mu <= mo && mg <= mo && p < WILCOXON_ALPHA && !rep.any_failed(),
        detail: format!(
            "median final gates guided {mg}, 2d {mu}, 1d {mo}; Wilcoxon p = {p:.2e}; {:.0}s",
            t.elapsed().as_secs_f64()
        ),
    }
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_gridopt"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn criterion_8(dir: &Path) -> Outcome {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let input = p("in.qasm");
    fs::write(&input, emit_qasm(&random_circuit(6, 80, &GateSet::nisq(), 3).unwrap())).unwrap();
    let mut ok = true;
    let mut compared = 0;
    for run in ["a", "b"] {
        let o = |n: &str| p(&format!("{run}_{n}"));
        ok &= run_cli(&["db-build", "--gateset", "nisq", "-q", "2", "-D", "2", "--out", &o("db2.qrdb")]);
        ok &= run_cli(&["db-build", "--gateset", "nisq", "-q", "1", "-D", "3", "--out", &o("db1.qrdb")]);
        ok &= run_cli(&[
            "gen-dataset", "--gateset", "nisq", "--count", "30", "--width", "6", "--length", "50", "--db", &o("db1.qrdb"), "--db",
            &o("db2.qrdb"), "--seed", "4", "--out", &o("ds.qgds"),
        ]);
        ok &= run_cli(&["train", "--dataset", &o("ds.qgds"), "--epochs", "3", "--seed", "2", "--out", &o("w.qgnw"), "--loss-csv", &o("loss.csv")]);
        for s in ["1d", "2d", "guided"] {
            ok &= run_cli(&[
                "optimize", "--in", &input, "--out", &o(&format!("{s}.qasm")), "--gateset", "nisq", "--db", &o("db1.qrdb"), "--db",
                &o("db2.qrdb"), "--weights", &o("w.qgnw"), "--strategy", s, "--iters", "500", "--seed", "9", "--trace",
                &o(&format!("{s}.csv")),
            ]);
        }
        ok &= run_cli(&[
            "bench", "--gateset", "nisq", "--db", &o("db1.qrdb"), "--db", &o("db2.qrdb"), "--weights", &o("w.qgnw"), "--circuits", "4",
            "--width", "5", "--length", "40", "--iters", "200", "--seed", "3", "--out-dir", &o("bench"),
        ]);
    }
    let mut files = vec!["db1.qrdb", "db2.qrdb", "ds.qgds", "w.qgnw", "loss.csv"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for s in ["1d", "2d", "guided"] {
        files.push(format!("{s}.qasm"));
        files.push(format!("{s}.csv"));
    }
    for f in ["summary.csv", "convergence.csv"] {
        files.push(format!("bench/{f}"));
    }
    for s in ["1d", "2d", "guided"] {
        for i in 0..4 {
            files.push(format!("bench/trace_{s}_{i:04}.csv"));
        }
    }
    let mut differing = Vec::new();
    for f in &files {
        let (a, b) = (fs::read(dir.join(format!("a_{f}"))), fs::read(dir.join(format!("b_{f}"))));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => compared += 1,
            _ => differing.push(f.clone()),
        }
    }
    Outcome {
        pass: ok && differing.is_empty(),
        detail: format!("{compared}/{} output files byte-identical across repeated commands{}", files.len(), if ok { "" } else { "; a command failed" }),
    }
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut checks = Vec::new();
    let mut note = |name: &str, ok: bool| checks.push((name.to_string(), ok));

    let mut qasm_ok = true;
    for (i, gs) in [GateSet::nisq(), GateSet::iontrap()].iter().enumerate() {
        for seed in 0..20 {
            let circ = random_circuit(2 + seed as usize % 6, 50, gs, seed + 100 * i as u64).unwrap();
            let text = emit_qasm(&circ);
            let back = parse_qasm(&text).unwrap();
            qasm_ok &= back == circ && emit_qasm(&back) == text;
        }
    }
    note("qasm", qasm_ok);

    let db = build_db(&GateSet::iontrap(), 2, &pi_quarter_grid(), 2, &BuildOptions::default()).unwrap();
    let db_path = dir.join("rt.qrdb");
    save_db(&db, &db_path).unwrap();
    let back: RewriteDb = load_db(&db_path).unwrap();
    let keys = |d: &RewriteDb| d.entries().iter().map(|e| e.key).collect::<Vec<_>>();
    let bytes = fs::read(&db_path).unwrap();
    save_db(&back, dir.join("rt2.qrdb")).unwrap();
    note("db", back == db && keys(&back) == keys(&db) && fs::read(dir.join("rt2.qrdb")).unwrap() == bytes);
    let mut bad = bytes.clone();
    bad[bytes.len() / 2] ^= 0x10;
    fs::write(&db_path, &bad).unwrap();
    note("db corruption", matches!(load_db(&db_path), Err(Error::Checksum { .. })));

    let gs = GateSet::nisq();
    let model = UNetModel::new_random(gs.clone(), Arch::for_gate_set(&gs), 8).unwrap();
    let m_path = dir.join("rt.qgnw");
    model.save(&m_path).unwrap();
    let mb = UNetModel::load(&m_path).unwrap();
    let circ = random_circuit(5, 40, &gs, 1).unwrap();
    note("model", mb == model && mb.infer(&circ, &gs).unwrap() == model.infer(&circ, &gs).unwrap() && mb.to_bytes() == model.to_bytes());
    let mbytes = fs::read(&m_path).unwrap();
    fs::write(&m_path, &mbytes[..mbytes.len() - 3]).unwrap();
    note("model truncation", matches!(UNetModel::load(&m_path), Err(Error::Checksum { .. })));

    let dbs = standard_dbs(&gs);
    let red = Reducer {
        gate_set: &gs,
        dbs: &dbs,
        synthesis: None,
        phase_tol: EQUIV_TOL_PER_DIM,
    };
    let cfg = DatasetConfig {
        count: 12,
        width: 5,
        length: 40,
        probes: 100,
        ..DatasetConfig::new(gs.clone())
    };
    let d_path = dir.join("rt.qgds");
    let ds = generate_dataset(&cfg, &red, &d_path, |_, _| {}).unwrap();
    let dbytes = fs::read(&d_path).unwrap();
    note("dataset", Dataset::load(&d_path).unwrap() == ds && Dataset::from_bytes(&dbytes).unwrap().to_bytes() == dbytes);
    let mut bad = dbytes.clone();
    bad[dbytes.len() / 3] ^= 0x01;
    note("dataset corruption", matches!(Dataset::from_bytes(&bad), Err(Error::Checksum { .. })));

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
    Outcome {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{} round-trip and corruption checks", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    }
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut failures = 0;
    let start = Instant::now();
    report(1, "unitary preservation", criterion_1(), &mut failures);
    report(2, "CZ pair reduction and 1D shuffle dependence", criterion_2(), &mut failures);
    report(3, "rewrite DB minimality", criterion_3(), &mut failures);
    report(4, "gradient correctness", criterion_4(), &mut failures);
    report(5, "planted label recovery", criterion_5(), &mut failures);
    let (c6, model) = criterion_6(dir.path());
    report(6, "guidance quality", c6, &mut failures);
    report(7, "guided beats uniform", criterion_7(&model), &mut failures);
    report(8, "determinism", criterion_8(dir.path()), &mut failures);
    report(9, "round-trips", criterion_9(dir.path()), &mut failures);
    println!("{} of 9 criteria passed in {:.0}s", 9 - failures, start.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
