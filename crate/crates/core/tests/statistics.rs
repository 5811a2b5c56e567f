use statrs::distribution::{ChiSquared, ContinuousCDF};

use gridopt::circuit::{flatten, random_circuit, schedule, split, Window};
use gridopt::dataset::{generate_sample, DatasetConfig};
use gridopt::optimize::Reducer;
use gridopt::rewrite::{build_db, pi_quarter_grid, BuildOptions, DbSet};
use gridopt::sampler::{sample_1d, sample_2d_uniform, AttentionMap, GuidedSampler, WindowLimits};
use gridopt::unitary::{circuit_unitary, equal_up_to_phase, DEFAULT_PHASE_TOL};
use gridopt::{rng_from_seed, Circuit, Gate, GateSet};

const DRAWS: usize = 100_000;

fn chi_square_uniform(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn chi_square_two_sample(a: &[usize], b: &[usize]) -> f64 {
    let (na, nb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut stat = 0.0;
    let mut bins = 0;
    for (&x, &y) in a.iter().zip(b) {
        if x + y > 0 {
            stat += (ka * x as f64 - kb * y as f64).powi(2) / (x + y) as f64;
            bins += 1;
        }
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

fn grid(width: usize, depth: usize) -> Circuit {
    let gates = (0..depth).flat_map(|_| (0..width).map(|q| Gate::rz(q, 0.1))).collect();
    Circuit::from_gates(width, gates).unwrap()
}

#[test]
fn random_kinds_are_uniform() {
    let gs = GateSet::iontrap();
    let mut counts = vec![0; gs.kinds().len()];
    for seed in 0..100 {
        let c = random_circuit(8, 300, &gs, seed).unwrap();
        for (i, k) in c.kind_counts(&gs).into_iter().enumerate() {
            counts[i] += k;
        }
    }
    for &k in &counts {
        assert!((k as f64 / 100.0 - 75.0).abs() < 3.0, "{counts:?}");
    }
    assert!(chi_square_uniform(&counts) > 0.01, "{counts:?}");
}

#[test]
fn run_starts_are_uniform() {
    let mut c = random_circuit(4, 20, &GateSet::nisq(), 1).unwrap();
    let limits = WindowLimits {
        shuffles: 0,
        ..Default::default()
    };
    let mut rng = rng_from_seed(11);
    let mut counts = vec![0; 19];
    for _ in 0..DRAWS {
        counts[sample_1d(&mut c, &limits, &mut rng).0] += 1;
    }
    assert!(chi_square_uniform(&counts) > 0.01, "{counts:?}");
}

#[test]
fn uniform_anchors_cover_cells_evenly() {
    let layout = schedule(&grid(8, 40));
    let mut rng = rng_from_seed(12);
    let mut counts = vec![0; 8 * 40];
    for _ in 0..DRAWS {
        let w = sample_2d_uniform(&layout, &WindowLimits::default(), &mut rng);
        counts[w.q_lo * 40 + w.t_lo] += 1;
    }
    assert!(chi_square_uniform(&counts) > 0.01);
}

#[test]
fn guided_anchor_follows_weights() {
    let (h, w) = (6, 20);
    let values = (0..h * w).map(|i| if i % w < w / 2 { 0.9 } else { 0.1 }).collect();
    let attn = AttentionMap::new(h, w, values).unwrap();
    let eta = 0.02;
    let sampler = GuidedSampler::new(&attn, eta);
    let mut rng = rng_from_seed(13);
    let left = (0..DRAWS).filter(|_| sampler.anchor(&mut rng).1 < w / 2).count();
    let expected = (0.9 + eta) / (1.0 + 2.0 * eta);
    assert!((left as f64 / DRAWS as f64 - expected).abs() < 0.01);
}

#[test]
fn constant_map_matches_uniform_anchors() {
    let layout = schedule(&grid(5, 12));
    let sampler = GuidedSampler::new(&AttentionMap::constant(5, 12, 0.4), 0.02);
    let mut rng = rng_from_seed(14);
    let (mut g, mut u) = (vec![0; 60], vec![0; 60]);
    for _ in 0..DRAWS {
        let (q, t) = sampler.anchor(&mut rng);
        g[q * 12 + t] += 1;
        let w = sample_2d_uniform(&layout, &WindowLimits::default(), &mut rng);
        u[w.q_lo * 12 + w.t_lo] += 1;
    }
    assert!(chi_square_two_sample(&g, &u) > 0.01);
}

#[test]
fn flatten_and_split_preserve_the_unitary() {
    for seed in 0..30 {
        let gs = if seed % 2 == 0 { GateSet::nisq() } else { GateSet::iontrap() };
        let c = random_circuit(2 + seed as usize % 4, 40, &gs, seed).unwrap();
        let u = circuit_unitary(&c).unwrap();
        let layout = schedule(&c);
        assert!(equal_up_to_phase(&u, &circuit_unitary(&flatten(&c, &layout)).unwrap(), 1e-10).is_some());
        let d = layout.depth();
        let win = Window::new(0, c.width() / 2, d / 4, d / 2);
        if let Some(seg) = split(&c, &win) {
            assert!(equal_up_to_phase(&u, &circuit_unitary(&seg.concat()).unwrap(), 1e-10).is_some());
        }
    }
}

#[test]
fn generated_samples_are_mostly_positive() {
    let gs = GateSet::nisq();
    let g = pi_quarter_grid();
    let opts = BuildOptions::default();
    let dbs = DbSet::new(vec![build_db(&gs, 1, &g, 3, &opts).unwrap(), build_db(&gs, 2, &g, 2, &opts).unwrap()]).unwrap();
    let red = Reducer {
        gate_set: &gs,
        dbs: &dbs,
        synthesis: None,
        phase_tol: DEFAULT_PHASE_TOL,
    };
    let cfg = DatasetConfig {
        seed: 3,
        ..DatasetConfig::new(gs.clone())
    };
    let n = 300;
    let positive = (0..n).filter(|&i| generate_sample(&cfg, &red, i).unwrap().is_positive()).count();
    assert!(positive as f64 / n as f64 > 0.9, "{positive}/{n}");
}
