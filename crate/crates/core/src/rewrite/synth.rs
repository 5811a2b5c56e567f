//! Continuous-angle fallback: enumerate gate skeletons by increasing length
//! and fit their angles with Nelder-Mead on the Hilbert-Schmidt distance,
//! then polish the winner with Levenberg-Marquardt so the result is
//! equivalent to machine precision rather than just to the search tolerance.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng as _;

use super::db::{placements, DbSet};
use crate::circuit::{Circuit, Gate, GateSet};
use crate::rng_from_seed;
use crate::unitary::{gates_unitary, hs_distance_sqr, phase_alignment, Unitary};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisConfig {
    /// Longest skeleton tried.
    pub max_length: usize,
    /// Random starts per skeleton.
    pub restarts: usize,
    /// Hilbert-Schmidt distance accepted as a match.
    pub tolerance: f64,
    /// Objective evaluations per start.
    pub eval_budget: usize,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            max_length: 3,
            restarts: 4,
            tolerance: 1e-6,
            eval_budget: 1500,
            seed: 0,
        }
    }
}

/// A circuit over `gs` strictly shorter than `current_len` implementing `u`
/// up to global phase, or `None`. Database hits are tried first.
pub fn synthesize_shorter(
    u: &Unitary,
    gs: &GateSet,
    current_len: usize,
    cfg: &SynthesisConfig,
    db: Option<&DbSet>,
) -> Option<Circuit> {
    if let Some(hit) = db.and_then(|d| d.lookup(u)) {
        if hit.len() < current_len {
            return Some(hit.clone());
        }
    }
    if current_len == 0 || u.qubits() > 3 {
        return None;
    }
    let q = u.qubits();
    if q < gs.min_arity() {
        return None;
    }
    let moves = placements(gs, q, &[0.0]);
    let max_len = (current_len - 1).min(cfg.max_length);
    let tol_sqr = cfg.tolerance * cfg.tolerance;
    let mut rng = rng_from_seed(cfg.seed);

    for len in 0..=max_len {
        let mut found = None;
        for_each_skeleton(&moves, len, &mut |skel| {
            let gates: Vec<Gate> = skel.iter().map(|&i| moves[i]).collect();
            let n_params = gates.iter().filter(|g| g.kind.is_parameterized()).count();
            let fit = if n_params == 0 {
                let v = gates_unitary(q, &gates);
                (hs_distance_sqr(u, &v) <= tol_sqr).then(Vec::new)
            } else {
                (0..cfg.restarts.max(1)).find_map(|_| {
                    let x0: Vec<f64> = (0..n_params).map(|_| rng.gen_range(-PI..PI)).collect();
                    let (x, f) = nelder_mead(|t| hs_distance_sqr(u, &with_angles(q, &gates, t)), x0, cfg.eval_budget, tol_sqr);
                    (f <= tol_sqr).then_some(x)
                })
            };
            match fit {
                Some(theta) => {
                    let theta = polish(u, q, &gates, theta);
                    let placed = assign_angles(&gates, &theta);
                    found = Some(Circuit::from_gates(q, placed).expect("skeleton fits"));
                    true
                }
                None => false,
            }
        });
        if let Some(c) = found {
            let v = gates_unitary(q, c.gates());
            if hs_distance_sqr(u, &v) <= tol_sqr {
                return Some(c);
            }
        }
    }
    None
}

/// Calls `f` for each pruned skeleton of exactly `len` moves until it
/// returns true. Pruned: adjacent same-operand same-kind pairs (a shorter
/// skeleton covers them) and adjacent disjoint pairs out of index order
/// (a reordering covers them).
fn for_each_skeleton(moves: &[Gate], len: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    fn rec(moves: &[Gate], len: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == len {
            return f(cur);
        }
        for (i, m) in moves.iter().enumerate() {
            if let Some(&p) = cur.last() {
                let prev = &moves[p];
                if prev.kind == m.kind && prev.qubits() == m.qubits() {
                    continue;
                }
                if !prev.shares_qubit(m) && i < p {
                    continue;
                }
            }
            cur.push(i);
            if rec(moves, len, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(moves, len, &mut Vec::with_capacity(len), f)
}

fn assign_angles(gates: &[Gate], theta: &[f64]) -> Vec<Gate> {
    let mut it = theta.iter();
    gates
        .iter()
        .map(|g| if g.kind.is_parameterized() { g.with_angle(*it.next().unwrap()) } else { *g })
        .collect()
}

fn with_angles(q: usize, gates: &[Gate], theta: &[f64]) -> Unitary {
    gates_unitary(q, &assign_angles(gates, theta))
}

/// Minimizes `f` from `x0`. Returns the best point and value.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>, budget: usize, target: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += 0.5;
        simplex.push(x);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    let mut evals = n + 1;
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };

    while evals < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if vals[0] <= target || vals[n] - vals[0] < 1e-32 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let reflected = lerp(&centroid, &simplex[n], -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < vals[0] {
            let expanded = lerp(&centroid, &simplex[n], -2.0);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                simplex[n] = expanded;
                vals[n] = fe;
            } else {
                simplex[n] = reflected;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = reflected;
            vals[n] = fr;
        } else {
            let (towards, ft) = if fr < vals[n] { (&reflected, fr) } else { (&simplex[n], vals[n]) };
            let contracted = lerp(&centroid, towards, 0.5);
            let fc = f(&contracted);
            evals += 1;
            if fc < ft {
                simplex[n] = contracted;
                vals[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = lerp(&best, &simplex[i], 0.5);
                    vals[i] = f(&simplex[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}

/// Stacked real and imaginary parts of `u - e^{i phi} v(theta)` at the
/// optimal phase.
fn residual(u: &Unitary, q: usize, gates: &[Gate], theta: &[f64]) -> DVector<f64> {
    let v = with_angles(q, gates, theta);
    let rot = Complex64::from_polar(1.0, phase_alignment(u, &v));
    let n = u.data().len();
    let mut r = DVector::zeros(2 * n);
    for (i, (a, b)) in u.data().iter().zip(v.data()).enumerate() {
        let d = a - rot * b;
        r[2 * i] = d.re;
        r[2 * i + 1] = d.im;
    }
    r
}

fn polish(u: &Unitary, q: usize, gates: &[Gate], mut theta: Vec<f64>) -> Vec<f64> {
    let p = theta.len();
    if p == 0 {
        return theta;
    }
    let h = 1e-7;
    let mut r = residual(u, q, gates, &theta);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-6;
    for _ in 0..40 {
        if cost < 1e-28 {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), p);
        for j in 0..p {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let col = (residual(u, q, gates, &tp) - residual(u, q, gates, &tm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let jt = jac.transpose();
        let g = &jt * &r;
        let jtj = &jt * &jac;
        let mut improved = false;
        for _ in 0..8 {
            let mut a = jtj.clone();
            for k in 0..p {
                a[(k, k)] += lambda * (1.0 + jtj[(k, k)]);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let rc = residual(u, q, gates, &cand);
            let cc = rc.norm_squared();
            if cc < cost {
                theta = cand;
                r = rc;
                cost = cc;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    theta
}
