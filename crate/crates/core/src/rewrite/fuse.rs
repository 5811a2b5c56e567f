use std::f64::consts::TAU;

use crate::circuit::{Circuit, Gate, GateKind};

const NULL_ANGLE_TOL: f64 = 1e-12;

/// Whether a rotation by `theta` is the identity up to global phase.
pub fn is_null_angle(theta: f64) -> bool {
    let r = theta.rem_euclid(TAU);
    r < NULL_ANGLE_TOL || TAU - r < NULL_ANGLE_TOL
}

/// Wire-adjacent cancellation to a fixpoint: same-kind rotations on the same
/// operands merge by angle addition, null rotations disappear, and CZ pairs
/// on the same wires cancel. Two gates are adjacent when no other gate sits
/// between them on any wire they share.
pub fn fuse_local(c: &Circuit) -> Circuit {
    let mut cur = pass(c);
    loop {
        let next = pass(&cur);
        if next.len() == cur.len() && next == cur {
            return cur;
        }
        cur = next;
    }
}

fn pass(c: &Circuit) -> Circuit {
    let mut out: Vec<Option<Gate>> = Vec::with_capacity(c.len());
    // per-wire stack of indices into `out`
    let mut wires: Vec<Vec<usize>> = vec![Vec::new(); c.width()];

    for g in c.gates() {
        if let Some(theta) = g.angle {
            if is_null_angle(theta) {
                continue;
            }
        }
        let top = adjacent_top(g, &wires);
        match top {
            Some(j) if mergeable(out[j].as_ref().unwrap(), g) => {
                let prev = out[j].unwrap();
                let merged = match g.kind {
                    GateKind::CZ => None,
                    _ => {
                        let theta = prev.angle.unwrap() + g.angle.unwrap();
                        (!is_null_angle(theta)).then(|| prev.with_angle(theta))
                    }
                };
                match merged {
                    Some(m) => out[j] = Some(m),
                    None => {
                        out[j] = None;
                        for &q in prev.qubits() {
                            let popped = wires[q].pop();
                            debug_assert_eq!(popped, Some(j));
                        }
                    }
                }
            }
            _ => {
                let idx = out.len();
                out.push(Some(*g));
                for &q in g.qubits() {
                    wires[q].push(idx);
                }
            }
        }
    }
    let gates = out.into_iter().flatten().collect();
    Circuit::from_gates(c.width(), gates).expect("fusion keeps operands in range")
}

/// The previous gate if it is the most recent one on every wire of `g`.
fn adjacent_top(g: &Gate, wires: &[Vec<usize>]) -> Option<usize> {
    let mut top = None;
    for &q in g.qubits() {
        let t = *wires[q].last()?;
        match top {
            None => top = Some(t),
            Some(prev) if prev != t => return None,
            _ => {}
        }
    }
    top
}

fn mergeable(prev: &Gate, g: &Gate) -> bool {
    if prev.kind != g.kind {
        return false;
    }
    let same_operands = match g.kind.arity() {
        1 => prev.qubits() == g.qubits(),
        _ => {
            let (a, b) = (prev.qubits(), g.qubits());
            (a[0] == b[0] && a[1] == b[1]) || (a[0] == b[1] && a[1] == b[0])
        }
    };
    same_operands
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{random_circuit, GateSet};
    use crate::unitary::{circuit_unitary, equal_up_to_phase};

    fn circ(width: usize, gates: Vec<Gate>) -> Circuit {
        Circuit::from_gates(width, gates).unwrap()
    }

    #[test]
    fn opposite_rotations_vanish() {
        let c = circ(1, vec![Gate::rx(0, 0.7), Gate::rx(0, -0.7)]);
        assert!(fuse_local(&c).is_empty());
    }

    #[test]
    fn other_wires_do_not_block() {
        let c = circ(2, vec![Gate::rx(0, 0.5), Gate::rz(1, 0.2), Gate::rx(0, 0.25)]);
        assert_eq!(fuse_local(&c).gates(), &[Gate::rx(0, 0.75), Gate::rz(1, 0.2)]);
    }

    #[test]
    fn cz_pair_around_unrelated_rotation() {
        let c = circ(3, vec![Gate::cz(0, 1), Gate::rx(2, 0.4), Gate::cz(0, 1)]);
        assert_eq!(fuse_local(&c).gates(), &[Gate::rx(2, 0.4)]);
        // operand order does not matter for symmetric gates
        let c = circ(2, vec![Gate::cz(0, 1), Gate::cz(1, 0)]);
        assert!(fuse_local(&c).is_empty());
    }

    #[test]
    fn shared_wire_blocks_fusion() {
        let c = circ(2, vec![Gate::rz(0, 0.5), Gate::cz(0, 1), Gate::rz(0, 0.3)]);
        assert_eq!(fuse_local(&c), c);
        let c = circ(3, vec![Gate::cz(0, 1), Gate::rx(1, 0.1), Gate::cz(0, 1)]);
        assert_eq!(fuse_local(&c), c);
    }

    #[test]
    fn cascading_cancellation() {
        let c = circ(
            2,
            vec![Gate::cz(0, 1), Gate::rx(0, 0.9), Gate::rx(0, -0.9), Gate::cz(0, 1), Gate::rz(1, 0.1)],
        );
        assert_eq!(fuse_local(&c).gates(), &[Gate::rz(1, 0.1)]);
    }

    #[test]
    fn full_turn_is_dropped_and_raw_angles_kept() {
        let c = circ(1, vec![Gate::rz(0, 4.0), Gate::rz(0, TAU - 4.0)]);
        assert!(fuse_local(&c).is_empty());
        let c = circ(1, vec![Gate::rz(0, 4.0), Gate::rz(0, 4.0)]);
        assert_eq!(fuse_local(&c).gates(), &[Gate::rz(0, 8.0)]);
        assert!(fuse_local(&circ(2, vec![Gate::rxx(0, 1, 0.0)])).is_empty());
    }

    #[test]
    fn idempotent_and_unitary_preserving() {
        for seed in 0..60 {
            let gs = if seed % 2 == 0 { GateSet::nisq() } else { GateSet::iontrap() };
            let c = random_circuit(3, 40, &gs, seed).unwrap();
            // make fusions likely: snap angles to a coarse grid
            let snapped: Vec<Gate> = c
                .gates()
                .iter()
                .map(|g| match g.angle {
                    Some(a) => g.with_angle((a * 2.0 / std::f64::consts::PI).round() * std::f64::consts::PI / 2.0),
                    None => *g,
                })
                .collect();
            let c = circ(3, snapped);
            let f = fuse_local(&c);
            assert_eq!(fuse_local(&f), f);
            assert!(f.len() <= c.len());
            let (u, v) = (circuit_unitary(&c).unwrap(), circuit_unitary(&f).unwrap());
            assert!(equal_up_to_phase(&u, &v, 1e-10).is_some(), "seed {seed}");
        }
    }
}
