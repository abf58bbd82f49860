//! Greedy two-qubit gate fusion.
//!
//! Ops are swept in order while each qubit keeps a pointer to the group that
//! last touched it. A gate joins the group its qubits point to when the union
//! of qubits stays within two; a one-qubit group on the partner qubit is
//! absorbed. Otherwise a new group claims the gate's qubits, and the groups it
//! displaced stay open on their remaining qubit. Gates on three or more qubits
//! pass through unchanged and block the qubits they touch.
//!
//! Groups are emitted in dependency order (earliest-created first among ready
//! groups), each as one `Fused` op whose matrix is the ordered product of its
//! members.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::circuit::{Circuit, GateOp};
use crate::error::{Error, Result};
use crate::kernels::GateMatrix;

/// Ops that act only on `qubits` (one or two labels). `qubits[0]` is the most
/// significant bit of the fused matrix row index.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionGroup {
    pub qubits: Vec<usize>,
    pub members: Vec<GateOp>,
}

#[derive(Debug)]
enum Node {
    Group(FusionGroup),
    Pass(GateOp),
    /// A group merged into another.
    Merged(usize),
}

/// Fuses runs of one- and two-qubit gates. Only `max_qubits == 2` is supported.
pub fn fuse(circuit: &Circuit, max_qubits: usize) -> Result<Circuit> {
    if max_qubits != 2 {
        return Err(Error::UnsupportedMaxQubits(max_qubits));
    }
    let n = circuit.nqubits();
    let mut nodes: Vec<Node> = Vec::new();
    let mut pointer: Vec<Option<usize>> = vec![None; n];
    // node that each input op was placed in, before merge resolution
    let mut placement: Vec<usize> = Vec::with_capacity(circuit.gate_count());

    let open_group = |nodes: &Vec<Node>, p: Option<usize>| -> Option<usize> {
        p.filter(|&i| matches!(nodes[i], Node::Group(_)))
    };

    for op in circuit.ops() {
        let qs: Vec<usize> = op.qubits().collect();
        let idx = match qs.len() {
            1 => {
                let q = qs[0];
                match open_group(&nodes, pointer[q]) {
                    Some(g) => g,
                    None => {
                        nodes.push(Node::Group(FusionGroup {
                            qubits: vec![q],
                            members: Vec::new(),
                        }));
                        pointer[q] = Some(nodes.len() - 1);
                        nodes.len() - 1
                    }
                }
            }
            2 => {
                let (a, b) = (qs[0], qs[1]);
                let ga = open_group(&nodes, pointer[a]);
                let gb = open_group(&nodes, pointer[b]);
                let width = |i: Option<usize>| match i.map(|i| &nodes[i]) {
                    Some(Node::Group(g)) => g.qubits.len(),
                    _ => 0,
                };
                let (wa, wb) = (width(ga), width(gb));
                let target = if let Some(g) = ga.filter(|_| ga == gb) {
                    g
                } else if wa == 1 && wb == 1 {
                    let (keep, gone) = if ga < gb { (ga.unwrap(), gb.unwrap()) } else { (gb.unwrap(), ga.unwrap()) };
                    let absorbed = match std::mem::replace(&mut nodes[gone], Node::Merged(keep)) {
                        Node::Group(g) => g,
                        _ => unreachable!("width 1 implies a group"),
                    };
                    if let Node::Group(g) = &mut nodes[keep] {
                        g.qubits.extend(absorbed.qubits);
                        g.members.extend(absorbed.members);
                    }
                    keep
                } else if wa == 1 || wb == 1 {
                    let (g, other) = if wa == 1 { (ga.unwrap(), b) } else { (gb.unwrap(), a) };
                    if let Node::Group(grp) = &mut nodes[g] {
                        grp.qubits.push(other);
                    }
                    g
                } else {
                    nodes.push(Node::Group(FusionGroup {
                        qubits: vec![a, b],
                        members: Vec::new(),
                    }));
                    nodes.len() - 1
                };
                pointer[a] = Some(target);
                pointer[b] = Some(target);
                target
            }
            _ => {
                nodes.push(Node::Pass(op.clone()));
                let i = nodes.len() - 1;
                for &q in &qs {
                    pointer[q] = Some(i);
                }
                i
            }
        };
        if let Node::Group(g) = &mut nodes[idx] {
            g.members.push(op.clone());
        }
        placement.push(idx);
    }

    let resolve = |mut i: usize| {
        while let Node::Merged(j) = nodes[i] {
            i = j;
        }
        i
    };

    // Dependency edges from consecutive distinct nodes on each qubit wire.
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    let mut indegree = vec![0usize; nodes.len()];
    let mut last: Vec<Option<usize>> = vec![None; n];
    for (op, &placed) in circuit.ops().iter().zip(&placement) {
        let node = resolve(placed);
        for q in op.qubits() {
            if let Some(prev) = last[q] {
                if prev != node && !succ[prev].contains(&node) {
                    succ[prev].push(node);
                    indegree[node] += 1;
                }
            }
            last[q] = Some(node);
        }
    }

    let mut ready: BinaryHeap<Reverse<usize>> = (0..nodes.len())
        .filter(|&i| !matches!(nodes[i], Node::Merged(_)) && indegree[i] == 0)
        .map(Reverse)
        .collect();
    let live = nodes.iter().filter(|n| !matches!(n, Node::Merged(_))).count();
    let mut out = Circuit::new(n);
    let mut emitted = 0;
    while let Some(Reverse(i)) = ready.pop() {
        emitted += 1;
        match &nodes[i] {
            Node::Group(g) => out.push(GateOp::fused(group_matrix(g)?, g.qubits.clone()))?,
            Node::Pass(op) => out.push(op.clone())?,
            Node::Merged(_) => unreachable!("merged nodes are never ready"),
        }
        for &s in &succ[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(Reverse(s));
            }
        }
    }
    if emitted != live {
        return Err(Error::InvalidArgument(
            "fusion produced a cyclic group dependency".into(),
        ));
    }
    for &(q, c) in circuit.measurements() {
        out.add_measurement(q, c)?;
    }
    Ok(out)
}

/// Embeds `matrix`, written over `op_qubits` (first = most significant), into
/// the space of `group_qubits`, acting as identity on the rest.
fn embed(matrix: &GateMatrix, op_qubits: &[usize], group_qubits: &[usize]) -> Result<GateMatrix> {
    let k = group_qubits.len();
    let l = op_qubits.len();
    let positions: Vec<usize> = op_qubits
        .iter()
        .map(|q| {
            group_qubits
                .iter()
                .position(|g| g == q)
                .ok_or_else(|| Error::InvalidArgument(format!("qubit {q} is not in the group")))
        })
        .collect::<Result<_>>()?;
    let acted: usize = positions.iter().map(|p| 1 << (k - 1 - p)).sum();
    let sub = |x: usize| -> usize {
        positions
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &p)| acc | (((x >> (k - 1 - p)) & 1) << (l - 1 - j)))
    };
    let dim = 1usize << k;
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            if r & !acted == c & !acted {
                entries[r * dim + c] = matrix.get(sub(r), sub(c));
            }
        }
    }
    GateMatrix::new(k, entries)
}

/// Ordered product of the members' full matrices (later members on the left),
/// in the group's qubit order.
pub fn group_matrix(group: &FusionGroup) -> Result<GateMatrix> {
    let mut acc = GateMatrix::identity(group.qubits.len());
    for op in &group.members {
        let qs: Vec<usize> = op.qubits().collect();
        let full = embed(&op.full_matrix()?, &qs, &group.qubits)?;
        acc = full.matmul(&acc)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{gen_bv, gen_qft, gen_variational};
    use crate::circuit::{gate_matrix, GateKind};

    #[test]
    fn single_member_groups() {
        let h = FusionGroup {
            qubits: vec![0],
            members: vec![GateOp::single(GateKind::H, 0)],
        };
        assert!(group_matrix(&h).unwrap().max_abs_diff(&gate_matrix(&GateKind::H)) == 0.0);
        let xx = FusionGroup {
            qubits: vec![0],
            members: vec![GateOp::single(GateKind::X, 0), GateOp::single(GateKind::X, 0)],
        };
        assert_eq!(group_matrix(&xx).unwrap().max_abs_diff(&GateMatrix::identity(1)), 0.0);
    }

    #[test]
    fn ry_angles_add() {
        let (a, b) = (0.37, -1.21);
        let g = FusionGroup {
            qubits: vec![3],
            members: vec![GateOp::single(GateKind::Ry(a), 3), GateOp::single(GateKind::Ry(b), 3)],
        };
        // oracle: RY(b) * RY(a) as a plain 2x2 product equals RY(a + b)
        let prod = gate_matrix(&GateKind::Ry(b)).matmul(&gate_matrix(&GateKind::Ry(a))).unwrap();
        assert!(prod.max_abs_diff(&gate_matrix(&GateKind::Ry(a + b))) <= 1e-12);
        assert!(group_matrix(&g).unwrap().max_abs_diff(&gate_matrix(&GateKind::Ry(a + b))) <= 1e-12);
    }

    #[test]
    fn embedding_order() {
        // X on the second group qubit is I (x) X
        let g = FusionGroup {
            qubits: vec![4, 1],
            members: vec![GateOp::single(GateKind::X, 1)],
        };
        let m = group_matrix(&g).unwrap();
        assert_eq!(m.get(1, 0), Complex64::new(1.0, 0.0));
        assert_eq!(m.get(3, 2), Complex64::new(1.0, 0.0));
        // CX with control on the second group qubit
        let g = FusionGroup {
            qubits: vec![0, 1],
            members: vec![GateOp::controlled(GateKind::Cx, 1, 0)],
        };
        let m = group_matrix(&g).unwrap();
        // |01> <-> |11>
        assert_eq!(m.get(3, 1), Complex64::new(1.0, 0.0));
        assert_eq!(m.get(1, 3), Complex64::new(1.0, 0.0));
        assert_eq!(m.get(0, 0), Complex64::new(1.0, 0.0));
        assert_eq!(m.get(2, 2), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn rejects_other_widths() {
        assert!(matches!(
            fuse(&gen_qft(3), 3),
            Err(Error::UnsupportedMaxQubits(3))
        ));
    }

    #[test]
    fn benchmark_circuit_counts() {
        let f = fuse(&gen_variational(30, 0.1).unwrap(), 2).unwrap();
        assert_eq!((f.gate_count(), f.depth()), (30, 2));
        let f = fuse(&gen_qft(30), 2).unwrap();
        assert_eq!((f.gate_count(), f.depth()), (450, 58));
        let f = fuse(&gen_bv(30).unwrap(), 2).unwrap();
        assert_eq!((f.gate_count(), f.depth()), (29, 29));
    }

    #[test]
    fn passthrough_of_wide_gates() {
        let mut c = Circuit::new(3);
        c.push(GateOp::single(GateKind::H, 0)).unwrap();
        c.push(GateOp::new(GateKind::Z, vec![2], vec![0, 1]).unwrap()).unwrap();
        c.push(GateOp::single(GateKind::H, 0)).unwrap();
        let f = fuse(&c, 2).unwrap();
        assert_eq!(f.gate_count(), 3);
        assert_eq!(f.ops()[1], c.ops()[1]);
    }

    #[test]
    fn idempotent_counts() {
        for c in [gen_qft(12), gen_bv(9).unwrap(), gen_variational(10, 0.3).unwrap()] {
            let once = fuse(&c, 2).unwrap();
            let twice = fuse(&once, 2).unwrap();
            assert_eq!(once.gate_count(), twice.gate_count());
            assert!(once.gate_count() <= c.gate_count());
        }
    }
}
