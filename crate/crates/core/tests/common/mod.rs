#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use svsim::{Circuit, GateKind, GateMatrix, GateOp, StateVector};

/// Normalized state with uniform random real and imaginary parts.
pub fn random_state(rng: &mut impl Rng, nqubits: usize) -> StateVector<f64> {
    let amps: Vec<Complex64> = (0..1usize << nqubits)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(amps.into_iter().map(|z| z / norm).collect()).unwrap()
}

/// Unitary from the QR factorization of a random complex matrix.
pub fn random_unitary(rng: &mut impl Rng, ntargets: usize) -> GateMatrix {
    let dim = 1usize << ntargets;
    let m = DMatrix::<Complex64>::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let q = m.qr().q();
    let entries: Vec<Complex64> = (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c))).map(|(r, c)| q[(r, c)]).collect();
    GateMatrix::new_unitary(ntargets, entries).unwrap()
}

fn angle(rng: &mut impl Rng) -> f64 {
    rng.random_range(-PI..PI)
}

/// Random op on an `nqubits` register, with up to `max_extra_controls`
/// controls on top of those the gate kind implies.
pub fn random_op(rng: &mut impl Rng, nqubits: usize, max_extra_controls: usize) -> GateOp {
    let mut qubits: Vec<usize> = (0..nqubits).collect();
    qubits.shuffle(rng);
    let kind = loop {
        let kind = match rng.random_range(0..22) {
            0 => GateKind::H,
            1 => GateKind::X,
            2 => GateKind::Y,
            3 => GateKind::Z,
            4 => GateKind::S,
            5 => GateKind::Sdg,
            6 => GateKind::T,
            7 => GateKind::Tdg,
            8 => GateKind::Rx(angle(rng)),
            9 => GateKind::Ry(angle(rng)),
            10 => GateKind::Rz(angle(rng)),
            11 => GateKind::U1(angle(rng)),
            12 => GateKind::U2(angle(rng), angle(rng)),
            13 => GateKind::U3(angle(rng), angle(rng), angle(rng)),
            14 => GateKind::Cx,
            15 => GateKind::Cz,
            16 => GateKind::Cu1(angle(rng)),
            17 => GateKind::Crz(angle(rng)),
            18 => GateKind::Swap,
            k => {
                let ntargets = 1 + (k - 19).min(nqubits.min(3) - 1);
                GateKind::Fused(random_unitary(rng, ntargets))
            }
        };
        if kind.num_targets() + kind.num_controls() <= nqubits {
            break kind;
        }
    };
    let nt = kind.num_targets();
    let free = nqubits - nt - kind.num_controls();
    let nc = kind.num_controls() + rng.random_range(0..=max_extra_controls.min(free));
    let targets = qubits[..nt].to_vec();
    let controls = qubits[nt..nt + nc].to_vec();
    GateOp::new(kind, targets, controls).unwrap()
}

pub fn random_circuit(rng: &mut impl Rng, nqubits: usize, ngates: usize, max_extra_controls: usize) -> Circuit {
    let mut c = Circuit::new(nqubits);
    for _ in 0..ngates {
        c.push(random_op(rng, nqubits, max_extra_controls)).unwrap();
    }
    c
}

pub fn max_deviation(a: &StateVector<f64>, b: &StateVector<f64>) -> f64 {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
