//! Gate library, circuit IR and execution.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, GateMatrix, ORACLE_MAX_QUBITS};
use crate::statevec::{Real, StateVector};

/// Named gates; angles in radians.
#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Rx(f64),
    Ry(f64),
    Rz(f64),
    U1(f64),
    U2(f64, f64),
    U3(f64, f64, f64),
    Cx,
    Cz,
    Cu1(f64),
    Crz(f64),
    Swap,
    /// Explicit matrix produced by fusion or time-evolution builders.
    Fused(GateMatrix),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn diag(a: Complex64, b: Complex64) -> Vec<Complex64> {
    vec![a, c(0.0, 0.0), c(0.0, 0.0), b]
}

impl GateKind {
    /// The OpenQASM 2.0 (`qelib1.inc`) name, `None` for fused gates.
    pub fn name(&self) -> Option<&'static str> {
        Some(match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rx(_) => "rx",
            GateKind::Ry(_) => "ry",
            GateKind::Rz(_) => "rz",
            GateKind::U1(_) => "u1",
            GateKind::U2(..) => "u2",
            GateKind::U3(..) => "u3",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Cu1(_) => "cu1",
            GateKind::Crz(_) => "crz",
            GateKind::Swap => "swap",
            GateKind::Fused(_) => return None,
        })
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            GateKind::Rx(t) | GateKind::Ry(t) | GateKind::Rz(t) => vec![t],
            GateKind::U1(l) | GateKind::Cu1(l) | GateKind::Crz(l) => vec![l],
            GateKind::U2(p, l) => vec![p, l],
            GateKind::U3(t, p, l) => vec![t, p, l],
            _ => Vec::new(),
        }
    }

    pub fn num_targets(&self) -> usize {
        match self {
            GateKind::Swap => 2,
            GateKind::Fused(m) => m.ntargets(),
            _ => 1,
        }
    }

    /// Controls implied by the gate name (`cx` has one).
    pub fn num_controls(&self) -> usize {
        match self {
            GateKind::Cx | GateKind::Cz | GateKind::Cu1(_) | GateKind::Crz(_) => 1,
            _ => 0,
        }
    }

    /// The matrix acting on the target qubits (for `cx` this is X).
    pub fn target_matrix(&self) -> GateMatrix {
        let h = FRAC_1_SQRT_2;
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let entries = match *self {
            GateKind::H => vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)],
            GateKind::X | GateKind::Cx => vec![zero, one, one, zero],
            GateKind::Y => vec![zero, c(0.0, -1.0), c(0.0, 1.0), zero],
            GateKind::Z | GateKind::Cz => diag(one, c(-1.0, 0.0)),
            GateKind::S => diag(one, c(0.0, 1.0)),
            GateKind::Sdg => diag(one, c(0.0, -1.0)),
            GateKind::T => diag(one, Complex64::from_polar(1.0, FRAC_PI_4)),
            GateKind::Tdg => diag(one, Complex64::from_polar(1.0, -FRAC_PI_4)),
            GateKind::Rx(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                vec![c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)]
            }
            GateKind::Ry(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                vec![c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)]
            }
            GateKind::Rz(t) | GateKind::Crz(t) => diag(
                Complex64::from_polar(1.0, -t / 2.0),
                Complex64::from_polar(1.0, t / 2.0),
            ),
            GateKind::U1(l) | GateKind::Cu1(l) => diag(one, Complex64::from_polar(1.0, l)),
            GateKind::U2(p, l) => return GateKind::U3(FRAC_PI_2, p, l).target_matrix(),
            GateKind::U3(t, p, l) => {
                let (s, co) = (t / 2.0).sin_cos();
                vec![
                    c(co, 0.0),
                    -Complex64::from_polar(s, l),
                    Complex64::from_polar(s, p),
                    Complex64::from_polar(co, p + l),
                ]
            }
            GateKind::Swap => {
                let mut m = vec![zero; 16];
                m[0] = one;
                m[4 + 2] = one;
                m[8 + 1] = one;
                m[15] = one;
                return GateMatrix::from_rows_unchecked(2, m);
            }
            GateKind::Fused(ref m) => return m.clone(),
        };
        GateMatrix::from_rows_unchecked(1, entries)
    }

    /// Diagonal phase `e^{i phi}` applied to `|1>` when the target matrix is
    /// `diag(1, e^{i phi})`.
    fn phase(&self) -> Option<Complex64> {
        match *self {
            GateKind::S => Some(c(0.0, 1.0)),
            GateKind::Sdg => Some(c(0.0, -1.0)),
            GateKind::T => Some(Complex64::from_polar(1.0, FRAC_PI_4)),
            GateKind::Tdg => Some(Complex64::from_polar(1.0, -FRAC_PI_4)),
            GateKind::U1(l) | GateKind::Cu1(l) => Some(Complex64::from_polar(1.0, l)),
            _ => None,
        }
    }
}

/// Conventional full unitary of a gate kind, controls first (most significant).
pub fn gate_matrix(kind: &GateKind) -> GateMatrix {
    kind.target_matrix()
        .controlled(kind.num_controls())
        .expect("built-in gates have at most two qubits")
}

/// One circuit element.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub controls: Vec<usize>,
}

impl GateOp {
    /// Checks target count and that no qubit repeats. Controlled kinds need at
    /// least their implied control; any kind may carry additional controls.
    pub fn new(kind: GateKind, targets: Vec<usize>, controls: Vec<usize>) -> Result<Self> {
        if targets.len() != kind.num_targets() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} expects {} targets, got {}",
                kind.name().unwrap_or("fused"),
                kind.num_targets(),
                targets.len()
            )));
        }
        if controls.len() < kind.num_controls() {
            return Err(Error::ShapeMismatch(format!(
                "{} expects a control qubit",
                kind.name().unwrap_or("fused")
            )));
        }
        let mut all: Vec<usize> = controls.iter().chain(&targets).copied().collect();
        all.sort_unstable();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::OverlappingQubits(w[0]));
        }
        Ok(Self {
            kind,
            targets,
            controls,
        })
    }

    pub fn single(kind: GateKind, target: usize) -> Self {
        debug_assert_eq!(kind.num_targets(), 1);
        debug_assert_eq!(kind.num_controls(), 0);
        Self {
            kind,
            targets: vec![target],
            controls: Vec::new(),
        }
    }

    /// A built-in one-control gate (`cx`, `cz`, `cu1`, `crz`).
    pub fn controlled(kind: GateKind, control: usize, target: usize) -> Self {
        debug_assert_eq!(kind.num_controls(), 1);
        assert_ne!(control, target, "control and target must differ");
        Self {
            kind,
            targets: vec![target],
            controls: vec![control],
        }
    }

    pub fn swap(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "swap needs two distinct qubits");
        Self {
            kind: GateKind::Swap,
            targets: vec![a, b],
            controls: Vec::new(),
        }
    }

    pub fn fused(matrix: GateMatrix, targets: Vec<usize>) -> Self {
        debug_assert_eq!(matrix.ntargets(), targets.len());
        Self {
            kind: GateKind::Fused(matrix),
            targets,
            controls: Vec::new(),
        }
    }

    /// Controls followed by targets.
    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.controls.iter().chain(&self.targets).copied()
    }

    pub fn num_qubits(&self) -> usize {
        self.controls.len() + self.targets.len()
    }

    /// Full matrix over [`GateOp::qubits`] order.
    pub fn full_matrix(&self) -> Result<GateMatrix> {
        self.kind.target_matrix().controlled(self.controls.len())
    }
}

/// Ordered gate list on a fixed register.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Circuit {
    nqubits: usize,
    ops: Vec<GateOp>,
    /// `(qubit, clbit)` pairs from `measure` statements.
    measurements: Vec<(usize, usize)>,
}

impl Circuit {
    pub fn new(nqubits: usize) -> Self {
        Self {
            nqubits,
            ops: Vec::new(),
            measurements: Vec::new(),
        }
    }

    pub fn nqubits(&self) -> usize {
        self.nqubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn measurements(&self) -> &[(usize, usize)] {
        &self.measurements
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        if let Some(q) = op.qubits().find(|&q| q >= self.nqubits) {
            return Err(Error::IndexOutOfRange {
                index: q,
                size: self.nqubits,
            });
        }
        self.ops.push(op);
        Ok(())
    }

    pub fn add_measurement(&mut self, qubit: usize, clbit: usize) -> Result<()> {
        if qubit >= self.nqubits {
            return Err(Error::IndexOutOfRange {
                index: qubit,
                size: self.nqubits,
            });
        }
        self.measurements.push((qubit, clbit));
        Ok(())
    }

    pub fn gate_count(&self) -> usize {
        self.ops.len()
    }

    /// As-soon-as-possible layer count: each op lands one layer after the
    /// latest op sharing a qubit with it.
    pub fn depth(&self) -> usize {
        let mut level = vec![0usize; self.nqubits];
        let mut depth = 0;
        for op in &self.ops {
            let layer = 1 + op.qubits().map(|q| level[q]).max().unwrap_or(0);
            for q in op.qubits() {
                level[q] = layer;
            }
            depth = depth.max(layer);
        }
        depth
    }

    /// Appends all ops of `other`.
    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.nqubits != self.nqubits {
            return Err(Error::ShapeMismatch("circuits on different registers".into()));
        }
        self.ops.extend(other.ops.iter().cloned());
        Ok(())
    }
}

/// How gates are applied to the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// In-place kernels with the specialized fast paths.
    InPlace,
    /// Full `2^n x 2^n` operator per gate; limited to small registers.
    Oracle,
    /// Out-of-place contraction into a new state vector per gate.
    Einsum,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::InPlace => "inplace",
            Backend::Oracle => "oracle",
            Backend::Einsum => "einsum",
        }
    }
}

/// Applies one op in place, routing Pauli, phase and swap gates to their
/// dedicated kernels.
pub fn apply_op<T: Real>(state: &mut StateVector<T>, op: &GateOp) -> Result<()> {
    let c = &op.controls;
    match &op.kind {
        GateKind::X | GateKind::Cx => kernels::apply_x(state, c, op.targets[0]),
        GateKind::Y => kernels::apply_y(state, c, op.targets[0]),
        GateKind::Z | GateKind::Cz => kernels::apply_z(state, c, op.targets[0]),
        GateKind::Swap => kernels::apply_swap(state, c, op.targets[0], op.targets[1]),
        kind => match kind.phase() {
            Some(phase) => kernels::apply_phase(state, c, op.targets[0], phase),
            None => kernels::apply_controlled_gate(state, &kind.target_matrix(), c, &op.targets),
        },
    }
}

/// Runs `circuit` on `state` with the chosen backend.
pub fn execute<T: Real>(circuit: &Circuit, state: &mut StateVector<T>, backend: Backend) -> Result<()> {
    if state.nqubits() != circuit.nqubits {
        return Err(Error::ShapeMismatch(format!(
            "{}-qubit circuit on a {}-qubit state",
            circuit.nqubits,
            state.nqubits()
        )));
    }
    match backend {
        Backend::InPlace => {
            for op in &circuit.ops {
                apply_op(state, op)?;
            }
        }
        Backend::Oracle => {
            if state.nqubits() > ORACLE_MAX_QUBITS {
                return Err(Error::CapacityExceeded {
                    what: "dense oracle qubits",
                    requested: state.nqubits(),
                    cap: ORACLE_MAX_QUBITS,
                });
            }
            for op in &circuit.ops {
                *state = kernels::dense_oracle_apply(
                    state,
                    &op.kind.target_matrix(),
                    &op.targets,
                    &op.controls,
                )?;
            }
        }
        Backend::Einsum => {
            for op in &circuit.ops {
                *state =
                    kernels::einsum_apply(state, &op.kind.target_matrix(), &op.targets, &op.controls)?;
            }
        }
    }
    Ok(())
}
