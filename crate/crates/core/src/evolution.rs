//! Time evolution under time-dependent Hamiltonians and the TFIM adiabatic
//! benchmark.
//!
//! The interpolating Hamiltonian is
//! `H(s) = (1 - s) * (-sum X_i) + s * (-sum (Z_i Z_{i+1} + h X_i))`.
//! Dense stepping diagonalizes `H(s)` every step; Trotter stepping emits a
//! circuit of fused one- and two-qubit gates and runs it through the kernels.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{execute, Backend, Circuit, GateOp};
use crate::error::{Error, Result};
use crate::kernels::GateMatrix;
use crate::statevec::StateVector;

/// Largest register for dense Hamiltonians.
pub const DENSE_MAX_QUBITS: usize = 14;

const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    fn matrix(self) -> [[Complex64; 2]; 2] {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            Pauli::X => [[o, l], [l, o]],
            Pauli::Y => [[o, -i], [i, o]],
            Pauli::Z => [[l, o], [o, -l]],
        }
    }
}

/// `coeff * P_a P_b ...` on at most two qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub ops: Vec<(usize, Pauli)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Hamiltonian {
    Dense(DMatrix<Complex64>),
    LocalSum {
        nqubits: usize,
        terms: Vec<PauliTerm>,
    },
}

fn dense_cap(nqubits: usize) -> Result<()> {
    if nqubits > DENSE_MAX_QUBITS {
        return Err(Error::CapacityExceeded {
            what: "dense hamiltonian qubits",
            requested: nqubits,
            cap: DENSE_MAX_QUBITS,
        });
    }
    Ok(())
}

impl Hamiltonian {
    pub fn local_sum(nqubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        for t in &terms {
            if t.ops.len() > 2 {
                return Err(Error::InvalidArgument("terms act on at most two qubits".into()));
            }
            if let Some(&(q, _)) = t.ops.iter().find(|(q, _)| *q >= nqubits) {
                return Err(Error::IndexOutOfRange {
                    index: q,
                    size: nqubits,
                });
            }
        }
        Ok(Hamiltonian::LocalSum { nqubits, terms })
    }

    pub fn nqubits(&self) -> usize {
        match self {
            Hamiltonian::Dense(m) => m.nrows().trailing_zeros() as usize,
            Hamiltonian::LocalSum { nqubits, .. } => *nqubits,
        }
    }

    /// Dense matrix; local sums are materialized as sums of Kronecker
    /// products with qubit 0 as the leftmost factor.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        match self {
            Hamiltonian::Dense(m) => Ok(m.clone()),
            Hamiltonian::LocalSum { nqubits, terms } => {
                dense_cap(*nqubits)?;
                let dim = 1usize << nqubits;
                let mut out = DMatrix::<Complex64>::zeros(dim, dim);
                let id = DMatrix::<Complex64>::identity(2, 2);
                for term in terms {
                    let mut acc = DMatrix::<Complex64>::from_element(1, 1, Complex64::new(term.coeff, 0.0));
                    for q in 0..*nqubits {
                        // several ops on the same qubit multiply
                        let mut factor = id.clone();
                        for &(tq, p) in &term.ops {
                            if tq == q {
                                let m = p.matrix();
                                factor = DMatrix::from_fn(2, 2, |r, c| m[r][c]) * factor;
                            }
                        }
                        acc = acc.kronecker(&factor);
                    }
                    out += acc;
                }
                Ok(out)
            }
        }
    }

    /// `<psi|H|psi>` (real part).
    pub fn expectation(&self, state: &StateVector<f64>) -> Result<f64> {
        if state.nqubits() != self.nqubits() {
            return Err(Error::ShapeMismatch("hamiltonian and state sizes differ".into()));
        }
        let amps = state.amplitudes();
        match self {
            Hamiltonian::Dense(m) => {
                let psi = DVector::from_column_slice(amps);
                Ok(psi.dotc(&(m * &psi)).re)
            }
            Hamiltonian::LocalSum { nqubits, terms } => {
                let n = *nqubits;
                let mut total = 0.0;
                for term in terms {
                    total += term.coeff * pauli_expectation(amps, n, &term.ops).re;
                }
                Ok(total)
            }
        }
    }
}

/// `<psi|P|psi>` for a Pauli string, using
/// `P|j> = i^{#Y} (-1)^{popcount(j & zy)} |j ^ xy>`.
fn pauli_expectation(amps: &[Complex64], nqubits: usize, ops: &[(usize, Pauli)]) -> Complex64 {
    let mut flip = 0usize;
    let mut sign_mask = 0usize;
    let mut phase = Complex64::new(1.0, 0.0);
    for &(q, p) in ops {
        let bit = 1usize << (nqubits - 1 - q);
        match p {
            Pauli::X => flip ^= bit,
            Pauli::Z => sign_mask ^= bit,
            Pauli::Y => {
                // Y = i X Z
                flip ^= bit;
                sign_mask ^= bit;
                phase *= Complex64::new(0.0, 1.0);
            }
        }
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, a) in amps.iter().enumerate() {
        let sign = if (j & sign_mask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        acc += amps[j ^ flip].conj() * a * sign;
    }
    acc * phase
}

/// Transverse-field Ising model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfimSpec {
    pub nqubits: usize,
    pub h: f64,
    pub periodic: bool,
}

impl TfimSpec {
    /// `h = 1`, periodic ring.
    pub fn new(nqubits: usize) -> Result<Self> {
        Self::with_field(nqubits, 1.0, true)
    }

    pub fn with_field(nqubits: usize, h: f64, periodic: bool) -> Result<Self> {
        if nqubits < 2 {
            return Err(Error::InvalidArgument("TFIM needs at least two qubits".into()));
        }
        Ok(Self { nqubits, h, periodic })
    }

    /// Nearest-neighbour bonds; on a periodic ring of two qubits the bond
    /// (1, 0) duplicates (0, 1), doubling the coupling.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let n = self.nqubits;
        let mut b: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        if self.periodic {
            b.push((n - 1, 0));
        }
        b
    }

    /// Coefficient of each `X_i` in `H(s)`.
    fn x_coeff(&self, s: f64) -> f64 {
        -(1.0 - s) - s * self.h
    }

    /// Coefficient of each `Z_i Z_j` bond in `H(s)`.
    fn zz_coeff(&self, s: f64) -> f64 {
        -s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianForm {
    Dense,
    LocalSum,
}

/// `H(s)` for the TFIM interpolation. The dense form is assembled directly
/// from basis-state bit operations.
pub fn tfim_hamiltonian(spec: &TfimSpec, s: f64, form: HamiltonianForm) -> Result<Hamiltonian> {
    let n = spec.nqubits;
    let cx = spec.x_coeff(s);
    let czz = spec.zz_coeff(s);
    match form {
        HamiltonianForm::LocalSum => {
            let mut terms: Vec<PauliTerm> = spec
                .bonds()
                .into_iter()
                .map(|(a, b)| PauliTerm {
                    coeff: czz,
                    ops: vec![(a, Pauli::Z), (b, Pauli::Z)],
                })
                .collect();
            terms.extend((0..n).map(|q| PauliTerm {
                coeff: cx,
                ops: vec![(q, Pauli::X)],
            }));
            Hamiltonian::local_sum(n, terms)
        }
        HamiltonianForm::Dense => {
            dense_cap(n)?;
            let dim = 1usize << n;
            let bonds = spec.bonds();
            let mut m = DMatrix::<Complex64>::zeros(dim, dim);
            for i in 0..dim {
                let z = |q: usize| if (i >> (n - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
                let diag: f64 = bonds.iter().map(|&(a, b)| czz * z(a) * z(b)).sum();
                m[(i, i)] += Complex64::new(diag, 0.0);
                for q in 0..n {
                    m[(i ^ (1 << (n - 1 - q)), i)] += Complex64::new(cx, 0.0);
                }
            }
            Ok(Hamiltonian::Dense(m))
        }
    }
}

/// Hermitian eigendecomposition, using the real symmetric solver when the
/// matrix has no imaginary part.
enum Eigen {
    Real(SymmetricEigen<f64, nalgebra::Dyn>),
    Complex(SymmetricEigen<Complex64, nalgebra::Dyn>),
}

fn hermitian_eigen(m: &DMatrix<Complex64>) -> Result<Eigen> {
    let dev = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > HERMITIAN_TOL {
        return Err(Error::NonHermitian(dev));
    }
    if m.iter().all(|z| z.im == 0.0) {
        Ok(Eigen::Real(SymmetricEigen::new(m.map(|z| z.re))))
    } else {
        Ok(Eigen::Complex(SymmetricEigen::new(m.clone())))
    }
}

/// Smallest eigenvalue of a dense Hermitian matrix.
pub fn ground_energy(h: &Hamiltonian) -> Result<f64> {
    let m = h.to_dense()?;
    let eig = hermitian_eigen(&m)?;
    let values: Vec<f64> = match &eig {
        Eigen::Real(e) => e.eigenvalues.iter().copied().collect(),
        Eigen::Complex(e) => e.eigenvalues.iter().copied().collect(),
    };
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

/// `psi <- V exp(-i Lambda dt) V^dag psi` with `H = V Lambda V^dag`.
pub fn dense_step(state: &mut StateVector<f64>, h: &Hamiltonian, dt: f64) -> Result<()> {
    let n = state.nqubits();
    dense_cap(n)?;
    if h.nqubits() != n {
        return Err(Error::ShapeMismatch("hamiltonian and state sizes differ".into()));
    }
    let m = h.to_dense()?;
    let eig = hermitian_eigen(&m)?;
    if dt == 0.0 {
        return Ok(());
    }
    let psi = DVector::from_column_slice(state.amplitudes());
    let evolved = match eig {
        Eigen::Real(e) => {
            let v = e.eigenvectors.map(|x| Complex64::new(x, 0.0));
            let mut w = v.transpose() * psi;
            for (wi, &lambda) in w.iter_mut().zip(e.eigenvalues.iter()) {
                *wi *= Complex64::from_polar(1.0, -lambda * dt);
            }
            v * w
        }
        Eigen::Complex(e) => {
            let v = &e.eigenvectors;
            let mut w = v.adjoint() * psi;
            for (wi, &lambda) in w.iter_mut().zip(e.eigenvalues.iter()) {
                *wi *= Complex64::from_polar(1.0, -lambda * dt);
            }
            v * w
        }
    };
    state.amplitudes_mut().copy_from_slice(evolved.as_slice());
    Ok(())
}

/// `exp(-i theta Z Z)` as a two-qubit diagonal.
fn zz_rotation(theta: f64) -> GateMatrix {
    let a = Complex64::from_polar(1.0, -theta);
    let b = Complex64::from_polar(1.0, theta);
    let o = Complex64::new(0.0, 0.0);
    let entries = vec![a, o, o, o, o, b, o, o, o, o, b, o, o, o, o, a];
    GateMatrix::new_unitary(2, entries).expect("diagonal phases are unitary")
}

/// `exp(-i phi X)`.
fn x_rotation(phi: f64) -> GateMatrix {
    let (s, c) = phi.sin_cos();
    let entries = vec![
        Complex64::new(c, 0.0),
        Complex64::new(0.0, -s),
        Complex64::new(0.0, -s),
        Complex64::new(c, 0.0),
    ];
    GateMatrix::new_unitary(1, entries).expect("x rotations are unitary")
}

/// One second-order symmetric Trotter step of `H(s)` over `dt`:
/// even-bond ZZ half step, odd-bond ZZ half step, full X layer, odd-bond ZZ
/// half step, even-bond ZZ half step. Bond `i` joins qubits `i` and `i + 1`
/// (mod n on a ring); its parity decides the layer.
pub fn trotter_step_circuit(spec: &TfimSpec, s: f64, dt: f64) -> Result<Circuit> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("schedule value {s} outside [0, 1]")));
    }
    let bonds = spec.bonds();
    let half = zz_rotation(spec.zz_coeff(s) * dt / 2.0);
    let layer = |parity: usize, c: &mut Circuit| -> Result<()> {
        for (i, &(a, b)) in bonds.iter().enumerate() {
            if i % 2 == parity {
                c.push(GateOp::fused(half.clone(), vec![a, b]))?;
            }
        }
        Ok(())
    };
    let mut c = Circuit::new(spec.nqubits);
    layer(0, &mut c)?;
    layer(1, &mut c)?;
    let x = x_rotation(spec.x_coeff(s) * dt);
    for q in 0..spec.nqubits {
        c.push(GateOp::fused(x.clone(), vec![q]))?;
    }
    layer(1, &mut c)?;
    layer(0, &mut c)?;
    Ok(c)
}

/// `s(t / T)`; must satisfy `s(0) = 0`, `s(1) = 1` and be non-decreasing.
#[derive(Clone)]
pub enum Schedule {
    Linear,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Schedule::Linear => f.write_str("Linear"),
            Schedule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Schedule {
    fn eval(&self, fraction: f64) -> f64 {
        match self {
            Schedule::Linear => fraction,
            Schedule::Custom(f) => f(fraction),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Linear => "linear",
            Schedule::Custom(_) => "custom",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdiabaticSchedule {
    total_time: f64,
    dt: f64,
    schedule: Schedule,
}

const SCHEDULE_CHECK_POINTS: usize = 1001;

impl AdiabaticSchedule {
    pub fn new(total_time: f64, dt: f64, schedule: Schedule) -> Result<Self> {
        if !(total_time > 0.0 && total_time.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument("T and dt must be positive".into()));
        }
        let tol = 1e-12;
        if schedule.eval(0.0).abs() > tol || (schedule.eval(1.0) - 1.0).abs() > tol {
            return Err(Error::InvalidArgument("schedule must satisfy s(0)=0 and s(1)=1".into()));
        }
        let mut prev = schedule.eval(0.0);
        for k in 1..SCHEDULE_CHECK_POINTS {
            let v = schedule.eval(k as f64 / (SCHEDULE_CHECK_POINTS - 1) as f64);
            if v.is_nan() || v < prev - tol {
                return Err(Error::InvalidArgument("schedule must be non-decreasing".into()));
            }
            prev = v;
        }
        Ok(Self {
            total_time,
            dt,
            schedule,
        })
    }

    pub fn linear(total_time: f64, dt: f64) -> Result<Self> {
        Self::new(total_time, dt, Schedule::Linear)
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Schedule value at time `t`, clamped to `[0, 1]`.
    pub fn s(&self, t: f64) -> f64 {
        self.schedule.eval((t / self.total_time).clamp(0.0, 1.0)).clamp(0.0, 1.0)
    }

    /// `(t_end, step)` pairs covering `[0, T]`: `ceil(T/dt)` steps of `dt`,
    /// the last one shortened to land exactly on `T`.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let nsteps = (self.total_time / self.dt - 1e-9).ceil().max(1.0) as usize;
        (0..nsteps)
            .map(|k| {
                let start = k as f64 * self.dt;
                let end = if k + 1 == nsteps {
                    self.total_time
                } else {
                    (k + 1) as f64 * self.dt
                };
                (end, end - start)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionMethod {
    Dense,
    Trotter,
}

/// Evolves `|+>^n` (ground state of `-sum X`) along the schedule. Each step
/// uses `H(s(t_end))` of that step.
pub fn adiabatic_evolve(
    spec: &TfimSpec,
    schedule: &AdiabaticSchedule,
    method: EvolutionMethod,
    backend: Backend,
) -> Result<StateVector<f64>> {
    if method == EvolutionMethod::Dense {
        dense_cap(spec.nqubits)?;
    }
    let mut state = StateVector::<f64>::plus_state(spec.nqubits)?;
    for (t, step) in schedule.steps() {
        let s = schedule.s(t);
        match method {
            EvolutionMethod::Dense => {
                let h = tfim_hamiltonian(spec, s, HamiltonianForm::Dense)?;
                dense_step(&mut state, &h, step)?;
            }
            EvolutionMethod::Trotter => {
                let c = trotter_step_circuit(spec, s, step)?;
                execute(&c, &mut state, backend)?;
            }
        }
    }
    Ok(state)
}
