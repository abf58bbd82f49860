//! In-place gate application.
//!
//! Every kernel walks a "compressed" loop index `g` over the basis states with
//! the acted-on bits removed, re-inserts those bits with shifts and masks, and
//! updates the resulting amplitude tuple in place. Tuples for distinct `g` are
//! disjoint, so the loop is split into contiguous chunks across the rayon pool
//! without locking.
//!
//! Two reference routes live here as well: [`dense_oracle_apply`] builds the
//! full `2^n x 2^n` operator row by row, and [`einsum_apply`] contracts the gate
//! against a copy of the state into a freshly allocated output vector.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::{Complex, Complex64};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::statevec::{from_c64, Real, StateVector};

/// Most targets a single kernel call accepts.
pub const MAX_TARGETS: usize = 8;

/// Largest register accepted by [`dense_oracle_apply`].
pub const ORACLE_MAX_QUBITS: usize = 14;

static PARALLEL_THRESHOLD: AtomicUsize = AtomicUsize::new(14);

/// Registers with fewer qubits than this run single-threaded.
pub fn parallel_threshold() -> usize {
    PARALLEL_THRESHOLD.load(Ordering::Relaxed)
}

pub fn set_parallel_threshold(nqubits: usize) {
    PARALLEL_THRESHOLD.store(nqubits, Ordering::Relaxed);
}

/// A `2^ntargets x 2^ntargets` row-major complex matrix.
///
/// Row index bits follow the target list: the first listed target is the most
/// significant bit of the row index.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMatrix {
    ntargets: usize,
    entries: Vec<Complex64>,
    checked: bool,
}

impl GateMatrix {
    /// Accepts any square matrix of the right size. `checked` is false.
    pub fn new(ntargets: usize, entries: Vec<Complex64>) -> Result<Self> {
        if ntargets == 0 || ntargets > MAX_TARGETS {
            return Err(Error::TooManyTargets(ntargets, MAX_TARGETS));
        }
        let dim = 1usize << ntargets;
        if entries.len() != dim * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {dim}x{dim} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            ntargets,
            entries,
            checked: false,
        })
    }

    /// Like [`GateMatrix::new`] but verifies `max |G^dag G - I| <= 1e-10`.
    pub fn new_unitary(ntargets: usize, entries: Vec<Complex64>) -> Result<Self> {
        let mut m = Self::new(ntargets, entries)?;
        let dev = m.unitarity_deviation();
        if dev > 1e-10 {
            return Err(Error::ShapeMismatch(format!(
                "matrix is not unitary (deviation {dev:e})"
            )));
        }
        m.checked = true;
        Ok(m)
    }

    pub(crate) fn from_rows_unchecked(ntargets: usize, entries: Vec<Complex64>) -> Self {
        debug_assert_eq!(entries.len(), 1 << (2 * ntargets));
        Self {
            ntargets,
            entries,
            checked: true,
        }
    }

    pub fn identity(ntargets: usize) -> Self {
        let dim = 1usize << ntargets;
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self {
            ntargets,
            entries,
            checked: true,
        }
    }

    #[inline]
    pub fn ntargets(&self) -> usize {
        self.ntargets
    }

    #[inline]
    pub fn dim(&self) -> usize {
        1 << self.ntargets
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim() + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Whether unitarity was verified on construction.
    pub fn checked(&self) -> bool {
        self.checked
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &GateMatrix) -> Result<GateMatrix> {
        if rhs.ntargets != self.ntargets {
            return Err(Error::ShapeMismatch("matmul of unequal sizes".into()));
        }
        let dim = self.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for k in 0..dim {
                let a = self.entries[i * dim + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..dim {
                    out[i * dim + j] += a * rhs.entries[k * dim + j];
                }
            }
        }
        Ok(GateMatrix {
            ntargets: self.ntargets,
            entries: out,
            checked: false,
        })
    }

    pub fn adjoint(&self) -> GateMatrix {
        let dim = self.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                out[j * dim + i] = self.entries[i * dim + j].conj();
            }
        }
        GateMatrix {
            ntargets: self.ntargets,
            entries: out,
            checked: self.checked,
        }
    }

    /// `max |G^dag G - I|` over entries.
    pub fn unitarity_deviation(&self) -> f64 {
        let dim = self.dim();
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..dim {
                    acc += self.entries[k * dim + i].conj() * self.entries[k * dim + j];
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }

    /// Largest entrywise distance to `other`.
    pub fn max_abs_diff(&self, other: &GateMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// The `2^(c+m)` matrix that applies `self` when all `ncontrols` leading
    /// (most significant) qubits are 1 and the identity otherwise.
    pub fn controlled(&self, ncontrols: usize) -> Result<GateMatrix> {
        if ncontrols == 0 {
            return Ok(self.clone());
        }
        let total = ncontrols + self.ntargets;
        if total > MAX_TARGETS {
            return Err(Error::TooManyTargets(total, MAX_TARGETS));
        }
        let dim = 1usize << total;
        let small = self.dim();
        let offset = dim - small;
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..offset {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        for r in 0..small {
            for c in 0..small {
                entries[(offset + r) * dim + offset + c] = self.get(r, c);
            }
        }
        Ok(GateMatrix {
            ntargets: total,
            entries,
            checked: self.checked,
        })
    }
}

/// The pair of indices touched by iteration `g` of a one-target loop.
///
/// `i1` has bit `target_bit` cleared, `i2` has it set, and the two agree on
/// every other bit.
#[inline(always)]
pub fn index_pair(g: usize, target_bit: usize) -> (usize, usize) {
    let k = 1usize << target_bit;
    let i1 = ((g >> target_bit) << (target_bit + 1)) | (g & (k - 1));
    (i1, i1 | k)
}

/// Inserts a zero at each of `sorted_bits` (ascending) into `g`.
#[inline(always)]
pub fn insert_zero_bits(g: usize, sorted_bits: &[usize]) -> usize {
    let mut i = g;
    for &p in sorted_bits {
        let low = i & ((1usize << p) - 1);
        i = ((i >> p) << (p + 1)) | low;
    }
    i
}

/// The `2^m` indices for loop iteration `g` with targets at the strictly
/// increasing bit positions `target_bits`.
///
/// Tuple slot `r` sets bit `target_bits[j]` when bit `j` of `r` is set, which is
/// the gate-row order when targets are listed by qubit label.
pub fn multi_index_tuple(g: usize, target_bits: &[usize]) -> Result<Vec<usize>> {
    if target_bits.len() > MAX_TARGETS {
        return Err(Error::TooManyTargets(target_bits.len(), MAX_TARGETS));
    }
    if target_bits.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "target bits must be strictly increasing".into(),
        ));
    }
    let base = insert_zero_bits(g, target_bits);
    let m = target_bits.len();
    Ok((0..1usize << m)
        .map(|r| {
            target_bits
                .iter()
                .enumerate()
                .filter(|(j, _)| (r >> j) & 1 == 1)
                .fold(base, |acc, (_, &b)| acc | (1 << b))
        })
        .collect())
}

/// Shared pointer to the amplitude buffer for the parallel loops. Each loop
/// iteration reads and writes an index set disjoint from every other
/// iteration's, which is what makes the unsynchronized access sound.
#[derive(Clone, Copy)]
struct AmpPtr<T>(*mut Complex<T>);

unsafe impl<T: Send> Send for AmpPtr<T> {}
unsafe impl<T: Send> Sync for AmpPtr<T> {}

impl<T: Copy> AmpPtr<T> {
    #[inline(always)]
    unsafe fn get(self, i: usize) -> Complex<T> {
        *self.0.add(i)
    }

    #[inline(always)]
    unsafe fn set(self, i: usize, v: Complex<T>) {
        *self.0.add(i) = v;
    }

    #[inline(always)]
    unsafe fn swap(self, i: usize, j: usize) {
        std::ptr::swap(self.0.add(i), self.0.add(j));
    }
}

/// Runs `body` over `[0, ngroups)` split into contiguous ranges.
fn for_each_range<F>(nqubits: usize, ngroups: usize, body: F)
where
    F: Fn(std::ops::Range<usize>) + Sync + Send,
{
    let threads = rayon::current_num_threads();
    if nqubits < parallel_threshold() || threads <= 1 || ngroups < 2 {
        body(0..ngroups);
        return;
    }
    let nchunks = (threads * 4).min(ngroups);
    let chunk = ngroups.div_ceil(nchunks);
    (0..nchunks).into_par_iter().for_each(|c| {
        let start = c * chunk;
        let end = (start + chunk).min(ngroups);
        if start < end {
            body(start..end);
        }
    });
}

/// Validated bit layout for one gate application.
struct Layout {
    /// Bit positions of targets, in listed order.
    target_bits: Vec<usize>,
    /// All acted-on bit positions, ascending.
    sorted_bits: Vec<usize>,
    control_mask: usize,
}

impl Layout {
    fn new(nqubits: usize, controls: &[usize], targets: &[usize]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::ShapeMismatch("gate needs at least one target".into()));
        }
        if targets.len() > MAX_TARGETS {
            return Err(Error::TooManyTargets(targets.len(), MAX_TARGETS));
        }
        let mut seen = 0u128;
        let mut control_mask = 0usize;
        let mut sorted_bits = Vec::with_capacity(controls.len() + targets.len());
        let mut target_bits = Vec::with_capacity(targets.len());
        for (is_target, &q) in controls
            .iter()
            .map(|q| (false, q))
            .chain(targets.iter().map(|q| (true, q)))
        {
            let bit = crate::statevec::bit_position(nqubits, q)?;
            if seen & (1u128 << q) != 0 {
                return Err(Error::OverlappingQubits(q));
            }
            seen |= 1u128 << q;
            sorted_bits.push(bit);
            if is_target {
                target_bits.push(bit);
            } else {
                control_mask |= 1 << bit;
            }
        }
        sorted_bits.sort_unstable();
        Ok(Self {
            target_bits,
            sorted_bits,
            control_mask,
        })
    }

    fn ngroups(&self, nqubits: usize) -> usize {
        1usize << (nqubits - self.sorted_bits.len())
    }

    /// Offsets of the gate-row tuple; row bit `m-1-j` maps to target `j`.
    fn target_offsets(&self) -> Vec<usize> {
        let m = self.target_bits.len();
        (0..1usize << m)
            .map(|r| {
                self.target_bits
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| (r >> (m - 1 - j)) & 1 == 1)
                    .fold(0, |acc, (_, &b)| acc | (1 << b))
            })
            .collect()
    }
}

/// Applies `gate` to `targets` in place.
pub fn apply_gate<T: Real>(
    state: &mut StateVector<T>,
    gate: &GateMatrix,
    targets: &[usize],
) -> Result<()> {
    apply_controlled_gate(state, gate, &[], targets)
}

/// Applies `gate` to `targets` on the subspace where every control is 1.
/// Amplitudes outside that subspace are not touched.
pub fn apply_controlled_gate<T: Real>(
    state: &mut StateVector<T>,
    gate: &GateMatrix,
    controls: &[usize],
    targets: &[usize],
) -> Result<()> {
    if gate.ntargets() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}-target matrix applied to {} targets",
            gate.ntargets(),
            targets.len()
        )));
    }
    let n = state.nqubits();
    let layout = Layout::new(n, controls, targets)?;
    let ngroups = layout.ngroups(n);
    let ptr = AmpPtr(state.amplitudes_mut().as_mut_ptr());
    let cmask = layout.control_mask;

    if targets.len() == 1 {
        let g00 = from_c64::<T>(gate.get(0, 0));
        let g01 = from_c64::<T>(gate.get(0, 1));
        let g10 = from_c64::<T>(gate.get(1, 0));
        let g11 = from_c64::<T>(gate.get(1, 1));
        let tbit = layout.target_bits[0];
        if controls.is_empty() {
            for_each_range(n, ngroups, |range| {
                for g in range {
                    let (i1, i2) = index_pair(g, tbit);
                    // SAFETY: (i1, i2) is unique to g and < 2^n.
                    unsafe {
                        let a = ptr.get(i1);
                        let b = ptr.get(i2);
                        ptr.set(i1, g00 * a + g01 * b);
                        ptr.set(i2, g10 * a + g11 * b);
                    }
                }
            });
        } else {
            let sorted = &layout.sorted_bits;
            let k = 1usize << tbit;
            for_each_range(n, ngroups, |range| {
                for g in range {
                    let i1 = insert_zero_bits(g, sorted) | cmask;
                    let i2 = i1 | k;
                    // SAFETY: distinct g give distinct i1 with bit tbit clear.
                    unsafe {
                        let a = ptr.get(i1);
                        let b = ptr.get(i2);
                        ptr.set(i1, g00 * a + g01 * b);
                        ptr.set(i2, g10 * a + g11 * b);
                    }
                }
            });
        }
        return Ok(());
    }

    let dim = gate.dim();
    let matrix: Vec<Complex<T>> = gate.entries().iter().map(|z| from_c64(*z)).collect();
    let offsets = layout.target_offsets();
    let sorted = &layout.sorted_bits;
    for_each_range(n, ngroups, |range| {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); dim];
        for g in range {
            let base = insert_zero_bits(g, sorted) | cmask;
            // SAFETY: base | offsets[r] over all r is the tuple owned by g.
            unsafe {
                for (slot, off) in buf.iter_mut().zip(&offsets) {
                    *slot = ptr.get(base | off);
                }
                for (r, off) in offsets.iter().enumerate() {
                    let row = &matrix[r * dim..(r + 1) * dim];
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for (m, a) in row.iter().zip(&buf) {
                        acc = acc + *m * *a;
                    }
                    ptr.set(base | off, acc);
                }
            }
        }
    });
    Ok(())
}

/// Pauli X on `target`, conditioned on `controls`. Pure amplitude swaps.
pub fn apply_x<T: Real>(state: &mut StateVector<T>, controls: &[usize], target: usize) -> Result<()> {
    let n = state.nqubits();
    let layout = Layout::new(n, controls, &[target])?;
    let k = 1usize << layout.target_bits[0];
    let cmask = layout.control_mask;
    let sorted = &layout.sorted_bits;
    let ptr = AmpPtr(state.amplitudes_mut().as_mut_ptr());
    for_each_range(n, layout.ngroups(n), |range| {
        for g in range {
            let i1 = insert_zero_bits(g, sorted) | cmask;
            // SAFETY: pair owned by g.
            unsafe { ptr.swap(i1, i1 | k) };
        }
    });
    Ok(())
}

/// Pauli Y: `a' = -i b`, `b' = i a`.
pub fn apply_y<T: Real>(state: &mut StateVector<T>, controls: &[usize], target: usize) -> Result<()> {
    let n = state.nqubits();
    let layout = Layout::new(n, controls, &[target])?;
    let k = 1usize << layout.target_bits[0];
    let cmask = layout.control_mask;
    let sorted = &layout.sorted_bits;
    let ptr = AmpPtr(state.amplitudes_mut().as_mut_ptr());
    for_each_range(n, layout.ngroups(n), |range| {
        for g in range {
            let i1 = insert_zero_bits(g, sorted) | cmask;
            let i2 = i1 | k;
            // SAFETY: pair owned by g.
            unsafe {
                let a = ptr.get(i1);
                let b = ptr.get(i2);
                ptr.set(i1, Complex::new(b.im, -b.re));
                ptr.set(i2, Complex::new(-a.im, a.re));
            }
        }
    });
    Ok(())
}

/// Pauli Z: negates amplitudes whose target (and control) bits are all 1.
pub fn apply_z<T: Real>(state: &mut StateVector<T>, controls: &[usize], target: usize) -> Result<()> {
    let n = state.nqubits();
    let layout = Layout::new(n, controls, &[target])?;
    let mask = layout.control_mask | (1usize << layout.target_bits[0]);
    let sorted = &layout.sorted_bits;
    let ptr = AmpPtr(state.amplitudes_mut().as_mut_ptr());
    for_each_range(n, layout.ngroups(n), |range| {
        for g in range {
            let i = insert_zero_bits(g, sorted) | mask;
            // SAFETY: index owned by g.
            unsafe { ptr.set(i, -ptr.get(i)) };
        }
    });
    Ok(())
}

/// Multiplies amplitudes whose target and control bits are all 1 by `phase`.
/// Covers U1, S, T and their controlled forms.
pub fn apply_phase<T: Real>(
    state: &mut StateVector<T>,
    controls: &[usize],
    target: usize,
    phase: Complex64,
) -> Result<()> {
    let n = state.nqubits();
    let layout = Layout::new(n, controls, &[target])?;
    let mask = layout.control_mask | (1usize << layout.target_bits[0]);
    let sorted = &layout.sorted_bits;
    let phase = from_c64::<T>(phase);
    let ptr = AmpPtr(state.amplitudes_mut().as_mut_ptr());
    for_each_range(n, layout.ngroups(n), |range| {
        for g in range {
            let i = insert_zero_bits(g, sorted) | mask;
            // SAFETY: index owned by g.
            unsafe { ptr.set(i, phase * ptr.get(i)) };
        }
    });
    Ok(())
}

/// SWAP of `q1` and `q2`: exchanges the `|..0..1..>` and `|..1..0..>` amplitudes.
pub fn apply_swap<T: Real>(
    state: &mut StateVector<T>,
    controls: &[usize],
    q1: usize,
    q2: usize,
) -> Result<()> {
    let n = state.nqubits();
    let layout = Layout::new(n, controls, &[q1, q2])?;
    let b1 = 1usize << layout.target_bits[0];
    let b2 = 1usize << layout.target_bits[1];
    let cmask = layout.control_mask;
    let sorted = &layout.sorted_bits;
    let ptr = AmpPtr(state.amplitudes_mut().as_mut_ptr());
    for_each_range(n, layout.ngroups(n), |range| {
        for g in range {
            let base = insert_zero_bits(g, sorted) | cmask;
            // SAFETY: both indices belong to g's tuple.
            unsafe { ptr.swap(base | b1, base | b2) };
        }
    });
    Ok(())
}

/// Reference route: multiplies the full `2^n x 2^n` operator (identity padding
/// plus control projection) into the state, one materialized row at a time,
/// and returns a new state.
pub fn dense_oracle_apply<T: Real>(
    state: &StateVector<T>,
    gate: &GateMatrix,
    targets: &[usize],
    controls: &[usize],
) -> Result<StateVector<T>> {
    let n = state.nqubits();
    if n > ORACLE_MAX_QUBITS {
        return Err(Error::CapacityExceeded {
            what: "dense oracle qubits",
            requested: n,
            cap: ORACLE_MAX_QUBITS,
        });
    }
    if gate.ntargets() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}-target matrix applied to {} targets",
            gate.ntargets(),
            targets.len()
        )));
    }
    let layout = Layout::new(n, controls, targets)?;
    let acted: usize = layout.sorted_bits.iter().map(|b| 1usize << b).sum();
    let m = layout.target_bits.len();
    let gate_row = |index: usize| -> usize {
        layout
            .target_bits
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &b)| acc | (((index >> b) & 1) << (m - 1 - j)))
    };
    let entry = |r: usize, c: usize| -> Complex64 {
        let target_mask = acted & !layout.control_mask;
        if (r & !target_mask) != (c & !target_mask) {
            return Complex64::new(0.0, 0.0);
        }
        if c & layout.control_mask != layout.control_mask {
            return if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        gate.get(gate_row(r), gate_row(c))
    };

    let dim = state.len();
    let input: Vec<Complex64> = state
        .amplitudes()
        .iter()
        .map(|z| crate::statevec::to_c64(*z))
        .collect();
    let mut row = vec![Complex64::new(0.0, 0.0); dim];
    let mut out = Vec::with_capacity(dim);
    for r in 0..dim {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = entry(r, c);
        }
        let acc: Complex64 = row.iter().zip(&input).map(|(g, a)| g * a).sum();
        out.push(from_c64::<T>(acc));
    }
    StateVector::from_amplitudes(out)
}

/// Out-of-place contraction: writes `G` applied to a copy of the state into a
/// newly allocated vector, treating controls as part of a dense gate matrix.
/// This is the duplicate-the-state strategy the in-place kernels avoid.
pub fn einsum_apply<T: Real>(
    state: &StateVector<T>,
    gate: &GateMatrix,
    targets: &[usize],
    controls: &[usize],
) -> Result<StateVector<T>> {
    if gate.ntargets() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}-target matrix applied to {} targets",
            gate.ntargets(),
            targets.len()
        )));
    }
    let n = state.nqubits();
    // validates the qubit lists
    Layout::new(n, controls, targets)?;
    let full = gate.controlled(controls.len())?;
    let qubits: Vec<usize> = controls.iter().chain(targets).copied().collect();
    let bits: Vec<usize> = qubits.iter().map(|&q| n - 1 - q).collect();
    let m = bits.len();
    let dim = full.dim();
    let matrix: Vec<Complex<T>> = full.entries().iter().map(|z| from_c64(*z)).collect();
    let offsets: Vec<usize> = (0..dim)
        .map(|r| {
            bits.iter()
                .enumerate()
                .filter(|(j, _)| (r >> (m - 1 - j)) & 1 == 1)
                .fold(0, |acc, (_, &b)| acc | (1 << b))
        })
        .collect();
    let acted: usize = bits.iter().map(|b| 1usize << b).sum();

    let input = state.amplitudes();
    let mut out = Vec::new();
    out.try_reserve_exact(input.len())
        .map_err(|_| Error::ResourceError {
            bytes: input.len() * T::PRECISION.amplitude_bytes(),
        })?;
    out.resize(input.len(), Complex::new(T::zero(), T::zero()));
    let parallel = n >= parallel_threshold();
    let compute = |(i, slot): (usize, &mut Complex<T>)| {
        let r = bits
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &b)| acc | (((i >> b) & 1) << (m - 1 - j)));
        let base = i & !acted;
        let row = &matrix[r * dim..(r + 1) * dim];
        let mut acc = Complex::new(T::zero(), T::zero());
        for (g, off) in row.iter().zip(&offsets) {
            acc = acc + *g * input[base | off];
        }
        *slot = acc;
    };
    if parallel {
        out.par_iter_mut().enumerate().for_each(compute);
    } else {
        out.iter_mut().enumerate().for_each(compute);
    }
    StateVector::from_amplitudes(out)
}
