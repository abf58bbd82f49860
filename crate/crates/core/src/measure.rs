//! Born-rule marginals, collapse, and shot sampling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::statevec::{bit_position, from_c64, to_c64, Real, StateVector};

/// Identifier of the generator behind every seeded sampler.
pub const RNG_ALGORITHM: &str = "chacha8-rand_chacha-0.9-seed_from_u64";

/// Probabilities below this cannot be collapsed onto.
pub const COLLAPSE_EPSILON: f64 = 1e-14;

/// Largest marginal (in outcomes) the direct sampler will tabulate.
pub const MAX_MARGINAL_QUBITS: usize = 26;

/// Shot counts keyed by bitstring; character `j` is the outcome of the
/// `j`-th measured qubit. Serializes as a plain `{bitstring: count}` object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotResult {
    pub nshots: u64,
    pub frequencies: BTreeMap<String, u64>,
}

impl ShotResult {
    fn from_counts(counts: &BTreeMap<usize, u64>, width: usize) -> Self {
        let frequencies: BTreeMap<String, u64> = counts
            .iter()
            .map(|(&k, &v)| (format!("{k:0width$b}"), v))
            .collect();
        Self {
            nshots: frequencies.values().sum(),
            frequencies,
        }
    }

    pub fn count(&self, bitstring: &str) -> u64 {
        self.frequencies.get(bitstring).copied().unwrap_or(0)
    }

    /// Counts as a dense array indexed by outcome integer.
    pub fn to_dense(&self, nbits: usize) -> Vec<u64> {
        let mut out = vec![0u64; 1 << nbits];
        for (k, &v) in &self.frequencies {
            out[usize::from_str_radix(k, 2).expect("keys are bitstrings")] = v;
        }
        out
    }
}

impl Serialize for ShotResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.frequencies.serialize(serializer)
    }
}

/// Knobs for the Metropolis chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MetropolisConfig {
    /// Steps discarded before recording; `None` means `max(100, nshots / 10)`.
    pub burn_in: Option<u64>,
    /// Steps between recorded shots; `None` means one sweep, i.e. as many
    /// steps as the state has qubits. Single-step recording leaves
    /// neighbouring shots strongly correlated.
    pub thinning: Option<u64>,
}


/// Bit positions of `qubits` after validation.
fn measured_bits(nqubits: usize, qubits: &[usize]) -> Result<Vec<usize>> {
    let mut seen = vec![false; nqubits];
    qubits
        .iter()
        .map(|&q| {
            let b = bit_position(nqubits, q)?;
            if std::mem::replace(&mut seen[q], true) {
                return Err(Error::OverlappingQubits(q));
            }
            Ok(b)
        })
        .collect()
}

/// Outcome integer of basis index `i`; `bits[0]` becomes the top bit.
#[inline]
fn outcome_of(i: usize, bits: &[usize]) -> usize {
    let k = bits.len();
    bits.iter()
        .enumerate()
        .fold(0, |acc, (j, &b)| acc | (((i >> b) & 1) << (k - 1 - j)))
}

/// Marginal probabilities of `qubits`, indexed with `qubits[0]` as the most
/// significant outcome bit.
pub fn probabilities<T: Real>(state: &StateVector<T>, qubits: &[usize]) -> Result<Vec<f64>> {
    let bits = measured_bits(state.nqubits(), qubits)?;
    if bits.len() > MAX_MARGINAL_QUBITS {
        return Err(Error::CapacityExceeded {
            what: "marginal qubits",
            requested: bits.len(),
            cap: MAX_MARGINAL_QUBITS,
        });
    }
    let size = 1usize << bits.len();
    const CHUNK: usize = 1 << 14;
    let partials: Vec<Vec<f64>> = state
        .amplitudes()
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut p = vec![0.0; size];
            for (j, z) in chunk.iter().enumerate() {
                p[outcome_of(c * CHUNK + j, &bits)] += to_c64(*z).norm_sqr();
            }
            p
        })
        .collect();
    let mut probs = vec![0.0; size];
    for part in partials {
        for (a, b) in probs.iter_mut().zip(part) {
            *a += b;
        }
    }
    Ok(probs)
}

/// Projects onto `outcome` of `qubits` and renormalizes in place.
pub fn collapse<T: Real>(state: &mut StateVector<T>, qubits: &[usize], outcome: usize) -> Result<()> {
    let bits = measured_bits(state.nqubits(), qubits)?;
    if outcome >= 1usize << bits.len() {
        return Err(Error::IndexOutOfRange {
            index: outcome,
            size: 1 << bits.len(),
        });
    }
    let p: f64 = state
        .amplitudes()
        .par_iter()
        .enumerate()
        .filter(|(i, _)| outcome_of(*i, &bits) == outcome)
        .map(|(_, z)| to_c64(*z).norm_sqr())
        .sum();
    if p <= COLLAPSE_EPSILON {
        return Err(Error::ZeroProbabilityOutcome(p));
    }
    let scale = from_c64::<T>(num_complex::Complex64::new(1.0 / p.sqrt(), 0.0)).re;
    let zero = num_complex::Complex::new(T::zero(), T::zero());
    state
        .amplitudes_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, z)| {
            if outcome_of(i, &bits) == outcome {
                *z = *z * scale;
            } else {
                *z = zero;
            }
        });
    Ok(())
}

/// Parses a bitstring outcome (first character = first qubit).
pub fn parse_outcome(bitstring: &str) -> Result<usize> {
    if bitstring.is_empty() || bitstring.len() > 63 {
        return Err(Error::InvalidArgument(format!("bad outcome '{bitstring}'")));
    }
    usize::from_str_radix(bitstring, 2)
        .map_err(|_| Error::InvalidArgument(format!("bad outcome '{bitstring}'")))
}

/// Metropolis sampling of shot frequencies.
///
/// The chain lives on full basis indices. It starts at a uniformly drawn
/// index (redrawn once from the exact distribution if that index has zero
/// probability), proposes flipping one uniformly chosen qubit, and accepts with
/// probability `min(1, p'/p)`. Recorded indices are reduced to `qubits`.
pub fn sample_shots_metropolis<T: Real>(
    state: &StateVector<T>,
    qubits: &[usize],
    nshots: u64,
    seed: u64,
    config: MetropolisConfig,
) -> Result<ShotResult> {
    let bits = measured_bits(state.nqubits(), qubits)?;
    if nshots == 0 {
        return Err(Error::InvalidArgument("nshots must be at least 1".into()));
    }
    let n = state.nqubits();
    let thinning = config.thinning.unwrap_or(n.max(1) as u64);
    if thinning == 0 {
        return Err(Error::InvalidArgument("thinning must be at least 1".into()));
    }
    let amps = state.amplitudes();
    let prob = |i: usize| to_c64(amps[i]).norm_sqr();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut current = rng.random_range(0..amps.len());
    if prob(current) == 0.0 {
        current = inverse_cdf_draw(state, rng.random::<f64>());
    }
    let mut p_current = prob(current);

    let burn_in = config.burn_in.unwrap_or((nshots / 10).max(100));
    let step = |rng: &mut ChaCha8Rng, current: &mut usize, p_current: &mut f64| {
        if n == 0 {
            return;
        }
        let flip = 1usize << rng.random_range(0..n);
        let proposed = *current ^ flip;
        let p_new = prob(proposed);
        let u: f64 = rng.random();
        if *p_current == 0.0 || u * *p_current < p_new {
            *current = proposed;
            *p_current = p_new;
        }
    };
    for _ in 0..burn_in {
        step(&mut rng, &mut current, &mut p_current);
    }
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..nshots {
        for _ in 0..thinning {
            step(&mut rng, &mut current, &mut p_current);
        }
        *counts.entry(outcome_of(current, &bits)).or_default() += 1;
    }
    Ok(ShotResult::from_counts(&counts, bits.len()))
}

/// First basis index whose cumulative probability exceeds `u * total`.
fn inverse_cdf_draw<T: Real>(state: &StateVector<T>, u: f64) -> usize {
    let total = state.norm_sqr();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_support = 0;
    for (i, z) in state.amplitudes().iter().enumerate() {
        let p = to_c64(*z).norm_sqr();
        if p > 0.0 {
            last_support = i;
            acc += p;
            if acc > target {
                return i;
            }
        }
    }
    last_support
}

/// Exact multinomial sampling by inverse CDF over the marginal of `qubits`.
pub fn sample_shots_direct<T: Real>(
    state: &StateVector<T>,
    qubits: &[usize],
    nshots: u64,
    seed: u64,
) -> Result<ShotResult> {
    if nshots == 0 {
        return Err(Error::InvalidArgument("nshots must be at least 1".into()));
    }
    let probs = probabilities(state, qubits)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let last_support = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..nshots {
        let u = rng.random::<f64>() * total;
        // first outcome whose cumulative mass exceeds u; rounding can push u
        // past the final entry
        let k = cdf.partition_point(|&c| c <= u).min(last_support);
        *counts.entry(k).or_default() += 1;
    }
    Ok(ShotResult::from_counts(&counts, qubits.len()))
}
