//! The amplitude buffer and the qubit-label to bit-position convention.
//!
//! Qubit 0 is the most significant bit of a basis-state index: for `n` qubits,
//! qubit `q` lives at bit `n - 1 - q`. Every kernel goes through
//! [`StateVector::bit_position`] so the convention is defined here only.

use std::fmt::Debug;
use std::io::Write;
use std::iter::Sum;
use std::path::Path;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register accepted by default. 2^34 double amplitudes is 256 GiB.
pub const DEFAULT_MAX_QUBITS: usize = 34;

const REDUCE_CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }

    /// Bytes per complex amplitude.
    pub fn amplitude_bytes(self) -> usize {
        match self {
            Precision::Single => 8,
            Precision::Double => 16,
        }
    }
}

/// Floating-point scalar usable as the real part of an amplitude.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Default + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn from_f64_lossy(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Little-endian bytes, for raw state dumps.
    fn write_le(self, out: &mut Vec<u8>);
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

#[inline]
pub(crate) fn to_c64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())
}

#[inline]
pub(crate) fn from_c64<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::from_f64_lossy(z.re), T::from_f64_lossy(z.im))
}

/// A pure state of `nqubits` qubits stored as 2^nqubits contiguous amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T: Real = f64> {
    nqubits: usize,
    amps: Vec<Complex<T>>,
}

/// `|0...0>` on `nqubits` qubits with the default cap.
pub fn zero_state<T: Real>(nqubits: usize) -> Result<StateVector<T>> {
    StateVector::zero(nqubits)
}

fn allocate<T: Real>(nqubits: usize, max_qubits: usize) -> Result<Vec<Complex<T>>> {
    if nqubits == 0 {
        return Err(Error::InvalidArgument("a state needs at least one qubit".into()));
    }
    if nqubits > max_qubits || nqubits >= usize::BITS as usize - 1 {
        return Err(Error::CapacityExceeded {
            what: "qubits",
            requested: nqubits,
            cap: max_qubits,
        });
    }
    let len = 1usize << nqubits;
    let mut amps = Vec::new();
    amps.try_reserve_exact(len).map_err(|_| Error::ResourceError {
        bytes: len.saturating_mul(T::PRECISION.amplitude_bytes()),
    })?;
    amps.resize(len, Complex::new(T::zero(), T::zero()));
    Ok(amps)
}

impl<T: Real> StateVector<T> {
    pub fn zero(nqubits: usize) -> Result<Self> {
        Self::zero_with_cap(nqubits, DEFAULT_MAX_QUBITS)
    }

    /// Like [`StateVector::zero`] with an explicit qubit cap.
    pub fn zero_with_cap(nqubits: usize, max_qubits: usize) -> Result<Self> {
        let mut amps = allocate::<T>(nqubits, max_qubits)?;
        amps[0] = Complex::new(T::one(), T::zero());
        Ok(Self { nqubits, amps })
    }

    /// Uniform superposition `|+>^n`, the ground state of `-sum X_i`.
    pub fn plus_state(nqubits: usize) -> Result<Self> {
        let mut amps = allocate::<T>(nqubits, DEFAULT_MAX_QUBITS)?;
        let a = T::from_f64_lossy((0.5f64).powf(nqubits as f64 / 2.0));
        amps.par_iter_mut()
            .for_each(|z| *z = Complex::new(a, T::zero()));
        Ok(Self { nqubits, amps })
    }

    /// Basis state `|index>`.
    pub fn basis_state(nqubits: usize, index: usize) -> Result<Self> {
        let mut state = Self::zero(nqubits)?;
        if index >= state.amps.len() {
            return Err(Error::IndexOutOfRange {
                index,
                size: state.amps.len(),
            });
        }
        state.amps[0] = Complex::new(T::zero(), T::zero());
        state.amps[index] = Complex::new(T::one(), T::zero());
        Ok(state)
    }

    /// Wraps an existing amplitude vector. The length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex<T>>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::ShapeMismatch(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        Ok(Self {
            nqubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    #[inline]
    pub fn nqubits(&self) -> usize {
        self.nqubits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.amps.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    #[inline]
    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    #[inline]
    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    #[inline]
    pub fn amplitudes_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex<T>> {
        self.amps
    }

    /// Bit of the basis-state index that encodes `qubit`.
    #[inline]
    pub fn bit_position(&self, qubit: usize) -> Result<usize> {
        bit_position(self.nqubits, qubit)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Sum of |amp|^2, reduced in fixed-size chunks so the result does not
    /// depend on the thread count.
    pub fn norm_sqr(&self) -> f64 {
        let partials: Vec<f64> = self
            .amps
            .par_chunks(REDUCE_CHUNK)
            .map(|c| c.iter().map(|z| to_c64(*z).norm_sqr()).sum::<f64>())
            .collect();
        partials.iter().sum()
    }

    /// Resets to `|0...0>` without reallocating.
    pub fn reset(&mut self) {
        self.amps
            .par_iter_mut()
            .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
        self.amps[0] = Complex::new(T::one(), T::zero());
    }

    /// Overwrites this state with `other` in place.
    pub fn copy_from(&mut self, other: &Self) -> Result<()> {
        if other.nqubits != self.nqubits {
            return Err(Error::ShapeMismatch(format!(
                "cannot copy a {}-qubit state into a {}-qubit state",
                other.nqubits, self.nqubits
            )));
        }
        self.amps.copy_from_slice(&other.amps);
        Ok(())
    }

    /// Norm-squared estimate from a strided sample: `stride * sum |amp_i|^2`
    /// over `i = 0, stride, 2*stride, ...`, with `stride = max(1, 2^n / 1024)`.
    pub fn checksum(&self) -> f64 {
        let stride = (self.amps.len() / 1024).max(1);
        let sampled: f64 = self
            .amps
            .iter()
            .step_by(stride)
            .map(|z| to_c64(*z).norm_sqr())
            .sum();
        sampled * stride as f64
    }

    /// Inner product `<self|other>` in double precision.
    pub fn inner(&self, other: &Self) -> Result<Complex<f64>> {
        if other.nqubits != self.nqubits {
            return Err(Error::ShapeMismatch("inner product of unequal registers".into()));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| to_c64(*a).conj() * to_c64(*b))
            .sum())
    }

    /// Writes the raw little-endian interleaved `(re, im)` amplitudes to `path`
    /// and a JSON sidecar `{nqubits, precision, checksum}` to `path.json`.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.amps.len() * T::PRECISION.amplitude_bytes());
        for z in &self.amps {
            z.re.write_le(&mut bytes);
            z.im.write_le(&mut bytes);
        }
        let mut file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        file.write_all(&bytes)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

        let sidecar = DumpSidecar {
            nqubits: self.nqubits,
            precision: T::PRECISION,
            checksum: self.checksum(),
        };
        let sidecar_path = sidecar_path(path);
        let text = serde_json::to_string_pretty(&sidecar).map_err(|source| Error::Json {
            context: "serializing state sidecar".into(),
            source,
        })?;
        std::fs::write(&sidecar_path, text)
            .map_err(|e| Error::io(format!("writing {}", sidecar_path.display()), e))
    }
}

/// Metadata written next to a raw state dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpSidecar {
    pub nqubits: usize,
    pub precision: Precision,
    pub checksum: f64,
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// `nqubits - 1 - qubit`: qubit 0 is the most significant bit.
#[inline]
pub fn bit_position(nqubits: usize, qubit: usize) -> Result<usize> {
    if qubit >= nqubits {
        return Err(Error::IndexOutOfRange {
            index: qubit,
            size: nqubits,
        });
    }
    Ok(nqubits - 1 - qubit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_basics() {
        let s = zero_state::<f64>(1).unwrap();
        assert_eq!(s.amplitudes(), &[Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]);
        let s = zero_state::<f64>(3).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.amplitudes()[0], Complex::new(1.0, 0.0));
        assert!(s.amplitudes()[1..].iter().all(|z| *z == Complex::new(0.0, 0.0)));
        assert_eq!(s.norm(), 1.0);
        assert_eq!(zero_state::<f32>(2).unwrap().norm(), 1.0);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            zero_state::<f64>(35),
            Err(Error::CapacityExceeded { requested: 35, cap: 34, .. })
        ));
        assert!(matches!(
            StateVector::<f64>::zero_with_cap(5, 4),
            Err(Error::CapacityExceeded { .. })
        ));
        assert!(zero_state::<f64>(0).is_err());
    }

    #[test]
    fn bit_position_convention() {
        assert_eq!(bit_position(3, 0).unwrap(), 2);
        assert_eq!(bit_position(3, 2).unwrap(), 0);
        assert_eq!(bit_position(1, 0).unwrap(), 0);
        assert!(matches!(bit_position(3, 3), Err(Error::IndexOutOfRange { .. })));
        for n in 1..10 {
            let mut seen: Vec<usize> = (0..n).map(|q| bit_position(n, q).unwrap()).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn norm_examples() {
        let s = StateVector::from_amplitudes(vec![
            Complex::new(0.6, 0.0),
            Complex::new(0.0, 0.8),
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
        ])
        .unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
        let z = StateVector::<f64>::from_amplitudes(vec![Complex::new(0.0, 0.0); 4]).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert!(StateVector::<f64>::from_amplitudes(vec![Complex::new(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn plus_state_is_uniform() {
        let s = StateVector::<f64>::plus_state(4).unwrap();
        assert!(s.amplitudes().iter().all(|z| (z.re - 0.25).abs() < 1e-15));
        assert!((s.checksum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dump_writes_raw_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.bin");
        let s = StateVector::<f32>::basis_state(2, 3).unwrap();
        s.dump(&path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(raw.len(), 4 * 8);
        assert_eq!(&raw[24..28], &1.0f32.to_le_bytes());
        let side: DumpSidecar =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side.nqubits, 2);
        assert_eq!(side.precision, Precision::Single);
    }
}
