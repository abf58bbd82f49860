//! Benchmark circuits and the timing harness.
//!
//! Every run records parse, build, one dry run and `k` simulation runs, each
//! execution on a freshly zeroed state. Kernels are compiled ahead of time,
//! so `dry_run_s` captures first-touch effects (page faults, lazy
//! allocation) rather than any compilation.

use std::f64::consts::PI;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::circuit::{execute, Backend, Circuit, GateKind, GateOp};
use crate::error::{Error, Result};
use crate::fusion::fuse;
use crate::measure::{sample_shots_metropolis, MetropolisConfig, RNG_ALGORITHM};
use crate::qasm;
use crate::statevec::{Precision, Real, StateVector};

pub const DEFAULT_THETA: f64 = 0.1;

/// Quantum Fourier transform with the final qubit-reversal swaps.
pub fn gen_qft(n: usize) -> Circuit {
    let mut c = Circuit::new(n);
    for j in 0..n {
        c.push(GateOp::single(GateKind::H, j)).expect("qubit in range");
        for k in j + 1..n {
            let angle = PI / (1u64 << (k - j).min(63)) as f64;
            c.push(GateOp::controlled(GateKind::Cu1(angle), k, j))
                .expect("qubits in range");
        }
    }
    for i in 0..n / 2 {
        c.push(GateOp::swap(i, n - 1 - i)).expect("qubits in range");
    }
    c
}

/// Two RY layers, each followed by a brick of CZ gates on alternating pairs.
pub fn gen_variational(n: usize, theta: f64) -> Result<Circuit> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::OddQubits(n));
    }
    let mut c = Circuit::new(n);
    for offset in [0, 1] {
        for q in 0..n {
            c.push(GateOp::single(GateKind::Ry(theta), q))?;
        }
        for q in (offset..n).step_by(2) {
            c.push(GateOp::controlled(GateKind::Cz, q, (q + 1) % n))?;
        }
    }
    Ok(c)
}

/// Bernstein-Vazirani with the all-ones secret; qubit `n - 1` is the ancilla.
pub fn gen_bv(n: usize) -> Result<Circuit> {
    if n < 2 {
        return Err(Error::InvalidArgument("bv needs at least two qubits".into()));
    }
    let anc = n - 1;
    let mut c = Circuit::new(n);
    for q in 0..anc {
        c.push(GateOp::single(GateKind::H, q))?;
    }
    c.push(GateOp::single(GateKind::X, anc))?;
    c.push(GateOp::single(GateKind::H, anc))?;
    for q in 0..anc {
        c.push(GateOp::controlled(GateKind::Cx, q, anc))?;
    }
    for q in 0..anc {
        c.push(GateOp::single(GateKind::H, q))?;
    }
    Ok(c)
}

/// Where a fixture came from: the generating tool, its version and any
/// flattening applied before export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureProvenance {
    pub tool: String,
    pub version: String,
    #[serde(default)]
    pub notes: Option<String>,
}

/// Parses a QASM fixture. Provenance is read from `<path>.json` when present.
pub fn load_fixture(path: &Path) -> Result<(Circuit, Option<FixtureProvenance>)> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let circuit = qasm::parse_circuit(&source)?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    let sidecar = Path::new(&sidecar);
    let provenance = if sidecar.exists() {
        let text = std::fs::read_to_string(sidecar)
            .map_err(|e| Error::io(format!("reading {}", sidecar.display()), e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Json {
            context: format!("parsing {}", sidecar.display()),
            source: e,
        })?)
    } else {
        None
    };
    Ok((circuit, provenance))
}

#[derive(Clone, Debug, PartialEq)]
pub enum CircuitSource {
    Qft,
    Variational { theta: f64 },
    Bv,
    Qasm(std::path::PathBuf),
}

impl CircuitSource {
    pub fn name(&self) -> String {
        match self {
            CircuitSource::Qft => "qft".into(),
            CircuitSource::Variational { .. } => "variational".into(),
            CircuitSource::Bv => "bv".into(),
            CircuitSource::Qasm(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "qasm".into()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub source: CircuitSource,
    /// Ignored for QASM inputs, which declare their own register.
    pub nqubits: usize,
    pub backend: Backend,
    pub precision: Precision,
    pub fuse: bool,
    pub repeats: usize,
    pub seed: u64,
    /// Worker threads requested for this run; `None` keeps the pool default.
    pub threads: Option<usize>,
    /// Metropolis shots drawn from the final state over the circuit's
    /// measured qubits (all qubits when it declares none).
    pub shots: Option<u64>,
    /// Raw dump of the final state.
    pub dump_state: Option<std::path::PathBuf>,
}

impl BenchConfig {
    pub fn new(source: CircuitSource, nqubits: usize) -> Self {
        Self {
            source,
            nqubits,
            backend: Backend::InPlace,
            precision: Precision::Double,
            fuse: false,
            repeats: 1,
            seed: 0,
            threads: None,
            shots: None,
            dump_state: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub parse_s: f64,
    pub build_s: f64,
    pub dry_run_s: f64,
    pub simulation_s: f64,
    pub simulation_stddev_s: f64,
    pub repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitStats {
    pub gate_count: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub circuit: String,
    pub nqubits: usize,
    pub precision: Precision,
    pub backend: String,
    pub fuse: bool,
    pub timings: PhaseTimings,
    pub before_fusion: CircuitStats,
    pub after_fusion: Option<CircuitStats>,
    /// `None` where the platform does not expose process memory.
    pub peak_rss_bytes: Option<u64>,
    pub delta_rss_bytes: Option<i64>,
    pub checksum: f64,
    pub seed: u64,
    pub rng_algorithm: String,
    pub theta: Option<f64>,
    pub threads: usize,
    pub hardware: String,
    pub frequencies: Option<BTreeMap<String, u64>>,
}

impl BenchReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }
}

/// Reads a `Vm*` field (reported in kB) from `/proc/self/status`.
fn proc_status_bytes(field: &str) -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status.lines().find_map(|line| {
        let rest = line.strip_prefix(field)?.strip_prefix(':')?;
        let kb: u64 = rest.split_whitespace().next()?.parse().ok()?;
        Some(kb * 1024)
    })
}

/// Peak resident set size of this process.
pub fn peak_rss_bytes() -> Option<u64> {
    proc_status_bytes("VmHWM")
}

pub fn current_rss_bytes() -> Option<u64> {
    proc_status_bytes("VmRSS")
}

/// Architecture, OS, logical cores and CPU model when available.
pub fn hardware_descriptor() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
        s.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split(':').nth(1))
            .map(|m| m.trim().to_string())
    });
    let mut d = format!("{}-{} {} cores", std::env::consts::ARCH, std::env::consts::OS, cores);
    if let Some(m) = model {
        d.push_str(", ");
        d.push_str(&m);
    }
    d
}

fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct RunOutcome {
    dry_run_s: f64,
    runs: Vec<f64>,
    checksum: f64,
    delta_rss: Option<i64>,
    frequencies: Option<BTreeMap<String, u64>>,
}

fn timed_runs<T: Real>(circuit: &Circuit, config: &BenchConfig) -> Result<RunOutcome> {
    let before = current_rss_bytes();
    let mut state = StateVector::<T>::zero(circuit.nqubits())?;
    let start = Instant::now();
    execute(circuit, &mut state, config.backend)?;
    let dry_run_s = start.elapsed().as_secs_f64();
    let after = current_rss_bytes();
    let mut runs = Vec::with_capacity(config.repeats);
    for _ in 0..config.repeats {
        state.reset();
        let start = Instant::now();
        execute(circuit, &mut state, config.backend)?;
        runs.push(start.elapsed().as_secs_f64());
    }
    let delta_rss = before.zip(after).map(|(b, a)| a as i64 - b as i64);
    if let Some(path) = &config.dump_state {
        state.dump(path)?;
    }
    let frequencies = match config.shots {
        Some(nshots) => {
            let mut qubits: Vec<usize> = circuit.measurements().iter().map(|&(q, _)| q).collect();
            if qubits.is_empty() {
                qubits = (0..circuit.nqubits()).collect();
            }
            let shots = sample_shots_metropolis(&state, &qubits, nshots, config.seed, MetropolisConfig::default())?;
            Some(shots.frequencies)
        }
        None => None,
    };
    Ok(RunOutcome {
        dry_run_s,
        runs,
        checksum: state.checksum(),
        delta_rss,
        frequencies,
    })
}

/// Builds the circuit, optionally fuses it, and times execution.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    if config.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let parse_start = Instant::now();
    let (raw, theta) = match &config.source {
        CircuitSource::Qasm(path) => (load_fixture(path)?.0, None),
        _ => (Circuit::new(0), None),
    };
    let parse_s = parse_start.elapsed().as_secs_f64();

    let build_start = Instant::now();
    let (circuit, theta) = match &config.source {
        CircuitSource::Qft => (gen_qft(config.nqubits), theta),
        CircuitSource::Variational { theta } => (gen_variational(config.nqubits, *theta)?, Some(*theta)),
        CircuitSource::Bv => (gen_bv(config.nqubits)?, theta),
        CircuitSource::Qasm(_) => (raw, theta),
    };
    let before_fusion = CircuitStats {
        gate_count: circuit.gate_count(),
        depth: circuit.depth(),
    };
    let (circuit, after_fusion) = if config.fuse {
        let fused = fuse(&circuit, 2)?;
        let stats = CircuitStats {
            gate_count: fused.gate_count(),
            depth: fused.depth(),
        };
        (fused, Some(stats))
    } else {
        (circuit, None)
    };
    let build_s = build_start.elapsed().as_secs_f64();

    let run = || match config.precision {
        Precision::Single => timed_runs::<f32>(&circuit, config),
        Precision::Double => timed_runs::<f64>(&circuit, config),
    };
    let (outcome, threads) = match config.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            (pool.install(run)?, t)
        }
        None => (run()?, rayon::current_num_threads()),
    };
    let (simulation_s, simulation_stddev_s) = mean_stddev(&outcome.runs);

    Ok(BenchReport {
        circuit: config.source.name(),
        nqubits: circuit.nqubits(),
        precision: config.precision,
        backend: config.backend.as_str().to_string(),
        fuse: config.fuse,
        timings: PhaseTimings {
            parse_s,
            build_s,
            dry_run_s: outcome.dry_run_s,
            simulation_s,
            simulation_stddev_s,
            repeats: config.repeats,
        },
        before_fusion,
        after_fusion,
        peak_rss_bytes: peak_rss_bytes(),
        delta_rss_bytes: outcome.delta_rss,
        checksum: outcome.checksum,
        seed: config.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        theta,
        threads,
        hardware: hardware_descriptor(),
        frequencies: outcome.frequencies,
    })
}
