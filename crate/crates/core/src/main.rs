use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use svsim::bench::{run_benchmark, BenchConfig, CircuitSource, DEFAULT_THETA};
use svsim::evolution::{
    adiabatic_evolve, ground_energy, tfim_hamiltonian, AdiabaticSchedule, EvolutionMethod, HamiltonianForm,
    TfimSpec, DENSE_MAX_QUBITS,
};
use svsim::fusion::fuse;
use svsim::{Backend, Error, Precision};

#[derive(Parser)]
#[command(name = "svsim", version, about = "State-vector quantum circuit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Inplace,
    Oracle,
    Einsum,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Single,
    Double,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dense,
    Trotter,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark circuit and print a JSON report.
    Simulate {
        /// `qft`, `variational`, `bv` or a path to an OpenQASM 2.0 file.
        circuit: String,
        #[arg(long, default_value_t = 10)]
        nqubits: usize,
        #[arg(long, value_enum, default_value = "inplace")]
        backend: BackendArg,
        #[arg(long, value_enum, default_value = "double")]
        precision: PrecisionArg,
        #[arg(long)]
        fuse: bool,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rotation angle of the variational circuit.
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        /// Draw this many shots from the final state.
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_state: Option<PathBuf>,
    },
    /// Adiabatic TFIM evolution from the uniform superposition.
    Evolve {
        #[arg(long, default_value_t = 4)]
        nqubits: usize,
        #[arg(long = "T", default_value_t = 1.0)]
        total_time: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, value_enum, default_value = "trotter")]
        method: MethodArg,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, value_enum, default_value = "linear")]
        schedule: ScheduleArg,
        /// Open chain instead of a ring.
        #[arg(long)]
        open: bool,
    },
    /// Print gate counts and depths before and after fusion.
    FuseOnly { qasm: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CapacityExceeded { .. } | Error::ResourceError { .. } => 4,
        Error::InvalidArgument(_) | Error::OddQubits(_) | Error::UnsupportedMaxQubits(_) => 2,
        _ => 3,
    }
}

fn emit(line: &str, out: Option<&PathBuf>) -> svsim::Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{line}\n")).map_err(|e| Error::Io {
            context: format!("writing {}", path.display()),
            source: e,
        }),
        None => {
            println!("{line}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> svsim::Result<()> {
    match cli.command {
        Command::Simulate {
            circuit,
            nqubits,
            backend,
            precision,
            fuse,
            repeats,
            threads,
            seed,
            theta,
            shots,
            out,
            dump_state,
        } => {
            let source = match circuit.as_str() {
                "qft" => CircuitSource::Qft,
                "variational" => CircuitSource::Variational { theta },
                "bv" => CircuitSource::Bv,
                path => CircuitSource::Qasm(PathBuf::from(path)),
            };
            let mut config = BenchConfig::new(source, nqubits);
            config.backend = match backend {
                BackendArg::Inplace => Backend::InPlace,
                BackendArg::Oracle => Backend::Oracle,
                BackendArg::Einsum => Backend::Einsum,
            };
            config.precision = match precision {
                PrecisionArg::Single => Precision::Single,
                PrecisionArg::Double => Precision::Double,
            };
            config.fuse = fuse;
            config.repeats = repeats;
            config.threads = threads;
            config.seed = seed;
            config.shots = shots;
            config.dump_state = dump_state;
            let report = run_benchmark(&config)?;
            emit(&report.to_json_line(), out.as_ref())
        }
        Command::Evolve {
            nqubits,
            total_time,
            dt,
            method,
            h,
            schedule,
            open,
        } => {
            let spec = TfimSpec::with_field(nqubits, h, !open)?;
            let sched = match schedule {
                ScheduleArg::Linear => AdiabaticSchedule::linear(total_time, dt)?,
            };
            let method = match method {
                MethodArg::Dense => EvolutionMethod::Dense,
                MethodArg::Trotter => EvolutionMethod::Trotter,
            };
            let start = Instant::now();
            let state = adiabatic_evolve(&spec, &sched, method, Backend::InPlace)?;
            let wall_s = start.elapsed().as_secs_f64();
            let target = tfim_hamiltonian(&spec, 1.0, HamiltonianForm::LocalSum)?;
            let energy = target.expectation(&state)?;
            let ground = if nqubits <= DENSE_MAX_QUBITS.min(12) {
                Some(ground_energy(&target)?)
            } else {
                None
            };
            let line = json!({
                "nqubits": nqubits,
                "T": total_time,
                "dt": dt,
                "steps": sched.steps().len(),
                "method": method,
                "h": h,
                "periodic": !open,
                "schedule": sched.schedule().name(),
                "final_energy": energy,
                "ground_energy": ground,
                "norm": state.norm(),
                "wall_s": wall_s,
            });
            emit(&line.to_string(), None)
        }
        Command::FuseOnly { qasm } => {
            let (circuit, provenance) = svsim::bench::load_fixture(&qasm)?;
            let fused = fuse(&circuit, 2)?;
            let line = json!({
                "circuit": qasm.display().to_string(),
                "nqubits": circuit.nqubits(),
                "before": {"gate_count": circuit.gate_count(), "depth": circuit.depth()},
                "after": {"gate_count": fused.gate_count(), "depth": fused.depth()},
                "provenance": provenance,
            });
            emit(&line.to_string(), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
