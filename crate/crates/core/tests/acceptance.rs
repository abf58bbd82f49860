//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

mod common;

use std::alloc::{GlobalAlloc, Layout, System};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use svsim::bench::{gen_bv, gen_qft, gen_variational, DEFAULT_THETA};
use svsim::circuit::{gate_matrix, GateKind};
use svsim::evolution::{
    adiabatic_evolve, ground_energy, tfim_hamiltonian, AdiabaticSchedule, EvolutionMethod, HamiltonianForm,
    TfimSpec,
};
use svsim::fusion::fuse;
use svsim::kernels::{self, apply_controlled_gate};
use svsim::measure::{probabilities, sample_shots_direct, sample_shots_metropolis, MetropolisConfig};
use svsim::qasm;
use svsim::{execute, Backend, Circuit, StateVector};

use common::{max_deviation, random_circuit, random_op, random_state};

/// Tracks the largest single allocation requested since the last reset.
struct LargestAlloc;

static LARGEST: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for LargestAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        LARGEST.fetch_max(layout.size(), Ordering::Relaxed);
        System.alloc(layout)
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        LARGEST.fetch_max(layout.size(), Ordering::Relaxed);
        System.alloc_zeroed(layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        LARGEST.fetch_max(new_size, Ordering::Relaxed);
        System.realloc(ptr, layout, new_size)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }
}

#[global_allocator]
static ALLOCATOR: LargestAlloc = LargestAlloc;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn structural_counts() -> Outcome {
    let start = Instant::now();
    let got = [
        ("qft", gen_qft(30)),
        ("variational", gen_variational(30, DEFAULT_THETA).unwrap()),
        ("bv", gen_bv(30).unwrap()),
    ]
    .map(|(name, c)| (name, c.depth(), c.gate_count()));
    let expected = [(60, 480), (4, 90), (32, 89)];
    let ok = got.iter().zip(&expected).all(|(g, e)| (g.1, g.2) == *e);
    let elapsed = start.elapsed();
    outcome(
        ok && within(elapsed, 1.0),
        format!("(depth, gates) = {:?} in {:.3} s", got, elapsed.as_secs_f64()),
    )
}

fn fusion_counts() -> Outcome {
    let start = Instant::now();
    let got = [
        ("qft", gen_qft(30)),
        ("variational", gen_variational(30, DEFAULT_THETA).unwrap()),
        ("bv", gen_bv(30).unwrap()),
    ]
    .map(|(name, c)| {
        let f = fuse(&c, 2).unwrap();
        (name, f.depth(), f.gate_count())
    });
    let expected = [(58, 450), (2, 30), (29, 29)];
    let ok = got.iter().zip(&expected).all(|(g, e)| (g.1, g.2) == *e);
    let elapsed = start.elapsed();
    outcome(
        ok && within(elapsed, 1.0),
        format!("fused (depth, gates) = {:?} in {:.3} s", got, elapsed.as_secs_f64()),
    )
}

fn kernel_vs_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let op = random_op(&mut rng, n, 2);
        let mut c = Circuit::new(n);
        c.push(op).unwrap();
        let start_state = random_state(&mut rng, n);
        let mut fast = start_state.clone();
        execute(&c, &mut fast, Backend::InPlace).unwrap();
        let mut dense = start_state;
        execute(&c, &mut dense, Backend::Oracle).unwrap();
        worst = worst.max(max_deviation(&fast, &dense));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && within(elapsed, 60.0),
        format!("1000 cases, max deviation {worst:.2e} in {:.2} s", elapsed.as_secs_f64()),
    )
}

fn bits_equal(a: &StateVector<f64>, b: &StateVector<f64>) -> bool {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
}

fn specialized_kernels() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut exact = true;
    let mut y_worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let s0 = random_state(&mut rng, n);
        let t = rng.random_range(0..n);
        let u = (t + rng.random_range(1..n)) % n;
        let controls: Vec<usize> = (0..n).filter(|&q| q != t && q != u && rng.random_bool(0.15)).collect();

        let general = |m: &svsim::GateMatrix, targets: &[usize]| {
            let mut s = s0.clone();
            apply_controlled_gate(&mut s, m, &controls, targets).unwrap();
            s
        };
        let mut x = s0.clone();
        kernels::apply_x(&mut x, &controls, t).unwrap();
        exact &= bits_equal(&x, &general(&gate_matrix(&GateKind::X), &[t]));
        let mut z = s0.clone();
        kernels::apply_z(&mut z, &controls, t).unwrap();
        exact &= bits_equal(&z, &general(&gate_matrix(&GateKind::Z), &[t]));
        let mut sw = s0.clone();
        kernels::apply_swap(&mut sw, &controls, t, u).unwrap();
        exact &= bits_equal(&sw, &general(&gate_matrix(&GateKind::Swap), &[t, u]));
        let mut y = s0.clone();
        kernels::apply_y(&mut y, &controls, t).unwrap();
        y_worst = y_worst.max(max_deviation(&y, &general(&gate_matrix(&GateKind::Y), &[t])));
    }
    outcome(
        exact && y_worst <= 1e-15,
        format!("X/Z/SWAP bit-identical: {exact}; Y max deviation {y_worst:.2e}"),
    )
}

fn in_place_memory() -> Outcome {
    let n = 24;
    let full_copy = (1usize << n) * std::mem::size_of::<Complex64>();
    let circuit = gen_qft(n);
    let mut state = StateVector::<f64>::zero(n).unwrap();
    LARGEST.store(0, Ordering::SeqCst);
    let start = Instant::now();
    execute(&circuit, &mut state, Backend::InPlace).unwrap();
    let elapsed = start.elapsed();
    let in_place_largest = LARGEST.load(Ordering::SeqCst);
    let norm_ok = (state.norm() - 1.0).abs() < 1e-9;

    // the out-of-place backend on the first layer of the same circuit
    let mut prefix = Circuit::new(n);
    for op in circuit.ops().iter().take(n) {
        prefix.push(op.clone()).unwrap();
    }
    state.reset();
    LARGEST.store(0, Ordering::SeqCst);
    execute(&prefix, &mut state, Backend::Einsum).unwrap();
    let einsum_largest = LARGEST.load(Ordering::SeqCst);
    outcome(
        in_place_largest < full_copy && einsum_largest >= full_copy && norm_ok,
        format!(
            "qft(24) in-place largest allocation {} B (full copy {} B, {:.1} s); einsum largest {} B",
            in_place_largest,
            full_copy,
            elapsed.as_secs_f64(),
            einsum_largest
        ),
    )
}

fn fusion_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut ratio = (0, 0);
    for _ in 0..50 {
        let n = rng.random_range(2..=10);
        let ngates = rng.random_range(1..=60);
        let c = random_circuit(&mut rng, n, ngates, 1);
        let f = fuse(&c, 2).unwrap();
        ratio.0 += c.gate_count();
        ratio.1 += f.gate_count();
        let mut a = StateVector::<f64>::zero(n).unwrap();
        let mut b = a.clone();
        execute(&c, &mut a, Backend::InPlace).unwrap();
        execute(&f, &mut b, Backend::InPlace).unwrap();
        worst = worst.max(max_deviation(&a, &b));
    }
    outcome(
        worst <= 1e-10,
        format!(
            "50 circuits ({} -> {} gates), max deviation {worst:.2e}",
            ratio.0, ratio.1
        ),
    )
}

/// Two-sample chi-square homogeneity test for equal sample sizes.
fn homogeneity_p_value(a: &[u64], b: &[u64]) -> f64 {
    let mut stat = 0.0;
    let mut bins = 0;
    for (&x, &y) in a.iter().zip(b) {
        if x + y > 0 {
            bins += 1;
            stat += (x as f64 - y as f64).powi(2) / (x + y) as f64;
        }
    }
    if bins < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

fn metropolis_statistics() -> Outcome {
    let start = Instant::now();
    let n = 6;
    let shots = 100_000;
    let qubits: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut min_p = 1.0f64;
    let mut deterministic = true;
    for i in 0..20u64 {
        let s = random_state(&mut rng, n);
        let cfg = MetropolisConfig::default();
        let m = sample_shots_metropolis(&s, &qubits, shots, i, cfg).unwrap();
        let again = sample_shots_metropolis(&s, &qubits, shots, i, cfg).unwrap();
        deterministic &= m == again;
        let d = sample_shots_direct(&s, &qubits, shots, 1000 + i).unwrap();
        min_p = min_p.min(homogeneity_p_value(&m.to_dense(n), &d.to_dense(n)));
    }
    let elapsed = start.elapsed();
    outcome(
        min_p > 1e-3 && deterministic && within(elapsed, 120.0),
        format!(
            "20 states x 1e5 shots, min p = {min_p:.4}, deterministic rerun: {deterministic}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

const FUZZ_ALPHABET: &[u8] = b"qcregtOPENQASM2.0;include\"qelib1.inc\"[](){},->+-*/^ \n\t0123456789pisnhxyzuecr\\#$";

fn mutate(rng: &mut ChaCha8Rng, src: &str) -> String {
    let mut bytes = src.as_bytes().to_vec();
    for _ in 0..rng.random_range(1..=4) {
        let len = bytes.len().max(1);
        let at = rng.random_range(0..len).min(bytes.len());
        match rng.random_range(0..6) {
            0 if !bytes.is_empty() => {
                let end = (at + rng.random_range(1..8)).min(bytes.len());
                bytes.drain(at..end);
            }
            1 => bytes.insert(at, FUZZ_ALPHABET[rng.random_range(0..FUZZ_ALPHABET.len())]),
            2 if !bytes.is_empty() => {
                let end = (at + rng.random_range(1..16)).min(bytes.len());
                let chunk = bytes[at..end].to_vec();
                let to = rng.random_range(0..=bytes.len());
                bytes.splice(to..to, chunk);
            }
            3 if !bytes.is_empty() => {
                let (last, other) = (bytes.len() - 1, rng.random_range(0..bytes.len()));
                bytes.swap(at.min(last), other);
            }
            4 => bytes.truncate(at),
            _ => bytes.insert(at, rng.random::<u8>()),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

fn qasm_round_trip() -> Outcome {
    let mut circuits: Vec<(String, Circuit)> = Vec::new();
    for n in [5, 10, 20] {
        circuits.push((format!("qft{n}"), gen_qft(n)));
        circuits.push((format!("bv{n}"), gen_bv(n).unwrap()));
        if n % 2 == 0 {
            circuits.push((format!("variational{n}"), gen_variational(n, DEFAULT_THETA).unwrap()));
        }
    }
    let mut mismatched = Vec::new();
    let mut sources = Vec::new();
    for (name, c) in &circuits {
        let text = qasm::emit(c).unwrap();
        match qasm::parse(&text).and_then(|p| qasm::lower(&p)) {
            Ok(back) if &back == c => {}
            _ => mismatched.push(name.clone()),
        }
        sources.push(text);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut adversarial: Vec<String> = vec![
        String::new(),
        "OPENQASM 2.0;".into(),
        format!("OPENQASM 2.0; qreg q[1]; rx({}) q[0];", "(".repeat(10_000)),
        "OPENQASM 2.0; qreg q[99999999999999999999];".into(),
        "OPENQASM 2.0; qreg q[2]; cx q[0],q[0];".into(),
        "OPENQASM 2.0; qreg q[2]; h q[5];".into(),
        "OPENQASM 2.0; qreg q[2]; u3(1/0,0,0) q[0];".into(),
    ];
    let mut panics = 0;
    let (mut ok, mut err) = (0, 0);
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    for i in 0..10_000 {
        let input = if i < adversarial.len() {
            std::mem::take(&mut adversarial[i])
        } else {
            let src = &sources[rng.random_range(0..sources.len())];
            mutate(&mut rng, src)
        };
        match panic::catch_unwind(AssertUnwindSafe(|| qasm::parse(&input).and_then(|p| qasm::lower(&p)))) {
            Ok(Ok(_)) => ok += 1,
            Ok(Err(_)) => err += 1,
            Err(_) => panics += 1,
        }
    }
    panic::set_hook(hook);
    outcome(
        mismatched.is_empty() && panics == 0,
        format!(
            "{} generator circuits round-trip (mismatches {:?}); fuzz 10000 inputs: {ok} parsed, {err} structured errors, {panics} panics",
            circuits.len(),
            mismatched
        ),
    )
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn trotter_convergence() -> Outcome {
    let start = Instant::now();
    let spec = TfimSpec::new(6).unwrap();
    let dts = [0.08, 0.04, 0.02, 0.01];
    let mut errors = Vec::new();
    for &dt in &dts {
        let sched = AdiabaticSchedule::linear(1.0, dt).unwrap();
        let dense = adiabatic_evolve(&spec, &sched, EvolutionMethod::Dense, Backend::InPlace).unwrap();
        let trotter = adiabatic_evolve(&spec, &sched, EvolutionMethod::Trotter, Backend::InPlace).unwrap();
        let err = dense
            .amplitudes()
            .iter()
            .zip(trotter.amplitudes())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        errors.push(err);
    }
    let logs_dt: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let logs_err: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let fitted = slope(&logs_dt, &logs_err);
    let elapsed = start.elapsed();
    outcome(
        (fitted - 2.0).abs() <= 0.2 && within(elapsed, 120.0),
        format!(
            "errors {:?}, log-log slope {fitted:.3}, {:.1} s",
            errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn adiabatic_ground_state() -> Outcome {
    let spec = TfimSpec::new(4).unwrap();
    let sched = AdiabaticSchedule::linear(50.0, 0.05).unwrap();
    let state = adiabatic_evolve(&spec, &sched, EvolutionMethod::Trotter, Backend::InPlace).unwrap();
    let target = tfim_hamiltonian(&spec, 1.0, HamiltonianForm::LocalSum).unwrap();
    let energy = target.expectation(&state).unwrap();
    let ground = ground_energy(&target).unwrap();
    let rel = (energy - ground).abs() / ground.abs();
    outcome(
        rel <= 0.02,
        format!("<H1> = {energy:.6}, ground = {ground:.6}, relative gap {rel:.2e}"),
    )
}

fn best_of<F: FnMut()>(runs: usize, mut f: F) -> f64 {
    (0..runs)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn relative_performance() -> Outcome {
    let n = 20;
    let c = gen_qft(n);
    let mut state = StateVector::<f64>::zero(n).unwrap();
    let in_place = best_of(3, || {
        state.reset();
        execute(&c, &mut state, Backend::InPlace).unwrap();
    });
    let out_of_place = best_of(3, || {
        state.reset();
        execute(&c, &mut state, Backend::Einsum).unwrap();
    });
    let ratio = in_place / out_of_place;
    let mut pass = ratio <= 0.5;
    let mut detail = format!(
        "qft(20) in-place {in_place:.3} s vs per-gate dense contraction {out_of_place:.3} s (ratio {ratio:.2})"
    );

    let cores = std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1);
    if cores < 4 {
        detail.push_str(&format!("; multi-thread check skipped ({cores} core(s) available)"));
    } else {
        let c24 = gen_qft(24);
        let mut s24 = StateVector::<f64>::zero(24).unwrap();
        let mut timed = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                best_of(2, || {
                    s24.reset();
                    execute(&c24, &mut s24, Backend::InPlace).unwrap();
                })
            })
        };
        let single = timed(1);
        let multi = timed(cores.min(8));
        let r = multi / single;
        pass &= r <= 0.8;
        detail.push_str(&format!(
            "; qft(24) {} threads {multi:.2} s vs 1 thread {single:.2} s (ratio {r:.2})",
            cores.min(8)
        ));
    }
    outcome(pass, detail)
}

fn bv_correctness() -> Outcome {
    let mut worst = 0.0f64;
    for n in 2..=10 {
        let mut s = StateVector::<f64>::zero(n).unwrap();
        execute(&gen_bv(n).unwrap(), &mut s, Backend::InPlace).unwrap();
        let data: Vec<usize> = (0..n - 1).collect();
        let p = probabilities(&s, &data).unwrap();
        worst = worst.max((p[(1 << (n - 1)) - 1] - 1.0).abs());
    }
    outcome(worst <= 1e-10, format!("n = 2..10, max |P(1...1) - 1| = {worst:.2e}"))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "generator structure", structural_counts),
        (2, "fusion structure", fusion_counts),
        (3, "kernel vs dense oracle", kernel_vs_oracle),
        (4, "specialized kernel exactness", specialized_kernels),
        (5, "in-place memory", in_place_memory),
        (6, "fusion semantic equivalence", fusion_equivalence),
        (7, "metropolis statistics", metropolis_statistics),
        (8, "qasm round trip and fuzz", qasm_round_trip),
        (9, "trotter convergence", trotter_convergence),
        (10, "adiabatic ground state", adiabatic_ground_state),
        (11, "relative performance", relative_performance),
        (12, "bernstein-vazirani", bv_correctness),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.2} s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
