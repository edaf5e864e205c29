//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fidelity_core::dqc1::{dqc1_average_fidelity, dqc1_run, DQC1Config};
use fidelity_core::experiment::{
    run_experiment, separability_sweep, verify_theorem, Dqc1Settings, EstimatorKind,
    ExperimentConfig, McConfig, PerturbationConfig, SystemConfig,
};
use fidelity_core::fidelity::{
    exact_average_fidelity, exact_average_fidelity_series, haar_unitary, mc_average_fidelity,
};
use fidelity_core::fit::{default_window, fit_decay};
use fidelity_core::linalg::{
    binomial, expm_i_hermitian, hermitian_eigen, permutation_operator, symmetric_projector,
    Permutation,
};
use fidelity_core::spinsys::{collective_rotation_perturbation, make_map_pair, GeneratorKind};
use fidelity_core::{
    CMatrix, Complex64, KickedTopSystem, MapPair, PerturbationSpec, Spin, StateSampler,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 2026;
const SIGMAS: f64 = 4.0;
const REFERENCE_RATE: f64 = 2.5;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn kicked_top(j: f64, k: f64, delta: f64) -> MapPair {
    let sys = KickedTopSystem::new(Spin::new(j).unwrap(), k).unwrap();
    let spec = collective_rotation_perturbation(&sys, delta).unwrap();
    make_map_pair(sys.unitary().unwrap(), &spec).unwrap()
}

fn theorem_identity() -> Outcome {
    let mut worst_sigma = 0.0f64;
    let mut worst_closed = 0.0f64;
    let mut failures = Vec::new();
    for ell in 1..=3 {
        for dim in 2..=4 {
            let report = verify_theorem(ell, dim, 5, 100_000, SEED).unwrap();
            for (i, t) in report.trials.iter().enumerate() {
                worst_sigma = worst_sigma.max(t.sigmas);
                if let Some(e) = t.closed_form_error {
                    worst_closed = worst_closed.max(e);
                }
                if !t.passed {
                    failures.push(format!("ell={ell} N={dim} trial {i}"));
                }
            }
        }
    }
    outcome(
        failures.is_empty() && worst_closed <= 1e-10,
        format!(
            "worst |lhs-rhs| = {worst_sigma:.2} stderr, worst closed-form error {worst_closed:.1e}{}",
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    )
}

fn exact_vs_monte_carlo() -> Outcome {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for k in [1.0, 12.0] {
        let pair = kicked_top(7.5, k, 0.1);
        let exact = exact_average_fidelity_series(&pair, 50);
        let mc = mc_average_fidelity(&pair, 50, 1000, SEED, StateSampler::Haar).unwrap();
        for n in 0..=50 {
            let diff = (mc.mean[n] - exact.mean[n]).abs();
            let ok = diff <= SIGMAS * mc.stderr[n] || diff <= 1e-12;
            if mc.stderr[n] > 0.0 {
                worst = worst.max(diff / mc.stderr[n]);
            }
            if !ok {
                bad.push(format!("k={k} n={n}"));
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "worst deviation {worst:.2} stderr over 102 points{}",
            fmt_bad(&bad)
        ),
    )
}

fn fmt_bad(bad: &[String]) -> String {
    if bad.is_empty() {
        String::new()
    } else {
        format!("; outside band: {}", bad.join(", "))
    }
}

fn analytic_qubit() -> Outcome {
    let mut worst = 0.0f64;
    for delta in [0.3, 1.0] {
        let sz = CMatrix::from_real_diagonal(&[0.5, -0.5]);
        let pair = make_map_pair(
            CMatrix::identity(2),
            &PerturbationSpec::new(delta, sz).unwrap(),
        )
        .unwrap();
        let series = exact_average_fidelity_series(&pair, 100);
        for (n, f) in series.mean.iter().enumerate() {
            let want = (4.0 * (n as f64 * delta / 2.0).cos().powi(2) + 2.0) / 6.0;
            worst = worst.max((f - want).abs());
        }
        worst = worst.max((exact_average_fidelity(&pair, 100) - series.mean[100]).abs());
    }
    outcome(worst <= 1e-12, format!("max error {worst:.1e}"))
}

fn dqc1_consistency() -> Outcome {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for k in [1.0, 12.0] {
        let pair = kicked_top(7.5, k, 0.1);
        let exact = exact_average_fidelity_series(&pair, 30);
        let est = dqc1_average_fidelity(&pair, 30, &DQC1Config::new(0.3, 100_000, SEED).unwrap())
            .unwrap();
        for n in 0..=30 {
            let diff = (est.mean[n] - exact.mean[n]).abs();
            worst = worst.max(diff / est.stderr[n]);
            if diff > SIGMAS * est.stderr[n] {
                bad.push(format!("k={k} n={n}"));
            }
        }
    }

    // Readout error against 1 / (gamma sqrt(shots)). The imaginary part of
    // Tr S / N vanishes in this setting, so that axis is read at zero signal,
    // where the single-shot variance is exactly 1 for every gamma.
    let pair = kicked_top(7.5, 12.0, 0.1);
    let mut worst_law = 0.0f64;
    let mut worst_shots = 0.0f64;
    for gamma in [0.1, 1.0] {
        let mut by_shots = Vec::new();
        for shots in [10_000u64, 40_000] {
            let (_, traces) =
                dqc1_run(&pair, 30, &DQC1Config::new(gamma, shots, SEED).unwrap()).unwrap();
            let law = 1.0 / (gamma * (shots as f64).sqrt());
            for t in &traces {
                worst_law = worst_law.max((t.im_stderr / law - 1.0).abs());
            }
            by_shots.push(traces);
        }
        for (a, b) in by_shots[0].iter().zip(&by_shots[1]) {
            for ratio in [a.re_stderr / b.re_stderr, a.im_stderr / b.im_stderr] {
                if ratio.is_finite() {
                    worst_shots = worst_shots.max((ratio / 2.0 - 1.0).abs());
                }
            }
        }
    }
    let passed = bad.is_empty() && worst_law <= 0.3 && worst_shots <= 0.3;
    outcome(
        passed,
        format!(
            "worst deviation {worst:.2} stderr; readout error vs 1/(gamma sqrt(shots)) off by at most {:.1}%; \
             shot-quadrupling ratio off 2 by at most {:.1}%{}",
            100.0 * worst_law,
            100.0 * worst_shots,
            fmt_bad(&bad)
        ),
    )
}

fn golden_rule_rate() -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;
    for delta in [0.05, 0.1] {
        let pair = kicked_top(31.5, 12.0, delta);
        let series = exact_average_fidelity_series(&pair, 100);
        let window = default_window(&series.n_values, &series.mean, pair.dim()).unwrap();
        let fit = fit_decay(&series, window).unwrap();
        let ratio = fit.ratio_to_quadratic_law(REFERENCE_RATE, delta);
        passed &= (ratio - 1.0).abs() <= 0.2;
        parts.push(format!(
            "delta={delta}: Gamma={:.4e} over [{}, {}], ratio {ratio:.3}",
            fit.gamma_fit, window.0, window.1
        ));
    }
    outcome(
        passed,
        format!("{} (tolerance |ratio-1| <= 0.20)", parts.join("; ")),
    )
}

fn chaos_ordering() -> Outcome {
    let delta = 0.1;
    let chaotic = exact_average_fidelity_series(&kicked_top(31.5, 12.0, delta), 100);
    let regular = exact_average_fidelity_series(&kicked_top(31.5, 1.0, delta), 100);
    let mut bad = Vec::new();
    let mut min_gap = f64::INFINITY;
    for n in 5..=50 {
        min_gap = min_gap.min(regular.mean[n] - chaotic.mean[n]);
        if chaotic.mean[n] > regular.mean[n] {
            bad.push(format!("order n={n}"));
        }
    }
    let mut min_margin = f64::INFINITY;
    for n in 21..=100 {
        let reference = (-REFERENCE_RATE * delta * delta * n as f64).exp();
        min_margin = min_margin.min(regular.mean[n] - reference);
        if regular.mean[n] <= reference {
            bad.push(format!("regular below exp(-Gamma n) at n={n}"));
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "min F(k=1) - F(k=12) on [5, 50] = {min_gap:.4}; min F(k=1) - exp(-Gamma n) on [21, 100] = {min_margin:.4}{}",
            fmt_bad(&bad)
        ),
    )
}

fn separability() -> Outcome {
    let mut worst_distance = 0.0f64;
    let mut worst_factor = 0.0f64;
    let mut all_passed = true;
    for j in [0.5, 1.5, 7.5, 31.5] {
        for k in [1.0, 12.0] {
            for step in separability_sweep(&kicked_top(j, k, 0.1), 20).unwrap() {
                worst_distance = worst_distance.max(step.distance);
                worst_factor =
                    worst_factor.max((step.decoherence_factor - step.factor_from_fidelity).abs());
                all_passed &= step.passed;
            }
        }
    }
    outcome(
        all_passed && worst_distance <= 1e-8 && worst_factor <= 1e-10,
        format!("worst Frobenius distance {worst_distance:.1e}, worst factor mismatch {worst_factor:.1e}"),
    )
}

fn kernel_properties() -> Outcome {
    let mut failures = Vec::new();
    for dim in 1..=6usize {
        for ell in 1..=4usize {
            if ell == 4 && dim > 3 {
                continue;
            }
            let p = symmetric_projector(dim, ell).unwrap();
            let scale = p.frobenius_norm().max(1.0);
            let idem = p.matmul(&p).unwrap().frobenius_distance(&p).unwrap();
            let herm = p.hermiticity_defect().unwrap();
            let tr = p.trace().unwrap();
            let want = binomial((dim + ell - 1) as u64, ell as u64);
            if idem > 1e-10 * scale
                || herm > 1e-10 * scale
                || (tr.re - want).abs() > 1e-8
                || tr.im.abs() > 1e-8
            {
                failures.push(format!("projector N={dim} ell={ell}"));
            }
            for sigma in Permutation::all(ell) {
                let w = permutation_operator(dim, &sigma).unwrap();
                if w.matmul(&p).unwrap().frobenius_distance(&p).unwrap() > 1e-10 * scale {
                    failures.push(format!("absorption N={dim} ell={ell}"));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_residual = 0.0f64;
    let mut worst_unitarity = 0.0f64;
    for dim in [1usize, 2, 3, 8, 31, 64, 128, 256] {
        let g = CMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let h = g.add(&g.dagger()).unwrap().scale(Complex64::new(0.5, 0.0));
        let e = hermitian_eigen(&h).unwrap();
        let scale = h.frobenius_norm().max(1.0);
        let residual = e.reconstruct().frobenius_distance(&h).unwrap() / scale;
        let orth = e.eigenvectors.unitarity_defect().unwrap() / (dim as f64).sqrt();
        worst_residual = worst_residual.max(residual);
        worst_unitarity = worst_unitarity.max(orth);
        if residual > 1e-10 || orth > 1e-10 || !e.eigenvalues.windows(2).all(|w| w[0] <= w[1]) {
            failures.push(format!("eigen N={dim}"));
        }
        if dim <= 64 {
            let u = expm_i_hermitian(&h, 1.7).unwrap();
            let d = u.unitarity_defect().unwrap() / (dim as f64).sqrt();
            worst_unitarity = worst_unitarity.max(d);
            if d > 1e-10 {
                failures.push(format!("expm unitarity N={dim}"));
            }
            let v = haar_unitary(dim, &mut rng);
            if v.unitarity_defect().unwrap() > 1e-10 * (dim as f64).sqrt() {
                failures.push(format!("haar unitarity N={dim}"));
            }
        }
    }

    for j in [0.5, 1.0, 1.5, 2.5, 7.5, 31.5] {
        for k in [0.0, 1.0, 12.0] {
            let sys = KickedTopSystem::new(Spin::new(j).unwrap(), k).unwrap();
            let n = sys.dim() as f64;
            let comm = sys
                .jx
                .matmul(&sys.jy)
                .unwrap()
                .sub(&sys.jy.matmul(&sys.jx).unwrap())
                .unwrap();
            let comm_err = comm
                .frobenius_distance(&sys.jz.scale(Complex64::i()))
                .unwrap();
            let casimir = [&sys.jx, &sys.jy, &sys.jz]
                .iter()
                .map(|m| m.matmul(m).unwrap())
                .reduce(|a, b| a.add(&b).unwrap())
                .unwrap();
            let cas_err = casimir
                .max_abs_diff(
                    &CMatrix::identity(sys.dim()).scale(Complex64::new(j * (j + 1.0), 0.0)),
                )
                .unwrap();
            let u = sys.unitary().unwrap();
            let pair = kicked_top(j, k, 0.1);
            let ok = comm_err <= 1e-10 * sys.jz.frobenius_norm()
                && cas_err <= 1e-8
                && u.unitarity_defect().unwrap() <= 1e-10 * n.sqrt()
                && pair.u_p().unitarity_defect().unwrap() <= 1e-10 * n.sqrt();
            if !ok {
                failures.push(format!("kicked top j={j} k={k}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "worst eigen residual {worst_residual:.1e}, worst unitarity defect {worst_unitarity:.1e}{}",
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    )
}

fn determinism() -> Outcome {
    let configs = [
        ExperimentConfig {
            system: SystemConfig::KickedTop { j: 7.5, k: 12.0 },
            perturbation: PerturbationConfig {
                delta: 0.1,
                generator: GeneratorKind::CollectiveZ,
            },
            n_max: 50,
            estimators: vec![EstimatorKind::Exact, EstimatorKind::Mc, EstimatorKind::Dqc1],
            mc: McConfig {
                samples: 1000,
                sampler: StateSampler::Haar,
            },
            dqc1: Dqc1Settings {
                gamma: 0.3,
                shots: 100_000,
                readout_noise_sd: 0.0,
            },
            seed: SEED,
            fit_window: None,
            output: None,
        },
        ExperimentConfig {
            seed: SEED,
            ..ExperimentConfig::default()
        },
    ];
    let mut mismatches = Vec::new();
    let mut bytes = 0;
    for (i, cfg) in configs.iter().enumerate() {
        let a = run_experiment(cfg).unwrap();
        let b = run_experiment(cfg).unwrap();
        bytes += a.csv.len();
        if a.csv != b.csv || a.sidecar_json().unwrap() != b.sidecar_json().unwrap() {
            mismatches.push(i);
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{} configs, {bytes} CSV bytes compared{}",
            configs.len(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; differing: {mismatches:?}")
            }
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "1 Haar-moment identity",
            Duration::from_secs(60),
            theorem_identity,
        ),
        (
            "2 exact vs Monte Carlo",
            Duration::from_secs(30),
            exact_vs_monte_carlo,
        ),
        (
            "3 analytic qubit case",
            Duration::from_secs(60),
            analytic_qubit,
        ),
        (
            "4 DQC1 consistency",
            Duration::from_secs(60),
            dqc1_consistency,
        ),
        (
            "5 golden-rule rate",
            Duration::from_secs(30),
            golden_rule_rate,
        ),
        ("6 chaos ordering", Duration::from_secs(60), chaos_ordering),
        ("7 separability", Duration::from_secs(60), separability),
        (
            "8 kernel properties",
            Duration::from_secs(60),
            kernel_properties,
        ),
        ("9 determinism", Duration::from_secs(60), determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if elapsed > budget {
            result.passed = false;
            result
                .detail
                .push_str(&format!("; exceeded {}s budget", budget.as_secs()));
        }
        if !result.passed {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({:.1}s) {}",
            if result.passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
