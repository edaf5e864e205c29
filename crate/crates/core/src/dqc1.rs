//! One-clean-qubit probe experiment.
//!
//! A probe qubit with polarization `gamma` conditionally applies the kicks
//! `P_j` to a maximally mixed `N`-dimensional register that otherwise evolves
//! under `U_j`. After `k` steps the joint state is
//!
//! ```text
//! rho_k = (1/N) ( |a|^2 |0><0| ⊗ I + a b* |0><1| ⊗ S^dag
//!               + a* b |1><0| ⊗ S   + |b|^2 |1><1| ⊗ I )
//! ```
//!
//! with `S = U_k P_k … U_1 P_1 U_1^dag … U_k^dag`, so the state is carried as
//! the probe amplitudes plus `S` rather than as a `2N x 2N` density matrix.
//!
//! Readout convention: the probe is prepared with `R_y(pi/2)|0>`; readout axis
//! `x` applies `R_y(-pi/2)` and axis `y` applies `R_x(pi/2)` before measuring
//! `sigma_z`, so `<sigma_z> = gamma Re(Tr S / N)` and `gamma Im(Tr S / N)`
//! respectively.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{Estimator, FidelitySeries};
use crate::linalg::{unitary_eigen, CMatrix, NORM_TOL};
use crate::spinsys::MapPair;

/// Frobenius tolerance of the separability certificate.
pub const SEPARABILITY_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutAxis {
    #[default]
    X,
    Y,
}

/// Polarization, shot budget and readout settings of the probe experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DQC1Config {
    pub gamma: f64,
    /// Shots per readout axis.
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub readout_axis: ReadoutAxis,
    /// Additive Gaussian noise on each single-shot `sigma_z` outcome.
    #[serde(default)]
    pub readout_noise_sd: f64,
}

impl DQC1Config {
    pub fn new(gamma: f64, shots: u64, seed: u64) -> Result<Self> {
        let cfg = Self {
            gamma,
            shots,
            seed,
            readout_axis: ReadoutAxis::X,
            readout_noise_sd: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!(
                "polarization gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.shots == 0 {
            return Err(Error::invalid("shots must be at least 1"));
        }
        if !(self.readout_noise_sd >= 0.0 && self.readout_noise_sd.is_finite()) {
            return Err(Error::invalid(
                "readout noise must be a finite non-negative number",
            ));
        }
        Ok(())
    }
}

/// Probe amplitudes and accumulated register operator `S` after `steps` steps.
#[derive(Clone, Debug)]
pub struct ProbeRegisterState {
    pub alpha: Complex64,
    pub beta: Complex64,
    s: CMatrix,
    steps: usize,
}

impl ProbeRegisterState {
    /// Probe in `(|0> + |1>)/sqrt(2)`, register untouched.
    pub fn new(dim: usize) -> Self {
        let a = Complex64::new(FRAC_1_SQRT_2, 0.0);
        Self {
            alpha: a,
            beta: a,
            s: CMatrix::identity(dim),
            steps: 0,
        }
    }

    pub fn with_probe(dim: usize, alpha: Complex64, beta: Complex64) -> Result<Self> {
        if ((alpha.norm_sqr() + beta.norm_sqr()).sqrt() - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(
                "probe amplitudes must satisfy |a|^2 + |b|^2 = 1",
            ));
        }
        Ok(Self {
            alpha,
            beta,
            ..Self::new(dim)
        })
    }

    pub fn dim(&self) -> usize {
        self.s.rows()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// The accumulated operator `S`.
    pub fn s(&self) -> &CMatrix {
        &self.s
    }

    /// Controlled `p`, then `u` on the register: `S <- U P S U^dag`.
    pub fn step(&mut self, u: &CMatrix, p: &CMatrix) -> Result<()> {
        let dim = self.dim();
        if [u, p].iter().any(|m| m.rows() != dim || m.cols() != dim) {
            return Err(Error::invalid(format!(
                "step operators must be {dim}x{dim}"
            )));
        }
        self.s = u.matmul(p)?.matmul(&self.s)?.matmul(&u.dagger())?;
        self.steps += 1;
        Ok(())
    }

    /// `Tr S / N`.
    pub fn normalized_trace(&self) -> Complex64 {
        self.s.trace().expect("square") / self.dim() as f64
    }

    /// Probe density matrix after tracing out the register (pure probe).
    pub fn reduced_probe(&self) -> [[Complex64; 2]; 2] {
        let t = self.normalized_trace();
        let (a, b) = (self.alpha, self.beta);
        [
            [Complex64::new(a.norm_sqr(), 0.0), a * b.conj() * t.conj()],
            [a.conj() * b * t, Complex64::new(b.norm_sqr(), 0.0)],
        ]
    }

    /// `rho_k` on probe ⊗ register (probe index most significant).
    pub fn density_matrix(&self) -> CMatrix {
        let n = self.dim();
        let (a, b) = (self.alpha, self.beta);
        let inv_n = 1.0 / n as f64;
        let s = &self.s;
        CMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let (pr, i) = (r / n, r % n);
            let (pc, j) = (c / n, c % n);
            let delta = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            };
            let v = match (pr, pc) {
                (0, 0) => a.norm_sqr() * delta,
                (0, 1) => a * b.conj() * s[(j, i)].conj(),
                (1, 0) => a.conj() * b * s[(i, j)],
                _ => b.norm_sqr() * delta,
            };
            v * inv_n
        })
    }
}

/// Runs the probe circuit over `steps = [(U_1, P_1), …, (U_n, P_n)]`.
pub fn evolve_probe_register(
    steps: &[(CMatrix, CMatrix)],
    dim: usize,
) -> Result<ProbeRegisterState> {
    let mut state = ProbeRegisterState::new(dim);
    for (u, p) in steps {
        state.step(u, p)?;
    }
    Ok(state)
}

/// `n` repetitions of `(U, P = U^dag U_p)`.
pub fn evolve_map_pair(pair: &MapPair, n: usize) -> Result<ProbeRegisterState> {
    let p = pair.u().dagger().matmul(pair.u_p())?;
    let mut state = ProbeRegisterState::new(pair.dim());
    for _ in 0..n {
        state.step(pair.u(), &p)?;
    }
    Ok(state)
}

fn rotation_y(theta: f64) -> CMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    CMatrix::from_vec(2, 2, vec![c.into(), (-s).into(), s.into(), c.into()]).expect("2x2")
}

fn rotation_x(theta: f64) -> CMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let m = Complex64::new(0.0, -s);
    CMatrix::from_vec(2, 2, vec![c.into(), m, m, c.into()]).expect("2x2")
}

fn readout_rotation(axis: ReadoutAxis) -> CMatrix {
    match axis {
        ReadoutAxis::X => rotation_y(-std::f64::consts::FRAC_PI_2),
        ReadoutAxis::Y => rotation_x(std::f64::consts::FRAC_PI_2),
    }
}

/// Noise-free `<sigma_z>` of the probe after the readout rotation.
pub fn expected_sigma_z(state: &ProbeRegisterState, cfg: &DQC1Config) -> f64 {
    expected_sigma_z_on(state, cfg.gamma, cfg.readout_axis)
}

fn expected_sigma_z_on(state: &ProbeRegisterState, gamma: f64, axis: ReadoutAxis) -> f64 {
    let pure = state.reduced_probe();
    let half = Complex64::new(0.5, 0.0);
    // The (1 - gamma) I/2 part of the pseudo-pure probe is invariant under
    // every gate in the circuit and contributes no signal.
    let rho = CMatrix::from_fn(2, 2, |i, j| {
        gamma * pure[i][j] + if i == j { (1.0 - gamma) * half } else { ZERO }
    });
    let r = readout_rotation(axis);
    let rotated = r
        .matmul(&rho)
        .and_then(|m| m.matmul(&r.dagger()))
        .expect("2x2");
    rotated[(0, 0)].re - rotated[(1, 1)].re
}

/// Shot-noise estimate of `Tr S / N` from both readout axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub re_mean: f64,
    pub im_mean: f64,
    pub re_stderr: f64,
    pub im_stderr: f64,
    pub shots_used: u64,
    pub gamma_corrected: bool,
}

impl TraceEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re_mean, self.im_mean)
    }
}

struct AxisEstimate {
    mean: f64,
    stderr: f64,
}

/// Samples `shots` outcomes of `sigma_z` with mean `expected`, then undoes the
/// affine readout map `m = gamma * value`.
fn sample_axis(expected: f64, cfg: &DQC1Config, rng: &mut impl Rng) -> Result<AxisEstimate> {
    let p = ((1.0 + expected) / 2.0).clamp(0.0, 1.0);
    let ups = Binomial::new(cfg.shots, p)
        .map_err(|e| Error::invalid(format!("bad outcome probability {p}: {e}")))?
        .sample(rng);
    let shots = cfg.shots as f64;
    let p_hat = ups as f64 / shots;
    let mut mean = 2.0 * p_hat - 1.0;
    let mut var = 4.0 * p_hat * (1.0 - p_hat) / shots;
    if cfg.readout_noise_sd > 0.0 {
        let sd = cfg.readout_noise_sd / shots.sqrt();
        mean += Normal::new(0.0, sd).expect("finite sd").sample(rng);
        var += sd * sd;
    }
    Ok(AxisEstimate {
        mean: mean / cfg.gamma,
        stderr: var.sqrt() / cfg.gamma,
    })
}

fn shot_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the experiment on both axes with `cfg.shots` shots each. The random
/// stream is derived from `(cfg.seed, state.steps())`.
pub fn sample_shots(state: &ProbeRegisterState, cfg: &DQC1Config) -> Result<TraceEstimate> {
    cfg.validate()?;
    let mut rng = shot_rng(cfg.seed, state.steps() as u64);
    sample_shots_with(state, cfg, &mut rng)
}

fn sample_shots_with(
    state: &ProbeRegisterState,
    cfg: &DQC1Config,
    rng: &mut impl Rng,
) -> Result<TraceEstimate> {
    let x = sample_axis(
        expected_sigma_z_on(state, cfg.gamma, ReadoutAxis::X),
        cfg,
        rng,
    )?;
    let y = sample_axis(
        expected_sigma_z_on(state, cfg.gamma, ReadoutAxis::Y),
        cfg,
        rng,
    )?;
    Ok(TraceEstimate {
        re_mean: x.mean,
        im_mean: y.mean,
        re_stderr: x.stderr,
        im_stderr: y.stderr,
        shots_used: 2 * cfg.shots,
        gamma_corrected: true,
    })
}

/// Average fidelity from a sampled normalized trace `t = Tr S / N`.
///
/// `|t|^2` is debiased by subtracting the estimator variances; the returned
/// standard error is that of `re^2 + im^2` for Gaussian estimates,
/// `sqrt(4 re^2 se_re^2 + 2 se_re^4 + 4 im^2 se_im^2 + 2 se_im^4)`, scaled by
/// `N^2 / (N^2 + N)`.
pub fn fidelity_from_trace_estimate(est: &TraceEstimate, dim: usize) -> (f64, f64) {
    let n = dim as f64;
    let (re, im) = (est.re_mean, est.im_mean);
    let (vr, vi) = (est.re_stderr.powi(2), est.im_stderr.powi(2));
    let abs2 = re * re + im * im - vr - vi;
    let fidelity = (n * n * abs2 + n) / (n * n + n);
    let var_abs2 = 4.0 * re * re * vr + 2.0 * vr * vr + 4.0 * im * im * vi + 2.0 * vi * vi;
    (fidelity, n * n / (n * n + n) * var_abs2.sqrt())
}

/// Average fidelity for `n` in `0..=n_max` estimated from the probe readout.
pub fn dqc1_average_fidelity(
    pair: &MapPair,
    n_max: usize,
    cfg: &DQC1Config,
) -> Result<FidelitySeries> {
    Ok(dqc1_run(pair, n_max, cfg)?.0)
}

/// [`dqc1_average_fidelity`] together with the per-step trace estimates.
pub fn dqc1_run(
    pair: &MapPair,
    n_max: usize,
    cfg: &DQC1Config,
) -> Result<(FidelitySeries, Vec<TraceEstimate>)> {
    cfg.validate()?;
    let dim = pair.dim();
    let p = pair.u().dagger().matmul(pair.u_p())?;
    let mut state = ProbeRegisterState::new(dim);
    let mut mean = Vec::with_capacity(n_max + 1);
    let mut stderr = Vec::with_capacity(n_max + 1);
    let mut traces = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            state.step(pair.u(), &p)?;
        }
        let est = sample_shots(&state, cfg)?;
        let (f, se) = fidelity_from_trace_estimate(&est, dim);
        mean.push(f);
        stderr.push(se);
        traces.push(est);
    }
    let series = FidelitySeries {
        estimator: Estimator::Dqc1,
        n_values: (0..=n_max).collect(),
        mean,
        stderr,
        sample_count: cfg.shots as usize,
        rng_seed: Some(cfg.seed),
    };
    Ok((series, traces))
}

/// Result of rebuilding `rho_k` from the eigenbasis of `S`.
#[derive(Clone, Debug)]
pub struct SeparabilityReport {
    /// Eigenphases `s_j` of `S`.
    pub eigenphases: Vec<f64>,
    /// Probe factor `a|0> + b e^{i s_j}|1>` of each product term; every term
    /// is `(1/N) |alpha_j><alpha_j| ⊗ |phi_j><phi_j|`.
    pub probe_states: Vec<[Complex64; 2]>,
    /// `||rho_reconstructed - rho_k||_F`.
    pub distance: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Rebuilds `rho_k` as a mixture of product states from the eigenbasis of `S`
/// and compares it with the closed-form joint state.
pub fn separability_check(state: &ProbeRegisterState) -> Result<SeparabilityReport> {
    let n = state.dim();
    let eig = unitary_eigen(state.s())?;
    let probe_states: Vec<[Complex64; 2]> = eig
        .phases
        .iter()
        .map(|&s| [state.alpha, state.beta * Complex64::from_polar(1.0, s)])
        .collect();

    let mut rebuilt = CMatrix::zeros(2 * n, 2 * n);
    let inv_n = 1.0 / n as f64;
    for (j, probe) in probe_states.iter().enumerate() {
        let phi = eig.eigenvectors.column(j);
        let ket: Vec<Complex64> = probe
            .iter()
            .flat_map(|&p| phi.iter().map(move |&x| p * x))
            .collect();
        let slice = rebuilt.as_mut_slice();
        for (r, kr) in ket.iter().enumerate() {
            for (c, kc) in ket.iter().enumerate() {
                slice[r * 2 * n + c] += kr * kc.conj() * inv_n;
            }
        }
    }
    let distance = rebuilt.frobenius_distance(&state.density_matrix())?;
    Ok(SeparabilityReport {
        eigenphases: eig.phases,
        probe_states,
        distance,
        tolerance: SEPARABILITY_TOL,
        passed: distance <= SEPARABILITY_TOL,
    })
}

/// Magnitude of the probe coherence relative to its initial value,
/// `|rho_01(k)| / |rho_01(0)| = |Tr S| / N`.
pub fn decoherence_factor(state: &ProbeRegisterState) -> f64 {
    let initial = (state.alpha * state.beta.conj()).norm();
    if initial == 0.0 {
        return state.normalized_trace().norm();
    }
    state.reduced_probe()[0][1].norm() / initial
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::{haar_unitary, trace_series};
    use crate::linalg::test_util::{c, random_hermitian};
    use crate::spinsys::{make_map_pair, PerturbationSpec};

    fn random_pair(dim: usize, delta: f64, seed: u64) -> MapPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = haar_unitary(dim, &mut rng);
        let spec = PerturbationSpec::new(delta, random_hermitian(dim, &mut rng)).unwrap();
        make_map_pair(u, &spec).unwrap()
    }

    fn cfg(gamma: f64, axis: ReadoutAxis) -> DQC1Config {
        DQC1Config {
            readout_axis: axis,
            ..DQC1Config::new(gamma, 1000, 0).unwrap()
        }
    }

    #[test]
    fn no_steps_leaves_identity() {
        let state = evolve_probe_register(&[], 3).unwrap();
        assert_eq!(state.s(), &CMatrix::identity(3));
        assert_eq!(state.normalized_trace(), c(1.0, 0.0));
    }

    #[test]
    fn absent_kicks_leave_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let steps: Vec<_> = (0..4)
            .map(|_| (haar_unitary(3, &mut rng), CMatrix::identity(3)))
            .collect();
        let state = evolve_probe_register(&steps, 3).unwrap();
        assert!(state.s().frobenius_distance(&CMatrix::identity(3)).unwrap() < 1e-12);
    }

    #[test]
    fn constant_steps_match_direct_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = haar_unitary(4, &mut rng);
        let p = haar_unitary(4, &mut rng);
        let state = evolve_probe_register(&vec![(u.clone(), p.clone()); 3], 4).unwrap();
        let u3 = u.matmul(&u).unwrap().matmul(&u).unwrap();
        let up = u.matmul(&p).unwrap();
        let up3 = up.matmul(&up).unwrap().matmul(&up).unwrap();
        let direct = u3.dagger().matmul(&up3).unwrap().trace().unwrap();
        assert!((state.s().trace().unwrap() - direct).norm() < 1e-10);
    }

    #[test]
    fn step_order_follows_definition() {
        // S = U2 P2 U1 P1 U1^dag U2^dag with distinct step operators.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ops: Vec<CMatrix> = (0..4).map(|_| haar_unitary(3, &mut rng)).collect();
        let (u1, p1, u2, p2) = (&ops[0], &ops[1], &ops[2], &ops[3]);
        let state = evolve_probe_register(&[(u1.clone(), p1.clone()), (u2.clone(), p2.clone())], 3)
            .unwrap();
        let want = [u2, p2, u1, p1, &u1.dagger(), &u2.dagger()]
            .iter()
            .fold(CMatrix::identity(3), |acc, m| acc.matmul(m).unwrap());
        assert!(state.s().frobenius_distance(&want).unwrap() < 1e-12);
        assert!(state.s().is_unitary(1e-10));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(evolve_probe_register(&[(CMatrix::identity(2), CMatrix::identity(3))], 2).is_err());
    }

    /// Brute-force joint evolution: controlled-P then U on a 2N density matrix.
    fn brute_force_rho(steps: &[(CMatrix, CMatrix)], alpha: Complex64, beta: Complex64) -> CMatrix {
        let n = steps[0].0.rows();
        let probe = CMatrix::from_vec(
            2,
            2,
            vec![
                alpha * alpha.conj(),
                alpha * beta.conj(),
                beta * alpha.conj(),
                beta * beta.conj(),
            ],
        )
        .unwrap();
        let mut rho = probe.kron(&CMatrix::identity(n).scale(c(1.0 / n as f64, 0.0)));
        let p0 = CMatrix::from_real_diagonal(&[1.0, 0.0]);
        let p1 = CMatrix::from_real_diagonal(&[0.0, 1.0]);
        for (u, p) in steps {
            let controlled = p0.kron(&CMatrix::identity(n)).add(&p1.kron(p)).unwrap();
            let step = CMatrix::identity(2).kron(u).matmul(&controlled).unwrap();
            rho = step.matmul(&rho).unwrap().matmul(&step.dagger()).unwrap();
        }
        rho
    }

    #[test]
    fn closed_form_matches_brute_force_joint_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let steps: Vec<_> = (0..3)
            .map(|_| (haar_unitary(3, &mut rng), haar_unitary(3, &mut rng)))
            .collect();
        let (a, b) = (c(0.6, 0.0), c(0.0, 0.8));
        let mut state = ProbeRegisterState::with_probe(3, a, b).unwrap();
        for (u, p) in &steps {
            state.step(u, p).unwrap();
        }
        let direct = brute_force_rho(&steps, a, b);
        assert!(state.density_matrix().frobenius_distance(&direct).unwrap() < 1e-12);
    }

    #[test]
    fn readout_with_identity() {
        let state = ProbeRegisterState::new(2);
        assert!((expected_sigma_z(&state, &cfg(1.0, ReadoutAxis::X)) - 1.0).abs() < 1e-15);
        assert!(expected_sigma_z(&state, &cfg(1.0, ReadoutAxis::Y)).abs() < 1e-15);
    }

    #[test]
    fn readout_of_global_phase() {
        let theta = 0.83;
        let phase = Complex64::from_polar(1.0, theta);
        let s = CMatrix::from_diagonal(&[phase, phase]);
        let state = evolve_probe_register(&[(CMatrix::identity(2), s)], 2).unwrap();
        for gamma in [1.0, 0.3] {
            let x = expected_sigma_z(&state, &cfg(gamma, ReadoutAxis::X));
            let y = expected_sigma_z(&state, &cfg(gamma, ReadoutAxis::Y));
            assert!((x - gamma * theta.cos()).abs() < 1e-14);
            assert!((y - gamma * theta.sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn readout_matches_trace_for_random_evolution() {
        let pair = random_pair(5, 0.7, 5);
        let state = evolve_map_pair(&pair, 4).unwrap();
        let t = state.normalized_trace();
        assert!((expected_sigma_z(&state, &cfg(0.4, ReadoutAxis::X)) - 0.4 * t.re).abs() < 1e-14);
        assert!((expected_sigma_z(&state, &cfg(0.4, ReadoutAxis::Y)) - 0.4 * t.im).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        assert!(DQC1Config::new(0.0, 10, 0).is_err());
        assert!(DQC1Config::new(1.1, 10, 0).is_err());
        assert!(DQC1Config::new(0.5, 0, 0).is_err());
        let mut c = DQC1Config::new(0.5, 10, 0).unwrap();
        c.readout_noise_sd = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn certain_outcome_has_zero_stderr() {
        let state = ProbeRegisterState::new(3);
        let est = sample_shots(&state, &DQC1Config::new(1.0, 17, 4).unwrap()).unwrap();
        assert_eq!(est.re_mean, 1.0);
        assert_eq!(est.re_stderr, 0.0);
        assert!(est.gamma_corrected);
        assert_eq!(est.shots_used, 34);
    }

    #[test]
    fn sampling_is_deterministic() {
        let state = evolve_map_pair(&random_pair(3, 0.5, 6), 2).unwrap();
        let cfg = DQC1Config::new(0.5, 1000, 9).unwrap();
        assert_eq!(
            sample_shots(&state, &cfg).unwrap(),
            sample_shots(&state, &cfg).unwrap()
        );
    }

    #[test]
    fn readout_noise_widens_errors() {
        let state = evolve_map_pair(&random_pair(3, 0.5, 7), 2).unwrap();
        let quiet = DQC1Config::new(0.5, 10_000, 1).unwrap();
        let noisy = DQC1Config {
            readout_noise_sd: 2.0,
            ..quiet.clone()
        };
        let a = sample_shots(&state, &quiet).unwrap();
        let b = sample_shots(&state, &noisy).unwrap();
        assert!(b.re_stderr > a.re_stderr);
    }

    #[test]
    fn unperturbed_series_is_near_one() {
        let pair = random_pair(4, 0.0, 8);
        let cfg = DQC1Config::new(1.0, 1_000_000, 3).unwrap();
        let series = dqc1_average_fidelity(&pair, 10, &cfg).unwrap();
        assert!(series.mean.iter().all(|f| (f - 1.0).abs() < 0.01));
    }

    #[test]
    fn register_trace_matches_exact_trace() {
        let pair = random_pair(6, 0.4, 10);
        let traces = trace_series(&pair, 12);
        let p = pair.u().dagger().matmul(pair.u_p()).unwrap();
        let mut state = ProbeRegisterState::new(6);
        for (n, t) in traces.iter().enumerate() {
            if n > 0 {
                state.step(pair.u(), &p).unwrap();
            }
            assert!((state.s().trace().unwrap() - t).norm() < 1e-10);
        }
    }

    #[test]
    fn separability_of_identity() {
        let report = separability_check(&ProbeRegisterState::new(4)).unwrap();
        assert!(report.passed);
        assert!(report.distance < 1e-14);
        assert!(report.eigenphases.iter().all(|s| s.abs() < 1e-15));
        assert_eq!(report.probe_states.len(), 4);
    }

    #[test]
    fn separability_of_random_evolution() {
        let state = evolve_map_pair(&random_pair(4, 0.9, 11), 5).unwrap();
        let report = separability_check(&state).unwrap();
        assert!(report.passed, "distance {}", report.distance);
        for probe in &report.probe_states {
            assert!(((probe[0].norm_sqr() + probe[1].norm_sqr()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decoherence_factor_tracks_trace() {
        assert_eq!(decoherence_factor(&ProbeRegisterState::new(3)), 1.0);
        let pair = random_pair(5, 0.6, 12);
        for n in 0..6 {
            let state = evolve_map_pair(&pair, n).unwrap();
            let d = decoherence_factor(&state);
            assert!((d - state.normalized_trace().norm()).abs() < 1e-14);
            assert!(d <= 1.0 + 1e-12);
        }
        let unperturbed = random_pair(5, 0.0, 13);
        for n in 0..6 {
            assert!(
                (decoherence_factor(&evolve_map_pair(&unperturbed, n).unwrap()) - 1.0).abs()
                    < 1e-12
            );
        }
    }

    fn kicked_top_pair(j: f64, k: f64) -> MapPair {
        use crate::spinsys::{collective_rotation_perturbation, KickedTopSystem, Spin};
        let sys = KickedTopSystem::new(Spin::new(j).unwrap(), k).unwrap();
        let spec = collective_rotation_perturbation(&sys, 0.1).unwrap();
        make_map_pair(sys.unitary().unwrap(), &spec).unwrap()
    }

    #[test]
    fn repeated_sampling_is_unbiased() {
        let state = evolve_map_pair(&random_pair(4, 0.8, 20), 3).unwrap();
        let reps = 200;
        for axis in [ReadoutAxis::X, ReadoutAxis::Y] {
            let base = DQC1Config {
                readout_axis: axis,
                ..DQC1Config::new(0.6, 10_000, 0).unwrap()
            };
            let expected = expected_sigma_z(&state, &base);
            let readings: Vec<f64> = (0..reps)
                .map(|seed| {
                    let est = sample_shots(
                        &state,
                        &DQC1Config {
                            seed,
                            ..base.clone()
                        },
                    )
                    .unwrap();
                    base.gamma
                        * match axis {
                            ReadoutAxis::X => est.re_mean,
                            ReadoutAxis::Y => est.im_mean,
                        }
                })
                .collect();
            let mean = readings.iter().sum::<f64>() / reps as f64;
            let var = readings.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let sem = (var / reps as f64).sqrt();
            assert!(
                (mean - expected).abs() <= 4.0 * sem,
                "{axis:?}: {mean} vs {expected}"
            );
        }
    }

    #[test]
    fn quadrupling_shots_halves_stderr() {
        let state = evolve_map_pair(&random_pair(4, 0.8, 21), 3).unwrap();
        let a = sample_shots(&state, &DQC1Config::new(0.5, 10_000, 1).unwrap()).unwrap();
        let b = sample_shots(&state, &DQC1Config::new(0.5, 40_000, 1).unwrap()).unwrap();
        for ratio in [a.re_stderr / b.re_stderr, a.im_stderr / b.im_stderr] {
            assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn agrees_with_exact_on_kicked_top() {
        let pair = kicked_top_pair(7.5, 12.0);
        let exact = crate::fidelity::exact_average_fidelity_series(&pair, 30);
        let cfg = DQC1Config::new(0.3, 100_000, 2026).unwrap();
        let est = dqc1_average_fidelity(&pair, 30, &cfg).unwrap();
        for n in 0..=30 {
            let diff = (est.mean[n] - exact.mean[n]).abs();
            assert!(
                diff <= 4.0 * est.stderr[n],
                "n = {n}: {diff} vs {}",
                est.stderr[n]
            );
        }
    }

    #[test]
    fn stderr_scales_inversely_with_polarization() {
        // Far into the decay the readout signal is small, where the per-shot
        // variance is independent of gamma.
        let pair = random_pair(16, 1.5, 22);
        let state = evolve_map_pair(&pair, 40).unwrap();
        assert!(state.normalized_trace().norm() < 0.3);
        let weak = sample_shots(&state, &DQC1Config::new(0.1, 10_000, 3).unwrap()).unwrap();
        let strong = sample_shots(&state, &DQC1Config::new(1.0, 10_000, 3).unwrap()).unwrap();
        for ratio in [
            weak.re_stderr / strong.re_stderr,
            weak.im_stderr / strong.im_stderr,
        ] {
            assert!((ratio / 10.0 - 1.0).abs() < 0.3, "ratio {ratio}");
        }
    }

    #[test]
    fn chaotic_decoherence_is_exponential() {
        let pair = kicked_top_pair(31.5, 12.0);
        let p = pair.u().dagger().matmul(pair.u_p()).unwrap();
        let mut state = ProbeRegisterState::new(64);
        let mut values = Vec::new();
        for _ in 0..60 {
            state.step(pair.u(), &p).unwrap();
            values.push(decoherence_factor(&state));
        }
        let ns: Vec<usize> = (1..=60).collect();
        let fit = crate::fit::fit_decay_values(&ns, &values, (1, 60)).unwrap();
        assert!(fit.gamma_fit > 0.0);
        // Deviations from a straight line stay small next to the total decay.
        assert!(fit.residual_rms < 0.1 * fit.gamma_fit * 60.0, "{fit:?}");
    }
}
