//! Fidelity decay by definition, by the exact trace formula, and by Monte
//! Carlo over random initial states; Haar-moment checks of the symmetric
//! projector identity.

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    binomial, inner, symmetric_projector, CMatrix, PureState, MAX_SYMMETRIZER_ORDER,
};
use crate::spinsys::MapPair;
use crate::stats::RunningStats;

/// States per worker chunk. Each chunk draws from its own ChaCha stream, so
/// results do not depend on the number of threads.
const CHUNK: usize = 64;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_vector(dim: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..dim)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Haar-random unitary: Gram-Schmidt on the columns of a complex Ginibre
/// matrix (equivalent to QR with a positive diagonal in `R`).
pub fn haar_unitary(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let mut columns: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    while columns.len() < dim {
        let mut v = gaussian_vector(dim, rng);
        // Two passes of modified Gram-Schmidt for orthogonality to rounding.
        for _ in 0..2 {
            for q in &columns {
                let proj = inner(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= proj * y;
                }
            }
        }
        let norm = v.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        columns.push(v);
    }
    CMatrix::from_fn(dim, dim, |i, j| columns[j][i])
}

/// Seeded source of Haar-random pure states.
#[derive(Clone, Debug)]
pub struct HaarSampler {
    dim: usize,
    seed: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl HaarSampler {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self::with_stream(dim, seed, 0)
    }

    /// Independent stream `stream` of the same seed.
    pub fn with_stream(dim: usize, seed: u64, stream: u64) -> Self {
        Self {
            dim,
            seed,
            counter: 0,
            rng: stream_rng(seed, stream),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// States drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// A normalized complex-Gaussian vector.
    pub fn next_state(&mut self) -> PureState {
        loop {
            let v = gaussian_vector(self.dim, &mut self.rng);
            if let Ok(s) = PureState::normalized(v) {
                self.counter += 1;
                return s;
            }
        }
    }
}

pub fn haar_state(sampler: &mut HaarSampler) -> PureState {
    sampler.next_state()
}

/// Distribution of initial states for Monte Carlo averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateSampler {
    Haar,
    /// Random computational basis states, distinct while `M <= N`.
    #[default]
    Basis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    MonteCarlo(StateSampler),
    Dqc1,
}

/// Per-step fidelity estimates from one estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelitySeries {
    pub estimator: Estimator,
    pub n_values: Vec<usize>,
    pub mean: Vec<f64>,
    /// Zero for the exact estimator.
    pub stderr: Vec<f64>,
    /// States (Monte Carlo) or shots per axis (probe experiment); 0 when exact.
    pub sample_count: usize,
    pub rng_seed: Option<u64>,
}

impl FidelitySeries {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// `|<psi| (U^n)^dag U_p^n |psi>|^2`.
pub fn fidelity_single(pair: &MapPair, psi: &PureState, n: usize) -> Result<f64> {
    Ok(*fidelity_single_series(pair, psi, n)?
        .last()
        .expect("n_max + 1 entries"))
}

/// [`fidelity_single`] for every `n` in `0..=n_max`, by evolving the two
/// state vectors one step at a time.
pub fn fidelity_single_series(pair: &MapPair, psi: &PureState, n_max: usize) -> Result<Vec<f64>> {
    if psi.dim() != pair.dim() {
        return Err(Error::invalid(format!(
            "state dimension {} does not match map dimension {}",
            psi.dim(),
            pair.dim()
        )));
    }
    let mut a = psi.amplitudes().to_vec();
    let mut b = a.clone();
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            a = pair.u().apply(&a)?;
            b = pair.u_p().apply(&b)?;
        }
        out.push(inner(&a, &b).norm_sqr());
    }
    Ok(out)
}

/// `Tr((U^n)^dag U_p^n)` for `n` in `0..=n_max`, accumulating powers.
pub fn trace_series(pair: &MapPair, n_max: usize) -> Vec<Complex64> {
    let dim = pair.dim();
    if pair.u() == pair.u_p() {
        return vec![Complex64::new(dim as f64, 0.0); n_max + 1];
    }
    let mut un = CMatrix::identity(dim);
    let mut upn = CMatrix::identity(dim);
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            un = pair.u().matmul(&un).expect("square");
            upn = pair.u_p().matmul(&upn).expect("square");
        }
        out.push(un.dagger().trace_of_product(&upn).expect("square"));
    }
    out
}

/// `(|t|^2 + N) / (N^2 + N)` for a trace `t` of an `N`-dimensional operator.
pub fn average_fidelity_from_trace(trace: Complex64, dim: usize) -> f64 {
    let n = dim as f64;
    (trace.norm_sqr() + n) / (n * n + n)
}

/// Haar-averaged fidelity after `n` steps, exactly.
pub fn exact_average_fidelity(pair: &MapPair, n: usize) -> f64 {
    let t = *trace_series(pair, n).last().expect("n + 1 entries");
    average_fidelity_from_trace(t, pair.dim())
}

pub fn exact_average_fidelity_series(pair: &MapPair, n_max: usize) -> FidelitySeries {
    let mean = trace_series(pair, n_max)
        .into_iter()
        .map(|t| average_fidelity_from_trace(t, pair.dim()))
        .collect();
    FidelitySeries {
        estimator: Estimator::Exact,
        n_values: (0..=n_max).collect(),
        mean,
        stderr: vec![0.0; n_max + 1],
        sample_count: 0,
        rng_seed: None,
    }
}

/// Mean and standard error of `F_n(psi)` over `samples` initial states.
pub fn mc_average_fidelity(
    pair: &MapPair,
    n_max: usize,
    samples: usize,
    seed: u64,
    sampler: StateSampler,
) -> Result<FidelitySeries> {
    if samples < 2 {
        return Err(Error::invalid(
            "Monte Carlo averages need at least 2 samples",
        ));
    }
    let dim = pair.dim();
    let basis_indices: Vec<usize> = match sampler {
        StateSampler::Haar => Vec::new(),
        StateSampler::Basis => {
            let mut rng = stream_rng(seed, u64::MAX);
            if samples <= dim {
                index::sample(&mut rng, dim, samples).into_vec()
            } else {
                (0..samples).map(|_| rng.random_range(0..dim)).collect()
            }
        }
    };

    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Vec<RunningStats>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<RunningStats>> {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(samples);
            let mut haar = HaarSampler::with_stream(dim, seed, c as u64);
            let mut stats = vec![RunningStats::default(); n_max + 1];
            // Haar runs leave `basis_indices` empty, so index rather than iterate it.
            #[allow(clippy::needless_range_loop)]
            for s in lo..hi {
                let psi = match sampler {
                    StateSampler::Haar => haar.next_state(),
                    StateSampler::Basis => PureState::basis(dim, basis_indices[s])?,
                };
                for (acc, f) in stats
                    .iter_mut()
                    .zip(fidelity_single_series(pair, &psi, n_max)?)
                {
                    acc.push(f);
                }
            }
            Ok(stats)
        })
        .collect::<Result<_>>()?;

    let mut total = vec![RunningStats::default(); n_max + 1];
    for chunk in &partial {
        for (acc, s) in total.iter_mut().zip(chunk) {
            acc.merge(s);
        }
    }
    Ok(FidelitySeries {
        estimator: Estimator::MonteCarlo(sampler),
        n_values: (0..=n_max).collect(),
        mean: total.iter().map(RunningStats::mean).collect(),
        stderr: total.iter().map(RunningStats::stderr).collect(),
        sample_count: samples,
        rng_seed: Some(seed),
    })
}

/// Monte Carlo estimate of a complex mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub samples: usize,
}

impl MomentEstimate {
    /// Combined standard error `sqrt(se_re^2 + se_im^2)`.
    pub fn stderr(&self) -> f64 {
        self.stderr_re.hypot(self.stderr_im)
    }

    /// `|mean - value| <= k * stderr`.
    pub fn agrees_with(&self, value: Complex64, k: f64) -> bool {
        (self.mean - value).norm() <= k * self.stderr()
    }
}

fn check_moment_ops(ops: &[CMatrix]) -> Result<usize> {
    if ops.is_empty() || ops.len() > MAX_SYMMETRIZER_ORDER {
        return Err(Error::invalid(format!(
            "number of operators must be in 1..={MAX_SYMMETRIZER_ORDER}, got {}",
            ops.len()
        )));
    }
    let dim = ops[0].rows();
    if ops.iter().any(|a| !a.is_square() || a.rows() != dim) {
        return Err(Error::invalid(
            "operators must be square and share one dimension",
        ));
    }
    Ok(dim)
}

/// Haar average of `<A>_psi <B>_psi …` by sampling.
pub fn haar_moment_lhs(ops: &[CMatrix], samples: usize, seed: u64) -> Result<MomentEstimate> {
    let dim = check_moment_ops(ops)?;
    if samples < 2 {
        return Err(Error::invalid(
            "Monte Carlo averages need at least 2 samples",
        ));
    }
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(RunningStats, RunningStats)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sampler = HaarSampler::with_stream(dim, seed, c as u64);
            let mut re = RunningStats::default();
            let mut im = RunningStats::default();
            for _ in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let psi = sampler.next_state();
                let value: Complex64 = ops
                    .iter()
                    .map(|a| psi.expectation(a).expect("dimension checked"))
                    .product();
                re.push(value.re);
                im.push(value.im);
            }
            (re, im)
        })
        .collect();
    let (mut re, mut im) = (RunningStats::default(), RunningStats::default());
    for (r, i) in &partial {
        re.merge(r);
        im.merge(i);
    }
    Ok(MomentEstimate {
        mean: Complex64::new(re.mean(), im.mean()),
        stderr_re: re.stderr(),
        stderr_im: im.stderr(),
        samples,
    })
}

/// `Tr((A ⊗ B ⊗ …) P_S) / C(N + ell - 1, ell)`, evaluated with the dense
/// symmetric projector.
pub fn haar_moment_rhs(ops: &[CMatrix]) -> Result<Complex64> {
    let dim = check_moment_ops(ops)?;
    let ell = ops.len();
    let projector = symmetric_projector(dim, ell)?;
    let product = ops[1..].iter().fold(ops[0].clone(), |acc, a| acc.kron(a));
    let norm = binomial((dim + ell - 1) as u64, ell as u64);
    Ok(product.trace_of_product(&projector)? / norm)
}

/// `(Tr A Tr B + Tr AB) / (N^2 + N)`.
pub fn two_operator_average(a: &CMatrix, b: &CMatrix) -> Result<Complex64> {
    let n = check_moment_ops(&[a.clone(), b.clone()])? as f64;
    Ok((a.trace()? * b.trace()? + a.trace_of_product(b)?) / (n * n + n))
}
