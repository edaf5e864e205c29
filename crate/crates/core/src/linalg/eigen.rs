use num_complex::Complex64;

use super::CMatrix;
use crate::error::{Error, Result};

/// Relative Hermiticity tolerance accepted by [`hermitian_eigen`].
pub const HERMITIAN_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 64;
const OFF_DIAGONAL_TOL: f64 = 1e-14;

/// Eigendecomposition `H = V diag(lambda) V^dag` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the eigenvector for `eigenvalues[j]`.
    pub eigenvectors: CMatrix,
}

impl HermitianEigen {
    /// `V diag(f(lambda)) V^dag`.
    pub fn apply_function(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let n = self.eigenvalues.len();
        let weights: Vec<Complex64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let v = &self.eigenvectors;
        let scaled = CMatrix::from_fn(n, n, |i, j| v[(i, j)] * weights[j]);
        scaled
            .matmul(&v.dagger())
            .expect("eigenvector matrix is square")
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply_function(|l| Complex64::new(l, 0.0))
    }
}

/// Cyclic complex Jacobi eigensolver for Hermitian matrices.
///
/// Each rotation is the unitary `[[c, s e^{i phi}], [-s e^{-i phi}, c]]` that
/// zeroes the `(p, q)` entry `|a_pq| e^{i phi}`. Sweeps run until the
/// off-diagonal Frobenius mass drops below `1e-14 ||H||_F`.
pub fn hermitian_eigen(h: &CMatrix) -> Result<HermitianEigen> {
    if !h.is_square() {
        return Err(Error::invalid(format!(
            "eigendecomposition requires a square matrix, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    let defect = h.hermiticity_defect()?;
    let norm = h.frobenius_norm();
    if defect > HERMITIAN_TOL * norm.max(1.0) {
        return Err(Error::invalid(format!(
            "matrix is not Hermitian (||H - H^dag||_F = {defect:.3e})"
        )));
    }

    let n = h.rows();
    // Symmetrize so the iteration works on an exactly Hermitian matrix.
    let mut a = CMatrix::from_fn(n, n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)].conj()));
    let mut v = CMatrix::identity(n);

    let target = OFF_DIAGONAL_TOL * norm;
    let tiny = f64::MIN_POSITIVE.max(1e-18 * norm);
    let mut converged = off_diagonal_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            let residual = off_diagonal_norm(&a) / norm.max(f64::MIN_POSITIVE);
            return Err(Error::Numeric {
                message: format!("Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"),
                residual,
            });
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= tiny {
                    continue;
                }
                rotate(&mut a, &mut v, p, q, apq, r);
                rotated = true;
            }
        }
        sweeps += 1;
        converged = !rotated || off_diagonal_norm(&a) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&x, &y| diag[x].total_cmp(&diag[y]));
    let eigenvalues = order.iter().map(|&i| diag[i]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize, apq: Complex64, r: f64) {
    let n = a.rows();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta == 0.0 {
        1.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let phase = apq / r;

    // G = [[gpp, gpq], [gqp, gqq]] acting on columns p, q.
    let gpp = Complex64::new(c, 0.0);
    let gpq = phase * s;
    let gqp = -phase.conj() * s;
    let gqq = Complex64::new(c, 0.0);

    for k in 0..n {
        let x = a[(k, p)];
        let y = a[(k, q)];
        a[(k, p)] = x * gpp + y * gqp;
        a[(k, q)] = x * gpq + y * gqq;
    }
    for k in 0..n {
        let x = a[(p, k)];
        let y = a[(q, k)];
        a[(p, k)] = gpp.conj() * x + gqp.conj() * y;
        a[(q, k)] = gpq.conj() * x + gqq.conj() * y;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let x = v[(k, p)];
        let y = v[(k, q)];
        v[(k, p)] = x * gpp + y * gqp;
        v[(k, q)] = x * gpq + y * gqq;
    }
}

/// `exp(-i t H)` for Hermitian `H`, through its eigendecomposition.
pub fn expm_i_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = hermitian_eigen(h)?;
    Ok(eig.apply_function(|l| Complex64::from_polar(1.0, -t * l)))
}

/// Spectral decomposition `S = W diag(e^{i s_j}) W^dag` of a unitary matrix.
#[derive(Clone, Debug)]
pub struct UnitaryEigen {
    /// Eigenphases in `(-pi, pi]`.
    pub phases: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl UnitaryEigen {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.phases.len();
        let w = &self.eigenvectors;
        let scaled = CMatrix::from_fn(n, n, |i, j| {
            w[(i, j)] * Complex64::from_polar(1.0, self.phases[j])
        });
        scaled.matmul(&w.dagger()).expect("square")
    }
}

const CLUSTER_GAP: f64 = 1e-6;

/// Eigendecomposition of a unitary (or any normal) matrix using only the
/// Hermitian solver: diagonalize `(S + S^dag)/2`, then resolve each cluster of
/// (near-)degenerate eigenvalues with `(S - S^dag)/(2i)` restricted to it.
pub fn unitary_eigen(s: &CMatrix) -> Result<UnitaryEigen> {
    if !s.is_square() {
        return Err(Error::invalid(
            "unitary eigendecomposition needs a square matrix",
        ));
    }
    let n = s.rows();
    let sd = s.dagger();
    let half = Complex64::new(0.5, 0.0);
    let re_part = s.add(&sd)?.scale(half);
    let im_part = s.sub(&sd)?.scale(Complex64::new(0.0, -0.5));

    let first = hermitian_eigen(&re_part)?;
    let mut w = first.eigenvectors;
    let lambdas = first.eigenvalues;

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && lambdas[end] - lambdas[end - 1] <= CLUSTER_GAP {
            end += 1;
        }
        if end - start > 1 {
            let m = end - start;
            let block = CMatrix::from_fn(n, m, |i, j| w[(i, start + j)]);
            let restricted = block.dagger().matmul(&im_part)?.matmul(&block)?;
            // The restriction is Hermitian up to the near-degeneracy leakage.
            let restricted = CMatrix::from_fn(m, m, |i, j| {
                0.5 * (restricted[(i, j)] + restricted[(j, i)].conj())
            });
            let inner = hermitian_eigen(&restricted)?;
            let rotated = block.matmul(&inner.eigenvectors)?;
            for i in 0..n {
                for j in 0..m {
                    w[(i, start + j)] = rotated[(i, j)];
                }
            }
        }
        start = end;
    }

    let phases = (0..n)
        .map(|j| {
            let col = w.column(j);
            s.expectation(&col).map(|z| z.arg())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitaryEigen {
        phases,
        eigenvectors: w,
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::linalg::test_util::random_hermitian;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn decomposition_residuals(n in 1usize..=256, scale in 1e-3f64..1e3, seed in any::<u64>()) {
            let h = random_hermitian(n, &mut ChaCha8Rng::seed_from_u64(seed)).scale(scale.into());
            let e = hermitian_eigen(&h).unwrap();
            let tol = 1e-10 * h.frobenius_norm().max(1.0);
            prop_assert!(e.reconstruct().frobenius_distance(&h).unwrap() <= tol);
            let v = &e.eigenvectors;
            let gram = v.dagger().matmul(v).unwrap();
            prop_assert!(gram.frobenius_distance(&CMatrix::identity(n)).unwrap() <= 1e-10 * (n as f64).sqrt());
            prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn exponentials_are_unitary(n in 1usize..=48, t in -50.0f64..50.0, seed in any::<u64>()) {
            let h = random_hermitian(n, &mut ChaCha8Rng::seed_from_u64(seed));
            let u = expm_i_hermitian(&h, t).unwrap();
            prop_assert!(u.unitarity_defect().unwrap() <= 1e-10 * (n as f64).sqrt());
        }
    }
}
