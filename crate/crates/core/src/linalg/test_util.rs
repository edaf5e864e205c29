//! Random operators and Pauli matrices shared by unit tests.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::CMatrix;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_rows(&[
        vec![c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(1.0, 0.0), c(0.0, 0.0)],
    ])
    .unwrap()
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_real_diagonal(&[1.0, -1.0])
}

pub fn random_matrix(n: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMatrix {
    let a = random_matrix(n, rng);
    a.add(&a.dagger()).unwrap().scale(c(0.5, 0.0))
}

pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    crate::fidelity::haar_unitary(n, rng)
}
