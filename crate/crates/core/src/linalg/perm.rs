use num_complex::Complex64;

use super::CMatrix;
use crate::error::{Error, Result};

/// Largest multi-system dimension `n^ell` a permutation operator may have.
pub const MAX_TENSOR_DIM: usize = 1 << 20;
/// Dense operators are materialized, so their entry count is capped too
/// (2^24 entries, 256 MiB of `Complex64`).
pub const MAX_DENSE_ENTRIES: usize = 1 << 24;
/// Largest number of subsystems accepted by [`symmetric_projector`].
pub const MAX_SYMMETRIZER_ORDER: usize = 4;

/// A permutation of `0..len`, stored as its image: `self.image()[t]` is where
/// slot `t` goes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; image.len()];
        for &x in &image {
            if x >= image.len() || std::mem::replace(&mut seen[x], true) {
                return Err(Error::invalid(format!("{image:?} is not a permutation")));
            }
        }
        Ok(Self(image))
    }

    pub fn identity(len: usize) -> Self {
        Self((0..len).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn image(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (t, &s) in self.0.iter().enumerate() {
            inv[s] = t;
        }
        Self(inv)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::invalid(
                "cannot compose permutations of different lengths",
            ));
        }
        Ok(Self(other.0.iter().map(|&t| self.0[t]).collect()))
    }

    /// All permutations of `0..len` in lexicographic order.
    pub fn all(len: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(len);
        let mut used = vec![false; len];
        fn recurse(
            len: usize,
            current: &mut Vec<usize>,
            used: &mut [bool],
            out: &mut Vec<Permutation>,
        ) {
            if current.len() == len {
                out.push(Permutation(current.clone()));
                return;
            }
            for x in 0..len {
                if !used[x] {
                    used[x] = true;
                    current.push(x);
                    recurse(len, current, used, out);
                    current.pop();
                    used[x] = false;
                }
            }
        }
        recurse(len, &mut current, &mut used, &mut out);
        out
    }
}

fn tensor_dim(n_dim: usize, ell: usize) -> Result<usize> {
    if n_dim == 0 || ell == 0 {
        return Err(Error::invalid(
            "dimension and number of systems must be positive",
        ));
    }
    let dim = (0..ell)
        .try_fold(1usize, |acc, _| acc.checked_mul(n_dim))
        .filter(|&d| d <= MAX_TENSOR_DIM)
        .ok_or_else(|| Error::Resource(format!("{n_dim}^{ell} exceeds the 2^20 tensor guard")))?;
    if dim.checked_mul(dim).is_none_or(|e| e > MAX_DENSE_ENTRIES) {
        return Err(Error::Resource(format!(
            "a dense {dim}x{dim} operator exceeds the {MAX_DENSE_ENTRIES}-entry guard"
        )));
    }
    Ok(dim)
}

/// Operator on `(C^n)^{⊗ ell}` that moves the content of slot `t` to slot
/// `perm(t)`, i.e. `|i_1 … i_ell> -> |i_{perm^-1(1)} … i_{perm^-1(ell)}>`.
///
/// Kets are indexed big-endian: slot 0 is the most significant digit. With
/// this convention `op(σ ∘ τ) = op(σ) op(τ)`.
pub fn permutation_operator(n_dim: usize, perm: &Permutation) -> Result<CMatrix> {
    let ell = perm.len();
    let dim = tensor_dim(n_dim, ell)?;
    let mut op = CMatrix::zeros(dim, dim);
    let mut digits = vec![0usize; ell];
    let mut out_digits = vec![0usize; ell];
    for col in 0..dim {
        let mut rem = col;
        for slot in (0..ell).rev() {
            digits[slot] = rem % n_dim;
            rem /= n_dim;
        }
        for (t, &s) in perm.image().iter().enumerate() {
            out_digits[s] = digits[t];
        }
        let row = out_digits.iter().fold(0, |acc, &d| acc * n_dim + d);
        op[(row, col)] = Complex64::new(1.0, 0.0);
    }
    Ok(op)
}

/// Projector onto the symmetric subspace of `ell` copies of `C^n`:
/// the average of all `ell!` permutation operators.
pub fn symmetric_projector(n_dim: usize, ell: usize) -> Result<CMatrix> {
    if !(1..=MAX_SYMMETRIZER_ORDER).contains(&ell) {
        return Err(Error::invalid(format!(
            "symmetrizer order must be in 1..={MAX_SYMMETRIZER_ORDER}, got {ell}"
        )));
    }
    let dim = tensor_dim(n_dim, ell)?;
    let perms = Permutation::all(ell);
    let weight = 1.0 / perms.len() as f64;
    let mut proj = CMatrix::zeros(dim, dim);
    for p in &perms {
        let op = permutation_operator(n_dim, p)?;
        for (acc, x) in proj.as_mut_slice().iter_mut().zip(op.as_slice()) {
            *acc += x * weight;
        }
    }
    Ok(proj)
}

/// `C(n, k)` in floating point; exact for the small arguments used here.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
