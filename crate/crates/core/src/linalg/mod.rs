//! Dense complex linear algebra: products, Hermitian and unitary
//! eigendecompositions, matrix exponentials, permutation operators and
//! symmetric-subspace projectors.

mod eigen;
mod matrix;
mod perm;
mod state;
#[cfg(test)]
pub(crate) mod test_util;

pub use eigen::{
    expm_i_hermitian, hermitian_eigen, unitary_eigen, HermitianEigen, UnitaryEigen, HERMITIAN_TOL,
};
pub use matrix::CMatrix;
pub use perm::{
    binomial, permutation_operator, symmetric_projector, Permutation, MAX_DENSE_ENTRIES,
    MAX_SYMMETRIZER_ORDER, MAX_TENSOR_DIM,
};
pub use state::{PureState, NORM_TOL};

pub(crate) use state::inner;
