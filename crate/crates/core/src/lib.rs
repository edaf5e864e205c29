//! Numerical laboratory for the average fidelity decay of a perturbed
//! unitary map.
//!
//! The average over Haar-random initial states of
//! `F_n(psi) = |<psi| (U^n)^dag U_p^n |psi>|^2` is computed three ways:
//!
//! * exactly, from `(|Tr (U^n)^dag U_p^n|^2 + N) / (N^2 + N)`
//!   ([`fidelity::exact_average_fidelity_series`]);
//! * by Monte Carlo over Haar or computational-basis states
//!   ([`fidelity::mc_average_fidelity`]);
//! * by simulating a one-clean-qubit probe experiment with finite shots
//!   ([`dqc1::dqc1_average_fidelity`]).
//!
//! The [`spinsys`] module builds the quantum kicked top used as the test bed,
//! and [`linalg`] holds the dense complex kernel everything runs on.

pub mod dqc1;
pub mod error;
pub mod experiment;
pub mod fidelity;
pub mod fit;
pub mod linalg;
pub mod spinsys;
pub(crate) mod stats;

pub use error::{Error, Result};
pub use linalg::{CMatrix, HermitianEigen, PureState};
pub use num_complex::Complex64;

pub use dqc1::{DQC1Config, ProbeRegisterState, ReadoutAxis, TraceEstimate};
pub use fidelity::{Estimator, FidelitySeries, HaarSampler, StateSampler};
pub use fit::DecayFit;
pub use spinsys::{KickedTopSystem, MapPair, PerturbationSpec, Spin};
