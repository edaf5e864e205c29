//! Quantum kicked top, collective perturbations and `(U, U_p = U P)` pairs.
//!
//! Basis states are ordered by descending magnetic quantum number,
//! `m = j, j-1, …, -j`, so `J_z = diag(j, …, -j)`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm_i_hermitian, CMatrix, HERMITIAN_TOL};

/// Unitarity tolerance, scaled by `sqrt(N)` in the checks.
pub const UNITARY_TOL: f64 = 1e-10;

/// Spin quantum number `j`, stored as the positive integer `2j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Spin {
    twice: u32,
}

impl Spin {
    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice == 0 {
            return Err(Error::invalid("spin must be at least 1/2"));
        }
        Ok(Self { twice })
    }

    /// Accepts `j` when `2j` is a positive integer.
    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !twice.is_finite() || twice < 1.0 || twice.fract() != 0.0 || twice > u32::MAX as f64 {
            return Err(Error::invalid(format!(
                "j = {j} is not a positive half-integer"
            )));
        }
        Self::from_twice(twice as u32)
    }

    /// Spin whose multiplet has dimension `dim = 2j + 1`.
    pub fn from_dim(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("a spin multiplet has dimension at least 2"));
        }
        Self::from_twice((dim - 1) as u32)
    }

    pub fn j(&self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.twice as usize + 1
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice.is_multiple_of(2) {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

/// `(J_x, J_y, J_z)` for spin `j` from the ladder operators.
pub fn build_angular_momentum(spin: Spin) -> (CMatrix, CMatrix, CMatrix) {
    let j = spin.j();
    let n = spin.dim();
    let m = |a: usize| j - a as f64;
    let jz = CMatrix::from_real_diagonal(&(0..n).map(m).collect::<Vec<_>>());
    // J_+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>, and |m+1> sits one index up.
    let mut raise = CMatrix::zeros(n, n);
    for a in 1..n {
        let ma = m(a);
        raise[(a - 1, a)] = Complex64::new((j * (j + 1.0) - ma * (ma + 1.0)).sqrt(), 0.0);
    }
    let lower = raise.dagger();
    let jx = raise
        .add(&lower)
        .expect("same shape")
        .scale(Complex64::new(0.5, 0.0));
    let jy = raise
        .sub(&lower)
        .expect("same shape")
        .scale(Complex64::new(0.0, -0.5));
    (jx, jy, jz)
}

/// Quantum kicked top `U = exp(-i pi J_y / 2) exp(-i k J_z^2 / j)`.
#[derive(Clone, Debug)]
pub struct KickedTopSystem {
    pub spin: Spin,
    pub kick: f64,
    pub jx: CMatrix,
    pub jy: CMatrix,
    pub jz: CMatrix,
}

impl KickedTopSystem {
    pub fn new(spin: Spin, kick: f64) -> Result<Self> {
        if !kick.is_finite() {
            return Err(Error::invalid("kick strength must be finite"));
        }
        let (jx, jy, jz) = build_angular_momentum(spin);
        Ok(Self {
            spin,
            kick,
            jx,
            jy,
            jz,
        })
    }

    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    /// One period of the kicked top.
    pub fn unitary(&self) -> Result<CMatrix> {
        kicked_top_unitary(self)
    }
}

pub fn kicked_top_unitary(sys: &KickedTopSystem) -> Result<CMatrix> {
    let rotation = expm_i_hermitian(&sys.jy, PI / 2.0)?;
    let jz2 = sys
        .jz
        .matmul(&sys.jz)?
        .scale(Complex64::new(1.0 / sys.spin.j(), 0.0));
    let twist = expm_i_hermitian(&jz2, sys.kick)?;
    rotation.matmul(&twist)
}

/// Which Hermitian generator a perturbation `exp(-i delta V)` uses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `sum_q sigma_z^q / 2` on the qubit register encoding the basis.
    CollectiveZ,
    /// `J_z` of the spin multiplet.
    SpinZ,
    /// User-supplied matrix, loaded from a JSON file.
    Custom(String),
}

/// Perturbation `P = exp(-i delta V)` with Hermitian `V`.
#[derive(Clone, Debug)]
pub struct PerturbationSpec {
    pub delta: f64,
    generator: CMatrix,
}

impl PerturbationSpec {
    pub fn new(delta: f64, generator: CMatrix) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::invalid("perturbation strength must be finite"));
        }
        if !generator.is_square() || !generator.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::invalid(
                "perturbation generator must be a Hermitian matrix",
            ));
        }
        Ok(Self { delta, generator })
    }

    pub fn generator(&self) -> &CMatrix {
        &self.generator
    }

    pub fn dim(&self) -> usize {
        self.generator.rows()
    }

    pub fn unitary(&self) -> Result<CMatrix> {
        if self.delta == 0.0 {
            return Ok(CMatrix::identity(self.dim()));
        }
        expm_i_hermitian(&self.generator, self.delta)
    }
}

/// Number of qubits needed to hold `dim` basis states.
pub fn register_qubits(dim: usize) -> u32 {
    dim.next_power_of_two().trailing_zeros()
}

/// `sum_q sigma_z^q / 2` over the `K = ceil(log2 N)` qubits whose
/// computational states `|b_{K-1} … b_0>` label basis index `i` in binary.
/// Diagonal entry `i` is `(K - 2 popcount(i)) / 2`. When `N` is not a power of
/// two this is the restriction to the first `N` register states.
pub fn collective_z_generator(dim: usize) -> CMatrix {
    let k = register_qubits(dim) as f64;
    let diag: Vec<f64> = (0..dim)
        .map(|i| (k - 2.0 * i.count_ones() as f64) / 2.0)
        .collect();
    CMatrix::from_real_diagonal(&diag)
}

/// Collective rotation `prod_q exp(-i delta sigma_z^q / 2)` of the register
/// that holds the kicked top.
pub fn collective_rotation_perturbation(
    sys: &KickedTopSystem,
    delta: f64,
) -> Result<PerturbationSpec> {
    PerturbationSpec::new(delta, collective_z_generator(sys.dim()))
}

/// `exp(-i delta J_z)` on the spin multiplet itself.
pub fn spin_z_perturbation(sys: &KickedTopSystem, delta: f64) -> Result<PerturbationSpec> {
    PerturbationSpec::new(delta, sys.jz.clone())
}

/// Unperturbed and perturbed one-step maps.
#[derive(Clone, Debug)]
pub struct MapPair {
    u: CMatrix,
    u_p: CMatrix,
}

impl MapPair {
    pub fn new(u: CMatrix, u_p: CMatrix) -> Result<Self> {
        if !u.is_square() || u.rows() != u_p.rows() || u.cols() != u_p.cols() {
            return Err(Error::invalid(
                "map pair needs two square matrices of equal dimension",
            ));
        }
        for (name, m) in [("U", &u), ("U_p", &u_p)] {
            if !m.is_unitary(UNITARY_TOL) {
                return Err(Error::invalid(format!(
                    "{name} is not unitary (||U^dag U - I||_F = {:.3e})",
                    m.unitarity_defect()?
                )));
            }
        }
        Ok(Self { u, u_p })
    }

    pub fn u(&self) -> &CMatrix {
        &self.u
    }

    pub fn u_p(&self) -> &CMatrix {
        &self.u_p
    }

    pub fn dim(&self) -> usize {
        self.u.rows()
    }
}

/// `(U, U exp(-i delta V))`.
pub fn make_map_pair(u: CMatrix, spec: &PerturbationSpec) -> Result<MapPair> {
    if u.rows() != spec.dim() || !u.is_square() {
        return Err(Error::invalid(format!(
            "map is {}x{} but the perturbation acts on dimension {}",
            u.rows(),
            u.cols(),
            spec.dim()
        )));
    }
    let u_p = u.matmul(&spec.unitary()?)?;
    MapPair::new(u, u_p)
}
