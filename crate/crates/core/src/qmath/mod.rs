//! Dense complex linear algebra for small quantum systems.
//!
//! Everything here is generic over the [`Real`] scalar; the crate root exposes
//! `f64` aliases (`CMatrix`, `PureState`, ...) that the rest of the crate uses.

mod eigen;
mod jordan;
mod matrix;
pub mod random;
mod real_matrix;
mod schmidt;

pub use eigen::{eig_hermitian, eig_hermitian_with_tol, HermitianEigen};
pub use jordan::{jordan_blocks, jordan_blocks_with_tol, JordanBlock, JordanDecomposition};
pub use matrix::{inner, normalize, vec_norm, Matrix};
pub use real_matrix::{sym_eigen, Cholesky, RealMatrix, SymEigen};
pub use schmidt::{schmidt, SchmidtDecomposition};

use num_complex::Complex;
use thiserror::Error;

use crate::real::Real;

/// Default tolerance for Hermitian/unitary/projector predicates.
pub const VALIDATION_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not a projector (deviation {0:e})")]
    NotProjector(f64),
    #[error("measurement is invalid: {0}")]
    InvalidMeasurement(String),
    #[error("zero vector has no Schmidt decomposition")]
    ZeroVector,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Bipartite pure (possibly subnormalized) state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<T> {
    dims: (usize, usize),
    amplitudes: Vec<Complex<T>>,
}

impl<T: Real> PureState<T> {
    pub fn new(dims: (usize, usize), amplitudes: Vec<Complex<T>>) -> Result<Self> {
        if dims.0 == 0 || dims.1 == 0 || amplitudes.len() != dims.0 * dims.1 {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} amplitudes for dims {:?}",
                amplitudes.len(),
                dims
            )));
        }
        Ok(Self { dims, amplitudes })
    }

    /// `Σ_k c_k |k⟩|k⟩` in a `d × d` space.
    pub fn diagonal(coeffs: &[T]) -> Self {
        let d = coeffs.len();
        let mut amps = vec![Complex::new(T::zero(), T::zero()); d * d];
        for (k, &c) in coeffs.iter().enumerate() {
            amps[k * d + k] = Complex::new(c, T::zero());
        }
        Self {
            dims: (d, d),
            amplitudes: amps,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn norm(&self) -> T {
        vec_norm(&self.amplitudes)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn density(&self) -> Matrix<T> {
        Matrix::outer(&self.amplitudes, &self.amplitudes)
    }

    /// Coefficient matrix `M[i][j] = ⟨ij|ψ⟩`.
    pub fn coefficient_matrix(&self) -> Matrix<T> {
        Matrix::from_fn(self.dims.0, self.dims.1, |i, j| {
            self.amplitudes[i * self.dims.1 + j]
        })
    }
}

/// Projective measurement given by its ordered effects.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectiveMeasurement<T> {
    dim: usize,
    effects: Vec<Matrix<T>>,
}

impl<T: Real> ProjectiveMeasurement<T> {
    pub fn new(effects: Vec<Matrix<T>>) -> Result<Self> {
        Self::with_tol(effects, T::lit(VALIDATION_TOL))
    }

    /// Validates `P = P†`, `P² = P`, pairwise orthogonality and completeness.
    pub fn with_tol(effects: Vec<Matrix<T>>, tol: T) -> Result<Self> {
        let Some(first) = effects.first() else {
            return Err(LinalgError::InvalidMeasurement("no effects".into()));
        };
        let dim = first.rows();
        let mut total = Matrix::zeros(dim, dim);
        for (a, e) in effects.iter().enumerate() {
            if e.rows() != dim || e.cols() != dim {
                return Err(LinalgError::DimensionMismatch(format!(
                    "effect {a} is {}x{}, expected {dim}x{dim}",
                    e.rows(),
                    e.cols()
                )));
            }
            let dev = e.projector_deviation();
            if dev > tol {
                return Err(LinalgError::NotProjector(dev.to_f64_lossy()));
            }
            total = &total + e;
        }
        for a in 0..effects.len() {
            for b in a + 1..effects.len() {
                let prod = &effects[a] * &effects[b];
                let dev = prod.max_abs();
                if dev > tol {
                    return Err(LinalgError::InvalidMeasurement(format!(
                        "effects {a} and {b} are not orthogonal (deviation {:e})",
                        dev.to_f64_lossy()
                    )));
                }
            }
        }
        let dev = (&total - &Matrix::identity(dim)).max_abs();
        if dev > tol {
            return Err(LinalgError::InvalidMeasurement(format!(
                "effects do not sum to identity (deviation {:e})",
                dev.to_f64_lossy()
            )));
        }
        Ok(Self { dim, effects })
    }

    /// Two-outcome measurement `(P, 1 − P)`.
    pub fn dichotomic(p: Matrix<T>) -> Result<Self> {
        let comp = &Matrix::identity(p.rows()) - &p;
        Self::new(vec![p, comp])
    }

    /// Rank-one measurement in the columns of a unitary.
    pub fn from_basis(basis: &Matrix<T>) -> Result<Self> {
        let effects = (0..basis.cols())
            .map(|k| {
                let v = basis.column(k);
                Matrix::outer(&v, &v)
            })
            .collect();
        Self::new(effects)
    }

    /// Measurement in the computational basis of a `dim`-dimensional space.
    pub fn computational(dim: usize) -> Self {
        let effects = (0..dim)
            .map(|k| {
                let mut m = Matrix::zeros(dim, dim);
                m[(k, k)] = Complex::new(T::one(), T::zero());
                m
            })
            .collect();
        Self { dim, effects }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn effect(&self, a: usize) -> &Matrix<T> {
        &self.effects[a]
    }

    pub fn effects(&self) -> &[Matrix<T>] {
        &self.effects
    }

    /// Conjugates every effect: `U P U†`.
    pub fn conjugated(&self, u: &Matrix<T>) -> Result<Self> {
        let ud = u.adjoint();
        Self::new(self.effects.iter().map(|e| &(u * e) * &ud).collect())
    }

    pub fn into_effects(self) -> Vec<Matrix<T>> {
        self.effects
    }
}

/// The three Pauli matrices `(X, Y, Z)`.
pub fn pauli<T: Real>() -> (Matrix<T>, Matrix<T>, Matrix<T>) {
    let z = T::zero();
    let o = T::one();
    let x = Matrix::from_real_rows(&[vec![z, o], vec![o, z]]);
    let y = Matrix::from_rows(vec![
        vec![Complex::new(z, z), Complex::new(z, -o)],
        vec![Complex::new(z, o), Complex::new(z, z)],
    ]);
    let zm = Matrix::from_real_rows(&[vec![o, z], vec![z, -o]]);
    (x, y, zm)
}

/// Kronecker product; `(i·rows_b + k, j·cols_b + l) = a(i,j)·b(k,l)`.
pub fn kron<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    a.kron(b)
}

/// Trace distance `½‖ρ − σ‖₁` between Hermitian matrices.
pub fn trace_distance<T: Real>(rho: &Matrix<T>, sigma: &Matrix<T>) -> Result<T> {
    let diff = rho - sigma;
    let eig = eig_hermitian(&diff)?;
    let half = T::lit(0.5);
    Ok(eig.values.iter().fold(T::zero(), |acc, v| acc + v.abs()) * half)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projective_measurement_validation() {
        let m = ProjectiveMeasurement::<f64>::computational(3);
        assert!(ProjectiveMeasurement::new(m.effects().to_vec()).is_ok());

        let (x, _, _) = pauli::<f64>();
        let err = ProjectiveMeasurement::new(vec![x.clone(), Matrix::identity(2)]);
        assert!(matches!(err, Err(LinalgError::NotProjector(_))));

        let half = Matrix::<f64>::identity(2).scale(0.5);
        assert!(ProjectiveMeasurement::new(vec![half.clone(), half]).is_err());

        let p0 = ProjectiveMeasurement::<f64>::computational(2).effect(0).clone();
        let err = ProjectiveMeasurement::new(vec![p0.clone(), p0]);
        assert!(matches!(err, Err(LinalgError::InvalidMeasurement(_))));
    }

    #[test]
    fn kron_pauli_x_z() {
        let (x, _, z) = pauli::<f64>();
        let k = kron(&x, &z);
        let expect = [(0, 2, 1.0), (1, 3, -1.0), (2, 0, 1.0), (3, 1, -1.0)];
        for i in 0..4 {
            for j in 0..4 {
                let want = expect
                    .iter()
                    .find(|(r, c, _)| *r == i && *c == j)
                    .map_or(0.0, |e| e.2);
                assert_eq!(k[(i, j)], Complex::new(want, 0.0));
            }
        }
        assert_eq!(kron(&Matrix::<f64>::identity(2), &Matrix::identity(2)), Matrix::identity(4));
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states() {
        let m = ProjectiveMeasurement::<f64>::computational(2);
        let d = trace_distance(m.effect(0), m.effect(1)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_state_checks_length() {
        assert!(PureState::<f64>::new((2, 2), vec![Complex::new(1.0, 0.0); 3]).is_err());
        let s = PureState::<f64>::diagonal(&[0.6, 0.8]);
        assert!((s.norm() - 1.0).abs() < 1e-15);
    }
}
