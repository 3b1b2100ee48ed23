use num_complex::Complex;

use super::eigen::{jacobi_rotation, rotate_columns};
use super::matrix::{inner, normalize, vec_norm, Matrix};
use super::{LinalgError, PureState, Result, VALIDATION_TOL};
use crate::real::Real;

/// `|ψ⟩ = Σ_k c_k |u_k⟩|v_k⟩` with `u_k`, `v_k` the columns of the two bases.
#[derive(Clone, Debug)]
pub struct SchmidtDecomposition<T> {
    pub coefficients: Vec<T>,
    pub left_basis: Matrix<T>,
    pub right_basis: Matrix<T>,
}

impl<T: Real> SchmidtDecomposition<T> {
    pub fn rank(&self, tol: T) -> usize {
        self.coefficients.iter().filter(|&&c| c > tol).count()
    }

    pub fn reconstruct(&self) -> PureState<T> {
        let (da, db) = (self.left_basis.rows(), self.right_basis.rows());
        let mut amps = vec![Complex::new(T::zero(), T::zero()); da * db];
        for (k, &c) in self.coefficients.iter().enumerate() {
            for i in 0..da {
                let ui = self.left_basis[(i, k)] * c;
                for j in 0..db {
                    amps[i * db + j] += ui * self.right_basis[(j, k)];
                }
            }
        }
        PureState::new((da, db), amps).expect("dimensions are consistent")
    }
}

/// Schmidt decomposition by one-sided Jacobi SVD of the coefficient matrix.
pub fn schmidt<T: Real>(v: &PureState<T>) -> Result<SchmidtDecomposition<T>> {
    let norm = v.norm();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(LinalgError::ZeroVector);
    }
    let (da, db) = v.dims();
    let m = v.coefficient_matrix();
    if da >= db {
        svd_tall(&m)
    } else {
        // ψ_ij = ψᵀ_ji: decompose the swapped state and exchange the factors
        let s = svd_tall(&m.transpose())?;
        Ok(SchmidtDecomposition {
            coefficients: s.coefficients,
            left_basis: s.right_basis,
            right_basis: s.left_basis,
        })
    }
}

/// `M = U Σ V†` for `rows ≥ cols`, returned as Schmidt data with right basis `conj(V)`.
fn svd_tall<T: Real>(m: &Matrix<T>) -> Result<SchmidtDecomposition<T>> {
    let (r, c) = (m.rows(), m.cols());
    let mut a = m.clone();
    let mut v = Matrix::identity(c);
    let eps = T::epsilon();
    // columns below this squared norm are numerically zero
    let negligible = (0..c).map(|j| inner(&m.column(j), &m.column(j)).re).fold(T::zero(), |s, x| s + x) * eps * eps;
    let mut converged = false;
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let cp = a.column(p);
                let cq = a.column(q);
                let alpha = inner(&cp, &cp).re;
                let beta = inner(&cq, &cq).re;
                let gamma = inner(&cp, &cq);
                if alpha <= negligible || beta <= negligible || gamma.norm() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let g = jacobi_rotation(alpha, beta, gamma);
                rotate_columns(&mut a, p, q, &g);
                rotate_columns(&mut v, p, q, &g);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence("one-sided Jacobi SVD".into()));
    }

    let mut sigma: Vec<(T, usize)> = (0..c).map(|j| (vec_norm(&a.column(j)), j)).collect();
    sigma.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let smax = sigma.first().map_or(T::zero(), |s| s.0);
    let floor = smax * eps * T::lit(r.max(c) as f64);

    let mut left: Vec<Vec<Complex<T>>> = Vec::with_capacity(r);
    let mut right: Vec<Vec<Complex<T>>> = Vec::with_capacity(c);
    let mut coefficients = Vec::with_capacity(c);
    for &(s, j) in &sigma {
        right.push(v.column(j).iter().map(|z| z.conj()).collect());
        coefficients.push(s);
        if s > floor {
            let col: Vec<Complex<T>> = a.column(j).iter().map(|z| *z / s).collect();
            left.push(orthogonalize(&col, &left).unwrap_or(col));
        }
    }
    complete_basis(&mut left, r);
    // left vectors for vanishing coefficients were appended at the end; they pair
    // with the trailing (zero) coefficients, so the ordering is already consistent
    Ok(SchmidtDecomposition {
        coefficients,
        left_basis: Matrix::from_columns(&left),
        right_basis: Matrix::from_columns(&right),
    })
}

fn orthogonalize<T: Real>(v: &[Complex<T>], basis: &[Vec<Complex<T>>]) -> Option<Vec<Complex<T>>> {
    let mut w = v.to_vec();
    for _ in 0..2 {
        for u in basis {
            let p = inner(u, &w);
            for (x, &ui) in w.iter_mut().zip(u) {
                *x -= ui * p;
            }
        }
    }
    normalize(&w)
}

/// Extends an orthonormal family to a basis of `C^n` with Gram–Schmidt on unit vectors.
pub(crate) fn complete_basis<T: Real>(basis: &mut Vec<Vec<Complex<T>>>, n: usize) {
    let mut k = 0;
    while basis.len() < n && k < n {
        let mut e = vec![Complex::new(T::zero(), T::zero()); n];
        e[k] = Complex::new(T::one(), T::zero());
        if let Some(u) = orthogonalize(&e, basis) {
            if vec_norm(&u) > T::lit(0.5) {
                let residual = basis.iter().map(|b| inner(b, &u).norm()).fold(T::zero(), T::max);
                if residual < T::lit(VALIDATION_TOL) {
                    basis.push(u);
                }
            }
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::random::{random_unitary, random_vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex<f64> {
        Complex::new(x, 0.0)
    }

    fn residual(s: &SchmidtDecomposition<f64>, v: &PureState<f64>) -> f64 {
        s.reconstruct()
            .amplitudes()
            .iter()
            .zip(v.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn maximally_entangled() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = PureState::new((2, 2), vec![c(h), c(0.0), c(0.0), c(h)]).unwrap();
        let s = schmidt(&v).unwrap();
        assert!((s.coefficients[0] - h).abs() < 1e-12);
        assert!((s.coefficients[1] - h).abs() < 1e-12);
        assert!(residual(&s, &v) < 1e-12);
    }

    #[test]
    fn product_state() {
        let v = PureState::new((2, 2), vec![c(0.0), c(1.0), c(0.0), c(0.0)]).unwrap();
        let s = schmidt(&v).unwrap();
        assert!((s.coefficients[0] - 1.0).abs() < 1e-15);
        assert!(s.coefficients[1].abs() < 1e-15);
        assert!(s.left_basis.is_unitary(1e-12));
        assert!(s.right_basis.is_unitary(1e-12));
        assert!(residual(&s, &v) < 1e-12);
    }

    #[test]
    fn partially_entangled_sorted() {
        let th: f64 = 0.4347;
        let v = PureState::new((2, 2), vec![c(th.sin()), c(0.0), c(0.0), c(th.cos())]).unwrap();
        let s = schmidt(&v).unwrap();
        assert!((s.coefficients[0] - th.cos()).abs() < 1e-12);
        assert!((s.coefficients[1] - th.sin()).abs() < 1e-12);
    }

    #[test]
    fn product_state_with_rounding_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let a = random_vector::<f64, _>(3, &mut rng);
            let b = random_vector::<f64, _>(3, &mut rng);
            let noise = random_vector::<f64, _>(9, &mut rng);
            let amps = (0..9).map(|k| a[k / 3] * b[k % 3] + noise[k] * 1e-17).collect();
            let v = PureState::new((3, 3), amps).unwrap();
            let s = schmidt(&v).unwrap();
            assert!(s.coefficients[1] < 1e-15);
            assert!(residual(&s, &v) < 1e-12);
        }
    }

    #[test]
    fn zero_vector_rejected() {
        let v = PureState::new((2, 3), vec![c(0.0); 6]).unwrap();
        assert_eq!(schmidt(&v).unwrap_err(), LinalgError::ZeroVector);
    }

    #[test]
    fn rectangular_and_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (da, db) in [(1, 3), (2, 5), (4, 3), (3, 3), (6, 2)] {
            let amps = random_vector::<f64, _>(da * db, &mut rng);
            let v = PureState::new((da, db), amps).unwrap();
            let s = schmidt(&v).unwrap();
            assert_eq!(s.coefficients.len(), da.min(db));
            assert!(s.left_basis.is_unitary(1e-10));
            assert!(s.right_basis.is_unitary(1e-10));
            let sq: f64 = s.coefficients.iter().map(|x| x * x).sum();
            assert!((sq - 1.0).abs() < 1e-10);
            assert!(residual(&s, &v) < 1e-10);
        }
    }

    #[test]
    fn invariant_under_local_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let amps = random_vector::<f64, _>(9, &mut rng);
            let v = PureState::new((3, 3), amps).unwrap();
            let u = random_unitary::<f64, _>(3, &mut rng).kron(&random_unitary(3, &mut rng));
            let w = PureState::new((3, 3), u.apply(v.amplitudes())).unwrap();
            let (a, b) = (schmidt(&v).unwrap(), schmidt(&w).unwrap());
            for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_deficient_completion() {
        // rank-1 state in 3×3 with a nontrivial product structure
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_vector::<f64, _>(3, &mut rng);
        let b = random_vector::<f64, _>(3, &mut rng);
        let amps: Vec<_> = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        let v = PureState::new((3, 3), amps).unwrap();
        let s = schmidt(&v).unwrap();
        assert_eq!(s.rank(1e-10), 1);
        assert!(s.left_basis.is_unitary(1e-10));
        assert!(residual(&s, &v) < 1e-10);
    }
}
