use num_complex::Complex;

use super::matrix::Matrix;
use super::{LinalgError, Result, VALIDATION_TOL};
use crate::real::Real;

/// `H = U diag(values) U†` with `values` ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let d = Matrix::from_diag(&self.values);
        &(&self.vectors * &d) * &self.vectors.adjoint()
    }

    pub fn vector(&self, k: usize) -> Vec<Complex<T>> {
        self.vectors.column(k)
    }
}

pub fn eig_hermitian<T: Real>(h: &Matrix<T>) -> Result<HermitianEigen<T>> {
    eig_hermitian_with_tol(h, T::lit(VALIDATION_TOL))
}

/// 2×2 unitary `G` with `G† [[app, apq], [apq*, aqq]] G` diagonal.
///
/// `G = diag(1, e^{-iφ}) · [[c, s], [-s, c]]` where `apq = |apq| e^{iφ}`.
pub(crate) fn jacobi_rotation<T: Real>(app: T, aqq: T, apq: Complex<T>) -> [[Complex<T>; 2]; 2] {
    let r = apq.norm();
    let one = Complex::new(T::one(), T::zero());
    let zero = Complex::new(T::zero(), T::zero());
    if r == T::zero() {
        return [[one, zero], [zero, one]];
    }
    let phase = apq / Complex::new(r, T::zero());
    let theta = (aqq - app) / (T::lit(2.0) * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
    let cs = T::one() / (t * t + T::one()).sqrt();
    let sn = t * cs;
    let e = phase.conj();
    [
        [Complex::new(cs, T::zero()), Complex::new(sn, T::zero())],
        [e * (-sn), e * cs],
    ]
}

/// Cyclic Jacobi for a Hermitian matrix; `tol` bounds the accepted `|H − H†|`.
pub fn eig_hermitian_with_tol<T: Real>(h: &Matrix<T>, tol: T) -> Result<HermitianEigen<T>> {
    let dev = h.hermitian_deviation();
    if dev > tol {
        return Err(LinalgError::NotHermitian(dev.to_f64_lossy()));
    }
    let n = h.rows();
    let mut a = h.hermitian_part();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm().max(T::min_positive_value());
    let eps = T::epsilon();

    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= eps * scale * T::lit(0.01) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.norm() <= eps * T::lit(1e-3) * scale {
                    continue;
                }
                let g = jacobi_rotation(a[(p, p)].re, a[(q, q)].re, apq);
                rotate_columns(&mut a, p, q, &g);
                rotate_rows_adjoint(&mut a, p, q, &g);
                a[(p, q)] = Complex::new(T::zero(), T::zero());
                a[(q, p)] = Complex::new(T::zero(), T::zero());
                let (pp, qq) = (a[(p, p)].re, a[(q, q)].re);
                a[(p, p)] = Complex::new(pp, T::zero());
                a[(q, q)] = Complex::new(qq, T::zero());
                rotate_columns(&mut v, p, q, &g);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

/// `M ← M G` on columns `p, q`.
pub(crate) fn rotate_columns<T: Real>(m: &mut Matrix<T>, p: usize, q: usize, g: &[[Complex<T>; 2]; 2]) {
    for i in 0..m.rows() {
        let (mp, mq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = mp * g[0][0] + mq * g[1][0];
        m[(i, q)] = mp * g[0][1] + mq * g[1][1];
    }
}

/// `M ← G† M` on rows `p, q`.
fn rotate_rows_adjoint<T: Real>(m: &mut Matrix<T>, p: usize, q: usize, g: &[[Complex<T>; 2]; 2]) {
    for j in 0..m.cols() {
        let (mp, mq) = (m[(p, j)], m[(q, j)]);
        m[(p, j)] = g[0][0].conj() * mp + g[1][0].conj() * mq;
        m[(q, j)] = g[0][1].conj() * mp + g[1][1].conj() * mq;
    }
}
