//! Seeded random matrices and states for tests, sweeps and optimizer restarts.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::{inner, normalize, Matrix};
use crate::real::Real;

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re), T::lit(im))
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_hermitian<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix<T> {
    random_matrix(n, n, rng).hermitian_part()
}

/// Random unit vector (Haar distributed).
pub fn random_vector<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex<T>> {
    loop {
        let v: Vec<Complex<T>> = (0..n).map(|_| gaussian(rng)).collect();
        if let Some(u) = normalize(&v) {
            return u;
        }
    }
}

/// Haar-random unitary via Gram–Schmidt on a Gaussian matrix.
pub fn random_unitary<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix<T> {
    let mut cols: Vec<Vec<Complex<T>>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<Complex<T>> = (0..n).map(|_| gaussian(rng)).collect();
        // two passes keep the basis orthonormal to working precision
        for _ in 0..2 {
            for u in &cols {
                let p = inner(u, &v);
                for (x, &ui) in v.iter_mut().zip(u) {
                    *x -= ui * p;
                }
            }
        }
        if let Some(u) = normalize(&v) {
            cols.push(u);
        }
    }
    Matrix::from_columns(&cols)
}

/// Random orthogonal projector of the given rank.
pub fn random_projector<T: Real, R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> Matrix<T> {
    let u = random_unitary::<T, _>(n, rng);
    let mut p = Matrix::zeros(n, n);
    for k in 0..rank.min(n) {
        let v = u.column(k);
        p = &p + &Matrix::outer(&v, &v);
    }
    p.hermitian_part()
}

/// Random density matrix of the given rank with trace `weight`.
pub fn random_density<T: Real, R: Rng + ?Sized>(
    n: usize,
    rank: usize,
    weight: T,
    rng: &mut R,
) -> Matrix<T> {
    let g = random_matrix::<T, _>(n, rank.max(1), rng);
    let rho = &g * &g.adjoint();
    let tr = rho.trace().re;
    rho.scale(weight / tr).hermitian_part()
}
