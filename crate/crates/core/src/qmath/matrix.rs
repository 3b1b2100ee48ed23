use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;

use crate::real::Real;

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

#[inline]
fn c<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![c(T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c(T::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from a flat row-major buffer; `None` when the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<Complex<T>>>) -> Self {
        let r = rows.len();
        let cl = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == cl), "ragged rows");
        Self {
            rows: r,
            cols: cl,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_real_rows(rows: &[Vec<T>]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|row| row.iter().map(|&x| c(x)).collect())
                .collect(),
        )
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = c(d);
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<Complex<T>>]) -> Self {
        let rows = cols.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    /// `|u⟩⟨v|`.
    pub fn outer(u: &[Complex<T>], v: &[Complex<T>]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[Complex<T>]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.scale_complex(c(s))
    }

    pub fn scale_complex(&self, s: Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).fold(c(T::zero()), |acc, i| acc + self[(i, i)])
    }

    /// `tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex<T> {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = c(T::zero());
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc.max(z.norm()))
    }

    /// `max |A − A†|`; infinite for non-square input.
    pub fn hermitian_deviation(&self) -> T {
        if !self.is_square() {
            return T::infinity();
        }
        let mut dev = T::zero();
        for i in 0..self.rows {
            for j in i..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn is_unitary(&self, tol: T) -> bool {
        self.is_square() && (&(&self.adjoint() * self) - &Self::identity(self.rows)).max_abs() <= tol
    }

    /// `max(|P − P†|, |P² − P|)`.
    pub fn projector_deviation(&self) -> T {
        let herm = self.hermitian_deviation();
        if herm.is_infinite() {
            return herm;
        }
        herm.max((&(self * self) - self).max_abs())
    }

    pub fn is_projector(&self, tol: T) -> bool {
        self.projector_deviation() <= tol
    }

    pub fn kron(&self, b: &Self) -> Self {
        let (rb, cb) = (b.rows, b.cols);
        Self::from_fn(self.rows * rb, self.cols * cb, |r, col| {
            self[(r / rb, col / cb)] * b[(r % rb, col % cb)]
        })
    }

    pub fn apply(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(v.len(), self.cols, "vector length");
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter()
                    .zip(v)
                    .fold(c(T::zero()), |acc, (&a, &x)| acc + a * x)
            })
            .collect()
    }

    /// `⟨v| A |v⟩`.
    pub fn expectation(&self, v: &[Complex<T>]) -> Complex<T> {
        inner(v, &self.apply(v))
    }

    /// Hermitian part `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * half
        })
    }

    /// Sub-block `rows r0..r0+nr`, `cols c0..c0+nc`.
    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Partial trace over the second factor of a `(da·db) × (da·db)` operator.
    pub fn partial_trace_second(&self, da: usize, db: usize) -> Self {
        assert_eq!(self.rows, da * db);
        Self::from_fn(da, da, |i, j| {
            (0..db).fold(c(T::zero()), |acc, k| acc + self[(i * db + k, j * db + k)])
        })
    }

    /// Partial trace over the first factor of a `(da·db) × (da·db)` operator.
    pub fn partial_trace_first(&self, da: usize, db: usize) -> Self {
        assert_eq!(self.rows, da * db);
        Self::from_fn(db, db, |i, j| {
            (0..da).fold(c(T::zero()), |acc, k| acc + self[(k * db + i, k * db + j)])
        })
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;

    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;

    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;

    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

/// `⟨u|v⟩`, antilinear in the first argument.
pub fn inner<T: Real>(u: &[Complex<T>], v: &[Complex<T>]) -> Complex<T> {
    u.iter()
        .zip(v)
        .fold(c(T::zero()), |acc, (a, &b)| acc + a.conj() * b)
}

pub fn vec_norm<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

/// Returns `v/‖v‖`, or `None` for a zero vector.
pub fn normalize<T: Real>(v: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
    let n = vec_norm(v);
    (n > T::zero()).then(|| v.iter().map(|&z| z / c(n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::random::random_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixed_product_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a: Matrix<f64> = random_matrix(2, 2, &mut rng);
            let b = random_matrix(2, 2, &mut rng);
            let cm = random_matrix(2, 2, &mut rng);
            let d = random_matrix(2, 2, &mut rng);
            let lhs = &a.kron(&b) * &cm.kron(&d);
            let rhs = (&a * &cm).kron(&(&b * &d));
            assert!((&lhs - &rhs).max_abs() < 1e-12);
        }
    }

    #[test]
    fn kron_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Matrix<f64> = random_matrix(2, 3, &mut rng);
        let a2 = random_matrix(2, 3, &mut rng);
        let b = random_matrix(3, 2, &mut rng);
        let lhs = (&a + &a2.scale(2.5)).kron(&b);
        let rhs = &a.kron(&b) + &a2.kron(&b).scale(2.5);
        assert!((&lhs - &rhs).max_abs() < 1e-12);
    }

    #[test]
    fn partial_traces_of_product_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Matrix<f64> = random_matrix(2, 2, &mut rng);
        let b = random_matrix(3, 3, &mut rng);
        let ab = a.kron(&b);
        let ta = ab.partial_trace_second(2, 3);
        let tb = ab.partial_trace_first(2, 3);
        assert!((&ta - &a.scale_complex(b.trace())).max_abs() < 1e-12);
        assert!((&tb - &b.scale_complex(a.trace())).max_abs() < 1e-12);
    }

    #[test]
    fn trace_product_matches_product_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a: Matrix<f64> = random_matrix(4, 3, &mut rng);
        let b = random_matrix(3, 4, &mut rng);
        assert!((a.trace_product(&b) - (&a * &b).trace()).norm() < 1e-12);
    }
}
