use num_complex::Complex;

use super::eigen::eig_hermitian;
use super::matrix::{normalize, Matrix};
use super::{LinalgError, Result, CLUSTER_TOL, VALIDATION_TOL};
use crate::real::Real;

/// One invariant block of a projector pair.
#[derive(Clone, Debug)]
pub struct JordanBlock<T> {
    /// First column of the block in the common basis.
    pub offset: usize,
    /// 1 or 2.
    pub size: usize,
    /// Compression of the first projector onto the block.
    pub p: Matrix<T>,
    /// Compression of the second projector onto the block.
    pub q: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct JordanDecomposition<T> {
    pub basis: Matrix<T>,
    pub blocks: Vec<JordanBlock<T>>,
}

impl<T: Real> JordanDecomposition<T> {
    pub fn two_blocks(&self) -> impl Iterator<Item = &JordanBlock<T>> {
        self.blocks.iter().filter(|b| b.size == 2)
    }

    pub fn block_vectors(&self, block: &JordanBlock<T>) -> Vec<Vec<Complex<T>>> {
        (block.offset..block.offset + block.size)
            .map(|j| self.basis.column(j))
            .collect()
    }

    fn assemble(&self, pick: impl Fn(&JordanBlock<T>) -> &Matrix<T>) -> Matrix<T> {
        let n = self.basis.rows();
        let mut d = Matrix::zeros(n, n);
        for b in &self.blocks {
            let m = pick(b);
            for i in 0..b.size {
                for j in 0..b.size {
                    d[(b.offset + i, b.offset + j)] = m[(i, j)];
                }
            }
        }
        &(&self.basis * &d) * &self.basis.adjoint()
    }

    pub fn reconstruct_p(&self) -> Matrix<T> {
        self.assemble(|b| &b.p)
    }

    pub fn reconstruct_q(&self) -> Matrix<T> {
        self.assemble(|b| &b.q)
    }

    /// Largest entrywise deviation of the two reconstructions from the inputs.
    pub fn residual(&self, p: &Matrix<T>, q: &Matrix<T>) -> T {
        let rp = (&self.reconstruct_p() - p).max_abs();
        let rq = (&self.reconstruct_q() - q).max_abs();
        rp.max(rq)
    }
}

pub fn jordan_blocks<T: Real>(p: &Matrix<T>, q: &Matrix<T>) -> Result<JordanDecomposition<T>> {
    jordan_blocks_with_tol(p, q, T::lit(VALIDATION_TOL), T::lit(CLUSTER_TOL))
}

/// Simultaneous block diagonalization of two projectors through the spectrum of `P + Q`.
pub fn jordan_blocks_with_tol<T: Real>(
    p: &Matrix<T>,
    q: &Matrix<T>,
    tol: T,
    cluster_tol: T,
) -> Result<JordanDecomposition<T>> {
    if p.rows() != q.rows() || !p.is_square() || !q.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} and {}x{}",
            p.rows(),
            p.cols(),
            q.rows(),
            q.cols()
        )));
    }
    for m in [p, q] {
        let dev = m.projector_deviation();
        if dev > tol {
            return Err(LinalgError::NotProjector(dev.to_f64_lossy()));
        }
    }
    let n = p.rows();
    let one = T::one();
    let two = T::lit(2.0);
    let eig = eig_hermitian(&(p + q).hermitian_part())?;
    let id = Matrix::identity(n);
    let p_perp = &id - p;

    let mut cols: Vec<Vec<Complex<T>>> = Vec::with_capacity(n);
    let mut sizes: Vec<usize> = Vec::new();
    let mut ones: Vec<Vec<Complex<T>>> = Vec::new();
    for (k, &lam) in eig.values.iter().enumerate() {
        let v = eig.vector(k);
        if lam.abs() <= cluster_tol || (lam - two).abs() <= cluster_tol {
            cols.push(v);
            sizes.push(1);
        } else if (lam - one).abs() <= cluster_tol {
            ones.push(v);
        } else if lam > one {
            // one common phase keeps ⟨e1|Q|e2⟩ real and positive in every basis
            let v = fix_phase(v);
            let e1 = normalize(&p.apply(&v)).ok_or(LinalgError::ZeroVector)?;
            let e2 = normalize(&p_perp.apply(&v)).ok_or(LinalgError::ZeroVector)?;
            cols.push(e1);
            cols.push(e2);
            sizes.push(2);
        }
    }
    if !ones.is_empty() {
        // on the eigenvalue-1 space P and Q are complementary; split it by P
        let w = Matrix::from_columns(&ones);
        let pw = &(&w.adjoint() * p) * &w;
        let inner_eig = eig_hermitian(&pw.hermitian_part())?;
        for k in 0..ones.len() {
            cols.push(w.apply(&inner_eig.vector(k)));
            sizes.push(1);
        }
    }
    if cols.len() != n {
        return Err(LinalgError::NoConvergence(format!(
            "block structure covers {} of {} dimensions",
            cols.len(),
            n
        )));
    }

    let basis = Matrix::from_columns(&cols);
    let bp = &(&basis.adjoint() * p) * &basis;
    let bq = &(&basis.adjoint() * q) * &basis;
    let mut blocks = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for size in sizes {
        blocks.push(JordanBlock {
            offset,
            size,
            p: bp.submatrix(offset, offset, size, size),
            q: bq.submatrix(offset, offset, size, size),
        });
        offset += size;
    }
    Ok(JordanDecomposition { basis, blocks })
}

/// Rotates the global phase so the largest-modulus component is real positive.
pub(crate) fn fix_phase<T: Real>(mut v: Vec<Complex<T>>) -> Vec<Complex<T>> {
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() + T::lit(1e-12) {
            best = i;
        }
    }
    let z = v[best];
    let r = z.norm();
    if r > T::zero() {
        let ph = (z / Complex::new(r, T::zero())).conj();
        v.iter_mut().for_each(|x| *x *= ph);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::random::random_projector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ket_projector(v: &[f64]) -> Matrix<f64> {
        let c: Vec<_> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        Matrix::outer(&c, &c)
    }

    #[test]
    fn commuting_projectors_give_singletons() {
        let p = ket_projector(&[1.0, 0.0]);
        let d = jordan_blocks(&p, &p).unwrap();
        assert_eq!(d.blocks.len(), 2);
        assert!(d.blocks.iter().all(|b| b.size == 1));
        assert!(d.residual(&p, &p) < 1e-12);
    }

    #[test]
    fn rotated_pair_forms_one_block() {
        let a: f64 = 0.3;
        let p = ket_projector(&[1.0, 0.0]);
        let q = ket_projector(&[a.cos(), a.sin()]);
        let d = jordan_blocks(&p, &q).unwrap();
        assert_eq!(d.blocks.len(), 1);
        let b = &d.blocks[0];
        assert_eq!(b.size, 2);
        // first block vector spans the range of P
        assert!((b.p[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!((b.q[(0, 0)].re - a.cos().powi(2)).abs() < 1e-12);
        assert!(d.residual(&p, &q) < 1e-12);
    }

    #[test]
    fn orthogonal_complementary_pair() {
        let p = ket_projector(&[1.0, 0.0]);
        let q = ket_projector(&[0.0, 1.0]);
        let d = jordan_blocks(&p, &q).unwrap();
        assert!(d.blocks.iter().all(|b| b.size == 1));
        assert!(d.residual(&p, &q) < 1e-12);
    }

    #[test]
    fn rejects_non_projector() {
        let m = Matrix::<f64>::identity(2).scale(0.5);
        assert!(matches!(jordan_blocks(&m, &m), Err(LinalgError::NotProjector(_))));
    }

    #[test]
    fn two_hundred_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.random_range(1..=16);
            let (rp, rq) = (rng.random_range(0..=n), rng.random_range(0..=n));
            let p: Matrix<f64> = random_projector(n, rp, &mut rng);
            let q: Matrix<f64> = random_projector(n, rq, &mut rng);
            let d = jordan_blocks(&p, &q).unwrap();
            assert!(d.basis.is_unitary(1e-10));
            assert!(d.blocks.iter().all(|b| b.size <= 2));
            assert!(d.residual(&p, &q) < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn embedded_blocks_reconstruct(seed in 0u64..10_000, n in 2usize..9) {
            // projectors sharing a common subspace exercise the 0/1/2 clusters
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p0: Matrix<f64> = random_projector(n, n / 2, &mut rng);
            let q0: Matrix<f64> = random_projector(n, n.div_ceil(2), &mut rng);
            let id2 = Matrix::<f64>::identity(2);
            let e0 = ket_projector(&[1.0, 0.0]);
            let p = id2.kron(&p0);
            let q = e0.kron(&p0).clone();
            let q = &q + &(&id2 - &e0).kron(&q0);
            let d = jordan_blocks(&p, &q).unwrap();
            prop_assert!(d.basis.is_unitary(1e-10));
            prop_assert!(d.residual(&p, &q) < 1e-10);
        }
    }
}
