//! Dense interior-point solver for block semidefinite programs.
//!
//! The problem solved is
//!
//! ```text
//!   maximize  bᵀy   subject to   S = C − Σ_j y_j A_j ⪰ 0
//! ```
//!
//! over a product of PSD blocks and nonnegative orthants, together with its dual
//! `minimize ⟨C, X⟩ s.t. ⟨A_j, X⟩ = b_j, X ⪰ 0`. Both are embedded in the homogeneous
//! self-dual system; iterates follow the HKM direction with Mehrotra's
//! predictor-corrector. Status names refer to the maximization problem.

use serde::{Deserialize, Serialize};

use crate::qmath::{sym_eigen, Cholesky, RealMatrix};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Psd(usize),
    Nonneg(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Psd(n) | Cone::Nonneg(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Block<T> {
    Psd(RealMatrix<T>),
    Nonneg(Vec<T>),
}

impl<T: Real> Block<T> {
    fn zeros(c: Cone) -> Self {
        match c {
            Cone::Psd(n) => Block::Psd(RealMatrix::zeros(n, n)),
            Cone::Nonneg(n) => Block::Nonneg(vec![T::zero(); n]),
        }
    }

    fn identity(c: Cone) -> Self {
        match c {
            Cone::Psd(n) => Block::Psd(RealMatrix::identity(n)),
            Cone::Nonneg(n) => Block::Nonneg(vec![T::one(); n]),
        }
    }

    fn cone(&self) -> Cone {
        match self {
            Block::Psd(m) => Cone::Psd(m.rows()),
            Block::Nonneg(v) => Cone::Nonneg(v.len()),
        }
    }

    fn dot(&self, other: &Self) -> T {
        match (self, other) {
            (Block::Psd(a), Block::Psd(b)) => a.dot(b),
            (Block::Nonneg(a), Block::Nonneg(b)) => a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y),
            _ => panic!("block kinds differ"),
        }
    }

    fn axpy(&mut self, s: T, other: &Self) {
        match (self, other) {
            (Block::Psd(a), Block::Psd(b)) => a.axpy(s, b),
            (Block::Nonneg(a), Block::Nonneg(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += s * *y),
            _ => panic!("block kinds differ"),
        }
    }
}

/// Element of the product space, one block per cone.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector<T> {
    pub blocks: Vec<Block<T>>,
}

impl<T: Real> BlockVector<T> {
    pub fn zeros(cones: &[Cone]) -> Self {
        Self { blocks: cones.iter().map(|&c| Block::zeros(c)).collect() }
    }

    pub fn identity(cones: &[Cone]) -> Self {
        Self { blocks: cones.iter().map(|&c| Block::identity(c)).collect() }
    }

    pub fn cones(&self) -> Vec<Cone> {
        self.blocks.iter().map(Block::cone).collect()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.blocks.iter().zip(&other.blocks).fold(T::zero(), |s, (a, b)| s + a.dot(b))
    }

    pub fn axpy(&mut self, s: T, other: &Self) {
        self.blocks.iter_mut().zip(&other.blocks).for_each(|(a, b)| a.axpy(s, b));
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = Self::zeros(&self.cones());
        out.axpy(s, self);
        out
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.blocks.iter().fold(T::zero(), |m, b| match b {
            Block::Psd(a) => m.max(a.max_abs()),
            Block::Nonneg(v) => v.iter().fold(m, |m, x| m.max(x.abs())),
        })
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> T {
        self.blocks.iter().fold(T::infinity(), |m, b| match b {
            Block::Psd(a) if a.rows() > 0 => m.min(sym_eigen(&a.symmetrize()).values.iter().fold(T::infinity(), |x, &y| x.min(y))),
            Block::Psd(_) => m,
            Block::Nonneg(v) => v.iter().fold(m, |m, &x| m.min(x)),
        })
    }
}

/// `maximize bᵀy s.t. C − Σ y_j A_j ⪰ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpData<T> {
    pub cones: Vec<Cone>,
    pub c: BlockVector<T>,
    pub a: Vec<BlockVector<T>>,
    pub b: Vec<T>,
}

impl<T: Real> SdpData<T> {
    pub fn validate(&self) -> Result<(), String> {
        if self.a.len() != self.b.len() {
            return Err(format!("{} constraint matrices for {} objective entries", self.a.len(), self.b.len()));
        }
        for (j, m) in std::iter::once(&self.c).chain(&self.a).enumerate() {
            if m.cones() != self.cones {
                return Err(format!("matrix {j} does not match the cone layout"));
            }
        }
        Ok(())
    }

    fn apply_adjoint(&self, y: &[T]) -> BlockVector<T> {
        let mut out = BlockVector::zeros(&self.cones);
        for (j, aj) in self.a.iter().enumerate() {
            if y[j] != T::zero() {
                out.axpy(y[j], aj);
            }
        }
        out
    }

    fn apply(&self, x: &BlockVector<T>) -> Vec<T> {
        self.a.iter().map(|aj| aj.dot(x)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { feasibility_tol: 1e-8, gap_tol: 1e-8, max_iterations: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    /// No `y` makes `C − Σ y_j A_j` feasible; `certificate` holds the separating `X`.
    PrimalInfeasible,
    /// The maximization is unbounded.
    DualInfeasible,
    MaxIterations,
    NumericalTrouble,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpResult<T> {
    pub status: SdpStatus,
    /// `bᵀy` at the returned point.
    pub value: T,
    /// `⟨C, X⟩`, the bound from the minimization side.
    pub dual_value: T,
    pub y: Vec<T>,
    pub slack: BlockVector<T>,
    pub x: BlockVector<T>,
    /// `X ⪰ 0` with `⟨A_j, X⟩ ≈ 0` and `⟨C, X⟩ = −1` when infeasible.
    pub certificate: Option<BlockVector<T>>,
    pub primal_residual: T,
    pub dual_residual: T,
    pub gap: T,
    pub iterations: usize,
}

struct Factors<T> {
    x_chol: Vec<Option<Cholesky<T>>>,
    s_chol: Vec<Option<Cholesky<T>>>,
    s_inv: Vec<Block<T>>,
}

/// HKM operator `H(U) = sym(X U S⁻¹)`.
fn hkm<T: Real>(x: &BlockVector<T>, f: &Factors<T>, u: &BlockVector<T>) -> BlockVector<T> {
    let blocks = x
        .blocks
        .iter()
        .zip(&f.s_inv)
        .zip(&u.blocks)
        .map(|((xb, si), ub)| match (xb, si, ub) {
            (Block::Psd(x), Block::Psd(si), Block::Psd(u)) => Block::Psd((&(x * u) * si).symmetrize()),
            (Block::Nonneg(x), Block::Nonneg(si), Block::Nonneg(u)) => {
                Block::Nonneg(x.iter().zip(si).zip(u).map(|((x, s), u)| *x * *u * *s).collect())
            }
            _ => panic!("block kinds differ"),
        })
        .collect();
    BlockVector { blocks }
}

/// `sym(P Q S⁻¹)` for the second-order corrector.
fn corrector_term<T: Real>(p: &BlockVector<T>, q: &BlockVector<T>, f: &Factors<T>) -> BlockVector<T> {
    let blocks = p
        .blocks
        .iter()
        .zip(&q.blocks)
        .zip(&f.s_inv)
        .map(|((pb, qb), si)| match (pb, qb, si) {
            (Block::Psd(p), Block::Psd(q), Block::Psd(si)) => Block::Psd((&(p * q) * si).symmetrize()),
            (Block::Nonneg(p), Block::Nonneg(q), Block::Nonneg(si)) => {
                Block::Nonneg(p.iter().zip(q).zip(si).map(|((p, q), s)| *p * *q * *s).collect())
            }
            _ => panic!("block kinds differ"),
        })
        .collect();
    BlockVector { blocks }
}

fn factor<T: Real>(x: &BlockVector<T>, s: &BlockVector<T>) -> Option<Factors<T>> {
    let mut f = Factors { x_chol: Vec::new(), s_chol: Vec::new(), s_inv: Vec::new() };
    for (xb, sb) in x.blocks.iter().zip(&s.blocks) {
        match (xb, sb) {
            (Block::Psd(xm), Block::Psd(sm)) => {
                let cx = Cholesky::new(&xm.symmetrize()).ok()?;
                let cs = Cholesky::new(&sm.symmetrize()).ok()?;
                f.s_inv.push(Block::Psd(cs.inverse().symmetrize()));
                f.x_chol.push(Some(cx));
                f.s_chol.push(Some(cs));
            }
            (Block::Nonneg(xv), Block::Nonneg(sv)) => {
                if xv.iter().chain(sv).any(|&v| !(v > T::zero())) {
                    return None;
                }
                f.s_inv.push(Block::Nonneg(sv.iter().map(|&v| T::one() / v).collect()));
                f.x_chol.push(None);
                f.s_chol.push(None);
            }
            _ => return None,
        }
    }
    Some(f)
}

/// Largest `α` keeping `v + α·dv` in the cone, using the factor of `v` when available.
fn max_step<T: Real>(v: &BlockVector<T>, chol: &[Option<Cholesky<T>>], dv: &BlockVector<T>) -> T {
    let mut alpha = T::infinity();
    for ((vb, c), db) in v.blocks.iter().zip(chol).zip(&dv.blocks) {
        match (vb, db) {
            (Block::Psd(_), Block::Psd(d)) => {
                if d.rows() == 0 {
                    continue;
                }
                let l = c.as_ref().expect("factor of PSD block");
                let w = l.whiten(d).symmetrize();
                let lmin = sym_eigen(&w).values.iter().fold(T::infinity(), |m, &x| m.min(x));
                if lmin < T::zero() {
                    alpha = alpha.min(-T::one() / lmin);
                }
            }
            (Block::Nonneg(x), Block::Nonneg(d)) => {
                for (xi, di) in x.iter().zip(d) {
                    if *di < T::zero() {
                        alpha = alpha.min(-*xi / *di);
                    }
                }
            }
            _ => {}
        }
    }
    alpha
}

struct Direction<T> {
    dx: BlockVector<T>,
    ds: BlockVector<T>,
    dy: Vec<T>,
    dtau: T,
    dkappa: T,
}

struct Iterate<T> {
    x: BlockVector<T>,
    s: BlockVector<T>,
    y: Vec<T>,
    tau: T,
    kappa: T,
}

/// Factored Schur complement and the quantities shared by both direction solves.
struct Newton<T> {
    chol: Cholesky<T>,
    hc: BlockVector<T>,
    u: Vec<T>,
    chc: T,
}

fn schur<T: Real>(data: &SdpData<T>, it: &Iterate<T>, f: &Factors<T>) -> Option<Newton<T>> {
    let m = data.b.len();
    let ha: Vec<BlockVector<T>> = data.a.iter().map(|aj| hkm(&it.x, f, aj)).collect();
    let mut mm = RealMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = data.a[i].dot(&ha[j]);
            mm[(i, j)] = v;
            mm[(j, i)] = v;
        }
    }
    let hc = hkm(&it.x, f, &data.c);
    let u = data.apply(&hc);
    let chc = data.c.dot(&hc);
    let max_diag = (0..m).fold(T::zero(), |acc, i| acc.max(mm[(i, i)].abs()));
    let mut reg = T::zero();
    for _ in 0..6 {
        let mut trial = mm.clone();
        for i in 0..m {
            trial[(i, i)] += reg;
        }
        if let Ok(chol) = Cholesky::new(&trial) {
            return Some(Newton { chol, hc, u, chc });
        }
        reg = if reg == T::zero() { T::epsilon() * max_diag.max(T::one()) } else { reg * T::lit(100.0) };
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn direction<T: Real>(
    data: &SdpData<T>,
    it: &Iterate<T>,
    f: &Factors<T>,
    nt: &Newton<T>,
    res: &Residuals<T>,
    sigma_mu: T,
    eta: T,
    corr: Option<&Direction<T>>,
) -> Direction<T> {
    let m = data.b.len();
    // rc = σμ S⁻¹ − X − sym(dX_a dS_a S⁻¹)
    let mut rc = BlockVector { blocks: f.s_inv.clone() }.scaled(sigma_mu);
    rc.axpy(-T::one(), &it.x);
    let mut rtk = sigma_mu - it.tau * it.kappa;
    if let Some(c) = corr {
        rc.axpy(-T::one(), &corrector_term(&c.dx, &c.ds, f));
        rtk -= c.dtau * c.dkappa;
    }
    let mut r_prime = rc;
    r_prime.axpy(-eta, &hkm(&it.x, f, &res.rd));
    let a_rp = data.apply(&r_prime);
    let rhs1: Vec<T> = (0..m).map(|i| eta * res.rp[i] - a_rp[i]).collect();
    let ub: Vec<T> = (0..m).map(|i| nt.u[i] + data.b[i]).collect();
    let v1 = nt.chol.solve(&rhs1);
    let v2 = nt.chol.solve(&ub);
    let bmu: Vec<T> = (0..m).map(|i| data.b[i] - nt.u[i]).collect();
    let dotv = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y);
    let rhs2 = eta * res.rg + data.c.dot(&r_prime) + rtk / it.tau;
    let denom = dotv(&bmu, &v2) + nt.chc + it.kappa / it.tau;
    let dtau = (rhs2 - dotv(&bmu, &v1)) / denom;
    let dy: Vec<T> = (0..m).map(|i| v1[i] + dtau * v2[i]).collect();
    // dS = η R_d − Aᵀdy + C dτ
    let mut ds = res.rd.scaled(eta);
    ds.axpy(-T::one(), &data.apply_adjoint(&dy));
    ds.axpy(dtau, &data.c);
    // dX = R' + H(Aᵀdy) − dτ H(C)
    let mut dx = r_prime;
    dx.axpy(T::one(), &hkm(&it.x, f, &data.apply_adjoint(&dy)));
    dx.axpy(-dtau, &nt.hc);
    let dkappa = (rtk - it.kappa * dtau) / it.tau;
    Direction { dx, ds, dy, dtau, dkappa }
}

struct Residuals<T> {
    rp: Vec<T>,
    rd: BlockVector<T>,
    rg: T,
}

fn residuals<T: Real>(data: &SdpData<T>, it: &Iterate<T>) -> Residuals<T> {
    let ax = data.apply(&it.x);
    let rp = data.b.iter().zip(&ax).map(|(b, a)| *b * it.tau - *a).collect();
    let mut rd = data.c.scaled(it.tau);
    rd.axpy(-T::one(), &data.apply_adjoint(&it.y));
    rd.axpy(-T::one(), &it.s);
    let by = data.b.iter().zip(&it.y).fold(T::zero(), |s, (b, y)| s + *b * *y);
    let rg = it.kappa - by + data.c.dot(&it.x);
    Residuals { rp, rd, rg }
}

fn step_length<T: Real>(it: &Iterate<T>, f: &Factors<T>, d: &Direction<T>) -> T {
    let mut a = max_step(&it.x, &f.x_chol, &d.dx).min(max_step(&it.s, &f.s_chol, &d.ds));
    if d.dtau < T::zero() {
        a = a.min(-it.tau / d.dtau);
    }
    if d.dkappa < T::zero() {
        a = a.min(-it.kappa / d.dkappa);
    }
    a
}

fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt()
}

pub fn solve<T: Real>(data: &SdpData<T>, cfg: &SolverConfig) -> SdpResult<T> {
    let cones = data.cones.clone();
    let m = data.b.len();
    let n: usize = cones.iter().map(Cone::dim).sum();
    let nu = T::from_usize(n + 1).expect("cone size");
    let tol_f = T::lit(cfg.feasibility_tol);
    let tol_g = T::lit(cfg.gap_tol);
    let norm_b = norm2(&data.b);
    let norm_c = data.c.norm();

    let mut it = Iterate { x: BlockVector::identity(&cones), s: BlockVector::identity(&cones), y: vec![T::zero(); m], tau: T::one(), kappa: T::one() };

    let finish = |it: &Iterate<T>, status: SdpStatus, iterations: usize, certificate: Option<BlockVector<T>>| {
        let res = residuals(data, it);
        let by = data.b.iter().zip(&it.y).fold(T::zero(), |s, (b, y)| s + *b * *y);
        let cx = data.c.dot(&it.x);
        let tau = it.tau;
        let value = by / tau;
        let dual_value = cx / tau;
        SdpResult {
            status,
            value,
            dual_value,
            y: it.y.iter().map(|v| *v / tau).collect(),
            slack: it.s.scaled(T::one() / tau),
            x: it.x.scaled(T::one() / tau),
            certificate,
            primal_residual: norm2(&res.rp) / (tau * (T::one() + norm_b)),
            dual_residual: res.rd.norm() / (tau * (T::one() + norm_c)),
            gap: (value - dual_value).abs() / (T::one() + value.abs() + dual_value.abs()),
            iterations,
        }
    };

    let mut stalls = 0;
    for iter in 0..cfg.max_iterations {
        let res = residuals(data, &it);
        let by = data.b.iter().zip(&it.y).fold(T::zero(), |s, (b, y)| s + *b * *y);
        let cx = data.c.dot(&it.x);
        let pres = norm2(&res.rp) / (it.tau * (T::one() + norm_b));
        let dres = res.rd.norm() / (it.tau * (T::one() + norm_c));
        let (pv, dv) = (by / it.tau, cx / it.tau);
        let gap = (pv - dv).abs() / (T::one() + pv.abs() + dv.abs());
        if pres <= tol_f && dres <= tol_f && gap <= tol_g {
            return finish(&it, SdpStatus::Optimal, iter, None);
        }
        // infeasibility rays of the homogeneous system
        if cx < T::zero() {
            let ax = data.apply(&it.x);
            if norm2(&ax) * (T::one() + norm_b) <= -cx * tol_f * T::lit(10.0) && it.tau <= it.kappa {
                let cert = it.x.scaled(-T::one() / cx);
                return finish(&it, SdpStatus::PrimalInfeasible, iter, Some(cert));
            }
        }
        if by > T::zero() {
            let mut r = data.apply_adjoint(&it.y);
            r.axpy(T::one(), &it.s);
            if r.norm() * (T::one() + norm_c) <= by * tol_f * T::lit(10.0) && it.tau <= it.kappa {
                return finish(&it, SdpStatus::DualInfeasible, iter, None);
            }
        }

        let Some(f) = factor(&it.x, &it.s) else {
            return finish(&it, SdpStatus::NumericalTrouble, iter, None);
        };
        let Some(nt) = schur(data, &it, &f) else {
            return finish(&it, SdpStatus::NumericalTrouble, iter, None);
        };
        let mu = (it.x.dot(&it.s) + it.tau * it.kappa) / nu;

        let pred = direction(data, &it, &f, &nt, &res, T::zero(), T::one(), None);
        let a_aff = step_length(&it, &f, &pred).min(T::one());
        let mut xa = it.x.clone();
        xa.axpy(a_aff, &pred.dx);
        let mut sa = it.s.clone();
        sa.axpy(a_aff, &pred.ds);
        let mu_aff = (xa.dot(&sa) + (it.tau + a_aff * pred.dtau) * (it.kappa + a_aff * pred.dkappa)) / nu;
        let ratio = (mu_aff / mu).max(T::zero()).min(T::one());
        let sigma = ratio * ratio * ratio;

        let corr = direction(data, &it, &f, &nt, &res, sigma * mu, T::one() - sigma, Some(&pred));
        let amax = step_length(&it, &f, &corr);
        let gamma = if amax > T::lit(10.0) { T::lit(0.99) } else { T::lit(0.95) };
        let alpha = (gamma * amax).min(T::one());
        if !(alpha > T::lit(1e-12)) {
            stalls += 1;
            if stalls >= 3 {
                return finish(&it, SdpStatus::NumericalTrouble, iter, None);
            }
            continue;
        }
        it.x.axpy(alpha, &corr.dx);
        it.s.axpy(alpha, &corr.ds);
        for (y, d) in it.y.iter_mut().zip(&corr.dy) {
            *y += alpha * *d;
        }
        it.tau += alpha * corr.dtau;
        it.kappa += alpha * corr.dkappa;
        if !(it.tau > T::zero()) || !(it.kappa > T::zero()) || it.y.iter().any(|v| !v.is_finite()) {
            return finish(&it, SdpStatus::NumericalTrouble, iter, None);
        }
        // keep the homogeneous iterate on a bounded scale
        let scale = T::one() / (it.tau + it.kappa);
        if scale < T::lit(1e-6) || scale > T::lit(1e6) {
            it.x = it.x.scaled(scale);
            it.s = it.s.scaled(scale);
            it.y.iter_mut().for_each(|v| *v *= scale);
            it.tau *= scale;
            it.kappa *= scale;
        }
    }
    finish(&it, SdpStatus::MaxIterations, cfg.max_iterations, None)
}
