//! Reduction of a moment problem to the solver's standard form.
//!
//! Equalities are solved exactly (`y = P·b + N·z` from a reduced row echelon form), each
//! moment block is restricted to its face, and the inequalities form one orthant block.

use serde::{Deserialize, Serialize};

use super::problem::MomentProblem;
use super::sdp::{solve, Block, BlockVector, Cone, SdpData, SdpResult, SdpStatus, SolverConfig};
use crate::qmath::{sym_eigen, RealMatrix};

const RANK_TOL: f64 = 1e-10;
const CONSISTENCY_TOL: f64 = 1e-9;

/// Reduced row echelon form of `A` together with the row operations `E` (`E·A = R`).
struct Echelon {
    pivots: Vec<usize>,
    r: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
}

fn echelon(a: &[Vec<f64>], cols: usize) -> Echelon {
    let rows = a.len();
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut e: Vec<Vec<f64>> = (0..rows).map(|i| (0..rows).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale = r.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let (best, val) = (row..rows).map(|i| (i, r[i][col].abs())).fold((row, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= RANK_TOL * scale {
            continue;
        }
        r.swap(row, best);
        e.swap(row, best);
        let inv = 1.0 / r[row][col];
        r[row].iter_mut().for_each(|x| *x *= inv);
        e[row].iter_mut().for_each(|x| *x *= inv);
        let (pr, pe) = (r[row].clone(), e[row].clone());
        for i in 0..rows {
            if i != row {
                let f = r[i][col];
                if f != 0.0 {
                    r[i].iter_mut().zip(&pr).for_each(|(x, p)| *x -= f * p);
                    e[i].iter_mut().zip(&pe).for_each(|(x, p)| *x -= f * p);
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    Echelon { pivots, r, e }
}

/// Which cone carries a given solver block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ConeSource {
    Moment(usize),
    Inequalities,
}

/// Affine form `f(b) = constant + φᵀb` on the equality right-hand sides that is `≥ −slack`
/// at every feasible point, where `slack = residual_l1 · max |free moment|`, and negative
/// on the data that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Farkas {
    pub multipliers: Vec<f64>,
    pub constant: f64,
    pub residual_l1: f64,
}

impl Farkas {
    pub fn eval(&self, rhs: &[f64]) -> f64 {
        self.constant + self.multipliers.iter().zip(rhs).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Solution of a moment problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Bound from the dual side: an upper bound on the maximum up to the dual residual.
    pub value: f64,
    /// Objective at the returned moments.
    pub primal_value: f64,
    pub moments: Vec<f64>,
    /// Full moment matrices `Γ_st`, row-major.
    pub block_matrices: Vec<Vec<Vec<f64>>>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub farkas: Option<Farkas>,
}

/// Standard-form image of a moment problem.
pub struct Lowered<'a> {
    problem: &'a MomentProblem,
    rhs: Vec<f64>,
    /// `y = P·rhs + N·z`.
    p: RealMatrix<f64>,
    n: RealMatrix<f64>,
    /// Rows of `E` for which `E·A = 0`, with `(E·rhs)` values.
    consistency: Vec<(Vec<f64>, f64)>,
    sources: Vec<ConeSource>,
    cones: Vec<Cone>,
    /// Columns span the free directions visible to the cones.
    reduce: RealMatrix<f64>,
    unbounded: bool,
    pub sdp: SdpData<f64>,
    offset: f64,
}

impl<'a> Lowered<'a> {
    pub fn new(problem: &'a MomentProblem) -> Self {
        let nv = problem.n_vars();
        let neq = problem.equalities.len();
        let a: Vec<Vec<f64>> = problem
            .equalities
            .iter()
            .map(|eq| {
                let mut row = vec![0.0; nv];
                for &(v, c) in &eq.expr.terms {
                    row[v] += c;
                }
                row
            })
            .collect();
        let rhs: Vec<f64> = problem.equalities.iter().map(|eq| eq.rhs - eq.expr.constant).collect();
        let ech = echelon(&a, nv);
        let rank = ech.pivots.len();
        let is_pivot: Vec<Option<usize>> = {
            let mut v = vec![None; nv];
            for (r, &c) in ech.pivots.iter().enumerate() {
                v[c] = Some(r);
            }
            v
        };
        let free: Vec<usize> = (0..nv).filter(|&c| is_pivot[c].is_none()).collect();
        let mut p = RealMatrix::zeros(nv, neq);
        let mut n = RealMatrix::zeros(nv, free.len());
        for (r, &c) in ech.pivots.iter().enumerate() {
            for k in 0..neq {
                p[(c, k)] = ech.e[r][k];
            }
            for (f, &fc) in free.iter().enumerate() {
                n[(c, f)] = -ech.r[r][fc];
            }
        }
        for (f, &fc) in free.iter().enumerate() {
            n[(fc, f)] = 1.0;
        }
        let consistency = (rank..neq)
            .map(|r| {
                let val: f64 = ech.e[r].iter().zip(&rhs).map(|(a, b)| a * b).sum();
                (ech.e[r].clone(), val)
            })
            .collect();

        let mut sources = Vec::new();
        let mut cones = Vec::new();
        for (k, b) in problem.blocks.iter().enumerate() {
            if b.face.cols() > 0 {
                sources.push(ConeSource::Moment(k));
                cones.push(Cone::Psd(b.face.cols()));
            }
        }
        if !problem.inequalities.is_empty() {
            sources.push(ConeSource::Inequalities);
            cones.push(Cone::Nonneg(problem.inequalities.len()));
        }

        let mut low = Lowered {
            problem,
            rhs,
            p,
            n,
            consistency,
            sources,
            cones,
            reduce: RealMatrix::zeros(0, 0),
            unbounded: false,
            sdp: SdpData { cones: Vec::new(), c: BlockVector { blocks: Vec::new() }, a: Vec::new(), b: Vec::new() },
            offset: 0.0,
        };
        low.assemble();
        low
    }

    /// Affine cone image of the moment vector `y`.
    fn cone_map(&self, y: &[f64], with_constant: bool) -> BlockVector<f64> {
        let blocks = self
            .sources
            .iter()
            .map(|src| match *src {
                ConeSource::Moment(k) => {
                    let b = &self.problem.blocks[k];
                    Block::Psd(b.matrix(y).congruence(&b.face).symmetrize())
                }
                ConeSource::Inequalities => Block::Nonneg(
                    self.problem
                        .inequalities
                        .iter()
                        .map(|ex| ex.eval(y) - if with_constant { 0.0 } else { ex.constant })
                        .collect(),
                ),
            })
            .collect();
        BlockVector { blocks }
    }

    /// Adjoint of the linear part of `cone_map`.
    fn cone_adjoint(&self, x: &BlockVector<f64>) -> Vec<f64> {
        let mut w = vec![0.0; self.problem.n_vars()];
        for (src, blk) in self.sources.iter().zip(&x.blocks) {
            match (*src, blk) {
                (ConeSource::Moment(k), Block::Psd(xm)) => {
                    let b = &self.problem.blocks[k];
                    let full = (&(&b.face * xm) * &b.face.transpose()).symmetrize();
                    for (i, row) in b.entries.iter().enumerate() {
                        for (j, e) in row.iter().enumerate() {
                            if let Some(v) = e {
                                w[*v] += full[(i, j)];
                            }
                        }
                    }
                }
                (ConeSource::Inequalities, Block::Nonneg(xv)) => {
                    for (ex, xi) in self.problem.inequalities.iter().zip(xv) {
                        for &(v, c) in &ex.terms {
                            w[v] += c * xi;
                        }
                    }
                }
                _ => unreachable!("cone layout"),
            }
        }
        w
    }

    fn particular(&self) -> Vec<f64> {
        self.p.apply(&self.rhs)
    }

    fn assemble(&mut self) {
        let y0 = self.particular();
        let nf = self.n.cols();
        let c = self.cone_map(&y0, true);
        let g: Vec<BlockVector<f64>> = (0..nf).map(|f| self.cone_map(&self.n.column(f), false)).collect();
        let obj = &self.problem.objective;
        self.offset = obj.eval(&y0);
        let mut gobj = vec![0.0; nf];
        for &(v, coef) in &obj.terms {
            for (f, gf) in gobj.iter_mut().enumerate() {
                *gf += coef * self.n[(v, f)];
            }
        }
        // free directions that no cone sees are either irrelevant or make the problem unbounded
        let gram = RealMatrix::from_fn(nf, nf, |i, j| g[i].dot(&g[j]));
        let eig = sym_eigen(&gram.symmetrize());
        let top = eig.values.iter().fold(0.0f64, |m, &x| m.max(x));
        let keep: Vec<usize> = (0..nf).filter(|&i| eig.values[i] > 1e-12 * top.max(1e-300)).collect();
        self.reduce = RealMatrix::from_fn(nf, keep.len(), |i, j| eig.vectors[(i, keep[j])]);
        let proj = self.reduce.apply(&self.reduce.apply_transpose(&gobj));
        let resid: f64 = gobj.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let gnorm: f64 = gobj.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.unbounded = resid > 1e-9 * (1.0 + gnorm);
        let m = keep.len();
        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        for k in 0..m {
            let mut ak = BlockVector::zeros(&self.cones);
            let mut bk = 0.0;
            for f in 0..nf {
                let u = self.reduce[(f, k)];
                if u != 0.0 {
                    ak.axpy(-u, &g[f]);
                    bk += u * gobj[f];
                }
            }
            a.push(ak);
            b.push(bk);
        }
        self.sdp = SdpData { cones: self.cones.clone(), c, a, b };
    }

    /// Equality right-hand sides the problem was lowered with.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn moments_from(&self, yred: &[f64]) -> Vec<f64> {
        let z = self.reduce.apply(yred);
        let mut y = self.particular();
        let nz = self.n.apply(&z);
        y.iter_mut().zip(&nz).for_each(|(a, b)| *a += b);
        y
    }

    fn farkas_from(&self, x: &BlockVector<f64>) -> Farkas {
        let w = self.cone_adjoint(x);
        let multipliers = self.p.apply_transpose(&w);
        let zero = vec![0.0; self.problem.n_vars()];
        let constant = self.cone_map(&zero, true).dot(x);
        let r = self.n.apply_transpose(&w);
        Farkas { multipliers, constant, residual_l1: r.iter().map(|v| v.abs()).sum() }
    }

    pub fn solve(&self, cfg: &SolverConfig) -> SdpSolution {
        let nv = self.problem.n_vars();
        let blank = |status, farkas| SdpSolution {
            status,
            value: f64::NAN,
            primal_value: f64::NAN,
            moments: vec![0.0; nv],
            block_matrices: Vec::new(),
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            gap: f64::NAN,
            iterations: 0,
            farkas,
        };
        let scale = self.rhs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if let Some((row, val)) = self.consistency.iter().find(|(_, v)| v.abs() > CONSISTENCY_TOL * scale) {
            let sign = if *val > 0.0 { -1.0 } else { 1.0 };
            let farkas = Farkas { multipliers: row.iter().map(|x| sign * x).collect(), constant: 0.0, residual_l1: 0.0 };
            return blank(SdpStatus::PrimalInfeasible, Some(farkas));
        }
        if self.unbounded {
            return blank(SdpStatus::DualInfeasible, None);
        }
        if self.sdp.b.is_empty() {
            // every moment is fixed by the equalities
            let y = self.particular();
            let feasible = self.cone_map(&y, true).min_eigenvalue() >= -cfg.feasibility_tol;
            let mut sol = self.package(&y, self.offset, self.offset, SdpStatus::Optimal);
            if !feasible {
                sol.status = SdpStatus::PrimalInfeasible;
            }
            return sol;
        }
        let r: SdpResult<f64> = solve(&self.sdp, cfg);
        let y = self.moments_from(&r.y);
        let mut sol = self.package(&y, r.dual_value + self.offset, r.value + self.offset, r.status);
        sol.primal_residual = r.primal_residual;
        sol.dual_residual = r.dual_residual;
        sol.gap = r.gap;
        sol.iterations = r.iterations;
        if let Some(x) = &r.certificate {
            sol.farkas = Some(self.farkas_from(x));
        }
        sol
    }

    fn package(&self, y: &[f64], value: f64, primal_value: f64, status: SdpStatus) -> SdpSolution {
        let block_matrices = self
            .problem
            .blocks
            .iter()
            .map(|b| {
                let m = b.matrix(y);
                (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
            })
            .collect();
        SdpSolution {
            status,
            value,
            primal_value,
            moments: y.to_vec(),
            block_matrices,
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
            iterations: 0,
            farkas: None,
        }
    }
}

pub fn solve_sdp(problem: &MomentProblem, cfg: &SolverConfig) -> SdpSolution {
    Lowered::new(problem).solve(cfg)
}
