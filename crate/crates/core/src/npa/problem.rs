use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::monomial::{build_basis, canonical_form, Monomial, Symbol};
use super::{NpaError, Result};
use crate::qmath::{sym_eigen, RealMatrix};
use crate::scenario::{Event, ScenarioShape};

pub const MAX_LEVEL: usize = 3;

/// Linear expression `constant + Σ coeff · p(stab|xy)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbExpr {
    pub terms: Vec<(Event, f64)>,
    #[serde(default)]
    pub constant: f64,
}

impl ProbExpr {
    pub fn new(terms: Vec<(Event, f64)>) -> Self {
        Self { terms, constant: 0.0 }
    }

    pub fn single(e: Event) -> Self {
        Self::new(vec![(e, 1.0)])
    }

    /// `p(st00|00) + w·p(st11|00)` on source pair `(s, t)`.
    pub fn hardy(s: usize, t: usize, w: f64) -> Self {
        Self::new(vec![(Event::new(s, t, 0, 0, 0, 0), 1.0), (Event::new(s, t, 1, 1, 0, 0), w)])
    }

    /// Observed CHSH combination `Σ_st (−1)^{st} Σ_ab (−1)^{a+b} p(stab|st)` on the binary
    /// shape; for a single source the four settings are taken on `s = t = 0` and the sum
    /// is divided by 4, so both are normalized the same way.
    pub fn chsh(shape: &ScenarioShape) -> Self {
        let mut terms = Vec::new();
        let single = shape.is_single_source();
        for x in 0..2 {
            for y in 0..2 {
                let sxy = if x * y == 1 { -1.0 } else { 1.0 };
                for a in 0..2 {
                    for b in 0..2 {
                        let sab = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                        let (s, t, scale) = if single { (0, 0, 0.25) } else { (x, y, 1.0) };
                        terms.push((Event::new(s, t, a, b, x, y), sxy * sab * scale));
                    }
                }
            }
        }
        Self::new(terms)
    }

    pub fn eval(&self, p: impl Fn(Event) -> f64) -> f64 {
        self.constant + self.terms.iter().map(|&(e, c)| c * p(e)).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind", content = "values")]
pub enum Weights {
    Fixed(Vec<f64>),
    Free,
}

/// Everything defining one relaxation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProblemSpec {
    pub shape: ScenarioShape,
    pub level: usize,
    pub weights: Weights,
    #[serde(default)]
    pub zeros: Vec<Event>,
    #[serde(default)]
    pub values: Vec<(ProbExpr, f64)>,
    pub objective: ProbExpr,
    #[serde(default)]
    pub residual_bounds: Option<(f64, f64)>,
}

/// Sparse linear form over moment variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    fn add(&mut self, var: usize, c: f64) {
        self.terms.push((var, c));
    }

    fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
        self.constant += other.constant * scale;
    }

    /// Merges repeated variables and drops exact zeros.
    pub fn compact(mut self) -> Self {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for (v, c) in self.terms.drain(..) {
            *map.entry(v).or_insert(0.0) += c;
        }
        self.terms = map.into_iter().filter(|&(_, c)| c != 0.0).collect();
        self
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * y[v]).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Origin {
    Weight { s: usize, t: usize },
    Normalization,
    Zero(Event),
    Value(usize),
    /// Row `u` of `Γ_st v = 0` for a kernel vector forced by a zero.
    Kernel { s: usize, t: usize, u: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub expr: LinExpr,
    pub rhs: f64,
    pub origin: Origin,
}

/// Moment matrix of one source pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentBlock {
    pub s: usize,
    pub t: usize,
    /// Global variable of entry `(u, v)`, `None` for the zero operator.
    pub entries: Vec<Vec<Option<usize>>>,
    /// Orthonormal columns spanning the face left after removing forced kernel vectors.
    pub face: RealMatrix<f64>,
}

impl MomentBlock {
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// `Γ(y)` on the full basis.
    pub fn matrix(&self, y: &[f64]) -> RealMatrix<f64> {
        let n = self.size();
        RealMatrix::from_fn(n, n, |i, j| self.entries[i][j].map_or(0.0, |v| y[v]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentProblem {
    pub shape: ScenarioShape,
    pub level: usize,
    pub basis: Vec<Monomial>,
    /// Moment monomial of each local variable; block `k` owns `k·n_local .. (k+1)·n_local`.
    pub moments: Vec<Monomial>,
    pub blocks: Vec<MomentBlock>,
    pub equalities: Vec<Equality>,
    /// Each expression is constrained `≥ 0`.
    pub inequalities: Vec<LinExpr>,
    pub objective: LinExpr,
    pub residual_bounds: Option<(f64, f64)>,
}

impl MomentProblem {
    pub fn n_vars(&self) -> usize {
        self.moments.len() * self.blocks.len()
    }

    pub fn n_local(&self) -> usize {
        self.moments.len()
    }

    fn local_index(&self, m: &Monomial) -> Option<usize> {
        let key = m.real_key();
        self.moments.iter().position(|x| *x == key)
    }

    /// `L_st(m)` as a variable, `None` when `m` is the zero operator.
    pub fn variable(&self, block: usize, m: &Monomial) -> Result<Option<usize>> {
        if m.is_zero() {
            return Ok(None);
        }
        self.local_index(m)
            .map(|i| Some(block * self.n_local() + i))
            .ok_or_else(|| NpaError::MomentOutOfScope(format!("{m} is not a moment at level {}", self.level)))
    }

    /// Effect `A(a, x)` with the last outcome expanded by completeness.
    fn effect(&self, a: usize, n: usize, make: impl Fn(usize) -> Symbol) -> Vec<(Option<Symbol>, f64)> {
        if a + 1 < n {
            vec![(Some(make(a)), 1.0)]
        } else {
            let mut v = vec![(None, 1.0)];
            v.extend((0..n - 1).map(|k| (Some(make(k)), -1.0)));
            v
        }
    }

    /// `A_{a|x} B_{b|y}` as a combination of canonical monomials.
    pub fn event_operator(&self, e: Event) -> Vec<(Monomial, f64)> {
        let sh = &self.shape;
        let ea = self.effect(e.a, sh.na, |k| Symbol::a(k, e.x));
        let eb = self.effect(e.b, sh.nb, |k| Symbol::b(k, e.y));
        let mut out = Vec::new();
        for (sa, ca) in &ea {
            for (sb, cb) in &eb {
                let word: Vec<Symbol> = sa.iter().chain(sb.iter()).copied().collect();
                out.push((canonical_form(&word), ca * cb));
            }
        }
        out
    }

    fn block_index(&self, s: usize, t: usize) -> usize {
        s * self.shape.nt + t
    }

    /// `p(stab|xy) = L_st(A_{a|x} B_{b|y})`.
    pub fn event_expr(&self, e: Event) -> Result<LinExpr> {
        let k = self.block_index(e.s, e.t);
        let mut ex = LinExpr::default();
        for (m, c) in self.event_operator(e) {
            if let Some(v) = self.variable(k, &m)? {
                ex.add(v, c);
            }
        }
        Ok(ex.compact())
    }

    pub fn prob_expr(&self, p: &ProbExpr) -> Result<LinExpr> {
        let mut ex = LinExpr { terms: Vec::new(), constant: p.constant };
        for &(e, c) in &p.terms {
            check_event(&self.shape, e)?;
            ex.add_expr(&self.event_expr(e)?, c);
        }
        Ok(ex.compact())
    }

    /// Moment values of `y` evaluated as a behavior tensor.
    pub fn probability(&self, y: &[f64], e: Event) -> Result<f64> {
        Ok(self.event_expr(e)?.eval(y))
    }
}

fn check_event(sh: &ScenarioShape, e: Event) -> Result<()> {
    if e.s < sh.ns && e.t < sh.nt && e.a < sh.na && e.b < sh.nb && e.x < sh.nx && e.y < sh.ny {
        Ok(())
    } else {
        Err(NpaError::InvalidEvent(format!("{e:?} is outside the shape {sh:?}")))
    }
}

fn validate(spec: &ProblemSpec) -> Result<()> {
    spec.shape.validate().map_err(NpaError::Scenario)?;
    if spec.level == 0 || spec.level > MAX_LEVEL {
        return Err(NpaError::InvalidLevel(spec.level));
    }
    if let Some((l, u)) = spec.residual_bounds {
        if !(l > 0.0 && l <= u && u < 1.0) {
            return Err(NpaError::InvalidBounds(l, u));
        }
        if spec.shape.source_pairs() < 2 {
            return Err(NpaError::InvalidBounds(l, u));
        }
    }
    if let Weights::Fixed(w) = &spec.weights {
        let total: f64 = w.iter().sum();
        if w.len() != spec.shape.source_pairs() || w.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(NpaError::InvalidWeights(format!("{w:?}")));
        }
    }
    for &e in &spec.zeros {
        check_event(&spec.shape, e)?;
    }
    Ok(())
}

/// Moment problem: one block per source pair, shared basis, zeros with facial reduction.
pub fn build_moment_problem(spec: &ProblemSpec) -> Result<MomentProblem> {
    validate(spec)?;
    let sh = spec.shape;
    let basis = build_basis(&sh, spec.level);
    let n = basis.len();

    let mut local: BTreeMap<Monomial, usize> = BTreeMap::new();
    let mut moments = Vec::new();
    let mut pattern = vec![vec![None; n]; n];
    for (i, u) in basis.iter().enumerate() {
        for (j, v) in basis.iter().enumerate() {
            let m = u.adjoint().mul(v);
            if m.is_zero() {
                continue;
            }
            let key = m.real_key();
            let id = *local.entry(key.clone()).or_insert_with(|| {
                moments.push(key.clone());
                moments.len() - 1
            });
            pattern[i][j] = Some(id);
        }
    }
    let nl = moments.len();
    let pairs = sh.source_pairs();
    let mut p = MomentProblem {
        shape: sh,
        level: spec.level,
        basis,
        moments,
        blocks: Vec::with_capacity(pairs),
        equalities: Vec::new(),
        inequalities: Vec::new(),
        objective: LinExpr::default(),
        residual_bounds: spec.residual_bounds,
    };
    for s in 0..sh.ns {
        for t in 0..sh.nt {
            let k = s * sh.nt + t;
            let entries = pattern
                .iter()
                .map(|row| row.iter().map(|e| e.map(|v| k * nl + v)).collect())
                .collect();
            p.blocks.push(MomentBlock { s, t, entries, face: RealMatrix::identity(n) });
        }
    }

    let identity = Monomial::identity();
    match &spec.weights {
        Weights::Fixed(w) => {
            for s in 0..sh.ns {
                for t in 0..sh.nt {
                    let k = s * sh.nt + t;
                    let v = p.variable(k, &identity)?.expect("identity moment");
                    p.equalities.push(Equality {
                        expr: LinExpr { terms: vec![(v, 1.0)], constant: 0.0 },
                        rhs: w[k],
                        origin: Origin::Weight { s, t },
                    });
                }
            }
        }
        Weights::Free => {
            let mut ex = LinExpr::default();
            for k in 0..pairs {
                ex.add(p.variable(k, &identity)?.expect("identity moment"), 1.0);
            }
            p.equalities.push(Equality { expr: ex, rhs: 1.0, origin: Origin::Normalization });
        }
    }

    for &e in &spec.zeros {
        let expr = p.event_expr(e)?;
        p.equalities.push(Equality { expr, rhs: 0.0, origin: Origin::Zero(e) });
    }
    for (i, (pe, rhs)) in spec.values.iter().enumerate() {
        let expr = p.prob_expr(pe)?;
        p.equalities.push(Equality { expr, rhs: *rhs, origin: Origin::Value(i) });
    }

    facial_reduction(&mut p, &spec.zeros)?;

    if let Some((l, u)) = spec.residual_bounds {
        for x in 0..sh.nx {
            for y in 0..sh.ny {
                for a in 0..sh.na {
                    for b in 0..sh.nb {
                        let mut total = LinExpr::default();
                        for s in 0..sh.ns {
                            for t in 0..sh.nt {
                                total.add_expr(&p.event_expr(Event::new(s, t, a, b, x, y))?, 1.0);
                            }
                        }
                        for s in 0..sh.ns {
                            for t in 0..sh.nt {
                                let pe = p.event_expr(Event::new(s, t, a, b, x, y))?;
                                let mut lower = pe.clone();
                                lower.add_expr(&total, -l);
                                let mut upper = total.clone();
                                upper.constant *= u;
                                upper.terms.iter_mut().for_each(|(_, c)| *c *= u);
                                upper.add_expr(&pe, -1.0);
                                p.inequalities.push(lower.compact());
                                p.inequalities.push(upper.compact());
                            }
                        }
                    }
                }
            }
        }
    }

    p.objective = p.prob_expr(&spec.objective)?;
    Ok(p)
}

/// For each zero event whose operator lies in the span of the basis, `Γ v = 0` holds on
/// every PSD solution; the rows are added as equalities and the block is restricted to
/// the orthogonal complement of the kernel vectors.
fn facial_reduction(p: &mut MomentProblem, zeros: &[Event]) -> Result<()> {
    let n = p.basis.len();
    let sh = p.shape;
    for k in 0..p.blocks.len() {
        let (s, t) = (p.blocks[k].s, p.blocks[k].t);
        let mut kernel: Vec<Vec<f64>> = Vec::new();
        for &e in zeros.iter().filter(|e| e.s * sh.nt + e.t == k) {
            let mut v = vec![0.0; n];
            let mut inside = true;
            for (m, c) in p.event_operator(e) {
                if m.is_zero() {
                    continue;
                }
                match p.basis.iter().position(|b| *b == m) {
                    Some(i) => v[i] += c,
                    None => inside = false,
                }
            }
            if inside && v.iter().any(|&x| x != 0.0) {
                kernel.push(v);
            }
        }
        if kernel.is_empty() {
            continue;
        }
        for v in &kernel {
            for u in 0..n {
                let mut ex = LinExpr::default();
                for (w, &vw) in v.iter().enumerate() {
                    if vw != 0.0 {
                        if let Some(var) = p.blocks[k].entries[u][w] {
                            ex.add(var, vw);
                        }
                    }
                }
                let ex = ex.compact();
                if !ex.terms.is_empty() {
                    p.equalities.push(Equality { expr: ex, rhs: 0.0, origin: Origin::Kernel { s, t, u } });
                }
            }
        }
        let vv = RealMatrix::from_fn(n, n, |i, j| kernel.iter().map(|v| v[i] * v[j]).sum());
        let eig = sym_eigen(&vv);
        let top = eig.values.iter().fold(0.0f64, |m, &x| m.max(x));
        let keep: Vec<usize> = (0..n).filter(|&i| eig.values[i] <= 1e-9 * top).collect();
        p.blocks[k].face = RealMatrix::from_fn(n, keep.len(), |i, j| eig.vectors[(i, keep[j])]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chsh_spec(level: usize) -> ProblemSpec {
        let shape = ScenarioShape::single_source(2, 2, 2, 2);
        ProblemSpec {
            shape,
            level,
            weights: Weights::Fixed(vec![1.0]),
            zeros: vec![],
            values: vec![],
            objective: ProbExpr::chsh(&shape),
            residual_bounds: None,
        }
    }

    #[test]
    fn identity_entry_is_normalization_variable() {
        let p = build_moment_problem(&chsh_spec(1)).unwrap();
        let v = p.blocks[0].entries[0][0].unwrap();
        assert_eq!(p.moments[v], Monomial::identity());
        assert_eq!(p.equalities.len(), 1);
        assert_eq!(p.equalities[0].expr.terms, vec![(v, 1.0)]);
    }

    #[test]
    fn moment_matrix_is_symmetric_pattern() {
        let p = build_moment_problem(&chsh_spec(2)).unwrap();
        let b = &p.blocks[0];
        for i in 0..b.size() {
            for j in 0..b.size() {
                assert_eq!(b.entries[i][j], b.entries[j][i]);
            }
        }
        // diagonal of a projector word equals the word itself
        for (i, m) in p.basis.iter().enumerate().skip(1) {
            assert_eq!(b.entries[i][i], p.variable(0, &m.adjoint().mul(m)).unwrap());
        }
    }

    #[test]
    fn last_outcome_expansion() {
        let p = build_moment_problem(&chsh_spec(1)).unwrap();
        // p(11|00) = 1 − A − B + AB
        let ex = p.event_expr(Event::new(0, 0, 1, 1, 0, 0)).unwrap();
        assert_eq!(ex.terms.len(), 4);
        let sum: f64 = [(0, 0, 0, 0), (0, 1, 0, 0), (1, 0, 0, 0), (1, 1, 0, 0)]
            .iter()
            .map(|&(a, b, x, y)| {
                let e = p.event_expr(Event::new(0, 0, a, b, x, y)).unwrap();
                e.terms.iter().map(|&(v, c)| if p.moments[v % p.n_local()].is_identity() { c } else { 0.0 }).sum::<f64>()
            })
            .sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn zeros_reduce_the_face_at_level_two() {
        let shape = ScenarioShape::single_source(2, 2, 2, 2);
        let zeros = vec![Event::new(0, 0, 0, 1, 0, 1), Event::new(0, 0, 1, 0, 1, 0), Event::new(0, 0, 0, 0, 1, 1)];
        let spec = ProblemSpec { zeros: zeros.clone(), objective: ProbExpr::hardy(0, 0, 0.0), ..chsh_spec(2) };
        let p = build_moment_problem(&spec).unwrap();
        assert_eq!(p.blocks[0].face.cols(), 13 - 3);
        let spec1 = ProblemSpec { level: 1, ..spec };
        let p1 = build_moment_problem(&spec1).unwrap();
        assert_eq!(p1.blocks[0].face.cols(), 5);
        let _ = shape;
    }

    #[test]
    fn residual_bounds_generate_two_rows_per_entry() {
        let shape = ScenarioShape::binary();
        let spec = ProblemSpec {
            shape,
            level: 1,
            weights: Weights::Free,
            zeros: vec![],
            values: vec![],
            objective: ProbExpr::chsh(&shape),
            residual_bounds: Some((0.2, 0.3)),
        };
        let p = build_moment_problem(&spec).unwrap();
        assert_eq!(p.blocks.len(), 4);
        assert_eq!(p.inequalities.len(), 2 * 4 * 16);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(build_moment_problem(&chsh_spec(0)), Err(NpaError::InvalidLevel(0))));
        assert!(matches!(build_moment_problem(&chsh_spec(4)), Err(NpaError::InvalidLevel(4))));
        let spec = ProblemSpec { residual_bounds: Some((0.3, 0.2)), ..chsh_spec(1) };
        assert!(matches!(build_moment_problem(&spec), Err(NpaError::InvalidBounds(..))));
        let spec = ProblemSpec { weights: Weights::Fixed(vec![0.5]), ..chsh_spec(1) };
        assert!(matches!(build_moment_problem(&spec), Err(NpaError::InvalidWeights(_))));
    }

    #[test]
    fn spec_serializes() {
        let s = chsh_spec(2);
        let js = serde_json::to_string(&s).unwrap();
        let back: ProblemSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
    }
}
