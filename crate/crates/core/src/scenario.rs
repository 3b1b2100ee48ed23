//! Bell scenarios whose settings come from untrusted sources.
//!
//! A device is described by a classical-quantum state `Σ_st |st⟩⟨st| ⊗ ρ_st` and local
//! projective measurements; its full behavior is `p(stab|xy) = tr(ρ_st A_{a|x} ⊗ B_{b|y})`,
//! of which a protocol observes only the entries with settings wired to the source outputs.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{self, eig_hermitian, kron, random, LinalgError, VALIDATION_TOL};
use crate::{CMatrix, ProjectiveMeasurement};

/// Floor below which `p(ab|xy)` counts as an impossible event.
pub const IMPOSSIBLE_EVENT_FLOOR: f64 = 1e-12;
/// Entries may dip below zero by this much from rounding.
pub const NEGATIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state for source pair ({s},{t}) is invalid: {reason}")]
    InvalidState { s: usize, t: usize, reason: String },
    #[error("source weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("sources are not wired to settings (nS={ns}, nX={nx}, nT={nt}, nY={ny})")]
    NotWired { ns: usize, nx: usize, nt: usize, ny: usize },
    #[error("angle {0} outside (0, π/2)")]
    AngleOutOfRange(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

/// Cardinalities of the source outputs `S, T`, settings `X, Y` and outcomes `A, B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioShape {
    #[serde(rename = "nS")]
    pub ns: usize,
    #[serde(rename = "nT")]
    pub nt: usize,
    #[serde(rename = "nX")]
    pub nx: usize,
    #[serde(rename = "nY")]
    pub ny: usize,
    #[serde(rename = "nA")]
    pub na: usize,
    #[serde(rename = "nB")]
    pub nb: usize,
}

impl ScenarioShape {
    pub fn new(ns: usize, nt: usize, nx: usize, ny: usize, na: usize, nb: usize) -> Result<Self> {
        let s = Self { ns, nt, nx, ny, na, nb };
        s.validate()?;
        Ok(s)
    }

    /// Sources wired to settings: `nS = nX`, `nT = nY`.
    pub fn wired(nx: usize, ny: usize, na: usize, nb: usize) -> Self {
        Self { ns: nx, nt: ny, nx, ny, na, nb }
    }

    /// One trivial source pair, all setting pairs observable.
    pub fn single_source(nx: usize, ny: usize, na: usize, nb: usize) -> Self {
        Self { ns: 1, nt: 1, nx, ny, na, nb }
    }

    /// Two binary settings and outcomes per party with wired binary sources.
    pub fn binary() -> Self {
        Self::wired(2, 2, 2, 2)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.ns, self.nt, self.nx, self.ny, self.na, self.nb];
        if all.contains(&0) {
            return Err(ScenarioError::InvalidShape(format!("zero cardinality in {self:?}")));
        }
        Ok(())
    }

    pub fn is_wired(&self) -> bool {
        self.ns == self.nx && self.nt == self.ny
    }

    pub fn is_single_source(&self) -> bool {
        self.ns == 1 && self.nt == 1
    }

    pub fn is_binary(&self) -> bool {
        *self == Self::binary()
    }

    pub fn source_pairs(&self) -> usize {
        self.ns * self.nt
    }

    pub fn tensor_len(&self) -> usize {
        self.ns * self.nt * self.na * self.nb * self.nx * self.ny
    }

    /// Row-major offset of `(s, t, a, b, x, y)`.
    #[inline]
    pub fn index(&self, e: Event) -> usize {
        ((((e.s * self.nt + e.t) * self.na + e.a) * self.nb + e.b) * self.nx + e.x) * self.ny + e.y
    }

    pub fn events(&self) -> impl Iterator<Item = Event> + '_ {
        (0..self.tensor_len()).map(move |mut k| {
            let y = k % self.ny;
            k /= self.ny;
            let x = k % self.nx;
            k /= self.nx;
            let b = k % self.nb;
            k /= self.nb;
            let a = k % self.na;
            k /= self.na;
            let t = k % self.nt;
            let s = k / self.nt;
            Event { s, t, a, b, x, y }
        })
    }
}

/// Index `(s, t, a, b, x, y)` into a behavior tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Event {
    pub s: usize,
    pub t: usize,
    pub a: usize,
    pub b: usize,
    pub x: usize,
    pub y: usize,
}

impl Event {
    pub const fn new(s: usize, t: usize, a: usize, b: usize, x: usize, y: usize) -> Self {
        Self { s, t, a, b, x, y }
    }
}

/// `ρ = Σ_st |st⟩⟨st| ⊗ ρ_st` with `tr ρ_st = p(st)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalQuantumState {
    shape: ScenarioShape,
    dims: (usize, usize),
    states: Vec<CMatrix>,
    weights: Vec<f64>,
}

impl ClassicalQuantumState {
    /// `states` is indexed by `s·nT + t`; weights are read off the traces.
    pub fn new(shape: ScenarioShape, dims: (usize, usize), states: Vec<CMatrix>) -> Result<Self> {
        Self::with_tol(shape, dims, states, VALIDATION_TOL)
    }

    pub fn with_tol(
        shape: ScenarioShape,
        dims: (usize, usize),
        states: Vec<CMatrix>,
        tol: f64,
    ) -> Result<Self> {
        shape.validate()?;
        if states.len() != shape.source_pairs() {
            return Err(ScenarioError::DimensionMismatch(format!(
                "{} states for {} source pairs",
                states.len(),
                shape.source_pairs()
            )));
        }
        let n = dims.0 * dims.1;
        let mut weights = Vec::with_capacity(states.len());
        for (k, rho) in states.iter().enumerate() {
            let (s, t) = (k / shape.nt, k % shape.nt);
            let bad = |reason: String| ScenarioError::InvalidState { s, t, reason };
            if rho.rows() != n || rho.cols() != n {
                return Err(bad(format!("{}x{} for local dims {:?}", rho.rows(), rho.cols(), dims)));
            }
            let dev = rho.hermitian_deviation();
            if dev > tol {
                return Err(bad(format!("not Hermitian (deviation {dev:e})")));
            }
            let min = eig_hermitian(&rho.hermitian_part())?.values[0];
            if min < -tol {
                return Err(bad(format!("not positive semidefinite (eigenvalue {min:e})")));
            }
            weights.push(rho.trace().re);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(ScenarioError::WeightsNotNormalized(total));
        }
        Ok(Self { shape, dims, states, weights })
    }

    /// `ρ_st = p(st)·ρ`: the device ignores the sources.
    pub fn source_independent(
        shape: ScenarioShape,
        rho: &CMatrix,
        dims: (usize, usize),
        weights: &[f64],
    ) -> Result<Self> {
        if weights.len() != shape.source_pairs() {
            return Err(ScenarioError::DimensionMismatch(format!(
                "{} weights for {} source pairs",
                weights.len(),
                shape.source_pairs()
            )));
        }
        let tr = rho.trace().re;
        let states = weights.iter().map(|&w| rho.scale(w / tr)).collect();
        Self::new(shape, dims, states)
    }

    pub fn shape(&self) -> ScenarioShape {
        self.shape
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn state(&self, s: usize, t: usize) -> &CMatrix {
        &self.states[s * self.shape.nt + t]
    }

    pub fn states(&self) -> &[CMatrix] {
        &self.states
    }

    pub fn weight(&self, s: usize, t: usize) -> f64 {
        self.weights[s * self.shape.nt + t]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A classical-quantum state together with local measurements.
///
/// Measurements may have fewer outcomes than the shape allows; the missing
/// outcomes have probability zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub cq: ClassicalQuantumState,
    pub alice: Vec<ProjectiveMeasurement>,
    pub bob: Vec<ProjectiveMeasurement>,
}

impl Realization {
    pub fn new(
        cq: ClassicalQuantumState,
        alice: Vec<ProjectiveMeasurement>,
        bob: Vec<ProjectiveMeasurement>,
    ) -> Result<Self> {
        let shape = cq.shape();
        let (da, db) = cq.dims();
        for (party, ms, n, outcomes, dim) in [
            ("alice", &alice, shape.nx, shape.na, da),
            ("bob", &bob, shape.ny, shape.nb, db),
        ] {
            if ms.len() != n {
                return Err(ScenarioError::DimensionMismatch(format!(
                    "{party} has {} measurements, shape expects {n}",
                    ms.len()
                )));
            }
            for (k, m) in ms.iter().enumerate() {
                if m.dim() != dim || m.outcomes() > outcomes {
                    return Err(ScenarioError::DimensionMismatch(format!(
                        "{party} measurement {k}: dim {} with {} outcomes, expected dim {dim} with at most {outcomes}",
                        m.dim(),
                        m.outcomes()
                    )));
                }
            }
        }
        Ok(Self { cq, alice, bob })
    }

    pub fn shape(&self) -> ScenarioShape {
        self.cq.shape()
    }

    /// Copies a single-source device to every source pair of `shape` with the given weights.
    pub fn lift_source_independent(&self, shape: ScenarioShape, weights: &[f64]) -> Result<Self> {
        if !self.shape().is_single_source() {
            return Err(ScenarioError::InvalidShape("lift expects a single-source device".into()));
        }
        let inner = self.shape();
        if (shape.nx, shape.ny, shape.na, shape.nb) != (inner.nx, inner.ny, inner.na, inner.nb) {
            return Err(ScenarioError::DimensionMismatch(format!(
                "cannot lift {inner:?} to {shape:?}"
            )));
        }
        let cq = ClassicalQuantumState::source_independent(
            shape,
            self.cq.state(0, 0),
            self.cq.dims(),
            weights,
        )?;
        Self::new(cq, self.alice.clone(), self.bob.clone())
    }
}

/// Full tensor `p(stab|xy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Behavior {
    shape: ScenarioShape,
    tensor: Vec<f64>,
}

impl Behavior {
    pub fn from_tensor(shape: ScenarioShape, tensor: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if tensor.len() != shape.tensor_len() {
            return Err(ScenarioError::DimensionMismatch(format!(
                "tensor has {} entries, shape needs {}",
                tensor.len(),
                shape.tensor_len()
            )));
        }
        Ok(Self { shape, tensor })
    }

    pub fn zeros(shape: ScenarioShape) -> Self {
        Self { shape, tensor: vec![0.0; shape.tensor_len()] }
    }

    pub fn shape(&self) -> ScenarioShape {
        self.shape
    }

    pub fn tensor(&self) -> &[f64] {
        &self.tensor
    }

    pub fn get(&self, e: Event) -> f64 {
        self.tensor[self.shape.index(e)]
    }

    pub fn set(&mut self, e: Event, v: f64) {
        let i = self.shape.index(e);
        self.tensor[i] = v;
    }

    /// `p(ab|xy) = Σ_st p(stab|xy)`.
    pub fn marginal_ab(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        let sh = self.shape;
        let mut total = 0.0;
        for s in 0..sh.ns {
            for t in 0..sh.nt {
                total += self.get(Event::new(s, t, a, b, x, y));
            }
        }
        total
    }

    /// `Σ_ab p(stab|xy)`.
    pub fn source_weight(&self, s: usize, t: usize, x: usize, y: usize) -> f64 {
        let sh = self.shape;
        let mut total = 0.0;
        for a in 0..sh.na {
            for b in 0..sh.nb {
                total += self.get(Event::new(s, t, a, b, x, y));
            }
        }
        total
    }

    /// Checks nonnegativity, setting-independence of `Σ_ab` and overall normalization.
    pub fn check(&self, tol: f64) -> std::result::Result<(), String> {
        let sh = self.shape;
        if let Some((k, v)) = self
            .tensor
            .iter()
            .enumerate()
            .find(|(_, &v)| v < -NEGATIVITY_TOL || !v.is_finite())
        {
            return Err(format!("entry {k} is {v:e}"));
        }
        for s in 0..sh.ns {
            for t in 0..sh.nt {
                let w0 = self.source_weight(s, t, 0, 0);
                for x in 0..sh.nx {
                    for y in 0..sh.ny {
                        let w = self.source_weight(s, t, x, y);
                        if (w - w0).abs() > tol {
                            return Err(format!(
                                "Σ_ab p({s}{t}ab|{x}{y}) = {w} differs from {w0} at settings 00"
                            ));
                        }
                    }
                }
            }
        }
        for x in 0..sh.nx {
            for y in 0..sh.ny {
                let total: f64 = (0..sh.ns)
                    .flat_map(|s| (0..sh.nt).map(move |t| (s, t)))
                    .map(|(s, t)| self.source_weight(s, t, x, y))
                    .sum();
                if (total - 1.0).abs() > tol {
                    return Err(format!("total probability at settings {x}{y} is {total}"));
                }
            }
        }
        Ok(())
    }
}

/// `p(stab|xy) = tr(ρ_st · A_{a|x} ⊗ B_{b|y})`.
pub fn behavior_of(r: &Realization) -> Behavior {
    let sh = r.shape();
    let mut out = Behavior::zeros(sh);
    for x in 0..sh.nx {
        for y in 0..sh.ny {
            let (ma, mb) = (&r.alice[x], &r.bob[y]);
            for a in 0..ma.outcomes() {
                for b in 0..mb.outcomes() {
                    let op = kron(ma.effect(a), mb.effect(b));
                    for s in 0..sh.ns {
                        for t in 0..sh.nt {
                            let v = r.cq.state(s, t).trace_product(&op).re;
                            out.set(Event::new(s, t, a, b, x, y), v);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Outcome table `p(stab|xy)` for one accessible `(s, t, x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedSlice {
    pub s: usize,
    pub t: usize,
    pub x: usize,
    pub y: usize,
    /// `table[a][b]`.
    pub table: Vec<Vec<f64>>,
}

/// The entries a protocol can see: `p(stab|st)` for wired sources, or every
/// setting pair of a single-source scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedBehavior {
    shape: ScenarioShape,
    slices: Vec<ObservedSlice>,
}

impl ObservedBehavior {
    pub fn new(shape: ScenarioShape, slices: Vec<ObservedSlice>) -> Result<Self> {
        shape.validate()?;
        for sl in &slices {
            if sl.s >= shape.ns || sl.t >= shape.nt || sl.x >= shape.nx || sl.y >= shape.ny {
                return Err(ScenarioError::DimensionMismatch(format!(
                    "slice ({},{},{},{}) out of range",
                    sl.s, sl.t, sl.x, sl.y
                )));
            }
            if sl.table.len() != shape.na || sl.table.iter().any(|r| r.len() != shape.nb) {
                return Err(ScenarioError::DimensionMismatch(format!(
                    "slice ({},{},{},{}) is not {}x{}",
                    sl.s, sl.t, sl.x, sl.y, shape.na, shape.nb
                )));
            }
        }
        Ok(Self { shape, slices })
    }

    /// Wired table `table[s][t][a][b] = p(stab|st)`.
    pub fn from_wired_table(shape: ScenarioShape, table: &[Vec<Vec<Vec<f64>>>]) -> Result<Self> {
        if !shape.is_wired() {
            return Err(not_wired(shape));
        }
        if table.len() != shape.ns || table.iter().any(|r| r.len() != shape.nt) {
            return Err(ScenarioError::DimensionMismatch("table is not nS x nT".into()));
        }
        let mut slices = Vec::new();
        for (s, row) in table.iter().enumerate() {
            for (t, ab) in row.iter().enumerate() {
                slices.push(ObservedSlice { s, t, x: s, y: t, table: ab.clone() });
            }
        }
        Self::new(shape, slices)
    }

    pub fn shape(&self) -> ScenarioShape {
        self.shape
    }

    pub fn slices(&self) -> &[ObservedSlice] {
        &self.slices
    }

    pub fn slices_mut(&mut self) -> &mut [ObservedSlice] {
        &mut self.slices
    }

    pub fn slice(&self, s: usize, t: usize, x: usize, y: usize) -> Option<&ObservedSlice> {
        self.slices
            .iter()
            .find(|sl| (sl.s, sl.t, sl.x, sl.y) == (s, t, x, y))
    }

    pub fn get(&self, e: Event) -> Option<f64> {
        self.slice(e.s, e.t, e.x, e.y).map(|sl| sl.table[e.a][e.b])
    }

    /// `p(st)` as read from the first slice of that source pair.
    pub fn weight(&self, s: usize, t: usize) -> Option<f64> {
        self.slices
            .iter()
            .find(|sl| sl.s == s && sl.t == t)
            .map(|sl| sl.table.iter().flatten().sum())
    }

    /// Nonnegativity, one weight per source pair, and total weight one.
    pub fn check(&self, tol: f64) -> std::result::Result<(), String> {
        for sl in &self.slices {
            if let Some(v) = sl.table.iter().flatten().find(|v| **v < -NEGATIVITY_TOL || !v.is_finite()) {
                return Err(format!("slice ({},{},{},{}) has entry {v:e}", sl.s, sl.t, sl.x, sl.y));
            }
            let w: f64 = sl.table.iter().flatten().sum();
            let w0 = self.weight(sl.s, sl.t).unwrap_or(w);
            if (w - w0).abs() > tol {
                return Err(format!(
                    "slice ({},{},{},{}) sums to {w}, other slices of source pair ({},{}) to {w0}",
                    sl.s, sl.t, sl.x, sl.y, sl.s, sl.t
                ));
            }
        }
        let mut total = 0.0;
        for s in 0..self.shape.ns {
            for t in 0..self.shape.nt {
                total += self.weight(s, t).unwrap_or(0.0);
            }
        }
        if (total - 1.0).abs() > tol {
            return Err(format!("source weights sum to {total}"));
        }
        Ok(())
    }
}

fn not_wired(sh: ScenarioShape) -> ScenarioError {
    ScenarioError::NotWired { ns: sh.ns, nx: sh.nx, nt: sh.nt, ny: sh.ny }
}

/// Extracts the accessible entries of a behavior.
pub fn observed(b: &Behavior) -> Result<ObservedBehavior> {
    let sh = b.shape();
    let pairs: Vec<(usize, usize, usize, usize)> = if sh.is_wired() {
        (0..sh.ns)
            .flat_map(|s| (0..sh.nt).map(move |t| (s, t, s, t)))
            .collect()
    } else if sh.is_single_source() {
        (0..sh.nx)
            .flat_map(|x| (0..sh.ny).map(move |y| (0, 0, x, y)))
            .collect()
    } else {
        return Err(not_wired(sh));
    };
    let slices = pairs
        .into_iter()
        .map(|(s, t, x, y)| ObservedSlice {
            s,
            t,
            x,
            y,
            table: (0..sh.na)
                .map(|a| (0..sh.nb).map(|bb| b.get(Event::new(s, t, a, bb, x, y))).collect())
                .collect(),
        })
        .collect();
    ObservedBehavior::new(sh, slices)
}

/// `(l, u)`: extreme values of `p(st|abxy)` over events with `p(ab|xy) > eps`.
pub fn residual_bounds(b: &Behavior, eps: f64) -> (f64, f64) {
    let sh = b.shape();
    let (mut l, mut u) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in 0..sh.nx {
        for y in 0..sh.ny {
            for a in 0..sh.na {
                for bb in 0..sh.nb {
                    let m = b.marginal_ab(a, bb, x, y);
                    if m <= eps {
                        continue;
                    }
                    for s in 0..sh.ns {
                        for t in 0..sh.nt {
                            let r = b.get(Event::new(s, t, a, bb, x, y)) / m;
                            l = l.min(r);
                            u = u.max(r);
                        }
                    }
                }
            }
        }
    }
    if l.is_finite() {
        (l.clamp(0.0, 1.0), u.clamp(0.0, 1.0))
    } else {
        (1.0, 1.0)
    }
}

/// Events with `p(stab|xy) ≤ tol`.
pub fn zero_pattern(b: &Behavior, tol: f64) -> Vec<Event> {
    b.shape().events().filter(|&e| b.get(e) <= tol).collect()
}

/// Outcome of the zero-pattern independence check.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroIndependenceCheck {
    pub holds: bool,
    /// First `(a, b, x, y)` whose zero pattern depends on the source pair.
    pub witness: Option<(usize, usize, usize, usize)>,
    /// Residual lower bound used for the strict threshold.
    pub lower_bound: f64,
}

/// Zero-pattern independence using the behavior's own residual lower bound.
pub fn zero_independence_check(b: &Behavior, tol: f64) -> ZeroIndependenceCheck {
    let (l, _) = residual_bounds(b, IMPOSSIBLE_EVENT_FLOOR);
    zero_independence_check_with_bound(b, tol, l)
}

/// Fails at `(a, b, x, y)` when some source pair has `p ≤ tol·l` while another has `p > tol`.
pub fn zero_independence_check_with_bound(b: &Behavior, tol: f64, l: f64) -> ZeroIndependenceCheck {
    let sh = b.shape();
    let strict = tol * l;
    for x in 0..sh.nx {
        for y in 0..sh.ny {
            for a in 0..sh.na {
                for bb in 0..sh.nb {
                    let vals: Vec<f64> = (0..sh.ns)
                        .flat_map(|s| (0..sh.nt).map(move |t| (s, t)))
                        .map(|(s, t)| b.get(Event::new(s, t, a, bb, x, y)))
                        .collect();
                    let some_zero = vals.iter().any(|&v| v <= strict);
                    let some_nonzero = vals.iter().any(|&v| v > tol);
                    if some_zero && some_nonzero {
                        return ZeroIndependenceCheck {
                            holds: false,
                            witness: Some((a, bb, x, y)),
                            lower_bound: l,
                        };
                    }
                }
            }
        }
    }
    ZeroIndependenceCheck { holds: true, witness: None, lower_bound: l }
}

/// Weighted CHSH combination of the four observed correlators.
pub fn chsh_value(b: &Behavior) -> Result<f64> {
    let sh = b.shape();
    if !sh.is_binary() {
        return Err(ScenarioError::InvalidShape(format!("CHSH needs the binary shape, got {sh:?}")));
    }
    let mut total = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let sign_xy = if x * y == 1 { -1.0 } else { 1.0 };
            for a in 0..2 {
                for bb in 0..2 {
                    let sign_ab = if (a + bb) % 2 == 0 { 1.0 } else { -1.0 };
                    total += sign_xy * sign_ab * b.get(Event::new(x, y, a, bb, x, y));
                }
            }
        }
    }
    Ok(total)
}

/// Device reaching the normalized CHSH value `1/√2` with `ρ_00 = ρ_01 ≠ ρ_10 = ρ_11`.
///
/// `ρ_0t ∝ |χ_α⟩ = cos α|++⟩ + sin α|−−⟩` lies in the `X⊗X = +1` eigenspace and
/// `ρ_1t ∝ |ζ_β⟩ = cos β|00⟩ + sin β|11⟩` in the `Z⊗Z = +1` eigenspace.
pub fn chsh_counterexample(alpha: f64, beta: f64) -> Result<Realization> {
    for ang in [alpha, beta] {
        if !(ang > 0.0 && ang < FRAC_PI_2) {
            return Err(ScenarioError::AngleOutOfRange(ang));
        }
    }
    let h = FRAC_1_SQRT_2;
    let plus = [h, h];
    let minus = [h, -h];
    let ket = |u: [f64; 2], v: [f64; 2]| -> Vec<f64> {
        vec![u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]]
    };
    let combine = |c: f64, p: Vec<f64>, s: f64, q: Vec<f64>| -> Vec<Complex64> {
        p.iter().zip(&q).map(|(&a, &b)| Complex64::new(c * a + s * b, 0.0)).collect()
    };
    let chi = combine(alpha.cos(), ket(plus, plus), alpha.sin(), ket(minus, minus));
    let zeta = combine(beta.cos(), ket([1.0, 0.0], [1.0, 0.0]), beta.sin(), ket([0.0, 1.0], [0.0, 1.0]));
    let rho_chi = CMatrix::outer(&chi, &chi).scale(0.25);
    let rho_zeta = CMatrix::outer(&zeta, &zeta).scale(0.25);
    let shape = ScenarioShape::binary();
    let cq = ClassicalQuantumState::new(
        shape,
        (2, 2),
        vec![rho_chi.clone(), rho_chi, rho_zeta.clone(), rho_zeta],
    )?;

    let (x, _, z) = qmath::pauli::<f64>();
    let b0 = (&x + &z).scale(h);
    let b1 = (&x - &z).scale(h);
    let alice = vec![dichotomic_from_observable(&x)?, dichotomic_from_observable(&z)?];
    let bob = vec![dichotomic_from_observable(&b0)?, dichotomic_from_observable(&b1)?];
    Realization::new(cq, alice, bob)
}

/// `(±1-eigenprojectors)` of a `±1`-valued observable, outcome 0 ↔ eigenvalue +1.
pub fn dichotomic_from_observable(o: &CMatrix) -> Result<ProjectiveMeasurement> {
    let id = CMatrix::identity(o.rows());
    let p0 = (&id + o).scale(0.5);
    let p1 = (&id - o).scale(0.5);
    Ok(ProjectiveMeasurement::new(vec![p0, p1])?)
}

/// Projective measurement grouping the columns of a random unitary into `outcomes`
/// nonempty blocks (requires `outcomes ≤ dim`).
pub fn random_measurement<R: Rng + ?Sized>(dim: usize, outcomes: usize, rng: &mut R) -> ProjectiveMeasurement {
    let u = random::random_unitary::<f64, _>(dim, rng);
    let mut label: Vec<usize> = (0..dim).map(|k| k.min(outcomes - 1)).collect();
    for k in outcomes..dim {
        label[k] = rng.random_range(0..outcomes);
    }
    let mut effects = vec![CMatrix::zeros(dim, dim); outcomes];
    for (k, &a) in label.iter().enumerate() {
        let v = u.column(k);
        effects[a] = &effects[a] + &CMatrix::outer(&v, &v);
    }
    let effects = effects.into_iter().map(|e| e.hermitian_part()).collect();
    ProjectiveMeasurement::new(effects).expect("columns of a unitary form a measurement")
}

/// Random device with full-rank `ρ_st` and random weights bounded away from zero.
pub fn random_realization<R: Rng + ?Sized>(
    shape: ScenarioShape,
    dims: (usize, usize),
    rng: &mut R,
) -> Result<Realization> {
    let n = dims.0 * dims.1;
    let raw: Vec<f64> = (0..shape.source_pairs()).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let states = raw
        .iter()
        .map(|&w| random::random_density::<f64, _>(n, n, w / total, rng))
        .collect();
    let cq = ClassicalQuantumState::new(shape, dims, states)?;
    let alice = (0..shape.nx).map(|_| random_measurement(dims.0, shape.na.min(dims.0), rng)).collect();
    let bob = (0..shape.ny).map(|_| random_measurement(dims.1, shape.nb.min(dims.1), rng)).collect();
    Realization::new(cq, alice, bob)
}

/// Random device with `ρ_st = p(st)((1 − mix) σ + mix τ_st)` for a common full-rank `σ`,
/// weights within 20% of uniform. Small `mix` keeps every residual ratio near `1/(nS nT)`.
pub fn random_mixed_realization<R: Rng + ?Sized>(
    shape: ScenarioShape,
    dims: (usize, usize),
    mix: f64,
    rng: &mut R,
) -> Result<Realization> {
    let n = dims.0 * dims.1;
    let raw: Vec<f64> = (0..shape.source_pairs()).map(|_| rng.random_range(0.8..1.2)).collect();
    let total: f64 = raw.iter().sum();
    let sigma = random::random_density::<f64, _>(n, n, 1.0 - mix, rng);
    let states = raw
        .iter()
        .map(|&w| (&sigma + &random::random_density::<f64, _>(n, n, mix, rng)).scale(w / total).hermitian_part())
        .collect();
    let cq = ClassicalQuantumState::new(shape, dims, states)?;
    let alice = (0..shape.nx).map(|_| random_measurement(dims.0, shape.na.min(dims.0), rng)).collect();
    let bob = (0..shape.ny).map(|_| random_measurement(dims.1, shape.nb.min(dims.1), rng)).collect();
    Realization::new(cq, alice, bob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::trace_distance;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn phi_plus_computational() -> Realization {
        let h = FRAC_1_SQRT_2;
        let v: Vec<Complex64> = [h, 0.0, 0.0, h].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let shape = ScenarioShape::single_source(1, 1, 2, 2);
        let cq = ClassicalQuantumState::new(shape, (2, 2), vec![CMatrix::outer(&v, &v)]).unwrap();
        let m = ProjectiveMeasurement::computational(2);
        Realization::new(cq, vec![m.clone()], vec![m]).unwrap()
    }

    #[test]
    fn perfect_correlations() {
        let b = behavior_of(&phi_plus_computational());
        let p = |a, bb| b.get(Event::new(0, 0, a, bb, 0, 0));
        assert!((p(0, 0) - 0.5).abs() < 1e-15);
        assert!((p(1, 1) - 0.5).abs() < 1e-15);
        assert!(p(0, 1).abs() < 1e-15 && p(1, 0).abs() < 1e-15);
        assert!(b.check(1e-10).is_ok());
    }

    #[test]
    fn counterexample_entries_at_quarter_pi() {
        let r = chsh_counterexample(FRAC_PI_4, FRAC_PI_4).unwrap();
        let b = behavior_of(&r);
        let hi = (2.0 + 2f64.sqrt()) / 32.0;
        let lo = (2.0 - 2f64.sqrt()) / 32.0;
        for e in b.shape().events() {
            let v = b.get(e);
            assert!((v - hi).abs() < 1e-12 || (v - lo).abs() < 1e-12, "{e:?} = {v}");
        }
        let (l, u) = residual_bounds(&b, IMPOSSIBLE_EVENT_FLOOR);
        assert!((l - 0.25).abs() < 1e-12 && (u - 0.25).abs() < 1e-12);
        assert!((chsh_value(&b).unwrap() - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn counterexample_perturbed() {
        for da in [0.1, -0.1, 0.3, -0.3] {
            let r = chsh_counterexample(FRAC_PI_4 + da, FRAC_PI_4).unwrap();
            let b = behavior_of(&r);
            assert!((chsh_value(&b).unwrap() - FRAC_1_SQRT_2).abs() < 1e-9);
            let (l, u) = residual_bounds(&b, IMPOSSIBLE_EVENT_FLOOR);
            assert!(l < 0.25 && 0.25 < u, "({l}, {u})");
            let d = trace_distance(r.cq.state(0, 0), r.cq.state(1, 1)).unwrap();
            assert!(d > 1e-3);
        }
    }

    #[test]
    fn counterexample_rejects_bad_angles() {
        assert!(chsh_counterexample(0.0, 0.5).is_err());
        assert!(chsh_counterexample(0.5, FRAC_PI_2).is_err());
    }

    #[test]
    fn observed_counterexample_correlators() {
        let b = behavior_of(&chsh_counterexample(0.6, 0.9).unwrap());
        let o = observed(&b).unwrap();
        assert_eq!(o.slices().len(), 4);
        let mut total = 0.0;
        for sl in o.slices() {
            let corr = sl.table[0][0] + sl.table[1][1] - sl.table[0][1] - sl.table[1][0];
            total += if sl.x * sl.y == 1 { -corr } else { corr };
        }
        assert!((total - chsh_value(&b).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn observed_requires_wiring() {
        let sh = ScenarioShape::new(2, 2, 3, 2, 2, 2).unwrap();
        assert!(matches!(observed(&Behavior::zeros(sh)), Err(ScenarioError::NotWired { .. })));
        let o = observed(&Behavior::zeros(ScenarioShape::binary())).unwrap();
        assert!(o.slices().iter().all(|sl| sl.table.iter().flatten().all(|&v| v == 0.0)));
    }

    #[test]
    fn deterministic_classical_strategy() {
        let mut b = Behavior::zeros(ScenarioShape::binary());
        for x in 0..2 {
            for y in 0..2 {
                for s in 0..2 {
                    for t in 0..2 {
                        b.set(Event::new(s, t, 0, 0, x, y), 0.25);
                    }
                }
            }
        }
        assert!((chsh_value(&b).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_noise_has_zero_chsh() {
        let sh = ScenarioShape::binary();
        let b = Behavior::from_tensor(sh, vec![1.0 / 16.0; sh.tensor_len()]).unwrap();
        assert!(chsh_value(&b).unwrap().abs() < 1e-15);
    }

    #[test]
    fn hand_built_zero_dependence() {
        let sh = ScenarioShape::binary();
        let mut b = Behavior::from_tensor(sh, vec![0.05; sh.tensor_len()]).unwrap();
        b.set(Event::new(0, 0, 0, 0, 0, 0), 0.0);
        b.set(Event::new(1, 1, 0, 0, 0, 0), 0.1);
        let c = zero_independence_check_with_bound(&b, 1e-10, 0.2);
        assert!(!c.holds);
        assert_eq!(c.witness, Some((0, 0, 0, 0)));
    }

    #[test]
    fn counterexample_has_no_zeros() {
        let b = behavior_of(&chsh_counterexample(0.7, 0.8).unwrap());
        assert!(zero_pattern(&b, 1e-10).is_empty());
        assert!(zero_independence_check(&b, 1e-10).holds);
    }

    #[test]
    fn residual_bounds_empty_convention() {
        let b = Behavior::zeros(ScenarioShape::binary());
        assert_eq!(residual_bounds(&b, IMPOSSIBLE_EVENT_FLOOR), (1.0, 1.0));
    }

    #[test]
    fn lift_copies_device() {
        let r = phi_plus_computational();
        let shape = ScenarioShape::new(2, 2, 1, 1, 2, 2).unwrap();
        let lifted = r.lift_source_independent(shape, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = behavior_of(&lifted);
        let (l, u) = residual_bounds(&b, IMPOSSIBLE_EVENT_FLOOR);
        assert!((l - 0.1).abs() < 1e-12 && (u - 0.4).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn behavior_invariants(seed in 0u64..100_000, da in 2usize..4, db in 2usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_realization(ScenarioShape::binary(), (da, db), &mut rng).unwrap();
            let b = behavior_of(&r);
            prop_assert!(b.check(1e-10).is_ok());
            for e in b.shape().events() {
                prop_assert!(b.get(e) <= b.marginal_ab(e.a, e.b, e.x, e.y) + 1e-12);
            }
            let (l, u) = residual_bounds(&b, IMPOSSIBLE_EVENT_FLOOR);
            prop_assert!(0.0 <= l && l <= u && u <= 1.0);
            prop_assert!(zero_independence_check(&b, 1e-10).holds);
        }

        #[test]
        fn source_independent_bounds_are_weights(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_realization(ScenarioShape::binary(), (2, 2), &mut rng).unwrap();
            let w: Vec<f64> = {
                let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..1.0)).collect();
                let t: f64 = raw.iter().sum();
                raw.iter().map(|x| x / t).collect()
            };
            let cq = ClassicalQuantumState::source_independent(
                ScenarioShape::binary(), r.cq.state(0, 0), (2, 2), &w).unwrap();
            let r2 = Realization::new(cq, r.alice.clone(), r.bob.clone()).unwrap();
            let (l, u) = residual_bounds(&behavior_of(&r2), IMPOSSIBLE_EVENT_FLOOR);
            let wmin = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let wmax = w.iter().cloned().fold(0.0, f64::max);
            prop_assert!((l - wmin).abs() < 1e-12 && (u - wmax).abs() < 1e-12);
        }

        #[test]
        fn uniform_source_independent_chsh_obeys_tsirelson(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_realization(ScenarioShape::binary(), (2, 2), &mut rng).unwrap();
            let cq = ClassicalQuantumState::source_independent(
                ScenarioShape::binary(), r.cq.state(0, 0), (2, 2), &[0.25; 4]).unwrap();
            let r2 = Realization::new(cq, r.alice.clone(), r.bob.clone()).unwrap();
            prop_assert!(chsh_value(&behavior_of(&r2)).unwrap() <= FRAC_1_SQRT_2 + 1e-9);
        }
    }
}
