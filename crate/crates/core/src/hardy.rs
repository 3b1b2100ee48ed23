//! Tilted Hardy tests: three forbidden events plus the weighted success
//! probability `p(00|00) + w·p(11|00)`, whose quantum maximum `q(w)` under the
//! zeros is reached only by `cos θ_w|00⟩ + sin θ_w|11⟩`.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{
    ClassicalQuantumState, ObservedBehavior, Realization, ScenarioError, ScenarioShape,
};
use crate::{CMatrix, ProjectiveMeasurement, PureState};

pub const W_MIN: f64 = -0.25;
pub const W_MAX: f64 = 1.0;
/// Restarts of the canonical-realization optimizer.
pub const RESTARTS: usize = 50;
/// Seed of the canonical-realization optimizer.
pub const OPTIMIZER_SEED: u64 = 0x4a72_6479;
/// Required agreement between the optimizer and the closed form.
pub const VALUE_TOL: f64 = 1e-7;

/// The forbidden events `(a, b, x, y)`.
pub const ZEROS: [(usize, usize, usize, usize); 3] = [(0, 1, 0, 1), (1, 0, 1, 0), (0, 0, 1, 1)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HardyError {
    #[error("w = {0} outside [-1/4, 1]")]
    WOutOfRange(f64),
    #[error("θ = {0} outside [0, π/4]")]
    ThetaOutOfRange(f64),
    #[error("optimizer reached {achieved} but q(w) = {target}")]
    OptimizerFailed { achieved: f64, target: f64 },
    #[error("observed behavior has unsupported shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

pub type Result<T> = std::result::Result<T, HardyError>;

fn check_w(w: f64) -> Result<()> {
    if (W_MIN..=W_MAX).contains(&w) {
        Ok(())
    } else {
        Err(HardyError::WOutOfRange(w))
    }
}

fn check_open_w(w: f64) -> Result<()> {
    if w > W_MIN && w < W_MAX {
        Ok(())
    } else {
        Err(HardyError::WOutOfRange(w))
    }
}

/// `q(w) = [(4w+5)^{3/2} − (12w+11)] / (2w+2)`.
pub fn q_of_w(w: f64) -> Result<f64> {
    check_w(w)?;
    Ok(((4.0 * w + 5.0).powf(1.5) - (12.0 * w + 11.0)) / (2.0 * w + 2.0))
}

/// `θ_w = ½ asin(3 − √(4w+5))`.
pub fn theta_of_w(w: f64) -> Result<f64> {
    check_w(w)?;
    let s = (3.0 - (4.0 * w + 5.0).sqrt()).clamp(0.0, 1.0);
    Ok(0.5 * s.asin())
}

/// `w = ((3 − sin 2θ)² − 5) / 4`.
pub fn w_of_theta(theta: f64) -> Result<f64> {
    if !(0.0..=FRAC_PI_4).contains(&theta) {
        return Err(HardyError::ThetaOutOfRange(theta));
    }
    let s = (2.0 * theta).sin();
    Ok(((3.0 - s) * (3.0 - s) - 5.0) / 4.0)
}

/// `cos θ_w|00⟩ + sin θ_w|11⟩`.
pub fn target_state(w: f64) -> Result<PureState> {
    let th = theta_of_w(w)?;
    Ok(PureState::diagonal(&[th.cos(), th.sin()]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedHardyTest {
    pub w: f64,
    pub theta: f64,
    #[serde(rename = "qValue")]
    pub q_value: f64,
}

impl TiltedHardyTest {
    pub fn new(w: f64) -> Result<Self> {
        Ok(Self { w, theta: theta_of_w(w)?, q_value: q_of_w(w)? })
    }

    pub fn zeros(&self) -> [(usize, usize, usize, usize); 3] {
        ZEROS
    }

    /// Coefficients of the violation expression on setting pair `00`: `((a, b), coeff)`.
    pub fn expression(&self) -> [((usize, usize), f64); 2] {
        [((0, 0), 1.0), ((1, 1), self.w)]
    }

    /// `p(00|00) + w·p(11|00)` of an outcome table.
    pub fn violation(&self, table: &[Vec<f64>]) -> f64 {
        table[0][0] + self.w * table[1][1]
    }
}

fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n > 0.0 {
        [v[0] / n, v[1] / n]
    } else {
        [1.0, 0.0]
    }
}

/// Outcome-0 vectors `(a0, a1, b0, b1)` satisfying the three zeros on `cos θ|00⟩ + sin θ|11⟩`.
///
/// With `M = diag(cos θ, sin θ)` the amplitude of `|u⟩|v⟩` is `uᵀ M v`, so each zero
/// fixes one vector as orthogonal to an image under `M`. The free angle `psi` is the
/// direction of `M a1`; for `θ` near zero this keeps the optimum from collapsing onto
/// a single direction of `a1`.
fn hardy_vectors(theta: f64, psi: f64) -> [[f64; 2]; 4] {
    let (c, s) = (theta.cos(), theta.sin());
    let m = |v: [f64; 2]| [c * v[0], s * v[1]];
    let a1 = unit([s * psi.cos(), c * psi.sin()]);
    let b1 = unit(perp(m(a1)));
    let a0 = unit(perp(m(m(a1))));
    let b0 = unit(perp(m(perp(a1))));
    [a0, a1, b0, b1]
}

fn hardy_value(w: f64, theta: f64, psi: f64) -> f64 {
    let [a0, _, b0, _] = hardy_vectors(theta, psi);
    let (c, s) = (theta.cos(), theta.sin());
    let amp = |u: [f64; 2], v: [f64; 2]| u[0] * c * v[0] + u[1] * s * v[1];
    let p00 = amp(a0, b0).powi(2);
    let p11 = amp(perp(a0), perp(b0)).powi(2);
    p00 + w * p11
}

/// Optimizer outcome of [`canonical_realization`].
#[derive(Clone, Debug)]
pub struct CanonicalHardy {
    pub realization: Realization,
    pub theta: f64,
    pub psi: f64,
    pub value: f64,
    pub test: TiltedHardyTest,
}

fn clamp_theta(x: [f64; 2]) -> [f64; 2] {
    [x[0].clamp(0.0, FRAC_PI_4), x[1]]
}

fn gradient(f: &impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (i, gi) in g.iter_mut().enumerate() {
        let (mut xp, mut xm) = (x, x);
        xp[i] += h;
        xm[i] -= h;
        *gi = (f(xp) - f(xm)) / (2.0 * h);
    }
    g
}

fn hessian(f: &impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> [[f64; 2]; 2] {
    let mut hm = [[0.0; 2]; 2];
    let f0 = f(x);
    for i in 0..2 {
        for j in 0..2 {
            if i == j {
                let (mut xp, mut xm) = (x, x);
                xp[i] += h;
                xm[i] -= h;
                hm[i][i] = (f(xp) - 2.0 * f0 + f(xm)) / (h * h);
            } else {
                let mut v = 0.0;
                for (si, sj, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    let mut xx = x;
                    xx[i] += si * h;
                    xx[j] += sj * h;
                    v += sign * f(xx);
                }
                hm[i][j] = v / (4.0 * h * h);
            }
        }
    }
    hm
}

/// Projected gradient ascent followed by a Newton polish.
fn ascend(f: &impl Fn([f64; 2]) -> f64, start: [f64; 2]) -> ([f64; 2], f64) {
    let mut x = clamp_theta(start);
    let mut fx = f(x);
    let mut step = 0.1;
    for _ in 0..3000 {
        let g = gradient(f, x, 1e-7);
        let xn = clamp_theta([x[0] + step * g[0], x[1] + step * g[1]]);
        let fn_ = f(xn);
        if fn_ > fx {
            x = xn;
            fx = fn_;
            step = (step * 1.5).min(10.0);
        } else {
            step *= 0.5;
            if step < 1e-15 {
                break;
            }
        }
    }
    for _ in 0..30 {
        let g = gradient(f, x, 1e-6);
        let h = hessian(f, x, 1e-4);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if !(h[0][0] < 0.0 && det > 0.0) {
            break;
        }
        let d = [
            -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
            -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
        ];
        let xn = clamp_theta([x[0] + d[0], x[1] + d[1]]);
        let fn_ = f(xn);
        if fn_ >= fx {
            let moved = (xn[0] - x[0]).abs() + (xn[1] - x[1]).abs();
            x = xn;
            fx = fn_;
            if moved < 1e-14 {
                break;
            }
        } else {
            break;
        }
    }
    (x, fx)
}

/// Local ascent of the tilted value over `(θ, ψ)` from a starting point; every point of
/// the family satisfies the zeros exactly.
pub fn polish_angles(w: f64, theta: f64, psi: f64) -> (f64, f64, f64) {
    let f = |x: [f64; 2]| hardy_value(w, x[0], x[1]);
    let (x, fx) = ascend(&f, [theta, psi]);
    (x[0], x[1], fx)
}

/// Two-qubit device satisfying the Hardy zeros exactly and maximizing the tilted expression.
pub fn canonical_realization(w: f64) -> Result<CanonicalHardy> {
    check_open_w(w)?;
    let test = TiltedHardyTest::new(w)?;
    let f = |x: [f64; 2]| hardy_value(w, x[0], x[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(OPTIMIZER_SEED);
    let mut best: Option<([f64; 2], f64)> = None;
    for _ in 0..RESTARTS {
        let start = [rng.random_range(0.0..FRAC_PI_4), rng.random_range(0.0..std::f64::consts::PI)];
        let (x, fx) = ascend(&f, start);
        if best.is_none_or(|(_, b)| fx > b) {
            best = Some((x, fx));
        }
    }
    let (x, value) = best.expect("at least one restart");
    if value < test.q_value - VALUE_TOL {
        return Err(HardyError::OptimizerFailed { achieved: value, target: test.q_value });
    }
    let realization = realization_from_angles(x[0], x[1])?;
    Ok(CanonicalHardy { realization, theta: x[0], psi: x[1], value, test })
}

fn rank_one_dichotomic(v: [f64; 2]) -> Result<ProjectiveMeasurement> {
    let c: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok(ProjectiveMeasurement::dichotomic(CMatrix::outer(&c, &c).hermitian_part())
        .map_err(ScenarioError::from)?)
}

/// Canonical device for an exactly prescribed state angle `θ ∈ (0, π/4)`.
///
/// Starts from [`canonical_realization`] at `w = w_of_theta(θ)` and re-optimizes the
/// free angle with the state angle held fixed, so the zeros hold for this exact state.
pub fn canonical_for_theta(theta: f64) -> Result<CanonicalHardy> {
    let w = w_of_theta(theta)?;
    let base = canonical_realization(w)?;
    let f = |psi: f64| hardy_value(w, theta, psi);
    let mut psi = base.psi;
    let mut fx = f(psi);
    let h = 1e-5;
    for _ in 0..50 {
        let g = (f(psi + h) - f(psi - h)) / (2.0 * h);
        let c = (f(psi + h) - 2.0 * fx + f(psi - h)) / (h * h);
        let step = if c < 0.0 { -g / c } else { 1e-3 * g.signum() };
        let cand = psi + step;
        let fc = f(cand);
        if fc < fx {
            break;
        }
        let done = (cand - psi).abs() < 1e-15;
        psi = cand;
        fx = fc;
        if done {
            break;
        }
    }
    if fx < base.test.q_value - VALUE_TOL {
        return Err(HardyError::OptimizerFailed { achieved: fx, target: base.test.q_value });
    }
    Ok(CanonicalHardy {
        realization: realization_from_angles(theta, psi)?,
        theta,
        psi,
        value: fx,
        test: base.test,
    })
}

/// Single-source realization for the state angle `theta` and free angle `psi`.
pub fn realization_from_angles(theta: f64, psi: f64) -> Result<Realization> {
    let [a0, a1, b0, b1] = hardy_vectors(theta, psi);
    let psi = PureState::diagonal(&[theta.cos(), theta.sin()]);
    let shape = ScenarioShape::single_source(2, 2, 2, 2);
    let cq = ClassicalQuantumState::new(shape, (2, 2), vec![psi.density().hermitian_part()])?;
    let alice = vec![rank_one_dichotomic(a0)?, rank_one_dichotomic(a1)?];
    let bob = vec![rank_one_dichotomic(b0)?, rank_one_dichotomic(b1)?];
    Ok(Realization::new(cq, alice, bob)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroResidual {
    pub s: usize,
    pub t: usize,
    pub a: usize,
    pub b: usize,
    pub x: usize,
    pub y: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HardyReport {
    pub w: f64,
    pub q_value: f64,
    pub zero_residuals: Vec<ZeroResidual>,
    pub violation_residual: f64,
    pub pass: bool,
    /// First zero residual above tolerance, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<ZeroResidual>,
}

/// Checks the zeros on every observed slice and the violation on slice `st`.
pub fn check_conditions(
    o: &ObservedBehavior,
    st: (usize, usize),
    test: &TiltedHardyTest,
    tol: f64,
) -> Result<HardyReport> {
    let sh = o.shape();
    if (sh.nx, sh.ny, sh.na, sh.nb) != (2, 2, 2, 2) || !(sh.is_binary() || sh.is_single_source()) {
        return Err(HardyError::Shape(format!("{sh:?}")));
    }
    let mut zero_residuals = Vec::new();
    for &(a, b, x, y) in &ZEROS {
        for sl in o.slices().iter().filter(|sl| sl.x == x && sl.y == y) {
            zero_residuals.push(ZeroResidual {
                s: sl.s,
                t: sl.t,
                a,
                b,
                x,
                y,
                residual: sl.table[a][b].abs(),
            });
        }
    }
    let sl = o
        .slice(st.0, st.1, 0, 0)
        .ok_or_else(|| HardyError::Shape(format!("no observed slice for source pair {st:?} at settings 00")))?;
    let weight: f64 = sl.table.iter().flatten().sum();
    let violation_residual = (test.violation(&sl.table) - weight * test.q_value).abs();
    let witness = zero_residuals.iter().find(|z| z.residual > tol).cloned();
    Ok(HardyReport {
        w: test.w,
        q_value: test.q_value,
        pass: witness.is_none() && violation_residual <= tol,
        zero_residuals,
        violation_residual,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::schmidt;
    use crate::scenario::{behavior_of, observed};

    #[test]
    fn closed_form_endpoints() {
        assert_eq!(q_of_w(-0.25).unwrap(), 0.0);
        assert_eq!(q_of_w(1.0).unwrap(), 1.0);
        let q0 = (5.0 * 5f64.sqrt() - 11.0) / 2.0;
        assert!((q_of_w(0.0).unwrap() - q0).abs() < 1e-15);
        assert!((q0 - 0.0901699437).abs() < 1e-10);
        let q5 = (7f64.powf(1.5) - 17.0) / 3.0;
        assert!((q_of_w(0.5).unwrap() - q5).abs() < 1e-14);
        assert!(q_of_w(1.01).is_err() && q_of_w(-0.3).is_err());
    }

    #[test]
    fn angle_maps() {
        assert!((theta_of_w(-0.25).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(theta_of_w(1.0).unwrap(), 0.0);
        let t0 = theta_of_w(0.0).unwrap();
        assert!(((2.0 * t0).sin() - (3.0 - 5f64.sqrt())).abs() < 1e-15);
        assert!((t0 - 0.434692).abs() < 1e-6);
        assert!((w_of_theta(FRAC_PI_4).unwrap() + 0.25).abs() < 1e-15);
        assert_eq!(w_of_theta(0.0).unwrap(), 1.0);
        assert!(w_of_theta(t0).unwrap().abs() < 1e-12);
        assert!(w_of_theta(0.8).is_err());
    }

    #[test]
    fn round_trip_grid() {
        for k in 0..=1000 {
            let w = -0.25 + 1.25 * k as f64 / 1000.0;
            let t = theta_of_w(w).unwrap();
            assert!((0.0..=FRAC_PI_4).contains(&t));
            assert!((w_of_theta(t).unwrap() - w).abs() < 1e-12, "w = {w}");
            let th = FRAC_PI_4 * k as f64 / 1000.0;
            assert!((theta_of_w(w_of_theta(th).unwrap()).unwrap() - th).abs() < 1e-7);
            let q = q_of_w(w).unwrap();
            assert!((-1e-15..=1.0 + 1e-15).contains(&q));
        }
    }

    #[test]
    fn test_invariants() {
        for w in [-0.2, 0.0, 0.3, 0.9] {
            let t = TiltedHardyTest::new(w).unwrap();
            assert!((((2.0 * t.theta).sin() - 3.0).powi(2) - (4.0 * w + 5.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn target_state_limits() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = target_state(-0.25).unwrap();
        assert!((s.amplitudes()[0].re - h).abs() < 1e-15 && (s.amplitudes()[3].re - h).abs() < 1e-15);
        let s = target_state(1.0).unwrap();
        assert_eq!(s.amplitudes()[0].re, 1.0);
        let d = schmidt(&target_state(0.0).unwrap()).unwrap();
        let t0 = theta_of_w(0.0).unwrap();
        assert!((d.coefficients[0] - t0.cos()).abs() < 1e-12);
        assert!((d.coefficients[1] - t0.sin()).abs() < 1e-12);
    }

    #[test]
    fn zeros_hold_for_any_angles() {
        for (th, ph) in [(0.3, 0.2), (0.7, 2.0), (0.1, 1.3)] {
            let b = behavior_of(&realization_from_angles(th, ph).unwrap());
            for &(a, bb, x, y) in &ZEROS {
                assert!(b.get(crate::scenario::Event::new(0, 0, a, bb, x, y)) < 1e-15);
            }
        }
    }

    #[test]
    fn canonical_w0() {
        let c = canonical_realization(0.0).unwrap();
        let o = observed(&behavior_of(&c.realization)).unwrap();
        let r = check_conditions(&o, (0, 0), &c.test, 1e-7).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.zero_residuals.iter().all(|z| z.residual < 1e-9));
        assert!((o.get(crate::scenario::Event::new(0, 0, 0, 0, 0, 0)).unwrap() - 0.0901699).abs() < 1e-7);
        assert!((c.theta - theta_of_w(0.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn canonical_grid_reaches_closed_form() {
        for w in [-0.2, 0.25, 0.5, 0.75, 0.95] {
            let c = canonical_realization(w).unwrap();
            assert!((c.value - c.test.q_value).abs() < 1e-7, "w = {w}: {} vs {}", c.value, c.test.q_value);
            assert!((c.theta - c.test.theta).abs() < 1e-6, "w = {w}: θ = {}", c.theta);
        }
    }

    #[test]
    fn constructed_failures() {
        let c = canonical_realization(0.0).unwrap();
        let mut o = observed(&behavior_of(&c.realization)).unwrap();
        for sl in o.slices_mut() {
            if (sl.x, sl.y) == (0, 1) {
                sl.table[0][1] = 0.01;
            }
        }
        let r = check_conditions(&o, (0, 0), &c.test, 1e-7).unwrap();
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert_eq!((w.a, w.b, w.x, w.y), (0, 1, 0, 1));

        let mut o = observed(&behavior_of(&c.realization)).unwrap();
        for sl in o.slices_mut() {
            if (sl.x, sl.y) == (0, 0) {
                let v = c.test.violation(&sl.table);
                sl.table[0][0] -= 0.1 * v;
                sl.table[1][0] += 0.1 * v;
            }
        }
        let r = check_conditions(&o, (0, 0), &c.test, 1e-7).unwrap();
        assert!(!r.pass && r.witness.is_none());
        assert!((r.violation_residual - 0.1 * c.test.q_value).abs() < 1e-7);
    }

    #[test]
    fn source_independent_lift_passes_every_slice() {
        let c = canonical_realization(0.0).unwrap();
        let lifted = c
            .realization
            .lift_source_independent(ScenarioShape::binary(), &[0.25; 4])
            .unwrap();
        let o = observed(&behavior_of(&lifted)).unwrap();
        let r = check_conditions(&o, (0, 0), &c.test, 1e-7).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.zero_residuals.len(), 3);
    }

    #[test]
    fn fixed_theta_reaches_closed_form() {
        for th in [0.05, 0.3, 0.6, 0.78] {
            let c = canonical_for_theta(th).unwrap();
            assert_eq!(c.theta, th);
            assert!((c.value - c.test.q_value).abs() < 1e-9, "θ = {th}: {} vs {}", c.value, c.test.q_value);
        }
    }

    #[test]
    fn optimizer_state_angle_precision() {
        for w in [-0.2, 0.0, 0.5, 0.9] {
            let c = canonical_realization(w).unwrap();
            assert!((c.theta - c.test.theta).abs() < 1e-8, "w = {w}");
            assert!((c.value - c.test.q_value).abs() < 1e-12, "w = {w}");
        }
    }
}
