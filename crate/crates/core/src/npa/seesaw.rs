//! See-saw lower bounds: alternating eigenvalue-optimal updates of the state and of each
//! party's dichotomic measurements.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hardy::{polish_angles, realization_from_angles, HardyError, TiltedHardyTest, OPTIMIZER_SEED, ZEROS};
use crate::qmath::random::{random_hermitian, random_vector};
use crate::qmath::{eig_hermitian, normalize, schmidt};
use crate::scenario::{behavior_of, Event, Realization};
use crate::{CMatrix, ProjectiveMeasurement, PureState};

/// `Σ coeff · p(ab|xy)` on a two-setting, two-outcome single-source scenario.
pub type BellTerms = Vec<((usize, usize, usize, usize), f64)>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeesawConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_rounds: usize,
    pub tol: f64,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        Self { restarts: 50, seed: OPTIMIZER_SEED, max_rounds: 2000, tol: 1e-14 }
    }
}

#[derive(Clone, Debug)]
pub struct SeesawResult {
    pub value: f64,
    pub state: Vec<Complex64>,
    /// Outcome-0 effects `A_{0|x}` and `B_{0|y}`.
    pub alice: [CMatrix; 2],
    pub bob: [CMatrix; 2],
}

fn coefficient(terms: &BellTerms, a: usize, b: usize, x: usize, y: usize) -> f64 {
    terms.iter().filter(|(k, _)| *k == (a, b, x, y)).map(|(_, c)| c).sum()
}

fn effect(p0: &CMatrix, outcome: usize) -> CMatrix {
    if outcome == 0 {
        p0.clone()
    } else {
        (&CMatrix::identity(p0.rows()) - p0).hermitian_part()
    }
}

fn bell_operator(terms: &BellTerms, alice: &[CMatrix; 2], bob: &[CMatrix; 2]) -> CMatrix {
    let n = alice[0].rows() * bob[0].rows();
    let mut w = CMatrix::zeros(n, n);
    for &((a, b, x, y), c) in terms {
        w = &w + &effect(&alice[x], a).kron(&effect(&bob[y], b)).scale(c);
    }
    w.hermitian_part()
}

/// Projector onto the strictly positive eigenspace.
fn positive_part(k: &CMatrix) -> CMatrix {
    let e = eig_hermitian(&k.hermitian_part()).expect("Hermitian");
    let mut p = CMatrix::zeros(k.rows(), k.rows());
    for (i, &v) in e.values.iter().enumerate() {
        if v > 0.0 {
            let u = e.vector(i);
            p = &p + &CMatrix::outer(&u, &u);
        }
    }
    p.hermitian_part()
}

/// Coefficient matrix `C` of `ψ = Σ C_ij |i⟩|j⟩`.
fn coefficient_matrix(psi: &[Complex64], da: usize, db: usize) -> CMatrix {
    CMatrix::from_fn(da, db, |i, j| psi[i * db + j])
}

fn round(terms: &BellTerms, psi: &mut Vec<Complex64>, alice: &mut [CMatrix; 2], bob: &mut [CMatrix; 2]) -> f64 {
    let (da, db) = (alice[0].rows(), bob[0].rows());
    // Alice: maximize Σ_a tr(A_{a|x} K_{a|x}) with K_{a|x} = C (Σ c B_{b|y})ᵀ C†
    let c = coefficient_matrix(psi, da, db);
    for x in 0..2 {
        let mut k = CMatrix::zeros(da, da);
        for y in 0..2 {
            for b in 0..2 {
                let diff = coefficient(terms, 0, b, x, y) - coefficient(terms, 1, b, x, y);
                if diff != 0.0 {
                    let bt = effect(&bob[y], b).transpose();
                    k = &k + &(&(&c * &bt) * &c.adjoint()).scale(diff);
                }
            }
        }
        alice[x] = positive_part(&k);
    }
    // Bob: K_{b|y} = (A C)ᵀ C̄ summed over Alice's terms
    for y in 0..2 {
        let mut k = CMatrix::zeros(db, db);
        for x in 0..2 {
            for a in 0..2 {
                let diff = coefficient(terms, a, 0, x, y) - coefficient(terms, a, 1, x, y);
                if diff != 0.0 {
                    let ac = &effect(&alice[x], a) * &c;
                    k = &k + &(&ac.transpose() * &c.conj()).scale(diff);
                }
            }
        }
        bob[y] = positive_part(&k);
    }
    let w = bell_operator(terms, alice, bob);
    let e = eig_hermitian(&w).expect("Hermitian");
    let top = e.values.len() - 1;
    *psi = e.vector(top);
    e.values[top]
}

fn random_start<R: rand::Rng>(dims: (usize, usize), rng: &mut R) -> SeesawResult {
    let alice = [0, 1].map(|_| positive_part(&random_hermitian(dims.0, rng)));
    let bob = [0, 1].map(|_| positive_part(&random_hermitian(dims.1, rng)));
    let state = normalize(&random_vector(dims.0 * dims.1, rng)).expect("nonzero");
    SeesawResult { value: f64::NEG_INFINITY, state, alice, bob }
}

/// Alternating updates from `start` until the value stalls.
pub fn seesaw_from(terms: &BellTerms, start: SeesawResult, cfg: &SeesawConfig) -> SeesawResult {
    let SeesawResult { mut state, mut alice, mut bob, .. } = start;
    let mut value = f64::NEG_INFINITY;
    for _ in 0..cfg.max_rounds {
        let v = round(terms, &mut state, &mut alice, &mut bob);
        let done = (v - value).abs() <= cfg.tol * (1.0 + v.abs());
        value = v;
        if done {
            break;
        }
    }
    SeesawResult { value, state, alice, bob }
}

/// Best value over seeded restarts on `C^da ⊗ C^db`.
pub fn seesaw(terms: &BellTerms, dims: (usize, usize), cfg: &SeesawConfig) -> SeesawResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<SeesawResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let r = seesaw_from(terms, random_start(dims, &mut rng), cfg);
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    best.expect("at least one restart")
}

/// Penalty schedule on the forbidden events.
pub const PENALTIES: [f64; 5] = [1e1, 1e2, 1e3, 1e4, 1e5];

/// Exact-zero Hardy device obtained from a see-saw solution.
#[derive(Clone, Debug)]
pub struct HardySeesaw {
    pub value: f64,
    /// Value of the penalized see-saw before projection onto the zero constraints.
    pub penalized_value: f64,
    pub theta: f64,
    pub psi: f64,
    pub realization: Realization,
    pub max_zero: f64,
}

/// See-saw on `p(00|00) + w p(11|00) − λ Σ zeros` with increasing `λ`, then projection
/// onto the family where the three zeros hold exactly and a local polish there. The returned value is achieved by
/// the returned realization, so it is a genuine lower bound on `q(w)`.
pub fn hardy_lower_bound(w: f64, cfg: &SeesawConfig) -> Result<HardySeesaw, HardyError> {
    let test = TiltedHardyTest::new(w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<HardySeesaw> = None;
    for _ in 0..cfg.restarts.max(1) {
        // continuation: each penalty level starts from the previous solution
        let mut current = random_start((2, 2), &mut rng);
        for lambda in PENALTIES {
            let mut terms: BellTerms = vec![((0, 0, 0, 0), 1.0), ((1, 1, 0, 0), test.w)];
            terms.extend(ZEROS.iter().map(|&z| (z, -lambda)));
            current = seesaw_from(&terms, current, cfg);
            if let Some(h) = project_to_zeros(&current, w)? {
                if best.as_ref().is_none_or(|b| h.value > b.value) {
                    best = Some(h);
                }
            }
        }
    }
    best.ok_or(HardyError::OptimizerFailed { achieved: f64::NAN, target: test.q_value })
}

/// Reads `(θ, ψ)` off a two-qubit see-saw solution: `θ` from the Schmidt coefficients and
/// `ψ` from Alice's second setting in the Schmidt basis.
fn project_to_zeros(s: &SeesawResult, w: f64) -> Result<Option<HardySeesaw>, HardyError> {
    let dec = schmidt(&PureState::new((2, 2), s.state.clone()).map_err(crate::scenario::ScenarioError::from)?)
        .map_err(crate::scenario::ScenarioError::from)?;
    let (c0, c1) = (dec.coefficients[0], dec.coefficients.get(1).copied().unwrap_or(0.0));
    let theta = c1.atan2(c0);
    if !(theta > 0.0) {
        return Ok(None);
    }
    let e = eig_hermitian(&s.alice[1]).expect("Hermitian");
    if (e.values[1] - 1.0).abs() > 1e-6 || e.values[0].abs() > 1e-6 {
        return Ok(None);
    }
    let a1 = e.vector(1);
    let local = dec.left_basis.adjoint().apply(&a1);
    let (r0, r1) = (local[0].norm(), local[1].norm());
    let psi = (theta.sin() * r1).atan2(theta.cos() * r0);
    let (theta, psi, _) = polish_angles(w, theta, psi);
    let realization = realization_from_angles(theta, psi)?;
    let b = behavior_of(&realization);
    let value = b.get(Event::new(0, 0, 0, 0, 0, 0)) + w * b.get(Event::new(0, 0, 1, 1, 0, 0));
    let max_zero = ZEROS.iter().map(|&(a, bb, x, y)| b.get(Event::new(0, 0, a, bb, x, y)).abs()).fold(0.0, f64::max);
    Ok(Some(HardySeesaw { value, penalized_value: s.value, theta, psi, realization, max_zero }))
}

/// Dichotomic measurements from outcome-0 effects.
pub fn measurements(effects: &[CMatrix; 2]) -> Vec<ProjectiveMeasurement> {
    effects
        .iter()
        .map(|p| ProjectiveMeasurement::dichotomic(p.clone()).expect("projector"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardy::q_of_w;

    #[test]
    fn chsh_reaches_tsirelson() {
        let mut terms = BellTerms::new();
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        let s = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                        let sxy = if x * y == 1 { -1.0 } else { 1.0 };
                        terms.push(((a, b, x, y), s * sxy));
                    }
                }
            }
        }
        let cfg = SeesawConfig { restarts: 5, ..SeesawConfig::default() };
        let r = seesaw(&terms, (2, 2), &cfg);
        assert!((r.value - 2.0 * 2f64.sqrt()).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn hardy_lower_bound_is_tight_and_exact() {
        for w in [0.0, 0.5] {
            let h = hardy_lower_bound(w, &SeesawConfig::default()).unwrap();
            let q = q_of_w(w).unwrap();
            assert!(h.value <= q + 1e-12, "{} > {q}", h.value);
            assert!(h.value >= q - 1e-6, "{} < {q}", h.value);
            assert!(h.max_zero < 1e-12);
        }
    }
}
