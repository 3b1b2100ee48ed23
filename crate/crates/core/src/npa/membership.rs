use serde::{Deserialize, Serialize};

use super::lowering::Lowered;
use super::problem::{build_moment_problem, Origin, ProbExpr, ProblemSpec, Weights};
use super::sdp::{SdpStatus, SolverConfig};
use super::{NpaError, Result};
use crate::scenario::{Event, ObservedBehavior, ObservedSlice};

const DATA_TOL: f64 = 1e-9;

/// Affine functional `constant + Σ coefficient · o` on observed tables, nonnegative on
/// every table realizable within the relaxation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Certificate {
    pub constant: f64,
    /// Coefficients laid out like the observed slices.
    pub coefficients: Vec<ObservedSlice>,
    /// Value on the tested table.
    pub value: f64,
}

impl Certificate {
    /// Evaluates on `o`; slices missing from `o` contribute nothing.
    pub fn eval(&self, o: &ObservedBehavior) -> f64 {
        let mut total = self.constant;
        for c in &self.coefficients {
            if let Some(sl) = o.slice(c.s, c.t, c.x, c.y) {
                for (crow, orow) in c.table.iter().zip(&sl.table) {
                    total += crow.iter().zip(orow).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "result")]
pub enum Membership {
    Feasible,
    Infeasible { certificate: Certificate },
    Unknown { status: SdpStatus },
}

/// Feasibility of the relaxation with the observed entries fixed and the weights read off
/// the data; the unobserved settings are only tied to it through the residual bounds.
pub fn membership_test(
    o: &ObservedBehavior,
    level: usize,
    bounds: Option<(f64, f64)>,
    cfg: &SolverConfig,
) -> Result<Membership> {
    let sh = o.shape();
    o.check(DATA_TOL).map_err(NpaError::Inconsistent)?;
    let mut weights = Vec::with_capacity(sh.source_pairs());
    let mut weight_slice = Vec::with_capacity(sh.source_pairs());
    for s in 0..sh.ns {
        for t in 0..sh.nt {
            let k = o
                .slices()
                .iter()
                .position(|sl| sl.s == s && sl.t == t)
                .ok_or_else(|| NpaError::Inconsistent(format!("no observed slice for source pair ({s},{t})")))?;
            weight_slice.push(k);
            weights.push(o.slices()[k].table.iter().flatten().sum::<f64>());
        }
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > DATA_TOL {
        return Err(NpaError::InvalidWeights(format!("observed weights sum to {total}")));
    }
    let mut values = Vec::new();
    let mut value_index = Vec::new();
    for (k, sl) in o.slices().iter().enumerate() {
        for a in 0..sh.na {
            for b in 0..sh.nb {
                values.push((ProbExpr::single(Event::new(sl.s, sl.t, a, b, sl.x, sl.y)), sl.table[a][b]));
                value_index.push((k, a, b));
            }
        }
    }
    let spec = ProblemSpec {
        shape: sh,
        level,
        weights: Weights::Fixed(weights.iter().map(|w| w / total).collect()),
        zeros: Vec::new(),
        values,
        objective: ProbExpr::default(),
        residual_bounds: bounds,
    };
    let problem = build_moment_problem(&spec)?;
    let low = Lowered::new(&problem);
    let sol = low.solve(cfg);
    match sol.status {
        SdpStatus::Optimal => return Ok(Membership::Feasible),
        SdpStatus::PrimalInfeasible => {}
        s => return Ok(Membership::Unknown { status: s }),
    }
    let Some(f) = sol.farkas else {
        return Ok(Membership::Unknown { status: SdpStatus::PrimalInfeasible });
    };

    let mut coefficients: Vec<ObservedSlice> = o
        .slices()
        .iter()
        .map(|sl| ObservedSlice { s: sl.s, t: sl.t, x: sl.x, y: sl.y, table: vec![vec![0.0; sh.nb]; sh.na] })
        .collect();
    let mut constant = f.constant;
    for (eq, phi) in problem.equalities.iter().zip(&f.multipliers) {
        match eq.origin {
            Origin::Weight { s, t } => {
                let k = weight_slice[s * sh.nt + t];
                coefficients[k].table.iter_mut().flatten().for_each(|c| *c += phi / total);
            }
            Origin::Value(i) => {
                let (k, a, b) = value_index[i];
                coefficients[k].table[a][b] += phi;
            }
            Origin::Normalization => constant += phi,
            Origin::Zero(_) | Origin::Kernel { .. } => {}
        }
        constant -= phi * eq.expr.constant;
    }
    // free moments are bounded by their source weight, so this absorbs the solver residual
    coefficients.iter_mut().flat_map(|c| c.table.iter_mut().flatten()).for_each(|c| *c += f.residual_l1);
    let scale = coefficients
        .iter()
        .flat_map(|c| c.table.iter().flatten())
        .fold(constant.abs(), |m, c| m.max(c.abs()));
    if !(scale > 0.0) {
        return Ok(Membership::Unknown { status: SdpStatus::NumericalTrouble });
    }
    constant /= scale;
    coefficients.iter_mut().flat_map(|c| c.table.iter_mut().flatten()).for_each(|c| *c /= scale);
    let mut cert = Certificate { constant, coefficients, value: 0.0 };
    cert.value = cert.eval(o);
    if cert.value < 0.0 {
        Ok(Membership::Infeasible { certificate: cert })
    } else {
        Ok(Membership::Unknown { status: SdpStatus::NumericalTrouble })
    }
}
