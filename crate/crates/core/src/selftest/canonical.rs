use num_complex::Complex64;

use super::{Result, SelftestError};
use crate::hardy::canonical_for_theta;
use crate::scenario::{ClassicalQuantumState, Realization, ScenarioShape};
use crate::tree::{QuditProtocol, SchmidtVector};
use crate::{CMatrix, ProjectiveMeasurement, PureState};

/// Isometry `C² → C^d` sending `|0⟩ ↦ |hi⟩`, `|1⟩ ↦ |lo⟩`.
fn embedding(d: usize, hi: usize, lo: usize) -> CMatrix {
    let mut e = CMatrix::zeros(d, 2);
    e[(hi, 0)] = Complex64::new(1.0, 0.0);
    e[(lo, 1)] = Complex64::new(1.0, 0.0);
    e
}

/// Dichotomic measurement whose outcome-0 effect is `E P E†`; the rest of the space,
/// including everything outside the edge, goes to outcome 1.
fn embedded_dichotomic(e: &CMatrix, p0: &CMatrix) -> Result<ProjectiveMeasurement> {
    let p = (&(e * p0) * &e.adjoint()).hermitian_part();
    Ok(ProjectiveMeasurement::dichotomic(p)?)
}

/// `Σ_k c_k |kk⟩`, the Schmidt-basis measurement, and per edge the canonical tilted
/// Hardy measurements of the edge's qubit embedded on `span{|0_i⟩, |1_i⟩}`.
pub fn canonical_qudit_realization(c: &SchmidtVector, proto: &QuditProtocol) -> Result<Realization> {
    let d = c.dim();
    if proto.d != d {
        return Err(SelftestError::Structure(format!("protocol has d = {} but state has d = {d}", proto.d)));
    }
    let n = proto.layout.measurement_count();
    let mut alice: Vec<Option<ProjectiveMeasurement>> = vec![None; n];
    let mut bob: Vec<Option<ProjectiveMeasurement>> = vec![None; n];
    alice[proto.layout.schmidt] = Some(ProjectiveMeasurement::computational(d));
    bob[proto.layout.schmidt] = Some(ProjectiveMeasurement::computational(d));
    for (rec, slots) in proto.per_edge.iter().zip(&proto.layout.edges) {
        let hardy = canonical_for_theta(rec.theta)?;
        let (hi, lo) = rec.qubit_vertices();
        let e = embedding(d, hi, lo);
        for (setting, &slot) in slots.iter().enumerate() {
            alice[slot] = Some(embedded_dichotomic(&e, hardy.realization.alice[setting].effect(0))?);
            bob[slot] = Some(embedded_dichotomic(&e, hardy.realization.bob[setting].effect(0))?);
        }
    }
    let collect = |v: Vec<Option<ProjectiveMeasurement>>| -> Result<Vec<ProjectiveMeasurement>> {
        v.into_iter()
            .enumerate()
            .map(|(k, m)| m.ok_or_else(|| SelftestError::Structure(format!("layout leaves measurement {k} unassigned"))))
            .collect()
    };
    let psi = PureState::diagonal(c.coeffs());
    let shape = ScenarioShape::single_source(n, n, d, d);
    let cq = ClassicalQuantumState::new(shape, (d, d), vec![psi.density().hermitian_part()])?;
    Ok(Realization::new(cq, collect(alice)?, collect(bob)?)?)
}

/// Measurements of one compressed group: for each Hardy setting, a measurement with
/// outcomes `(0_j, 1_j)` per edge of the group followed by one remainder outcome.
#[derive(Clone, Debug)]
pub struct CompressedGroup {
    pub edges: Vec<usize>,
    pub alice: [ProjectiveMeasurement; 2],
    pub bob: [ProjectiveMeasurement; 2],
}

impl CompressedGroup {
    /// Outcome of the compressed measurement that reproduces outcome `a` of `edge`.
    pub fn outcome_of(&self, edge: usize, a: usize) -> Option<usize> {
        self.edges.iter().position(|&e| e == edge).map(|j| 2 * j + a)
    }
}

/// Merges the dichotomic measurements of each matching into single measurements.
pub fn compressed_measurements(r: &Realization, proto: &QuditProtocol) -> Result<Vec<CompressedGroup>> {
    let mut out = Vec::with_capacity(proto.compressed_groups.len());
    for group in &proto.compressed_groups {
        let build = |ms: &[ProjectiveMeasurement], setting: usize| -> Result<ProjectiveMeasurement> {
            let schmidt = &ms[proto.layout.schmidt];
            let dim = schmidt.dim();
            let mut effects = Vec::with_capacity(2 * group.len() + 1);
            let mut covered = CMatrix::zeros(dim, dim);
            for &e in group {
                let (i, j) = proto.tree.edges[e];
                let support = schmidt.effect(i) + schmidt.effect(j);
                let p0 = ms[proto.layout.edges[e][setting]].effect(0).clone();
                let p1 = (&support - &p0).hermitian_part();
                covered = &covered + &support;
                effects.push(p0);
                effects.push(p1);
            }
            effects.push((&CMatrix::identity(dim) - &covered).hermitian_part());
            Ok(ProjectiveMeasurement::new(effects)?)
        };
        out.push(CompressedGroup {
            edges: group.clone(),
            alice: [build(&r.alice, 0)?, build(&r.alice, 1)?],
            bob: [build(&r.bob, 0)?, build(&r.bob, 1)?],
        });
    }
    Ok(out)
}
