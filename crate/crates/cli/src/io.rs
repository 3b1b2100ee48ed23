//! Versioned JSON documents. Every document carries a `schema` tag; the matching JSON
//! Schema files live in the repository's `schemas/` directory.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use untrusted_selftest::npa::{Membership, ProblemSpec, SdpSolution, SolverConfig};
use untrusted_selftest::scenario::{
    Behavior, ClassicalQuantumState, Event, ObservedBehavior, ObservedSlice, Realization, ScenarioShape,
};
use untrusted_selftest::selftest::VerificationReport;
use untrusted_selftest::tree::{protocol_with_tree, CoveringTree, EdgeRecord, MeasurementLayout, QuditProtocol, SchmidtVector};
use untrusted_selftest::{CMatrix, ProjectiveMeasurement};

use crate::CliError;

/// Allowed mismatch between a recorded weight and the trace of its state.
pub const WEIGHT_TOL: f64 = 1e-9;

pub const BEHAVIOR: &str = "behavior.v1";
pub const REALIZATION: &str = "realization.v1";
pub const OBSERVED: &str = "observed.v1";
pub const PROTOCOL: &str = "protocol.v1";
pub const REPORT: &str = "report.v1";
pub const SDP: &str = "sdp.v1";
pub const MEMBERSHIP: &str = "membership.v1";

/// Complex matrix as separate real and imaginary row arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.rows()).map(|i| (0..m.cols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        Self { re: rows(|z| z.re), im: rows(|z| z.im) }
    }

    fn to_matrix(&self, pointer: &str) -> Result<CMatrix, CliError> {
        let n = self.re.len();
        let square = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if n == 0 || !square(&self.re) || !square(&self.im) {
            return Err(CliError::invalid(pointer, "matrix must be square with matching re/im parts"));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| Complex64::new(self.re[i][j], self.im[i][j])))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementDoc {
    pub effects: Vec<MatrixDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationDoc {
    pub schema: String,
    pub shape: ScenarioShape,
    pub dims: (usize, usize),
    /// `p(st)` in row-major `(s, t)` order.
    pub weights: Vec<f64>,
    /// Subnormalized `ρ_st` with trace `p(st)`.
    pub states: Vec<MatrixDoc>,
    pub alice: Vec<MeasurementDoc>,
    pub bob: Vec<MeasurementDoc>,
}

impl RealizationDoc {
    pub fn from_realization(r: &Realization) -> Self {
        let (da, db) = r.cq.dims();
        let states = r.cq.states().iter().map(MatrixDoc::from_matrix).collect();
        let meas = |ms: &[ProjectiveMeasurement]| {
            ms.iter()
                .map(|m| MeasurementDoc { effects: m.effects().iter().map(MatrixDoc::from_matrix).collect() })
                .collect()
        };
        Self {
            schema: REALIZATION.into(),
            shape: r.shape(),
            dims: (da, db),
            weights: r.cq.weights().to_vec(),
            states,
            alice: meas(&r.alice),
            bob: meas(&r.bob),
        }
    }

    pub fn to_realization(&self) -> Result<Realization, CliError> {
        let sh = self.shape;
        sh.validate().map_err(|e| CliError::invalid("/shape", e))?;
        if self.weights.len() != sh.source_pairs() {
            return Err(CliError::invalid("/weights", format!("expected {} weights", sh.source_pairs())));
        }
        if self.states.len() != sh.source_pairs() {
            return Err(CliError::invalid("/states", format!("expected {} states", sh.source_pairs())));
        }
        let mut states = Vec::with_capacity(self.states.len());
        for (k, m) in self.states.iter().enumerate() {
            states.push(m.to_matrix(&format!("/states/{k}"))?);
        }
        let cq = ClassicalQuantumState::new(sh, self.dims, states).map_err(|e| CliError::invalid("/states", e))?;
        for (k, (&w, &tr)) in self.weights.iter().zip(cq.weights()).enumerate() {
            if (w - tr).abs() > WEIGHT_TOL {
                return Err(CliError::invalid(&format!("/weights/{k}"), format!("{w} differs from the state trace {tr}")));
            }
        }
        let meas = |docs: &[MeasurementDoc], party: &str| -> Result<Vec<ProjectiveMeasurement>, CliError> {
            docs.iter()
                .enumerate()
                .map(|(i, d)| {
                    let effects = d
                        .effects
                        .iter()
                        .enumerate()
                        .map(|(a, m)| m.to_matrix(&format!("/{party}/{i}/effects/{a}")))
                        .collect::<Result<Vec<_>, _>>()?;
                    ProjectiveMeasurement::new(effects).map_err(|e| CliError::invalid(&format!("/{party}/{i}"), e))
                })
                .collect()
        };
        let alice = meas(&self.alice, "alice")?;
        let bob = meas(&self.bob, "bob")?;
        Realization::new(cq, alice, bob).map_err(|e| CliError::invalid("", e))
    }
}

/// `tensor[s][t][a][b][x][y]`.
pub type Tensor6 = Vec<Vec<Vec<Vec<Vec<Vec<f64>>>>>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorDoc {
    pub schema: String,
    pub shape: ScenarioShape,
    pub tensor: Tensor6,
}

impl BehaviorDoc {
    pub fn from_behavior(b: &Behavior) -> Self {
        let sh = b.shape();
        let tensor = (0..sh.ns)
            .map(|s| {
                (0..sh.nt)
                    .map(|t| {
                        (0..sh.na)
                            .map(|a| {
                                (0..sh.nb)
                                    .map(|bb| {
                                        (0..sh.nx)
                                            .map(|x| (0..sh.ny).map(|y| b.get(Event::new(s, t, a, bb, x, y))).collect())
                                            .collect()
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { schema: BEHAVIOR.into(), shape: sh, tensor }
    }

    pub fn to_behavior(&self) -> Result<Behavior, CliError> {
        let sh = self.shape;
        sh.validate().map_err(|e| CliError::invalid("/shape", e))?;
        let dims = [sh.ns, sh.nt, sh.na, sh.nb, sh.nx, sh.ny];
        let mut flat = vec![0.0; sh.tensor_len()];
        check_nested(&self.tensor, &dims, &mut flat)?;
        Behavior::from_tensor(sh, flat).map_err(|e| CliError::invalid("/tensor", e))
    }
}

fn check_nested(t: &Tensor6, dims: &[usize; 6], flat: &mut [f64]) -> Result<(), CliError> {
    let mismatch = |p: String, n: usize| CliError::invalid(&p, format!("expected {n} entries"));
    if t.len() != dims[0] {
        return Err(mismatch("/tensor".into(), dims[0]));
    }
    let mut k = 0;
    for (s, t1) in t.iter().enumerate() {
        if t1.len() != dims[1] {
            return Err(mismatch(format!("/tensor/{s}"), dims[1]));
        }
        for (tt, t2) in t1.iter().enumerate() {
            if t2.len() != dims[2] {
                return Err(mismatch(format!("/tensor/{s}/{tt}"), dims[2]));
            }
            for (a, t3) in t2.iter().enumerate() {
                if t3.len() != dims[3] {
                    return Err(mismatch(format!("/tensor/{s}/{tt}/{a}"), dims[3]));
                }
                for (b, t4) in t3.iter().enumerate() {
                    if t4.len() != dims[4] {
                        return Err(mismatch(format!("/tensor/{s}/{tt}/{a}/{b}"), dims[4]));
                    }
                    for (x, t5) in t4.iter().enumerate() {
                        if t5.len() != dims[5] {
                            return Err(mismatch(format!("/tensor/{s}/{tt}/{a}/{b}/{x}"), dims[5]));
                        }
                        for &v in t5 {
                            flat[k] = v;
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedDoc {
    pub schema: String,
    pub shape: ScenarioShape,
    pub slices: Vec<ObservedSlice>,
}

impl ObservedDoc {
    pub fn from_observed(o: &ObservedBehavior) -> Self {
        Self { schema: OBSERVED.into(), shape: o.shape(), slices: o.slices().to_vec() }
    }

    pub fn to_observed(&self) -> Result<ObservedBehavior, CliError> {
        ObservedBehavior::new(self.shape, self.slices.clone()).map_err(|e| CliError::invalid("/slices", e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ProtocolDoc {
    pub schema: String,
    pub d: usize,
    pub coeffs: Vec<f64>,
    pub root: usize,
    pub edges: Vec<(usize, usize)>,
    pub per_edge: Vec<EdgeRecord>,
    pub compressed_groups: Vec<Vec<usize>>,
    pub layout: MeasurementLayout,
    pub permutation: Vec<usize>,
}

impl ProtocolDoc {
    pub fn from_protocol(p: &QuditProtocol) -> Self {
        Self {
            schema: PROTOCOL.into(),
            d: p.d,
            coeffs: p.coeffs.coeffs().to_vec(),
            root: p.root,
            edges: p.tree.edges.clone(),
            per_edge: p.per_edge.clone(),
            compressed_groups: p.compressed_groups.clone(),
            layout: p.layout.clone(),
            permutation: p.permutation.clone(),
        }
    }

    /// Rebuilds the protocol from `coeffs` and the tree; the derived fields must agree.
    pub fn to_protocol(&self) -> Result<QuditProtocol, CliError> {
        let c = SchmidtVector::new(self.coeffs.clone()).map_err(|e| CliError::invalid("/coeffs", e))?;
        if c.dim() != self.d {
            return Err(CliError::invalid("/d", format!("d = {} but {} coefficients", self.d, c.dim())));
        }
        let tree = CoveringTree { d: self.d, edges: self.edges.clone(), root: self.root };
        let p = protocol_with_tree(&c, tree, self.permutation.clone()).map_err(|e| CliError::invalid("/edges", e))?;
        for (i, (got, want)) in self.per_edge.iter().zip(&p.per_edge).enumerate() {
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
            if got.edge != want.edge || got.swapped != want.swapped || !close(got.w, want.w) || !close(got.theta, want.theta) || !close(got.p, want.p) {
                return Err(CliError::invalid(&format!("/perEdge/{i}"), "does not match the coefficients and tree"));
            }
        }
        if self.per_edge.len() != p.per_edge.len() {
            return Err(CliError::invalid("/perEdge", format!("expected {} records", p.per_edge.len())));
        }
        if self.layout != p.layout {
            return Err(CliError::invalid("/layout", "does not match the tree"));
        }
        Ok(QuditProtocol { compressed_groups: self.compressed_groups.clone(), ..p })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ReportDoc {
    pub schema: String,
    /// `qubit` or `qudit`.
    pub kind: String,
    pub report: VerificationReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdpDoc {
    pub schema: String,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<SdpSolution>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembershipDoc {
    pub schema: String,
    pub level: usize,
    pub bounds: Option<(f64, f64)>,
    pub membership: Membership,
}

/// Any document that carries an expected `schema` tag.
pub trait Document: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
}

impl Document for RealizationDoc {
    const SCHEMA: &'static str = REALIZATION;
}
impl Document for BehaviorDoc {
    const SCHEMA: &'static str = BEHAVIOR;
}
impl Document for ObservedDoc {
    const SCHEMA: &'static str = OBSERVED;
}
impl Document for ProtocolDoc {
    const SCHEMA: &'static str = PROTOCOL;
}
impl Document for ReportDoc {
    const SCHEMA: &'static str = REPORT;
}
impl Document for SdpDoc {
    const SCHEMA: &'static str = SDP;
}
impl Document for MembershipDoc {
    const SCHEMA: &'static str = MEMBERSHIP;
}

/// JSON pointer of a serde path.
fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

pub fn schema_of(v: &serde_json::Value) -> Option<&str> {
    v.get("schema").and_then(|s| s.as_str())
}

pub fn parse_value(text: &str, file: &str) -> Result<serde_json::Value, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Schema { file: file.into(), pointer: String::new(), message: e.to_string() })
}

pub fn from_value<D: Document>(v: serde_json::Value, file: &str) -> Result<D, CliError> {
    match schema_of(&v) {
        Some(s) if s == D::SCHEMA => {}
        Some(s) => {
            return Err(CliError::Schema {
                file: file.into(),
                pointer: "/schema".into(),
                message: format!("expected \"{}\", found \"{s}\"", D::SCHEMA),
            })
        }
        None => {
            return Err(CliError::Schema {
                file: file.into(),
                pointer: "/schema".into(),
                message: format!("missing schema tag \"{}\"", D::SCHEMA),
            })
        }
    }
    serde_path_to_error::deserialize(v).map_err(|e| CliError::Schema {
        file: file.into(),
        pointer: pointer(e.path()),
        message: e.into_inner().to_string(),
    })
}

pub fn read<D: Document>(path: &Path) -> Result<D, CliError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| CliError::Io { file: file.clone(), message: e.to_string() })?;
    from_value(parse_value(&text, &file)?, &file)
}

/// Pretty JSON with struct field order and shortest round-trip floats, newline-terminated.
pub fn to_string<D: Serialize>(doc: &D) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

pub fn write<D: Serialize>(path: &Path, doc: &D) -> Result<(), CliError> {
    fs::write(path, to_string(doc)).map_err(|e| CliError::Io { file: path.display().to_string(), message: e.to_string() })
}
