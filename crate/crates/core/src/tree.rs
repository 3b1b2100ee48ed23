//! Inhomogeneous covering trees over Schmidt indices and the qudit protocols built on them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hardy::{self, HardyError};

/// Relative threshold for `c_i = c_j`.
pub const EQUALITY_TOL: f64 = 1e-10;
/// Absolute threshold used by [`validate_tree`] for homogeneous edges.
pub const HOMOGENEITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("all Schmidt coefficients are equal; no inhomogeneous covering tree exists")]
    MaximallyEntangled,
    #[error("invalid Schmidt coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("invalid covering tree: {0}")]
    InvalidTree(String),
    #[error(transparent)]
    Hardy(#[from] HardyError),
}

pub type Result<T> = std::result::Result<T, TreeError>;

/// Strictly positive coefficients with unit Euclidean norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SchmidtVector {
    coeffs: Vec<f64>,
}

impl SchmidtVector {
    /// Accepts already normalized coefficients.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        Self::check_positive(&coeffs)?;
        let sq: f64 = coeffs.iter().map(|c| c * c).sum();
        if (sq - 1.0).abs() > 1e-10 {
            return Err(TreeError::InvalidCoefficients(format!("squares sum to {sq}")));
        }
        Ok(Self { coeffs })
    }

    /// Rescales positive coefficients to unit norm.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        Self::check_positive(raw)?;
        let n = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        Ok(Self { coeffs: raw.iter().map(|c| c / n).collect() })
    }

    fn check_positive(c: &[f64]) -> Result<()> {
        if c.len() < 2 {
            return Err(TreeError::InvalidCoefficients(format!("need d ≥ 2, got {}", c.len())));
        }
        if let Some(bad) = c.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(TreeError::InvalidCoefficients(format!("coefficient {bad} is not positive")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, k: usize) -> f64 {
        self.coeffs[k]
    }

    pub fn all_equal(&self) -> bool {
        self.coeffs.iter().all(|&c| approx_eq(c, self.coeffs[0]))
    }

    pub fn all_distinct(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (i + 1..d).all(|j| !approx_eq(self.coeffs[i], self.coeffs[j])))
    }
}

impl TryFrom<Vec<f64>> for SchmidtVector {
    type Error = TreeError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::normalized(&v)
    }
}

impl From<SchmidtVector> for Vec<f64> {
    fn from(s: SchmidtVector) -> Self {
        s.coeffs
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQUALITY_TOL * a.abs().max(b.abs())
}

/// Edges `(0_i, 1_i)` directed away from the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveringTree {
    pub d: usize,
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
}

impl CoveringTree {
    /// Edge indices along the unique root-to-`k` path, root first.
    pub fn path_to(&self, k: usize) -> Option<Vec<usize>> {
        let mut path = Vec::new();
        let mut v = k;
        let mut guard = 0;
        while v != self.root {
            let i = self.edges.iter().position(|&(_, c)| c == v)?;
            path.push(i);
            v = self.edges[i].0;
            guard += 1;
            if guard > self.edges.len() {
                return None;
            }
        }
        path.reverse();
        Some(path)
    }

    /// The chain `(0,1), (1,2), …, (d−2, d−1)` rooted at 0.
    pub fn path(d: usize) -> Self {
        Self { d, edges: (1..d).map(|k| (k - 1, k)).collect(), root: 0 }
    }
}

/// Covering tree rooted at 0 from `E = {(0,k)}_{c_k ≠ c_0} ∪ {(1,k)}_{c_k = c_0}`.
///
/// When `c_0 = c_1` the first index `j` with `c_j ≠ c_0` is swapped into position 1,
/// the recipe runs on the reordered coefficients and the edges are relabeled back.
pub fn build_tree(c: &SchmidtVector) -> Result<CoveringTree> {
    build_tree_with_permutation(c).map(|(t, _)| t)
}

/// [`build_tree`] together with the reordering it used (`reordered[i] = c[perm[i]]`).
pub fn build_tree_with_permutation(c: &SchmidtVector) -> Result<(CoveringTree, Vec<usize>)> {
    if c.all_equal() {
        return Err(TreeError::MaximallyEntangled);
    }
    let d = c.dim();
    let mut perm: Vec<usize> = (0..d).collect();
    if approx_eq(c.get(0), c.get(1)) {
        let j = (2..d)
            .find(|&j| !approx_eq(c.get(j), c.get(0)))
            .expect("not all coefficients are equal");
        perm.swap(1, j);
    }
    let cc: Vec<f64> = perm.iter().map(|&k| c.get(k)).collect();
    let mut edges = Vec::with_capacity(d - 1);
    for k in 1..d {
        if !approx_eq(cc[k], cc[0]) {
            edges.push((0, k));
        }
    }
    for k in 2..d {
        if approx_eq(cc[k], cc[0]) {
            edges.push((1, k));
        }
    }
    let edges = edges.into_iter().map(|(i, j)| (perm[i], perm[j])).collect();
    Ok((CoveringTree { d, edges, root: perm[0] }, perm))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeValidation {
    pub valid: bool,
    pub diagnostic: Option<String>,
}

impl TreeValidation {
    fn fail(msg: String) -> Self {
        Self { valid: false, diagnostic: Some(msg) }
    }
}

/// Checks range, coverage, inhomogeneity, edge count/acyclicity and rootedness, in that order.
pub fn validate_tree(t: &CoveringTree, c: &SchmidtVector) -> TreeValidation {
    let d = c.dim();
    if t.d != d {
        return TreeValidation::fail(format!("tree has d = {} but state has d = {d}", t.d));
    }
    if t.root >= d {
        return TreeValidation::fail(format!("root {} out of range", t.root));
    }
    if let Some(&(i, j)) = t.edges.iter().find(|&&(i, j)| i >= d || j >= d || i == j) {
        return TreeValidation::fail(format!("invalid edge ({i},{j})"));
    }
    let mut covered = vec![false; d];
    for &(i, j) in &t.edges {
        covered[i] = true;
        covered[j] = true;
    }
    if d > 1 {
        if let Some(k) = covered.iter().position(|&x| !x) {
            return TreeValidation::fail(format!("uncovered vertex {k}"));
        }
    }
    if let Some(&(i, j)) = t
        .edges
        .iter()
        .find(|&&(i, j)| (c.get(i) - c.get(j)).abs() <= HOMOGENEITY_TOL)
    {
        return TreeValidation::fail(format!("homogeneous edge ({i},{j})"));
    }
    if t.edges.len() != d - 1 {
        return TreeValidation::fail(format!("{} edges, a tree on {d} vertices has {}", t.edges.len(), d - 1));
    }
    let mut reached = vec![false; d];
    reached[t.root] = true;
    let mut queue = VecDeque::from([t.root]);
    while let Some(v) = queue.pop_front() {
        for &(i, j) in &t.edges {
            if i == v {
                if reached[j] {
                    return TreeValidation::fail(format!("cycle through edge ({i},{j})"));
                }
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(k) = reached.iter().position(|&x| !x) {
        return TreeValidation::fail(format!("vertex {k} is not reachable from root {}", t.root));
    }
    TreeValidation { valid: true, diagnostic: None }
}

/// Tilted Hardy data attached to one edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub edge: (usize, usize),
    pub w: f64,
    pub theta: f64,
    pub p: f64,
    /// The Hardy qubit's `|0⟩` sits on the child vertex (`c_{1_i} > c_{0_i}`).
    pub swapped: bool,
}

impl EdgeRecord {
    /// `(vertex carrying the larger coefficient, vertex carrying the smaller)`.
    pub fn qubit_vertices(&self) -> (usize, usize) {
        if self.swapped {
            (self.edge.1, self.edge.0)
        } else {
            self.edge
        }
    }
}

/// Measurement indices per party: the Schmidt-basis measurement and, per edge,
/// the two dichotomic Hardy settings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementLayout {
    pub schmidt: usize,
    pub edges: Vec<[usize; 2]>,
}

impl MeasurementLayout {
    pub fn for_edges(n: usize) -> Self {
        Self { schmidt: 0, edges: (0..n).map(|i| [1 + 2 * i, 2 + 2 * i]).collect() }
    }

    pub fn measurement_count(&self) -> usize {
        1 + 2 * self.edges.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuditProtocol {
    pub d: usize,
    pub coeffs: SchmidtVector,
    pub root: usize,
    pub tree: CoveringTree,
    pub per_edge: Vec<EdgeRecord>,
    pub layout: MeasurementLayout,
    /// Edge indices grouped into matchings.
    pub compressed_groups: Vec<Vec<usize>>,
    /// Reordering applied by the tree recipe (identity when none was needed).
    pub permutation: Vec<usize>,
}

/// Protocol for a state: a chain when all coefficients differ (two matchings
/// suffice), the covering-tree recipe otherwise.
pub fn protocol_of(c: &SchmidtVector) -> Result<QuditProtocol> {
    if c.all_distinct() {
        protocol_with_tree(c, CoveringTree::path(c.dim()), (0..c.dim()).collect())
    } else {
        let (tree, perm) = build_tree_with_permutation(c)?;
        protocol_with_tree(c, tree, perm)
    }
}

/// Protocol over a caller-supplied tree.
pub fn protocol_with_tree(c: &SchmidtVector, tree: CoveringTree, permutation: Vec<usize>) -> Result<QuditProtocol> {
    let v = validate_tree(&tree, c);
    if !v.valid {
        return Err(TreeError::InvalidTree(v.diagnostic.unwrap_or_default()));
    }
    let mut per_edge = Vec::with_capacity(tree.edges.len());
    for &(i, j) in &tree.edges {
        let (ci, cj) = (c.get(i), c.get(j));
        let theta = (ci.min(cj) / ci.max(cj)).atan();
        per_edge.push(EdgeRecord {
            edge: (i, j),
            w: hardy::w_of_theta(theta)?,
            theta,
            p: ci * ci + cj * cj,
            swapped: cj > ci,
        });
    }
    let compressed_groups = greedy_matchings(&tree.edges);
    Ok(QuditProtocol {
        d: c.dim(),
        coeffs: c.clone(),
        root: tree.root,
        layout: MeasurementLayout::for_edges(tree.edges.len()),
        tree,
        per_edge,
        compressed_groups,
        permutation,
    })
}

/// Repeated greedy maximal matchings in edge order; larger groups first.
pub fn greedy_matchings(edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..edges.len()).collect();
    let mut groups = Vec::new();
    while !remaining.is_empty() {
        let mut used: Vec<usize> = Vec::new();
        let mut group = Vec::new();
        let mut rest = Vec::new();
        for &e in &remaining {
            let (i, j) = edges[e];
            if used.contains(&i) || used.contains(&j) {
                rest.push(e);
            } else {
                used.extend([i, j]);
                group.push(e);
            }
        }
        groups.push(group);
        remaining = rest;
    }
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_coeffs() -> SchmidtVector {
        SchmidtVector::normalized(&[1.0 / 6.0, 1.0 / 8.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 8.0, 0.25]).unwrap()
    }

    #[test]
    fn sample_tree() {
        let t = build_tree(&sample_coeffs()).unwrap();
        assert_eq!(t.edges, vec![(0, 1), (0, 4), (0, 5), (1, 2), (1, 3)]);
        assert_eq!(t.root, 0);
        assert!(validate_tree(&t, &sample_coeffs()).valid);
    }

    #[test]
    fn qubit_tree() {
        let th: f64 = 0.3;
        let c = SchmidtVector::new(vec![th.cos(), th.sin()]).unwrap();
        assert_eq!(build_tree(&c).unwrap().edges, vec![(0, 1)]);
        let p = protocol_of(&c).unwrap();
        assert_eq!(p.per_edge.len(), 1);
        assert!((p.per_edge[0].w - hardy::w_of_theta(th).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn reordered_recipe() {
        let c = SchmidtVector::normalized(&[1.0, 1.0, 2.0]).unwrap();
        let (t, perm) = build_tree_with_permutation(&c).unwrap();
        assert_eq!(t.edges, vec![(0, 2), (2, 1)]);
        assert_eq!(perm, vec![0, 2, 1]);
        assert!(validate_tree(&t, &c).valid);
        let c = SchmidtVector::normalized(&[2.0, 1.0, 2.0]).unwrap();
        assert_eq!(build_tree(&c).unwrap().edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn maximally_entangled_rejected() {
        let c = SchmidtVector::normalized(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(build_tree(&c).unwrap_err(), TreeError::MaximallyEntangled);
        assert!(SchmidtVector::normalized(&[1.0, 0.0]).is_err());
        assert!(SchmidtVector::new(vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn validation_diagnostics() {
        let c = sample_coeffs();
        let t = CoveringTree { d: 6, edges: vec![(0, 1), (0, 4), (0, 5), (1, 2)], root: 0 };
        let v = validate_tree(&t, &c);
        assert!(!v.valid);
        assert_eq!(v.diagnostic.as_deref(), Some("uncovered vertex 3"));
        let t = CoveringTree { d: 6, edges: vec![(0, 1), (0, 2), (0, 4), (0, 5), (1, 3)], root: 0 };
        let v = validate_tree(&t, &c);
        assert!(v.diagnostic.unwrap().starts_with("homogeneous edge"));
        let t = CoveringTree { d: 6, edges: vec![(1, 0), (0, 4), (0, 5), (1, 2), (1, 3)], root: 0 };
        assert!(!validate_tree(&t, &c).valid);
    }

    #[test]
    fn sample_protocol_edge_records() {
        let c = sample_coeffs();
        let p = protocol_of(&c).unwrap();
        let raw = [1.0 / 6.0, 1.0 / 8.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 8.0, 0.25];
        let norm2: f64 = raw.iter().map(|x| x * x).sum();
        assert!((norm2 - 17.0 / 96.0).abs() < 1e-15);
        let e = p.per_edge.iter().find(|e| e.edge == (0, 5)).unwrap();
        assert!((e.p - (raw[0] * raw[0] + raw[5] * raw[5]) / norm2).abs() < 1e-12);
        assert!((e.theta - (raw[0] / raw[5]).atan()).abs() < 1e-12);
        assert!(e.swapped);
        assert_eq!(e.qubit_vertices(), (5, 0));
        assert_eq!(p.layout.measurement_count(), 11);
    }

    #[test]
    fn path_tree_compresses_to_two_groups() {
        let c = SchmidtVector::normalized(&[0.9, 0.7, 0.5, 0.3]).unwrap();
        let p = protocol_of(&c).unwrap();
        assert_eq!(p.tree.edges, vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(p.compressed_groups, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn root_paths() {
        let t = build_tree(&sample_coeffs()).unwrap();
        assert_eq!(t.path_to(3), Some(vec![0, 4]));
        assert_eq!(t.path_to(0), Some(vec![]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn recipe_trees_are_valid(
            d in 2usize..=10,
            raw in proptest::collection::vec(1u8..4, 10),
        ) {
            // few distinct levels so equal coefficients are common
            let c: Vec<f64> = raw[..d].iter().map(|&k| k as f64).collect();
            let c = SchmidtVector::normalized(&c).unwrap();
            match build_tree(&c) {
                Ok(t) => {
                    prop_assert!(validate_tree(&t, &c).valid);
                    prop_assert_eq!(t.edges.len(), d - 1);
                    let p = protocol_of(&c).unwrap();
                    let total: usize = p.compressed_groups.iter().map(Vec::len).sum();
                    prop_assert_eq!(total, d - 1);
                    for g in &p.compressed_groups {
                        let mut seen = Vec::new();
                        for &e in g {
                            let (i, j) = p.tree.edges[e];
                            prop_assert!(!seen.contains(&i) && !seen.contains(&j));
                            seen.extend([i, j]);
                        }
                    }
                    for e in &p.per_edge {
                        prop_assert!(e.theta <= std::f64::consts::FRAC_PI_4);
                        let (ci, cj) = (c.get(e.edge.0), c.get(e.edge.1));
                        prop_assert!((e.p - ci * ci - cj * cj).abs() < 1e-12);
                    }
                }
                Err(TreeError::MaximallyEntangled) => prop_assert!(c.all_equal()),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn generic_coefficients_use_two_groups(
            d in 3usize..=10,
            raw in proptest::collection::vec(0.1f64..1.0, 10),
        ) {
            let c = SchmidtVector::normalized(&raw[..d]).unwrap();
            prop_assume!(c.all_distinct());
            let p = protocol_of(&c).unwrap();
            prop_assert_eq!(p.compressed_groups.len(), 2);
        }
    }
}
