use super::{Result, SelftestError};
use crate::qmath::jordan_blocks;
use crate::scenario::Realization;
use crate::tree::QuditProtocol;
use crate::{CMatrix, ProjectiveMeasurement};

/// Local unitaries exchanging the two sides of every Jordan block of an edge.
#[derive(Clone, Debug)]
pub struct FlipPair {
    pub edge: usize,
    pub alice: CMatrix,
    pub bob: CMatrix,
}

/// Flip for one party: Jordan blocks of `(P_{0_i} restricted to the edge support,
/// outcome-0 effect of the edge's second Hardy setting)`.
fn party_flip(
    ms: &[ProjectiveMeasurement],
    proto: &QuditProtocol,
    edge: usize,
    party: &'static str,
    sign: f64,
) -> Result<CMatrix> {
    let (i, j) = proto.tree.edges[edge];
    let schmidt = &ms[proto.layout.schmidt];
    let support = schmidt.effect(i) + schmidt.effect(j);
    let p = (&(&support * schmidt.effect(i)) * &support).hermitian_part();
    let q = ms[proto.layout.edges[edge][1]].effect(0);
    let jd = jordan_blocks(&p, q)?;
    let dim = p.rows();
    // drop from the identity every block that meets the edge support and flip the 2×2 ones
    let mut u = CMatrix::identity(dim);
    let mut flipped = 0;
    for b in jd.two_blocks() {
        let v = jd.block_vectors(b);
        let weight: f64 = v.iter().map(|x| support.expectation(x).re).sum();
        if weight < 1e-9 {
            continue;
        }
        let (e1, e2) = (&v[0], &v[1]);
        let block = &CMatrix::outer(e1, e1) + &CMatrix::outer(e2, e2);
        let swap = (&CMatrix::outer(e1, e2) + &CMatrix::outer(e2, e1)).scale(sign);
        u = &(&u - &block) + &swap;
        flipped += 1;
    }
    if flipped == 0 {
        let sizes: Vec<usize> = jd.blocks.iter().map(|b| b.size).collect();
        return Err(SelftestError::DegenerateBlocks {
            edge,
            party,
            diagnostics: format!("no 2x2 block on the edge support; block sizes {sizes:?}"),
        });
    }
    Ok(u)
}

/// Per-edge flip unitaries `(U_A^i, U_B^i)`.
pub fn flip_unitaries(r: &Realization, proto: &QuditProtocol) -> Result<Vec<FlipPair>> {
    if r.alice.len() < proto.layout.measurement_count() || r.bob.len() < proto.layout.measurement_count() {
        return Err(SelftestError::MissingMeasurements {
            expected: proto.layout.measurement_count(),
            found: r.alice.len().min(r.bob.len()),
        });
    }
    // ⟨0|Q|1⟩ has opposite signs on the two sides of the Hardy geometry, so Bob's
    // block basis carries an extra −1 on its second vector
    (0..proto.tree.edges.len())
        .map(|e| {
            Ok(FlipPair {
                edge: e,
                alice: party_flip(&r.alice, proto, e, "alice", 1.0)?,
                bob: party_flip(&r.bob, proto, e, "bob", -1.0)?,
            })
        })
        .collect()
}

/// `X^k = U^{e_1} ⋯ U^{e_t}` along the root-to-`k` path.
pub fn compose_along_path(flips: &[CMatrix], path: &[usize]) -> CMatrix {
    let dim = flips.first().map_or(1, CMatrix::rows);
    path.iter()
        .fold(CMatrix::identity(dim), |acc, &e| &acc * &flips[e])
}
