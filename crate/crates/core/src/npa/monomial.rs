use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scenario::ScenarioShape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

/// Effect symbol `A(outcome, setting)` or `B(outcome, setting)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symbol {
    pub party: Party,
    pub outcome: usize,
    pub setting: usize,
}

impl Symbol {
    pub fn a(outcome: usize, setting: usize) -> Self {
        Self { party: Party::A, outcome, setting }
    }

    pub fn b(outcome: usize, setting: usize) -> Self {
        Self { party: Party::B, outcome, setting }
    }

    fn key(&self) -> (u8, usize, usize) {
        (matches!(self.party, Party::B) as u8, self.setting, self.outcome)
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = if self.party == Party::A { 'A' } else { 'B' };
        write!(f, "{p}({},{})", self.outcome, self.setting)
    }
}

/// Canonical word: Alice's symbols followed by Bob's, or the zero operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Monomial {
    Zero,
    Word { alice: Vec<Symbol>, bob: Vec<Symbol> },
}

impl Monomial {
    pub fn identity() -> Self {
        Monomial::Word { alice: Vec::new(), bob: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Monomial::Zero)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Monomial::Word { alice, bob } if alice.is_empty() && bob.is_empty())
    }

    pub fn len(&self) -> usize {
        match self {
            Monomial::Zero => 0,
            Monomial::Word { alice, bob } => alice.len() + bob.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        match self {
            Monomial::Zero => Vec::new(),
            Monomial::Word { alice, bob } => alice.iter().chain(bob).copied().collect(),
        }
    }

    /// Adjoint: both party words reversed.
    pub fn adjoint(&self) -> Self {
        match self {
            Monomial::Zero => Monomial::Zero,
            Monomial::Word { alice, bob } => Monomial::Word {
                alice: alice.iter().rev().copied().collect(),
                bob: bob.iter().rev().copied().collect(),
            },
        }
    }

    /// Product `self · other`, canonicalized.
    pub fn mul(&self, other: &Monomial) -> Monomial {
        match (self, other) {
            (Monomial::Zero, _) | (_, Monomial::Zero) => Monomial::Zero,
            (Monomial::Word { alice: a1, bob: b1 }, Monomial::Word { alice: a2, bob: b2 }) => {
                let word: Vec<Symbol> = a1.iter().chain(a2).chain(b1).chain(b2).copied().collect();
                canonical_form(&word)
            }
        }
    }

    /// Representative of `{m, m*}`; moments of the real formulation are shared by the pair.
    pub fn real_key(&self) -> Monomial {
        let adj = self.adjoint();
        if adj < *self {
            adj
        } else {
            self.clone()
        }
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: zero first, then by length, then symbol by symbol.
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Monomial::Zero, Monomial::Zero) => Ordering::Equal,
            (Monomial::Zero, _) => Ordering::Less,
            (_, Monomial::Zero) => Ordering::Greater,
            _ => self.len().cmp(&other.len()).then_with(|| self.symbols().cmp(&other.symbols())),
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Monomial::Zero => write!(f, "0"),
            m if m.is_identity() => write!(f, "1"),
            m => {
                let parts: Vec<String> = m.symbols().iter().map(Symbol::to_string).collect();
                write!(f, "{}", parts.join("·"))
            }
        }
    }
}

/// Reduces one party's word with idempotence and orthogonality.
fn reduce_party(word: impl Iterator<Item = Symbol>) -> Option<Vec<Symbol>> {
    let mut out: Vec<Symbol> = Vec::new();
    for s in word {
        match out.last() {
            Some(&t) if t == s => {}
            Some(&t) if t.setting == s.setting => return None,
            _ => out.push(s),
        }
    }
    Some(out)
}

/// Sorts the parties apart (they commute) and reduces each party's word.
pub fn canonical_form(word: &[Symbol]) -> Monomial {
    let alice = reduce_party(word.iter().copied().filter(|s| s.party == Party::A));
    let bob = reduce_party(word.iter().copied().filter(|s| s.party == Party::B));
    match (alice, bob) {
        (Some(alice), Some(bob)) => Monomial::Word { alice, bob },
        _ => Monomial::Zero,
    }
}

/// Alphabet of non-last-outcome symbols for one party.
pub(crate) fn alphabet(party: Party, settings: usize, outcomes: usize) -> Vec<Symbol> {
    let mut v = Vec::new();
    for setting in 0..settings {
        for outcome in 0..outcomes.saturating_sub(1) {
            v.push(Symbol { party, outcome, setting });
        }
    }
    v
}

/// Canonical single-party words of length exactly `len`.
fn party_words(alphabet: &[Symbol], len: usize) -> Vec<Vec<Symbol>> {
    let mut words = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for w in &words {
            for &s in alphabet {
                if w.last().is_some_and(|t: &Symbol| t.setting == s.setting) {
                    continue;
                }
                let mut v = w.clone();
                v.push(s);
                next.push(v);
            }
        }
        words = next;
    }
    words
}

/// Nonzero canonical monomials of length at most `level`, identity first, in graded
/// lexicographic order.
pub fn build_basis(shape: &ScenarioShape, level: usize) -> Vec<Monomial> {
    let sa = alphabet(Party::A, shape.nx, shape.na);
    let sb = alphabet(Party::B, shape.ny, shape.nb);
    let mut set = BTreeSet::new();
    for total in 0..=level {
        for la in 0..=total {
            for wa in party_words(&sa, la) {
                for wb in party_words(&sb, total - la) {
                    set.insert(Monomial::Word { alice: wa.clone(), bob: wb });
                }
            }
        }
    }
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> ScenarioShape {
        ScenarioShape::single_source(2, 2, 2, 2)
    }

    #[test]
    fn idempotence() {
        let m = canonical_form(&[Symbol::a(0, 0), Symbol::a(0, 0)]);
        assert_eq!(m, Monomial::Word { alice: vec![Symbol::a(0, 0)], bob: vec![] });
    }

    #[test]
    fn orthogonality() {
        assert!(canonical_form(&[Symbol::a(0, 1), Symbol::a(1, 1)]).is_zero());
    }

    #[test]
    fn commutation() {
        let m = canonical_form(&[Symbol::b(0, 0), Symbol::a(0, 1)]);
        assert_eq!(m, Monomial::Word { alice: vec![Symbol::a(0, 1)], bob: vec![Symbol::b(0, 0)] });
    }

    #[test]
    fn collapse_cascades() {
        let w = [Symbol::a(0, 0), Symbol::a(0, 1), Symbol::a(0, 1), Symbol::a(0, 0)];
        let m = canonical_form(&w);
        assert_eq!(m.len(), 3);
        let w = [Symbol::a(0, 0), Symbol::b(0, 1), Symbol::a(0, 0)];
        assert_eq!(canonical_form(&w).len(), 2);
    }

    #[test]
    fn level_one_basis() {
        let b = build_basis(&binary(), 1);
        let expected = vec![
            Monomial::identity(),
            Monomial::Word { alice: vec![Symbol::a(0, 0)], bob: vec![] },
            Monomial::Word { alice: vec![Symbol::a(0, 1)], bob: vec![] },
            Monomial::Word { alice: vec![], bob: vec![Symbol::b(0, 0)] },
            Monomial::Word { alice: vec![], bob: vec![Symbol::b(0, 1)] },
        ];
        assert_eq!(b, expected);
    }

    #[test]
    fn level_two_basis_size() {
        assert_eq!(build_basis(&binary(), 2).len(), 13);
    }

    #[test]
    fn ternary_outcomes_level_one() {
        let sh = ScenarioShape::single_source(1, 1, 3, 3);
        let b = build_basis(&sh, 1);
        let alice: Vec<_> = b.iter().filter(|m| matches!(m, Monomial::Word { bob, .. } if bob.is_empty())).collect();
        assert_eq!(alice.len(), 3);
        assert!(alice[0].is_identity());
    }

    #[test]
    fn basis_is_canonical_and_unique() {
        let b = build_basis(&binary(), 3);
        for m in &b {
            assert_eq!(&canonical_form(&m.symbols()), m);
        }
        let set: BTreeSet<_> = b.iter().cloned().collect();
        assert_eq!(set.len(), b.len());
    }

    #[test]
    fn real_key_identifies_adjoints() {
        let m = canonical_form(&[Symbol::a(0, 1), Symbol::a(0, 0)]);
        assert_eq!(m.real_key(), m.adjoint().real_key());
        assert_eq!(m.mul(&m.adjoint()).len(), 3);
    }
}
