//! The tensor term algebra.
//!
//! A term expression is an element of the free commutative monoid over
//! single-edge generators `[w]^i_j` and loop generators `[w]`, subject to the
//! linearity condition that any index occurs at most once as an upper and at
//! most once as a lower endpoint. Contraction concatenates labels along
//! shared endpoints; a chain that closes on itself becomes a loop holding a
//! cyclic word. [`TensorTerm`] is the normal form: every contractible index
//! has been contracted away, so equality is structural.

use crate::index::{Index, IndexSupply, Word};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Which endpoint of an edge an index occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Upper,
    Lower,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarity::Upper => f.write_str("upper"),
            Polarity::Lower => f.write_str("lower"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TermError {
    /// The same index would occur twice with one polarity.
    #[error("index `{index}` occurs twice as an {polarity} endpoint")]
    IndexCollision { index: Index, polarity: Polarity },
    /// A renaming target already occurs in the term.
    #[error("renaming target `{0}` already occurs in the term")]
    TargetInUse(Index),
    /// A renaming source is not a free index of the expected polarity.
    #[error("`{0}` is not a free index of the term")]
    NotFree(Index),
}

/// An edge of a normal-form term: `[label]^upper_lower`, drawn from `lower`
/// to `upper`. The two endpoints are distinct; an equal pair is a loop.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub label: Word,
    pub lower: Index,
    pub upper: Index,
}

impl Edge {
    fn sort_key(&self) -> (Index, Index, Word) {
        (self.lower.clone(), self.upper.clone(), self.label.clone())
    }
}

/// A closed loop labelled with a cyclic word, stored at its lexicographically
/// minimal rotation; two loops are equal iff their minimal rotations are.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Loop(Word);

impl Loop {
    pub fn new(label: Word) -> Self {
        Loop(label.min_rotation())
    }

    pub fn label(&self) -> &Word {
        &self.0
    }
}

/// One factor of an un-normalised term expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Factor {
    /// `[label]^upper_lower`; `upper == lower` is permitted and yields a loop
    /// on normalisation.
    Edge {
        label: Word,
        lower: Index,
        upper: Index,
    },
    /// A free-standing loop `[label]`.
    Loop(Word),
}

/// A product of elementary factors, not yet contracted. The only carrier of
/// bound indices; [`TensorTerm`] values are always normal.
#[derive(Debug, Clone, Default)]
pub struct TermExpression {
    factors: Vec<Factor>,
}

impl TermExpression {
    /// The monoid unit `1` (empty factor multiset).
    pub fn one() -> Self {
        TermExpression::default()
    }

    /// The generator `[w]^upper_lower`. `lower == upper` is allowed.
    pub fn edge(label: Word, lower: Index, upper: Index) -> Self {
        TermExpression {
            factors: vec![Factor::Edge {
                label,
                lower,
                upper,
            }],
        }
    }

    /// The Kronecker delta `δ^upper_lower`, an ε-labelled edge.
    pub fn delta(lower: Index, upper: Index) -> Self {
        Self::edge(Word::epsilon(), lower, upper)
    }

    /// The loop generator `[w]`.
    pub fn loop_(label: Word) -> Self {
        TermExpression {
            factors: vec![Factor::Loop(label)],
        }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    fn endpoint_sets(&self) -> (BTreeSet<Index>, BTreeSet<Index>) {
        let mut uppers = BTreeSet::new();
        let mut lowers = BTreeSet::new();
        for f in &self.factors {
            if let Factor::Edge { lower, upper, .. } = f {
                uppers.insert(upper.clone());
                lowers.insert(lower.clone());
            }
        }
        (uppers, lowers)
    }

    /// Multiset union of factors. Fails if an index would occur twice with
    /// one polarity.
    pub fn product(&self, other: &TermExpression) -> Result<TermExpression, TermError> {
        let (au, al) = self.endpoint_sets();
        let (bu, bl) = other.endpoint_sets();
        if let Some(i) = au.intersection(&bu).next() {
            return Err(TermError::IndexCollision {
                index: i.clone(),
                polarity: Polarity::Upper,
            });
        }
        if let Some(i) = al.intersection(&bl).next() {
            return Err(TermError::IndexCollision {
                index: i.clone(),
                polarity: Polarity::Lower,
            });
        }
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Ok(TermExpression { factors })
    }

    /// Contract every index occurring both as an upper and as a lower
    /// endpoint, concatenating labels along the shared vertex. The result is
    /// the unique normal form.
    pub fn normalize(&self) -> TensorTerm {
        let mut loops: Vec<Loop> = Vec::new();
        // Edges indexed by their endpoints. Each index occurs at most once
        // per polarity, so both maps are injective.
        let mut edges: Vec<Option<(Word, Index, Index)>> = Vec::new();
        let mut by_lower: BTreeMap<Index, usize> = BTreeMap::new();
        let mut by_upper: BTreeMap<Index, usize> = BTreeMap::new();
        for f in &self.factors {
            match f {
                Factor::Loop(w) => loops.push(Loop::new(w.clone())),
                Factor::Edge {
                    label,
                    lower,
                    upper,
                } => {
                    if lower == upper {
                        loops.push(Loop::new(label.clone()));
                        continue;
                    }
                    let id = edges.len();
                    edges.push(Some((label.clone(), lower.clone(), upper.clone())));
                    by_lower.insert(lower.clone(), id);
                    by_upper.insert(upper.clone(), id);
                }
            }
        }

        let mut out_edges: Vec<Edge> = Vec::new();
        // Walk maximal chains starting from edges whose lower endpoint is
        // free (no edge ends there).
        for start in 0..edges.len() {
            let free_start = match &edges[start] {
                Some((_, lower, _)) => !by_upper.contains_key(lower),
                None => false,
            };
            if !free_start {
                continue;
            }
            let (mut label, lower, mut upper) = edges[start].take().unwrap();
            while let Some(&next) = by_lower.get(&upper) {
                let Some((next_label, _, next_upper)) = edges[next].take() else {
                    break;
                };
                label = label.concat(&next_label);
                upper = next_upper;
            }
            out_edges.push(Edge {
                label,
                lower,
                upper,
            });
        }
        // Whatever is left lies on cycles.
        for start in 0..edges.len() {
            let Some((mut label, lower, mut upper)) = edges[start].take() else {
                continue;
            };
            while upper != lower {
                let next = by_lower[&upper];
                let (next_label, _, next_upper) = edges[next].take().expect("cycle edge present");
                label = label.concat(&next_label);
                upper = next_upper;
            }
            loops.push(Loop::new(label));
        }

        TensorTerm::from_parts(out_edges, loops)
    }
}

impl fmt::Display for TermExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        let mut first = true;
        for factor in &self.factors {
            if !first {
                f.write_str(" . ")?;
            }
            first = false;
            match factor {
                Factor::Edge {
                    label,
                    lower,
                    upper,
                } => write_edge(f, label, lower, upper)?,
                Factor::Loop(w) => write!(f, "loop(\"{}\")", w)?,
            }
        }
        Ok(())
    }
}

fn write_edge(f: &mut fmt::Formatter<'_>, label: &Word, lower: &Index, upper: &Index) -> fmt::Result {
    if label.is_empty() {
        write!(f, "d^{}_{}", upper, lower)
    } else {
        write!(f, "\"{}\"^{}_{}", label, upper, lower)
    }
}

/// A tensor term in normal form: a multiset of labelled edges between
/// index-named vertices plus a multiset of cyclic-word loops.
///
/// Each index appears at most once as an upper and at most once as a lower
/// endpoint, and never as both: bound indices have been contracted away.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TensorTerm {
    edges: Vec<Edge>,
    loops: Vec<Loop>,
}

impl TensorTerm {
    /// The unit: empty graph.
    pub fn one() -> Self {
        TensorTerm::default()
    }

    pub(crate) fn from_parts(mut edges: Vec<Edge>, mut loops: Vec<Loop>) -> Self {
        edges.sort_by_key(Edge::sort_key);
        loops.sort();
        TensorTerm { edges, loops }
    }

    /// A single edge `[w]^upper_lower`; a loop if the endpoints coincide.
    pub fn edge(label: Word, lower: Index, upper: Index) -> Self {
        TermExpression::edge(label, lower, upper).normalize()
    }

    /// The Kronecker delta `δ^upper_lower`.
    pub fn delta(lower: Index, upper: Index) -> Self {
        Self::edge(Word::epsilon(), lower, upper)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn loops(&self) -> &[Loop] {
        &self.loops
    }

    pub fn is_one(&self) -> bool {
        self.edges.is_empty() && self.loops.is_empty()
    }

    /// Re-read the normal form as an expression.
    pub fn as_expression(&self) -> TermExpression {
        let mut factors: Vec<Factor> = self
            .edges
            .iter()
            .map(|e| Factor::Edge {
                label: e.label.clone(),
                lower: e.lower.clone(),
                upper: e.upper.clone(),
            })
            .collect();
        factors.extend(self.loops.iter().map(|l| Factor::Loop(l.label().clone())));
        TermExpression { factors }
    }

    /// Multiply two normal terms, contracting shared indices.
    pub fn product(&self, other: &TensorTerm) -> Result<TensorTerm, TermError> {
        Ok(self
            .as_expression()
            .product(&other.as_expression())?
            .normalize())
    }

    /// Free upper and free lower index sets. In normal form every edge
    /// endpoint is free, and loops carry no vertices.
    pub fn free_indices(&self) -> (BTreeSet<Index>, BTreeSet<Index>) {
        let mut uppers = BTreeSet::new();
        let mut lowers = BTreeSet::new();
        for e in &self.edges {
            uppers.insert(e.upper.clone());
            lowers.insert(e.lower.clone());
        }
        (uppers, lowers)
    }

    pub fn all_indices(&self) -> BTreeSet<Index> {
        let (mut u, l) = self.free_indices();
        u.extend(l);
        u
    }

    /// Split into the regular part (the edges) and the loop multiset;
    /// multiplying them back reconstructs the term exactly.
    pub fn regular_part(&self) -> (TensorTerm, Vec<Loop>) {
        (
            TensorTerm::from_parts(self.edges.clone(), Vec::new()),
            self.loops.clone(),
        )
    }

    /// Rename free indices through a partial injective mapping, implemented
    /// as multiplication by the corresponding Kronecker deltas followed by
    /// normalisation.
    pub fn rename_free(&self, mapping: &BTreeMap<Index, Index>) -> Result<TensorTerm, TermError> {
        let (uppers, lowers) = self.free_indices();
        let all = self.all_indices();
        let mut targets: BTreeSet<Index> = BTreeSet::new();
        for (from, to) in mapping {
            if from == to {
                continue;
            }
            if all.contains(to) {
                return Err(TermError::TargetInUse(to.clone()));
            }
            if !targets.insert(to.clone()) {
                return Err(TermError::TargetInUse(to.clone()));
            }
            if !uppers.contains(from) && !lowers.contains(from) {
                return Err(TermError::NotFree(from.clone()));
            }
        }
        let mut expr = self.as_expression();
        for (from, to) in mapping {
            if from == to {
                continue;
            }
            if uppers.contains(from) {
                // δ^to_from · t renames the free upper index.
                expr = expr.product(&TermExpression::delta(from.clone(), to.clone()))?;
            } else {
                // δ^from_to · t renames the free lower index.
                expr = expr.product(&TermExpression::delta(to.clone(), from.clone()))?;
            }
        }
        Ok(expr.normalize())
    }

    /// Normal forms are canonical, so equality is structural.
    pub fn term_equal(&self, other: &TensorTerm) -> bool {
        self == other
    }

    pub fn classify(&self) -> Classification {
        let singular = !self.loops.is_empty();
        let pure = self.edges.iter().all(|e| e.label.is_empty())
            && self.loops.iter().all(|l| l.label().is_empty());
        let lexical = self.loops.is_empty() && self.edges.iter().all(|e| !e.label.is_empty());
        Classification {
            singular,
            pure,
            lexical,
        }
    }

    /// Rename every index (free endpoints) through the map, leaving unmapped
    /// names alone. Unlike [`TensorTerm::rename_free`] this is a raw
    /// syntactic device for derivation-wide renamings; the caller guarantees
    /// injectivity on the affected names.
    pub(crate) fn rename_all(&self, mapping: &BTreeMap<Index, Index>) -> TensorTerm {
        let ren = |i: &Index| mapping.get(i).cloned().unwrap_or_else(|| i.clone());
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                label: e.label.clone(),
                lower: ren(&e.lower),
                upper: ren(&e.upper),
            })
            .collect();
        TensorTerm::from_parts(edges, self.loops.clone())
    }

    /// Remove one edge equal to the given one; `None` if absent.
    pub(crate) fn remove_edge(&self, edge: &Edge) -> Option<TensorTerm> {
        let pos = self.edges.iter().position(|e| e == edge)?;
        let mut edges = self.edges.clone();
        edges.remove(pos);
        Some(TensorTerm::from_parts(edges, self.loops.clone()))
    }

    /// Remove one loop with the given canonical label; `None` if absent.
    pub(crate) fn remove_loop(&self, l: &Loop) -> Option<TensorTerm> {
        let pos = self.loops.iter().position(|x| x == l)?;
        let mut loops = self.loops.clone();
        loops.remove(pos);
        Some(TensorTerm::from_parts(self.edges.clone(), loops))
    }

    pub(crate) fn add_edge(&self, edge: Edge) -> TensorTerm {
        let mut edges = self.edges.clone();
        edges.push(edge);
        TensorTerm::from_parts(edges, self.loops.clone())
    }

    pub(crate) fn with_loops(&self, extra: usize, label: Word) -> TensorTerm {
        let mut loops = self.loops.clone();
        loops.extend((0..extra).map(|_| Loop::new(label.clone())));
        TensorTerm::from_parts(self.edges.clone(), loops)
    }

    /// A supply that avoids every index of this term.
    pub fn supply(&self) -> IndexSupply {
        IndexSupply::avoiding(self.all_indices().iter().collect::<Vec<_>>())
    }
}

/// The three classification axes of a closed term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    /// Loops present.
    pub singular: bool,
    /// No terminal symbols anywhere.
    pub pure: bool,
    /// Every edge label nonempty and no loops: cannot be written as
    /// `δ^i_j · t'`.
    pub lexical: bool,
}

impl fmt::Display for TensorTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return f.write_str("1");
        }
        let mut first = true;
        for e in &self.edges {
            if !first {
                f.write_str(" . ")?;
            }
            first = false;
            write_edge(f, &e.label, &e.lower, &e.upper)?;
        }
        for l in &self.loops {
            if !first {
                f.write_str(" . ")?;
            }
            first = false;
            write!(f, "loop(\"{}\")", l.label())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{idx, word};

    fn e(label: &str, lower: &str, upper: &str) -> TermExpression {
        TermExpression::edge(word(label), idx(lower), idx(upper))
    }

    #[test]
    fn contraction_concatenates_labels() {
        // [u]^j_i · [v]^k_j = [uv]^k_i
        let t = e("u", "i", "j").product(&e("v", "j", "k")).unwrap().normalize();
        assert_eq!(t, TensorTerm::edge(word("u v"), idx("i"), idx("k")));
        assert!(t.loops().is_empty());
    }

    #[test]
    fn self_edge_is_a_loop() {
        // [w]^i_i = [w]
        let t = e("w", "i", "i").normalize();
        assert!(t.edges().is_empty());
        assert_eq!(t.loops(), &[Loop::new(word("w"))]);
    }

    #[test]
    fn cycle_closes_into_rotated_loop() {
        // [a]^j_i · [b]^i_j = [ab] = [ba]
        let t = e("a", "i", "j").product(&e("b", "j", "i")).unwrap().normalize();
        let s = e("b", "i", "j").product(&e("a", "j", "i")).unwrap().normalize();
        assert_eq!(t, s);
        assert_eq!(t.loops(), &[Loop::new(word("a b"))]);
    }

    #[test]
    fn divergent_delta() {
        // δ^i_i is the unlabelled loop.
        let t = TermExpression::delta(idx("i"), idx("i")).normalize();
        assert_eq!(t.loops(), &[Loop::new(Word::epsilon())]);
        let c = t.classify();
        assert!(c.singular && c.pure && !c.lexical);
    }

    #[test]
    fn product_rejects_collisions() {
        let err = e("a", "i", "j").product(&e("b", "k", "j")).unwrap_err();
        assert_eq!(
            err,
            TermError::IndexCollision {
                index: idx("j"),
                polarity: Polarity::Upper
            }
        );
    }

    #[test]
    fn unit_is_neutral() {
        let t = e("a", "i", "j");
        assert_eq!(
            t.product(&TermExpression::one()).unwrap().normalize(),
            t.normalize()
        );
    }

    #[test]
    fn free_indices_of_figure_term() {
        // [xy]^i_s · [ba]^l_j · δ^k_r
        let t = e("x y", "s", "i")
            .product(&e("b a", "j", "l"))
            .unwrap()
            .product(&TermExpression::delta(idx("r"), idx("k")))
            .unwrap()
            .normalize();
        let (fsup, fsub) = t.free_indices();
        let names = |s: &BTreeSet<Index>| {
            s.iter().map(|i| i.name().to_string()).collect::<Vec<_>>()
        };
        assert_eq!(names(&fsup), vec!["i", "k", "l"]);
        assert_eq!(names(&fsub), vec!["j", "r", "s"]);
    }

    #[test]
    fn rename_free_by_delta_multiplication() {
        // δ^{i'}_i · [w]^i_j = [w]^{i'}_j
        let t = TensorTerm::edge(word("w"), idx("j"), idx("i"));
        let mut m = BTreeMap::new();
        m.insert(idx("i"), idx("ii"));
        let r = t.rename_free(&m).unwrap();
        assert_eq!(r, TensorTerm::edge(word("w"), idx("j"), idx("ii")));
        // Round trip back.
        let mut back = BTreeMap::new();
        back.insert(idx("ii"), idx("i"));
        assert_eq!(r.rename_free(&back).unwrap(), t);
    }

    #[test]
    fn rename_free_rejects_used_target() {
        let t = e("w", "j", "i").product(&e("v", "l", "k")).unwrap().normalize();
        let mut m = BTreeMap::new();
        m.insert(idx("i"), idx("k"));
        assert_eq!(t.rename_free(&m), Err(TermError::TargetInUse(idx("k"))));
    }

    #[test]
    fn classify_lexical_and_regular() {
        let mary = TensorTerm::edge(word("Mary"), idx("j"), idx("i"));
        let c = mary.classify();
        assert!(!c.singular && !c.pure && c.lexical);
        let d = TensorTerm::delta(idx("j"), idx("i")).classify();
        assert!(!d.singular && d.pure && !d.lexical);
        let s = TensorTerm::edge(word("w"), idx("j"), idx("i"))
            .with_loops(1, Word::epsilon())
            .classify();
        assert!(s.singular);
    }

    #[test]
    fn regular_part_decomposition() {
        let t = TensorTerm::edge(word("w"), idx("j"), idx("i")).with_loops(3, Word::epsilon());
        let (reg, loops) = t.regular_part();
        assert_eq!(loops.len(), 3);
        let mut back = reg;
        back = back.with_loops(loops.len(), Word::epsilon());
        assert_eq!(back, t);
    }
}
