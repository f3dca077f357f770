//! Tensor types: indexed literals with valencies, the multiplicative
//! connectives, and the `∇`/`Δ` binding operators.
//!
//! A binder `Q^i_j` (written `nabla[i;j]`/`del[i;j]` in the textual syntax)
//! has its body as scope and binds exactly one lower occurrence of `i` and
//! exactly one upper occurrence of `j`, innermost binder first. Duality is
//! not a connective: it is defined by structural recursion and flips
//! tensor/par factors and the two binders.

use crate::index::{Index, IndexSupply};
use crate::term::Polarity;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("index `{0}` has more than one free occurrence")]
    DuplicateFreeIndex(Index),
    #[error("binder for `{index}` binds {count} {polarity} occurrences")]
    BinderArityViolation {
        index: Index,
        polarity: Polarity,
        count: usize,
    },
    #[error("binder pairs `{0}` with itself")]
    BinderSelfPair(Index),
    #[error("atom `{0}` does not match the arity of its literal")]
    AtomValencyMismatch(String),
    #[error("expected {expected} upper and {expected_lower} lower indices, got {got}/{got_lower}")]
    ValencyMismatch {
        expected: usize,
        expected_lower: usize,
        got: usize,
        got_lower: usize,
    },
    #[error("instantiation indices are not pairwise distinct")]
    IndicesNotDistinct,
}

/// An atomic type symbol: a name with a polarity and a valency
/// `(upper slots, lower slots)`. Dual literals have swapped valencies.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LiteralSymbol {
    base: String,
    negated: bool,
    valency: (usize, usize),
}

impl LiteralSymbol {
    /// A positive literal with valency `(uppers, lowers)`.
    pub fn positive(base: impl Into<String>, uppers: usize, lowers: usize) -> Self {
        LiteralSymbol {
            base: base.into(),
            negated: false,
            valency: (uppers, lowers),
        }
    }

    pub fn dual(&self) -> LiteralSymbol {
        LiteralSymbol {
            base: self.base.clone(),
            negated: !self.negated,
            valency: (self.valency.1, self.valency.0),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    /// `(upper slot count, lower slot count)` of this symbol.
    pub fn valency(&self) -> (usize, usize) {
        self.valency
    }
}

impl fmt::Display for LiteralSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "~{}", self.base)
        } else {
            f.write_str(&self.base)
        }
    }
}

/// A tensor type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TensorType {
    Atom {
        lit: LiteralSymbol,
        upper: Vec<Index>,
        lower: Vec<Index>,
    },
    Tensor(Box<TensorType>, Box<TensorType>),
    Par(Box<TensorType>, Box<TensorType>),
    /// `∇^sup_sub body`: binds one lower occurrence of `sup` and one upper
    /// occurrence of `sub` in `body`.
    Nabla {
        sup: Index,
        sub: Index,
        body: Box<TensorType>,
    },
    /// `Δ^sup_sub body`, the dual binder.
    Delta {
        sup: Index,
        sub: Index,
        body: Box<TensorType>,
    },
}

/// Which occurrences a binder name captures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BindRole {
    /// The superscript name: captures lower occurrences.
    LowerOcc,
    /// The subscript name: captures upper occurrences.
    UpperOcc,
}

impl TensorType {
    pub fn atom(lit: LiteralSymbol, upper: Vec<Index>, lower: Vec<Index>) -> Result<Self, TypeError> {
        if upper.len() != lit.valency().0 || lower.len() != lit.valency().1 {
            return Err(TypeError::AtomValencyMismatch(lit.base().to_string()));
        }
        Ok(TensorType::Atom { lit, upper, lower })
    }

    pub fn tensor(a: TensorType, b: TensorType) -> Self {
        TensorType::Tensor(Box::new(a), Box::new(b))
    }

    pub fn par(a: TensorType, b: TensorType) -> Self {
        TensorType::Par(Box::new(a), Box::new(b))
    }

    pub fn nabla(sup: Index, sub: Index, body: TensorType) -> Self {
        TensorType::Nabla {
            sup,
            sub,
            body: Box::new(body),
        }
    }

    pub fn delta(sup: Index, sub: Index, body: TensorType) -> Self {
        TensorType::Delta {
            sup,
            sub,
            body: Box::new(body),
        }
    }

    /// The definable duality: atoms flip polarity and reverse-swap their
    /// index sequences, `⊗`/`⅋` swap with reversed factors, and the binders
    /// exchange with swapped index pair.
    pub fn dual(&self) -> TensorType {
        match self {
            TensorType::Atom { lit, upper, lower } => {
                let mut u: Vec<Index> = lower.clone();
                u.reverse();
                let mut l: Vec<Index> = upper.clone();
                l.reverse();
                TensorType::Atom {
                    lit: lit.dual(),
                    upper: u,
                    lower: l,
                }
            }
            TensorType::Tensor(a, b) => TensorType::par(b.dual(), a.dual()),
            TensorType::Par(a, b) => TensorType::tensor(b.dual(), a.dual()),
            TensorType::Nabla { sup, sub, body } => TensorType::delta(sub.clone(), sup.clone(), body.dual()),
            TensorType::Delta { sup, sub, body } => TensorType::nabla(sub.clone(), sup.clone(), body.dual()),
        }
    }

    /// Free occurrences in left-to-right traversal order, checking binder
    /// arity along the way.
    fn free_occurrences(&self) -> Result<Vec<(Index, Polarity)>, TypeError> {
        match self {
            TensorType::Atom { upper, lower, .. } => {
                let mut out: Vec<(Index, Polarity)> =
                    upper.iter().map(|i| (i.clone(), Polarity::Upper)).collect();
                out.extend(lower.iter().map(|i| (i.clone(), Polarity::Lower)));
                Ok(out)
            }
            TensorType::Tensor(a, b) | TensorType::Par(a, b) => {
                let mut out = a.free_occurrences()?;
                out.extend(b.free_occurrences()?);
                Ok(out)
            }
            TensorType::Nabla { sup, sub, body } | TensorType::Delta { sup, sub, body } => {
                if sup == sub {
                    return Err(TypeError::BinderSelfPair(sup.clone()));
                }
                let mut occs = body.free_occurrences()?;
                let lowers = occs
                    .iter()
                    .filter(|(i, p)| i == sup && *p == Polarity::Lower)
                    .count();
                if lowers != 1 {
                    return Err(TypeError::BinderArityViolation {
                        index: sup.clone(),
                        polarity: Polarity::Lower,
                        count: lowers,
                    });
                }
                let uppers = occs
                    .iter()
                    .filter(|(i, p)| i == sub && *p == Polarity::Upper)
                    .count();
                if uppers != 1 {
                    return Err(TypeError::BinderArityViolation {
                        index: sub.clone(),
                        polarity: Polarity::Upper,
                        count: uppers,
                    });
                }
                occs.retain(|(i, p)| {
                    !((i == sup && *p == Polarity::Lower) || (i == sub && *p == Polarity::Upper))
                });
                Ok(occs)
            }
        }
    }

    /// Check all well-formedness clauses, reporting the first violation.
    pub fn wellformed(&self) -> Result<(), TypeError> {
        let occs = self.free_occurrences()?;
        let mut seen: BTreeSet<&Index> = BTreeSet::new();
        for (i, _) in &occs {
            if !seen.insert(i) {
                return Err(TypeError::DuplicateFreeIndex(i.clone()));
            }
        }
        Ok(())
    }

    /// Ordered free upper and free lower index sequences (traversal order).
    /// Requires a well-formed type.
    pub fn free_index_seqs(&self) -> (Vec<Index>, Vec<Index>) {
        let occs = self.free_occurrences().expect("well-formed type");
        let mut uppers = Vec::new();
        let mut lowers = Vec::new();
        for (i, p) in occs {
            match p {
                Polarity::Upper => uppers.push(i),
                Polarity::Lower => lowers.push(i),
            }
        }
        (uppers, lowers)
    }

    /// Free indices as sets.
    pub fn free_index_sets(&self) -> (BTreeSet<Index>, BTreeSet<Index>) {
        let (u, l) = self.free_index_seqs();
        (u.into_iter().collect(), l.into_iter().collect())
    }

    /// Every index name occurring anywhere in the type, bound or free.
    pub fn all_names(&self) -> BTreeSet<Index> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<Index>) {
        match self {
            TensorType::Atom { upper, lower, .. } => {
                out.extend(upper.iter().cloned());
                out.extend(lower.iter().cloned());
            }
            TensorType::Tensor(a, b) | TensorType::Par(a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
            TensorType::Nabla { sup, sub, body } | TensorType::Delta { sup, sub, body } => {
                out.insert(sup.clone());
                out.insert(sub.clone());
                body.collect_names(out);
            }
        }
    }

    fn transform(
        &self,
        env: &mut Vec<(Index, BindRole, Index)>,
        binder_counter: &mut usize,
        free: &mut dyn FnMut(&Index, Polarity) -> Index,
    ) -> TensorType {
        match self {
            TensorType::Atom { lit, upper, lower } => {
                let look = |env: &Vec<(Index, BindRole, Index)>, i: &Index, role: BindRole| {
                    env.iter()
                        .rev()
                        .find(|(n, r, _)| n == i && *r == role)
                        .map(|(_, _, c)| c.clone())
                };
                let upper = upper
                    .iter()
                    .map(|i| look(env, i, BindRole::UpperOcc).unwrap_or_else(|| free(i, Polarity::Upper)))
                    .collect();
                let lower = lower
                    .iter()
                    .map(|i| look(env, i, BindRole::LowerOcc).unwrap_or_else(|| free(i, Polarity::Lower)))
                    .collect();
                TensorType::Atom {
                    lit: lit.clone(),
                    upper,
                    lower,
                }
            }
            TensorType::Tensor(a, b) => {
                let a = a.transform(env, binder_counter, free);
                let b = b.transform(env, binder_counter, free);
                TensorType::tensor(a, b)
            }
            TensorType::Par(a, b) => {
                let a = a.transform(env, binder_counter, free);
                let b = b.transform(env, binder_counter, free);
                TensorType::par(a, b)
            }
            TensorType::Nabla { sup, sub, body } | TensorType::Delta { sup, sub, body } => {
                let k = *binder_counter;
                *binder_counter += 1;
                let csup = Index::reserved(format!("#n{}", 2 * k));
                let csub = Index::reserved(format!("#n{}", 2 * k + 1));
                env.push((sup.clone(), BindRole::LowerOcc, csup.clone()));
                env.push((sub.clone(), BindRole::UpperOcc, csub.clone()));
                let new_body = body.transform(env, binder_counter, free);
                env.pop();
                env.pop();
                match self {
                    TensorType::Nabla { .. } => TensorType::nabla(csup, csub, new_body),
                    _ => TensorType::delta(csup, csub, new_body),
                }
            }
        }
    }

    /// Canonical form with bound pairs numbered in preorder; free indices
    /// kept. Two well-formed types are α-equivalent iff their canonical
    /// forms are equal.
    fn alpha_canonical(&self) -> TensorType {
        let mut env = Vec::new();
        let mut counter = 0;
        self.transform(&mut env, &mut counter, &mut |i, _| i.clone())
    }

    pub fn alpha_equal(&self, other: &TensorType) -> bool {
        self.alpha_canonical() == other.alpha_canonical()
    }

    /// The type symbol: the α-equivalence class with all free indices erased
    /// to positional slots, upper and lower tracked separately.
    pub fn type_symbol(&self) -> TypeSymbol {
        let mut env = Vec::new();
        let mut counter = 0;
        let mut nu = 0usize;
        let mut nl = 0usize;
        let canon = self.transform(&mut env, &mut counter, &mut |_, p| match p {
            Polarity::Upper => {
                let c = Index::reserved(format!("#u{}", nu));
                nu += 1;
                c
            }
            Polarity::Lower => {
                let c = Index::reserved(format!("#l{}", nl));
                nl += 1;
                c
            }
        });
        TypeSymbol {
            canon,
            valency: (nu, nl),
        }
    }

    /// Rename free occurrences through `mapping`, leaving bound occurrences
    /// alone and α-renaming binders whose names would capture a target.
    pub fn rename_free(&self, mapping: &BTreeMap<Index, Index>, supply: &mut IndexSupply) -> TensorType {
        let targets: BTreeSet<Index> = mapping.values().cloned().collect();
        self.rename_free_inner(mapping, &targets, &mut Vec::new(), supply)
    }

    fn rename_free_inner(
        &self,
        mapping: &BTreeMap<Index, Index>,
        targets: &BTreeSet<Index>,
        env: &mut Vec<(Index, BindRole, Index)>,
        supply: &mut IndexSupply,
    ) -> TensorType {
        match self {
            TensorType::Atom { lit, upper, lower } => {
                let look = |env: &Vec<(Index, BindRole, Index)>, i: &Index, role: BindRole| {
                    env.iter()
                        .rev()
                        .find(|(n, r, _)| n == i && *r == role)
                        .map(|(_, _, c)| c.clone())
                };
                let ren = |env: &Vec<(Index, BindRole, Index)>, i: &Index, role: BindRole| {
                    look(env, i, role)
                        .unwrap_or_else(|| mapping.get(i).cloned().unwrap_or_else(|| i.clone()))
                };
                TensorType::Atom {
                    lit: lit.clone(),
                    upper: upper.iter().map(|i| ren(env, i, BindRole::UpperOcc)).collect(),
                    lower: lower.iter().map(|i| ren(env, i, BindRole::LowerOcc)).collect(),
                }
            }
            TensorType::Tensor(a, b) => TensorType::tensor(
                a.rename_free_inner(mapping, targets, env, supply),
                b.rename_free_inner(mapping, targets, env, supply),
            ),
            TensorType::Par(a, b) => TensorType::par(
                a.rename_free_inner(mapping, targets, env, supply),
                b.rename_free_inner(mapping, targets, env, supply),
            ),
            TensorType::Nabla { sup, sub, body } | TensorType::Delta { sup, sub, body } => {
                let new_sup = if targets.contains(sup) { supply.fresh() } else { sup.clone() };
                let new_sub = if targets.contains(sub) { supply.fresh() } else { sub.clone() };
                env.push((sup.clone(), BindRole::LowerOcc, new_sup.clone()));
                env.push((sub.clone(), BindRole::UpperOcc, new_sub.clone()));
                let new_body = body.rename_free_inner(mapping, targets, env, supply);
                env.pop();
                env.pop();
                match self {
                    TensorType::Nabla { .. } => TensorType::nabla(new_sup, new_sub, new_body),
                    _ => TensorType::delta(new_sup, new_sub, new_body),
                }
            }
        }
    }

    /// For a binder type, return the body with the two bound occurrences
    /// renamed to the given fresh names. `None` when the root is not a
    /// binder.
    pub fn unbind(&self, new_sup: &Index, new_sub: &Index) -> Option<TensorType> {
        let (sup, sub, body) = match self {
            TensorType::Nabla { sup, sub, body } | TensorType::Delta { sup, sub, body } => (sup, sub, body),
            _ => return None,
        };
        let mut env = vec![
            (sup.clone(), BindRole::LowerOcc, new_sup.clone()),
            (sub.clone(), BindRole::UpperOcc, new_sub.clone()),
        ];
        // Rebind inner binders to their own names so only the outer pair moves.
        let mut counter = 0usize;
        let rebound = body.transform_keep_inner(&mut env, &mut counter);
        Some(rebound)
    }

    /// Like `transform` but keeps inner binder names, only substituting
    /// through the provided outer environment.
    fn transform_keep_inner(&self, env: &mut Vec<(Index, BindRole, Index)>, _c: &mut usize) -> TensorType {
        match self {
            TensorType::Atom { lit, upper, lower } => {
                let look = |env: &Vec<(Index, BindRole, Index)>, i: &Index, role: BindRole| {
                    env.iter()
                        .rev()
                        .find(|(n, r, _)| n == i && *r == role)
                        .map(|(_, _, c)| c.clone())
                        .unwrap_or_else(|| i.clone())
                };
                TensorType::Atom {
                    lit: lit.clone(),
                    upper: upper.iter().map(|i| look(env, i, BindRole::UpperOcc)).collect(),
                    lower: lower.iter().map(|i| look(env, i, BindRole::LowerOcc)).collect(),
                }
            }
            TensorType::Tensor(a, b) => TensorType::tensor(
                a.transform_keep_inner(env, _c),
                b.transform_keep_inner(env, _c),
            ),
            TensorType::Par(a, b) => TensorType::par(
                a.transform_keep_inner(env, _c),
                b.transform_keep_inner(env, _c),
            ),
            TensorType::Nabla { sup, sub, body } | TensorType::Delta { sup, sub, body } => {
                env.push((sup.clone(), BindRole::LowerOcc, sup.clone()));
                env.push((sub.clone(), BindRole::UpperOcc, sub.clone()));
                let new_body = body.transform_keep_inner(env, _c);
                env.pop();
                env.pop();
                match self {
                    TensorType::Nabla { .. } => TensorType::nabla(sup.clone(), sub.clone(), new_body),
                    _ => TensorType::delta(sup.clone(), sub.clone(), new_body),
                }
            }
        }
    }
}

/// The α-equivalence class of a type with free indices erased: a canonical
/// de-Bruijn-style skeleton plus the valency `(free uppers, free lowers)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeSymbol {
    canon: TensorType,
    valency: (usize, usize),
}

impl TypeSymbol {
    pub fn valency(&self) -> (usize, usize) {
        self.valency
    }

    /// The symbol of the dual type.
    pub fn dual(&self) -> TypeSymbol {
        self.canon.dual().type_symbol()
    }

    /// Recover a type from the symbol by giving the free upper and lower
    /// index sequences; bound indices are drawn fresh from the supply.
    pub fn instantiate(
        &self,
        upper: &[Index],
        lower: &[Index],
        supply: &mut IndexSupply,
    ) -> Result<TensorType, TypeError> {
        if upper.len() != self.valency.0 || lower.len() != self.valency.1 {
            return Err(TypeError::ValencyMismatch {
                expected: self.valency.0,
                expected_lower: self.valency.1,
                got: upper.len(),
                got_lower: lower.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for i in upper.iter().chain(lower.iter()) {
            if !seen.insert(i.clone()) {
                return Err(TypeError::IndicesNotDistinct);
            }
        }
        let mut binder_map: BTreeMap<Index, Index> = BTreeMap::new();
        Ok(self.subst_slots(&self.canon, upper, lower, &mut binder_map, supply))
    }

    fn subst_slots(
        &self,
        ty: &TensorType,
        upper: &[Index],
        lower: &[Index],
        binder_map: &mut BTreeMap<Index, Index>,
        supply: &mut IndexSupply,
    ) -> TensorType {
        let slot = |i: &Index, binder_map: &BTreeMap<Index, Index>| -> Index {
            let name = i.name();
            if let Some(rest) = name.strip_prefix("#u") {
                if let Ok(k) = rest.parse::<usize>() {
                    return upper[k].clone();
                }
            }
            if let Some(rest) = name.strip_prefix("#l") {
                if let Ok(k) = rest.parse::<usize>() {
                    return lower[k].clone();
                }
            }
            binder_map.get(i).cloned().unwrap_or_else(|| i.clone())
        };
        match ty {
            TensorType::Atom { lit, upper: u, lower: l } => TensorType::Atom {
                lit: lit.clone(),
                upper: u.iter().map(|i| slot(i, binder_map)).collect(),
                lower: l.iter().map(|i| slot(i, binder_map)).collect(),
            },
            TensorType::Tensor(a, b) => TensorType::tensor(
                self.subst_slots(a, upper, lower, binder_map, supply),
                self.subst_slots(b, upper, lower, binder_map, supply),
            ),
            TensorType::Par(a, b) => TensorType::par(
                self.subst_slots(a, upper, lower, binder_map, supply),
                self.subst_slots(b, upper, lower, binder_map, supply),
            ),
            TensorType::Nabla { sup, sub, body } | TensorType::Delta { sup, sub, body } => {
                let fs = supply.fresh();
                let fb = supply.fresh();
                binder_map.insert(sup.clone(), fs.clone());
                binder_map.insert(sub.clone(), fb.clone());
                let new_body = self.subst_slots(body, upper, lower, binder_map, supply);
                binder_map.remove(sup);
                binder_map.remove(sub);
                match ty {
                    TensorType::Nabla { .. } => TensorType::nabla(fs, fb, new_body),
                    _ => TensorType::delta(fs, fb, new_body),
                }
            }
        }
    }
}

/// `A ⊸ B` is the abbreviation `B ⅋ ā^I_J` where `I`, `J` are the free
/// sequences of `A`: not a node kind, expanded at construction time. The
/// dual symbol keeps `A`'s own index sequences.
pub fn implication(a: &TensorType, b: TensorType) -> Result<TensorType, TypeError> {
    let (u, l) = a.free_index_seqs();
    let dual_sym = a.type_symbol().dual();
    let mut supply = IndexSupply::avoiding(a.all_names().union(&b.all_names()).collect::<Vec<_>>());
    let abar = dual_sym.instantiate(&u, &l, &mut supply)?;
    Ok(TensorType::par(b, abar))
}

fn prec(ty: &TensorType) -> u8 {
    match ty {
        TensorType::Atom { .. } => 60,
        TensorType::Nabla { .. } | TensorType::Delta { .. } => 50,
        TensorType::Tensor(..) => 30,
        TensorType::Par(..) => 20,
    }
}

fn fmt_prec(ty: &TensorType, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(ty);
    if p < min {
        f.write_str("(")?;
    }
    match ty {
        TensorType::Atom { lit, upper, lower } => {
            let (name, us, ls) = if lit.is_negated() {
                // `~p{X;Y}` parses as the dual of `p{X;Y}`; invert to print.
                let mut us: Vec<&Index> = lower.iter().collect();
                us.reverse();
                let mut ls: Vec<&Index> = upper.iter().collect();
                ls.reverse();
                (format!("~{}", lit.base()), us, ls)
            } else {
                (
                    lit.base().to_string(),
                    upper.iter().collect(),
                    lower.iter().collect(),
                )
            };
            f.write_str(&name)?;
            f.write_str("{")?;
            for (k, i) in us.iter().enumerate() {
                if k > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", i)?;
            }
            f.write_str(";")?;
            for (k, i) in ls.iter().enumerate() {
                if k > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", i)?;
            }
            f.write_str("}")?;
        }
        TensorType::Tensor(a, b) => {
            fmt_prec(a, 30, f)?;
            f.write_str(" * ")?;
            fmt_prec(b, 31, f)?;
        }
        TensorType::Par(a, b) => {
            fmt_prec(a, 20, f)?;
            f.write_str(" | ")?;
            fmt_prec(b, 21, f)?;
        }
        TensorType::Nabla { sup, sub, body } => {
            write!(f, "nabla[{};{}] ", sup, sub)?;
            fmt_prec(body, 50, f)?;
        }
        TensorType::Delta { sup, sub, body } => {
            write!(f, "del[{};{}] ", sup, sub)?;
            fmt_prec(body, 50, f)?;
        }
    }
    if p < min {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::idx;

    fn lit11(name: &str) -> LiteralSymbol {
        LiteralSymbol::positive(name, 1, 1)
    }

    fn atom11(name: &str, up: &str, low: &str) -> TensorType {
        TensorType::atom(lit11(name), vec![idx(up)], vec![idx(low)]).unwrap()
    }

    /// `(b/a)^i_j = ∇^α_β (b^i_α ⅋ ā^β_j)`.
    fn over(b: &str, a: &str, i: &str, j: &str) -> TensorType {
        let body = TensorType::par(
            atom11(b, i, "al"),
            atom11(a, j, "be").dual(),
        );
        TensorType::nabla(idx("al"), idx("be"), body)
    }

    #[test]
    fn dual_of_atom_reverses_and_swaps() {
        let p = TensorType::atom(
            LiteralSymbol::positive("p", 2, 1),
            vec![idx("i"), idx("j")],
            vec![idx("k")],
        )
        .unwrap();
        let d = p.dual();
        match &d {
            TensorType::Atom { lit, upper, lower } => {
                assert!(lit.is_negated());
                assert_eq!(lit.valency(), (1, 2));
                assert_eq!(upper, &vec![idx("k")]);
                assert_eq!(lower, &vec![idx("j"), idx("i")]);
            }
            _ => panic!("atom expected"),
        }
        assert_eq!(d.dual(), p);
    }

    #[test]
    fn dual_swaps_binders() {
        let t = over("b", "a", "i", "j");
        let d = t.dual();
        assert!(matches!(d, TensorType::Delta { .. }));
        assert_eq!(d.dual().alpha_canonical(), t.alpha_canonical());
    }

    #[test]
    fn wellformed_examples() {
        assert_eq!(over("b", "a", "i", "j").wellformed(), Ok(()));
        // a^i_j ⊗ b^i_k duplicates the free i.
        let bad = TensorType::tensor(atom11("a", "i", "j"), atom11("b", "i", "k"));
        assert_eq!(bad.wellformed(), Err(TypeError::DuplicateFreeIndex(idx("i"))));
        // A binder that binds nothing.
        let bad2 = TensorType::nabla(idx("al"), idx("be"), atom11("b", "i", "j"));
        assert_eq!(
            bad2.wellformed(),
            Err(TypeError::BinderArityViolation {
                index: idx("al"),
                polarity: Polarity::Lower,
                count: 0
            })
        );
        let bad3 = TensorType::nabla(idx("al"), idx("al"), atom11("b", "i", "al"));
        assert_eq!(bad3.wellformed(), Err(TypeError::BinderSelfPair(idx("al"))));
    }

    #[test]
    fn free_seqs_of_encoded_implication() {
        let t = over("b", "a", "i", "j");
        let (u, l) = t.free_index_seqs();
        assert_eq!(u, vec![idx("i")]);
        assert_eq!(l, vec![idx("j")]);
    }

    #[test]
    fn alpha_equality_ignores_bound_names() {
        let t1 = over("b", "a", "i", "j");
        let body = TensorType::par(atom11("b", "i", "u"), atom11("a", "j", "t").dual());
        let t2 = TensorType::nabla(idx("u"), idx("t"), body);
        assert!(t1.alpha_equal(&t2));
        let t3 = over("b", "a", "k", "j");
        assert!(!t1.alpha_equal(&t3));
    }

    #[test]
    fn type_symbol_forgets_free_names() {
        let s1 = over("b", "a", "i", "j").type_symbol();
        let s2 = over("b", "a", "m", "j").type_symbol();
        assert_eq!(s1, s2);
        assert_eq!(s1.valency(), (1, 1));
        let mut supply = IndexSupply::new();
        let t = s1.instantiate(&[idx("m")], &[idx("j")], &mut supply).unwrap();
        assert!(t.alpha_equal(&over("b", "a", "m", "j")));
        assert!(t.wellformed().is_ok());
        assert!(s1
            .instantiate(&[idx("m"), idx("x")], &[idx("j")], &mut supply)
            .is_err());
    }

    #[test]
    fn dual_reverses_free_seqs() {
        let p = TensorType::tensor(
            TensorType::atom(
                LiteralSymbol::positive("p", 2, 0),
                vec![idx("i"), idx("j")],
                vec![],
            )
            .unwrap(),
            atom11("q", "k", "l"),
        );
        let (u, l) = p.free_index_seqs();
        let (du, dl) = p.dual().free_index_seqs();
        let rev = |mut v: Vec<Index>| {
            v.reverse();
            v
        };
        assert_eq!(du, rev(l));
        assert_eq!(dl, rev(u));
    }

    #[test]
    fn unbind_exposes_the_bound_pair() {
        let t = over("b", "a", "i", "j");
        let body = t.unbind(&idx("x"), &idx("y")).unwrap();
        let expect = TensorType::par(atom11("b", "i", "x"), atom11("a", "j", "y").dual());
        assert_eq!(body, expect);
        assert!(atom11("a", "i", "j").unbind(&idx("x"), &idx("y")).is_none());
    }

    #[test]
    fn implication_keeps_argument_sequences() {
        // np^t_u ⊸ s^k_l = s^k_l ⅋ np̄^t_u
        let np = atom11("np", "t", "u");
        let s = atom11("s", "k", "l");
        let imp = implication(&np, s).unwrap();
        match &imp {
            TensorType::Par(_, abar) => match abar.as_ref() {
                TensorType::Atom { lit, upper, lower } => {
                    assert!(lit.is_negated());
                    assert_eq!(upper, &vec![idx("t")]);
                    assert_eq!(lower, &vec![idx("u")]);
                }
                _ => panic!("atom expected"),
            },
            _ => panic!("par expected"),
        }
        assert!(imp.wellformed().is_ok());
    }
}
