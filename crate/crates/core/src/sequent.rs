//! The sequent calculus for tensor typing judgements.
//!
//! A judgement `t ⊢ Γ` pairs a normal tensor term with a context of tensor
//! types such that the free upper indices of the term are exactly the free
//! lower indices of the context and vice versa. Contexts are kept as
//! sequences for printing, but all comparisons are up to multiset order and
//! renaming.
//!
//! Rules are applied forwards by [`Derivation::by_rule`]; [`prove`] runs a
//! bounded cut-free backward search. The calculus never introduces terminal
//! symbols: only nonlogical (lexicon) leaves carry letters.

use crate::index::{Index, IndexSupply, Word};
use crate::term::{Edge, Loop, TensorTerm, TermError};
use crate::types::{LiteralSymbol, TensorType, TypeError};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgementError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("context types share the free index `{0}`")]
    SharedFreeIndex(Index),
    #[error("term and context free indices do not match at `{0}`")]
    Unbalanced(Index),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule inapplicable: {0}")]
    Inapplicable(String),
    #[error("cut interface mismatch")]
    InterfaceMismatch,
    #[error("the principal type is not a nabla type")]
    NotNablaType,
    #[error(transparent)]
    Judgement(#[from] JudgementError),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// `t ⊢ Γ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypingJudgement {
    term: TensorTerm,
    context: Vec<TensorType>,
}

impl TypingJudgement {
    pub fn new(term: TensorTerm, context: Vec<TensorType>) -> Result<Self, JudgementError> {
        let mut ctx_upper: BTreeSet<Index> = BTreeSet::new();
        let mut ctx_lower: BTreeSet<Index> = BTreeSet::new();
        let mut seen: BTreeSet<Index> = BTreeSet::new();
        for ty in &context {
            ty.wellformed()?;
            let (u, l) = ty.free_index_sets();
            for i in u.iter().chain(l.iter()) {
                if !seen.insert(i.clone()) {
                    return Err(JudgementError::SharedFreeIndex(i.clone()));
                }
            }
            ctx_upper.extend(u);
            ctx_lower.extend(l);
        }
        let (term_upper, term_lower) = term.free_indices();
        if let Some(i) = term_upper.symmetric_difference(&ctx_lower).next() {
            return Err(JudgementError::Unbalanced(i.clone()));
        }
        if let Some(i) = term_lower.symmetric_difference(&ctx_upper).next() {
            return Err(JudgementError::Unbalanced(i.clone()));
        }
        Ok(TypingJudgement { term, context })
    }

    pub fn term(&self) -> &TensorTerm {
        &self.term
    }

    pub fn context(&self) -> &[TensorType] {
        &self.context
    }

    /// Every index name used anywhere in this judgement.
    pub fn all_names(&self) -> BTreeSet<Index> {
        let mut names = self.term.all_indices();
        for ty in &self.context {
            names.extend(ty.all_names());
        }
        names
    }

    pub fn supply(&self) -> IndexSupply {
        IndexSupply::avoiding(self.all_names().iter().collect::<Vec<_>>())
    }

    /// Canonical form: bound indices and free indices renamed to reserved
    /// names in traversal order, context order kept. Two judgements with
    /// equal canonical forms differ only by renaming.
    fn canonical(&self) -> (TypingJudgement, BTreeMap<Index, Index>) {
        let mut free_map: BTreeMap<Index, Index> = BTreeMap::new();
        let mut next = 0usize;
        let mut ctx = Vec::with_capacity(self.context.len());
        for ty in &self.context {
            ctx.push(canonical_type_with(ty, &mut free_map, &mut next));
        }
        let term = self.term.rename_all(&free_map);
        (TypingJudgement { term, context: ctx }, free_map)
    }

    /// α-equality: bound-index renaming in types plus simultaneous free
    /// renaming on both sides of the turnstile; contexts as multisets.
    pub fn alpha_equal(&self, other: &TypingJudgement) -> bool {
        if self.context.len() != other.context.len() {
            return false;
        }
        let (c1, _) = self.canonical();
        let (c2, _) = other.canonical();
        if c1 == c2 {
            return true;
        }
        // Order-insensitive fallback: try permutations compatible with the
        // type symbols. Contexts are short.
        let sym1: Vec<_> = self.context.iter().map(|t| t.type_symbol()).collect();
        let sym2: Vec<_> = other.context.iter().map(|t| t.type_symbol()).collect();
        let n = self.context.len();
        fn go(
            other: &TypingJudgement,
            sym1: &[crate::types::TypeSymbol],
            sym2: &[crate::types::TypeSymbol],
            perm: &mut Vec<usize>,
            used: &mut Vec<bool>,
            c1: &TypingJudgement,
        ) -> bool {
            let n = sym1.len();
            if perm.len() == n {
                let permuted = TypingJudgement {
                    term: other.term.clone(),
                    context: perm.iter().map(|&k| other.context[k].clone()).collect(),
                };
                let (c2, _) = permuted.canonical();
                return c1 == &c2;
            }
            let i = perm.len();
            for k in 0..n {
                if !used[k] && sym2[k] == sym1[i] {
                    used[k] = true;
                    perm.push(k);
                    if go(other, sym1, sym2, perm, used, c1) {
                        return true;
                    }
                    perm.pop();
                    used[k] = false;
                }
            }
            false
        }
        let mut perm: Vec<usize> = Vec::with_capacity(n);
        let mut used = vec![false; n];
        go(other, &sym1, &sym2, &mut perm, &mut used, &c1)
    }
}

fn canonical_type_with(
    ty: &TensorType,
    free_map: &mut BTreeMap<Index, Index>,
    next: &mut usize,
) -> TensorType {
    let canon = ty_bound_canonical(ty);
    let (u, l) = canon.free_index_seqs();
    let mut m = BTreeMap::new();
    // Traversal order of occurrences, uppers and lowers interleaved by the
    // original positions, is not needed: any fixed order works as long as it
    // is deterministic. Use uppers then lowers of the canonical form.
    for i in u.iter().chain(l.iter()) {
        let target = free_map.entry(i.clone()).or_insert_with(|| {
            let t = Index::reserved(format!("#f{}", *next));
            *next += 1;
            t
        });
        m.insert(i.clone(), target.clone());
    }
    rename_all_names(&canon, &m)
}

/// Bound-canonical form of a type: binder pairs renamed to reserved names in
/// preorder, frees kept.
fn ty_bound_canonical(ty: &TensorType) -> TensorType {
    fn go(ty: &TensorType, env: &mut Vec<(Index, bool, Index)>, k: &mut usize) -> TensorType {
        match ty {
            TensorType::Atom { lit, upper, lower } => {
                let look = |env: &Vec<(Index, bool, Index)>, i: &Index, upper_occ: bool| {
                    env.iter()
                        .rev()
                        .find(|(n, u, _)| n == i && *u == upper_occ)
                        .map(|(_, _, c)| c.clone())
                        .unwrap_or_else(|| i.clone())
                };
                TensorType::Atom {
                    lit: lit.clone(),
                    upper: upper.iter().map(|i| look(env, i, true)).collect(),
                    lower: lower.iter().map(|i| look(env, i, false)).collect(),
                }
            }
            TensorType::Tensor(a, b) => {
                let a = go(a, env, k);
                let b = go(b, env, k);
                TensorType::tensor(a, b)
            }
            TensorType::Par(a, b) => {
                let a = go(a, env, k);
                let b = go(b, env, k);
                TensorType::par(a, b)
            }
            TensorType::Nabla { sup, sub, body } | TensorType::Delta { sup, sub, body } => {
                let csup = Index::reserved(format!("#n{}", 2 * *k));
                let csub = Index::reserved(format!("#n{}", 2 * *k + 1));
                *k += 1;
                // sup binds lower occurrences, sub binds upper occurrences.
                env.push((sup.clone(), false, csup.clone()));
                env.push((sub.clone(), true, csub.clone()));
                let nb = go(body, env, k);
                env.pop();
                env.pop();
                match ty {
                    TensorType::Nabla { .. } => TensorType::nabla(csup, csub, nb),
                    _ => TensorType::delta(csup, csub, nb),
                }
            }
        }
    }
    go(ty, &mut Vec::new(), &mut 0)
}

/// Rename every name occurrence in a type (free, bound, binder) through the
/// map. Only valid for injective maps, where it is a pure relabeling.
pub(crate) fn rename_all_names(ty: &TensorType, map: &BTreeMap<Index, Index>) -> TensorType {
    let ren = |i: &Index| map.get(i).cloned().unwrap_or_else(|| i.clone());
    match ty {
        TensorType::Atom { lit, upper, lower } => TensorType::Atom {
            lit: lit.clone(),
            upper: upper.iter().map(&ren).collect(),
            lower: lower.iter().map(&ren).collect(),
        },
        TensorType::Tensor(a, b) => {
            TensorType::tensor(rename_all_names(a, map), rename_all_names(b, map))
        }
        TensorType::Par(a, b) => {
            TensorType::par(rename_all_names(a, map), rename_all_names(b, map))
        }
        TensorType::Nabla { sup, sub, body } => {
            TensorType::nabla(ren(sup), ren(sub), rename_all_names(body, map))
        }
        TensorType::Delta { sup, sub, body } => {
            TensorType::delta(ren(sup), ren(sub), rename_all_names(body, map))
        }
    }
}

/// Structural match of `pattern` against `subject` up to bound renaming,
/// returning the positional pairing of free indices.
pub(crate) fn alpha_match(
    pattern: &TensorType,
    subject: &TensorType,
) -> Option<Vec<(Index, Index)>> {
    let c1 = ty_bound_canonical(pattern);
    let c2 = ty_bound_canonical(subject);
    let (u1, l1) = c1.free_index_seqs();
    let (u2, l2) = c2.free_index_seqs();
    if u1.len() != u2.len() || l1.len() != l2.len() {
        return None;
    }
    let mut pairs: Vec<(Index, Index)> = u1.into_iter().zip(u2).collect();
    pairs.extend(l1.into_iter().zip(l2));
    let map: BTreeMap<Index, Index> = pairs.iter().cloned().collect();
    if rename_all_names(&c1, &map) == c2 {
        Some(pairs)
    } else {
        None
    }
}

/// Sequent-calculus rule tags with their parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    /// `δ^{I'J̄}_{ĪJ'} ⊢ p^I_J, p̄^{J'}_{I'}`.
    Id {
        lit: LiteralSymbol,
        upper: Vec<Index>,
        lower: Vec<Index>,
        co_upper: Vec<Index>,
        co_lower: Vec<Index>,
    },
    /// Combine the types at `left` and `right` into `ctx[left] ⅋ ctx[right]`
    /// (contexts are multisets, so the two need not be adjacent).
    Par { left: usize, right: usize },
    /// `t ⊢ Γ,A` and `s ⊢ B,Θ` give `ts ⊢ Γ, A⊗B, Θ`.
    Tensor { left_pos: usize, right_pos: usize },
    /// Remove the ε-edge from `sub` to `sup` and bind the pair.
    Nabla { pos: usize, sup: Index, sub: Index },
    /// Multiply by `δ^sub_sup`, gluing the two free vertices.
    Triangle { pos: usize, sup: Index, sub: Index },
    /// `t ⊢ Γ,A` and `s ⊢ Ā,Θ` give `ts ⊢ Γ,Θ`.
    Cut { pos1: usize, pos2: usize },
    /// Nonlogical axiom: a lexicon entry.
    Lex { name: String },
}

impl Rule {
    fn rename(&self, map: &BTreeMap<Index, Index>) -> Rule {
        let ren = |i: &Index| map.get(i).cloned().unwrap_or_else(|| i.clone());
        let ren_seq = |v: &Vec<Index>| v.iter().map(&ren).collect();
        match self {
            Rule::Id {
                lit,
                upper,
                lower,
                co_upper,
                co_lower,
            } => Rule::Id {
                lit: lit.clone(),
                upper: ren_seq(upper),
                lower: ren_seq(lower),
                co_upper: ren_seq(co_upper),
                co_lower: ren_seq(co_lower),
            },
            Rule::Nabla { pos, sup, sub } => Rule::Nabla {
                pos: *pos,
                sup: ren(sup),
                sub: ren(sub),
            },
            Rule::Triangle { pos, sup, sub } => Rule::Triangle {
                pos: *pos,
                sup: ren(sup),
                sub: ren(sub),
            },
            other => other.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Id { .. } => "id",
            Rule::Par { .. } => "par",
            Rule::Tensor { .. } => "tensor",
            Rule::Nabla { .. } => "nabla",
            Rule::Triangle { .. } => "triangle",
            Rule::Cut { .. } => "cut",
            Rule::Lex { .. } => "lex",
        }
    }
}

/// A rule-labelled proof tree; the conclusion of every node is exactly what
/// forward rule application yields on the premises.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub rule: Rule,
    pub premises: Vec<Derivation>,
    pub conclusion: TypingJudgement,
}

impl Derivation {
    /// Apply a rule to premise derivations, building the node.
    pub fn by_rule(rule: Rule, premises: Vec<Derivation>) -> Result<Derivation, RuleError> {
        let concs: Vec<&TypingJudgement> = premises.iter().map(|d| &d.conclusion).collect();
        let conclusion = apply_rule(&rule, &concs)?;
        Ok(Derivation {
            rule,
            premises,
            conclusion,
        })
    }

    /// A nonlogical leaf holding a lexicalized judgement.
    pub fn lex(
        name: impl Into<String>,
        judgement: TypingJudgement,
    ) -> Result<Derivation, RuleError> {
        if !judgement.term().classify().lexical {
            return Err(RuleError::Inapplicable(
                "lexicon judgements must have lexical terms".into(),
            ));
        }
        Ok(Derivation {
            rule: Rule::Lex { name: name.into() },
            premises: Vec::new(),
            conclusion: judgement,
        })
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }

    pub fn is_cut_free(&self) -> bool {
        !matches!(self.rule, Rule::Cut { .. }) && self.premises.iter().all(Derivation::is_cut_free)
    }

    pub(crate) fn collect_names(&self, out: &mut BTreeSet<Index>) {
        out.extend(self.conclusion.all_names());
        if let Rule::Id {
            upper,
            lower,
            co_upper,
            co_lower,
            ..
        } = &self.rule
        {
            out.extend(upper.iter().cloned());
            out.extend(lower.iter().cloned());
            out.extend(co_upper.iter().cloned());
            out.extend(co_lower.iter().cloned());
        }
        if let Rule::Nabla { sup, sub, .. } | Rule::Triangle { sup, sub, .. } = &self.rule {
            out.insert(sup.clone());
            out.insert(sub.clone());
        }
        for p in &self.premises {
            p.collect_names(out);
        }
    }

    /// Uniform injective relabeling of index names throughout the tree.
    /// Names colliding with a target are moved out of the way first, so the
    /// result is a pure relabeling and stays checkable.
    pub(crate) fn relabel(&self, map: &BTreeMap<Index, Index>) -> Derivation {
        let mut names = BTreeSet::new();
        self.collect_names(&mut names);
        let sources: BTreeSet<&Index> = map.keys().collect();
        let mut total: BTreeMap<Index, Index> = map.clone();
        let mut supply =
            IndexSupply::avoiding(names.iter().chain(map.values()).collect::<Vec<_>>());
        for n in &names {
            if !sources.contains(n) && map.values().any(|t| t == n) {
                total.insert(n.clone(), supply.fresh());
            }
        }
        self.relabel_total(&total)
    }

    fn relabel_total(&self, map: &BTreeMap<Index, Index>) -> Derivation {
        Derivation {
            rule: self.rule.rename(map),
            premises: self.premises.iter().map(|p| p.relabel_total(map)).collect(),
            conclusion: TypingJudgement {
                term: self.conclusion.term.rename_all(map),
                context: self
                    .conclusion
                    .context
                    .iter()
                    .map(|t| rename_all_names(t, map))
                    .collect(),
            },
        }
    }
}

/// The identity-axiom term `δ^{I'J̄}_{ĪJ'}`: componentwise deltas pairing the
/// concatenated upper string `I' ++ J̄` with the lower string `Ī ++ J'`.
fn id_term(
    upper: &[Index],
    lower: &[Index],
    co_upper: &[Index],
    co_lower: &[Index],
) -> Result<TensorTerm, RuleError> {
    let m = upper.len();
    let n = lower.len();
    let mut seen = BTreeSet::new();
    for i in upper
        .iter()
        .chain(lower.iter())
        .chain(co_upper.iter())
        .chain(co_lower.iter())
    {
        if !seen.insert(i.clone()) {
            return Err(RuleError::Inapplicable(format!(
                "identity axiom index `{i}` repeated"
            )));
        }
    }
    let mut expr = crate::term::TermExpression::one();
    for s in 0..m {
        // δ^{I'_s}_{Ī_s} with Ī the reversal of I.
        expr = expr.product(&crate::term::TermExpression::delta(
            upper[m - 1 - s].clone(),
            co_lower[s].clone(),
        ))?;
    }
    for s in 0..n {
        // δ^{J̄_s}_{J'_s}.
        expr = expr.product(&crate::term::TermExpression::delta(
            co_upper[s].clone(),
            lower[n - 1 - s].clone(),
        ))?;
    }
    Ok(expr.normalize())
}

/// Forward application of the axiom: the judgement
/// `δ^{I'J̄}_{ĪJ'} ⊢ p^I_J, p̄^{J'}_{I'}`.
pub fn axiom_id(
    lit: &LiteralSymbol,
    upper: &[Index],
    lower: &[Index],
    co_upper: &[Index],
    co_lower: &[Index],
) -> Result<TypingJudgement, RuleError> {
    let (m, n) = lit.valency();
    if upper.len() != m || lower.len() != n || co_lower.len() != m || co_upper.len() != n {
        return Err(RuleError::Type(TypeError::ValencyMismatch {
            expected: m,
            expected_lower: n,
            got: upper.len(),
            got_lower: lower.len(),
        }));
    }
    let term = id_term(upper, lower, co_upper, co_lower)?;
    let a = TensorType::atom(lit.clone(), upper.to_vec(), lower.to_vec())?;
    let b = TensorType::atom(lit.dual(), co_upper.to_vec(), co_lower.to_vec())?;
    Ok(TypingJudgement::new(term, vec![a, b])?)
}

/// Forward rule application.
pub fn apply_rule(
    rule: &Rule,
    premises: &[&TypingJudgement],
) -> Result<TypingJudgement, RuleError> {
    let need = |k: usize| -> Result<(), RuleError> {
        if premises.len() != k {
            Err(RuleError::Inapplicable(format!(
                "expected {k} premises, got {}",
                premises.len()
            )))
        } else {
            Ok(())
        }
    };
    match rule {
        Rule::Id {
            lit,
            upper,
            lower,
            co_upper,
            co_lower,
        } => {
            need(0)?;
            axiom_id(lit, upper, lower, co_upper, co_lower)
        }
        Rule::Lex { .. } => Err(RuleError::Inapplicable(
            "lexicon leaves carry their own judgement".into(),
        )),
        Rule::Par { left, right } => {
            need(1)?;
            let p = premises[0];
            let n = p.context.len();
            if *left >= n || *right >= n || left == right {
                return Err(RuleError::Inapplicable("par positions out of range".into()));
            }
            let a = p.context[*left].clone();
            let b = p.context[*right].clone();
            let mut ctx = Vec::with_capacity(n - 1);
            for (k, ty) in p.context.iter().enumerate() {
                if k == *left {
                    ctx.push(TensorType::par(a.clone(), b.clone()));
                } else if k != *right {
                    ctx.push(ty.clone());
                }
            }
            Ok(TypingJudgement::new(p.term.clone(), ctx)?)
        }
        Rule::Tensor {
            left_pos,
            right_pos,
        } => {
            need(2)?;
            let (p1, p2) = (premises[0], premises[1]);
            if *left_pos >= p1.context.len() || *right_pos >= p2.context.len() {
                return Err(RuleError::Inapplicable(
                    "tensor positions out of range".into(),
                ));
            }
            let a = p1.context[*left_pos].clone();
            let b = p2.context[*right_pos].clone();
            let term = p1.term.product(&p2.term)?;
            let mut ctx: Vec<TensorType> = Vec::new();
            for (k, ty) in p1.context.iter().enumerate() {
                if k != *left_pos {
                    ctx.push(ty.clone());
                }
            }
            ctx.push(TensorType::tensor(a, b));
            for (k, ty) in p2.context.iter().enumerate() {
                if k != *right_pos {
                    ctx.push(ty.clone());
                }
            }
            Ok(TypingJudgement::new(term, ctx)?)
        }
        Rule::Nabla { pos, sup, sub } => {
            need(1)?;
            let p = premises[0];
            if *pos >= p.context.len() {
                return Err(RuleError::Inapplicable(
                    "nabla position out of range".into(),
                ));
            }
            let a = &p.context[*pos];
            let (fu, fl) = a.free_index_sets();
            if !fl.contains(sup) || !fu.contains(sub) {
                return Err(RuleError::Inapplicable(format!(
                    "nabla binder pair ({sup},{sub}) is not free in the principal type"
                )));
            }
            let edge = Edge {
                label: Word::epsilon(),
                lower: sub.clone(),
                upper: sup.clone(),
            };
            let term = p.term.remove_edge(&edge).ok_or_else(|| {
                RuleError::Inapplicable(format!(
                    "premise term has no ε-edge from `{sub}` to `{sup}`"
                ))
            })?;
            let mut ctx = p.context.clone();
            ctx[*pos] = TensorType::nabla(sup.clone(), sub.clone(), a.clone());
            Ok(TypingJudgement::new(term, ctx)?)
        }
        Rule::Triangle { pos, sup, sub } => {
            need(1)?;
            let p = premises[0];
            if *pos >= p.context.len() {
                return Err(RuleError::Inapplicable(
                    "triangle position out of range".into(),
                ));
            }
            let a = &p.context[*pos];
            let (fu, fl) = a.free_index_sets();
            if !fl.contains(sup) || !fu.contains(sub) {
                return Err(RuleError::Inapplicable(format!(
                    "triangle binder pair ({sup},{sub}) is not free in the principal type"
                )));
            }
            let term = p
                .term
                .product(&TensorTerm::delta(sup.clone(), sub.clone()))?;
            let mut ctx = p.context.clone();
            ctx[*pos] = TensorType::delta(sup.clone(), sub.clone(), a.clone());
            Ok(TypingJudgement::new(term, ctx)?)
        }
        Rule::Cut { pos1, pos2 } => {
            need(2)?;
            let (p1, p2) = (premises[0], premises[1]);
            if *pos1 >= p1.context.len() || *pos2 >= p2.context.len() {
                return Err(RuleError::Inapplicable("cut positions out of range".into()));
            }
            let a = &p1.context[*pos1];
            let abar = &p2.context[*pos2];
            // The interface must be the literal dual up to bound renaming:
            // same free names, mirrored.
            match alpha_match(&a.dual(), abar) {
                Some(pairs) if pairs.iter().all(|(x, y)| x == y) => {}
                _ => return Err(RuleError::InterfaceMismatch),
            }
            let term = p1.term.product(&p2.term)?;
            let mut ctx: Vec<TensorType> = Vec::new();
            for (k, ty) in p1.context.iter().enumerate() {
                if k != *pos1 {
                    ctx.push(ty.clone());
                }
            }
            for (k, ty) in p2.context.iter().enumerate() {
                if k != *pos2 {
                    ctx.push(ty.clone());
                }
            }
            Ok(TypingJudgement::new(term, ctx)?)
        }
    }
}

/// Where a derivation failed to check.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("derivation invalid at node {path:?}: {error}")]
pub struct CheckError {
    /// Child indices from the root.
    pub path: Vec<usize>,
    pub error: RuleError,
}

/// Re-validate every node of a derivation.
pub fn check_derivation(d: &Derivation) -> Result<(), CheckError> {
    fn go(d: &Derivation, path: &mut Vec<usize>) -> Result<(), CheckError> {
        for (k, p) in d.premises.iter().enumerate() {
            path.push(k);
            go(p, path)?;
            path.pop();
        }
        if let Rule::Lex { .. } = d.rule {
            if !d.conclusion.term().classify().lexical {
                return Err(CheckError {
                    path: path.clone(),
                    error: RuleError::Inapplicable("lexicon term is not lexical".into()),
                });
            }
            return Ok(());
        }
        let concs: Vec<&TypingJudgement> = d.premises.iter().map(|p| &p.conclusion).collect();
        match apply_rule(&d.rule, &concs) {
            Ok(j) if j == d.conclusion => Ok(()),
            Ok(_) => Err(CheckError {
                path: path.clone(),
                error: RuleError::Inapplicable("stored conclusion differs from rule output".into()),
            }),
            Err(e) => Err(CheckError {
                path: path.clone(),
                error: e,
            }),
        }
    }
    go(d, &mut Vec::new())
}

/// Search budget: maximum derivation depth plus a global node cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_depth: 24,
            max_nodes: 1_000_000,
        }
    }
}

impl Budget {
    pub fn new(max_depth: usize, max_nodes: usize) -> Self {
        Budget {
            max_depth,
            max_nodes,
        }
    }
}

/// Outcome of bounded search: absence of a derivation within the budget is
/// not a disproof.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProveResult {
    Found(Derivation),
    NotFoundWithinBudget,
}

impl ProveResult {
    pub fn found(self) -> Option<Derivation> {
        match self {
            ProveResult::Found(d) => Some(d),
            ProveResult::NotFoundWithinBudget => None,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, ProveResult::Found(_))
    }
}

struct Searcher {
    nodes_left: usize,
    success: BTreeMap<String, Derivation>,
    failed: BTreeMap<String, usize>,
}

struct Exhausted;

impl Searcher {
    fn new(budget: Budget) -> Self {
        Searcher {
            nodes_left: budget.max_nodes,
            success: BTreeMap::new(),
            failed: BTreeMap::new(),
        }
    }

    /// Cheap necessary conditions for cut-free derivability from logical
    /// axioms only.
    fn feasible(j: &TypingJudgement) -> bool {
        // No rule introduces terminal symbols.
        if !j.term().classify().pure {
            return false;
        }
        // Identity axioms consume literals in dual pairs.
        let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
        let mut slots = 0usize;
        let mut binders = 0usize;
        let mut deltas = 0usize;
        for ty in j.context() {
            count_atoms(ty, &mut counts, &mut slots, &mut binders, &mut deltas);
        }
        if counts.values().any(|&c| c != 0) {
            return false;
        }
        // Axiom wiring gives one edge per slot pair; every binder below this
        // sequent consumed exactly one edge, and only triangles make loops.
        if slots % 2 != 0 {
            return false;
        }
        if j.term().edges().len() + binders != slots / 2 {
            return false;
        }
        if j.term().loops().len() > deltas {
            return false;
        }
        // Types linked by term edges must form one connected component
        // (identity wiring is connected and every rule preserves this).
        if j.context().len() > 1 {
            let n = j.context().len();
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(parent: &mut Vec<usize>, x: usize) -> usize {
                if parent[x] != x {
                    let r = find(parent, parent[x]);
                    parent[x] = r;
                }
                parent[x]
            }
            let mut own: BTreeMap<Index, usize> = BTreeMap::new();
            for (k, ty) in j.context().iter().enumerate() {
                let (u, l) = ty.free_index_sets();
                for i in u.into_iter().chain(l) {
                    own.insert(i, k);
                }
            }
            for e in j.term().edges() {
                if let (Some(&a), Some(&b)) = (own.get(&e.lower), own.get(&e.upper)) {
                    let ra = find(&mut parent, a);
                    let rb = find(&mut parent, b);
                    parent[ra] = rb;
                }
            }
            let root = find(&mut parent, 0);
            for k in 1..n {
                if find(&mut parent, k) != root {
                    return false;
                }
            }
        }
        true
    }

    fn search(
        &mut self,
        j: &TypingJudgement,
        depth: usize,
    ) -> Result<Option<Derivation>, Exhausted> {
        if self.nodes_left == 0 {
            return Err(Exhausted);
        }
        self.nodes_left -= 1;
        if !Self::feasible(j) {
            return Ok(None);
        }
        let (canon, to_canon) = j.canonical();
        let key = format!("{canon}");
        if let Some(stored) = self.success.get(&key) {
            let from_canon: BTreeMap<Index, Index> = to_canon
                .iter()
                .map(|(a, b)| (b.clone(), a.clone()))
                .collect();
            return Ok(Some(stored.relabel(&from_canon)));
        }
        if let Some(&d) = self.failed.get(&key) {
            if d >= depth {
                return Ok(None);
            }
        }
        if depth == 0 {
            return Ok(None);
        }
        let found = self.search_rules(j, depth)?;
        match &found {
            Some(d) => {
                let canonical_derivation = d.relabel(&to_canon);
                self.success.insert(key, canonical_derivation);
            }
            None => {
                let e = self.failed.entry(key).or_insert(0);
                if depth > *e {
                    *e = depth;
                }
            }
        }
        Ok(found)
    }

    fn search_rules(
        &mut self,
        j: &TypingJudgement,
        depth: usize,
    ) -> Result<Option<Derivation>, Exhausted> {
        let ctx = j.context();
        // Id.
        if ctx.len() == 2 {
            if let (
                TensorType::Atom { lit, upper, lower },
                TensorType::Atom {
                    lit: lit2,
                    upper: co_upper,
                    lower: co_lower,
                },
            ) = (&ctx[0], &ctx[1])
            {
                if *lit2 == lit.dual() {
                    if let Ok(expected) = id_term(upper, lower, co_upper, co_lower) {
                        if &expected == j.term() {
                            let d = Derivation::by_rule(
                                Rule::Id {
                                    lit: lit.clone(),
                                    upper: upper.clone(),
                                    lower: lower.clone(),
                                    co_upper: co_upper.clone(),
                                    co_lower: co_lower.clone(),
                                },
                                Vec::new(),
                            )
                            .expect("id axiom applies");
                            return Ok(Some(d));
                        }
                    }
                }
            }
        }
        // ⅋ is invertible: decompose the leftmost par eagerly.
        if let Some(pos) = ctx.iter().position(|t| matches!(t, TensorType::Par(..))) {
            let TensorType::Par(a, b) = &ctx[pos] else {
                unreachable!()
            };
            let mut pctx = ctx.to_vec();
            pctx[pos] = a.as_ref().clone();
            pctx.insert(pos + 1, b.as_ref().clone());
            let premise = TypingJudgement::new(j.term().clone(), pctx).expect("par premise");
            return Ok(self.search(&premise, depth - 1)?.map(|d| {
                // Tensor nodes may permute contexts, so locate the two
                // factors in the child's actual conclusion.
                let left = find_type(d.conclusion.context(), a, None);
                let right = find_type(d.conclusion.context(), b, Some(left));
                Derivation::by_rule(Rule::Par { left, right }, vec![d]).expect("par applies")
            }));
        }
        // ∇ is invertible (the admissible elimination): unbind eagerly.
        if let Some(pos) = ctx
            .iter()
            .position(|t| matches!(t, TensorType::Nabla { .. }))
        {
            let mut supply = j.supply();
            let (sup, sub) = fresh_binder_names(&ctx[pos], j, &mut supply);
            let body = ctx[pos].unbind(&sup, &sub).expect("nabla type");
            let mut pctx = ctx.to_vec();
            pctx[pos] = body;
            let term = j.term().add_edge(Edge {
                label: Word::epsilon(),
                lower: sub.clone(),
                upper: sup.clone(),
            });
            let premise = TypingJudgement::new(term, pctx.clone()).expect("nabla premise");
            let body = pctx[pos].clone();
            return Ok(self.search(&premise, depth - 1)?.map(|d| {
                let pos = find_type(d.conclusion.context(), &body, None);
                Derivation::by_rule(Rule::Nabla { pos, sup, sub }, vec![d]).expect("nabla applies")
            }));
        }
        // ⊗: branch over context partitions consistent with the term.
        for pos in 0..ctx.len() {
            let TensorType::Tensor(a, b) = &ctx[pos] else {
                continue;
            };
            let others: Vec<usize> = (0..ctx.len()).filter(|k| *k != pos).collect();
            let loop_choices = loop_splits(j.term().loops());
            for mask in 0..(1u32 << others.len()) {
                let left_set: Vec<usize> = others
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| mask & (1 << bit) != 0)
                    .map(|(_, &k)| k)
                    .collect();
                let Some((lt, rt)) = split_term_edges(j.term(), ctx, &left_set, a) else {
                    continue;
                };
                for (lloops, rloops) in &loop_choices {
                    let left_term = TensorTerm::from_parts(lt.clone(), lloops.clone());
                    let right_term = TensorTerm::from_parts(rt.clone(), rloops.clone());
                    let mut lctx: Vec<TensorType> =
                        left_set.iter().map(|&k| ctx[k].clone()).collect();
                    lctx.push(a.as_ref().clone());
                    let mut rctx: Vec<TensorType> = vec![b.as_ref().clone()];
                    for &k in &others {
                        if !left_set.contains(&k) {
                            rctx.push(ctx[k].clone());
                        }
                    }
                    let Ok(p1) = TypingJudgement::new(left_term, lctx) else {
                        continue;
                    };
                    let Ok(p2) = TypingJudgement::new(right_term, rctx) else {
                        continue;
                    };
                    let Some(d1) = self.search(&p1, depth - 1)? else {
                        continue;
                    };
                    let Some(d2) = self.search(&p2, depth - 1)? else {
                        continue;
                    };
                    let left_pos = find_type(d1.conclusion.context(), a, None);
                    let right_pos = find_type(d2.conclusion.context(), b, None);
                    let d = Derivation::by_rule(
                        Rule::Tensor {
                            left_pos,
                            right_pos,
                        },
                        vec![d1, d2],
                    )
                    .expect("tensor applies");
                    return Ok(Some(d));
                }
            }
        }
        // Δ: branch over the ways the glued vertex could have sat.
        for pos in 0..ctx.len() {
            if !matches!(&ctx[pos], TensorType::Delta { .. }) {
                continue;
            }
            let mut supply = j.supply();
            let (sup, sub) = fresh_binder_names(&ctx[pos], j, &mut supply);
            let body = ctx[pos].unbind(&sup, &sub).expect("delta type");
            let mut pctx = ctx.to_vec();
            pctx[pos] = body;
            // Un-glue an edge at every label split.
            for (ei, e) in j.term().edges().iter().enumerate() {
                for cut in 0..=e.label.len() {
                    let (w1, w2) = e.label.split_at(cut);
                    let mut edges = j.term().edges().to_vec();
                    edges.remove(ei);
                    edges.push(Edge {
                        label: w1,
                        lower: e.lower.clone(),
                        upper: sup.clone(),
                    });
                    edges.push(Edge {
                        label: w2,
                        lower: sub.clone(),
                        upper: e.upper.clone(),
                    });
                    let term = TensorTerm::from_parts(edges, j.term().loops().to_vec());
                    let Ok(premise) = TypingJudgement::new(term, pctx.clone()) else {
                        continue;
                    };
                    if let Some(d) = self.search(&premise, depth - 1)? {
                        let pos = find_type(d.conclusion.context(), &pctx[pos], None);
                        let node = Derivation::by_rule(
                            Rule::Triangle {
                                pos,
                                sup: sup.clone(),
                                sub: sub.clone(),
                            },
                            vec![d],
                        )
                        .expect("triangle applies");
                        return Ok(Some(node));
                    }
                }
            }
            // Un-glue a loop at every rotation.
            let mut seen_loops: BTreeSet<&Loop> = BTreeSet::new();
            for l in j.term().loops() {
                if !seen_loops.insert(l) {
                    continue;
                }
                for rot in l.label().rotations() {
                    let term = j
                        .term()
                        .remove_loop(l)
                        .expect("loop present")
                        .add_edge(Edge {
                            label: rot,
                            lower: sub.clone(),
                            upper: sup.clone(),
                        });
                    let Ok(premise) = TypingJudgement::new(term, pctx.clone()) else {
                        continue;
                    };
                    if let Some(d) = self.search(&premise, depth - 1)? {
                        let pos = find_type(d.conclusion.context(), &pctx[pos], None);
                        let node = Derivation::by_rule(
                            Rule::Triangle {
                                pos,
                                sup: sup.clone(),
                                sub: sub.clone(),
                            },
                            vec![d],
                        )
                        .expect("triangle applies");
                        return Ok(Some(node));
                    }
                }
            }
        }
        Ok(None)
    }
}


/// Position of a type in a context, up to bound renaming with identical
/// frees (memoized answers may carry different binder names); `skip`
/// excludes one position for locating the second of two equal factors.
fn find_type(ctx: &[TensorType], ty: &TensorType, skip: Option<usize>) -> usize {
    if let Some(k) = ctx
        .iter()
        .enumerate()
        .position(|(k, t)| Some(k) != skip && t == ty)
    {
        return k;
    }
    ctx.iter()
        .enumerate()
        .position(|(k, t)| {
            Some(k) != skip
                && alpha_match(ty, t)
                    .map_or(false, |pairs| pairs.iter().all(|(a, b)| a == b))
        })
        .expect("type present in context")
}

fn count_atoms<'a>(
    ty: &'a TensorType,
    counts: &mut BTreeMap<&'a str, i64>,
    slots: &mut usize,
    binders: &mut usize,
    deltas: &mut usize,
) {
    match ty {
        TensorType::Atom { lit, .. } => {
            let (m, n) = lit.valency();
            *slots += m + n;
            *counts.entry(lit.base()).or_insert(0) += if lit.is_negated() { -1 } else { 1 };
        }
        TensorType::Tensor(a, b) | TensorType::Par(a, b) => {
            count_atoms(a, counts, slots, binders, deltas);
            count_atoms(b, counts, slots, binders, deltas);
        }
        TensorType::Nabla { body, .. } => {
            *binders += 1;
            count_atoms(body, counts, slots, binders, deltas);
        }
        TensorType::Delta { body, .. } => {
            *binders += 1;
            *deltas += 1;
            count_atoms(body, counts, slots, binders, deltas);
        }
    }
}

/// Fresh names for exposing a binder: reuse the stored names when they do
/// not clash with anything else in the judgement.
fn fresh_binder_names(
    ty: &TensorType,
    j: &TypingJudgement,
    supply: &mut IndexSupply,
) -> (Index, Index) {
    let (TensorType::Nabla { sup, sub, .. } | TensorType::Delta { sup, sub, .. }) = ty else {
        unreachable!("binder expected");
    };
    let mut other_names = j.term().all_indices();
    for t in j.context() {
        if !std::ptr::eq(t, ty) {
            other_names.extend(t.all_names());
        }
    }
    if sup != sub && !other_names.contains(sup) && !other_names.contains(sub) {
        if let Some(unbound) = ty.unbind(sup, sub) {
            if unbound.wellformed().is_ok() {
                return (sup.clone(), sub.clone());
            }
        }
    }
    (supply.fresh(), supply.fresh())
}

/// Split a term's edges between the two premises of a tensor rule according
/// to which side of the context partition their endpoints belong to; `None`
/// when some edge straddles the split.
fn split_term_edges(
    term: &TensorTerm,
    ctx: &[TensorType],
    left_set: &[usize],
    a: &TensorType,
) -> Option<(Vec<Edge>, Vec<Edge>)> {
    let mut left_upper: BTreeSet<Index> = BTreeSet::new();
    let mut left_lower: BTreeSet<Index> = BTreeSet::new();
    for &k in left_set {
        let (u, l) = ctx[k].free_index_sets();
        left_upper.extend(u);
        left_lower.extend(l);
    }
    let (u, l) = a.free_index_sets();
    left_upper.extend(u);
    left_lower.extend(l);
    let mut lt = Vec::new();
    let mut rt = Vec::new();
    for e in term.edges() {
        // A term edge's upper endpoint mirrors a context lower index.
        let upper_left = left_lower.contains(&e.upper);
        let lower_left = left_upper.contains(&e.lower);
        if upper_left != lower_left {
            return None;
        }
        if upper_left {
            lt.push(e.clone());
        } else {
            rt.push(e.clone());
        }
    }
    Some((lt, rt))
}

/// All splits of a loop multiset into two halves, deterministically ordered.
fn loop_splits(loops: &[Loop]) -> Vec<(Vec<Loop>, Vec<Loop>)> {
    let mut groups: Vec<(Loop, usize)> = Vec::new();
    for l in loops {
        match groups.last_mut() {
            Some((g, c)) if g == l => *c += 1,
            _ => groups.push((l.clone(), 1)),
        }
    }
    let mut out: Vec<(Vec<Loop>, Vec<Loop>)> = vec![(Vec::new(), Vec::new())];
    for (l, c) in groups {
        let mut next = Vec::new();
        for (lv, rv) in out {
            for take in 0..=c {
                let mut lv2 = lv.clone();
                let mut rv2 = rv.clone();
                lv2.extend((0..take).map(|_| l.clone()));
                rv2.extend((0..c - take).map(|_| l.clone()));
                next.push((lv2, rv2));
            }
        }
        out = next;
    }
    out
}

/// Bounded cut-free backward search. Deterministic for a fixed budget; a
/// returned derivation always checks and concludes the goal up to judgement
/// α-equality (the context may come back in a permuted order).
pub fn prove(goal: &TypingJudgement, budget: Budget) -> ProveResult {
    let mut searcher = Searcher::new(budget);
    match searcher.search(goal, budget.max_depth) {
        Ok(Some(d)) => ProveResult::Found(d),
        _ => ProveResult::NotFoundWithinBudget,
    }
}

/// Enumerate all terms inhabiting a context within the budget, deduplicated
/// by term equality. Extra divergent loops are tried up to `max_loops`.
pub fn prove_for_context(
    context: &[TensorType],
    budget: Budget,
    max_loops: usize,
) -> Vec<(TensorTerm, Derivation)> {
    let mut uppers: Vec<Index> = Vec::new();
    let mut lowers: Vec<Index> = Vec::new();
    for ty in context {
        if ty.wellformed().is_err() {
            return Vec::new();
        }
        let (u, l) = ty.free_index_seqs();
        uppers.extend(u);
        lowers.extend(l);
    }
    if uppers.len() != lowers.len() || uppers.len() > 8 {
        return Vec::new();
    }
    let mut results: Vec<(TensorTerm, Derivation)> = Vec::new();
    let mut perm: Vec<usize> = (0..uppers.len()).collect();
    loop {
        for extra in 0..=max_loops {
            // Term edges mirror the context: lower endpoints take context
            // uppers, upper endpoints take context lowers.
            let edges: Vec<Edge> = perm
                .iter()
                .enumerate()
                .map(|(k, &p)| Edge {
                    label: Word::epsilon(),
                    lower: uppers[k].clone(),
                    upper: lowers[p].clone(),
                })
                .collect();
            let term =
                TensorTerm::from_parts(edges, Vec::new()).with_loops(extra, Word::epsilon());
            let Ok(goal) = TypingJudgement::new(term.clone(), context.to_vec()) else {
                continue;
            };
            if results.iter().any(|(t, _)| t == &term) {
                continue;
            }
            if let ProveResult::Found(d) = prove(&goal, budget) {
                results.push((term, d));
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    results.sort_by_key(|(t, _)| format!("{t}"));
    results
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut k = n - 1;
    while perm[k] <= perm[i - 1] {
        k -= 1;
    }
    perm.swap(i - 1, k);
    perm[i..].reverse();
    true
}

/// The generalized identity: a derivation of a two-type judgement containing
/// `B` and the dual of `B` with every free index renamed through `primes`,
/// wired by deltas pairing each free of `B` with its prime. Returns the
/// derivation with the positions of `B` and of the renamed dual.
pub fn gen_id(
    b: &TensorType,
    primes: &BTreeMap<Index, Index>,
    supply: &mut IndexSupply,
) -> Result<(Derivation, usize, usize), RuleError> {
    match b {
        TensorType::Atom { lit, upper, lower } => {
            let pr = |i: &Index| primes.get(i).cloned().unwrap_or_else(|| i.clone());
            let co_upper: Vec<Index> = lower.iter().rev().map(|i| pr(i)).collect();
            let co_lower: Vec<Index> = upper.iter().rev().map(|i| pr(i)).collect();
            let d = Derivation::by_rule(
                Rule::Id {
                    lit: lit.clone(),
                    upper: upper.clone(),
                    lower: lower.clone(),
                    co_upper,
                    co_lower,
                },
                Vec::new(),
            )?;
            Ok((d, 0, 1))
        }
        TensorType::Tensor(b1, b2) => {
            let (g1, b1_pos, _) = gen_id(b1, primes, supply)?;
            let (g2, b2_pos, _) = gen_id(b2, primes, supply)?;
            let node = Derivation::by_rule(
                Rule::Tensor {
                    left_pos: b1_pos,
                    right_pos: b2_pos,
                },
                vec![g1, g2],
            )?;
            // Context now: [D1, B1⊗B2, D2]; pair the duals as D2 ⅋ D1.
            let node = Derivation::by_rule(Rule::Par { left: 2, right: 0 }, vec![node])?;
            Ok((node, 0, 1))
        }
        TensorType::Par(b1, b2) => {
            let (g1, _, d1_pos) = gen_id(b1, primes, supply)?;
            let (g2, _, d2_pos) = gen_id(b2, primes, supply)?;
            let node = Derivation::by_rule(
                Rule::Tensor {
                    left_pos: d2_pos,
                    right_pos: d1_pos,
                },
                vec![g2, g1],
            )?;
            // Context now: [B2, D2⊗D1, B1]; pair B1 ⅋ B2.
            let node = Derivation::by_rule(Rule::Par { left: 2, right: 0 }, vec![node])?;
            Ok((node, 1, 0))
        }
        TensorType::Nabla { .. } | TensorType::Delta { .. } => {
            let exposed_sup = supply.fresh();
            let exposed_sub = supply.fresh();
            let body = b.unbind(&exposed_sup, &exposed_sub).expect("binder type");
            let mut inner = primes.clone();
            inner.insert(exposed_sup.clone(), supply.fresh());
            inner.insert(exposed_sub.clone(), supply.fresh());
            let (g, b_pos, d_pos) = gen_id(&body, &inner, supply)?;
            let p_sup = inner[&exposed_sup].clone();
            let p_sub = inner[&exposed_sub].clone();
            match b {
                TensorType::Nabla { .. } => {
                    // Glue the primed pair on the dual side, then erase the
                    // resulting ε-edge on the type side.
                    let node = Derivation::by_rule(
                        Rule::Triangle {
                            pos: d_pos,
                            sup: p_sub,
                            sub: p_sup,
                        },
                        vec![g],
                    )?;
                    let node = Derivation::by_rule(
                        Rule::Nabla {
                            pos: b_pos,
                            sup: exposed_sup,
                            sub: exposed_sub,
                        },
                        vec![node],
                    )?;
                    Ok((node, b_pos, d_pos))
                }
                _ => {
                    let node = Derivation::by_rule(
                        Rule::Triangle {
                            pos: b_pos,
                            sup: exposed_sup,
                            sub: exposed_sub,
                        },
                        vec![g],
                    )?;
                    let node = Derivation::by_rule(
                        Rule::Nabla {
                            pos: d_pos,
                            sup: p_sub,
                            sub: p_sup,
                        },
                        vec![node],
                    )?;
                    Ok((node, b_pos, d_pos))
                }
            }
        }
    }
}

/// Compose two derivations with a cut, inferring the interface renaming: the
/// type at `pos2` of `d2` must be α-equal to the dual of the type at `pos1`
/// of `d1` after renaming.
pub fn cut_compose(
    d1: &Derivation,
    pos1: usize,
    d2: &Derivation,
    pos2: usize,
) -> Result<Derivation, RuleError> {
    let ctx1 = d1.conclusion.context();
    let ctx2 = d2.conclusion.context();
    if pos1 >= ctx1.len() || pos2 >= ctx2.len() {
        return Err(RuleError::Inapplicable("cut positions out of range".into()));
    }
    let target = ctx1[pos1].dual();
    let pairs = alpha_match(&target, &ctx2[pos2]).ok_or(RuleError::InterfaceMismatch)?;
    // Interface frees of d2 map onto d1's; every other free of d2 moves to a
    // fresh name so nothing collides with d1.
    let mut names = d1.conclusion.all_names();
    names.extend(d2.conclusion.all_names());
    let mut supply = IndexSupply::avoiding(names.iter().collect::<Vec<_>>());
    let mut map: BTreeMap<Index, Index> = BTreeMap::new();
    for (want, have) in &pairs {
        map.insert(have.clone(), want.clone());
    }
    for ty in ctx2 {
        let (u, l) = ty.free_index_sets();
        for i in u.into_iter().chain(l) {
            map.entry(i).or_insert_with(|| supply.fresh());
        }
    }
    let d2r = d2.relabel(&map);
    Derivation::by_rule(Rule::Cut { pos1, pos2 }, vec![d1.clone(), d2r])
}

/// The admissible elimination: from a derivation of `t ⊢ Γ, ∇^α_β A` build a
/// derivation of `δ^α_β·t ⊢ Γ, A`. The output contains a cut and passes
/// `check_derivation`.
pub fn nabla_elim(d: &Derivation) -> Result<Derivation, RuleError> {
    let ctx = d.conclusion.context();
    let Some(last) = ctx.last() else {
        return Err(RuleError::NotNablaType);
    };
    if !matches!(last, TensorType::Nabla { .. }) {
        return Err(RuleError::NotNablaType);
    }
    let pos = ctx.len() - 1;
    let mut all = BTreeSet::new();
    d.collect_names(&mut all);
    let mut supply = IndexSupply::avoiding(all.iter().collect::<Vec<_>>());
    let (exposed_sup, exposed_sub) = fresh_binder_names(last, &d.conclusion, &mut supply);
    let body_target = last.unbind(&exposed_sup, &exposed_sub).expect("nabla type");

    // Move the ∇ type's free indices out of the way inside `d`, keeping the
    // original names available for the exposed body.
    let (fu, fl) = last.free_index_sets();
    let frees: Vec<Index> = fu.into_iter().chain(fl).collect();
    let mut shift: BTreeMap<Index, Index> = BTreeMap::new();
    for f in &frees {
        shift.insert(f.clone(), supply.fresh());
    }
    let d_shifted = d.relabel(&shift);

    // Mediator: glue the primed pair on the dual side of the generalized
    // identity for the exposed body.
    let mut primes: BTreeMap<Index, Index> = BTreeMap::new();
    for f in &frees {
        primes.insert(f.clone(), shift[f].clone());
    }
    primes.insert(exposed_sup.clone(), supply.fresh());
    primes.insert(exposed_sub.clone(), supply.fresh());
    let (g, _b_pos, d_pos) = gen_id(&body_target, &primes, &mut supply)?;
    let mediator = Derivation::by_rule(
        Rule::Triangle {
            pos: d_pos,
            sup: primes[&exposed_sub].clone(),
            sub: primes[&exposed_sup].clone(),
        },
        vec![g],
    )?;
    cut_compose(&d_shifted, pos, &mediator, d_pos)
}

impl fmt::Display for TypingJudgement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} |- ", self.term)?;
        for (k, ty) in self.context.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{ty}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{idx, word};

    fn lit11(name: &str) -> LiteralSymbol {
        LiteralSymbol::positive(name, 1, 1)
    }

    fn atom11(name: &str, up: &str, low: &str) -> TensorType {
        TensorType::atom(lit11(name), vec![idx(up)], vec![idx(low)]).unwrap()
    }

    fn over_type(b: &str, a: &str, i: &str, k: &str) -> TensorType {
        // (b/a)^i_k = ∇^al_be (b^i_al ⅋ ā^be_k)
        TensorType::nabla(
            idx("al"),
            idx("be"),
            TensorType::par(atom11(b, i, "al"), atom11(a, k, "be").dual()),
        )
    }

    fn delta_term(pairs: &[(&str, &str)]) -> TensorTerm {
        // Each pair (lower, upper).
        let mut expr = crate::term::TermExpression::one();
        for (l, u) in pairs {
            expr = expr
                .product(&crate::term::TermExpression::delta(idx(l), idx(u)))
                .unwrap();
        }
        expr.normalize()
    }

    #[test]
    fn axiom_id_instantiates_the_identity_term() {
        // valency (1,1): δ^k_i · δ^j_l ⊢ p^i_j, p̄^l_k
        let j =
            axiom_id(&lit11("p"), &[idx("i")], &[idx("j")], &[idx("l")], &[idx("k")]).unwrap();
        assert_eq!(j.term(), &delta_term(&[("i", "k"), ("l", "j")]));
        // valency (0,0): 1 ⊢ p, p̄
        let l0 = LiteralSymbol::positive("p", 0, 0);
        let j0 = axiom_id(&l0, &[], &[], &[], &[]).unwrap();
        assert!(j0.term().is_one());
        // valency (2,0): the wiring pairs reversed positions.
        let l2 = LiteralSymbol::positive("p", 2, 0);
        let j2 = axiom_id(
            &l2,
            &[idx("i1"), idx("i2")],
            &[],
            &[],
            &[idx("k1"), idx("k2")],
        )
        .unwrap();
        assert_eq!(j2.term(), &delta_term(&[("i2", "k1"), ("i1", "k2")]));
    }

    #[test]
    fn derive_a_over_a() {
        // Id; Par; Nabla gives δ^k_i ⊢ (a/a)^i_k.
        let id = Derivation::by_rule(
            Rule::Id {
                lit: lit11("a"),
                upper: vec![idx("i")],
                lower: vec![idx("j")],
                co_upper: vec![idx("l")],
                co_lower: vec![idx("k")],
            },
            Vec::new(),
        )
        .unwrap();
        let par = Derivation::by_rule(Rule::Par { left: 0, right: 1 }, vec![id]).unwrap();
        let nab = Derivation::by_rule(
            Rule::Nabla {
                pos: 0,
                sup: idx("j"),
                sub: idx("l"),
            },
            vec![par],
        )
        .unwrap();
        assert_eq!(nab.conclusion.term(), &delta_term(&[("i", "k")]));
        assert!(nab.conclusion.alpha_equal(
            &TypingJudgement::new(
                delta_term(&[("i", "k")]),
                vec![over_type("a", "a", "i", "k")]
            )
            .unwrap()
        ));
        assert!(check_derivation(&nab).is_ok());
    }

    #[test]
    fn prove_finds_id_and_slash_type() {
        let goal =
            axiom_id(&lit11("a"), &[idx("i")], &[idx("j")], &[idx("l")], &[idx("k")]).unwrap();
        assert!(prove(&goal, Budget::default()).is_found());

        let goal2 = TypingJudgement::new(
            delta_term(&[("i", "k")]),
            vec![over_type("a", "a", "i", "k")],
        )
        .unwrap();
        let d = prove(&goal2, Budget::default()).found().expect("derivable");
        assert!(check_derivation(&d).is_ok());
        assert!(d.is_cut_free());
        assert!(d.conclusion.alpha_equal(&goal2));
    }

    #[test]
    fn prove_rejects_labelled_goal() {
        // [w]^k_i ⊢ (a/a)^i_k has a letter; no rule introduces labels.
        let term = TensorTerm::edge(word("w"), idx("i"), idx("k"));
        let goal = TypingJudgement::new(term, vec![over_type("a", "a", "i", "k")]).unwrap();
        assert!(!prove(&goal, Budget::default()).is_found());
    }

    #[test]
    fn prove_closed_under_alpha() {
        let goal = TypingJudgement::new(
            delta_term(&[("u", "m")]),
            vec![over_type("a", "a", "u", "m")],
        )
        .unwrap();
        assert!(prove(&goal, Budget::default()).is_found());
    }

    #[test]
    fn judgement_alpha_equality() {
        let j1 = TypingJudgement::new(
            delta_term(&[("i", "k")]),
            vec![over_type("a", "a", "i", "k")],
        )
        .unwrap();
        let j2 = TypingJudgement::new(
            delta_term(&[("u", "m")]),
            vec![over_type("a", "a", "u", "m")],
        )
        .unwrap();
        let j3 = TypingJudgement::new(
            delta_term(&[("k", "i")]),
            vec![over_type("a", "a", "k", "i")],
        )
        .unwrap();
        let j4 = TypingJudgement::new(
            delta_term(&[("i", "k")]),
            vec![over_type("b", "a", "i", "k")],
        )
        .unwrap();
        assert!(j1.alpha_equal(&j2));
        assert!(j1.alpha_equal(&j3));
        assert!(!j1.alpha_equal(&j4));
    }

    #[test]
    fn gen_id_checks_for_compound_types() {
        let b = over_type("b", "a", "i", "k");
        let mut supply = IndexSupply::avoiding(b.all_names().iter().collect::<Vec<_>>());
        let mut primes = BTreeMap::new();
        for f in b.all_names() {
            primes.entry(f).or_insert_with(|| supply.fresh());
        }
        let (d, b_pos, d_pos) = gen_id(&b, &primes, &mut supply).unwrap();
        assert!(check_derivation(&d).is_ok());
        let ctx = d.conclusion.context();
        assert!(ctx[b_pos].alpha_equal(&b));
        assert!(alpha_match(&b.dual(), &ctx[d_pos]).is_some());
    }

    #[test]
    fn nabla_elim_agrees_with_direct_derivation() {
        let goal = TypingJudgement::new(
            delta_term(&[("i", "k")]),
            vec![over_type("a", "a", "i", "k")],
        )
        .unwrap();
        let d = prove(&goal, Budget::default()).found().unwrap();
        let elim = nabla_elim(&d).unwrap();
        assert!(check_derivation(&elim).is_ok());
        // δ^k_i δ^al_be ⊢ a^i_al ⅋ ā^be_k
        let expect = TypingJudgement::new(
            delta_term(&[("i", "k"), ("be", "al")]),
            vec![TensorType::par(
                atom11("a", "i", "al"),
                atom11("a", "k", "be").dual(),
            )],
        )
        .unwrap();
        assert!(elim.conclusion.alpha_equal(&expect));
        // Not applicable to an atomic last type.
        let id = prove(
            &axiom_id(&lit11("a"), &[idx("i")], &[idx("j")], &[idx("l")], &[idx("k")]).unwrap(),
            Budget::default(),
        )
        .found()
        .unwrap();
        assert_eq!(nabla_elim(&id).unwrap_err(), RuleError::NotNablaType);
    }

    #[test]
    fn cut_with_identity_renames() {
        let goal = TypingJudgement::new(
            delta_term(&[("i", "k")]),
            vec![over_type("a", "a", "i", "k")],
        )
        .unwrap();
        let d1 = prove(&goal, Budget::default()).found().unwrap();
        let dual_ty = over_type("a", "a", "i", "k").dual();
        let mut supply = IndexSupply::avoiding(dual_ty.all_names().iter().collect::<Vec<_>>());
        let mut primes = BTreeMap::new();
        let (fu, fl) = dual_ty.free_index_sets();
        for f in fu.iter().chain(fl.iter()) {
            primes.insert(f.clone(), supply.fresh());
        }
        let (g, g_b_pos, _) = gen_id(&dual_ty, &primes, &mut supply).unwrap();
        let cut = cut_compose(&d1, 0, &g, g_b_pos).unwrap();
        assert!(check_derivation(&cut).is_ok());
        // Re-find the conclusion cut-free.
        assert!(prove(&cut.conclusion, Budget::default()).is_found());
    }

    #[test]
    fn prove_for_context_enumerates_inhabitants() {
        let ctx = vec![over_type("a", "a", "i", "k")];
        let found = prove_for_context(&ctx, Budget::default(), 0);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].0, delta_term(&[("i", "k")]));

        let ctx2 = vec![atom11("a", "i", "j")];
        assert!(prove_for_context(&ctx2, Budget::default(), 0).is_empty());

        // ā^l_k is the dual of a^k_l.
        let ctx3 = vec![atom11("a", "i", "j"), atom11("a", "k", "l").dual()];
        let found3 = prove_for_context(&ctx3, Budget::default(), 0);
        assert_eq!(found3.len(), 1);
        assert_eq!(found3[0].0, delta_term(&[("i", "k"), ("l", "j")]));
    }
}
