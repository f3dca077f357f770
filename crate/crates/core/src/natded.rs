//! Natural deduction for the tensor type calculus.
//!
//! Terms may now contain tensor variables; deltas adjacent to a variable
//! slot are absorbed by renaming the slot, so normal forms have no removable
//! deltas. A sequent `Γ ⊢ t : A` pairs a typing context of variable
//! declarations with a typing judgement written with a colon.
//!
//! The division eliminations of Lambek calculus are admissible here and
//! expand into primitive rules: both division encodings place the dualized
//! argument type on the right of the par, where the par elimination reaches
//! it, so `(/E)`, `(\E)`, `(⊸I)` and `(⊸E)` are all derived macros.

use crate::index::{Index, IndexSupply, Word};
use crate::sequent::{
    alpha_match, prove, Budget, JudgementError, ProveResult, RuleError, TypingJudgement,
};
use crate::term::{Edge, Loop, Polarity, TensorTerm, TermError, TermExpression};
use crate::types::{TensorType, TypeError};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NdError {
    #[error("index `{index}` occurs twice at an {polarity} position")]
    IndexCollision { index: Index, polarity: Polarity },
    #[error("variable symbol `{0}` occurs twice")]
    DuplicateVariable(String),
    #[error("variable `{0}` has repeated indices")]
    BadVariable(String),
    #[error("sequent is not in canonical form: {0}")]
    NotCanonicalForm(String),
    #[error("rule inapplicable: {0}")]
    Inapplicable(String),
    #[error("axiom multiplicity violation: {0}")]
    AxiomMultiplicity(String),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Judgement(#[from] JudgementError),
    #[error(transparent)]
    Sequent(#[from] RuleError),
}

/// A tensor variable `x^U_L` with pairwise distinct indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TensorVariable {
    pub sym: String,
    pub upper: Vec<Index>,
    pub lower: Vec<Index>,
}

impl TensorVariable {
    pub fn new(
        sym: impl Into<String>,
        upper: Vec<Index>,
        lower: Vec<Index>,
    ) -> Result<Self, NdError> {
        let sym = sym.into();
        let mut seen = BTreeSet::new();
        for i in upper.iter().chain(lower.iter()) {
            if !seen.insert(i.clone()) {
                return Err(NdError::BadVariable(sym));
            }
        }
        Ok(TensorVariable { sym, upper, lower })
    }

    fn names(&self) -> impl Iterator<Item = &Index> {
        self.upper.iter().chain(self.lower.iter())
    }
}

/// One factor of a natural-deduction term expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NDFactor {
    Edge(Edge),
    Loop(Word),
    Var(TensorVariable),
}

/// A natural-deduction tensor term in canonical form: closed chains
/// contracted, variable-adjacent deltas absorbed, bound indices renamed to
/// reserved names in a deterministic scan. Equality is structural.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NDTerm {
    vars: Vec<TensorVariable>,
    edges: Vec<Edge>,
    loops: Vec<Loop>,
}

impl NDTerm {
    pub fn from_factors(factors: Vec<NDFactor>) -> Result<NDTerm, NdError> {
        canonicalize(factors)
    }

    pub fn from_closed(t: &TensorTerm) -> NDTerm {
        NDTerm {
            vars: Vec::new(),
            edges: t.edges().to_vec(),
            loops: t.loops().to_vec(),
        }
    }

    pub fn var(v: TensorVariable) -> NDTerm {
        NDTerm {
            vars: vec![v],
            edges: Vec::new(),
            loops: Vec::new(),
        }
    }

    pub fn vars(&self) -> &[TensorVariable] {
        &self.vars
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn loops(&self) -> &[Loop] {
        &self.loops
    }

    pub fn is_closed(&self) -> bool {
        self.vars.is_empty()
    }

    /// The closed part as a tensor term; `None` when variables remain.
    pub fn closed(&self) -> Option<TensorTerm> {
        if self.is_closed() {
            let mut expr = TermExpression::one();
            for e in &self.edges {
                expr = expr
                    .product(&TermExpression::edge(
                        e.label.clone(),
                        e.lower.clone(),
                        e.upper.clone(),
                    ))
                    .ok()?;
            }
            for l in &self.loops {
                expr = expr.product(&TermExpression::loop_(l.label().clone())).ok()?;
            }
            Some(expr.normalize())
        } else {
            None
        }
    }

    pub fn factors(&self) -> Vec<NDFactor> {
        let mut out: Vec<NDFactor> = self.vars.iter().cloned().map(NDFactor::Var).collect();
        out.extend(self.edges.iter().cloned().map(NDFactor::Edge));
        out.extend(self.loops.iter().map(|l| NDFactor::Loop(l.label().clone())));
        out
    }

    fn occurrences(&self) -> Vec<(Index, Polarity)> {
        let mut out = Vec::new();
        for v in &self.vars {
            out.extend(v.upper.iter().map(|i| (i.clone(), Polarity::Upper)));
            out.extend(v.lower.iter().map(|i| (i.clone(), Polarity::Lower)));
        }
        for e in &self.edges {
            out.push((e.upper.clone(), Polarity::Upper));
            out.push((e.lower.clone(), Polarity::Lower));
        }
        out
    }

    /// Free upper and lower indices: those occurring exactly once overall.
    pub fn free_indices(&self) -> (BTreeSet<Index>, BTreeSet<Index>) {
        let occs = self.occurrences();
        let mut counts: BTreeMap<&Index, usize> = BTreeMap::new();
        for (i, _) in &occs {
            *counts.entry(i).or_insert(0) += 1;
        }
        let mut uppers = BTreeSet::new();
        let mut lowers = BTreeSet::new();
        for (i, p) in &occs {
            if counts[i] == 1 {
                match p {
                    Polarity::Upper => uppers.insert(i.clone()),
                    Polarity::Lower => lowers.insert(i.clone()),
                };
            }
        }
        (uppers, lowers)
    }

    pub fn all_names(&self) -> BTreeSet<Index> {
        self.occurrences().into_iter().map(|(i, _)| i).collect()
    }

    /// Multiply two terms, keeping their bound indices apart.
    pub fn mul(&self, other: &NDTerm) -> Result<NDTerm, NdError> {
        let mut taken: BTreeSet<Index> = self.all_names();
        taken.extend(other.all_names());
        let mut supply = IndexSupply::avoiding(taken.iter().collect::<Vec<_>>());
        let (ou, ol) = other.free_indices();
        let mut shift: BTreeMap<Index, Index> = BTreeMap::new();
        for (i, _) in other.occurrences() {
            if !ou.contains(&i) && !ol.contains(&i) && self.all_names().contains(&i) {
                shift.entry(i.clone()).or_insert_with(|| supply.fresh());
            }
        }
        let relabeled = other.relabel_raw(&shift);
        let mut factors = self.factors();
        factors.extend(relabeled.factors());
        canonicalize(factors)
    }

    /// Raw uniform renaming (caller guarantees injectivity on this term).
    fn relabel_raw(&self, map: &BTreeMap<Index, Index>) -> NDTerm {
        let ren = |i: &Index| map.get(i).cloned().unwrap_or_else(|| i.clone());
        NDTerm {
            vars: self
                .vars
                .iter()
                .map(|v| TensorVariable {
                    sym: v.sym.clone(),
                    upper: v.upper.iter().map(&ren).collect(),
                    lower: v.lower.iter().map(&ren).collect(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    label: e.label.clone(),
                    lower: ren(&e.lower),
                    upper: ren(&e.upper),
                })
                .collect(),
            loops: self.loops.clone(),
        }
    }

    fn find_var(&self, sym: &str) -> Option<&TensorVariable> {
        self.vars.iter().find(|v| v.sym == sym)
    }
}

fn canonicalize(factors: Vec<NDFactor>) -> Result<NDTerm, NdError> {
    // Linearity and distinct variable symbols.
    let mut upper_seen: BTreeSet<Index> = BTreeSet::new();
    let mut lower_seen: BTreeSet<Index> = BTreeSet::new();
    let mut syms: BTreeSet<String> = BTreeSet::new();
    let check = |i: &Index, p: Polarity, set: &mut BTreeSet<Index>| {
        if !set.insert(i.clone()) {
            Err(NdError::IndexCollision {
                index: i.clone(),
                polarity: p,
            })
        } else {
            Ok(())
        }
    };
    let mut vars: Vec<TensorVariable> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut loops: Vec<Loop> = Vec::new();
    for f in &factors {
        match f {
            NDFactor::Var(v) => {
                if !syms.insert(v.sym.clone()) {
                    return Err(NdError::DuplicateVariable(v.sym.clone()));
                }
                for i in &v.upper {
                    check(i, Polarity::Upper, &mut upper_seen)?;
                }
                for i in &v.lower {
                    check(i, Polarity::Lower, &mut lower_seen)?;
                }
                vars.push(v.clone());
            }
            NDFactor::Edge(e) => {
                if e.lower == e.upper {
                    loops.push(Loop::new(e.label.clone()));
                    continue;
                }
                check(&e.upper, Polarity::Upper, &mut upper_seen)?;
                check(&e.lower, Polarity::Lower, &mut lower_seen)?;
                edges.push(e.clone());
            }
            NDFactor::Loop(w) => loops.push(Loop::new(w.clone())),
        }
    }

    // Contract edge–edge chains; variable slots anchor chain ends.
    let var_uppers: BTreeSet<Index> = vars.iter().flat_map(|v| v.upper.iter().cloned()).collect();
    let var_lowers: BTreeSet<Index> = vars.iter().flat_map(|v| v.lower.iter().cloned()).collect();
    {
        let mut by_lower: BTreeMap<Index, usize> = BTreeMap::new();
        for (k, e) in edges.iter().enumerate() {
            by_lower.insert(e.lower.clone(), k);
        }
        let by_upper: BTreeMap<Index, usize> = edges
            .iter()
            .enumerate()
            .map(|(k, e)| (e.upper.clone(), k))
            .collect();
        let mut slots: Vec<Option<Edge>> = edges.iter().cloned().map(Some).collect();
        let mut out: Vec<Edge> = Vec::new();
        // Chains starting where no edge ends and no variable slot anchors.
        for start in 0..slots.len() {
            let starts_chain = match &slots[start] {
                Some(e) => !by_upper.contains_key(&e.lower) || var_lowers.contains(&e.lower),
                None => false,
            };
            if !starts_chain {
                continue;
            }
            let Some(Edge {
                mut label,
                lower,
                mut upper,
            }) = slots[start].take()
            else {
                continue;
            };
            while !var_uppers.contains(&upper) {
                let Some(&next) = by_lower.get(&upper) else {
                    break;
                };
                let Some(e) = slots[next].take() else { break };
                label = label.concat(&e.label);
                upper = e.upper;
            }
            out.push(Edge {
                label,
                lower,
                upper,
            });
        }
        // Remaining edges lie on pure cycles.
        for start in 0..slots.len() {
            let Some(Edge {
                mut label,
                lower,
                mut upper,
            }) = slots[start].take()
            else {
                continue;
            };
            while upper != lower {
                let next = by_lower[&upper];
                let e = slots[next].take().expect("cycle edge");
                label = label.concat(&e.label);
                upper = e.upper;
            }
            loops.push(Loop::new(label));
        }
        edges = out;
    }

    // Absorb deltas adjacent to variable slots; a delta bridging two slots of
    // the same variable would repeat an index inside it and stays.
    loop {
        let mut changed = false;
        let mut k = 0;
        while k < edges.len() {
            let e = edges[k].clone();
            if !e.label.is_empty() {
                k += 1;
                continue;
            }
            // δ^i_j with i = e.upper, j = e.lower.
            let mut absorbed = false;
            for v in vars.iter_mut() {
                if let Some(p) = v.lower.iter().position(|i| *i == e.upper) {
                    // δ^i_j · x^K_{..i..} = x^K_{..j..}
                    if v.names().all(|n| *n != e.lower) {
                        v.lower[p] = e.lower.clone();
                        absorbed = true;
                    }
                    break;
                }
                if let Some(p) = v.upper.iter().position(|i| *i == e.lower) {
                    // δ^i_j · x^{..j..}_K = x^{..i..}_K
                    if v.names().all(|n| *n != e.upper) {
                        v.upper[p] = e.upper.clone();
                        absorbed = true;
                    }
                    break;
                }
            }
            if absorbed {
                edges.remove(k);
                changed = true;
            } else {
                k += 1;
            }
        }
        if !changed {
            break;
        }
    }

    // Canonical bound names: scan variables in symbol order, slots upper
    // then lower; every bound index touches a variable slot by now.
    let occs: Vec<(Index, Polarity)> = {
        let mut out = Vec::new();
        for v in &vars {
            out.extend(v.upper.iter().map(|i| (i.clone(), Polarity::Upper)));
            out.extend(v.lower.iter().map(|i| (i.clone(), Polarity::Lower)));
        }
        for e in &edges {
            out.push((e.upper.clone(), Polarity::Upper));
            out.push((e.lower.clone(), Polarity::Lower));
        }
        out
    };
    let mut counts: BTreeMap<Index, usize> = BTreeMap::new();
    for (i, _) in &occs {
        *counts.entry(i.clone()).or_insert(0) += 1;
    }
    let mut order: Vec<&TensorVariable> = vars.iter().collect();
    order.sort_by(|a, b| a.sym.cmp(&b.sym));
    let mut bound_map: BTreeMap<Index, Index> = BTreeMap::new();
    let mut next = 0usize;
    for v in order {
        for i in v.upper.iter().chain(v.lower.iter()) {
            if counts[i] == 2 && !bound_map.contains_key(i) {
                bound_map.insert(i.clone(), Index::reserved(format!("#v{next}")));
                next += 1;
            }
        }
    }
    let mut term = NDTerm {
        vars,
        edges,
        loops,
    }
    .relabel_raw(&bound_map);
    term.vars.sort_by(|a, b| a.sym.cmp(&b.sym));
    term.edges.sort_by(|a, b| {
        (&a.lower, &a.upper, &a.label).cmp(&(&b.lower, &b.upper, &b.label))
    });
    term.loops.sort();
    Ok(term)
}

impl fmt::Display for NDTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.vars.is_empty() && self.edges.is_empty() && self.loops.is_empty() {
            return f.write_str("1");
        }
        let mut first = true;
        let mut sep = |f: &mut fmt::Formatter<'_>| -> fmt::Result {
            if !first {
                f.write_str(" . ")?;
            }
            first = false;
            Ok(())
        };
        for v in &self.vars {
            sep(f)?;
            write!(f, "{}^", v.sym)?;
            write_seq(f, &v.upper)?;
            f.write_str("_")?;
            write_seq(f, &v.lower)?;
        }
        for e in &self.edges {
            sep(f)?;
            if e.label.is_empty() {
                write!(f, "d^{}_{}", e.upper, e.lower)?;
            } else {
                write!(f, "\"{}\"^{}_{}", e.label, e.upper, e.lower)?;
            }
        }
        for l in &self.loops {
            sep(f)?;
            write!(f, "loop(\"{}\")", l.label())?;
        }
        Ok(())
    }
}

fn write_seq(f: &mut fmt::Formatter<'_>, seq: &[Index]) -> fmt::Result {
    f.write_str("[")?;
    for (k, i) in seq.iter().enumerate() {
        if k > 0 {
            f.write_str(",")?;
        }
        write!(f, "{i}")?;
    }
    f.write_str("]")
}

/// `x : A` with the variable's free indices mirroring the type's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub var: TensorVariable,
    pub ty: TensorType,
}

impl Declaration {
    pub fn new(var: TensorVariable, ty: TensorType) -> Result<Self, NdError> {
        ty.wellformed()?;
        let (tu, tl) = ty.free_index_sets();
        let vu: BTreeSet<Index> = var.upper.iter().cloned().collect();
        let vl: BTreeSet<Index> = var.lower.iter().cloned().collect();
        if vu != tl || vl != tu {
            return Err(NdError::Inapplicable(format!(
                "declaration of `{}` does not mirror its type",
                var.sym
            )));
        }
        Ok(Declaration { var, ty })
    }

    /// The canonical declaration for a type: slots in type traversal order.
    pub fn for_type(sym: impl Into<String>, ty: &TensorType) -> Result<Self, NdError> {
        ty.wellformed()?;
        let (tu, tl) = ty.free_index_seqs();
        let var = TensorVariable::new(sym, tl, tu)?;
        Declaration::new(var, ty.clone())
    }
}

/// `Γ ⊢ t : A`. The context is kept sorted by variable symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NDSequent {
    context: Vec<Declaration>,
    term: NDTerm,
    ty: TensorType,
}

impl NDSequent {
    pub fn new(
        mut context: Vec<Declaration>,
        term: NDTerm,
        ty: TensorType,
    ) -> Result<Self, NdError> {
        ty.wellformed()?;
        let mut syms = BTreeSet::new();
        for d in &context {
            if !syms.insert(d.var.sym.clone()) {
                return Err(NdError::DuplicateVariable(d.var.sym.clone()));
            }
        }
        let used: BTreeSet<String> = term.vars.iter().map(|v| v.sym.clone()).collect();
        if syms != used {
            return Err(NdError::Inapplicable(
                "declared variables must be exactly those used in the term".into(),
            ));
        }
        for v in &term.vars {
            let d = context.iter().find(|d| d.var.sym == v.sym).unwrap();
            if v.upper.len() != d.var.upper.len() || v.lower.len() != d.var.lower.len() {
                return Err(NdError::Inapplicable(format!(
                    "occurrence of `{}` does not match its declared valency",
                    v.sym
                )));
            }
        }
        let (tu, tl) = term.free_indices();
        let (yu, yl) = ty.free_index_sets();
        if tu != yl || tl != yu {
            return Err(NdError::Judgement(JudgementError::Unbalanced(
                tu.symmetric_difference(&yl)
                    .chain(tl.symmetric_difference(&yu))
                    .next()
                    .cloned()
                    .unwrap_or_else(|| Index::reserved("#?".to_string())),
            )));
        }
        context.sort_by(|a, b| a.var.sym.cmp(&b.var.sym));
        Ok(NDSequent { context, term, ty })
    }

    pub fn context(&self) -> &[Declaration] {
        &self.context
    }

    pub fn term(&self) -> &NDTerm {
        &self.term
    }

    pub fn ty(&self) -> &TensorType {
        &self.ty
    }

    pub fn all_names(&self) -> BTreeSet<Index> {
        let mut out = self.term.all_names();
        out.extend(self.ty.all_names());
        for d in &self.context {
            out.extend(d.ty.all_names());
            out.extend(d.var.names().cloned());
        }
        out
    }

    pub fn supply(&self) -> IndexSupply {
        IndexSupply::avoiding(self.all_names().iter().collect::<Vec<_>>())
    }

    fn decl(&self, sym: &str) -> Option<&Declaration> {
        self.context.iter().find(|d| d.var.sym == sym)
    }
}

impl fmt::Display for NDSequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.context.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}^", d.var.sym)?;
            write_seq(f, &d.var.upper)?;
            f.write_str("_")?;
            write_seq(f, &d.var.lower)?;
            write!(f, " : {}", d.ty)?;
        }
        if !self.context.is_empty() {
            f.write_str(" ")?;
        }
        write!(f, "|- {} : {}", self.term, self.ty)
    }
}

/// Natural-deduction rules. All but `UnderElim` are the primitive rules;
/// `UnderElim` is the admissible left-division elimination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NDRule {
    /// `X : A ⊢ X : A`.
    Id,
    /// Nonlogical axiom `⊢ τ : A`, a lexicon entry.
    Lex { name: String },
    /// Abstract the declared variable into `B ⅋ ā^{I'}_{J'}`.
    ParIntro {
        var: String,
        co_upper: Vec<Index>,
        co_lower: Vec<Index>,
    },
    /// `Γ ⊢ s : B ⅋ Ā` and `Θ ⊢ t : A` give `Γ,Θ ⊢ st : B`.
    ParElim,
    TensorIntro,
    /// Split a tensor into the two declared variables of the minor premise.
    TensorElim { x: String, y: String },
    /// Remove the ε-edge from `sub` to `sup` and bind the pair.
    NablaIntro { sup: Index, sub: Index },
    /// Expose a ∇-bound pair as an ε-edge.
    NablaElim { sup: Index, sub: Index },
    /// Glue the two free vertices and bind the pair.
    DeltaIntro { sup: Index, sub: Index },
    /// Use a Δ-typed judgement through the declared variable of the minor
    /// premise, which carries the glue `δ^sub_sup` on that variable.
    DeltaElim { x: String },
}

impl NDRule {
    pub fn name(&self) -> &'static str {
        match self {
            NDRule::Id => "id",
            NDRule::Lex { .. } => "lex",
            NDRule::ParIntro { .. } => "par-intro",
            NDRule::ParElim => "par-elim",
            NDRule::TensorIntro => "tensor-intro",
            NDRule::TensorElim { .. } => "tensor-elim",
            NDRule::NablaIntro { .. } => "nabla-intro",
            NDRule::NablaElim { .. } => "nabla-elim",
            NDRule::DeltaIntro { .. } => "delta-intro",
            NDRule::DeltaElim { .. } => "delta-elim",
        }
    }

    fn rename(&self, map: &BTreeMap<Index, Index>) -> NDRule {
        let ren = |i: &Index| map.get(i).cloned().unwrap_or_else(|| i.clone());
        match self {
            NDRule::ParIntro {
                var,
                co_upper,
                co_lower,
            } => NDRule::ParIntro {
                var: var.clone(),
                co_upper: co_upper.iter().map(&ren).collect(),
                co_lower: co_lower.iter().map(&ren).collect(),
            },
            NDRule::NablaIntro { sup, sub } => NDRule::NablaIntro {
                sup: ren(sup),
                sub: ren(sub),
            },
            NDRule::NablaElim { sup, sub } => NDRule::NablaElim {
                sup: ren(sup),
                sub: ren(sub),
            },
            NDRule::DeltaIntro { sup, sub } => NDRule::DeltaIntro {
                sup: ren(sup),
                sub: ren(sub),
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NDDerivation {
    pub rule: NDRule,
    pub premises: Vec<NDDerivation>,
    pub conclusion: NDSequent,
}

impl NDDerivation {
    pub fn id(decl: Declaration) -> Result<NDDerivation, NdError> {
        let conclusion = NDSequent::new(
            vec![decl.clone()],
            NDTerm::var(decl.var.clone()),
            decl.ty.clone(),
        )?;
        Ok(NDDerivation {
            rule: NDRule::Id,
            premises: Vec::new(),
            conclusion,
        })
    }

    pub fn lex(
        name: impl Into<String>,
        term: &TensorTerm,
        ty: &TensorType,
    ) -> Result<NDDerivation, NdError> {
        if !term.classify().lexical {
            return Err(NdError::Inapplicable(
                "lexicon entries must have lexical terms".into(),
            ));
        }
        let conclusion = NDSequent::new(Vec::new(), NDTerm::from_closed(term), ty.clone())?;
        Ok(NDDerivation {
            rule: NDRule::Lex { name: name.into() },
            premises: Vec::new(),
            conclusion,
        })
    }

    pub fn by_rule(rule: NDRule, premises: Vec<NDDerivation>) -> Result<NDDerivation, NdError> {
        let concs: Vec<&NDSequent> = premises.iter().map(|d| &d.conclusion).collect();
        let conclusion = apply_nd(&rule, &concs)?;
        Ok(NDDerivation {
            rule,
            premises,
            conclusion,
        })
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(NDDerivation::size).sum::<usize>()
    }

    fn collect_names(&self, out: &mut BTreeSet<Index>) {
        out.extend(self.conclusion.all_names());
        match &self.rule {
            NDRule::ParIntro {
                co_upper, co_lower, ..
            } => {
                out.extend(co_upper.iter().cloned());
                out.extend(co_lower.iter().cloned());
            }
            NDRule::NablaIntro { sup, sub }
            | NDRule::NablaElim { sup, sub }
            | NDRule::DeltaIntro { sup, sub } => {
                out.insert(sup.clone());
                out.insert(sub.clone());
            }
            _ => {}
        }
        for p in &self.premises {
            p.collect_names(out);
        }
    }

    /// Uniform injective relabeling, freshening collisions with targets.
    pub fn relabel(&self, map: &BTreeMap<Index, Index>) -> NDDerivation {
        let mut names = BTreeSet::new();
        self.collect_names(&mut names);
        let sources: BTreeSet<&Index> = map.keys().collect();
        let mut total = map.clone();
        let mut supply =
            IndexSupply::avoiding(names.iter().chain(map.values()).collect::<Vec<_>>());
        for n in &names {
            if !sources.contains(n) && map.values().any(|t| t == n) {
                total.insert(n.clone(), supply.fresh());
            }
        }
        self.relabel_total(&total)
    }

    fn relabel_total(&self, map: &BTreeMap<Index, Index>) -> NDDerivation {
        let conclusion = NDSequent {
            context: self
                .conclusion
                .context
                .iter()
                .map(|d| Declaration {
                    var: TensorVariable {
                        sym: d.var.sym.clone(),
                        upper: d
                            .var
                            .upper
                            .iter()
                            .map(|i| map.get(i).cloned().unwrap_or_else(|| i.clone()))
                            .collect(),
                        lower: d
                            .var
                            .lower
                            .iter()
                            .map(|i| map.get(i).cloned().unwrap_or_else(|| i.clone()))
                            .collect(),
                    },
                    ty: crate::sequent::rename_all_names(&d.ty, map),
                })
                .collect(),
            term: self.conclusion.term.relabel_raw(map),
            ty: crate::sequent::rename_all_names(&self.conclusion.ty, map),
        };
        NDDerivation {
            rule: self.rule.rename(map),
            premises: self
                .premises
                .iter()
                .map(|p| p.relabel_total(map))
                .collect(),
            conclusion,
        }
    }
}

/// Remove the variable from the term, renaming each bound slot-bond to the
/// variable's declared index; free slot values must already be declared.
fn extract_at_declared(term: &NDTerm, decl: &TensorVariable) -> Result<Vec<NDFactor>, NdError> {
    let occ = term
        .find_var(&decl.sym)
        .ok_or_else(|| NdError::Inapplicable(format!("variable `{}` not in term", decl.sym)))?
        .clone();
    let mut rest: Vec<NDFactor> = term
        .factors()
        .into_iter()
        .filter(|f| !matches!(f, NDFactor::Var(v) if v.sym == decl.sym))
        .collect();
    let rest_names = |rest: &Vec<NDFactor>| -> BTreeSet<Index> {
        let mut out = BTreeSet::new();
        for f in rest {
            match f {
                NDFactor::Var(v) => out.extend(v.names().cloned()),
                NDFactor::Edge(e) => {
                    out.insert(e.lower.clone());
                    out.insert(e.upper.clone());
                }
                NDFactor::Loop(_) => {}
            }
        }
        out
    };
    let rename_in_rest = |rest: &mut Vec<NDFactor>, from: &Index, to: &Index| {
        for f in rest.iter_mut() {
            match f {
                NDFactor::Var(v) => {
                    for i in v.upper.iter_mut().chain(v.lower.iter_mut()) {
                        if i == from {
                            *i = to.clone();
                        }
                    }
                }
                NDFactor::Edge(e) => {
                    if &e.lower == from {
                        e.lower = to.clone();
                    }
                    if &e.upper == from {
                        e.upper = to.clone();
                    }
                }
                NDFactor::Loop(_) => {}
            }
        }
    };
    for (have, want) in occ
        .upper
        .iter()
        .zip(decl.upper.iter())
        .chain(occ.lower.iter().zip(decl.lower.iter()))
    {
        if have == want {
            continue;
        }
        let names = rest_names(&rest);
        if !names.contains(have) {
            // The slot held a free index different from the declared name.
            return Err(NdError::Inapplicable(format!(
                "occurrence of `{}` is not at its declared indices",
                decl.sym
            )));
        }
        if names.contains(want) {
            return Err(NdError::Inapplicable(format!(
                "declared index `{want}` already occurs in the remaining term"
            )));
        }
        rename_in_rest(&mut rest, have, want);
    }
    Ok(rest)
}

/// Forward application of a natural-deduction rule.
pub fn apply_nd(rule: &NDRule, premises: &[&NDSequent]) -> Result<NDSequent, NdError> {
    let need = |k: usize| -> Result<(), NdError> {
        if premises.len() != k {
            Err(NdError::Inapplicable(format!(
                "expected {k} premises, got {}",
                premises.len()
            )))
        } else {
            Ok(())
        }
    };
    match rule {
        NDRule::Id | NDRule::Lex { .. } => Err(NdError::Inapplicable(
            "leaves carry their own conclusion".into(),
        )),
        NDRule::ParIntro {
            var,
            co_upper,
            co_lower,
        } => {
            need(1)?;
            let p = premises[0];
            let decl = p
                .decl(var)
                .ok_or_else(|| NdError::Inapplicable(format!("no declaration for `{var}`")))?
                .clone();
            let occ = p
                .term
                .find_var(var)
                .ok_or_else(|| NdError::Inapplicable(format!("`{var}` not in term")))?
                .clone();
            // Declared type a^J_I with I the variable's upper slots, J the
            // lower ones; the abstraction produces ā^{I'}_{J'}.
            let i_len = decl.var.upper.len();
            let j_len = decl.var.lower.len();
            if co_lower.len() != i_len || co_upper.len() != j_len {
                return Err(NdError::Inapplicable(
                    "fresh index sequences do not match the variable's valency".into(),
                ));
            }
            let names = p.all_names();
            let mut seen = BTreeSet::new();
            for i in co_upper.iter().chain(co_lower.iter()) {
                if names.contains(i) || !seen.insert(i.clone()) {
                    return Err(NdError::Inapplicable(format!(
                        "abstraction index `{i}` is not fresh"
                    )));
                }
            }
            // t · δ^{J'K̄}_{L̄I'} where K, L are the occurrence sequences.
            let mut factors: Vec<NDFactor> = term_minus_var(&p.term, var);
            let k_seq = &occ.upper;
            let l_seq = &occ.lower;
            for s in 0..j_len {
                // δ^{J'_s}_{L̄_s}
                factors.push(NDFactor::Edge(Edge {
                    label: Word::epsilon(),
                    lower: l_seq[l_seq.len() - 1 - s].clone(),
                    upper: co_upper[s].clone(),
                }));
            }
            for s in 0..i_len {
                // δ^{K̄_s}_{I'_s}
                factors.push(NDFactor::Edge(Edge {
                    label: Word::epsilon(),
                    lower: co_lower[s].clone(),
                    upper: k_seq[k_seq.len() - 1 - s].clone(),
                }));
            }
            let term = canonicalize(factors)?;
            let dual_sym = decl.ty.dual().type_symbol();
            let mut supply = p.supply();
            supply.reserve(co_upper.iter().chain(co_lower.iter()).collect::<Vec<_>>());
            let abar = dual_sym.instantiate(co_upper, co_lower, &mut supply)?;
            let ty = TensorType::par(p.ty.clone(), abar);
            let ctx: Vec<Declaration> = p
                .context
                .iter()
                .filter(|d| d.var.sym != *var)
                .cloned()
                .collect();
            NDSequent::new(ctx, term, ty)
        }
        NDRule::ParElim => {
            need(2)?;
            let (p1, p2) = (premises[0], premises[1]);
            let TensorType::Par(b, abar) = &p1.ty else {
                return Err(NdError::Inapplicable(
                    "first premise must have a par type".into(),
                ));
            };
            match alpha_match(&p2.ty.dual(), abar) {
                Some(pairs) if pairs.iter().all(|(x, y)| x == y) => {}
                _ => {
                    return Err(NdError::Inapplicable(
                        "second premise is not the dual of the par's right factor".into(),
                    ))
                }
            }
            merge_sequents(p1, p2, b.as_ref().clone())
        }
        NDRule::TensorIntro => {
            need(2)?;
            let (p1, p2) = (premises[0], premises[1]);
            let ty = TensorType::tensor(p1.ty.clone(), p2.ty.clone());
            merge_sequents(p1, p2, ty)
        }
        NDRule::TensorElim { x, y } => {
            need(2)?;
            let (p1, p2) = (premises[0], premises[1]);
            let TensorType::Tensor(a, b) = &p1.ty else {
                return Err(NdError::Inapplicable(
                    "major premise must have a tensor type".into(),
                ));
            };
            let dx = p2
                .decl(x)
                .ok_or_else(|| NdError::Inapplicable(format!("no declaration for `{x}`")))?
                .clone();
            let dy = p2
                .decl(y)
                .ok_or_else(|| NdError::Inapplicable(format!("no declaration for `{y}`")))?
                .clone();
            if &dx.ty != a.as_ref() || &dy.ty != b.as_ref() {
                return Err(NdError::Inapplicable(
                    "minor premise variables must be declared at the tensor factors".into(),
                ));
            }
            let rest = extract_at_declared(&p2.term, &dx.var)?;
            let rest_term = canonicalize(rest)?;
            let rest = extract_at_declared(&rest_term, &dy.var)?;
            let s = canonicalize(rest)?;
            let term = p1.term.mul(&s)?;
            let mut ctx: Vec<Declaration> = p1.context.clone();
            ctx.extend(
                p2.context
                    .iter()
                    .filter(|d| d.var.sym != *x && d.var.sym != *y)
                    .cloned(),
            );
            NDSequent::new(ctx, term, p2.ty.clone())
        }
        NDRule::NablaIntro { sup, sub } => {
            need(1)?;
            let p = premises[0];
            let (fu, fl) = p.ty.free_index_sets();
            if !fl.contains(sup) || !fu.contains(sub) {
                return Err(NdError::Inapplicable(format!(
                    "binder pair ({sup},{sub}) is not free in the type"
                )));
            }
            let edge = Edge {
                label: Word::epsilon(),
                lower: sub.clone(),
                upper: sup.clone(),
            };
            let pos = p
                .term
                .edges
                .iter()
                .position(|e| e == &edge)
                .ok_or_else(|| {
                    NdError::Inapplicable(format!("term has no ε-edge from `{sub}` to `{sup}`"))
                })?;
            let mut term = p.term.clone();
            term.edges.remove(pos);
            let ty = TensorType::nabla(sup.clone(), sub.clone(), p.ty.clone());
            NDSequent::new(p.context.clone(), term, ty)
        }
        NDRule::NablaElim { sup, sub } => {
            need(1)?;
            let p = premises[0];
            if !matches!(p.ty, TensorType::Nabla { .. }) {
                return Err(NdError::Inapplicable("type is not a nabla type".into()));
            }
            let names = p.all_names();
            if names.contains(sup) || names.contains(sub) || sup == sub {
                return Err(NdError::Inapplicable(
                    "elimination names must be fresh".into(),
                ));
            }
            let body = p.ty.unbind(sup, sub).expect("nabla type");
            let factors = {
                let mut fs = p.term.factors();
                fs.push(NDFactor::Edge(Edge {
                    label: Word::epsilon(),
                    lower: sub.clone(),
                    upper: sup.clone(),
                }));
                fs
            };
            NDSequent::new(p.context.clone(), canonicalize(factors)?, body)
        }
        NDRule::DeltaIntro { sup, sub } => {
            need(1)?;
            let p = premises[0];
            let (fu, fl) = p.ty.free_index_sets();
            if !fl.contains(sup) || !fu.contains(sub) {
                return Err(NdError::Inapplicable(format!(
                    "binder pair ({sup},{sub}) is not free in the type"
                )));
            }
            let factors = {
                let mut fs = p.term.factors();
                fs.push(NDFactor::Edge(Edge {
                    label: Word::epsilon(),
                    lower: sup.clone(),
                    upper: sub.clone(),
                }));
                fs
            };
            let ty = TensorType::delta(sup.clone(), sub.clone(), p.ty.clone());
            NDSequent::new(p.context.clone(), canonicalize(factors)?, ty)
        }
        NDRule::DeltaElim { x } => {
            need(2)?;
            let (p1, p2) = (premises[0], premises[1]);
            let TensorType::Delta { .. } = &p1.ty else {
                return Err(NdError::Inapplicable(
                    "major premise must have a delta type".into(),
                ));
            };
            let dx = p2
                .decl(x)
                .ok_or_else(|| NdError::Inapplicable(format!("no declaration for `{x}`")))?
                .clone();
            // The declared type must be the delta body with the bound pair
            // exposed; identify the exposed pair positionally.
            let mut supply = p1.supply();
            supply.reserve(p2.all_names().iter().collect::<Vec<_>>());
            let probe_sup = supply.fresh();
            let probe_sub = supply.fresh();
            let body = p1.ty.unbind(&probe_sup, &probe_sub).expect("delta type");
            let pairs = alpha_match(&body, &dx.ty).ok_or_else(|| {
                NdError::Inapplicable("minor declaration does not match the delta body".into())
            })?;
            let mut alpha_name: Option<Index> = None;
            let mut beta_name: Option<Index> = None;
            for (want, have) in &pairs {
                if want == &probe_sup {
                    alpha_name = Some(have.clone());
                } else if want == &probe_sub {
                    beta_name = Some(have.clone());
                } else if want != have {
                    return Err(NdError::Inapplicable(
                        "minor declaration must share the delta type's free indices".into(),
                    ));
                }
            }
            let alpha = alpha_name.ok_or_else(|| {
                NdError::Inapplicable("could not locate the bound pair".into())
            })?;
            let beta = beta_name.ok_or_else(|| {
                NdError::Inapplicable("could not locate the bound pair".into())
            })?;
            // Locate the glue δ^β_α sitting on the variable's α/β slots.
            let occ = p2
                .term
                .find_var(x)
                .ok_or_else(|| NdError::Inapplicable(format!("`{x}` not in term")))?
                .clone();
            let pa = dx
                .var
                .upper
                .iter()
                .position(|i| *i == alpha)
                .ok_or_else(|| NdError::Inapplicable("bound pair not on the variable".into()))?;
            let pb = dx
                .var
                .lower
                .iter()
                .position(|i| *i == beta)
                .ok_or_else(|| NdError::Inapplicable("bound pair not on the variable".into()))?;
            let nu1 = occ.upper[pa].clone();
            let nu2 = occ.lower[pb].clone();
            let glue = Edge {
                label: Word::epsilon(),
                lower: nu1.clone(),
                upper: nu2.clone(),
            };
            let gpos = p2.term.edges.iter().position(|e| e == &glue).ok_or_else(|| {
                NdError::Inapplicable("minor term does not carry the glue delta".into())
            })?;
            let mut reduced = p2.term.clone();
            reduced.edges.remove(gpos);
            // With the glue gone, the variable must sit at its declared
            // indices (the glued slots become the declared pair).
            let mut target_decl = dx.var.clone();
            target_decl.upper[pa] = nu1;
            target_decl.lower[pb] = nu2;
            let rest = extract_at_declared(&reduced, &target_decl)?;
            let s = canonicalize(rest)?;
            let term = p1.term.mul(&s)?;
            let mut ctx: Vec<Declaration> = p1.context.clone();
            ctx.extend(p2.context.iter().filter(|d| d.var.sym != *x).cloned());
            NDSequent::new(ctx, term, p2.ty.clone())
        }
    }
}

fn term_minus_var(term: &NDTerm, sym: &str) -> Vec<NDFactor> {
    term.factors()
        .into_iter()
        .filter(|f| !matches!(f, NDFactor::Var(v) if v.sym == sym))
        .collect()
}

fn merge_sequents(
    p1: &NDSequent,
    p2: &NDSequent,
    ty: TensorType,
) -> Result<NDSequent, NdError> {
    for d in &p1.context {
        if p2.decl(&d.var.sym).is_some() {
            return Err(NdError::DuplicateVariable(d.var.sym.clone()));
        }
    }
    let term = p1.term.mul(&p2.term)?;
    let mut ctx = p1.context.clone();
    ctx.extend(p2.context.iter().cloned());
    NDSequent::new(ctx, term, ty)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("natural deduction derivation invalid at {path:?}: {error}")]
pub struct NdCheckError {
    pub path: Vec<usize>,
    pub error: NdError,
}

/// Re-validate every node.
pub fn nd_check(d: &NDDerivation) -> Result<(), NdCheckError> {
    fn go(d: &NDDerivation, path: &mut Vec<usize>) -> Result<(), NdCheckError> {
        for (k, p) in d.premises.iter().enumerate() {
            path.push(k);
            go(p, path)?;
            path.pop();
        }
        match &d.rule {
            NDRule::Id => {
                let ok = d.conclusion.context.len() == 1
                    && d.conclusion.term.vars.len() == 1
                    && d.conclusion.term.edges.is_empty()
                    && d.conclusion.term.loops.is_empty()
                    && d.conclusion.term.vars[0] == d.conclusion.context[0].var
                    && d.conclusion.ty == d.conclusion.context[0].ty;
                if ok {
                    Ok(())
                } else {
                    Err(NdCheckError {
                        path: path.clone(),
                        error: NdError::Inapplicable("malformed identity leaf".into()),
                    })
                }
            }
            NDRule::Lex { .. } => {
                let lexical = d
                    .conclusion
                    .term
                    .closed()
                    .map(|t| t.classify().lexical)
                    .unwrap_or(false);
                if d.conclusion.context.is_empty() && lexical {
                    Ok(())
                } else {
                    Err(NdCheckError {
                        path: path.clone(),
                        error: NdError::Inapplicable("malformed lexicon leaf".into()),
                    })
                }
            }
            rule => {
                let concs: Vec<&NDSequent> = d.premises.iter().map(|p| &p.conclusion).collect();
                match apply_nd(rule, &concs) {
                    Ok(s) if s == d.conclusion => Ok(()),
                    Ok(_) => Err(NdCheckError {
                        path: path.clone(),
                        error: NdError::Inapplicable(
                            "stored conclusion differs from rule output".into(),
                        ),
                    }),
                    Err(e) => Err(NdCheckError {
                        path: path.clone(),
                        error: e,
                    }),
                }
            }
        }
    }
    go(d, &mut Vec::new())
}

/// The sequent-calculus translation of an n.d. sequent: each declaration
/// becomes a fresh dual type in the context wired by an identity delta
/// block, and the residue of the term must be pure.
pub fn nd_to_sequent(seq: &NDSequent) -> Result<TypingJudgement, NdError> {
    let mut supply = seq.supply();
    let mut factors: Vec<NDFactor> = Vec::new();
    for f in seq.term.factors() {
        match &f {
            NDFactor::Var(_) => {}
            NDFactor::Edge(e) => {
                if !e.label.is_empty() {
                    return Err(NdError::NotCanonicalForm(format!(
                        "residual factor `{}` carries terminal symbols",
                        seq.term
                    )));
                }
                factors.push(f.clone());
            }
            NDFactor::Loop(w) => {
                if !w.is_empty() {
                    return Err(NdError::NotCanonicalForm(
                        "residual loop carries terminal symbols".into(),
                    ));
                }
                factors.push(f.clone());
            }
        }
    }
    // Context entries in reverse declaration order after the principal type.
    let mut ctx: Vec<TensorType> = vec![seq.ty.clone()];
    let mut entries: Vec<TensorType> = Vec::new();
    for decl in &seq.context {
        let occ = seq
            .term
            .find_var(&decl.var.sym)
            .expect("declared variable occurs")
            .clone();
        // Type sequences I (free uppers) and J (free lowers); the slot of
        // the variable holding a type-free name n mirrors n.
        let (i_seq, j_seq) = decl.ty.free_index_seqs();
        let occval = |n: &Index| -> Index {
            if let Some(p) = decl.var.upper.iter().position(|x| x == n) {
                occ.upper[p].clone()
            } else if let Some(p) = decl.var.lower.iter().position(|x| x == n) {
                occ.lower[p].clone()
            } else {
                unreachable!("declaration mirrors its type")
            }
        };
        let iprime = supply.fresh_many(i_seq.len());
        let jprime = supply.fresh_many(j_seq.len());
        // δ^{I'J̄}_{ĪJ'} block, at the occurrence's wiring.
        let n_i = i_seq.len();
        for s in 0..n_i {
            factors.push(NDFactor::Edge(Edge {
                label: Word::epsilon(),
                lower: occval(&i_seq[n_i - 1 - s]),
                upper: iprime[s].clone(),
            }));
        }
        let n_j = j_seq.len();
        for s in 0..n_j {
            factors.push(NDFactor::Edge(Edge {
                label: Word::epsilon(),
                lower: jprime[s].clone(),
                upper: occval(&j_seq[n_j - 1 - s]),
            }));
        }
        let dual_sym = decl.ty.dual().type_symbol();
        let entry = dual_sym.instantiate(&jprime, &iprime, &mut supply)?;
        entries.push(entry);
    }
    entries.reverse();
    ctx.extend(entries);
    let term = canonicalize(factors)?
        .closed()
        .expect("variables were dropped");
    Ok(TypingJudgement::new(term, ctx)?)
}

/// Decide derivability of an n.d. sequent through its translation.
pub fn nd_equivalence_check(seq: &NDSequent, budget: Budget) -> Result<bool, NdError> {
    let judgement = nd_to_sequent(seq)?;
    Ok(matches!(prove(&judgement, budget), ProveResult::Found(_)))
}

/// Replace every lexicon leaf by a fresh variable declaration; the inverse
/// of substituting the lexical terms for the variables. Returns the rebuilt
/// derivation and the internalized entries in leaf order.
pub fn deduction_internalize(
    d: &NDDerivation,
) -> Result<(NDDerivation, Vec<(String, NDSequent)>), NdError> {
    fn go(
        d: &NDDerivation,
        counter: &mut usize,
        taken: &BTreeSet<String>,
        out: &mut Vec<(String, NDSequent)>,
    ) -> Result<NDDerivation, NdError> {
        if let NDRule::Lex { .. } = &d.rule {
            let mut sym;
            loop {
                sym = format!("v{counter}");
                *counter += 1;
                if !taken.contains(&sym) {
                    break;
                }
            }
            let decl = Declaration::for_type(sym.clone(), &d.conclusion.ty)?;
            out.push((sym, d.conclusion.clone()));
            return NDDerivation::id(decl);
        }
        let premises = d
            .premises
            .iter()
            .map(|p| go(p, counter, taken, out))
            .collect::<Result<Vec<_>, _>>()?;
        if matches!(d.rule, NDRule::Id) {
            return Ok(d.clone());
        }
        NDDerivation::by_rule(d.rule.clone(), premises)
    }
    let mut taken: BTreeSet<String> = BTreeSet::new();
    fn syms(d: &NDDerivation, out: &mut BTreeSet<String>) {
        for dcl in &d.conclusion.context {
            out.insert(dcl.var.sym.clone());
        }
        for p in &d.premises {
            syms(p, out);
        }
    }
    syms(d, &mut taken);
    let mut out = Vec::new();
    let mut counter = 0usize;
    let rebuilt = go(d, &mut counter, &taken, &mut out)?;
    Ok((rebuilt, out))
}

/// Substitute lexicalized judgements back for internalized variables:
/// identity leaves of the assigned variables become lexicon leaves again.
pub fn deduction_externalize(
    d: &NDDerivation,
    assignments: &BTreeMap<String, (String, NDSequent)>,
) -> Result<NDDerivation, NdError> {
    fn go(
        d: &NDDerivation,
        assignments: &BTreeMap<String, (String, NDSequent)>,
    ) -> Result<NDDerivation, NdError> {
        if let NDRule::Id = &d.rule {
            let sym = &d.conclusion.context[0].var.sym;
            if let Some((name, entry)) = assignments.get(sym) {
                // Re-index the entry's α-class at the leaf's type.
                let pairs = alpha_match(&entry.ty, &d.conclusion.ty).ok_or_else(|| {
                    NdError::AxiomMultiplicity(format!(
                        "entry `{name}` does not fit the leaf type"
                    ))
                })?;
                let map: BTreeMap<Index, Index> = pairs.into_iter().collect();
                let term = entry
                    .term
                    .relabel_raw(&map)
                    .closed()
                    .ok_or_else(|| NdError::AxiomMultiplicity("entry is not closed".into()))?;
                return NDDerivation::lex(name.clone(), &term, &d.conclusion.ty);
            }
            return Ok(d.clone());
        }
        if d.premises.is_empty() {
            return Ok(d.clone());
        }
        let premises = d
            .premises
            .iter()
            .map(|p| go(p, assignments))
            .collect::<Result<Vec<_>, _>>()?;
        NDDerivation::by_rule(d.rule.clone(), premises)
    }
    go(d, assignments)
}

/// `(/E)`: from `Γ ⊢ t : (b/a)^i_j` and `Θ ⊢ s : a^j_k` derive
/// `Γ,Θ ⊢ ts : b^i_k`, expanded into nabla and par eliminations.
pub fn nd_over_elim(d1: &NDDerivation, d2: &NDDerivation) -> Result<NDDerivation, NdError> {
    let ty1 = d1.conclusion.ty().clone();
    if !matches!(ty1, TensorType::Nabla { .. }) {
        return Err(NdError::Inapplicable(
            "first premise must have a division type".into(),
        ));
    }
    let mut names = BTreeSet::new();
    d1.collect_names(&mut names);
    d2.collect_names(&mut names);
    let mut supply = IndexSupply::avoiding(names.iter().collect::<Vec<_>>());
    let alpha0 = supply.fresh();
    let beta0 = supply.fresh();
    let body = ty1.unbind(&alpha0, &beta0).expect("nabla type");
    let TensorType::Par(_, abar) = &body else {
        return Err(NdError::Inapplicable("the nabla body must be a par".into()));
    };
    let opened = NDDerivation::by_rule(
        NDRule::NablaElim {
            sup: alpha0.clone(),
            sub: beta0.clone(),
        },
        vec![d1.clone()],
    )?;
    // Align the second premise with the dual of the par's right factor.
    let want = abar.dual();
    let pairs = alpha_match(&want, d2.conclusion.ty()).ok_or_else(|| {
        NdError::Inapplicable("second premise does not fit the argument type".into())
    })?;
    // Remember which of d2's frees ends up as the fresh unbound name, so the
    // division's output index can be restored afterwards.
    let mut restored: Option<Index> = None;
    let mut map = BTreeMap::new();
    for (w, h) in &pairs {
        if w != h {
            map.insert(h.clone(), w.clone());
        }
        if *w == beta0 {
            restored = Some(h.clone());
        }
    }
    let d2r = d2.relabel(&map);
    let node = NDDerivation::by_rule(NDRule::ParElim, vec![opened, d2r])?;
    // Rename the exposed output vertex back to the argument's original name
    // when it is still available.
    if let Some(orig) = restored {
        let mut final_names = BTreeSet::new();
        node.collect_names(&mut final_names);
        if !final_names.contains(&orig) {
            let mut back = BTreeMap::new();
            back.insert(alpha0, orig);
            return Ok(node.relabel(&back));
        }
    }
    Ok(node)
}

/// `(⊸E)`: identical to the par elimination after aligning the premise.
pub fn nd_imp_elim(d1: &NDDerivation, d2: &NDDerivation) -> Result<NDDerivation, NdError> {
    let TensorType::Par(_, abar) = d1.conclusion.ty() else {
        return Err(NdError::Inapplicable(
            "first premise must have an implication type".into(),
        ));
    };
    let want = abar.dual();
    let pairs = alpha_match(&want, d2.conclusion.ty()).ok_or_else(|| {
        NdError::Inapplicable("second premise does not fit the argument type".into())
    })?;
    let map: BTreeMap<Index, Index> = pairs
        .into_iter()
        .filter(|(w, h)| w != h)
        .map(|(w, h)| (h, w))
        .collect();
    let d2r = d2.relabel(&map);
    NDDerivation::by_rule(NDRule::ParElim, vec![d1.clone(), d2r])
}

/// `(\E)`: from `Γ ⊢ s : a^i_j` and `Θ ⊢ t : (a\b)^j_k` derive
/// `Γ,Θ ⊢ st : b^i_k`, expanded like the right division: the left division
/// also keeps the dualized argument on the right of its par.
pub fn nd_under_elim(d1: &NDDerivation, d2: &NDDerivation) -> Result<NDDerivation, NdError> {
    let ty2 = d2.conclusion.ty().clone();
    if !matches!(ty2, TensorType::Nabla { .. }) {
        return Err(NdError::Inapplicable(
            "second premise must have a division type".into(),
        ));
    }
    let mut names = BTreeSet::new();
    d1.collect_names(&mut names);
    d2.collect_names(&mut names);
    let mut supply = IndexSupply::avoiding(names.iter().collect::<Vec<_>>());
    let alpha0 = supply.fresh();
    let beta0 = supply.fresh();
    let body = ty2.unbind(&alpha0, &beta0).expect("nabla type");
    let TensorType::Par(_, abar) = &body else {
        return Err(NdError::Inapplicable("the nabla body must be a par".into()));
    };
    let opened = NDDerivation::by_rule(
        NDRule::NablaElim {
            sup: alpha0.clone(),
            sub: beta0.clone(),
        },
        vec![d2.clone()],
    )?;
    let want = abar.dual();
    let pairs = alpha_match(&want, d1.conclusion.ty()).ok_or_else(|| {
        NdError::Inapplicable("first premise does not fit the argument type".into())
    })?;
    let mut restored: Option<Index> = None;
    let mut map = BTreeMap::new();
    for (w, h) in &pairs {
        if w != h {
            map.insert(h.clone(), w.clone());
        }
        if *w == alpha0 {
            restored = Some(h.clone());
        }
    }
    let d1r = d1.relabel(&map);
    let node = NDDerivation::by_rule(NDRule::ParElim, vec![opened, d1r])?;
    if let Some(orig) = restored {
        let mut final_names = BTreeSet::new();
        node.collect_names(&mut final_names);
        if !final_names.contains(&orig) {
            let mut back = BTreeMap::new();
            back.insert(beta0, orig);
            return Ok(node.relabel(&back));
        }
    }
    Ok(node)
}

/// `(⊸I)`: abstraction is exactly the par introduction.
pub fn nd_imp_intro(
    d: &NDDerivation,
    var: &str,
    co_upper: Vec<Index>,
    co_lower: Vec<Index>,
) -> Result<NDDerivation, NdError> {
    NDDerivation::by_rule(
        NDRule::ParIntro {
            var: var.to_string(),
            co_upper,
            co_lower,
        },
        vec![d.clone()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{idx, word};
    use crate::types::LiteralSymbol;

    fn lit11(name: &str) -> LiteralSymbol {
        LiteralSymbol::positive(name, 1, 1)
    }

    fn atom11(name: &str, up: &str, low: &str) -> TensorType {
        TensorType::atom(lit11(name), vec![idx(up)], vec![idx(low)]).unwrap()
    }

    fn var(sym: &str, upper: &[&str], lower: &[&str]) -> TensorVariable {
        TensorVariable::new(
            sym,
            upper.iter().map(|s| idx(s)).collect(),
            lower.iter().map(|s| idx(s)).collect(),
        )
        .unwrap()
    }

    fn delta(lower: &str, upper: &str) -> NDFactor {
        NDFactor::Edge(Edge {
            label: Word::epsilon(),
            lower: idx(lower),
            upper: idx(upper),
        })
    }

    #[test]
    fn deltas_absorb_into_variable_slots() {
        // δ^k_i · y^j_m · x^i_j = y^j_m · x^k_j
        let t1 = canonicalize(vec![
            delta("i", "k"),
            NDFactor::Var(var("y", &["j"], &["m"])),
            NDFactor::Var(var("x", &["i"], &["j"])),
        ])
        .unwrap();
        let t2 = canonicalize(vec![
            NDFactor::Var(var("y", &["j"], &["m"])),
            NDFactor::Var(var("x", &["k"], &["j"])),
        ])
        .unwrap();
        assert_eq!(t1, t2);
        let (fu, fl) = t1.free_indices();
        assert!(fu.contains(&idx("k")));
        assert!(fl.contains(&idx("m")));
    }

    #[test]
    fn bound_names_are_immaterial() {
        // x^i_j y^j_k = x^i_u y^u_k
        let t1 = canonicalize(vec![
            NDFactor::Var(var("x", &["i"], &["j"])),
            NDFactor::Var(var("y", &["j"], &["k"])),
        ])
        .unwrap();
        let t2 = canonicalize(vec![
            NDFactor::Var(var("x", &["i"], &["u"])),
            NDFactor::Var(var("y", &["u"], &["k"])),
        ])
        .unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn self_delta_is_stuck() {
        // δ^j_i with i an upper slot and j a lower slot of the same variable.
        let t = canonicalize(vec![
            NDFactor::Var(var("x", &["i"], &["j"])),
            delta("i", "j"),
        ])
        .unwrap();
        assert_eq!(t.edges().len(), 1);
        assert_eq!(t.vars().len(), 1);
    }

    /// The worked two-variable derivation: from identity leaves for
    /// `y : (b/a)^m_j` and `x : a^v_u`, the nabla and par eliminations give
    /// `y, x ⊢ y^j_m x^k_j : b^m_k`.
    #[test]
    fn figure_6a_derivation() {
        // (b/a)^m_j = ∇^k_i (b^m_k ⅋ ā^i_j)
        let over = TensorType::nabla(
            idx("k"),
            idx("i"),
            TensorType::par(atom11("b", "m", "k"), atom11("a", "j", "i").dual()),
        );
        let y_decl = Declaration::for_type("y", &over).unwrap();
        assert_eq!(y_decl.var, var("y", &["j"], &["m"]));
        let d_y = NDDerivation::id(y_decl).unwrap();
        let x_decl = Declaration::for_type("x", &atom11("a", "v", "u")).unwrap();
        let d_x = NDDerivation::id(x_decl).unwrap();
        let d = nd_over_elim(&d_y, &d_x).unwrap();
        assert!(nd_check(&d).is_ok());
        // Conclusion: y:(b/a)^m_j, x:a^v_u ⊢ y^j_m x^u_j : b^m_u, the worked
        // derivation with the output vertex named after x's own lower index.
        let expect_term = canonicalize(vec![
            NDFactor::Var(var("y", &["j"], &["m"])),
            NDFactor::Var(var("x", &["u"], &["j"])),
        ])
        .unwrap();
        assert_eq!(d.conclusion.term(), &expect_term);
        assert_eq!(d.conclusion.ty(), &atom11("b", "m", "u"));
        // Its translation is derivable in the sequent calculus.
        assert!(nd_equivalence_check(&d.conclusion, Budget::default()).unwrap());
    }

    #[test]
    fn id_translation_matches_axiom() {
        let decl = Declaration::for_type("x", &atom11("a", "j", "i")).unwrap();
        let d = NDDerivation::id(decl).unwrap();
        let j = nd_to_sequent(&d.conclusion).unwrap();
        let ax = crate::sequent::axiom_id(
            &lit11("a"),
            &[idx("j")],
            &[idx("i")],
            &[idx("l")],
            &[idx("k")],
        )
        .unwrap();
        assert!(j.alpha_equal(&ax));
    }

    #[test]
    fn non_factorable_term_is_rejected() {
        // A letter-labelled residue cannot be pulled out of the variables.
        let seq = NDSequent::new(
            vec![Declaration::for_type("x", &atom11("a", "j", "i")).unwrap()],
            canonicalize(vec![
                NDFactor::Var(var("x", &["u"], &["j"])),
                NDFactor::Edge(Edge {
                    label: word("w"),
                    lower: idx("u"),
                    upper: idx("i"),
                }),
            ])
            .unwrap(),
            atom11("a", "j", "i"),
        )
        .unwrap();
        assert!(matches!(
            nd_to_sequent(&seq),
            Err(NdError::NotCanonicalForm(_))
        ));
    }

    #[test]
    fn internalize_round_trip() {
        // ⊢ [Mary] : np composed with ⊢ [runs] : np\s via the admissible
        // elimination; internalizing and externalizing is the identity on
        // the conclusion.
        let np = atom11("np", "i", "j");
        let mary = TensorTerm::edge(word("Mary"), idx("i"), idx("j"));
        let d_mary = NDDerivation::lex("Mary", &mary, &np).unwrap();
        // (np\s)^j_k = ∇^al_be(s^be_k ⅋ np̄^j_al)
        let under = TensorType::nabla(
            idx("al"),
            idx("be"),
            TensorType::par(
                atom11("s", "be", "k"),
                atom11("np", "al", "j").dual(),
            ),
        );
        let runs = TensorTerm::edge(word("runs"), idx("j"), idx("k"));
        let d_runs = NDDerivation::lex("runs", &runs, &under).unwrap();
        let d = nd_under_elim(&d_mary, &d_runs).unwrap();
        assert!(nd_check(&d).is_ok());
        let closed = d.conclusion.term().closed().unwrap();
        assert_eq!(
            closed,
            TensorTerm::edge(word("Mary runs"), idx("i"), idx("k"))
        );
        let (internal, entries) = deduction_internalize(&d).unwrap();
        assert!(nd_check(&internal).is_ok());
        assert_eq!(entries.len(), 2);
        assert_eq!(internal.conclusion.context().len(), 2);
        let assignments: BTreeMap<String, (String, NDSequent)> = entries
            .iter()
            .map(|(sym, entry)| {
                let name = match entry.term().edges().first() {
                    Some(e) => format!("{}", e.label),
                    None => String::new(),
                };
                (sym.clone(), (name, entry.clone()))
            })
            .collect();
        let external = deduction_externalize(&internal, &assignments).unwrap();
        assert!(nd_check(&external).is_ok());
        assert_eq!(external.conclusion, d.conclusion);
    }

    #[test]
    fn internalized_translation_is_provable() {
        let np = atom11("np", "i", "j");
        let mary = TensorTerm::edge(word("Mary"), idx("i"), idx("j"));
        let d_mary = NDDerivation::lex("Mary", &mary, &np).unwrap();
        let under = TensorType::nabla(
            idx("al"),
            idx("be"),
            TensorType::par(
                atom11("s", "be", "k"),
                atom11("np", "al", "j").dual(),
            ),
        );
        let runs = TensorTerm::edge(word("runs"), idx("j"), idx("k"));
        let d_runs = NDDerivation::lex("runs", &runs, &under).unwrap();
        let d = nd_under_elim(&d_mary, &d_runs).unwrap();
        let (internal, _) = deduction_internalize(&d).unwrap();
        assert!(nd_equivalence_check(&internal.conclusion, Budget::default()).unwrap());
    }
}
