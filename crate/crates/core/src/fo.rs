//! First-order multiplicative linear logic with balanced valencies.
//!
//! Predicate symbols split their argument slots into left and right groups;
//! occurrence polarity is computed by induction, flipping under implication
//! antecedents and sequent antecedents. Cut-free derivations of balanced
//! one-sided sequents induce occurrence nets: perfect same-name matchings
//! between left and right free occurrences. On strictly balanced sequents
//! the derived existential rule glues two links without ever leaving the
//! fragment, and the translations to and from the tensor calculus live here.

use crate::index::{Index, IndexSupply};
use crate::sequent::{
    axiom_id, check_derivation, Derivation, Rule as EttcRule, RuleError, TypingJudgement,
};
use crate::term::Edge;
use crate::types::{LiteralSymbol, TensorType, TypeError};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FoError {
    #[error("bad occurrence address")]
    BadAddress,
    #[error("sequent is not balanced")]
    NotBalanced,
    #[error("sequent is not strictly balanced")]
    NotStrictlyBalanced,
    #[error("link is not in the occurrence net")]
    LinkNotInNet,
    #[error("the two occurrences carry the same name")]
    SameName,
    #[error("derivation is outside the image of the translation: {0}")]
    NotInImage(String),
    #[error("endpoint count does not match the antecedent length")]
    EndpointCountMismatch,
    #[error("rule inapplicable: {0}")]
    Inapplicable(String),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Ettc(#[from] RuleError),
}

/// An individual variable or constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FOTerm {
    Var(String),
    Const(String),
}

impl FOTerm {
    pub fn name(&self) -> &str {
        match self {
            FOTerm::Var(n) | FOTerm::Const(n) => n,
        }
    }
}

impl fmt::Display for FOTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A predicate symbol with a valency `(left slots, right slots)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredSym {
    pub name: String,
    pub negated: bool,
    pub valency: (usize, usize),
}

impl PredSym {
    pub fn positive(name: impl Into<String>, left: usize, right: usize) -> Self {
        PredSym {
            name: name.into(),
            negated: false,
            valency: (left, right),
        }
    }

    pub fn dual(&self) -> PredSym {
        PredSym {
            name: self.name.clone(),
            negated: !self.negated,
            valency: (self.valency.1, self.valency.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FOFormula {
    Atom {
        pred: PredSym,
        left: Vec<FOTerm>,
        right: Vec<FOTerm>,
    },
    Tensor(Box<FOFormula>, Box<FOFormula>),
    Par(Box<FOFormula>, Box<FOFormula>),
    /// Intuitionistic implication; expanded away by the one-sided translation.
    Impl(Box<FOFormula>, Box<FOFormula>),
    Forall(String, Box<FOFormula>),
    Exists(String, Box<FOFormula>),
}

impl FOFormula {
    pub fn atom(pred: PredSym, left: Vec<FOTerm>, right: Vec<FOTerm>) -> Result<Self, FoError> {
        if left.len() != pred.valency.0 || right.len() != pred.valency.1 {
            return Err(FoError::Inapplicable(format!(
                "atom `{}` does not match its valency",
                pred.name
            )));
        }
        Ok(FOFormula::Atom { pred, left, right })
    }

    pub fn tensor(a: FOFormula, b: FOFormula) -> Self {
        FOFormula::Tensor(Box::new(a), Box::new(b))
    }

    pub fn par(a: FOFormula, b: FOFormula) -> Self {
        FOFormula::Par(Box::new(a), Box::new(b))
    }

    pub fn impl_(a: FOFormula, b: FOFormula) -> Self {
        FOFormula::Impl(Box::new(a), Box::new(b))
    }

    pub fn forall(x: impl Into<String>, a: FOFormula) -> Self {
        FOFormula::Forall(x.into(), Box::new(a))
    }

    pub fn exists(x: impl Into<String>, a: FOFormula) -> Self {
        FOFormula::Exists(x.into(), Box::new(a))
    }

    pub fn is_mll(&self) -> bool {
        match self {
            FOFormula::Atom { .. } => true,
            FOFormula::Tensor(a, b) | FOFormula::Par(a, b) => a.is_mll() && b.is_mll(),
            FOFormula::Impl(..) => false,
            FOFormula::Forall(_, a) | FOFormula::Exists(_, a) => a.is_mll(),
        }
    }

    /// Linear negation: definable, with argument reversal at atoms and the
    /// factor flip typical of noncommutative presentations.
    pub fn dual(&self) -> FOFormula {
        match self {
            FOFormula::Atom { pred, left, right } => {
                let mut l: Vec<FOTerm> = right.clone();
                l.reverse();
                let mut r: Vec<FOTerm> = left.clone();
                r.reverse();
                FOFormula::Atom {
                    pred: pred.dual(),
                    left: l,
                    right: r,
                }
            }
            FOFormula::Tensor(a, b) => FOFormula::par(b.dual(), a.dual()),
            FOFormula::Par(a, b) => FOFormula::tensor(b.dual(), a.dual()),
            FOFormula::Impl(..) => panic!("dual is defined on the one-sided language"),
            FOFormula::Forall(x, a) => FOFormula::exists(x.clone(), a.dual()),
            FOFormula::Exists(x, a) => FOFormula::forall(x.clone(), a.dual()),
        }
    }

    /// Expand implications: `A ⊸ B = B ⅋ Ā`.
    pub fn to_mll(&self) -> FOFormula {
        match self {
            FOFormula::Atom { .. } => self.clone(),
            FOFormula::Tensor(a, b) => FOFormula::tensor(a.to_mll(), b.to_mll()),
            FOFormula::Par(a, b) => FOFormula::par(a.to_mll(), b.to_mll()),
            FOFormula::Impl(a, b) => FOFormula::par(b.to_mll(), a.to_mll().dual()),
            FOFormula::Forall(x, a) => FOFormula::forall(x.clone(), a.to_mll()),
            FOFormula::Exists(x, a) => FOFormula::exists(x.clone(), a.to_mll()),
        }
    }

    /// Substitute a term for all free occurrences of a variable.
    pub fn subst(&self, var: &str, term: &FOTerm) -> FOFormula {
        match self {
            FOFormula::Atom { pred, left, right } => {
                let s = |t: &FOTerm| match t {
                    FOTerm::Var(n) if n == var => term.clone(),
                    other => other.clone(),
                };
                FOFormula::Atom {
                    pred: pred.clone(),
                    left: left.iter().map(&s).collect(),
                    right: right.iter().map(&s).collect(),
                }
            }
            FOFormula::Tensor(a, b) => FOFormula::tensor(a.subst(var, term), b.subst(var, term)),
            FOFormula::Par(a, b) => FOFormula::par(a.subst(var, term), b.subst(var, term)),
            FOFormula::Impl(a, b) => FOFormula::impl_(a.subst(var, term), b.subst(var, term)),
            FOFormula::Forall(x, a) if x != var => {
                FOFormula::forall(x.clone(), a.subst(var, term))
            }
            FOFormula::Exists(x, a) if x != var => {
                FOFormula::exists(x.clone(), a.subst(var, term))
            }
            other => other.clone(),
        }
    }

    /// Free variable names.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for occ in formula_occurrences(self) {
            if occ.bound_depth.is_none() {
                if let FOTerm::Var(n) = &occ.term {
                    out.insert(n.clone());
                }
            }
        }
        out
    }

    /// Every name occurring anywhere (variables, constants, bound names).
    pub fn all_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn go(f: &FOFormula, out: &mut BTreeSet<String>) {
            match f {
                FOFormula::Atom { left, right, .. } => {
                    for t in left.iter().chain(right.iter()) {
                        out.insert(t.name().to_string());
                    }
                }
                FOFormula::Tensor(a, b) | FOFormula::Par(a, b) | FOFormula::Impl(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                FOFormula::Forall(x, a) | FOFormula::Exists(x, a) => {
                    out.insert(x.clone());
                    go(a, out);
                }
            }
        }
        go(self, &mut out);
        out
    }
}

/// A step into a formula tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    L,
    R,
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArgSide {
    Left,
    Right,
}

/// A stable address of an argument occurrence inside a sequent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occ {
    pub formula: usize,
    pub steps: Vec<Step>,
    pub side: ArgSide,
    pub slot: usize,
}

/// An occurrence together with its computed data.
#[derive(Debug, Clone)]
pub struct OccInfo {
    pub steps: Vec<Step>,
    pub side: ArgSide,
    pub slot: usize,
    pub term: FOTerm,
    /// +1 right, −1 left.
    pub sign: i8,
    /// Depth of the binder that captures this variable occurrence, if any.
    pub bound_depth: Option<usize>,
}

/// All argument occurrences of a formula with signs and binder capture.
pub fn formula_occurrences(f: &FOFormula) -> Vec<OccInfo> {
    fn go(
        f: &FOFormula,
        steps: &mut Vec<Step>,
        sign: i8,
        env: &mut Vec<(String, usize)>,
        out: &mut Vec<OccInfo>,
    ) {
        match f {
            FOFormula::Atom { left, right, .. } => {
                for (slot, t) in left.iter().enumerate() {
                    let bound_depth = match t {
                        FOTerm::Var(n) => env.iter().rev().find(|(m, _)| m == n).map(|(_, d)| *d),
                        FOTerm::Const(_) => None,
                    };
                    out.push(OccInfo {
                        steps: steps.clone(),
                        side: ArgSide::Left,
                        slot,
                        term: t.clone(),
                        sign: -sign,
                        bound_depth,
                    });
                }
                for (slot, t) in right.iter().enumerate() {
                    let bound_depth = match t {
                        FOTerm::Var(n) => env.iter().rev().find(|(m, _)| m == n).map(|(_, d)| *d),
                        FOTerm::Const(_) => None,
                    };
                    out.push(OccInfo {
                        steps: steps.clone(),
                        side: ArgSide::Right,
                        slot,
                        term: t.clone(),
                        sign,
                        bound_depth,
                    });
                }
            }
            FOFormula::Tensor(a, b) | FOFormula::Par(a, b) => {
                steps.push(Step::L);
                go(a, steps, sign, env, out);
                steps.pop();
                steps.push(Step::R);
                go(b, steps, sign, env, out);
                steps.pop();
            }
            FOFormula::Impl(a, b) => {
                steps.push(Step::L);
                go(a, steps, -sign, env, out);
                steps.pop();
                steps.push(Step::R);
                go(b, steps, sign, env, out);
                steps.pop();
            }
            FOFormula::Forall(x, a) | FOFormula::Exists(x, a) => {
                env.push((x.clone(), steps.len()));
                steps.push(Step::Body);
                go(a, steps, sign, env, out);
                steps.pop();
                env.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(f, &mut Vec::new(), 1, &mut Vec::new(), &mut out);
    out
}

/// A sequent: two-sided (intuitionistic) or one-sided (classical).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FOSequent {
    TwoSided {
        antecedent: Vec<FOFormula>,
        succedent: FOFormula,
    },
    OneSided(Vec<FOFormula>),
}

impl FOSequent {
    /// Formulas with their sequent-level sign multiplier.
    fn signed_formulas(&self) -> Vec<(&FOFormula, i8)> {
        match self {
            FOSequent::TwoSided {
                antecedent,
                succedent,
            } => {
                let mut v: Vec<(&FOFormula, i8)> =
                    antecedent.iter().map(|f| (f, -1)).collect();
                v.push((succedent, 1));
                v
            }
            FOSequent::OneSided(ctx) => ctx.iter().map(|f| (f, 1)).collect(),
        }
    }
}

/// Polarity of an occurrence within a sequent: −1 left, +1 right.
pub fn polarity(seq: &FOSequent, occ: &Occ) -> Result<i8, FoError> {
    let formulas = seq.signed_formulas();
    let (f, mult) = formulas.get(occ.formula).ok_or(FoError::BadAddress)?;
    for info in formula_occurrences(f) {
        if info.steps == occ.steps && info.side == occ.side && info.slot == occ.slot {
            return Ok(info.sign * mult);
        }
    }
    Err(FoError::BadAddress)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Balance {
    Unbalanced,
    Balanced,
    StrictlyBalanced,
}

/// Classify a sequent: balanced when every quantifier binds exactly one left
/// and one right occurrence, strictly balanced when additionally every free
/// name has at most one occurrence per polarity.
pub fn balance_check(seq: &FOSequent) -> Balance {
    let mut free: BTreeMap<(String, i8), usize> = BTreeMap::new();
    for (f, mult) in seq.signed_formulas() {
        if !quantifiers_balanced(f, mult) {
            return Balance::Unbalanced;
        }
        for info in formula_occurrences(f) {
            if info.bound_depth.is_none() {
                *free
                    .entry((info.term.name().to_string(), info.sign * mult))
                    .or_insert(0) += 1;
            }
        }
    }
    if free.values().all(|&c| c <= 1) {
        Balance::StrictlyBalanced
    } else {
        Balance::Balanced
    }
}

fn quantifiers_balanced(f: &FOFormula, mult: i8) -> bool {
    // For each quantifier node, the occurrences it captures must be exactly
    // one of each polarity.
    fn go(f: &FOFormula, depth: usize, mult: i8) -> bool {
        match f {
            FOFormula::Atom { .. } => true,
            FOFormula::Tensor(a, b) | FOFormula::Par(a, b) => {
                go(a, depth + 1, mult) && go(b, depth + 1, mult)
            }
            FOFormula::Impl(a, b) => go(a, depth + 1, mult) && go(b, depth + 1, mult),
            FOFormula::Forall(_, a) | FOFormula::Exists(_, a) => {
                let occs = formula_occurrences(f);
                let mut lefts = 0;
                let mut rights = 0;
                for o in &occs {
                    if o.bound_depth == Some(depth) {
                        if o.sign * mult < 0 {
                            lefts += 1;
                        } else {
                            rights += 1;
                        }
                    }
                }
                lefts == 1 && rights == 1 && go(a, depth + 1, mult)
            }
        }
    }
    go(f, 0, mult)
}

/// The one-sided translation `A₁,…,Aₙ ⊢ B  ⟼  ⊢ B, Āₙ, …, Ā₁` with
/// implications expanded.
pub fn mill_to_mll(seq: &FOSequent) -> Vec<FOFormula> {
    match seq {
        FOSequent::OneSided(ctx) => ctx.iter().map(|f| f.to_mll()).collect(),
        FOSequent::TwoSided {
            antecedent,
            succedent,
        } => {
            let mut out = vec![succedent.to_mll()];
            for a in antecedent.iter().rev() {
                out.push(a.to_mll().dual());
            }
            out
        }
    }
}

/// One-sided sequent rules. Conclusions are stored, so checking recomputes
/// the premise shape expected by each rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FORule {
    /// `⊢ Ā, A` for an atom `A`.
    Id,
    /// Combine `ctx[left] ⅋ ctx[right]`, result at `left`.
    Par { left: usize, right: usize },
    /// Premises `⊢ Γ,A` and `⊢ B,Θ`; conclusion `Γ, A⊗B, Θ`.
    Tensor { left_pos: usize, right_pos: usize },
    /// Generalize the fresh variable at the two bound positions.
    Forall { pos: usize, var: String },
    /// Abstract the witness at the bound positions of the body.
    Exists {
        pos: usize,
        var: String,
        witness: FOTerm,
    },
    /// The derived existential: rename the two links to a fresh name and
    /// quantify, staying strictly balanced throughout.
    ExistsPrime {
        pos: usize,
        var: String,
        glue: FOTerm,
        s_occ: Occ,
        t_occ: Occ,
    },
}

impl FORule {
    pub fn name(&self) -> &'static str {
        match self {
            FORule::Id => "id",
            FORule::Par { .. } => "par",
            FORule::Tensor { .. } => "tensor",
            FORule::Forall { .. } => "forall",
            FORule::Exists { .. } => "exists",
            FORule::ExistsPrime { .. } => "exists'",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FODerivation {
    pub rule: FORule,
    pub premises: Vec<FODerivation>,
    pub conclusion: Vec<FOFormula>,
}

impl FODerivation {
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(FODerivation::size).sum::<usize>()
    }

    pub fn axiom(atom: FOFormula) -> Result<FODerivation, FoError> {
        if !matches!(atom, FOFormula::Atom { .. }) {
            return Err(FoError::Inapplicable("identity needs an atom".into()));
        }
        Ok(FODerivation {
            rule: FORule::Id,
            premises: Vec::new(),
            conclusion: vec![atom.dual(), atom],
        })
    }

    pub fn par(premise: FODerivation, left: usize, right: usize) -> Result<FODerivation, FoError> {
        let ctx = &premise.conclusion;
        if left >= ctx.len() || right >= ctx.len() || left == right {
            return Err(FoError::Inapplicable("par positions out of range".into()));
        }
        let mut out = Vec::new();
        for (k, f) in ctx.iter().enumerate() {
            if k == left {
                out.push(FOFormula::par(ctx[left].clone(), ctx[right].clone()));
            } else if k != right {
                out.push(f.clone());
            }
        }
        Ok(FODerivation {
            rule: FORule::Par { left, right },
            premises: vec![premise],
            conclusion: out,
        })
    }

    pub fn tensor(
        p1: FODerivation,
        left_pos: usize,
        p2: FODerivation,
        right_pos: usize,
    ) -> Result<FODerivation, FoError> {
        if left_pos >= p1.conclusion.len() || right_pos >= p2.conclusion.len() {
            return Err(FoError::Inapplicable("tensor positions out of range".into()));
        }
        let mut out = Vec::new();
        for (k, f) in p1.conclusion.iter().enumerate() {
            if k != left_pos {
                out.push(f.clone());
            }
        }
        out.push(FOFormula::tensor(
            p1.conclusion[left_pos].clone(),
            p2.conclusion[right_pos].clone(),
        ));
        for (k, f) in p2.conclusion.iter().enumerate() {
            if k != right_pos {
                out.push(f.clone());
            }
        }
        Ok(FODerivation {
            rule: FORule::Tensor {
                left_pos,
                right_pos,
            },
            premises: vec![p1, p2],
            conclusion: out,
        })
    }

    pub fn forall(premise: FODerivation, pos: usize, var: &str) -> Result<FODerivation, FoError> {
        let ctx = &premise.conclusion;
        if pos >= ctx.len() {
            return Err(FoError::Inapplicable("forall position out of range".into()));
        }
        for (k, f) in ctx.iter().enumerate() {
            if k != pos && f.free_vars().contains(var) {
                return Err(FoError::Inapplicable(format!(
                    "`{var}` occurs free outside the principal formula"
                )));
            }
        }
        let mut out = ctx.clone();
        out[pos] = FOFormula::forall(var, ctx[pos].clone());
        Ok(FODerivation {
            rule: FORule::Forall {
                pos,
                var: var.to_string(),
            },
            premises: vec![premise],
            conclusion: out,
        })
    }

    /// The body must restore the premise formula when the witness replaces
    /// the bound variable.
    pub fn exists(
        premise: FODerivation,
        pos: usize,
        var: &str,
        body: FOFormula,
        witness: FOTerm,
    ) -> Result<FODerivation, FoError> {
        let ctx = &premise.conclusion;
        if pos >= ctx.len() {
            return Err(FoError::Inapplicable("exists position out of range".into()));
        }
        if body.subst(var, &witness) != ctx[pos] {
            return Err(FoError::Inapplicable(
                "body does not match the premise at the witness".into(),
            ));
        }
        for (k, f) in ctx.iter().enumerate() {
            if k != pos && f.free_vars().contains(var) {
                return Err(FoError::Inapplicable(format!(
                    "`{var}` occurs free outside the principal formula"
                )));
            }
        }
        if body.free_vars().contains(var) != body.subst(var, &witness).eq(&ctx[pos]) {
            // unreachable; kept for clarity of intent
        }
        let mut out = ctx.clone();
        out[pos] = FOFormula::exists(var, body);
        Ok(FODerivation {
            rule: FORule::Exists {
                pos,
                var: var.to_string(),
                witness,
            },
            premises: vec![premise],
            conclusion: out,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("first-order derivation invalid at {path:?}: {error}")]
pub struct FoCheckError {
    pub path: Vec<usize>,
    pub error: FoError,
}

/// Re-validate every node of a one-sided derivation.
pub fn fo_check(d: &FODerivation) -> Result<(), FoCheckError> {
    fn fail(path: &[usize], msg: &str) -> FoCheckError {
        FoCheckError {
            path: path.to_vec(),
            error: FoError::Inapplicable(msg.into()),
        }
    }
    fn go(d: &FODerivation, path: &mut Vec<usize>) -> Result<(), FoCheckError> {
        for (k, p) in d.premises.iter().enumerate() {
            path.push(k);
            go(p, path)?;
            path.pop();
        }
        let rebuilt: Result<FODerivation, FoError> = match &d.rule {
            FORule::Id => {
                if d.conclusion.len() == 2 && d.conclusion[0] == d.conclusion[1].dual() {
                    if matches!(d.conclusion[1], FOFormula::Atom { .. }) {
                        return Ok(());
                    }
                }
                return Err(fail(path, "malformed identity"));
            }
            FORule::Par { left, right } => d
                .premises
                .first()
                .ok_or_else(|| FoError::Inapplicable("missing premise".into()))
                .and_then(|p| FODerivation::par(p.clone(), *left, *right)),
            FORule::Tensor {
                left_pos,
                right_pos,
            } => {
                if d.premises.len() != 2 {
                    return Err(fail(path, "tensor needs two premises"));
                }
                FODerivation::tensor(
                    d.premises[0].clone(),
                    *left_pos,
                    d.premises[1].clone(),
                    *right_pos,
                )
            }
            FORule::Forall { pos, var } => d
                .premises
                .first()
                .ok_or_else(|| FoError::Inapplicable("missing premise".into()))
                .and_then(|p| FODerivation::forall(p.clone(), *pos, var)),
            FORule::Exists { pos, var, witness } => {
                let Some(p) = d.premises.first() else {
                    return Err(fail(path, "missing premise"));
                };
                let Some(FOFormula::Exists(v, body)) = d.conclusion.get(*pos) else {
                    return Err(fail(path, "conclusion is not an existential"));
                };
                if v != var {
                    return Err(fail(path, "bound variable mismatch"));
                }
                FODerivation::exists(p.clone(), *pos, var, body.as_ref().clone(), witness.clone())
            }
            FORule::ExistsPrime {
                pos,
                var,
                glue,
                s_occ,
                t_occ,
            } => {
                let Some(p) = d.premises.first() else {
                    return Err(fail(path, "missing premise"));
                };
                exists_prime_node(p.clone(), *pos, var, glue, s_occ, t_occ)
            }
        };
        match rebuilt {
            Ok(r) if r.conclusion == d.conclusion => Ok(()),
            Ok(_) => Err(fail(path, "stored conclusion differs from rule output")),
            Err(e) => Err(FoCheckError {
                path: path.clone(),
                error: e,
            }),
        }
    }
    go(d, &mut Vec::new())
}

/// Every sequent in the derivation, for strictness checks.
pub fn all_sequents(d: &FODerivation) -> Vec<Vec<FOFormula>> {
    let mut out = vec![d.conclusion.clone()];
    for p in &d.premises {
        out.extend(all_sequents(p));
    }
    out
}

fn names_in_sequent(ctx: &[FOFormula]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for f in ctx {
        out.extend(f.all_names());
    }
    out
}

fn names_in_derivation(d: &FODerivation) -> BTreeSet<String> {
    let mut out = names_in_sequent(&d.conclusion);
    for p in &d.premises {
        out.extend(names_in_derivation(p));
    }
    out
}

/// Bounded cut-free backward search for one-sided sequents. Existential
/// witnesses range over the terms occurring in the sequent plus one fresh
/// constant per application.
pub fn fo_prove(goal: &[FOFormula], budget: crate::sequent::Budget) -> Option<FODerivation> {
    struct S {
        nodes_left: usize,
        failed: BTreeMap<String, usize>,
        success: BTreeMap<String, FODerivation>,
        fresh: usize,
    }
    fn key(ctx: &[FOFormula]) -> String {
        // Bound variables renamed canonically by display with de Bruijn-ish
        // numbering is overkill here: sequents are small, so the plain
        // display of a bound-canonicalized sequent serves as the memo key.
        fn canon(f: &FOFormula, env: &mut Vec<(String, String)>, k: &mut usize) -> FOFormula {
            match f {
                FOFormula::Atom { pred, left, right } => {
                    let s = |t: &FOTerm| match t {
                        FOTerm::Var(n) => {
                            if let Some((_, c)) = env.iter().rev().find(|(m, _)| m == n) {
                                FOTerm::Var(c.clone())
                            } else {
                                t.clone()
                            }
                        }
                        c => c.clone(),
                    };
                    FOFormula::Atom {
                        pred: pred.clone(),
                        left: left.iter().map(&s).collect(),
                        right: right.iter().map(&s).collect(),
                    }
                }
                FOFormula::Tensor(a, b) => {
                    let a = canon(a, env, k);
                    let b = canon(b, env, k);
                    FOFormula::tensor(a, b)
                }
                FOFormula::Par(a, b) => {
                    let a = canon(a, env, k);
                    let b = canon(b, env, k);
                    FOFormula::par(a, b)
                }
                FOFormula::Impl(a, b) => {
                    let a = canon(a, env, k);
                    let b = canon(b, env, k);
                    FOFormula::impl_(a, b)
                }
                FOFormula::Forall(x, a) | FOFormula::Exists(x, a) => {
                    let c = format!("#b{k}");
                    *k += 1;
                    env.push((x.clone(), c.clone()));
                    let body = canon(a, env, k);
                    env.pop();
                    match f {
                        FOFormula::Forall(..) => FOFormula::forall(c, body),
                        _ => FOFormula::exists(c, body),
                    }
                }
            }
        }
        let mut k = 0;
        ctx.iter()
            .map(|f| format!("{}", canon(f, &mut Vec::new(), &mut k)))
            .collect::<Vec<_>>()
            .join(" ,, ")
    }
    fn feasible(ctx: &[FOFormula]) -> bool {
        let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
        fn walk<'a>(f: &'a FOFormula, counts: &mut BTreeMap<&'a str, i64>) {
            match f {
                FOFormula::Atom { pred, .. } => {
                    *counts.entry(pred.name.as_str()).or_insert(0) +=
                        if pred.negated { -1 } else { 1 };
                }
                FOFormula::Tensor(a, b) | FOFormula::Par(a, b) | FOFormula::Impl(a, b) => {
                    walk(a, counts);
                    walk(b, counts);
                }
                FOFormula::Forall(_, a) | FOFormula::Exists(_, a) => walk(a, counts),
            }
        }
        for f in ctx {
            walk(f, &mut counts);
        }
        counts.values().all(|&c| c == 0)
    }
    fn search(s: &mut S, ctx: &[FOFormula], depth: usize) -> Result<Option<FODerivation>, ()> {
        if s.nodes_left == 0 {
            return Err(());
        }
        s.nodes_left -= 1;
        if !feasible(ctx) {
            return Ok(None);
        }
        let k = key(ctx);
        if let Some(d) = s.success.get(&k) {
            // Keys fix everything but bound names; the stored conclusion is
            // syntactically interchangeable only when it matches exactly.
            if d.conclusion == ctx {
                return Ok(Some(d.clone()));
            }
        }
        if let Some(&dd) = s.failed.get(&k) {
            if dd >= depth {
                return Ok(None);
            }
        }
        if depth == 0 {
            return Ok(None);
        }
        let found = rules(s, ctx, depth)?;
        match &found {
            Some(d) => {
                s.success.insert(k, d.clone());
            }
            None => {
                let e = s.failed.entry(k).or_insert(0);
                if depth > *e {
                    *e = depth;
                }
            }
        }
        Ok(found)
    }

    fn find_f(ctx: &[FOFormula], f: &FOFormula, skip: Option<usize>) -> usize {
        ctx.iter()
            .enumerate()
            .position(|(k, g)| Some(k) != skip && g == f)
            .expect("formula present")
    }
    fn rules(s: &mut S, ctx: &[FOFormula], depth: usize) -> Result<Option<FODerivation>, ()> {
        // Id.
        if ctx.len() == 2
            && matches!(ctx[1], FOFormula::Atom { .. })
            && ctx[0] == ctx[1].dual()
        {
            return Ok(Some(FODerivation::axiom(ctx[1].clone()).expect("atom")));
        }
        // ⅋, invertible.
        if let Some(pos) = ctx.iter().position(|f| matches!(f, FOFormula::Par(..))) {
            let FOFormula::Par(a, b) = &ctx[pos] else {
                unreachable!()
            };
            let mut pctx = ctx.to_vec();
            pctx[pos] = a.as_ref().clone();
            pctx.insert(pos + 1, b.as_ref().clone());
            return Ok(search(s, &pctx, depth - 1)?.map(|d| {
                // Tensor nodes permute contexts; locate the two factors.
                let left = find_f(&d.conclusion, a, None);
                let right = find_f(&d.conclusion, b, Some(left));
                FODerivation::par(d, left, right).expect("par applies")
            }));
        }
        // ∀, invertible after renaming the bound variable fresh.
        if let Some(pos) = ctx.iter().position(|f| matches!(f, FOFormula::Forall(..))) {
            let FOFormula::Forall(x, body) = &ctx[pos] else {
                unreachable!()
            };
            let names = names_in_sequent(ctx);
            let mut fresh = x.clone();
            let mut n = 0;
            while names.contains(&fresh) {
                fresh = format!("{x}_{n}");
                n += 1;
            }
            let mut pctx = ctx.to_vec();
            let opened = body.subst(x, &FOTerm::Var(fresh.clone()));
            pctx[pos] = opened.clone();
            return Ok(search(s, &pctx, depth - 1)?.map(|d| {
                let pos = find_f(&d.conclusion, &opened, None);
                FODerivation::forall(d, pos, &fresh).expect("forall applies")
            }));
        }
        // ⊗ splits.
        for pos in 0..ctx.len() {
            let FOFormula::Tensor(a, b) = &ctx[pos] else {
                continue;
            };
            let others: Vec<usize> = (0..ctx.len()).filter(|k| *k != pos).collect();
            for mask in 0..(1u32 << others.len()) {
                let mut p1: Vec<FOFormula> = Vec::new();
                let mut p2: Vec<FOFormula> = vec![b.as_ref().clone()];
                for (bit, &k) in others.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        p1.push(ctx[k].clone());
                    } else {
                        p2.push(ctx[k].clone());
                    }
                }
                p1.push(a.as_ref().clone());
                let Some(d1) = search(s, &p1, depth - 1)? else {
                    continue;
                };
                let Some(d2) = search(s, &p2, depth - 1)? else {
                    continue;
                };
                let left_pos = find_f(&d1.conclusion, a, None);
                let right_pos = find_f(&d2.conclusion, b, None);
                return Ok(Some(
                    FODerivation::tensor(d1, left_pos, d2, right_pos).expect("tensor applies"),
                ));
            }
        }
        // ∃ with witnesses from the sequent plus one fresh constant.
        for pos in 0..ctx.len() {
            let FOFormula::Exists(x, body) = &ctx[pos] else {
                continue;
            };
            let names = names_in_sequent(ctx);
            let mut witnesses: Vec<FOTerm> = Vec::new();
            for f in ctx {
                for o in formula_occurrences(f) {
                    if o.bound_depth.is_none() && !witnesses.contains(&o.term) {
                        witnesses.push(o.term.clone());
                    }
                }
            }
            let mut fresh_name;
            loop {
                fresh_name = format!("#c{}", s.fresh);
                s.fresh += 1;
                if !names.contains(&fresh_name) {
                    break;
                }
            }
            witnesses.push(FOTerm::Const(fresh_name));
            for w in witnesses {
                let mut pctx = ctx.to_vec();
                let opened = body.subst(x, &w);
                pctx[pos] = opened.clone();
                if let Some(d) = search(s, &pctx, depth - 1)? {
                    let pos = find_f(&d.conclusion, &opened, None);
                    return Ok(Some(
                        FODerivation::exists(d, pos, x, body.as_ref().clone(), w)
                            .expect("exists applies"),
                    ));
                }
            }
        }
        Ok(None)
    }
    let mut s = S {
        nodes_left: budget.max_nodes,
        failed: BTreeMap::new(),
        success: BTreeMap::new(),
        fresh: 0,
    };
    match search(&mut s, goal, budget.max_depth) {
        Ok(d) => d,
        Err(()) => None,
    }
}

/// A perfect matching between left and right free occurrences.
pub type Net = Vec<(Occ, Occ)>;

fn sort_net(mut net: Net) -> Net {
    net.sort();
    net
}

/// The occurrence net of a cut-free derivation of a balanced sequent.
pub fn occurrence_net(d: &FODerivation) -> Result<Net, FoError> {
    if balance_check(&FOSequent::OneSided(d.conclusion.clone())) == Balance::Unbalanced {
        return Err(FoError::NotBalanced);
    }
    net_of(d)
}

fn net_of(d: &FODerivation) -> Result<Net, FoError> {
    match &d.rule {
        FORule::Id => {
            let FOFormula::Atom { left, right, .. } = &d.conclusion[1] else {
                return Err(FoError::Inapplicable("identity without an atom".into()));
            };
            let k = left.len();
            let m = right.len();
            let mut net = Net::new();
            // A's left slot i pairs with Ā's right slot k−1−i, and A's
            // right slot i with Ā's left slot m−1−i.
            for i in 0..k {
                net.push((
                    Occ {
                        formula: 1,
                        steps: vec![],
                        side: ArgSide::Left,
                        slot: i,
                    },
                    Occ {
                        formula: 0,
                        steps: vec![],
                        side: ArgSide::Right,
                        slot: k - 1 - i,
                    },
                ));
            }
            for i in 0..m {
                net.push((
                    Occ {
                        formula: 0,
                        steps: vec![],
                        side: ArgSide::Left,
                        slot: m - 1 - i,
                    },
                    Occ {
                        formula: 1,
                        steps: vec![],
                        side: ArgSide::Right,
                        slot: i,
                    },
                ));
            }
            Ok(sort_net(net))
        }
        FORule::Par { left, right } => {
            let premise = &d.premises[0];
            let net = net_of(premise)?;
            let map = par_map(premise.conclusion.len(), *left, *right);
            Ok(sort_net(
                net.into_iter()
                    .map(|(a, b)| (map(&a), map(&b)))
                    .collect(),
            ))
        }
        FORule::Tensor {
            left_pos,
            right_pos,
        } => {
            let (p1, p2) = (&d.premises[0], &d.premises[1]);
            let n1 = p1.conclusion.len();
            let m1 = tensor_map_left(n1, *left_pos);
            let m2 = tensor_map_right(n1, p2.conclusion.len(), *right_pos);
            let mut net: Net = net_of(p1)?
                .into_iter()
                .map(|(a, b)| (m1(&a), m1(&b)))
                .collect();
            net.extend(net_of(p2)?.into_iter().map(|(a, b)| (m2(&a), m2(&b))));
            Ok(sort_net(net))
        }
        FORule::Forall { pos, var } => {
            let premise = &d.premises[0];
            let net = net_of(premise)?;
            // The bound pair's link is erased.
            let (l_occ, r_occ) = bound_pair_in_premise(premise, *pos, var)?;
            let mut out = Net::new();
            for (a, b) in net {
                if (a == l_occ && b == r_occ) || (a == r_occ && b == l_occ) {
                    continue;
                }
                if a == l_occ || a == r_occ || b == l_occ || b == r_occ {
                    return Err(FoError::Inapplicable(
                        "bound occurrences not matched together".into(),
                    ));
                }
                out.push((wrap_body(&a, *pos), wrap_body(&b, *pos)));
            }
            Ok(sort_net(out))
        }
        FORule::Exists { pos, var, .. } => {
            let premise = &d.premises[0];
            let net = net_of(premise)?;
            let (l_occ, r_occ) = abstracted_pair(d, *pos, var)?;
            glue_or_erase(net, l_occ, r_occ, *pos)
        }
        FORule::ExistsPrime {
            pos,
            var,
            s_occ,
            t_occ,
            ..
        } => {
            let premise = &d.premises[0];
            let net = net_of(premise)?;
            let _ = var;
            let l_occ = Occ {
                formula: *pos,
                ..s_occ.clone()
            };
            let r_occ = Occ {
                formula: *pos,
                ..t_occ.clone()
            };
            glue_or_erase(net, l_occ, r_occ, *pos)
        }
    }
}

/// Erase the link of the abstracted pair, or glue the two links through it.
fn glue_or_erase(net: Net, l_occ: Occ, r_occ: Occ, pos: usize) -> Result<Net, FoError> {
    let mut out = Net::new();
    let mut dangling_left: Option<Occ> = None;
    let mut dangling_right: Option<Occ> = None;
    let mut erased = false;
    for (a, b) in net {
        if a == l_occ && b == r_occ {
            erased = true;
            continue;
        }
        if b == r_occ {
            // (e_l', e_r): keep the left end.
            dangling_left = Some(a);
            continue;
        }
        if a == l_occ {
            // (e_l, e_r'): keep the right end.
            dangling_right = Some(b);
            continue;
        }
        out.push((wrap_body(&a, pos), wrap_body(&b, pos)));
    }
    match (erased, dangling_left, dangling_right) {
        (true, None, None) => Ok(sort_net(out)),
        (false, Some(l), Some(r)) => {
            out.push((wrap_body(&l, pos), wrap_body(&r, pos)));
            Ok(sort_net(out))
        }
        _ => Err(FoError::Inapplicable(
            "abstracted occurrences are not matched in the premise net".into(),
        )),
    }
}

fn wrap_body(o: &Occ, pos: usize) -> Occ {
    if o.formula == pos {
        let mut steps = vec![Step::Body];
        steps.extend(o.steps.iter().copied());
        Occ {
            formula: pos,
            steps,
            side: o.side,
            slot: o.slot,
        }
    } else {
        o.clone()
    }
}

fn par_map(premise_len: usize, left: usize, right: usize) -> impl Fn(&Occ) -> Occ {
    move |o: &Occ| {
        let _ = premise_len;
        let (formula, prefix) = if o.formula == left {
            (result_pos(left, right), Some(Step::L))
        } else if o.formula == right {
            (result_pos(left, right), Some(Step::R))
        } else {
            let mut k = o.formula;
            if o.formula > right {
                k -= 1;
            }
            // The par result replaces `left`; positions after `right` shift.
            (k, None)
        };
        let mut steps = Vec::new();
        if let Some(s) = prefix {
            steps.push(s);
        }
        steps.extend(o.steps.iter().copied());
        Occ {
            formula,
            steps,
            side: o.side,
            slot: o.slot,
        }
    }
}

fn result_pos(left: usize, right: usize) -> usize {
    if right < left {
        left - 1
    } else {
        left
    }
}

fn tensor_map_left(n1: usize, left_pos: usize) -> impl Fn(&Occ) -> Occ {
    move |o: &Occ| {
        if o.formula == left_pos {
            let mut steps = vec![Step::L];
            steps.extend(o.steps.iter().copied());
            Occ {
                formula: n1 - 1,
                steps,
                side: o.side,
                slot: o.slot,
            }
        } else {
            let k = if o.formula > left_pos {
                o.formula - 1
            } else {
                o.formula
            };
            Occ {
                formula: k,
                steps: o.steps.clone(),
                side: o.side,
                slot: o.slot,
            }
        }
    }
}

fn tensor_map_right(n1: usize, _n2: usize, right_pos: usize) -> impl Fn(&Occ) -> Occ {
    move |o: &Occ| {
        if o.formula == right_pos {
            let mut steps = vec![Step::R];
            steps.extend(o.steps.iter().copied());
            Occ {
                formula: n1 - 1,
                steps,
                side: o.side,
                slot: o.slot,
            }
        } else {
            let k = if o.formula > right_pos {
                o.formula - 1
            } else {
                o.formula
            };
            Occ {
                formula: n1 + k,
                steps: o.steps.clone(),
                side: o.side,
                slot: o.slot,
            }
        }
    }
}

/// The two premise occurrences a quantifier abstracts: where the bound
/// variable sits in the conclusion body.
fn abstracted_pair(d: &FODerivation, pos: usize, var: &str) -> Result<(Occ, Occ), FoError> {
    let (FOFormula::Forall(_, body) | FOFormula::Exists(_, body)) = &d.conclusion[pos] else {
        return Err(FoError::BadAddress);
    };
    let mut left = None;
    let mut right = None;
    for o in formula_occurrences(body) {
        if o.bound_depth.is_none() && o.term == FOTerm::Var(var.to_string()) {
            let occ = Occ {
                formula: pos,
                steps: o.steps.clone(),
                side: o.side,
                slot: o.slot,
            };
            if o.sign < 0 {
                left = Some(occ);
            } else {
                right = Some(occ);
            }
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok((l, r)),
        _ => Err(FoError::NotBalanced),
    }
}

fn bound_pair_in_premise(
    premise: &FODerivation,
    pos: usize,
    var: &str,
) -> Result<(Occ, Occ), FoError> {
    let mut left = None;
    let mut right = None;
    for o in formula_occurrences(&premise.conclusion[pos]) {
        if o.bound_depth.is_none() && o.term == FOTerm::Var(var.to_string()) {
            let occ = Occ {
                formula: pos,
                steps: o.steps.clone(),
                side: o.side,
                slot: o.slot,
            };
            if o.sign < 0 {
                left = Some(occ);
            } else {
                right = Some(occ);
            }
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok((l, r)),
        _ => Err(FoError::NotBalanced),
    }
}

/// Rename both endpoints of a net link to a fresh term, preserving the
/// derivation's shape and size.
pub fn rename_link(
    d: &FODerivation,
    link: &(Occ, Occ),
    fresh: &FOTerm,
) -> Result<FODerivation, FoError> {
    let net = occurrence_net(d)?;
    if !net.contains(link) && !net.contains(&(link.1.clone(), link.0.clone())) {
        return Err(FoError::LinkNotInNet);
    }
    rename_link_unchecked(d, link, fresh)
}

fn rename_link_unchecked(
    d: &FODerivation,
    link: &(Occ, Occ),
    fresh: &FOTerm,
) -> Result<FODerivation, FoError> {
    let (l, r) = link;
    match &d.rule {
        FORule::Id => {
            // Rename the argument in both atoms.
            let FOFormula::Atom { pred, left, right } = &d.conclusion[1] else {
                return Err(FoError::Inapplicable("identity without an atom".into()));
            };
            let target = if l.formula == 1 { l } else { r };
            let mut left = left.clone();
            let mut right = right.clone();
            match target.side {
                ArgSide::Left => left[target.slot] = fresh.clone(),
                ArgSide::Right => right[target.slot] = fresh.clone(),
            }
            FODerivation::axiom(FOFormula::Atom {
                pred: pred.clone(),
                left,
                right,
            })
        }
        FORule::Par { left, right } => {
            let premise = &d.premises[0];
            let map = par_map(premise.conclusion.len(), *left, *right);
            let pl = unmap(&premise.conclusion, &map, l).ok_or(FoError::LinkNotInNet)?;
            let pr = unmap(&premise.conclusion, &map, r).ok_or(FoError::LinkNotInNet)?;
            let renamed = rename_link_unchecked(premise, &(pl, pr), fresh)?;
            FODerivation::par(renamed, *left, *right)
        }
        FORule::Tensor {
            left_pos,
            right_pos,
        } => {
            let (p1, p2) = (&d.premises[0], &d.premises[1]);
            let m1 = tensor_map_left(p1.conclusion.len(), *left_pos);
            let m2 = tensor_map_right(p1.conclusion.len(), p2.conclusion.len(), *right_pos);
            if let (Some(pl), Some(pr)) = (
                unmap(&p1.conclusion, &m1, l),
                unmap(&p1.conclusion, &m1, r),
            ) {
                let renamed = rename_link_unchecked(p1, &(pl, pr), fresh)?;
                return FODerivation::tensor(renamed, *left_pos, p2.clone(), *right_pos);
            }
            if let (Some(pl), Some(pr)) = (
                unmap(&p2.conclusion, &m2, l),
                unmap(&p2.conclusion, &m2, r),
            ) {
                let renamed = rename_link_unchecked(p2, &(pl, pr), fresh)?;
                return FODerivation::tensor(p1.clone(), *left_pos, renamed, *right_pos);
            }
            Err(FoError::LinkNotInNet)
        }
        FORule::Forall { pos, var } => {
            let premise = &d.premises[0];
            let pl = unwrap_body(l, *pos).ok_or(FoError::LinkNotInNet)?;
            let pr = unwrap_body(r, *pos).ok_or(FoError::LinkNotInNet)?;
            let renamed = rename_link_unchecked(premise, &(pl, pr), fresh)?;
            FODerivation::forall(renamed, *pos, var)
        }
        FORule::Exists { pos, var, witness } => {
            let premise = &d.premises[0];
            let (a_l, a_r) = abstracted_pair(d, *pos, var)?;
            let premise_net = net_of(premise)?;
            let pl0 = unwrap_body(l, *pos).ok_or(FoError::LinkNotInNet);
            let pr0 = unwrap_body(r, *pos).ok_or(FoError::LinkNotInNet);
            let (pl, pr) = match (pl0, pr0) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return Err(FoError::LinkNotInNet),
            };
            let a_l_strip = Occ {
                formula: a_l.formula,
                steps: a_l.steps.clone(),
                side: a_l.side,
                slot: a_l.slot,
            };
            // Does the conclusion link pass through the glued pair?
            let glued = premise_net.iter().any(|(x, y)| {
                (x == &pl && y.formula == a_l_strip.formula) || (y == &pr)
            });
            let direct = premise_net.contains(&(pl.clone(), pr.clone()));
            if direct {
                let renamed = rename_link_unchecked(premise, &(pl, pr), fresh)?;
                let FOFormula::Exists(_, body) = &d.conclusion[*pos] else {
                    return Err(FoError::BadAddress);
                };
                let new_body = rename_free_occs(body, &[(l, fresh)], *pos)?;
                return FODerivation::exists(renamed, *pos, var, new_body, witness.clone());
            }
            let _ = glued;
            // Glued: the conclusion link (l, r) came from premise links
            // (pl, a_r) and (a_l, pr); rename both, and the witness with
            // them.
            let renamed1 = rename_link_unchecked(premise, &(pl, a_r.clone()), fresh)?;
            let renamed2 = rename_link_unchecked(&renamed1, &(a_l.clone(), pr), fresh)?;
            let FOFormula::Exists(_, body) = &d.conclusion[*pos] else {
                return Err(FoError::BadAddress);
            };
            let new_body = rename_free_occs(body, &[(l, fresh), (r, fresh)], *pos)?;
            FODerivation::exists(renamed2, *pos, var, new_body, fresh.clone())
        }
        FORule::ExistsPrime { .. } => Err(FoError::Inapplicable(
            "link renaming operates on plain derivations".into(),
        )),
    }
}

/// Rename the terms at the given conclusion occurrences inside a body
/// formula (addresses are relative to the conclusion formula `pos`).
fn rename_free_occs(
    body: &FOFormula,
    targets: &[(&Occ, &FOTerm)],
    pos: usize,
) -> Result<FOFormula, FoError> {
    let mut out = body.clone();
    for (occ, term) in targets {
        if occ.formula != pos || occ.steps.first() != Some(&Step::Body) {
            continue;
        }
        let inner = Occ {
            formula: pos,
            steps: occ.steps[1..].to_vec(),
            side: occ.side,
            slot: occ.slot,
        };
        out = set_term_at(&out, &inner.steps, inner.side, inner.slot, term)?;
    }
    Ok(out)
}

fn set_term_at(
    f: &FOFormula,
    steps: &[Step],
    side: ArgSide,
    slot: usize,
    term: &FOTerm,
) -> Result<FOFormula, FoError> {
    match (steps.first(), f) {
        (None, FOFormula::Atom { pred, left, right }) => {
            let mut left = left.clone();
            let mut right = right.clone();
            match side {
                ArgSide::Left => {
                    *left.get_mut(slot).ok_or(FoError::BadAddress)? = term.clone()
                }
                ArgSide::Right => {
                    *right.get_mut(slot).ok_or(FoError::BadAddress)? = term.clone()
                }
            }
            Ok(FOFormula::Atom {
                pred: pred.clone(),
                left,
                right,
            })
        }
        (Some(Step::L), FOFormula::Tensor(a, b)) => Ok(FOFormula::tensor(
            set_term_at(a, &steps[1..], side, slot, term)?,
            b.as_ref().clone(),
        )),
        (Some(Step::R), FOFormula::Tensor(a, b)) => Ok(FOFormula::tensor(
            a.as_ref().clone(),
            set_term_at(b, &steps[1..], side, slot, term)?,
        )),
        (Some(Step::L), FOFormula::Par(a, b)) => Ok(FOFormula::par(
            set_term_at(a, &steps[1..], side, slot, term)?,
            b.as_ref().clone(),
        )),
        (Some(Step::R), FOFormula::Par(a, b)) => Ok(FOFormula::par(
            a.as_ref().clone(),
            set_term_at(b, &steps[1..], side, slot, term)?,
        )),
        (Some(Step::Body), FOFormula::Forall(x, a)) => Ok(FOFormula::forall(
            x.clone(),
            set_term_at(a, &steps[1..], side, slot, term)?,
        )),
        (Some(Step::Body), FOFormula::Exists(x, a)) => Ok(FOFormula::exists(
            x.clone(),
            set_term_at(a, &steps[1..], side, slot, term)?,
        )),
        _ => Err(FoError::BadAddress),
    }
}

fn term_at(ctx: &[FOFormula], occ: &Occ) -> Result<FOTerm, FoError> {
    let f = ctx.get(occ.formula).ok_or(FoError::BadAddress)?;
    for o in formula_occurrences(f) {
        if o.steps == occ.steps && o.side == occ.side && o.slot == occ.slot {
            return Ok(o.term);
        }
    }
    Err(FoError::BadAddress)
}

fn unwrap_body(o: &Occ, pos: usize) -> Option<Occ> {
    if o.formula != pos {
        return Some(o.clone());
    }
    if o.steps.first() == Some(&Step::Body) {
        Some(Occ {
            formula: pos,
            steps: o.steps[1..].to_vec(),
            side: o.side,
            slot: o.slot,
        })
    } else {
        None
    }
}

/// Invert an occurrence map over a premise context by brute enumeration.
fn unmap(premise: &[FOFormula], map: &impl Fn(&Occ) -> Occ, target: &Occ) -> Option<Occ> {
    for (k, f) in premise.iter().enumerate() {
        for o in formula_occurrences(f) {
            let occ = Occ {
                formula: k,
                steps: o.steps,
                side: o.side,
                slot: o.slot,
            };
            if &map(&occ) == target {
                return Some(occ);
            }
        }
    }
    None
}

/// Build the derived existential node: the conclusion renames the two
/// occurrence names to the glue and quantifies the two designated positions.
/// `s_occ` and `t_occ` address the left and right occurrence inside the
/// formula at `pos` (their `formula` fields must equal `pos`).
fn exists_prime_node(
    premise: FODerivation,
    pos: usize,
    var: &str,
    glue: &FOTerm,
    s_occ: &Occ,
    t_occ: &Occ,
) -> Result<FODerivation, FoError> {
    let ctx = premise.conclusion.clone();
    if pos >= ctx.len() || s_occ.formula != pos || t_occ.formula != pos {
        return Err(FoError::BadAddress);
    }
    if balance_check(&FOSequent::OneSided(ctx.clone())) != Balance::StrictlyBalanced {
        return Err(FoError::NotStrictlyBalanced);
    }
    let seq = FOSequent::OneSided(ctx.clone());
    if polarity(&seq, s_occ)? != -1 || polarity(&seq, t_occ)? != 1 {
        return Err(FoError::Inapplicable(
            "designated occurrences must be left then right".into(),
        ));
    }
    let s_name = term_at(&ctx, s_occ)?;
    let t_name = term_at(&ctx, t_occ)?;
    if s_name.name() == t_name.name() {
        return Err(FoError::SameName);
    }
    let names = names_in_sequent(&ctx);
    if names.contains(glue.name()) {
        return Err(FoError::Inapplicable("glue name is not fresh".into()));
    }
    // Θ[s,t := e] with the two designated occurrences turned into the bound
    // variable.
    let mut out: Vec<FOFormula> = Vec::new();
    for (k, f) in ctx.iter().enumerate() {
        let mut g = rename_name_everywhere(f, s_name.name(), glue);
        g = rename_name_everywhere(&g, t_name.name(), glue);
        if k == pos {
            g = set_term_at(&g, &s_occ.steps, s_occ.side, s_occ.slot, &FOTerm::Var(var.into()))?;
            g = set_term_at(&g, &t_occ.steps, t_occ.side, t_occ.slot, &FOTerm::Var(var.into()))?;
            g = FOFormula::exists(var, g);
        }
        out.push(g);
    }
    let node = FODerivation {
        rule: FORule::ExistsPrime {
            pos,
            var: var.to_string(),
            glue: glue.clone(),
            s_occ: s_occ.clone(),
            t_occ: t_occ.clone(),
        },
        premises: vec![premise],
        conclusion: out,
    };
    if balance_check(&FOSequent::OneSided(node.conclusion.clone())) != Balance::StrictlyBalanced {
        return Err(FoError::NotStrictlyBalanced);
    }
    Ok(node)
}

/// Replace a constant name by a term everywhere; endpoint instantiation for
/// grammar entries.
pub fn rename_endpoint(f: &FOFormula, from: &str, to: &FOTerm) -> FOFormula {
    rename_name_everywhere(f, from, to)
}

fn rename_name_everywhere(f: &FOFormula, from: &str, to: &FOTerm) -> FOFormula {
    match f {
        FOFormula::Atom { pred, left, right } => {
            let s = |t: &FOTerm| {
                if t.name() == from {
                    to.clone()
                } else {
                    t.clone()
                }
            };
            FOFormula::Atom {
                pred: pred.clone(),
                left: left.iter().map(&s).collect(),
                right: right.iter().map(&s).collect(),
            }
        }
        FOFormula::Tensor(a, b) => FOFormula::tensor(
            rename_name_everywhere(a, from, to),
            rename_name_everywhere(b, from, to),
        ),
        FOFormula::Par(a, b) => FOFormula::par(
            rename_name_everywhere(a, from, to),
            rename_name_everywhere(b, from, to),
        ),
        FOFormula::Impl(a, b) => FOFormula::impl_(
            rename_name_everywhere(a, from, to),
            rename_name_everywhere(b, from, to),
        ),
        FOFormula::Forall(x, a) if x != from => {
            FOFormula::forall(x.clone(), rename_name_everywhere(a, from, to))
        }
        FOFormula::Exists(x, a) if x != from => {
            FOFormula::exists(x.clone(), rename_name_everywhere(a, from, to))
        }
        other => other.clone(),
    }
}

/// Apply the derived existential: rename the two designated occurrences'
/// links to a fresh name and quantify, all within strictly balanced
/// sequents. The result is a plain derivation ending with an ordinary
/// existential step.
pub fn exists_prime(
    d: &FODerivation,
    s_occ: &Occ,
    t_occ: &Occ,
    var: &str,
) -> Result<FODerivation, FoError> {
    let ctx = &d.conclusion;
    if balance_check(&FOSequent::OneSided(ctx.clone())) != Balance::StrictlyBalanced {
        return Err(FoError::NotStrictlyBalanced);
    }
    if s_occ.formula != t_occ.formula {
        return Err(FoError::Inapplicable(
            "both occurrences must lie in one formula".into(),
        ));
    }
    let pos = s_occ.formula;
    let seq = FOSequent::OneSided(ctx.clone());
    if polarity(&seq, s_occ)? != -1 || polarity(&seq, t_occ)? != 1 {
        return Err(FoError::Inapplicable(
            "need a left and a right occurrence".into(),
        ));
    }
    let s_name = term_at(ctx, s_occ)?;
    let t_name = term_at(ctx, t_occ)?;
    if s_name.name() == t_name.name() {
        return Err(FoError::SameName);
    }
    let net = occurrence_net(d)?;
    let s_link = net
        .iter()
        .find(|(a, _)| a == s_occ)
        .cloned()
        .ok_or(FoError::LinkNotInNet)?;
    let t_link = net
        .iter()
        .find(|(_, b)| b == t_occ)
        .cloned()
        .ok_or(FoError::LinkNotInNet)?;
    let mut names = names_in_sequent(ctx);
    names.extend(names_in_derivation(d));
    let mut k = 0;
    let glue = loop {
        let name = format!("#e{k}");
        k += 1;
        if !names.contains(&name) {
            break FOTerm::Const(name);
        }
    };
    let d1 = rename_link(d, &s_link, &glue)?;
    let d2 = rename_link(&d1, &t_link, &glue)?;
    let FOFormula::Exists(_, _) = FOFormula::exists(var, ctx[pos].clone()) else {
        unreachable!()
    };
    // Abstract the two designated positions of the renamed formula.
    let renamed = d2.conclusion[pos].clone();
    let body = {
        let b = set_term_at(
            &renamed,
            &s_occ.steps,
            s_occ.side,
            s_occ.slot,
            &FOTerm::Var(var.into()),
        )?;
        set_term_at(&b, &t_occ.steps, t_occ.side, t_occ.slot, &FOTerm::Var(var.into()))?
    };
    FODerivation::exists(d2, pos, var, body, glue)
}

/// Replace every existential step that leaves the strictly balanced
/// fragment by the derived existential, using the renaming construction on
/// its premise.
pub fn strictify(d: &FODerivation) -> Result<FODerivation, FoError> {
    if balance_check(&FOSequent::OneSided(d.conclusion.clone())) != Balance::StrictlyBalanced {
        return Err(FoError::NotStrictlyBalanced);
    }
    strictify_rec(d)
}

fn strictify_rec(d: &FODerivation) -> Result<FODerivation, FoError> {
    match &d.rule {
        FORule::Id => Ok(d.clone()),
        FORule::Par { left, right } => {
            FODerivation::par(strictify_rec(&d.premises[0])?, *left, *right)
        }
        FORule::Tensor {
            left_pos,
            right_pos,
        } => FODerivation::tensor(
            strictify_rec(&d.premises[0])?,
            *left_pos,
            strictify_rec(&d.premises[1])?,
            *right_pos,
        ),
        FORule::Forall { pos, var } => {
            FODerivation::forall(strictify_rec(&d.premises[0])?, *pos, var)
        }
        FORule::ExistsPrime {
            pos,
            var,
            glue,
            s_occ,
            t_occ,
        } => exists_prime_node(
            strictify_rec(&d.premises[0])?,
            *pos,
            var,
            glue,
            s_occ,
            t_occ,
        ),
        FORule::Exists { pos, var, witness } => {
            let premise = &d.premises[0];
            let premise_seq = FOSequent::OneSided(premise.conclusion.clone());
            if balance_check(&premise_seq) == Balance::StrictlyBalanced {
                let p = strictify_rec(premise)?;
                let FOFormula::Exists(_, body) = &d.conclusion[*pos] else {
                    return Err(FoError::BadAddress);
                };
                return FODerivation::exists(
                    p,
                    *pos,
                    var,
                    body.as_ref().clone(),
                    witness.clone(),
                );
            }
            // The witness doubles up in the premise: rename its two links
            // to fresh names, recurse, and finish with the derived rule.
            let (a_l, a_r) = abstracted_pair(d, *pos, var)?;
            let net = net_of(premise)?;
            let s_link = net
                .iter()
                .find(|(a, _)| *a == a_l)
                .cloned()
                .ok_or(FoError::LinkNotInNet)?;
            let t_link = net
                .iter()
                .find(|(_, b)| *b == a_r)
                .cloned()
                .ok_or(FoError::LinkNotInNet)?;
            let mut names = names_in_derivation(premise);
            names.insert(witness.name().to_string());
            let mut k = 0;
            let mut fresh = || loop {
                let name = format!("#s{k}");
                k += 1;
                if !names.contains(&name) {
                    names.insert(name.clone());
                    break name;
                }
            };
            let s_name = FOTerm::Const(fresh());
            let t_name = FOTerm::Const(fresh());
            let p1 = rename_link(premise, &s_link, &s_name)?;
            let p2 = rename_link(&p1, &t_link, &t_name)?;
            let p3 = strictify_rec(&p2)?;
            exists_prime_node(p3, *pos, var, witness, &a_l, &a_r)
        }
    }
}

/// Literal for a predicate symbol, sharing name and valency.
fn lit_of(pred: &PredSym) -> LiteralSymbol {
    let base = LiteralSymbol::positive(pred.name.clone(), pred.valency.0, pred.valency.1);
    if pred.negated {
        base.dual()
    } else {
        base
    }
}

/// A translated derivation together with the final occurrence-name maps:
/// `rho` gives the upper index of each name's left occurrence, `pi` the
/// lower index of its right occurrence.
pub struct EttcImage {
    pub derivation: Derivation,
    pub rho: BTreeMap<String, Index>,
    pub pi: BTreeMap<String, Index>,
}

/// Translate a strictly balanced derivation into a tensor typing
/// derivation. The regular part of the resulting term is the delta product
/// over the occurrence net. Name-to-index maps may be supplied; the default
/// draws reserved `#l…`/`#r…` indices.
pub fn fo_to_ettc(
    d: &FODerivation,
    maps: Option<(&BTreeMap<String, Index>, &BTreeMap<String, Index>)>,
) -> Result<EttcImage, FoError> {
    for seq in all_sequents(d) {
        if balance_check(&FOSequent::OneSided(seq)) != Balance::StrictlyBalanced {
            return Err(FoError::NotStrictlyBalanced);
        }
    }
    let mut supply = IndexSupply::new();
    let image = build_ettc(d, &mut supply)?;
    check_derivation(&image.derivation)
        .map_err(|e| FoError::Inapplicable(format!("translated derivation invalid: {e}")))?;
    // Relabel the final frees onto the requested maps.
    let mut rho_out: BTreeMap<String, Index> = BTreeMap::new();
    let mut pi_out: BTreeMap<String, Index> = BTreeMap::new();
    let mut rename: BTreeMap<Index, Index> = BTreeMap::new();
    for (name, idx) in &image.rho {
        let target = match maps {
            Some((rho, _)) => rho
                .get(name)
                .cloned()
                .ok_or(FoError::Inapplicable(format!("no rho image for `{name}`")))?,
            None => Index::reserved(format!("#l{name}")),
        };
        rename.insert(idx.clone(), target.clone());
        rho_out.insert(name.clone(), target);
    }
    for (name, idx) in &image.pi {
        let target = match maps {
            Some((_, pi)) => pi
                .get(name)
                .cloned()
                .ok_or(FoError::Inapplicable(format!("no pi image for `{name}`")))?,
            None => Index::reserved(format!("#r{name}")),
        };
        rename.insert(idx.clone(), target.clone());
        pi_out.insert(name.clone(), target);
    }
    Ok(EttcImage {
        derivation: image.derivation.relabel(&rename),
        rho: rho_out,
        pi: pi_out,
    })
}

struct RawImage {
    derivation: Derivation,
    /// Free-name maps for the conclusion: ρ on left occurrences (upper
    /// indices), π on right occurrences (lower indices).
    rho: BTreeMap<String, Index>,
    pi: BTreeMap<String, Index>,
}

fn build_ettc(d: &FODerivation, supply: &mut IndexSupply) -> Result<RawImage, FoError> {
    match &d.rule {
        FORule::Id => {
            let FOFormula::Atom { pred, left, right } = &d.conclusion[1] else {
                return Err(FoError::Inapplicable("identity without an atom".into()));
            };
            let mut rho: BTreeMap<String, Index> = BTreeMap::new();
            let mut pi: BTreeMap<String, Index> = BTreeMap::new();
            for t in left.iter().chain(right.iter()) {
                rho.entry(t.name().to_string())
                    .or_insert_with(|| supply.fresh());
                pi.entry(t.name().to_string())
                    .or_insert_with(|| supply.fresh());
            }
            // The axiom is stated with the dual atom first: take p := Ā.
            let abar = d.conclusion[0].clone();
            let FOFormula::Atom {
                pred: pred_bar,
                left: left_bar,
                right: right_bar,
            } = &abar
            else {
                return Err(FoError::Inapplicable("identity without an atom".into()));
            };
            let lit = lit_of(pred_bar);
            let upper: Vec<Index> = left_bar.iter().map(|t| rho[t.name()].clone()).collect();
            let lower: Vec<Index> = right_bar.iter().map(|t| pi[t.name()].clone()).collect();
            let co_upper: Vec<Index> = left.iter().map(|t| rho[t.name()].clone()).collect();
            let co_lower: Vec<Index> = right.iter().map(|t| pi[t.name()].clone()).collect();
            let _ = pred;
            let node = Derivation::by_rule(
                EttcRule::Id {
                    lit,
                    upper,
                    lower,
                    co_upper,
                    co_lower,
                },
                Vec::new(),
            )?;
            Ok(RawImage {
                derivation: node,
                rho,
                pi,
            })
        }
        FORule::Par { left, right } => {
            let p = build_ettc(&d.premises[0], supply)?;
            let node = Derivation::by_rule(
                EttcRule::Par {
                    left: *left,
                    right: *right,
                },
                vec![p.derivation],
            )?;
            Ok(RawImage {
                derivation: node,
                rho: p.rho,
                pi: p.pi,
            })
        }
        FORule::Tensor {
            left_pos,
            right_pos,
        } => {
            let p1 = build_ettc(&d.premises[0], supply)?;
            let p2 = build_ettc(&d.premises[1], supply)?;
            let node = Derivation::by_rule(
                EttcRule::Tensor {
                    left_pos: *left_pos,
                    right_pos: *right_pos,
                },
                vec![p1.derivation, p2.derivation],
            )?;
            let mut rho = p1.rho;
            let mut pi = p1.pi;
            rho.extend(p2.rho);
            pi.extend(p2.pi);
            Ok(RawImage {
                derivation: node,
                rho,
                pi,
            })
        }
        FORule::Forall { pos, var } => {
            let p = build_ettc(&d.premises[0], supply)?;
            let sup = p.pi.get(var).cloned().ok_or_else(|| {
                FoError::Inapplicable(format!("`{var}` not free in the premise image"))
            })?;
            let sub = p.rho.get(var).cloned().unwrap();
            let node = Derivation::by_rule(
                EttcRule::Nabla {
                    pos: *pos,
                    sup,
                    sub,
                },
                vec![p.derivation],
            )?;
            let mut rho = p.rho;
            let mut pi = p.pi;
            rho.remove(var);
            pi.remove(var);
            Ok(RawImage {
                derivation: node,
                rho,
                pi,
            })
        }
        FORule::Exists { pos, witness, .. } => {
            let p = build_ettc(&d.premises[0], supply)?;
            let name = witness.name();
            let sup = p.pi.get(name).cloned().ok_or_else(|| {
                FoError::Inapplicable(format!("witness `{name}` not free in the premise image"))
            })?;
            let sub = p.rho.get(name).cloned().unwrap();
            let node = Derivation::by_rule(
                EttcRule::Triangle {
                    pos: *pos,
                    sup,
                    sub,
                },
                vec![p.derivation],
            )?;
            let mut rho = p.rho;
            let mut pi = p.pi;
            rho.remove(name);
            pi.remove(name);
            Ok(RawImage {
                derivation: node,
                rho,
                pi,
            })
        }
        FORule::ExistsPrime {
            pos,
            glue,
            s_occ,
            t_occ,
            ..
        } => {
            let p = build_ettc(&d.premises[0], supply)?;
            let premise_ctx = &d.premises[0].conclusion;
            let s_name = term_at(premise_ctx, s_occ)?;
            let t_name = term_at(premise_ctx, t_occ)?;
            let sup = p.pi.get(t_name.name()).cloned().ok_or_else(|| {
                FoError::Inapplicable("glued name missing in the premise image".into())
            })?;
            let sub = p.rho.get(s_name.name()).cloned().ok_or_else(|| {
                FoError::Inapplicable("glued name missing in the premise image".into())
            })?;
            let node = Derivation::by_rule(
                EttcRule::Triangle {
                    pos: *pos,
                    sup,
                    sub,
                },
                vec![p.derivation],
            )?;
            let mut rho = p.rho;
            let mut pi = p.pi;
            let glue_pi = pi.remove(s_name.name()).unwrap();
            let glue_rho = rho.remove(t_name.name()).unwrap();
            rho.remove(s_name.name());
            pi.remove(t_name.name());
            rho.insert(glue.name().to_string(), glue_rho);
            pi.insert(glue.name().to_string(), glue_pi);
            Ok(RawImage {
                derivation: node,
                rho,
                pi,
            })
        }
    }
}

/// Translate a formula under the given name-to-index maps.
pub fn formula_to_type(
    f: &FOFormula,
    rho: &BTreeMap<String, Index>,
    pi: &BTreeMap<String, Index>,
    supply: &mut IndexSupply,
) -> Result<TensorType, FoError> {
    match f {
        FOFormula::Atom { pred, left, right } => {
            let lit = lit_of(pred);
            let upper = left
                .iter()
                .map(|t| {
                    rho.get(t.name())
                        .cloned()
                        .ok_or_else(|| FoError::Inapplicable(format!("no rho for `{t}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let lower = right
                .iter()
                .map(|t| {
                    pi.get(t.name())
                        .cloned()
                        .ok_or_else(|| FoError::Inapplicable(format!("no pi for `{t}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TensorType::atom(lit, upper, lower)?)
        }
        FOFormula::Tensor(a, b) => Ok(TensorType::tensor(
            formula_to_type(a, rho, pi, supply)?,
            formula_to_type(b, rho, pi, supply)?,
        )),
        FOFormula::Par(a, b) => Ok(TensorType::par(
            formula_to_type(a, rho, pi, supply)?,
            formula_to_type(b, rho, pi, supply)?,
        )),
        FOFormula::Impl(..) => Err(FoError::Inapplicable(
            "translate the one-sided language".into(),
        )),
        FOFormula::Forall(x, a) | FOFormula::Exists(x, a) => {
            let mut rho2 = rho.clone();
            let mut pi2 = pi.clone();
            let sup = supply.fresh();
            let sub = supply.fresh();
            pi2.insert(x.clone(), sup.clone());
            rho2.insert(x.clone(), sub.clone());
            let body = formula_to_type(a, &rho2, &pi2, supply)?;
            Ok(match f {
                FOFormula::Forall(..) => TensorType::nabla(sup, sub, body),
                _ => TensorType::delta(sup, sub, body),
            })
        }
    }
}

/// Inverse of the rule translation: map a cut-free tensor derivation built
/// from the logical rules back to a strictly balanced one-sided derivation.
pub fn ettc_to_fo(d: &Derivation) -> Result<FODerivation, FoError> {
    let mut fresh = 0usize;
    let out = build_fo(d, &mut fresh)?;
    fo_check(&out.derivation)
        .map_err(|e| FoError::Inapplicable(format!("translated derivation invalid: {e}")))?;
    Ok(out.derivation)
}

struct FoImage {
    derivation: FODerivation,
    /// Wire names: both endpoints of each conclusion wire map to one name.
    names: BTreeMap<Index, String>,
}

fn build_fo(d: &Derivation, fresh: &mut usize) -> Result<FoImage, FoError> {
    match &d.rule {
        EttcRule::Lex { .. } | EttcRule::Cut { .. } => Err(FoError::NotInImage(
            "only cut-free logical derivations translate back".into(),
        )),
        EttcRule::Id {
            lit,
            upper,
            lower,
            co_upper,
            co_lower,
        } => {
            // Wires pair co positions with reversed原 positions; one fresh
            // name per wire.
            let m = upper.len();
            let n = lower.len();
            let mut names: BTreeMap<Index, String> = BTreeMap::new();
            let mut left_args: Vec<FOTerm> = Vec::new();
            let mut right_args: Vec<FOTerm> = Vec::new();
            for s in 0..m {
                let name = format!("x{}", *fresh);
                *fresh += 1;
                names.insert(co_lower[s].clone(), name.clone());
                names.insert(upper[m - 1 - s].clone(), name);
            }
            for s in 0..n {
                let name = format!("x{}", *fresh);
                *fresh += 1;
                names.insert(co_upper[s].clone(), name.clone());
                names.insert(lower[n - 1 - s].clone(), name);
            }
            for i in upper {
                left_args.push(FOTerm::Const(names[i].clone()));
            }
            for j in lower {
                right_args.push(FOTerm::Const(names[j].clone()));
            }
            let pred = PredSym {
                name: lit.base().to_string(),
                negated: lit.is_negated(),
                valency: lit.valency(),
            };
            let atom = FOFormula::Atom {
                pred,
                left: left_args,
                right: right_args,
            };
            // The tensor identity context is [p, p̄]; the first-order axiom
            // is [Ā, A] with A := the second formula.
            let deriv = FODerivation::axiom(atom.dual())?;
            Ok(FoImage {
                derivation: deriv,
                names,
            })
        }
        EttcRule::Par { left, right } => {
            let p = build_fo(&d.premises[0], fresh)?;
            Ok(FoImage {
                derivation: FODerivation::par(p.derivation, *left, *right)?,
                names: p.names,
            })
        }
        EttcRule::Tensor {
            left_pos,
            right_pos,
        } => {
            let p1 = build_fo(&d.premises[0], fresh)?;
            let p2 = build_fo(&d.premises[1], fresh)?;
            let mut names = p1.names;
            names.extend(p2.names);
            Ok(FoImage {
                derivation: FODerivation::tensor(p1.derivation, *left_pos, p2.derivation, *right_pos)?,
                names,
            })
        }
        EttcRule::Nabla { pos, sup, sub } => {
            let p = build_fo(&d.premises[0], fresh)?;
            let name = p
                .names
                .get(sup)
                .cloned()
                .ok_or_else(|| FoError::NotInImage("missing wire name".into()))?;
            if p.names.get(sub) != Some(&name) {
                return Err(FoError::NotInImage(
                    "nabla pair not joined by a single wire".into(),
                ));
            }
            let var = format!("x{}", *fresh);
            *fresh += 1;
            let body = rename_name_everywhere(
                &p.derivation.conclusion[*pos],
                &name,
                &FOTerm::Var(var.clone()),
            );
            let mut names = p.names;
            names.retain(|_, v| v != &name);
            let deriv = {
                // Replace the named occurrences by the variable before the
                // rule; the premise keeps the constant, so rebuild by rule.
                let premise = p.derivation;
                let mut out = premise.conclusion.clone();
                out[*pos] = FOFormula::forall(var.clone(), body.clone());
                // Verify freshness through the rule constructor by renaming
                // first: forall expects the variable free in the premise.
                let mut renamed = premise.clone();
                renamed = rename_const_to_var(&renamed, &name, &var, *pos)?;
                FODerivation::forall(renamed, *pos, &var)?
            };
            Ok(FoImage {
                derivation: deriv,
                names,
            })
        }
        EttcRule::Triangle { pos, sup, sub } => {
            let p = build_fo(&d.premises[0], fresh)?;
            let premise_term = d.premises[0].conclusion.term();
            // Same wire: an ordinary existential (erases the link, loops
            // the delta); two wires: the derived existential glues them.
            let same_wire = premise_term.edges().iter().any(|e| {
                e.label.is_empty() && &e.lower == sub && &e.upper == sup
            });
            let var = format!("x{}", *fresh);
            *fresh += 1;
            if same_wire {
                let name = p
                    .names
                    .get(sup)
                    .cloned()
                    .ok_or_else(|| FoError::NotInImage("missing wire name".into()))?;
                let body_src = &p.derivation.conclusion[*pos];
                let body = rename_name_everywhere(body_src, &name, &FOTerm::Var(var.clone()));
                let witness = FOTerm::Const(name.clone());
                let mut names = p.names;
                names.retain(|_, v| v != &name);
                let deriv =
                    FODerivation::exists(p.derivation, *pos, &var, body, witness)?;
                Ok(FoImage {
                    derivation: deriv,
                    names,
                })
            } else {
                let t_name = p
                    .names
                    .get(sup)
                    .cloned()
                    .ok_or_else(|| FoError::NotInImage("missing wire name".into()))?;
                let s_name = p
                    .names
                    .get(sub)
                    .cloned()
                    .ok_or_else(|| FoError::NotInImage("missing wire name".into()))?;
                // Locate the designated occurrences in the premise formula:
                // the left occurrence of s and the right occurrence of t.
                let f = &p.derivation.conclusion[*pos];
                let seq = FOSequent::OneSided(p.derivation.conclusion.clone());
                let mut s_occ = None;
                let mut t_occ = None;
                for o in formula_occurrences(f) {
                    if o.bound_depth.is_some() {
                        continue;
                    }
                    let occ = Occ {
                        formula: *pos,
                        steps: o.steps.clone(),
                        side: o.side,
                        slot: o.slot,
                    };
                    let sign = polarity(&seq, &occ)?;
                    if o.term.name() == s_name && sign == -1 {
                        s_occ = Some(occ);
                    } else if o.term.name() == t_name && sign == 1 {
                        t_occ = Some(occ);
                    }
                }
                let (s_occ, t_occ) = match (s_occ, t_occ) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(FoError::NotInImage(
                            "glued occurrences not in the principal formula".into(),
                        ))
                    }
                };
                let mut names2 = names_in_sequent(&p.derivation.conclusion);
                names2.extend(names_in_derivation(&p.derivation));
                let mut k = 0usize;
                let glue = loop {
                    let name = format!("e{}_{k}", *fresh);
                    k += 1;
                    if !names2.contains(&name) {
                        break FOTerm::Const(name);
                    }
                };
                let deriv =
                    exists_prime_node(p.derivation, *pos, &var, &glue, &s_occ, &t_occ)?;
                // The surviving wire endpoints now carry the glue name.
                let mut names = p.names;
                let rho_idx: Vec<Index> = names
                    .iter()
                    .filter(|(_, v)| **v == s_name || **v == t_name)
                    .map(|(k, _)| k.clone())
                    .collect();
                for i in rho_idx {
                    if &i == sup || &i == sub {
                        names.remove(&i);
                    } else {
                        names.insert(i, glue.name().to_string());
                    }
                }
                Ok(FoImage {
                    derivation: deriv,
                    names,
                })
            }
        }
    }
}

/// Rename a constant to a variable throughout a derivation subtree rooted in
/// the given principal position's history. Renaming a fresh-named constant
/// uniformly keeps every node valid.
fn rename_const_to_var(
    d: &FODerivation,
    name: &str,
    var: &str,
    _pos: usize,
) -> Result<FODerivation, FoError> {
    fn go(d: &FODerivation, name: &str, var: &str) -> FODerivation {
        let target = FOTerm::Var(var.to_string());
        let conclusion = d
            .conclusion
            .iter()
            .map(|f| rename_name_everywhere(f, name, &target))
            .collect();
        let rule = match &d.rule {
            FORule::Exists { pos, var: v, witness } => FORule::Exists {
                pos: *pos,
                var: v.clone(),
                witness: if witness.name() == name {
                    target.clone()
                } else {
                    witness.clone()
                },
            },
            FORule::ExistsPrime {
                pos,
                var: v,
                glue,
                s_occ,
                t_occ,
            } => FORule::ExistsPrime {
                pos: *pos,
                var: v.clone(),
                glue: if glue.name() == name {
                    target.clone()
                } else {
                    glue.clone()
                },
                s_occ: s_occ.clone(),
                t_occ: t_occ.clone(),
            },
            other => other.clone(),
        };
        FODerivation {
            rule,
            premises: d.premises.iter().map(|p| go(p, name, var)).collect(),
            conclusion,
        }
    }
    Ok(go(d, name, var))
}

impl fmt::Display for FOFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn prec(f: &FOFormula) -> u8 {
            match f {
                FOFormula::Atom { .. } => 50,
                FOFormula::Forall(..) | FOFormula::Exists(..) => 40,
                FOFormula::Tensor(..) => 30,
                FOFormula::Par(..) => 20,
                FOFormula::Impl(..) => 10,
            }
        }
        fn go(x: &FOFormula, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let p = prec(x);
            if p < min {
                f.write_str("(")?;
            }
            match x {
                FOFormula::Atom { pred, left, right } => {
                    if pred.negated {
                        f.write_str("~")?;
                    }
                    write!(f, "{}(", pred.name)?;
                    for (k, t) in left.iter().enumerate() {
                        if k > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{t}")?;
                    }
                    f.write_str(";")?;
                    for (k, t) in right.iter().enumerate() {
                        if k > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{t}")?;
                    }
                    f.write_str(")")?;
                }
                FOFormula::Tensor(a, b) => {
                    go(a, 31, f)?;
                    f.write_str(" (x) ")?;
                    go(b, 31, f)?;
                }
                FOFormula::Par(a, b) => {
                    go(a, 21, f)?;
                    f.write_str(" par ")?;
                    go(b, 21, f)?;
                }
                FOFormula::Impl(a, b) => {
                    go(a, 11, f)?;
                    f.write_str(" -o ")?;
                    go(b, 10, f)?;
                }
                FOFormula::Forall(x_, a) => {
                    write!(f, "forall {x_}. ")?;
                    go(a, 40, f)?;
                }
                FOFormula::Exists(x_, a) => {
                    write!(f, "exists {x_}. ")?;
                    go(a, 40, f)?;
                }
            }
            if p < min {
                f.write_str(")")?;
            }
            Ok(())
        }
        go(self, 0, f)
    }
}

impl fmt::Display for FOSequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FOSequent::TwoSided {
                antecedent,
                succedent,
            } => {
                for (k, a) in antecedent.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                if !antecedent.is_empty() {
                    f.write_str(" ")?;
                }
                write!(f, "|- {succedent}")
            }
            FOSequent::OneSided(ctx) => {
                f.write_str("|- ")?;
                for (k, a) in ctx.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                Ok(())
            }
        }
    }
}

/// `reg(τ)` of a translated judgement as the delta product over wires,
/// used to state the regular-part law in tests: each wire of the judgement
/// term connects `π(x)` to `ρ(x)` for one free name `x`.
pub fn net_delta_product(
    ctx: &[FOFormula],
    rho: &BTreeMap<String, Index>,
    pi: &BTreeMap<String, Index>,
) -> Result<Vec<Edge>, FoError> {
    let mut names: BTreeSet<String> = BTreeSet::new();
    for f in ctx {
        for o in formula_occurrences(f) {
            if o.bound_depth.is_none() {
                names.insert(o.term.name().to_string());
            }
        }
    }
    let mut edges = Vec::new();
    for n in names {
        let upper = pi
            .get(&n)
            .ok_or_else(|| FoError::Inapplicable(format!("no pi for `{n}`")))?;
        let lower = rho
            .get(&n)
            .ok_or_else(|| FoError::Inapplicable(format!("no rho for `{n}`")))?;
        edges.push(Edge {
            label: crate::index::Word::epsilon(),
            lower: lower.clone(),
            upper: upper.clone(),
        });
    }
    edges.sort_by(|a, b| (&a.lower, &a.upper).cmp(&(&b.lower, &b.upper)));
    Ok(edges)
}

/// The judgement `τ ⊢ ||Γ||` a translated derivation concludes; exposed for
/// direct goal construction.
pub fn sequent_image(
    ctx: &[FOFormula],
    rho: &BTreeMap<String, Index>,
    pi: &BTreeMap<String, Index>,
    supply: &mut IndexSupply,
) -> Result<TypingJudgement, FoError> {
    let types = ctx
        .iter()
        .map(|f| formula_to_type(f, rho, pi, supply))
        .collect::<Result<Vec<_>, _>>()?;
    let edges = net_delta_product(ctx, rho, pi)?;
    let term = crate::term::TensorTerm::from_parts(edges, Vec::new());
    TypingJudgement::new(term, types)
        .map_err(|e| FoError::Inapplicable(format!("image judgement invalid: {e}")))
}

// An axiom helper for tests and the grammar engine.
pub fn fo_axiom_judgement(pred: &PredSym) -> Result<TypingJudgement, FoError> {
    let lit = lit_of(pred);
    let (m, n) = lit.valency();
    let mut supply = IndexSupply::new();
    let upper = supply.fresh_many(m);
    let lower = supply.fresh_many(n);
    let co_upper = supply.fresh_many(n);
    let co_lower = supply.fresh_many(m);
    Ok(axiom_id(&lit, &upper, &lower, &co_upper, &co_lower)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequent::Budget;

    fn c(n: &str) -> FOTerm {
        FOTerm::Const(n.to_string())
    }

    fn a11(name: &str, l: &str, r: &str) -> FOFormula {
        FOFormula::atom(PredSym::positive(name, 1, 1), vec![c(l)], vec![c(r)]).unwrap()
    }

    /// The running example: ⊢ a(e;t), ā(t;e)⊗a(e;s), ā(s;e).
    fn gluing_example() -> Vec<FOFormula> {
        vec![
            a11("a", "e", "t"),
            FOFormula::tensor(a11("a", "e", "t").dual(), a11("a", "e", "s")),
            a11("a", "e", "s").dual(),
        ]
    }

    #[test]
    fn duality_is_involutive_and_reverses() {
        let p = FOFormula::atom(
            PredSym::positive("p", 2, 1),
            vec![c("x"), c("y")],
            vec![c("z")],
        )
        .unwrap();
        let d = p.dual();
        if let FOFormula::Atom { pred, left, right } = &d {
            assert!(pred.negated);
            assert_eq!(left, &vec![c("z")]);
            assert_eq!(right, &vec![c("y"), c("x")]);
        } else {
            panic!("atom expected");
        }
        assert_eq!(d.dual(), p);
        let q = FOFormula::forall("v", p.clone());
        assert_eq!(q.dual(), FOFormula::exists("v", p.dual()));
    }

    #[test]
    fn polarity_flips() {
        // x in p(x;y) is left; inside A ⊸ B it flips; in an antecedent it
        // flips again.
        let a = a11("p", "x", "y");
        let impl_f = FOFormula::impl_(a.clone(), a11("q", "u", "v"));
        let seq = FOSequent::TwoSided {
            antecedent: vec![impl_f],
            succedent: a11("r", "m", "n"),
        };
        let occ = Occ {
            formula: 0,
            steps: vec![Step::L],
            side: ArgSide::Left,
            slot: 0,
        };
        assert_eq!(polarity(&seq, &occ).unwrap(), -1);
        let one = FOSequent::OneSided(vec![a]);
        let occ2 = Occ {
            formula: 0,
            steps: vec![],
            side: ArgSide::Left,
            slot: 0,
        };
        assert_eq!(polarity(&one, &occ2).unwrap(), -1);
    }

    #[test]
    fn balance_classification() {
        // ∀x(a(r;x) ⊸ b(l;x)) is strictly balanced.
        let f = FOFormula::forall(
            "x",
            FOFormula::impl_(
                FOFormula::atom(
                    PredSym::positive("a", 1, 1),
                    vec![c("r")],
                    vec![FOTerm::Var("x".into())],
                )
                .unwrap(),
                FOFormula::atom(
                    PredSym::positive("b", 1, 1),
                    vec![c("l")],
                    vec![FOTerm::Var("x".into())],
                )
                .unwrap(),
            ),
        );
        let seq = FOSequent::OneSided(vec![f]);
        assert_eq!(balance_check(&seq), Balance::StrictlyBalanced);
        // The gluing example is balanced but not strict: e twice per side.
        assert_eq!(
            balance_check(&FOSequent::OneSided(gluing_example())),
            Balance::Balanced
        );
    }

    #[test]
    fn prove_id_and_reject_atom() {
        let a = a11("p", "x", "y");
        let goal = vec![a.dual(), a.clone()];
        let d = fo_prove(&goal, Budget::default()).expect("identity");
        assert!(fo_check(&d).is_ok());
        assert!(fo_prove(&[a], Budget::default()).is_none());
    }

    #[test]
    fn gluing_example_net() {
        // Derive the example and check the net gluing of the existential.
        let goal = gluing_example();
        let d = fo_prove(&goal, Budget::default()).expect("derivable");
        assert!(fo_check(&d).is_ok());
        let net = occurrence_net(&d).unwrap();
        assert_eq!(net.len(), 4);
        // Apply (∃) abstracting the two e-occurrences inside the tensor:
        // the body is ā(t;x) ⊗ a(x;s).
        let body = FOFormula::tensor(
            FOFormula::atom(
                PredSym::positive("a", 1, 1).dual(),
                vec![c("t")],
                vec![FOTerm::Var("x".into())],
            )
            .unwrap(),
            FOFormula::atom(
                PredSym::positive("a", 1, 1),
                vec![FOTerm::Var("x".into())],
                vec![c("s")],
            )
            .unwrap(),
        );
        let e = FODerivation::exists(d, 1, "x", body, c("e")).expect("exists applies");
        assert!(fo_check(&e).is_ok());
        let net2 = occurrence_net(&e).unwrap();
        // Two links erased-and-glued into the long e-link: 3 remain.
        assert_eq!(net2.len(), 3);
        let long: Vec<_> = net2
            .iter()
            .filter(|(a, b)| a.formula == 0 && b.formula == 2)
            .collect();
        assert_eq!(long.len(), 1);
        // The conclusion is strictly balanced now.
        assert_eq!(
            balance_check(&FOSequent::OneSided(e.conclusion.clone())),
            Balance::StrictlyBalanced
        );
    }

    #[test]
    fn rename_link_preserves_size() {
        let goal = gluing_example();
        let d = fo_prove(&goal, Budget::default()).expect("derivable");
        let net = occurrence_net(&d).unwrap();
        // Rename the (t,t) link.
        let link = net
            .iter()
            .find(|(a, _)| term_at(&d.conclusion, a).unwrap() == c("t"))
            .cloned()
            .unwrap();
        let renamed = rename_link(&d, &link, &c("u")).expect("renames");
        assert!(fo_check(&renamed).is_ok());
        assert_eq!(renamed.size(), d.size());
        // Renaming back restores the sequent.
        let net2 = occurrence_net(&renamed).unwrap();
        let link2 = net2
            .iter()
            .find(|(a, _)| term_at(&renamed.conclusion, a).unwrap() == c("u"))
            .cloned()
            .unwrap();
        let back = rename_link(&renamed, &link2, &c("t")).expect("renames back");
        assert_eq!(back.conclusion, d.conclusion);
        assert_eq!(back.size(), d.size());
        // A non-link pair is rejected.
        let bogus = (net[0].0.clone(), net[1].1.clone());
        if !net.contains(&bogus) {
            assert_eq!(
                rename_link(&d, &bogus, &c("w")).unwrap_err(),
                FoError::LinkNotInNet
            );
        }
    }

    #[test]
    fn strictify_produces_strict_derivations() {
        // Strictly balanced conclusion derived through a non-strict premise.
        let goal = gluing_example();
        let d = fo_prove(&goal, Budget::default()).expect("derivable");
        let body = {
            let FOFormula::Tensor(l, r) = &goal[1] else {
                unreachable!()
            };
            FOFormula::tensor(
                rename_name_everywhere(l, "e", &FOTerm::Var("x".into())),
                rename_name_everywhere(r, "e", &FOTerm::Var("x".into())),
            )
        };
        let e = FODerivation::exists(d, 1, "x", body, c("e")).expect("exists applies");
        let strict = strictify(&e).expect("strictifies");
        assert_eq!(strict.conclusion, e.conclusion);
        for seq in all_sequents(&strict) {
            assert_eq!(
                balance_check(&FOSequent::OneSided(seq)),
                Balance::StrictlyBalanced
            );
        }
        assert!(fo_check(&strict).is_ok());
        // Not applicable to the non-strict conclusion itself.
        let d2 = fo_prove(&gluing_example(), Budget::default()).unwrap();
        assert_eq!(strictify(&d2).unwrap_err(), FoError::NotStrictlyBalanced);
    }

    #[test]
    fn translation_round_trip() {
        // A strictly balanced sequent with a quantifier:
        // ⊢ ∀x(b(l;x) ⅋ b̄(x;l)).
        let f = FOFormula::forall(
            "x",
            FOFormula::par(
                FOFormula::atom(
                    PredSym::positive("b", 1, 1),
                    vec![c("l")],
                    vec![FOTerm::Var("x".into())],
                )
                .unwrap(),
                FOFormula::atom(
                    PredSym::positive("b", 1, 1).dual(),
                    vec![FOTerm::Var("x".into())],
                    vec![c("l")],
                )
                .unwrap(),
            ),
        );
        let goal = vec![f];
        assert_eq!(
            balance_check(&FOSequent::OneSided(goal.clone())),
            Balance::StrictlyBalanced
        );
        let d = fo_prove(&goal, Budget::default()).expect("derivable");
        let strict = strictify(&d).expect("strictifies");
        let image = fo_to_ettc(&strict, None).expect("translates");
        assert!(check_derivation(&image.derivation).is_ok());
        // Regular part law.
        let expected = net_delta_product(&strict.conclusion, &image.rho, &image.pi).unwrap();
        let (reg, _) = image.derivation.conclusion.term().regular_part();
        assert_eq!(reg.edges(), expected.as_slice());
        // Round trip back.
        let back = ettc_to_fo(&image.derivation).expect("translates back");
        let re = fo_to_ettc(&strictify(&back).unwrap_or(back.clone()), None).expect("re-translates");
        assert!(re
            .derivation
            .conclusion
            .alpha_equal(&image.derivation.conclusion));
    }
}
