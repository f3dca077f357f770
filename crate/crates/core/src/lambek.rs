//! Lambek calculus: noncommutative sequents over `/`, `\`, `•`, a bounded
//! cut-free prover used as an oracle, the first-order translation with
//! endpoint constants, and the direct encoding into tensor types.

use crate::fo::{FOFormula, FOSequent, FOTerm, FoError, PredSym};
use crate::index::{Index, IndexSupply};
use crate::sequent::Budget;
use crate::types::{LiteralSymbol, TensorType, TypeError};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LcError {
    #[error("endpoint count does not match the antecedent length")]
    EndpointCountMismatch,
    #[error("rule inapplicable: {0}")]
    Inapplicable(String),
    #[error(transparent)]
    Type(#[from] TypeError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LCFormula {
    Prop(String),
    /// `B / A`.
    Over(Box<LCFormula>, Box<LCFormula>),
    /// `A \ B`.
    Under(Box<LCFormula>, Box<LCFormula>),
    /// `A • B`.
    Dot(Box<LCFormula>, Box<LCFormula>),
}

impl LCFormula {
    pub fn prop(name: impl Into<String>) -> Self {
        LCFormula::Prop(name.into())
    }

    pub fn over(b: LCFormula, a: LCFormula) -> Self {
        LCFormula::Over(Box::new(b), Box::new(a))
    }

    pub fn under(a: LCFormula, b: LCFormula) -> Self {
        LCFormula::Under(Box::new(a), Box::new(b))
    }

    pub fn dot(a: LCFormula, b: LCFormula) -> Self {
        LCFormula::Dot(Box::new(a), Box::new(b))
    }

    pub fn connectives(&self) -> usize {
        match self {
            LCFormula::Prop(_) => 0,
            LCFormula::Over(a, b) | LCFormula::Under(a, b) | LCFormula::Dot(a, b) => {
                1 + a.connectives() + b.connectives()
            }
        }
    }
}

impl fmt::Display for LCFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(x: &LCFormula, parens: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match x {
                LCFormula::Prop(p) => f.write_str(p),
                LCFormula::Over(b, a) => {
                    if parens {
                        f.write_str("(")?;
                    }
                    go(b, true, f)?;
                    f.write_str("/")?;
                    go(a, true, f)?;
                    if parens {
                        f.write_str(")")?;
                    }
                    Ok(())
                }
                LCFormula::Under(a, b) => {
                    if parens {
                        f.write_str("(")?;
                    }
                    go(a, true, f)?;
                    f.write_str("\\")?;
                    go(b, true, f)?;
                    if parens {
                        f.write_str(")")?;
                    }
                    Ok(())
                }
                LCFormula::Dot(a, b) => {
                    if parens {
                        f.write_str("(")?;
                    }
                    go(a, true, f)?;
                    f.write_str(".")?;
                    go(b, true, f)?;
                    if parens {
                        f.write_str(")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, false, f)
    }
}

/// A noncommutative sequent with a nonempty antecedent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LCSequent {
    pub antecedent: Vec<LCFormula>,
    pub succedent: LCFormula,
}

impl fmt::Display for LCSequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, a) in self.antecedent.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, " |- {}", self.succedent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LCRule {
    Id,
    OverR,
    UnderR,
    /// `(•L)` at the antecedent position.
    DotL { pos: usize },
    /// `(•R)` splitting the antecedent after `split` formulas.
    DotR { split: usize },
    /// `(/L)`: the division at `pos`, argument segment of length `len`
    /// immediately to its right.
    OverL { pos: usize, len: usize },
    /// `(\L)`: the division at `pos`, argument segment of length `len`
    /// immediately to its left.
    UnderL { pos: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LCDerivation {
    pub rule: LCRule,
    pub premises: Vec<LCDerivation>,
    pub conclusion: LCSequent,
}

impl LCDerivation {
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(LCDerivation::size).sum::<usize>()
    }
}

/// Re-validate an LC derivation by rebuilding each node.
pub fn lc_check(d: &LCDerivation) -> Result<(), LcError> {
    let rebuilt: LCSequent = match (&d.rule, d.premises.as_slice()) {
        (LCRule::Id, []) => {
            if d.conclusion.antecedent.len() == 1
                && d.conclusion.antecedent[0] == d.conclusion.succedent
            {
                d.conclusion.clone()
            } else {
                return Err(LcError::Inapplicable("malformed identity".into()));
            }
        }
        (LCRule::OverR, [p]) => {
            lc_check(p)?;
            let mut ante = p.conclusion.antecedent.clone();
            let a = ante.pop().ok_or_else(|| {
                LcError::Inapplicable("right rule needs a nonempty antecedent".into())
            })?;
            if ante.is_empty() {
                return Err(LcError::Inapplicable("empty antecedent produced".into()));
            }
            LCSequent {
                antecedent: ante,
                succedent: LCFormula::over(p.conclusion.succedent.clone(), a),
            }
        }
        (LCRule::UnderR, [p]) => {
            lc_check(p)?;
            let mut ante = p.conclusion.antecedent.clone();
            if ante.len() < 2 {
                return Err(LcError::Inapplicable("empty antecedent produced".into()));
            }
            let a = ante.remove(0);
            LCSequent {
                antecedent: ante,
                succedent: LCFormula::under(a, p.conclusion.succedent.clone()),
            }
        }
        (LCRule::DotL { pos }, [p]) => {
            lc_check(p)?;
            let ante = &p.conclusion.antecedent;
            if pos + 1 >= ante.len() {
                return Err(LcError::Inapplicable("dot-left out of range".into()));
            }
            let mut out = ante.clone();
            let a = out.remove(*pos);
            let b = out.remove(*pos);
            out.insert(*pos, LCFormula::dot(a, b));
            LCSequent {
                antecedent: out,
                succedent: p.conclusion.succedent.clone(),
            }
        }
        (LCRule::DotR { split }, [p1, p2]) => {
            lc_check(p1)?;
            lc_check(p2)?;
            let mut ante = p1.conclusion.antecedent.clone();
            ante.extend(p2.conclusion.antecedent.iter().cloned());
            if *split != p1.conclusion.antecedent.len() {
                return Err(LcError::Inapplicable("dot-right split mismatch".into()));
            }
            LCSequent {
                antecedent: ante,
                succedent: LCFormula::dot(
                    p1.conclusion.succedent.clone(),
                    p2.conclusion.succedent.clone(),
                ),
            }
        }
        (LCRule::OverL { pos, len }, [p1, p2]) => {
            lc_check(p1)?;
            lc_check(p2)?;
            // p1 ⊢ A; p2 = Θ1, B, Θ2 ⊢ C; conclusion Θ1, B/A, Γ, Θ2 ⊢ C.
            if p1.conclusion.antecedent.len() != *len {
                return Err(LcError::Inapplicable("argument segment mismatch".into()));
            }
            let ante2 = &p2.conclusion.antecedent;
            if *pos >= ante2.len() {
                return Err(LcError::Inapplicable("division out of range".into()));
            }
            let b = ante2[*pos].clone();
            let mut out = ante2.clone();
            out[*pos] = LCFormula::over(b, p1.conclusion.succedent.clone());
            for (k, g) in p1.conclusion.antecedent.iter().enumerate() {
                out.insert(pos + 1 + k, g.clone());
            }
            LCSequent {
                antecedent: out,
                succedent: p2.conclusion.succedent.clone(),
            }
        }
        (LCRule::UnderL { pos, len }, [p1, p2]) => {
            lc_check(p1)?;
            lc_check(p2)?;
            if p1.conclusion.antecedent.len() != *len {
                return Err(LcError::Inapplicable("argument segment mismatch".into()));
            }
            let ante2 = &p2.conclusion.antecedent;
            if *pos >= ante2.len() {
                return Err(LcError::Inapplicable("division out of range".into()));
            }
            let b = ante2[*pos].clone();
            let mut out = ante2.clone();
            out[*pos] = LCFormula::under(p1.conclusion.succedent.clone(), b);
            for (k, g) in p1.conclusion.antecedent.iter().enumerate().rev() {
                out.insert(*pos, g.clone());
                let _ = k;
            }
            LCSequent {
                antecedent: out,
                succedent: p2.conclusion.succedent.clone(),
            }
        }
        _ => return Err(LcError::Inapplicable("wrong premise count".into())),
    };
    if rebuilt == d.conclusion {
        Ok(())
    } else {
        Err(LcError::Inapplicable(
            "stored conclusion differs from rule output".into(),
        ))
    }
}

/// Bounded cut-free backward search over the noncommutative rules with
/// contiguous context splits.
pub fn lc_prove(goal: &LCSequent, budget: Budget) -> Option<LCDerivation> {
    struct S {
        nodes_left: usize,
        memo: BTreeMap<LCSequent, Option<LCDerivation>>,
    }
    fn search(s: &mut S, goal: &LCSequent, depth: usize) -> Result<Option<LCDerivation>, ()> {
        if s.nodes_left == 0 {
            return Err(());
        }
        s.nodes_left -= 1;
        if let Some(hit) = s.memo.get(goal) {
            if hit.is_some() {
                return Ok(hit.clone());
            }
            // Failures are only conclusive because the memo is scoped to a
            // single fixed-depth run; repopulate on deeper retries.
        }
        if goal.antecedent.is_empty() {
            return Ok(None);
        }
        // Id.
        if goal.antecedent.len() == 1 && goal.antecedent[0] == goal.succedent {
            let d = LCDerivation {
                rule: LCRule::Id,
                premises: Vec::new(),
                conclusion: goal.clone(),
            };
            s.memo.insert(goal.clone(), Some(d.clone()));
            return Ok(Some(d));
        }
        if depth == 0 {
            return Ok(None);
        }
        // Right rules (invertible).
        match &goal.succedent {
            LCFormula::Over(b, a) => {
                let mut ante = goal.antecedent.clone();
                ante.push(a.as_ref().clone());
                let premise = LCSequent {
                    antecedent: ante,
                    succedent: b.as_ref().clone(),
                };
                let found = search(s, &premise, depth - 1)?.map(|p| LCDerivation {
                    rule: LCRule::OverR,
                    premises: vec![p],
                    conclusion: goal.clone(),
                });
                s.memo.insert(goal.clone(), found.clone());
                return Ok(found);
            }
            LCFormula::Under(a, b) => {
                let mut ante = vec![a.as_ref().clone()];
                ante.extend(goal.antecedent.iter().cloned());
                let premise = LCSequent {
                    antecedent: ante,
                    succedent: b.as_ref().clone(),
                };
                let found = search(s, &premise, depth - 1)?.map(|p| LCDerivation {
                    rule: LCRule::UnderR,
                    premises: vec![p],
                    conclusion: goal.clone(),
                });
                s.memo.insert(goal.clone(), found.clone());
                return Ok(found);
            }
            _ => {}
        }
        // (•L), invertible.
        if let Some(pos) = goal
            .antecedent
            .iter()
            .position(|f| matches!(f, LCFormula::Dot(..)))
        {
            let LCFormula::Dot(a, b) = &goal.antecedent[pos] else {
                unreachable!()
            };
            let mut ante = goal.antecedent.clone();
            ante[pos] = a.as_ref().clone();
            ante.insert(pos + 1, b.as_ref().clone());
            let premise = LCSequent {
                antecedent: ante,
                succedent: goal.succedent.clone(),
            };
            let found = search(s, &premise, depth - 1)?.map(|p| LCDerivation {
                rule: LCRule::DotL { pos },
                premises: vec![p],
                conclusion: goal.clone(),
            });
            s.memo.insert(goal.clone(), found.clone());
            return Ok(found);
        }
        // (•R).
        if let LCFormula::Dot(a, b) = &goal.succedent {
            for split in 1..goal.antecedent.len() {
                let p1 = LCSequent {
                    antecedent: goal.antecedent[..split].to_vec(),
                    succedent: a.as_ref().clone(),
                };
                let p2 = LCSequent {
                    antecedent: goal.antecedent[split..].to_vec(),
                    succedent: b.as_ref().clone(),
                };
                let Some(d1) = search(s, &p1, depth - 1)? else {
                    continue;
                };
                let Some(d2) = search(s, &p2, depth - 1)? else {
                    continue;
                };
                let d = LCDerivation {
                    rule: LCRule::DotR { split },
                    premises: vec![d1, d2],
                    conclusion: goal.clone(),
                };
                s.memo.insert(goal.clone(), Some(d.clone()));
                return Ok(Some(d));
            }
        }
        // Left division rules.
        for pos in 0..goal.antecedent.len() {
            match &goal.antecedent[pos] {
                LCFormula::Over(b, a) => {
                    // Argument segment to the right of pos.
                    for len in 1..=(goal.antecedent.len() - pos - 1) {
                        let p1 = LCSequent {
                            antecedent: goal.antecedent[pos + 1..pos + 1 + len].to_vec(),
                            succedent: a.as_ref().clone(),
                        };
                        let mut rest = goal.antecedent[..pos].to_vec();
                        rest.push(b.as_ref().clone());
                        rest.extend(goal.antecedent[pos + 1 + len..].iter().cloned());
                        let p2 = LCSequent {
                            antecedent: rest,
                            succedent: goal.succedent.clone(),
                        };
                        let Some(d1) = search(s, &p1, depth - 1)? else {
                            continue;
                        };
                        let Some(d2) = search(s, &p2, depth - 1)? else {
                            continue;
                        };
                        let d = LCDerivation {
                            rule: LCRule::OverL { pos, len },
                            premises: vec![d1, d2],
                            conclusion: goal.clone(),
                        };
                        s.memo.insert(goal.clone(), Some(d.clone()));
                        return Ok(Some(d));
                    }
                }
                LCFormula::Under(a, b) => {
                    for len in 1..=pos {
                        let p1 = LCSequent {
                            antecedent: goal.antecedent[pos - len..pos].to_vec(),
                            succedent: a.as_ref().clone(),
                        };
                        let mut rest = goal.antecedent[..pos - len].to_vec();
                        rest.push(b.as_ref().clone());
                        rest.extend(goal.antecedent[pos + 1..].iter().cloned());
                        let p2 = LCSequent {
                            antecedent: rest,
                            succedent: goal.succedent.clone(),
                        };
                        let Some(d1) = search(s, &p1, depth - 1)? else {
                            continue;
                        };
                        let Some(d2) = search(s, &p2, depth - 1)? else {
                            continue;
                        };
                        let d = LCDerivation {
                            rule: LCRule::UnderL {
                                pos: pos - len,
                                len,
                            },
                            premises: vec![d1, d2],
                            conclusion: goal.clone(),
                        };
                        s.memo.insert(goal.clone(), Some(d.clone()));
                        return Ok(Some(d));
                    }
                }
                _ => {}
            }
        }
        s.memo.insert(goal.clone(), None);
        Ok(None)
    }
    let mut s = S {
        nodes_left: budget.max_nodes,
        memo: BTreeMap::new(),
    };
    search(&mut s, goal, budget.max_depth).ok().flatten()
}

/// Translate a formula to the first-order语言 parameterized by its two
/// endpoints; bound variables are drawn from the counter.
pub fn lc_formula_to_mill(
    f: &LCFormula,
    left: &FOTerm,
    right: &FOTerm,
    fresh: &mut usize,
) -> FOFormula {
    match f {
        LCFormula::Prop(p) => FOFormula::atom(
            PredSym::positive(p.clone(), 1, 1),
            vec![left.clone()],
            vec![right.clone()],
        )
        .expect("propositional atoms are binary"),
        LCFormula::Dot(a, b) => {
            let x = format!("x{}", *fresh);
            *fresh += 1;
            let xa = FOTerm::Var(x.clone());
            let fa = lc_formula_to_mill(a, left, &xa, fresh);
            let fb = lc_formula_to_mill(b, &xa, right, fresh);
            FOFormula::exists(x, FOFormula::tensor(fa, fb))
        }
        LCFormula::Over(b, a) => {
            let x = format!("x{}", *fresh);
            *fresh += 1;
            let xv = FOTerm::Var(x.clone());
            let fa = lc_formula_to_mill(a, right, &xv, fresh);
            let fb = lc_formula_to_mill(b, left, &xv, fresh);
            FOFormula::forall(x, FOFormula::impl_(fa, fb))
        }
        LCFormula::Under(a, b) => {
            let x = format!("x{}", *fresh);
            *fresh += 1;
            let xv = FOTerm::Var(x.clone());
            let fa = lc_formula_to_mill(a, &xv, left, fresh);
            let fb = lc_formula_to_mill(b, &xv, right, fresh);
            FOFormula::forall(x, FOFormula::impl_(fa, fb))
        }
    }
}

/// The sequent translation with endpoint constants `c₀,…,cₙ`.
pub fn lc_to_mill(s: &LCSequent, endpoints: Option<Vec<FOTerm>>) -> Result<FOSequent, LcError> {
    let n = s.antecedent.len();
    let endpoints = match endpoints {
        Some(e) => {
            if e.len() != n + 1 {
                return Err(LcError::EndpointCountMismatch);
            }
            e
        }
        None => (0..=n).map(|k| FOTerm::Const(k.to_string())).collect(),
    };
    let mut fresh = 0usize;
    let antecedent: Vec<FOFormula> = s
        .antecedent
        .iter()
        .enumerate()
        .map(|(k, f)| lc_formula_to_mill(f, &endpoints[k], &endpoints[k + 1], &mut fresh))
        .collect();
    let succedent = lc_formula_to_mill(&s.succedent, &endpoints[0], &endpoints[n], &mut fresh);
    Ok(FOSequent::TwoSided {
        antecedent,
        succedent,
    })
}

/// Direct encoding into tensor types at the index pair `(upper, lower)`.
/// Both division encodings keep the dualized argument on the right of the
/// par, matching the image of the first-order translation; the product is
/// the delta-bound tensor derived by pushing `•` through that image.
pub fn lc_type_to_ettc(
    f: &LCFormula,
    upper: &Index,
    lower: &Index,
    supply: &mut IndexSupply,
) -> TensorType {
    match f {
        LCFormula::Prop(p) => TensorType::atom(
            LiteralSymbol::positive(p.clone(), 1, 1),
            vec![upper.clone()],
            vec![lower.clone()],
        )
        .expect("binary literal"),
        LCFormula::Over(b, a) => {
            // (b/a)^i_j = ∇^α_β (b^i_α ⅋ ā^β_j)
            let alpha = supply.fresh();
            let beta = supply.fresh();
            let fb = lc_type_to_ettc(b, upper, &alpha, supply);
            let fa = lc_type_to_ettc(a, lower, &beta, supply);
            TensorType::nabla(alpha, beta, TensorType::par(fb, fa.dual()))
        }
        LCFormula::Under(a, b) => {
            // (a\b)^i_j = ∇^α_β (b^β_j ⅋ ā^i_α)
            let alpha = supply.fresh();
            let beta = supply.fresh();
            let fb = lc_type_to_ettc(b, &beta, lower, supply);
            let fa = lc_type_to_ettc(a, &alpha, upper, supply);
            TensorType::nabla(alpha, beta, TensorType::par(fb, fa.dual()))
        }
        LCFormula::Dot(a, b) => {
            // (a•b)^i_j = Δ^α_β (a^i_α ⊗ b^β_j)
            let alpha = supply.fresh();
            let beta = supply.fresh();
            let fa = lc_type_to_ettc(a, upper, &alpha, supply);
            let fb = lc_type_to_ettc(b, &beta, lower, supply);
            TensorType::delta(alpha, beta, TensorType::tensor(fa, fb))
        }
    }
}

/// Prove the first-order translation of an LC sequent.
pub fn lc_mill_provable(s: &LCSequent, budget: Budget) -> Result<bool, FoError> {
    let fo = lc_to_mill(s, None).map_err(|e| FoError::Inapplicable(format!("{e}")))?;
    let one_sided = crate::fo::mill_to_mll(&fo);
    Ok(crate::fo::fo_prove(&one_sided, budget).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fo::{balance_check, Balance};
    use crate::index::idx;

    fn p(n: &str) -> LCFormula {
        LCFormula::prop(n)
    }

    #[test]
    fn over_elimination_sequent() {
        // b/a, a ⊢ b by (/L) then Id.
        let goal = LCSequent {
            antecedent: vec![LCFormula::over(p("b"), p("a")), p("a")],
            succedent: p("b"),
        };
        let d = lc_prove(&goal, Budget::default()).expect("derivable");
        assert!(lc_check(&d).is_ok());
        // a ⊢ b is not derivable.
        let bad = LCSequent {
            antecedent: vec![p("a")],
            succedent: p("b"),
        };
        assert!(lc_prove(&bad, Budget::default()).is_none());
    }

    #[test]
    fn transitive_verb_shape() {
        // np, (np\s)/np, np ⊢ s.
        let tv = LCFormula::over(LCFormula::under(p("np"), p("s")), p("np"));
        let goal = LCSequent {
            antecedent: vec![p("np"), tv, p("np")],
            succedent: p("s"),
        };
        assert!(lc_prove(&goal, Budget::default()).is_some());
    }

    #[test]
    fn translation_is_strictly_balanced() {
        let goal = LCSequent {
            antecedent: vec![LCFormula::over(p("b"), p("a")), p("a")],
            succedent: p("b"),
        };
        let fo = lc_to_mill(&goal, None).unwrap();
        assert_eq!(balance_check(&fo), Balance::StrictlyBalanced);
        assert!(lc_mill_provable(&goal, Budget::default()).unwrap());
    }

    #[test]
    fn dot_translation() {
        // ||A•B||^{(l,r)} = ∃x(||A||^{(l,x)} ⊗ ||B||^{(x,r)})
        let f = LCFormula::dot(p("a"), p("b"));
        let mut fresh = 0;
        let t = lc_formula_to_mill(
            &f,
            &FOTerm::Const("l".into()),
            &FOTerm::Const("r".into()),
            &mut fresh,
        );
        match &t {
            FOFormula::Exists(x, body) => match body.as_ref() {
                FOFormula::Tensor(a, b) => {
                    assert_eq!(
                        format!("{a}"),
                        format!("a(l;{x})")
                    );
                    assert_eq!(
                        format!("{b}"),
                        format!("b({x};r)")
                    );
                }
                _ => panic!("tensor expected"),
            },
            _ => panic!("exists expected"),
        }
    }

    #[test]
    fn encoding_coherence_with_fo_image() {
        // The type symbol of the direct encoding agrees with the symbol of
        // the first-order image of the translation.
        use crate::fo::formula_to_type;
        use std::collections::BTreeMap;
        for f in [
            p("a"),
            LCFormula::over(p("b"), p("a")),
            LCFormula::under(p("a"), p("b")),
            LCFormula::dot(p("a"), p("b")),
            LCFormula::over(LCFormula::under(p("a"), p("b")), p("c")),
            LCFormula::under(LCFormula::dot(p("a"), p("b")), p("c")),
        ] {
            let mut supply = IndexSupply::new();
            let up = idx("u");
            let low = idx("v");
            let direct = lc_type_to_ettc(&f, &up, &low, &mut supply);
            assert!(direct.wellformed().is_ok(), "{f}: {direct}");

            let mut fresh = 0usize;
            let fo = lc_formula_to_mill(
                &f,
                &FOTerm::Const("l".into()),
                &FOTerm::Const("r".into()),
                &mut fresh,
            )
            .to_mll();
            let mut rho = BTreeMap::new();
            let mut pi = BTreeMap::new();
            let mut s2 = IndexSupply::new();
            rho.insert("l".to_string(), s2.fresh());
            pi.insert("l".to_string(), s2.fresh());
            rho.insert("r".to_string(), s2.fresh());
            pi.insert("r".to_string(), s2.fresh());
            let image = formula_to_type(&fo, &rho, &pi, &mut s2).unwrap();
            assert_eq!(
                direct.type_symbol(),
                image.type_symbol(),
                "encoding mismatch for {f}: {direct} vs {image}"
            );
        }
    }
}
