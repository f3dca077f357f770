//! Membership for the relative-clause lexicon: the heaviest search the
//! acceptance suite exercises.

use ettc_core::grammar::{Mode, TensorGrammar, TensorLexEntry};
use ettc_core::index::{word, IndexSupply};
use ettc_core::lambek::{lc_type_to_ettc, LCFormula};
use ettc_core::sequent::{check_derivation, Budget};
use ettc_core::term::TensorTerm;
use ettc_core::types::{LiteralSymbol, TensorType};

fn p(n: &str) -> LCFormula {
    LCFormula::prop(n)
}

/// The five-entry lexicon: names, a transitive verb, an adverb, and the
/// relativizer typed over the delta-bound clause with an np gap.
pub fn relative_clause_grammar() -> TensorGrammar {
    let mut supply = IndexSupply::new();
    let mut entries = Vec::new();
    let mut push = |name: &str, ty: TensorType, supply: &mut IndexSupply| {
        let (fu, fl) = ty.free_index_seqs();
        assert_eq!((fu.len(), fl.len()), (1, 1), "{name}");
        let term = TensorTerm::edge(word(name), fu[0].clone(), fl[0].clone());
        entries.push(TensorLexEntry::new(name, term, ty).unwrap());
        let _ = supply;
    };
    for name in ["Mary", "John"] {
        let up = supply.fresh();
        let low = supply.fresh();
        let ty = lc_type_to_ettc(&p("np"), &up, &low, &mut supply);
        push(name, ty, &mut supply);
    }
    // loves : (np\s)/np
    let loves = LCFormula::over(LCFormula::under(p("np"), p("s")), p("np"));
    let up = supply.fresh();
    let low = supply.fresh();
    let ty = lc_type_to_ettc(&loves, &up, &low, &mut supply);
    push("loves", ty, &mut supply);
    // madly : (np\s)\(np\s)
    let vp = LCFormula::under(p("np"), p("s"));
    let madly = LCFormula::under(vp.clone(), vp);
    let up = supply.fresh();
    let low = supply.fresh();
    let ty = lc_type_to_ettc(&madly, &up, &low, &mut supply);
    push("madly", ty, &mut supply);
    // who : (np\np)/Δ^u_t(np^t_u ⊸ s): the clause argument is the
    // delta-bound subtype of np ⊸ s.
    let up = supply.fresh();
    let low = supply.fresh();
    let alpha = supply.fresh();
    let beta = supply.fresh();
    let npnp = lc_type_to_ettc(
        &LCFormula::under(p("np"), p("np")),
        &up,
        &alpha,
        &mut supply,
    );
    let clause = {
        let u = supply.fresh();
        let t = supply.fresh();
        let s = TensorType::atom(
            LiteralSymbol::positive("s", 1, 1),
            vec![supply.fresh()],
            vec![beta.clone()],
        )
        .unwrap();
        let (su, _) = s.free_index_seqs();
        let _ = su;
        let np_gap = TensorType::atom(
            LiteralSymbol::positive("np", 1, 1),
            vec![t.clone()],
            vec![u.clone()],
        )
        .unwrap();
        // np^t_u ⊸ s = s ⅋ np̄^t_u (the dual symbol keeps the sequences).
        let imp = crate_implication(&np_gap, s);
        TensorType::delta(u, t, imp)
    };
    let who = TensorType::nabla(alpha, beta, TensorType::par(npnp, clause.dual()));
    push("who", who, &mut supply);
    TensorGrammar::new(entries, LiteralSymbol::positive("s", 1, 1))
}

fn crate_implication(a: &TensorType, b: TensorType) -> TensorType {
    ettc_core::types::implication(a, b).unwrap()
}

#[test]
fn relative_clause_membership() {
    let g = relative_clause_grammar();
    let budget = Budget::new(48, 4_000_000);
    let start = std::time::Instant::now();
    let np = LiteralSymbol::positive("np", 1, 1);
    let found = g.member_with_target(
        &word("Mary who John loves madly"),
        &np,
        Mode::Regular,
        budget,
    );
    let elapsed = start.elapsed();
    eprintln!("membership took {elapsed:?}");
    let d = found.found().expect("noun phrase derivable");
    assert!(check_derivation(&d).is_ok());
    assert_eq!(
        d.conclusion.term().edges()[0].label,
        word("Mary who John loves madly")
    );
}
