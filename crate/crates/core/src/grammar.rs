//! Grammars over the two calculi.
//!
//! A first-order grammar pairs words with strictly balanced formulas over
//! the endpoint constants `l` and `r`; membership instantiates the endpoints
//! with integer positions and proves the resulting sequent. A tensor grammar
//! holds lexicalized typing judgements up to renaming; membership tiles the
//! sentence with entries, builds the delta-chain goal the deduction theorem
//! prescribes, and runs the cut-free search, optionally allowing extra
//! divergent loops (the regularized language).

use crate::fo::{balance_check, fo_prove, mill_to_mll, Balance, FOFormula, FOSequent, FOTerm};
use crate::index::{Index, IndexSupply, Symbol, Word};
use crate::sequent::{cut_compose, prove, Budget, Derivation, ProveResult, TypingJudgement};
use crate::term::{Edge, TensorTerm};
use crate::types::{LiteralSymbol, TensorType, TypeSymbol};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("grammar is not balanced: {0}")]
    NotBalancedGrammar(String),
    #[error("lexicon entry invalid: {0}")]
    BadEntry(String),
    #[error("unknown word `{0}`")]
    UnknownWord(String),
}

/// The reserved endpoint constant names of first-order lexicon formulas.
pub const LEFT_ENDPOINT: &str = "l";
pub const RIGHT_ENDPOINT: &str = "r";

/// A first-order lexical entry: a nonempty word with a strictly balanced
/// formula in which `l` occurs once with left polarity and `r` once with
/// right polarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MillLexEntry {
    pub word: Word,
    pub formula: FOFormula,
}

impl MillLexEntry {
    pub fn new(word: Word, formula: FOFormula) -> Result<Self, GrammarError> {
        if word.is_empty() {
            return Err(GrammarError::BadEntry("empty word".into()));
        }
        let seq = FOSequent::OneSided(vec![formula.clone()]);
        if balance_check(&seq) != Balance::StrictlyBalanced {
            return Err(GrammarError::NotBalancedGrammar(format!(
                "entry formula for `{word}` is not strictly balanced"
            )));
        }
        let mut l_left = 0;
        let mut r_right = 0;
        let mut other = 0;
        for occ in crate::fo::formula_occurrences(&formula) {
            if occ.bound_depth.is_some() {
                continue;
            }
            match (occ.term.name(), occ.sign) {
                (LEFT_ENDPOINT, -1) => l_left += 1,
                (RIGHT_ENDPOINT, 1) => r_right += 1,
                _ => other += 1,
            }
        }
        if l_left != 1 || r_right != 1 || other != 0 {
            return Err(GrammarError::NotBalancedGrammar(format!(
                "entry for `{word}` must use `l` once on the left and `r` once on the right"
            )));
        }
        Ok(MillLexEntry { word, formula })
    }

    /// The formula with the endpoints instantiated at two positions.
    pub fn at(&self, left: &FOTerm, right: &FOTerm) -> FOFormula {
        let f = crate::fo::rename_endpoint(&self.formula, LEFT_ENDPOINT, left);
        crate::fo::rename_endpoint(&f, RIGHT_ENDPOINT, right)
    }
}

/// A first-order grammar: entries plus a binary start predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MillGrammar {
    pub entries: Vec<MillLexEntry>,
    pub start: String,
}

impl MillGrammar {
    pub fn new(entries: Vec<MillLexEntry>, start: impl Into<String>) -> Self {
        MillGrammar {
            entries,
            start: start.into(),
        }
    }

    /// The sequent deciding membership for a fixed entry sequence.
    pub fn sequent_for(&self, selection: &[usize]) -> FOSequent {
        let n = selection.len();
        let pos = |k: usize| FOTerm::Const(k.to_string());
        let antecedent: Vec<FOFormula> = selection
            .iter()
            .enumerate()
            .map(|(k, &e)| self.entries[e].at(&pos(k), &pos(k + 1)))
            .collect();
        let succedent = FOFormula::atom(
            crate::fo::PredSym::positive(self.start.clone(), 1, 1),
            vec![pos(0)],
            vec![pos(n)],
        )
        .expect("binary start symbol");
        FOSequent::TwoSided {
            antecedent,
            succedent,
        }
    }

    /// Membership: enumerate entry sequences whose words concatenate to the
    /// sentence and prove the instantiated sequent.
    pub fn member(&self, sentence: &Word, budget: Budget) -> bool {
        if sentence.is_empty() {
            return false;
        }
        let words: Vec<&Word> = self.entries.iter().map(|e| &e.word).collect();
        for selection in tilings(sentence.symbols(), &words) {
            let seq = self.sequent_for(&selection);
            if fo_prove(&mill_to_mll(&seq), budget).is_some() {
                return true;
            }
        }
        false
    }

    /// All words derivable with at most `max_entries` lexicon selections.
    pub fn generate(&self, max_entries: usize, budget: Budget) -> Vec<Word> {
        let mut found: BTreeSet<Word> = BTreeSet::new();
        for selection in sequences(self.entries.len(), max_entries) {
            let word = concat_words(selection.iter().map(|&k| &self.entries[k].word));
            if found.contains(&word) {
                continue;
            }
            let seq = self.sequent_for(&selection);
            if fo_prove(&mill_to_mll(&seq), budget).is_some() {
                found.insert(word);
            }
        }
        sort_words(found)
    }

    /// Translate into a tensor grammar entry by entry.
    pub fn to_tensor_grammar(&self) -> Result<TensorGrammar, GrammarError> {
        let mut entries = Vec::new();
        for e in &self.entries {
            let mut supply = IndexSupply::new();
            let mut rho: BTreeMap<String, Index> = BTreeMap::new();
            let mut pi: BTreeMap<String, Index> = BTreeMap::new();
            rho.insert(LEFT_ENDPOINT.into(), supply.fresh());
            pi.insert(LEFT_ENDPOINT.into(), supply.fresh());
            rho.insert(RIGHT_ENDPOINT.into(), supply.fresh());
            pi.insert(RIGHT_ENDPOINT.into(), supply.fresh());
            let ty =
                crate::fo::formula_to_type(&e.formula.to_mll(), &rho, &pi, &mut supply)
                    .map_err(|err| GrammarError::BadEntry(format!("{err}")))?;
            // Free indices of the image: ρ(l) above, π(r) below; the term is
            // the single word edge wired accordingly.
            let (fu, fl) = ty.free_index_seqs();
            if fu.len() != 1 || fl.len() != 1 {
                return Err(GrammarError::BadEntry(format!(
                    "entry for `{}` is not of valency (1,1)",
                    e.word
                )));
            }
            let term = TensorTerm::edge(e.word.clone(), fu[0].clone(), fl[0].clone());
            entries.push(TensorLexEntry::new(format!("{}", e.word), term, ty)?);
        }
        Ok(TensorGrammar::new(
            entries,
            LiteralSymbol::positive(self.start.clone(), 1, 1),
        ))
    }
}

/// A lexicalized typing judgement `τ : A`, stored up to renaming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorLexEntry {
    pub name: String,
    pub term: TensorTerm,
    pub ty: TensorType,
}

impl TensorLexEntry {
    pub fn new(
        name: impl Into<String>,
        term: TensorTerm,
        ty: TensorType,
    ) -> Result<Self, GrammarError> {
        let name = name.into();
        if !term.classify().lexical {
            return Err(GrammarError::BadEntry(format!(
                "entry `{name}` must have a lexical term"
            )));
        }
        ty.wellformed()
            .map_err(|e| GrammarError::BadEntry(format!("entry `{name}`: {e}")))?;
        let (tu, tl) = term.free_indices();
        let (yu, yl) = ty.free_index_sets();
        if tu != yl || tl != yu {
            return Err(GrammarError::BadEntry(format!(
                "entry `{name}` term does not mirror its type"
            )));
        }
        Ok(TensorLexEntry { name, term, ty })
    }

    /// The single word of a string-shaped entry.
    pub fn word(&self) -> Result<&Word, GrammarError> {
        match self.term.edges() {
            [e] if self.term.loops().is_empty() => Ok(&e.label),
            _ => Err(GrammarError::BadEntry(format!(
                "entry `{}` is not a single string",
                self.name
            ))),
        }
    }
}

/// Which language to decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Exactly the single word edge.
    Regular,
    /// Extra divergent loops allowed, capped by the number of entries used.
    Regularized,
}

/// Outcome of a membership query.
#[derive(Debug, Clone)]
pub enum Membership {
    Found(Derivation),
    NotFoundWithinBudget,
}

impl Membership {
    pub fn is_found(&self) -> bool {
        matches!(self, Membership::Found(_))
    }

    pub fn found(self) -> Option<Derivation> {
        match self {
            Membership::Found(d) => Some(d),
            Membership::NotFoundWithinBudget => None,
        }
    }
}

/// A tensor grammar: lexical entries plus an atomic start symbol of valency
/// `(1,1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorGrammar {
    pub entries: Vec<TensorLexEntry>,
    pub start: LiteralSymbol,
}

impl TensorGrammar {
    pub fn new(entries: Vec<TensorLexEntry>, start: LiteralSymbol) -> Self {
        assert_eq!(start.valency(), (1, 1), "start symbol must be binary");
        TensorGrammar { entries, start }
    }

    /// Decide membership of a sentence, returning the full witness
    /// derivation (lexicon leaves cut into the logical core) when found.
    pub fn member(&self, sentence: &Word, mode: Mode, budget: Budget) -> Membership {
        self.member_with_target(sentence, &self.start, mode, budget)
    }

    /// Membership against an explicit target symbol.
    pub fn member_with_target(
        &self,
        sentence: &Word,
        target: &LiteralSymbol,
        mode: Mode,
        budget: Budget,
    ) -> Membership {
        if sentence.is_empty() {
            return Membership::NotFoundWithinBudget;
        }
        let words: Vec<Word> = self
            .entries
            .iter()
            .map(|e| e.word().cloned().unwrap_or_else(|_| Word::epsilon()))
            .collect();
        let word_refs: Vec<&Word> = words.iter().collect();
        for selection in tilings(sentence.symbols(), &word_refs) {
            let caps = match mode {
                Mode::Regular => 0..=0,
                Mode::Regularized => 0..=selection.len(),
            };
            for extra_loops in caps {
                if let Some(d) = self.try_selection(&selection, target, extra_loops, budget) {
                    return Membership::Found(d);
                }
            }
        }
        Membership::NotFoundWithinBudget
    }

    /// Build and prove the delta-chain goal for one ordered entry selection,
    /// then cut the lexicon entries back in.
    fn try_selection(
        &self,
        selection: &[usize],
        target: &LiteralSymbol,
        extra_loops: usize,
        budget: Budget,
    ) -> Option<Derivation> {
        let n = selection.len();
        let mut supply = IndexSupply::new();
        let i_seq = supply.fresh_many(n + 1);
        let j_seq = supply.fresh_many(n + 1);
        // Term: δ^{j_{μ+1}}_{i_μ} for μ = 0..n, plus the divergent loops.
        let edges: Vec<Edge> = (0..=n)
            .map(|m| Edge {
                label: Word::epsilon(),
                lower: i_seq[m].clone(),
                upper: j_seq[m].clone(),
            })
            .collect();
        let term = TensorTerm::from_parts(edges, Vec::new())
            .with_loops(extra_loops, Word::epsilon());
        // Context: s^{i₀}_{j_{n+1}} then the entry duals in reverse order.
        let start_ty = TensorType::atom(
            target.clone(),
            vec![i_seq[0].clone()],
            vec![j_seq[n].clone()],
        )
        .ok()?;
        let mut ctx = vec![start_ty];
        let mut duals: Vec<TensorType> = Vec::new();
        for (m, &e) in selection.iter().enumerate() {
            let dual_sym = self.entries[e].ty.dual().type_symbol();
            let inst = dual_sym
                .instantiate(
                    &[i_seq[m + 1].clone()],
                    &[j_seq[m].clone()],
                    &mut supply,
                )
                .ok()?;
            duals.push(inst);
        }
        let dual_instances = duals.clone();
        duals.reverse();
        ctx.extend(duals);
        let goal = TypingJudgement::new(term, ctx).ok()?;
        let core = match prove(&goal, budget) {
            ProveResult::Found(d) => d,
            ProveResult::NotFoundWithinBudget => return None,
        };
        // Cut each entry back in, locating its dual instance each time.
        let mut acc = core;
        for (m, &e) in selection.iter().enumerate() {
            let lex = self.lex_leaf(e, &mut supply)?;
            let pos = acc
                .conclusion
                .context()
                .iter()
                .position(|t| t == &dual_instances[m])?;
            acc = cut_compose(&acc, pos, &lex, 0).ok()?;
        }
        Some(acc)
    }

    fn lex_leaf(&self, entry: usize, supply: &mut IndexSupply) -> Option<Derivation> {
        let e = &self.entries[entry];
        let sym = e.ty.type_symbol();
        let upper = supply.fresh_many(sym.valency().0);
        let lower = supply.fresh_many(sym.valency().1);
        let ty = sym.instantiate(&upper, &lower, supply).ok()?;
        let (fu, fl) = ty.free_index_seqs();
        // Rename the term alongside the type.
        let (tu, tl) = e.ty.free_index_seqs();
        let mut map = BTreeMap::new();
        for (from, to) in tu.iter().zip(fu.iter()).chain(tl.iter().zip(fl.iter())) {
            map.insert(from.clone(), to.clone());
        }
        let term = e.term.rename_all(&map);
        let judgement = TypingJudgement::new(term, vec![ty]).ok()?;
        Derivation::lex(e.name.clone(), judgement).ok()
    }

    /// All words with a membership witness using at most `max_entries`
    /// selections, ordered by length then lexicographically.
    pub fn generate(&self, max_entries: usize, mode: Mode, budget: Budget) -> Vec<Word> {
        let mut found: BTreeSet<Word> = BTreeSet::new();
        for selection in sequences(self.entries.len(), max_entries) {
            let word = concat_words(
                selection
                    .iter()
                    .map(|&k| self.entries[k].word().expect("string entry")),
            );
            if found.contains(&word) {
                continue;
            }
            let caps = match mode {
                Mode::Regular => 0..=0,
                Mode::Regularized => 0..=selection.len(),
            };
            for extra in caps {
                if self
                    .try_selection(&selection, &self.start, extra, budget)
                    .is_some()
                {
                    found.insert(word);
                    break;
                }
            }
        }
        sort_words(found)
    }
}

/// Symmetric difference report between the two language modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementReport {
    pub only_regular: Vec<Word>,
    pub only_regularized: Vec<Word>,
}

impl AgreementReport {
    pub fn agree(&self) -> bool {
        self.only_regular.is_empty() && self.only_regularized.is_empty()
    }
}

/// Compare the regular and regularized languages up to an entry bound.
pub fn languages_agree(g: &TensorGrammar, max_entries: usize, budget: Budget) -> AgreementReport {
    let regular: BTreeSet<Word> = g.generate(max_entries, Mode::Regular, budget).into_iter().collect();
    let regularized: BTreeSet<Word> = g
        .generate(max_entries, Mode::Regularized, budget)
        .into_iter()
        .collect();
    AgreementReport {
        only_regular: sort_words(regular.difference(&regularized).cloned().collect()),
        only_regularized: sort_words(regularized.difference(&regular).cloned().collect()),
    }
}

/// Every ordered tiling of the sentence into lexicon words (entry indices).
fn tilings(sentence: &[Symbol], words: &[&Word]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn go(
        rest: &[Symbol],
        words: &[&Word],
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if rest.is_empty() {
            out.push(current.clone());
            return;
        }
        for (k, w) in words.iter().enumerate() {
            if w.is_empty() || w.len() > rest.len() {
                continue;
            }
            if rest[..w.len()] == *w.symbols() {
                current.push(k);
                go(&rest[w.len()..], words, current, out);
                current.pop();
            }
        }
    }
    go(sentence, words, &mut current, &mut out);
    out
}

/// All sequences over `0..n` of length `1..=max`, in length-lexicographic
/// order.
fn sequences(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn go(n: usize, max: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !current.is_empty() {
            out.push(current.clone());
        }
        if current.len() == max {
            return;
        }
        for k in 0..n {
            current.push(k);
            go(n, max, current, out);
            current.pop();
        }
    }
    go(n, max, &mut current, &mut out);
    out.sort_by_key(|s| (s.len(), s.clone()));
    out
}

fn concat_words<'a, I: Iterator<Item = &'a Word>>(words: I) -> Word {
    let mut out = Word::epsilon();
    for w in words {
        out = out.concat(w);
    }
    out
}

fn sort_words(words: BTreeSet<Word>) -> Vec<Word> {
    let mut out: Vec<Word> = words.into_iter().collect();
    out.sort_by_key(|w| (w.len(), format!("{w}")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::word;
    use crate::sequent::check_derivation;

    fn np() -> LiteralSymbol {
        LiteralSymbol::positive("np", 1, 1)
    }

    /// The lexicon built from Lambek types: Mary, John : np and a
    /// transitive verb.
    fn small_grammar() -> TensorGrammar {
        use crate::lambek::{lc_type_to_ettc, LCFormula};
        let mut entries = Vec::new();
        let mut supply = IndexSupply::new();
        for name in ["Mary", "John"] {
            let up = supply.fresh();
            let low = supply.fresh();
            let ty = lc_type_to_ettc(&LCFormula::prop("np"), &up, &low, &mut supply);
            let term = TensorTerm::edge(word(name), up.clone(), low.clone());
            entries.push(TensorLexEntry::new(name, term, ty).unwrap());
        }
        // loves : (np\s)/np
        let loves = LCFormula::over(
            LCFormula::under(LCFormula::prop("np"), LCFormula::prop("s")),
            LCFormula::prop("np"),
        );
        let up = supply.fresh();
        let low = supply.fresh();
        let ty = lc_type_to_ettc(&loves, &up, &low, &mut supply);
        let term = TensorTerm::edge(word("loves"), up.clone(), low.clone());
        entries.push(TensorLexEntry::new("loves", term, ty).unwrap());
        TensorGrammar::new(entries, LiteralSymbol::positive("s", 1, 1))
    }

    #[test]
    fn simple_sentence_membership() {
        let g = small_grammar();
        let budget = Budget::new(40, 2_000_000);
        let found = g.member(&word("Mary loves John"), Mode::Regular, budget);
        let d = found.found().expect("in the language");
        assert!(check_derivation(&d).is_ok());
        // The witness concludes with the sentence edge.
        assert_eq!(d.conclusion.term().edges().len(), 1);
        assert_eq!(
            d.conclusion.term().edges()[0].label,
            word("Mary loves John")
        );
        assert!(!g
            .member(&word("loves John"), Mode::Regular, budget)
            .is_found());
        assert!(!g
            .member(&word("Mary loves"), Mode::Regularized, budget)
            .is_found());
    }

    #[test]
    fn generate_small_language() {
        let g = small_grammar();
        let budget = Budget::new(40, 2_000_000);
        let words = g.generate(3, Mode::Regular, budget);
        assert!(words.contains(&word("Mary loves John")));
        assert!(words.contains(&word("John loves Mary")));
        assert!(words.contains(&word("Mary loves Mary")));
        assert!(!words.iter().any(|w| w.len() < 3));
        let report = languages_agree(&g, 3, budget);
        assert!(report.agree(), "{report:?}");
    }

    #[test]
    fn mill_grammar_membership_agrees() {
        use crate::fo::{FOFormula, PredSym};
        // Mary, John : np(l;r); runs : ∀x(np(x;l) ⊸ s(x;r)).
        let npf = |l: &str, r: &str| {
            FOFormula::atom(
                PredSym::positive("np", 1, 1),
                vec![FOTerm::Const(l.into())],
                vec![FOTerm::Const(r.into())],
            )
            .unwrap()
        };
        let runs = FOFormula::forall(
            "x",
            FOFormula::impl_(
                FOFormula::atom(
                    PredSym::positive("np", 1, 1),
                    vec![FOTerm::Var("x".into())],
                    vec![FOTerm::Const(LEFT_ENDPOINT.into())],
                )
                .unwrap(),
                FOFormula::atom(
                    PredSym::positive("s", 1, 1),
                    vec![FOTerm::Var("x".into())],
                    vec![FOTerm::Const(RIGHT_ENDPOINT.into())],
                )
                .unwrap(),
            ),
        );
        let g = MillGrammar::new(
            vec![
                MillLexEntry::new(word("Mary"), npf(LEFT_ENDPOINT, RIGHT_ENDPOINT)).unwrap(),
                MillLexEntry::new(word("runs"), runs).unwrap(),
            ],
            "s",
        );
        let budget = Budget::new(30, 1_000_000);
        assert!(g.member(&word("Mary runs"), budget));
        assert!(!g.member(&word("runs Mary"), budget));
        // Lemma 5 at this small bound: the translated grammar's regularized
        // language agrees.
        let tg = g.to_tensor_grammar().unwrap();
        let mill_words = g.generate(2, budget);
        let tensor_words = tg.generate(2, Mode::Regularized, Budget::new(40, 2_000_000));
        assert_eq!(mill_words, tensor_words);
        assert_eq!(mill_words, vec![word("Mary runs")]);
    }
}
