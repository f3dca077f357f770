//! Indices, the fresh-index supply, and words over the terminal alphabet.

use std::collections::BTreeSet;
use std::fmt;

/// The prefix reserved for machine-generated indices. User syntax rejects it,
/// so indices drawn from an [`IndexSupply`] never collide with user input.
pub const RESERVED_PREFIX: char = '#';

/// A vertex name. Indices are opaque tokens from a countable supply; they
/// label the endpoints of tensor-term edges and the slots of tensor types.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Index(String);

impl Index {
    /// An index with the given user-visible name. Names starting with the
    /// reserved prefix belong to the fresh supply and are rejected here.
    pub fn new(name: impl Into<String>) -> Result<Self, InvalidName> {
        let name = name.into();
        if name.is_empty() {
            return Err(InvalidName::Empty);
        }
        if name.starts_with(RESERVED_PREFIX) {
            return Err(InvalidName::Reserved(name));
        }
        if name.chars().any(|c| c.is_whitespace()) {
            return Err(InvalidName::Whitespace(name));
        }
        Ok(Index(name))
    }

    /// An index with a reserved (machine-generated) name. Internal use;
    /// callers must guarantee freshness themselves.
    pub(crate) fn reserved(name: impl Into<String>) -> Self {
        let name = name.into();
        debug_assert!(name.starts_with(RESERVED_PREFIX));
        Index(name)
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_reserved(&self) -> bool {
        self.0.starts_with(RESERVED_PREFIX)
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Index({})", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidName {
    #[error("empty name")]
    Empty,
    #[error("name `{0}` uses the reserved prefix `#`")]
    Reserved(String),
    #[error("name `{0}` contains whitespace")]
    Whitespace(String),
}

/// A monotone counter handing out reserved indices. A supply seeded with
/// [`IndexSupply::avoiding`] skips every name already in use, so the indices
/// it produces are fresh for that context and deterministic for fixed input.
#[derive(Debug, Clone, Default)]
pub struct IndexSupply {
    next: u64,
    taken: BTreeSet<String>,
}

impl IndexSupply {
    pub fn new() -> Self {
        Self::default()
    }

    /// A supply that never produces any of the given indices.
    pub fn avoiding<'a, I: IntoIterator<Item = &'a Index>>(taken: I) -> Self {
        IndexSupply {
            next: 0,
            taken: taken.into_iter().map(|i| i.0.clone()).collect(),
        }
    }

    /// Mark further names as unavailable.
    pub fn reserve<'a, I: IntoIterator<Item = &'a Index>>(&mut self, taken: I) {
        self.taken.extend(taken.into_iter().map(|i| i.0.clone()));
    }

    /// The next fresh index.
    pub fn fresh(&mut self) -> Index {
        loop {
            let name = format!("{}{}", RESERVED_PREFIX, self.next);
            self.next += 1;
            if !self.taken.contains(&name) {
                self.taken.insert(name.clone());
                return Index(name);
            }
        }
    }

    /// `n` fresh indices.
    pub fn fresh_many(&mut self, n: usize) -> Vec<Index> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

/// A terminal symbol: a nonempty token without whitespace or quotes.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(String);

impl Symbol {
    pub fn new(s: impl Into<String>) -> Result<Self, InvalidSymbol> {
        let s = s.into();
        if s.is_empty() {
            return Err(InvalidSymbol::Empty);
        }
        if s.chars().any(|c| c.is_whitespace() || c == '"') {
            return Err(InvalidSymbol::BadChar(s));
        }
        Ok(Symbol(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Symbol({})", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidSymbol {
    #[error("empty terminal symbol")]
    Empty,
    #[error("terminal symbol `{0}` contains whitespace or quotes")]
    BadChar(String),
}

/// A finite sequence of terminal symbols; the empty word is written ε.
/// Concatenation is associative with ε as unit.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn epsilon() -> Self {
        Word(Vec::new())
    }

    pub fn from_symbols(symbols: Vec<Symbol>) -> Self {
        Word(symbols)
    }

    /// Parse a whitespace-separated sequence of symbols; the empty string is ε.
    pub fn parse(text: &str) -> Result<Self, InvalidSymbol> {
        let symbols = text
            .split_whitespace()
            .map(Symbol::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Word(symbols))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend(other.0.iter().cloned());
        Word(v)
    }

    /// Split into a prefix of length `at` and the rest.
    pub fn split_at(&self, at: usize) -> (Word, Word) {
        let (a, b) = self.0.split_at(at);
        (Word(a.to_vec()), Word(b.to_vec()))
    }

    /// Rotate left by `k` positions.
    pub fn rotate(&self, k: usize) -> Word {
        if self.0.is_empty() {
            return self.clone();
        }
        let k = k % self.0.len();
        let mut v = self.0[k..].to_vec();
        v.extend_from_slice(&self.0[..k]);
        Word(v)
    }

    /// The lexicographically minimal rotation, the canonical representative
    /// of the cyclic word.
    pub fn min_rotation(&self) -> Word {
        (0..self.0.len().max(1))
            .map(|k| self.rotate(k))
            .min()
            .unwrap_or_else(Word::epsilon)
    }

    /// All distinct rotations.
    pub fn rotations(&self) -> Vec<Word> {
        let mut out: Vec<Word> = (0..self.0.len().max(1)).map(|k| self.rotate(k)).collect();
        out.sort();
        out.dedup();
        out
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for s in &self.0 {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            f.write_str(s.as_str())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({})", self)
    }
}

/// Convenience constructor used throughout the tests: splits on whitespace.
pub fn word(text: &str) -> Word {
    Word::parse(text).expect("valid word literal")
}

/// Convenience constructor for a user index.
pub fn idx(name: &str) -> Index {
    Index::new(name).expect("valid index literal")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supply_skips_taken_names() {
        let zero = Index::reserved("#0");
        let mut supply = IndexSupply::avoiding([&zero]);
        assert_eq!(supply.fresh().name(), "#1");
        assert_eq!(supply.fresh().name(), "#2");
    }

    #[test]
    fn user_names_reject_reserved_prefix() {
        assert!(Index::new("#0").is_err());
        assert!(Index::new("i").is_ok());
    }

    #[test]
    fn word_concat_is_associative_with_unit() {
        let a = word("a b");
        let b = word("c");
        let e = Word::epsilon();
        assert_eq!(a.concat(&e), a);
        assert_eq!(e.concat(&a), a);
        assert_eq!(a.concat(&b).concat(&a), a.concat(&b.concat(&a)));
    }

    #[test]
    fn min_rotation_is_canonical() {
        assert_eq!(word("b a").min_rotation(), word("a b"));
        assert_eq!(word("a b").min_rotation(), word("a b"));
        assert_eq!(word("b a c").rotations().len(), 3);
        assert_eq!(Word::epsilon().min_rotation(), Word::epsilon());
    }
}
