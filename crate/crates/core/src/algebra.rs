//! Measurement scenarios and operator words.
//!
//! A word is a formal product of local dichotomic observables. In the
//! commuting relaxation every letter commutes with every other letter and
//! squares to the identity, so a canonical word is simply a *set* of
//! letters: multiplying two words takes the symmetric difference.
//!
//! Party indices are 0-based internally (party 0 is `A`, the leftmost
//! tensor factor). File formats and [`MomentKey`]'s `Display` use 1-based
//! parties; settings are 0-based everywhere.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("scenario needs at least one party")]
    NoParties,
    #[error("scenario needs at least one setting per party")]
    NoSettings,
    #[error("only dichotomic measurements are supported (outcomes = 2), got {0}")]
    UnsupportedOutcomes(usize),
    #[error("hierarchy level must be at least 1, got {0}")]
    InvalidLevel(usize),
    #[error("letter (party {party}, setting {setting}) is outside scenario {scenario}")]
    ForeignLetter {
        party: usize,
        setting: usize,
        scenario: Scenario,
    },
    #[error("malformed moment key: {0}")]
    MalformedKey(String),
}

/// An `(N, m, 2)` Bell-type scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scenario {
    parties: usize,
    settings: usize,
}

impl Scenario {
    pub fn new(parties: usize, settings: usize, outcomes: usize) -> Result<Self, AlgebraError> {
        if parties == 0 {
            return Err(AlgebraError::NoParties);
        }
        if settings == 0 {
            return Err(AlgebraError::NoSettings);
        }
        if outcomes != 2 {
            return Err(AlgebraError::UnsupportedOutcomes(outcomes));
        }
        Ok(Self { parties, settings })
    }

    /// Shorthand for a dichotomic scenario.
    pub fn dichotomic(parties: usize, settings: usize) -> Result<Self, AlgebraError> {
        Self::new(parties, settings, 2)
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn settings(&self) -> usize {
        self.settings
    }

    pub fn outcomes(&self) -> usize {
        2
    }

    /// All letters of the scenario in `(party, setting)` order.
    pub fn letters(&self) -> Vec<Letter> {
        (0..self.parties)
            .flat_map(|p| (0..self.settings).map(move |s| Letter::new(p, s)))
            .collect()
    }

    pub fn contains(&self, letter: Letter) -> bool {
        letter.party < self.parties && letter.setting < self.settings
    }

    fn check_word(&self, word: &OperatorWord) -> Result<(), AlgebraError> {
        match word.letters().iter().find(|l| !self.contains(**l)) {
            Some(l) => Err(AlgebraError::ForeignLetter {
                party: l.party,
                setting: l.setting,
                scenario: *self,
            }),
            None => Ok(()),
        }
    }

    /// Canonical product of two words of this scenario.
    ///
    /// All letters are Hermitian and commute, so `left† · right` reduces to
    /// `left · right`.
    pub fn word_product(
        &self,
        left: &OperatorWord,
        right: &OperatorWord,
    ) -> Result<OperatorWord, AlgebraError> {
        self.check_word(left)?;
        self.check_word(right)?;
        Ok(left.product(right))
    }

    /// Builds a canonical word from an arbitrary sequence of letters.
    pub fn word<I: IntoIterator<Item = Letter>>(&self, letters: I) -> Result<OperatorWord, AlgebraError> {
        let word = OperatorWord::from_letters(letters);
        self.check_word(&word)?;
        Ok(word)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},2)", self.parties, self.settings)
    }
}

/// One local observable: setting `setting` of party `party` (both 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub party: usize,
    pub setting: usize,
}

impl Letter {
    pub const fn new(party: usize, setting: usize) -> Self {
        Self { party, setting }
    }
}

pub(crate) fn party_name(party: usize) -> String {
    if party < 26 {
        char::from(b'A' + party as u8).to_string()
    } else {
        format!("P{}", party + 1)
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", party_name(self.party), self.setting)
    }
}

/// Canonical product of letters: a sorted list without repeats.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperatorWord(Vec<Letter>);

impl OperatorWord {
    pub fn unit() -> Self {
        Self(Vec::new())
    }

    /// Reduces a letter sequence: order is irrelevant and pairs of equal
    /// letters cancel.
    pub fn from_letters<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut v: Vec<Letter> = letters.into_iter().collect();
        v.sort_unstable();
        let mut out: Vec<Letter> = Vec::with_capacity(v.len());
        for l in v {
            if out.last() == Some(&l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Self(out)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_unit()
    }

    /// Settings used by `party`, ascending.
    pub fn settings_of(&self, party: usize) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().filter(move |l| l.party == party).map(|l| l.setting)
    }

    /// Symmetric difference of the two letter sets (merge of sorted lists).
    pub fn product(&self, other: &OperatorWord) -> OperatorWord {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        OperatorWord(out)
    }

    /// True when no party contributes more than one setting.
    pub fn is_observable(&self) -> bool {
        self.0.windows(2).all(|w| w[0].party != w[1].party)
    }
}

impl fmt::Display for OperatorWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("I");
        }
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Label of a measurable correlator: at most one setting per party.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MomentKey(Vec<Letter>);

impl MomentKey {
    /// `pairs` are 0-based `(party, setting)`; parties must be strictly
    /// increasing and the key non-empty.
    pub fn new(pairs: Vec<Letter>) -> Result<Self, AlgebraError> {
        if pairs.is_empty() {
            return Err(AlgebraError::MalformedKey("empty key".into()));
        }
        if pairs.windows(2).any(|w| w[0].party >= w[1].party) {
            return Err(AlgebraError::MalformedKey(
                "party indices must be strictly increasing".into(),
            ));
        }
        Ok(Self(pairs))
    }

    /// Builds a key from 1-based parties and 0-based settings, the file
    /// convention.
    pub fn from_external(parties: &[usize], settings: &[usize]) -> Result<Self, AlgebraError> {
        if parties.len() != settings.len() {
            return Err(AlgebraError::MalformedKey(format!(
                "{} parties but {} settings",
                parties.len(),
                settings.len()
            )));
        }
        if parties.contains(&0) {
            return Err(AlgebraError::MalformedKey("party indices are 1-based".into()));
        }
        Self::new(
            parties
                .iter()
                .zip(settings)
                .map(|(&p, &s)| Letter::new(p - 1, s))
                .collect(),
        )
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    /// Number of parties involved (the correlator's order).
    pub fn bodies(&self) -> usize {
        self.0.len()
    }

    /// 1-based party list.
    pub fn external_parties(&self) -> Vec<usize> {
        self.0.iter().map(|l| l.party + 1).collect()
    }

    pub fn settings(&self) -> Vec<usize> {
        self.0.iter().map(|l| l.setting).collect()
    }

    pub fn fits(&self, scenario: &Scenario) -> bool {
        self.0.iter().all(|l| scenario.contains(*l))
    }

    pub fn word(&self) -> OperatorWord {
        OperatorWord(self.0.clone())
    }
}

impl fmt::Display for MomentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        f.write_str(">")
    }
}

/// Identifier of an unobservable moment. The canonical word itself serves
/// as the id, so identical words share one variable regardless of where
/// they were produced.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FreeVarId(OperatorWord);

impl FreeVarId {
    pub fn word(&self) -> &OperatorWord {
        &self.0
    }
}

impl fmt::Display for FreeVarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MomentRef {
    Unit,
    Observable(MomentKey),
    FreeVar(FreeVarId),
}

pub fn classify(word: &OperatorWord) -> MomentRef {
    if word.is_unit() {
        MomentRef::Unit
    } else if word.is_observable() {
        MomentRef::Observable(MomentKey(word.0.clone()))
    } else {
        MomentRef::FreeVar(FreeVarId(word.clone()))
    }
}

/// Operator basis `O_level`: the unit, then all words of one letter, then
/// all words of two distinct letters, and so on, each block in
/// lexicographic letter order.
pub fn generate_basis(scenario: &Scenario, level: usize) -> Result<Vec<OperatorWord>, AlgebraError> {
    if level == 0 {
        return Err(AlgebraError::InvalidLevel(level));
    }
    let letters = scenario.letters();
    let mut basis = vec![OperatorWord::unit()];
    for size in 1..=level.min(letters.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            basis.push(OperatorWord(idx.iter().map(|&i| letters[i]).collect()));
            // next combination in lexicographic order
            let Some(pos) = (0..size).rev().find(|&p| idx[p] < letters.len() - size + p) else {
                break;
            };
            idx[pos] += 1;
            for q in pos + 1..size {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn w(s: &[(usize, usize)]) -> OperatorWord {
        OperatorWord::from_letters(s.iter().map(|&(p, x)| Letter::new(p, x)))
    }

    fn names(basis: &[OperatorWord]) -> Vec<String> {
        basis.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn scenario_validation() {
        assert_eq!(Scenario::new(0, 2, 2), Err(AlgebraError::NoParties));
        assert_eq!(Scenario::new(2, 0, 2), Err(AlgebraError::NoSettings));
        assert_eq!(Scenario::new(2, 2, 3), Err(AlgebraError::UnsupportedOutcomes(3)));
        assert!(Scenario::new(1, 1, 2).is_ok());
    }

    #[test]
    fn basis_two_parties_matches_printed_order() {
        let s = Scenario::dichotomic(2, 2).unwrap();
        let b = generate_basis(&s, 2).unwrap();
        assert_eq!(
            names(&b),
            ["I", "A0", "A1", "B0", "B1", "A0A1", "A0B0", "A0B1", "A1B0", "A1B1", "B0B1"]
        );
    }

    #[test]
    fn basis_three_parties() {
        let s = Scenario::dichotomic(3, 2).unwrap();
        let b = generate_basis(&s, 2).unwrap();
        assert_eq!(b.len(), 22);
        assert_eq!(b.last().unwrap().to_string(), "C0C1");
        assert_eq!(b[16].to_string(), "B0B1");
        assert_eq!(b[17].to_string(), "B0C0");
    }

    #[test]
    fn basis_minimal_and_errors() {
        let s = Scenario::dichotomic(1, 1).unwrap();
        assert_eq!(names(&generate_basis(&s, 1).unwrap()), ["I", "A0"]);
        // level beyond the letter count saturates
        assert_eq!(generate_basis(&s, 3).unwrap().len(), 2);
        assert_eq!(generate_basis(&s, 0), Err(AlgebraError::InvalidLevel(0)));
    }

    /// Enumerates every letter sequence of length <= level, reduces it and
    /// keeps distinct results; independent of the combination walker.
    fn brute_force_basis_size(s: &Scenario, level: usize) -> usize {
        let letters = s.letters();
        let mut seen: HashSet<OperatorWord> = HashSet::new();
        let mut frontier: Vec<Vec<Letter>> = vec![vec![]];
        for _ in 0..=level {
            let mut next = Vec::new();
            for seq in &frontier {
                let canon = OperatorWord::from_letters(seq.iter().copied());
                if canon.len() == seq.len() {
                    seen.insert(canon);
                }
                for &l in &letters {
                    let mut s2 = seq.clone();
                    s2.push(l);
                    next.push(s2);
                }
            }
            frontier = next;
        }
        seen.len()
    }

    #[test]
    fn basis_size_matches_enumeration() {
        for n in 1..=3 {
            for m in 1..=3 {
                for level in 1..=2 {
                    let s = Scenario::dichotomic(n, m).unwrap();
                    let b = generate_basis(&s, level).unwrap();
                    let uniq: HashSet<_> = b.iter().collect();
                    assert_eq!(uniq.len(), b.len());
                    assert_eq!(b.len(), brute_force_basis_size(&s, level), "N={n} m={m} level={level}");
                }
            }
        }
        let s = Scenario::dichotomic(3, 3).unwrap();
        assert_eq!(generate_basis(&s, 2).unwrap().len(), 46);
    }

    #[test]
    fn product_examples() {
        let s = Scenario::dichotomic(2, 2).unwrap();
        let a0a1 = w(&[(0, 0), (0, 1)]);
        let a1 = w(&[(0, 1)]);
        assert_eq!(s.word_product(&a0a1, &a1).unwrap(), w(&[(0, 0)]));
        assert_eq!(
            s.word_product(&w(&[(0, 0), (1, 0)]), &w(&[(0, 1), (1, 1)])).unwrap().to_string(),
            "A0A1B0B1"
        );
        assert_eq!(s.word_product(&OperatorWord::unit(), &a0a1).unwrap(), a0a1);
        assert!(s.word_product(&a0a1, &a0a1).unwrap().is_unit());
    }

    #[test]
    fn product_rejects_foreign_letters() {
        let s = Scenario::dichotomic(2, 2).unwrap();
        let c0 = w(&[(2, 0)]);
        assert!(matches!(
            s.word_product(&c0, &OperatorWord::unit()),
            Err(AlgebraError::ForeignLetter { party: 2, .. })
        ));
    }

    #[test]
    fn classify_examples() {
        let k = classify(&w(&[(0, 0), (1, 0), (2, 1)]));
        let expected = MomentKey::from_external(&[1, 2, 3], &[0, 0, 1]).unwrap();
        assert_eq!(k, MomentRef::Observable(expected));
        assert!(matches!(classify(&w(&[(1, 0), (1, 1)])), MomentRef::FreeVar(_)));
        assert_eq!(classify(&OperatorWord::unit()), MomentRef::Unit);
    }

    #[test]
    fn moment_key_validation() {
        assert!(MomentKey::from_external(&[], &[]).is_err());
        assert!(MomentKey::from_external(&[2, 1], &[0, 0]).is_err());
        assert!(MomentKey::from_external(&[1, 1], &[0, 1]).is_err());
        assert!(MomentKey::from_external(&[0], &[0]).is_err());
        assert!(MomentKey::from_external(&[1], &[0, 1]).is_err());
        let k = MomentKey::from_external(&[1, 3], &[1, 0]).unwrap();
        assert_eq!(k.to_string(), "<A1C0>");
        assert_eq!(k.external_parties(), vec![1, 3]);
    }

    fn letter_seq() -> impl Strategy<Value = Vec<Letter>> {
        prop::collection::vec((0usize..3, 0usize..3).prop_map(|(p, s)| Letter::new(p, s)), 0..8)
    }

    proptest! {
        #[test]
        fn folding_is_order_independent(seq in letter_seq(), seed in any::<u64>()) {
            let fold = |v: &[Letter]| v.iter().fold(OperatorWord::unit(), |acc, l| {
                acc.product(&OperatorWord::from_letters([*l]))
            });
            let mut shuffled = seq.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(fold(&seq), fold(&shuffled));
            prop_assert_eq!(fold(&seq), OperatorWord::from_letters(seq.clone()));
        }

        #[test]
        fn product_is_involutive_and_associative(a in letter_seq(), b in letter_seq(), c in letter_seq()) {
            let (a, b, c) = (OperatorWord::from_letters(a), OperatorWord::from_letters(b), OperatorWord::from_letters(c));
            prop_assert!(a.product(&a).is_unit());
            prop_assert_eq!(a.product(&b).product(&c), a.product(&b.product(&c)));
            prop_assert_eq!(a.product(&b), b.product(&a));
        }

        #[test]
        fn classify_depends_only_on_canonical_word(seq in letter_seq()) {
            let mut rev = seq.clone();
            rev.reverse();
            let mut doubled = seq.clone();
            doubled.extend([Letter::new(1, 1), Letter::new(1, 1)]);
            let r = classify(&OperatorWord::from_letters(seq));
            prop_assert_eq!(&r, &classify(&OperatorWord::from_letters(rev)));
            prop_assert_eq!(&r, &classify(&OperatorWord::from_letters(doubled)));
        }
    }
}
