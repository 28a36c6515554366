//! Reduced words in the free group `F_p`.
//!
//! Letters are stored as a compact code: generator `a_i` is `2(i-1)` and its
//! inverse `A_i` is `2(i-1)+1`, so the derived ordering is
//! `a1 < A1 < a2 < A2 < ...` and inversion is `code ^ 1`. All enumeration
//! below is lexicographic with respect to this ordering.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of free generators, `p >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Rank(u32);

impl Rank {
    pub const MAX: u32 = 1 << 14;

    pub fn new(p: u32) -> Result<Self> {
        if !(2..=Self::MAX).contains(&p) {
            return Err(Error::InvalidRank(p));
        }
        Ok(Rank(p))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// `2p`, the number of letters.
    pub fn alphabet_size(self) -> usize {
        2 * self.0 as usize
    }

    /// `2p - 1`, the number of letters that may follow a given letter.
    pub fn out_degree(self) -> usize {
        2 * self.0 as usize - 1
    }

    /// All letters in enumeration order.
    pub fn letters(self) -> impl Iterator<Item = Letter> + Clone {
        (0..self.alphabet_size() as u16).map(Letter)
    }

    pub fn contains(self, letter: Letter) -> bool {
        (letter.0 as usize) < self.alphabet_size()
    }
}

impl TryFrom<u32> for Rank {
    type Error = Error;
    fn try_from(p: u32) -> Result<Self> {
        Rank::new(p)
    }
}

impl From<Rank> for u32 {
    fn from(r: Rank) -> u32 {
        r.0
    }
}

/// A generator or inverse generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(u16);

impl Letter {
    /// `index` is 1-based; `inverse` selects `a_index^{-1}`.
    pub fn new(index: u32, inverse: bool) -> Result<Self> {
        if index == 0 || index > Rank::MAX {
            return Err(Error::LetterOutOfRange { index, rank: Rank::MAX });
        }
        Ok(Letter((2 * (index - 1) + inverse as u32) as u16))
    }

    pub fn from_code(code: u16) -> Self {
        Letter(code)
    }

    pub fn code(self) -> u16 {
        self.0
    }

    pub fn index(self) -> u32 {
        self.0 as u32 / 2 + 1
    }

    pub fn is_inverse(self) -> bool {
        self.0 & 1 == 1
    }

    /// `+1` for a generator, `-1` for an inverse generator.
    pub fn sign(self) -> i8 {
        if self.is_inverse() {
            -1
        } else {
            1
        }
    }

    pub fn inverse(self) -> Letter {
        Letter(self.0 ^ 1)
    }

    pub fn cancels(self, other: Letter) -> bool {
        self.0 ^ 1 == other.0
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = if self.is_inverse() { 'A' } else { 'a' };
        write!(f, "{}{}", c, self.index())
    }
}

impl FromStr for Letter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: &str| Error::Parse { text: s.to_string(), reason: reason.to_string() };
        let mut chars = s.chars();
        let inverse = match chars.next() {
            Some('a') => false,
            Some('A') => true,
            _ => return Err(err("letter must start with 'a' or 'A'")),
        };
        let index: u32 = chars.as_str().parse().map_err(|_| err("bad generator index"))?;
        Letter::new(index, inverse).map_err(|_| err("generator index out of range"))
    }
}

/// A freely reduced word. The empty word is the identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    /// Rejects input containing an adjacent cancelling pair.
    pub fn from_letters(letters: Vec<Letter>) -> Result<Self> {
        if let Some(i) = letters.windows(2).position(|w| w[0].cancels(w[1])) {
            return Err(Error::NotReduced(i));
        }
        Ok(Word(letters))
    }

    pub(crate) fn from_letters_unchecked(letters: Vec<Letter>) -> Self {
        debug_assert!(letters.windows(2).all(|w| !w[0].cancels(w[1])));
        Word(letters)
    }

    pub fn from_codes(codes: &[u16]) -> Result<Self> {
        Word::from_letters(codes.iter().map(|&c| Letter(c)).collect())
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<Letter> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|w| !w[0].cancels(w[1]))
    }

    /// Reduced and the first letter is not the inverse of the last.
    pub fn is_cyclically_reduced(&self) -> bool {
        self.is_reduced()
            && match (self.first(), self.last()) {
                (Some(a), Some(b)) => self.len() == 1 || !a.cancels(b),
                _ => true,
            }
    }

    /// Checks every letter belongs to the alphabet of `rank`.
    pub fn check_rank(&self, rank: Rank) -> Result<()> {
        match self.0.iter().find(|l| !rank.contains(**l)) {
            Some(l) => Err(Error::LetterOutOfRange { index: l.index(), rank: rank.get() }),
            None => Ok(()),
        }
    }

    /// Free product: concatenation followed by cancellation at the junction.
    pub fn multiply(&self, other: &Word) -> Word {
        let mut left = self.0.len();
        let mut right = 0;
        while left > 0 && right < other.0.len() && self.0[left - 1].cancels(other.0[right]) {
            left -= 1;
            right += 1;
        }
        let mut out = Vec::with_capacity(left + other.0.len() - right);
        out.extend_from_slice(&self.0[..left]);
        out.extend_from_slice(&other.0[right..]);
        Word(out)
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    /// Suffix starting at position `i`, i.e. the shift applied `i` times.
    pub fn shift(&self, i: usize) -> Word {
        Word(self.0[i.min(self.0.len())..].to_vec())
    }

    /// Left rotation by `i` positions (cyclic permutation of letters).
    pub fn rotate(&self, i: usize) -> Word {
        let mut v = self.0.clone();
        if !v.is_empty() {
            let n = v.len();
            v.rotate_left(i % n);
        }
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    /// Parses the `a1.A2.a1` format; `e` (or the empty string) is the identity.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "e" {
            return Ok(Word::identity());
        }
        let letters = s.split('.').map(|t| t.trim().parse()).collect::<Result<Vec<Letter>>>()?;
        Word::from_letters(letters).map_err(|e| Error::Parse { text: s.to_string(), reason: e.to_string() })
    }
}

/// Number of reduced words of length `n`: `2p(2p-1)^(n-1)` for `n >= 1`.
/// Saturates at `u128::MAX`.
pub fn sphere_size(rank: Rank, n: usize) -> u128 {
    if n == 0 {
        return 1;
    }
    let d = rank.out_degree() as u128;
    let mut acc = rank.alphabet_size() as u128;
    for _ in 1..n {
        acc = acc.saturating_mul(d);
    }
    acc
}

/// Lexicographic stream of reduced words of a fixed length.
///
/// The stream can be pinned to a prefix (for sharding) and can exclude a set
/// of letters at position 0 (for restricted spheres).
#[derive(Debug, Clone)]
pub struct ReducedWords {
    alphabet: u16,
    fixed: usize,
    forbidden_first: Vec<u16>,
    current: Vec<u16>,
    state: IterState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IterState {
    Fresh,
    Running,
    Done,
}

impl ReducedWords {
    fn build(rank: Rank, prefix: &[Letter], n: usize, forbidden_first: &[Letter]) -> Self {
        let mut current: Vec<u16> = prefix.iter().map(|l| l.code()).collect();
        let mut state = IterState::Fresh;
        let bad_prefix = prefix.windows(2).any(|w| w[0].cancels(w[1]))
            || prefix.first().is_some_and(|l| forbidden_first.contains(l))
            || prefix.iter().any(|l| !rank.contains(*l));
        if prefix.len() > n || bad_prefix {
            state = IterState::Done;
        }
        current.resize(n, 0);
        ReducedWords {
            alphabet: rank.alphabet_size() as u16,
            fixed: prefix.len(),
            forbidden_first: forbidden_first.iter().map(|l| l.code()).collect(),
            current,
            state,
        }
    }

    /// Every reduced word of length `n`.
    pub fn sphere(rank: Rank, n: usize) -> Self {
        Self::build(rank, &[], n, &[])
    }

    /// Reduced words of length `n` beginning with `prefix`.
    pub fn with_prefix(rank: Rank, prefix: &Word, n: usize) -> Self {
        Self::build(rank, prefix.letters(), n, &[])
    }

    /// Reduced words of length `n` whose first letter avoids `forbidden`.
    pub fn restricted(rank: Rank, n: usize, forbidden: &[Letter]) -> Self {
        Self::build(rank, &[], n, forbidden)
    }

    /// Restricted words of length `n` beginning with `prefix`.
    pub fn restricted_with_prefix(rank: Rank, prefix: &Word, n: usize, forbidden: &[Letter]) -> Self {
        Self::build(rank, prefix.letters(), n, forbidden)
    }

    fn allowed(&self, pos: usize, code: u16) -> bool {
        if pos == 0 {
            !self.forbidden_first.contains(&code)
        } else {
            code != self.current[pos - 1] ^ 1
        }
    }

    /// Smallest admissible code at `pos` that is `>= from`.
    fn next_allowed(&self, pos: usize, from: u16) -> Option<u16> {
        (from..self.alphabet).find(|&c| self.allowed(pos, c))
    }

    fn fill_from(&mut self, pos: usize) -> bool {
        for i in pos..self.current.len() {
            match self.next_allowed(i, 0) {
                Some(c) => self.current[i] = c,
                None => return false,
            }
        }
        true
    }

    fn advance(&mut self) -> bool {
        for i in (self.fixed..self.current.len()).rev() {
            if let Some(c) = self.next_allowed(i, self.current[i] + 1) {
                self.current[i] = c;
                if self.fill_from(i + 1) {
                    return true;
                }
            }
        }
        false
    }

    /// Current word as raw letter codes, without allocating a `Word`.
    pub fn next_codes(&mut self) -> Option<&[u16]> {
        let ok = match self.state {
            IterState::Done => false,
            IterState::Fresh => {
                let fixed = self.fixed;
                self.fill_from(fixed)
            }
            IterState::Running => self.advance(),
        };
        if ok {
            self.state = IterState::Running;
            Some(&self.current)
        } else {
            self.state = IterState::Done;
            None
        }
    }
}

impl Iterator for ReducedWords {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        self.next_codes().map(|c| Word::from_letters_unchecked(c.iter().map(|&x| Letter(x)).collect()))
    }
}

/// Streams `Γ_n` in lexicographic order.
pub fn enumerate_sphere(rank: Rank, n: usize) -> ReducedWords {
    ReducedWords::sphere(rank, n)
}

/// Disjoint prefixes of length `min(depth, n)` covering `Γ_n`, in order.
/// Concatenating `ReducedWords::with_prefix` over them reproduces
/// `enumerate_sphere(rank, n)`.
pub fn sphere_shards(rank: Rank, n: usize, depth: usize) -> Vec<Word> {
    enumerate_sphere(rank, depth.min(n)).collect()
}

/// Appends `n` letters of a uniformly random reduced continuation to `word`.
/// The first appended letter is drawn uniformly from the letters not in
/// `forbidden` and not cancelling the current last letter.
pub(crate) fn extend_uniform<R: Rng + ?Sized>(
    rank: Rank,
    word: &mut Vec<Letter>,
    n: usize,
    forbidden_first: &[Letter],
    rng: &mut R,
) {
    let size = rank.alphabet_size() as u16;
    for _ in 0..n {
        let prev = word.last().copied();
        let choices: u16 = match prev {
            Some(_) => size - 1,
            None => size - forbidden_first.len() as u16,
        };
        let mut pick = rng.gen_range(0..choices);
        // walk the alphabet, skipping excluded codes
        let mut code = 0u16;
        loop {
            let excluded = match prev {
                Some(l) => l.cancels(Letter(code)),
                None => forbidden_first.contains(&Letter(code)),
            };
            if !excluded {
                if pick == 0 {
                    break;
                }
                pick -= 1;
            }
            code += 1;
        }
        word.push(Letter(code));
    }
}

/// Uniform draw from `Γ_n`: first letter uniform over `2p`, each next letter
/// uniform over the `2p-1` non-cancelling letters.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(rank: Rank, n: usize, rng: &mut R) -> Word {
    let mut letters = Vec::with_capacity(n);
    extend_uniform(rank, &mut letters, n, &[], rng);
    Word::from_letters_unchecked(letters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{BTreeSet, HashMap};

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn p2() -> Rank {
        Rank::new(2).unwrap()
    }

    #[test]
    fn letter_inverse_and_cancellation() {
        for l in Rank::new(3).unwrap().letters() {
            assert_eq!(l.inverse().inverse(), l);
            assert!(l.cancels(l.inverse()));
            assert!(!l.cancels(l));
        }
        let a1: Letter = "a1".parse().unwrap();
        let big_a1: Letter = "A1".parse().unwrap();
        assert_eq!(a1.sign(), 1);
        assert_eq!(big_a1.sign(), -1);
        assert!(a1 < big_a1);
        assert!(big_a1 < "a2".parse().unwrap());
    }

    #[test]
    fn multiply_examples() {
        assert_eq!(w("a1").multiply(&w("A1")), Word::identity());
        assert_eq!(w("a1.a2").multiply(&w("A2.a1")), w("a1.a1"));
        assert_eq!(w("a1.a2.A1").multiply(&w("a1.A2.A2")), w("a1.A2"));
    }

    #[test]
    fn identity_law_on_random_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.gen_range(0..=20);
            let x = sample_uniform_sphere(p2(), n, &mut rng);
            assert_eq!(x.multiply(&Word::identity()), x);
            assert_eq!(Word::identity().multiply(&x), x);
        }
    }

    #[test]
    fn invert_examples() {
        assert_eq!(w("a1.a2").inverse(), w("A2.A1"));
        assert_eq!(Word::identity().inverse(), Word::identity());
        assert_eq!(w("a1.A2.A1.A2").inverse().inverse(), w("a1.A2.A1.A2"));
    }

    #[test]
    fn constructor_rejects_unreduced() {
        assert_eq!(Word::from_codes(&[0, 2, 3]), Err(Error::NotReduced(1)));
        assert!("a1.A1".parse::<Word>().is_err());
        assert!("b1".parse::<Word>().is_err());
        assert!("a0".parse::<Word>().is_err());
    }

    #[test]
    fn text_format() {
        assert_eq!(Word::identity().to_string(), "e");
        assert_eq!(w("a1.A2.a3").to_string(), "a1.A2.a3");
        assert_eq!(w("e"), Word::identity());
    }

    #[test]
    fn cyclic_reduction_predicate() {
        assert!(w("a1").is_cyclically_reduced());
        assert!(w("a1.a2").is_cyclically_reduced());
        assert!(!w("a1.a2.A1").is_cyclically_reduced());
    }

    #[test]
    fn small_spheres() {
        let s0: Vec<_> = enumerate_sphere(p2(), 0).collect();
        assert_eq!(s0, vec![Word::identity()]);
        let s1: Vec<_> = enumerate_sphere(p2(), 1).collect();
        assert_eq!(s1.len(), 4);
        assert_eq!(s1[0], w("a1"));
        assert_eq!(s1[3], w("A2"));
    }

    // Oracle: all 4^n strings filtered by reducedness.
    fn brute_sphere(rank: Rank, n: usize) -> Vec<Word> {
        let size = rank.alphabet_size();
        let total = size.pow(n as u32);
        let mut out = Vec::new();
        for mut idx in 0..total {
            let mut codes = vec![0u16; n];
            for i in (0..n).rev() {
                codes[i] = (idx % size) as u16;
                idx /= size;
            }
            if let Ok(x) = Word::from_codes(&codes) {
                out.push(x);
            }
        }
        out
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for (p, n) in [(2, 3), (2, 5), (3, 4)] {
            let rank = Rank::new(p).unwrap();
            let got: Vec<_> = enumerate_sphere(rank, n).collect();
            let oracle = brute_sphere(rank, n);
            assert_eq!(got, oracle, "p={p} n={n}");
        }
        assert_eq!(enumerate_sphere(p2(), 3).count(), 36);
    }

    #[test]
    fn sphere_size_matches_enumeration() {
        assert_eq!(sphere_size(p2(), 1), 4);
        assert_eq!(sphere_size(p2(), 3), 36);
        assert_eq!(sphere_size(Rank::new(3).unwrap(), 4), 750);
        for p in [2, 3] {
            let rank = Rank::new(p).unwrap();
            for n in 0..=9 {
                let mut it = enumerate_sphere(rank, n);
                let mut count = 0u128;
                while let Some(c) = it.next_codes() {
                    assert!(c.windows(2).all(|x| x[0] ^ 1 != x[1]));
                    count += 1;
                }
                assert_eq!(count, sphere_size(rank, n), "p={p} n={n}");
            }
        }
    }

    #[test]
    fn shards_concatenate_to_sphere() {
        let rank = Rank::new(3).unwrap();
        let full: Vec<_> = enumerate_sphere(rank, 5).collect();
        let sharded: Vec<_> =
            sphere_shards(rank, 5, 2).iter().flat_map(|pre| ReducedWords::with_prefix(rank, pre, 5)).collect();
        assert_eq!(full, sharded);
    }

    #[test]
    fn restricted_excludes_first_letters() {
        let forb = [w("a1").first().unwrap(), w("A2").first().unwrap()];
        let words: BTreeSet<_> = ReducedWords::restricted(p2(), 3, &forb).collect();
        assert_eq!(words.len(), 2 * 9);
        assert!(words.iter().all(|x| !forb.contains(&x.first().unwrap())));
    }

    fn chi2_uniform(counts: &HashMap<Word, usize>, cells: usize, draws: usize) -> f64 {
        let e = draws as f64 / cells as f64;
        let seen: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        seen + (cells - counts.len()) as f64 * e
    }

    #[test]
    fn sampler_uniform_at_length_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut counts: HashMap<Word, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_uniform_sphere(p2(), 1, &mut rng)).or_default() += 1;
        }
        let sd = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts.values() {
            assert!((*c as f64 - draws as f64 / 4.0).abs() < 3.0 * sd);
        }
        assert_eq!(counts.len(), 4);
    }

    #[test]
    fn sampler_uniform_at_length_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 100_000;
        let mut counts: HashMap<Word, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_uniform_sphere(p2(), 2, &mut rng)).or_default() += 1;
        }
        let support: BTreeSet<_> = enumerate_sphere(p2(), 2).collect();
        assert!(counts.keys().all(|k| support.contains(k)));
        // 11 degrees of freedom, 1% critical value 24.72
        assert!(chi2_uniform(&counts, 12, draws) < 24.72);
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = sample_uniform_sphere(p2(), 30, &mut ChaCha8Rng::seed_from_u64(99));
        let b = sample_uniform_sphere(p2(), 30, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
        assert!(a.is_reduced());
    }
}
