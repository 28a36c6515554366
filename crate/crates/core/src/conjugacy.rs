//! Conjugacy classes, their minimal-length sets, and the class spheres
//! `C_{k+2m}` built from pairs `(g, w)` with `g` a cyclic rotation of the
//! representative and `w` in the restricted sphere `Γ_m(g)`.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::words::{extend_uniform, sphere_size, Letter, Rank, ReducedWords, Word};

/// Strips the conjugation shell `u^{-1} ... u` of a reduced word.
pub fn cyclic_reduction(w: &Word) -> Word {
    let letters = w.letters();
    let (mut lo, mut hi) = (0, letters.len());
    while hi - lo >= 2 && letters[lo].cancels(letters[hi - 1]) {
        lo += 1;
        hi -= 1;
    }
    Word::from_letters_unchecked(letters[lo..hi].to_vec())
}

/// A non-trivial conjugacy class of `F_p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConjugacyClass {
    rank: Rank,
    representative: Word,
    orbit: Vec<Word>,
}

impl ConjugacyClass {
    pub fn rank(&self) -> Rank {
        self.rank
    }

    /// Lexicographically minimal cyclically reduced element.
    pub fn representative(&self) -> &Word {
        &self.representative
    }

    /// Minimal word length `k` in the class.
    pub fn k(&self) -> usize {
        self.representative.len()
    }

    /// The distinct cyclic rotations of the representative, sorted.
    pub fn orbit(&self) -> &[Word] {
        &self.orbit
    }

    pub fn contains(&self, x: &Word) -> bool {
        !x.is_identity() && self.orbit.binary_search(&cyclic_reduction(x)).is_ok()
    }

    /// Word length of the elements at conjugator length `m`.
    pub fn length_at(&self, m: usize) -> usize {
        self.k() + 2 * m
    }
}

impl fmt::Display for ConjugacyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.representative)
    }
}

/// Canonical class of a non-identity element.
pub fn class_of(rank: Rank, w: &Word) -> Result<ConjugacyClass> {
    w.check_rank(rank)?;
    if w.is_identity() {
        return Err(Error::TrivialClass);
    }
    let core = cyclic_reduction(w);
    let orbit: BTreeSet<Word> = (0..core.len()).map(|i| core.rotate(i)).collect();
    let orbit: Vec<Word> = orbit.into_iter().collect();
    Ok(ConjugacyClass { rank, representative: orbit[0].clone(), orbit })
}

/// The two letters excluded from the first position of `Γ_m(g)`: `g_1` and `g_k^{-1}`.
pub fn forbidden_first(g: &Word) -> [Letter; 2] {
    let first = g.first().expect("non-trivial g");
    let last = g.last().expect("non-trivial g");
    [first, last.inverse()]
}

/// `Γ_m(g) = {w ∈ Γ_m : w_1 ≠ g_1, g_k^{-1}}`, streamed lexicographically.
pub fn restricted_sphere(rank: Rank, g: &Word, m: usize) -> ReducedWords {
    ReducedWords::restricted(rank, m, &forbidden_first(g))
}

/// `#Γ_m(g) = (2p-2)(2p-1)^(m-1)` for `m >= 1`, and `1` for `m = 0`.
pub fn restricted_sphere_size(rank: Rank, m: usize) -> u128 {
    if m == 0 {
        return 1;
    }
    sphere_size(rank, m) / rank.alphabet_size() as u128 * (rank.alphabet_size() as u128 - 2)
}

pub fn in_restricted_sphere(g: &Word, w: &Word) -> bool {
    w.is_reduced() && w.first().is_none_or(|l| !forbidden_first(g).contains(&l))
}

/// `w^{-1} g w` as a reduced word; no cancellation happens when `w ∈ Γ_m(g)`.
pub fn conjugate(g: &Word, w: &Word) -> Word {
    let mut letters = Vec::with_capacity(g.len() + 2 * w.len());
    letters.extend(w.letters().iter().rev().map(|l| l.inverse()));
    letters.extend_from_slice(g.letters());
    letters.extend_from_slice(w.letters());
    Word::from_letters_unchecked(letters)
}

/// `#C_{k+2m} = (2p-2)(2p-1)^(m-1) #C_k`; `#C_k` at `m = 0`.
pub fn class_sphere_size(class: &ConjugacyClass, m: usize) -> u128 {
    restricted_sphere_size(class.rank, m).saturating_mul(class.orbit.len() as u128)
}

/// One shard of a class sphere: a fixed rotation `g` and, for `m >= 1`, a
/// fixed first conjugator letter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassShard {
    pub g: Word,
    pub first: Option<Letter>,
}

/// Shards in enumeration order: outer loop over the orbit, inner over
/// admissible first letters of `w`.
pub fn class_sphere_shards(class: &ConjugacyClass, m: usize) -> Vec<ClassShard> {
    let mut shards = Vec::new();
    for g in &class.orbit {
        if m == 0 {
            shards.push(ClassShard { g: g.clone(), first: None });
            continue;
        }
        let forb = forbidden_first(g);
        for l in class.rank.letters().filter(|l| !forb.contains(l)) {
            shards.push(ClassShard { g: g.clone(), first: Some(l) });
        }
    }
    shards
}

/// Conjugators `w` of one shard, lexicographically.
pub fn shard_conjugators(class: &ConjugacyClass, shard: &ClassShard, m: usize) -> ReducedWords {
    let prefix = match shard.first {
        Some(l) => Word::from_letters_unchecked(vec![l]),
        None => Word::identity(),
    };
    ReducedWords::restricted_with_prefix(class.rank, &prefix, m, &forbidden_first(&shard.g))
}

/// Streams `C_{k+2m}` as `w^{-1} g w`, `g` over the orbit (sorted) and `w`
/// over `Γ_m(g)` (lexicographic).
pub fn enumerate_class_sphere(class: &ConjugacyClass, m: usize) -> impl Iterator<Item = Word> + '_ {
    class.orbit.iter().flat_map(move |g| restricted_sphere(class.rank, g, m).map(move |w| conjugate(g, &w)))
}

/// Uniform `(g, w)` pair: `g` uniform over the orbit, `w_1` uniform over the
/// `2p-2` allowed letters, later letters uniform over `2p-1`.
pub fn sample_class_pair<R: Rng + ?Sized>(class: &ConjugacyClass, m: usize, rng: &mut R) -> (Word, Word) {
    let g = &class.orbit[rng.gen_range(0..class.orbit.len())];
    let mut letters = Vec::with_capacity(m);
    extend_uniform(class.rank, &mut letters, m, &forbidden_first(g), rng);
    (g.clone(), Word::from_letters_unchecked(letters))
}

/// Uniform draw from `C_{k+2m}`.
pub fn sample_uniform_class_sphere<R: Rng + ?Sized>(class: &ConjugacyClass, m: usize, rng: &mut R) -> Word {
    let (g, w) = sample_class_pair(class, m, rng);
    conjugate(&g, &w)
}
