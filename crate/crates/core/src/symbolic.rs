//! The one-sided subshift of infinite reduced words, augmented by the finite
//! words, together with locally constant weights on it.
//!
//! A finite word is treated as a sequence padded on the right by the empty
//! symbol `⊥`, so a depth-`q` weight sees blocks such as `a1 A2 ⊥` near the
//! end of a word. `⊥` may only be followed by `⊥`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::words::{sample_uniform_sphere, Letter, Rank, Word};

pub const MAX_DEPTH: usize = 4;
pub const DEFAULT_THETA: f64 = 0.5;

/// Code of the empty symbol `⊥` for a given rank; letters use `0..2p`.
pub fn bottom(rank: Rank) -> u16 {
    rank.alphabet_size() as u16
}

/// `A(a, b) = 0` iff `b = a^{-1}`, as a dense `2p x 2p` 0/1 matrix.
pub fn transition_matrix(rank: Rank) -> Vec<Vec<u8>> {
    let n = rank.alphabet_size();
    (0..n).map(|a| (0..n).map(|b| u8::from(a ^ 1 != b)).collect()).collect()
}

/// Topological entropy `log(2p - 1)`.
pub fn entropy(rank: Rank) -> f64 {
    (rank.out_degree() as f64).ln()
}

/// Admissible blocks of `len` symbols whose first symbol is a letter.
/// With `padded`, blocks may end in a run of `⊥`. Lexicographic, `⊥` last.
pub fn admissible_blocks(rank: Rank, len: usize, padded: bool) -> Vec<Vec<u16>> {
    let bot = bottom(rank);
    let mut out: Vec<Vec<u16>> = rank.letters().map(|l| vec![l.code()]).collect();
    for _ in 1..len {
        let mut next = Vec::with_capacity(out.len() * rank.alphabet_size());
        for b in &out {
            let last = *b.last().unwrap();
            if last == bot {
                let mut e = b.clone();
                e.push(bot);
                next.push(e);
                continue;
            }
            for c in 0..bot {
                if c != last ^ 1 {
                    let mut e = b.clone();
                    e.push(c);
                    next.push(e);
                }
            }
            if padded {
                let mut e = b.clone();
                e.push(bot);
                next.push(e);
            }
        }
        out = next;
    }
    out
}

/// `μ_0([w]) = (2p)^{-1} (2p-1)^{-(n-1)}`.
pub fn mu0_cylinder(rank: Rank, w: &Word) -> Result<f64> {
    if w.is_identity() {
        return Err(Error::EmptyCylinder);
    }
    w.check_rank(rank)?;
    if !w.is_reduced() {
        return Err(Error::NotReduced(0));
    }
    Ok(mu0_block_mass(rank, w.len()))
}

pub(crate) fn mu0_block_mass(rank: Rank, n: usize) -> f64 {
    1.0 / rank.alphabet_size() as f64 / (rank.out_degree() as f64).powi(n as i32 - 1)
}

/// A word of length `n` distributed as the `μ_0` marginal on `n`-cylinders.
pub fn sample_mu0_path<R: Rng + ?Sized>(rank: Rank, n: usize, rng: &mut R) -> Word {
    sample_uniform_sphere(rank, n, rng)
}

/// A locally constant function `f` on the augmented shift space, depending on
/// the first `depth` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    rank: Rank,
    depth: usize,
    theta: f64,
    radix: usize,
    // indexed by block code in base `radix`; NaN where the block is not admissible
    table: Vec<f64>,
}

impl WeightFunction {
    fn empty(rank: Rank, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidWeight("depth must be at least 1".into()));
        }
        if depth > MAX_DEPTH {
            return Err(Error::DepthTooLarge(depth));
        }
        let radix = rank.alphabet_size() + 1;
        Ok(WeightFunction { rank, depth, theta: DEFAULT_THETA, radix, table: vec![f64::NAN; radix.pow(depth as u32)] })
    }

    /// Depth-1 weight from one value per letter, indexed by letter code.
    pub fn from_letter_values(rank: Rank, values: &[f64]) -> Result<Self> {
        if values.len() != rank.alphabet_size() {
            return Err(Error::InvalidWeight(format!(
                "expected {} letter values, got {}",
                rank.alphabet_size(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWeight("non-finite value".into()));
        }
        let mut f = Self::empty(rank, 1)?;
        f.table[..values.len()].copy_from_slice(values);
        Ok(f)
    }

    pub fn constant(rank: Rank, c: f64) -> Result<Self> {
        Self::from_letter_values(rank, &vec![c; rank.alphabet_size()])
    }

    /// Displacement weight of the Cayley tree with edge length `lengths[i]`
    /// for generator `a_{i+1}`: `f(a_i) = f(a_i^{-1}) = ℓ_i`.
    pub fn tree_length(rank: Rank, lengths: &[f64]) -> Result<Self> {
        if lengths.len() != rank.get() as usize {
            return Err(Error::InvalidWeight(format!("expected {} lengths, got {}", rank.get(), lengths.len())));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidWeight(format!("edge length must be positive, got {l}")));
        }
        let values: Vec<f64> = lengths.iter().flat_map(|&l| [l, l]).collect();
        Self::from_letter_values(rank, &values)
    }

    /// Builds a depth-`depth` table. Each entry is a reduced block of 1 to
    /// `depth` letters; a block shorter than `depth` stands for the block
    /// padded with `⊥`. Every full-length admissible block must be present.
    /// Padded blocks that are omitted take the `μ_0`-conditional mean of `f`
    /// over the cylinder of the truncation.
    pub fn from_blocks<I>(rank: Rank, depth: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<Letter>, f64)>,
    {
        let mut f = Self::empty(rank, depth)?;
        let bot = bottom(rank);
        for (block, value) in entries {
            let word = Word::from_letters(block.clone())?;
            word.check_rank(rank)?;
            if block.is_empty() || block.len() > depth {
                return Err(Error::InvalidWeight(format!("block {word} has length outside 1..={depth}")));
            }
            if !value.is_finite() {
                return Err(Error::InvalidWeight(format!("non-finite value for block {word}")));
            }
            let mut codes: Vec<u16> = block.iter().map(|l| l.code()).collect();
            codes.resize(depth, bot);
            let idx = f.index(&codes);
            if !f.table[idx].is_nan() {
                return Err(Error::InvalidWeight(format!("duplicate block {word}")));
            }
            f.table[idx] = value;
        }
        for b in admissible_blocks(rank, depth, false) {
            if f.table[f.index(&b)].is_nan() {
                return Err(Error::MissingBlock(render_block(rank, &b)));
            }
        }
        // omitted padded blocks
        for used in 1..depth {
            for b in admissible_blocks(rank, used, false) {
                let mut padded = b.clone();
                padded.resize(depth, bot);
                let idx = f.index(&padded);
                if f.table[idx].is_nan() {
                    f.table[idx] = f.conditional_mean(&b);
                }
            }
        }
        Ok(f)
    }

    /// Mean of `f` over the full blocks extending `prefix`, each extension
    /// weighted uniformly (the `μ_0` conditional law).
    fn conditional_mean(&self, prefix: &[u16]) -> f64 {
        if prefix.len() == self.depth {
            return self.table[self.index(prefix)];
        }
        let last = *prefix.last().unwrap();
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in 0..bottom(self.rank) {
            if c != last ^ 1 {
                let mut e = prefix.to_vec();
                e.push(c);
                sum += self.conditional_mean(&e);
                n += 1;
            }
        }
        sum / n as f64
    }

    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidWeight(format!("theta must lie in (0,1), got {theta}")));
        }
        self.theta = theta;
        Ok(self)
    }

    /// `(f(a) + f(a^{-1})) / 2` letterwise; only defined at depth 1.
    pub fn symmetrized(&self) -> Result<Self> {
        if self.depth != 1 {
            return Err(Error::InvalidWeight("tablewise symmetrization needs depth 1".into()));
        }
        let vals: Vec<f64> =
            (0..bottom(self.rank)).map(|c| 0.5 * (self.table[c as usize] + self.table[(c ^ 1) as usize])).collect();
        Self::from_letter_values(self.rank, &vals)?.with_theta(self.theta)
    }

    /// `f - c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut g = self.clone();
        for v in g.table.iter_mut().filter(|v| !v.is_nan()) {
            *v -= c;
        }
        g
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn index(&self, codes: &[u16]) -> usize {
        codes.iter().fold(0usize, |acc, &c| acc * self.radix + c as usize)
    }

    /// Value on a block of exactly `depth` symbols (letter codes or `⊥`).
    /// Returns NaN on blocks outside the domain.
    pub fn block_value(&self, codes: &[u16]) -> f64 {
        debug_assert_eq!(codes.len(), self.depth);
        self.table[self.index(codes)]
    }

    /// `f(σ^i x)` for the finite word with letter codes `codes`.
    #[inline]
    pub fn value_at(&self, codes: &[u16], i: usize) -> f64 {
        let bot = bottom(self.rank) as usize;
        let mut idx = 0usize;
        for j in i..i + self.depth {
            idx = idx * self.radix + codes.get(j).map_or(bot, |&c| c as usize);
        }
        self.table[idx]
    }

    /// Birkhoff sum `f^n(x) = Σ_{i<n} f(σ^i x)` over letter codes.
    pub fn birkhoff_codes(&self, codes: &[u16]) -> f64 {
        (0..codes.len()).map(|i| self.value_at(codes, i)).sum()
    }

    /// `F(x) = f^{|x|}(x)`; zero on the identity.
    pub fn birkhoff(&self, w: &Word) -> f64 {
        let codes: Vec<u16> = w.letters().iter().map(|l| l.code()).collect();
        self.birkhoff_codes(&codes)
    }

    /// Letter-first admissible blocks (padded included) with their values.
    pub fn blocks(&self) -> impl Iterator<Item = (Vec<u16>, f64)> + '_ {
        admissible_blocks(self.rank, self.depth, true).into_iter().map(move |b| {
            let v = self.block_value(&b);
            (b, v)
        })
    }

    /// Blocks consisting of letters only, i.e. the cylinders of `Σ`.
    pub fn full_blocks(&self) -> impl Iterator<Item = (Vec<u16>, f64)> + '_ {
        admissible_blocks(self.rank, self.depth, false).into_iter().map(move |b| {
            let v = self.block_value(&b);
            (b, v)
        })
    }

    /// `∫ f dμ_0` as a finite cylinder sum.
    pub fn mu0_integral(&self) -> f64 {
        let mass = mu0_block_mass(self.rank, self.depth);
        self.full_blocks().map(|(_, v)| v * mass).sum()
    }
}

pub fn render_block(rank: Rank, codes: &[u16]) -> String {
    let bot = bottom(rank);
    codes
        .iter()
        .map(|&c| if c == bot { "_".to_string() } else { Letter::from_code(c).to_string() })
        .collect::<Vec<_>>()
        .join(".")
}

/// Exact `θ`-Lipschitz seminorm of a locally constant `f`:
/// `max_j θ^{-j} max |f(B) - f(B')|` over blocks agreeing before position `j`
/// and differing at `j`. Blocks starting with `⊥` are excluded.
pub fn holder_seminorm(f: &WeightFunction) -> f64 {
    let blocks: Vec<(Vec<u16>, f64)> = f.blocks().collect();
    let mut best = 0.0f64;
    for j in 0..f.depth() {
        // prefix -> symbol at j -> (min, max)
        let mut groups: BTreeMap<&[u16], BTreeMap<u16, (f64, f64)>> = BTreeMap::new();
        for (b, v) in &blocks {
            let e = groups.entry(&b[..j]).or_default().entry(b[j]).or_insert((*v, *v));
            e.0 = e.0.min(*v);
            e.1 = e.1.max(*v);
        }
        let scale = f.theta().powi(-(j as i32));
        for by_symbol in groups.values() {
            let ranges: Vec<(f64, f64)> = by_symbol.values().copied().collect();
            for (i, a) in ranges.iter().enumerate() {
                for b in &ranges[i + 1..] {
                    let d = (a.1 - b.0).abs().max((b.1 - a.0).abs());
                    best = best.max(d * scale);
                }
            }
        }
    }
    best
}

/// `max_{|x| <= n_max} |F(x) - F(x^{-1})|`; zero means the symmetry holds on
/// that range.
pub fn check_symmetry(f: &WeightFunction, n_max: usize) -> f64 {
    let mut worst = 0.0f64;
    for n in 1..=n_max {
        let mut it = crate::words::enumerate_sphere(f.rank(), n);
        let mut inv = vec![0u16; n];
        while let Some(c) = it.next_codes() {
            for (i, &x) in c.iter().rev().enumerate() {
                inv[i] = x ^ 1;
            }
            worst = worst.max((f.birkhoff_codes(c) - f.birkhoff_codes(&inv)).abs());
        }
    }
    worst
}

/// Serializable weight description used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightSpec {
    Tree {
        lengths: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
    },
    Table {
        depth: usize,
        entries: Vec<BlockEntry>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub block: String,
    pub value: f64,
}

impl WeightSpec {
    pub fn build(&self, rank: Rank) -> Result<WeightFunction> {
        let (f, theta) = match self {
            WeightSpec::Tree { lengths, theta } => (WeightFunction::tree_length(rank, lengths)?, theta),
            WeightSpec::Table { depth, entries, theta } => {
                let parsed = entries
                    .iter()
                    .map(|e| e.block.parse::<Word>().map(|w| (w.letters().to_vec(), e.value)))
                    .collect::<Result<Vec<_>>>()?;
                (WeightFunction::from_blocks(rank, *depth, parsed)?, theta)
            }
        };
        match theta {
            Some(t) => f.with_theta(*t),
            None => Ok(f),
        }
    }
}
