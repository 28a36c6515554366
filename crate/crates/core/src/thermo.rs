//! Transfer operators of locally constant weights as finite matrices, their
//! Perron data, pressure and its first two derivatives, and the weighted
//! restricted-sphere sums that make up the class generating function.
//!
//! # Matrix realization
//!
//! A function on the augmented shift that depends on the first
//! `L = max(q - 1, 1)` symbols is a vector indexed by *states*: admissible
//! `L`-blocks whose first symbol is a letter (letters-only blocks first, then
//! `⊥`-padded blocks), followed by the identity state `⊥^L`. For a state `x`
//! and a letter `a` that may precede it, `y = a·x` has state
//! `(a, x_0, …, x_{L-2})` and weight `f(a, x_0, …, x_{q-2})`, so
//!
//! ```text
//! (M_s ω)[x] = Σ_{a admissible before x} exp(s f(a·x)) ω[state(a·x)].
//! ```
//!
//! Only letters are ever prepended, so the identity never appears as a
//! preimage of itself. Evaluating `M_s^m ω` at the identity state sums
//! `exp(s f^m(w)) ω(w)` over all reduced words `w` of length `m`.
//!
//! The padded states form a nilpotent block, so the spectrum of `M_s` is that
//! of the letters-only block plus zero. The left Perron vector vanishes on
//! padded states: it is a probability vector on the cylinders of `Σ`.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::conjugacy::{
    class_sphere_size, conjugate, enumerate_class_sphere, forbidden_first, in_restricted_sphere, ConjugacyClass,
};
use crate::error::{Error, Result};
use crate::symbolic::{bottom, entropy, holder_seminorm, WeightFunction};
use crate::words::{Rank, Word};

pub const PERRON_TOL: f64 = 1e-13;
pub const PERRON_MAX_ITER: usize = 100_000;
/// Step of the central difference for `P'(0)`.
pub const LAMBDA_STEP: f64 = 1e-4;
/// Step of the second central difference for `P''(0)`.
pub const SIGMA2_STEP: f64 = 1e-3;
const GAP_POWER: u32 = 32;

#[derive(Debug, Clone)]
pub struct TransferMatrix {
    rank: Rank,
    window: usize,
    s: Complex64,
    states: Vec<Vec<u16>>,
    n_letter_states: usize,
    identity: usize,
    entries: Vec<Complex64>,
}

impl TransferMatrix {
    pub fn new(f: &WeightFunction, s: Complex64) -> Self {
        let rank = f.rank();
        let q = f.depth();
        let window = q.saturating_sub(1).max(1);
        let bot = bottom(rank);

        let mut states = crate::symbolic::admissible_blocks(rank, window, false);
        let n_letter_states = states.len();
        states.extend(crate::symbolic::admissible_blocks(rank, window, true).into_iter().filter(|b| b.contains(&bot)));
        states.push(vec![bot; window]);
        let identity = states.len() - 1;
        let index: HashMap<&[u16], usize> = states.iter().enumerate().map(|(i, b)| (b.as_slice(), i)).collect();

        let n = states.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        let mut block = vec![0u16; q];
        let mut target = vec![0u16; window];
        for (xi, x) in states.iter().enumerate() {
            for a in rank.letters() {
                if x[0] != bot && a.cancels(crate::words::Letter::from_code(x[0])) {
                    continue;
                }
                block[0] = a.code();
                block[1..].copy_from_slice(&x[..q - 1]);
                target[0] = a.code();
                target[1..].copy_from_slice(&x[..window - 1]);
                let yi = index[target.as_slice()];
                entries[xi * n + yi] = (s * f.block_value(&block)).exp();
            }
        }
        TransferMatrix { rank, window, s, states, n_letter_states, identity, entries }
    }

    pub fn real(f: &WeightFunction, t: f64) -> Self {
        Self::new(f, Complex64::new(t, 0.0))
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn s(&self) -> Complex64 {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u16>] {
        &self.states
    }

    /// Index of the identity state `⊥^L` (evaluation at the empty word).
    pub fn identity_state(&self) -> usize {
        self.identity
    }

    /// States that are blocks of letters only, i.e. cylinders of `Σ`.
    pub fn letter_states(&self) -> std::ops::Range<usize> {
        0..self.n_letter_states
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim() + col]
    }

    /// State of the finite word with letter codes `codes`.
    pub fn state_of(&self, codes: &[u16]) -> usize {
        let bot = bottom(self.rank);
        let key: Vec<u16> = (0..self.window).map(|i| codes.get(i).copied().unwrap_or(bot)).collect();
        self.states.iter().position(|s| *s == key).expect("admissible word")
    }

    /// The letters-only block as a dense row-major matrix.
    pub fn letter_block(&self) -> Vec<Vec<Complex64>> {
        self.letter_states().map(|i| self.letter_states().map(|j| self.entry(i, j)).collect()).collect()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        self.entries.chunks_exact(n).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `M^m ω`.
    pub fn power_apply(&self, omega: &[Complex64], m: usize) -> Vec<Complex64> {
        let mut v = omega.to_vec();
        for _ in 0..m {
            v = self.apply(&v);
        }
        v
    }

    /// The cut-off `χ_g`: zero on states whose first symbol is `g_1` or `g_k^{-1}`.
    pub fn chi(&self, g: &Word) -> Vec<Complex64> {
        let forb = forbidden_first(g).map(|l| l.code());
        self.states
            .iter()
            .map(|b| if forb.contains(&b[0]) { 0.0 } else { 1.0 })
            .map(|x| Complex64::new(x, 0.0))
            .collect()
    }

    /// `(M_s^m χ_g)(1) = Σ_{w ∈ Γ_m(g)} exp(s f^m(w))` for each `m` in `ms`,
    /// from a single chain of matrix-vector products.
    pub fn restricted_sums(&self, g: &Word, ms: &[usize]) -> Vec<Complex64> {
        let top = ms.iter().copied().max().unwrap_or(0);
        let mut v = self.chi(g);
        let mut at = Vec::with_capacity(top + 1);
        at.push(v[self.identity]);
        for _ in 0..top {
            v = self.apply(&v);
            at.push(v[self.identity]);
        }
        ms.iter().map(|&m| at[m]).collect()
    }

    fn real_entries(&self) -> Result<Dense> {
        if self.s.im != 0.0 {
            return Err(Error::InvalidArgument("Perron data needs a real parameter".into()));
        }
        Ok(Dense { n: self.dim(), data: self.entries.iter().map(|z| z.re).collect() })
    }
}

/// Row-major dense real matrix.
#[derive(Debug, Clone)]
struct Dense {
    n: usize,
    data: Vec<f64>,
}

impl Dense {
    fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.n).map(|row| dot(row, v)).collect()
    }

    fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (row, &vi) in self.data.chunks_exact(self.n).zip(v) {
            if vi != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += vi * a;
                }
            }
        }
        out
    }

    fn matmul(&self, other: &Dense) -> Dense {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Dense { n, data }
    }

    fn norm_inf(&self) -> f64 {
        self.data.chunks_exact(self.n).map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Leading eigen-data of a real transfer matrix.
#[derive(Debug, Clone)]
pub struct PerronData {
    /// `e^{P(sf)}`.
    pub beta: f64,
    /// Right eigenvector, positive on every state.
    pub psi: Vec<f64>,
    /// Left eigenvector: a probability vector, positive on letter states and
    /// zero on padded ones. Normalized with `<nu, psi> = 1`.
    pub nu: Vec<f64>,
    /// Upper bound on `|λ_2| / beta`, from `||Q^K||^{1/K}`.
    pub gap: f64,
    pub iterations: usize,
}

fn power_iterate(n: usize, step: impl Fn(&[f64]) -> Vec<f64>) -> Result<(Vec<f64>, usize)> {
    let mut v = vec![1.0; n];
    for it in 1..=PERRON_MAX_ITER {
        let w = step(&v);
        let beta = norm_inf(&w);
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::SpectralIterationFailed(it));
        }
        let w: Vec<f64> = w.into_iter().map(|x| x / beta).collect();
        let resid = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if resid <= PERRON_TOL {
            return Ok((v, it));
        }
    }
    Err(Error::SpectralIterationFailed(PERRON_MAX_ITER))
}

/// Perron data of `M` by power iteration on both sides.
pub fn perron(m: &TransferMatrix) -> Result<PerronData> {
    let dense = m.real_entries()?;
    let n = dense.n;
    let (mut psi, it_r) = power_iterate(n, |v| dense.mul_vec(v))?;
    let (mut nu, it_l) = power_iterate(n, |v| dense.vec_mul(v))?;

    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|x| *x /= total);
    let pairing = dot(&nu, &psi);
    psi.iter_mut().for_each(|x| *x /= pairing);
    let beta = dot(&nu, &dense.mul_vec(&psi)) / dot(&nu, &psi);

    if psi.iter().any(|&x| x <= 0.0) || m.letter_states().any(|i| nu[i] <= 0.0) {
        return Err(Error::SpectralIterationFailed(it_r.max(it_l)));
    }

    let q = deflate(&dense, beta, &psi, &nu);
    let mut power = q;
    for _ in 0..GAP_POWER.trailing_zeros() {
        power = power.matmul(&power);
    }
    let gap = power.norm_inf().powf(1.0 / GAP_POWER as f64) / beta;

    Ok(PerronData { beta, psi, nu, gap, iterations: it_r.max(it_l) })
}

fn deflate(m: &Dense, beta: f64, psi: &[f64], nu: &[f64]) -> Dense {
    let n = m.n;
    let mut data = m.data.clone();
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] -= beta * psi[i] * nu[j];
        }
    }
    Dense { n, data }
}

/// `M = beta R_0 + Q` with `R_0 = psi nu^T`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub beta: f64,
    n: usize,
    r0: Vec<f64>,
    q: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn new(m: &TransferMatrix, data: &PerronData) -> Result<Self> {
        let dense = m.real_entries()?;
        let n = dense.n;
        let mut r0 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                r0[i * n + j] = data.psi[i] * data.nu[j];
            }
        }
        let q = deflate(&dense, data.beta, &data.psi, &data.nu).data;
        Ok(SpectralDecomposition { beta: data.beta, n, r0, q })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn r0(&self, i: usize, j: usize) -> f64 {
        self.r0[i * self.n + j]
    }

    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    /// `||R_0^2 - R_0||_∞`.
    pub fn idempotence_defect(&self) -> f64 {
        let r = Dense { n: self.n, data: self.r0.clone() };
        let mut rr = r.matmul(&r);
        rr.data.iter_mut().zip(&self.r0).for_each(|(a, b)| *a -= b);
        rr.norm_inf()
    }

    /// `max(||R_0 Q||_∞, ||Q R_0||_∞)`.
    pub fn commutation_defect(&self) -> f64 {
        let r = Dense { n: self.n, data: self.r0.clone() };
        let q = Dense { n: self.n, data: self.q.clone() };
        r.matmul(&q).norm_inf().max(q.matmul(&r).norm_inf())
    }

    /// `||Q^m||_∞^{1/m}`.
    pub fn q_power_root(&self, m: u32) -> f64 {
        let q = Dense { n: self.n, data: self.q.clone() };
        let mut acc = q.clone();
        for _ in 1..m {
            acc = acc.matmul(&q);
        }
        acc.norm_inf().powf(1.0 / m as f64)
    }
}

/// `P(tf) = log beta(t)`.
pub fn pressure(f: &WeightFunction, t: f64) -> Result<f64> {
    Ok(perron(&TransferMatrix::real(f, t))?.beta.ln())
}

/// `∫ f dμ_0`, computed exactly as a sum over cylinders.
pub fn lambda(f: &WeightFunction) -> f64 {
    f.mu0_integral()
}

/// `P'(0)` by central differences with one Richardson step.
pub fn lambda_finite_difference(f: &WeightFunction) -> Result<f64> {
    let d = |h: f64| -> Result<f64> { Ok((pressure(f, h)? - pressure(f, -h)?) / (2.0 * h)) };
    let coarse = d(LAMBDA_STEP)?;
    let fine = d(LAMBDA_STEP / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `σ_f^2 = P''(0)` by second central differences with one Richardson step.
///
/// The weight is centred by its exact mean first; this leaves `P''` unchanged
/// and makes the result exactly zero for weights that are constant.
pub fn sigma2(f: &WeightFunction) -> Result<f64> {
    let centred = f.shifted(lambda(f));
    let p0 = pressure(&centred, 0.0)?;
    let d2 = |h: f64| -> Result<f64> { Ok((pressure(&centred, h)? - 2.0 * p0 + pressure(&centred, -h)?) / (h * h)) };
    let coarse = d2(SIGMA2_STEP)?;
    let fine = d2(SIGMA2_STEP / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `Var(f) + 2 Σ_{j>=1} Cov(f, f∘σ^j)` under `μ_0`, using the Markov chain on
/// letter blocks of length `q`.
pub fn sigma2_green_kubo(f: &WeightFunction) -> f64 {
    let rank = f.rank();
    let blocks: Vec<(Vec<u16>, f64)> = f.full_blocks().collect();
    let mean = lambda(f);
    let centred: Vec<f64> = blocks.iter().map(|(_, v)| v - mean).collect();
    let pi = 1.0 / blocks.len() as f64;
    let index: HashMap<&[u16], usize> = blocks.iter().enumerate().map(|(i, (b, _))| (b.as_slice(), i)).collect();

    // successors of each block: drop the first symbol, append an admissible letter
    let succ: Vec<Vec<usize>> = blocks
        .iter()
        .map(|(b, _)| {
            let last = *b.last().unwrap();
            (0..bottom(rank))
                .filter(|&c| c != last ^ 1)
                .map(|c| {
                    let mut nb = b[1..].to_vec();
                    nb.push(c);
                    index[nb.as_slice()]
                })
                .collect()
        })
        .collect();
    let deg = rank.out_degree() as f64;

    let scale = centred.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut total = pi * dot(&centred, &centred);
    let mut u = centred.clone();
    for _ in 0..PERRON_MAX_ITER {
        u = succ.iter().map(|s| s.iter().map(|&j| u[j]).sum::<f64>() / deg).collect();
        let term = pi * dot(&centred, &u);
        total += 2.0 * term;
        if norm_inf(&u) < 1e-16 * scale {
            break;
        }
    }
    total
}

/// Sum over `Γ_m(g)` of `exp(s f^m(w))`; equals 1 at `m = 0`.
pub fn weighted_restricted_sum(f: &WeightFunction, g: &Word, m: usize, s: Complex64) -> Complex64 {
    TransferMatrix::new(f, s).restricted_sums(g, &[m])[0]
}

/// `R_0 χ_g(1) = psi(1) <nu, χ_g>` at `s = 0`.
pub fn spectral_projection_value(f: &WeightFunction, g: &Word) -> Result<f64> {
    let m = TransferMatrix::real(f, 0.0);
    let data = perron(&m)?;
    let chi = m.chi(g);
    let pairing: f64 = data.nu.iter().zip(&chi).map(|(a, b)| a * b.re).sum();
    Ok(data.psi[m.identity_state()] * pairing)
}

/// Sum of `spectral_projection_value` over the minimal-length set of the class.
pub fn spectral_projection_sum(f: &WeightFunction, class: &ConjugacyClass) -> Result<f64> {
    class.orbit().iter().map(|g| spectral_projection_value(f, g)).sum()
}

/// `κ_w = f^{k+2m}(w^{-1} g w) - f^m(w) - f^k(g) - f^m(w^{-1})`.
pub fn kappa_exact(f: &WeightFunction, g: &Word, w: &Word) -> Result<f64> {
    if g.is_identity() || !g.is_cyclically_reduced() {
        return Err(Error::NotCyclicallyReduced);
    }
    if !in_restricted_sphere(g, w) {
        return Err(Error::NotInRestrictedSphere(w.to_string()));
    }
    let x = conjugate(g, w);
    Ok(f.birkhoff(&x) - f.birkhoff(w) - f.birkhoff(g) - f.birkhoff(&w.inverse()))
}

/// `2 |f|_θ θ / (1 - θ)`.
pub fn kappa_bound(f: &WeightFunction) -> f64 {
    let theta = f.theta();
    2.0 * holder_seminorm(f) * theta / (1.0 - theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaMode {
    /// Enumerate the class sphere, refusing populations above `cap`.
    Exact { cap: u128 },
    /// Transfer-matrix evaluation of the split `f^k(g) + 2 f^m(w)`.
    Decomposed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaCoefficient {
    pub value: Complex64,
    /// Guaranteed bound on `|exact - value|`; zero in exact mode. Valid for
    /// weights with `F(x) = F(x^{-1})`.
    pub bound: f64,
}

/// Coefficient of `z^{k+2m}` in the class generating function:
/// `Σ_{x ∈ C_{k+2m}} exp(s F(x))`.
pub fn eta_coefficient(
    class: &ConjugacyClass,
    f: &WeightFunction,
    m: usize,
    s: Complex64,
    mode: EtaMode,
) -> Result<EtaCoefficient> {
    if f.rank() != class.rank() {
        return Err(Error::RankMismatch { expected: class.rank().get(), found: f.rank().get() });
    }
    match mode {
        EtaMode::Exact { cap } => {
            let population = class_sphere_size(class, m);
            if population > cap {
                return Err(Error::CapExceeded { population, cap });
            }
            let value = enumerate_class_sphere(class, m).map(|x| (s * f.birkhoff(&x)).exp()).sum();
            Ok(EtaCoefficient { value, bound: 0.0 })
        }
        EtaMode::Decomposed => {
            let value = decomposed_sum(class, f, m, s);
            let magnitude = decomposed_sum(class, f, m, Complex64::new(s.re, 0.0)).re;
            let bound = ((s.norm() * kappa_bound(f)).exp() - 1.0) * magnitude;
            Ok(EtaCoefficient { value, bound })
        }
    }
}

fn decomposed_sum(class: &ConjugacyClass, f: &WeightFunction, m: usize, s: Complex64) -> Complex64 {
    let matrix = TransferMatrix::new(f, 2.0 * s);
    class.orbit().iter().map(|g| (s * f.birkhoff(g)).exp() * matrix.restricted_sums(g, &[m])[0]).sum()
}

/// `h = P(0) = log(2p - 1)`.
pub fn topological_entropy(rank: Rank) -> f64 {
    entropy(rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugacy::{class_of, restricted_sphere};
    use crate::symbolic::admissible_blocks;
    use crate::words::{enumerate_sphere, Letter};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::SQRT_2;

    fn p2() -> Rank {
        Rank::new(2).unwrap()
    }

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn tree() -> WeightFunction {
        WeightFunction::tree_length(p2(), &[1.0, SQRT_2]).unwrap()
    }

    fn random_table(rank: Rank, depth: usize, seed: u64) -> WeightFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<_> = (1..=depth)
            .flat_map(|len| admissible_blocks(rank, len, false))
            .map(|b| (b.iter().map(|&c| Letter::from_code(c)).collect(), rng.gen_range(-0.5..1.5)))
            .collect();
        WeightFunction::from_blocks(rank, depth, entries).unwrap()
    }

    #[test]
    fn zero_weight_gives_transition_matrix() {
        let f = WeightFunction::constant(p2(), 0.0).unwrap();
        let m = TransferMatrix::real(&f, 1.7);
        let a = crate::symbolic::transition_matrix(p2());
        let block = m.letter_block();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(block[i][j].re, a[i][j] as f64);
            }
        }
        let data = perron(&m).unwrap();
        assert_relative_eq!(data.beta, 3.0, epsilon = 1e-13);
        for i in m.letter_states() {
            assert_relative_eq!(data.psi[i], data.psi[0], epsilon = 1e-12);
            assert_relative_eq!(data.nu[i], 0.25, epsilon = 1e-12);
        }
        assert!(data.gap < 1.0);
    }

    #[test]
    fn tree_entries_are_exponentials() {
        let m = TransferMatrix::real(&tree(), 0.3);
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                let e = m.entry(i, j).re;
                assert!(e == 0.0 || (e - 0.3f64.exp()).abs() < 1e-15 || (e - (0.3 * SQRT_2).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_weight_scales_beta() {
        for c in [-0.7, 0.0, 1.3] {
            let f = WeightFunction::constant(Rank::new(3).unwrap(), c).unwrap();
            let beta = perron(&TransferMatrix::real(&f, 1.0)).unwrap().beta;
            assert_relative_eq!(beta, 5.0 * c.exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn perron_eigen_equations() {
        for (depth, seed) in [(1, 1), (2, 2), (3, 3)] {
            let f = random_table(p2(), depth, seed);
            let m = TransferMatrix::real(&f, 0.4);
            let d = perron(&m).unwrap();
            let dense = m.real_entries().unwrap();
            let mpsi = dense.mul_vec(&d.psi);
            let num = dense.vec_mul(&d.nu);
            for i in 0..m.dim() {
                assert!((mpsi[i] - d.beta * d.psi[i]).abs() < 1e-12 * d.beta);
                assert!((num[i] - d.beta * d.nu[i]).abs() < 1e-12 * d.beta);
            }
            assert_relative_eq!(d.nu.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert_relative_eq!(dot(&d.nu, &d.psi), 1.0, epsilon = 1e-14);
            assert!(d.gap < 1.0);
        }
    }

    #[test]
    fn beta_matches_dense_eigensolver() {
        let cases = [(tree(), 0.1), (random_table(p2(), 2, 51), -0.6), (random_table(p2(), 3, 52), 0.9)];
        for (f, t) in cases {
            let m = TransferMatrix::real(&f, t);
            let n = m.dim();
            let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| m.entry(i, j).re);
            let radius = dense.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let beta = perron(&m).unwrap().beta;
            assert!((beta - radius).abs() <= 1e-10 * radius, "{beta} vs {radius}");
        }
        // the 4x4 letter block alone carries the leading eigenvalue
        let m = TransferMatrix::real(&tree(), 0.1);
        let block = m.letter_block();
        let a = nalgebra::Matrix4::from_fn(|i, j| block[i][j].re);
        let radius = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert_relative_eq!(perron(&m).unwrap().beta, radius, max_relative = 1e-10);
    }

    #[test]
    fn non_real_parameter_is_rejected() {
        let m = TransferMatrix::new(&tree(), Complex64::new(0.1, 0.2));
        assert!(perron(&m).is_err());
    }

    #[test]
    fn pressure_of_constant_and_at_zero() {
        let one = WeightFunction::constant(p2(), 1.0).unwrap();
        for t in [-1.0, 0.0, 1.0] {
            assert_relative_eq!(pressure(&one, t).unwrap(), 3f64.ln() + t, epsilon = 1e-12);
        }
        assert_relative_eq!(pressure(&random_table(p2(), 2, 9), 0.0).unwrap(), 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn pressure_is_convex() {
        let f = random_table(p2(), 2, 4);
        let grid: Vec<f64> = (-2..=2).map(|i| i as f64 * 0.5).collect();
        let p: Vec<f64> = grid.iter().map(|&t| pressure(&f, t).unwrap()).collect();
        for i in 1..p.len() - 1 {
            assert!(p[i] <= 0.5 * (p[i - 1] + p[i + 1]) + 1e-12);
        }
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda(&WeightFunction::constant(p2(), 1.0).unwrap()), 1.0);
        assert_relative_eq!(lambda(&tree()), (1.0 + SQRT_2) / 2.0, epsilon = 1e-15);
        let f = random_table(p2(), 2, 5);
        assert!((lambda(&f) - lambda_finite_difference(&f).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn sigma2_examples() {
        assert_eq!(sigma2(&WeightFunction::constant(p2(), 2.5).unwrap()).unwrap(), 0.0);
        assert_eq!(sigma2(&WeightFunction::tree_length(p2(), &[1.0, 1.0]).unwrap()).unwrap(), 0.0);
        // centred tree weight is a -1/3 eigenvector of the letter chain
        let expected = (3.0 - 2.0 * SQRT_2) / 8.0;
        assert_relative_eq!(sigma2_green_kubo(&tree()), expected, epsilon = 1e-14);
        assert!((sigma2(&tree()).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn sigma2_routes_agree_on_tables() {
        for (rank, depth, seed) in [(p2(), 2, 6), (p2(), 3, 7), (Rank::new(3).unwrap(), 2, 8)] {
            let f = random_table(rank, depth, seed);
            let a = sigma2(&f).unwrap();
            let b = sigma2_green_kubo(&f);
            assert!((a - b).abs() < 1e-6, "depth {depth}: {a} vs {b}");
        }
    }

    // Definitional oracle: sum over reduced prefixes w with w·x reduced.
    fn path_sum_oracle(
        f: &WeightFunction,
        s: Complex64,
        omega: &[Complex64],
        m: &TransferMatrix,
        x: &[u16],
        len: usize,
    ) -> Complex64 {
        let rank = f.rank();
        let mut total = Complex64::new(0.0, 0.0);
        for pre in enumerate_sphere(rank, len) {
            let mut codes: Vec<u16> = pre.letters().iter().map(|l| l.code()).collect();
            if let (Some(&a), Some(&b)) = (codes.last(), x.first()) {
                if a ^ 1 == b {
                    continue;
                }
            }
            codes.extend_from_slice(x);
            let weight: f64 = (0..len).map(|i| f.value_at(&codes, i)).sum();
            total += (s * weight).exp() * omega[m.state_of(&codes)];
        }
        total
    }

    #[test]
    fn matrix_powers_match_path_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (depth, seed) in [(1, 11), (2, 12), (3, 13)] {
            let f = random_table(p2(), depth, seed);
            for _ in 0..3 {
                let s = Complex64::new(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7));
                let m = TransferMatrix::new(&f, s);
                let omega: Vec<Complex64> =
                    (0..m.dim()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                for len in 0..=5 {
                    let powered = m.power_apply(&omega, len);
                    for xlen in [0usize, 1, 3] {
                        let x = crate::words::sample_uniform_sphere(p2(), xlen, &mut rng);
                        let xc: Vec<u16> = x.letters().iter().map(|l| l.code()).collect();
                        let got = powered[m.state_of(&xc)];
                        let want = path_sum_oracle(&f, s, &omega, &m, &xc, len);
                        assert!((got - want).norm() <= 1e-10 * want.norm().max(1.0), "q={depth} m={len}");
                    }
                }
            }
        }
    }

    #[test]
    fn restricted_sum_examples() {
        let zero = WeightFunction::constant(p2(), 0.0).unwrap();
        let g = w("a1.a2");
        assert_relative_eq!(weighted_restricted_sum(&zero, &g, 3, Complex64::new(0.3, 0.1)).re, 18.0, epsilon = 1e-12);
        assert_eq!(weighted_restricted_sum(&tree(), &g, 0, Complex64::new(0.3, 0.0)), Complex64::new(1.0, 0.0));
        let s = Complex64::new(0.2, 0.0);
        for m in 0..=8 {
            let brute: Complex64 = restricted_sphere(p2(), &g, m).map(|x| (s * tree().birkhoff(&x)).exp()).sum();
            let got = weighted_restricted_sum(&tree(), &g, m, s);
            assert!((got - brute).norm() <= 1e-10 * brute.norm());
        }
        let c = class_of(p2(), &g).unwrap();
        for m in 0..=6 {
            let got = weighted_restricted_sum(&tree(), &g, m, Complex64::new(0.0, 0.0)).re;
            assert_eq!(got, (class_sphere_size(&c, m) / c.orbit().len() as u128) as f64);
        }
    }

    #[test]
    fn eta_modes() {
        let c = class_of(p2(), &w("a1.a2")).unwrap();
        let cap = EtaMode::Exact { cap: 1_000_000 };
        for m in 0..=6 {
            let zero = Complex64::new(0.0, 0.0);
            let n = class_sphere_size(&c, m) as f64;
            assert_relative_eq!(eta_coefficient(&c, &tree(), m, zero, cap).unwrap().value.re, n);
            assert_relative_eq!(
                eta_coefficient(&c, &tree(), m, zero, EtaMode::Decomposed).unwrap().value.re,
                n,
                max_relative = 1e-12
            );
            let s = Complex64::new(0.3, -0.6);
            let ex = eta_coefficient(&c, &tree(), m, s, cap).unwrap().value;
            let de = eta_coefficient(&c, &tree(), m, s, EtaMode::Decomposed).unwrap().value;
            assert!((ex - de).norm() <= 1e-12 * ex.norm().max(1.0));
        }
        assert!(matches!(
            eta_coefficient(&c, &tree(), 10, Complex64::new(0.0, 0.0), EtaMode::Exact { cap: 100 }),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn decomposed_eta_within_envelope_depth2() {
        // f(a, b) = l(a) + 0.5 [a = b], symmetric under inversion
        let ell = |c: u16| if c < 2 { 1.0 } else { SQRT_2 };
        let entries: Vec<_> = admissible_blocks(p2(), 1, false)
            .into_iter()
            .chain(admissible_blocks(p2(), 2, false))
            .map(|b| {
                let v = ell(b[0]) + if b.len() == 2 && b[0] == b[1] { 0.5 } else { 0.0 };
                (b.iter().map(|&c| Letter::from_code(c)).collect::<Vec<_>>(), v)
            })
            .collect();
        let f = WeightFunction::from_blocks(p2(), 2, entries).unwrap();
        assert!(crate::symbolic::check_symmetry(&f, 6) < 1e-12);
        for rep in ["a1.a2", "a1.a1.a2"] {
            let c = class_of(p2(), &w(rep)).unwrap();
            for m in 0..=5 {
                for s in [Complex64::new(0.4, 0.0), Complex64::new(-0.3, 0.8), Complex64::new(0.0, -1.0)] {
                    let ex = eta_coefficient(&c, &f, m, s, EtaMode::Exact { cap: 1_000_000 }).unwrap();
                    let de = eta_coefficient(&c, &f, m, s, EtaMode::Decomposed).unwrap();
                    assert!((ex.value - de.value).norm() <= de.bound + 1e-9 * ex.value.norm());
                }
            }
        }
    }

    #[test]
    fn kappa_examples() {
        let g = w("a1.a2");
        let one = WeightFunction::constant(p2(), 1.0).unwrap();
        for x in restricted_sphere(p2(), &g, 4) {
            assert!(kappa_exact(&tree(), &g, &x).unwrap().abs() < 1e-12);
            assert_eq!(kappa_exact(&one, &g, &x).unwrap(), 0.0);
        }
        assert!(kappa_exact(&tree(), &g, &w("a1.a1")).is_err());
        assert!(kappa_exact(&tree(), &w("a1.a2.A1"), &w("a2")).is_err());
        assert_eq!(kappa_bound(&one), 0.0);
        assert_relative_eq!(kappa_bound(&tree()), 2.0 * (SQRT_2 - 1.0), epsilon = 1e-15);
    }

    #[test]
    fn kappa_bound_dominates_depth2() {
        let f = random_table(p2(), 2, 31);
        let bound = kappa_bound(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..2000 {
            let rep = crate::words::sample_uniform_sphere(p2(), rng.gen_range(1..5), &mut rng);
            let Ok(c) = class_of(p2(), &rep) else { continue };
            let m = rng.gen_range(0..=8);
            let (g, x) = crate::conjugacy::sample_class_pair(&c, m, &mut rng);
            assert!(kappa_exact(&f, &g, &x).unwrap().abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn projection_limit_for_free_group_of_rank_two() {
        let f = tree();
        for rep in ["a1.a2", "a1.a1.a2", "a1.a2.a1.a2"] {
            let c = class_of(p2(), &w(rep)).unwrap();
            let sum = spectral_projection_sum(&f, &c).unwrap();
            assert_relative_eq!(sum, 2.0 / 3.0 * c.orbit().len() as f64, epsilon = 1e-10);
            for m in 1..=10 {
                let ratio = class_sphere_size(&c, m) as f64 / 3f64.powi(m as i32);
                assert_relative_eq!(ratio, sum, epsilon = 1e-10);
            }
        }
        let zero = WeightFunction::constant(p2(), 0.0).unwrap();
        assert_relative_eq!(
            spectral_projection_value(&zero, &w("a1.a2")).unwrap(),
            spectral_projection_value(&random_table(p2(), 3, 1), &w("a1.a2")).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn spectral_decomposition_properties() {
        for f in [tree(), random_table(p2(), 2, 41)] {
            let m = TransferMatrix::real(&f, 0.0);
            let d = perron(&m).unwrap();
            let sd = SpectralDecomposition::new(&m, &d).unwrap();
            assert!(sd.idempotence_defect() < 1e-10);
            assert!(sd.commutation_defect() < 1e-10);
            let mut recon = 0.0f64;
            for i in 0..sd.dim() {
                for j in 0..sd.dim() {
                    recon = recon.max((m.entry(i, j).re - sd.beta * sd.r0(i, j) - sd.q(i, j)).abs());
                }
            }
            assert!(recon < 1e-10);
            assert!(sd.q_power_root(20) < sd.beta);
        }
    }
}
