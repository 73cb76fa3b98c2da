//! The Generalized Score Distribution (GSD) over the 5-point ACR scale.
//!
//! The GSD is a two-parameter discrete distribution over the categories
//! {1..5}: `psi` is the true quality (the distribution mean) and `rho` is the
//! answer spread, with scores concentrating near `psi` as `rho` approaches 1.
//! For a fixed mean the variance of any 5-point distribution is bounded by
//! `V_min(psi)` (all mass on the two categories adjacent to `psi`) and
//! `V_max(psi)` (all mass on categories 1 and 5); the GSD interpolates
//! linearly between the two:
//!
//! ```text
//! Var(psi, rho) = rho * V_min(psi) + (1 - rho) * V_max(psi)
//! ```
//!
//! Concretely, when the target variance is at most the shifted-binomial
//! variance `V_max/4` the PMF is the variance-matching mixture of the
//! adjacent two-point distribution and `1 + Binomial(4, (psi-1)/4)`;
//! above it, the PMF is the shifted beta-binomial with the concentration
//! solved from the target variance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Number of score categories on the ACR scale.
pub const CATEGORIES: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GsdError {
    #[error("psi must lie in [1, 5], got {0}")]
    PsiOutOfRange(f64),
    #[error("rho must lie in (0, 1], got {0}")]
    RhoOutOfRange(f64),
    #[error("sample contains no scores")]
    EmptySample,
}

/// GSD parameter pair `(psi, rho)`.
///
/// `psi` is the true quality in `[1, 5]` and `rho` the spread in `(0, 1]`.
/// The endpoints `psi = 1` and `psi = 5` are degenerate point masses; they
/// are accepted for simulation edge cases but excluded from the estimation
/// grid, which spans `[1.01, 4.99]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GsdParams {
    psi: f64,
    rho: f64,
}

impl GsdParams {
    pub fn new(psi: f64, rho: f64) -> Result<Self, GsdError> {
        if !psi.is_finite() || !(1.0..=5.0).contains(&psi) {
            return Err(GsdError::PsiOutOfRange(psi));
        }
        if !rho.is_finite() || rho <= 0.0 || rho > 1.0 {
            return Err(GsdError::RhoOutOfRange(rho));
        }
        Ok(Self { psi, rho })
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// A probability mass function over the five score categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pmf5 {
    p: [f64; CATEGORIES],
}

impl Pmf5 {
    /// Wraps an already-normalized probability vector.
    pub fn from_probabilities(p: [f64; CATEGORIES]) -> Self {
        debug_assert!(p.iter().all(|&x| x >= 0.0));
        debug_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self { p }
    }

    /// Probabilities indexed by `score - 1`.
    pub fn probabilities(&self) -> &[f64; CATEGORIES] {
        &self.p
    }

    /// Probability of a single score in `1..=5`.
    pub fn prob(&self, score: u8) -> f64 {
        self.p[usize::from(score) - 1]
    }

    pub fn mean(&self) -> f64 {
        self.p
            .iter()
            .enumerate()
            .map(|(j, p)| (j as f64 + 1.0) * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .p
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let x = j as f64 + 1.0;
                x * x * p
            })
            .sum();
        second - mean * mean
    }

    /// Most probable score; the smallest category wins ties.
    pub fn mode(&self) -> u8 {
        let mut best = 0;
        for j in 1..CATEGORIES {
            if self.p[j] > self.p[best] {
                best = j;
            }
        }
        best as u8 + 1
    }

    /// Draws one score in `1..=5` by inverse-CDF walk.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, p) in self.p.iter().enumerate() {
            acc += p;
            if u < acc {
                return j as u8 + 1;
            }
        }
        // Rounding can leave acc marginally below 1; attribute the sliver to
        // the last non-empty category.
        for j in (0..CATEGORIES).rev() {
            if self.p[j] > 0.0 {
                return j as u8 + 1;
            }
        }
        CATEGORIES as u8
    }
}

/// Histogram `[k1..k5]` of scores assigned to a single stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct ScoreCounts {
    k: [u32; CATEGORIES],
}

impl ScoreCounts {
    pub const fn new(k: [u32; CATEGORIES]) -> Self {
        Self { k }
    }

    pub const fn zero() -> Self {
        Self {
            k: [0; CATEGORIES],
        }
    }

    /// Counts indexed by `score - 1`.
    pub fn counts(&self) -> &[u32; CATEGORIES] {
        &self.k
    }

    /// Total number of scores `n`.
    pub fn total(&self) -> u32 {
        self.k.iter().sum()
    }

    /// Records one score in `1..=5`.
    pub fn add_score(&mut self, score: u8) {
        assert!(
            (1..=CATEGORIES as u8).contains(&score),
            "score {score} outside 1..=5"
        );
        self.k[usize::from(score) - 1] += 1;
    }

    /// Mean Opinion Score, `sum(j * k_j) / n`.
    pub fn mos(&self) -> Result<f64, GsdError> {
        let n = self.total();
        if n == 0 {
            return Err(GsdError::EmptySample);
        }
        let weighted: u64 = self
            .k
            .iter()
            .enumerate()
            .map(|(j, &k)| (j as u64 + 1) * u64::from(k))
            .sum();
        Ok(weighted as f64 / f64::from(n))
    }
}

impl FromIterator<u8> for ScoreCounts {
    fn from_iter<T: IntoIterator<Item = u8>>(iter: T) -> Self {
        let mut counts = ScoreCounts::zero();
        for score in iter {
            counts.add_score(score);
        }
        counts
    }
}

/// Minimum and maximum variance achievable by a 5-point distribution with
/// mean `psi`: `V_min = f(1-f)` with `f = psi - floor(psi)` (mass on the two
/// adjacent categories) and `V_max = (psi-1)(5-psi)` (mass on 1 and 5).
pub fn variance_bounds(psi: f64) -> Result<(f64, f64), GsdError> {
    if !psi.is_finite() || !(1.0..=5.0).contains(&psi) {
        return Err(GsdError::PsiOutOfRange(psi));
    }
    let f = psi - psi.floor();
    let v_min = f * (1.0 - f);
    let v_max = (psi - 1.0) * (5.0 - psi);
    Ok((v_min, v_max))
}

fn binomial4(p: f64) -> [f64; CATEGORIES] {
    let q = 1.0 - p;
    [
        q * q * q * q,
        4.0 * p * q * q * q,
        6.0 * p * p * q * q,
        4.0 * p * p * p * q,
        p * p * p * p,
    ]
}

fn beta_binomial4(alpha: f64, beta: f64) -> [f64; CATEGORIES] {
    let s = alpha + beta;
    let den = s * (s + 1.0) * (s + 2.0) * (s + 3.0);
    [
        beta * (beta + 1.0) * (beta + 2.0) * (beta + 3.0) / den,
        4.0 * alpha * beta * (beta + 1.0) * (beta + 2.0) / den,
        6.0 * alpha * (alpha + 1.0) * beta * (beta + 1.0) / den,
        4.0 * alpha * (alpha + 1.0) * (alpha + 2.0) * beta / den,
        alpha * (alpha + 1.0) * (alpha + 2.0) * (alpha + 3.0) / den,
    ]
}

fn point_mass(score: usize) -> Pmf5 {
    let mut p = [0.0; CATEGORIES];
    p[score - 1] = 1.0;
    Pmf5 { p }
}

/// GSD probability mass function for the given parameters.
///
/// The mean equals `psi` and the variance equals
/// `rho * V_min(psi) + (1 - rho) * V_max(psi)`.
pub fn gsd_pmf(params: GsdParams) -> Pmf5 {
    let psi = params.psi();
    let rho = params.rho();
    if psi <= 1.0 {
        return point_mass(1);
    }
    if psi >= 5.0 {
        return point_mass(CATEGORIES);
    }

    let lower = psi.floor() as usize; // 1..=4
    let f = psi - psi.floor();
    let v_min = f * (1.0 - f);
    let v_max = (psi - 1.0) * (5.0 - psi);
    let v_binom = 0.25 * v_max;
    let target = rho * v_min + (1.0 - rho) * v_max;
    let p = 0.25 * (psi - 1.0);

    let probs = if target <= v_binom {
        // Low spread: mix the adjacent two-point distribution with the
        // shifted binomial so the mixture hits the target variance exactly
        // (both components share the mean psi).
        let w = (v_binom - target) / (v_binom - v_min);
        let mut two_point = [0.0; CATEGORIES];
        two_point[lower - 1] = 1.0 - f;
        if f > 0.0 {
            two_point[lower] = f;
        }
        let binom = binomial4(p);
        let mut out = [0.0; CATEGORIES];
        for j in 0..CATEGORIES {
            out[j] = w * two_point[j] + (1.0 - w) * binom[j];
        }
        out
    } else {
        // High spread: shifted beta-binomial; the concentration alpha+beta
        // is solved from Var = 4p(1-p)(1 + 3/(alpha+beta+1)).
        let s = 3.0 * v_binom / (target - v_binom) - 1.0;
        beta_binomial4(p * s, (1.0 - p) * s)
    };
    Pmf5 { p: probs }
}

/// Mean and variance of the GSD; a convenience wrapper over [`gsd_pmf`].
pub fn gsd_moments(params: GsdParams) -> (f64, f64) {
    let pmf = gsd_pmf(params);
    (pmf.mean(), pmf.variance())
}

/// Draws `n` independent scores from the GSD into a histogram.
/// Deterministic for a fixed seed.
pub fn sample(params: GsdParams, n: u32, seed: u64) -> ScoreCounts {
    let pmf = gsd_pmf(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with_rng(&pmf, n, &mut rng)
}

/// Draws `n` independent scores from an arbitrary PMF using the caller's RNG.
pub fn sample_with_rng<R: Rng + ?Sized>(pmf: &Pmf5, n: u32, rng: &mut R) -> ScoreCounts {
    let mut counts = ScoreCounts::zero();
    for _ in 0..n {
        counts.add_score(pmf.draw(rng));
    }
    counts
}
