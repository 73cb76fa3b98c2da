//! Grid-based maximum-likelihood estimation of GSD parameters.
//!
//! The fit is an argmax of the multinomial log-likelihood over the
//! precomputed grid. The multinomial coefficient is omitted throughout: it
//! depends only on the observed counts, so it cancels both in the argmax and
//! in the G statistic computed downstream.

use dashmap::DashMap;

use crate::grid::{ParamGrid, PSI_GRID_LEN, RHO_GRID_LEN, SCAN_BLOCK};
use crate::gsd::{GsdParams, ScoreCounts, CATEGORIES};

/// Result of fitting one score sample. `params` is always a grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: GsdParams,
    pub psi_index: usize,
    pub rho_index: usize,
    pub log_likelihood: f64,
    /// `n * exp(log_pmf)` at the fitted cell.
    pub expected_counts: [f64; CATEGORIES],
}

/// Grid scan strategy for the argmax.
///
/// `PrunedScan` seeds the incumbent from a coarse lattice pass and then
/// walks SCAN_BLOCK-square cell blocks, skipping any block whose per-category
/// log-probability maxima bound its best achievable likelihood strictly
/// below the incumbent. The bound argument makes it return exactly the
/// full-scan argmax (including tie-breaks, which both paths resolve by an
/// explicit smallest-psi-then-smallest-rho comparison); fuzz tests
/// cross-check the two paths cell-for-cell. `FullScan` remains the
/// reference path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitStrategy {
    FullScan,
    #[default]
    PrunedScan,
}

/// Multinomial log-likelihood of `counts` under a cell's log-probabilities:
/// `sum(k_j * log p_j)`. Categories with `k_j = 0` contribute nothing, so a
/// zero probability only matters where scores were actually observed (then
/// the result is `-inf`).
pub fn log_likelihood(counts: &ScoreCounts, log_pmf: &[f64; CATEGORIES]) -> f64 {
    let mut ll = 0.0;
    for (j, &k) in counts.counts().iter().enumerate() {
        if k > 0 {
            ll += f64::from(k) * log_pmf[j];
        }
    }
    ll
}

/// Nonzero categories as (index, count-as-f64) pairs for the scan inner loop.
fn nonzero_terms(counts: &ScoreCounts) -> ([(usize, f64); CATEGORIES], usize) {
    let mut terms = [(0usize, 0f64); CATEGORIES];
    let mut len = 0;
    for (j, &k) in counts.counts().iter().enumerate() {
        if k > 0 {
            terms[len] = (j, f64::from(k));
            len += 1;
        }
    }
    (terms, len)
}

/// Incumbent cell during a scan. `consider` resolves exact likelihood ties
/// toward the smallest psi index, then the smallest rho index, so the result
/// does not depend on visit order.
struct Incumbent {
    psi_index: usize,
    rho_index: usize,
    ll: f64,
}

impl Incumbent {
    fn new() -> Self {
        Self {
            psi_index: 0,
            rho_index: 0,
            ll: f64::NEG_INFINITY,
        }
    }

    #[inline]
    fn consider(&mut self, pi: usize, ri: usize, ll: f64) {
        if ll > self.ll
            || (ll == self.ll && (pi, ri) < (self.psi_index, self.rho_index) && ll.is_finite())
        {
            self.psi_index = pi;
            self.rho_index = ri;
            self.ll = ll;
        }
    }
}

#[inline]
fn cell_ll(table: &[f64], pi: usize, ri: usize, terms: &[(usize, f64)]) -> f64 {
    let base = (pi * RHO_GRID_LEN + ri) * CATEGORIES;
    let mut ll = 0.0;
    for &(j, k) in terms {
        ll += k * table[base + j];
    }
    ll
}

fn scan_block(
    table: &[f64],
    terms: &[(usize, f64)],
    psi_range: std::ops::Range<usize>,
    rho_range: std::ops::Range<usize>,
    best: &mut Incumbent,
) {
    for pi in psi_range {
        for ri in rho_range.clone() {
            best.consider(pi, ri, cell_ll(table, pi, ri, terms));
        }
    }
}

fn scan_argmax(counts: &ScoreCounts, grid: &ParamGrid, strategy: FitStrategy) -> (usize, usize, f64) {
    let (terms, len) = nonzero_terms(counts);
    let terms = &terms[..len];
    let table = grid.log_pmf_table();
    let mut best = Incumbent::new();
    match strategy {
        FitStrategy::FullScan => {
            scan_block(table, terms, 0..PSI_GRID_LEN, 0..RHO_GRID_LEN, &mut best);
        }
        FitStrategy::PrunedScan => {
            // Seed the incumbent cheaply so the block bounds bite early.
            for pi in (0..PSI_GRID_LEN).step_by(SCAN_BLOCK) {
                for ri in (0..RHO_GRID_LEN).step_by(SCAN_BLOCK) {
                    best.consider(pi, ri, cell_ll(table, pi, ri, terms));
                }
            }
            for bp in 0..PSI_GRID_LEN.div_ceil(SCAN_BLOCK) {
                for br in 0..RHO_GRID_LEN.div_ceil(SCAN_BLOCK) {
                    let cap = grid.block_max(bp, br);
                    let mut bound = 0.0;
                    for &(j, k) in terms {
                        bound += k * cap[j];
                    }
                    // A block strictly below the incumbent cannot hold the
                    // argmax; a block merely tying it may still hold a
                    // lexicographically earlier tie, so it is scanned.
                    if bound < best.ll {
                        continue;
                    }
                    scan_block(
                        table,
                        terms,
                        bp * SCAN_BLOCK..((bp + 1) * SCAN_BLOCK).min(PSI_GRID_LEN),
                        br * SCAN_BLOCK..((br + 1) * SCAN_BLOCK).min(RHO_GRID_LEN),
                        &mut best,
                    );
                }
            }
        }
    }
    (best.psi_index, best.rho_index, best.ll)
}

fn result_from_cell(grid: &ParamGrid, psi_index: usize, rho_index: usize, ll: f64, n: u32) -> FitResult {
    let log_pmf = grid.log_pmf(psi_index, rho_index);
    let mut expected = [0.0; CATEGORIES];
    for j in 0..CATEGORIES {
        expected[j] = f64::from(n) * log_pmf[j].exp();
    }
    FitResult {
        params: grid.params_at(psi_index, rho_index),
        psi_index,
        rho_index,
        log_likelihood: ll,
        expected_counts: expected,
    }
}

/// Maximum-likelihood grid fit with the default strategy.
///
/// Every counts vector with `n >= 1` has a finite-likelihood argmax because
/// all cells with `rho < 1` carry strictly positive probabilities.
pub fn fit_mle(counts: &ScoreCounts, grid: &ParamGrid) -> FitResult {
    fit_mle_with(counts, grid, FitStrategy::default())
}

/// Maximum-likelihood grid fit with an explicit scan strategy.
pub fn fit_mle_with(counts: &ScoreCounts, grid: &ParamGrid, strategy: FitStrategy) -> FitResult {
    let (pi, ri, ll) = scan_argmax(counts, grid, strategy);
    result_from_cell(grid, pi, ri, ll, counts.total())
}

#[derive(Debug, Clone, Copy)]
struct CachedFit {
    psi_index: u32,
    rho_index: u32,
    log_likelihood: f64,
    expected_counts: [f64; CATEGORIES],
}

/// Concurrent memoization of grid fits, keyed by the exact counts vector.
///
/// Bootstrap resampling refits the same small space of count vectors over
/// and over (n = 24 admits only C(28,4) = 20,475 histograms), so the hit
/// rate is overwhelming. The cache is bounded: once `capacity` entries are
/// stored, further misses are computed but not inserted. Because fits are
/// pure functions of (counts, grid), the cache never changes results, only
/// wall time, and is safe for concurrent insertion.
pub struct FitCache {
    map: DashMap<[u32; CATEGORIES], CachedFit>,
    capacity: usize,
    strategy: FitStrategy,
}

impl Default for FitCache {
    fn default() -> Self {
        Self::new()
    }
}

impl FitCache {
    /// Default bound of 2^21 entries (roughly 200 MB worst case).
    pub fn new() -> Self {
        Self::with_capacity_limit(1 << 21)
    }

    pub fn with_capacity_limit(capacity: usize) -> Self {
        Self {
            map: DashMap::new(),
            capacity,
            strategy: FitStrategy::default(),
        }
    }

    pub fn with_strategy(mut self, strategy: FitStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Memoized [`fit_mle_with`] under this cache's strategy.
    pub fn fit(&self, counts: &ScoreCounts, grid: &ParamGrid) -> FitResult {
        let key = *counts.counts();
        if let Some(hit) = self.map.get(&key) {
            let c = *hit;
            drop(hit);
            return FitResult {
                params: grid.params_at(c.psi_index as usize, c.rho_index as usize),
                psi_index: c.psi_index as usize,
                rho_index: c.rho_index as usize,
                log_likelihood: c.log_likelihood,
                expected_counts: c.expected_counts,
            };
        }
        let result = fit_mle_with(counts, grid, self.strategy);
        if self.map.len() < self.capacity {
            self.map.insert(
                key,
                CachedFit {
                    psi_index: result.psi_index as u32,
                    rho_index: result.rho_index as u32,
                    log_likelihood: result.log_likelihood,
                    expected_counts: result.expected_counts,
                },
            );
        }
        result
    }
}
