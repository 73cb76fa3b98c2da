//! Experiment-level consistency from the per-stimulus p-value set.
//!
//! The p-value P-P plot compares the empirical CDF of the per-stimulus
//! p-values (y axis) against the uniform CDF (x axis). Under the composite
//! null the points fall below the diagonal; an experiment is inconsistent
//! when the ECDF strictly exceeds the one-sided proportion-test threshold
//!
//! ```text
//! f(alpha) = alpha + z * sqrt(alpha * (1 - alpha) / n)
//! ```
//!
//! somewhere in `(0, alpha_cap]`, with `n` the number of stimuli.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};
use thiserror::Error;

use crate::gof::StimulusResult;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("alpha must lie in {0}, got {1}")]
    AlphaOutOfRange(&'static str, f64),
    #[error("p-value series must contain at least one entry")]
    EmptySeries,
    #[error("p-value {0} outside [0, 1]")]
    PValueOutOfRange(f64),
}

/// Ordered per-stimulus p-values for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueSeries {
    entries: Vec<(String, f64)>,
    sorted: Vec<f64>,
}

impl PValueSeries {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self, ConsistencyError> {
        if entries.is_empty() {
            return Err(ConsistencyError::EmptySeries);
        }
        for (_, p) in &entries {
            if !(0.0..=1.0).contains(p) {
                return Err(ConsistencyError::PValueOutOfRange(*p));
            }
        }
        let mut sorted: Vec<f64> = entries.iter().map(|(_, p)| *p).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { entries, sorted })
    }

    pub fn from_results(results: &[StimulusResult]) -> Result<Self, ConsistencyError> {
        Self::new(
            results
                .iter()
                .map(|r| (r.stimulus_id.clone(), r.p_value))
                .collect(),
        )
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Right-continuous ECDF: the fraction of p-values `<= alpha`.
    pub fn ecdf(&self, alpha: f64) -> f64 {
        let below = self.sorted.partition_point(|&p| p <= alpha);
        below as f64 / self.sorted.len() as f64
    }

    /// Distinct observed p-values in ascending order (the step corners).
    pub fn distinct_pvalues(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.sorted.len());
        for &p in &self.sorted {
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        out
    }
}

/// Which standard-normal quantile feeds the threshold line.
///
/// `Rounded` truncates the exact quantile to two decimals (1.64 at
/// beta = 0.05) and is the default; `Exact` uses the full-precision value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZQuantile {
    #[default]
    Rounded,
    Exact,
}

/// `z_{1-beta}` under the chosen convention.
pub fn z_quantile(beta: f64, mode: ZQuantile) -> Result<f64, ConsistencyError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ConsistencyError::AlphaOutOfRange("(0, 1)", beta));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let exact = normal.inverse_cdf(1.0 - beta);
    Ok(match mode {
        ZQuantile::Exact => exact,
        ZQuantile::Rounded => (exact * 100.0).round() / 100.0,
    })
}

/// Threshold line `f(alpha) = alpha + z * sqrt(alpha(1-alpha)/n)`.
pub fn threshold_line(alpha: f64, n: usize, z: f64) -> Result<f64, ConsistencyError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ConsistencyError::AlphaOutOfRange("[0, 1]", alpha));
    }
    Ok(alpha + z * (alpha * (1.0 - alpha) / n as f64).sqrt())
}

/// Settings for P-P plot construction and classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyConfig {
    /// Significance level of the proportion test behind the threshold line.
    pub beta: f64,
    pub z_mode: ZQuantile,
    /// Upper limit of the alpha range that can flag an experiment.
    pub alpha_cap: f64,
    pub test_variant: TestVariant,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            beta: 0.05,
            z_mode: ZQuantile::default(),
            alpha_cap: 0.2,
            test_variant: TestVariant::default(),
        }
    }
}

/// Number of alphas in the threshold-curve grid of [`PPPlotData`].
pub const THRESHOLD_GRID_LEN: usize = 512;

/// Data behind one p-value P-P plot.
#[derive(Debug, Clone, PartialEq)]
pub struct PPPlotData {
    /// `(alpha, ecdf(alpha))` at each distinct observed p-value.
    pub points: Vec<(f64, f64)>,
    /// `(alpha, f(alpha))` on a uniform grid over [0, 1].
    pub threshold: Vec<(f64, f64)>,
    pub beta: f64,
    pub z_quantile: f64,
    pub n_stimuli: usize,
    sorted_pvalues: Vec<f64>,
}

impl PPPlotData {
    /// `(alpha, ecdf, threshold)` rows over the uniform grid; this is what
    /// the CSV plot format contains.
    pub fn csv_rows(&self) -> Vec<(f64, f64, f64)> {
        self.threshold
            .iter()
            .map(|&(alpha, f)| {
                let below = self.sorted_pvalues.partition_point(|&p| p <= alpha);
                (alpha, below as f64 / self.sorted_pvalues.len() as f64, f)
            })
            .collect()
    }
}

/// Builds the P-P plot data: ECDF points at every distinct observed p-value
/// plus the threshold curve on a uniform 512-point grid.
pub fn build_ppplot(
    series: &PValueSeries,
    config: &ConsistencyConfig,
) -> Result<PPPlotData, ConsistencyError> {
    let z = z_quantile(config.beta, config.z_mode)?;
    let n = series.len();
    let points: Vec<(f64, f64)> = series
        .distinct_pvalues()
        .into_iter()
        .map(|p| (p, series.ecdf(p)))
        .collect();
    let threshold: Vec<(f64, f64)> = (0..THRESHOLD_GRID_LEN)
        .map(|i| {
            let alpha = i as f64 / (THRESHOLD_GRID_LEN - 1) as f64;
            let f = threshold_line(alpha, n, z).expect("alpha within [0, 1]");
            (alpha, f)
        })
        .collect();
    Ok(PPPlotData {
        points,
        threshold,
        beta: config.beta,
        z_quantile: z,
        n_stimuli: n,
        sorted_pvalues: series.sorted.clone(),
    })
}

/// Which flavor of the proportion test [`experiment_test`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestVariant {
    /// `1 - Phi((ahat - alpha) / sqrt(alpha(1-alpha)/n))`, the form matching
    /// the threshold line.
    #[default]
    NormalApprox,
    /// `P[Bin(n, alpha) >= count]`.
    ExactBinomial,
}

/// One-sided p-value of the test that the proportion of stimuli with
/// p-value `<= alpha` exceeds `alpha`.
pub fn experiment_test(
    series: &PValueSeries,
    alpha: f64,
    variant: TestVariant,
) -> Result<f64, ConsistencyError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConsistencyError::AlphaOutOfRange("(0, 1)", alpha));
    }
    let n = series.len();
    let count = series
        .entries()
        .iter()
        .filter(|(_, p)| *p <= alpha)
        .count();
    match variant {
        TestVariant::NormalApprox => {
            let ahat = count as f64 / n as f64;
            let z = (ahat - alpha) / (alpha * (1.0 - alpha) / n as f64).sqrt();
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            Ok(1.0 - normal.cdf(z))
        }
        TestVariant::ExactBinomial => {
            if count == 0 {
                return Ok(1.0);
            }
            let binomial = Binomial::new(alpha, n as u64).expect("valid proportion");
            Ok(binomial.sf(count as u64 - 1))
        }
    }
}

/// Experiment-level decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentDecision {
    Consistent,
    Inconsistent,
}

/// Outcome of [`classify_experiment`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConsistencyVerdict {
    pub decision: ExperimentDecision,
    /// Right-most alpha in `(0, alpha_cap]` where the ECDF strictly exceeds
    /// the threshold line; present exactly when inconsistent.
    pub crossing_alpha: Option<f64>,
    /// Stimuli with p-value strictly below `crossing_alpha`, ascending by
    /// p-value (ties by id).
    pub flagged: Vec<String>,
    pub experiment_p_value: f64,
    pub alpha_used: f64,
}

/// Classifies an experiment from its p-value series.
///
/// The decision is the proportion test at `alpha_cap`: inconsistent iff the
/// ECDF strictly exceeds the threshold line there,
/// `ecdf(alpha_cap) > f(alpha_cap)`. Exceedance of the threshold at smaller
/// alphas alone does not condemn the experiment — a handful of extreme
/// p-values is expected even from clean data, and the bootstrap p-values of
/// a discrete statistic at n ~ 24 are only calibrated down to roughly the
/// 1e-3 level — but it stays visible on the P-P plot.
///
/// When inconsistent, `crossing_alpha` is the largest alpha in
/// `(0, alpha_cap]` where the ECDF exceeds the threshold; since the cap
/// itself exceeds, that supremum is `alpha_cap`, and the flagged set is
/// every stimulus with a p-value strictly below it.
pub fn classify_experiment(
    series: &PValueSeries,
    config: &ConsistencyConfig,
) -> Result<ConsistencyVerdict, ConsistencyError> {
    let cap = config.alpha_cap;
    if !(cap > 0.0 && cap <= 1.0) {
        return Err(ConsistencyError::AlphaOutOfRange("(0, 1]", cap));
    }
    let z = z_quantile(config.beta, config.z_mode)?;
    let n = series.len();

    let inconsistent = series.ecdf(cap) > threshold_line(cap, n, z)?;
    let crossing_alpha = inconsistent.then_some(cap);

    let flagged = match crossing_alpha {
        Some(crossing) => {
            let mut flagged: Vec<(String, f64)> = series
                .entries()
                .iter()
                .filter(|(_, p)| *p < crossing)
                .cloned()
                .collect();
            flagged.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            flagged.into_iter().map(|(id, _)| id).collect()
        }
        None => Vec::new(),
    };

    Ok(ConsistencyVerdict {
        decision: if inconsistent {
            ExperimentDecision::Inconsistent
        } else {
            ExperimentDecision::Consistent
        },
        crossing_alpha,
        flagged,
        experiment_p_value: experiment_test(series, cap, config.test_variant)?,
        alpha_used: cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series_of(ps: &[f64]) -> PValueSeries {
        PValueSeries::new(
            ps.iter()
                .enumerate()
                .map(|(i, &p)| (format!("s{i:04}"), p))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ecdf_examples() {
        let s = series_of(&[0.5, 0.7]);
        assert_eq!(s.ecdf(0.6), 0.5);
        assert_eq!(s.ecdf(1.0), 1.0);
        let ones = series_of(&vec![1.0; 160]);
        assert_eq!(ones.ecdf(0.2), 0.0);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_line(0.0, 160, 1.64).unwrap(), 0.0);
        assert_abs_diff_eq!(
            threshold_line(0.2, 160, 1.64).unwrap(),
            0.25186,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            threshold_line(0.5, 100, 1.64).unwrap(),
            0.582,
            epsilon = 1e-4
        );
        assert!(threshold_line(-0.1, 160, 1.64).is_err());
        assert!(threshold_line(1.1, 160, 1.64).is_err());
    }

    #[test]
    fn z_quantile_modes() {
        assert_eq!(z_quantile(0.05, ZQuantile::Rounded).unwrap(), 1.64);
        assert_abs_diff_eq!(
            z_quantile(0.05, ZQuantile::Exact).unwrap(),
            1.6448536269514722,
            epsilon = 1e-9
        );
    }

    #[test]
    fn threshold_strictly_above_diagonal() {
        for i in 1..100 {
            let alpha = f64::from(i) / 100.0;
            for n in [1usize, 10, 160, 4360] {
                assert!(threshold_line(alpha, n, 1.64).unwrap() > alpha);
            }
        }
    }

    #[test]
    fn ppplot_shapes() {
        let s = series_of(&[0.3, 0.3, 0.9]);
        let data = build_ppplot(&s, &ConsistencyConfig::default()).unwrap();
        assert_eq!(data.points.len(), 2);
        assert_eq!(data.points[0], (0.3, 2.0 / 3.0));
        assert_eq!(data.points[1], (0.9, 1.0));
        assert_eq!(data.threshold.len(), THRESHOLD_GRID_LEN);
        assert_eq!(data.threshold[0], (0.0, 0.0));
        assert_eq!(data.threshold.last().unwrap().0, 1.0);

        let all_one = series_of(&vec![1.0; 20]);
        let data = build_ppplot(&all_one, &ConsistencyConfig::default()).unwrap();
        assert_eq!(data.points, vec![(1.0, 1.0)]);
    }

    #[test]
    fn ppplot_tracks_uniform_sample() {
        // Glivenko-Cantelli-style sanity: a dense uniform sample's ECDF hugs
        // the diagonal.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let ps: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let s = series_of(&ps);
        let max_gap = (0..=100)
            .map(|i| {
                let alpha = f64::from(i) / 100.0;
                (s.ecdf(alpha) - alpha).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(max_gap < 0.03, "max |ecdf - alpha| = {max_gap}");
    }

    #[test]
    fn point_above_threshold_detected() {
        // 30% of 160 p-values at or below 0.05 sits far above the threshold
        // at the 0.2 cap (0.3 > 0.2519).
        let mut ps = vec![0.05; 48];
        ps.extend(vec![0.9; 112]);
        let s = series_of(&ps);
        assert!(s.ecdf(0.05) > threshold_line(0.05, 160, 1.64).unwrap());
        let verdict = classify_experiment(&s, &ConsistencyConfig::default()).unwrap();
        assert_eq!(verdict.decision, ExperimentDecision::Inconsistent);
        assert_eq!(verdict.crossing_alpha, Some(0.2));
        // Everything strictly below the crossing cut-off is flagged.
        assert_eq!(verdict.flagged.len(), 48);
    }

    #[test]
    fn all_ones_is_consistent() {
        let s = series_of(&vec![1.0; 160]);
        let verdict = classify_experiment(&s, &ConsistencyConfig::default()).unwrap();
        assert_eq!(verdict.decision, ExperimentDecision::Consistent);
        assert_eq!(verdict.crossing_alpha, None);
        assert!(verdict.flagged.is_empty());
        assert!(verdict.experiment_p_value > 0.05);
    }

    #[test]
    fn uniformish_series_is_consistent_with_high_experiment_pvalue() {
        // Sub-uniform p-values typical of a clean experiment.
        let ps: Vec<f64> = (0..160).map(|i| 0.2 + 0.8 * f64::from(i) / 160.0).collect();
        let s = series_of(&ps);
        let verdict = classify_experiment(&s, &ConsistencyConfig::default()).unwrap();
        assert_eq!(verdict.decision, ExperimentDecision::Consistent);
        assert!(verdict.experiment_p_value > 0.05);
    }

    #[test]
    fn flagging_covers_everything_below_the_cap() {
        // 50 of 160 p-values at or below 0.2: ecdf(0.2) = 0.3125 > 0.2519.
        let mut ps = vec![0.01; 20];
        ps.extend(vec![0.15; 30]);
        ps.extend(vec![0.5; 110]);
        let s = series_of(&ps);
        let verdict = classify_experiment(&s, &ConsistencyConfig::default()).unwrap();
        assert_eq!(verdict.decision, ExperimentDecision::Inconsistent);
        assert_eq!(verdict.crossing_alpha, Some(0.2));
        assert_eq!(verdict.flagged.len(), 50);
        // Ascending order by p-value.
        assert!(verdict.flagged.len() >= 2);
        let first = &verdict.flagged[0];
        assert!(s.entries().iter().any(|(id, p)| id == first && *p == 0.01));

        // Mass confined above the cap cannot flag the experiment.
        let mut ps = vec![0.35; 100];
        ps.extend(vec![0.9; 60]);
        let s = series_of(&ps);
        let verdict = classify_experiment(&s, &ConsistencyConfig::default()).unwrap();
        assert_eq!(verdict.decision, ExperimentDecision::Consistent);
    }

    #[test]
    fn few_extreme_pvalues_do_not_condemn_the_experiment() {
        // A couple of near-zero p-values among 160 clean ones is expected
        // noise; the decision looks at the proportion at the cap.
        let mut ps = vec![0.0, 0.001];
        ps.extend(vec![0.6; 158]);
        let s = series_of(&ps);
        let verdict = classify_experiment(&s, &ConsistencyConfig::default()).unwrap();
        assert_eq!(verdict.decision, ExperimentDecision::Consistent);
        assert_eq!(verdict.crossing_alpha, None);
        assert!(verdict.flagged.is_empty());
    }

    #[test]
    fn exceedance_below_the_cap_alone_stays_consistent() {
        // Points may cross the line at small alpha (visible on the plot)
        // while the proportion at the cap stays unremarkable.
        let mut ps = vec![0.01; 30];
        ps.extend(vec![0.9; 130]);
        let s = series_of(&ps);
        assert!(s.ecdf(0.01) > threshold_line(0.01, 160, 1.64).unwrap());
        assert!(s.ecdf(0.2) <= threshold_line(0.2, 160, 1.64).unwrap());
        let verdict = classify_experiment(&s, &ConsistencyConfig::default()).unwrap();
        assert_eq!(verdict.decision, ExperimentDecision::Consistent);
    }

    #[test]
    fn lowering_a_pvalue_never_flips_to_consistent() {
        let mut ps = vec![0.05; 48];
        ps.extend(vec![0.9; 112]);
        let base = classify_experiment(&series_of(&ps), &ConsistencyConfig::default()).unwrap();
        assert_eq!(base.decision, ExperimentDecision::Inconsistent);
        for idx in [0usize, 50, 159] {
            let mut lowered = ps.clone();
            lowered[idx] = (lowered[idx] - 0.04).max(0.0);
            let verdict =
                classify_experiment(&series_of(&lowered), &ConsistencyConfig::default()).unwrap();
            assert_eq!(verdict.decision, ExperimentDecision::Inconsistent);
        }
    }

    #[test]
    fn experiment_test_examples() {
        // ahat exactly alpha -> z = 0 -> one-sided p = 0.5.
        let mut ps = vec![0.1; 32];
        ps.extend(vec![0.9; 128]);
        let s = series_of(&ps);
        assert_abs_diff_eq!(
            experiment_test(&s, 0.2, TestVariant::NormalApprox).unwrap(),
            0.5,
            epsilon = 1e-12
        );

        // 50 of 160 below 0.2.
        let mut ps = vec![0.1; 50];
        ps.extend(vec![0.9; 110]);
        let s = series_of(&ps);
        let p = experiment_test(&s, 0.2, TestVariant::NormalApprox).unwrap();
        assert_abs_diff_eq!(p, 1.9e-4, epsilon = 2e-5);

        assert!(experiment_test(&s, 0.0, TestVariant::NormalApprox).is_err());
        assert!(experiment_test(&s, 1.0, TestVariant::NormalApprox).is_err());
    }

    #[test]
    fn normal_and_binomial_variants_agree() {
        // In the decision-relevant tail the two variants agree within 0.01
        // already at n = 160 ...
        for below in 0..=160usize {
            let mut ps = vec![0.15; below];
            ps.extend(vec![0.8; 160 - below]);
            let s = series_of(&ps);
            let normal = experiment_test(&s, 0.2, TestVariant::NormalApprox).unwrap();
            let exact = experiment_test(&s, 0.2, TestVariant::ExactBinomial).unwrap();
            if normal <= 0.025 {
                assert!(
                    (normal - exact).abs() < 0.01,
                    "below={below}: normal={normal} exact={exact}"
                );
            }
        }
        // ... and everywhere once n is large.
        let n = 3000usize;
        for below in (0..=n).step_by(7) {
            let mut ps = vec![0.15; below];
            ps.extend(vec![0.8; n - below]);
            let s = series_of(&ps);
            let normal = experiment_test(&s, 0.2, TestVariant::NormalApprox).unwrap();
            let exact = experiment_test(&s, 0.2, TestVariant::ExactBinomial).unwrap();
            assert!(
                (normal - exact).abs() < 0.01,
                "n={n} below={below}: normal={normal} exact={exact}"
            );
        }
    }

    #[test]
    fn flagged_set_is_stable_under_reordering() {
        let mut ps = vec![0.01; 10];
        ps.extend(vec![0.18; 45]);
        ps.extend(vec![0.7; 105]);
        let forward = series_of(&ps);
        let mut entries = forward.entries().to_vec();
        entries.reverse();
        let reversed = PValueSeries::new(entries).unwrap();
        let config = ConsistencyConfig::default();
        let a = classify_experiment(&forward, &config).unwrap();
        let b = classify_experiment(&reversed, &config).unwrap();
        assert_eq!(a.flagged, b.flagged);
        assert_eq!(a.crossing_alpha, b.crossing_alpha);
    }

    #[test]
    fn csv_rows_cover_threshold_grid() {
        let s = series_of(&[0.1, 0.4, 0.4, 0.8]);
        let data = build_ppplot(&s, &ConsistencyConfig::default()).unwrap();
        let rows = data.csv_rows();
        assert_eq!(rows.len(), THRESHOLD_GRID_LEN);
        assert_eq!(rows[0], (0.0, 0.0, 0.0));
        let last = rows.last().unwrap();
        assert_eq!((last.0, last.1), (1.0, 1.0));
    }
}
