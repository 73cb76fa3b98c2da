//! Advisory class tags for flagged score distributions.
//!
//! These heuristics name the shape irregularities practitioners look for
//! when inspecting a flagged stimulus: a bimodal split of opinions, isolated
//! answers far from the crowd, or an abrupt cut-off next to a heavy
//! category. Tags never influence the experiment verdict; they only guide
//! the follow-up inspection.

use std::fmt;

use crate::gsd::{ScoreCounts, CATEGORIES};

/// Fraction of `n` a secondary mode must exceed to count as a real group,
/// and the most that "random answers" may amount to.
const MINOR_MASS_FRACTION: f64 = 0.10;
/// Fraction of `n` the category next to a cut-off must hold.
const CUTOFF_NEIGHBOR_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    /// Two well-separated opinion groups: two strict local maxima, each
    /// holding more than 10% of the scores, with a strictly lower category
    /// between them.
    Bimodal,
    /// A stray minority: at least one score two or more categories away
    /// from the modal category, with all such scores totalling at most 10%
    /// of the sample.
    RandomAnswers,
    /// An abrupt stop: a zero-count category adjacent to a category holding
    /// at least 25% of the scores, with zeros running from there to the edge
    /// of the scale, in a sample spanning more than two categories.
    SuddenCutoff,
}

impl fmt::Display for ClassTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassTag::Bimodal => "bimodal",
            ClassTag::RandomAnswers => "random_answers",
            ClassTag::SuddenCutoff => "sudden_cutoff",
        })
    }
}

/// Maximal runs of equal, positive counts strictly greater than both
/// neighbors, as (start, end, height).
fn strict_plateau_maxima(k: &[u32; CATEGORIES]) -> Vec<(usize, usize, u32)> {
    let mut maxima = Vec::new();
    let mut start = 0;
    while start < CATEGORIES {
        let mut end = start;
        while end + 1 < CATEGORIES && k[end + 1] == k[start] {
            end += 1;
        }
        let height = k[start];
        let left_lower = start == 0 || k[start - 1] < height;
        let right_lower = end == CATEGORIES - 1 || k[end + 1] < height;
        if height > 0 && left_lower && right_lower {
            maxima.push((start, end, height));
        }
        start = end + 1;
    }
    maxima
}

fn is_bimodal(counts: &ScoreCounts) -> bool {
    let k = counts.counts();
    let minor_floor = MINOR_MASS_FRACTION * f64::from(counts.total());
    let maxima: Vec<(usize, usize, u32)> = strict_plateau_maxima(k)
        .into_iter()
        .filter(|&(_, _, h)| f64::from(h) > minor_floor)
        .collect();
    for (i, &(_, end_a, h_a)) in maxima.iter().enumerate() {
        for &(start_b, _, h_b) in &maxima[i + 1..] {
            let valley = (end_a + 1..start_b).map(|j| k[j]).min();
            if let Some(valley) = valley {
                if valley < h_a.min(h_b) {
                    return true;
                }
            }
        }
    }
    false
}

fn is_random_answers(counts: &ScoreCounts) -> bool {
    let k = counts.counts();
    let modal = (0..CATEGORIES)
        .max_by_key(|&j| (k[j], std::cmp::Reverse(j)))
        .expect("five categories");
    let far: u32 = (0..CATEGORIES)
        .filter(|&j| j.abs_diff(modal) >= 2)
        .map(|j| k[j])
        .sum();
    far >= 1 && f64::from(far) <= MINOR_MASS_FRACTION * f64::from(counts.total())
}

fn is_sudden_cutoff(counts: &ScoreCounts) -> bool {
    let k = counts.counts();
    let support: Vec<usize> = (0..CATEGORIES).filter(|&j| k[j] > 0).collect();
    let span = match (support.first(), support.last()) {
        (Some(&first), Some(&last)) => last - first + 1,
        _ => return false,
    };
    if span < 3 {
        return false;
    }
    let heavy_floor = CUTOFF_NEIGHBOR_FRACTION * f64::from(counts.total());
    for c in 0..CATEGORIES {
        if k[c] != 0 {
            continue;
        }
        // Heavy neighbor below: zeros must run from c up to the top edge.
        if c > 0 && f64::from(k[c - 1]) >= heavy_floor && (c..CATEGORIES).all(|j| k[j] == 0) {
            return true;
        }
        // Heavy neighbor above: zeros must run from c down to the bottom edge.
        if c + 1 < CATEGORIES && f64::from(k[c + 1]) >= heavy_floor && (0..=c).all(|j| k[j] == 0) {
            return true;
        }
    }
    false
}

/// Advisory tags for one score histogram, in a fixed order.
pub fn tag_counts(counts: &ScoreCounts) -> Vec<ClassTag> {
    let mut tags = Vec::new();
    if is_bimodal(counts) {
        tags.push(ClassTag::Bimodal);
    }
    if is_random_answers(counts) {
        tags.push(ClassTag::RandomAnswers);
    }
    if is_sudden_cutoff(counts) {
        tags.push(ClassTag::SuddenCutoff);
    }
    tags
}

/// Tags every flagged stimulus, preserving input order.
pub fn tag_flagged_stimuli(
    flagged: &[(String, ScoreCounts)],
) -> Vec<(String, Vec<ClassTag>)> {
    flagged
        .iter()
        .map(|(id, counts)| (id.clone(), tag_counts(counts)))
        .collect()
}
