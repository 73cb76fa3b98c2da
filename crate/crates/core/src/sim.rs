//! Synthetic experiment generation for calibration and power studies.
//!
//! A pure experiment draws every stimulus from the GSD with per-stimulus
//! parameters sampled uniformly from configured ranges. Contaminated
//! stimuli are replaced by parameterized reconstructions of the atypical
//! score-distribution classes, and every stimulus carries a ground-truth
//! label so downstream detection can be scored against it.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

use crate::gof::derive_stimulus_seed;
use crate::gsd::{gsd_pmf, sample_with_rng, GsdParams, Pmf5, ScoreCounts, CATEGORIES};
use crate::ingest::ExperimentData;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),
}

/// Atypical score-distribution classes the generators can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationClass {
    Bimodal,
    RandomAnswers,
    SuddenCutoff,
    HateOrLove,
}

impl fmt::Display for ContaminationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bimodal => "bimodal",
            Self::RandomAnswers => "random_answers",
            Self::SuddenCutoff => "sudden_cutoff",
            Self::HateOrLove => "hate_or_love",
        })
    }
}

impl ContaminationClass {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "bimodal" => Some(Self::Bimodal),
            "random_answers" => Some(Self::RandomAnswers),
            "sudden_cutoff" => Some(Self::SuddenCutoff),
            "hate_or_love" => Some(Self::HateOrLove),
            _ => None,
        }
    }
}

/// Ground truth recorded per generated stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StimulusTruth {
    Typical,
    Atypical(ContaminationClass),
}

impl fmt::Display for StimulusTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Typical => f.write_str("typical"),
            Self::Atypical(class) => class.fmt(f),
        }
    }
}

/// Constants behind the contamination generators. All of them are knobs;
/// the defaults make n = 24 samples resemble the canonical atypical count
/// vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationKnobs {
    /// Bimodal: the two component means sit at psi -/+ this offset.
    pub bimodal_offset: f64,
    pub bimodal_rho: f64,
    /// Random answers: probability that a draw is replaced by a uniform
    /// category.
    pub random_replace_prob: f64,
    pub random_rho: f64,
    pub cutoff_rho: f64,
    /// Hate-or-love: fraction of draws replaced by the 1-or-5 coin flip.
    pub hate_or_love_rate: f64,
    pub hate_or_love_rho: f64,
}

impl Default for ContaminationKnobs {
    fn default() -> Self {
        Self {
            bimodal_offset: 1.0,
            bimodal_rho: 0.9,
            random_replace_prob: 0.08,
            random_rho: 0.9,
            cutoff_rho: 0.8,
            hate_or_love_rate: 0.6,
            hate_or_love_rho: 0.7,
        }
    }
}

/// Synthetic experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub experiment_id: String,
    pub n_stimuli: usize,
    pub n_scores: u32,
    pub psi_range: (f64, f64),
    pub rho_range: (f64, f64),
    /// (class, fraction of stimuli) pairs; fractions must sum to at most 1.
    pub contamination: Vec<(ContaminationClass, f64)>,
    pub knobs: ContaminationKnobs,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            experiment_id: "sim".to_string(),
            n_stimuli: 160,
            n_scores: 24,
            psi_range: (1.2, 4.8),
            rho_range: (0.5, 0.95),
            contamination: Vec::new(),
            knobs: ContaminationKnobs::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_stimuli == 0 || self.n_scores == 0 {
            return Err(SimError::InvalidConfig(
                "need at least one stimulus and one score".to_string(),
            ));
        }
        let (psi_lo, psi_hi) = self.psi_range;
        if !(1.0 < psi_lo && psi_lo <= psi_hi && psi_hi < 5.0) {
            return Err(SimError::InvalidConfig(format!(
                "psi range ({psi_lo}, {psi_hi}) must lie inside (1, 5)"
            )));
        }
        let (rho_lo, rho_hi) = self.rho_range;
        if !(0.0 < rho_lo && rho_lo <= rho_hi && rho_hi <= 1.0) {
            return Err(SimError::InvalidConfig(format!(
                "rho range ({rho_lo}, {rho_hi}) must lie inside (0, 1]"
            )));
        }
        let mut total_rate = 0.0;
        for (class, rate) in &self.contamination {
            if !(0.0..=1.0).contains(rate) {
                return Err(SimError::InvalidConfig(format!(
                    "contamination rate {rate} for {class} outside [0, 1]"
                )));
            }
            total_rate += rate;
        }
        if total_rate > 1.0 + 1e-12 {
            return Err(SimError::InvalidConfig(format!(
                "contamination rates sum to {total_rate} > 1"
            )));
        }
        Ok(())
    }
}

fn clamp_psi(psi: f64) -> f64 {
    psi.clamp(1.01, 4.99)
}

fn params(psi: f64, rho: f64) -> GsdParams {
    GsdParams::new(clamp_psi(psi), rho).expect("parameters clamped into domain")
}

/// Draws an atypical sample of the given class. Deterministic per seed
/// (ChaCha8 stream 0, the data-generation stream).
pub fn contaminate(
    class: ContaminationClass,
    psi: f64,
    n: u32,
    seed: u64,
    knobs: &ContaminationKnobs,
) -> ScoreCounts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    contaminate_with_rng(class, psi, n, &mut rng, knobs)
}

fn contaminate_with_rng<R: Rng + ?Sized>(
    class: ContaminationClass,
    psi: f64,
    n: u32,
    rng: &mut R,
    knobs: &ContaminationKnobs,
) -> ScoreCounts {
    match class {
        ContaminationClass::Bimodal => {
            let low = gsd_pmf(params(psi - knobs.bimodal_offset, knobs.bimodal_rho));
            let high = gsd_pmf(params(psi + knobs.bimodal_offset, knobs.bimodal_rho));
            let mut counts = ScoreCounts::zero();
            for _ in 0..n {
                let component = if rng.random::<f64>() < 0.5 { &low } else { &high };
                counts.add_score(component.draw(rng));
            }
            counts
        }
        ContaminationClass::RandomAnswers => {
            let base = gsd_pmf(params(psi, knobs.random_rho));
            let mut counts = ScoreCounts::zero();
            for _ in 0..n {
                let drawn = base.draw(rng);
                let score = if rng.random::<f64>() < knobs.random_replace_prob {
                    rng.random_range(1..=CATEGORIES as u8)
                } else {
                    drawn
                };
                counts.add_score(score);
            }
            counts
        }
        ContaminationClass::SuddenCutoff => {
            let pmf = cutoff_pmf(psi, knobs.cutoff_rho);
            sample_with_rng(&pmf, n, rng)
        }
        ContaminationClass::HateOrLove => {
            let base = gsd_pmf(params(psi, knobs.hate_or_love_rho));
            let mut counts = ScoreCounts::zero();
            for _ in 0..n {
                let score = if rng.random::<f64>() < knobs.hate_or_love_rate {
                    if rng.random::<f64>() < 0.5 {
                        1
                    } else {
                        CATEGORIES as u8
                    }
                } else {
                    base.draw(rng)
                };
                counts.add_score(score);
            }
            counts
        }
    }
}

/// GSD PMF with one interior category adjacent to the mode zeroed and its
/// mass moved onto the mode. The ejected category is the interior neighbor
/// (2..=4) with the smaller probability, i.e. the tail side.
pub fn cutoff_pmf(psi: f64, rho: f64) -> Pmf5 {
    let base = gsd_pmf(params(psi, rho));
    let mode = usize::from(base.mode()) - 1;
    let candidates = [mode.checked_sub(1), (mode + 1 < CATEGORIES).then_some(mode + 1)];
    let target = candidates
        .into_iter()
        .flatten()
        .filter(|&j| (1..CATEGORIES - 1).contains(&j))
        .min_by(|&a, &b| {
            base.probabilities()[a]
                .partial_cmp(&base.probabilities()[b])
                .unwrap()
                .then(b.cmp(&a))
        })
        .expect("every mode has an interior neighbor");
    let mut p = *base.probabilities();
    p[mode] += p[target];
    p[target] = 0.0;
    Pmf5::from_probabilities(p)
}

/// Generated experiment plus per-stimulus ground truth, aligned by id.
pub type GeneratedExperiment = (ExperimentData, Vec<(String, StimulusTruth)>);

/// Generates a synthetic experiment. Deterministic per seed; stimulus data
/// depends only on (seed, stimulus id), never on generation order.
pub fn generate_experiment(config: &SimConfig) -> Result<GeneratedExperiment, SimError> {
    config.validate()?;
    let ids: Vec<String> = (1..=config.n_stimuli)
        .map(|i| format!("sim_{i:05}"))
        .collect();

    // Contamination assignment: per-class counts are rounded from the rates
    // and dealt onto a seeded shuffle of the stimulus list.
    let mut truth = vec![StimulusTruth::Typical; config.n_stimuli];
    let mut order: Vec<usize> = (0..config.n_stimuli).collect();
    let mut assign_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut assign_rng);
    let mut cursor = 0usize;
    for (class, rate) in &config.contamination {
        let quota = ((rate * config.n_stimuli as f64).round() as usize)
            .min(config.n_stimuli - cursor);
        for &slot in &order[cursor..cursor + quota] {
            truth[slot] = StimulusTruth::Atypical(*class);
        }
        cursor += quota;
    }

    let mut experiment = ExperimentData::new(config.experiment_id.clone());
    let mut labels = Vec::with_capacity(config.n_stimuli);
    for (i, id) in ids.iter().enumerate() {
        let stimulus_seed = derive_stimulus_seed(config.seed, id);
        let mut rng = ChaCha8Rng::seed_from_u64(stimulus_seed);
        rng.set_stream(0);
        let psi = rng.random_range(config.psi_range.0..=config.psi_range.1);
        let rho = rng.random_range(config.rho_range.0..=config.rho_range.1);
        let counts = match truth[i] {
            StimulusTruth::Typical => {
                let pmf = gsd_pmf(params(psi, rho));
                sample_with_rng(&pmf, config.n_scores, &mut rng)
            }
            StimulusTruth::Atypical(class) => {
                contaminate_with_rng(class, psi, config.n_scores, &mut rng, &config.knobs)
            }
        };
        experiment.stimuli.insert(id.clone(), counts);
        experiment.total_scores += u64::from(config.n_scores);
        labels.push((id.clone(), truth[i]));
    }
    Ok((experiment, labels))
}

/// Writes the ground-truth labels as CSV: `stimulus_id,truth_class`.
pub fn write_labels_csv<W: std::io::Write>(
    labels: &[(String, StimulusTruth)],
    writer: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["stimulus_id", "truth_class"])?;
    for (id, truth) in labels {
        w.write_record([id.clone(), truth.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
