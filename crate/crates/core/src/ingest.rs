//! Tidy-CSV ingestion of subjective scores.
//!
//! Input files are UTF-8, comma-separated, one score per row, with a header
//! row. The default column names follow the tidy convention used by the
//! published multi-experiment score collections (`experiment`,
//! `stimulus_id`, `subject_id`, `score`); a [`ColumnMap`] remaps them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::gsd::ScoreCounts;

/// Per-stimulus sample sizes outside this range get a warning; published
/// experiments of this kind collect between 9 and 33 scores per stimulus.
pub const TYPICAL_SCORES_PER_STIMULUS: std::ops::RangeInclusive<u32> = 9..=33;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("no score rows found")]
    EmptyFile,
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("invalid column mapping '{0}': expected comma-separated key=value pairs with keys experiment, stimulus, subject, score")]
    BadColumnSpec(String),
}

/// Maps logical fields to CSV header names.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ColumnMap {
    pub experiment: String,
    pub stimulus: String,
    /// `None` disables subject tracking (duplicate detection).
    pub subject: Option<String>,
    pub score: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            experiment: "experiment".to_string(),
            stimulus: "stimulus_id".to_string(),
            subject: Some("subject_id".to_string()),
            score: "score".to_string(),
        }
    }
}

impl ColumnMap {
    /// Parses a remap spec like `experiment=exp,score=opinion`. Unmentioned
    /// fields keep their defaults; `subject=` (empty) disables the subject
    /// column.
    pub fn parse_spec(spec: &str) -> Result<Self, IngestError> {
        let mut map = Self::default();
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| IngestError::BadColumnSpec(spec.to_string()))?;
            let value = value.trim();
            match key.trim() {
                "experiment" => map.experiment = value.to_string(),
                "stimulus" => map.stimulus = value.to_string(),
                "score" => map.score = value.to_string(),
                "subject" => {
                    map.subject = if value.is_empty() {
                        None
                    } else {
                        Some(value.to_string())
                    }
                }
                _ => return Err(IngestError::BadColumnSpec(spec.to_string())),
            }
        }
        Ok(map)
    }
}

/// One validated score row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreRecord {
    pub experiment_id: String,
    pub stimulus_id: String,
    pub subject_id: Option<String>,
    pub score: u8,
}

/// A malformed row, kept with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Outcome of a lenient parse: valid records plus the collected row errors.
#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<ScoreRecord>,
    pub errors: Vec<RowError>,
}

/// Parses a tidy score CSV file. In strict mode the first malformed row
/// aborts the parse; otherwise malformed rows are collected into the
/// error report and skipped.
pub fn parse_csv(path: &Path, map: &ColumnMap, strict: bool) -> Result<ParseOutcome, IngestError> {
    parse_csv_reader(File::open(path)?, map, strict)
}

/// As [`parse_csv`], over any reader.
pub fn parse_csv_reader<R: Read>(
    reader: R,
    map: &ColumnMap,
    strict: bool,
) -> Result<ParseOutcome, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let experiment_col = find(&map.experiment)
        .ok_or_else(|| IngestError::MissingColumn(map.experiment.clone()))?;
    let stimulus_col =
        find(&map.stimulus).ok_or_else(|| IngestError::MissingColumn(map.stimulus.clone()))?;
    let score_col = find(&map.score).ok_or_else(|| IngestError::MissingColumn(map.score.clone()))?;
    // The subject column is informational; a file without it is accepted.
    let subject_col = map.subject.as_deref().and_then(find);

    let mut outcome = ParseOutcome::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let mut fail = |message: String| -> Result<(), IngestError> {
            if strict {
                Err(IngestError::Row { line, message })
            } else {
                outcome.errors.push(RowError { line, message });
                Ok(())
            }
        };

        let field = |col: usize| row.get(col).unwrap_or("").trim();
        let experiment_id = field(experiment_col);
        let stimulus_id = field(stimulus_col);
        let raw_score = field(score_col);
        if experiment_id.is_empty() || stimulus_id.is_empty() {
            fail("empty experiment or stimulus identifier".to_string())?;
            continue;
        }
        let score = match raw_score.parse::<i64>() {
            Ok(s) if (1..=5).contains(&s) => s as u8,
            Ok(s) => {
                fail(format!("score {s} outside 1..=5"))?;
                continue;
            }
            Err(_) => {
                fail(format!("non-integer score '{raw_score}'"))?;
                continue;
            }
        };
        outcome.records.push(ScoreRecord {
            experiment_id: experiment_id.to_string(),
            stimulus_id: stimulus_id.to_string(),
            subject_id: subject_col.map(|c| field(c).to_string()).filter(|s| !s.is_empty()),
            score,
        });
    }

    if outcome.records.is_empty() && outcome.errors.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(outcome)
}

/// Aggregated counts for one experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentData {
    pub experiment_id: String,
    pub stimuli: BTreeMap<String, ScoreCounts>,
    pub total_scores: u64,
}

impl ExperimentData {
    pub fn new(experiment_id: impl Into<String>) -> Self {
        Self {
            experiment_id: experiment_id.into(),
            stimuli: BTreeMap::new(),
            total_scores: 0,
        }
    }

    pub fn stimulus_count(&self) -> usize {
        self.stimuli.len()
    }

    /// Stimuli as an ordered (id, counts) list, ready for batch testing.
    pub fn samples(&self) -> Vec<(String, ScoreCounts)> {
        self.stimuli
            .iter()
            .map(|(id, counts)| (id.clone(), *counts))
            .collect()
    }
}

/// Non-fatal observations made while aggregating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AggregateWarning {
    SampleSizeOutsideTypicalRange {
        experiment_id: String,
        stimulus_id: String,
        n: u32,
    },
    DuplicateSubjectScore {
        experiment_id: String,
        stimulus_id: String,
        subject_id: String,
    },
}

impl fmt::Display for AggregateWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SampleSizeOutsideTypicalRange {
                experiment_id,
                stimulus_id,
                n,
            } => write!(
                f,
                "{experiment_id}/{stimulus_id}: {n} scores, outside the typical range {}..={}",
                TYPICAL_SCORES_PER_STIMULUS.start(),
                TYPICAL_SCORES_PER_STIMULUS.end()
            ),
            Self::DuplicateSubjectScore {
                experiment_id,
                stimulus_id,
                subject_id,
            } => write!(
                f,
                "{experiment_id}/{stimulus_id}: duplicate score from subject {subject_id} (both counted)"
            ),
        }
    }
}

/// Groups records into per-experiment, per-stimulus score counts.
///
/// Order-independent: any permutation of `records` yields the same maps.
/// Duplicate (subject, stimulus) rows are counted and reported as warnings;
/// the method consumes counts only, so subject identity is never used beyond
/// duplicate detection.
pub fn aggregate(
    records: &[ScoreRecord],
) -> (BTreeMap<String, ExperimentData>, Vec<AggregateWarning>) {
    let mut experiments: BTreeMap<String, ExperimentData> = BTreeMap::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    let mut duplicates: Vec<(String, String, String)> = Vec::new();

    for record in records {
        let experiment = experiments
            .entry(record.experiment_id.clone())
            .or_insert_with(|| ExperimentData::new(record.experiment_id.clone()));
        experiment
            .stimuli
            .entry(record.stimulus_id.clone())
            .or_insert_with(ScoreCounts::zero)
            .add_score(record.score);
        experiment.total_scores += 1;

        if let Some(subject) = &record.subject_id {
            let key = (
                record.experiment_id.clone(),
                record.stimulus_id.clone(),
                subject.clone(),
            );
            if !seen.insert(key.clone()) {
                duplicates.push(key);
            }
        }
    }

    let mut warnings = Vec::new();
    duplicates.sort();
    for (experiment_id, stimulus_id, subject_id) in duplicates {
        warnings.push(AggregateWarning::DuplicateSubjectScore {
            experiment_id,
            stimulus_id,
            subject_id,
        });
    }
    for experiment in experiments.values() {
        for (stimulus_id, counts) in &experiment.stimuli {
            let n = counts.total();
            if !TYPICAL_SCORES_PER_STIMULUS.contains(&n) {
                warnings.push(AggregateWarning::SampleSizeOutsideTypicalRange {
                    experiment_id: experiment.experiment_id.clone(),
                    stimulus_id: stimulus_id.clone(),
                    n,
                });
            }
        }
    }
    (experiments, warnings)
}

/// Writes per-stimulus counts as CSV:
/// `experiment_id,stimulus_id,n,k1,k2,k3,k4,k5`.
pub fn write_counts_csv<'a, W: std::io::Write>(
    experiments: impl IntoIterator<Item = &'a ExperimentData>,
    writer: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["experiment_id", "stimulus_id", "n", "k1", "k2", "k3", "k4", "k5"])?;
    for experiment in experiments {
        for (stimulus_id, counts) in &experiment.stimuli {
            let k = counts.counts();
            w.write_record([
                experiment.experiment_id.clone(),
                stimulus_id.clone(),
                counts.total().to_string(),
                k[0].to_string(),
                k[1].to_string(),
                k[2].to_string(),
                k[3].to_string(),
                k[4].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes records back out in tidy format with the given column names.
pub fn write_records_csv<W: std::io::Write>(
    records: &[ScoreRecord],
    map: &ColumnMap,
    writer: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![map.experiment.clone(), map.stimulus.clone()];
    if let Some(subject) = &map.subject {
        header.push(subject.clone());
    }
    header.push(map.score.clone());
    w.write_record(&header)?;
    for record in records {
        let mut row = vec![record.experiment_id.clone(), record.stimulus_id.clone()];
        if map.subject.is_some() {
            row.push(record.subject_id.clone().unwrap_or_default());
        }
        row.push(record.score.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
