//! Consistency checking for subjective quality experiments.
//!
//! The pipeline treats the scores assigned to one stimulus as a sample from
//! the Generalized Score Distribution (GSD), fits the GSD parameters by grid
//! maximum likelihood, measures goodness-of-fit with a parametric-bootstrap
//! G-test, and judges the whole experiment by comparing the ECDF of the
//! per-stimulus p-values against a proportion-test threshold on a p-value
//! P-P plot. Stimuli below the crossing point are flagged and tagged with
//! advisory shape diagnostics.
//!
//! ```
//! use gsdcheck_core::{
//!     classify_experiment, batch_gof, ConsistencyConfig, FitCache, GofConfig,
//!     GsdParams, ParamGrid, PValueSeries,
//! };
//!
//! let grid = ParamGrid::build();
//! let cache = FitCache::new();
//! let config = GofConfig::new(200, 7).unwrap();
//! let samples: Vec<_> = (0..12)
//!     .map(|i| {
//!         let params = GsdParams::new(2.0 + 0.2 * f64::from(i), 0.85).unwrap();
//!         (format!("stim_{i:02}"), gsdcheck_core::sample(params, 24, u64::from(i)))
//!     })
//!     .collect();
//! let results: Vec<_> = batch_gof(&samples, &grid, &config, &cache)
//!     .into_iter()
//!     .collect::<Result<_, _>>()
//!     .unwrap();
//! let series = PValueSeries::from_results(&results).unwrap();
//! let verdict = classify_experiment(&series, &ConsistencyConfig::default()).unwrap();
//! println!("{:?}", verdict.decision);
//! ```

pub mod consistency;
pub mod diagnostics;
pub mod fit;
pub mod gof;
pub mod grid;
pub mod gsd;
pub mod ingest;
pub mod plot;
pub mod sim;

pub use consistency::{
    build_ppplot, classify_experiment, experiment_test, threshold_line, z_quantile,
    ConsistencyConfig, ConsistencyError, ConsistencyVerdict, ExperimentDecision, PPPlotData,
    PValueSeries, TestVariant, ZQuantile,
};
pub use diagnostics::{tag_counts, tag_flagged_stimuli, ClassTag};
pub use fit::{fit_mle, fit_mle_with, log_likelihood, FitCache, FitResult, FitStrategy};
pub use gof::{
    batch_gof, bootstrap_pvalue, derive_stimulus_seed, g_statistic, write_results_csv, GofConfig,
    GofError, PValueConvention, StimulusResult,
};
pub use grid::{GridError, ParamGrid, GRID_FORMAT_VERSION, PSI_GRID_LEN, RHO_GRID_LEN};
pub use gsd::{
    gsd_moments, gsd_pmf, sample, sample_with_rng, variance_bounds, GsdError, GsdParams, Pmf5,
    ScoreCounts, CATEGORIES,
};
pub use ingest::{
    aggregate, parse_csv, parse_csv_reader, write_counts_csv, write_records_csv, AggregateWarning,
    ColumnMap, ExperimentData, IngestError, ParseOutcome, RowError, ScoreRecord,
};
pub use plot::{render_plot, render_svg_string, write_plot_csv, PlotFormat};
pub use sim::{
    contaminate, generate_experiment, write_labels_csv, ContaminationClass, ContaminationKnobs,
    SimConfig, SimError, StimulusTruth,
};
