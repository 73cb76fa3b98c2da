//! Command implementations: grid management, CSV analysis and simulation.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use gsdcheck_core::{
    aggregate, batch_gof, build_ppplot, classify_experiment, parse_csv, render_plot,
    tag_counts, write_counts_csv, write_labels_csv, write_plot_csv, write_records_csv,
    write_results_csv, ColumnMap, ConsistencyConfig, ConsistencyVerdict, ContaminationClass,
    ExperimentData, ExperimentDecision, FitCache, GofConfig, ParamGrid, PValueSeries, PlotFormat,
    ScoreRecord, SimConfig, StimulusResult, StimulusTruth,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::write_manifest;
use crate::{Cli, CliError, Command, GridAction};

/// Maximum row errors / warnings echoed to stderr before summarizing.
const STDERR_REPORT_LIMIT: usize = 20;

pub fn run(cli: Cli) -> Result<(), CliError> {
    validate_common(&cli)?;
    if cli.workers > 0 {
        // Ignore "already initialized": only possible in-process (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    match &cli.command {
        Command::Grid { action } => match action {
            GridAction::Build => cmd_grid_build(&cli),
            GridAction::Verify => cmd_grid_verify(&cli),
        },
        Command::Analyze { csv, strict } => cmd_analyze(&cli, csv, *strict),
        Command::Simulate { .. } => cmd_simulate(&cli),
    }
}

fn validate_common(cli: &Cli) -> Result<(), CliError> {
    if !(cli.beta > 0.0 && cli.beta < 1.0) {
        return Err(CliError::Usage(format!(
            "--beta must lie in (0, 1), got {}",
            cli.beta
        )));
    }
    if !(cli.alpha_cap > 0.0 && cli.alpha_cap <= 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha-cap must lie in (0, 1], got {}",
            cli.alpha_cap
        )));
    }
    if cli.bootstrap_iters < 100 {
        return Err(CliError::Usage(format!(
            "--bootstrap-iters must be at least 100, got {}",
            cli.bootstrap_iters
        )));
    }
    parse_formats(&cli.format)?;
    Ok(())
}

fn parse_formats(spec: &str) -> Result<Vec<PlotFormat>, CliError> {
    let mut formats = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        match part.trim() {
            "svg" => formats.push(PlotFormat::Svg),
            "csv" => formats.push(PlotFormat::Csv),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown plot format '{other}' (expected svg and/or csv)"
                )))
            }
        }
    }
    Ok(formats)
}

fn column_map(cli: &Cli) -> Result<ColumnMap, CliError> {
    match &cli.columns {
        Some(spec) => ColumnMap::parse_spec(spec).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(ColumnMap::default()),
    }
}

fn consistency_config(cli: &Cli) -> ConsistencyConfig {
    ConsistencyConfig {
        beta: cli.beta,
        alpha_cap: cli.alpha_cap,
        ..ConsistencyConfig::default()
    }
}

fn gof_config(cli: &Cli) -> GofConfig {
    GofConfig {
        bootstrap_iterations: cli.bootstrap_iters,
        seed: cli.seed,
        ..GofConfig::default()
    }
}

// ---------------------------------------------------------------- grid

fn cmd_grid_build(cli: &Cli) -> Result<(), CliError> {
    let grid = ParamGrid::build();
    if let Some(parent) = cli.grid_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Data(e.to_string()))?;
    }
    grid.save(&cli.grid_path)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", cli.grid_path.display())))?;
    println!(
        "grid written to {} (sha256 {})",
        cli.grid_path.display(),
        grid.checksum_hex()
    );
    Ok(())
}

fn cmd_grid_verify(cli: &Cli) -> Result<(), CliError> {
    let grid = ParamGrid::load(&cli.grid_path)
        .map_err(|e| CliError::Data(format!("loading {}: {e}", cli.grid_path.display())))?;
    // The checksum already covers every byte; re-derive 100 random cells to
    // also catch a stale file produced by a different implementation.
    let reference = ParamGrid::build();
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    for _ in 0..100 {
        let pi = rng.random_range(0..gsdcheck_core::PSI_GRID_LEN);
        let ri = rng.random_range(0..gsdcheck_core::RHO_GRID_LEN);
        let stored = grid.log_pmf(pi, ri);
        let derived = reference.log_pmf(pi, ri);
        for j in 0..gsdcheck_core::CATEGORIES {
            if stored[j].to_bits() != derived[j].to_bits() {
                return Err(CliError::Data(format!(
                    "cell ({pi}, {ri}) category {} differs from re-derived value",
                    j + 1
                )));
            }
        }
    }
    println!(
        "grid {} verified (sha256 {})",
        cli.grid_path.display(),
        grid.checksum_hex()
    );
    Ok(())
}

fn load_or_build_grid(cli: &Cli) -> Result<ParamGrid, CliError> {
    if cli.grid_path.exists() {
        ParamGrid::load(&cli.grid_path)
            .map_err(|e| CliError::Data(format!("loading {}: {e}", cli.grid_path.display())))
    } else {
        eprintln!(
            "note: grid cache {} not found, building in memory (use `gsdcheck grid build` to cache it)",
            cli.grid_path.display()
        );
        Ok(ParamGrid::build())
    }
}

// ---------------------------------------------------------------- analyze

fn cmd_analyze(cli: &Cli, csv_path: &Path, strict: bool) -> Result<(), CliError> {
    let map = column_map(cli)?;
    let outcome = parse_csv(csv_path, &map, strict)
        .map_err(|e| CliError::Data(format!("{}: {e}", csv_path.display())))?;
    for error in outcome.errors.iter().take(STDERR_REPORT_LIMIT) {
        eprintln!("warning: {}: {error}", csv_path.display());
    }
    if outcome.errors.len() > STDERR_REPORT_LIMIT {
        eprintln!(
            "warning: {} malformed rows in total",
            outcome.errors.len()
        );
    }
    if outcome.records.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no valid score rows",
            csv_path.display()
        )));
    }
    let (experiments, warnings) = aggregate(&outcome.records);
    for warning in warnings.iter().take(STDERR_REPORT_LIMIT) {
        eprintln!("warning: {warning}");
    }
    if warnings.len() > STDERR_REPORT_LIMIT {
        eprintln!("warning: {} aggregation warnings in total", warnings.len());
    }

    let grid = load_or_build_grid(cli)?;
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Data(e.to_string()))?;
    write_manifest(
        cli,
        "analyze",
        Some(&grid),
        serde_json::json!({
            "input": csv_path.display().to_string(),
            "strict": strict,
            "records": outcome.records.len(),
            "malformed_rows": outcome.errors.len(),
            "experiments": experiments.len(),
        }),
    )?;

    let cache = FitCache::new();
    for experiment in experiments.values() {
        analyze_experiment(cli, experiment, &grid, &cache, &mut DirNames::default())?;
    }
    Ok(())
}

/// Keeps sanitized per-experiment directory names unique.
#[derive(Default)]
struct DirNames {
    used: HashMap<String, usize>,
}

impl DirNames {
    fn dir_for(&mut self, out: &Path, experiment_id: &str) -> PathBuf {
        let mut name: String = experiment_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        if name.is_empty() {
            name.push('_');
        }
        let n = self.used.entry(name.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            name = format!("{name}-{n}");
        }
        out.join(name)
    }
}

fn analyze_experiment(
    cli: &Cli,
    experiment: &ExperimentData,
    grid: &ParamGrid,
    cache: &FitCache,
    dirs: &mut DirNames,
) -> Result<(), CliError> {
    let experiment_id = &experiment.experiment_id;
    let samples = experiment.samples();
    let outcomes = batch_gof(&samples, grid, &gof_config(cli), cache);

    let mut results: Vec<StimulusResult> = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(result) => results.push(result),
            Err(e) => eprintln!("warning: {experiment_id}: {e}"),
        }
    }
    if results.is_empty() {
        eprintln!("warning: {experiment_id}: no testable stimuli, skipped");
        return Ok(());
    }

    let series = PValueSeries::from_results(&results)
        .map_err(|e| CliError::Data(format!("{experiment_id}: {e}")))?;
    let config = consistency_config(cli);
    let verdict = classify_experiment(&series, &config)
        .map_err(|e| CliError::Data(format!("{experiment_id}: {e}")))?;
    let ppplot = build_ppplot(&series, &config)
        .map_err(|e| CliError::Data(format!("{experiment_id}: {e}")))?;

    let dir = dirs.dir_for(&cli.out, experiment_id);
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(e.to_string()))?;
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", dir.display()));

    let results_file = fs::File::create(dir.join("results.csv")).map_err(io_err)?;
    write_results_csv(&results, results_file).map_err(|e| CliError::Data(e.to_string()))?;

    for format in parse_formats(&cli.format)? {
        match format {
            PlotFormat::Svg => {
                render_plot(&ppplot, &dir.join("ppplot.svg"), PlotFormat::Svg).map_err(io_err)?
            }
            PlotFormat::Csv => {
                let file = fs::File::create(dir.join("ppplot.csv")).map_err(io_err)?;
                write_plot_csv(&ppplot, file).map_err(|e| CliError::Data(e.to_string()))?;
            }
        }
    }

    let verdict_json =
        serde_json::to_string_pretty(&verdict).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(dir.join("verdict.json"), verdict_json + "\n").map_err(io_err)?;

    write_flagged_csv(&dir.join("flagged.csv"), &verdict, &results).map_err(io_err)?;

    println!(
        "{experiment_id}: {} (stimuli={}, experiment_p={:.5}, flagged={}{})",
        match verdict.decision {
            ExperimentDecision::Consistent => "consistent",
            ExperimentDecision::Inconsistent => "inconsistent",
        },
        results.len(),
        verdict.experiment_p_value,
        verdict.flagged.len(),
        verdict
            .crossing_alpha
            .map(|a| format!(", crossing_alpha={a:.4}"))
            .unwrap_or_default(),
    );
    Ok(())
}

/// Flagged stimuli sorted ascending by p-value, with advisory class tags.
fn write_flagged_csv(
    path: &Path,
    verdict: &ConsistencyVerdict,
    results: &[StimulusResult],
) -> std::io::Result<()> {
    let by_id: HashMap<&str, &StimulusResult> = results
        .iter()
        .map(|r| (r.stimulus_id.as_str(), r))
        .collect();
    let mut file = fs::File::create(path)?;
    writeln!(file, "stimulus_id,n,k1,k2,k3,k4,k5,p_value,tags")?;
    for id in &verdict.flagged {
        let result = by_id[id.as_str()];
        let k = result.counts.counts();
        let tags = tag_counts(&result.counts)
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(id),
            result.counts.total(),
            k[0],
            k[1],
            k[2],
            k[3],
            k[4],
            result.p_value,
            tags
        )?;
    }
    Ok(())
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

// ---------------------------------------------------------------- simulate

fn parse_range(spec: &str, flag: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--{flag} expects \"lo:hi\", got '{spec}'"));
    let (lo, hi) = spec.split_once(':').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

fn parse_contamination(spec: &str) -> Result<Vec<(ContaminationClass, f64)>, CliError> {
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let bad = || {
            CliError::Usage(format!(
                "--contaminate expects \"class=rate\" pairs, got '{part}'"
            ))
        };
        let (class, rate) = part.split_once('=').ok_or_else(bad)?;
        let class = ContaminationClass::parse(class.trim()).ok_or_else(bad)?;
        let rate: f64 = rate.trim().parse().map_err(|_| bad())?;
        out.push((class, rate));
    }
    Ok(out)
}

fn cmd_simulate(cli: &Cli) -> Result<(), CliError> {
    let Command::Simulate {
        n_stimuli,
        n_scores,
        psi_range,
        rho_range,
        contaminate,
        experiment_id,
        analyze,
    } = &cli.command
    else {
        unreachable!("dispatched on Simulate");
    };

    let sim_config = SimConfig {
        experiment_id: experiment_id.clone(),
        n_stimuli: *n_stimuli,
        n_scores: *n_scores,
        psi_range: parse_range(psi_range, "psi-range")?,
        rho_range: parse_range(rho_range, "rho-range")?,
        contamination: contaminate
            .as_deref()
            .map(parse_contamination)
            .transpose()?
            .unwrap_or_default(),
        seed: cli.seed,
        ..SimConfig::default()
    };
    sim_config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (experiment, labels) =
        gsdcheck_core::generate_experiment(&sim_config).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut dirs = DirNames::default();
    let dir = dirs.dir_for(&cli.out, experiment_id);
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(e.to_string()))?;
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", dir.display()));

    let counts_file = fs::File::create(dir.join("counts.csv")).map_err(io_err)?;
    write_counts_csv([&experiment], counts_file).map_err(|e| CliError::Data(e.to_string()))?;
    let labels_file = fs::File::create(dir.join("labels.csv")).map_err(io_err)?;
    write_labels_csv(&labels, labels_file).map_err(|e| CliError::Data(e.to_string()))?;
    let scores_file = fs::File::create(dir.join("scores.csv")).map_err(io_err)?;
    write_records_csv(&tidy_records(&experiment), &ColumnMap::default(), scores_file)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let grid = if *analyze {
        Some(load_or_build_grid(cli)?)
    } else {
        None
    };
    write_manifest(
        cli,
        "simulate",
        grid.as_ref(),
        serde_json::json!({
            "experiment_id": experiment_id,
            "n_stimuli": n_stimuli,
            "n_scores": n_scores,
            "psi_range": psi_range,
            "rho_range": rho_range,
            "contamination": sim_config
                .contamination
                .iter()
                .map(|(class, rate)| serde_json::json!({"class": class, "rate": rate}))
                .collect::<Vec<_>>(),
            "self_analyze": analyze,
        }),
    )?;
    println!(
        "simulated {} stimuli x {} scores into {}",
        n_stimuli,
        n_scores,
        dir.display()
    );

    if let Some(grid) = grid {
        let cache = FitCache::new();
        let mut redirected = DirNames::default();
        analyze_experiment(cli, &experiment, &grid, &cache, &mut redirected)?;
        write_confusion_csv(&dir, &labels)?;
    }
    Ok(())
}

/// Expands per-stimulus counts into tidy rows with synthetic subject ids.
fn tidy_records(experiment: &ExperimentData) -> Vec<ScoreRecord> {
    let mut records = Vec::new();
    for (stimulus_id, counts) in &experiment.stimuli {
        let mut subject = 0u32;
        for (j, &k) in counts.counts().iter().enumerate() {
            for _ in 0..k {
                subject += 1;
                records.push(ScoreRecord {
                    experiment_id: experiment.experiment_id.clone(),
                    stimulus_id: stimulus_id.clone(),
                    subject_id: Some(format!("s{subject:03}")),
                    score: j as u8 + 1,
                });
            }
        }
    }
    records
}

/// Flagged-versus-truth confusion summary per truth class.
fn write_confusion_csv(dir: &Path, labels: &[(String, StimulusTruth)]) -> Result<(), CliError> {
    let verdict_path = dir.join("verdict.json");
    let verdict: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(&verdict_path).map_err(|e| CliError::Data(e.to_string()))?,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    let flagged: std::collections::HashSet<&str> = verdict["flagged"]
        .as_array()
        .map(|ids| ids.iter().filter_map(|v| v.as_str()).collect())
        .unwrap_or_default();

    let mut per_class: Vec<(String, usize, usize)> = Vec::new();
    for (id, truth) in labels {
        let class = truth.to_string();
        let entry = match per_class.iter_mut().find(|(c, _, _)| *c == class) {
            Some(entry) => entry,
            None => {
                per_class.push((class, 0, 0));
                per_class.last_mut().unwrap()
            }
        };
        entry.1 += 1;
        if flagged.contains(id.as_str()) {
            entry.2 += 1;
        }
    }
    let mut file =
        fs::File::create(dir.join("confusion.csv")).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(file, "truth_class,stimuli,flagged").map_err(|e| CliError::Data(e.to_string()))?;
    for (class, stimuli, flagged) in &per_class {
        writeln!(file, "{class},{stimuli},{flagged}")
            .map_err(|e| CliError::Data(e.to_string()))?;
        println!("confusion: {class}: {flagged}/{stimuli} flagged");
    }
    Ok(())
}
