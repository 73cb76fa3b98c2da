//! Reproducibility manifest written alongside every run's outputs.
//!
//! The manifest captures the fully resolved configuration, the master seed
//! and the grid checksum: enough to reproduce the output files bit-exactly
//! with the same binary.

use std::fs;

use gsdcheck_core::ParamGrid;

use crate::{Cli, CliError};

pub fn write_manifest(
    cli: &Cli,
    command: &str,
    grid: Option<&ParamGrid>,
    extra: serde_json::Value,
) -> Result<(), CliError> {
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Data(e.to_string()))?;
    let manifest = serde_json::json!({
        "tool": "gsdcheck",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cli.seed,
        "bootstrap_iters": cli.bootstrap_iters,
        "pvalue_convention": "count_over_t",
        "beta": cli.beta,
        "z_quantile": "rounded",
        "alpha_cap": cli.alpha_cap,
        "workers": cli.workers,
        "formats": cli.format,
        "columns": cli.columns,
        "out": cli.out.display().to_string(),
        "grid_path": cli.grid_path.display().to_string(),
        "grid_format_version": gsdcheck_core::GRID_FORMAT_VERSION,
        "grid_sha256": grid.map(|g| g.checksum_hex()),
        "parameters": extra,
    });
    let rendered = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(cli.out.join("manifest.json"), rendered + "\n")
        .map_err(|e| CliError::Data(e.to_string()))
}
