//! Precomputed log-probability grid over the GSD parameter space.
//!
//! The grid holds the five log-probabilities for every cell of the
//! 399 x 400 lattice: psi in [1.01, 4.99] step 0.01 and rho in [0.0025, 1.0]
//! step 0.0025. Maximum-likelihood fitting is a scan over this table, which
//! sidesteps the difficulties of continuous optimization on the GSD
//! likelihood surface.
//!
//! The on-disk cache format is little-endian binary:
//!
//! ```text
//! magic "GSDGRID\0" | version u32 | n_psi u32 | n_rho u32 | n_cat u32
//! | psi values f64* | rho values f64* | log-pmf f64* (psi-major, rho, category)
//! | sha256 of all preceding bytes (32 bytes)
//! ```
//!
//! Reload is bit-exact; corrupted, truncated or version-mismatched files are
//! rejected without returning a partial grid.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gsd::{gsd_pmf, GsdParams, CATEGORIES};

/// Number of psi grid values (1.01 to 4.99, step 0.01).
pub const PSI_GRID_LEN: usize = 399;
/// Number of rho grid values (0.0025 to 1.0, step 0.0025).
pub const RHO_GRID_LEN: usize = 400;
/// Total number of (psi, rho) cells.
pub const GRID_CELLS: usize = PSI_GRID_LEN * RHO_GRID_LEN;
/// Version written into and required from grid cache files.
pub const GRID_FORMAT_VERSION: u32 = 1;

const GRID_MAGIC: &[u8; 8] = b"GSDGRID\0";
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a grid cache file (bad magic bytes)")]
    BadMagic,
    #[error("grid format version {found} does not match expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("grid dimensions {0}x{1}x{2} do not match expected {PSI_GRID_LEN}x{RHO_GRID_LEN}x{CATEGORIES}")]
    DimensionMismatch(u32, u32, u32),
    #[error("grid file is truncated")]
    Truncated,
    #[error("grid checksum mismatch; the file is corrupted")]
    ChecksumMismatch,
}

/// Side of the square cell blocks used by the pruned likelihood scan.
pub const SCAN_BLOCK: usize = 10;
pub(crate) const PSI_BLOCKS: usize = PSI_GRID_LEN.div_ceil(SCAN_BLOCK);
pub(crate) const RHO_BLOCKS: usize = RHO_GRID_LEN.div_ceil(SCAN_BLOCK);

/// Dense table of GSD log-probabilities over the estimation lattice.
///
/// Immutable after construction and safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    psi_values: Vec<f64>,
    rho_values: Vec<f64>,
    log_pmf: Vec<f64>,
    /// Per-category maxima over SCAN_BLOCK x SCAN_BLOCK cell blocks; derived
    /// from `log_pmf`, never serialized.
    block_max: Vec<f64>,
}

impl ParamGrid {
    /// Populates the full grid. Deterministic: every cell is a pure function
    /// of its lattice coordinates.
    pub fn build() -> Self {
        let psi_values: Vec<f64> = (0..PSI_GRID_LEN).map(|i| (101 + i) as f64 / 100.0).collect();
        let rho_values: Vec<f64> = (0..RHO_GRID_LEN).map(|i| (i + 1) as f64 / 400.0).collect();
        let mut log_pmf = vec![0.0; GRID_CELLS * CATEGORIES];
        for (pi, &psi) in psi_values.iter().enumerate() {
            for (ri, &rho) in rho_values.iter().enumerate() {
                let pmf = gsd_pmf(GsdParams::new(psi, rho).expect("grid point in domain"));
                let base = (pi * RHO_GRID_LEN + ri) * CATEGORIES;
                for (j, &p) in pmf.probabilities().iter().enumerate() {
                    log_pmf[base + j] = p.ln();
                }
            }
        }
        Self::from_parts(psi_values, rho_values, log_pmf)
    }

    fn from_parts(psi_values: Vec<f64>, rho_values: Vec<f64>, log_pmf: Vec<f64>) -> Self {
        let mut block_max = vec![f64::NEG_INFINITY; PSI_BLOCKS * RHO_BLOCKS * CATEGORIES];
        for pi in 0..PSI_GRID_LEN {
            for ri in 0..RHO_GRID_LEN {
                let cell = (pi * RHO_GRID_LEN + ri) * CATEGORIES;
                let block = ((pi / SCAN_BLOCK) * RHO_BLOCKS + ri / SCAN_BLOCK) * CATEGORIES;
                for j in 0..CATEGORIES {
                    if log_pmf[cell + j] > block_max[block + j] {
                        block_max[block + j] = log_pmf[cell + j];
                    }
                }
            }
        }
        Self {
            psi_values,
            rho_values,
            log_pmf,
            block_max,
        }
    }

    /// Per-category log-probability maxima of one scan block.
    pub(crate) fn block_max(&self, psi_block: usize, rho_block: usize) -> &[f64; CATEGORIES] {
        let base = (psi_block * RHO_BLOCKS + rho_block) * CATEGORIES;
        self.block_max[base..base + CATEGORIES]
            .try_into()
            .expect("block slice has CATEGORIES entries")
    }

    pub fn psi_values(&self) -> &[f64] {
        &self.psi_values
    }

    pub fn rho_values(&self) -> &[f64] {
        &self.rho_values
    }

    pub fn cell_count(&self) -> usize {
        GRID_CELLS
    }

    /// Log-probabilities of the five categories at one cell.
    pub fn log_pmf(&self, psi_index: usize, rho_index: usize) -> &[f64; CATEGORIES] {
        let base = (psi_index * RHO_GRID_LEN + rho_index) * CATEGORIES;
        self.log_pmf[base..base + CATEGORIES]
            .try_into()
            .expect("cell slice has CATEGORIES entries")
    }

    /// Raw table, psi-major then rho then category.
    pub fn log_pmf_table(&self) -> &[f64] {
        &self.log_pmf
    }

    pub fn params_at(&self, psi_index: usize, rho_index: usize) -> GsdParams {
        GsdParams::new(self.psi_values[psi_index], self.rho_values[rho_index])
            .expect("grid point in domain")
    }

    fn serialize(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(
            GRID_MAGIC.len()
                + 4 * 4
                + 8 * (self.psi_values.len() + self.rho_values.len() + self.log_pmf.len())
                + CHECKSUM_LEN,
        );
        buf.extend_from_slice(GRID_MAGIC);
        buf.extend_from_slice(&GRID_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.psi_values.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.rho_values.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(CATEGORIES as u32).to_le_bytes());
        for &v in self.psi_values.iter().chain(&self.rho_values).chain(&self.log_pmf) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    /// SHA-256 over the serialized header and payload; this is the value
    /// stored in the cache file trailer.
    pub fn checksum(&self) -> [u8; CHECKSUM_LEN] {
        Sha256::digest(self.serialize()).into()
    }

    pub fn checksum_hex(&self) -> String {
        self.checksum().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the grid cache; the round-trip through [`ParamGrid::load`] is
    /// bit-exact.
    pub fn save(&self, path: &Path) -> Result<(), GridError> {
        let mut buf = self.serialize();
        let digest: [u8; CHECKSUM_LEN] = Sha256::digest(&buf).into();
        buf.extend_from_slice(&digest);
        fs::write(path, buf)?;
        Ok(())
    }

    /// Loads and verifies a grid cache file.
    pub fn load(path: &Path) -> Result<Self, GridError> {
        let buf = fs::read(path)?;
        let header_len = GRID_MAGIC.len() + 4 * 4;
        if buf.len() < header_len {
            return Err(if buf.starts_with(&GRID_MAGIC[..buf.len().min(8)]) {
                GridError::Truncated
            } else {
                GridError::BadMagic
            });
        }
        if &buf[..8] != GRID_MAGIC {
            return Err(GridError::BadMagic);
        }
        let read_u32 = |at: usize| u32::from_le_bytes(buf[at..at + 4].try_into().unwrap());
        let version = read_u32(8);
        if version != GRID_FORMAT_VERSION {
            return Err(GridError::VersionMismatch {
                found: version,
                expected: GRID_FORMAT_VERSION,
            });
        }
        let n_psi = read_u32(12);
        let n_rho = read_u32(16);
        let n_cat = read_u32(20);
        if (n_psi as usize, n_rho as usize, n_cat as usize)
            != (PSI_GRID_LEN, RHO_GRID_LEN, CATEGORIES)
        {
            return Err(GridError::DimensionMismatch(n_psi, n_rho, n_cat));
        }
        let value_count = PSI_GRID_LEN + RHO_GRID_LEN + GRID_CELLS * CATEGORIES;
        let expected_len = header_len + 8 * value_count + CHECKSUM_LEN;
        if buf.len() < expected_len {
            return Err(GridError::Truncated);
        }
        if buf.len() != expected_len {
            // Trailing garbage invalidates the file just like missing bytes.
            return Err(GridError::ChecksumMismatch);
        }
        let payload = &buf[..expected_len - CHECKSUM_LEN];
        let stored = &buf[expected_len - CHECKSUM_LEN..];
        let digest: [u8; CHECKSUM_LEN] = Sha256::digest(payload).into();
        if digest != stored {
            return Err(GridError::ChecksumMismatch);
        }

        let mut values = payload[header_len..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let psi_values: Vec<f64> = values.by_ref().take(PSI_GRID_LEN).collect();
        let rho_values: Vec<f64> = values.by_ref().take(RHO_GRID_LEN).collect();
        let log_pmf: Vec<f64> = values.collect();
        debug_assert_eq!(log_pmf.len(), GRID_CELLS * CATEGORIES);
        Ok(Self::from_parts(psi_values, rho_values, log_pmf))
    }
}
