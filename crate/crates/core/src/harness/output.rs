//! CSV records plus a JSON sidecar echoing the configuration.
//!
//! Sweep CSV columns: `schema_version, config_hash, axis, axis_value,
//! estimator, model, parameter, rmse_deg, crb_std_deg, ratio, trials,
//! failures, ambiguities`. Surface CSV: `schema_version, config_hash,
//! theta_deg, phi_deg, estimator, model, parameter, metric, value`.
//! Likelihood-map CSV: `schema_version, config_hash, theta_deg, phi_deg,
//! map, value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::SweepConfig;
use super::likemap::{LikelihoodMap, MapKind};
use super::sweep::{SurfaceRecord, SweepRecord};
use crate::error::Result;

/// Version of the CSV layouts above.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Metadata written next to every CSV file (`<name>.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    /// `sweep`, `surface` or `likemap`.
    pub kind: String,
    pub crate_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub records: usize,
    pub config: SweepConfig,
}

impl Sidecar {
    pub fn path_for(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_sidecar(path: &Path, kind: &str, records: usize, config: &SweepConfig) -> Result<()> {
    let meta = Sidecar {
        schema_version: CSV_SCHEMA_VERSION,
        kind: kind.into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.hash(),
        seed: config.seed,
        records,
        config: SweepConfig {
            output: None,
            threads: None,
            ..config.clone()
        },
    };
    std::fs::write(Sidecar::path_for(path), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn write_sweep(path: &Path, records: &[SweepRecord], config: &SweepConfig) -> Result<()> {
    write_csv(path, records)?;
    write_sidecar(path, "sweep", records.len(), config)
}

pub fn write_surface(path: &Path, records: &[SurfaceRecord], config: &SweepConfig) -> Result<()> {
    write_csv(path, records)?;
    write_sidecar(path, "surface", records.len(), config)
}

#[derive(Serialize)]
struct MapRow<'a> {
    schema_version: u32,
    config_hash: &'a str,
    theta_deg: f64,
    phi_deg: f64,
    map: &'static str,
    value: f64,
}

pub fn write_likelihood_map(path: &Path, map: &LikelihoodMap, config: &SweepConfig) -> Result<()> {
    let hash = config.hash();
    let np = map.phis_deg.len();
    let mut rows = Vec::new();
    for kind in [MapKind::NonCoherent, MapKind::Coherent] {
        for (k, &value) in map.values(kind).iter().enumerate() {
            rows.push(MapRow {
                schema_version: CSV_SCHEMA_VERSION,
                config_hash: &hash,
                theta_deg: map.thetas_deg[k / np],
                phi_deg: map.phis_deg[k % np],
                map: kind.id(),
                value,
            });
        }
    }
    write_csv(path, &rows)?;
    write_sidecar(path, "likemap", rows.len(), config)
}
