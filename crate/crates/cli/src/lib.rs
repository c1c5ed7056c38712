//! Front end of the `perfhom` binary: configuration, caching, run
//! directories and manifests around the library studies.

pub mod commands;
pub mod config;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use commands::Artifact;
use config::{Command, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] perfhom::Error),
}

impl CliError {
    /// 2 for solver failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_solver_failure() => 2,
            _ => 1,
        }
    }
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T, CliError> {
    r.map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone)]
pub struct Options {
    pub command: Command,
    /// TOML file; `None` runs with every default.
    pub config: Option<PathBuf>,
    pub jobs: Option<usize>,
    /// Run directory; defaults to `runs/<command>-<hash prefix>`.
    pub out: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub no_cache: bool,
    pub plot: bool,
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub hash: String,
    pub cache_hit: bool,
    pub files: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CacheIndex {
    files: Vec<(String, bool)>,
}

fn load_cache(dir: &Path) -> Option<Vec<Artifact>> {
    let index: CacheIndex = serde_json::from_slice(&fs::read(dir.join("index.json")).ok()?).ok()?;
    index
        .files
        .into_iter()
        .map(|(name, is_plot)| Some(Artifact { bytes: fs::read(dir.join(&name)).ok()?, name, is_plot }))
        .collect()
}

// The index is written last, so an interrupted store is never read back.
fn store_cache(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    io(dir, fs::create_dir_all(dir))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        io(&path, fs::write(&path, &a.bytes))?;
    }
    let index = CacheIndex { files: artifacts.iter().map(|a| (a.name.clone(), a.is_plot)).collect() };
    let path = dir.join("index.json");
    io(&path, fs::write(&path, serde_json::to_vec(&index).expect("json")))
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn execute(opts: &Options) -> Result<RunSummary, CliError> {
    let config = match &opts.config {
        Some(path) => RunConfig::from_toml(&io(path, fs::read_to_string(path))?)?,
        None => RunConfig::default(),
    };
    config.validate(opts.command)?;
    let hash = config.hash(opts.command);
    let out = opts.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{}", opts.command.name(), &hash[..12])));
    let cache = opts.cache_dir.join(&hash);

    let started = unix_seconds();
    let clock = Instant::now();
    let cached = if opts.no_cache { None } else { load_cache(&cache) };
    let cache_hit = cached.is_some();
    let artifacts = match cached {
        Some(a) => a,
        None => {
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(j) = opts.jobs {
                pool = pool.num_threads(j.max(1));
            }
            let pool = pool.build().map_err(|e| perfhom::Error::config("jobs", e.to_string()))?;
            let artifacts = pool.install(|| commands::run(opts.command, &config))?;
            if !opts.no_cache {
                store_cache(&cache, &artifacts)?;
            }
            artifacts
        }
    };

    io(&out, fs::create_dir_all(&out))?;
    let mut files = Vec::new();
    let mut listing = Vec::new();
    for a in artifacts.iter().filter(|a| opts.plot || !a.is_plot) {
        let path = out.join(&a.name);
        io(&path, fs::write(&path, &a.bytes))?;
        listing.push(serde_json::json!({
            "name": a.name,
            "bytes": a.bytes.len(),
            "sha256": hex::encode(Sha256::digest(&a.bytes)),
        }));
        files.push(a.name.clone());
    }
    let pe = config.pe()?;
    let calibration = match config.strategy()? {
        perfhom::mesh::HoleStrategy::Subgrid { calibration } => Some(calibration.radius_factor),
        perfhom::mesh::HoleStrategy::NearestNode { calibration } => calibration.map(|c| c.radius_factor),
        perfhom::mesh::HoleStrategy::Resolved => None,
    };
    let manifest = serde_json::json!({
        "command": opts.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash,
        "config": config,
        "hashed": serde_json::from_str::<serde_json::Value>(&config.canonical(opts.command)).expect("json"),
        "strategy": {
            "name": config.strategy,
            "node_radius_factor": calibration,
            "reference_cells": perfhom::calibration::reference_cells(pe.n()),
        },
        "cache_hit": cache_hit,
        "jobs": opts.jobs,
        "plot": opts.plot,
        "started_unix": started,
        "wall_seconds": clock.elapsed().as_secs_f64(),
        "files": listing,
    });
    let path = out.join("manifest.json");
    io(&path, fs::write(&path, serde_json::to_string_pretty(&manifest).expect("json")))?;
    Ok(RunSummary { out, hash, cache_hit, files })
}
