//! Run manifest: everything needed to reproduce an invocation bit for
//! bit. Contains only config-derived data and package versions; no
//! timestamps, host names, or other ambient entropy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentContext;
use crate::output::write_json;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub seed_overridden: bool,
    pub scheme_seeds: Vec<u64>,
    pub suites: Vec<String>,
    pub format: String,
    pub parallel: Option<usize>,
    pub versions: Versions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub cli: String,
    pub core: String,
}

impl Manifest {
    pub fn for_run(command: &str, ctx: &ExperimentContext) -> anyhow::Result<Manifest> {
        let scheme_seeds = ctx.schemes()?.iter().map(|s| s.seed).collect();
        Ok(Manifest {
            command: command.to_string(),
            config_path: ctx.config_path.display().to_string(),
            config_sha256: ctx.config_sha256.clone(),
            master_seed: ctx.master_seed,
            seed_overridden: ctx.seed_overridden,
            scheme_seeds,
            suites: ctx.suites.iter().map(|s| s.name().to_string()).collect(),
            format: ctx.format.name().to_string(),
            parallel: ctx.parallel,
            versions: Versions {
                cli: env!("CARGO_PKG_VERSION").to_string(),
                core: dropout_dynamics::VERSION.to_string(),
            },
        })
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}
