//! Front end of the laboratory: configuration, task dispatch and artifact
//! writing. `main.rs` only parses arguments.

pub mod config;
pub mod emit;
pub mod tasks;

use std::path::{Path, PathBuf};

use hall_edge_core::{ErrorClass, LabError};
use thiserror::Error;

use crate::config::{RunConfig, Task};
use crate::tasks::Ctx;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Lab(#[from] LabError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures, 1 for IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lab(e) => match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Numerical => 3,
            },
            CliError::Io(_) => 1,
        }
    }
}

/// Runs `cfg.task` with `workers` threads and writes its artifacts into
/// `out_dir` (created if missing). Returns the written paths.
pub fn run(cfg: &RunConfig, out_dir: &Path, workers: usize) -> Result<Vec<PathBuf>, CliError> {
    if workers == 0 {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    let cfg = cfg.clone().normalized();
    std::fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let ctx = Ctx { dir: out_dir.to_path_buf(), workers };
    pool.install(|| dispatch(&cfg, &ctx))
}

fn dispatch(cfg: &RunConfig, ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    // normalized() guarantees the section of the selected task is present
    let missing = || CliError::Config(format!("missing section for task {}", cfg.task.name()));
    match cfg.task {
        Task::Bands => tasks::bands(cfg, cfg.bands.as_ref().ok_or_else(missing)?, ctx),
        Task::Edge => tasks::edge(cfg, cfg.edge.as_ref().ok_or_else(missing)?, ctx),
        Task::Chern => tasks::chern(cfg, cfg.chern.as_ref().ok_or_else(missing)?, ctx),
        Task::Correlators => tasks::correlators(cfg, cfg.correlators.as_ref().ok_or_else(missing)?, ctx),
        Task::Transport => tasks::transport(cfg, cfg.transport.as_ref().ok_or_else(missing)?, ctx),
        Task::Ward => tasks::ward(cfg, cfg.ward.as_ref().ok_or_else(missing)?, ctx),
        Task::Refmodel => tasks::refmodel(cfg, cfg.refmodel.as_ref().ok_or_else(missing)?, ctx),
        Task::Rgflow => tasks::rgflow(cfg, cfg.rgflow.as_ref().ok_or_else(missing)?, ctx),
        Task::Rgtrees => tasks::rgtrees(cfg, cfg.rgtrees.as_ref().ok_or_else(missing)?, ctx),
        Task::EdCheck => tasks::ed_check(cfg, cfg.ed_check.as_ref().ok_or_else(missing)?, ctx),
    }
}
