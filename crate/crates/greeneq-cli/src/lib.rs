//! Library surface of the experiment runner, shared by the binary and the
//! integration tests.

pub mod config;
pub mod output;
pub mod pipelines;

use std::path::Path;

pub use config::{parse_config, ConfigError, Experiment, Pipeline};
pub use pipelines::{run_experiment, PipelineError, RunArtifacts};

/// Parse a config file and execute it, honoring CLI overrides.
///
/// Exit-code mapping used by the binary: 0 on success, 2 when any
/// verification report fails, 1 on configuration or execution errors.
pub fn run_file(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
    pipeline_override: Option<Pipeline>,
) -> Result<RunArtifacts, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut exp = parse_config(&text).map_err(|e| RunError::Input(e.to_string()))?;
    if let Some(seed) = seed_override {
        exp.seed = seed;
    }
    if let Some(p) = pipeline_override {
        exp.pipeline = p;
    }
    let out_dir = out_override
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| Path::new(&exp.output_dir).to_path_buf());
    run_experiment(&exp, &out_dir).map_err(|e| RunError::Pipeline(e.to_string()))
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Pipeline(String),
}

/// Validate the thread-cap environment variable (`GREENEQ_THREADS`).
///
/// The compute engine is sequential, so any positive cap is honored
/// trivially; the variable is still parsed and rejected when malformed.
pub fn thread_cap_from_env() -> Result<Option<usize>, RunError> {
    match std::env::var("GREENEQ_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(RunError::Input(format!(
                "GREENEQ_THREADS must be a positive integer, got \"{v}\""
            ))),
        },
    }
}
