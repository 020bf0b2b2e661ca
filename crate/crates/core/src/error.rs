use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: trace contains no task rows")]
    EmptyTrace(PathBuf),

    #[error("{path}: line {line}: duplicate task (job_id={job_id}, task_index={task_index})")]
    DuplicateTask {
        path: PathBuf,
        line: usize,
        job_id: u64,
        task_index: u32,
    },

    #[error("workload spans zero time; cannot estimate arrival rate")]
    ZeroDuration,

    #[error("utilization {utilization} is not below 1")]
    Unstable { utilization: f64 },

    #[error("policy {policy} chose server {index} outside stage of size {stage_size}")]
    PolicyOutOfRange {
        policy: &'static str,
        index: usize,
        stage_size: usize,
    },

    #[error("policy is incompatible with the cluster: {0}")]
    IncompatiblePolicy(String),

    #[error("job {job_id}: task {task_index} has no completion")]
    MissingCompletion { job_id: u64, task_index: u32 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("results do not cover the requested axis: {0}")]
    MissingAxis(String),

    #[error("run failed for {config}: {source}")]
    RunFailed {
        config: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used in single-line CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonConvergence { .. } => "non_convergence",
            Error::MalformedRow { .. } => "malformed_row",
            Error::EmptyTrace(_) => "empty_trace",
            Error::DuplicateTask { .. } => "duplicate_task",
            Error::ZeroDuration => "zero_duration",
            Error::Unstable { .. } => "unstable",
            Error::PolicyOutOfRange { .. } => "policy_out_of_range",
            Error::IncompatiblePolicy(_) => "incompatible_policy",
            Error::MissingCompletion { .. } => "missing_completion",
            Error::InvariantViolation(_) => "invariant_violation",
            Error::MissingAxis(_) => "missing_axis",
            Error::RunFailed { .. } => "run_failed",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

/// Writes a file, creating missing parent directories.
pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
