//! Workloads: the canonical in-memory job/task representation, synthetic
//! M/G generation, trace ingestion and cluster speed calibration.

mod synthetic;
mod trace;
mod weibull;

pub use synthetic::generate_poisson_weibull;
pub use trace::{ingest_trace, parse_trace, to_csv_string, write_trace, TRACE_HEADER};
pub use weibull::{fit_weibull, sample_weibull, WeibullParams};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One task of a job. `size` is CPU-seconds on a unit-speed server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskSpec<T> {
    pub task_index: u32,
    pub size: T,
}

/// A job and its tasks. All tasks arrive with the job.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSpec<T> {
    pub job_id: u64,
    pub arrival_time: T,
    pub tasks: Vec<TaskSpec<T>>,
}

impl<T: Scalar> JobSpec<T> {
    pub fn total_size(&self) -> T {
        self.tasks.iter().map(|t| t.size).sum()
    }
}

/// Where a workload came from. Synthetic workloads keep their generating
/// law so that analytic quantities (offered load, M/G/1 normalization,
/// CARD thresholds) stay exact after a CSV round trip.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSource<T> {
    Synthetic {
        arrival_rate: T,
        params: WeibullParams<T>,
        seed: u64,
    },
    Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload<T> {
    jobs: Vec<JobSpec<T>>,
    horizon: T,
    source: WorkloadSource<T>,
}

impl<T: Scalar> Workload<T> {
    /// Builds a workload, sorting jobs by arrival time (stable).
    ///
    /// `horizon` defaults to the last arrival time.
    pub fn new(
        mut jobs: Vec<JobSpec<T>>,
        horizon: Option<T>,
        source: WorkloadSource<T>,
    ) -> Result<Self> {
        for job in &jobs {
            if job.tasks.is_empty() {
                return Err(Error::invalid(format!("job {} has no tasks", job.job_id)));
            }
            if !(job.arrival_time >= T::zero()) || !job.arrival_time.is_finite() {
                return Err(Error::invalid(format!(
                    "job {} has invalid arrival time {}",
                    job.job_id, job.arrival_time
                )));
            }
            if let Some(t) = job.tasks.iter().find(|t| !(t.size > T::zero()) || !t.size.is_finite()) {
                return Err(Error::invalid(format!(
                    "job {} task {} has non-positive size {}",
                    job.job_id, t.task_index, t.size
                )));
            }
        }
        jobs.sort_by(|a, b| a.arrival_time.partial_cmp(&b.arrival_time).expect("finite"));
        let last = jobs.last().map_or(T::zero(), |j| j.arrival_time);
        let horizon = match horizon {
            Some(h) if h < last => {
                return Err(Error::invalid(format!(
                    "horizon {h} is before the last arrival {last}"
                )))
            }
            Some(h) => h,
            None => last,
        };
        Ok(Self {
            jobs,
            horizon,
            source,
        })
    }

    pub fn jobs(&self) -> &[JobSpec<T>] {
        &self.jobs
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn source(&self) -> &WorkloadSource<T> {
        &self.source
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.source, WorkloadSource::Synthetic { .. })
    }

    pub fn job_count(&self) -> usize {
        self.jobs.len()
    }

    pub fn task_count(&self) -> usize {
        self.jobs.iter().map(|j| j.tasks.len()).sum()
    }

    /// Total CPU-seconds across all tasks.
    pub fn total_work(&self) -> T {
        self.jobs.iter().map(JobSpec::total_size).sum()
    }

    pub fn task_sizes(&self) -> Vec<T> {
        self.jobs
            .iter()
            .flat_map(|j| j.tasks.iter().map(|t| t.size))
            .collect()
    }

    /// λ·E[S] in CPU-seconds per second. Exact for synthetic workloads,
    /// total work over the horizon for traces.
    pub fn offered_load(&self) -> Result<T> {
        match &self.source {
            WorkloadSource::Synthetic {
                arrival_rate,
                params,
                ..
            } => Ok(*arrival_rate * params.mean()),
            WorkloadSource::Trace => {
                if !(self.horizon > T::zero()) {
                    return Err(Error::ZeroDuration);
                }
                Ok(self.total_work() / self.horizon)
            }
        }
    }

    /// Jobs per second: the generating rate for synthetic workloads, the
    /// empirical rate over the horizon for traces.
    pub fn arrival_rate(&self) -> Result<T> {
        match &self.source {
            WorkloadSource::Synthetic { arrival_rate, .. } => Ok(*arrival_rate),
            WorkloadSource::Trace => {
                if !(self.horizon > T::zero()) {
                    return Err(Error::ZeroDuration);
                }
                Ok(T::of_usize(self.jobs.len()) / self.horizon)
            }
        }
    }
}

/// Cluster shape and speed: `n` identical servers of speed `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterConfig<T> {
    pub n: usize,
    pub mu: T,
    pub total_capacity: T,
    pub target_rho: T,
    pub arrival_rate: T,
    /// λ·E[S], the numerator of the utilization identity.
    pub offered_load: T,
}

impl<T: Scalar> ClusterConfig<T> {
    /// Sets `mu` so that `offered_load / (n·mu) = target_rho`.
    pub fn for_load(n: usize, target_rho: T, offered_load: T, arrival_rate: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if !(target_rho > T::zero() && target_rho < T::one()) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {target_rho}")));
        }
        if !(offered_load > T::zero()) || !offered_load.is_finite() {
            return Err(Error::invalid(format!("offered load must be positive, got {offered_load}")));
        }
        let n_t = T::of_usize(n);
        let mu = offered_load / (n_t * target_rho);
        Ok(Self {
            n,
            mu,
            total_capacity: n_t * mu,
            target_rho,
            arrival_rate,
            offered_load,
        })
    }

    /// Utilization implied by the stored load and speed.
    pub fn utilization(&self) -> T {
        self.offered_load / (T::of_usize(self.n) * self.mu)
    }
}

/// Chooses the per-server speed that puts `workload` at `target_rho` on `n`
/// servers.
pub fn calibrate_mu<T: Scalar>(
    workload: &Workload<T>,
    n: usize,
    target_rho: T,
) -> Result<ClusterConfig<T>> {
    if !(target_rho > T::zero() && target_rho < T::one()) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {target_rho}")));
    }
    let offered = workload.offered_load()?;
    let rate = workload.arrival_rate()?;
    ClusterConfig::for_load(n, target_rho, offered, rate)
}
