//! Job response times, normalized MRT, replication summaries and the
//! results CSV/JSON formats.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analysis::{mg1_mean_response, Distribution};
use crate::engine::{ServerStats, TaskInstance};
use crate::error::{write_file, Error, Result};
use crate::rng::replication_seed;
use crate::scalar::Scalar;
use crate::workload::{ClusterConfig, JobSpec, Workload};

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult<T> {
    pub policy: String,
    pub n: usize,
    pub seed: u64,
    pub config_hash: String,
    pub warmup_jobs: usize,
    /// Jobs measured, i.e. `responses.len()`.
    pub job_count: usize,
    /// Per-job response times after warm-up, in arrival order.
    #[serde(skip)]
    pub responses: Vec<T>,
    pub mrt: T,
    /// `mrt` over the single-server M/G/1 mean; `None` for traces.
    pub normalized_mrt: Option<T>,
    pub mg1_reference: Option<T>,
    pub transfers: u64,
    #[serde(skip)]
    pub servers: Vec<ServerStats<T>>,
    #[serde(skip)]
    pub log: Option<Vec<TaskInstance<T>>>,
}

impl<T: Scalar> RunResult<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        policy: String,
        n: usize,
        seed: u64,
        config_hash: String,
        warmup_jobs: usize,
        responses: Vec<T>,
        mg1_reference: Option<T>,
        transfers: u64,
        servers: Vec<ServerStats<T>>,
        log: Option<Vec<TaskInstance<T>>>,
    ) -> Self {
        let mrt = mean(&responses);
        Self {
            policy,
            n,
            seed,
            config_hash,
            warmup_jobs,
            job_count: responses.len(),
            responses,
            mrt,
            normalized_mrt: mg1_reference.map(|r| mrt / r),
            mg1_reference,
            transfers,
            servers,
            log,
        }
    }
}

fn mean<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::nan();
    }
    values.iter().copied().sum::<T>() / T::of_usize(values.len())
}

/// Last task completion minus arrival.
pub fn job_response<T: Scalar>(job: &JobSpec<T>, completions: &[Option<T>]) -> Result<T> {
    let mut last = T::neg_infinity();
    for (task, done) in job.tasks.iter().zip(completions.iter().chain(std::iter::repeat(&None))) {
        match done {
            Some(t) => last = last.max(*t),
            None => {
                return Err(Error::MissingCompletion {
                    job_id: job.job_id,
                    task_index: task.task_index,
                })
            }
        }
    }
    Ok(last - job.arrival_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Normalized<T> {
    pub value: T,
    /// False when `value` is the raw MRT (trace workloads).
    pub normalized: bool,
}

/// `mrt / E[R]` of an M/G/1 queue with the full cluster capacity. Without an
/// analytic law the MRT passes through unnormalized.
pub fn normalized_mrt<T: Scalar>(
    mrt: T,
    dist: Option<&Distribution<T>>,
    arrival_rate: T,
    total_capacity: T,
) -> Result<Normalized<T>> {
    match dist {
        Some(d) => Ok(Normalized {
            value: mrt / mg1_mean_response(d, arrival_rate, total_capacity)?,
            normalized: true,
        }),
        None => Ok(Normalized {
            value: mrt,
            normalized: false,
        }),
    }
}

/// M/G/1 mean response used for normalization: defined for synthetic
/// workloads only.
pub fn mg1_reference<T: Scalar>(workload: &Workload<T>, config: &ClusterConfig<T>) -> Result<Option<T>> {
    if !workload.is_synthetic() {
        return Ok(None);
    }
    let dist = Distribution::for_workload(workload)?;
    // A finite run on an overloaded cluster still completes; it just has no reference.
    match mg1_mean_response(&dist, workload.arrival_rate()?, config.total_capacity) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Unstable { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std_dev: f64,
    /// 95% Student-t half-width; NaN with fewer than two values.
    pub ci_half_width: f64,
    pub replications: usize,
}

/// Mean and 95% confidence half-width over replication values.
///
/// Values are sorted before summing, so the result does not depend on the
/// order in which replications finished.
pub fn summarize<T: Scalar>(values: &[T]) -> Summary {
    let mut v: Vec<f64> = values.iter().map(|x| x.to_f64_lossy()).collect();
    v.sort_by(f64::total_cmp);
    let r = v.len();
    if r == 0 {
        return Summary {
            mean: f64::NAN,
            std_dev: f64::NAN,
            ci_half_width: f64::NAN,
            replications: 0,
        };
    }
    let m = v.iter().sum::<f64>() / r as f64;
    if r < 2 {
        return Summary {
            mean: m,
            std_dev: f64::NAN,
            ci_half_width: f64::NAN,
            replications: r,
        };
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (r - 1) as f64;
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (r - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Summary {
        mean: m,
        std_dev: sd,
        ci_half_width: if sd == 0.0 { 0.0 } else { t * sd / (r as f64).sqrt() },
        replications: r,
    }
}

#[derive(Debug, Clone)]
pub struct Replicated<T> {
    pub runs: Vec<RunResult<T>>,
    /// Summary of per-replication MRTs.
    pub mrt: Summary,
    /// Summary of per-replication normalized MRTs, when defined.
    pub normalized_mrt: Option<Summary>,
}

/// Runs `run(replication, seed)` for `replications` derived seeds and
/// summarizes the MRTs. Runs are returned in replication order.
pub fn replicate_and_summarize<T, F>(replications: usize, base_seed: u64, run: F) -> Result<Replicated<T>>
where
    T: Scalar,
    F: Fn(usize, u64) -> Result<RunResult<T>>,
{
    if replications == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    let runs = (0..replications)
        .map(|r| run(r, replication_seed(base_seed, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_runs(runs))
}

pub fn summarize_runs<T: Scalar>(runs: Vec<RunResult<T>>) -> Replicated<T> {
    let mrts: Vec<T> = runs.iter().map(|r| r.mrt).collect();
    let normalized: Option<Vec<T>> = runs.iter().map(|r| r.normalized_mrt).collect();
    Replicated {
        mrt: summarize(&mrts),
        normalized_mrt: normalized.map(|v| summarize(&v)),
        runs,
    }
}

pub const RESULTS_HEADER: &str = "policy,n,rho,theta,n1,cov,seed,mrt_seconds,normalized_mrt,ci_half_width";

/// One line of the results CSV. Per-replication rows leave `ci_half_width`
/// empty; summary rows have `seed = None` and carry the half-width of the
/// normalized MRT when defined, else of the MRT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub n: usize,
    pub rho: f64,
    pub theta: Option<f64>,
    pub n1: Option<usize>,
    pub cov: Option<f64>,
    pub seed: Option<u64>,
    pub mrt_seconds: f64,
    pub normalized_mrt: Option<f64>,
    pub ci_half_width: Option<f64>,
}

fn opt<V: std::fmt::Display>(v: &Option<V>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.policy.replace(',', ";"),
            self.n,
            self.rho,
            opt(&self.theta),
            opt(&self.n1),
            opt(&self.cov),
            self.seed.map_or_else(|| "summary".to_string(), |s| s.to_string()),
            self.mrt_seconds,
            opt(&self.normalized_mrt),
            opt(&self.ci_half_width),
        )
    }
}

/// Results CSV: `#`-prefixed config echo lines, the header, then rows.
pub fn results_csv(echo: &serde_json::Value, rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config={}", serde_json::to_string(echo).unwrap_or_default());
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultsDocument<'a> {
    pub config: &'a serde_json::Value,
    pub rows: &'a [ResultRow],
}

pub fn results_json(echo: &serde_json::Value, rows: &[ResultRow]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&ResultsDocument { config: echo, rows })?;
    s.push('\n');
    Ok(s)
}

/// Writes `<stem>.csv` and `<stem>.json` next to each other.
pub fn write_results(stem: &Path, echo: &serde_json::Value, rows: &[ResultRow]) -> Result<()> {
    let csv = stem.with_extension("csv");
    let json = stem.with_extension("json");
    write_file(&csv, results_csv(echo, rows))?;
    write_file(&json, results_json(echo, rows)?)?;
    Ok(())
}

pub const COMPLETION_LOG_HEADER: &str = "job_id,task_index,arrival,completion,stage,server";

/// Per-task completion log, in completion order. Servers are 1-based.
pub fn completion_log_csv<T: Scalar>(log: &[TaskInstance<T>]) -> String {
    let mut out = String::from(COMPLETION_LOG_HEADER);
    out.push('\n');
    for t in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t.job_id,
            t.task_index,
            t.arrival_time,
            t.completion_time,
            t.stage,
            t.final_server + 1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{fit_weibull, TaskSpec};
    use proptest::prelude::*;

    fn job(arrival: f64, n: usize) -> JobSpec<f64> {
        JobSpec {
            job_id: 9,
            arrival_time: arrival,
            tasks: (0..n as u32)
                .map(|i| TaskSpec {
                    task_index: i,
                    size: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn response_is_last_completion() {
        let r = job_response(&job(2.0, 3), &[Some(5.0), Some(9.0), Some(7.0)]).unwrap();
        assert_eq!(r, 7.0);
        assert_eq!(job_response(&job(3.0, 1), &[Some(3.5)]).unwrap(), 0.5);
        assert_eq!(job_response(&job(0.0, 2), &[Some(4.0), Some(4.0)]).unwrap(), 4.0);
        assert!(matches!(
            job_response(&job(0.0, 2), &[Some(4.0)]),
            Err(Error::MissingCompletion { task_index: 1, .. })
        ));
    }

    #[test]
    fn normalization() {
        let exp = Distribution::weibull(fit_weibull(1.0f64, 1.0).unwrap());
        // E[R] = 5 for M/M/1 at ρ = 0.8
        let n = normalized_mrt(10.0, Some(&exp), 0.8, 1.0).unwrap();
        assert!((n.value - 2.0).abs() < 1e-9 && n.normalized);
        let t = normalized_mrt::<f64>(406.0, None, 0.8, 1.0).unwrap();
        assert_eq!((t.value, t.normalized), (406.0, false));
        assert!(matches!(
            normalized_mrt(1.0, Some(&exp), 1.2, 1.0),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn degenerate_summary_has_zero_width() {
        let s = summarize(&[3.0f64; 5]);
        assert_eq!((s.mean, s.ci_half_width), (3.0, 0.0));
        assert!(summarize(&[1.0f64]).ci_half_width.is_nan());
    }

    #[test]
    fn t_interval_matches_hand_value() {
        // mean 2, sd 1, t(0.975, 2) = 4.302652729911275
        let s = summarize(&[1.0f64, 2.0, 3.0]);
        assert!((s.ci_half_width - 4.302652729911275 / 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn mrt_is_exact_mean() {
        let r = RunResult::new("rr".into(), 1, 0, String::new(), 0, vec![1.0, 2.0, 4.0], Some(2.0), 0, vec![], None);
        assert_eq!(r.mrt, 7.0 / 3.0);
        assert_eq!(r.normalized_mrt, Some(7.0 / 6.0));
    }

    #[test]
    fn csv_row_layout() {
        let row = ResultRow {
            policy: "two_stage:{rr,7,3.5}".into(),
            n: 10,
            rho: 0.8,
            theta: Some(3.5),
            n1: Some(7),
            cov: Some(10.0),
            seed: Some(1),
            mrt_seconds: 12.5,
            normalized_mrt: Some(1.25),
            ci_half_width: None,
        };
        assert_eq!(row.to_csv_line(), "two_stage:{rr;7;3.5},10,0.8,3.5,7,10,1,12.5,1.25,");
    }

    proptest! {
        #[test]
        fn summary_is_permutation_invariant(mut v in prop::collection::vec(0.0f64..1e6, 2..40), seed in any::<u64>()) {
            let a = summarize(&v);
            let mut rng = crate::rng::stream(seed, crate::rng::Component::Replication, 0);
            rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut rng);
            let b = summarize(&v);
            prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            prop_assert_eq!(a.ci_half_width.to_bits(), b.ci_half_width.to_bits());
        }
    }
}
