//! Experiment grids over ρ, n, policy and workload, and the static search
//! for the two-stage threshold θ and first-stage size n₁.
//!
//! Every run at one `(workload, ρ, replication)` uses the same job
//! realization, so policies and two-stage candidates are compared on common
//! random numbers. Total capacity is 1 and the mean size is 1, so `λ = ρ` and
//! `μ = 1/n`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{card_thresholds, CardThresholds, Distribution};
use crate::engine::{run, RunOptions, Warmup};
use crate::error::{Error, Result};
use crate::metrics::{summarize, ResultRow, RunResult, Summary};
use crate::policies::{PolicyKind, PolicySpec};
use crate::rng::replication_seed;
use crate::workload::{calibrate_mu, fit_weibull, generate_poisson_weibull, ingest_trace, Workload};

/// Environment variable that caps the worker pool.
pub const WORKERS_ENV: &str = "DISPATCHSIM_WORKERS";

pub const DEFAULT_QUANTILES: [f64; 7] = [0.5, 0.8, 0.9, 0.95, 0.99, 0.995, 0.999];

fn default_quantiles() -> Vec<f64> {
    DEFAULT_QUANTILES.to_vec()
}

fn default_jobs() -> usize {
    2_000_000
}

fn default_warmup() -> f64 {
    0.1
}

fn default_replications() -> usize {
    1
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageGrid {
    /// θ candidates as size-law quantiles.
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    /// n₁ candidates; by default derived from n.
    #[serde(default)]
    pub n1: Option<Vec<usize>>,
}

impl Default for TwoStageGrid {
    fn default() -> Self {
        Self {
            quantiles: default_quantiles(),
            n1: None,
        }
    }
}

impl TwoStageGrid {
    /// n₁ candidates valid for `n` servers.
    pub fn n1_candidates(&self, n: usize) -> Vec<usize> {
        match &self.n1 {
            Some(v) => {
                let mut v: Vec<usize> = v.iter().copied().filter(|&k| k >= 1 && k < n).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => default_n1(n),
        }
    }
}

/// All of 1..n−1 up to n = 20, then {1, ⌈n/8⌉, ⌈2n/8⌉, …, n−1}.
pub fn default_n1(n: usize) -> Vec<usize> {
    if n < 2 {
        return Vec::new();
    }
    if n <= 20 {
        return (1..n).collect();
    }
    let mut v = vec![1];
    v.extend((1..8).map(|k| (k * n).div_ceil(8)));
    v.push(n - 1);
    v.retain(|&k| k >= 1 && k < n);
    v.sort_unstable();
    v.dedup();
    v
}

/// A policy entry of a plan: a fixed policy, or `two_stage:<inner>` to
/// search the two-stage grid at every point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanPolicy {
    Fixed(PolicySpec<f64>),
    Optimize(PolicyKind),
}

impl FromStr for PlanPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("two_stage:") {
            if !rest.contains(',') {
                let inner: PolicyKind = rest.trim_matches(|c| c == '{' || c == '}').parse()?;
                if inner == PolicyKind::Card {
                    return Err(Error::invalid("two-stage CARD is not supported"));
                }
                return Ok(PlanPolicy::Optimize(inner));
            }
        }
        Ok(PlanPolicy::Fixed(s.parse()?))
    }
}

impl PlanPolicy {
    /// Column name used in figure tables.
    pub fn family(&self) -> String {
        match self {
            PlanPolicy::Fixed(PolicySpec::Single { policy }) => policy.name().to_string(),
            PlanPolicy::Fixed(p) => p.label(),
            PlanPolicy::Optimize(k) => format!("two_stage:{k}"),
        }
    }
}

/// Sweep configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub rho: Vec<f64>,
    pub n: Vec<usize>,
    pub policies: Vec<String>,
    /// Synthetic workloads, one per COV value.
    #[serde(default)]
    pub cov: Vec<f64>,
    /// Trace workload; exclusive with `cov`.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Jobs per synthetic workload; traces are always replayed in full.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub two_stage_grid: TwoStageGrid,
    /// Output stem; `.csv` and `.json` are appended.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<Vec<PlanPolicy>> {
        if self.rho.is_empty() || self.n.is_empty() || self.policies.is_empty() {
            return Err(Error::invalid("plan needs non-empty rho, n and policies"));
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {r}")));
        }
        if self.n.contains(&0) {
            return Err(Error::invalid("n must be at least 1"));
        }
        match (&self.trace, self.cov.is_empty()) {
            (Some(_), false) => return Err(Error::invalid("plan sets both cov and trace")),
            (None, true) => return Err(Error::invalid("plan needs cov values or a trace")),
            _ => {}
        }
        if let Some(c) = self.cov.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::invalid(format!("cov must be positive, got {c}")));
        }
        if self.trace.is_none() && self.jobs == 0 {
            return Err(Error::invalid("jobs must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid(format!(
                "warmup_fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if let Some(q) = self.two_stage_grid.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(Error::invalid(format!("quantiles must lie in (0, 1), got {q}")));
        }
        let policies = self
            .policies
            .iter()
            .map(|p| p.parse())
            .collect::<Result<Vec<PlanPolicy>>>()?;
        for p in &policies {
            for &n in &self.n {
                match p {
                    PlanPolicy::Fixed(spec) => spec.validate(n)?,
                    PlanPolicy::Optimize(_) => {
                        if n < 2 {
                            return Err(Error::IncompatiblePolicy(format!(
                                "two-stage search needs n >= 2, got {n}"
                            )));
                        }
                        if self.two_stage_grid.quantiles.is_empty() || self.two_stage_grid.n1_candidates(n).is_empty() {
                            return Err(Error::invalid(format!("empty two-stage grid for n={n}")));
                        }
                    }
                }
            }
        }
        Ok(policies)
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            warmup: Warmup::Fraction(self.warmup_fraction),
            ..RunOptions::default()
        }
    }
}

/// Builds the worker pool, sized by [`WORKERS_ENV`] when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let k: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| Error::invalid(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(k);
    }
    builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

/// Where the jobs of one grid slice come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkloadSpec<'a> {
    Synthetic { cov: f64, jobs: usize },
    Trace(&'a Workload<f64>),
}

impl WorkloadSpec<'_> {
    fn cov(&self) -> Option<f64> {
        match self {
            WorkloadSpec::Synthetic { cov, .. } => Some(*cov),
            WorkloadSpec::Trace(_) => None,
        }
    }

    /// The realization for one replication at load `rho`.
    pub fn realize(&self, rho: f64, seed: u64) -> Result<std::borrow::Cow<'_, Workload<f64>>> {
        match self {
            WorkloadSpec::Synthetic { cov, jobs } => {
                let params = fit_weibull(1.0, *cov)?;
                Ok(std::borrow::Cow::Owned(generate_poisson_weibull(rho, params, *jobs, seed)?))
            }
            WorkloadSpec::Trace(w) => Ok(std::borrow::Cow::Borrowed(*w)),
        }
    }

    fn distribution(&self) -> Result<Distribution<f64>> {
        match self {
            WorkloadSpec::Synthetic { cov, .. } => Ok(Distribution::weibull(fit_weibull(1.0, *cov)?)),
            WorkloadSpec::Trace(w) => Distribution::for_workload(w),
        }
    }
}

/// One (θ, n₁) candidate and its per-replication results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub quantile: f64,
    pub theta: f64,
    pub n1: usize,
    pub mrts: Vec<f64>,
    pub normalized: Option<Vec<f64>>,
    pub mrt: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageOptimum {
    pub inner: PolicyKind,
    pub n: usize,
    pub rho: f64,
    pub cov: Option<f64>,
    pub quantile: f64,
    pub theta: f64,
    pub n1: usize,
    /// Mean MRT over replications of the winning pair.
    pub mrt: f64,
    pub normalized_mrt: Option<f64>,
    #[serde(skip)]
    pub candidates: Vec<Candidate>,
}

/// Lowest mean MRT; ties go to the larger θ, then the larger n₁.
pub fn select_optimum(candidates: &[Candidate]) -> Option<&Candidate> {
    candidates.iter().min_by(|a, b| {
        a.mrt
            .mean
            .total_cmp(&b.mrt.mean)
            .then_with(|| b.theta.total_cmp(&a.theta))
            .then_with(|| b.n1.cmp(&a.n1))
    })
}

fn thetas(dist: &Distribution<f64>, quantiles: &[f64]) -> Result<Vec<(f64, f64)>> {
    quantiles.iter().map(|&q| Ok((q, dist.quantile(q)?))).collect()
}

#[derive(Debug, Clone, Copy)]
struct Job {
    n_idx: usize,
    policy_idx: usize,
    spec: PolicySpec<f64>,
    quantile: Option<f64>,
}

fn describe(spec: &PolicySpec<f64>, n: usize, rho: f64, cov: Option<f64>, seed: u64) -> String {
    match cov {
        Some(c) => format!("policy={} n={n} rho={rho} cov={c} seed={seed}", spec.label()),
        None => format!("policy={} n={n} rho={rho} trace seed={seed}", spec.label()),
    }
}

fn run_one(
    workload: &Workload<f64>,
    n: usize,
    rho: f64,
    cov: Option<f64>,
    spec: &PolicySpec<f64>,
    card: Option<&CardThresholds<f64>>,
    seed: u64,
    options: &RunOptions,
) -> Result<RunResult<f64>> {
    calibrate_mu(workload, n, rho)
        .and_then(|config| run(workload, &config, spec, card, seed, options))
        .map_err(|e| Error::RunFailed {
            config: describe(spec, n, rho, cov, seed),
            source: Box::new(e),
        })
}

/// Runs for one (θ, n₁) search: every candidate on every replication.
pub fn optimize_two_stage(
    inner: PolicyKind,
    n: usize,
    rho: f64,
    workload: WorkloadSpec<'_>,
    grid: &TwoStageGrid,
    replications: usize,
    base_seed: u64,
    options: &RunOptions,
) -> Result<TwoStageOptimum> {
    if n < 2 {
        return Err(Error::IncompatiblePolicy(format!("two-stage search needs n >= 2, got {n}")));
    }
    if replications == 0 {
        return Err(Error::invalid("replications must be at least 1"));
    }
    let dist = workload.distribution()?;
    let n1s = grid.n1_candidates(n);
    if grid.quantiles.is_empty() || n1s.is_empty() {
        return Err(Error::invalid(format!("empty two-stage grid for n={n}")));
    }
    let pairs: Vec<(f64, f64, usize)> = thetas(&dist, &grid.quantiles)?
        .into_iter()
        .flat_map(|(q, t)| n1s.iter().map(move |&k| (q, t, k)))
        .collect();
    let specs = pairs
        .iter()
        .map(|&(_, t, k)| PolicySpec::two_stage(inner, k, t))
        .collect::<Result<Vec<_>>>()?;

    let mut per_pair: Vec<Vec<RunResult<f64>>> = vec![Vec::new(); pairs.len()];
    for rep in 0..replications {
        let seed = replication_seed(base_seed, rep as u64);
        let w = workload.realize(rho, seed)?;
        let results = specs
            .par_iter()
            .map(|spec| run_one(&w, n, rho, workload.cov(), spec, None, seed, options))
            .collect::<Result<Vec<_>>>()?;
        for (slot, r) in per_pair.iter_mut().zip(results) {
            slot.push(r);
        }
    }
    let candidates: Vec<Candidate> = pairs
        .iter()
        .zip(&per_pair)
        .map(|(&(quantile, theta, n1), runs)| candidate(quantile, theta, n1, runs))
        .collect();
    let best = select_optimum(&candidates).expect("non-empty grid").clone();
    Ok(TwoStageOptimum {
        inner,
        n,
        rho,
        cov: workload.cov(),
        quantile: best.quantile,
        theta: best.theta,
        n1: best.n1,
        mrt: best.mrt.mean,
        normalized_mrt: best.normalized.as_ref().map(|v| summarize(v).mean),
        candidates,
    })
}

fn candidate(quantile: f64, theta: f64, n1: usize, runs: &[RunResult<f64>]) -> Candidate {
    let mrts: Vec<f64> = runs.iter().map(|r| r.mrt).collect();
    Candidate {
        quantile,
        theta,
        n1,
        mrt: summarize(&mrts),
        normalized: runs.iter().map(|r| r.normalized_mrt).collect(),
        mrts,
    }
}

/// Everything a sweep produced, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub config: serde_json::Value,
    /// Per-replication rows followed by one summary row per point.
    pub rows: Vec<ResultRow>,
    pub optima: Vec<TwoStageOptimum>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ResultsFile {
    pub config: serde_json::Value,
    pub rows: Vec<ResultRow>,
}

impl SweepOutput {
    pub fn to_csv(&self) -> String {
        crate::metrics::results_csv(&self.config, &self.rows)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, stem: &Path) -> Result<()> {
        let csv = stem.with_extension("csv");
        let json = stem.with_extension("json");
        crate::error::write_file(&csv, self.to_csv())?;
        crate::error::write_file(&json, self.to_json()?)?;
        Ok(())
    }
}

type PointKey = (usize, usize, usize, usize, u64, u64);

/// Executes every grid point and replication.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutput> {
    let policies = plan.validate()?;
    let trace = match &plan.trace {
        Some(path) => Some(ingest_trace::<f64>(path)?),
        None => None,
    };
    let sources: Vec<WorkloadSpec<'_>> = match &trace {
        Some(w) => vec![WorkloadSpec::Trace(w)],
        None => plan
            .cov
            .iter()
            .map(|&cov| WorkloadSpec::Synthetic { cov, jobs: plan.jobs })
            .collect(),
    };
    let options = plan.run_options();
    let pool = worker_pool()?;

    // (source, rho, n, policy, θ bits, n1) -> per-replication results
    let mut results: BTreeMap<PointKey, (PolicySpec<f64>, Option<f64>, Vec<RunResult<f64>>)> = BTreeMap::new();
    for (s_idx, source) in sources.iter().enumerate() {
        let dist = source.distribution()?;
        for (r_idx, &rho) in plan.rho.iter().enumerate() {
            let cards = plan
                .n
                .iter()
                .map(|&n| {
                    policies
                        .iter()
                        .any(|p| matches!(p, PlanPolicy::Fixed(s) if s.inner() == PolicyKind::Card))
                        .then(|| card_thresholds(&dist, n, rho))
                        .transpose()
                })
                .collect::<Result<Vec<_>>>()?;
            let mut jobs = Vec::new();
            for (n_idx, &n) in plan.n.iter().enumerate() {
                for (policy_idx, p) in policies.iter().enumerate() {
                    match p {
                        PlanPolicy::Fixed(spec) => jobs.push(Job {
                            n_idx,
                            policy_idx,
                            spec: *spec,
                            quantile: None,
                        }),
                        PlanPolicy::Optimize(inner) => {
                            for (q, theta) in thetas(&dist, &plan.two_stage_grid.quantiles)? {
                                for n1 in plan.two_stage_grid.n1_candidates(n) {
                                    jobs.push(Job {
                                        n_idx,
                                        policy_idx,
                                        spec: PolicySpec::two_stage(*inner, n1, theta)?,
                                        quantile: Some(q),
                                    });
                                }
                            }
                        }
                    }
                }
            }
            for rep in 0..plan.replications {
                let seed = replication_seed(plan.seed, rep as u64);
                let workload = source.realize(rho, seed)?;
                let runs = pool.install(|| {
                    jobs.par_iter()
                        .map(|job| {
                            let n = plan.n[job.n_idx];
                            run_one(&workload, n, rho, source.cov(), &job.spec, cards[job.n_idx].as_ref(), seed, &options)
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                for (job, r) in jobs.iter().zip(runs) {
                    let (theta, n1) = match job.spec {
                        PolicySpec::TwoStage(t) => (t.theta, t.n1 as u64),
                        PolicySpec::Single { .. } => (f64::NEG_INFINITY, 0),
                    };
                    let key = (s_idx, r_idx, job.n_idx, job.policy_idx, theta.to_bits(), n1);
                    results
                        .entry(key)
                        .or_insert_with(|| (job.spec, job.quantile, Vec::new()))
                        .2
                        .push(r);
                }
            }
        }
    }

    let mut rows = Vec::new();
    let mut groups: BTreeMap<(usize, usize, usize, usize), Vec<Candidate>> = BTreeMap::new();
    // BTreeMap order on θ bits matches numeric order for positive θ.
    for (&(s_idx, r_idx, n_idx, policy_idx, _, _), (spec, quantile, runs)) in &results {
        let cov = sources[s_idx].cov();
        let rho = plan.rho[r_idx];
        let n = plan.n[n_idx];
        let (theta, n1) = match spec {
            PolicySpec::TwoStage(t) => (Some(t.theta), Some(t.n1)),
            PolicySpec::Single { .. } => (None, None),
        };
        let label = spec.label();
        for r in runs {
            rows.push(ResultRow {
                policy: label.clone(),
                n,
                rho,
                theta,
                n1,
                cov,
                seed: Some(r.seed),
                mrt_seconds: r.mrt,
                normalized_mrt: r.normalized_mrt,
                ci_half_width: None,
            });
        }
        rows.push(summary_row(label, n, rho, theta, n1, cov, runs));
        if let (Some(q), PolicySpec::TwoStage(t)) = (quantile, spec) {
            groups
                .entry((s_idx, r_idx, n_idx, policy_idx))
                .or_default()
                .push(candidate(*q, t.theta, t.n1, runs));
        }
    }
    let optima = groups
        .into_iter()
        .map(|((s_idx, r_idx, n_idx, policy_idx), candidates)| {
            let PlanPolicy::Optimize(inner) = policies[policy_idx] else {
                unreachable!("only searched policies have candidates")
            };
            let best = select_optimum(&candidates).expect("non-empty grid").clone();
            TwoStageOptimum {
                inner,
                n: plan.n[n_idx],
                rho: plan.rho[r_idx],
                cov: sources[s_idx].cov(),
                quantile: best.quantile,
                theta: best.theta,
                n1: best.n1,
                mrt: best.mrt.mean,
                normalized_mrt: best.normalized.as_ref().map(|v| summarize(v).mean),
                candidates,
            }
        })
        .collect();

    Ok(SweepOutput {
        config: serde_json::to_value(plan)?,
        rows,
        optima,
    })
}

fn summary_row(
    policy: String,
    n: usize,
    rho: f64,
    theta: Option<f64>,
    n1: Option<usize>,
    cov: Option<f64>,
    runs: &[RunResult<f64>],
) -> ResultRow {
    let mrts: Vec<f64> = runs.iter().map(|r| r.mrt).collect();
    let mrt = summarize(&mrts);
    let normalized: Option<Vec<f64>> = runs.iter().map(|r| r.normalized_mrt).collect();
    let norm = normalized.map(|v| summarize(&v));
    let width = norm.map_or(mrt.ci_half_width, |s| s.ci_half_width);
    ResultRow {
        policy,
        n,
        rho,
        theta,
        n1,
        cov,
        seed: None,
        mrt_seconds: mrt.mean,
        normalized_mrt: norm.map(|s| s.mean),
        ci_half_width: width.is_finite().then_some(width),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// MRT against ρ at one n.
    RhoCurve,
    /// MRT against n at one ρ.
    NCurve,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho-curve" => Ok(Figure::RhoCurve),
            "n-curve" => Ok(Figure::NCurve),
            _ => Err(Error::invalid(format!("unknown figure `{s}` (expected rho-curve or n-curve)"))),
        }
    }
}

fn family(policy: &str) -> String {
    match policy.strip_prefix("two_stage:{") {
        Some(rest) => format!("two_stage:{}", rest.split(',').next().unwrap_or_default()),
        None => policy.to_string(),
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Reshapes summary rows into one column per policy and one row per ρ or n.
///
/// Values are normalized MRT when available, otherwise MRT in hours. For
/// two-stage searches the best candidate at each point is shown.
pub fn emit_figure_data(rows: &[ResultRow], figure: Figure) -> Result<String> {
    let summaries: Vec<&ResultRow> = rows.iter().filter(|r| r.seed.is_none()).collect();
    if summaries.is_empty() {
        return Err(Error::MissingAxis("results contain no summary rows".into()));
    }
    let covs = distinct(summaries.iter().map(|r| r.cov.unwrap_or(f64::NAN)));
    if covs.len() > 1 {
        return Err(Error::MissingAxis("results mix several workloads".into()));
    }
    let rhos = distinct(summaries.iter().map(|r| r.rho));
    let ns = distinct(summaries.iter().map(|r| r.n as f64));
    let (axis_name, axis, fixed) = match figure {
        Figure::RhoCurve => ("rho", rhos, ("n", ns)),
        Figure::NCurve => ("n", ns, ("rho", rhos)),
    };
    if fixed.1.len() != 1 {
        return Err(Error::MissingAxis(format!(
            "{axis_name} curve needs a single {}, results have {}",
            fixed.0,
            fixed.1.len()
        )));
    }
    let mut columns: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let hours = summaries.iter().all(|r| r.normalized_mrt.is_none());
    for r in &summaries {
        let fam = family(&r.policy);
        let col = match columns.iter().position(|c| *c == fam) {
            Some(i) => i,
            None => {
                columns.push(fam);
                columns.len() - 1
            }
        };
        let x = match figure {
            Figure::RhoCurve => r.rho,
            Figure::NCurve => r.n as f64,
        };
        let row = axis.iter().position(|&a| a == x).expect("axis built from rows");
        let value = if hours {
            r.mrt_seconds / 3600.0
        } else {
            r.normalized_mrt.unwrap_or(f64::NAN)
        };
        cells
            .entry((row, col))
            .and_modify(|v| {
                if value.total_cmp(v) == Ordering::Less {
                    *v = value
                }
            })
            .or_insert(value);
    }
    let mut out = String::new();
    let unit = if hours { "mrt_hours" } else { "normalized_mrt" };
    let _ = writeln!(out, "# {unit} at {}={}", fixed.0, fixed.1[0]);
    out.push_str(axis_name);
    for c in &columns {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (i, x) in axis.iter().enumerate() {
        let _ = write!(out, "{x}");
        for j in 0..columns.len() {
            match cells.get(&(i, j)) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    Ok(out)
}
