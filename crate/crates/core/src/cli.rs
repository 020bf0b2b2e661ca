//! Command-line front end.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{card_thresholds, Distribution};
use crate::engine::{run, RunOptions, Warmup};
use crate::error::{Error, Result};
use crate::metrics::{completion_log_csv, summarize, write_results, ResultRow, RunResult};
use crate::policies::{PolicyKind, PolicySpec};
use crate::rng::replication_seed;
use crate::sweep::{
    emit_figure_data, optimize_two_stage, run_sweep, worker_pool, Figure, ResultsFile, SweepPlan, TwoStageGrid,
    WorkloadSpec, DEFAULT_QUANTILES, WORKERS_ENV,
};
use crate::workload::{calibrate_mu, fit_weibull, generate_poisson_weibull, ingest_trace, write_trace, Workload};

#[derive(Debug, Parser)]
#[command(
    name = "dispatchsim",
    version,
    about = "Job dispatching simulator for clusters of FCFS servers",
    after_help = format!("Environment:\n  {WORKERS_ENV}  worker threads for sweeps and searches (default: all cores)")
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Weibull parameters with a given mean and COV
    FitWeibull {
        #[arg(long, default_value_t = 1.0)]
        mean: f64,
        #[arg(long)]
        cov: f64,
    },
    /// Generate a Poisson/Weibull workload as a trace CSV
    GenWorkload {
        #[arg(long)]
        cov: f64,
        /// Load on a unit-capacity cluster; the arrival rate is rho/mean
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        mean: f64,
        #[arg(long)]
        jobs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a trace CSV and print its statistics
    IngestTrace {
        #[arg(long)]
        trace: PathBuf,
        /// Rewrite the trace in canonical form
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CARD size and work thresholds
    CardThresholds {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rho: f64,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 1.0)]
        mean: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one configuration
    Simulate(SimulateArgs),
    /// Run a sweep plan
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Output stem; overrides the plan's output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search the two-stage threshold and first-stage size
    OptimizeTwoStage {
        #[arg(long)]
        inner: PolicyKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rho: f64,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        run: RunArgs,
        /// θ candidates as size quantiles
        #[arg(long, value_delimiter = ',')]
        quantiles: Option<Vec<f64>>,
        /// n₁ candidates
        #[arg(long = "n1", value_delimiter = ',')]
        n1: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reshape sweep results into a plotting table
    Figure {
        /// Results JSON written by `sweep`
        #[arg(long)]
        results: PathBuf,
        /// rho-curve or n-curve
        #[arg(long)]
        kind: Figure,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Synthetic Weibull sizes with this COV
    #[arg(long)]
    pub cov: Option<f64>,
    /// Trace CSV
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Jobs per synthetic workload
    #[arg(long, default_value_t = 2_000_000)]
    pub jobs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: usize,
    #[arg(long, default_value_t = 0.1)]
    pub warmup_fraction: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// rr, jiq, lwl, card, two_stage:<inner> or two_stage:{inner,n1,theta}
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub rho: f64,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, conflicts_with = "theta_quantile")]
    pub theta: Option<f64>,
    #[arg(long)]
    pub theta_quantile: Option<f64>,
    #[arg(long)]
    pub n1: Option<usize>,
    /// Output stem for the results CSV and JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-task completion log of the first replication
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let detail: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error: usage: {}", detail.join(" ").trim_start_matches("error: "));
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), e.to_string().replace('\n', " "));
            1
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1) for a stable system, got {rho}")));
    }
    Ok(())
}

fn check_run(args: &RunArgs) -> Result<()> {
    if args.jobs == 0 {
        return Err(Error::invalid("jobs must be positive"));
    }
    if args.replications == 0 {
        return Err(Error::invalid("replications must be at least 1"));
    }
    if !(0.0..1.0).contains(&args.warmup_fraction) {
        return Err(Error::invalid(format!(
            "warmup fraction must lie in [0, 1), got {}",
            args.warmup_fraction
        )));
    }
    Ok(())
}

fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    crate::error::write_file(path, text)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::FitWeibull { mean, cov } => {
            let p = fit_weibull(mean, cov)?;
            let doc = json!({
                "mean": mean,
                "cov": cov,
                "scale_a": p.scale_a,
                "shape_b": p.shape_b,
                "second_moment": p.second_moment(),
            });
            print(&format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
        Command::GenWorkload {
            cov,
            rho,
            mean,
            jobs,
            seed,
            out,
        } => {
            check_rho(rho)?;
            if jobs == 0 {
                return Err(Error::invalid("jobs must be positive"));
            }
            let params = fit_weibull(mean, cov)?;
            let w = generate_poisson_weibull(rho / mean, params, jobs, seed)?;
            write_trace(&w, &out)?;
            print(&format!("wrote {} jobs to {}\n", w.job_count(), out.display()))
        }
        Command::IngestTrace { trace, out } => {
            let w: Workload<f64> = ingest_trace(&trace)?;
            let dist = Distribution::for_workload(&w)?;
            let doc = json!({
                "jobs": w.job_count(),
                "tasks": w.task_count(),
                "horizon": w.horizon(),
                "arrival_rate": w.arrival_rate()?,
                "offered_load": w.offered_load()?,
                "size_mean": dist.mean(),
                "size_cov": dist.cov(),
                "synthetic": w.is_synthetic(),
            });
            if let Some(out) = out {
                write_trace(&w, &out)?;
            }
            print(&format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
        Command::CardThresholds {
            n,
            rho,
            source,
            mean,
            out,
        } => {
            check_rho(rho)?;
            let dist = match (&source.cov, &source.trace) {
                (Some(cov), _) => Distribution::weibull(fit_weibull(mean, *cov)?),
                (None, Some(path)) => Distribution::for_workload(&ingest_trace::<f64>(path)?)?,
                (None, None) => unreachable!("clap requires a source"),
            };
            let t = card_thresholds(&dist, n, rho)?;
            let doc = json!({
                "n": n,
                "rho": rho,
                "cov": source.cov,
                "trace": source.trace,
                "mean": dist.mean(),
                "thresholds": t,
            });
            let text = format!("{}\n", serde_json::to_string_pretty(&doc)?);
            match out {
                Some(path) => write_file(&path, &text),
                None => print(&text),
            }
        }
        Command::Simulate(args) => simulate(args),
        Command::Sweep { plan, out } => {
            let mut plan = SweepPlan::load(&plan)?;
            if out.is_some() {
                plan.output = out;
            }
            let output = run_sweep(&plan)?;
            match &plan.output {
                Some(stem) => {
                    output.write(stem)?;
                    let summaries = output.rows.iter().filter(|r| r.seed.is_none()).count();
                    print(&format!(
                        "{summaries} points, {} rows written to {}\n",
                        output.rows.len(),
                        stem.with_extension("csv").display()
                    ))
                }
                None => print(&output.to_csv()),
            }
        }
        Command::OptimizeTwoStage {
            inner,
            n,
            rho,
            source,
            run: run_args,
            quantiles,
            n1,
            out,
        } => {
            check_rho(rho)?;
            check_run(&run_args)?;
            let trace = source.trace.as_ref().map(ingest_trace::<f64>).transpose()?;
            let spec = match (&trace, source.cov) {
                (Some(w), _) => WorkloadSpec::Trace(w),
                (None, Some(cov)) => WorkloadSpec::Synthetic {
                    cov,
                    jobs: run_args.jobs,
                },
                (None, None) => unreachable!("clap requires a source"),
            };
            let grid = TwoStageGrid {
                quantiles: quantiles.unwrap_or_else(|| DEFAULT_QUANTILES.to_vec()),
                n1,
            };
            if let Some(q) = grid.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
                return Err(Error::invalid(format!("quantiles must lie in (0, 1), got {q}")));
            }
            if inner == PolicyKind::Card {
                return Err(Error::invalid("two-stage CARD is not supported"));
            }
            let options = RunOptions {
                warmup: Warmup::Fraction(run_args.warmup_fraction),
                ..RunOptions::default()
            };
            let pool = worker_pool()?;
            let best = pool.install(|| {
                optimize_two_stage(inner, n, rho, spec, &grid, run_args.replications, run_args.seed, &options)
            })?;
            let echo = json!({
                "command": "optimize-two-stage",
                "inner": inner,
                "n": n,
                "rho": rho,
                "cov": source.cov,
                "trace": source.trace,
                "jobs": run_args.jobs,
                "seed": run_args.seed,
                "replications": run_args.replications,
                "warmup_fraction": run_args.warmup_fraction,
                "quantiles": grid.quantiles,
                "n1": grid.n1,
            });
            if let Some(stem) = out {
                let rows: Vec<ResultRow> = best
                    .candidates
                    .iter()
                    .map(|c| ResultRow {
                        policy: PolicySpec::TwoStage(crate::policies::TwoStagePolicy {
                            inner,
                            n1: c.n1,
                            theta: c.theta,
                        })
                        .label(),
                        n,
                        rho,
                        theta: Some(c.theta),
                        n1: Some(c.n1),
                        cov: source.cov,
                        seed: None,
                        mrt_seconds: c.mrt.mean,
                        normalized_mrt: c.normalized.as_ref().map(|v| summarize(v).mean),
                        ci_half_width: c.mrt.ci_half_width.is_finite().then_some(c.mrt.ci_half_width),
                    })
                    .collect();
                write_results(&stem, &echo, &rows)?;
            }
            let doc = json!({ "config": echo, "optimum": best });
            print(&format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
        Command::Figure { results, kind, out } => {
            let text = std::fs::read_to_string(&results).map_err(|e| Error::io(&results, e))?;
            let file: ResultsFile = serde_json::from_str(&text)?;
            let table = emit_figure_data(&file.rows, kind)?;
            match out {
                Some(path) => write_file(&path, &table),
                None => print(&table),
            }
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    check_rho(args.rho)?;
    check_run(&args.run)?;
    if args.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if let Some(q) = args.theta_quantile {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("theta quantile must lie in (0, 1), got {q}")));
        }
    }
    let trace = args.source.trace.as_ref().map(ingest_trace::<f64>).transpose()?;
    let source = match (&trace, args.source.cov) {
        (Some(w), _) => WorkloadSpec::Trace(w),
        (None, Some(cov)) => WorkloadSpec::Synthetic {
            cov,
            jobs: args.run.jobs,
        },
        (None, None) => unreachable!("clap requires a source"),
    };
    let dist = match (&trace, args.source.cov) {
        (Some(w), _) => Distribution::for_workload(w)?,
        (None, Some(cov)) => Distribution::weibull(fit_weibull(1.0, cov)?),
        (None, None) => unreachable!("clap requires a source"),
    };
    let policy = resolve_policy(&args, &dist)?;
    policy.validate(args.n)?;
    let card = (policy.inner() == PolicyKind::Card)
        .then(|| card_thresholds(&dist, args.n, args.rho))
        .transpose()?;

    let mut runs: Vec<RunResult<f64>> = Vec::with_capacity(args.run.replications);
    for rep in 0..args.run.replications {
        let seed = replication_seed(args.run.seed, rep as u64);
        let w = source.realize(args.rho, seed)?;
        let config = calibrate_mu(&w, args.n, args.rho)?;
        let options = RunOptions {
            warmup: Warmup::Fraction(args.run.warmup_fraction),
            record_log: rep == 0 && args.log.is_some(),
            ..RunOptions::default()
        };
        runs.push(run(&w, &config, &policy, card.as_ref(), seed, &options)?);
    }
    if let (Some(path), Some(log)) = (&args.log, runs.first().and_then(|r| r.log.as_ref())) {
        write_file(path, &completion_log_csv(log))?;
    }

    let (theta, n1) = match policy {
        PolicySpec::TwoStage(t) => (Some(t.theta), Some(t.n1)),
        PolicySpec::Single { .. } => (None, None),
    };
    let mut rows = Vec::new();
    if runs.len() > 1 {
        rows.extend(runs.iter().map(|r| ResultRow {
            policy: policy.label(),
            n: args.n,
            rho: args.rho,
            theta,
            n1,
            cov: args.source.cov,
            seed: Some(r.seed),
            mrt_seconds: r.mrt,
            normalized_mrt: r.normalized_mrt,
            ci_half_width: None,
        }));
    }
    let mrt = summarize(&runs.iter().map(|r| r.mrt).collect::<Vec<_>>());
    let norm = runs
        .iter()
        .map(|r| r.normalized_mrt)
        .collect::<Option<Vec<f64>>>()
        .map(|v| summarize(&v));
    let width = norm.map_or(mrt.ci_half_width, |s| s.ci_half_width);
    rows.push(ResultRow {
        policy: policy.label(),
        n: args.n,
        rho: args.rho,
        theta,
        n1,
        cov: args.source.cov,
        seed: None,
        mrt_seconds: mrt.mean,
        normalized_mrt: norm.map(|s| s.mean),
        ci_half_width: width.is_finite().then_some(width),
    });

    if let Some(stem) = &args.out {
        let echo = json!({
            "command": "simulate",
            "policy": policy.label(),
            "n": args.n,
            "rho": args.rho,
            "cov": args.source.cov,
            "trace": args.source.trace,
            "jobs": args.run.jobs,
            "seed": args.run.seed,
            "replications": args.run.replications,
            "warmup_fraction": args.run.warmup_fraction,
            "config_hash": runs[0].config_hash,
        });
        write_results(stem, &echo, &rows)?;
    }
    let summary = rows.last().expect("summary row");
    let line = match summary.normalized_mrt {
        Some(nm) => format!(
            "policy={} n={} rho={} mrt_seconds={} normalized_mrt={}",
            summary.policy, summary.n, summary.rho, summary.mrt_seconds, nm
        ),
        None => format!(
            "policy={} n={} rho={} mrt_hours={}",
            summary.policy,
            summary.n,
            summary.rho,
            summary.mrt_seconds / 3600.0
        ),
    };
    let ci = summary
        .ci_half_width
        .map(|w| format!(" ci_half_width={w}"))
        .unwrap_or_default();
    print(&format!("{line}{ci}\n"))
}

/// Combines `--policy` with the two-stage flags.
fn resolve_policy(args: &SimulateArgs, dist: &Distribution<f64>) -> Result<PolicySpec<f64>> {
    let name = args.policy.trim();
    let short = name
        .strip_prefix("two_stage:")
        .filter(|rest| !rest.contains(','))
        .map(|rest| rest.trim_matches(|c| c == '{' || c == '}'));
    match short {
        Some(inner) => {
            let inner: PolicyKind = inner.parse()?;
            let n1 = args
                .n1
                .ok_or_else(|| Error::invalid("two-stage policy needs --n1"))?;
            let theta = match (args.theta, args.theta_quantile) {
                (Some(t), _) => t,
                (None, Some(q)) => dist.quantile(q)?,
                (None, None) => return Err(Error::invalid("two-stage policy needs --theta or --theta-quantile")),
            };
            PolicySpec::two_stage(inner, n1, theta)
        }
        None => {
            if args.theta.is_some() || args.theta_quantile.is_some() || args.n1.is_some() {
                if !name.starts_with("two_stage:") {
                    return Err(Error::invalid("--theta, --theta-quantile and --n1 need a two-stage policy"));
                }
                return Err(Error::invalid("give two-stage parameters either inline or as flags, not both"));
            }
            name.parse()
        }
    }
}
