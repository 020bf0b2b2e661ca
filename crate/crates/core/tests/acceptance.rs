//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dispatchsim::analysis::{card_thresholds, mg1_mean_response, CardThresholds, Distribution};
use dispatchsim::engine::{run, RunOptions, Warmup};
use dispatchsim::metrics::{job_response, RunResult};
use dispatchsim::policies::{PolicyKind, PolicySpec};
use dispatchsim::rng::{replication_seed, stream, Component};
use dispatchsim::sweep::{optimize_two_stage, TwoStageGrid, WorkloadSpec};
use dispatchsim::workload::{
    calibrate_mu, fit_weibull, generate_poisson_weibull, ingest_trace, sample_weibull, ClusterConfig, Workload,
};

const SEED: u64 = 42;
const RHO: f64 = 0.8;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn workload(cov: f64, jobs: usize, seed: u64) -> Workload<f64> {
    generate_poisson_weibull(RHO, fit_weibull(1.0, cov).unwrap(), jobs, seed).unwrap()
}

fn simulate(w: &Workload<f64>, n: usize, spec: &PolicySpec<f64>, card: Option<&CardThresholds<f64>>, seed: u64) -> RunResult<f64> {
    let config = calibrate_mu(w, n, RHO).unwrap();
    run(w, &config, spec, card, seed, &RunOptions::default()).unwrap()
}

/// Mean MRT per policy over `reps` common workloads.
fn compare(cov: f64, n: usize, jobs: usize, reps: usize, base: u64, specs: &[PolicySpec<f64>]) -> Vec<f64> {
    let dist = Distribution::weibull(fit_weibull(1.0, cov).unwrap());
    let card = card_thresholds(&dist, n, RHO).unwrap();
    let mut sums = vec![0.0; specs.len()];
    for r in 0..reps {
        let seed = replication_seed(base, r as u64);
        let w = workload(cov, jobs, seed);
        for (k, spec) in specs.iter().enumerate() {
            sums[k] += simulate(&w, n, spec, Some(&card), seed).mrt;
        }
    }
    sums.iter().map(|s| s / reps as f64).collect()
}

fn single(k: PolicyKind) -> PolicySpec<f64> {
    PolicySpec::single(k)
}

const RR: PolicyKind = PolicyKind::RoundRobin;
const JIQ: PolicyKind = PolicyKind::JoinIdleQueue;
const LWL: PolicyKind = PolicyKind::LeastWorkLeft;
const CARD: PolicyKind = PolicyKind::Card;

fn mm1_oracle() -> Outcome {
    // 10% warm-up leaves 1_000_001 measured jobs.
    let jobs = 1_111_112;
    let dist = Distribution::weibull(fit_weibull(1.0, 1.0).unwrap());
    let card = card_thresholds(&dist, 1, RHO).unwrap();
    let mut normalized = Vec::new();
    let mut slowest = 0.0f64;
    let mut identical = true;
    for r in 0..10 {
        let seed = replication_seed(SEED, r);
        let w = workload(1.0, jobs, seed);
        let mut reference: Option<Vec<f64>> = None;
        for k in PolicyKind::ALL {
            let t = Instant::now();
            let res = simulate(&w, 1, &single(k), Some(&card), seed);
            slowest = slowest.max(t.elapsed().as_secs_f64());
            assert!(res.job_count >= 1_000_000);
            match &reference {
                None => {
                    normalized.push(res.normalized_mrt.unwrap());
                    reference = Some(res.responses);
                }
                Some(v) => identical &= *v == res.responses,
            }
        }
    }
    let mean = normalized.iter().sum::<f64>() / normalized.len() as f64;
    // E[R] = E[S]/(1-ρ) = 5 on a unit-capacity server
    let analytic = mg1_mean_response(&dist, RHO, 1.0).unwrap();
    check(
        (mean - 1.0).abs() <= 0.03 && identical && slowest < 60.0 && (analytic - 5.0).abs() < 1e-9,
        format!("normalized MRT {mean:.4} (target 1.00 ± 0.03), four policies identical: {identical}, slowest run {slowest:.2}s"),
    )
}

fn pk_heavy_tail() -> Outcome {
    // 40 × 1.125e6 measured jobs = 4.5e7 in total.
    let (reps, jobs) = (40, 1_250_000);
    let mut total = 0.0;
    let mut measured = 0usize;
    let mut reference = 0.0;
    for r in 0..reps {
        let seed = replication_seed(SEED, r);
        let w = workload(10.0, jobs, seed);
        let res = simulate(&w, 1, &single(RR), None, seed);
        total += res.mrt * res.job_count as f64;
        measured += res.job_count;
        reference = res.mg1_reference.unwrap();
    }
    let normalized = total / measured as f64 / reference;
    check(
        (normalized - 1.0).abs() <= 0.10 && measured >= 10_000_000,
        format!("normalized MRT {normalized:.4} over {measured} jobs (target 1.00 ± 0.10), E[R] = {reference:.1}"),
    )
}

fn weibull_fit() -> Outcome {
    let p = fit_weibull(1.0f64, 10.0).unwrap();
    let mut rng = stream(SEED, Component::Sizes, 0);
    let n = 10_000_000;
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let x = sample_weibull(&p, &mut rng);
        s1 += x;
        s2 += x * x;
    }
    let mean = s1 / n as f64;
    let cov = ((s2 / n as f64 - mean * mean) * n as f64 / (n - 1) as f64).sqrt() / mean;
    let exp = fit_weibull(1.0f64, 1.0).unwrap();
    let exact = (exp.scale_a - 1.0).abs() <= 1e-10 && (exp.shape_b - 1.0).abs() <= 1e-10;
    check(
        (mean - 1.0).abs() <= 0.01 && (cov - 10.0).abs() <= 1.0 && exact,
        format!(
            "fit(1,10) = (a={:.6}, b={:.6}); sample mean {mean:.4}, sample COV {cov:.3}; fit(1,1) = ({}, {})",
            p.scale_a, p.shape_b, exp.scale_a, exp.shape_b
        ),
    )
}

fn card_bands() -> Outcome {
    let mut worst = 0.0f64;
    let mut c_exact = true;
    for cov in [1.0, 10.0] {
        let p = fit_weibull(1.0, cov).unwrap();
        let dist = Distribution::weibull(p);
        for n in [2usize, 10, 50] {
            let t = card_thresholds(&dist, n, RHO).unwrap();
            for (i, &m) in t.m.iter().enumerate() {
                // Load below m is P(1 + 1/b, (m/a)^b); evaluated with statrs.
                let oracle = statrs::function::gamma::gamma_lr(1.0 + 1.0 / p.shape_b, (m / p.scale_a).powf(p.shape_b));
                let target = (i as f64 + 0.5) / n as f64;
                worst = worst.max((oracle - target).abs());
            }
            for (c, m) in t.c.iter().zip(&t.m) {
                c_exact &= *c == *m / (1.0 - RHO).sqrt();
            }
        }
    }
    // Independent root-find on 1 - (1 + m) e^{-m} = 1/4, 3/4.
    let root = |target: f64| {
        let (mut lo, mut hi) = (0.0f64, 50.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - (1.0 + mid) * (-mid).exp() < target {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    };
    let exp = card_thresholds(&Distribution::weibull(fit_weibull(1.0, 1.0).unwrap()), 2, RHO).unwrap();
    let oracle = (root(0.25), root(0.75));
    let close = (exp.m[0] - oracle.0).abs() < 1e-6
        && (exp.m[1] - oracle.1).abs() < 1e-6
        && (exp.m[0] - 0.961).abs() < 1e-3
        && (exp.m[1] - 2.693).abs() < 1e-3;
    check(
        worst <= 2e-9 && c_exact && close,
        format!(
            "max band error {worst:.2e} (limit 2e-9), c exact: {c_exact}, exponential n=2 m = ({:.4}, {:.4})",
            exp.m[0], exp.m[1]
        ),
    )
}

fn policy_ordering() -> Outcome {
    let specs = [single(RR), single(JIQ), single(LWL)];
    let low = compare(1.0, 10, 2_000_000, 3, SEED, &specs);
    let high = compare(10.0, 10, 2_000_000, 3, SEED, &specs);
    let (rr1, jiq1, lwl1) = (low[0], low[1], low[2]);
    let (rr10, jiq10, lwl10) = (high[0], high[1], high[2]);
    let gap1 = (jiq1 - lwl1).abs() / jiq1.min(lwl1);
    let cov1 = lwl1 <= jiq1 && jiq1 < rr1 && gap1 <= 0.10;
    let cov10 = lwl10 < jiq10 && jiq10 < rr10 && rr10 >= 2.0 * lwl10;
    check(
        cov1 && cov10,
        format!(
            "COV=1: RR {rr1:.2}, JIQ {jiq1:.2}, LWL {lwl1:.2} (JIQ-LWL gap {:.1}%, limit 10%); COV=10: RR {rr10:.1}, JIQ {jiq10:.1}, LWL {lwl10:.1}",
            100.0 * gap1
        ),
    )
}

fn two_stage_gain() -> Outcome {
    // Search on one realization, then validate on fresh ones.
    let grid = TwoStageGrid::default();
    let options = RunOptions::default();
    let mut found = Vec::new();
    for inner in [RR, JIQ, LWL] {
        let spec = WorkloadSpec::Synthetic {
            cov: 10.0,
            jobs: 1_000_000,
        };
        let best = optimize_two_stage(inner, 10, RHO, spec, &grid, 1, SEED, &options).unwrap();
        found.push(PolicySpec::two_stage(inner, best.n1, best.theta).unwrap());
    }
    let mut specs = vec![single(RR), single(JIQ), single(LWL), single(CARD)];
    specs.extend(found.iter().copied());
    let m = compare(10.0, 10, 2_000_000, 3, SEED + 1, &specs);
    let (rr, jiq, lwl, card) = (m[0], m[1], m[2], m[3]);
    let (trr, tjiq, tlwl) = (m[4], m[5], m[6]);
    let ok = trr <= 0.7 * rr && tjiq < jiq && tlwl < lwl && card <= rr && card <= jiq && card <= lwl;
    let labels: Vec<String> = found.iter().map(|s| s.label()).collect();
    check(
        ok,
        format!(
            "RR {rr:.1} -> {trr:.1} ({:.0}% gain, need 30%), JIQ {jiq:.1} -> {tjiq:.1}, LWL {lwl:.1} -> {tlwl:.1}, CARD {card:.1}; chosen {}",
            100.0 * (1.0 - trr / rr),
            labels.join(" ")
        ),
    )
}

fn large_n() -> Outcome {
    let m = compare(10.0, 100, 2_000_000, 3, SEED, &[single(RR), single(JIQ), single(LWL)]);
    let (rr, jiq, lwl) = (m[0], m[1], m[2]);
    let gap = (jiq - lwl).abs() / jiq.min(lwl);
    check(
        gap <= 0.15 && jiq < 0.5 * rr && lwl < 0.5 * rr,
        format!("RR {rr:.0}, JIQ {jiq:.1}, LWL {lwl:.1} (JIQ-LWL gap {:.1}%, limit 15%)", 100.0 * gap),
    )
}

fn engine_invariants() -> Outcome {
    let checked = RunOptions {
        warmup: Warmup::Jobs(0),
        record_log: true,
        check_invariants: true,
        ..RunOptions::default()
    };
    let mut runs = 0;
    for cov in [1.0, 10.0] {
        let dist = Distribution::weibull(fit_weibull(1.0, cov).unwrap());
        for n in [1usize, 2, 5, 10] {
            let card = card_thresholds(&dist, n, RHO).unwrap();
            for rep in 0..3 {
                let seed = replication_seed(SEED, rep);
                let w = workload(cov, 1000, seed);
                let config = calibrate_mu(&w, n, RHO).unwrap();
                let mut specs: Vec<PolicySpec<f64>> = PolicyKind::ALL.iter().map(|&k| single(k)).collect();
                if n >= 2 {
                    let theta = dist.quantile(0.9).unwrap();
                    for k in [RR, JIQ, LWL] {
                        specs.push(PolicySpec::two_stage(k, n / 2, theta).unwrap());
                    }
                }
                for spec in &specs {
                    let r = run(&w, &config, spec, Some(&card), seed, &checked)
                        .map_err(|e| format!("{} n={n} cov={cov}: {e}", spec.label()))?;
                    runs += 1;
                    let log = r.log.as_ref().unwrap();
                    let mut seen = BTreeMap::new();
                    for t in log {
                        if seen.insert((t.job_id, t.task_index), t.completion_time).is_some() {
                            return Err(format!("task completed twice under {}", spec.label()));
                        }
                    }
                    if seen.len() != w.task_count() {
                        return Err(format!("{} lost tasks", spec.label()));
                    }
                    for s in &r.servers {
                        let served = s.busy_time * config.mu;
                        if (served - s.work_done).abs() > 1e-9 * s.work_done.max(1.0) {
                            return Err(format!("work not conserved on server {}", s.server_id));
                        }
                    }
                }
                if n >= 2 {
                    for k in [RR, JIQ, LWL] {
                        for n1 in 1..n {
                            let two = PolicySpec::two_stage(k, n1, f64::INFINITY).unwrap();
                            let a = run(&w, &config, &two, None, seed, &checked).unwrap();
                            let small = ClusterConfig {
                                n: n1,
                                total_capacity: n1 as f64 * config.mu,
                                ..config
                            };
                            let b = run(&w, &small, &single(k), None, seed, &checked).unwrap();
                            runs += 2;
                            let key = |r: &RunResult<f64>| {
                                let mut v: Vec<(u64, u32, u64)> = r
                                    .log
                                    .as_ref()
                                    .unwrap()
                                    .iter()
                                    .map(|t| (t.job_id, t.task_index, t.completion_time.to_bits()))
                                    .collect();
                                v.sort_unstable();
                                v
                            };
                            if key(&a) != key(&b) {
                                return Err(format!("θ=∞ two-stage {k} n1={n1} differs from single-stage"));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{runs} checked runs of 1000 jobs: W bookkeeping, FCFS order, work conservation, no task loss, θ=∞ equivalence"))
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_dispatchsim");
    let root = tempfile::tempdir().unwrap();
    let plan = root.path().join("plan.json");
    std::fs::write(
        &plan,
        r#"{"rho":[0.6,0.8],"n":[4],"policies":["rr","jiq","lwl","card","two_stage:lwl"],"cov":[10],"jobs":20000,
            "replications":2,"seed":42,"two_stage_grid":{"quantiles":[0.9,0.99]}}"#,
    )
    .unwrap();
    let run_all = |dir: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
        let commands: Vec<Vec<String>> = vec![
            vec!["fit-weibull".into(), "--cov".into(), "10".into()],
            vec!["gen-workload", "--cov", "10", "--rho", "0.8", "--jobs", "5000", "--seed", "42", "--out"]
                .into_iter()
                .map(String::from)
                .chain([p("w.csv")])
                .collect(),
            vec!["ingest-trace".into(), "--trace".into(), p("w.csv"), "--out".into(), p("canonical.csv")],
            vec!["card-thresholds", "--n", "10", "--rho", "0.8", "--cov", "10", "--out"]
                .into_iter()
                .map(String::from)
                .chain([p("card.json")])
                .collect(),
            vec!["simulate", "--policy", "card", "--n", "10", "--rho", "0.8", "--jobs", "20000", "--replications", "3", "--trace"]
                .into_iter()
                .map(String::from)
                .chain([p("w.csv"), "--out".into(), p("sim"), "--log".into(), p("log.csv")])
                .collect(),
            vec!["simulate", "--policy", "two_stage:jiq", "--theta-quantile", "0.99", "--n1", "7", "--n", "10", "--rho", "0.8", "--cov", "10", "--jobs", "20000", "--out"]
                .into_iter()
                .map(String::from)
                .chain([p("ts")])
                .collect(),
            vec!["sweep".into(), "--plan".into(), plan.to_str().unwrap().into(), "--out".into(), p("sweep")],
            vec!["figure".into(), "--results".into(), p("sweep.json"), "--kind".into(), "rho-curve".into(), "--out".into(), p("fig.csv")],
            vec!["optimize-two-stage", "--inner", "rr", "--n", "4", "--rho", "0.8", "--cov", "10", "--jobs", "10000", "--replications", "2", "--quantiles", "0.9,0.99", "--out"]
                .into_iter()
                .map(String::from)
                .chain([p("opt")])
                .collect(),
        ];
        let mut captured = Vec::new();
        for args in commands {
            let out = Command::new(bin).args(&args).output().map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
            }
            captured.push((format!("stdout of {}", args[0]), out.stdout));
        }
        let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names {
            let path = dir.join(&name);
            captured.push((name.to_string_lossy().into_owned(), std::fs::read(path).unwrap()));
        }
        Ok(captured)
    };
    let a = root.path().join("a");
    let b = root.path().join("b");
    std::fs::create_dir(&a).unwrap();
    std::fs::create_dir(&b).unwrap();
    let first = run_all(&a)?;
    let second = run_all(&b)?;
    // Paths differ between the two directories; compare with them masked.
    let mask = |v: &[u8], dir: &Path| String::from_utf8_lossy(v).replace(dir.to_str().unwrap(), "<dir>");
    let mut compared = 0;
    for ((na, va), (nb, vb)) in first.iter().zip(&second) {
        if na != nb || mask(va, &a) != mask(vb, &b) {
            return Err(format!("{na} differs between identical invocations"));
        }
        compared += 1;
    }
    check(
        first.len() == second.len() && compared >= 20,
        format!("{compared} outputs byte-identical across two invocations of 9 commands"),
    )
}

fn trace_pipeline() -> Outcome {
    // n = 2, μ = 1 (13 units of work over a 10 s horizon at ρ = 0.65).
    // RR over task arrivals: S1 gets J1T0, J2T0, J2T2; S2 gets J1T1, J2T1, J3T0.
    // S1: 0→4, 4→7, 7→9.  S2: 0→2, 2→3, 5→6.
    let text = "# horizon=10\njob_id,arrival_time,task_index,size\n\
                1,0,0,4\n1,0,1,2\n2,1,0,3\n2,1,1,1\n2,1,2,2\n3,5,0,1\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hand.csv");
    std::fs::write(&path, text).unwrap();
    let w: Workload<f64> = ingest_trace(&path).unwrap();
    let config = calibrate_mu(&w, 2, 0.65).unwrap();
    let options = RunOptions {
        warmup: Warmup::Jobs(0),
        record_log: true,
        check_invariants: true,
        ..RunOptions::default()
    };
    let r = run(&w, &config, &single(RR), None, SEED, &options).unwrap();
    let expected_completions: BTreeMap<(u64, u32), f64> = [
        ((1, 0), 4.0),
        ((1, 1), 2.0),
        ((2, 0), 7.0),
        ((2, 1), 3.0),
        ((2, 2), 9.0),
        ((3, 0), 6.0),
    ]
    .into_iter()
    .collect();
    let got: BTreeMap<(u64, u32), f64> = r
        .log
        .as_ref()
        .unwrap()
        .iter()
        .map(|t| ((t.job_id, t.task_index), t.completion_time))
        .collect();
    let two_task = &w.jobs()[0];
    let from_log = job_response(two_task, &[got.get(&(1, 0)).copied(), got.get(&(1, 1)).copied()]).unwrap();
    check(
        config.mu == 1.0 && got == expected_completions && r.responses == vec![4.0, 8.0, 1.0] && from_log == 4.0,
        format!("job responses {:?} (expected [4, 8, 1]), mrt {:.4}", r.responses, r.mrt),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("M/M/1 oracle equivalence", mm1_oracle),
        ("P-K heavy-tail oracle", pk_heavy_tail),
        ("Weibull fit", weibull_fit),
        ("CARD threshold bands", card_bands),
        ("policy ordering at n=10", policy_ordering),
        ("two-stage gain", two_stage_gain),
        ("large-n convergence", large_n),
        ("engine invariants", engine_invariants),
        ("CLI determinism", cli_determinism),
        ("trace pipeline", trace_pipeline),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
