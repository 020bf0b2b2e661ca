//! Discrete-event core.
//!
//! Tasks arrive, are dispatched immediately, queue FCFS at one server and
//! leave when served. In two-stage mode a first-stage server only ever
//! performs `min(S, θ)` of a task; a task with `S > θ` is then handed to the
//! second stage, where it restarts from scratch.
//!
//! Events are ordered by `(time, sequence)`; the sequence number is assigned
//! at insertion, so runs are bit-for-bit reproducible.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::CardThresholds;
use crate::error::{Error, Result};
use crate::metrics::{self, RunResult};
use crate::policies::{DispatchPolicy, InfoNeed, PolicySpec, ServerView};
use crate::rng::{stream, Component, StreamRng};
use crate::scalar::Scalar;
use crate::workload::{ClusterConfig, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    TaskArrival { job: u32, task: u32 },
    ServiceCompletion { server: u32 },
    StageTransfer { job: u32, task: u32, from: u32 },
}

#[derive(Debug, Clone, Copy)]
pub struct Event<T> {
    pub time: T,
    pub sequence: u64,
    pub kind: EventKind,
}

impl<T: Scalar> PartialEq for Event<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Event<T> {}

impl<T: Scalar> PartialOrd for Event<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Event<T> {
    // Reversed so that BinaryHeap pops the earliest (time, sequence).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .partial_cmp(&self.time)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Pending events, popped in `(time, sequence)` order.
#[derive(Debug, Default)]
pub struct EventCalendar<T: Scalar> {
    heap: BinaryHeap<Event<T>>,
    next_sequence: u64,
}

impl<T: Scalar> EventCalendar<T> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_sequence: 0,
        }
    }

    pub fn schedule(&mut self, time: T, kind: EventKind) {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event {
            time,
            sequence,
            kind,
        });
    }

    pub fn pop(&mut self) -> Option<Event<T>> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct Queued<T> {
    job: u32,
    task: u32,
    /// Stage-local service requirement in size units.
    requirement: T,
    start: T,
    completion: T,
    /// Stage-one server, for tasks that migrated.
    first_server: Option<u32>,
    ticket: u64,
}

/// One FCFS server.
#[derive(Debug, Clone)]
pub struct ServerState<T> {
    pub server_id: usize,
    pub stage: usize,
    pub speed: T,
    queue: VecDeque<Queued<T>>,
    busy_until: T,
    next_ticket: u64,
    served_ticket: u64,
    busy_time: T,
    work_done: T,
    completed: u64,
}

impl<T: Scalar> ServerState<T> {
    fn new(server_id: usize, stage: usize, speed: T) -> Self {
        Self {
            server_id,
            stage,
            speed,
            queue: VecDeque::new(),
            busy_until: T::zero(),
            next_ticket: 0,
            served_ticket: 0,
            busy_time: T::zero(),
            work_done: T::zero(),
            completed: 0,
        }
    }

    pub fn is_busy(&self) -> bool {
        !self.queue.is_empty()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// W_j(now): size units still to be served here.
    pub fn unfinished_work(&self, now: T) -> T {
        if self.queue.is_empty() {
            T::zero()
        } else {
            ((self.busy_until - now) * self.speed).max(T::zero())
        }
    }

    /// W_j(now) recomputed from the queue contents.
    pub fn unfinished_work_from_queue(&self, now: T) -> T {
        let mut iter = self.queue.iter();
        let Some(head) = iter.next() else {
            return T::zero();
        };
        let head_left = if now <= head.start {
            head.requirement
        } else {
            (head.completion - now) * self.speed
        };
        head_left + iter.map(|q| q.requirement).sum::<T>()
    }

    /// Returns the completion time when the server was idle, i.e. when a
    /// completion event must be scheduled.
    fn enqueue(&mut self, job: u32, task: u32, requirement: T, first_server: Option<u32>, now: T) -> Option<T> {
        let was_idle = self.queue.is_empty();
        let start = if was_idle { now } else { self.busy_until };
        let completion = start + requirement / self.speed;
        self.busy_until = completion;
        self.queue.push_back(Queued {
            job,
            task,
            requirement,
            start,
            completion,
            first_server,
            ticket: self.next_ticket,
        });
        self.next_ticket += 1;
        was_idle.then_some(completion)
    }
}

/// Per-server totals at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ServerStats<T> {
    pub server_id: usize,
    pub stage: usize,
    pub busy_time: T,
    /// Stage-local requirement of every task served here.
    pub work_done: T,
    pub completed: u64,
}

/// A task that left the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskInstance<T> {
    pub job_id: u64,
    pub task_index: u32,
    pub size: T,
    /// Requirement served in the stage where the task completed.
    pub stage_requirement: T,
    pub arrival_time: T,
    /// Stage-one server for migrated tasks, otherwise the only server.
    pub first_server: usize,
    pub final_server: usize,
    /// 1 or 2.
    pub stage: u8,
    pub completion_time: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warmup {
    /// Fraction of injected jobs, rounded down.
    Fraction(f64),
    Jobs(usize),
}

impl Default for Warmup {
    fn default() -> Self {
        Warmup::Fraction(0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StopRule {
    #[default]
    AllJobs,
    /// Inject only the first `k` jobs.
    JobCount(usize),
    /// Inject only jobs arriving at or before this time.
    Horizon(f64),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub warmup: Warmup,
    pub stop: StopRule,
    pub record_log: bool,
    /// Recheck engine and dispatcher invariants after every event. Slow.
    pub check_invariants: bool,
}

struct Stage<T: Scalar> {
    offset: usize,
    len: usize,
    threshold: Option<T>,
    policy: Box<dyn DispatchPolicy<T>>,
    rng: StreamRng,
    work: Vec<T>,
}

struct Simulation<'a, T: Scalar> {
    workload: &'a Workload<T>,
    stages: Vec<Stage<T>>,
    servers: Vec<ServerState<T>>,
    busy: Vec<bool>,
    calendar: EventCalendar<T>,
    remaining: Vec<u32>,
    last_completion: Vec<T>,
    transfers: u64,
    log: Option<Vec<TaskInstance<T>>>,
    check: bool,
}

impl<T: Scalar> Simulation<'_, T> {
    fn dispatch(&mut self, stage_idx: usize, job: u32, task: u32, first_server: Option<u32>, now: T) -> Result<()> {
        let size = self.workload.jobs()[job as usize].tasks[task as usize].size;
        let stage = &mut self.stages[stage_idx];
        let range = stage.offset..stage.offset + stage.len;
        let need = stage.policy.info_need();
        stage.work.clear();
        if need >= InfoNeed::UnfinishedWork {
            stage
                .work
                .extend(self.servers[range.clone()].iter().map(|s| s.unfinished_work(now)));
        }
        let view = ServerView {
            busy: &self.busy[range],
            unfinished_work: &stage.work,
        };
        let size_hint = (need == InfoNeed::Size).then_some(size);
        let local = stage.policy.choose(size_hint, &view, &mut stage.rng);
        if local >= stage.len {
            return Err(Error::PolicyOutOfRange {
                policy: stage.policy.name(),
                index: local,
                stage_size: stage.len,
            });
        }
        let requirement = match stage.threshold {
            Some(theta) if size > theta => theta,
            _ => size,
        };
        stage.policy.on_assign(local, requirement);
        let server = stage.offset + local;
        self.busy[server] = true;
        if let Some(done) = self.servers[server].enqueue(job, task, requirement, first_server, now) {
            self.calendar.schedule(done, EventKind::ServiceCompletion { server: server as u32 });
        }
        Ok(())
    }

    fn complete(&mut self, server: usize, now: T) -> Result<()> {
        let state = &mut self.servers[server];
        let done = state.queue.pop_front().ok_or_else(|| {
            Error::InvariantViolation(format!("completion on empty server {server}"))
        })?;
        if self.check && done.ticket != state.served_ticket {
            return Err(Error::InvariantViolation(format!(
                "server {server} served ticket {} before {}",
                done.ticket, state.served_ticket
            )));
        }
        state.served_ticket += 1;
        state.busy_time += now - done.start;
        state.work_done += done.requirement;
        state.completed += 1;
        let stage_idx = state.stage;
        if let Some(next) = state.queue.front() {
            let at = next.completion;
            self.calendar.schedule(at, EventKind::ServiceCompletion { server: server as u32 });
        } else {
            self.busy[server] = false;
            let stage = &mut self.stages[stage_idx];
            stage.policy.on_server_idle(server - stage.offset);
        }

        let job = &self.workload.jobs()[done.job as usize];
        let spec = job.tasks[done.task as usize];
        let migrates = matches!(self.stages[stage_idx].threshold, Some(theta) if spec.size > theta);
        if migrates {
            self.transfers += 1;
            self.calendar.schedule(
                now,
                EventKind::StageTransfer {
                    job: done.job,
                    task: done.task,
                    from: server as u32,
                },
            );
            return Ok(());
        }
        let j = done.job as usize;
        self.remaining[j] -= 1;
        if now > self.last_completion[j] {
            self.last_completion[j] = now;
        }
        if let Some(log) = self.log.as_mut() {
            log.push(TaskInstance {
                job_id: job.job_id,
                task_index: spec.task_index,
                size: spec.size,
                stage_requirement: done.requirement,
                arrival_time: job.arrival_time,
                first_server: done.first_server.map_or(server, |s| s as usize),
                final_server: server,
                stage: stage_idx as u8 + 1,
                completion_time: now,
            });
        }
        Ok(())
    }

    fn verify(&self, now: T) -> Result<()> {
        for s in &self.servers {
            if self.busy[s.server_id] != s.is_busy() {
                return Err(Error::InvariantViolation(format!(
                    "server {} busy flag disagrees with its queue at t={now}",
                    s.server_id
                )));
            }
            let tracked = s.unfinished_work(now);
            let brute = s.unfinished_work_from_queue(now);
            let tol = T::of(1e-9) * brute.abs().max(T::one());
            if (tracked - brute).abs() > tol {
                return Err(Error::InvariantViolation(format!(
                    "server {} work {tracked} but queue holds {brute} at t={now}",
                    s.server_id
                )));
            }
        }
        for stage in &self.stages {
            if let Some(bits) = stage.policy.idle_table() {
                for (local, &bit) in bits.iter().enumerate() {
                    if bit && self.busy[stage.offset + local] {
                        return Err(Error::InvariantViolation(format!(
                            "idle bit set for busy server {} at t={now}",
                            stage.offset + local
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Simulates `workload` on the cluster under `policy`.
///
/// `card` must be supplied for CARD and must match the cluster size.
/// `seed` drives the dispatcher's randomness only; the workload is fixed.
pub fn run<T: Scalar>(
    workload: &Workload<T>,
    config: &ClusterConfig<T>,
    policy: &PolicySpec<T>,
    card: Option<&CardThresholds<T>>,
    seed: u64,
    options: &RunOptions,
) -> Result<RunResult<T>> {
    policy.validate(config.n)?;
    if !(config.mu > T::zero()) || !config.mu.is_finite() {
        return Err(Error::invalid(format!("server speed must be positive, got {}", config.mu)));
    }
    if workload.job_count() > u32::MAX as usize {
        return Err(Error::invalid("workload has too many jobs"));
    }

    let jobs = workload.jobs();
    let injected = match options.stop {
        StopRule::AllJobs => jobs.len(),
        StopRule::JobCount(k) => k.min(jobs.len()),
        StopRule::Horizon(h) => jobs.partition_point(|j| j.arrival_time.to_f64_lossy() <= h),
    };
    let warmup = match options.warmup {
        Warmup::Fraction(f) => {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::invalid(format!("warm-up fraction must lie in [0, 1), got {f}")));
            }
            (injected as f64 * f).floor() as usize
        }
        Warmup::Jobs(w) => w,
    };
    if injected == 0 || warmup >= injected {
        return Err(Error::invalid(format!(
            "no jobs left to measure ({injected} injected, {warmup} warm-up)"
        )));
    }

    let layout: Vec<(usize, usize, Option<T>)> = match policy {
        PolicySpec::Single { .. } => vec![(0, config.n, None)],
        PolicySpec::TwoStage(t) => vec![(0, t.n1, Some(t.theta)), (t.n1, config.n - t.n1, None)],
    };
    let mut stages = Vec::with_capacity(layout.len());
    let mut servers = Vec::with_capacity(config.n);
    for (idx, &(offset, len, threshold)) in layout.iter().enumerate() {
        stages.push(Stage {
            offset,
            len,
            threshold,
            policy: policy.inner().build(len, card)?,
            rng: stream(seed, Component::Policy, idx as u64),
            work: Vec::with_capacity(len),
        });
        servers.extend((offset..offset + len).map(|id| ServerState::new(id, idx, config.mu)));
    }

    let mut sim = Simulation {
        workload,
        stages,
        servers,
        busy: vec![false; config.n],
        calendar: EventCalendar::new(),
        remaining: jobs[..injected].iter().map(|j| j.tasks.len() as u32).collect(),
        last_completion: vec![T::neg_infinity(); injected],
        transfers: 0,
        log: options.record_log.then(Vec::new),
        check: options.check_invariants,
    };

    sim.calendar
        .schedule(jobs[0].arrival_time, EventKind::TaskArrival { job: 0, task: 0 });
    while let Some(event) = sim.calendar.pop() {
        let now = event.time;
        match event.kind {
            EventKind::TaskArrival { job, task } => {
                sim.dispatch(0, job, task, None, now)?;
                let (j, t) = (job as usize, task as usize);
                if t + 1 < jobs[j].tasks.len() {
                    sim.calendar
                        .schedule(now, EventKind::TaskArrival { job, task: task + 1 });
                } else if j + 1 < injected {
                    sim.calendar.schedule(
                        jobs[j + 1].arrival_time,
                        EventKind::TaskArrival {
                            job: job + 1,
                            task: 0,
                        },
                    );
                }
            }
            EventKind::ServiceCompletion { server } => sim.complete(server as usize, now)?,
            EventKind::StageTransfer { job, task, from } => {
                sim.dispatch(1, job, task, Some(from), now)?
            }
        }
        if sim.check {
            sim.verify(now)?;
        }
    }

    for (j, &left) in sim.remaining.iter().enumerate() {
        if left != 0 {
            let job = &jobs[j];
            return Err(Error::MissingCompletion {
                job_id: job.job_id,
                task_index: job.tasks[job.tasks.len() - left as usize].task_index,
            });
        }
    }
    let stats: Vec<ServerStats<T>> = sim
        .servers
        .iter()
        .map(|s| ServerStats {
            server_id: s.server_id,
            stage: s.stage,
            busy_time: s.busy_time,
            work_done: s.work_done,
            completed: s.completed,
        })
        .collect();
    if sim.check {
        for s in &stats {
            let served = s.busy_time * config.mu;
            if (served - s.work_done).abs() > T::of(1e-9) * s.work_done.max(T::one()) {
                return Err(Error::InvariantViolation(format!(
                    "server {} served {served} but completed work {}",
                    s.server_id, s.work_done
                )));
            }
        }
    }

    let responses: Vec<T> = jobs[warmup..injected]
        .iter()
        .zip(&sim.last_completion[warmup..])
        .map(|(job, &done)| done - job.arrival_time)
        .collect();
    let reference = metrics::mg1_reference(workload, config)?;
    Ok(RunResult::new(
        policy.label(),
        config.n,
        seed,
        config_hash(workload, config, policy, seed, warmup, injected),
        warmup,
        responses,
        reference,
        sim.transfers,
        stats,
        sim.log,
    ))
}

fn config_hash<T: Scalar>(
    workload: &Workload<T>,
    config: &ClusterConfig<T>,
    policy: &PolicySpec<T>,
    seed: u64,
    warmup: usize,
    injected: usize,
) -> String {
    let canonical = format!(
        "n={};mu={:e};rho={:e};policy={};seed={seed};warmup={warmup};jobs={injected};tasks={};horizon={:e};source={:?}",
        config.n,
        config.mu,
        config.target_rho,
        policy.label(),
        workload.task_count(),
        workload.horizon(),
        workload.source(),
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::PolicyKind;
    use crate::workload::{JobSpec, TaskSpec, WorkloadSource};

    fn trace(jobs: &[(f64, &[f64])]) -> Workload<f64> {
        let specs = jobs
            .iter()
            .enumerate()
            .map(|(k, (t, sizes))| JobSpec {
                job_id: k as u64,
                arrival_time: *t,
                tasks: sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &size)| TaskSpec {
                        task_index: i as u32,
                        size,
                    })
                    .collect(),
            })
            .collect();
        Workload::new(specs, Some(100.0), WorkloadSource::Trace).unwrap()
    }

    fn cluster(n: usize, mu: f64) -> ClusterConfig<f64> {
        ClusterConfig {
            n,
            mu,
            total_capacity: n as f64 * mu,
            target_rho: 0.5,
            arrival_rate: 0.1,
            offered_load: 0.5 * n as f64 * mu,
        }
    }

    fn all_jobs() -> RunOptions {
        RunOptions {
            warmup: Warmup::Jobs(0),
            record_log: true,
            check_invariants: true,
            ..RunOptions::default()
        }
    }

    fn completions(r: &RunResult<f64>) -> Vec<f64> {
        r.log.as_ref().unwrap().iter().map(|t| t.completion_time).collect()
    }

    #[test]
    fn calendar_orders_by_time_then_sequence() {
        let mut cal = EventCalendar::new();
        cal.schedule(2.0, EventKind::ServiceCompletion { server: 0 });
        cal.schedule(1.0, EventKind::ServiceCompletion { server: 1 });
        cal.schedule(1.0, EventKind::ServiceCompletion { server: 2 });
        let order: Vec<u64> = std::iter::from_fn(|| cal.pop()).map(|e| e.sequence).collect();
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn fcfs_single_server() {
        let w = trace(&[(0.0, &[3.0]), (1.0, &[1.0])]);
        let p = PolicySpec::single(PolicyKind::RoundRobin);
        let r = run(&w, &cluster(1, 1.0), &p, None, 1, &all_jobs()).unwrap();
        assert_eq!(completions(&r), vec![3.0, 4.0]);
        assert_eq!(r.responses, vec![3.0, 3.0]);
    }

    #[test]
    fn service_time_scales_with_speed() {
        let w = trace(&[(0.0, &[3.0])]);
        let p = PolicySpec::single(PolicyKind::RoundRobin);
        let r = run(&w, &cluster(1, 2.0), &p, None, 1, &all_jobs()).unwrap();
        assert_eq!(completions(&r), vec![1.5]);
    }

    #[test]
    fn lwl_hand_trace() {
        // n=2 idle servers, sizes 5 then 1 at t=0,1: second job goes to the
        // idle server and never waits.
        let w = trace(&[(0.0, &[5.0]), (1.0, &[1.0])]);
        let p = PolicySpec::single(PolicyKind::LeastWorkLeft);
        let r = run(&w, &cluster(2, 1.0), &p, None, 3, &all_jobs()).unwrap();
        assert_eq!(r.responses, vec![5.0, 1.0]);
    }

    #[test]
    fn two_stage_migration_times() {
        // S=10, θ=3, μ=0.5: 6 s in stage one then 20 s in stage two.
        let w = trace(&[(0.0, &[10.0]), (0.0, &[2.0]), (0.0, &[3.0])]);
        let p = PolicySpec::two_stage(PolicyKind::RoundRobin, 3, 3.0).unwrap();
        let r = run(&w, &cluster(4, 0.5), &p, None, 1, &all_jobs()).unwrap();
        let log = r.log.as_ref().unwrap();
        let big = log.iter().find(|t| t.job_id == 0).unwrap();
        assert_eq!(big.completion_time, 26.0);
        assert_eq!(big.stage, 2);
        assert_eq!(big.first_server, 0);
        assert_eq!(big.final_server, 3);
        let small = log.iter().find(|t| t.job_id == 1).unwrap();
        assert_eq!((small.stage, small.completion_time), (1, 4.0));
        // S = θ stays in stage one
        let edge = log.iter().find(|t| t.job_id == 2).unwrap();
        assert_eq!((edge.stage, edge.completion_time), (1, 6.0));
        assert_eq!(r.transfers, 1);
        assert_eq!(r.servers[0].work_done, 3.0);
        assert_eq!(r.servers[3].work_done, 10.0);
    }

    #[test]
    fn infinite_threshold_never_migrates() {
        let w = trace(&[(0.0, &[50.0]), (1.0, &[2.0])]);
        let p = PolicySpec::two_stage(PolicyKind::JoinIdleQueue, 1, f64::INFINITY).unwrap();
        let r = run(&w, &cluster(3, 1.0), &p, None, 1, &all_jobs()).unwrap();
        assert_eq!(r.transfers, 0);
        assert!(r.servers[1..].iter().all(|s| s.completed == 0));
    }

    #[test]
    fn multi_task_job_response_is_last_task() {
        let w = trace(&[(2.0, &[3.0, 7.0, 5.0])]);
        let p = PolicySpec::single(PolicyKind::RoundRobin);
        let r = run(&w, &cluster(3, 1.0), &p, None, 1, &all_jobs()).unwrap();
        assert_eq!(r.responses, vec![7.0]);
    }

    #[test]
    fn rejects_incompatible_setups() {
        let w = trace(&[(0.0, &[1.0])]);
        let p = PolicySpec::two_stage(PolicyKind::RoundRobin, 2, 1.0).unwrap();
        assert!(run(&w, &cluster(2, 1.0), &p, None, 1, &all_jobs()).is_err());
        let card = PolicySpec::single(PolicyKind::Card);
        assert!(matches!(
            run(&w, &cluster(2, 1.0), &card, None, 1, &all_jobs()),
            Err(Error::IncompatiblePolicy(_))
        ));
    }

    struct Rogue;

    impl DispatchPolicy<f64> for Rogue {
        fn name(&self) -> &'static str {
            "rogue"
        }
        fn info_need(&self) -> InfoNeed {
            InfoNeed::Nothing
        }
        fn choose(&mut self, _: Option<f64>, view: &ServerView<'_, f64>, _: &mut StreamRng) -> usize {
            view.len()
        }
    }

    #[test]
    fn out_of_range_choice_aborts() {
        let w = trace(&[(0.0, &[1.0])]);
        let mut sim = Simulation {
            workload: &w,
            stages: vec![Stage {
                offset: 0,
                len: 2,
                threshold: None,
                policy: Box::new(Rogue),
                rng: stream(1, Component::Policy, 0),
                work: Vec::new(),
            }],
            servers: (0..2).map(|i| ServerState::new(i, 0, 1.0)).collect(),
            busy: vec![false; 2],
            calendar: EventCalendar::new(),
            remaining: vec![1],
            last_completion: vec![0.0],
            transfers: 0,
            log: None,
            check: false,
        };
        assert!(matches!(
            sim.dispatch(0, 0, 0, None, 0.0),
            Err(Error::PolicyOutOfRange { index: 2, stage_size: 2, .. })
        ));
    }

    #[test]
    fn stop_rules_and_warmup() {
        let w = trace(&[(0.0, &[1.0]), (1.0, &[1.0]), (2.0, &[1.0]), (3.0, &[1.0])]);
        let p = PolicySpec::single(PolicyKind::RoundRobin);
        let opts = RunOptions {
            stop: StopRule::JobCount(3),
            warmup: Warmup::Jobs(1),
            ..RunOptions::default()
        };
        let r = run(&w, &cluster(1, 1.0), &p, None, 1, &opts).unwrap();
        assert_eq!((r.job_count, r.warmup_jobs), (2, 1));
        let opts = RunOptions {
            stop: StopRule::Horizon(1.5),
            warmup: Warmup::Jobs(0),
            ..RunOptions::default()
        };
        assert_eq!(run(&w, &cluster(1, 1.0), &p, None, 1, &opts).unwrap().job_count, 2);
        let opts = RunOptions {
            warmup: Warmup::Jobs(4),
            ..RunOptions::default()
        };
        assert!(run(&w, &cluster(1, 1.0), &p, None, 1, &opts).is_err());
    }
}
