//! Dispatch policies.
//!
//! Every policy answers one question: which server of its stage gets the
//! task that just arrived. The engine tells each policy only what it has
//! declared it needs (see [`InfoNeed`]); size-agnostic policies never see
//! the task size.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::CardThresholds;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::scalar::Scalar;

/// Information a policy consumes at decision time, in increasing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum InfoNeed {
    Nothing,
    IdleBits,
    UnfinishedWork,
    Size,
}

/// What the dispatcher can observe about the servers of one stage.
#[derive(Debug, Clone, Copy)]
pub struct ServerView<'a, T> {
    pub busy: &'a [bool],
    /// W_j at the decision instant. Empty unless the policy asked for work.
    pub unfinished_work: &'a [T],
}

impl<T> ServerView<'_, T> {
    pub fn len(&self) -> usize {
        self.busy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.busy.is_empty()
    }
}

pub trait DispatchPolicy<T: Scalar>: Send {
    fn name(&self) -> &'static str;

    fn info_need(&self) -> InfoNeed;

    /// Index within the stage, `0..view.len()`.
    fn choose(&mut self, task_size: Option<T>, view: &ServerView<'_, T>, rng: &mut StreamRng)
        -> usize;

    fn on_server_idle(&mut self, _server: usize) {}

    fn on_assign(&mut self, _server: usize, _requirement: T) {}

    /// The dispatcher's idle table, for policies that keep one.
    fn idle_table(&self) -> Option<&[bool]> {
        None
    }
}

/// Server for the `k`-th arrival (k ≥ 1) under round robin, 1-based.
pub fn rr_choose(k: u64, n: usize) -> usize {
    assert!(k >= 1 && n >= 1);
    1 + ((k - 1) % n as u64) as usize
}

/// Join-Idle-Queue decision on the dispatcher's bit table (0-based).
///
/// Picks uniformly among set bits and clears the chosen one; with no bit set
/// the pick is uniform over all servers and the table is untouched.
pub fn jiq_choose(idle_bits: &mut [bool], rng: &mut StreamRng) -> usize {
    let idle = idle_bits.iter().filter(|&&b| b).count();
    if idle == 0 {
        return rng.random_range(0..idle_bits.len());
    }
    let pick = rng.random_range(0..idle);
    let server = idle_bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .nth(pick)
        .map(|(i, _)| i)
        .expect("pick < idle count");
    idle_bits[server] = false;
    server
}

/// Least-Work-Left: argmin of `work`, ties broken uniformly (0-based).
pub fn lwl_choose<T: Scalar>(work: &[T], rng: &mut StreamRng) -> usize {
    let mut best = T::infinity();
    let mut ties = 0usize;
    let mut first = 0usize;
    for (i, &w) in work.iter().enumerate() {
        if w < best {
            best = w;
            ties = 1;
            first = i;
        } else if w == best {
            ties += 1;
        }
    }
    if ties <= 1 {
        return first;
    }
    let pick = rng.random_range(0..ties);
    work.iter()
        .enumerate()
        .filter(|(_, &w)| w == best)
        .nth(pick)
        .map(|(i, _)| i)
        .expect("pick < tie count")
}

/// Multi-band CARD decision (0-based).
pub fn card_choose<T: Scalar>(
    task_size: T,
    work: &[T],
    thresholds: &CardThresholds<T>,
    rng: &mut StreamRng,
) -> usize {
    let mut order = Vec::with_capacity(work.len());
    card_choose_with(task_size, work, thresholds, rng, &mut order)
}

fn card_choose_with<T: Scalar>(
    task_size: T,
    work: &[T],
    thresholds: &CardThresholds<T>,
    rng: &mut StreamRng,
    order: &mut Vec<usize>,
) -> usize {
    let n = work.len();
    rank_by_work(work, rng, order);
    // Number of thresholds at or below the size: 0 is below m₁, n is at or
    // above mₙ, anything else is the band [mᵢ, mᵢ₊₁).
    let band = thresholds.m.partition_point(|&mi| mi <= task_size);
    let rank = if band == 0 {
        1
    } else if band >= n {
        n
    } else if work[order[band - 1]] <= thresholds.c[band - 1] {
        band
    } else {
        band + 1
    };
    order[rank - 1]
}

/// Fills `order` with server indices sorted by ascending work; equal work
/// values appear in uniformly random relative order.
fn rank_by_work<T: Scalar>(work: &[T], rng: &mut StreamRng, order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..work.len());
    order.sort_by(|&a, &b| work[a].partial_cmp(&work[b]).expect("finite work"));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && work[order[end]] == work[order[start]] {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].shuffle(rng);
        }
        start = end;
    }
}

#[derive(Debug, Clone)]
pub struct RoundRobin {
    servers: usize,
    arrivals: u64,
}

impl RoundRobin {
    pub fn new(servers: usize) -> Self {
        Self {
            servers,
            arrivals: 0,
        }
    }
}

impl<T: Scalar> DispatchPolicy<T> for RoundRobin {
    fn name(&self) -> &'static str {
        "rr"
    }

    fn info_need(&self) -> InfoNeed {
        InfoNeed::Nothing
    }

    fn choose(&mut self, _: Option<T>, _: &ServerView<'_, T>, _: &mut StreamRng) -> usize {
        self.arrivals += 1;
        rr_choose(self.arrivals, self.servers) - 1
    }
}

#[derive(Debug, Clone)]
pub struct JoinIdleQueue {
    idle_bits: Vec<bool>,
}

impl JoinIdleQueue {
    /// All bits start at 1.
    pub fn new(servers: usize) -> Self {
        Self {
            idle_bits: vec![true; servers],
        }
    }
}

impl<T: Scalar> DispatchPolicy<T> for JoinIdleQueue {
    fn name(&self) -> &'static str {
        "jiq"
    }

    fn info_need(&self) -> InfoNeed {
        InfoNeed::IdleBits
    }

    fn choose(&mut self, _: Option<T>, _: &ServerView<'_, T>, rng: &mut StreamRng) -> usize {
        jiq_choose(&mut self.idle_bits, rng)
    }

    fn on_server_idle(&mut self, server: usize) {
        self.idle_bits[server] = true;
    }

    fn idle_table(&self) -> Option<&[bool]> {
        Some(&self.idle_bits)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LeastWorkLeft;

impl<T: Scalar> DispatchPolicy<T> for LeastWorkLeft {
    fn name(&self) -> &'static str {
        "lwl"
    }

    fn info_need(&self) -> InfoNeed {
        InfoNeed::UnfinishedWork
    }

    fn choose(&mut self, _: Option<T>, view: &ServerView<'_, T>, rng: &mut StreamRng) -> usize {
        lwl_choose(view.unfinished_work, rng)
    }
}

#[derive(Debug, Clone)]
pub struct Card<T> {
    thresholds: CardThresholds<T>,
    order: Vec<usize>,
}

impl<T: Scalar> Card<T> {
    pub fn new(thresholds: CardThresholds<T>) -> Self {
        let n = thresholds.n();
        Self {
            thresholds,
            order: Vec::with_capacity(n),
        }
    }
}

impl<T: Scalar> DispatchPolicy<T> for Card<T> {
    fn name(&self) -> &'static str {
        "card"
    }

    fn info_need(&self) -> InfoNeed {
        InfoNeed::Size
    }

    fn choose(&mut self, size: Option<T>, view: &ServerView<'_, T>, rng: &mut StreamRng) -> usize {
        let size = size.expect("engine passes sizes to size-aware policies");
        card_choose_with(size, view.unfinished_work, &self.thresholds, rng, &mut self.order)
    }
}

/// Single-stage dispatching rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[serde(rename = "rr")]
    RoundRobin,
    #[serde(rename = "jiq")]
    JoinIdleQueue,
    #[serde(rename = "lwl")]
    LeastWorkLeft,
    Card,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::RoundRobin,
        PolicyKind::JoinIdleQueue,
        PolicyKind::LeastWorkLeft,
        PolicyKind::Card,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::RoundRobin => "rr",
            PolicyKind::JoinIdleQueue => "jiq",
            PolicyKind::LeastWorkLeft => "lwl",
            PolicyKind::Card => "card",
        }
    }

    pub fn info_need(self) -> InfoNeed {
        match self {
            PolicyKind::RoundRobin => InfoNeed::Nothing,
            PolicyKind::JoinIdleQueue => InfoNeed::IdleBits,
            PolicyKind::LeastWorkLeft => InfoNeed::UnfinishedWork,
            PolicyKind::Card => InfoNeed::Size,
        }
    }

    /// Instantiates the policy for a stage of `servers` servers.
    pub fn build<T: Scalar>(
        self,
        servers: usize,
        card: Option<&CardThresholds<T>>,
    ) -> Result<Box<dyn DispatchPolicy<T>>> {
        Ok(match self {
            PolicyKind::RoundRobin => Box::new(RoundRobin::new(servers)),
            PolicyKind::JoinIdleQueue => Box::new(JoinIdleQueue::new(servers)),
            PolicyKind::LeastWorkLeft => Box::new(LeastWorkLeft),
            PolicyKind::Card => {
                let t = card.ok_or_else(|| {
                    Error::IncompatiblePolicy("card needs thresholds".into())
                })?;
                if t.n() != servers {
                    return Err(Error::IncompatiblePolicy(format!(
                        "card thresholds were computed for {} servers, stage has {servers}",
                        t.n()
                    )));
                }
                Box::new(Card::new(t.clone()))
            }
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rr" => Ok(PolicyKind::RoundRobin),
            "jiq" => Ok(PolicyKind::JoinIdleQueue),
            "lwl" => Ok(PolicyKind::LeastWorkLeft),
            "card" => Ok(PolicyKind::Card),
            other => Err(Error::invalid(format!(
                "unknown policy `{other}` (expected rr, jiq, lwl or card)"
            ))),
        }
    }
}

/// Two-stage wrapper: `n1` first-stage servers, the rest in stage two, and a
/// size threshold `theta` above which tasks migrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoStagePolicy<T> {
    pub inner: PolicyKind,
    pub n1: usize,
    pub theta: T,
}

impl<T: Scalar> TwoStagePolicy<T> {
    pub fn new(inner: PolicyKind, n1: usize, theta: T) -> Result<Self> {
        if inner == PolicyKind::Card {
            return Err(Error::invalid("two-stage CARD is not supported"));
        }
        if n1 == 0 {
            return Err(Error::invalid("n1 must be at least 1"));
        }
        if !(theta > T::zero()) {
            return Err(Error::invalid(format!("theta must be positive, got {theta}")));
        }
        Ok(Self { inner, n1, theta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec<T> {
    Single { policy: PolicyKind },
    TwoStage(TwoStagePolicy<T>),
}

impl<T: Scalar> PolicySpec<T> {
    pub fn single(policy: PolicyKind) -> Self {
        PolicySpec::Single { policy }
    }

    pub fn two_stage(inner: PolicyKind, n1: usize, theta: T) -> Result<Self> {
        Ok(PolicySpec::TwoStage(TwoStagePolicy::new(inner, n1, theta)?))
    }

    pub fn inner(&self) -> PolicyKind {
        match self {
            PolicySpec::Single { policy } => *policy,
            PolicySpec::TwoStage(t) => t.inner,
        }
    }

    /// Checks the policy against a cluster of `n` servers.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::invalid("cluster needs at least one server"));
        }
        if let PolicySpec::TwoStage(t) = self {
            if t.n1 >= n {
                return Err(Error::IncompatiblePolicy(format!(
                    "two-stage needs 1 <= n1 <= n-1, got n1={} with n={n}",
                    t.n1
                )));
            }
        }
        Ok(())
    }

    /// Canonical name, e.g. `lwl` or `two_stage:{rr,7,3.5}`.
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Single { policy } => policy.name().to_string(),
            PolicySpec::TwoStage(t) => format!("two_stage:{{{},{},{}}}", t.inner, t.n1, t.theta),
        }
    }
}

impl<T: Scalar> fmt::Display for PolicySpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl<T: Scalar> FromStr for PolicySpec<T> {
    type Err = Error;

    /// Accepts `rr | jiq | lwl | card | two_stage:{inner,n1,theta}`; the
    /// braces are optional and `theta` may be `inf`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let Some(rest) = s.strip_prefix("two_stage:") else {
            return Ok(PolicySpec::single(s.parse()?));
        };
        let body = rest.trim().trim_start_matches('{').trim_end_matches('}');
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!(
                "two-stage policy must be two_stage:{{inner,n1,theta}}, got `{s}`"
            )));
        }
        let inner: PolicyKind = parts[0].parse()?;
        let n1: usize = parts[1]
            .parse()
            .map_err(|_| Error::invalid(format!("bad n1 `{}`", parts[1])))?;
        let theta: T = parts[2]
            .parse()
            .map_err(|_| Error::invalid(format!("bad theta `{}`", parts[2])))?;
        PolicySpec::two_stage(inner, n1, theta)
    }
}
