//! Size-distribution math: moments, quantiles, partial-load integrals, the
//! M/G/1 normalization oracle and CARD thresholds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{regularized_lower_gamma, regularized_lower_gamma_quadrature};
use crate::workload::{WeibullParams, Workload, WorkloadSource};

/// Sorted multiset of observed sizes with running totals.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSizes<T> {
    sorted: Vec<T>,
    // cumulative[i] = sorted[0] + ... + sorted[i]
    cumulative: Vec<T>,
}

impl<T: Scalar> EmpiricalSizes<T> {
    pub fn sizes(&self) -> &[T] {
        &self.sorted
    }

    fn total(&self) -> T {
        *self.cumulative.last().expect("non-empty")
    }

    /// Sum of sizes that are `<= m`.
    fn work_up_to(&self, m: T) -> T {
        let k = self.sorted.partition_point(|&x| x <= m);
        if k == 0 {
            T::zero()
        } else {
            self.cumulative[k - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionKind<T> {
    Weibull(WeibullParams<T>),
    Empirical(EmpiricalSizes<T>),
}

/// A job/task size law with cached first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T> {
    kind: DistributionKind<T>,
    mean: T,
    second_moment: T,
}

impl<T: Scalar> Distribution<T> {
    pub fn weibull(params: WeibullParams<T>) -> Self {
        Self {
            mean: params.mean(),
            second_moment: params.second_moment(),
            kind: DistributionKind::Weibull(params),
        }
    }

    pub fn empirical(mut sizes: Vec<T>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("empirical distribution needs at least one size"));
        }
        if let Some(bad) = sizes.iter().find(|&&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::invalid(format!("empirical sizes must be positive, got {bad}")));
        }
        sizes.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let count = T::of_usize(sizes.len());
        let mut cumulative = Vec::with_capacity(sizes.len());
        let mut acc = T::zero();
        let mut acc_sq = T::zero();
        for &s in &sizes {
            acc += s;
            acc_sq += s * s;
            cumulative.push(acc);
        }
        let mean = acc / count;
        let second_moment = (acc_sq / count).max(mean * mean);
        Ok(Self {
            kind: DistributionKind::Empirical(EmpiricalSizes {
                sorted: sizes,
                cumulative,
            }),
            mean,
            second_moment,
        })
    }

    /// The law that drives dispatch decisions for `workload`: the generating
    /// Weibull for synthetic workloads, the task-size multiset for traces.
    pub fn for_workload(workload: &Workload<T>) -> Result<Self> {
        match workload.source() {
            WorkloadSource::Synthetic { params, .. } => Ok(Self::weibull(*params)),
            WorkloadSource::Trace => Self::empirical(workload.task_sizes()),
        }
    }

    pub fn kind(&self) -> &DistributionKind<T> {
        &self.kind
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.kind, DistributionKind::Weibull(_))
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn second_moment(&self) -> T {
        self.second_moment
    }

    pub fn cov(&self) -> T {
        (self.second_moment - self.mean * self.mean).max(T::zero()).sqrt() / self.mean
    }

    /// P(S > x)
    pub fn ccdf(&self, x: T) -> T {
        match &self.kind {
            DistributionKind::Weibull(p) => p.ccdf(x),
            DistributionKind::Empirical(e) => {
                let k = e.sorted.partition_point(|&s| s <= x);
                T::of_usize(e.sorted.len() - k) / T::of_usize(e.sorted.len())
            }
        }
    }

    pub fn partial_load(&self, m: T) -> T {
        partial_load(self, m)
    }

    pub fn quantile(&self, q: T) -> Result<T> {
        quantile(self, q)
    }
}

/// Fraction of the load carried by sizes up to `m`: `(1/E[S]) ∫₀^m x f(x) dx`.
pub fn partial_load<T: Scalar>(dist: &Distribution<T>, m: T) -> T {
    if !(m > T::zero()) {
        return T::zero();
    }
    match &dist.kind {
        DistributionKind::Weibull(p) => {
            if m.is_infinite() {
                return T::one();
            }
            // a·γ(1+1/b, (m/a)^b) / E[S] = P(1+1/b, (m/a)^b)
            let shape = T::one() + p.shape_b.recip();
            let x = (m / p.scale_a).powf(p.shape_b);
            regularized_lower_gamma(shape, x)
                .or_else(|| regularized_lower_gamma_quadrature(shape, x))
                .unwrap_or(T::nan())
        }
        DistributionKind::Empirical(e) => e.work_up_to(m) / e.total(),
    }
}

/// Size quantile. Inversion for Weibull, nearest rank for empirical laws.
pub fn quantile<T: Scalar>(dist: &Distribution<T>, q: T) -> Result<T> {
    if !(q > T::zero() && q < T::one()) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {q}")));
    }
    Ok(match &dist.kind {
        DistributionKind::Weibull(p) => p.quantile(q),
        DistributionKind::Empirical(e) => {
            let len = e.sorted.len();
            let rank = q * T::of_usize(len);
            // Shave rounding noise so that e.g. 0.7·10 ranks as 7, not 8.
            let rank = (rank - rank * T::of(1e-12)).ceil();
            let k = rank.to_usize().unwrap_or(len).clamp(1, len);
            e.sorted[k - 1]
        }
    })
}

/// Mean response time of an FCFS M/G/1 queue (Pollaczek-Khinchine).
pub fn mg1_mean_response<T: Scalar>(
    dist: &Distribution<T>,
    arrival_rate: T,
    server_speed: T,
) -> Result<T> {
    if !(server_speed > T::zero()) {
        return Err(Error::invalid(format!("server speed must be positive, got {server_speed}")));
    }
    if arrival_rate < T::zero() {
        return Err(Error::invalid(format!("arrival rate must be non-negative, got {arrival_rate}")));
    }
    let service_mean = dist.mean / server_speed;
    let service_second = dist.second_moment / (server_speed * server_speed);
    let rho = arrival_rate * service_mean;
    if !(rho < T::one()) {
        return Err(Error::Unstable {
            utilization: rho.to_f64_lossy(),
        });
    }
    Ok(service_mean + arrival_rate * service_second / (T::of(2.0) * (T::one() - rho)))
}

/// Size thresholds `m` and work thresholds `c` of multi-band CARD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CardThresholds<T> {
    /// m₁ ≤ … ≤ mₙ
    pub m: Vec<T>,
    /// cᵢ = mᵢ/√(1−ρ) for i = 1..n−1
    pub c: Vec<T>,
    /// Load in [0, m₁), [m₁, m₂), …, [mₙ, ∞): n + 1 entries.
    pub band_loads: Vec<T>,
    /// 1-based indices whose target could not be hit exactly because the
    /// empirical law has too few mass points; those mᵢ are the smallest
    /// observed size reaching the target.
    pub fallback: Vec<usize>,
}

impl<T: Scalar> CardThresholds<T> {
    pub fn n(&self) -> usize {
        self.m.len()
    }
}

const MAX_BRACKET_STEPS: usize = 2_000;
const MAX_BISECTION_STEPS: usize = 400;

/// Thresholds solving `partial_load(mᵢ) = (i − 1/2)/n`, i = 1..n.
///
/// Also accepts `n = 1` (a single threshold at half the load, no `c`), which
/// makes CARD degenerate gracefully to "the only server".
pub fn card_thresholds<T: Scalar>(
    dist: &Distribution<T>,
    n: usize,
    rho: T,
) -> Result<CardThresholds<T>> {
    if n == 0 {
        return Err(Error::invalid("CARD needs at least one server"));
    }
    if !(rho > T::zero() && rho < T::one()) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    let load_tol = T::of(1e-10).max(T::epsilon() * T::of(8.0));
    let n_t = T::of_usize(n);
    let mut m = Vec::with_capacity(n);
    let mut fallback = Vec::new();
    for i in 1..=n {
        let target = (T::of_usize(i) - T::of(0.5)) / n_t;
        let mi = match &dist.kind {
            DistributionKind::Weibull(_) => solve_partial_load(dist, target, load_tol)?,
            DistributionKind::Empirical(e) => {
                let need = target * e.total();
                let k = e.cumulative.partition_point(|&c| c < need).min(e.sorted.len() - 1);
                let mi = e.sorted[k];
                if (partial_load(dist, mi) - target).abs() > T::of(1e-9) {
                    fallback.push(i);
                }
                mi
            }
        };
        m.push(mi);
    }
    // Guard monotonicity against bisection noise.
    for i in 1..m.len() {
        if m[i] < m[i - 1] {
            m[i] = m[i - 1];
        }
    }
    let inflate = (T::one() - rho).sqrt();
    let c = m[..n - 1].iter().map(|&mi| mi / inflate).collect();
    let mut band_loads = Vec::with_capacity(n + 1);
    let mut prev = T::zero();
    for &mi in &m {
        let pl = partial_load(dist, mi);
        band_loads.push(pl - prev);
        prev = pl;
    }
    band_loads.push(T::one() - prev);
    Ok(CardThresholds {
        m,
        c,
        band_loads,
        fallback,
    })
}

fn solve_partial_load<T: Scalar>(dist: &Distribution<T>, target: T, tol: T) -> Result<T> {
    let mut lo = T::zero();
    let mut hi = dist.mean();
    let mut steps = 0;
    while partial_load(dist, hi) < target {
        lo = hi;
        hi = hi * T::of(2.0);
        steps += 1;
        if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
            return Err(Error::NonConvergence {
                what: "partial-load bracketing",
                iterations: steps,
            });
        }
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = T::of(0.5) * (lo + hi);
        let pl = partial_load(dist, mid);
        if (pl - target).abs() <= tol {
            return Ok(mid);
        }
        if !(mid > lo && mid < hi) {
            return Ok(mid);
        }
        if pl < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence {
        what: "partial-load bisection",
        iterations: MAX_BISECTION_STEPS,
    })
}
