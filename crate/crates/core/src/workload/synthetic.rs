use super::weibull::{sample_weibull, WeibullParams};
use super::{JobSpec, TaskSpec, Workload, WorkloadSource};
use crate::error::{Error, Result};
use crate::rng::{stream, unit_exponential, Component};
use crate::scalar::Scalar;

/// Poisson arrivals at `arrival_rate`, one Weibull-sized task per job.
///
/// Inter-arrival times and sizes come from separate streams of `seed`, so
/// two workloads with the same seed and different rates share the same
/// size sequence.
pub fn generate_poisson_weibull<T: Scalar>(
    arrival_rate: T,
    params: WeibullParams<T>,
    job_count: usize,
    seed: u64,
) -> Result<Workload<T>> {
    if !(arrival_rate > T::zero()) || !arrival_rate.is_finite() {
        return Err(Error::invalid(format!(
            "arrival rate must be positive, got {arrival_rate}"
        )));
    }
    if job_count == 0 {
        return Err(Error::invalid("job count must be at least 1"));
    }
    let mut arrivals = stream(seed, Component::Arrivals, 0);
    let mut sizes = stream(seed, Component::Sizes, 0);
    let mut clock = T::zero();
    let jobs = (0..job_count)
        .map(|k| {
            let gap: T = unit_exponential(&mut arrivals);
            clock += gap / arrival_rate;
            JobSpec {
                job_id: k as u64,
                arrival_time: clock,
                tasks: vec![TaskSpec {
                    task_index: 0,
                    size: sample_weibull(&params, &mut sizes).max(T::min_positive_value()),
                }],
            }
        })
        .collect();
    Workload::new(
        jobs,
        None,
        WorkloadSource::Synthetic {
            arrival_rate,
            params,
            seed,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::fit_weibull;

    #[test]
    fn structure() {
        let p = WeibullParams::new(1.0f64, 1.0).unwrap();
        let w = generate_poisson_weibull(0.8, p, 3, 9).unwrap();
        assert_eq!(w.job_count(), 3);
        assert!(w.jobs().iter().all(|j| j.tasks.len() == 1));
        assert!(w.jobs().windows(2).all(|p| p[0].arrival_time <= p[1].arrival_time));
        assert_eq!(w.horizon(), w.jobs()[2].arrival_time);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = fit_weibull(1.0f64, 10.0).unwrap();
        let a = generate_poisson_weibull(0.8, p, 1000, 5).unwrap();
        let b = generate_poisson_weibull(0.8, p, 1000, 5).unwrap();
        let c = generate_poisson_weibull(0.8, p, 1000, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_rate() {
        let p = WeibullParams::new(1.0f64, 1.0).unwrap();
        let w = generate_poisson_weibull(0.8, p, 1_000_000, 1).unwrap();
        let rate = w.job_count() as f64 / w.horizon();
        assert!((rate - 0.8).abs() < 0.008, "rate {rate}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = WeibullParams::new(1.0f64, 1.0).unwrap();
        assert!(generate_poisson_weibull(0.0, p, 3, 1).is_err());
        assert!(generate_poisson_weibull(1.0, p, 0, 1).is_err());
    }
}
