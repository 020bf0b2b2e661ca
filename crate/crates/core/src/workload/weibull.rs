use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{unit_exponential, StreamRng};
use crate::scalar::Scalar;
use crate::special::ln_gamma;

/// Weibull law with CCDF `exp(-(x/a)^b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams<T> {
    pub scale_a: T,
    pub shape_b: T,
}

impl<T: Scalar> WeibullParams<T> {
    pub fn new(scale_a: T, shape_b: T) -> Result<Self> {
        if !(scale_a > T::zero()) || !scale_a.is_finite() {
            return Err(Error::invalid(format!("weibull scale must be positive, got {scale_a}")));
        }
        if !(shape_b > T::zero()) || !shape_b.is_finite() {
            return Err(Error::invalid(format!("weibull shape must be positive, got {shape_b}")));
        }
        Ok(Self { scale_a, shape_b })
    }

    /// E[S] = a·Γ(1 + 1/b)
    pub fn mean(&self) -> T {
        self.scale_a * ln_gamma(T::one() + self.shape_b.recip()).exp()
    }

    /// E[S²] = a²·Γ(1 + 2/b)
    pub fn second_moment(&self) -> T {
        let two = T::of(2.0);
        self.scale_a * self.scale_a * ln_gamma(T::one() + two / self.shape_b).exp()
    }

    pub fn cov(&self) -> T {
        (moment_ratio(self.shape_b) - T::one()).max(T::zero()).sqrt()
    }

    pub fn ccdf(&self, x: T) -> T {
        if x <= T::zero() {
            return T::one();
        }
        (-(x / self.scale_a).powf(self.shape_b)).exp()
    }

    /// Inverse-CCDF map: `a·(-ln u)^(1/b)`. With `u` uniform on (0, 1) this
    /// is a Weibull draw.
    pub fn invert(&self, u: T) -> T {
        self.scale_a * (-u.ln()).powf(self.shape_b.recip())
    }

    /// Size below which a fraction `q` of the mass lies.
    pub fn quantile(&self, q: T) -> T {
        self.scale_a * (-(-q).ln_1p()).powf(self.shape_b.recip())
    }
}

/// E[S²]/E[S]² = Γ(1+2/b)/Γ(1+1/b)², which depends on the shape only.
fn moment_ratio<T: Scalar>(shape_b: T) -> T {
    let inv = shape_b.recip();
    (ln_gamma(T::one() + inv + inv) - ln_gamma(T::one() + inv) * T::of(2.0)).exp()
}

/// Weibull parameters with the given mean and coefficient of variation.
///
/// The moment ratio is strictly decreasing in the shape, so the shape is
/// bracketed by doubling/halving and then bisected in log space; the scale
/// follows directly from the mean.
pub fn fit_weibull<T: Scalar>(mean: T, cov: T) -> Result<WeibullParams<T>> {
    if !(mean > T::zero()) || !mean.is_finite() {
        return Err(Error::invalid(format!("mean must be positive, got {mean}")));
    }
    if !(cov > T::zero()) || !cov.is_finite() {
        return Err(Error::invalid(format!("cov must be positive, got {cov}")));
    }
    const BRACKET_STEPS: usize = 200;
    const BISECTION_STEPS: usize = 400;

    let target = (cov * cov).ln_1p();
    // Below this the moment ratio is indistinguishable from 1 at this precision.
    if target < T::epsilon() * T::of(1e4) {
        return Err(Error::NonConvergence {
            what: "weibull shape bracketing (cov too small to resolve)",
            iterations: 0,
        });
    }
    // Positive when the shape is too small (too much variability).
    let excess = |b: T| moment_ratio(b).ln() - target;

    let two = T::of(2.0);
    let (mut lo, mut hi) = (T::one(), T::one());
    let mut steps = 0;
    if excess(T::one()) > T::zero() {
        while excess(hi) > T::zero() {
            lo = hi;
            hi = hi * two;
            steps += 1;
            if steps > BRACKET_STEPS || !hi.is_finite() {
                return Err(Error::NonConvergence {
                    what: "weibull shape bracketing",
                    iterations: steps,
                });
            }
        }
    } else {
        while excess(lo) < T::zero() {
            hi = lo;
            lo = lo / two;
            steps += 1;
            if steps > BRACKET_STEPS || lo <= T::min_positive_value() {
                return Err(Error::NonConvergence {
                    what: "weibull shape bracketing",
                    iterations: steps,
                });
            }
        }
    }

    let mut shape = lo;
    for _ in 0..BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        shape = mid;
    }
    // Pick whichever end has the smaller residual.
    for cand in [lo, hi] {
        if excess(cand).abs() < excess(shape).abs() {
            shape = cand;
        }
    }

    let ratio = moment_ratio(shape);
    let wanted = T::one() + cov * cov;
    if ((ratio - wanted) / wanted).abs() > T::solver_tolerance() {
        return Err(Error::NonConvergence {
            what: "weibull shape bisection",
            iterations: BISECTION_STEPS,
        });
    }
    let scale = mean / ln_gamma(T::one() + shape.recip()).exp();
    WeibullParams::new(scale, shape)
}

/// One Weibull draw by inversion.
pub fn sample_weibull<T: Scalar>(params: &WeibullParams<T>, rng: &mut StreamRng) -> T {
    // a·E^(1/b) with E = -ln U, U uniform on (0, 1).
    let e: T = unit_exponential(rng);
    params.scale_a * e.powf(params.shape_b.recip())
}
