//! Scalar mathematics of the probability model: excess certainty, the oracle
//! shrinkage rule, the cubic bias link and the flip transform.

use serde::Serialize;

use crate::error::{EcapError, Result};

/// A probability in `[0, 1]`, validated on construction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(EcapError::Domain(format!(
                "probability must lie in [0, 1], got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Self(1.0 - self.0)
    }
}

/// Conditional mean and variance of the true probability given its estimate.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalMoments {
    mean: f64,
    variance: f64,
}

impl ConditionalMoments {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0 && mean < 1.0) {
            return Err(EcapError::Domain(format!(
                "conditional mean must lie in (0, 1), got {mean}"
            )));
        }
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(EcapError::Domain(format!(
                "conditional variance must be nonnegative, got {variance}"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(self) -> f64 {
        self.mean
    }

    pub fn variance(self) -> f64 {
        self.variance
    }
}

/// Bias-link parameter; the cubic link is invertible exactly on `[-4, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct BiasLinkParam(f64);

impl BiasLinkParam {
    pub const IDENTITY: Self = Self(0.0);

    pub fn new(theta: f64) -> Result<Self> {
        if theta.is_finite() && (-4.0..=2.0).contains(&theta) {
            Ok(Self(theta))
        } else {
            Err(EcapError::Domain(format!(
                "bias link parameter must lie in [-4, 2], got {theta}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A probability mapped onto `[0, 0.5]`, remembering whether it was reflected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlippedValue {
    pub value: f64,
    pub flipped: bool,
}

/// Relative error of an estimate against the truth, scaled by the estimate's
/// distance to its nearer boundary. Positive values mean overconfidence.
pub fn excess_certainty(p_true: Probability, p_est: Probability) -> Result<f64> {
    let e = p_est.value();
    if e == 0.0 || e == 1.0 {
        return Err(EcapError::Domain(
            "excess certainty is undefined for estimates of exactly 0 or 1".into(),
        ));
    }
    Ok((p_true.value() - e) / e.min(1.0 - e))
}

/// The loss-optimal adjustment: shift the conditional mean toward 0.5 by
/// variance/mean (lower branch) or variance/(1-mean) (upper branch), capping
/// at 0.5. `side_le_half` selects the branch; under a symmetric prior it is
/// the side of 0.5 the (flipped) observation falls on.
pub fn oracle_adjust(moments: ConditionalMoments, side_le_half: bool) -> Probability {
    let m = moments.mean();
    let v = moments.variance();
    if side_le_half {
        Probability((m + v / m).min(0.5))
    } else {
        Probability((m - v / (1.0 - m)).max(0.5))
    }
}

/// Lower bound on the loss gap `L(p') - L(p0)` for any competitor `p'`.
/// `second_moment` is `E(p^2 | p~)` on the lower branch and `E((1-p)^2 | p~)`
/// on the upper branch.
pub fn oracle_loss_gap_bound(
    p_prime: Probability,
    p0: Probability,
    second_moment: f64,
) -> Result<f64> {
    let p = p_prime.value();
    if p == 0.0 || p == 1.0 {
        return Err(EcapError::Domain(
            "loss gap bound is undefined for competitors of exactly 0 or 1".into(),
        ));
    }
    let o = p0.value();
    let d = if o <= 0.5 {
        1.0 / p - 1.0 / o
    } else {
        1.0 / (1.0 - p) - 1.0 / (1.0 - o)
    };
    Ok(second_moment * d * d)
}

/// The cubic bias link `(1 - 0.5t)x - t(x^3 - 1.5x^2)`. It is the identity at
/// t = 0, satisfies h(1-x) = 1 - h(x), and fixes 0, 0.5 and 1.
pub fn h_theta(x: f64, theta: BiasLinkParam) -> f64 {
    let t = theta.value();
    (1.0 - 0.5 * t) * x - t * (x * x * x - 1.5 * x * x)
}

/// Unique `x` in `[0, 1]` with `h_theta(x) = y`, by bisection to 1e-12.
/// The link is monotone on the valid parameter range, so bracketing on
/// `[0, 1]` cannot fail. The center is a fixed point of every link and is
/// answered directly; the upper half reuses the lower half through the
/// reflection identity h(1-x) = 1 - h(x).
pub fn h_theta_inverse(y: f64, theta: BiasLinkParam) -> f64 {
    if theta.value() == 0.0 || y == 0.5 {
        return y;
    }
    if y > 0.5 {
        return 1.0 - h_theta_inverse(1.0 - y, theta);
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    // h(0) = 0 <= y <= 0.5 = h(0.5)
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if h_theta(mid, theta) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Reflect values above 0.5 across the center; 0.5 itself stays unflipped.
pub fn flip(p: Probability) -> FlippedValue {
    let v = p.value();
    if v > 0.5 {
        FlippedValue {
            value: 1.0 - v,
            flipped: true,
        }
    } else {
        FlippedValue {
            value: v,
            flipped: false,
        }
    }
}

/// Exact inverse of [`flip`].
pub fn unflip(v: FlippedValue) -> Probability {
    if v.flipped {
        Probability(1.0 - v.value)
    } else {
        Probability(v.value)
    }
}
