//! Token-bucket arrival curves, rate-latency service curves and the
//! single-server bounds built from them.
//!
//! Units are fixed crate-wide: data in kilobits, time in seconds and rates
//! in kilobits per second. All comparisons are exact floating-point
//! comparisons; inputs are taken as exact.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token-bucket arrival curve `t -> burst + rate * t` (for `t > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenBucket {
    pub burst: f64,
    pub rate: f64,
}

impl TokenBucket {
    pub const ZERO: TokenBucket = TokenBucket {
        burst: 0.0,
        rate: 0.0,
    };

    pub fn new(burst: f64, rate: f64) -> Result<Self> {
        if !(burst.is_finite() && burst >= 0.0) {
            return Err(Error::InvalidCurve(format!(
                "burst must be >= 0, got {burst}"
            )));
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidCurve(format!(
                "rate must be >= 0, got {rate}"
            )));
        }
        Ok(TokenBucket { burst, rate })
    }
}

impl Add for TokenBucket {
    type Output = TokenBucket;

    fn add(self, rhs: TokenBucket) -> TokenBucket {
        TokenBucket {
            burst: self.burst + rhs.burst,
            rate: self.rate + rhs.rate,
        }
    }
}

impl<'a> Sum<&'a TokenBucket> for TokenBucket {
    fn sum<I: Iterator<Item = &'a TokenBucket>>(iter: I) -> TokenBucket {
        iter.fold(TokenBucket::ZERO, |acc, tb| acc + *tb)
    }
}

impl Sum for TokenBucket {
    fn sum<I: Iterator<Item = TokenBucket>>(iter: I) -> TokenBucket {
        iter.fold(TokenBucket::ZERO, |acc, tb| acc + tb)
    }
}

/// Rate-latency strict service curve `t -> rate * (t - latency)+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLatency {
    pub rate: f64,
    pub latency: f64,
}

impl RateLatency {
    pub fn new(rate: f64, latency: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidCurve(format!(
                "service rate must be > 0, got {rate}"
            )));
        }
        if !(latency.is_finite() && latency >= 0.0) {
            return Err(Error::InvalidCurve(format!(
                "latency must be >= 0, got {latency}"
            )));
        }
        Ok(RateLatency { rate, latency })
    }

    /// Guaranteed service over an interval of length `t`.
    pub fn service(&self, t: f64) -> f64 {
        self.rate * (t - self.latency).max(0.0)
    }
}

/// A nonnegative bound, or no bound at all.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn is_finite(&self) -> bool {
        matches!(self, Bound::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Bound::Finite(v) => Some(v),
            Bound::Unbounded => None,
        }
    }

    /// Smaller of two bounds; `Unbounded` is the top element.
    pub fn min(self, other: Bound) -> Bound {
        match (self, other) {
            (Bound::Finite(a), Bound::Finite(b)) => Bound::Finite(a.min(b)),
            (Bound::Finite(a), Bound::Unbounded) | (Bound::Unbounded, Bound::Finite(a)) => {
                Bound::Finite(a)
            }
            (Bound::Unbounded, Bound::Unbounded) => Bound::Unbounded,
        }
    }
}

impl Add for Bound {
    type Output = Bound;

    fn add(self, rhs: Bound) -> Bound {
        match (self, rhs) {
            (Bound::Finite(a), Bound::Finite(b)) => Bound::Finite(a + b),
            _ => Bound::Unbounded,
        }
    }
}

impl Mul<f64> for Bound {
    type Output = Bound;

    fn mul(self, rhs: f64) -> Bound {
        match self {
            Bound::Finite(a) => Bound::Finite(a * rhs),
            Bound::Unbounded => Bound::Unbounded,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Unbounded => write!(f, "inf"),
        }
    }
}

/// Stability class of a single server fed by an aggregate token bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ServerClass {
    Stable,
    Critical,
    Unstable,
}

/// Maximum backlog of a `alpha`-constrained flow in a server offering `beta`.
pub fn backlog_bound(alpha: &TokenBucket, beta: &RateLatency) -> Bound {
    if alpha.rate <= beta.rate {
        Bound::Finite(alpha.burst + alpha.rate * beta.latency)
    } else {
        Bound::Unbounded
    }
}

/// Maximum length of a backlogged period.
pub fn busy_period_bound(alpha: &TokenBucket, beta: &RateLatency) -> Bound {
    if alpha.rate < beta.rate {
        Bound::Finite((alpha.burst + beta.rate * beta.latency) / (beta.rate - alpha.rate))
    } else {
        Bound::Unbounded
    }
}

/// Maximum backlog of the `interest` flows in a server shared with `cross`.
///
/// The cross traffic is treated as a blind competitor: the interest flows
/// see the leftover service `(beta - cross)+`. The critical case (total
/// rate equal to the service rate) is reported as unbounded.
pub fn group_backlog_bound(
    interest: &[TokenBucket],
    cross: &[TokenBucket],
    beta: &RateLatency,
) -> Bound {
    let own: TokenBucket = interest.iter().sum();
    let other: TokenBucket = cross.iter().sum();
    if !(own.rate + other.rate < beta.rate) {
        return Bound::Unbounded;
    }
    let t = beta.latency;
    Bound::Finite(
        own.burst
            + own.rate / (beta.rate - other.rate) * (other.burst + other.rate * t)
            + own.rate * t,
    )
}

/// Arrival curve of the departures of flows whose backlog never exceeds
/// `max_backlog`.
pub fn output_curve(max_backlog: Bound, rate: f64) -> Result<TokenBucket> {
    match max_backlog {
        Bound::Finite(b) => TokenBucket::new(b, rate),
        Bound::Unbounded => Err(Error::UnboundedInput),
    }
}

pub fn classify_server(alpha: &TokenBucket, beta: &RateLatency) -> ServerClass {
    if alpha.rate > beta.rate {
        ServerClass::Unstable
    } else if alpha.rate == beta.rate {
        ServerClass::Critical
    } else {
        ServerClass::Stable
    }
}
