use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

/// Tolerance used when comparing timestamps, in seconds.
pub const TIME_EPS: f64 = 1e-9;

/// Seconds since the stream epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Timestamp(pub f64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0.0);

    #[inline]
    pub fn from_secs(seconds: f64) -> Self {
        Timestamp(seconds)
    }

    #[inline]
    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Equality within [`TIME_EPS`].
    #[inline]
    pub fn approx_eq(self, other: Timestamp) -> bool {
        (self.0 - other.0).abs() <= TIME_EPS
    }

    /// Three-way comparison that treats stamps within [`TIME_EPS`] as equal.
    pub fn cmp_eps(self, other: Timestamp) -> Ordering {
        if self.approx_eq(other) {
            Ordering::Equal
        } else if self.0 < other.0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

impl Add<f64> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: f64) -> Timestamp {
        Timestamp(self.0 + rhs)
    }
}

impl Sub<f64> for Timestamp {
    type Output = Timestamp;
    fn sub(self, rhs: f64) -> Timestamp {
        Timestamp(self.0 - rhs)
    }
}

/// Difference between two stamps in seconds.
impl Sub for Timestamp {
    type Output = f64;
    fn sub(self, rhs: Timestamp) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_comparison() {
        let a = Timestamp(1.0);
        assert!(a.approx_eq(Timestamp(1.0 + 0.5e-9)));
        assert!(!a.approx_eq(Timestamp(1.0 + 2e-9)));
        assert_eq!(a.cmp_eps(Timestamp(1.0 + 5e-10)), Ordering::Equal);
        assert_eq!(a.cmp_eps(Timestamp(2.0)), Ordering::Less);
        assert_eq!((Timestamp(2.5) - Timestamp(1.0)), 1.5);
        assert_eq!(format!("{}", Timestamp(0.1)), "0.100000000");
    }
}
