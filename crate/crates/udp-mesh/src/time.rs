//! Monotonic timestamps shared by the protocol engine and both mediums.
//!
//! The engine never reads a clock; every entry point takes a [`Timestamp`]
//! supplied by the host. The simulator hands in virtual time, the daemon
//! hands in time elapsed since process start. Nanosecond resolution keeps
//! serialization-delay arithmetic exact for the bandwidths we model.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::time::Duration;

/// A point on the host's monotonic clock, in nanoseconds since an arbitrary
/// epoch (simulation start or process start).
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_nanos(nanos: u64) -> Timestamp {
        Timestamp(nanos)
    }

    pub fn from_millis(millis: u64) -> Timestamp {
        Timestamp(millis * 1_000_000)
    }

    pub fn from_secs_f64(secs: f64) -> Timestamp {
        Timestamp((secs * 1e9).round() as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    /// Time elapsed since `earlier`, zero if `earlier` is in the future.
    pub fn since(self, earlier: Timestamp) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }
}

impl Add<Duration> for Timestamp {
    type Output = Timestamp;

    fn add(self, rhs: Duration) -> Timestamp {
        Timestamp(self.0.saturating_add(rhs.as_nanos() as u64))
    }
}

impl AddAssign<Duration> for Timestamp {
    fn add_assign(&mut self, rhs: Duration) {
        *self = *self + rhs;
    }
}

impl Sub<Timestamp> for Timestamp {
    type Output = Duration;

    fn sub(self, rhs: Timestamp) -> Duration {
        self.since(rhs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_round_trips() {
        let t = Timestamp::from_millis(1500);
        assert_eq!(t.as_nanos(), 1_500_000_000);
        let later = t + Duration::from_micros(250);
        assert_eq!(later - t, Duration::from_micros(250));
        assert_eq!(t - later, Duration::ZERO); // saturates, never panics
    }

    #[test]
    fn secs_f64_conversion() {
        let t = Timestamp::from_secs_f64(2.5);
        assert_eq!(t.as_nanos(), 2_500_000_000);
        assert!((t.as_secs_f64() - 2.5).abs() < 1e-12);
    }
}
