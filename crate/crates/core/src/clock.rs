//! Time source abstraction so replayed runs produce byte-identical output.

use std::time::{SystemTime, UNIX_EPOCH};

/// Wall time for live runs, a fixed instant for offline and replayed runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(i64),
}

impl Clock {
    /// Milliseconds since the Unix epoch.
    pub fn now_ms(&self) -> i64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as i64)
                .unwrap_or(0),
            Clock::Fixed(ms) => *ms,
        }
    }

    /// Seconds elapsed since `start_ms`; zero under a fixed clock.
    pub fn elapsed_secs(&self, start_ms: i64) -> f64 {
        (self.now_ms() - start_ms).max(0) as f64 / 1000.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_clock_never_advances() {
        let clock = Clock::Fixed(1_700_000_000_000);
        let start = clock.now_ms();
        assert_eq!(clock.now_ms(), start);
        assert_eq!(clock.elapsed_secs(start), 0.0);
    }

    #[test]
    fn system_clock_is_monotone_enough() {
        let clock = Clock::System;
        let start = clock.now_ms();
        assert!(clock.elapsed_secs(start) >= 0.0);
    }
}
