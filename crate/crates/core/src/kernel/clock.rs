//! Monotonic and fake clocks for latency measurement.
//!
//! All timing in the crate goes through the [`Clock`] trait so tests and
//! reproducibility runs can swap in a deterministic fake. The fake clock is
//! selected by the `LATSEL_CLOCK=fake:<seed>` environment variable or
//! constructed directly.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::seed::splitmix64;

/// A monotonic time source. `now` returns the elapsed time since an
/// arbitrary fixed origin; only differences are meaningful.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

/// Wall-clock implementation backed by `std::time::Instant`.
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Deterministic clock: every `now` call advances an internal tick by a
/// seeded pseudo-random step in [0.5 ms, 2.0 ms). Two runs with the same
/// seed observe identical timestamps, which makes measured "latencies"
/// varied but exactly reproducible.
pub struct FakeClock {
    state: Mutex<FakeState>,
}

struct FakeState {
    tick_ns: u64,
    rng: u64,
}

impl FakeClock {
    pub fn new(seed: u64) -> Self {
        Self {
            state: Mutex::new(FakeState { tick_ns: 0, rng: seed }),
        }
    }

    /// Fake clock that returns exactly the given durations as consecutive
    /// timed intervals (each `now` pair consumes one entry, cycling).
    pub fn with_steps_ms(steps_ms: &[f64]) -> StepClock {
        StepClock {
            state: Mutex::new(StepState { tick_ns: 0, idx: 0 }),
            steps_ns: steps_ms.iter().map(|ms| (ms * 1e6) as u64).collect(),
        }
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        let mut st = self.state.lock().unwrap();
        let t = st.tick_ns;
        let step = 500_000 + splitmix64(&mut st.rng) % 1_500_000;
        st.tick_ns += step;
        Duration::from_nanos(t)
    }
}

/// Clock whose timed intervals follow a fixed script: the i-th (start, end)
/// call pair spans exactly `steps[i % len]`, with no time passing between
/// pairs. Used by tests that assert exact medians and exact
/// time-per-sample divisions.
pub struct StepClock {
    state: Mutex<StepState>,
    steps_ns: Vec<u64>,
}

struct StepState {
    tick_ns: u64,
    calls: usize,
}

impl Clock for StepClock {
    fn now(&self) -> Duration {
        let mut st = self.state.lock().unwrap();
        if st.calls % 2 == 1 {
            let step = self.steps_ns[(st.calls / 2) % self.steps_ns.len()];
            st.tick_ns += step;
        }
        st.calls += 1;
        Duration::from_nanos(st.tick_ns)
    }
}

/// Environment variable selecting the clock implementation.
pub const CLOCK_ENV_VAR: &str = "LATSEL_CLOCK";

/// Build a clock from `LATSEL_CLOCK`. `fake:<seed>` selects [`FakeClock`];
/// anything else (or unset) selects the monotonic wall clock.
pub fn clock_from_env() -> Box<dyn Clock> {
    match std::env::var(CLOCK_ENV_VAR) {
        Ok(v) => match parse_fake_spec(&v) {
            Some(seed) => Box::new(FakeClock::new(seed)),
            None => Box::new(MonotonicClock::new()),
        },
        Err(_) => Box::new(MonotonicClock::new()),
    }
}

fn parse_fake_spec(spec: &str) -> Option<u64> {
    let rest = spec.strip_prefix("fake:")?;
    rest.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonic_clock_advances() {
        let c = MonotonicClock::new();
        let a = c.now();
        let b = c.now();
        assert!(b >= a);
    }

    #[test]
    fn fake_clock_is_deterministic() {
        let a = FakeClock::new(9);
        let b = FakeClock::new(9);
        for _ in 0..32 {
            assert_eq!(a.now(), b.now());
        }
    }

    #[test]
    fn fake_clock_steps_are_positive_and_bounded() {
        let c = FakeClock::new(1);
        let mut prev = c.now();
        for _ in 0..100 {
            let t = c.now();
            let step = t - prev;
            assert!(step >= Duration::from_micros(500));
            assert!(step < Duration::from_millis(2));
            prev = t;
        }
    }

    #[test]
    fn step_clock_replays_script() {
        let c = FakeClock::with_steps_ms(&[1.0, 9.0, 2.0]);
        let t0 = c.now();
        let t1 = c.now();
        let t2 = c.now();
        let t3 = c.now();
        assert_eq!((t1 - t0).as_secs_f64() * 1e3, 1.0);
        assert_eq!((t2 - t1).as_secs_f64() * 1e3, 9.0);
        assert_eq!((t3 - t2).as_secs_f64() * 1e3, 2.0);
    }

    #[test]
    fn fake_spec_parsing() {
        assert_eq!(parse_fake_spec("fake:17"), Some(17));
        assert_eq!(parse_fake_spec("real"), None);
        assert_eq!(parse_fake_spec("fake:x"), None);
    }
}
