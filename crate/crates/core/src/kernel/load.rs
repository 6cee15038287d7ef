//! Background load generator mimicking a dynamic environment.
//!
//! Workers repeatedly build and execute small random modules with
//! exponentially distributed inter-arrival times. The job sequence is fully
//! determined by the profile seed; only execution timing depends on the
//! machine.

use std::hint::black_box;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{build_input, build_module, forward, ModuleKind};
use crate::params::SamplingConfig;
use crate::seed::derive_seed;

/// Configuration for the background job injector.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub enabled: bool,
    pub mean_interarrival_ms: f64,
    pub job_kind_pool: Vec<ModuleKind>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for LoadProfile {
    fn default() -> Self {
        Self {
            enabled: false,
            mean_interarrival_ms: 50.0,
            job_kind_pool: ModuleKind::ALL.to_vec(),
            seed: 0,
            workers: 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("load generator already running in this process")]
    AlreadyRunning,
    #[error("invalid load profile: {0}")]
    InvalidProfile(String),
}

/// One scheduled background job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadJob {
    pub kind: ModuleKind,
    pub module_seed: u64,
    pub interarrival_ms: f64,
}

/// The deterministic job sequence a worker executes. Exposed so tests can
/// assert seeded reproducibility without spawning threads.
pub fn job_sequence(profile: &LoadProfile, worker: usize, len: usize) -> Vec<LoadJob> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, 10, worker as u64));
    (0..len).map(|_| next_job(profile, &mut rng)).collect()
}

fn next_job(profile: &LoadProfile, rng: &mut ChaCha8Rng) -> LoadJob {
    // Inverse-CDF exponential draw; u in [0, 1) keeps ln() finite.
    let u: f64 = rng.gen();
    let interarrival_ms = -profile.mean_interarrival_ms * (1.0 - u).ln();
    let kind = profile.job_kind_pool[rng.gen_range(0..profile.job_kind_pool.len())];
    let module_seed = rng.gen();
    LoadJob { kind, module_seed, interarrival_ms }
}

/// Small fixed shapes for injected jobs; the point is contention, not
/// realistic workloads.
fn job_config(kind: ModuleKind) -> SamplingConfig {
    SamplingConfig {
        n: 1,
        c_in: 8,
        c_out: if kind.is_convolutional() || kind == ModuleKind::Linear { Some(8) } else { None },
        k: if kind.is_convolutional() || kind.is_pooling() { Some(3) } else { None },
        s: if kind.is_convolutional() || kind.is_pooling() { Some(1) } else { None },
        l: if kind.takes_spatial_input() { Some(14) } else { None },
    }
}

fn run_job(job: &LoadJob) {
    let cfg = job_config(job.kind);
    if let Ok(module) = build_module(job.kind, &cfg, job.module_seed) {
        let input = build_input(job.kind, &cfg, job.module_seed ^ 0x5555_5555);
        if let Ok(out) = forward(&module, &input) {
            black_box(out);
        }
    }
}

static GENERATOR_ACTIVE: AtomicBool = AtomicBool::new(false);

/// Handle to a running (or no-op) load generator. Dropping the handle stops
/// the workers and blocks until they exit.
pub struct LoadHandle {
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
    holds_guard: bool,
}

impl LoadHandle {
    fn noop() -> Self {
        Self { stop: Arc::new(AtomicBool::new(true)), workers: Vec::new(), holds_guard: false }
    }

    pub fn is_active(&self) -> bool {
        !self.workers.is_empty()
    }

    /// Signal all workers to stop and block until they exit.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for h in self.workers.drain(..) {
            let _ = h.join();
        }
        if self.holds_guard {
            GENERATOR_ACTIVE.store(false, Ordering::SeqCst);
            self.holds_guard = false;
        }
    }
}

impl Drop for LoadHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Start background workers per the profile. A disabled profile yields a
/// no-op handle. At most one generator may run per process.
pub fn start_load_generator(profile: &LoadProfile) -> Result<LoadHandle, LoadError> {
    if !profile.enabled {
        return Ok(LoadHandle::noop());
    }
    if profile.mean_interarrival_ms <= 0.0 {
        return Err(LoadError::InvalidProfile("mean_interarrival_ms must be > 0".into()));
    }
    if profile.job_kind_pool.is_empty() {
        return Err(LoadError::InvalidProfile("job_kind_pool must not be empty".into()));
    }
    if GENERATOR_ACTIVE.swap(true, Ordering::SeqCst) {
        return Err(LoadError::AlreadyRunning);
    }

    let stop = Arc::new(AtomicBool::new(false));
    let workers = (0..profile.workers.max(1))
        .map(|w| {
            let stop = Arc::clone(&stop);
            let profile = profile.clone();
            std::thread::spawn(move || worker_loop(&profile, w, &stop))
        })
        .collect();
    Ok(LoadHandle { stop, workers, holds_guard: true })
}

/// Explicit-function form of [`LoadHandle::stop`].
pub fn stop_load_generator(handle: LoadHandle) {
    handle.stop();
}

fn worker_loop(profile: &LoadProfile, worker: usize, stop: &AtomicBool) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, 10, worker as u64));
    while !stop.load(Ordering::Relaxed) {
        let job = next_job(profile, &mut rng);
        // Sleep in small slices so stop() is not blocked by a long gap.
        let mut remaining = job.interarrival_ms;
        while remaining > 0.0 && !stop.load(Ordering::Relaxed) {
            let slice = remaining.min(5.0);
            std::thread::sleep(Duration::from_secs_f64(slice / 1e3));
            remaining -= slice;
        }
        if stop.load(Ordering::Relaxed) {
            break;
        }
        run_job(&job);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disabled_profile_yields_noop_handle() {
        let handle = start_load_generator(&LoadProfile::default()).unwrap();
        assert!(!handle.is_active());
        handle.stop();
    }

    #[test]
    fn job_sequence_is_seed_deterministic() {
        let profile = LoadProfile { enabled: true, seed: 7, ..LoadProfile::default() };
        let a = job_sequence(&profile, 0, 64);
        let b = job_sequence(&profile, 0, 64);
        assert_eq!(a, b);
        // Different workers draw different streams.
        let c = job_sequence(&profile, 1, 64);
        assert_ne!(a, c);
    }

    #[test]
    fn interarrival_times_are_positive_with_exponential_spread() {
        let profile =
            LoadProfile { enabled: true, seed: 3, mean_interarrival_ms: 50.0, ..LoadProfile::default() };
        let jobs = job_sequence(&profile, 0, 2000);
        assert!(jobs.iter().all(|j| j.interarrival_ms >= 0.0));
        let mean = jobs.iter().map(|j| j.interarrival_ms).sum::<f64>() / jobs.len() as f64;
        assert!((mean - 50.0).abs() < 5.0, "empirical mean {mean} far from 50");
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let p = LoadProfile { enabled: true, mean_interarrival_ms: 0.0, ..LoadProfile::default() };
        assert!(matches!(start_load_generator(&p), Err(LoadError::InvalidProfile(_))));
        let p = LoadProfile { enabled: true, job_kind_pool: vec![], ..LoadProfile::default() };
        assert!(matches!(start_load_generator(&p), Err(LoadError::InvalidProfile(_))));
    }

    #[test]
    fn second_generator_is_rejected_while_running() {
        let p = LoadProfile { enabled: true, mean_interarrival_ms: 20.0, seed: 5, ..LoadProfile::default() };
        let handle = start_load_generator(&p).unwrap();
        assert!(matches!(start_load_generator(&p), Err(LoadError::AlreadyRunning)));
        handle.stop();
        // After stop the slot frees up again.
        let handle2 = start_load_generator(&p).unwrap();
        handle2.stop();
    }
}
