//! Device state probing: available memory and CPU utilization.
//!
//! The real probe reads `/proc/meminfo` and `/proc/stat`. Setting
//! `LATSEL_PROBE=fake:<mem_bytes>:<util>` swaps in a fixed-value fake so
//! generation runs are reproducible.

use std::fs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One device-state snapshot: available memory in bytes and a CPU
/// utilization fraction in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProbe {
    pub available_memory_bytes: u64,
    pub utilization: f64,
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("device probe unavailable: {0}")]
    Unavailable(String),
}

/// Source of device-state snapshots. Implementations may keep state between
/// calls (the system probe diffs CPU counters against the previous call).
pub trait Prober: Send {
    fn probe(&mut self) -> Result<DeviceProbe, ProbeError>;
}

/// Fixed-value probe for reproducible runs and tests.
pub struct FakeProbe {
    pub snapshot: DeviceProbe,
}

impl FakeProbe {
    pub fn new(available_memory_bytes: u64, utilization: f64) -> Self {
        Self {
            snapshot: DeviceProbe { available_memory_bytes, utilization },
        }
    }
}

impl Prober for FakeProbe {
    fn probe(&mut self) -> Result<DeviceProbe, ProbeError> {
        Ok(self.snapshot)
    }
}

/// Probe that always fails; exercises the caller-side fallback path.
pub struct FailingProbe;

impl Prober for FailingProbe {
    fn probe(&mut self) -> Result<DeviceProbe, ProbeError> {
        Err(ProbeError::Unavailable("forced failure".into()))
    }
}

/// Linux system probe. Utilization is the busy fraction of the CPU-time
/// delta since the previous call (whole-uptime average on the first call).
pub struct SystemProbe {
    prev_cpu: Option<CpuCounters>,
}

#[derive(Clone, Copy)]
struct CpuCounters {
    busy: u64,
    total: u64,
}

impl SystemProbe {
    pub fn new() -> Self {
        Self { prev_cpu: None }
    }
}

impl Default for SystemProbe {
    fn default() -> Self {
        Self::new()
    }
}

impl Prober for SystemProbe {
    fn probe(&mut self) -> Result<DeviceProbe, ProbeError> {
        let mem = read_available_memory()?;
        let counters = read_cpu_counters()?;
        let utilization = match self.prev_cpu {
            Some(prev) if counters.total > prev.total => {
                let dbusy = counters.busy.saturating_sub(prev.busy) as f64;
                let dtotal = (counters.total - prev.total) as f64;
                (dbusy / dtotal).clamp(0.0, 1.0)
            }
            _ => {
                if counters.total == 0 {
                    0.0
                } else {
                    (counters.busy as f64 / counters.total as f64).clamp(0.0, 1.0)
                }
            }
        };
        self.prev_cpu = Some(counters);
        Ok(DeviceProbe { available_memory_bytes: mem, utilization })
    }
}

fn read_available_memory() -> Result<u64, ProbeError> {
    let text = fs::read_to_string("/proc/meminfo")
        .map_err(|e| ProbeError::Unavailable(format!("/proc/meminfo: {e}")))?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("MemAvailable:") {
            let kb: u64 = rest
                .trim()
                .trim_end_matches("kB")
                .trim()
                .parse()
                .map_err(|e| ProbeError::Unavailable(format!("MemAvailable parse: {e}")))?;
            return Ok(kb * 1024);
        }
    }
    Err(ProbeError::Unavailable("MemAvailable not found".into()))
}

fn read_cpu_counters() -> Result<CpuCounters, ProbeError> {
    let text = fs::read_to_string("/proc/stat")
        .map_err(|e| ProbeError::Unavailable(format!("/proc/stat: {e}")))?;
    let line = text
        .lines()
        .find(|l| l.starts_with("cpu "))
        .ok_or_else(|| ProbeError::Unavailable("cpu line not found".into()))?;
    let fields: Vec<u64> = line
        .split_whitespace()
        .skip(1)
        .map(|f| f.parse().unwrap_or(0))
        .collect();
    if fields.len() < 4 {
        return Err(ProbeError::Unavailable("short cpu line".into()));
    }
    let total: u64 = fields.iter().sum();
    // idle + iowait count as not-busy.
    let idle = fields[3] + fields.get(4).copied().unwrap_or(0);
    Ok(CpuCounters { busy: total.saturating_sub(idle), total })
}

/// Environment variable selecting the probe implementation.
pub const PROBE_ENV_VAR: &str = "LATSEL_PROBE";

/// Build a prober from `LATSEL_PROBE`. `fake:<mem_bytes>:<util>` selects a
/// [`FakeProbe`]; anything else (or unset) selects the system probe.
pub fn prober_from_env() -> Box<dyn Prober> {
    match std::env::var(PROBE_ENV_VAR) {
        Ok(v) => match parse_fake_probe(&v) {
            Some((mem, util)) => Box::new(FakeProbe::new(mem, util)),
            None => Box::new(SystemProbe::new()),
        },
        Err(_) => Box::new(SystemProbe::new()),
    }
}

fn parse_fake_probe(spec: &str) -> Option<(u64, f64)> {
    let rest = spec.strip_prefix("fake:")?;
    let (mem, util) = rest.split_once(':')?;
    let mem: u64 = mem.parse().ok()?;
    let util: f64 = util.parse().ok()?;
    if !(0.0..=1.0).contains(&util) {
        return None;
    }
    Some((mem, util))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fake_probe_passes_through() {
        let mut p = FakeProbe::new(8 * 1024 * 1024 * 1024, 0.25);
        let snap = p.probe().unwrap();
        assert_eq!(snap.available_memory_bytes, 8_589_934_592);
        assert_eq!(snap.utilization, 0.25);
    }

    #[test]
    fn system_probe_reports_sane_values() {
        let mut p = SystemProbe::new();
        let first = p.probe().expect("system probe should work on linux");
        assert!(first.utilization >= 0.0 && first.utilization <= 1.0);
        // Second call exercises the delta path.
        let second = p.probe().unwrap();
        assert!(second.utilization >= 0.0 && second.utilization <= 1.0);
    }

    #[test]
    fn failing_probe_fails() {
        assert!(FailingProbe.probe().is_err());
    }

    #[test]
    fn fake_spec_parsing() {
        assert_eq!(parse_fake_probe("fake:8589934592:0.25"), Some((8_589_934_592, 0.25)));
        assert_eq!(parse_fake_probe("fake:10:1.5"), None);
        assert_eq!(parse_fake_probe("sys"), None);
    }
}
