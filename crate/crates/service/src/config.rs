use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use beamtalk_core::simulator::SimConfig;

pub const DEFAULT_EXPIRY: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// Pending interpretations older than this can no longer be confirmed.
    pub expiry: Duration,
    pub sim: SimConfig,
    /// Virtual seconds played per wall second while executing; 0 runs
    /// scripts as fast as possible.
    pub time_scale: f64,
    /// Loaded at startup when it exists and rewritten on shutdown.
    pub history_path: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            expiry: DEFAULT_EXPIRY,
            sim: SimConfig::default(),
            time_scale: 0.0,
            history_path: None,
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by `BEAMTALK_*` environment variables:
    /// `EXPIRY_SECS`, `TIME_SCALE`, `HISTORY`, `MOTOR_SPEED`, `MOTOR_LIMIT`,
    /// `READOUT`, `HUMIDITY_RATE` and `RAMP_TICK`.
    pub fn from_env() -> Result<ServiceConfig, String> {
        Self::from_vars(|k| std::env::var(k).ok())
    }

    pub fn from_vars(get: impl Fn(&str) -> Option<String>) -> Result<ServiceConfig, String> {
        let mut c = ServiceConfig::default();
        let num = |name: &str| -> Result<Option<f64>, String> {
            let key = format!("BEAMTALK_{name}");
            match get(&key) {
                None => Ok(None),
                Some(v) => match v.trim().parse::<f64>() {
                    Ok(x) if x.is_finite() && x >= 0.0 => Ok(Some(x)),
                    _ => Err(format!("{key} must be a non-negative number, got `{v}`")),
                },
            }
        };
        if let Some(s) = num("EXPIRY_SECS")? {
            c.expiry = Duration::from_secs_f64(s);
        }
        if let Some(s) = num("TIME_SCALE")? {
            c.time_scale = s;
        }
        for (name, slot) in [
            ("MOTOR_SPEED", &mut c.sim.motor_speed),
            ("MOTOR_LIMIT", &mut c.sim.motor_limit),
            ("READOUT", &mut c.sim.readout),
            ("HUMIDITY_RATE", &mut c.sim.humidity_rate),
            ("RAMP_TICK", &mut c.sim.ramp_tick),
        ] {
            if let Some(v) = num(name)? {
                *slot = v;
            }
        }
        if c.sim.motor_speed <= 0.0 || c.sim.humidity_rate <= 0.0 {
            return Err("motor speed and humidity rate must be positive".into());
        }
        c.history_path = get("BEAMTALK_HISTORY").filter(|p| !p.is_empty()).map(PathBuf::from);
        Ok(c)
    }
}

/// Wall-clock source, in milliseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> ManualClock {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, by: Duration) {
        self.0.fetch_add(by.as_millis() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_overrides_defaults() {
        let vars: HashMap<&str, &str> = [
            ("BEAMTALK_EXPIRY_SECS", "30"),
            ("BEAMTALK_TIME_SCALE", "60"),
            ("BEAMTALK_MOTOR_SPEED", "2.5"),
            ("BEAMTALK_HISTORY", "/tmp/h.jsonl"),
        ]
        .into();
        let c = ServiceConfig::from_vars(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.expiry, Duration::from_secs(30));
        assert_eq!(c.time_scale, 60.0);
        assert_eq!(c.sim.motor_speed, 2.5);
        assert_eq!(c.sim.readout, 0.0);
        assert_eq!(c.history_path, Some(PathBuf::from("/tmp/h.jsonl")));
    }

    #[test]
    fn bad_numbers_are_rejected() {
        let c = ServiceConfig::from_vars(|k| (k == "BEAMTALK_EXPIRY_SECS").then(|| "soon".to_string()));
        assert!(c.unwrap_err().contains("BEAMTALK_EXPIRY_SECS"));
        let c = ServiceConfig::from_vars(|k| (k == "BEAMTALK_MOTOR_SPEED").then(|| "0".to_string()));
        assert!(c.is_err());
    }

    #[test]
    fn manual_clock_moves_on_request() {
        let c = ManualClock::new(1000);
        assert_eq!(c.now_ms(), 1000);
        c.advance(Duration::from_secs(2));
        assert_eq!(c.now_ms(), 3000);
    }
}
