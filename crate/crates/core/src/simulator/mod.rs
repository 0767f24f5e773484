//! Deterministic beamline simulator under a virtual clock.
//!
//! Time is in seconds since reset. Temperature and humidity move linearly
//! toward their setpoints at the commanded rate, motors travel at a constant
//! speed, and a measurement lasts its exposure plus the readout time. No
//! randomness is involved: the same state and script always give the same
//! log, bit for bit.

mod exec;
mod log;

use serde::{Deserialize, Serialize};

use crate::interpreter::{HUMIDITY_RANGE, MOTOR_LIMIT, TEMPERATURE_RANGE};
use crate::{Error, Result};

pub use exec::{analyze, conflicts, execute, execute_with};
pub use log::{read_log, write_log, Event, EventKind, ExecutionLog, Fault, MeasurementRecord, Outcome};

/// Physical constants of the simulated endstation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Motor travel speed, mm/s.
    pub motor_speed: f64,
    /// Travel limit per axis, mm.
    pub motor_limit: f64,
    /// Detector readout per shot, s.
    pub readout: f64,
    /// Humidity chamber rate, %/min.
    pub humidity_rate: f64,
    /// Interval between intermediate ramp events, s of virtual time; 0 turns them off.
    pub ramp_tick: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            motor_speed: 10.0,
            motor_limit: MOTOR_LIMIT,
            readout: 0.0,
            humidity_rate: crate::interpreter::DEFAULT_HUMIDITY_RAMP,
            ramp_tick: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Idle,
    Executing,
}

/// A linear ramp of one quantity toward a setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) struct Ramp {
    from: f64,
    to: f64,
    /// Units per minute, positive.
    rate: f64,
    start: f64,
}

impl Ramp {
    fn duration(&self) -> f64 {
        (self.to - self.from).abs() / self.rate * 60.0
    }

    fn end(&self) -> f64 {
        self.start + self.duration()
    }

    fn value_at(&self, clock: f64) -> f64 {
        if clock >= self.end() {
            return self.to;
        }
        let moved = self.rate * (clock - self.start) / 60.0;
        if self.to >= self.from {
            self.from + moved
        } else {
            self.from - moved
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamlineState {
    pub motor_x: f64,
    pub motor_y: f64,
    pub temperature: f64,
    pub temperature_setpoint: f64,
    /// Last commanded temperature ramp, °C/min.
    pub ramp: f64,
    pub humidity: f64,
    pub humidity_setpoint: f64,
    pub sample_name: String,
    pub default_exposure: f64,
    pub default_angles: Vec<f64>,
    pub default_protocol: Option<String>,
    pub clock: f64,
    pub status: Status,
    #[serde(skip)]
    pub(crate) temperature_ramp: Option<Ramp>,
    #[serde(skip)]
    pub(crate) humidity_ramp: Option<Ramp>,
    #[serde(skip)]
    pub(crate) next_record: u64,
}

/// Optional starting values for [`reset`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    pub motor_x: Option<f64>,
    pub motor_y: Option<f64>,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub sample_name: Option<String>,
    pub default_exposure: Option<f64>,
}

pub const DEFAULT_TEMPERATURE: f64 = 25.0;
pub const DEFAULT_HUMIDITY: f64 = 40.0;
pub const DEFAULT_RAMP: f64 = crate::interpreter::DEFAULT_RAMP;
pub const DEFAULT_EXPOSURE: f64 = 1.0;

impl Default for BeamlineState {
    fn default() -> Self {
        BeamlineState {
            motor_x: 0.0,
            motor_y: 0.0,
            temperature: DEFAULT_TEMPERATURE,
            temperature_setpoint: DEFAULT_TEMPERATURE,
            ramp: DEFAULT_RAMP,
            humidity: DEFAULT_HUMIDITY,
            humidity_setpoint: DEFAULT_HUMIDITY,
            sample_name: String::new(),
            default_exposure: DEFAULT_EXPOSURE,
            default_angles: Vec::new(),
            default_protocol: None,
            clock: 0.0,
            status: Status::Idle,
            temperature_ramp: None,
            humidity_ramp: None,
            next_record: 0,
        }
    }
}

/// A fresh state: motors at 0 mm, 25 °C, 40 % humidity, clock 0.
pub fn reset(overrides: &Overrides) -> Result<BeamlineState> {
    let mut s = BeamlineState::default();
    let check = |name: &str, v: f64, (lo, hi): (f64, f64)| {
        if v.is_finite() && (lo..=hi).contains(&v) {
            Ok(v)
        } else {
            Err(Error::Validation(format!("{name} {v} is outside [{lo}, {hi}]")))
        }
    };
    if let Some(x) = overrides.motor_x {
        s.motor_x = check("motor_x", x, (-MOTOR_LIMIT, MOTOR_LIMIT))?;
    }
    if let Some(y) = overrides.motor_y {
        s.motor_y = check("motor_y", y, (-MOTOR_LIMIT, MOTOR_LIMIT))?;
    }
    if let Some(t) = overrides.temperature {
        s.temperature = check("temperature", t, TEMPERATURE_RANGE)?;
        s.temperature_setpoint = s.temperature;
    }
    if let Some(h) = overrides.humidity {
        s.humidity = check("humidity", h, HUMIDITY_RANGE)?;
        s.humidity_setpoint = s.humidity;
    }
    if let Some(name) = &overrides.sample_name {
        s.sample_name = name.clone();
    }
    if let Some(e) = overrides.default_exposure {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::Validation(format!("default_exposure must be positive, got {e}")));
        }
        s.default_exposure = e;
    }
    Ok(s)
}

/// Read-only view for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub motor_x: f64,
    pub motor_y: f64,
    pub temperature: f64,
    pub temperature_setpoint: f64,
    pub ramp: f64,
    pub ramping: bool,
    pub humidity: f64,
    pub humidity_setpoint: f64,
    pub humidity_ramping: bool,
    pub sample_name: String,
    pub default_exposure: f64,
    pub default_angles: Vec<f64>,
    pub default_protocol: Option<String>,
    pub clock: f64,
    pub status: Status,
}

pub fn snapshot(s: &BeamlineState) -> Snapshot {
    Snapshot {
        motor_x: s.motor_x,
        motor_y: s.motor_y,
        temperature: s.temperature,
        temperature_setpoint: s.temperature_setpoint,
        ramp: s.ramp,
        ramping: s.temperature_ramp.is_some(),
        humidity: s.humidity,
        humidity_setpoint: s.humidity_setpoint,
        humidity_ramping: s.humidity_ramp.is_some(),
        sample_name: s.sample_name.clone(),
        default_exposure: s.default_exposure,
        default_angles: s.default_angles.clone(),
        default_protocol: s.default_protocol.clone(),
        clock: s.clock,
        status: s.status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_defaults() {
        let s = reset(&Overrides::default()).unwrap();
        assert_eq!(s.temperature, 25.0);
        assert_eq!(s.humidity, 40.0);
        assert_eq!((s.motor_x, s.motor_y, s.clock), (0.0, 0.0, 0.0));
        assert_eq!(s.status, Status::Idle);
    }

    #[test]
    fn reset_rejects_out_of_range_overrides() {
        let o = Overrides { temperature: Some(700.0), ..Overrides::default() };
        assert!(matches!(reset(&o), Err(Error::Validation(_))));
        let o = Overrides { humidity: Some(-1.0), ..Overrides::default() };
        assert!(reset(&o).is_err());
        let o = Overrides { motor_x: Some(f64::NAN), ..Overrides::default() };
        assert!(reset(&o).is_err());
    }

    #[test]
    fn reset_is_idempotent() {
        let a = reset(&Overrides::default()).unwrap();
        let b = reset(&Overrides::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(snapshot(&a), snapshot(&b));
        assert_eq!(snapshot(&a).temperature, 25.0);
    }

    #[test]
    fn ramp_interpolates_without_drift() {
        let r = Ramp { from: 25.0, to: 200.0, rate: 20.0, start: 100.0 };
        assert_eq!(r.duration(), 525.0);
        assert_eq!(r.value_at(100.0), 25.0);
        assert_eq!(r.value_at(130.0), 35.0);
        assert_eq!(r.value_at(625.0), 200.0);
        assert_eq!(r.value_at(1e9), 200.0);
        let down = Ramp { from: 25.0, to: -5.0, rate: 60.0, start: 0.0 };
        assert_eq!(down.value_at(15.0), 10.0);
    }
}
