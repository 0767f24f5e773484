use std::fmt;

use serde::{Deserialize, Serialize};

/// Lowest and highest stage temperature, °C.
pub const TEMPERATURE_RANGE: (f64, f64) = (-200.0, 600.0);
pub const HUMIDITY_RANGE: (f64, f64) = (0.0, 100.0);
/// Largest commanded ramp, °C/min (or %/min for humidity).
pub const MAX_RAMP: f64 = 600.0;
/// Motor travel limit per axis, mm.
pub const MOTOR_LIMIT: f64 = 100.0;
/// Largest single relative move, mm.
pub const MAX_RELATIVE_MOVE: f64 = 200.0;
pub const MAX_EXPOSURE: f64 = 3600.0;
pub const MAX_ANGLE: f64 = 90.0;
pub const MAX_REPEAT: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveMode {
    Relative,
    Absolute,
}

impl MoveMode {
    pub fn name(self) -> &'static str {
        match self {
            MoveMode::Relative => "relative",
            MoveMode::Absolute => "absolute",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Temperature,
    Humidity,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Temperature => "temperature",
            Quantity::Humidity => "humidity",
        }
    }

    pub fn range(self) -> (f64, f64) {
        match self {
            Quantity::Temperature => TEMPERATURE_RANGE,
            Quantity::Humidity => HUMIDITY_RANGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Measure {
    /// Word from the SCAN list, lowercase.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub angles: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
}

/// One beamline action. Temperatures are °C, ramps °C/min, humidity %,
/// distances mm, times s, angles °.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    SetTemperature {
        target: f64,
        ramp: f64,
    },
    SetHumidity {
        target: f64,
    },
    MoveMotor {
        axis: Axis,
        amount: f64,
        mode: MoveMode,
    },
    GotoPoint {
        x: f64,
        y: f64,
    },
    SetSample {
        name: String,
    },
    /// Defaults for later measurements that do not name their own.
    SetParameters {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exposure: Option<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        angles: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        protocol: Option<String>,
    },
    Measure(Measure),
    /// Runs `body` `count` times. With a period, iteration `k` starts at
    /// `k * period` after the first; without one, iterations run back to back.
    Repeat {
        count: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
        body: Vec<Command>,
    },
    /// Ramps `quantity` toward `threshold` at `ramp` per minute and runs
    /// `body` until the threshold is reached. An empty body just waits.
    Until {
        quantity: Quantity,
        threshold: f64,
        ramp: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
        body: Vec<Command>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SetTemperature { .. } => "set_temperature",
            Command::SetHumidity { .. } => "set_humidity",
            Command::MoveMotor { .. } => "move_motor",
            Command::GotoPoint { .. } => "goto_point",
            Command::SetSample { .. } => "set_sample",
            Command::SetParameters { .. } => "set_parameters",
            Command::Measure(_) => "measure",
            Command::Repeat { .. } => "repeat",
            Command::Until { .. } => "until",
        }
    }

    pub fn body(&self) -> Option<&[Command]> {
        match self {
            Command::Repeat { body, .. } | Command::Until { body, .. } => Some(body),
            _ => None,
        }
    }

    pub fn is_wrapper(&self) -> bool {
        self.body().is_some()
    }

    /// Check every argument against its documented range. Returns the
    /// violated argument and a message.
    pub fn check(&self) -> Result<(), Violation> {
        match self {
            Command::SetTemperature { target, ramp } => {
                in_range("target", *target, TEMPERATURE_RANGE)?;
                positive_at_most("ramp", *ramp, MAX_RAMP)
            }
            Command::SetHumidity { target } => in_range("target", *target, HUMIDITY_RANGE),
            Command::MoveMotor { amount, mode, .. } => match mode {
                MoveMode::Relative => in_range("amount", *amount, (-MAX_RELATIVE_MOVE, MAX_RELATIVE_MOVE)),
                MoveMode::Absolute => in_range("amount", *amount, (-MOTOR_LIMIT, MOTOR_LIMIT)),
            },
            Command::GotoPoint { x, y } => {
                in_range("x", *x, (-MOTOR_LIMIT, MOTOR_LIMIT))?;
                in_range("y", *y, (-MOTOR_LIMIT, MOTOR_LIMIT))
            }
            Command::SetSample { name } => nonempty("name", name),
            Command::SetParameters {
                exposure,
                angles,
                protocol,
            } => {
                if let Some(e) = exposure {
                    positive_at_most("exposure", *e, MAX_EXPOSURE)?;
                }
                for a in angles {
                    positive_at_most("angles", *a, MAX_ANGLE)?;
                }
                if let Some(p) = protocol {
                    nonempty("protocol", p)?;
                }
                Ok(())
            }
            Command::Measure(m) => {
                nonempty("kind", &m.kind)?;
                if let Some(p) = &m.protocol {
                    nonempty("protocol", p)?;
                }
                if let Some(e) = m.exposure {
                    positive_at_most("exposure", e, MAX_EXPOSURE)?;
                }
                for a in &m.angles {
                    positive_at_most("angles", *a, MAX_ANGLE)?;
                }
                if let Some((x, y)) = m.position {
                    in_range("position", x, (-MOTOR_LIMIT, MOTOR_LIMIT))?;
                    in_range("position", y, (-MOTOR_LIMIT, MOTOR_LIMIT))?;
                }
                if let Some(d) = &m.direction {
                    nonempty("direction", d)?;
                }
                Ok(())
            }
            Command::Repeat { count, period, body } => {
                if *count < 1 || *count > MAX_REPEAT {
                    return Err(Violation::new("count", format!("count {count} is outside 1..={MAX_REPEAT}")));
                }
                if let Some(p) = period {
                    positive("period", *p)?;
                }
                nonempty_body(body)
            }
            Command::Until {
                quantity,
                threshold,
                ramp,
                period,
                ..
            } => {
                in_range("threshold", *threshold, quantity.range())?;
                positive_at_most("ramp", *ramp, MAX_RAMP)?;
                if let Some(p) = period {
                    positive("period", *p)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub argument: &'static str,
    pub message: String,
}

impl Violation {
    fn new(argument: &'static str, message: String) -> Violation {
        Violation { argument, message }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn in_range(arg: &'static str, v: f64, (lo, hi): (f64, f64)) -> Result<(), Violation> {
    if !v.is_finite() {
        Err(Violation::new(arg, format!("{arg} must be a finite number")))
    } else if v < lo {
        Err(Violation::new(arg, format!("{arg} {v} is below the limit {lo}")))
    } else if v > hi {
        Err(Violation::new(arg, format!("{arg} {v} is above the limit {hi}")))
    } else {
        Ok(())
    }
}

fn positive(arg: &'static str, v: f64) -> Result<(), Violation> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Violation::new(arg, format!("{arg} must be positive, got {v}")))
    }
}

fn positive_at_most(arg: &'static str, v: f64, hi: f64) -> Result<(), Violation> {
    positive(arg, v)?;
    if v > hi {
        Err(Violation::new(arg, format!("{arg} {v} is above the limit {hi}")))
    } else {
        Ok(())
    }
}

fn nonempty(arg: &'static str, s: &str) -> Result<(), Violation> {
    if s.trim().is_empty() {
        Err(Violation::new(arg, format!("{arg} must not be empty")))
    } else {
        Ok(())
    }
}

fn nonempty_body(body: &[Command]) -> Result<(), Violation> {
    if body.is_empty() {
        Err(Violation::new("body", "block body must not be empty".into()))
    } else {
        Ok(())
    }
}

/// An ordered list of commands.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Script {
    pub commands: Vec<Command>,
}

impl Script {
    pub fn new(commands: Vec<Command>) -> Script {
        Script { commands }
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// Every command, depth first, with its nesting path.
    pub fn walk(&self) -> Vec<(Vec<usize>, &Command)> {
        fn go<'a>(cmds: &'a [Command], path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, &'a Command)>) {
            for (i, c) in cmds.iter().enumerate() {
                path.push(i);
                out.push((path.clone(), c));
                if let Some(body) = c.body() {
                    go(body, path, out);
                }
                path.pop();
            }
        }
        let mut out = Vec::new();
        go(&self.commands, &mut Vec::new(), &mut out);
        out
    }

    /// All range violations, each with the path of the offending command.
    pub fn violations(&self) -> Vec<(Vec<usize>, Violation)> {
        self.walk()
            .into_iter()
            .filter_map(|(p, c)| c.check().err().map(|v| (p, v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_above_limit_is_rejected() {
        let c = Command::SetTemperature { target: 9999.0, ramp: 10.0 };
        let v = c.check().unwrap_err();
        assert_eq!(v.argument, "target");
        assert!(v.message.contains("600"));
    }

    #[test]
    fn empty_wrapper_body_is_rejected() {
        let c = Command::Repeat { count: 2, period: None, body: vec![] };
        assert!(c.check().is_err());
    }

    #[test]
    fn serde_uses_command_tag() {
        let c = Command::SetHumidity { target: 45.0 };
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v, serde_json::json!({"command": "set_humidity", "target": 45.0}));
        let m = Command::Measure(Measure { kind: "scan".into(), ..Measure::default() });
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v, serde_json::json!({"command": "measure", "kind": "scan"}));
        assert_eq!(serde_json::from_value::<Command>(v).unwrap(), m);
    }

    #[test]
    fn walk_visits_nested_commands_with_paths() {
        let s = Script::new(vec![
            Command::SetHumidity { target: 1.0 },
            Command::Repeat {
                count: 2,
                period: None,
                body: vec![Command::SetSample { name: "a".into() }],
            },
        ]);
        let paths: Vec<Vec<usize>> = s.walk().into_iter().map(|(p, _)| p).collect();
        assert_eq!(paths, vec![vec![0], vec![1], vec![1, 0]]);
    }
}
