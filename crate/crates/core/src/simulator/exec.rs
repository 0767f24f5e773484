use serde_json::json;

use super::log::{Event, EventKind, ExecutionLog, Fault, MeasurementRecord};
use super::{BeamlineState, Ramp, SimConfig, Status};
use crate::interpreter::{render_statement, Command, Measure, MoveMode, Quantity, Script};

/// Problems that make a script unsafe to start: range violations plus
/// [`conflicts`].
pub fn analyze(script: &Script, cfg: &SimConfig) -> Vec<Fault> {
    let mut out: Vec<Fault> = script
        .violations()
        .into_iter()
        .map(|(path, v)| Fault { path, message: v.message })
        .collect();
    out.extend(conflicts(script, cfg));
    out
}

/// Checks that need the simulator: loops whose body drives the quantity the
/// loop waits on, and absolute moves past this endstation's travel limit.
pub fn conflicts(script: &Script, cfg: &SimConfig) -> Vec<Fault> {
    let mut out = Vec::new();
    for (path, c) in script.walk() {
        match c {
            Command::Until { quantity, body, .. } => {
                let inner = Script::new(body.clone());
                for (sub, d) in inner.walk() {
                    if controls(d, *quantity) {
                        let mut p = path.clone();
                        p.extend(sub);
                        out.push(Fault {
                            path: p,
                            message: format!(
                                "`{}` inside a loop waiting on {} would fight the condition",
                                d.name(),
                                quantity.name()
                            ),
                        });
                    }
                }
            }
            Command::MoveMotor { amount, mode: MoveMode::Absolute, .. } if amount.abs() > cfg.motor_limit => {
                out.push(Fault { path, message: format!("amount {amount} is beyond the motor limit {}", cfg.motor_limit) });
            }
            _ => {}
        }
    }
    out
}

fn controls(c: &Command, q: Quantity) -> bool {
    match (c, q) {
        (Command::SetTemperature { .. }, Quantity::Temperature) => true,
        (Command::SetHumidity { .. }, Quantity::Humidity) => true,
        (Command::Until { quantity, .. }, _) => *quantity == q,
        _ => false,
    }
}

pub fn execute(state: &BeamlineState, script: &Script, cfg: &SimConfig) -> (BeamlineState, ExecutionLog) {
    execute_with(state, script, cfg, &mut |_, _| {})
}

/// Run `script`, calling `observer` with every event as it happens and the
/// state right after it.
pub fn execute_with(
    state: &BeamlineState,
    script: &Script,
    cfg: &SimConfig,
    observer: &mut dyn FnMut(&Event, &BeamlineState),
) -> (BeamlineState, ExecutionLog) {
    let mut r = Runner { s: state.clone(), cfg: *cfg, events: Vec::new(), observer };
    if script.is_empty() {
        return (r.s, ExecutionLog::default());
    }
    if state.status != Status::Idle {
        r.emit(EventKind::Fault(Fault { path: Vec::new(), message: "an execution is already running".into() }));
        return (r.s, ExecutionLog { events: r.events });
    }
    let problems = analyze(script, cfg);
    if !problems.is_empty() {
        for f in problems {
            r.emit(EventKind::Fault(f));
        }
        return (r.s, ExecutionLog { events: r.events });
    }
    r.s.status = Status::Executing;
    r.delta("status", json!("executing"));
    if r.block(&script.commands, &mut Vec::new()).is_err() {
        r.stop_ramps();
    }
    r.s.status = Status::Idle;
    r.delta("status", json!("idle"));
    (r.s, ExecutionLog { events: r.events })
}

struct Halt;

struct Runner<'a> {
    s: BeamlineState,
    cfg: SimConfig,
    events: Vec<Event>,
    observer: &'a mut dyn FnMut(&Event, &BeamlineState),
}

impl Runner<'_> {
    fn emit(&mut self, kind: EventKind) {
        let e = Event { clock: self.s.clock, kind };
        (self.observer)(&e, &self.s);
        self.events.push(e);
    }

    fn delta(&mut self, field: &str, value: serde_json::Value) {
        self.emit(EventKind::State { field: field.into(), value });
    }

    fn fault(&mut self, path: &[usize], message: String) -> Result<(), Halt> {
        self.emit(EventKind::Fault(Fault { path: path.to_vec(), message }));
        Err(Halt)
    }

    /// Move the clock forward to `t`, carrying any active ramps along.
    fn advance_to(&mut self, t: f64) {
        if t <= self.s.clock {
            return;
        }
        let tick = self.cfg.ramp_tick;
        if tick > 0.0 {
            let mut marks: Vec<(f64, bool)> = Vec::new();
            for (ramp, is_temp) in [(self.s.temperature_ramp, true), (self.s.humidity_ramp, false)] {
                let Some(r) = ramp else { continue };
                let mut k = ((self.s.clock - r.start) / tick).floor() + 1.0;
                loop {
                    let m = r.start + k * tick;
                    if m >= t || m >= r.end() {
                        break;
                    }
                    marks.push((m, is_temp));
                    k += 1.0;
                }
            }
            marks.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            for (m, is_temp) in marks {
                self.s.clock = m;
                self.settle();
                if is_temp {
                    self.delta("temperature", json!(self.s.temperature));
                } else {
                    self.delta("humidity", json!(self.s.humidity));
                }
            }
        }
        self.s.clock = t;
        let (had_t, had_h) = (self.s.temperature_ramp.is_some(), self.s.humidity_ramp.is_some());
        self.settle();
        if had_t {
            self.delta("temperature", json!(self.s.temperature));
        }
        if had_h {
            self.delta("humidity", json!(self.s.humidity));
        }
    }

    /// Recompute ramped values at the current clock; finished ramps end.
    fn settle(&mut self) {
        let now = self.s.clock;
        if let Some(r) = self.s.temperature_ramp {
            self.s.temperature = r.value_at(now);
            if now >= r.end() {
                self.s.temperature_ramp = None;
            }
        }
        if let Some(r) = self.s.humidity_ramp {
            self.s.humidity = r.value_at(now);
            if now >= r.end() {
                self.s.humidity_ramp = None;
            }
        }
    }

    fn stop_ramps(&mut self) {
        if self.s.temperature_ramp.take().is_some() {
            self.s.temperature_setpoint = self.s.temperature;
            self.delta("temperature_setpoint", json!(self.s.temperature_setpoint));
        }
        if self.s.humidity_ramp.take().is_some() {
            self.s.humidity_setpoint = self.s.humidity;
            self.delta("humidity_setpoint", json!(self.s.humidity_setpoint));
        }
    }

    fn start_ramp(&mut self, q: Quantity, to: f64, rate: f64) -> Ramp {
        let from = match q {
            Quantity::Temperature => self.s.temperature,
            Quantity::Humidity => self.s.humidity,
        };
        let r = Ramp { from, to, rate, start: self.s.clock };
        let active = (r.duration() > 0.0).then_some(r);
        match q {
            Quantity::Temperature => {
                self.s.temperature_setpoint = to;
                self.s.ramp = rate;
                self.s.temperature_ramp = active;
                self.delta("temperature_setpoint", json!(to));
                self.delta("ramp", json!(rate));
            }
            Quantity::Humidity => {
                self.s.humidity_setpoint = to;
                self.s.humidity_ramp = active;
                self.delta("humidity_setpoint", json!(to));
            }
        }
        r
    }

    fn block(&mut self, cmds: &[Command], path: &mut Vec<usize>) -> Result<(), Halt> {
        for (i, c) in cmds.iter().enumerate() {
            path.push(i);
            let r = self.command(c, path);
            path.pop();
            r?;
        }
        Ok(())
    }

    fn command(&mut self, c: &Command, path: &mut Vec<usize>) -> Result<(), Halt> {
        let statement = render_statement(c);
        self.emit(EventKind::Started { path: path.clone(), statement: statement.clone() });
        let r = match c.check() {
            Err(v) => self.fault(path, v.message),
            Ok(()) => self.run(c, path),
        };
        self.emit(EventKind::Finished { path: path.clone(), statement, ok: r.is_ok() });
        r
    }

    fn travel(&mut self, path: &[usize], x: f64, y: f64) -> Result<(), Halt> {
        let limit = self.cfg.motor_limit;
        for (axis, v) in [("x", x), ("y", y)] {
            if !v.is_finite() || v.abs() > limit {
                return self.fault(path, format!("motor {axis} target {v} mm is beyond the limit of {limit} mm"));
            }
        }
        let distance = (x - self.s.motor_x).abs() + (y - self.s.motor_y).abs();
        let end = self.s.clock + distance / self.cfg.motor_speed;
        self.advance_to(end);
        if x != self.s.motor_x {
            self.s.motor_x = x;
            self.delta("motor_x", json!(x));
        }
        if y != self.s.motor_y {
            self.s.motor_y = y;
            self.delta("motor_y", json!(y));
        }
        Ok(())
    }

    fn run(&mut self, c: &Command, path: &mut Vec<usize>) -> Result<(), Halt> {
        match c {
            Command::SetTemperature { target, ramp } => {
                let r = self.start_ramp(Quantity::Temperature, *target, *ramp);
                self.advance_to(r.end());
                self.s.temperature = *target;
            }
            Command::SetHumidity { target } => {
                let r = self.start_ramp(Quantity::Humidity, *target, self.cfg.humidity_rate);
                self.advance_to(r.end());
                self.s.humidity = *target;
            }
            Command::MoveMotor { axis, amount, mode } => {
                let (mut x, mut y) = (self.s.motor_x, self.s.motor_y);
                let slot = match axis.name() {
                    "x" => &mut x,
                    _ => &mut y,
                };
                *slot = match mode {
                    MoveMode::Relative => *slot + amount,
                    MoveMode::Absolute => *amount,
                };
                self.travel(path, x, y)?;
            }
            Command::GotoPoint { x, y } => self.travel(path, *x, *y)?,
            Command::SetSample { name } => {
                self.s.sample_name = name.clone();
                self.delta("sample_name", json!(name));
            }
            Command::SetParameters { exposure, angles, protocol } => {
                if let Some(e) = exposure {
                    self.s.default_exposure = *e;
                    self.delta("default_exposure", json!(e));
                }
                if !angles.is_empty() {
                    self.s.default_angles = angles.clone();
                    self.delta("default_angles", json!(angles));
                }
                if let Some(p) = protocol {
                    self.s.default_protocol = Some(p.clone());
                    self.delta("default_protocol", json!(p));
                }
            }
            Command::Measure(m) => self.measure(m, path)?,
            Command::Repeat { count, period, body } => {
                let t0 = self.s.clock;
                for k in 0..*count {
                    if let Some(p) = period {
                        let mark = t0 + p * ((self.s.clock - t0) / p).ceil().max(k as f64);
                        self.advance_to(mark);
                    }
                    self.block(body, path)?;
                }
            }
            Command::Until { quantity, threshold, ramp, period, body } => {
                let r = self.start_ramp(*quantity, *threshold, *ramp);
                let t0 = self.s.clock;
                let mut k = 0.0f64;
                loop {
                    let reached = match quantity {
                        Quantity::Temperature => self.s.temperature_ramp.is_none(),
                        Quantity::Humidity => self.s.humidity_ramp.is_none(),
                    };
                    if reached {
                        break;
                    }
                    if let Some(p) = period {
                        let mark = t0 + p * ((self.s.clock - t0) / p).ceil().max(k);
                        if mark >= r.end() {
                            self.advance_to(r.end());
                            break;
                        }
                        self.advance_to(mark);
                    }
                    let before = self.s.clock;
                    self.block(body, path)?;
                    k += 1.0;
                    if body.is_empty() || (period.is_none() && self.s.clock == before) {
                        self.advance_to(r.end());
                        break;
                    }
                }
                match quantity {
                    Quantity::Temperature => self.s.temperature = *threshold,
                    Quantity::Humidity => self.s.humidity = *threshold,
                }
            }
        }
        Ok(())
    }

    fn measure(&mut self, m: &Measure, path: &[usize]) -> Result<(), Halt> {
        if let Some((x, y)) = m.position {
            self.travel(path, x, y)?;
        }
        let exposure = m.exposure.unwrap_or(self.s.default_exposure);
        let angles: Vec<Option<f64>> = match (m.angles.is_empty(), self.s.default_angles.is_empty()) {
            (false, _) => m.angles.iter().copied().map(Some).collect(),
            (true, false) => self.s.default_angles.iter().copied().map(Some).collect(),
            (true, true) => vec![None],
        };
        let protocol = m.protocol.clone().or_else(|| self.s.default_protocol.clone());
        if let Some(d) = &m.direction {
            self.emit(EventKind::Warning {
                message: format!("scan along {d} is not expanded; taking a single measurement per angle"),
            });
        }
        for angle in angles {
            self.advance_to(self.s.clock + exposure + self.cfg.readout);
            let record = MeasurementRecord {
                seq: self.s.next_record,
                clock: self.s.clock,
                kind: m.kind.clone(),
                protocol: protocol.clone(),
                exposure,
                angle,
                position: (self.s.motor_x, self.s.motor_y),
                temperature: self.s.temperature,
                humidity: self.s.humidity,
                sample: self.s.sample_name.clone(),
                direction: m.direction.clone(),
            };
            self.s.next_record += 1;
            self.emit(EventKind::Measurement(record));
        }
        Ok(())
    }
}
