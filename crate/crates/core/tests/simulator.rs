use std::path::PathBuf;

use beamtalk_core::interpreter::{parse_script, Script};
use beamtalk_core::simulator::{execute, reset, EventKind, ExecutionLog, Overrides, SimConfig, Status};

fn golden(name: &str) -> Script {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/table3").join(format!("{name}.json"));
    Script::new(serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap())
}

fn run(script: &Script) -> (beamtalk_core::simulator::BeamlineState, ExecutionLog) {
    execute(&reset(&Overrides::default()).unwrap(), script, &SimConfig::default())
}

/// Seconds to ramp between two values at `rate` per minute.
fn ramp_time(from: f64, to: f64, rate: f64) -> f64 {
    (to - from).abs() / rate * 60.0
}

/// Iterations of a back-to-back loop over a ramp of length `t` when the first
/// pass takes `first` seconds and later ones `rest`.
fn back_to_back(t: f64, first: f64, rest: f64) -> usize {
    let mut starts = 0;
    let mut s = 0.0;
    while s < t {
        starts += 1;
        s += if starts == 1 { first } else { rest };
    }
    starts
}

#[test]
fn repeat_every_two_minutes() {
    let (s, log) = run(&golden("p1"));
    let clocks: Vec<f64> = log.records().map(|r| r.clock).collect();
    assert_eq!(clocks, (0..10).map(|k| 10.0 + 120.0 * k as f64).collect::<Vec<_>>());
    assert_eq!(s.clock, 9.0 * 120.0 + 10.0);
    assert!(log.records().all(|r| r.angle == Some(0.19) && r.protocol.as_deref() == Some("GISAXS")));
    let notes = log.events.iter().filter(|e| matches!(e.kind, EventKind::Warning { .. })).count();
    assert_eq!(notes, 10, "each directional scan is noted as unexpanded");
}

#[test]
fn heat_then_measure_until_400() {
    let (s, log) = run(&golden("p2"));
    let heat = ramp_time(25.0, 200.0, 20.0);
    assert_eq!(heat, 525.0);
    let t = ramp_time(200.0, 400.0, 20.2);
    let travel = (2.0 + 3.0) / 10.0;
    let iterations = back_to_back(t, travel + 60.0, 60.0);
    assert_eq!(iterations, 10);
    assert_eq!(log.records().count(), 2 * iterations);
    assert_eq!(s.clock, heat + travel + 60.0 * iterations as f64);
    assert_eq!(s.temperature, 400.0);
    assert_eq!((s.motor_x, s.motor_y), (2.0, 3.0));
    let temps: Vec<f64> = log.records().map(|r| r.temperature).collect();
    assert!(temps.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn move_and_measure_every_twenty_seconds_until_300() {
    let (s, log) = run(&golden("p3"));
    let t = ramp_time(25.0, 300.0, 10.0);
    let iterations = (t / 20.0).ceil() as usize;
    assert_eq!(iterations, 83);
    assert_eq!(log.records().count(), iterations);
    assert_eq!(s.clock, t);
    assert!((s.motor_x - 0.2 * iterations as f64).abs() < 1e-9);
    for (k, r) in log.records().enumerate() {
        let start = 20.0 * k as f64;
        assert!((r.clock - (start + 0.02 + 1.0)).abs() < 1e-9, "iteration {k} at {}", r.clock);
    }
}

#[test]
fn sample_heat_and_single_repeat() {
    let (s, log) = run(&golden("p4"));
    assert_eq!(log.records().count(), 2);
    assert_eq!(s.sample_name, "polymer");
    assert_eq!(s.clock, 1.0 + ramp_time(25.0, 300.0, 10.0) + 1.0);
    let samples: Vec<&str> = log.records().map(|r| r.sample.as_str()).collect();
    assert_eq!(samples, vec!["", "polymer"]);
}

#[test]
fn repeat_overrunning_its_period_skips_to_the_next_mark() {
    let script = parse_script("repeat(count=3, period=10):\n  measure(kind=\"scan\", exposure=15)\n").unwrap();
    let (s, log) = run(&script);
    let clocks: Vec<f64> = log.records().map(|r| r.clock).collect();
    assert_eq!(clocks, vec![15.0, 35.0, 55.0]);
    assert_eq!(s.clock, 55.0);
}

#[test]
fn humidity_loops_use_the_chamber_rate() {
    let script =
        parse_script("until(quantity=humidity, threshold=70, ramp=5, period=45):\n  measure(kind=\"scan\")\n").unwrap();
    let (s, log) = run(&script);
    let t = ramp_time(40.0, 70.0, SimConfig::default().humidity_rate);
    assert_eq!(log.records().count(), (t / 45.0).ceil() as usize);
    assert_eq!(s.humidity, 70.0);
    assert_eq!(s.clock, t);
}

#[test]
fn a_fault_midway_keeps_what_happened_before() {
    let script = parse_script(
        "set_temperature(target=35, ramp=10)\nrepeat(count=5):\n  move_motor(axis=y, amount=30, mode=relative)\n  measure(kind=\"scan\")\nset_sample(name=\"never\")\n",
    )
    .unwrap();
    let (s, log) = run(&script);
    // y reaches 90 after three passes; the fourth move would pass 100
    assert_eq!(s.motor_y, 90.0);
    assert_eq!(log.records().count(), 3);
    assert_eq!(s.sample_name, "");
    assert_eq!(s.status, Status::Idle);
    assert_eq!(log.fault().unwrap().path, vec![1, 0]);
    assert_eq!(s.temperature, 35.0);
}

#[test]
fn record_sequence_numbers_continue_across_runs() {
    let script = parse_script("measure(kind=\"scan\", angles=[0.1, 0.2])\n").unwrap();
    let (s1, l1) = run(&script);
    let (_, l2) = execute(&s1, &script, &SimConfig::default());
    let seqs: Vec<u64> = l1.records().chain(l2.records()).map(|r| r.seq).collect();
    assert_eq!(seqs, vec![0, 1, 2, 3]);
}
