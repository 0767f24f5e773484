use std::io::{BufRead, Write};

use anyhow::Result;
use beamtalk_core::interpreter::interpret;
use beamtalk_core::simulator::{execute, snapshot, BeamlineState, EventKind, SimConfig};
use beamtalk_core::tagger::TaggerModel;

/// Read requests line by line. Each interpretable request is shown and then
/// needs a `y` on the next line; anything else rejects it. `:state` prints
/// the beamline and `:quit` ends the loop.
pub fn run(model: &TaggerModel, execute_confirmed: bool, input: impl BufRead, mut out: impl Write) -> Result<()> {
    let mut state = BeamlineState::default();
    let cfg = SimConfig::default();
    let mut lines = input.lines();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let Some(line) = lines.next().transpose()? else { break };
        let text = line.trim();
        match text {
            "" => continue,
            ":quit" | ":q" => break,
            ":state" => {
                writeln!(out, "{}", serde_json::to_string(&snapshot(&state))?)?;
                continue;
            }
            _ => {}
        }
        let i = interpret(text, model);
        crate::print_interpretation(&mut out, &i)?;
        if i.script.is_empty() {
            writeln!(out, "nothing to run")?;
            continue;
        }
        if i.is_blocked() {
            writeln!(out, "blocked; fix the request and try again")?;
            continue;
        }
        write!(out, "confirm? [y/n] ")?;
        out.flush()?;
        let answer = lines.next().transpose()?.unwrap_or_default();
        if !answer.trim().eq_ignore_ascii_case("y") {
            writeln!(out, "rejected; state unchanged")?;
            continue;
        }
        if !execute_confirmed {
            writeln!(out, "confirmed (preview only; pass --execute to run on the simulator)")?;
            continue;
        }
        let before = state.clock;
        let (after, log) = execute(&state, &i.script, &cfg);
        for e in &log.events {
            match &e.kind {
                EventKind::State { field, value } if field != "status" => {
                    writeln!(out, "  [{:>9.1} s] {field} = {value}", e.clock)?
                }
                EventKind::Measurement(r) => writeln!(
                    out,
                    "  [{:>9.1} s] measurement #{} {} exposure {}{}",
                    e.clock,
                    r.seq,
                    r.kind,
                    r.exposure,
                    r.angle.map(|a| format!(" angle {a}")).unwrap_or_default()
                )?,
                EventKind::Warning { message } => writeln!(out, "  [{:>9.1} s] note: {message}", e.clock)?,
                EventKind::Fault(f) => writeln!(out, "  [{:>9.1} s] fault: {}", e.clock, f.message)?,
                _ => {}
            }
        }
        state = after;
        writeln!(out, "clock +{:.1} s (now {:.1} s)", state.clock - before, state.clock)?;
    }
    writeln!(out)?;
    Ok(())
}
