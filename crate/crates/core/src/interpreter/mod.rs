//! Labelled tokens to a typed, confirmable [`Script`].
//!
//! `interpret` runs the whole chain: tokenize, predict, repair, group,
//! compile, assemble and render. Problems never abort it; they come back as
//! [`Warning`]s, and a blocking warning means the script must not be run.

mod compile;
mod render;
mod script;

use serde::{Deserialize, Serialize};

pub use compile::{
    assemble_script, compile_group, group_entities, parse_value, CommandGroup, EntitySpan, Warning,
    DEFAULT_HUMIDITY_RAMP, DEFAULT_KIND, DEFAULT_RAMP,
};
pub use render::{parse_script, render_script, render_statement};
pub use script::{
    Axis, Command, Measure, MoveMode, Quantity, Script, Violation, HUMIDITY_RANGE, MAX_ANGLE,
    MAX_EXPOSURE, MAX_RAMP, MAX_RELATIVE_MOVE, MAX_REPEAT, MOTOR_LIMIT, TEMPERATURE_RANGE,
};

use crate::entity::Label;
use crate::tagger::{tokenize, TaggerModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
    pub spans: Vec<EntitySpan>,
    pub script: Script,
    pub rendered: String,
    pub warnings: Vec<Warning>,
}

impl Interpretation {
    /// True when some warning forbids running the script.
    pub fn is_blocked(&self) -> bool {
        self.warnings.iter().any(|w| w.blocking)
    }
}

pub fn interpret(text: &str, model: &TaggerModel) -> Interpretation {
    let seq = tokenize(text);
    let labels = model.predict(&seq);
    interpret_labeled(&seq.tokens, &labels)
}

/// Everything after prediction, for labels from any source.
pub fn interpret_labeled<S: AsRef<str>>(tokens: &[S], labels: &[Label]) -> Interpretation {
    let groups = group_entities(tokens, labels);
    let (script, consumed, mut warnings) = assemble_script(&groups, tokens);
    let mut spans: Vec<EntitySpan> = groups.into_iter().flat_map(|g| g.spans).collect();
    for s in &mut spans {
        s.consumed = consumed.contains(&s.id);
    }
    if spans.is_empty() {
        warnings.push(Warning {
            message: "no entities found".into(),
            blocking: false,
            spans: Vec::new(),
        });
    }
    for (path, v) in script.violations() {
        let at: Vec<String> = path.iter().map(|i| (i + 1).to_string()).collect();
        warnings.push(Warning {
            message: format!("command {}: {}", at.join("."), v.message),
            blocking: true,
            spans: Vec::new(),
        });
    }
    Interpretation {
        tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        labels: crate::entity::repair_bio(labels),
        spans,
        rendered: render_script(&script),
        script,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_has_a_note_and_no_script() {
        let i = interpret("", &TaggerModel::empty());
        assert!(i.script.is_empty());
        assert_eq!(i.rendered, "");
        assert_eq!(i.warnings.len(), 1);
        assert_eq!(i.warnings[0].message, "no entities found");
        assert!(!i.is_blocked());
    }

    #[test]
    fn out_of_range_values_block() {
        let tokens = ["Heat", "to", "900"];
        let labels = [Label::O, Label::O, Label::B(crate::EntityType::Temperature)];
        let i = interpret_labeled(&tokens, &labels);
        assert_eq!(i.script.commands.len(), 1);
        assert!(i.is_blocked());
    }
}
