//! Sentence templates and the template file grammar.
//!
//! ```text
//! file     = { line "\n" } ;
//! line     = comment | blank | category TAB sentence ;
//! comment  = "#" { any } ;
//! sentence = { text | slot } ;
//! slot     = "[" ( "B" | "I" ) "-" ENTITY "]" ;
//! ```
//!
//! A slot must stand alone as a word: it may be preceded by whitespace or
//! `(` and followed by whitespace, `,`, `.` or `)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entity::{EntityType, Prefix};
use crate::{Error, Result};

/// Most slots a single template may carry.
pub const MAX_SLOTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Hardware,
    Parameter,
    Measure,
    Condition,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Hardware,
        Category::Parameter,
        Category::Measure,
        Category::Condition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Hardware => "Hardware",
            Category::Parameter => "Parameter",
            Category::Measure => "Measure",
            Category::Condition => "Condition",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Schema(format!("unknown category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub prefix: Prefix,
    pub entity: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Text(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    /// `<category>-<nnn>`, numbered from 1 in file order within the category.
    pub id: String,
    pub category: Category,
    pub text: String,
    pub pieces: Vec<Piece>,
}

impl Template {
    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(*s),
            Piece::Text(_) => None,
        })
    }

    pub fn slot_count(&self) -> usize {
        self.slots().count()
    }
}

/// Templates grouped by category, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateSet {
    groups: [Vec<Template>; 4],
}

const DEFAULT_PACK: &str = include_str!("../../data/templates.tsv");

impl TemplateSet {
    /// The shipped template pack (150 templates).
    pub fn default_pack() -> TemplateSet {
        parse_templates(DEFAULT_PACK).expect("shipped template pack parses")
    }

    pub fn from_templates(templates: impl IntoIterator<Item = Template>) -> TemplateSet {
        let mut set = TemplateSet::default();
        for t in templates {
            set.groups[t.category.index()].push(t);
        }
        set
    }

    pub fn category(&self, c: Category) -> &[Template] {
        &self.groups[c.index()]
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.groups.iter().flatten()
    }

    /// Categories that hold at least one template.
    pub fn nonempty_categories(&self) -> Vec<Category> {
        Category::ALL
            .into_iter()
            .filter(|c| !self.category(*c).is_empty())
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Template> {
        self.iter().find(|t| t.id == id)
    }
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<TemplateSet> {
    let text = std::fs::read_to_string(path)?;
    parse_templates(&text)
}

pub fn parse_templates(text: &str) -> Result<TemplateSet> {
    let mut counters = [0usize; 4];
    let mut templates = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (cat, sentence) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `category<TAB>sentence`".into(),
        })?;
        let category: Category = cat.parse().map_err(|e| at_line(e, line_no))?;
        let sentence = sentence.trim();
        let pieces = parse_sentence(sentence, line_no)?;

        let t = Template {
            id: String::new(),
            category,
            text: sentence.to_string(),
            pieces,
        };
        let slots: Vec<Slot> = t.slots().collect();
        if slots.len() > MAX_SLOTS {
            return Err(Error::Schema(format!(
                "line {line_no}: {} slots exceeds the limit of {MAX_SLOTS}",
                slots.len()
            )));
        }
        if let Some(first) = slots.first() {
            if first.prefix != Prefix::B {
                return Err(Error::Schema(format!(
                    "line {line_no}: the first slot must open a command with B-"
                )));
            }
        }
        counters[category.index()] += 1;
        templates.push(Template {
            id: format!(
                "{}-{:03}",
                category.name().to_ascii_lowercase(),
                counters[category.index()]
            ),
            ..t
        });
    }
    Ok(TemplateSet::from_templates(templates))
}

fn at_line(e: Error, line: usize) -> Error {
    match e {
        Error::Schema(m) => Error::Schema(format!("line {line}: {m}")),
        other => other,
    }
}

fn parse_sentence(s: &str, line: usize) -> Result<Vec<Piece>> {
    let parse_err = |message: String| Error::Parse { line, message };
    let mut pieces = Vec::new();
    let mut rest = s;
    let mut prev_char: Option<char> = None;
    while let Some(open) = rest.find(['[', ']']) {
        if rest[open..].starts_with(']') {
            return Err(parse_err(format!("unmatched `]` in `{s}`")));
        }
        let close = rest[open..]
            .find(']')
            .map(|c| open + c)
            .ok_or_else(|| parse_err(format!("unclosed `[` in `{s}`")))?;
        let inner = &rest[open + 1..close];
        if inner.contains('[') {
            return Err(parse_err(format!("nested `[` in `{s}`")));
        }
        let (prefix, entity) = match inner.split_once('-') {
            Some(("B", e)) => (Prefix::B, e),
            Some(("I", e)) => (Prefix::I, e),
            _ => return Err(parse_err(format!("malformed slot `[{inner}]`"))),
        };
        let entity: EntityType = entity.parse().map_err(|e| at_line(e, line))?;

        let before = &rest[..open];
        let left = before.chars().last().or(if before.is_empty() { prev_char } else { None });
        if matches!(left, Some(c) if !c.is_whitespace() && c != '(') {
            return Err(parse_err(format!("slot `[{inner}]` must start a word")));
        }
        let right = rest[close + 1..].chars().next();
        if matches!(right, Some(c) if !c.is_whitespace() && !matches!(c, ',' | '.' | ')')) {
            return Err(parse_err(format!("slot `[{inner}]` must end a word")));
        }

        if !before.is_empty() {
            pieces.push(Piece::Text(before.to_string()));
        }
        pieces.push(Piece::Slot(Slot { prefix, entity }));
        prev_char = Some(']');
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest.to_string()));
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_hardware_template() {
        let set = parse_templates(
            "Hardware\tSet the temperature to [B-TEMPERATURE] degrees at a rate of [I-NRAMP-MIN] degrees per minute\n",
        )
        .unwrap();
        assert_eq!(set.len(), 1);
        let t = &set.category(Category::Hardware)[0];
        assert_eq!(t.id, "hardware-001");
        let slots: Vec<_> = t.slots().collect();
        assert_eq!(
            slots,
            vec![
                Slot { prefix: Prefix::B, entity: EntityType::Temperature },
                Slot { prefix: Prefix::I, entity: EntityType::NrampMin },
            ]
        );
    }

    #[test]
    fn empty_file_gives_empty_set() {
        assert!(parse_templates("").unwrap().is_empty());
        assert!(parse_templates("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn default_pack_has_about_150_templates() {
        let set = TemplateSet::default_pack();
        assert_eq!(set.len(), 150);
        for c in Category::ALL {
            assert!(set.category(c).len() >= 2, "{c}");
        }
    }

    #[test]
    fn malformed_slot_reports_line() {
        let err = parse_templates("# c\nHardware\tSet to [B-TEMPERATURE degrees\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_templates("Hardware\tSet to [X-TEMPERATURE]\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_templates("Hardware\tSet to [B-TEMPERATURE]mm\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn unknown_entity_is_schema_error() {
        let err = parse_templates("Hardware\tPaint it [B-COLOUR]\n").unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("line 1")), "{err}");
    }

    #[test]
    fn missing_tab_is_parse_error() {
        let err = parse_templates("Hardware Set it\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn slot_limit_and_leading_prefix_are_enforced() {
        let nine = format!("Parameter\tUse{}\n", " [B-ANGLE] and".repeat(1) + &" [I-ANGLE] and".repeat(8));
        assert!(matches!(parse_templates(&nine), Err(Error::Schema(_))));
        assert!(matches!(
            parse_templates("Condition\tDo it [I-AMOUNT] times\n"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn slotless_and_punctuated_templates_parse() {
        let set = parse_templates(
            "Measure\tpause here\nMeasure\tUsing [B-PROCESS], [I-SCAN] sample across [I-DIRECTION]\n",
        )
        .unwrap();
        let m = set.category(Category::Measure);
        assert_eq!(m[0].slot_count(), 0);
        assert_eq!(m[1].slot_count(), 3);
    }
}
