//! Entity registry and the BIO label vocabulary.
//!
//! The registry order below is fixed: label indices, decode tie-breaking and
//! the model file layout all depend on it. `O` is label 0, then every entity
//! contributes `B-` and `I-` in registry order, giving 41 labels.
//!
//! XPOS-ABS, YPOS-ABS and HUMIDITY-CONDITIONAL are extrapolated members of
//! the registry; the remaining seventeen kinds appear in the reference
//! template and keyword tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Error;

macro_rules! entities {
    ($($variant:ident => $name:literal,)*) => {
        /// One of the twenty slot kinds a sentence template can carry.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum EntityType {
            $($variant,)*
        }

        impl EntityType {
            /// Every entity kind in registry order.
            pub const ALL: [EntityType; 20] = [$(EntityType::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(EntityType::$variant => $name,)*
                }
            }
        }

        impl FromStr for EntityType {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $($name => Ok(EntityType::$variant),)*
                    other => Err(Error::Schema(format!("unknown entity `{other}`"))),
                }
            }
        }
    };
}

entities! {
    Scan => "SCAN",
    Process => "PROCESS",
    Sample => "SAMPLE",
    Direction => "DIRECTION",
    Etime => "ETIME",
    Angle => "ANGLE",
    XposRel => "XPOS-REL",
    YposRel => "YPOS-REL",
    XposAbs => "XPOS-ABS",
    YposAbs => "YPOS-ABS",
    PointAbs => "POINT-ABS",
    Temperature => "TEMPERATURE",
    TemperatureConditional => "TEMPERATURE-CONDITIONAL",
    NrampMin => "NRAMP-MIN",
    NrampSec => "NRAMP-SEC",
    Humidity => "HUMIDITY",
    TrateSec => "TRATE-SEC",
    TrateMin => "TRATE-MIN",
    Amount => "AMOUNT",
    HumidityConditional => "HUMIDITY-CONDITIONAL",
}

pub const SCAN_WORDS: &[&str] = &[
    "exposure",
    "scan",
    "picture",
    "snapshot",
    "measure",
    "measurement",
    "look at",
    "see",
];
pub const PROCESS_WORDS: &[&str] = &["GISAXS", "TSAXS", "GIWAXS", "TWAXS"];
pub const SAMPLE_WORDS: &[&str] = &[
    "polymer",
    "silicon",
    "perovskite",
    "graphene",
    "gold",
    "silver",
    "titania",
    "zeolite",
    "cellulose",
    "copolymer",
    "nanorod",
    "micelle",
    "hydrogel",
    "quartz",
    "mica",
];
pub const DIRECTION_WORDS: &[&str] = &["x", "y", "horizontal", "vertical"];

/// Inclusive numeric range expressed in integer steps of `10^-decimals`.
///
/// Sampling picks an integer in `lo..=hi`, so the rendered surface and the
/// parsed value never disagree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSpec {
    pub lo: i64,
    pub hi: i64,
    pub decimals: u32,
    pub unit: &'static str,
}

impl ScalarSpec {
    pub fn step(&self) -> f64 {
        10f64.powi(-(self.decimals as i32))
    }

    pub fn min(&self) -> f64 {
        self.lo as f64 * self.step()
    }

    pub fn max(&self) -> f64 {
        self.hi as f64 * self.step()
    }

    pub fn contains(&self, v: f64) -> bool {
        // half-step slack keeps the check robust to decimal parsing
        let slack = self.step() / 2.0;
        v.is_finite() && v >= self.min() - slack && v <= self.max() + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueKind {
    Words(&'static [&'static str]),
    Scalar(ScalarSpec),
    /// Two coordinates, each drawn from the same range.
    Point(ScalarSpec),
}

const fn scalar(lo: i64, hi: i64, decimals: u32, unit: &'static str) -> ScalarSpec {
    ScalarSpec {
        lo,
        hi,
        decimals,
        unit,
    }
}

impl EntityType {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn value_kind(self) -> ValueKind {
        use EntityType::*;
        match self {
            Scan => ValueKind::Words(SCAN_WORDS),
            Process => ValueKind::Words(PROCESS_WORDS),
            Sample => ValueKind::Words(SAMPLE_WORDS),
            Direction => ValueKind::Words(DIRECTION_WORDS),
            Etime => ValueKind::Scalar(scalar(1, 199, 0, "s")),
            Angle => ValueKind::Scalar(scalar(5, 50, 2, "deg")),
            XposRel | YposRel => ValueKind::Scalar(scalar(-1000, 999, 1, "mm")),
            XposAbs | YposAbs => ValueKind::Scalar(scalar(-500, 500, 1, "mm")),
            PointAbs => ValueKind::Point(scalar(-200, 200, 1, "mm")),
            Temperature | TemperatureConditional => {
                ValueKind::Scalar(scalar(-2000, 5999, 1, "degC"))
            }
            NrampMin => ValueKind::Scalar(scalar(1, 199, 0, "degC/min")),
            NrampSec => ValueKind::Scalar(scalar(1, 49, 1, "degC/s")),
            Humidity | HumidityConditional => ValueKind::Scalar(scalar(0, 100, 0, "%")),
            TrateSec => ValueKind::Scalar(scalar(1, 199, 0, "s")),
            TrateMin => ValueKind::Scalar(scalar(1, 59, 0, "min")),
            Amount => ValueKind::Scalar(scalar(1, 100, 0, "count")),
        }
    }

    /// Word list for categorical kinds.
    pub fn words(self) -> Option<&'static [&'static str]> {
        match self.value_kind() {
            ValueKind::Words(w) => Some(w),
            _ => None,
        }
    }

    /// Case-insensitive lookup against the word list; returns the canonical form.
    pub fn normalize_word(self, surface: &str) -> Option<&'static str> {
        let words = self.words()?;
        let wanted = surface.split_whitespace().collect::<Vec<_>>().join(" ");
        words.iter().copied().find(|w| w.eq_ignore_ascii_case(&wanted))
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for EntityType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EntityType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parsed form of a slot surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlotValue {
    Scalar(f64),
    Point(f64, f64),
    Word(String),
}

impl SlotValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            SlotValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_word(&self) -> Option<&str> {
        match self {
            SlotValue::Word(w) => Some(w),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<(f64, f64)> {
        match self {
            SlotValue::Point(x, y) => Some((*x, *y)),
            _ => None,
        }
    }
}

impl fmt::Display for SlotValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotValue::Scalar(v) => write!(f, "{v}"),
            SlotValue::Point(x, y) => write!(f, "({x}, {y})"),
            SlotValue::Word(w) => f.write_str(w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prefix {
    B,
    I,
}

/// A BIO tag. `B-`/`I-` mark the beginning or inside of a *command*, not of a
/// multi-token word run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    O,
    B(EntityType),
    I(EntityType),
}

/// Number of labels in the vocabulary.
pub const LABEL_COUNT: usize = 1 + 2 * EntityType::ALL.len();

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::O => 0,
            Label::B(e) => 1 + 2 * e.index(),
            Label::I(e) => 2 + 2 * e.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        if i == 0 {
            return Some(Label::O);
        }
        let e = *EntityType::ALL.get((i - 1) / 2)?;
        Some(if i % 2 == 1 { Label::B(e) } else { Label::I(e) })
    }

    /// Every label in index order.
    pub fn all() -> Vec<Label> {
        (0..LABEL_COUNT).filter_map(Label::from_index).collect()
    }

    pub fn new(prefix: Prefix, entity: EntityType) -> Label {
        match prefix {
            Prefix::B => Label::B(entity),
            Prefix::I => Label::I(entity),
        }
    }

    pub fn entity(self) -> Option<EntityType> {
        match self {
            Label::O => None,
            Label::B(e) | Label::I(e) => Some(e),
        }
    }

    pub fn prefix(self) -> Option<Prefix> {
        match self {
            Label::O => None,
            Label::B(_) => Some(Prefix::B),
            Label::I(_) => Some(Prefix::I),
        }
    }

    pub fn is_outside(self) -> bool {
        self == Label::O
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::O => f.write_str("O"),
            Label::B(e) => write!(f, "B-{e}"),
            Label::I(e) => write!(f, "I-{e}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "O" {
            return Ok(Label::O);
        }
        match s.split_once('-') {
            Some(("B", rest)) => Ok(Label::B(rest.parse()?)),
            Some(("I", rest)) => Ok(Label::I(rest.parse()?)),
            _ => Err(Error::Schema(format!("malformed label `{s}`"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Command-level BIO consistency: no `I-` label may appear before the first
/// `B-` label, since an `I-` continues a command some `B-` opened.
pub fn is_bio_consistent(labels: &[Label]) -> bool {
    let mut open = false;
    for l in labels {
        match l {
            Label::B(_) => open = true,
            Label::I(_) if !open => return false,
            _ => {}
        }
    }
    true
}

/// Promote every `I-X` that has no open command to `B-X`.
pub fn repair_bio(labels: &[Label]) -> Vec<Label> {
    let mut open = false;
    labels
        .iter()
        .map(|&l| match l {
            Label::B(_) => {
                open = true;
                l
            }
            Label::I(e) if !open => {
                open = true;
                Label::B(e)
            }
            _ => l,
        })
        .collect()
}

/// Maximal runs of identical non-`O` labels as `(start, end_exclusive, label)`.
pub fn label_runs(labels: &[Label]) -> Vec<(usize, usize, Label)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let l = labels[i];
        let mut j = i + 1;
        while j < labels.len() && labels[j] == l {
            j += 1;
        }
        if !l.is_outside() {
            runs.push((i, j, l));
        }
        i = j;
    }
    runs
}
