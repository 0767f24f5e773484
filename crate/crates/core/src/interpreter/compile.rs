//! From labelled tokens to a [`Script`].
//!
//! Grouping: after BIO repair, every maximal run of one label is a span and
//! every `B-` span opens a command group that runs to the next `B-`.
//!
//! Inside a group, spans are routed left to right:
//!
//! | entity | goes to |
//! |---|---|
//! | TEMPERATURE | a new `set_temperature` |
//! | NRAMP-MIN, NRAMP-SEC (×60) | the latest temperature set or temperature `until` without a ramp |
//! | HUMIDITY | `set_humidity` |
//! | XPOS/YPOS -REL/-ABS | `move_motor` |
//! | SAMPLE | `set_sample`, placed before the open measurement |
//! | SCAN, PROCESS, ETIME, ANGLE, DIRECTION, POINT-ABS | the open measurement; a field that is already set opens a new one |
//! | AMOUNT | the group's `repeat` without a count, else a new `repeat` |
//! | TRATE-SEC, TRATE-MIN (×60) | the group's `until` or `repeat` without a period, else a new `repeat` |
//! | TEMPERATURE-/HUMIDITY-CONDITIONAL | a new `until` |
//!
//! A measurement with no SCAN word is resolved during assembly. If it opens
//! its group and directly follows a measurement it does not contradict, it
//! is merged into that measurement. Otherwise a bare point becomes
//! `goto_point`. A measurement sharing its group with other commands, or
//! carrying a point or direction, gets the default kind `measure`. Anything
//! left becomes `set_parameters`.
//!
//! An `until` without a period next to a `repeat` with a period and no
//! count fuse into one periodic `until`. Wrappers then take a body, trying
//! these in order:
//!
//! 1. measurable commands (measure, motor moves and loops) from their own group;
//! 2. every later command, when the word "following" sits next to the wrapper
//!    and something other than another wrapper comes later;
//! 3. the run of measurable commands just before the wrapper;
//! 4. the single command just before it;
//! 5. every later command, under the same condition as 2.
//!
//! An `until` left without a body simply waits for its threshold. A `repeat`
//! left without one is an error and empties the script. A `repeat` that never got a count
//! runs once, with a warning, unless an `until` absorbs it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::script::{Axis, Command, Measure, MoveMode, Quantity, Script};
use crate::corpus::join_tokens;
use crate::entity::{label_runs, repair_bio, EntityType, Label, Prefix, SlotValue, ValueKind};

/// Ramp used when a temperature change names no rate, °C/min.
pub const DEFAULT_RAMP: f64 = 10.0;
/// Humidity chamber rate used by humidity conditions, %/min.
pub const DEFAULT_HUMIDITY_RAMP: f64 = 5.0;
/// Measurement kind used when the text names none.
pub const DEFAULT_KIND: &str = "measure";

const FOLLOWING_CUE: &str = "following";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpan {
    /// Position in the interpretation's span list.
    pub id: usize,
    pub entity: EntityType,
    pub prefix: Prefix,
    /// Token offsets, end exclusive.
    pub start: usize,
    pub end: usize,
    pub surface: String,
    /// `None` when the surface does not parse.
    pub value: Option<SlotValue>,
    pub group: usize,
    /// Whether a command in the final script carries this span's value.
    pub consumed: bool,
}

impl EntitySpan {
    pub fn label(&self) -> Label {
        Label::new(self.prefix, self.entity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandGroup {
    pub spans: Vec<EntitySpan>,
}

impl CommandGroup {
    pub fn opening(&self) -> &EntitySpan {
        &self.spans[0]
    }

    /// Token range from the opening span to the end of the last span.
    pub fn extent(&self) -> (usize, usize) {
        (self.spans[0].start, self.spans.last().map_or(0, |s| s.end))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub message: String,
    /// A blocking warning means the script must not run as shown.
    pub blocking: bool,
    /// Ids of the spans the warning is about.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spans: Vec<usize>,
}

impl Warning {
    fn note(message: impl Into<String>, spans: Vec<usize>) -> Warning {
        Warning {
            message: message.into(),
            blocking: false,
            spans,
        }
    }

    fn blocking(message: impl Into<String>, spans: Vec<usize>) -> Warning {
        Warning {
            message: message.into(),
            blocking: true,
            spans,
        }
    }
}

/// Split labelled tokens into command groups. Labels are repaired first, so
/// any label sequence is accepted.
pub fn group_entities<S: AsRef<str>>(tokens: &[S], labels: &[Label]) -> Vec<CommandGroup> {
    assert_eq!(tokens.len(), labels.len(), "one label per token");
    let labels = repair_bio(labels);
    let mut groups: Vec<CommandGroup> = Vec::new();
    for (id, (start, end, label)) in label_runs(&labels).into_iter().enumerate() {
        let (prefix, entity) = match label {
            Label::B(e) => (Prefix::B, e),
            Label::I(e) => (Prefix::I, e),
            Label::O => unreachable!("runs skip O"),
        };
        let surface = join_tokens(&tokens[start..end]);
        let value = parse_value(&surface, entity);
        if prefix == Prefix::B {
            groups.push(CommandGroup { spans: Vec::new() });
        }
        let group = groups.len() - 1;
        groups[group].spans.push(EntitySpan {
            id,
            entity,
            prefix,
            start,
            end,
            surface,
            value,
            group,
            consumed: false,
        });
    }
    groups
}

/// Parse a span surface into a typed value: numbers with an optional unit
/// suffix, `(a, b)` points, and case-insensitive matches against word lists.
pub fn parse_value(surface: &str, entity: EntityType) -> Option<SlotValue> {
    match entity.value_kind() {
        ValueKind::Words(_) => entity
            .normalize_word(surface)
            .map(|w| SlotValue::Word(w.to_string())),
        ValueKind::Scalar(_) => parse_number(surface.trim()).map(SlotValue::Scalar),
        ValueKind::Point(_) => {
            let inner = surface.trim().strip_prefix('(')?.strip_suffix(')')?;
            let (a, b) = inner.split_once(',')?;
            Some(SlotValue::Point(parse_number(a.trim())?, parse_number(b.trim())?))
        }
    }
}

/// A decimal number, optionally followed by a unit made of letters, `%` or `°`.
fn parse_number(s: &str) -> Option<f64> {
    let split = s
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && (c == '-' || c == '+'))))
        .map_or(s.len(), |(i, _)| i);
    let (num, unit) = s.split_at(split);
    if !unit.chars().all(|c| c.is_alphabetic() || c == '%' || c == '°') {
        return None;
    }
    if !num.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    num.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Draft {
    kind: Option<String>,
    protocol: Option<String>,
    exposure: Option<f64>,
    angles: Vec<f64>,
    position: Option<(f64, f64)>,
    direction: Option<String>,
}

impl Draft {
    fn compatible(&self, m: &Measure) -> bool {
        self.kind.is_none()
            && (self.protocol.is_none() || m.protocol.is_none())
            && (self.exposure.is_none() || m.exposure.is_none())
            && (self.angles.is_empty() || m.angles.is_empty())
            && (self.position.is_none() || m.position.is_none())
            && (self.direction.is_none() || m.direction.is_none())
    }

    fn merge_into(self, m: &mut Measure) {
        m.protocol = m.protocol.take().or(self.protocol);
        m.exposure = m.exposure.or(self.exposure);
        if m.angles.is_empty() {
            m.angles = self.angles;
        }
        m.position = m.position.or(self.position);
        m.direction = m.direction.take().or(self.direction);
    }

    fn into_measure(self, kind: String) -> Measure {
        Measure {
            kind,
            protocol: self.protocol,
            exposure: self.exposure,
            angles: self.angles,
            position: self.position,
            direction: self.direction,
        }
    }

    fn point_only(&self) -> bool {
        self.position.is_some()
            && self.kind.is_none()
            && self.protocol.is_none()
            && self.exposure.is_none()
            && self.angles.is_empty()
            && self.direction.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Item {
    Temperature { target: f64, ramp: Option<f64> },
    Plain(Command),
    Draft(Draft),
    Repeat { count: Option<u32>, period: Option<f64> },
    Until { quantity: Quantity, threshold: f64, ramp: Option<f64>, period: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    item: Item,
    group: usize,
    spans: Vec<usize>,
}

/// Route one group's spans into entries.
fn route(g: &CommandGroup, group: usize, warnings: &mut Vec<Warning>) -> Vec<Entry> {
    let mut out: Vec<Entry> = Vec::new();
    let mut draft: Option<usize> = None;

    for s in &g.spans {
        let Some(value) = &s.value else {
            warnings.push(Warning::blocking(
                format!("could not read a {} value from `{}`", s.entity, s.surface),
                vec![s.id],
            ));
            continue;
        };
        let push = |out: &mut Vec<Entry>, item: Item| {
            out.push(Entry { item, group, spans: vec![s.id] });
            out.len() - 1
        };
        let scalar = value.as_scalar().unwrap_or(f64::NAN);
        use EntityType::*;
        match s.entity {
            Temperature => {
                push(&mut out, Item::Temperature { target: scalar, ramp: None });
                draft = None;
            }
            NrampMin | NrampSec => {
                let rate = if s.entity == NrampSec { scalar * 60.0 } else { scalar };
                let target = out.iter().rposition(|e| {
                    matches!(
                        e.item,
                        Item::Temperature { ramp: None, .. }
                            | Item::Until { quantity: Quantity::Temperature, ramp: None, .. }
                    )
                });
                match target {
                    Some(i) => {
                        match &mut out[i].item {
                            Item::Temperature { ramp, .. } | Item::Until { ramp, .. } => *ramp = Some(rate),
                            _ => unreachable!(),
                        }
                        out[i].spans.push(s.id);
                    }
                    None => warnings.push(Warning::blocking(
                        format!("ramp `{}` has no temperature to apply to", s.surface),
                        vec![s.id],
                    )),
                }
            }
            Humidity => {
                push(&mut out, Item::Plain(Command::SetHumidity { target: scalar }));
                draft = None;
            }
            XposRel | YposRel | XposAbs | YposAbs => {
                let axis = if matches!(s.entity, XposRel | XposAbs) { Axis::X } else { Axis::Y };
                let mode = if matches!(s.entity, XposRel | YposRel) {
                    MoveMode::Relative
                } else {
                    MoveMode::Absolute
                };
                push(&mut out, Item::Plain(Command::MoveMotor { axis, amount: scalar, mode }));
                draft = None;
            }
            Sample => {
                let cmd = Command::SetSample {
                    name: value.as_word().unwrap_or_default().to_string(),
                };
                let entry = Entry { item: Item::Plain(cmd), group, spans: vec![s.id] };
                match draft {
                    Some(d) => {
                        out.insert(d, entry);
                        draft = Some(d + 1);
                    }
                    None => out.push(entry),
                }
            }
            Scan | Process | Etime | Angle | Direction | PointAbs => {
                let full = draft.is_some_and(|d| {
                    let Item::Draft(m) = &out[d].item else { unreachable!() };
                    match s.entity {
                        Scan => m.kind.is_some(),
                        Process => m.protocol.is_some(),
                        Etime => m.exposure.is_some(),
                        Direction => m.direction.is_some(),
                        PointAbs => m.position.is_some(),
                        _ => false,
                    }
                });
                let d = match draft {
                    Some(d) if !full => {
                        out[d].spans.push(s.id);
                        d
                    }
                    _ => push(&mut out, Item::Draft(Draft::default())),
                };
                draft = Some(d);
                let Item::Draft(m) = &mut out[d].item else { unreachable!() };
                match s.entity {
                    Scan => m.kind = value.as_word().map(str::to_string),
                    Process => m.protocol = value.as_word().map(str::to_string),
                    Direction => m.direction = value.as_word().map(str::to_string),
                    Etime => m.exposure = Some(scalar),
                    Angle => m.angles.push(scalar),
                    PointAbs => m.position = value.as_point(),
                    _ => unreachable!(),
                }
            }
            Amount => {
                if scalar.fract() != 0.0 || scalar < 1.0 || scalar > u32::MAX as f64 {
                    warnings.push(Warning::blocking(
                        format!("`{}` is not a whole number of repetitions", s.surface),
                        vec![s.id],
                    ));
                    continue;
                }
                let n = scalar as u32;
                match out.iter().rposition(|e| matches!(e.item, Item::Repeat { count: None, .. })) {
                    Some(i) => {
                        out[i].item = match out[i].item {
                            Item::Repeat { period, .. } => Item::Repeat { count: Some(n), period },
                            _ => unreachable!(),
                        };
                        out[i].spans.push(s.id);
                    }
                    None => {
                        push(&mut out, Item::Repeat { count: Some(n), period: None });
                    }
                }
            }
            TrateSec | TrateMin => {
                let p = if s.entity == TrateMin { scalar * 60.0 } else { scalar };
                let slot = out
                    .iter()
                    .rposition(|e| matches!(e.item, Item::Until { period: None, .. }))
                    .or_else(|| out.iter().rposition(|e| matches!(e.item, Item::Repeat { period: None, .. })));
                match slot {
                    Some(i) => {
                        match &mut out[i].item {
                            Item::Until { period, .. } | Item::Repeat { period, .. } => *period = Some(p),
                            _ => unreachable!(),
                        }
                        out[i].spans.push(s.id);
                    }
                    None => {
                        push(&mut out, Item::Repeat { count: None, period: Some(p) });
                    }
                }
            }
            TemperatureConditional | HumidityConditional => {
                let quantity = if s.entity == TemperatureConditional {
                    Quantity::Temperature
                } else {
                    Quantity::Humidity
                };
                let ramp = (quantity == Quantity::Humidity).then_some(DEFAULT_HUMIDITY_RAMP);
                push(&mut out, Item::Until { quantity, threshold: scalar, ramp, period: None });
                if quantity == Quantity::Humidity {
                    warnings.push(Warning::note(
                        format!("humidity condition uses the chamber rate of {DEFAULT_HUMIDITY_RAMP} %/min"),
                        vec![s.id],
                    ));
                }
            }
        }
    }
    fuse_wrappers(&mut out, |a, b| a.group == b.group);
    out
}

/// Fuse an `until` without a period with a neighbouring periodic `repeat`
/// that has no count. `related` decides which pairs are close enough.
fn fuse_wrappers(entries: &mut Vec<Entry>, related: impl Fn(&Entry, &Entry) -> bool) {
    let mut i = 0;
    while i < entries.len() {
        let until = matches!(entries[i].item, Item::Until { period: None, .. });
        let partner = until
            .then(|| {
                (0..entries.len()).filter(|&j| j != i).find(|&j| {
                    matches!(entries[j].item, Item::Repeat { count: None, period: Some(_) })
                        && related(&entries[i], &entries[j])
                })
            })
            .flatten();
        if let Some(j) = partner {
            let Item::Repeat { period: p, .. } = entries[j].item else { unreachable!() };
            let taken = entries.remove(j);
            let i = if j < i { i - 1 } else { i };
            if let Item::Until { period, .. } = &mut entries[i].item {
                *period = p;
            }
            entries[i].spans.extend(taken.spans);
            entries[i].spans.sort_unstable();
            continue;
        }
        i += 1;
    }
}

/// Resolve measurements that name no kind, using what precedes them.
fn resolve_drafts(entries: Vec<Entry>, warnings: &mut Vec<Warning>) -> Vec<Entry> {
    let mut out: Vec<Entry> = Vec::with_capacity(entries.len());
    let group_sizes = |g: usize, all: &[Entry]| all.iter().filter(|e| e.group == g).count();
    let sizes: Vec<usize> = entries.iter().map(|e| group_sizes(e.group, &entries)).collect();
    for (k, e) in entries.into_iter().enumerate() {
        let Item::Draft(d) = e.item else {
            out.push(e);
            continue;
        };
        let opens_group = out.last().is_none_or(|p| p.group != e.group);
        if let Some(kind) = d.kind.clone() {
            out.push(Entry { item: Item::Plain(Command::Measure(d.into_measure(kind))), ..e });
            continue;
        }
        if d.point_only() {
            let (x, y) = d.position.unwrap();
            out.push(Entry { item: Item::Plain(Command::GotoPoint { x, y }), ..e });
            continue;
        }
        if opens_group {
            if let Some(prev) = out.last_mut() {
                if let Item::Plain(Command::Measure(m)) = &mut prev.item {
                    if d.compatible(m) {
                        d.merge_into(m);
                        prev.spans.extend(e.spans);
                        continue;
                    }
                }
            }
        }
        if sizes[k] > 1 || d.position.is_some() || d.direction.is_some() {
            warnings.push(Warning::note(
                format!("no measurement kind given; using `{DEFAULT_KIND}`"),
                e.spans.clone(),
            ));
            out.push(Entry {
                item: Item::Plain(Command::Measure(d.into_measure(DEFAULT_KIND.into()))),
                ..e
            });
        } else {
            let cmd = Command::SetParameters {
                exposure: d.exposure,
                angles: d.angles,
                protocol: d.protocol,
            };
            out.push(Entry { item: Item::Plain(cmd), ..e });
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Node {
    command: Command,
    group: usize,
    spans: Vec<usize>,
    /// A `repeat` that has a period but was never given a count.
    open: bool,
}

fn measurable(c: &Command) -> bool {
    matches!(
        c,
        Command::Measure(_)
            | Command::MoveMotor { .. }
            | Command::GotoPoint { .. }
            | Command::Repeat { .. }
            | Command::Until { .. }
    )
}

struct Assembler<'a> {
    /// Per group: whether the cue word sits between its neighbours.
    following: &'a [bool],
    warnings: Vec<Warning>,
    dangling: Vec<usize>,
}

impl Assembler<'_> {
    fn block(&mut self, entries: &[Entry]) -> Vec<Node> {
        let mut out: Vec<Node> = Vec::new();
        let mut i = 0;
        while i < entries.len() {
            let e = &entries[i];
            i += 1;
            let wrapper = match &e.item {
                Item::Plain(c) => {
                    out.push(Node { command: c.clone(), group: e.group, spans: e.spans.clone(), open: false });
                    continue;
                }
                Item::Temperature { target, ramp } => {
                    let ramp = ramp.unwrap_or_else(|| {
                        self.warnings.push(Warning::note(
                            format!("no ramp given for {target} °C; using {DEFAULT_RAMP} °C/min"),
                            e.spans.clone(),
                        ));
                        DEFAULT_RAMP
                    });
                    let command = Command::SetTemperature { target: *target, ramp };
                    out.push(Node { command, group: e.group, spans: e.spans.clone(), open: false });
                    continue;
                }
                Item::Draft(_) => unreachable!("drafts are resolved before assembly"),
                _ => e,
            };

            // 1. measurable commands of the wrapper's own group
            let mut body: Vec<Node> = Vec::new();
            let local_before = out
                .iter()
                .rev()
                .take_while(|n| n.group == wrapper.group && measurable(&n.command))
                .count();
            body.extend(out.drain(out.len() - local_before..));
            while i < entries.len()
                && entries[i].group == wrapper.group
                && matches!(&entries[i].item, Item::Plain(c) if measurable(c))
            {
                body.extend(self.block(&entries[i..i + 1]));
                i += 1;
            }

            let later = entries[i..].iter().any(|e| !matches!(e.item, Item::Repeat { .. } | Item::Until { .. }));
            if body.is_empty() && self.following[wrapper.group] && later {
                // 2. "do the following"
                body = self.block(&entries[i..]);
                i = entries.len();
            }
            if body.is_empty() {
                // 3. "do this"
                let run = out.iter().rev().take_while(|n| measurable(&n.command)).count();
                body.extend(out.drain(out.len() - run..));
            }
            if body.is_empty() {
                // 4. whatever came last
                body.extend(out.pop());
            }
            if body.is_empty() && later {
                // 5. everything after
                body = self.block(&entries[i..]);
                i = entries.len();
            }
            if body.is_empty() && matches!(wrapper.item, Item::Repeat { .. }) {
                self.dangling.extend(&wrapper.spans);
                continue;
            }
            out.push(self.wrap(wrapper, body));
        }
        out
    }

    fn wrap(&mut self, w: &Entry, mut body: Vec<Node>) -> Node {
        let mut spans = w.spans.clone();
        let mut open = false;
        let command = match w.item {
            Item::Repeat { count, period } => {
                open = count.is_none();
                Command::Repeat { count: count.unwrap_or(1), period, body: Vec::new() }
            }
            Item::Until { quantity, threshold, ramp, mut period } => {
                if let [only] = body.as_slice() {
                    if let (true, Command::Repeat { period: Some(p), .. }) = (only.open, &only.command) {
                        if period.is_none() || period == Some(*p) {
                            period = Some(*p);
                            let inner = body.pop().unwrap();
                            spans.extend(inner.spans);
                            let Command::Repeat { body: inner_body, .. } = inner.command else { unreachable!() };
                            body = inner_body
                                .into_iter()
                                .map(|command| Node { command, group: w.group, spans: Vec::new(), open: false })
                                .collect();
                        }
                    }
                }
                let ramp = ramp.unwrap_or_else(|| {
                    self.warnings.push(Warning::note(
                        format!("no ramp given for the condition at {threshold}; using {DEFAULT_RAMP} °C/min"),
                        w.spans.clone(),
                    ));
                    DEFAULT_RAMP
                });
                Command::Until { quantity, threshold, ramp, period, body: Vec::new() }
            }
            _ => unreachable!(),
        };
        let mut command = command;
        let mut children = Vec::with_capacity(body.len());
        for n in body {
            spans.extend(n.spans.iter().copied());
            children.push(self.close(n));
        }
        match &mut command {
            Command::Repeat { body, .. } | Command::Until { body, .. } => *body = children,
            _ => unreachable!(),
        }
        spans.sort_unstable();
        Node { command, group: w.group, spans, open }
    }

    /// Finish a node whose open `repeat` will not be absorbed any more.
    fn close(&mut self, n: Node) -> Command {
        if n.open {
            self.warnings.push(Warning::note(
                "repetition count not given; running once",
                n.spans.clone(),
            ));
        }
        n.command
    }
}

/// Compile command groups into a script. Returns the script, the ids of the
/// spans it carries and any warnings. An assembly error leaves the script
/// empty.
pub fn assemble_script(
    groups: &[CommandGroup],
    tokens: &[impl AsRef<str>],
) -> (Script, BTreeSet<usize>, Vec<Warning>) {
    let following: Vec<bool> = (0..groups.len())
        .map(|gi| {
            let lo = if gi == 0 { 0 } else { groups[gi - 1].extent().1 };
            let hi = groups.get(gi + 1).map_or(tokens.len(), |g| g.extent().0);
            tokens[lo..hi].iter().any(|t| t.as_ref().eq_ignore_ascii_case(FOLLOWING_CUE))
        })
        .collect();
    assemble(groups, &following)
}

fn assemble(groups: &[CommandGroup], following: &[bool]) -> (Script, BTreeSet<usize>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let mut entries: Vec<Entry> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        entries.extend(route(g, gi, &mut warnings));
    }
    let mut entries = resolve_drafts(entries, &mut warnings);
    fuse_wrappers_across(&mut entries);

    let mut asm = Assembler { following, warnings, dangling: Vec::new() };
    let nodes = asm.block(&entries);
    let mut commands = Vec::with_capacity(nodes.len());
    let mut consumed = BTreeSet::new();
    for n in nodes {
        consumed.extend(n.spans.iter().copied());
        commands.push(asm.close(n));
    }
    let mut warnings = asm.warnings;
    if !asm.dangling.is_empty() {
        let source: Vec<&str> = groups
            .iter()
            .flat_map(|g| &g.spans)
            .filter(|s| asm.dangling.contains(&s.id))
            .map(|s| s.surface.as_str())
            .collect();
        warnings.push(Warning::blocking(
            format!("condition has nothing to apply to: {}", source.join(" ")),
            groups.iter().flat_map(|g| g.spans.iter().map(|s| s.id)).collect(),
        ));
        commands.clear();
        consumed.clear();
    }
    (Script::new(commands), consumed, warnings)
}

/// Across groups only direct neighbours in the entry list fuse.
fn fuse_wrappers_across(entries: &mut Vec<Entry>) {
    let mut i = 0;
    while i + 1 < entries.len() {
        let (a, b) = (&entries[i], &entries[i + 1]);
        let pair = match (&a.item, &b.item) {
            (Item::Until { period: None, .. }, Item::Repeat { count: None, period: Some(_) }) => Some((i, i + 1)),
            (Item::Repeat { count: None, period: Some(_) }, Item::Until { period: None, .. }) => Some((i + 1, i)),
            _ => None,
        };
        if let Some((u, r)) = pair {
            let Item::Repeat { period: p, .. } = entries[r].item else { unreachable!() };
            let spans = entries[r].spans.clone();
            if let Item::Until { period, .. } = &mut entries[u].item {
                *period = p;
            }
            entries[u].spans.extend(spans);
            entries[u].spans.sort_unstable();
            entries.remove(r);
            continue;
        }
        i += 1;
    }
}

/// Compile one group on its own.
pub fn compile_group(g: &CommandGroup) -> (Vec<Command>, Vec<Warning>) {
    let mut g = g.clone();
    for s in &mut g.spans {
        s.group = 0;
    }
    let (script, _, warnings) = assemble(std::slice::from_ref(&g), &[false]);
    (script.commands, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use EntityType::*;

    fn labelled(spec: &[(&str, Option<(Prefix, EntityType)>)]) -> (Vec<String>, Vec<Label>) {
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        for (text, tag) in spec {
            for t in crate::tagger::tokenize(text).tokens {
                tokens.push(t);
                labels.push(tag.map_or(Label::O, |(p, e)| Label::new(p, e)));
            }
        }
        (tokens, labels)
    }

    fn b(e: EntityType) -> Option<(Prefix, EntityType)> {
        Some((Prefix::B, e))
    }

    fn i(e: EntityType) -> Option<(Prefix, EntityType)> {
        Some((Prefix::I, e))
    }

    fn compile(spec: &[(&str, Option<(Prefix, EntityType)>)]) -> (Script, Vec<Warning>) {
        let (tokens, labels) = labelled(spec);
        let groups = group_entities(&tokens, &labels);
        let (s, _, w) = assemble_script(&groups, &tokens);
        (s, w)
    }

    #[test]
    fn values_parse_with_units_and_points() {
        assert_eq!(parse_value("0.19", Angle), Some(SlotValue::Scalar(0.19)));
        assert_eq!(parse_value("0.2mm", XposRel), Some(SlotValue::Scalar(0.2)));
        assert_eq!(parse_value("-3.5", YposRel), Some(SlotValue::Scalar(-3.5)));
        assert_eq!(parse_value("(2, 3)", PointAbs), Some(SlotValue::Point(2.0, 3.0)));
        assert_eq!(parse_value("(-1.5,0.2)", PointAbs), Some(SlotValue::Point(-1.5, 0.2)));
        assert_eq!(parse_value("Scan", Scan), Some(SlotValue::Word("scan".into())));
        assert_eq!(parse_value("gisaxs", Process), Some(SlotValue::Word("GISAXS".into())));
        assert_eq!(parse_value("the", Etime), None);
        assert_eq!(parse_value("2mm3", XposRel), None);
        assert_eq!(parse_value("(2, 3", PointAbs), None);
        assert_eq!(parse_value("-", Etime), None);
    }

    #[test]
    fn temperature_group_compiles_to_one_command() {
        let (tokens, labels) = labelled(&[
            ("Set the temperature to", None),
            ("200", b(Temperature)),
            ("degrees at a rate of", None),
            ("20", i(NrampMin)),
            ("degrees per minute", None),
        ]);
        let groups = group_entities(&tokens, &labels);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].spans.len(), 2);
        let (cmds, warnings) = compile_group(&groups[0]);
        assert_eq!(cmds, vec![Command::SetTemperature { target: 200.0, ramp: 20.0 }]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn all_outside_gives_no_groups() {
        let (tokens, labels) = labelled(&[("nothing to see here", None)]);
        assert!(group_entities(&tokens, &labels).is_empty());
    }

    #[test]
    fn stray_inside_label_is_promoted() {
        let (tokens, labels) = labelled(&[("Change humidity to", None), ("45", i(Humidity))]);
        let groups = group_entities(&tokens, &labels);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].opening().prefix, Prefix::B);
        let (cmds, _) = compile_group(&groups[0]);
        assert_eq!(cmds, vec![Command::SetHumidity { target: 45.0 }]);
    }

    #[test]
    fn ramp_per_second_is_converted_and_missing_ramp_defaults() {
        let (s, w) = compile(&[("Heat to", None), ("100", b(Temperature)), ("at", None), ("2", i(NrampSec))]);
        assert_eq!(s.commands, vec![Command::SetTemperature { target: 100.0, ramp: 120.0 }]);
        assert!(w.is_empty());
        let (s, w) = compile(&[("Heat to", None), ("100", b(Temperature))]);
        assert_eq!(s.commands, vec![Command::SetTemperature { target: 100.0, ramp: DEFAULT_RAMP }]);
        assert_eq!(w.len(), 1);
        assert!(!w[0].blocking);
    }

    #[test]
    fn unparseable_span_is_a_blocking_warning() {
        let (s, w) = compile(&[("Expose", None), ("long", b(Etime))]);
        assert!(s.is_empty());
        assert_eq!(w.len(), 1);
        assert!(w[0].blocking);
        assert_eq!(w[0].spans, vec![0]);
    }

    #[test]
    fn standalone_period_runs_once_with_a_warning() {
        let (s, w) = compile(&[
            ("Take a", None),
            ("scan", b(Scan)),
            ("for", None),
            ("1", i(Etime)),
            ("second every", None),
            ("60", i(TrateSec)),
        ]);
        let measure = Command::Measure(Measure { kind: "scan".into(), exposure: Some(1.0), ..Measure::default() });
        assert_eq!(s.commands, vec![Command::Repeat { count: 1, period: Some(60.0), body: vec![measure] }]);
        assert!(w.iter().any(|w| w.message.contains("running once") && !w.blocking));
    }

    #[test]
    fn do_the_following_captures_later_commands() {
        let (s, w) = compile(&[
            ("Take a", None),
            ("scan", b(Scan)),
            ("Until the humidity is", None),
            ("80", b(HumidityConditional)),
            ("percent do the following every", None),
            ("2", b(TrateMin)),
            ("minutes Move motor x by", None),
            ("1", b(XposRel)),
            ("and take a", None),
            ("snapshot", i(Scan)),
        ]);
        assert_eq!(s.commands.len(), 2);
        let Command::Until { quantity, threshold, period, body, .. } = &s.commands[1] else {
            panic!("{:?}", s.commands)
        };
        assert_eq!((*quantity, *threshold, *period), (Quantity::Humidity, 80.0, Some(120.0)));
        assert_eq!(body.len(), 2);
        assert!(w.iter().all(|w| !w.blocking));
    }

    #[test]
    fn do_this_captures_the_preceding_run() {
        let (s, _) = compile(&[
            ("Set humidity to", None),
            ("30", b(Humidity)),
            ("Take a", None),
            ("scan", b(Scan)),
            ("Move x by", None),
            ("2", b(XposRel)),
            ("Repeat this", None),
            ("3", b(Amount)),
            ("times", None),
        ]);
        assert_eq!(s.commands.len(), 2);
        assert_eq!(s.commands[0], Command::SetHumidity { target: 30.0 });
        let Command::Repeat { count: 3, period: None, body } = &s.commands[1] else { panic!() };
        assert_eq!(body.len(), 2);
    }

    #[test]
    fn wrapper_with_nothing_to_wrap_empties_the_script() {
        let (s, w) = compile(&[("Repeat", None), ("3", b(Amount)), ("times", None)]);
        assert!(s.is_empty());
        assert!(w.iter().any(|w| w.blocking && w.spans == vec![0]));
    }

    #[test]
    fn parameters_without_a_measurement_become_defaults() {
        let (s, _) = compile(&[("Set the exposure time to", None), ("5", b(Etime)), ("seconds", None)]);
        assert_eq!(
            s.commands,
            vec![Command::SetParameters { exposure: Some(5.0), angles: vec![], protocol: None }]
        );
    }

    #[test]
    fn a_bare_point_is_a_goto() {
        let (s, _) = compile(&[("Switch to the", None), ("gold", b(Sample)), ("sample and go to", None), ("(1, -2)", i(PointAbs))]);
        assert_eq!(
            s.commands,
            vec![Command::SetSample { name: "gold".into() }, Command::GotoPoint { x: 1.0, y: -2.0 }]
        );
    }

    #[test]
    fn second_scan_word_opens_a_second_measurement() {
        let (s, _) = compile(&[("Take a", None), ("scan", b(Scan)), ("and a", None), ("snapshot", i(Scan))]);
        assert_eq!(s.commands.len(), 2);
    }
}
