//! The pseudo-script shown to the operator before execution.
//!
//! ```text
//! script    = { line } ;
//! line      = indent statement [ ":" ] newline ;     (* ":" opens a block *)
//! indent    = { "  " } ;                             (* two spaces per level *)
//! statement = name "(" [ arg { "," arg } ] ")" ;
//! arg       = ident "=" value ;
//! value     = number | ident | string | list | pair ;
//! list      = "[" [ number { "," number } ] "]" ;
//! pair      = "(" number "," number ")" ;
//! string    = '"' { char | '\"' | '\\' } '"' ;
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Only `repeat` and
//! `until` open blocks; the block body is every following line indented one
//! level deeper, and must not be empty. `repeat` always needs a block. An
//! `until` written without one just waits for its threshold.
//!
//! | statement | arguments (optional ones in brackets) |
//! |---|---|
//! | `set_temperature` | `target`, `ramp` |
//! | `set_humidity` | `target` |
//! | `move_motor` | `axis` (`x`/`y`), `amount`, `mode` (`relative`/`absolute`) |
//! | `goto_point` | `x`, `y` |
//! | `set_sample` | `name` |
//! | `set_parameters` | [`exposure`], [`angles`], [`protocol`] |
//! | `measure` | `kind`, [`protocol`], [`exposure`], [`angles`], [`position`], [`direction`] |
//! | `repeat` | `count`, [`period`] |
//! | `until` | `quantity` (`temperature`/`humidity`), `threshold`, `ramp`, [`period`] |
//!
//! Numbers are written in shortest round-trip form, so rendering and parsing
//! back is exact.

use std::collections::HashMap;
use std::fmt::Write;

use super::script::{Axis, Command, Measure, MoveMode, Quantity, Script};
use crate::{Error, Result};

const INDENT: &str = "  ";

pub fn render_script(s: &Script) -> String {
    let mut out = String::new();
    render_block(&s.commands, 0, &mut out);
    out
}

fn render_block(cmds: &[Command], depth: usize, out: &mut String) {
    for c in cmds {
        for _ in 0..depth {
            out.push_str(INDENT);
        }
        out.push_str(&render_statement(c));
        if let Some(body) = c.body().filter(|b| !b.is_empty()) {
            out.push_str(":\n");
            render_block(body, depth + 1, out);
        } else {
            out.push('\n');
        }
    }
}

/// One command's statement line, without indentation, trailing colon or body.
pub fn render_statement(c: &Command) -> String {
    let mut args: Vec<String> = Vec::new();
    let mut num = |k: &str, v: f64| args.push(format!("{k}={v:?}"));
    match c {
        Command::SetTemperature { target, ramp } => {
            num("target", *target);
            num("ramp", *ramp);
        }
        Command::SetHumidity { target } => num("target", *target),
        Command::MoveMotor { axis, amount, mode } => {
            args.push(format!("axis={}", axis.name()));
            args.push(format!("amount={amount:?}"));
            args.push(format!("mode={}", mode.name()));
        }
        Command::GotoPoint { x, y } => {
            num("x", *x);
            num("y", *y);
        }
        Command::SetSample { name } => args.push(format!("name={}", quote(name))),
        Command::SetParameters {
            exposure,
            angles,
            protocol,
        } => {
            if let Some(e) = exposure {
                num("exposure", *e);
            }
            if !angles.is_empty() {
                args.push(format!("angles={}", list(angles)));
            }
            if let Some(p) = protocol {
                args.push(format!("protocol={}", word(p)));
            }
        }
        Command::Measure(m) => {
            args.push(format!("kind={}", quote(&m.kind)));
            if let Some(p) = &m.protocol {
                args.push(format!("protocol={}", word(p)));
            }
            if let Some(e) = m.exposure {
                args.push(format!("exposure={e:?}"));
            }
            if !m.angles.is_empty() {
                args.push(format!("angles={}", list(&m.angles)));
            }
            if let Some((x, y)) = m.position {
                args.push(format!("position=({x:?}, {y:?})"));
            }
            if let Some(d) = &m.direction {
                args.push(format!("direction={}", word(d)));
            }
        }
        Command::Repeat { count, period, .. } => {
            args.push(format!("count={count}"));
            if let Some(p) = period {
                args.push(format!("period={p:?}"));
            }
        }
        Command::Until {
            quantity,
            threshold,
            ramp,
            period,
            ..
        } => {
            args.push(format!("quantity={}", quantity.name()));
            args.push(format!("threshold={threshold:?}"));
            args.push(format!("ramp={ramp:?}"));
            if let Some(p) = period {
                args.push(format!("period={p:?}"));
            }
        }
    }
    format!("{}({})", c.name(), args.join(", "))
}

fn list(v: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        write!(s, "{x:?}").unwrap();
    }
    s.push(']');
    s
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn word(s: &str) -> String {
    if is_ident(s) {
        s.to_string()
    } else {
        quote(s)
    }
}

pub fn parse_script(text: &str) -> Result<Script> {
    let lines: Vec<Line> = text
        .lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let trimmed = raw.trim_start_matches(' ');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                return None;
            }
            Some(Line {
                number: i + 1,
                indent: raw.len() - trimmed.len(),
                text: raw,
            })
        })
        .collect();
    let mut pos = 0;
    let commands = parse_block(&lines, &mut pos, 0)?;
    Ok(Script::new(commands))
}

struct Line<'a> {
    number: usize,
    indent: usize,
    text: &'a str,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn parse_block(lines: &[Line], pos: &mut usize, indent: usize) -> Result<Vec<Command>> {
    let mut out = Vec::new();
    while let Some(line) = lines.get(*pos) {
        if line.indent < indent {
            break;
        }
        if line.indent > indent || line.indent % INDENT.len() != 0 {
            return Err(syntax(line.number, 1, format!("unexpected indentation of {} spaces", line.indent)));
        }
        *pos += 1;
        let stmt = parse_statement(line)?;
        let cmd = if stmt.block {
            let body = parse_block(lines, pos, indent + INDENT.len())?;
            if body.is_empty() {
                return Err(syntax(line.number, line.text.len() + 1, "expected an indented block"));
            }
            stmt.build(Some(body))?
        } else {
            stmt.build(None)?
        };
        out.push(cmd);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Number(f64),
    Ident(String),
    Str(String),
    List(Vec<f64>),
    Pair(f64, f64),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Number(_) => "a number",
            Value::Ident(_) => "a name",
            Value::Str(_) => "a string",
            Value::List(_) => "a list",
            Value::Pair(..) => "a pair",
        }
    }
}

struct Statement {
    line: usize,
    column: usize,
    name: String,
    args: HashMap<String, (Value, usize)>,
    block: bool,
}

struct Cursor<'a> {
    chars: Vec<(usize, char)>,
    i: usize,
    line: usize,
    text: &'a str,
}

impl Cursor<'_> {
    fn column(&self) -> usize {
        self.chars.get(self.i).map(|(b, _)| self.text[..*b].chars().count() + 1).unwrap_or(self.text.chars().count() + 1)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).map(|(_, c)| *c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c == ' ' || c == '\t') {
            self.i += 1;
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        syntax(self.line, self.column(), message)
    }

    fn expect(&mut self, want: char) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.i += 1;
                Ok(())
            }
            Some(c) => Err(self.err(format!("expected `{want}`, found `{c}`"))),
            None => Err(self.err(format!("expected `{want}`, found end of line"))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.i;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            self.i += 1;
        }
        let s: String = self.chars[start..self.i].iter().map(|(_, c)| c).collect();
        if s.is_empty() || !is_ident(&s) {
            self.i = start;
            return Err(self.err("expected a name"));
        }
        Ok(s)
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.i;
        let col = self.column();
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
        {
            self.i += 1;
        }
        let s: String = self.chars[start..self.i].iter().map(|(_, c)| c).collect();
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(syntax(self.line, col, format!("expected a number, found `{s}`"))),
        }
    }

    fn string(&mut self) -> Result<String> {
        self.expect('"')?;
        let mut s = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated string")),
                Some('"') => {
                    self.i += 1;
                    return Ok(s);
                }
                Some('\\') => {
                    self.i += 1;
                    match self.peek() {
                        Some(c @ ('"' | '\\')) => {
                            s.push(c);
                            self.i += 1;
                        }
                        _ => return Err(self.err("invalid escape in string")),
                    }
                }
                Some(c) => {
                    s.push(c);
                    self.i += 1;
                }
            }
        }
    }

    fn value(&mut self) -> Result<Value> {
        self.skip_ws();
        match self.peek() {
            Some('"') => Ok(Value::Str(self.string()?)),
            Some('[') => {
                self.i += 1;
                let mut items = Vec::new();
                self.skip_ws();
                if self.peek() == Some(']') {
                    self.i += 1;
                    return Ok(Value::List(items));
                }
                loop {
                    items.push(self.number()?);
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => self.i += 1,
                        Some(']') => {
                            self.i += 1;
                            return Ok(Value::List(items));
                        }
                        _ => return Err(self.err("expected `,` or `]` in list")),
                    }
                }
            }
            Some('(') => {
                self.i += 1;
                let a = self.number()?;
                self.expect(',')?;
                let b = self.number()?;
                self.expect(')')?;
                Ok(Value::Pair(a, b))
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => Ok(Value::Number(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => Ok(Value::Ident(self.ident()?)),
            Some(c) => Err(self.err(format!("unexpected `{c}`"))),
            None => Err(self.err("expected a value, found end of line")),
        }
    }
}

fn parse_statement(line: &Line) -> Result<Statement> {
    let mut cur = Cursor {
        chars: line.text.char_indices().collect(),
        i: 0,
        line: line.number,
        text: line.text,
    };
    cur.skip_ws();
    let column = cur.column();
    let name = cur.ident()?;
    cur.expect('(')?;
    let mut args = HashMap::new();
    cur.skip_ws();
    if cur.peek() == Some(')') {
        cur.i += 1;
    } else {
        loop {
            cur.skip_ws();
            let key_col = cur.column();
            let key = cur.ident()?;
            cur.expect('=')?;
            cur.skip_ws();
            let val_col = cur.column();
            let value = cur.value()?;
            if args.insert(key.clone(), (value, val_col)).is_some() {
                return Err(syntax(line.number, key_col, format!("duplicate argument `{key}`")));
            }
            cur.skip_ws();
            match cur.peek() {
                Some(',') => cur.i += 1,
                Some(')') => {
                    cur.i += 1;
                    break;
                }
                _ => return Err(cur.err("expected `,` or `)`")),
            }
        }
    }
    cur.skip_ws();
    let block = if cur.peek() == Some(':') {
        cur.i += 1;
        true
    } else {
        false
    };
    cur.skip_ws();
    if let Some(c) = cur.peek() {
        return Err(cur.err(format!("unexpected `{c}` after statement")));
    }
    Ok(Statement {
        line: line.number,
        column,
        name,
        args,
        block,
    })
}

impl Statement {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        syntax(self.line, column, message)
    }

    fn take(&mut self, key: &str) -> Option<(Value, usize)> {
        self.args.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<(Value, usize)> {
        self.take(key)
            .ok_or_else(|| self.err(self.column, format!("`{}` requires argument `{key}`", self.name)))
    }

    fn num(&mut self, key: &str) -> Result<f64> {
        let (v, col) = self.required(key)?;
        self.as_num(key, v, col)
    }

    fn opt_num(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            Some((v, col)) => self.as_num(key, v, col).map(Some),
            None => Ok(None),
        }
    }

    fn as_num(&self, key: &str, v: Value, col: usize) -> Result<f64> {
        match v {
            Value::Number(n) => Ok(n),
            other => Err(self.err(col, format!("`{key}` expects a number, found {}", other.describe()))),
        }
    }

    fn text(&mut self, key: &str) -> Result<String> {
        let (v, col) = self.required(key)?;
        self.as_text(key, v, col)
    }

    fn opt_text(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            Some((v, col)) => self.as_text(key, v, col).map(Some),
            None => Ok(None),
        }
    }

    fn as_text(&self, key: &str, v: Value, col: usize) -> Result<String> {
        match v {
            Value::Ident(s) | Value::Str(s) => Ok(s),
            other => Err(self.err(col, format!("`{key}` expects a name or string, found {}", other.describe()))),
        }
    }

    fn choice<T>(&mut self, key: &str, options: &[(&str, T)]) -> Result<T>
    where
        T: Copy,
    {
        let (v, col) = self.required(key)?;
        let s = self.as_text(key, v, col)?;
        options
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(col, format!("`{key}` must be one of {}, found `{s}`", names.join(", ")))
            })
    }

    fn angles(&mut self) -> Result<Vec<f64>> {
        match self.take("angles") {
            None => Ok(Vec::new()),
            Some((Value::List(v), _)) => Ok(v),
            Some((Value::Number(n), _)) => Ok(vec![n]),
            Some((other, col)) => Err(self.err(col, format!("`angles` expects a list, found {}", other.describe()))),
        }
    }

    fn position(&mut self) -> Result<Option<(f64, f64)>> {
        match self.take("position") {
            None => Ok(None),
            Some((Value::Pair(x, y), _)) => Ok(Some((x, y))),
            Some((other, col)) => Err(self.err(col, format!("`position` expects a pair, found {}", other.describe()))),
        }
    }

    fn count(&mut self) -> Result<u32> {
        let (v, col) = self.required("count")?;
        let n = self.as_num("count", v, col)?;
        if n.fract() != 0.0 || n < 1.0 || n > u32::MAX as f64 {
            return Err(self.err(col, format!("`count` must be a positive integer, found {n}")));
        }
        Ok(n as u32)
    }

    fn build(mut self, body: Option<Vec<Command>>) -> Result<Command> {
        let opens_block = matches!(self.name.as_str(), "repeat" | "until");
        if self.name == "repeat" && body.is_none() {
            return Err(self.err(self.column, format!("`{}` must end with `:` and be followed by a block", self.name)));
        }
        if !opens_block && self.block {
            return Err(self.err(self.column, format!("`{}` does not take a block", self.name)));
        }
        // Positions of each argument, kept for range-error reporting.
        let columns: HashMap<String, usize> = self.args.iter().map(|(k, (_, c))| (k.clone(), *c)).collect();
        let cmd = match self.name.as_str() {
            "set_temperature" => Command::SetTemperature {
                target: self.num("target")?,
                ramp: self.num("ramp")?,
            },
            "set_humidity" => Command::SetHumidity {
                target: self.num("target")?,
            },
            "move_motor" => Command::MoveMotor {
                axis: self.choice("axis", &[("x", Axis::X), ("y", Axis::Y)])?,
                amount: self.num("amount")?,
                mode: self.choice("mode", &[("relative", MoveMode::Relative), ("absolute", MoveMode::Absolute)])?,
            },
            "goto_point" => Command::GotoPoint {
                x: self.num("x")?,
                y: self.num("y")?,
            },
            "set_sample" => Command::SetSample {
                name: self.text("name")?,
            },
            "set_parameters" => Command::SetParameters {
                exposure: self.opt_num("exposure")?,
                angles: self.angles()?,
                protocol: self.opt_text("protocol")?,
            },
            "measure" => Command::Measure(Measure {
                kind: self.text("kind")?,
                protocol: self.opt_text("protocol")?,
                exposure: self.opt_num("exposure")?,
                angles: self.angles()?,
                position: self.position()?,
                direction: self.opt_text("direction")?,
            }),
            "repeat" => Command::Repeat {
                count: self.count()?,
                period: self.opt_num("period")?,
                body: body.unwrap_or_default(),
            },
            "until" => Command::Until {
                quantity: self.choice(
                    "quantity",
                    &[("temperature", Quantity::Temperature), ("humidity", Quantity::Humidity)],
                )?,
                threshold: self.num("threshold")?,
                ramp: self.num("ramp")?,
                period: self.opt_num("period")?,
                body: body.unwrap_or_default(),
            },
            other => return Err(self.err(self.column, format!("unknown command `{other}`"))),
        };
        if let Some(key) = self.args.keys().min() {
            let col = self.args[key].1;
            return Err(self.err(col, format!("unknown argument `{key}` for `{}`", self.name)));
        }
        if let Err(v) = cmd.check() {
            let col = columns.get(v.argument).copied().unwrap_or(self.column);
            return Err(self.err(col, v.message));
        }
        Ok(cmd)
    }
}
