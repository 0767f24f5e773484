//! Model files.
//!
//! UTF-8 text. Line 1 is a JSON header:
//!
//! ```text
//! {"format_version":1,"kind":"tagger-model","labels":["O","B-SCAN",...],
//!  "feature_count":N,"weight_count":M,"meta":{"seed":..,"epochs":..,...}}
//! ```
//!
//! followed by exactly `M` lines `feature TAB label TAB weight`, sorted by
//! feature then label index, with zero weights omitted. Label-bigram weights
//! use the feature name `@trans:<previous label>` (`@trans:<start>` for the
//! first token). Span-opening weights use `@span:fresh` (first entity of a
//! sentence) and `@span:seen` (later entities). Weights are written in shortest round-trip decimal form.
//! The last line is `#end`; a file without it is treated as truncated.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelMeta, TaggerModel, L, START};
use crate::entity::Label;
use crate::records::FORMAT_VERSION;
use crate::{Error, Result};

const KIND: &str = "tagger-model";
const TRANS: &str = "@trans:";
const SPAN: [&str; 2] = ["@span:fresh", "@span:seen"];
const FOOTER: &str = "#end";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    labels: Vec<String>,
    feature_count: usize,
    weight_count: usize,
    meta: ModelMeta,
}

fn trans_name(prev: usize) -> String {
    if prev == START {
        format!("{TRANS}<start>")
    } else {
        format!("{TRANS}{}", Label::from_index(prev).expect("label"))
    }
}

pub fn write_model<W: Write>(model: &TaggerModel, mut out: W) -> Result<()> {
    let mut entries: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for (r, name) in model.names.iter().enumerate() {
        let row: Vec<(usize, f64)> = (0..L)
            .map(|l| (l, model.weights[r * L + l]))
            .filter(|(_, w)| *w != 0.0)
            .collect();
        if !row.is_empty() {
            entries.insert(name, row);
        }
    }
    let feature_count = entries.len();
    let trans_names: Vec<String> = (0..=L).map(trans_name).collect();
    for (prev, name) in trans_names.iter().enumerate() {
        let row: Vec<(usize, f64)> = (0..L)
            .map(|l| (l, model.transitions[prev * L + l]))
            .filter(|(_, w)| *w != 0.0)
            .collect();
        if !row.is_empty() {
            entries.insert(name, row);
        }
    }

    for (r, name) in SPAN.iter().enumerate() {
        let row: Vec<(usize, f64)> = (0..L)
            .map(|l| (l, model.span[r * L + l]))
            .filter(|(_, w)| *w != 0.0)
            .collect();
        if !row.is_empty() {
            entries.insert(name, row);
        }
    }

    let header = Header {
        format_version: FORMAT_VERSION,
        kind: KIND.into(),
        labels: Label::all().iter().map(Label::to_string).collect(),
        feature_count,
        weight_count: entries.values().map(Vec::len).sum(),
        meta: model.meta.clone(),
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for (name, row) in &entries {
        for (l, w) in row {
            writeln!(out, "{name}\t{}\t{w:?}", Label::from_index(*l).expect("label"))?;
        }
    }
    writeln!(out, "{FOOTER}")?;
    out.flush()?;
    Ok(())
}

pub fn save_model(model: &TaggerModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TaggerModel> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn read_model<R: BufRead>(input: R) -> Result<TaggerModel> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| Error::Format {
        record: 0,
        message: "empty model file".into(),
    })??;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Format {
        record: 0,
        message: format!("bad model header: {e}"),
    })?;
    if header.format_version != FORMAT_VERSION || header.kind != KIND {
        return Err(Error::Version(format!(
            "expected {KIND} version {FORMAT_VERSION}, found {} version {}",
            header.kind, header.format_version
        )));
    }
    let registry: Vec<String> = Label::all().iter().map(Label::to_string).collect();
    if header.labels != registry {
        return Err(Error::Version(format!(
            "model was saved with a {}-label registry; this build uses {} labels",
            header.labels.len(),
            registry.len()
        )));
    }

    let mut model = TaggerModel::empty();
    model.meta = header.meta;
    let mut seen = 0usize;
    let mut footer = false;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let record = i + 1;
        if footer {
            return Err(Error::Format {
                record,
                message: "content after end marker".into(),
            });
        }
        if line == FOOTER {
            footer = true;
            continue;
        }
        let bad = |message: String| Error::Format { record, message };
        let mut parts = line.split('\t');
        let (Some(name), Some(label), Some(weight), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad(format!("expected 3 tab-separated fields: `{line}`")));
        };
        let label: Label = label.parse().map_err(|e: Error| bad(e.to_string()))?;
        let weight: f64 = weight
            .parse()
            .map_err(|_| bad(format!("bad weight `{weight}`")))?;
        if !weight.is_finite() {
            return Err(bad("non-finite weight".into()));
        }
        if let Some(r) = SPAN.iter().position(|s| *s == name) {
            model.span[r * L + label.index()] = weight;
        } else if let Some(prev) = name.strip_prefix(TRANS) {
            let prev = if prev == "<start>" {
                START
            } else {
                prev.parse::<Label>().map_err(|e| bad(e.to_string()))?.index()
            };
            model.transitions[prev * L + label.index()] = weight;
        } else {
            let r = model.row(name);
            model.weights[r * L + label.index()] = weight;
        }
        seen += 1;
    }
    if !footer || seen != header.weight_count {
        return Err(Error::Format {
            record: seen + 1,
            message: format!(
                "truncated model: {seen} of {} weights present",
                header.weight_count
            ),
        });
    }
    if model.feature_count() != header.feature_count {
        return Err(Error::Format {
            record: 0,
            message: format!(
                "header declares {} features, body has {}",
                header.feature_count,
                model.feature_count()
            ),
        });
    }
    Ok(model)
}
