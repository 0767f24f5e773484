//! Line-delimited record files.
//!
//! Every file in the family is UTF-8 JSON, one value per line. Line 1 is a
//! header object carrying `format_version` and `kind`; any extra header
//! fields are flattened next to them. Each following line is one record.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header<T> {
    pub format_version: u32,
    pub kind: String,
    #[serde(flatten)]
    pub meta: T,
}

pub fn write_records<W, H, R>(mut out: W, kind: &str, meta: &H, records: &[R]) -> Result<()>
where
    W: Write,
    H: Serialize,
    R: Serialize,
{
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        meta,
    };
    serde_json::to_writer(&mut out, &header).map_err(io_err)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(io_err)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a header and all records. Version or kind mismatches and malformed
/// lines are reported with the record index (header = 0).
pub fn read_records<B, H, R>(input: B, kind: &str) -> Result<(H, Vec<R>)>
where
    B: BufRead,
    H: DeserializeOwned,
    R: DeserializeOwned,
{
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| Error::Format {
        record: 0,
        message: "missing header".into(),
    })??;

    #[derive(Deserialize)]
    struct Probe {
        format_version: u32,
        kind: String,
    }
    let probe: Probe = serde_json::from_str(&first).map_err(|e| Error::Format {
        record: 0,
        message: format!("bad header: {e}"),
    })?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Format {
            record: 0,
            message: format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                probe.format_version
            ),
        });
    }
    if probe.kind != kind {
        return Err(Error::Format {
            record: 0,
            message: format!("expected a `{kind}` file, found `{}`", probe.kind),
        });
    }
    let header: Header<H> = serde_json::from_str(&first).map_err(|e| Error::Format {
        record: 0,
        message: format!("bad header: {e}"),
    })?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Format {
            record: i + 1,
            message: e.to_string(),
        })?;
        records.push(r);
    }
    Ok((header.meta, records))
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Io(e.into())
}
