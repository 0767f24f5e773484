//! Corpus files: a header record followed by one paragraph per line.
//!
//! ```text
//! {"format_version":1,"kind":"corpus","train_templates":[..],"test_templates":[..]}
//! {"split":"train","tokens":[..],"labels":[..],"bindings":[..],"seed":..,"templates":[..]}
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusSplit, Paragraph};
use crate::records::{read_records, write_records};
use crate::Result;

const KIND: &str = "corpus";

#[derive(Serialize, Deserialize)]
struct Meta {
    train_templates: Vec<String>,
    test_templates: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Split {
    Train,
    Test,
}

#[derive(Serialize, Deserialize)]
struct Record {
    split: Split,
    #[serde(flatten)]
    paragraph: Paragraph,
}

pub fn write_corpus(c: &CorpusSplit, path: impl AsRef<Path>) -> Result<()> {
    let meta = Meta {
        train_templates: c.train_templates.clone(),
        test_templates: c.test_templates.clone(),
    };
    let records: Vec<Record> = c
        .train
        .iter()
        .map(|p| (Split::Train, p))
        .chain(c.test.iter().map(|p| (Split::Test, p)))
        .map(|(split, p)| Record {
            split,
            paragraph: p.clone(),
        })
        .collect();
    let out = BufWriter::new(File::create(path)?);
    write_records(out, KIND, &meta, &records)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<CorpusSplit> {
    let input = BufReader::new(File::open(path)?);
    let (meta, records): (Meta, Vec<Record>) = read_records(input, KIND)?;
    let mut c = CorpusSplit {
        train_templates: meta.train_templates,
        test_templates: meta.test_templates,
        train: Vec::new(),
        test: Vec::new(),
    };
    for r in records {
        match r.split {
            Split::Train => c.train.push(r.paragraph),
            Split::Test => c.test.push(r.paragraph),
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, TemplateSet};
    use crate::Error;

    #[test]
    fn round_trip_preserves_every_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let c = generate_corpus(&TemplateSet::default_pack(), 40, 5, 0.8).unwrap();
        write_corpus(&c, &path).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), c);
    }

    #[test]
    fn empty_corpus_is_a_valid_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let c = CorpusSplit {
            train_templates: vec![],
            test_templates: vec![],
            train: vec![],
            test: vec![],
        };
        write_corpus(&c, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert_eq!(read_corpus(&path).unwrap(), c);
    }

    #[test]
    fn corrupted_record_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let c = generate_corpus(&TemplateSet::default_pack(), 10, 5, 0.8).unwrap();
        write_corpus(&c, &path).unwrap();
        let mut lines: Vec<String> = std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        lines[4] = lines[4].replacen("\"labels\":[", "\"labels\":[\"B-NOPE\",", 1);
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = read_corpus(&path).unwrap_err();
        assert!(matches!(err, Error::Format { record: 4, .. }), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"format_version\":2,\"kind\":\"corpus\",\"train_templates\":[],\"test_templates\":[]}\n",
        )
        .unwrap();
        assert!(matches!(read_corpus(&path), Err(Error::Format { record: 0, .. })));
    }
}
