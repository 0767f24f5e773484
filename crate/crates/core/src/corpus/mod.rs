//! Synthetic labelled paragraphs built from slot-filled sentence templates.
//!
//! A paragraph is a run-on concatenation of instantiated templates, joined by
//! a single space with no added punctuation. Every token that came from a
//! slot carries that slot's full label; everything else is `O`. The generator
//! also records the value each slot was filled with (the gold bindings),
//! which downstream tests use as an oracle.

mod io;
mod sample;
mod template;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entity::{EntityType, Label, Prefix, SlotValue};
use crate::tagger::tokenize;
use crate::{Error, Result};

pub use io::{read_corpus, write_corpus};
pub use sample::{format_fixed, sample_slot_value, UNIT_SUFFIX_PROBABILITY};
pub use template::{
    load_templates, parse_templates, Category, Piece, Slot, Template, TemplateSet, MAX_SLOTS,
};

/// Sentences per paragraph, drawn uniformly from this inclusive range.
///
/// The shipped pack averages 2.1 slots per sentence when categories are
/// drawn uniformly, so 7..=17 sentences give about 25 slots per paragraph
/// with a standard deviation near 7.
pub const DEFAULT_MIN_SENTENCES: usize = 7;
pub const DEFAULT_MAX_SENTENCES: usize = 17;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// One filled slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub entity: EntityType,
    pub surface: String,
    pub value: SlotValue,
    /// Command group index within the paragraph; each `B-` slot opens a new one.
    pub group: usize,
}

/// Tokens, labels and bindings from one instantiated template. Group
/// indices are local to the fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceFragment {
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
    pub bindings: Vec<Binding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
    pub bindings: Vec<Binding>,
    pub seed: u64,
    pub templates: Vec<String>,
}

impl Paragraph {
    /// Readable text whose tokenization gives back `tokens`.
    pub fn render(&self) -> String {
        join_tokens(&self.tokens)
    }

    pub fn slot_count(&self) -> usize {
        self.bindings.len()
    }
}

/// Join tokens with single spaces, except before `, . )` and after `(`.
pub fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for t in tokens {
        let t = t.as_ref();
        let tight = matches!(t, "," | "." | ")") || prev == Some("(");
        if prev.is_some() && !tight {
            out.push(' ');
        }
        out.push_str(t);
        prev = Some(t);
    }
    out
}

pub fn instantiate_template<R: Rng + ?Sized>(t: &Template, rng: &mut R) -> SentenceFragment {
    let mut frag = SentenceFragment {
        tokens: Vec::new(),
        labels: Vec::new(),
        bindings: Vec::new(),
    };
    let mut group: Option<usize> = None;
    for (i, piece) in t.pieces.iter().enumerate() {
        match piece {
            Piece::Text(text) => {
                let toks = tokenize(text).tokens;
                frag.labels.extend(std::iter::repeat(Label::O).take(toks.len()));
                frag.tokens.extend(toks);
            }
            Piece::Slot(slot) => {
                let (mut surface, value) = sample_slot_value(slot.entity, rng);
                if i == 0 {
                    surface = capitalize(&surface);
                }
                let toks = tokenize(&surface).tokens;
                let label = Label::new(slot.prefix, slot.entity);
                frag.labels.extend(std::iter::repeat(label).take(toks.len()));
                frag.tokens.extend(toks);
                let g = match (slot.prefix, group) {
                    (Prefix::B, None) => 0,
                    (Prefix::B, Some(g)) => g + 1,
                    (Prefix::I, g) => g.unwrap_or(0),
                };
                group = Some(g);
                frag.bindings.push(Binding {
                    entity: slot.entity,
                    surface,
                    value,
                    group: g,
                });
            }
        }
    }
    frag
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() => c.to_uppercase().chain(chars).collect(),
        _ => s.to_string(),
    }
}

/// Concatenate `k` instantiated templates, `k` uniform in `[min, max]`. Each
/// sentence picks a category uniformly, then a template uniformly within it.
pub fn generate_paragraph(
    ts: &TemplateSet,
    seed: u64,
    min_sentences: usize,
    max_sentences: usize,
) -> Result<Paragraph> {
    if ts.is_empty() {
        return Err(Error::Config("template set is empty".into()));
    }
    if min_sentences == 0 || min_sentences > max_sentences {
        return Err(Error::Config(format!(
            "sentence range must satisfy 1 <= min <= max, got {min_sentences}..={max_sentences}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categories = ts.nonempty_categories();
    let k = rng.gen_range(min_sentences..=max_sentences);

    let mut p = Paragraph {
        tokens: Vec::new(),
        labels: Vec::new(),
        bindings: Vec::new(),
        seed,
        templates: Vec::with_capacity(k),
    };
    let mut groups_so_far = 0;
    for _ in 0..k {
        let c = *categories.choose(&mut rng).expect("nonempty");
        let t = ts.category(c).choose(&mut rng).expect("nonempty category");
        let frag = instantiate_template(t, &mut rng);
        let offset = groups_so_far;
        if let Some(last) = frag.bindings.last() {
            groups_so_far += last.group + 1;
        }
        p.tokens.extend(frag.tokens);
        p.labels.extend(frag.labels);
        p.bindings.extend(frag.bindings.into_iter().map(|b| Binding {
            group: b.group + offset,
            ..b
        }));
        p.templates.push(t.id.clone());
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train_templates: Vec<String>,
    pub test_templates: Vec<String>,
    pub train: Vec<Paragraph>,
    pub test: Vec<Paragraph>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationConfig {
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub train_fraction: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            min_sentences: DEFAULT_MIN_SENTENCES,
            max_sentences: DEFAULT_MAX_SENTENCES,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

pub fn generate_corpus(ts: &TemplateSet, n: usize, seed: u64, train_fraction: f64) -> Result<CorpusSplit> {
    generate_corpus_with(
        ts,
        n,
        seed,
        &GenerationConfig {
            train_fraction,
            ..GenerationConfig::default()
        },
    )
}

/// Split templates per category into train/test, then generate `n`
/// paragraphs divided by the same fraction, each side drawing only from its
/// own templates.
pub fn generate_corpus_with(
    ts: &TemplateSet,
    n: usize,
    seed: u64,
    cfg: &GenerationConfig,
) -> Result<CorpusSplit> {
    if !(0.0..=1.0).contains(&cfg.train_fraction) {
        return Err(Error::Config("train fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_set = Vec::new();
    let mut test_set = Vec::new();
    for c in Category::ALL {
        let templates = ts.category(c);
        if templates.len() < 2 {
            return Err(Error::Config(format!(
                "category {c} has {} templates; at least 2 are needed to split",
                templates.len()
            )));
        }
        let mut order: Vec<&Template> = templates.iter().collect();
        order.shuffle(&mut rng);
        let n_train = ((templates.len() as f64 * cfg.train_fraction).round() as usize)
            .clamp(1, templates.len() - 1);
        train_set.extend(order[..n_train].iter().map(|t| (*t).clone()));
        test_set.extend(order[n_train..].iter().map(|t| (*t).clone()));
    }
    let train_ts = TemplateSet::from_templates(train_set);
    let test_ts = TemplateSet::from_templates(test_set);

    let n_train = (n as f64 * cfg.train_fraction).round() as usize;
    let gen = |set: &TemplateSet, range: std::ops::Range<usize>| -> Result<Vec<Paragraph>> {
        range
            .map(|i| {
                generate_paragraph(
                    set,
                    paragraph_seed(seed, i as u64),
                    cfg.min_sentences,
                    cfg.max_sentences,
                )
            })
            .collect()
    };
    let ids = |set: &TemplateSet| {
        let mut v: Vec<String> = set.iter().map(|t| t.id.clone()).collect();
        v.sort();
        v
    };
    Ok(CorpusSplit {
        train_templates: ids(&train_ts),
        test_templates: ids(&test_ts),
        train: gen(&train_ts, 0..n_train)?,
        test: gen(&test_ts, n_train..n)?,
    })
}

/// Per-paragraph seed (SplitMix64 finalizer over the corpus seed and index).
pub fn paragraph_seed(corpus_seed: u64, index: u64) -> u64 {
    let mut z = corpus_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean and population standard deviation of slots per paragraph.
pub fn slot_stats(paragraphs: &[Paragraph]) -> (f64, f64) {
    if paragraphs.is_empty() {
        return (0.0, 0.0);
    }
    let n = paragraphs.len() as f64;
    let counts: Vec<f64> = paragraphs.iter().map(|p| p.slot_count() as f64).collect();
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::{is_bio_consistent, label_runs};

    fn one(line: &str) -> TemplateSet {
        parse_templates(line).unwrap()
    }

    #[test]
    fn humidity_template_labels_only_the_value() {
        let ts = one("Hardware\tChange humidity to [B-HUMIDITY]\n");
        let t = &ts.category(Category::Hardware)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = instantiate_template(t, &mut rng);
        assert_eq!(&f.tokens[..3], ["Change", "humidity", "to"]);
        assert_eq!(f.labels[..3], [Label::O; 3]);
        assert_eq!(f.labels[3], Label::B(EntityType::Humidity));
        assert_eq!(f.tokens.len(), 4);
        let v = f.bindings[0].value.as_scalar().unwrap();
        assert_eq!(f.tokens[3], v.to_string());
    }

    #[test]
    fn slotless_template_is_all_outside() {
        let ts = one("Measure\tpause here\n");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = instantiate_template(&ts.category(Category::Measure)[0], &mut rng);
        assert_eq!(f.labels, vec![Label::O, Label::O]);
        assert!(f.bindings.is_empty());
    }

    #[test]
    fn two_angles_share_one_group() {
        let ts = one("Parameter\tUse incident angles [B-ANGLE] and [I-ANGLE] with exposure time of [I-ETIME] seconds\n");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = instantiate_template(&ts.category(Category::Parameter)[0], &mut rng);
        let angles: Vec<_> = f.bindings.iter().filter(|b| b.entity == EntityType::Angle).collect();
        assert_eq!(angles.len(), 2);
        assert!(f.bindings.iter().all(|b| b.group == 0));
    }

    #[test]
    fn multi_token_point_gets_the_slot_label_on_every_token() {
        let ts = one("Measure\tTake a [B-SCAN] on the sample at [I-POINT-ABS]\n");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = instantiate_template(&ts.category(Category::Measure)[0], &mut rng);
        let n = f.tokens.len();
        assert_eq!(f.tokens[n - 5], "(");
        assert!(f.labels[n - 5..].iter().all(|l| *l == Label::I(EntityType::PointAbs)));
    }

    #[test]
    fn single_sentence_paragraph_equals_its_fragment() {
        let ts = one("Hardware\tChange humidity to [B-HUMIDITY]\n");
        let p = generate_paragraph(&ts, 77, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let _k: usize = rng.gen_range(1..=1);
        let _c = *ts.nonempty_categories().choose(&mut rng).unwrap();
        let t = ts.category(Category::Hardware).choose(&mut rng).unwrap();
        let f = instantiate_template(t, &mut rng);
        assert_eq!(p.tokens, f.tokens);
        assert_eq!(p.labels, f.labels);
        assert_eq!(p.bindings, f.bindings);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let ts = TemplateSet::default_pack();
        let a = generate_paragraph(&ts, 1234, 7, 17).unwrap();
        let b = generate_paragraph(&ts, 1234, 7, 17).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn generated_paragraphs_are_consistent() {
        let ts = TemplateSet::default_pack();
        for seed in 0..300 {
            let p = generate_paragraph(&ts, seed, 7, 17).unwrap();
            assert_eq!(p.tokens.len(), p.labels.len());
            assert!(is_bio_consistent(&p.labels));
            assert_eq!(label_runs(&p.labels).len(), p.bindings.len(), "seed {seed}");
            assert_eq!(tokenize(&p.render()).tokens, p.tokens, "seed {seed}");
        }
    }

    #[test]
    fn corpus_split_sizes_follow_the_fraction() {
        let ts = TemplateSet::default_pack();
        let c = generate_corpus(&ts, 50, 3, 0.8).unwrap();
        assert_eq!((c.train.len(), c.test.len()), (40, 10));
        let c = generate_corpus(&ts, 5000, 3, 0.8).unwrap();
        assert_eq!((c.train.len(), c.test.len()), (4000, 1000));
    }

    #[test]
    fn template_split_is_disjoint_and_eighty_percent_per_category() {
        let ts = TemplateSet::default_pack();
        let c = generate_corpus(&ts, 10, 11, 0.8).unwrap();
        for cat in Category::ALL {
            let prefix = cat.name().to_ascii_lowercase();
            let tr = c.train_templates.iter().filter(|t| t.starts_with(&prefix)).count();
            let te = c.test_templates.iter().filter(|t| t.starts_with(&prefix)).count();
            let expected = (ts.category(cat).len() as f64 * 0.8).round() as usize;
            assert!(tr.abs_diff(expected) <= 1);
            assert_eq!(tr + te, ts.category(cat).len());
        }
        assert!(c.train_templates.iter().all(|t| !c.test_templates.contains(t)));
        for p in &c.test {
            assert!(p.templates.iter().all(|t| c.test_templates.contains(t)));
        }
        for p in &c.train {
            assert!(p.templates.iter().all(|t| c.train_templates.contains(t)));
        }
    }

    #[test]
    fn sparse_category_is_a_configuration_error() {
        let ts = one("Hardware\tChange humidity to [B-HUMIDITY]\nHardware\tSet humidity to [B-HUMIDITY]\n");
        assert!(matches!(generate_corpus(&ts, 10, 0, 0.8), Err(Error::Config(_))));
    }

    #[test]
    fn bad_sentence_range_is_rejected() {
        let ts = TemplateSet::default_pack();
        assert!(generate_paragraph(&ts, 0, 0, 3).is_err());
        assert!(generate_paragraph(&ts, 0, 4, 3).is_err());
        assert!(generate_paragraph(&TemplateSet::default(), 0, 1, 1).is_err());
    }
}
