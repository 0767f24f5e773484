//! Token features for the sequence tagger.
//!
//! Numbers are abstracted to `<num>` (plus any unit suffix) in every
//! word-identity feature, so the vocabulary stays small and unseen values
//! are handled by shape alone.
//!
//! Feature names carry their weight-sharing scope as a prefix. `e:` features
//! (window words, affixes, shape, gazetteer hits, context bags, nearby time
//! units and axis words, whether "until" occurs in the sentence) speak about
//! the entity type only and are shared by `B-X` and `I-X`. `p:` features
//! speak about the prefix only: one weight for every `B-` label, one for
//! every `I-` label and one for `O`. Whether a span is the first of its
//! command is left to the decoder, which tracks it exactly; the `p:` side only
//! contributes the token kind and the "do the following" cue.
//!
//! A sentence start is any capitalised word (`Set`, `Take`, `I`, but not
//! `GISAXS`).

use crate::entity::{EntityType, DIRECTION_WORDS, PROCESS_WORDS, SAMPLE_WORDS, SCAN_WORDS};

use super::TokenSequence;

const BOUNDARY: &str = "<s>";
const BAG_WIDTH: usize = 6;
const CUE_WIDTH: usize = 4;

/// Per-sequence analysis shared by every position.
pub(crate) struct Context<'a> {
    tokens: &'a [String],
    norm: Vec<String>,
    gaz: Vec<Vec<EntityType>>,
    sentence_start: Vec<usize>,
    in_paren: Vec<bool>,
}

impl<'a> Context<'a> {
    pub(crate) fn new(tokens: &'a [String]) -> Context<'a> {
        let norm: Vec<String> = tokens.iter().map(|t| normalize(t)).collect();
        let gaz = gazetteer_hits(tokens);

        let mut sentence_start = Vec::with_capacity(tokens.len());
        let mut in_paren = Vec::with_capacity(tokens.len());
        let mut depth = 0i32;
        let mut start = 0;
        for (i, t) in tokens.iter().enumerate() {
            if i == 0 || starts_sentence(t) {
                start = i;
            }
            if t == "(" {
                depth += 1;
            }
            sentence_start.push(start);
            in_paren.push(depth > 0);
            if t == ")" {
                depth = (depth - 1).max(0);
            }
        }
        Context {
            tokens,
            norm,
            gaz,
            sentence_start,
            in_paren,
        }
    }

    pub(crate) fn sentence_starts(&self) -> Vec<bool> {
        self.sentence_start.iter().enumerate().map(|(i, &s)| s == i).collect()
    }

    /// One past the last token of the sentence containing `i`.
    fn sentence_end(&self, i: usize) -> usize {
        (i + 1..self.tokens.len())
            .find(|&j| self.sentence_start[j] == j)
            .unwrap_or(self.tokens.len())
    }

    fn word(&self, i: isize) -> &str {
        if i < 0 || i as usize >= self.norm.len() {
            BOUNDARY
        } else {
            &self.norm[i as usize]
        }
    }

    /// Emit the feature strings for position `i` into `out`.
    ///
    /// Each name starts with its scope: `e:` features score the entity
    /// (shared by `B-X` and `I-X`), `p:` features score the prefix (shared
    /// by every `B-*`, or every `I-*`), `j:` features score single labels.
    pub(crate) fn features(&self, i: usize, out: &mut Vec<String>) {
        out.clear();
        let tok = &self.tokens[i];
        let ii = i as isize;
        let w = self.word(ii);

        out.push("e:bias".into());
        out.push(format!("e:w={w}"));
        for d in 1..=3isize {
            out.push(format!("e:w-{d}={}", self.word(ii - d)));
            out.push(format!("e:w+{d}={}", self.word(ii + d)));
        }
        out.push(format!("e:w-2w-1={}|{}", self.word(ii - 2), self.word(ii - 1)));
        out.push(format!("e:w-1w={}|{w}", self.word(ii - 1)));
        out.push(format!("e:ww+1={w}|{}", self.word(ii + 1)));
        out.push(format!("e:w+1w+2={}|{}", self.word(ii + 1), self.word(ii + 2)));

        let shape = shape(tok);
        out.push(format!("e:sshape={}", short_shape(&shape)));
        out.push(format!("e:shape={shape}"));

        let number = number_parts(tok);
        match number {
            Some(unit) => {
                out.push("e:num".into());
                if !unit.is_empty() {
                    out.push("e:has-unit".into());
                    out.push(format!("e:unit={}", unit.to_lowercase()));
                }
            }
            None => {
                let lower = tok.to_lowercase();
                let chars: Vec<char> = lower.chars().collect();
                for n in 1..=3.min(chars.len()) {
                    let p: String = chars[..n].iter().collect();
                    let s: String = chars[chars.len() - n..].iter().collect();
                    out.push(format!("e:p{n}={p}"));
                    out.push(format!("e:s{n}={s}"));
                }
            }
        }
        let cap = tok.chars().next().is_some_and(char::is_uppercase);
        if cap {
            out.push("e:cap".into());
        }
        if tok.len() > 1 && tok.chars().all(|c| c.is_ascii_uppercase()) {
            out.push("e:allcaps".into());
        }

        for e in &self.gaz[i] {
            out.push(format!("e:gaz={}", e.name()));
        }
        if i > 0 {
            for e in &self.gaz[i - 1] {
                out.push(format!("e:gaz-1={}", e.name()));
            }
        }
        if let Some(next) = self.gaz.get(i + 1) {
            for e in next {
                out.push(format!("e:gaz+1={}", e.name()));
            }
        }
        if self.in_paren[i] {
            out.push("e:paren".into());
        }

        let start = self.sentence_start[i];
        let first = &self.norm[start];
        out.push(format!("e:first={first}"));
        for j in i.saturating_sub(BAG_WIDTH)..i {
            if number_parts(&self.tokens[j]).is_none() {
                out.push(format!("e:bagL={}", self.norm[j]));
            }
        }
        for j in i + 1..(i + 1 + BAG_WIDTH).min(self.tokens.len()) {
            if number_parts(&self.tokens[j]).is_none() {
                out.push(format!("e:bagR={}", self.norm[j]));
            }
        }
        for j in start..i.saturating_sub(BAG_WIDTH) {
            if number_parts(&self.tokens[j]).is_none() {
                out.push(format!("e:sent={}", self.norm[j]));
            }
        }

        let lo = i.saturating_sub(CUE_WIDTH);
        let hi = (i + 1 + CUE_WIDTH).min(self.tokens.len());
        if let Some(u) = (i + 1..hi).find_map(|j| time_unit(&self.norm[j])) {
            out.push(format!("e:unitR={u}"));
        }
        if let Some(u) = (lo..i).rev().find_map(|j| time_unit(&self.norm[j])) {
            out.push(format!("e:unitL={u}"));
        }
        if let Some(axis) = (start..i).rev().map(|j| self.norm[j].as_str()).find(|w| *w == "x" || *w == "y") {
            out.push(format!("e:axis={axis}"));
            out.push(format!("e:axis|w-1={axis}|{}", self.word(ii - 1)));
        }
        let end = self.sentence_end(i);
        let before = self.norm[start..i].iter().any(|w| w == "until");
        let after = self.norm[i + 1..end].iter().any(|w| w == "until");
        out.push(match (before, after) {
            (true, _) => "e:until=before".into(),
            (false, true) => "e:until=after".into(),
            (false, false) => "e:until=none".into(),
        });

        let kind = if number.is_some() {
            "num"
        } else if !self.gaz[i].is_empty() {
            "gaz"
        } else if self.in_paren[i] {
            "pt"
        } else {
            "word"
        };
        out.push("p:bias".into());
        out.push(format!("p:kind={kind}"));
        if (lo..i).any(|j| self.norm[j] == "following") {
            out.push(format!("p:following|{kind}"));
        }
    }
}

/// Feature strings for token `i` of `seq`.
///
/// # Panics
/// If `i` is out of range.
pub fn featurize(seq: &TokenSequence, i: usize) -> Vec<String> {
    assert!(i < seq.len(), "token index {i} out of range for {} tokens", seq.len());
    let ctx = Context::new(&seq.tokens);
    let mut out = Vec::new();
    ctx.features(i, &mut out);
    out
}

fn time_unit(w: &str) -> Option<&'static str> {
    match w {
        "s" | "sec" | "secs" | "second" | "seconds" => Some("sec"),
        "min" | "mins" | "minute" | "minutes" => Some("min"),
        _ => None,
    }
}

fn starts_sentence(t: &str) -> bool {
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some('I'), None) => true,
        (Some(a), Some(b)) => a.is_uppercase() && b.is_lowercase(),
        _ => false,
    }
}

/// For number-like tokens returns the unit suffix (possibly empty).
pub(crate) fn number_parts(t: &str) -> Option<&str> {
    let end = t
        .char_indices()
        .find(|(i, c)| !(c.is_ascii_digit() || *c == '.' || (*i == 0 && (*c == '-' || *c == '+'))))
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(end);
    if !num.chars().any(|c| c.is_ascii_digit()) || num.parse::<f64>().is_err() {
        return None;
    }
    if unit.chars().all(|c| c.is_alphabetic() || c == '%') {
        Some(unit)
    } else {
        None
    }
}

fn normalize(t: &str) -> String {
    match number_parts(t) {
        Some(unit) => format!("<num>{}", unit.to_lowercase()),
        None => t.to_lowercase(),
    }
}

/// Digits become `9`, uppercase `X`, lowercase `x`; other characters are kept.
pub fn shape(t: &str) -> String {
    t.chars()
        .map(|c| {
            if c.is_ascii_digit() {
                '9'
            } else if c.is_uppercase() {
                'X'
            } else if c.is_alphabetic() {
                'x'
            } else {
                c
            }
        })
        .collect()
}

fn short_shape(shape: &str) -> String {
    let mut out = String::new();
    for c in shape.chars() {
        if !out.ends_with(c) {
            out.push(c);
        }
    }
    out
}

fn gazetteer_hits(tokens: &[String]) -> Vec<Vec<EntityType>> {
    let lists: [(EntityType, &[&str]); 4] = [
        (EntityType::Scan, SCAN_WORDS),
        (EntityType::Process, PROCESS_WORDS),
        (EntityType::Sample, SAMPLE_WORDS),
        (EntityType::Direction, DIRECTION_WORDS),
    ];
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut hits = vec![Vec::new(); tokens.len()];
    for (entity, words) in lists {
        for phrase in words {
            let parts: Vec<String> = phrase.split(' ').map(str::to_lowercase).collect();
            if parts.len() > tokens.len() {
                continue;
            }
            for start in 0..=tokens.len() - parts.len() {
                if lower[start..start + parts.len()] == parts[..] {
                    for h in &mut hits[start..start + parts.len()] {
                        if !h.contains(&entity) {
                            h.push(entity);
                        }
                    }
                }
            }
        }
    }
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::tokenize;

    fn feats(text: &str, i: usize) -> Vec<String> {
        featurize(&tokenize(text), i)
    }

    #[test]
    fn process_word_hits_gazetteer() {
        let f = feats("Using GISAXS now", 1);
        assert!(f.contains(&"e:gaz=PROCESS".to_string()));
        assert!(f.contains(&"e:allcaps".to_string()));
    }

    #[test]
    fn numbers_have_shape_and_flag() {
        let f = feats("to 200 degrees", 1);
        assert!(f.contains(&"e:num".to_string()));
        assert!(f.contains(&"e:shape=999".to_string()));
        assert!(f.contains(&"e:w=<num>".to_string()));
    }

    #[test]
    fn unit_suffix_is_detected() {
        let f = feats("by 0.2mm", 1);
        assert!(f.contains(&"e:has-unit".to_string()));
        assert!(f.contains(&"e:unit=mm".to_string()));
        assert_eq!(number_parts("-3.5"), Some(""));
        assert_eq!(number_parts("degrees"), None);
        assert_eq!(number_parts("3x4"), None);
    }

    #[test]
    fn first_token_sees_boundary() {
        let f = feats("Measure this", 0);
        assert!(f.contains(&"e:w-1=<s>".to_string()));
        assert!(f.contains(&"e:w-2=<s>".to_string()));
        assert!(f.contains(&"e:gaz=SCAN".to_string()));
    }

    #[test]
    fn multiword_gazetteer_entries_cover_each_token() {
        let seq = tokenize("take a look at it");
        assert!(featurize(&seq, 2).contains(&"e:gaz=SCAN".to_string()));
        assert!(featurize(&seq, 3).contains(&"e:gaz=SCAN".to_string()));
        assert!(!featurize(&seq, 4).contains(&"e:gaz=SCAN".to_string()));
    }

    #[test]
    fn sentence_starts_follow_capitalisation() {
        let seq = tokenize("Set it to 5 and GISAXS Move by 7");
        let ctx = Context::new(&seq.tokens);
        let starts: Vec<usize> = (0..seq.len()).filter(|&i| ctx.sentence_starts()[i]).collect();
        assert_eq!(starts, vec![0, 6]);
    }

    #[test]
    fn until_cue_is_located_in_the_sentence() {
        let seq = tokenize("Heat until it reaches 300 degrees Set humidity to 40");
        assert!(featurize(&seq, 4).contains(&"e:until=before".to_string()));
        assert!(featurize(&seq, 9).contains(&"e:until=none".to_string()));
        assert!(featurize(&seq, 0).contains(&"e:until=after".to_string()));
    }

    #[test]
    fn axis_and_time_unit_cues() {
        let seq = tokenize("Drive x to the absolute position 4 mm every 3 minutes");
        let f = featurize(&seq, 6);
        assert!(f.contains(&"e:axis=x".to_string()));
        assert!(featurize(&seq, 9).contains(&"e:unitR=min".to_string()));
    }

    #[test]
    fn following_cue_reaches_the_prefix_scope() {
        let f = feats("and do the following every 20 seconds", 5);
        assert!(f.contains(&"p:following|num".to_string()));
        assert!(f.iter().filter(|x| x.starts_with("p:")).count() <= 3);
    }

    #[test]
    #[should_panic]
    fn out_of_range_index_panics() {
        featurize(&tokenize("a b"), 2);
    }
}
