use std::fmt;

use serde::{Deserialize, Serialize};

use super::{TaggerModel, TokenSequence};
use crate::corpus::Paragraph;
use crate::entity::Label;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ratio {
    pub correct: usize,
    pub total: usize,
}

impl Ratio {
    /// `correct / total`; an empty denominator counts as fully correct.
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ({}/{})", self.fraction(), self.correct, self.total)
    }
}

/// Token accuracy over all tokens, token accuracy over gold `B-`/`I-`
/// tokens, and the share of paragraphs with no token error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub token_all: Ratio,
    pub token_bi: Ratio,
    pub paragraph: Ratio,
}

impl Metrics {
    fn add(&mut self, gold: &[Label], pred: &[Label]) {
        let mut clean = gold.len() == pred.len();
        for (i, g) in gold.iter().enumerate() {
            let ok = pred.get(i) == Some(g);
            clean &= ok;
            self.token_all.total += 1;
            self.token_all.correct += ok as usize;
            if !g.is_outside() {
                self.token_bi.total += 1;
                self.token_bi.correct += ok as usize;
            }
        }
        self.paragraph.total += 1;
        self.paragraph.correct += clean as usize;
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "paragraph {}", self.paragraph)?;
        writeln!(f, "token_all {}", self.token_all)?;
        write!(f, "token_bi {}", self.token_bi)
    }
}

pub fn evaluate(model: &TaggerModel, paragraphs: &[Paragraph]) -> Result<Metrics> {
    let preds: Vec<Vec<Label>> = paragraphs
        .iter()
        .map(|p| model.predict(&TokenSequence::from_tokens(&p.tokens)))
        .collect();
    let golds: Vec<&[Label]> = paragraphs.iter().map(|p| p.labels.as_slice()).collect();
    evaluate_predictions(&golds, &preds)
}

pub fn evaluate_predictions<G, P>(gold: &[G], pred: &[P]) -> Result<Metrics>
where
    G: AsRef<[Label]>,
    P: AsRef<[Label]>,
{
    if gold.is_empty() {
        return Err(Error::Undefined("metrics are undefined for an empty set".into()));
    }
    if gold.len() != pred.len() {
        return Err(Error::Undefined(format!(
            "{} gold sequences but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let mut m = Metrics::default();
    for (g, p) in gold.iter().zip(pred) {
        m.add(g.as_ref(), p.as_ref());
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityType;

    #[test]
    fn perfect_predictions_score_one() {
        let g = vec![vec![Label::O, Label::B(EntityType::Scan)], vec![Label::O]];
        let m = evaluate_predictions(&g, &g).unwrap();
        assert_eq!(m.token_all.fraction(), 1.0);
        assert_eq!(m.token_bi.fraction(), 1.0);
        assert_eq!(m.paragraph.fraction(), 1.0);
    }

    #[test]
    fn all_outside_prediction_counts() {
        // 100 tokens, 25 of them non-O
        let mut gold = vec![Label::O; 100];
        for l in gold.iter_mut().step_by(4) {
            *l = Label::I(EntityType::Etime);
        }
        let pred = vec![Label::O; 100];
        let m = evaluate_predictions(&[gold], &[pred]).unwrap();
        assert_eq!(m.token_all, Ratio { correct: 75, total: 100 });
        assert_eq!(m.token_bi, Ratio { correct: 0, total: 25 });
        assert_eq!(m.paragraph, Ratio { correct: 0, total: 1 });
        assert_eq!(m.token_all.fraction(), 0.75);
    }

    #[test]
    fn empty_input_is_an_error() {
        let empty: Vec<Vec<Label>> = vec![];
        assert!(evaluate_predictions(&empty, &empty).is_err());
    }

    #[test]
    fn display_mirrors_fraction_with_counts() {
        let r = Ratio { correct: 1511, total: 2000 };
        assert_eq!(r.to_string(), "0.755 (1511/2000)");
    }
}
