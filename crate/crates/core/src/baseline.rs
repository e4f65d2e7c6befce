//! A toy predictor that emits the prediction wire format without a model.
//!
//! Text is split on whitespace and punctuation characters become tokens of
//! their own. Words found in the lexicon get `B`, the last token gets `M`
//! when the text lacks a sentence terminator, everything else `O`. All
//! probabilities are one-hot.

use crate::annotation::TokenLabel;
use crate::decode::{ClassProbs, PredictionDoc, TokenPrediction};
use crate::formats::CorpusRecord;
use crate::normalize::NormRules;
use crate::rules::{detect_missing_end_punct, is_punctuation, Lexicon};

#[derive(Debug, Clone, Default)]
pub struct BaselinePredictor {
    pub lexicon: Lexicon,
    pub emit_missing: bool,
}

/// Whitespace tokens with each punctuation character split off.
pub fn pretokenize(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() || is_punctuation(c) {
            if let Some(s) = start.take() {
                out.push((s, i));
            }
            if is_punctuation(c) {
                out.push((i, i + 1));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, text.chars().count()));
    }
    out
}

impl BaselinePredictor {
    pub fn new(lexicon: Lexicon, emit_missing: bool) -> Self {
        BaselinePredictor {
            lexicon,
            emit_missing,
        }
    }

    pub fn predict(&self, id: &str, text: &str) -> PredictionDoc {
        let chars: Vec<char> = text.chars().collect();
        let offsets = pretokenize(text);
        let mut labels: Vec<TokenLabel> = offsets
            .iter()
            .map(|&(s, e)| {
                let word: String = chars[s..e].iter().collect();
                if self.lexicon.contains(&word) {
                    TokenLabel::B
                } else {
                    TokenLabel::O
                }
            })
            .collect();
        if self.emit_missing && !detect_missing_end_punct(text).is_empty() {
            if let Some(last) = labels.last_mut().filter(|l| **l == TokenLabel::O) {
                *last = TokenLabel::M;
            }
        }
        PredictionDoc {
            id: id.to_string(),
            text: text.to_string(),
            tokens: offsets
                .into_iter()
                .zip(labels)
                .map(|((start, end), l)| TokenPrediction {
                    start,
                    end,
                    probs: ClassProbs::one_hot(l),
                })
                .collect(),
        }
    }

    /// Normalizes each record and predicts on the normalized text.
    pub fn predict_corpus(&self, records: &[CorpusRecord], rules: &NormRules) -> Vec<PredictionDoc> {
        records
            .iter()
            .map(|r| self.predict(&r.id, &rules.normalize(&r.text)))
            .collect()
    }
}
