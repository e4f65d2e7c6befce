//! Token class probabilities to error spans.

use serde::{Deserialize, Serialize};

use crate::annotation::TokenLabel;
use crate::error::{Error, Result};
use crate::spans::{ErrorSpan, SpanSet};

/// Allowed deviation of a probability vector's sum from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-5;

/// The confidence threshold used when none is configured.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    #[serde(rename = "O")]
    pub o: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

impl ClassProbs {
    pub const fn new(o: f64, b: f64, i: f64, m: f64) -> Self {
        ClassProbs { o, b, i, m }
    }

    /// Probability 1 on `label`.
    pub fn one_hot(label: TokenLabel) -> Self {
        let mut p = ClassProbs::new(0.0, 0.0, 0.0, 0.0);
        *p.get_mut(label) = 1.0;
        p
    }

    pub fn get(&self, label: TokenLabel) -> f64 {
        match label {
            TokenLabel::O => self.o,
            TokenLabel::B => self.b,
            TokenLabel::I => self.i,
            TokenLabel::M => self.m,
        }
    }

    fn get_mut(&mut self, label: TokenLabel) -> &mut f64 {
        match label {
            TokenLabel::O => &mut self.o,
            TokenLabel::B => &mut self.b,
            TokenLabel::I => &mut self.i,
            TokenLabel::M => &mut self.m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.o, self.b, self.i, self.m];
        if vals.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!("probabilities must be finite and non-negative: {vals:?}")));
        }
        let sum: f64 = vals.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Most probable class; ties go to the earlier of O, B, I, M.
    pub fn argmax(&self) -> TokenLabel {
        let mut best = TokenLabel::O;
        for label in TokenLabel::ALL {
            if self.get(label) > self.get(best) {
                best = label;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub start: usize,
    pub end: usize,
    pub probs: ClassProbs,
}

/// One line of the prediction JSONL wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDoc {
    pub id: String,
    pub text: String,
    pub tokens: Vec<TokenPrediction>,
}

impl PredictionDoc {
    pub fn text_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks offsets and probability vectors.
    pub fn validate(&self) -> Result<()> {
        let len = self.text_len();
        let mut prev_end = 0;
        for (k, t) in self.tokens.iter().enumerate() {
            if t.start >= t.end || t.end > len {
                return Err(Error::invalid(format!(
                    "doc `{}` token {k}: offsets ({}, {}) invalid for a text of {len} characters",
                    self.id, t.start, t.end
                )));
            }
            if k > 0 && t.start < prev_end {
                return Err(Error::invalid(format!(
                    "doc `{}` token {k}: tokens must be sorted and non-overlapping",
                    self.id
                )));
            }
            prev_end = t.end;
            t.probs
                .validate()
                .map_err(|e| Error::invalid(format!("doc `{}` token {k}: {e}", self.id)))?;
        }
        Ok(())
    }
}

/// What to do with an `I` token that does not follow `B` or `I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BareInside {
    /// Start a new span at it.
    #[default]
    StartSpan,
    /// Treat it as `O`.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub threshold: f64,
    pub bare_inside: BareInside,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            threshold: DEFAULT_THRESHOLD,
            bare_inside: BareInside::StartSpan,
        }
    }
}

impl DecodeOptions {
    pub fn with_threshold(threshold: f64) -> Self {
        DecodeOptions {
            threshold,
            ..Default::default()
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(format!("threshold {t} outside [0, 1]")))
    }
}

/// Argmax label, demoted to `O` when an error class wins with probability below `threshold`.
pub fn apply_threshold(probs: &ClassProbs, threshold: f64) -> Result<TokenLabel> {
    probs.validate()?;
    check_threshold(threshold)?;
    let label = probs.argmax();
    if label != TokenLabel::O && probs.get(label) < threshold {
        Ok(TokenLabel::O)
    } else {
        Ok(label)
    }
}

/// Thresholded label for every token of `doc`.
pub fn token_labels(doc: &PredictionDoc, threshold: f64) -> Result<Vec<TokenLabel>> {
    doc.tokens
        .iter()
        .map(|t| apply_threshold(&t.probs, threshold))
        .collect()
}

/// Turns a document's token predictions into spans over `doc.text`.
///
/// Each maximal run of `B`/`I` tokens becomes one span from the first token's
/// start to the last token's end, gaps between tokens included. A `B` always
/// opens a new run. Each `M` token adds an insertion point at its end.
pub fn decode_spans(doc: &PredictionDoc, opts: &DecodeOptions) -> Result<SpanSet> {
    doc.validate()?;
    let labels = token_labels(doc, opts.threshold)?;

    let mut out = Vec::new();
    let mut run: Option<ErrorSpan> = None;
    for (tok, label) in doc.tokens.iter().zip(labels) {
        match label {
            TokenLabel::B => {
                out.extend(run.take());
                run = Some(ErrorSpan::new(tok.start, tok.end));
            }
            TokenLabel::I => match (&mut run, opts.bare_inside) {
                (Some(r), _) => r.end = tok.end,
                (None, BareInside::StartSpan) => run = Some(ErrorSpan::new(tok.start, tok.end)),
                (None, BareInside::Drop) => {}
            },
            TokenLabel::M => {
                out.extend(run.take());
                out.push(ErrorSpan::missing(tok.end));
            }
            TokenLabel::O => out.extend(run.take()),
        }
    }
    out.extend(run);
    SpanSet::normalize(out, doc.text_len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{label_tokens, TokenOffsets};
    use proptest::prelude::*;

    const P: ClassProbs = ClassProbs::new(0.25, 0.40, 0.20, 0.15);

    fn doc(text: &str, toks: &[(usize, usize, TokenLabel)]) -> PredictionDoc {
        PredictionDoc {
            id: "d".into(),
            text: text.into(),
            tokens: toks
                .iter()
                .map(|&(start, end, l)| TokenPrediction {
                    start,
                    end,
                    probs: ClassProbs::one_hot(l),
                })
                .collect(),
        }
    }

    fn pairs(s: &SpanSet) -> Vec<(usize, usize)> {
        s.iter().map(|s| (s.start, s.end)).collect()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(apply_threshold(&P, 0.5).unwrap(), TokenLabel::O);
        assert_eq!(apply_threshold(&P, 0.3).unwrap(), TokenLabel::B);
        assert_eq!(apply_threshold(&P, 0.0).unwrap(), TokenLabel::B);
        // Exactly at the threshold is kept.
        assert_eq!(apply_threshold(&P, 0.4).unwrap(), TokenLabel::B);
    }

    #[test]
    fn threshold_ties_prefer_earlier_class() {
        let p = ClassProbs::new(0.3, 0.3, 0.2, 0.2);
        assert_eq!(apply_threshold(&p, 0.0).unwrap(), TokenLabel::O);
        let p = ClassProbs::new(0.2, 0.2, 0.3, 0.3);
        assert_eq!(apply_threshold(&p, 0.0).unwrap(), TokenLabel::I);
    }

    #[test]
    fn threshold_rejects_bad_input() {
        assert!(apply_threshold(&ClassProbs::new(0.5, 0.4, 0.0, 0.0), 0.5).is_err());
        assert!(apply_threshold(&ClassProbs::new(1.1, -0.1, 0.0, 0.0), 0.5).is_err());
        assert!(apply_threshold(&ClassProbs::new(f64::NAN, 0.0, 0.0, 0.0), 0.5).is_err());
        assert!(apply_threshold(&P, 1.5).is_err());
        assert!(apply_threshold(&ClassProbs::new(0.5, 0.5 + 5e-6, 0.0, 0.0), 0.5).is_ok());
    }

    #[test]
    fn decode_examples() {
        use TokenLabel::*;
        let d = doc("ab cd ef", &[(0, 2, O), (3, 5, B), (6, 8, I)]);
        assert_eq!(pairs(&decode_spans(&d, &DecodeOptions::with_threshold(0.0)).unwrap()), [(3, 8)]);
        let d = doc("abc", &[(0, 3, M)]);
        assert_eq!(pairs(&decode_spans(&d, &DecodeOptions::with_threshold(0.0)).unwrap()), [(3, 3)]);
        let d = doc("ab cd", &[(0, 2, O), (3, 5, O)]);
        assert!(decode_spans(&d, &DecodeOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn decode_run_boundaries() {
        use TokenLabel::*;
        let opts = DecodeOptions::with_threshold(0.0);
        // B restarts a run; the two spans are separated by whitespace so they stay apart.
        let d = doc("ab cd ef", &[(0, 2, B), (3, 5, B), (6, 8, I)]);
        assert_eq!(pairs(&decode_spans(&d, &opts).unwrap()), [(0, 2), (3, 8)]);
        // M breaks a run.
        let d = doc("ab cd ef", &[(0, 2, B), (3, 5, M), (6, 8, I)]);
        assert_eq!(pairs(&decode_spans(&d, &opts).unwrap()), [(0, 2), (5, 5), (6, 8)]);
        // Subword tokens with no gap merge into one region.
        let d = doc("abcd", &[(0, 2, B), (2, 4, B)]);
        assert_eq!(pairs(&decode_spans(&d, &opts).unwrap()), [(0, 4)]);
    }

    #[test]
    fn decode_bare_inside_modes() {
        use TokenLabel::*;
        let d = doc("ab cd ef", &[(0, 2, O), (3, 5, I), (6, 8, I)]);
        let lenient = DecodeOptions::with_threshold(0.0);
        assert_eq!(pairs(&decode_spans(&d, &lenient).unwrap()), [(3, 8)]);
        let strict = DecodeOptions {
            bare_inside: BareInside::Drop,
            ..lenient
        };
        assert!(decode_spans(&d, &strict).unwrap().is_empty());
    }

    #[test]
    fn decode_validates_document() {
        use TokenLabel::*;
        assert!(decode_spans(&doc("ab", &[(0, 3, O)]), &DecodeOptions::default()).is_err());
        assert!(decode_spans(&doc("abcd", &[(2, 4, O), (0, 2, O)]), &DecodeOptions::default()).is_err());
        assert!(decode_spans(&doc("abcd", &[(1, 1, O)]), &DecodeOptions::default()).is_err());
    }

    #[test]
    fn wire_format() {
        let d = doc("ab", &[(0, 2, TokenLabel::B)]);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(
            json,
            r#"{"id":"d","text":"ab","tokens":[{"start":0,"end":2,"probs":{"O":0.0,"B":1.0,"I":0.0,"M":0.0}}]}"#
        );
        let back: PredictionDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }

    fn random_doc() -> impl Strategy<Value = PredictionDoc> {
        prop::collection::vec(((1usize..4, 0usize..3), [0.0f64..1.0, 0.0..1.0, 0.0..1.0, 0.0..1.0]), 0..12)
            .prop_map(|toks| {
                let mut pos = 0;
                let mut tokens = Vec::new();
                for ((len, gap), w) in toks {
                    let start = pos + gap;
                    let sum: f64 = w.iter().sum::<f64>() + 1e-9;
                    tokens.push(TokenPrediction {
                        start,
                        end: start + len,
                        probs: ClassProbs::new(w[0] / sum, w[1] / sum, w[2] / sum, 1.0 - (w[0] + w[1] + w[2]) / sum),
                    });
                    pos = start + len;
                }
                PredictionDoc { id: "r".into(), text: "x".repeat(pos + 1), tokens }
            })
    }

    proptest! {
        #[test]
        fn higher_threshold_never_adds_coverage(d in random_doc(), t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let t2 = (t1 + dt).min(1.0);
            for bare in [BareInside::StartSpan, BareInside::Drop] {
                let lo = decode_spans(&d, &DecodeOptions { threshold: t1, bare_inside: bare }).unwrap().coverage();
                let hi = decode_spans(&d, &DecodeOptions { threshold: t2, bare_inside: bare }).unwrap().coverage();
                for (h, l) in hi.iter().zip(&lo) {
                    prop_assert!(!h || *l);
                }
            }
        }

        #[test]
        fn relabeling_decoded_spans_recovers_labels(d in random_doc(), t in 0.0f64..1.0) {
            let labels = token_labels(&d, t).unwrap();
            let spans = decode_spans(&d, &DecodeOptions::with_threshold(t)).unwrap();
            prop_assert!(spans.iter().all(|s| s.end <= d.text_len()));
            let offsets = TokenOffsets::new(d.tokens.iter().map(|t| (t.start, t.end)).collect(), d.text_len()).unwrap();
            let relabeled = label_tokens(&spans, &offsets).unwrap();
            let mut prev = TokenLabel::O;
            for (k, (&want, &got)) in labels.iter().zip(&relabeled).enumerate() {
                let expected = match want {
                    // A bare I opens a span and comes back as B.
                    TokenLabel::I if !prev.is_error_region() => TokenLabel::B,
                    // Touching B/I runs merge into one region.
                    TokenLabel::B if prev.is_error_region() && d.tokens[k - 1].end == d.tokens[k].start => TokenLabel::I,
                    other => other,
                };
                prop_assert_eq!(got, expected, "token {}", k);
                prev = want;
            }
        }
    }
}
