//! `$`-annotated gold text, per-token OBIM labels and the document proxy label.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::spans::{ErrorSpan, SpanSet, MARKER};

/// Per-token class: no error, begin error, inside error, missing after.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenLabel {
    O,
    B,
    I,
    M,
}

impl TokenLabel {
    /// All labels in tie-break order.
    pub const ALL: [TokenLabel; 4] = [TokenLabel::O, TokenLabel::B, TokenLabel::I, TokenLabel::M];

    pub fn is_error_region(&self) -> bool {
        matches!(self, TokenLabel::B | TokenLabel::I)
    }

    fn rank(&self) -> u8 {
        match self {
            TokenLabel::O => 0,
            TokenLabel::M => 1,
            TokenLabel::I => 2,
            TokenLabel::B => 3,
        }
    }
}

impl fmt::Display for TokenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenLabel::O => "O",
            TokenLabel::B => "B",
            TokenLabel::I => "I",
            TokenLabel::M => "M",
        };
        f.write_str(s)
    }
}

impl FromStr for TokenLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" => Ok(TokenLabel::O),
            "B" => Ok(TokenLabel::B),
            "I" => Ok(TokenLabel::I),
            "M" => Ok(TokenLabel::M),
            other => Err(Error::invalid(format!("unknown token label `{other}`"))),
        }
    }
}

/// Sorted, non-overlapping token character ranges over a text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenOffsets {
    offsets: Vec<(usize, usize)>,
    text_len: usize,
}

impl TokenOffsets {
    pub fn new(offsets: Vec<(usize, usize)>, text_len: usize) -> Result<Self> {
        let mut prev_end = 0;
        for (i, &(start, end)) in offsets.iter().enumerate() {
            if start >= end || end > text_len {
                return Err(Error::invalid(format!(
                    "token {i} has offsets ({start}, {end}) outside a text of {text_len} characters"
                )));
            }
            if i > 0 && start < prev_end {
                return Err(Error::invalid(format!(
                    "token {i} at ({start}, {end}) overlaps or precedes the previous token"
                )));
            }
            prev_end = end;
        }
        Ok(TokenOffsets { offsets, text_len })
    }

    pub fn as_slice(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }
}

/// Maximal runs of non-whitespace characters.
pub fn whitespace_tokens(text: &str) -> TokenOffsets {
    let mut offsets = Vec::new();
    let mut start = None;
    let mut len = 0;
    for (i, c) in text.chars().enumerate() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                offsets.push((s, i));
                start = None;
            }
            _ => {}
        }
        len = i + 1;
    }
    if let Some(s) = start {
        offsets.push((s, len));
    }
    TokenOffsets {
        offsets,
        text_len: len,
    }
}

/// Splits an annotated string into its clean text and the spans it marks.
///
/// `$…$` marks an error region and `$$` an insertion point. A region directly
/// followed by another region (`$a$$b$`) is rejected as nested, since it has
/// no canonical reading.
pub fn parse_annotated(annotated: &str) -> Result<(String, SpanSet), ParseError> {
    let chars: Vec<char> = annotated.chars().collect();
    let mut clean = String::with_capacity(annotated.len());
    let mut pos = 0;
    // (span, offset of its opening marker)
    let mut found: Vec<(ErrorSpan, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c != MARKER {
            clean.push(c);
            pos += 1;
            i += 1;
            continue;
        }
        match open.take() {
            Some((offset, start)) => {
                found.push((ErrorSpan::new(start, pos), offset));
                i += 1;
            }
            None if chars.get(i + 1) == Some(&MARKER) => {
                found.push((ErrorSpan::missing(pos), i));
                i += 2;
            }
            None => {
                open = Some((i, pos));
                i += 1;
            }
        }
    }
    if let Some((offset, _)) = open {
        return Err(ParseError::Unbalanced { offset });
    }

    let mut last_region_end = None;
    let mut last_point = None;
    for &(span, offset) in &found {
        if span.is_missing() {
            if last_point == Some(span.start) {
                return Err(ParseError::DuplicateMissing { offset });
            }
            last_point = Some(span.start);
        } else {
            if last_region_end == Some(span.start) {
                return Err(ParseError::Nested { offset });
            }
            last_region_end = Some(span.end);
        }
    }

    let spans = SpanSet::new(found.into_iter().map(|(s, _)| s), pos)
        .expect("parsed spans are ordered and disjoint");
    Ok((clean, spans))
}

/// Assigns one OBIM label per token.
///
/// The first token overlapping an error region gets `B`, later overlapping
/// tokens get `I`. An insertion point at `q` puts `M` on the last token that
/// starts before `q`; `B`/`I` win over `M`.
pub fn label_tokens(spans: &SpanSet, tokens: &TokenOffsets) -> Result<Vec<TokenLabel>> {
    if spans.text_len() != tokens.text_len() {
        return Err(Error::TextLenMismatch {
            expected: spans.text_len(),
            found: tokens.text_len(),
        });
    }
    let toks = tokens.as_slice();
    let mut labels = vec![TokenLabel::O; toks.len()];
    let mut set = |idx: usize, label: TokenLabel| {
        if label.rank() > labels[idx].rank() {
            labels[idx] = label;
        }
    };

    for span in spans {
        if span.is_missing() {
            let q = span.start;
            let carrier = toks.partition_point(|&(start, _)| start < q);
            if carrier == 0 {
                return Err(Error::NoCarrierToken { position: q });
            }
            set(carrier - 1, TokenLabel::M);
        } else {
            let first = toks.partition_point(|&(_, end)| end <= span.start);
            for (k, &(start, _)) in toks.iter().enumerate().skip(first) {
                if start >= span.end {
                    break;
                }
                set(k, if k == first { TokenLabel::B } else { TokenLabel::I });
            }
        }
    }
    Ok(labels)
}

/// 1 when error regions cover strictly more than 30% of the text.
pub fn doc_proxy_label(text_len: usize, spans: &SpanSet) -> Result<u8> {
    if text_len == 0 {
        return Err(Error::invalid("proxy label of an empty text"));
    }
    // covered / text_len > 0.3, in integers
    Ok(u8::from(spans.covered_chars() * 10 > text_len * 3))
}

/// Where a `$$` marker that touches whitespace is attached when a corpus is loaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingAttach {
    /// Keep the position exactly as written.
    #[default]
    AsWritten,
    /// Move left across adjacent whitespace.
    BeforeWhitespace,
    /// Move right across adjacent whitespace.
    AfterWhitespace,
}

impl FromStr for MissingAttach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-written" => Ok(MissingAttach::AsWritten),
            "before-space" => Ok(MissingAttach::BeforeWhitespace),
            "after-space" => Ok(MissingAttach::AfterWhitespace),
            other => Err(Error::invalid(format!(
                "unknown missing-attach policy `{other}` (expected as-written|before-space|after-space)"
            ))),
        }
    }
}

pub fn attach_missing(text: &str, spans: &SpanSet, policy: MissingAttach) -> Result<SpanSet> {
    if policy == MissingAttach::AsWritten {
        return Ok(spans.clone());
    }
    let chars: Vec<char> = text.chars().collect();
    let moved = spans.iter().map(|s| {
        if !s.is_missing() {
            return *s;
        }
        let mut q = s.start;
        match policy {
            MissingAttach::BeforeWhitespace => {
                while q > 0 && chars[q - 1].is_whitespace() {
                    q -= 1;
                }
            }
            MissingAttach::AfterWhitespace => {
                while q < chars.len() && chars[q].is_whitespace() {
                    q += 1;
                }
            }
            MissingAttach::AsWritten => {}
        }
        ErrorSpan::missing(q)
    });
    SpanSet::normalize(moved.collect::<Vec<_>>(), spans.text_len())
}

/// A gold document ready for training-file emission.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDoc {
    pub id: String,
    pub clean_text: String,
    pub spans: SpanSet,
    pub tokens: TokenOffsets,
    pub token_labels: Vec<TokenLabel>,
    pub proxy_label: u8,
}

impl LabeledDoc {
    pub fn build(id: String, clean_text: String, spans: SpanSet, tokens: TokenOffsets) -> Result<Self> {
        let token_labels = label_tokens(&spans, &tokens)?;
        let proxy_label = if spans.text_len() == 0 {
            0
        } else {
            doc_proxy_label(spans.text_len(), &spans)?
        };
        Ok(LabeledDoc {
            id,
            clean_text,
            spans,
            tokens,
            token_labels,
            proxy_label,
        })
    }

    /// Number of spans, used as the split stratum.
    pub fn span_count(&self) -> usize {
        self.spans.len()
    }

    pub fn to_record(&self) -> LabelRecord {
        LabelRecord {
            id: self.id.clone(),
            text: self.clean_text.clone(),
            token_offsets: self.tokens.as_slice().iter().map(|&(s, e)| [s, e]).collect(),
            labels: self.token_labels.clone(),
            proxy_label: self.proxy_label,
        }
    }
}

/// One line of the training-label JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub text: String,
    pub token_offsets: Vec<[usize; 2]>,
    pub labels: Vec<TokenLabel>,
    pub proxy_label: u8,
}
