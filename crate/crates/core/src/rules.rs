//! Deterministic error detectors: space before punctuation, missing sentence
//! terminator, and lexicon lookup of known misspellings.

use std::collections::HashSet;

use crate::error::Result;
use crate::spans::{span_union, ErrorSpan, SpanSet};

/// Bangla full stop.
pub const DANDA: char = '\u{0964}';

/// Punctuation that must not be preceded by whitespace.
pub const SPACED_PUNCT: [char; 5] = ['.', ',', '?', '!', DANDA];

/// Characters accepted as the end of a sentence.
pub const TERMINAL_PUNCT: [char; 4] = ['.', '!', '?', DANDA];

/// Known misspellings. Case-sensitive, exact match.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon(HashSet<String>);

/// Named-entity words that are never reported as misspellings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer(HashSet<String>);

impl Lexicon {
    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        Lexicon(words.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Words in sorted order.
    pub fn sorted_words(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.0.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

impl Gazetteer {
    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        Gazetteer(words.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Misspelling candidates minus every valid dictionary word and every word
/// appearing in page titles.
pub fn build_lexicon(
    raw_errors: &HashSet<String>,
    dictionary: &HashSet<String>,
    title_words: &HashSet<String>,
) -> Lexicon {
    let lex: HashSet<String> = raw_errors
        .iter()
        .filter(|w| !dictionary.contains(*w) && !title_words.contains(*w))
        .cloned()
        .collect();
    assert!(lex.is_disjoint(dictionary) && lex.is_disjoint(title_words));
    Lexicon(lex)
}

/// ASCII punctuation plus the common Unicode punctuation used in Bangla text.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{0964}' | '\u{0965}'          // danda, double danda
            | '\u{00A1}' | '\u{00A7}' | '\u{00AB}' | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
            | '\u{2010}'..='\u{2027}'        // dashes, quotes, bullets, ellipsis
            | '\u{2030}'..='\u{205E}'
            | '\u{3001}' | '\u{3002}'
            | '\u{FF01}'..='\u{FF0F}' | '\u{FF1A}'..='\u{FF1F}')
}

/// Character ranges of words: maximal runs of characters that are neither
/// whitespace nor punctuation.
pub fn word_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut len = 0;
    for (i, c) in text.chars().enumerate() {
        let boundary = c.is_whitespace() || is_punctuation(c);
        match (boundary, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
        len = i + 1;
    }
    if let Some(s) = start {
        out.push((s, len));
    }
    out
}

/// Flags each whitespace run that sits directly before `. , ? ! ।`.
///
/// The span covers the whitespace and, when `include_punct` is set, the
/// punctuation character after it.
pub fn detect_space_before_punct(text: &str, include_punct: bool) -> SpanSet {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut ws_start: Option<usize> = None;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            ws_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = ws_start.take() {
            if SPACED_PUNCT.contains(&c) {
                spans.push(ErrorSpan::new(s, if include_punct { i + 1 } else { i }));
            }
        }
    }
    SpanSet::normalize(spans, chars.len()).expect("spans lie inside the text")
}

/// Insertion point at the end of a text whose last non-whitespace character
/// is not a sentence terminator.
pub fn detect_missing_end_punct(text: &str) -> SpanSet {
    let len = text.chars().count();
    match text.chars().rev().find(|c| !c.is_whitespace()) {
        Some(last) if !TERMINAL_PUNCT.contains(&last) => {
            SpanSet::new([ErrorSpan::missing(len)], len).expect("end of text is in range")
        }
        _ => SpanSet::empty(len),
    }
}

/// Flags words found in `lexicon` unless they are named entities.
pub fn detect_spelling(text: &str, lexicon: &Lexicon, gazetteer: &Gazetteer) -> SpanSet {
    let chars: Vec<char> = text.chars().collect();
    let spans: Vec<ErrorSpan> = word_ranges(text)
        .into_iter()
        .filter(|&(s, e)| {
            let word: String = chars[s..e].iter().collect();
            lexicon.contains(&word) && !gazetteer.contains(&word)
        })
        .map(ErrorSpan::from)
        .collect();
    SpanSet::normalize(spans, chars.len()).expect("spans lie inside the text")
}

/// The enabled detectors and their resources.
#[derive(Debug, Clone, Default)]
pub struct Detectors {
    pub space_fix: bool,
    pub end_fix: bool,
    /// Spelling lookup is enabled when resources are present.
    pub spelling: Option<(Lexicon, Gazetteer)>,
    /// Exclude the punctuation character from space-before-punctuation spans.
    pub exclude_punct: bool,
}

impl Detectors {
    pub fn is_empty(&self) -> bool {
        !self.space_fix && !self.end_fix && self.spelling.is_none()
    }

    /// Union of all enabled detectors on `text`.
    pub fn detect(&self, text: &str) -> Result<SpanSet> {
        let mut found = vec![SpanSet::empty(text.chars().count())];
        if self.space_fix {
            found.push(detect_space_before_punct(text, !self.exclude_punct));
        }
        if self.end_fix {
            found.push(detect_missing_end_punct(text));
        }
        if let Some((lex, gaz)) = &self.spelling {
            found.push(detect_spelling(text, lex, gaz));
        }
        span_union(&found)
    }
}
