//! Character-offset error spans and span-set algebra.
//!
//! All offsets count Unicode scalar values (`char`s), never bytes. A span with
//! `start == end` is an insertion point ("missing after"); any other span marks
//! the characters `start..end` as erroneous.
//!
//! A [`SpanSet`] is always kept in canonical form:
//!
//! - spans sorted by `(start, end)`,
//! - non-zero spans pairwise disjoint and never touching (touching spans merge),
//! - zero-length spans unique and never strictly inside a non-zero span,
//! - every `end <= text_len`.
//!
//! Union and intersection work on the covered character positions and then
//! re-segment into maximal runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The `$` marker reserved by the annotated-text format.
pub const MARKER: char = '$';

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ErrorSpan {
    pub start: usize,
    pub end: usize,
}

impl ErrorSpan {
    pub const fn new(start: usize, end: usize) -> Self {
        ErrorSpan { start, end }
    }

    /// Zero-length insertion point at `at`.
    pub const fn missing(at: usize) -> Self {
        ErrorSpan { start: at, end: at }
    }

    pub fn is_missing(&self) -> bool {
        self.start == self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.is_missing()
    }

    /// True when `pos` lies strictly between `start` and `end`.
    fn has_interior(&self, pos: usize) -> bool {
        self.start < pos && pos < self.end
    }
}

impl From<(usize, usize)> for ErrorSpan {
    fn from((start, end): (usize, usize)) -> Self {
        ErrorSpan { start, end }
    }
}

/// Canonical, immutable set of error spans over a text of `text_len` characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpanSet {
    spans: Vec<ErrorSpan>,
    text_len: usize,
}

fn check_bounds(spans: &[ErrorSpan], text_len: usize) -> Result<()> {
    for s in spans {
        if s.start > s.end || s.end > text_len {
            return Err(Error::SpanOutOfRange {
                start: s.start,
                end: s.end,
                text_len,
            });
        }
    }
    Ok(())
}

/// Merges sorted non-zero intervals that overlap or touch.
fn merge_runs(sorted: impl IntoIterator<Item = ErrorSpan>) -> Vec<ErrorSpan> {
    let mut out: Vec<ErrorSpan> = Vec::new();
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Interleaves merged runs with the zero-length points that survive them.
fn assemble(runs: Vec<ErrorSpan>, mut points: Vec<usize>, text_len: usize) -> SpanSet {
    points.sort_unstable();
    points.dedup();
    points.retain(|&q| !inside_any(&runs, q));

    let mut spans = Vec::with_capacity(runs.len() + points.len());
    spans.extend(runs);
    spans.extend(points.into_iter().map(ErrorSpan::missing));
    spans.sort_unstable();
    SpanSet { spans, text_len }
}

/// Whether `pos` is interior to one of the sorted, disjoint `runs`.
fn inside_any(runs: &[ErrorSpan], pos: usize) -> bool {
    let idx = runs.partition_point(|r| r.end <= pos);
    runs.get(idx).is_some_and(|r| r.has_interior(pos))
}

impl SpanSet {
    pub fn empty(text_len: usize) -> Self {
        SpanSet {
            spans: Vec::new(),
            text_len,
        }
    }

    /// Strict constructor. Rejects out-of-range and overlapping spans, and
    /// zero-length spans strictly inside an error region. Touching spans are
    /// merged and repeated insertion points collapse.
    pub fn new(spans: impl IntoIterator<Item = ErrorSpan>, text_len: usize) -> Result<Self> {
        let mut spans: Vec<ErrorSpan> = spans.into_iter().collect();
        check_bounds(&spans, text_len)?;
        spans.sort_unstable();

        let (mut runs, points): (Vec<_>, Vec<_>) = spans.into_iter().partition(|s| !s.is_missing());
        for pair in runs.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::Overlap(
                    pair[0].start,
                    pair[0].end,
                    pair[1].start,
                    pair[1].end,
                ));
            }
        }
        runs = merge_runs(runs);
        for p in &points {
            if let Some(r) = runs.iter().find(|r| r.has_interior(p.start)) {
                return Err(Error::Overlap(r.start, r.end, p.start, p.end));
            }
        }
        Ok(assemble(runs, points.into_iter().map(|p| p.start).collect(), text_len))
    }

    /// Lenient constructor: overlapping spans merge, insertion points inside
    /// error regions are dropped. Fails only on out-of-range spans.
    pub fn normalize(spans: impl IntoIterator<Item = ErrorSpan>, text_len: usize) -> Result<Self> {
        let spans: Vec<ErrorSpan> = spans.into_iter().collect();
        check_bounds(&spans, text_len)?;
        let mut runs = Vec::new();
        let mut points = Vec::new();
        for s in spans {
            if s.is_missing() {
                points.push(s.start);
            } else {
                runs.push(s);
            }
        }
        runs.sort_unstable();
        Ok(assemble(merge_runs(runs), points, text_len))
    }

    pub fn spans(&self) -> &[ErrorSpan] {
        &self.spans
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ErrorSpan> {
        self.spans.iter()
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Non-zero error regions, in order.
    pub fn regions(&self) -> impl Iterator<Item = ErrorSpan> + '_ {
        self.spans.iter().copied().filter(|s| !s.is_missing())
    }

    /// Positions of zero-length insertion points, in order.
    pub fn insertion_points(&self) -> impl Iterator<Item = usize> + '_ {
        self.spans.iter().filter(|s| s.is_missing()).map(|s| s.start)
    }

    /// Number of characters covered by error regions.
    pub fn covered_chars(&self) -> usize {
        self.regions().map(|s| s.len()).sum()
    }

    pub fn covers(&self, pos: usize) -> bool {
        let idx = self.spans.partition_point(|s| s.end <= pos);
        self.spans[idx..]
            .iter()
            .take_while(|s| s.start <= pos)
            .any(|s| s.start <= pos && pos < s.end)
    }

    /// Per-character coverage mask of length `text_len`.
    pub fn coverage(&self) -> Vec<bool> {
        let mut mask = vec![false; self.text_len];
        for s in self.regions() {
            mask[s.start..s.end].fill(true);
        }
        mask
    }

    /// Same spans re-indexed onto a text of a different length.
    pub fn with_text_len(&self, text_len: usize) -> Result<Self> {
        SpanSet::new(self.spans.iter().copied(), text_len)
    }
}

impl<'a> IntoIterator for &'a SpanSet {
    type Item = &'a ErrorSpan;
    type IntoIter = std::slice::Iter<'a, ErrorSpan>;

    fn into_iter(self) -> Self::IntoIter {
        self.spans.iter()
    }
}

impl fmt::Display for SpanSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.spans.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "({}, {})", s.start, s.end)?;
        }
        f.write_str("]")
    }
}

fn check_same_len(sets: &[SpanSet]) -> Result<usize> {
    let first = sets
        .first()
        .ok_or_else(|| Error::invalid("span-set operation needs at least one input"))?;
    for s in &sets[1..] {
        if s.text_len != first.text_len {
            return Err(Error::TextLenMismatch {
                expected: first.text_len,
                found: s.text_len,
            });
        }
    }
    Ok(first.text_len)
}

/// Character-membership union of span sets over the same text.
pub fn span_union(sets: &[SpanSet]) -> Result<SpanSet> {
    let text_len = check_same_len(sets)?;
    let mut runs: Vec<ErrorSpan> = sets.iter().flat_map(|s| s.regions()).collect();
    runs.sort_unstable();
    let points = sets.iter().flat_map(|s| s.insertion_points()).collect();
    Ok(assemble(merge_runs(runs), points, text_len))
}

/// Character-membership intersection of span sets over the same text.
///
/// An insertion point survives only if every input has one at exactly the
/// same position.
pub fn span_intersection(sets: &[SpanSet]) -> Result<SpanSet> {
    let text_len = check_same_len(sets)?;
    let mut runs: Vec<ErrorSpan> = sets[0].regions().collect();
    let mut points: Vec<usize> = sets[0].insertion_points().collect();
    for other in &sets[1..] {
        let theirs: Vec<ErrorSpan> = other.regions().collect();
        runs = intersect_runs(&runs, &theirs);
        let their_points: Vec<usize> = other.insertion_points().collect();
        points.retain(|q| their_points.binary_search(q).is_ok());
    }
    Ok(assemble(merge_runs(runs), points, text_len))
}

fn intersect_runs(a: &[ErrorSpan], b: &[ErrorSpan]) -> Vec<ErrorSpan> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let start = a[i].start.max(b[j].start);
        let end = a[i].end.min(b[j].end);
        if start < end {
            out.push(ErrorSpan::new(start, end));
        }
        if a[i].end <= b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// How a span set is rendered into the string compared by the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SerializationMode {
    /// The text with `$…$` around error regions and `$$` at insertion points.
    #[default]
    #[serde(rename = "annotated")]
    AnnotatedText,
    /// `[(s1, e1), (s2, e2), ...]`
    #[serde(rename = "spanlist")]
    SpanListString,
}

impl SerializationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SerializationMode::AnnotatedText => "annotated",
            SerializationMode::SpanListString => "spanlist",
        }
    }

    pub fn render(&self, text: &str, spans: &SpanSet) -> Result<String> {
        match self {
            SerializationMode::AnnotatedText => to_annotated(text, spans),
            SerializationMode::SpanListString => Ok(to_span_list_string(spans)),
        }
    }
}

impl fmt::Display for SerializationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SerializationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annotated" => Ok(SerializationMode::AnnotatedText),
            "spanlist" => Ok(SerializationMode::SpanListString),
            other => Err(Error::invalid(format!(
                "unknown serialization `{other}` (expected annotated|spanlist)"
            ))),
        }
    }
}

/// Wraps error regions in `$…$` and inserts `$$` at insertion points.
pub fn to_annotated(text: &str, spans: &SpanSet) -> Result<String> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() != spans.text_len() {
        return Err(Error::TextLenMismatch {
            expected: spans.text_len(),
            found: chars.len(),
        });
    }
    if let Some(pos) = chars.iter().position(|&c| c == MARKER) {
        return Err(Error::invalid(format!(
            "text contains the reserved `$` marker at offset {pos}"
        )));
    }

    let mut out = String::with_capacity(text.len() + 2 * spans.len());
    let mut pos = 0;
    for s in spans {
        out.extend(&chars[pos..s.start]);
        out.push(MARKER);
        out.extend(&chars[s.start..s.end]);
        out.push(MARKER);
        pos = s.end;
    }
    out.extend(&chars[pos..]);
    Ok(out)
}

pub fn to_span_list_string(spans: &SpanSet) -> String {
    spans.to_string()
}

/// Parses the `[(s, e), ...]` rendering back into raw spans.
pub fn parse_span_list(s: &str) -> Result<Vec<ErrorSpan>> {
    let bad = || Error::invalid(format!("malformed span list `{s}`"));
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(bad)?
        .trim();
    let mut out = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let body_start = rest.strip_prefix('(').ok_or_else(bad)?;
        let close = body_start.find(')').ok_or_else(bad)?;
        let (body, tail) = body_start.split_at(close);
        let (a, b) = body.split_once(',').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        out.push(ErrorSpan::new(start, end));
        rest = tail[1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return Err(bad());
            }
        } else if !rest.is_empty() {
            return Err(bad());
        }
    }
    Ok(out)
}
