//! Table-driven text normalization and reverse mapping of spans.
//!
//! Text is normalized by an ordered table of literal rewrites before it is
//! handed to a model. Spans predicted on the normalized text are carried back
//! onto the original through a minimum edit-distance alignment of the two
//! strings.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::spans::{ErrorSpan, SpanSet};

const DEFAULT_RULES: &str = include_str!("../assets/default_rules.tsv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormRule {
    pub pattern: Vec<char>,
    pub replacement: String,
}

/// Ordered literal rewrite table.
///
/// Applied in a single left-to-right pass: at each position the longest
/// matching pattern wins, and among equally long patterns the one listed
/// first.
#[derive(Debug, Clone, Default)]
pub struct NormRules {
    rules: Vec<NormRule>,
    // first char -> rule indices, longest pattern first, then table order
    by_first: HashMap<char, Vec<usize>>,
}

impl NormRules {
    pub fn new(rules: Vec<NormRule>) -> Result<Self> {
        let mut by_first: HashMap<char, Vec<usize>> = HashMap::new();
        for (i, r) in rules.iter().enumerate() {
            let first = *r
                .pattern
                .first()
                .ok_or_else(|| Error::invalid(format!("normalization rule {i} has an empty pattern")))?;
            by_first.entry(first).or_default().push(i);
        }
        for idx in by_first.values_mut() {
            idx.sort_by_key(|&i| (std::cmp::Reverse(rules[i].pattern.len()), i));
        }
        Ok(NormRules { rules, by_first })
    }

    /// The shipped table: zero-width characters, space, quote and dash variants,
    /// full-width punctuation and Bangla nukta letters.
    pub fn default_table() -> Self {
        Self::parse_tsv(DEFAULT_RULES).expect("bundled rule table is well formed")
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(p, r)| NormRule {
                    pattern: p.chars().collect(),
                    replacement: r.to_string(),
                })
                .collect(),
        )
    }

    /// Reads `pattern<TAB>replacement` lines. `#` starts a comment line,
    /// blank lines are skipped, and `\uXXXX`, `\t` and `\\` escapes are expanded.
    pub fn parse_tsv(src: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, raw) in src.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let schema = |message: String| Error::Schema {
                line: line_no,
                message,
            };
            let (pat, rep) = line
                .split_once('\t')
                .ok_or_else(|| schema("expected `pattern<TAB>replacement`".into()))?;
            let pattern: Vec<char> = unescape(pat).map_err(schema)?.chars().collect();
            if pattern.is_empty() {
                return Err(schema("empty pattern".into()));
            }
            let replacement = unescape(rep).map_err(schema)?;
            rules.push(NormRule { pattern, replacement });
        }
        Self::new(rules)
    }

    pub fn rules(&self) -> &[NormRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn normalize(&self, text: &str) -> String {
        if self.rules.is_empty() {
            return text.to_string();
        }
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::with_capacity(text.len());
        let mut i = 0;
        while i < chars.len() {
            let hit = self.by_first.get(&chars[i]).and_then(|cands| {
                cands
                    .iter()
                    .map(|&k| &self.rules[k])
                    .find(|r| chars[i..].starts_with(&r.pattern))
            });
            match hit {
                Some(rule) => {
                    out.push_str(&rule.replacement);
                    i += rule.pattern.len();
                }
                None => {
                    out.push(chars[i]);
                    i += 1;
                }
            }
        }
        out
    }
}

fn unescape(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('u') => {
                let hex: String = it.by_ref().take(4).collect();
                let cp = (hex.len() == 4)
                    .then(|| u32::from_str_radix(&hex, 16).ok())
                    .flatten()
                    .and_then(char::from_u32)
                    .ok_or_else(|| format!("bad escape `\\u{hex}`"))?;
                out.push(cp);
            }
            Some(other) => return Err(format!("unknown escape `\\{other}`")),
            None => return Err("dangling `\\`".into()),
        }
    }
    Ok(out)
}

/// Normalizes `text` with `rules`.
pub fn normalize(text: &str, rules: &NormRules) -> String {
    rules.normalize(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match,
    Substitute,
    /// An original character with no normalized counterpart.
    Delete,
    /// A normalized character with no original counterpart.
    Insert,
}

/// A minimum-cost edit script turning `original` into `normalized`.
///
/// Unit costs per code point. The script is read off the cost table from the
/// end of both strings, preferring match, then substitution, then deletion,
/// then insertion whenever several steps keep the cost minimal.
pub fn edit_script(original: &[char], normalized: &[char]) -> Vec<EditOp> {
    // Shared suffixes are always matched first by the traceback.
    let common = original
        .iter()
        .rev()
        .zip(normalized.iter().rev())
        .take_while(|(a, b)| a == b)
        .count();
    let a = &original[..original.len() - common];
    let b = &normalized[..normalized.len() - common];
    let (n, m) = (a.len(), b.len());
    let w = m + 1;

    let mut cost = vec![0u32; (n + 1) * w];
    for (j, c) in cost[..w].iter_mut().enumerate() {
        *c = j as u32;
    }
    for i in 1..=n {
        cost[i * w] = i as u32;
        for j in 1..=m {
            let diag = cost[(i - 1) * w + j - 1] + u32::from(a[i - 1] != b[j - 1]);
            let del = cost[(i - 1) * w + j] + 1;
            let ins = cost[i * w + j - 1] + 1;
            cost[i * w + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = vec![EditOp::Match; common];
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        let op = if i > 0 && j > 0 && a[i - 1] == b[j - 1] && cost[(i - 1) * w + j - 1] == here {
            EditOp::Match
        } else if i > 0 && j > 0 && cost[(i - 1) * w + j - 1] + 1 == here {
            EditOp::Substitute
        } else if i > 0 && cost[(i - 1) * w + j] + 1 == here {
            EditOp::Delete
        } else {
            EditOp::Insert
        };
        match op {
            EditOp::Match | EditOp::Substitute => {
                i -= 1;
                j -= 1;
            }
            EditOp::Delete => i -= 1,
            EditOp::Insert => j -= 1,
        }
        ops.push(op);
    }
    ops.reverse();
    ops
}

/// Mapping from normalized-text positions back to original-text positions.
///
/// For every normalized position `j` the alignment visits a contiguous range
/// of original positions (several when original characters were deleted at
/// that point). `start_map[j]` is the low end of that range and `end_map[j]`
/// the high end, so span edges falling on a deleted run expand outward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentMap {
    start_map: Vec<usize>,
    end_map: Vec<usize>,
    orig_len: usize,
}

impl AlignmentMap {
    pub fn identity(len: usize) -> Self {
        let map: Vec<usize> = (0..=len).collect();
        AlignmentMap {
            start_map: map.clone(),
            end_map: map,
            orig_len: len,
        }
    }

    fn from_script(ops: &[EditOp], orig_len: usize, norm_len: usize) -> Self {
        let mut start_map = vec![usize::MAX; norm_len + 1];
        let mut end_map = vec![0; norm_len + 1];
        let (mut i, mut j) = (0, 0);
        let mut visit = |i: usize, j: usize| {
            start_map[j] = start_map[j].min(i);
            end_map[j] = end_map[j].max(i);
        };
        visit(0, 0);
        for op in ops {
            match op {
                EditOp::Match | EditOp::Substitute => {
                    i += 1;
                    j += 1;
                }
                EditOp::Delete => i += 1,
                EditOp::Insert => j += 1,
            }
            visit(i, j);
        }
        debug_assert_eq!((i, j), (orig_len, norm_len));
        AlignmentMap {
            start_map,
            end_map,
            orig_len,
        }
    }

    pub fn orig_len(&self) -> usize {
        self.orig_len
    }

    pub fn norm_len(&self) -> usize {
        self.start_map.len() - 1
    }

    /// Original position for a span start at normalized position `j`.
    pub fn map_start(&self, j: usize) -> usize {
        self.start_map[j]
    }

    /// Original position for a span end (or insertion point) at normalized position `j`.
    pub fn map_end(&self, j: usize) -> usize {
        self.end_map[j]
    }

    pub fn start_positions(&self) -> &[usize] {
        &self.start_map
    }

    pub fn end_positions(&self) -> &[usize] {
        &self.end_map
    }

    pub fn is_identity(&self) -> bool {
        self.orig_len == self.norm_len()
            && self.start_map.iter().enumerate().all(|(j, &i)| i == j)
            && self.end_map.iter().enumerate().all(|(j, &i)| i == j)
    }
}

/// Aligns `normalized` against `original` by minimum edit distance.
pub fn align(original: &str, normalized: &str) -> AlignmentMap {
    let a: Vec<char> = original.chars().collect();
    let b: Vec<char> = normalized.chars().collect();
    if a == b {
        return AlignmentMap::identity(a.len());
    }
    let ops = edit_script(&a, &b);
    AlignmentMap::from_script(&ops, a.len(), b.len())
}

/// Re-indexes spans from the normalized text onto the original text.
///
/// A region `(s, e)` becomes `(map_start(s), map_end(e))`; an insertion point
/// `q` becomes `map_end(q)`. A region whose normalized characters all came
/// from insertions would collapse to nothing, so it is widened to the next
/// original character (or the previous one at the end of the text).
pub fn map_spans_to_original(spans: &SpanSet, alignment: &AlignmentMap) -> Result<SpanSet> {
    if spans.text_len() != alignment.norm_len() {
        return Err(Error::TextLenMismatch {
            expected: alignment.norm_len(),
            found: spans.text_len(),
        });
    }
    let orig_len = alignment.orig_len();
    let mapped: Vec<ErrorSpan> = spans
        .iter()
        .map(|s| {
            if s.is_missing() {
                return ErrorSpan::missing(alignment.map_end(s.start));
            }
            let start = alignment.map_start(s.start);
            let end = alignment.map_end(s.end);
            if start < end || orig_len == 0 {
                ErrorSpan::new(start, end)
            } else if start < orig_len {
                ErrorSpan::new(start, start + 1)
            } else {
                ErrorSpan::new(orig_len - 1, orig_len)
            }
        })
        .collect();
    SpanSet::normalize(mapped, orig_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(spans: &[(usize, usize)], len: usize) -> SpanSet {
        SpanSet::new(spans.iter().map(|&s| s.into()), len).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let zwnj = NormRules::from_pairs([("\u{200C}", "")]).unwrap();
        assert_eq!(normalize("a\u{200C}b", &zwnj), "ab");
        assert_eq!(normalize("abc", &NormRules::empty()), "abc");
        let dash = NormRules::from_pairs([("\u{2014}\u{2014}", "-")]).unwrap();
        assert_eq!(normalize("a\u{2014}\u{2014}b", &dash), "a-b");
    }

    #[test]
    fn longest_match_then_table_order() {
        let rules = NormRules::from_pairs([("a", "1"), ("ab", "2"), ("ab", "3")]).unwrap();
        assert_eq!(rules.normalize("abaa"), "211");
        // Single pass: replacement output is not rescanned.
        let rules = NormRules::from_pairs([("x", "y"), ("y", "z")]).unwrap();
        assert_eq!(rules.normalize("xy"), "yz");
    }

    #[test]
    fn tsv_parsing() {
        let rules = NormRules::parse_tsv("# comment\n\n\\u200C\t\n\\u2014\\u2014\t-\r\nx\t\\\\\\t\n").unwrap();
        assert_eq!(rules.rules().len(), 3);
        assert_eq!(rules.rules()[0].pattern, vec!['\u{200C}']);
        assert_eq!(rules.rules()[0].replacement, "");
        assert_eq!(rules.rules()[1].pattern, vec!['\u{2014}', '\u{2014}']);
        assert_eq!(rules.rules()[2].replacement, "\\\t");
        assert!(NormRules::parse_tsv("").unwrap().is_empty());
    }

    #[test]
    fn tsv_errors_carry_line_numbers() {
        let err = NormRules::parse_tsv("# ok\nno tab here\n").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 2, .. }), "{err}");
        let err = NormRules::parse_tsv("\t-\n").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 1, .. }));
        let err = NormRules::parse_tsv("\\u12G4\tx\n").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 1, .. }));
        let err = NormRules::parse_tsv("\\q\tx\n").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 1, .. }));
    }

    #[test]
    fn default_table_shape_guarantees_single_pass_idempotence() {
        let rules = NormRules::default_table();
        assert!(rules.rules().len() > 30);
        let pattern_chars: Vec<char> = rules.rules().iter().map(|r| r.pattern[0]).collect();
        for r in rules.rules() {
            assert_eq!(r.pattern.len(), 1);
            assert!(
                !r.replacement.chars().any(|c| pattern_chars.contains(&c)),
                "replacement of {:?} is rewritten again",
                r.pattern
            );
        }
    }

    #[test]
    fn default_table_rewrites() {
        let rules = NormRules::default_table();
        assert_eq!(rules.normalize("“ক”\u{2014}খ…"), "\"ক\"-খ...");
        assert_eq!(rules.normalize("বা\u{200C}ড়ি"), "বা\u{09A1}\u{09BC}ি");
        assert_eq!(rules.normalize("a\u{00A0}b"), "a b");
    }

    #[test]
    fn align_examples() {
        assert!(align("abc", "abc").is_identity());
        let a = align("a\u{200C}b", "ab");
        assert_eq!(a.start_positions(), &[0, 1, 3]);
        assert_eq!(a.end_positions(), &[0, 2, 3]);
        let a = align("", "x");
        assert_eq!(a.start_positions(), &[0, 0]);
        assert_eq!(a.end_positions(), &[0, 0]);
    }

    #[test]
    fn align_trailing_and_leading_deletions() {
        let a = align("ab\u{200C}", "ab");
        assert_eq!(a.start_positions(), &[0, 1, 2]);
        assert_eq!(a.end_positions(), &[0, 1, 3]);
        let a = align("\u{200C}ab", "ab");
        assert_eq!(a.start_positions(), &[0, 2, 3]);
        assert_eq!(a.end_positions(), &[1, 2, 3]);
    }

    #[test]
    fn map_examples() {
        let id = AlignmentMap::identity(8);
        assert_eq!(map_spans_to_original(&set(&[(2, 5)], 8), &id).unwrap(), set(&[(2, 5)], 8));
        let a = align("a\u{200C}b", "ab");
        assert_eq!(map_spans_to_original(&set(&[(0, 2)], 2), &a).unwrap(), set(&[(0, 3)], 3));
        assert_eq!(map_spans_to_original(&set(&[], 2), &a).unwrap(), set(&[], 3));
    }

    #[test]
    fn map_expands_edges_over_deleted_runs() {
        let a = align("a\u{200C}b", "ab");
        // "a" alone ends where the ZWNJ was removed: the ZWNJ is included.
        assert_eq!(map_spans_to_original(&set(&[(0, 1)], 2), &a).unwrap(), set(&[(0, 2)], 3));
        // "b" alone starts there too.
        assert_eq!(map_spans_to_original(&set(&[(1, 2)], 2), &a).unwrap(), set(&[(1, 3)], 3));
        assert_eq!(map_spans_to_original(&set(&[(1, 1)], 2), &a).unwrap(), set(&[(2, 2)], 3));
    }

    #[test]
    fn map_widens_regions_made_of_insertions() {
        // U+09DF decomposes to two code points; each half maps to the original letter.
        let orig = "\u{09DF}";
        let norm = NormRules::default_table().normalize(orig);
        assert_eq!(norm.chars().count(), 2);
        let a = align(orig, &norm);
        for span in [(0, 1), (1, 2), (0, 2)] {
            assert_eq!(map_spans_to_original(&set(&[span], 2), &a).unwrap(), set(&[(0, 1)], 1));
        }
        let a = align("a", "ab");
        assert_eq!(map_spans_to_original(&set(&[(1, 2)], 2), &a).unwrap(), set(&[(0, 1)], 1));
    }

    #[test]
    fn map_rejects_wrong_length() {
        let a = align("abc", "ab");
        assert!(map_spans_to_original(&set(&[], 3), &a).is_err());
    }

    /// Every minimum-cost script between two short strings, by exhaustive recursion.
    fn all_min_scripts(a: &[char], b: &[char]) -> (usize, Vec<Vec<EditOp>>) {
        fn go(a: &[char], b: &[char]) -> Vec<(usize, Vec<EditOp>)> {
            if a.is_empty() && b.is_empty() {
                return vec![(0, vec![])];
            }
            let mut out = Vec::new();
            let mut extend = |rest: Vec<(usize, Vec<EditOp>)>, op: EditOp, c: usize| {
                for (k, mut s) in rest {
                    s.insert(0, op);
                    out.push((k + c, s));
                }
            };
            if !a.is_empty() && !b.is_empty() {
                let (op, c) = if a[0] == b[0] { (EditOp::Match, 0) } else { (EditOp::Substitute, 1) };
                extend(go(&a[1..], &b[1..]), op, c);
            }
            if !a.is_empty() {
                extend(go(&a[1..], b), EditOp::Delete, 1);
            }
            if !b.is_empty() {
                extend(go(a, &b[1..]), EditOp::Insert, 1);
            }
            out
        }
        let all = go(a, b);
        let best = all.iter().map(|(k, _)| *k).min().unwrap();
        (best, all.into_iter().filter(|(k, _)| *k == best).map(|(_, s)| s).collect())
    }

    #[test]
    fn zwnj_example_has_a_unique_minimum_script() {
        let a: Vec<char> = "a\u{200C}b".chars().collect();
        let b: Vec<char> = "ab".chars().collect();
        let (cost, scripts) = all_min_scripts(&a, &b);
        assert_eq!(cost, 1);
        assert_eq!(scripts, vec![vec![EditOp::Match, EditOp::Delete, EditOp::Match]]);
        assert_eq!(edit_script(&a, &b), scripts[0]);
    }

    fn rank(op: &EditOp) -> u8 {
        match op {
            EditOp::Match => 0,
            EditOp::Substitute => 1,
            EditOp::Delete => 2,
            EditOp::Insert => 3,
        }
    }

    proptest! {
        #[test]
        fn script_is_minimal_and_follows_tie_break(
            a in prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c']), 0..6),
            b in prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c']), 0..6),
        ) {
            let (best, scripts) = all_min_scripts(&a, &b);
            let ours = edit_script(&a, &b);
            prop_assert!(scripts.contains(&ours));
            let cost = ours.iter().filter(|op| **op != EditOp::Match).count();
            prop_assert_eq!(cost, best);
            // Read from the end, the preferred step is taken at every position.
            let key = |s: &Vec<EditOp>| s.iter().rev().map(rank).collect::<Vec<_>>();
            let preferred = scripts.iter().min_by_key(|s| key(s)).unwrap();
            prop_assert_eq!(&ours, preferred);
        }

        #[test]
        fn default_table_is_idempotent(text in "[a-c \u{200B}-\u{200D}\u{2013}-\u{201F}\u{2026}\u{09DC}-\u{09DF}\u{09A1}\u{09BC}\u{FF01}-\u{FF1F}।.]{0,40}") {
            let rules = NormRules::default_table();
            let once = rules.normalize(&text);
            prop_assert_eq!(rules.normalize(&once), once);
        }

        #[test]
        fn alignment_is_monotone_and_anchored(
            text in "[ab \u{200C}\u{2014}\u{09DF}]{0,30}",
        ) {
            let rules = NormRules::default_table();
            let norm = rules.normalize(&text);
            let a = align(&text, &norm);
            let orig_len = text.chars().count();
            prop_assert_eq!(a.map_start(0), 0);
            prop_assert_eq!(a.map_end(a.norm_len()), orig_len);
            for w in a.start_positions().windows(2) { prop_assert!(w[0] <= w[1]); }
            for w in a.end_positions().windows(2) { prop_assert!(w[0] <= w[1]); }
            for (s, e) in a.start_positions().iter().zip(a.end_positions()) {
                prop_assert!(s <= e);
            }
        }

        #[test]
        fn mapped_regions_never_collapse(
            text in "[ab \u{200C}\u{2014}\u{201C}\u{09DF}\u{09AF}\u{09BC}]{1,30}",
            raw in prop::collection::vec((0usize..40, 0usize..6), 0..5),
        ) {
            let rules = NormRules::default_table();
            let norm = rules.normalize(&text);
            let n = norm.chars().count();
            let spans = SpanSet::normalize(
                raw.into_iter().map(|(s, w)| { let s = s.min(n); ErrorSpan::new(s, (s + w).min(n)) }).collect::<Vec<_>>(),
                n,
            ).unwrap();
            let mapped = map_spans_to_original(&spans, &align(&text, &norm)).unwrap();
            prop_assert_eq!(mapped.text_len(), text.chars().count());
            prop_assert!(mapped.regions().count() <= spans.regions().count());
            prop_assert!(spans.regions().count() == 0 || mapped.regions().count() > 0);
        }

        // When normalization only deletes, every mapped region still contains
        // what was flagged. Mixed deletions and replacements can be aligned
        // crosswise at equal cost, so no such guarantee holds there.
        #[test]
        fn reverse_mapping_keeps_error_content(
            text in "[ab \u{200B}\u{200C}\u{FEFF}]{1,30}",
            raw in prop::collection::vec((0usize..40, 0usize..6), 0..5),
        ) {
            let rules = NormRules::default_table();
            let norm = rules.normalize(&text);
            let norm_chars: Vec<char> = norm.chars().collect();
            let orig_chars: Vec<char> = text.chars().collect();
            let n = norm_chars.len();
            let spans = SpanSet::normalize(
                raw.into_iter().map(|(s, w)| { let s = s.min(n); ErrorSpan::new(s, (s + w).min(n)) }).collect::<Vec<_>>(),
                n,
            ).unwrap();
            let a = align(&text, &norm);
            for s in spans.regions() {
                let (ms, me) = (a.map_start(s.start), a.map_end(s.end));
                let original_piece: String = orig_chars[ms..me].iter().collect();
                let renorm: Vec<char> = rules.normalize(&original_piece).chars().collect();
                let wanted = &norm_chars[s.start..s.end];
                let mut it = renorm.iter();
                let subsequence = wanted.iter().all(|c| it.any(|x| x == c));
                prop_assert!(subsequence, "{:?} -> {:?} lost {:?}", s, (ms, me), wanted);
            }
        }
    }
}
