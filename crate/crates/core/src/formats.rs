//! Readers and writers for the on-disk formats.
//!
//! - corpus: CSV with header `id,text`, or plain UTF-8 with one text per line
//!   (the id is then the 1-based line number; blank lines are skipped)
//! - spans CSV: header `id,spans`, spans rendered as `[(s, e), ...]`
//! - prediction JSONL and training-label JSONL, one object per line
//! - word lists: one word per line, `#` comment lines
//! - evaluation report: CSV `id,distance` plus a JSON summary

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::annotation::{attach_missing, parse_annotated, LabelRecord, MissingAttach};
use crate::decode::PredictionDoc;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, GoldDoc};
use crate::spans::{parse_span_list, to_span_list_string, ErrorSpan, SpanSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        CorpusRecord {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SpansRow {
    id: String,
    spans: String,
}

fn check_unique<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

/// Reads a corpus, auto-detecting the CSV header.
pub fn read_corpus(mut reader: impl BufRead) -> Result<Vec<CorpusRecord>> {
    let mut src = String::new();
    reader.read_to_string(&mut src)?;
    let src = src.strip_prefix('\u{FEFF}').unwrap_or(&src);
    let first = src.lines().next().unwrap_or("").trim_end_matches('\r');

    let records = if first == "id,text" {
        let mut rdr = csv::Reader::from_reader(src.as_bytes());
        let mut out = Vec::new();
        for row in rdr.deserialize::<CorpusRecord>() {
            out.push(row.map_err(|e| Error::Schema {
                line: csv_line(&e),
                message: e.to_string(),
            })?);
        }
        out
    } else {
        src.lines()
            .enumerate()
            .map(|(i, l)| (i, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| CorpusRecord::new((i + 1).to_string(), l))
            .collect()
    };
    check_unique(records.iter().map(|r| r.id.as_str()))?;
    Ok(records)
}

pub fn write_corpus(writer: impl Write, records: &[CorpusRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "text"])?;
    for r in records {
        w.write_record([&r.id, &r.text])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses every record of an annotated corpus into a gold document.
pub fn gold_from_corpus(records: &[CorpusRecord], attach: MissingAttach) -> Result<Vec<GoldDoc>> {
    records
        .iter()
        .map(|r| {
            let (text, spans) = parse_annotated(&r.text).map_err(|e| {
                Error::invalid(format!("record `{}`: {e}", r.id))
            })?;
            let spans = attach_missing(&text, &spans, attach)?;
            Ok(GoldDoc {
                id: r.id.clone(),
                text,
                spans,
            })
        })
        .collect()
}

/// Reads an `id,spans` CSV into raw span lists. Spans are validated against
/// a text only once the text is known.
pub fn read_spans_csv(reader: impl std::io::Read) -> Result<Vec<(String, Vec<ErrorSpan>)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "spans"] {
        return Err(Error::Schema {
            line: 1,
            message: "expected header `id,spans`".into(),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<SpansRow>() {
        let row = row.map_err(|e| Error::Schema {
            line: csv_line(&e),
            message: e.to_string(),
        })?;
        let line = out.len() + 2;
        let spans = parse_span_list(&row.spans).map_err(|e| Error::Schema {
            line,
            message: e.to_string(),
        })?;
        out.push((row.id, spans));
    }
    check_unique(out.iter().map(|(id, _)| id.as_str()))?;
    Ok(out)
}

pub fn write_spans_csv<'a>(
    writer: impl Write,
    rows: impl IntoIterator<Item = (&'a str, &'a SpanSet)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "spans"])?;
    for (id, spans) in rows {
        w.write_record([id, &to_span_list_string(spans)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads prediction JSONL, validating every document.
pub fn read_predictions(reader: impl BufRead) -> Result<Vec<PredictionDoc>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema { line: i + 1, message };
        let doc: PredictionDoc = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        doc.validate().map_err(|e| schema(e.to_string()))?;
        out.push(doc);
    }
    check_unique(out.iter().map(|d| d.id.as_str()))?;
    Ok(out)
}

fn write_jsonl<T: Serialize>(mut writer: impl Write, items: impl IntoIterator<Item = T>) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, &item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_predictions(writer: impl Write, docs: &[PredictionDoc]) -> Result<()> {
    write_jsonl(writer, docs)
}

pub fn write_labels(writer: impl Write, records: &[LabelRecord]) -> Result<()> {
    write_jsonl(writer, records)
}

/// One word per line; blank lines and `#` comments skipped, surrounding whitespace trimmed.
pub fn read_word_list(reader: impl BufRead) -> Result<HashSet<String>> {
    let mut out = HashSet::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        out.insert(w.to_string());
    }
    Ok(out)
}

pub fn write_word_list(mut writer: impl Write, words: &[&str]) -> Result<()> {
    for w in words {
        writeln!(writer, "{w}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_report_csv(writer: impl Write, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "distance"])?;
    for d in &report.per_doc {
        w.write_record([d.id.as_str(), &d.distance.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_summary_json(report: &EvalReport) -> String {
    serde_json::to_string(&report.summary()).expect("summary serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{ClassProbs, TokenPrediction};
    use crate::annotation::TokenLabel;

    #[test]
    fn corpus_csv_and_lines() {
        let csv = "id,text\nd1,\"ab, $cd$\"\nd2,\"multi\nline\"\n";
        let recs = read_corpus(csv.as_bytes()).unwrap();
        assert_eq!(recs, [CorpusRecord::new("d1", "ab, $cd$"), CorpusRecord::new("d2", "multi\nline")]);

        let plain = "first line\n\nthird, with comma\r\n";
        let recs = read_corpus(plain.as_bytes()).unwrap();
        assert_eq!(recs, [CorpusRecord::new("1", "first line"), CorpusRecord::new("3", "third, with comma")]);

        let mut buf = Vec::new();
        write_corpus(&mut buf, &[CorpusRecord::new("d1", "ab, $cd$")]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "id,text\nd1,\"ab, $cd$\"\n");
    }

    #[test]
    fn corpus_rejects_duplicates() {
        let csv = "id,text\nd1,a\nd1,b\n";
        assert!(matches!(read_corpus(csv.as_bytes()), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn gold_parsing_reports_record() {
        let recs = vec![CorpusRecord::new("x", "ab $cd")];
        let err = gold_from_corpus(&recs, MissingAttach::AsWritten).unwrap_err();
        assert!(err.to_string().contains("record `x`"), "{err}");
    }

    #[test]
    fn spans_csv_round_trip() {
        let s = SpanSet::new([(0, 4).into(), (6, 6).into()], 10).unwrap();
        let mut buf = Vec::new();
        write_spans_csv(&mut buf, [("d1", &s)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "id,spans\nd1,\"[(0, 4), (6, 6)]\"\n");
        let back = read_spans_csv(text.as_bytes()).unwrap();
        assert_eq!(back, [("d1".to_string(), s.spans().to_vec())]);
    }

    #[test]
    fn spans_csv_errors() {
        assert!(matches!(read_spans_csv("id,text\n".as_bytes()), Err(Error::Schema { line: 1, .. })));
        let err = read_spans_csv("id,spans\na,[]\nb,[(1 2)]\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 3, .. }), "{err}");
    }

    #[test]
    fn predictions_round_trip_and_line_numbers() {
        let doc = PredictionDoc {
            id: "d".into(),
            text: "ab".into(),
            tokens: vec![TokenPrediction {
                start: 0,
                end: 2,
                probs: ClassProbs::one_hot(TokenLabel::B),
            }],
        };
        let mut buf = Vec::new();
        write_predictions(&mut buf, std::slice::from_ref(&doc)).unwrap();
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), [doc]);

        let bad = format!(
            "{}\n\n{}\n",
            String::from_utf8(buf.clone()).unwrap().trim(),
            r#"{"id":"e","text":"ab","tokens":[{"start":0,"end":2,"probs":{"O":0.5,"B":0.1,"I":0.0,"M":0.0}}]}"#
        );
        assert!(matches!(read_predictions(bad.as_bytes()), Err(Error::Schema { line: 3, .. })));
        assert!(matches!(read_predictions("{not json\n".as_bytes()), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn word_lists() {
        let words = read_word_list("# header\nteh\n  recieve \n\n".as_bytes()).unwrap();
        assert_eq!(words, ["teh", "recieve"].iter().map(|s| s.to_string()).collect());
    }
}
