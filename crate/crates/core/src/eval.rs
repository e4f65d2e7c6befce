//! Levenshtein metric over serialized predictions.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spans::{SerializationMode, SpanSet};

/// Edit distance counted in code points.
///
/// Two-row dynamic program over the shorter string: O(|a|·|b|) time,
/// O(min(|a|, |b|)) space.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }

    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lc != sc);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// A gold document: clean text and its spans.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldDoc {
    pub id: String,
    pub text: String,
    pub spans: SpanSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocDistance {
    pub id: String,
    pub distance: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_doc: Vec<DocDistance>,
    pub mean_distance: f64,
    pub serialization: SerializationMode,
}

/// The JSON summary written next to the per-document CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub mean: f64,
    pub count: usize,
    pub serialization: &'static str,
}

impl EvalReport {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            mean: self.mean_distance,
            count: self.per_doc.len(),
            serialization: self.serialization.as_str(),
        }
    }

    pub fn total_distance(&self) -> usize {
        self.per_doc.iter().map(|d| d.distance).sum()
    }
}

/// Distance between the serialized prediction and the serialized gold, per
/// predicted document, plus the mean over documents.
pub fn evaluate(preds: &[(String, SpanSet)], gold: &[GoldDoc], mode: SerializationMode) -> Result<EvalReport> {
    let gold_by_id: HashMap<&str, &GoldDoc> = gold.iter().map(|g| (g.id.as_str(), g)).collect();

    let mut seen = HashSet::new();
    let mut missing = Vec::new();
    for (id, _) in preds {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
        if !gold_by_id.contains_key(id.as_str()) {
            missing.push(id.clone());
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }

    let per_doc = preds
        .par_iter()
        .map(|(id, pred)| {
            let g = gold_by_id[id.as_str()];
            if pred.text_len() != g.spans.text_len() {
                return Err(Error::invalid(format!(
                    "doc `{id}`: prediction indexes {} characters, gold text has {}",
                    pred.text_len(),
                    g.spans.text_len()
                )));
            }
            let p = mode.render(&g.text, pred)?;
            let t = mode.render(&g.text, &g.spans)?;
            Ok(DocDistance {
                id: id.clone(),
                distance: levenshtein(&p, &t),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_distance = if per_doc.is_empty() {
        0.0
    } else {
        per_doc.iter().map(|d| d.distance as f64).sum::<f64>() / per_doc.len() as f64
    };
    Ok(EvalReport {
        per_doc,
        mean_distance,
        serialization: mode,
    })
}
