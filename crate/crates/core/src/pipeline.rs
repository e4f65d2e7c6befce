//! End-to-end flow: decode each prediction file at the threshold, ensemble,
//! map back onto the original text, add rule detector spans, evaluate.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::annotation::MissingAttach;
use crate::decode::{decode_spans, BareInside, DecodeOptions, PredictionDoc, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, GoldDoc};
use crate::formats::{read_word_list, CorpusRecord};
use crate::normalize::{align, map_spans_to_original, NormRules};
use crate::rules::{Detectors, Gazetteer, Lexicon};
use crate::spans::{span_intersection, span_union, SerializationMode, SpanSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnsembleMode {
    Union,
    #[default]
    Intersection,
}

impl EnsembleMode {
    pub fn combine(&self, sets: &[SpanSet]) -> Result<SpanSet> {
        match self {
            EnsembleMode::Union => span_union(sets),
            EnsembleMode::Intersection => span_intersection(sets),
        }
    }
}

impl FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(EnsembleMode::Union),
            "intersection" => Ok(EnsembleMode::Intersection),
            other => Err(Error::invalid(format!(
                "unknown ensemble mode `{other}` (expected union|intersection)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Normalization table; `None` selects the bundled default.
    pub rules_path: Option<PathBuf>,
    pub threshold: f64,
    pub ensemble: EnsembleMode,
    pub serialization: SerializationMode,
    pub space_fix: bool,
    pub end_fix: bool,
    pub spell_fix: bool,
    pub exclude_punct: bool,
    pub strict_inside: bool,
    pub lexicon_path: Option<PathBuf>,
    pub gazetteer_path: Option<PathBuf>,
    pub missing_attach: MissingAttach,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rules_path: None,
            threshold: DEFAULT_THRESHOLD,
            ensemble: EnsembleMode::Intersection,
            serialization: SerializationMode::AnnotatedText,
            space_fix: false,
            end_fix: false,
            spell_fix: false,
            exclude_punct: false,
            strict_inside: false,
            lexicon_path: None,
            gazetteer_path: None,
            missing_attach: MissingAttach::AsWritten,
            seed: 42,
            jobs: None,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(Error::invalid(format!("expected a boolean, found `{other}`"))),
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("expected a number, found `{v}`")))
}

impl PipelineConfig {
    /// Sets one option by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "rules" => self.rules_path = Some(value.into()),
            "threshold" => self.threshold = parse_num(value)?,
            "ensemble" => self.ensemble = value.parse()?,
            "serialization" | "mode" => self.serialization = value.parse()?,
            "space_fix" => self.space_fix = parse_bool(value)?,
            "end_fix" => self.end_fix = parse_bool(value)?,
            "spell_fix" => self.spell_fix = parse_bool(value)?,
            "exclude_punct" => self.exclude_punct = parse_bool(value)?,
            "strict_inside" => self.strict_inside = parse_bool(value)?,
            "lexicon" => self.lexicon_path = Some(value.into()),
            "gazetteer" => self.gazetteer_path = Some(value.into()),
            "missing_attach" => self.missing_attach = value.parse()?,
            "seed" => self.seed = parse_num(value)?,
            "jobs" => self.jobs = Some(parse_num(value)?),
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines. `#` starts a comment line; values may be quoted.
    pub fn from_kv_str(src: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let schema = |message: String| Error::Schema { line: i + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| schema("expected `key = value`".into()))?;
            let v = v.trim();
            let v = v
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(v);
            cfg.set(k.trim(), v).map_err(|e| schema(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.spell_fix && self.lexicon_path.is_none() {
            return Err(Error::invalid("spell_fix needs a lexicon"));
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        Ok(())
    }

    pub fn decode_options(&self) -> DecodeOptions {
        DecodeOptions {
            threshold: self.threshold,
            bare_inside: if self.strict_inside {
                BareInside::Drop
            } else {
                BareInside::StartSpan
            },
        }
    }

    pub fn load_rules(&self) -> Result<NormRules> {
        match &self.rules_path {
            None => Ok(NormRules::default_table()),
            Some(p) => NormRules::parse_tsv(&std::fs::read_to_string(p)?),
        }
    }

    pub fn load_lexicon(&self) -> Result<Option<Lexicon>> {
        self.lexicon_path
            .as_deref()
            .map(|p| Ok(Lexicon::from_words(load_words(p)?)))
            .transpose()
    }

    pub fn load_gazetteer(&self) -> Result<Gazetteer> {
        match &self.gazetteer_path {
            Some(p) => Ok(Gazetteer::from_words(load_words(p)?)),
            None => Ok(Gazetteer::default()),
        }
    }

    pub fn detectors(&self) -> Result<Detectors> {
        let spelling = if self.spell_fix {
            let lex = self
                .load_lexicon()?
                .ok_or_else(|| Error::invalid("spell_fix needs a lexicon"))?;
            Some((lex, self.load_gazetteer()?))
        } else {
            None
        };
        Ok(Detectors {
            space_fix: self.space_fix,
            end_fix: self.end_fix,
            spelling,
            exclude_punct: self.exclude_punct,
        })
    }
}

pub fn load_words(path: &Path) -> Result<std::collections::HashSet<String>> {
    read_word_list(BufReader::new(File::open(path)?))
}

/// Final spans of one document, on its original text.
#[derive(Debug, Clone, PartialEq)]
pub struct DocOutput {
    pub id: String,
    pub text: String,
    pub spans: SpanSet,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub decode: DecodeOptions,
    pub ensemble: EnsembleMode,
    pub detectors: Detectors,
}

impl Pipeline {
    pub fn from_config(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            decode: config.decode_options(),
            ensemble: config.ensemble,
            detectors: config.detectors()?,
        })
    }

    /// Runs every document through the pipeline.
    ///
    /// `runs` holds one prediction file each; all must cover the same ids with
    /// the same normalized texts. `originals` supplies the unnormalized text
    /// per id; without it the prediction text is taken as the original.
    /// Output order follows the first prediction file.
    pub fn run(&self, runs: &[Vec<PredictionDoc>], originals: Option<&[CorpusRecord]>) -> Result<Vec<DocOutput>> {
        let first = runs
            .first()
            .ok_or_else(|| Error::invalid("no prediction files given"))?;
        let by_id: Vec<HashMap<&str, &PredictionDoc>> = runs
            .iter()
            .map(|r| r.iter().map(|d| (d.id.as_str(), d)).collect())
            .collect();
        for (k, (run, index)) in runs.iter().zip(&by_id).enumerate().skip(1) {
            if run.len() != first.len() || first.iter().any(|d| !index.contains_key(d.id.as_str())) {
                return Err(Error::invalid(format!(
                    "prediction file {} does not cover the same document ids as the first",
                    k + 1
                )));
            }
        }
        let originals: Option<HashMap<&str, &str>> =
            originals.map(|recs| recs.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect());

        first
            .par_iter()
            .map(|doc| {
                let docs: Vec<&PredictionDoc> = by_id.iter().map(|m| m[doc.id.as_str()]).collect();
                if let Some(other) = docs.iter().find(|d| d.text != doc.text) {
                    return Err(Error::invalid(format!(
                        "doc `{}`: prediction files disagree on the normalized text",
                        other.id
                    )));
                }
                let original = match &originals {
                    Some(map) => *map.get(doc.id.as_str()).ok_or_else(|| {
                        Error::invalid(format!("doc `{}` missing from the original corpus", doc.id))
                    })?,
                    None => doc.text.as_str(),
                };
                self.run_doc(&docs, original)
            })
            .collect()
    }

    fn run_doc(&self, docs: &[&PredictionDoc], original: &str) -> Result<DocOutput> {
        let decoded = docs
            .iter()
            .map(|d| decode_spans(d, &self.decode))
            .collect::<Result<Vec<_>>>()?;
        let model = self.ensemble.combine(&decoded)?;
        let on_original = map_spans_to_original(&model, &align(original, &docs[0].text))?;
        let spans = if self.detectors.is_empty() {
            on_original
        } else {
            span_union(&[on_original, self.detectors.detect(original)?])?
        };
        Ok(DocOutput {
            id: docs[0].id.clone(),
            text: original.to_string(),
            spans,
        })
    }
}

/// Scores pipeline output against gold documents.
pub fn evaluate_outputs(outputs: &[DocOutput], gold: &[GoldDoc], mode: SerializationMode) -> Result<EvalReport> {
    let preds: Vec<(String, SpanSet)> = outputs.iter().map(|o| (o.id.clone(), o.spans.clone())).collect();
    evaluate(&preds, gold, mode)
}
