//! Error-span detection toolkit: span sets over text, the `$`-annotated
//! format and token labels, text normalization with alignment back to the
//! original, threshold decoding and ensembling of token predictions, rule
//! detectors, Levenshtein evaluation and a seeded stratified split.
//!
//! All offsets count Unicode scalar values, never bytes.

pub mod annotation;
pub mod baseline;
pub mod decode;
pub mod error;
pub mod eval;
pub mod formats;
pub mod normalize;
pub mod pipeline;
pub mod rules;
pub mod spans;
pub mod split;

pub use annotation::{label_tokens, parse_annotated, LabeledDoc, MissingAttach, TokenLabel, TokenOffsets};
pub use baseline::BaselinePredictor;
pub use decode::{decode_spans, BareInside, ClassProbs, DecodeOptions, PredictionDoc, TokenPrediction};
pub use error::{Error, ParseError, Result};
pub use eval::{evaluate, levenshtein, EvalReport, GoldDoc};
pub use normalize::{align, map_spans_to_original, normalize, AlignmentMap, NormRules};
pub use pipeline::{EnsembleMode, Pipeline, PipelineConfig};
pub use rules::{build_lexicon, Detectors, Gazetteer, Lexicon};
pub use spans::{span_intersection, span_union, to_annotated, ErrorSpan, SerializationMode, SpanSet};
pub use split::{stratified_split, SplitMix64};
