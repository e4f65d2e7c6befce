use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use gedspan::annotation::{whitespace_tokens, LabeledDoc, MissingAttach};
use gedspan::decode::{decode_spans, DecodeOptions, PredictionDoc, DEFAULT_THRESHOLD};
use gedspan::eval::{evaluate, GoldDoc};
use gedspan::formats::{self, CorpusRecord};
use gedspan::pipeline::{evaluate_outputs, load_words, EnsembleMode, Pipeline, PipelineConfig};
use gedspan::rules::{build_lexicon, Detectors, Lexicon};
use gedspan::spans::{SerializationMode, SpanSet};
use gedspan::split::stratified_split;
use gedspan::{BaselinePredictor, NormRules};

/// Grammatical error span detection: decoding, ensembling, rule fixes and evaluation.
#[derive(Parser, Debug)]
#[command(name = "gedspan", version)]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply the normalization table to every text of a corpus.
    Normalize {
        /// Corpus: CSV with header `id,text`, or one text per line.
        #[arg(long)]
        input: PathBuf,
        /// Normalization table (TSV); the bundled table by default.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Output corpus CSV; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Turn a `$`-annotated corpus into token labels (JSONL).
    Label {
        #[arg(long)]
        input: PathBuf,
        /// Where `$$` insertion points next to whitespace attach: as-written, before-space, after-space.
        #[arg(long, default_value = "as-written")]
        missing_attach: MissingAttach,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Decode one prediction file into spans.
    Decode {
        /// Prediction JSONL.
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        decode: DecodeArgs,
        /// Output spans CSV; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Decode several prediction files and combine their spans per document.
    Ensemble {
        /// Prediction JSONL; repeat for each checkpoint.
        #[arg(long = "pred", required = true)]
        preds: Vec<PathBuf>,
        /// union or intersection.
        #[arg(long, default_value = "intersection")]
        mode: EnsembleMode,
        #[command(flatten)]
        decode: DecodeArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the rule detectors over a corpus.
    Rules {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        rules: RuleArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a misspelling lexicon: raw words minus dictionary words minus titles.
    BuildLexicon {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        dictionary: PathBuf,
        #[arg(long)]
        titles: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predicted spans against a gold annotated corpus.
    Evaluate {
        /// Spans CSV with header `id,spans`.
        #[arg(long)]
        pred: PathBuf,
        /// Gold corpus in the `$` annotated format.
        #[arg(long)]
        gold: PathBuf,
        /// annotated or spanlist.
        #[arg(long, default_value = "annotated")]
        mode: SerializationMode,
        #[arg(long, default_value = "as-written")]
        missing_attach: MissingAttach,
        /// Per-document distances CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Seeded train/dev split of an annotated corpus, stratified by span count.
    Split {
        #[arg(long)]
        input: PathBuf,
        /// Share of each stratum that goes to train.
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
    },
    /// Toy predictor: writes prediction JSONL from a misspelling lexicon.
    Baseline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Do not emit M for a missing sentence terminator.
        #[arg(long)]
        no_missing: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Full flow: decode, ensemble, map back to the original, add rule spans, evaluate.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Minimum probability for an error label.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Drop an I that does not follow B/I instead of starting a span.
    #[arg(long)]
    strict_inside: bool,
}

impl DecodeArgs {
    fn options(&self) -> Result<DecodeOptions> {
        let cfg = PipelineConfig {
            threshold: self.threshold,
            strict_inside: self.strict_inside,
            ..PipelineConfig::default()
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg.decode_options())
    }
}

#[derive(Args, Debug)]
struct RuleArgs {
    /// Flag whitespace before . , ? ! and the danda.
    #[arg(long)]
    space_fix: bool,
    /// Flag a missing sentence terminator.
    #[arg(long)]
    end_fix: bool,
    /// Flag lexicon words; needs --lexicon.
    #[arg(long)]
    spell_fix: bool,
    /// Space-fix spans cover only the whitespace.
    #[arg(long)]
    exclude_punct: bool,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Named entities never flagged as misspellings.
    #[arg(long)]
    gazetteer: Option<PathBuf>,
}

impl RuleArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.space_fix |= self.space_fix;
        cfg.end_fix |= self.end_fix;
        cfg.spell_fix |= self.spell_fix;
        cfg.exclude_punct |= self.exclude_punct;
        if let Some(p) = &self.lexicon {
            cfg.lexicon_path = Some(p.clone());
        }
        if let Some(p) = &self.gazetteer {
            cfg.gazetteer_path = Some(p.clone());
        }
    }
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// key = value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prediction JSONL; repeat for each checkpoint.
    #[arg(long = "pred")]
    preds: Vec<PathBuf>,
    /// Use the toy baseline with this misspelling lexicon instead of prediction files.
    #[arg(long, conflicts_with = "preds")]
    baseline: Option<PathBuf>,
    /// Keep the baseline from emitting missing-terminator labels.
    #[arg(long, requires = "baseline")]
    weak_baseline: bool,
    /// Original (unnormalized) corpus; defaults to the gold texts, then to the prediction texts.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Gold corpus in the `$` annotated format; enables evaluation.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// union or intersection.
    #[arg(long)]
    ensemble: Option<EnsembleMode>,
    /// Evaluation serialization: annotated or spanlist.
    #[arg(long)]
    mode: Option<SerializationMode>,
    #[arg(long)]
    strict_inside: bool,
    #[arg(long)]
    missing_attach: Option<MissingAttach>,
    #[command(flatten)]
    rule_args: RuleArgs,
    /// Output spans CSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-document distances CSV (with --gold).
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Bad invocation, reported with exit code 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    formats::read_corpus(open(path)?).with_context(|| format!("reading corpus {}", path.display()))
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionDoc>> {
    formats::read_predictions(open(path)?).with_context(|| format!("reading predictions {}", path.display()))
}

fn read_gold(path: &Path, attach: MissingAttach) -> Result<Vec<GoldDoc>> {
    let records = read_corpus(path)?;
    formats::gold_from_corpus(&records, attach).with_context(|| format!("reading gold {}", path.display()))
}

fn load_rules(path: Option<&Path>) -> Result<NormRules> {
    match path {
        None => Ok(NormRules::default_table()),
        Some(p) => {
            let src = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            NormRules::parse_tsv(&src).with_context(|| format!("reading rules {}", p.display()))
        }
    }
}

fn write_spans<'a>(output: Option<&Path>, rows: impl IntoIterator<Item = (&'a str, &'a SpanSet)>) -> Result<()> {
    formats::write_spans_csv(sink(output)?, rows)?;
    Ok(())
}

fn decode_all(docs: &[PredictionDoc], opts: &DecodeOptions) -> Result<Vec<SpanSet>> {
    docs.par_iter()
        .map(|d| decode_spans(d, opts).with_context(|| format!("doc `{}`", d.id)))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Normalize { input, rules, output } => {
            let rules = load_rules(rules.as_deref())?;
            let records: Vec<CorpusRecord> = read_corpus(&input)?
                .into_par_iter()
                .map(|r| CorpusRecord::new(r.id, rules.normalize(&r.text)))
                .collect();
            formats::write_corpus(sink(output.as_deref())?, &records)?;
        }
        Command::Label {
            input,
            missing_attach,
            output,
        } => {
            let gold = read_gold(&input, missing_attach)?;
            let records = gold
                .into_par_iter()
                .map(|g| {
                    let tokens = whitespace_tokens(&g.text);
                    let id = g.id.clone();
                    LabeledDoc::build(g.id, g.text, g.spans, tokens)
                        .map(|d| d.to_record())
                        .with_context(|| format!("record `{id}`"))
                })
                .collect::<Result<Vec<_>>>()?;
            formats::write_labels(sink(output.as_deref())?, &records)?;
        }
        Command::Decode { pred, decode, output } => {
            let opts = decode.options()?;
            let docs = read_predictions(&pred)?;
            let spans = decode_all(&docs, &opts)?;
            write_spans(output.as_deref(), docs.iter().map(|d| d.id.as_str()).zip(&spans))?;
        }
        Command::Ensemble {
            preds,
            mode,
            decode,
            output,
        } => {
            let pipeline = Pipeline {
                decode: decode.options()?,
                ensemble: mode,
                detectors: Detectors::default(),
            };
            let runs = preds.iter().map(|p| read_predictions(p)).collect::<Result<Vec<_>>>()?;
            let out = pipeline.run(&runs, None)?;
            write_spans(output.as_deref(), out.iter().map(|o| (o.id.as_str(), &o.spans)))?;
        }
        Command::Rules { input, rules, output } => {
            let mut cfg = PipelineConfig::default();
            rules.apply(&mut cfg);
            cfg.validate().map_err(usage)?;
            let detectors = cfg.detectors()?;
            if detectors.is_empty() {
                return Err(usage("enable at least one of --space-fix, --end-fix, --spell-fix"));
            }
            let records = read_corpus(&input)?;
            let spans = records
                .par_iter()
                .map(|r| detectors.detect(&r.text).with_context(|| format!("record `{}`", r.id)))
                .collect::<Result<Vec<_>>>()?;
            write_spans(output.as_deref(), records.iter().map(|r| r.id.as_str()).zip(&spans))?;
        }
        Command::BuildLexicon {
            raw,
            dictionary,
            titles,
            output,
        } => {
            let lex = build_lexicon(&load_words(&raw)?, &load_words(&dictionary)?, &load_words(&titles)?);
            formats::write_word_list(sink(output.as_deref())?, &lex.sorted_words())?;
        }
        Command::Evaluate {
            pred,
            gold,
            mode,
            missing_attach,
            report,
        } => {
            let gold = read_gold(&gold, missing_attach)?;
            let lens: HashMap<&str, usize> = gold.iter().map(|g| (g.id.as_str(), g.spans.text_len())).collect();
            let rows = formats::read_spans_csv(open(&pred)?).with_context(|| format!("reading spans {}", pred.display()))?;
            let preds = rows
                .into_iter()
                .map(|(id, spans)| {
                    let len = *lens
                        .get(id.as_str())
                        .ok_or_else(|| gedspan::Error::MissingIds(vec![id.clone()]))?;
                    let set = SpanSet::new(spans, len).with_context(|| format!("doc `{id}`"))?;
                    Ok((id, set))
                })
                .collect::<Result<Vec<_>>>()?;
            let report_data = evaluate(&preds, &gold, mode)?;
            if let Some(p) = &report {
                formats::write_report_csv(sink(Some(p))?, &report_data)?;
            }
            println!("{}", formats::report_summary_json(&report_data));
        }
        Command::Split {
            input,
            ratio,
            seed,
            train,
            dev,
        } => {
            let records = read_corpus(&input)?;
            let counts: HashMap<String, usize> = formats::gold_from_corpus(&records, MissingAttach::AsWritten)?
                .into_iter()
                .map(|g| (g.id, g.spans.len()))
                .collect();
            let (tr, dv) = stratified_split(records, |r| counts[&r.id], ratio, seed).map_err(usage)?;
            formats::write_corpus(sink(Some(&train))?, &tr)?;
            formats::write_corpus(sink(Some(&dev))?, &dv)?;
        }
        Command::Baseline {
            input,
            lexicon,
            rules,
            no_missing,
            output,
        } => {
            let rules = load_rules(rules.as_deref())?;
            let predictor = BaselinePredictor::new(Lexicon::from_words(load_words(&lexicon)?), !no_missing);
            let docs = predictor.predict_corpus(&read_corpus(&input)?, &rules);
            formats::write_predictions(sink(output.as_deref())?, &docs)?;
        }
        Command::Pipeline(args) => run_pipeline(args)?,
    }
    Ok(())
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let src = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            PipelineConfig::from_kv_str(&src).with_context(|| format!("config {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(p) = &args.rules {
        cfg.rules_path = Some(p.clone());
    }
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    if let Some(e) = args.ensemble {
        cfg.ensemble = e;
    }
    if let Some(m) = args.mode {
        cfg.serialization = m;
    }
    if let Some(m) = args.missing_attach {
        cfg.missing_attach = m;
    }
    cfg.strict_inside |= args.strict_inside;
    args.rule_args.apply(&mut cfg);
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn run_pipeline(args: PipelineArgs) -> Result<()> {
    if args.preds.is_empty() && args.baseline.is_none() {
        return Err(usage("give at least one --pred file or --baseline"));
    }
    let cfg = pipeline_config(&args)?;
    let pipeline = Pipeline::from_config(&cfg)?;
    let gold = args.gold.as_deref().map(|p| read_gold(p, cfg.missing_attach)).transpose()?;
    let originals: Option<Vec<CorpusRecord>> = match (&args.input, &gold) {
        (Some(p), _) => Some(read_corpus(p)?),
        (None, Some(g)) => Some(g.iter().map(|d| CorpusRecord::new(d.id.clone(), d.text.clone())).collect()),
        (None, None) => None,
    };

    let runs = match &args.baseline {
        Some(lex) => {
            let originals = originals
                .as_ref()
                .ok_or_else(|| usage("--baseline needs --input or --gold"))?;
            let predictor = BaselinePredictor::new(Lexicon::from_words(load_words(lex)?), !args.weak_baseline);
            vec![predictor.predict_corpus(originals, &cfg.load_rules()?)]
        }
        None => args.preds.iter().map(|p| read_predictions(p)).collect::<Result<Vec<_>>>()?,
    };

    let out = pipeline.run(&runs, originals.as_deref())?;
    write_spans(args.output.as_deref(), out.iter().map(|o| (o.id.as_str(), &o.spans)))?;

    if let Some(gold) = &gold {
        let report = evaluate_outputs(&out, gold, cfg.serialization)?;
        if let Some(p) = &args.report {
            formats::write_report_csv(sink(Some(p))?, &report)?;
        }
        let summary = formats::report_summary_json(&report);
        // stdout carries the spans CSV when no --output is given
        if args.output.is_some() {
            println!("{summary}");
        } else {
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
