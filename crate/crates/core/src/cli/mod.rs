//! Command-line pipeline: validate, build-inflections, annotate, synthesize,
//! train, evaluate, compare.

pub mod config;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{
    AnnotateConfig, CorpusSpec, EvalConfig, LexiconSpec, ResourcePaths, RunConfig, Stage, Violation, ViolationCode,
};

use crate::codeswitch::{
    read_dataset, synthesize_corpus, InflectionMaps, KbResources, LexiconSet, Manifest, Mode, SourceItem,
    SynthesisError, SynthesisResources,
};
use crate::eval::{
    bleu, classify, corpus_chrf, dibimt_score, read_dibimt_items, read_hypotheses, t_test, ChrfParams, DibimtItem,
    DibimtReport, Outcome,
};
use crate::lexicon::{BilingualLexicon, InflectionMap, Lemmatizer};
use crate::seeding::derive_seed;
use crate::sense_inventory::SenseInventory;
use crate::trainer::{self, load_checkpoint, save_checkpoint, save_curve_csv, translate_with_prefix, TextPair, TrainError};
use crate::wsd::{annotation_line, baseline_disambiguate, AnnotatedStream, CandidateIndex, CorpusReader, CorpusSentence, WsdError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "senseswitch", version, about = "Sense-pivoted code-switching data synthesis and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the noising mode.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Override the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "aa" => Ok(Mode::Aa),
        "wsp" => Ok(Mode::Wsp),
        _ => Err(format!("unknown mode {s:?}; expected aa or wsp")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the config, its paths and cross-resource consistency.
    Validate,
    /// Build target-side inflection maps from lexicons and lemma tables.
    BuildInflections,
    /// Sense-annotate the corpora with the knowledge-based baseline.
    Annotate,
    /// Write the code-switched dataset and its manifest.
    Synthesize,
    /// Train the reference model on the synthesized dataset.
    Train,
    /// Score a checkpoint or a hypothesis file on the test set.
    Evaluate(EvaluateArgs),
    /// Compare two groups of hypothesis files with a t-test.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint to decode with (default: <out>/train/checkpoint.json).
    #[arg(long, conflicts_with = "hypotheses")]
    pub checkpoint: Option<PathBuf>,
    /// Pre-computed hypotheses, JSONL `{id, hyp}`.
    #[arg(long)]
    pub hypotheses: Option<PathBuf>,
    /// Report name under <out>/eval/.
    #[arg(long, default_value = "default")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Hypothesis files of system A (one per run).
    #[arg(long, num_args = 1.., required = true)]
    pub a: Vec<PathBuf>,
    /// Hypothesis files of system B (one per run).
    #[arg(long, num_args = 1.., required = true)]
    pub b: Vec<PathBuf>,
    #[arg(long, default_value = "default")]
    pub name: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration")]
    Config(Vec<Violation>),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Config(c) => CliError::Config(vec![Violation {
                code: ViolationCode::Range,
                field: "noising".into(),
                message: c.to_string(),
            }]),
            SynthesisError::MissingResource { .. } => CliError::Config(vec![Violation {
                code: ViolationCode::ModeResource,
                field: "noising.mode".into(),
                message: e.to_string(),
            }]),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Divergence(e.to_string()),
            TrainError::Config(_) | TrainError::Temperature(_) | TrainError::EmptyDenominator => {
                CliError::Config(vec![Violation { code: ViolationCode::Schema, field: "train".into(), message: e.to_string() }])
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Exclusive hold on an output directory for the life of a command.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub const FILE: &'static str = ".senseswitch.lock";

    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(Self::FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Data(format!(
                "{} exists: another command is writing to this directory (remove the file if it is stale)",
                path.display()
            ))),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(data)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Parses args, runs the command and prints its JSON summary. Returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            EXIT_OK
        }
        Err(e) => {
            match &e {
                CliError::Config(vs) => {
                    let report = json!({ "ok": false, "violations": vs });
                    println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
                    for v in vs {
                        eprintln!("error: {v}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            e.exit_code()
        }
    }
}

pub fn load_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let path = global.config.as_ref().ok_or_else(|| {
        CliError::Config(vec![Violation {
            code: ViolationCode::Path,
            field: "--config".into(),
            message: "no config file given".into(),
        }])
    })?;
    let mut cfg = RunConfig::load(path).map_err(|v| CliError::Config(vec![v]))?;
    cfg.apply_overrides(global.seed, global.mode, global.out.clone());
    Ok(cfg)
}

fn checked(cfg: &RunConfig, stage: Stage) -> Result<(), CliError> {
    let v = cfg.validate(stage);
    if v.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(v))
    }
}

pub fn run(cli: &Cli) -> Result<Value, CliError> {
    let cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Validate => {
            checked(&cfg, Stage::Validate)?;
            Ok(json!({ "ok": true, "violations": [] }))
        }
        Command::BuildInflections => cmd_build_inflections(&cfg),
        Command::Annotate => cmd_annotate(&cfg),
        Command::Synthesize => cmd_synthesize(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
        Command::Compare(a) => cmd_compare(&cfg, a),
    }
}

struct Loaded {
    inventory: Option<SenseInventory>,
    lexicons: LexiconSet,
    lemmatizer: Lemmatizer,
}

fn load_resources(cfg: &RunConfig, inventory: bool) -> Result<Loaded, CliError> {
    let inventory = match (&cfg.resources.inventory, inventory) {
        (Some(p), true) => Some(SenseInventory::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?),
        _ => None,
    };
    let mut lexicons = LexiconSet::new();
    for l in &cfg.resources.lexicons {
        let (lex, report) = BilingualLexicon::load(&l.path, &l.src, &l.tgt).map_err(data)?;
        if report.skipped > 0 {
            log::warn!("{}: skipped {} malformed lines", l.path.display(), report.skipped);
        }
        lexicons.insert(lex);
    }
    let mut lemmatizer = Lemmatizer::new();
    for (lang, p) in &cfg.resources.lemma_tables {
        lemmatizer.load_table(lang, p).map_err(data)?;
    }
    Ok(Loaded { inventory, lexicons, lemmatizer })
}

fn cmd_build_inflections(cfg: &RunConfig) -> Result<Value, CliError> {
    checked(cfg, Stage::BuildInflections)?;
    let res = load_resources(cfg, false)?;
    let dir = cfg.out_dir.join("inflections");
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut summary = BTreeMap::new();
    for lex in res.lexicons.iter() {
        let map = InflectionMap::build(lex, &res.lemmatizer);
        let path = dir.join(format!("{}-{}.tsv", lex.src_lang(), lex.tgt_lang()));
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for (src, lemma, inflected) in map.sorted_entries() {
            writeln!(w, "{src}\t{lemma}\t{inflected}").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        summary.insert(
            format!("{}-{}", lex.src_lang(), lex.tgt_lang()),
            json!({ "lexicon_entries": lex.len(), "entries": map.len(), "collisions": map.collision_count() }),
        );
    }
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(json!({ "inflections": summary }))
}

fn cmd_annotate(cfg: &RunConfig) -> Result<Value, CliError> {
    checked(cfg, Stage::Annotate)?;
    let res = load_resources(cfg, true)?;
    let inv = res.inventory.as_ref().expect("validated");
    let dir = cfg.out_dir.join("annotations");
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut indexes: HashMap<String, CandidateIndex<'_>> = HashMap::new();
    let mut summary = BTreeMap::new();
    for c in &cfg.corpora {
        let path = dir.join(format!("{}.jsonl", c.name));
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        let (mut sentences, mut annotations) = (0usize, 0usize);
        for s in CorpusReader::open(&c.path).map_err(data)? {
            let s = s.map_err(data)?;
            let idx = indexes.entry(s.lang.clone()).or_insert_with(|| CandidateIndex::build(inv, &s.lang));
            let lem = res.lemmatizer.has_language(&s.lang).then_some(&res.lemmatizer);
            let anns = baseline_disambiguate(idx, &s.tokens, None, lem, cfg.annotate.strategy, cfg.annotate.window);
            sentences += 1;
            annotations += anns.len();
            writeln!(w, "{}", annotation_line(&s.id, &anns)).map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        summary.insert(c.name.clone(), json!({ "sentences": sentences, "annotations": annotations, "file": path }));
    }
    Ok(json!({ "annotate": summary }))
}

type SentenceIter = Box<dyn Iterator<Item = Result<CorpusSentence, WsdError>>>;

struct CorpusSource {
    name: String,
    stream: AnnotatedStream<SentenceIter>,
    target: Option<CorpusReader<std::io::BufReader<File>>>,
}

fn next_item(src: &mut CorpusSource) -> Option<Result<SourceItem, SynthesisError>> {
    let s = match src.stream.next()? {
        Ok(s) => s,
        Err(e) => return Some(Err(e.into())),
    };
    let Some(target) = src.target.as_mut() else {
        return Some(Ok(SourceItem::Monolingual(s)));
    };
    Some(match target.next() {
        None => Err(SynthesisError::Data(format!("{}: target side ends before sentence {}", src.name, s.sentence_id))),
        Some(Err(e)) => Err(e.into()),
        Some(Ok(t)) if t.id != s.sentence_id => Err(SynthesisError::Data(format!(
            "{}: source sentence {} is aligned with target sentence {}",
            src.name, s.sentence_id, t.id
        ))),
        Some(Ok(t)) => Ok(SourceItem::Parallel { source: s, target: t }),
    })
}

/// Stage seed for `stage` under the run's global seed.
pub fn stage_seed(cfg: &RunConfig, stage: &str) -> u64 {
    derive_seed(cfg.seed, stage)
}

fn cmd_synthesize(cfg: &RunConfig) -> Result<Value, CliError> {
    checked(cfg, Stage::Synthesize)?;
    let wsp = cfg.noising.mode == Mode::Wsp;
    let res = load_resources(cfg, wsp)?;
    let mut noising = cfg.noising.clone();
    noising.seed = stage_seed(cfg, "synthesize");

    let mut inflections = InflectionMaps::new();
    if wsp {
        for lex in res.lexicons.iter() {
            inflections.insert(InflectionMap::build(lex, &res.lemmatizer));
        }
    }
    let kb = res.inventory.as_ref().map(|inventory| KbResources {
        inventory,
        inflections: &inflections,
        lemmatizer: &res.lemmatizer,
    });
    let resources = match cfg.noising.mode {
        Mode::Aa => SynthesisResources { lexicons: Some(&res.lexicons), kb: None },
        Mode::Wsp => SynthesisResources { lexicons: None, kb },
    };

    let mut sources = Vec::with_capacity(cfg.corpora.len());
    for c in &cfg.corpora {
        let anns = match (&c.annotations, wsp) {
            (Some(p), true) => crate::wsd::read_annotation_file(p).map_err(data)?,
            _ => HashMap::new(),
        };
        let reader: SentenceIter = Box::new(CorpusReader::open(&c.path).map_err(data)?);
        let target = c.target.as_ref().map(CorpusReader::open).transpose().map_err(data)?;
        sources.push(CorpusSource { name: c.name.clone(), stream: AnnotatedStream::new(reader, anns), target });
    }

    let out = cfg.synthesis_dir();
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let items = sources.iter_mut().flat_map(|s| std::iter::from_fn(move || next_item(s)));
    let (mut manifest, timing) = synthesize_corpus(items, resources, &noising, &cfg.synthesis, &out)?;
    for s in &mut sources {
        if let Some(Ok(extra)) = s.target.as_mut().and_then(|t| t.next()) {
            return Err(CliError::Data(format!("{}: target side has extra sentence {}", s.name, extra.id)));
        }
        if wsp {
            manifest.annotation.insert(s.name.clone(), s.stream.stats().clone());
        }
    }
    manifest.write(out.join("manifest.json"))?;
    write_json(&out.join("synthesis.timing.json"), &timing)?;
    Ok(json!({
        "mode": manifest.mode,
        "pairs": manifest.totals.pairs,
        "eligible_tokens": manifest.totals.eligible_tokens,
        "substituted_tokens": manifest.totals.substituted_tokens,
        "achieved_ratio": manifest.achieved_ratio,
        "by_method": manifest.totals.by_method,
        "manifest": out.join("manifest.json"),
        "pairs_per_sec": timing.pairs_per_sec,
    }))
}

/// Reads the synthesized dataset as training pairs.
pub fn load_training_pairs(synthesis_dir: &Path) -> Result<Vec<TextPair>, CliError> {
    let manifest = Manifest::read(synthesis_dir.join("manifest.json"))?;
    Ok(read_dataset(synthesis_dir, &manifest)?
        .into_iter()
        .map(|r| TextPair { source: r.src, target: r.tgt })
        .collect())
}

fn cmd_train(cfg: &RunConfig) -> Result<Value, CliError> {
    checked(cfg, Stage::Train)?;
    let pairs = load_training_pairs(&cfg.synthesis_dir())?;
    let mut tc = cfg.train.clone();
    tc.seed = stage_seed(cfg, "train");
    let dir = cfg.train_dir();
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let outcome = trainer::train(&pairs, &tc)?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    save_checkpoint(&outcome.model, &dir.join("checkpoint.json")).map_err(data)?;
    save_curve_csv(&dir.join("loss_curve.csv"), &outcome.curve).map_err(io_err(&dir))?;
    let first = outcome.curve.first();
    let last = outcome.curve.last();
    Ok(json!({
        "pairs": pairs.len(),
        "steps": outcome.curve.len(),
        "vocab": outcome.model.vocab_size(),
        "initial_loss_ce": first.map(|p| p.loss_ce),
        "final_loss_ce": last.map(|p| p.loss_ce),
        "checkpoint": dir.join("checkpoint.json"),
    }))
}

/// Greedy translation of each test item's source sentence. The source
/// language tag is prepended, the decoder is primed with the target
/// language tag, and leading language tags in the output are dropped.
pub fn decode_items(
    model: &trainer::ModelParams,
    items: &[DibimtItem],
    noising: &crate::codeswitch::NoisingConfig,
    source_lang: Option<&str>,
    target_lang: Option<&str>,
    max_len: usize,
) -> Result<HashMap<String, String>, CliError> {
    let (prefix, suffix) = noising.lang_token_format.split_once("{lang}").unwrap_or(("", ""));
    let is_tag = |t: &str| t.len() > prefix.len() + suffix.len() && t.starts_with(prefix) && t.ends_with(suffix);
    let mut out = HashMap::with_capacity(items.len());
    for it in items {
        let mut src: Vec<String> = source_lang.map(|l| noising.lang_token(l)).into_iter().collect();
        src.extend(it.source_sentence.split_whitespace().map(str::to_string));
        let prefix: Vec<String> = target_lang.map(|l| noising.lang_token(l)).into_iter().collect();
        let hyp = translate_with_prefix(model, &src, &prefix, max_len)?;
        let words: Vec<&str> = hyp.iter().map(String::as_str).skip_while(|t| is_tag(t)).collect();
        out.insert(it.id.clone(), words.join(" "));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct EvalReport {
    dibimt: DibimtReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chrf: Option<f64>,
    unknown_hypothesis_ids: Vec<String>,
    source: String,
}

fn read_references(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        match (v["id"].as_str(), v["ref"].as_str()) {
            (Some(id), Some(r)) => {
                out.insert(id.to_string(), r.to_string());
            }
            _ => return Err(CliError::Data(format!("{}:{}: expected {{id, ref}}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<Value, CliError> {
    checked(cfg, Stage::Evaluate)?;
    let items = read_dibimt_items(cfg.eval.test_set.as_ref().expect("validated")).map_err(data)?;
    let res = load_resources(cfg, false)?;
    let (hyps, source) = match &args.hypotheses {
        Some(p) => (read_hypotheses(p).map_err(data)?, p.display().to_string()),
        None => {
            let ck = args.checkpoint.clone().unwrap_or_else(|| cfg.train_dir().join("checkpoint.json"));
            let model = load_checkpoint(&ck).map_err(data)?;
            let h = decode_items(
                &model,
                &items,
                &cfg.noising,
                cfg.eval.source_lang.as_deref(),
                cfg.eval.target_lang.as_deref(),
                cfg.eval.max_decode_len,
            )?;
            (h, ck.display().to_string())
        }
    };
    let lang = cfg.eval.target_lang.clone().unwrap_or_default();
    let dibimt = dibimt_score(&items, &hyps, Some(&res.lemmatizer), &lang);
    let known: std::collections::HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
    let mut unknown: Vec<String> = hyps.keys().filter(|k| !known.contains(k.as_str())).cloned().collect();
    unknown.sort();

    let (mut bleu_score, mut chrf_score) = (None, None);
    if let Some(rp) = &cfg.eval.references {
        let refs = read_references(rp)?;
        let mut h = Vec::new();
        let mut r = Vec::new();
        for it in &items {
            if let Some(rr) = refs.get(&it.id) {
                h.push(hyps.get(&it.id).cloned().unwrap_or_default());
                r.push(rr.clone());
            }
        }
        if !h.is_empty() {
            bleu_score = Some(bleu(&h, &r, 4).map_err(data)?.score);
            chrf_score = Some(corpus_chrf(&h, &r, ChrfParams::default()).map_err(data)?);
        }
    }

    let dir = cfg.out_dir.join("eval").join(&args.name);
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let hyp_path = dir.join("hypotheses.jsonl");
    let mut w = BufWriter::new(File::create(&hyp_path).map_err(io_err(&hyp_path))?);
    for it in &items {
        if let Some(h) = hyps.get(&it.id) {
            writeln!(w, "{}", json!({ "id": it.id, "hyp": h })).map_err(io_err(&hyp_path))?;
        }
    }
    w.flush().map_err(io_err(&hyp_path))?;
    let report = EvalReport { dibimt, bleu: bleu_score, chrf: chrf_score, unknown_hypothesis_ids: unknown, source };
    write_json(&dir.join("report.json"), &report)?;
    serde_json::to_value(&report).map_err(data)
}

/// 1 for a good translation, 0 for a bad one; unmatched items are skipped.
pub fn item_scores(items: &[DibimtItem], hyps: &HashMap<String, String>, lem: Option<&Lemmatizer>, lang: &str) -> Vec<f64> {
    items
        .iter()
        .filter_map(|it| match classify(it, hyps.get(&it.id).map(String::as_str), lem, lang) {
            Outcome::Good => Some(1.0),
            Outcome::Bad => Some(0.0),
            _ => None,
        })
        .collect()
}

fn cmd_compare(cfg: &RunConfig, args: &CompareArgs) -> Result<Value, CliError> {
    checked(cfg, Stage::Compare)?;
    let items = read_dibimt_items(cfg.eval.test_set.as_ref().expect("validated")).map_err(data)?;
    let res = load_resources(cfg, false)?;
    let lang = cfg.eval.target_lang.clone().unwrap_or_default();
    let score_side = |files: &[PathBuf]| -> Result<(Vec<DibimtReport>, Vec<f64>), CliError> {
        let mut reports = Vec::new();
        let mut per_item = Vec::new();
        for f in files {
            let h = read_hypotheses(f).map_err(data)?;
            reports.push(dibimt_score(&items, &h, Some(&res.lemmatizer), &lang));
            per_item.extend(item_scores(&items, &h, Some(&res.lemmatizer), &lang));
        }
        Ok((reports, per_item))
    };
    let (ra, ia) = score_side(&args.a)?;
    let (rb, ib) = score_side(&args.b)?;
    // several runs per side: compare run-level accuracies; one run: compare items
    let (unit, sa, sb) = if args.a.len() >= 2 && args.b.len() >= 2 {
        ("run", ra.iter().map(|r| r.accuracy()).collect::<Vec<_>>(), rb.iter().map(|r| r.accuracy()).collect())
    } else {
        ("item", ia, ib)
    };
    let test = t_test(&sa, &sb).map_err(data)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let report = json!({
        "unit": unit,
        "a": { "files": args.a, "accuracy": ra.iter().map(|r| r.accuracy()).collect::<Vec<_>>(), "mean": mean(&sa) },
        "b": { "files": args.b, "accuracy": rb.iter().map(|r| r.accuracy()).collect::<Vec<_>>(), "mean": mean(&sb) },
        "t": test.t,
        "df": test.df,
        "p_value": test.p_value,
    });
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("compare").join(format!("{}.json", args.name)), &report)?;
    Ok(report)
}
