//! Python bindings for sense inventories, lexicons, code-switching,
//! the reference trainer and the evaluation metrics.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use senseswitch::codeswitch::{self as cs, InflectionMaps, KbResources, LexiconSet, Mode};
use senseswitch::eval::{self, ChrfParams, DibimtItem};
use senseswitch::lexicon;
use senseswitch::seeding::item_rng;
use senseswitch::sense_inventory::{self as inv, SynsetId};
use senseswitch::trainer::{self, TextPair};
use senseswitch::wsd::{AnnotatedSentence, TokenAnnotation};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn synset_id(id: &str) -> PyResult<SynsetId> {
    SynsetId::new(id).map_err(value_err)
}

#[pyclass(name = "SenseInventory", module = "senseswitch_py")]
pub struct SenseInventory {
    inner: inv::SenseInventory,
}

#[pymethods]
impl SenseInventory {
    /// Loads a JSON-lines inventory file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(SenseInventory {
            inner: inv::SenseInventory::load(path).map_err(value_err)?,
        })
    }

    /// Parses JSON-lines inventory text.
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        Ok(SenseInventory {
            inner: inv::SenseInventory::from_reader(text.as_bytes(), "<string>").map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn languages(&self) -> Vec<String> {
        self.inner.languages().iter().cloned().collect()
    }

    fn translations(&self, synset: &str, lang: &str) -> PyResult<Vec<String>> {
        let id = synset_id(synset)?;
        self.inner
            .translations(&id, lang)
            .map(<[String]>::to_vec)
            .map_err(|e| PyKeyError::new_err(e.to_string()))
    }

    /// `(lemma, provenance, path)` triples, walking similar and hypernym
    /// edges when the synset has no lemma in `lang`.
    #[pyo3(signature = (synset, lang, max_hops = 2))]
    fn translations_with_fallback(
        &self,
        synset: &str,
        lang: &str,
        max_hops: usize,
    ) -> PyResult<Vec<(String, String, Vec<String>)>> {
        let id = synset_id(synset)?;
        let found = self
            .inner
            .translations_with_fallback(&id, lang, max_hops)
            .map_err(|e| PyKeyError::new_err(e.to_string()))?;
        Ok(found
            .into_iter()
            .map(|t| {
                let path = t.path.iter().map(|s| s.as_str().to_string()).collect();
                (t.lemma, t.provenance.to_string(), path)
            })
            .collect())
    }
}

#[pyclass(name = "BilingualLexicon", module = "senseswitch_py", skip_from_py_object)]
#[derive(Clone)]
pub struct BilingualLexicon {
    inner: lexicon::BilingualLexicon,
}

#[pymethods]
impl BilingualLexicon {
    /// Loads a `source target` pair file; returns the lexicon and the number
    /// of skipped lines.
    #[staticmethod]
    fn load(path: PathBuf, src_lang: &str, tgt_lang: &str) -> PyResult<(Self, usize)> {
        let (inner, report) = lexicon::BilingualLexicon::load(path, src_lang, tgt_lang).map_err(value_err)?;
        Ok((BilingualLexicon { inner }, report.skipped))
    }

    #[staticmethod]
    fn from_pairs(src_lang: &str, tgt_lang: &str, pairs: Vec<(String, String)>) -> Self {
        BilingualLexicon {
            inner: lexicon::BilingualLexicon::from_pairs(src_lang, tgt_lang, pairs),
        }
    }

    #[getter]
    fn src_lang(&self) -> &str {
        self.inner.src_lang()
    }

    #[getter]
    fn tgt_lang(&self) -> &str {
        self.inner.tgt_lang()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }

    fn candidates(&self, word: &str) -> Vec<String> {
        self.inner.candidates(word).map(str::to_string).collect()
    }
}

#[pyclass(name = "Lemmatizer", module = "senseswitch_py", skip_from_py_object)]
#[derive(Clone, Default)]
pub struct Lemmatizer {
    inner: lexicon::Lemmatizer,
}

#[pymethods]
impl Lemmatizer {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    /// Loads a `word<TAB>lemma` table for `lang`; returns the number of rows.
    fn load_table(&mut self, lang: &str, path: PathBuf) -> PyResult<usize> {
        self.inner.load_table(lang, path).map_err(value_err)
    }

    fn insert_table(&mut self, lang: &str, pairs: Vec<(String, String)>) -> PyResult<()> {
        self.inner
            .insert_table(lang, pairs)
            .map_err(|(lemma, to)| PyValueError::new_err(format!("lemma {lemma:?} maps to {to:?}")))
    }

    fn lemmatize(&self, lang: &str, word: &str) -> String {
        self.inner.lemmatize(lang, word).to_string()
    }

    fn is_lemma(&self, lang: &str, word: &str) -> bool {
        self.inner.is_lemma(lang, word)
    }
}

#[pyclass(name = "InflectionMap", module = "senseswitch_py", skip_from_py_object)]
#[derive(Clone)]
pub struct InflectionMap {
    inner: lexicon::InflectionMap,
}

#[pymethods]
impl InflectionMap {
    /// Builds the `(source word, target lemma) -> target word` map from a
    /// lexicon and a target-language lemmatizer.
    #[staticmethod]
    fn build(lexicon: &BilingualLexicon, lemmatizer: &Lemmatizer) -> Self {
        InflectionMap {
            inner: lexicon::InflectionMap::build(&lexicon.inner, &lemmatizer.inner),
        }
    }

    fn inflect(&self, source_word: &str, target_lemma: &str) -> Option<String> {
        self.inner.inflect(source_word, target_lemma).map(str::to_string)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn collision_count(&self) -> usize {
        self.inner.collision_count()
    }
}

#[pyclass(name = "NoisingConfig", module = "senseswitch_py", skip_from_py_object)]
#[derive(Clone)]
pub struct NoisingConfig {
    inner: cs::NoisingConfig,
}

#[pymethods]
impl NoisingConfig {
    #[new]
    #[pyo3(signature = (mode, target_langs, replacement_ratio = 0.1, seed = 0, use_morph_inflection = true, lowercase_sources = true))]
    fn new(
        mode: &str,
        target_langs: Vec<String>,
        replacement_ratio: f64,
        seed: u64,
        use_morph_inflection: bool,
        lowercase_sources: bool,
    ) -> PyResult<Self> {
        let mode = match mode {
            "aa" => Mode::Aa,
            "wsp" => Mode::Wsp,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}, expected \"aa\" or \"wsp\""))),
        };
        let langs: Vec<&str> = target_langs.iter().map(String::as_str).collect();
        let mut inner = cs::NoisingConfig::new(mode, replacement_ratio, &langs);
        inner.seed = seed;
        inner.use_morph_inflection = use_morph_inflection;
        inner.lowercase_sources = lowercase_sources;
        inner.validate().map_err(value_err)?;
        Ok(NoisingConfig { inner })
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn replacement_ratio(&self) -> f64 {
        self.inner.replacement_ratio
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn lang_token(&self, lang: &str) -> String {
        self.inner.lang_token(lang)
    }
}

#[pyclass(name = "NoisedSentence", module = "senseswitch_py", get_all)]
pub struct NoisedSentence {
    tokens: Vec<String>,
    eligible: usize,
    substitutions_json: Vec<String>,
}

#[pymethods]
impl NoisedSentence {
    /// Substitutions as dictionaries with keys `i`, `n`, `original`,
    /// `replacement`, `translation`, `method`, `target_lang` and, for
    /// knowledge-base replacements, `synset`, `provenance` and `path`.
    fn substitutions<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
        self.substitutions_json.iter().map(|s| json_to_py(py, s)).collect()
    }
}

impl From<cs::NoisedSentence> for NoisedSentence {
    fn from(n: cs::NoisedSentence) -> Self {
        NoisedSentence {
            tokens: n.tokens,
            eligible: n.eligible,
            substitutions_json: n
                .substitutions
                .iter()
                .map(|s| serde_json::to_string(s).expect("substitution serializes"))
                .collect(),
        }
    }
}

fn lexicon_set(lexicons: &[PyRef<'_, BilingualLexicon>]) -> LexiconSet {
    let mut set = LexiconSet::new();
    for l in lexicons {
        set.insert(l.inner.clone());
    }
    set
}

/// Sense-agnostic code-switching of one sentence. Randomness comes from the
/// stream `(config.seed, index)`.
#[pyfunction]
#[pyo3(signature = (tokens, src_lang, lexicons, config, index = 0))]
fn noise_aa(
    tokens: Vec<String>,
    src_lang: &str,
    lexicons: Vec<PyRef<'_, BilingualLexicon>>,
    config: &NoisingConfig,
    index: u64,
) -> NoisedSentence {
    let set = lexicon_set(&lexicons);
    let mut rng = item_rng(config.inner.seed, index);
    cs::noise_aa(&tokens, src_lang, &set, &config.inner, &mut rng).into()
}

/// Sense-pivoted code-switching of one annotated sentence. Each annotation
/// is `(token_index, span_len, lemma, pos, synset)`.
#[pyfunction]
#[pyo3(signature = (tokens, language, annotations, inventory, config, inflections = Vec::new(), lemmatizer = None, index = 0))]
#[allow(clippy::too_many_arguments)]
fn noise_wsp(
    tokens: Vec<String>,
    language: &str,
    annotations: Vec<(usize, usize, String, String, String)>,
    inventory: &SenseInventory,
    config: &NoisingConfig,
    inflections: Vec<PyRef<'_, InflectionMap>>,
    lemmatizer: Option<&Lemmatizer>,
    index: u64,
) -> PyResult<NoisedSentence> {
    let annotations = annotations
        .into_iter()
        .map(|(token_index, span_len, lemma, pos, synset)| {
            Ok(TokenAnnotation {
                token_index,
                span_len,
                lemma,
                pos,
                synset: synset_id(&synset)?,
                confidence: 1.0,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let sentence = AnnotatedSentence {
        sentence_id: index.to_string(),
        language: language.to_string(),
        tokens,
        annotations,
    };
    let mut maps = InflectionMaps::new();
    for m in &inflections {
        maps.insert(m.inner.clone());
    }
    let empty = lexicon::Lemmatizer::new();
    let kb = KbResources {
        inventory: &inventory.inner,
        inflections: &maps,
        lemmatizer: lemmatizer.map_or(&empty, |l| &l.inner),
    };
    let mut rng = item_rng(config.inner.seed, index);
    Ok(cs::noise_wsp(&sentence, kb, &config.inner, &mut rng).into())
}

#[pyclass(name = "Model", module = "senseswitch_py")]
pub struct Model {
    inner: trainer::ModelParams,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: trainer::load_checkpoint(&path).map_err(value_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        trainer::save_checkpoint(&self.inner, &path).map_err(value_err)
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Greedy translation; a non-empty `prefix` (usually the target language
    /// token) primes the decoder and starts the output.
    #[pyo3(signature = (source, prefix = Vec::new(), max_len = 64))]
    fn translate(&self, source: Vec<String>, prefix: Vec<String>, max_len: usize) -> PyResult<Vec<String>> {
        trainer::translate_with_prefix(&self.inner, &source, &prefix, max_len).map_err(value_err)
    }
}

/// Trains the reference model on `(source tokens, target tokens)` pairs.
/// Returns the model and the loss curve as `(step, total, ce, con)` tuples.
#[pyfunction]
#[pyo3(signature = (pairs, dim = 16, steps = 1000, batch_size = 16, learning_rate = 0.05, temperature = 0.1, label_smoothing = 0.1, contrastive_lambda = 1.0, seed = 0, max_grad_norm = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    pairs: Vec<(Vec<String>, Vec<String>)>,
    dim: usize,
    steps: usize,
    batch_size: usize,
    learning_rate: f64,
    temperature: f64,
    label_smoothing: f64,
    contrastive_lambda: f64,
    seed: u64,
    max_grad_norm: Option<f64>,
) -> PyResult<(Model, Vec<(usize, f64, f64, f64)>)> {
    let pairs: Vec<TextPair> = pairs.iter().map(|(s, t)| TextPair::new(s, t)).collect();
    let cfg = trainer::TrainConfig {
        dim,
        steps,
        batch_size,
        learning_rate,
        temperature,
        label_smoothing,
        contrastive_lambda,
        seed,
        max_grad_norm,
        ..trainer::TrainConfig::default()
    };
    let outcome = py.detach(|| trainer::train(&pairs, &cfg)).map_err(value_err)?;
    let curve = outcome.curve.iter().map(|p| (p.step, p.total, p.loss_ce, p.loss_con)).collect();
    Ok((Model { inner: outcome.model }, curve))
}

/// Scores hypotheses (`{item id: text}`) against a DiBiMT-style JSON-lines
/// item file. Returns the report as a dictionary.
#[pyfunction]
#[pyo3(signature = (items_path, hypotheses, lang, lemmatizer = None))]
fn dibimt_score<'py>(
    py: Python<'py>,
    items_path: PathBuf,
    hypotheses: HashMap<String, String>,
    lang: &str,
    lemmatizer: Option<&Lemmatizer>,
) -> PyResult<Bound<'py, PyAny>> {
    let items: Vec<DibimtItem> = eval::read_dibimt_items(&items_path).map_err(value_err)?;
    let report = eval::dibimt_score(&items, &hypotheses, lemmatizer.map(|l| &l.inner), lang);
    json_to_py(py, &serde_json::to_string(&report).map_err(value_err)?)
}

/// Sentence-level chrF (chrF++ with the default word order of 2).
#[pyfunction]
#[pyo3(signature = (hypothesis, reference, char_order = 6, word_order = 2, beta = 2.0))]
fn chrf(hypothesis: &str, reference: &str, char_order: usize, word_order: usize, beta: f64) -> PyResult<f64> {
    eval::chrf(hypothesis, reference, ChrfParams { char_order, word_order, beta }).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (hypotheses, references, char_order = 6, word_order = 2, beta = 2.0))]
fn corpus_chrf(
    hypotheses: Vec<String>,
    references: Vec<String>,
    char_order: usize,
    word_order: usize,
    beta: f64,
) -> PyResult<f64> {
    eval::corpus_chrf(&hypotheses, &references, ChrfParams { char_order, word_order, beta }).map_err(value_err)
}

/// Corpus BLEU over whitespace tokens.
#[pyfunction]
#[pyo3(signature = (hypotheses, references, max_order = 4))]
fn bleu(hypotheses: Vec<String>, references: Vec<String>, max_order: usize) -> PyResult<f64> {
    Ok(eval::bleu(&hypotheses, &references, max_order).map_err(value_err)?.score)
}

/// Two-sample pooled-variance t-test; returns `(t, df, p_value)`.
#[pyfunction]
fn t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let t = eval::t_test(&a, &b).map_err(value_err)?;
    Ok((t.t, t.df, t.p_value))
}

/// Runs the command-line interface with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("senseswitch".to_string()).chain(args).collect();
    py.detach(|| senseswitch::cli::main_with_args(argv))
}

#[pymodule]
pub fn senseswitch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SenseInventory>()?;
    m.add_class::<BilingualLexicon>()?;
    m.add_class::<Lemmatizer>()?;
    m.add_class::<InflectionMap>()?;
    m.add_class::<NoisingConfig>()?;
    m.add_class::<NoisedSentence>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(noise_aa, m)?)?;
    m.add_function(wrap_pyfunction!(noise_wsp, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(dibimt_score, m)?)?;
    m.add_function(wrap_pyfunction!(chrf, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_chrf, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(t_test, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
