//! Code-switching noise for pretraining pairs.
//!
//! Two substitution modes share one selection rule: per sentence, count the
//! eligible tokens, pick `round(ratio * eligible)` of them uniformly without
//! replacement, then replace each one.
//!
//! * `aa` replaces a token with a random dictionary translation, ignoring
//!   context.
//! * `wsp` replaces an annotated span with a lexicalization of its annotated
//!   synset, optionally re-inflected through an [`InflectionMap`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{BilingualLexicon, InflectionMap, Lemmatizer};
use crate::sense_inventory::{Provenance, SenseInventory, SynsetId};
use crate::wsd::AnnotatedSentence;

mod synthesis;
pub use synthesis::{read_dataset, synthesize_corpus, Manifest, ShardInfo, ShuffleInfo, SourceItem, SynthesisError, SynthesisOptions, SynthesisResources, SynthesisTiming};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("replacement_ratio must lie in [0, 1], got {0}")]
    Ratio(f64),
    #[error("weight for `{lang}` must be positive and finite, got {weight}")]
    Weight { lang: String, weight: f64 },
    #[error("no target languages configured")]
    NoTargets,
    #[error("lang_token_format must contain `{{lang}}`")]
    TokenFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Aa,
    Wsp,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Aa => "aa",
            Mode::Wsp => "wsp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetLang {
    pub lang: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FallbackConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_hops")]
    pub max_hops: usize,
}

fn default_hops() -> usize {
    2
}

impl Default for FallbackConfig {
    fn default() -> Self {
        FallbackConfig {
            enabled: false,
            max_hops: default_hops(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisingConfig {
    pub mode: Mode,
    #[serde(default = "default_ratio")]
    pub replacement_ratio: f64,
    pub target_langs: Vec<TargetLang>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub use_morph_inflection: bool,
    #[serde(default)]
    pub fallback: FallbackConfig,
    #[serde(default = "yes")]
    pub lowercase_sources: bool,
    #[serde(default = "default_token_format")]
    pub lang_token_format: String,
}

fn default_ratio() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

fn default_token_format() -> String {
    "<lang_{lang}>".to_string()
}

impl NoisingConfig {
    pub fn new(mode: Mode, replacement_ratio: f64, targets: &[&str]) -> Self {
        NoisingConfig {
            mode,
            replacement_ratio,
            target_langs: targets
                .iter()
                .map(|l| TargetLang {
                    lang: l.to_string(),
                    weight: 1.0,
                })
                .collect(),
            seed: 0,
            use_morph_inflection: true,
            fallback: FallbackConfig::default(),
            lowercase_sources: true,
            lang_token_format: default_token_format(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.replacement_ratio) {
            return Err(ConfigError::Ratio(self.replacement_ratio));
        }
        if self.target_langs.is_empty() {
            return Err(ConfigError::NoTargets);
        }
        for t in &self.target_langs {
            if !(t.weight.is_finite() && t.weight > 0.0) {
                return Err(ConfigError::Weight {
                    lang: t.lang.clone(),
                    weight: t.weight,
                });
            }
        }
        if !self.lang_token_format.contains("{lang}") {
            return Err(ConfigError::TokenFormat);
        }
        Ok(())
    }

    pub fn lang_token(&self, lang: &str) -> String {
        self.lang_token_format.replace("{lang}", lang)
    }

    /// `round(ratio * eligible)`, never more than `eligible`.
    pub fn substitution_count(&self, eligible: usize) -> usize {
        ((self.replacement_ratio * eligible as f64).round() as usize).min(eligible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LexiconRandom,
    KbDirect,
    KbFallback,
    KbLemmaOnly,
    KbInflected,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::LexiconRandom,
        Method::KbDirect,
        Method::KbFallback,
        Method::KbLemmaOnly,
        Method::KbInflected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LexiconRandom => "lexicon-random",
            Method::KbDirect => "kb-direct",
            Method::KbFallback => "kb-fallback",
            Method::KbLemmaOnly => "kb-lemma-only",
            Method::KbInflected => "kb-inflected",
        }
    }

    pub fn is_kb(self) -> bool {
        self != Method::LexiconRandom
    }
}

/// One replaced token (or annotated span) of the source sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    /// Index into the original, un-noised tokens.
    #[serde(rename = "i")]
    pub token_index: usize,
    #[serde(rename = "n")]
    pub span_len: usize,
    pub original: String,
    /// Surface text inserted; multiword replacements are space-joined.
    pub replacement: String,
    /// The dictionary word or inventory lemma drawn before inflection and
    /// case restoration.
    pub translation: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synset: Option<SynsetId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    /// For fallback substitutions: synsets walked from the annotated one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<SynsetId>>,
    pub target_lang: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Parallel,
    Monolingual,
}

/// Noised source tokens before language tokens are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisedSentence {
    pub tokens: Vec<String>,
    pub substitutions: Vec<Substitution>,
    pub eligible: usize,
}

impl NoisedSentence {
    pub fn untouched(tokens: &[String], eligible: usize) -> Self {
        NoisedSentence {
            tokens: tokens.to_vec(),
            substitutions: Vec::new(),
            eligible,
        }
    }

    /// Monolingual pair: the target is the original sentence.
    pub fn denoising_pair(self, original: &[String], lang: &str, cfg: &NoisingConfig) -> CodeSwitchedPair {
        self.into_pair(lang, original, lang, Origin::Monolingual, cfg)
    }

    /// Parallel pair: the target is the reference translation.
    pub fn translation_pair(
        self,
        src_lang: &str,
        reference: &[String],
        tgt_lang: &str,
        cfg: &NoisingConfig,
    ) -> CodeSwitchedPair {
        self.into_pair(src_lang, reference, tgt_lang, Origin::Parallel, cfg)
    }

    fn into_pair(
        self,
        src_lang: &str,
        target: &[String],
        tgt_lang: &str,
        origin: Origin,
        cfg: &NoisingConfig,
    ) -> CodeSwitchedPair {
        let mut input_tokens = Vec::with_capacity(self.tokens.len() + 1);
        input_tokens.push(cfg.lang_token(src_lang));
        input_tokens.extend(self.tokens);
        let mut target_tokens = Vec::with_capacity(target.len() + 1);
        target_tokens.push(cfg.lang_token(tgt_lang));
        target_tokens.extend_from_slice(target);
        CodeSwitchedPair {
            input_tokens,
            target_tokens,
            substitutions: self.substitutions,
            origin,
            eligible: self.eligible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSwitchedPair {
    pub input_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    pub substitutions: Vec<Substitution>,
    pub origin: Origin,
    pub eligible: usize,
}

impl CodeSwitchedPair {
    /// One dataset line: `{src, tgt, meta: {origin, subs}}`.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Meta<'a> {
            origin: Origin,
            eligible: usize,
            subs: &'a [Substitution],
        }
        #[derive(Serialize)]
        struct Line<'a> {
            src: &'a [String],
            tgt: &'a [String],
            meta: Meta<'a>,
        }
        serde_json::to_string(&Line {
            src: &self.input_tokens,
            tgt: &self.target_tokens,
            meta: Meta {
                origin: self.origin,
                eligible: self.eligible,
                subs: &self.substitutions,
            },
        })
        .expect("pair serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct DatasetRecord {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub meta: DatasetMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct DatasetMeta {
    pub origin: Origin,
    #[serde(default)]
    pub eligible: usize,
    pub subs: Vec<Substitution>,
}

/// Lexicons keyed by source language, then target language.
#[derive(Debug, Clone, Default)]
pub struct LexiconSet {
    lexicons: HashMap<String, HashMap<String, BilingualLexicon>>,
}

impl LexiconSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lex: BilingualLexicon) {
        self.lexicons
            .entry(lex.src_lang().to_string())
            .or_default()
            .insert(lex.tgt_lang().to_string(), lex);
    }

    pub fn get(&self, src: &str, tgt: &str) -> Option<&BilingualLexicon> {
        self.lexicons.get(src).and_then(|m| m.get(tgt))
    }

    pub fn iter(&self) -> impl Iterator<Item = &BilingualLexicon> {
        self.lexicons.values().flat_map(HashMap::values)
    }

    pub fn is_empty(&self) -> bool {
        self.lexicons.values().all(HashMap::is_empty)
    }

    pub fn target_languages(&self) -> impl Iterator<Item = &str> {
        self.iter().map(BilingualLexicon::tgt_lang)
    }
}

/// Inflection maps keyed by `(source language, target language)`.
#[derive(Debug, Clone, Default)]
pub struct InflectionMaps {
    maps: Vec<InflectionMap>,
}

impl InflectionMaps {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, map: InflectionMap) {
        self.maps
            .retain(|m| !(m.src_lang() == map.src_lang() && m.tgt_lang() == map.tgt_lang()));
        self.maps.push(map);
    }

    pub fn get(&self, src: &str, tgt: &str) -> Option<&InflectionMap> {
        self.maps
            .iter()
            .find(|m| m.src_lang() == src && m.tgt_lang() == tgt)
    }

    pub fn iter(&self) -> impl Iterator<Item = &InflectionMap> {
        self.maps.iter()
    }
}

/// Knowledge-base resources for sense-pivoted substitution.
#[derive(Clone, Copy)]
pub struct KbResources<'a> {
    pub inventory: &'a SenseInventory,
    pub inflections: &'a InflectionMaps,
    pub lemmatizer: &'a Lemmatizer,
}

fn lookup_key<'a>(token: &'a str, cfg: &NoisingConfig) -> std::borrow::Cow<'a, str> {
    if cfg.lowercase_sources && token.chars().any(char::is_uppercase) {
        std::borrow::Cow::Owned(token.to_lowercase())
    } else {
        std::borrow::Cow::Borrowed(token)
    }
}

/// Uppercases the first character of `replacement` when `original` starts
/// with an uppercase character.
pub fn match_initial_case(original: &str, replacement: &str) -> String {
    let starts_upper = original.chars().next().is_some_and(char::is_uppercase);
    if !starts_upper {
        return replacement.to_string();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    if weights.len() == 1 {
        return 0;
    }
    WeightedIndex::new(weights)
        .expect("validated weights")
        .sample(rng)
}

fn chosen_positions<R: Rng + ?Sized>(eligible: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut picked = sample(rng, eligible, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Sense-agnostic substitution: tokens present in any configured lexicon
/// from `src_lang` are eligible; each chosen token gets a weighted target
/// language among those whose lexicon covers it, then a uniformly drawn
/// translation.
pub fn noise_aa<R: Rng + ?Sized>(
    tokens: &[String],
    src_lang: &str,
    lexicons: &LexiconSet,
    cfg: &NoisingConfig,
    rng: &mut R,
) -> NoisedSentence {
    let targets: Vec<(&BilingualLexicon, f64)> = cfg
        .target_langs
        .iter()
        .filter(|t| t.lang != src_lang)
        .filter_map(|t| lexicons.get(src_lang, &t.lang).map(|l| (l, t.weight)))
        .collect();

    let eligible: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, tok)| {
            let key = lookup_key(tok, cfg);
            targets.iter().any(|(lex, _)| lex.contains(&key))
        })
        .map(|(i, _)| i)
        .collect();
    let k = cfg.substitution_count(eligible.len());
    if k == 0 {
        return NoisedSentence::untouched(tokens, eligible.len());
    }

    let mut out = tokens.to_vec();
    let mut subs = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(targets.len());
    let mut covering = Vec::with_capacity(targets.len());
    for pos in chosen_positions(eligible.len(), k, rng) {
        let i = eligible[pos];
        let key = lookup_key(&tokens[i], cfg);
        covering.clear();
        weights.clear();
        for (lex, w) in &targets {
            if lex.contains(&key) {
                covering.push(*lex);
                weights.push(*w);
            }
        }
        let lex = covering[pick_weighted(&weights, rng)];
        let n = lex.candidate_count(&key);
        let translation = lex
            .candidate_at(&key, rng.random_range(0..n))
            .expect("index within candidate count");
        let replacement = match_initial_case(&tokens[i], translation);
        out[i] = replacement.clone();
        subs.push(Substitution {
            token_index: i,
            span_len: 1,
            original: tokens[i].clone(),
            replacement,
            translation: translation.to_string(),
            method: Method::LexiconRandom,
            synset: None,
            provenance: None,
            path: None,
            target_lang: lex.tgt_lang().to_string(),
        });
    }
    NoisedSentence {
        tokens: out,
        substitutions: subs,
        eligible: eligible.len(),
    }
}

struct SpanCandidates<'a> {
    ann: usize,
    per_lang: Vec<(&'a str, f64, Vec<Candidate>)>,
}

struct Candidate {
    lemma: String,
    provenance: Provenance,
    path: Vec<SynsetId>,
}

/// Sense-pivoted substitution over an annotated sentence.
///
/// A span is eligible when its synset has at least one lemma (after fallback,
/// if enabled) in some configured target language other than the sentence's
/// own. A chosen span receives a weighted target language among those with
/// lemmas and a uniformly drawn lemma. Direct lemmas for single-token spans
/// are re-inflected through the `(source, target)` inflection map when the
/// source token is not itself a lemma, judged by the source-language lemma
/// table when one is loaded and by the annotation's lemma otherwise.
pub fn noise_wsp<R: Rng + ?Sized>(
    sentence: &AnnotatedSentence,
    kb: KbResources<'_>,
    cfg: &NoisingConfig,
    rng: &mut R,
) -> NoisedSentence {
    let src_lang = sentence.language.as_str();
    let tokens = &sentence.tokens;
    let targets: Vec<&TargetLang> =
        cfg.target_langs.iter().filter(|t| t.lang != src_lang).collect();

    let mut eligible: Vec<SpanCandidates<'_>> = Vec::new();
    for (ai, ann) in sentence.annotations.iter().enumerate() {
        if kb.inventory.get(&ann.synset).is_none() {
            continue;
        }
        let mut per_lang = Vec::new();
        for t in &targets {
            let cands: Vec<Candidate> = if cfg.fallback.enabled {
                kb.inventory
                    .translations_with_fallback(&ann.synset, &t.lang, cfg.fallback.max_hops)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|f| Candidate {
                        lemma: f.lemma,
                        provenance: f.provenance,
                        path: f.path,
                    })
                    .collect()
            } else {
                kb.inventory
                    .translations(&ann.synset, &t.lang)
                    .unwrap_or_default()
                    .iter()
                    .map(|l| Candidate {
                        lemma: l.clone(),
                        provenance: Provenance::Direct,
                        path: Vec::new(),
                    })
                    .collect()
            };
            if !cands.is_empty() {
                per_lang.push((t.lang.as_str(), t.weight, cands));
            }
        }
        if !per_lang.is_empty() {
            eligible.push(SpanCandidates { ann: ai, per_lang });
        }
    }

    let k = cfg.substitution_count(eligible.len());
    if k == 0 {
        return NoisedSentence::untouched(tokens, eligible.len());
    }

    let mut subs = Vec::with_capacity(k);
    let mut replacements: Vec<(usize, usize, Vec<String>)> = Vec::with_capacity(k);
    for pos in chosen_positions(eligible.len(), k, rng) {
        let span = &eligible[pos];
        let ann = &sentence.annotations[span.ann];
        let weights: Vec<f64> = span.per_lang.iter().map(|(_, w, _)| *w).collect();
        let (lang, _, cands) = &span.per_lang[pick_weighted(&weights, rng)];
        let cand = &cands[rng.random_range(0..cands.len())];

        let original_words = &tokens[ann.token_index..ann.end()];
        let original = original_words.join(" ");
        let lemma_words: Vec<&str> = cand.lemma.split('_').filter(|w| !w.is_empty()).collect();

        let (method, words): (Method, Vec<String>) = if !cand.provenance.is_direct() {
            (Method::KbFallback, lemma_words.iter().map(|w| w.to_string()).collect())
        } else if cfg.use_morph_inflection && ann.span_len == 1 {
            let key = lookup_key(&tokens[ann.token_index], cfg);
            let is_lemma = if kb.lemmatizer.has_language(src_lang) {
                kb.lemmatizer.is_lemma(src_lang, &key)
            } else {
                key == lookup_key(&ann.lemma, cfg)
            };
            if is_lemma {
                (Method::KbDirect, lemma_words.iter().map(|w| w.to_string()).collect())
            } else {
                match kb
                    .inflections
                    .get(src_lang, lang)
                    .and_then(|h| h.inflect(&key, &cand.lemma))
                {
                    Some(m) => (Method::KbInflected, vec![m.to_string()]),
                    None => (
                        Method::KbLemmaOnly,
                        lemma_words.iter().map(|w| w.to_string()).collect(),
                    ),
                }
            }
        } else {
            (Method::KbDirect, lemma_words.iter().map(|w| w.to_string()).collect())
        };

        let mut words = words;
        if let Some(first) = words.first_mut() {
            *first = match_initial_case(&original_words[0], first);
        }
        subs.push(Substitution {
            token_index: ann.token_index,
            span_len: ann.span_len,
            original,
            replacement: words.join(" "),
            translation: cand.lemma.clone(),
            method,
            synset: Some(ann.synset.clone()),
            provenance: Some(cand.provenance),
            path: (!cand.provenance.is_direct()).then(|| cand.path.clone()),
            target_lang: lang.to_string(),
        });
        replacements.push((ann.token_index, ann.end(), words));
    }

    let mut out = Vec::with_capacity(tokens.len() + replacements.len());
    let mut cursor = 0;
    for (start, end, words) in replacements {
        out.extend_from_slice(&tokens[cursor..start]);
        out.extend(words);
        cursor = end;
    }
    out.extend_from_slice(&tokens[cursor..]);
    NoisedSentence {
        tokens: out,
        substitutions: subs,
        eligible: eligible.len(),
    }
}

/// Running totals kept while a corpus is noised.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseTotals {
    pub pairs: usize,
    pub parallel_pairs: usize,
    pub monolingual_pairs: usize,
    pub eligible_tokens: usize,
    pub substituted_tokens: usize,
    pub sentences_without_eligible: usize,
    pub by_method: BTreeMap<String, usize>,
    pub by_target_lang: BTreeMap<String, usize>,
}

impl NoiseTotals {
    pub fn new() -> Self {
        let mut t = NoiseTotals::default();
        for m in Method::ALL {
            t.by_method.insert(m.name().to_string(), 0);
        }
        t
    }

    pub fn record(&mut self, pair: &CodeSwitchedPair) {
        self.pairs += 1;
        match pair.origin {
            Origin::Parallel => self.parallel_pairs += 1,
            Origin::Monolingual => self.monolingual_pairs += 1,
        }
        self.eligible_tokens += pair.eligible;
        self.substituted_tokens += pair.substitutions.len();
        if pair.eligible == 0 {
            self.sentences_without_eligible += 1;
        }
        for s in &pair.substitutions {
            *self.by_method.entry(s.method.name().to_string()).or_insert(0) += 1;
            *self.by_target_lang.entry(s.target_lang.clone()).or_insert(0) += 1;
        }
    }

    pub fn achieved_ratio(&self) -> f64 {
        if self.eligible_tokens == 0 {
            0.0
        } else {
            self.substituted_tokens as f64 / self.eligible_tokens as f64
        }
    }
}
