//! Sense annotations for tokenized corpora.
//!
//! Annotations are stand-off: the corpus file holds `{id, lang, text}` records
//! with space-separated tokens, and a separate file holds
//! `{id, anns: [{i, n, lemma, pos, synset, conf}]}` records keyed by sentence
//! id. A built-in first-sense / Lesk disambiguator can produce the same
//! records for self-contained runs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lemmatizer;
use crate::sense_inventory::{Pos, SenseInventory, SynsetId};

#[derive(Debug, Error)]
pub enum WsdError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate sentence id `{id}`")]
    DuplicateSentence { path: String, line: usize, id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    #[serde(rename = "i")]
    pub token_index: usize,
    #[serde(rename = "n", default = "one")]
    pub span_len: usize,
    pub lemma: String,
    pub pos: String,
    pub synset: SynsetId,
    #[serde(rename = "conf", default = "unit")]
    pub confidence: f64,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl TokenAnnotation {
    pub fn end(&self) -> usize {
        self.token_index + self.span_len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub sentence_id: String,
    pub language: String,
    pub tokens: Vec<String>,
    pub annotations: Vec<TokenAnnotation>,
}

impl AnnotatedSentence {
    pub fn unannotated(sentence: CorpusSentence) -> Self {
        AnnotatedSentence {
            sentence_id: sentence.id,
            language: sentence.lang,
            tokens: sentence.tokens,
            annotations: Vec::new(),
        }
    }
}

/// A corpus line, with `text` already split on whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSentence {
    pub id: String,
    pub lang: String,
    pub tokens: Vec<String>,
}

#[derive(Deserialize, Serialize)]
struct CorpusRecord {
    id: String,
    lang: String,
    text: String,
}

#[derive(Deserialize, Serialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub anns: Vec<TokenAnnotation>,
}

/// Streaming reader over a corpus JSONL file.
pub struct CorpusReader<R> {
    lines: Lines<R>,
    path: String,
    line: usize,
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, WsdError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| WsdError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(CorpusReader::new(BufReader::new(file), &path.display().to_string()))
    }
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, origin: &str) -> Self {
        CorpusReader {
            lines: reader.lines(),
            path: origin.to_string(),
            line: 0,
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<CorpusSentence, WsdError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line += 1;
            let line = match line {
                Ok(l) => l,
                Err(source) => {
                    return Some(Err(WsdError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(
                serde_json::from_str::<CorpusRecord>(&line)
                    .map(|r| CorpusSentence {
                        id: r.id,
                        lang: r.lang,
                        tokens: r.text.split_whitespace().map(str::to_string).collect(),
                    })
                    .map_err(|e| WsdError::Malformed {
                        path: self.path.clone(),
                        line: self.line,
                        message: e.to_string(),
                    }),
            );
        }
    }
}

pub fn corpus_line(sentence: &CorpusSentence) -> String {
    serde_json::to_string(&CorpusRecord {
        id: sentence.id.clone(),
        lang: sentence.lang.clone(),
        text: sentence.tokens.join(" "),
    })
    .expect("corpus record serializes")
}

/// Reads a whole annotation file into memory, grouped by sentence id.
/// Records for the same id are concatenated in file order.
pub fn read_annotation_file(
    path: impl AsRef<Path>,
) -> Result<HashMap<String, Vec<TokenAnnotation>>, WsdError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let file = File::open(path).map_err(|source| WsdError::Io {
        path: origin.clone(),
        source,
    })?;
    read_annotations(BufReader::new(file), &origin)
}

pub fn read_annotations<R: BufRead>(
    reader: R,
    origin: &str,
) -> Result<HashMap<String, Vec<TokenAnnotation>>, WsdError> {
    let mut by_id: HashMap<String, Vec<TokenAnnotation>> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| WsdError::Io {
            path: origin.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| WsdError::Malformed {
                path: origin.to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        by_id.entry(record.id).or_default().extend(record.anns);
    }
    Ok(by_id)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub sentences: usize,
    pub annotated_sentences: usize,
    pub annotations: usize,
    /// Records dropped for out-of-range spans, empty spans, or overlap.
    pub rejected: usize,
    /// Annotation records naming sentence ids absent from the corpus.
    pub unknown_sentence_ids: usize,
}

/// Joins a corpus stream with stand-off annotations.
///
/// Annotations are validated against the sentence: spans must be non-empty
/// and in range, and may not overlap an earlier accepted span (ordered by
/// token index). Rejected records are counted. Ids that never appear in the
/// corpus are counted once the corpus is exhausted.
pub struct AnnotatedStream<I> {
    corpus: I,
    pending: HashMap<String, Vec<TokenAnnotation>>,
    seen_ids: HashSet<String>,
    stats: AnnotationStats,
    finished: bool,
}

impl<I> AnnotatedStream<I>
where
    I: Iterator<Item = Result<CorpusSentence, WsdError>>,
{
    pub fn new(corpus: I, annotations: HashMap<String, Vec<TokenAnnotation>>) -> Self {
        AnnotatedStream {
            corpus,
            pending: annotations,
            seen_ids: HashSet::new(),
            stats: AnnotationStats::default(),
            finished: false,
        }
    }

    /// Final once the stream has returned `None`.
    pub fn stats(&self) -> &AnnotationStats {
        &self.stats
    }
}

impl AnnotatedStream<CorpusReader<BufReader<File>>> {
    pub fn open(corpus_path: impl AsRef<Path>, annotations_path: impl AsRef<Path>) -> Result<Self, WsdError> {
        let anns = read_annotation_file(annotations_path)?;
        Ok(AnnotatedStream::new(CorpusReader::open(corpus_path)?, anns))
    }
}

impl<I> Iterator for AnnotatedStream<I>
where
    I: Iterator<Item = Result<CorpusSentence, WsdError>>,
{
    type Item = Result<AnnotatedSentence, WsdError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.corpus.next() {
            None => {
                self.finished = true;
                for id in self.pending.keys() {
                    log::warn!("annotations reference unknown sentence id `{id}`");
                }
                self.stats.unknown_sentence_ids = self.pending.len();
                None
            }
            Some(Err(e)) => Some(Err(e)),
            Some(Ok(sentence)) => {
                if !self.seen_ids.insert(sentence.id.clone()) {
                    return Some(Err(WsdError::DuplicateSentence {
                        path: String::new(),
                        line: self.stats.sentences + 1,
                        id: sentence.id,
                    }));
                }
                self.stats.sentences += 1;
                let raw = self.pending.remove(&sentence.id).unwrap_or_default();
                let (accepted, rejected) = validate_spans(raw, sentence.tokens.len());
                self.stats.rejected += rejected;
                self.stats.annotations += accepted.len();
                if !accepted.is_empty() {
                    self.stats.annotated_sentences += 1;
                }
                Some(Ok(AnnotatedSentence {
                    sentence_id: sentence.id,
                    language: sentence.lang,
                    tokens: sentence.tokens,
                    annotations: accepted,
                }))
            }
        }
    }
}

/// Keeps in-range, non-overlapping spans sorted by start; returns the kept
/// annotations and the number dropped.
pub fn validate_spans(mut anns: Vec<TokenAnnotation>, n_tokens: usize) -> (Vec<TokenAnnotation>, usize) {
    let before = anns.len();
    anns.retain(|a| {
        a.span_len >= 1 && a.token_index < n_tokens && a.end() <= n_tokens && a.confidence.is_finite()
    });
    anns.sort_by_key(|a| a.token_index);
    let mut out: Vec<TokenAnnotation> = Vec::with_capacity(anns.len());
    for a in anns {
        if out.last().is_some_and(|prev| prev.end() > a.token_index) {
            continue;
        }
        out.push(a);
    }
    let rejected = before - out.len();
    (out, rejected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    FirstSense,
    Lesk,
}

/// Lemma -> candidate synsets for one language, in inventory order.
/// Multiword lemmas are indexed by their space-joined lowercase form.
pub struct CandidateIndex<'a> {
    inventory: &'a SenseInventory,
    lang: String,
    by_lemma: HashMap<String, Vec<&'a SynsetId>>,
    max_words: usize,
}

impl<'a> CandidateIndex<'a> {
    pub fn build(inventory: &'a SenseInventory, lang: &str) -> Self {
        let mut by_lemma: HashMap<String, Vec<&SynsetId>> = HashMap::new();
        let mut max_words = 1;
        for synset in inventory.synsets() {
            for lemma in synset.lemmas(lang) {
                let key = lemma.replace('_', " ").to_lowercase();
                max_words = max_words.max(key.split(' ').count());
                let ids = by_lemma.entry(key).or_default();
                if !ids.contains(&&synset.id) {
                    ids.push(&synset.id);
                }
            }
        }
        CandidateIndex {
            inventory,
            lang: lang.to_string(),
            by_lemma,
            max_words,
        }
    }

    pub fn candidates(&self, key: &str) -> &[&'a SynsetId] {
        self.by_lemma.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    fn sense_bag(&self, id: &SynsetId) -> HashSet<String> {
        let mut bag = HashSet::new();
        if let Some(s) = self.inventory.get(id) {
            if let Some(gloss) = s.gloss.get(&self.lang) {
                bag.extend(content_words(gloss));
            }
            for lemma in s.lemmas(&self.lang) {
                bag.extend(lemma.split('_').map(str::to_lowercase));
            }
        }
        bag
    }
}

fn content_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Annotates content tokens with candidate synsets from the inventory.
///
/// Spans are matched greedily, longest first, against lowercased surface
/// forms and then (when a lemmatizer is supplied) their lemmas. When `pos`
/// tags are given, tokens whose tag is not noun/verb/adjective/adverb are
/// skipped and candidates are restricted to the tagged part of speech.
pub fn baseline_disambiguate(
    index: &CandidateIndex<'_>,
    tokens: &[String],
    pos: Option<&[String]>,
    lemmatizer: Option<&Lemmatizer>,
    strategy: Strategy,
    window: usize,
) -> Vec<TokenAnnotation> {
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let lemmas: Vec<String> = match lemmatizer {
        Some(l) => lowered
            .iter()
            .map(|t| l.lemmatize(index.lang(), t).to_string())
            .collect(),
        None => lowered.clone(),
    };

    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tag = pos.and_then(|p| p.get(i));
        let tag_pos = tag.and_then(|t| Pos::parse_tag(t));
        if tag.is_some() && tag_pos.is_none() {
            i += 1;
            continue;
        }
        let mut matched = None;
        for len in (1..=index.max_words.min(tokens.len() - i)).rev() {
            for seq in [&lowered, &lemmas] {
                let key = seq[i..i + len].join(" ");
                let cands: Vec<&SynsetId> = index
                    .candidates(&key)
                    .iter()
                    .copied()
                    .filter(|id| tag_pos.is_none_or(|p| id.pos() == p))
                    .collect();
                if !cands.is_empty() {
                    matched = Some((len, key, cands));
                    break;
                }
            }
            if matched.is_some() {
                break;
            }
        }
        let Some((len, key, cands)) = matched else {
            i += 1;
            continue;
        };

        let (chosen, confidence) = match strategy {
            Strategy::FirstSense => (cands[0], 1.0),
            Strategy::Lesk => {
                let lo = i.saturating_sub(window);
                let hi = (i + len + window).min(tokens.len());
                let context: HashSet<&str> = (lo..hi)
                    .filter(|&j| j < i || j >= i + len)
                    .flat_map(|j| [lowered[j].as_str(), lemmas[j].as_str()])
                    .collect();
                let mut best = (cands[0], 0usize);
                for (rank, &id) in cands.iter().enumerate() {
                    let bag = index.sense_bag(id);
                    let overlap = context
                        .iter()
                        .filter(|w| bag.contains(**w))
                        .count();
                    if rank == 0 || overlap > best.1 {
                        best = (id, overlap);
                    }
                }
                let o = best.1 as f64;
                (best.0, o / (o + 1.0))
            }
        };
        out.push(TokenAnnotation {
            token_index: i,
            span_len: len,
            lemma: key.replace(' ', "_"),
            pos: chosen.pos().to_string(),
            synset: chosen.clone(),
            confidence,
        });
        i += len;
    }
    out
}

/// Serializable annotation line for one sentence.
pub fn annotation_line(sentence_id: &str, anns: &[TokenAnnotation]) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        id: &'a str,
        anns: &'a [TokenAnnotation],
    }
    serde_json::to_string(&Out { id: sentence_id, anns }).expect("annotation record serializes")
}

/// Per-synset counts, handy for reporting.
pub fn synset_histogram(anns: &[TokenAnnotation]) -> BTreeMap<&str, usize> {
    let mut h = BTreeMap::new();
    for a in anns {
        *h.entry(a.synset.as_str()).or_insert(0) += 1;
    }
    h
}
