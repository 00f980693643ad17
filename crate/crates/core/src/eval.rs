//! Translation scoring: disambiguation accuracy on ambiguity test sets,
//! chrF++ and corpus BLEU, and a two-sample t-test.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::lexicon::Lemmatizer;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("item {id}: {message}")]
    InvalidItem { id: String, message: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("empty reference")]
    EmptyReference,
    #[error("{hypotheses} hypotheses for {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("sample {which} has {len} values; at least 2 are required")]
    SampleTooSmall { which: char, len: usize },
}

/// One test sentence with an ambiguous word and its acceptable and
/// unacceptable translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DibimtItem {
    pub id: String,
    #[serde(rename = "src")]
    pub source_sentence: String,
    #[serde(rename = "word")]
    pub ambiguous_word: String,
    pub pos: String,
    pub good: Vec<String>,
    #[serde(default)]
    pub bad: Vec<String>,
}

impl DibimtItem {
    pub fn validate(&self) -> Result<(), EvalError> {
        let err = |m: String| EvalError::InvalidItem { id: self.id.clone(), message: m };
        if self.good.is_empty() {
            return Err(err("no good translations".into()));
        }
        let good: HashSet<String> = self.good.iter().map(|g| g.to_lowercase()).collect();
        if let Some(b) = self.bad.iter().find(|b| good.contains(&b.to_lowercase())) {
            return Err(err(format!("{b:?} is listed as both good and bad")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Good,
    Bad,
    Miss,
    MissingHypothesis,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DibimtCounts {
    pub items: usize,
    pub good_hits: usize,
    pub bad_hits: usize,
    /// Hypotheses matching neither list.
    pub miss: usize,
    /// Items with no hypothesis at all.
    pub missing_hypotheses: usize,
    /// `good / (good + bad)`, or 0 when nothing matched.
    pub accuracy: f64,
    /// `(miss + missing_hypotheses) / items`.
    pub miss_rate: f64,
}

impl DibimtCounts {
    fn add(&mut self, o: Outcome) {
        self.items += 1;
        match o {
            Outcome::Good => self.good_hits += 1,
            Outcome::Bad => self.bad_hits += 1,
            Outcome::Miss => self.miss += 1,
            Outcome::MissingHypothesis => self.missing_hypotheses += 1,
        }
    }

    fn finish(&mut self) {
        let matched = self.good_hits + self.bad_hits;
        self.accuracy = if matched == 0 { 0.0 } else { self.good_hits as f64 / matched as f64 };
        self.miss_rate = if self.items == 0 {
            0.0
        } else {
            (self.miss + self.missing_hypotheses) as f64 / self.items as f64
        };
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DibimtReport {
    #[serde(flatten)]
    pub overall: DibimtCounts,
    pub per_pos: BTreeMap<String, DibimtCounts>,
}

impl DibimtReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy
    }

    pub fn miss_rate(&self) -> f64 {
        self.overall.miss_rate
    }
}

/// Lowercased word tokens: whitespace split, then leading and trailing
/// non-alphanumeric characters stripped.
pub fn match_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c == '_')
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

struct FormMatcher<'a> {
    lemmatizer: Option<&'a Lemmatizer>,
    lang: &'a str,
}

impl FormMatcher<'_> {
    fn lemma(&self, w: &str) -> String {
        match self.lemmatizer {
            Some(l) => l.lemmatize(self.lang, w).to_lowercase(),
            None => w.to_string(),
        }
    }

    fn matches(&self, surface: &[String], lemmas: &[String], form: &str) -> bool {
        let ft = match_tokens(form);
        if ft.is_empty() || ft.len() > surface.len() {
            return false;
        }
        let fl: Vec<String> = ft.iter().map(|w| self.lemma(w)).collect();
        (0..=surface.len() - ft.len()).any(|s| {
            (0..ft.len()).all(|k| {
                let (hs, hl) = (&surface[s + k], &lemmas[s + k]);
                hs == &ft[k] || hs == &fl[k] || hl == &ft[k] || hl == &fl[k]
            })
        })
    }
}

/// Classifies one hypothesis. Good forms take precedence over bad ones.
pub fn classify(item: &DibimtItem, hypothesis: Option<&str>, lemmatizer: Option<&Lemmatizer>, lang: &str) -> Outcome {
    let Some(hyp) = hypothesis else {
        return Outcome::MissingHypothesis;
    };
    let m = FormMatcher { lemmatizer, lang };
    let surface = match_tokens(hyp);
    let lemmas: Vec<String> = surface.iter().map(|w| m.lemma(w)).collect();
    if item.good.iter().any(|f| m.matches(&surface, &lemmas, f)) {
        Outcome::Good
    } else if item.bad.iter().any(|f| m.matches(&surface, &lemmas, f)) {
        Outcome::Bad
    } else {
        Outcome::Miss
    }
}

pub fn dibimt_score(
    items: &[DibimtItem],
    hypotheses: &HashMap<String, String>,
    lemmatizer: Option<&Lemmatizer>,
    lang: &str,
) -> DibimtReport {
    let mut report = DibimtReport::default();
    for item in items {
        let o = classify(item, hypotheses.get(&item.id).map(String::as_str), lemmatizer, lang);
        report.overall.add(o);
        report.per_pos.entry(item.pos.clone()).or_default().add(o);
    }
    report.overall.finish();
    report.per_pos.values_mut().for_each(DibimtCounts::finish);
    report
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EvalError> {
    let p = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|source| EvalError::Io { path: p.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: p.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
            path: p.clone(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_dibimt_items(path: &Path) -> Result<Vec<DibimtItem>, EvalError> {
    let items: Vec<DibimtItem> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for it in &items {
        it.validate()?;
        if !seen.insert(it.id.clone()) {
            return Err(EvalError::DuplicateId(it.id.clone()));
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub id: String,
    pub hyp: String,
}

pub fn read_hypotheses(path: &Path) -> Result<HashMap<String, String>, EvalError> {
    let records: Vec<HypothesisRecord> = read_jsonl(path)?;
    let mut out = HashMap::with_capacity(records.len());
    for r in records {
        if out.insert(r.id.clone(), r.hyp).is_some() {
            return Err(EvalError::DuplicateId(r.id));
        }
    }
    Ok(out)
}

const CHRF_PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChrfParams {
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
}

impl Default for ChrfParams {
    fn default() -> Self {
        ChrfParams { char_order: 6, word_order: 2, beta: 2.0 }
    }
}

impl ChrfParams {
    pub fn signature(&self) -> String {
        format!("nc:{}|nw:{}|eff:yes", self.char_order, self.word_order)
    }
}

fn chrf_words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in s.split_whitespace() {
        let chars: Vec<char> = w.chars().collect();
        if chars.len() == 1 {
            out.push(w.to_string());
        } else if CHRF_PUNCT.contains(chars[chars.len() - 1]) {
            out.push(chars[..chars.len() - 1].iter().collect());
            out.push(chars[chars.len() - 1].to_string());
        } else if CHRF_PUNCT.contains(chars[0]) {
            out.push(chars[0].to_string());
            out.push(chars[1..].iter().collect());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

fn count_ngrams<T: Clone + Eq + std::hash::Hash>(seq: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut c = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *c.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    c
}

fn match_stats<T: Eq + std::hash::Hash>(hyp: &HashMap<T, usize>, reference: &HashMap<T, usize>) -> [usize; 3] {
    let mut matched = 0;
    let mut hyp_count = 0;
    for (g, &c) in hyp {
        hyp_count += c;
        if let Some(&r) = reference.get(g) {
            matched += c.min(r);
        }
    }
    [if reference.is_empty() { 0 } else { hyp_count }, reference.values().sum(), matched]
}

/// Per-order `[hyp, ref, match]` counts, character orders first.
pub fn chrf_statistics(hypothesis: &str, reference: &str, params: ChrfParams) -> Vec<[usize; 3]> {
    let hc: Vec<char> = hypothesis.split_whitespace().flat_map(str::chars).collect();
    let rc: Vec<char> = reference.split_whitespace().flat_map(str::chars).collect();
    let mut stats = Vec::with_capacity(params.char_order + params.word_order);
    for n in 1..=params.char_order {
        stats.push(match_stats(&count_ngrams(&hc, n), &count_ngrams(&rc, n)));
    }
    if params.word_order > 0 {
        let hw = chrf_words(hypothesis);
        let rw = chrf_words(reference);
        for n in 1..=params.word_order {
            stats.push(match_stats(&count_ngrams(&hw, n), &count_ngrams(&rw, n)));
        }
    }
    stats
}

/// F-beta over precision and recall averaged across orders with both
/// hypothesis and reference n-grams.
pub fn chrf_from_statistics(stats: &[[usize; 3]], beta: f64) -> f64 {
    let factor = beta * beta;
    let (mut avg_p, mut avg_r, mut eff) = (0.0, 0.0, 0usize);
    for &[h, r, m] in stats {
        if h > 0 && r > 0 {
            avg_p += m as f64 / h as f64;
            avg_r += m as f64 / r as f64;
            eff += 1;
        }
    }
    if eff == 0 {
        return 0.0;
    }
    avg_p /= eff as f64;
    avg_r /= eff as f64;
    if avg_p + avg_r == 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + factor) * avg_p * avg_r / (factor * avg_p + avg_r)
}

/// Sentence-level chrF++ (`nc:6|nw:2`, β = 2 by default).
pub fn chrf(hypothesis: &str, reference: &str, params: ChrfParams) -> Result<f64, EvalError> {
    if reference.trim().is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(chrf_from_statistics(&chrf_statistics(hypothesis, reference, params), params.beta))
}

/// Corpus-level chrF++: statistics are summed over segments before scoring.
pub fn corpus_chrf<S: AsRef<str>>(hypotheses: &[S], references: &[S], params: ChrfParams) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch { hypotheses: hypotheses.len(), references: references.len() });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut total = vec![[0usize; 3]; params.char_order + params.word_order];
    for (h, r) in hypotheses.iter().zip(references) {
        if r.as_ref().trim().is_empty() {
            return Err(EvalError::EmptyReference);
        }
        for (t, s) in total.iter_mut().zip(chrf_statistics(h.as_ref(), r.as_ref(), params)) {
            for k in 0..3 {
                t[k] += s[k];
            }
        }
    }
    Ok(chrf_from_statistics(&total, params.beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub sys_len: usize,
    pub ref_len: usize,
    pub correct: Vec<usize>,
    pub total: Vec<usize>,
}

/// Corpus BLEU over whitespace tokens with exponential smoothing of zero
/// precisions.
pub fn bleu<S: AsRef<str>>(hypotheses: &[S], references: &[S], max_order: usize) -> Result<BleuScore, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch { hypotheses: hypotheses.len(), references: references.len() });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut correct = vec![0usize; max_order];
    let mut total = vec![0usize; max_order];
    let (mut sys_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let ht: Vec<&str> = h.as_ref().split_whitespace().collect();
        let rt: Vec<&str> = r.as_ref().split_whitespace().collect();
        sys_len += ht.len();
        ref_len += rt.len();
        for n in 1..=max_order {
            let hc = count_ngrams(&ht, n);
            let rc = count_ngrams(&rt, n);
            for (g, &c) in &hc {
                total[n - 1] += c;
                if let Some(&m) = rc.get(g) {
                    correct[n - 1] += c.min(m);
                }
            }
        }
    }
    let bp = if sys_len < ref_len {
        if sys_len > 0 {
            (1.0 - ref_len as f64 / sys_len as f64).exp()
        } else {
            0.0
        }
    } else {
        1.0
    };
    let mut precisions = vec![0.0; max_order];
    if correct.iter().all(|&c| c == 0) {
        return Ok(BleuScore { score: 0.0, precisions, brevity_penalty: bp, sys_len, ref_len, correct, total });
    }
    let mut smooth = 1.0;
    for n in 0..max_order {
        if total[n] == 0 {
            break;
        }
        precisions[n] = if correct[n] == 0 {
            smooth *= 2.0;
            100.0 / (smooth * total[n] as f64)
        } else {
            100.0 * correct[n] as f64 / total[n] as f64
        };
    }
    // log of the precision as a fraction, so a perfect match is exactly 100
    let log_sum: f64 = precisions
        .iter()
        .map(|&p| if p == 0.0 { -9_999_999_999.0 } else { (p / 100.0).ln() })
        .sum();
    let score = 100.0 * bp * (log_sum / max_order as f64).exp();
    Ok(BleuScore { score, precisions, brevity_penalty: bp, sys_len, ref_len, correct, total })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Two-sample, two-tailed Student's t-test with pooled variance. When both
/// samples have zero variance the p-value is 1 for equal means and 0
/// otherwise.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() < 2 {
        return Err(EvalError::SampleTooSmall { which: 'a', len: a.len() });
    }
    if b.len() < 2 {
        return Err(EvalError::SampleTooSmall { which: 'b', len: b.len() });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        return Ok(if ma == mb {
            TTest { t: 0.0, df, p_value: 1.0 }
        } else {
            TTest { t: (ma - mb).signum() * f64::INFINITY, df, p_value: 0.0 }
        });
    }
    let t = (ma - mb) / se;
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { t, df, p_value: p })
}
