//! Bilingual word lexicons, pivot chaining, lemma tables and the
//! `(source word, target lemma) -> inflected target word` map.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot chain {a_src}->{a_tgt} with {b_src}->{b_tgt}: pivot languages differ")]
    PivotMismatch {
        a_src: String,
        a_tgt: String,
        b_src: String,
        b_tgt: String,
    },
    #[error("{path}:{line}: expected `word<TAB>lemma`")]
    MalformedLemmaLine { path: String, line: usize },
    #[error("{path}: lemma table is not idempotent: `{lemma}` is a lemma but maps to `{maps_to}`")]
    NotIdempotent {
        path: String,
        lemma: String,
        maps_to: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LexiconError + '_ {
    move |source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Where a lexicon entry came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EntrySource {
    File,
    Chained { pivot: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub source: String,
    pub target: String,
    pub origin: EntrySource,
}

/// Ordered word-translation pairs from `src_lang` to `tgt_lang`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BilingualLexicon {
    src_lang: String,
    tgt_lang: String,
    entries: Vec<LexiconEntry>,
    // source word -> indices into `entries`, in entry order
    index: HashMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LexiconLoadReport {
    pub lines: usize,
    pub entries: usize,
    pub skipped: usize,
}

impl BilingualLexicon {
    pub fn new(src_lang: impl Into<String>, tgt_lang: impl Into<String>) -> Self {
        BilingualLexicon {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_pairs<S: AsRef<str>>(
        src_lang: &str,
        tgt_lang: &str,
        pairs: impl IntoIterator<Item = (S, S)>,
    ) -> Self {
        let mut lex = BilingualLexicon::new(src_lang, tgt_lang);
        for (s, t) in pairs {
            lex.push(s.as_ref().to_string(), t.as_ref().to_string(), EntrySource::File);
        }
        lex
    }

    fn push(&mut self, source: String, target: String, origin: EntrySource) {
        self.index
            .entry(source.clone())
            .or_default()
            .push(self.entries.len());
        self.entries.push(LexiconEntry {
            source,
            target,
            origin,
        });
    }

    /// Reads a MUSE-style file: one `source target` pair per line, separated
    /// by spaces or a tab. Blank lines are ignored; lines without exactly two
    /// tokens are skipped and counted.
    pub fn load(
        path: impl AsRef<Path>,
        src_lang: &str,
        tgt_lang: &str,
    ) -> Result<(Self, LexiconLoadReport), LexiconError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        Self::from_reader(BufReader::new(file), src_lang, tgt_lang).map_err(io_err(path))
    }

    pub fn from_reader<R: BufRead>(
        reader: R,
        src_lang: &str,
        tgt_lang: &str,
    ) -> std::io::Result<(Self, LexiconLoadReport)> {
        let mut lex = BilingualLexicon::new(src_lang, tgt_lang);
        let mut report = LexiconLoadReport::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            report.lines += 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            match (tokens.next(), tokens.next(), tokens.next()) {
                (Some(s), Some(t), None) => lex.push(s.to_string(), t.to_string(), EntrySource::File),
                _ => {
                    log::warn!("lexicon {src_lang}-{tgt_lang} line {}: skipped", lineno + 1);
                    report.skipped += 1;
                }
            }
        }
        report.entries = lex.entries.len();
        Ok((lex, report))
    }

    pub fn src_lang(&self) -> &str {
        &self.src_lang
    }

    pub fn tgt_lang(&self) -> &str {
        &self.tgt_lang
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, source: &str) -> bool {
        self.index.contains_key(source)
    }

    /// Target words for `source` in entry order.
    pub fn candidates(&self, source: &str) -> impl Iterator<Item = &str> + '_ {
        self.index
            .get(source)
            .into_iter()
            .flatten()
            .map(move |&i| self.entries[i].target.as_str())
    }

    pub fn candidate_count(&self, source: &str) -> usize {
        self.index.get(source).map_or(0, Vec::len)
    }

    pub fn candidate_at(&self, source: &str, n: usize) -> Option<&str> {
        self.index
            .get(source)
            .and_then(|ix| ix.get(n))
            .map(|&i| self.entries[i].target.as_str())
    }

    /// Composes `pivot -> X` with `pivot -> Y` into `X -> Y`: every pivot
    /// word contributes the cross product of its translations. Pairs keep
    /// the first occurrence, ordered by `a` entries then `b` entries.
    pub fn chain(a: &BilingualLexicon, b: &BilingualLexicon) -> Result<Self, LexiconError> {
        if a.src_lang != b.src_lang {
            return Err(LexiconError::PivotMismatch {
                a_src: a.src_lang.clone(),
                a_tgt: a.tgt_lang.clone(),
                b_src: b.src_lang.clone(),
                b_tgt: b.tgt_lang.clone(),
            });
        }
        let mut out = BilingualLexicon::new(a.tgt_lang.clone(), b.tgt_lang.clone());
        let mut seen: HashSet<(&str, &str)> = HashSet::new();
        for entry in &a.entries {
            for y in b.candidates(&entry.source) {
                if seen.insert((entry.target.as_str(), y)) {
                    out.push(
                        entry.target.clone(),
                        y.to_string(),
                        EntrySource::Chained {
                            pivot: entry.source.clone(),
                        },
                    );
                }
            }
        }
        Ok(out)
    }
}

/// Dictionary-backed lemmatizer with identity fallback, one table per
/// language.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lemmatizer {
    tables: HashMap<String, HashMap<String, String>>,
}

impl Lemmatizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a `word<TAB>lemma` table for `lang`, replacing any previous one.
    pub fn load_table(&mut self, lang: &str, path: impl AsRef<Path>) -> Result<usize, LexiconError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(w), Some(l), None) if !w.trim().is_empty() && !l.trim().is_empty() => {
                    pairs.push((w.trim().to_string(), l.trim().to_string()))
                }
                _ => {
                    return Err(LexiconError::MalformedLemmaLine {
                        path: path.display().to_string(),
                        line: lineno + 1,
                    })
                }
            }
        }
        let n = pairs.len();
        self.insert_table(lang, pairs)
            .map_err(|(lemma, maps_to)| LexiconError::NotIdempotent {
                path: path.display().to_string(),
                lemma,
                maps_to,
            })?;
        Ok(n)
    }

    /// Installs a table. Every lemma value maps to itself afterwards; a value
    /// that the table sends elsewhere is rejected as `(lemma, maps_to)`.
    pub fn insert_table<S: Into<String>>(
        &mut self,
        lang: &str,
        pairs: impl IntoIterator<Item = (S, S)>,
    ) -> Result<(), (String, String)> {
        let mut table: HashMap<String, String> = HashMap::new();
        for (word, lemma) in pairs {
            table.entry(word.into()).or_insert_with(|| lemma.into());
        }
        let lemmas: Vec<String> = table.values().cloned().collect();
        for lemma in lemmas {
            match table.get(&lemma) {
                Some(m) if *m != lemma => return Err((lemma, m.clone())),
                Some(_) => {}
                None => {
                    table.insert(lemma.clone(), lemma);
                }
            }
        }
        self.tables.insert(lang.to_string(), table);
        Ok(())
    }

    pub fn lemmatize<'a>(&'a self, lang: &str, word: &'a str) -> &'a str {
        self.tables
            .get(lang)
            .and_then(|t| t.get(word))
            .map_or(word, String::as_str)
    }

    pub fn is_lemma(&self, lang: &str, word: &str) -> bool {
        self.lemmatize(lang, word) == word
    }

    pub fn has_language(&self, lang: &str) -> bool {
        self.tables.contains_key(lang)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }
}

/// Maps `(source surface form, target lemma)` to the target surface form the
/// lexicon pairs with that source form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InflectionMap {
    src_lang: String,
    tgt_lang: String,
    entries: HashMap<String, HashMap<String, String>>,
    len: usize,
    collision_count: usize,
}

impl InflectionMap {
    /// One pass over `lex`: for each `(x, y)`, stores `y` under
    /// `(x, lemma(y))`. On a key already holding a different `y`, the first
    /// value stays and the collision is counted.
    pub fn build(lex: &BilingualLexicon, lemmatizer: &Lemmatizer) -> Self {
        let tgt = lex.tgt_lang();
        let mut entries: HashMap<String, HashMap<String, String>> = HashMap::new();
        let mut len = 0;
        let mut collisions = 0;
        let mut collided: HashSet<(&str, &str)> = HashSet::new();
        for entry in lex.entries() {
            let lemma = lemmatizer.lemmatize(tgt, &entry.target);
            let by_lemma = entries.entry(entry.source.clone()).or_default();
            match by_lemma.get(lemma) {
                None => {
                    by_lemma.insert(lemma.to_string(), entry.target.clone());
                    len += 1;
                }
                Some(existing) if *existing == entry.target => {}
                Some(_) => {
                    // count each distinct losing inflection once
                    if collided.insert((&entry.source, &entry.target)) {
                        collisions += 1;
                    }
                }
            }
        }
        InflectionMap {
            src_lang: lex.src_lang().to_string(),
            tgt_lang: tgt.to_string(),
            entries,
            len,
            collision_count: collisions,
        }
    }

    pub fn inflect(&self, source_word: &str, target_lemma: &str) -> Option<&str> {
        self.entries
            .get(source_word)
            .and_then(|m| m.get(target_lemma))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn collision_count(&self) -> usize {
        self.collision_count
    }

    pub fn src_lang(&self) -> &str {
        &self.src_lang
    }

    pub fn tgt_lang(&self) -> &str {
        &self.tgt_lang
    }

    /// `(source, lemma, inflected)` triples sorted for stable output.
    pub fn sorted_entries(&self) -> Vec<(&str, &str, &str)> {
        let mut out: Vec<_> = self
            .entries
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(l, y)| (s.as_str(), l.as_str(), y.as_str())))
            .collect();
        out.sort_unstable();
        out
    }
}
