//! Multilingual sense inventory: synsets with per-language lexicalizations
//! and `hypernym` / `similar` relations, loaded from line-delimited JSON.
//!
//! One record per line:
//!
//! ```text
//! {"id":"bn:00001n","pos":"n","gloss":{"en":"a favourable position"},
//!  "lex":{"en":["edge","advantage"],"it":["vantaggio"]},"rel":[["hypernym","bn:00002n"]]}
//! ```
//!
//! `gloss` and `rel` are optional. Multiword lemmas use `_` between words.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate synset id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("unknown synset `{0}`")]
    UnknownSynset(String),
    #[error("invalid synset id `{0}`: must be non-empty and end in one of n, v, a, r")]
    InvalidId(String),
}

/// Coarse part of speech carried by every synset id as its final character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adjective,
    #[serde(rename = "r")]
    Adverb,
}

impl Pos {
    pub fn from_suffix(c: char) -> Option<Pos> {
        match c {
            'n' => Some(Pos::Noun),
            'v' => Some(Pos::Verb),
            'a' => Some(Pos::Adjective),
            'r' => Some(Pos::Adverb),
            _ => None,
        }
    }

    pub fn suffix(self) -> char {
        match self {
            Pos::Noun => 'n',
            Pos::Verb => 'v',
            Pos::Adjective => 'a',
            Pos::Adverb => 'r',
        }
    }

    /// Accepts the single-letter inventory tags as well as common tagset
    /// names (`NOUN`, `VERB`, `ADJ`, `ADV`, `PROPN`), case-insensitively.
    pub fn parse_tag(tag: &str) -> Option<Pos> {
        match tag.to_ascii_lowercase().as_str() {
            "n" | "noun" | "propn" => Some(Pos::Noun),
            "v" | "verb" => Some(Pos::Verb),
            "a" | "s" | "adj" | "adjective" => Some(Pos::Adjective),
            "r" | "adv" | "adverb" => Some(Pos::Adverb),
            _ => None,
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.suffix())
    }
}

/// Opaque synset identifier whose last character encodes its part of speech.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(value: impl Into<String>) -> Result<Self, InventoryError> {
        let value = value.into();
        match value.chars().last() {
            Some(c) if Pos::from_suffix(c).is_some() => Ok(SynsetId(value)),
            _ => Err(InventoryError::InvalidId(value)),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn pos(&self) -> Pos {
        // validated on construction
        Pos::from_suffix(self.0.chars().last().unwrap()).unwrap()
    }
}

impl TryFrom<String> for SynsetId {
    type Error = InventoryError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        SynsetId::new(value)
    }
}

impl From<SynsetId> for String {
    fn from(id: SynsetId) -> String {
        id.0
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Hypernym,
    Similar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synset {
    pub id: SynsetId,
    pub pos: Pos,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gloss: BTreeMap<String, String>,
    #[serde(rename = "lex")]
    pub lexicalizations: BTreeMap<String, Vec<String>>,
    #[serde(rename = "rel", default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<(RelationKind, SynsetId)>,
}

impl Synset {
    pub fn lemmas(&self, lang: &str) -> &[String] {
        self.lexicalizations
            .get(lang)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.pos() != self.pos {
            return Err(format!(
                "pos `{}` disagrees with id suffix of `{}`",
                self.pos, self.id
            ));
        }
        for (lang, lemmas) in &self.lexicalizations {
            if lang.is_empty() {
                return Err("empty language code".into());
            }
            let mut seen = HashSet::new();
            for lemma in lemmas {
                if lemma.is_empty() || lemma.chars().any(char::is_whitespace) {
                    return Err(format!(
                        "lemma {lemma:?} ({lang}) is empty or contains whitespace"
                    ));
                }
                if !seen.insert(lemma.as_str()) {
                    return Err(format!("duplicate lemma {lemma:?} for language {lang}"));
                }
            }
        }
        Ok(())
    }
}

/// Counts reported after a successful load.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InventoryStats {
    pub synsets: usize,
    pub lexicalizations: BTreeMap<String, usize>,
    pub dangling_relations: usize,
}

/// Immutable sense inventory. Synset iteration order is file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SenseInventory {
    synsets: IndexMap<SynsetId, Synset>,
    languages: BTreeSet<String>,
    dangling_relations: usize,
}

impl SenseInventory {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, InventoryError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| InventoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(BufReader::new(file), &path.display().to_string())
    }

    pub fn from_reader<R: BufRead>(reader: R, origin: &str) -> Result<Self, InventoryError> {
        let mut synsets: IndexMap<SynsetId, Synset> = IndexMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|source| InventoryError::Io {
                path: origin.to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let synset: Synset =
                serde_json::from_str(&line).map_err(|e| InventoryError::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })?;
            synset
                .validate()
                .map_err(|message| InventoryError::Malformed {
                    line: lineno,
                    message,
                })?;
            if synsets.contains_key(&synset.id) {
                return Err(InventoryError::DuplicateId {
                    line: lineno,
                    id: synset.id.to_string(),
                });
            }
            synsets.insert(synset.id.clone(), synset);
        }
        Ok(Self::from_synsets_unchecked(synsets))
    }

    /// Builds an inventory from already-constructed synsets.
    pub fn from_synsets(items: impl IntoIterator<Item = Synset>) -> Result<Self, InventoryError> {
        let mut synsets = IndexMap::new();
        for (idx, synset) in items.into_iter().enumerate() {
            synset
                .validate()
                .map_err(|message| InventoryError::Malformed {
                    line: idx + 1,
                    message,
                })?;
            if synsets.contains_key(&synset.id) {
                return Err(InventoryError::DuplicateId {
                    line: idx + 1,
                    id: synset.id.to_string(),
                });
            }
            synsets.insert(synset.id.clone(), synset);
        }
        Ok(Self::from_synsets_unchecked(synsets))
    }

    fn from_synsets_unchecked(synsets: IndexMap<SynsetId, Synset>) -> Self {
        let mut languages = BTreeSet::new();
        let mut dangling = 0;
        for synset in synsets.values() {
            for (lang, lemmas) in &synset.lexicalizations {
                if !lemmas.is_empty() {
                    languages.insert(lang.clone());
                }
            }
            dangling += synset
                .relations
                .iter()
                .filter(|(_, target)| !synsets.contains_key(target))
                .count();
        }
        SenseInventory {
            synsets,
            languages,
            dangling_relations: dangling,
        }
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn languages(&self) -> &BTreeSet<String> {
        &self.languages
    }

    pub fn dangling_relations(&self) -> usize {
        self.dangling_relations
    }

    pub fn get(&self, id: &SynsetId) -> Option<&Synset> {
        self.synsets.get(id)
    }

    pub fn synsets(&self) -> impl Iterator<Item = &Synset> {
        self.synsets.values()
    }

    pub fn stats(&self) -> InventoryStats {
        let mut lexicalizations = BTreeMap::new();
        for synset in self.synsets.values() {
            for (lang, lemmas) in &synset.lexicalizations {
                *lexicalizations.entry(lang.clone()).or_insert(0) += lemmas.len();
            }
        }
        InventoryStats {
            synsets: self.synsets.len(),
            lexicalizations,
            dangling_relations: self.dangling_relations,
        }
    }

    fn require(&self, id: &SynsetId) -> Result<&Synset, InventoryError> {
        self.synsets
            .get(id)
            .ok_or_else(|| InventoryError::UnknownSynset(id.to_string()))
    }

    /// Lexicalizations of `id` in `lang`, in file order. Empty when the
    /// synset has no lemmas in that language.
    pub fn translations(&self, id: &SynsetId, lang: &str) -> Result<&[String], InventoryError> {
        Ok(self.require(id)?.lemmas(lang))
    }

    /// Direct translations when present; otherwise the lemmas of the nearest
    /// related synsets, searched breadth-first up to `max_hops` edges.
    ///
    /// At every hop level, synsets reached through `similar` edges alone are
    /// consulted before those whose path includes a `hypernym` edge. The
    /// first level (and class) yielding any lemma wins.
    pub fn translations_with_fallback(
        &self,
        id: &SynsetId,
        lang: &str,
        max_hops: usize,
    ) -> Result<Vec<FallbackTranslation>, InventoryError> {
        let origin = self.require(id)?;
        let direct = origin.lemmas(lang);
        if !direct.is_empty() {
            return Ok(direct
                .iter()
                .map(|lemma| FallbackTranslation {
                    lemma: lemma.clone(),
                    provenance: Provenance::Direct,
                    path: vec![id.clone()],
                })
                .collect());
        }

        struct Node<'a> {
            synset: &'a Synset,
            via_hypernym: bool,
            path: Vec<SynsetId>,
        }

        let mut visited: HashSet<&SynsetId> = HashSet::from([&origin.id]);
        let mut frontier = vec![Node {
            synset: origin,
            via_hypernym: false,
            path: vec![origin.id.clone()],
        }];

        for hop in 1..=max_hops {
            let mut similar_next = Vec::new();
            let mut hypernym_next = Vec::new();
            for node in &frontier {
                let ordered = node
                    .synset
                    .relations
                    .iter()
                    .filter(|(k, _)| *k == RelationKind::Similar)
                    .chain(
                        node.synset
                            .relations
                            .iter()
                            .filter(|(k, _)| *k == RelationKind::Hypernym),
                    );
                for (kind, target) in ordered {
                    let Some(next) = self.synsets.get(target) else {
                        continue;
                    };
                    if !visited.insert(&next.id) {
                        continue;
                    }
                    let mut path = node.path.clone();
                    path.push(next.id.clone());
                    let via_hypernym = node.via_hypernym || *kind == RelationKind::Hypernym;
                    let item = Node {
                        synset: next,
                        via_hypernym,
                        path,
                    };
                    if via_hypernym {
                        hypernym_next.push(item);
                    } else {
                        similar_next.push(item);
                    }
                }
            }

            for class in [&similar_next, &hypernym_next] {
                let mut seen = HashSet::new();
                let mut found = Vec::new();
                for node in class {
                    for lemma in node.synset.lemmas(lang) {
                        if seen.insert(lemma.as_str()) {
                            let provenance = if node.via_hypernym {
                                Provenance::Hypernym { hops: hop }
                            } else {
                                Provenance::Similar { hops: hop }
                            };
                            found.push(FallbackTranslation {
                                lemma: lemma.clone(),
                                provenance,
                                path: node.path.clone(),
                            });
                        }
                    }
                }
                if !found.is_empty() {
                    return Ok(found);
                }
            }

            similar_next.extend(hypernym_next);
            if similar_next.is_empty() {
                break;
            }
            frontier = similar_next;
        }
        Ok(Vec::new())
    }

    /// Checks that `path` starts at `from`, follows stored relations edge by
    /// edge, and that its end synset lexicalizes `lemma` in `lang`.
    pub fn is_valid_path(&self, from: &SynsetId, path: &[SynsetId], lang: &str, lemma: &str) -> bool {
        let Some(first) = path.first() else {
            return false;
        };
        if first != from {
            return false;
        }
        for pair in path.windows(2) {
            let Some(src) = self.synsets.get(&pair[0]) else {
                return false;
            };
            if !src.relations.iter().any(|(_, t)| *t == pair[1]) {
                return false;
            }
        }
        self.synsets
            .get(path.last().unwrap())
            .is_some_and(|s| s.lemmas(lang).iter().any(|l| l == lemma))
    }
}

/// How a translation was reached from the queried synset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Direct,
    Similar { hops: usize },
    Hypernym { hops: usize },
}

impl Provenance {
    pub fn is_direct(self) -> bool {
        matches!(self, Provenance::Direct)
    }

    pub fn hops(self) -> usize {
        match self {
            Provenance::Direct => 0,
            Provenance::Similar { hops } | Provenance::Hypernym { hops } => hops,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Direct => f.write_str("direct"),
            Provenance::Similar { hops } => write!(f, "similar@{hops}"),
            Provenance::Hypernym { hops } => write!(f, "hypernym@{hops}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackTranslation {
    pub lemma: String,
    pub provenance: Provenance,
    /// Synsets visited from the queried one to the one holding `lemma`.
    pub path: Vec<SynsetId>,
}
