//! Run configuration file and its validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codeswitch::{ConfigError, Mode, NoisingConfig, SynthesisOptions};
use crate::sense_inventory::SenseInventory;
use crate::trainer::{TrainConfig, TrainError};
use crate::wsd::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconSpec {
    pub src: String,
    pub tgt: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourcePaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inventory: Option<PathBuf>,
    pub lexicons: Vec<LexiconSpec>,
    /// Language code to `inflected<TAB>lemma` table.
    pub lemma_tables: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub name: String,
    /// JSONL `{id, lang, text}`.
    pub path: PathBuf,
    /// Gold or predicted sense annotations for `path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    /// Line-aligned translation of `path`; makes this a parallel corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub strategy: Strategy,
    pub window: usize,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig { strategy: Strategy::Lesk, window: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// JSONL `{id, src, word, pos, good, bad}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_set: Option<PathBuf>,
    /// JSONL `{id, ref}` for BLEU and chrF++.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub references: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_lang: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_lang: Option<String>,
    pub max_decode_len: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { test_set: None, references: None, source_lang: None, target_lang: None, max_decode_len: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Every stage seed is derived from this one.
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub resources: ResourcePaths,
    #[serde(default)]
    pub corpora: Vec<CorpusSpec>,
    pub noising: NoisingConfig,
    #[serde(default)]
    pub synthesis: SynthesisOptions,
    #[serde(default)]
    pub annotate: AnnotateConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationCode {
    #[serde(rename = "E_SCHEMA")]
    Schema,
    #[serde(rename = "E_PATH")]
    Path,
    #[serde(rename = "E_MODE_RES")]
    ModeResource,
    #[serde(rename = "E_LANG")]
    Lang,
    #[serde(rename = "E_RANGE")]
    Range,
    /// A referenced resource exists but cannot be parsed.
    #[serde(rename = "E_DATA")]
    Data,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::Schema => "E_SCHEMA",
            ViolationCode::Path => "E_PATH",
            ViolationCode::ModeResource => "E_MODE_RES",
            ViolationCode::Lang => "E_LANG",
            ViolationCode::Range => "E_RANGE",
            ViolationCode::Data => "E_DATA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.code.as_str(), self.field, self.message)
    }
}

fn violation(code: ViolationCode, field: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { code, field: field.into(), message: message.into() }
}

/// Which command the config is being checked for; each needs different inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    BuildInflections,
    Annotate,
    Synthesize,
    Train,
    Evaluate,
    Compare,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Violation> {
        toml::from_str(text).map_err(|e| violation(ViolationCode::Schema, "<file>", e.to_string().trim_end()))
    }

    pub fn load(path: &Path) -> Result<Self, Violation> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| violation(ViolationCode::Path, "--config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Relative paths in the file are taken relative to the file's directory.
    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(p) = self.resources.inventory.as_mut() {
            fix(p);
        }
        self.resources.lexicons.iter_mut().for_each(|l| fix(&mut l.path));
        self.resources.lemma_tables.values_mut().for_each(fix);
        for c in &mut self.corpora {
            fix(&mut c.path);
            if let Some(p) = c.annotations.as_mut() {
                fix(p);
            }
            if let Some(p) = c.target.as_mut() {
                fix(p);
            }
        }
        if let Some(p) = self.eval.test_set.as_mut() {
            fix(p);
        }
        if let Some(p) = self.eval.references.as_mut() {
            fix(p);
        }
    }

    pub fn synthesis_dir(&self) -> PathBuf {
        self.out_dir.join("synthesis")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.out_dir.join("train")
    }

    /// All violations for `stage`. Parses the inventory when language checks
    /// need it.
    pub fn validate(&self, stage: Stage) -> Vec<Violation> {
        use ViolationCode::*;
        let mut v = Vec::new();
        let all = stage == Stage::Validate;

        if let Err(e) = self.noising.validate() {
            let code = match e {
                ConfigError::Ratio(_) | ConfigError::Weight { .. } => Range,
                _ => Schema,
            };
            v.push(violation(code, "noising", e.to_string()));
        }
        if let Err(e) = self.train.validate() {
            let code = match e {
                TrainError::Temperature(_) => Range,
                _ => Schema,
            };
            v.push(violation(code, "train", e.to_string()));
        }
        if self.synthesis.shard_size == 0 || self.synthesis.spill_buckets == 0 || self.synthesis.chunk_size == 0 {
            v.push(violation(Range, "synthesis", "shard_size, spill_buckets and chunk_size must be positive"));
        }
        if self.eval.max_decode_len == 0 {
            v.push(violation(Range, "eval.max_decode_len", "must be positive"));
        }

        let mut check_path = |field: String, p: &std::path::Path| {
            if !p.is_file() {
                v.push(violation(Path, field, format!("{} does not exist", p.display())));
            }
        };
        if let Some(p) = &self.resources.inventory {
            check_path("resources.inventory".into(), p);
        }
        for (i, l) in self.resources.lexicons.iter().enumerate() {
            check_path(format!("resources.lexicons[{i}].path"), &l.path);
        }
        for (lang, p) in &self.resources.lemma_tables {
            check_path(format!("resources.lemma_tables.{lang}"), p);
        }
        for (i, c) in self.corpora.iter().enumerate() {
            check_path(format!("corpora[{i}].path"), &c.path);
            if let Some(a) = &c.annotations {
                check_path(format!("corpora[{i}].annotations"), a);
            }
            if let Some(t) = &c.target {
                check_path(format!("corpora[{i}].target"), t);
            }
        }
        if let Some(p) = &self.eval.test_set {
            check_path("eval.test_set".into(), p);
        }
        if let Some(p) = &self.eval.references {
            check_path("eval.references".into(), p);
        }

        let mut names = BTreeSet::new();
        for c in &self.corpora {
            if !names.insert(c.name.as_str()) {
                v.push(violation(Schema, "corpora", format!("duplicate corpus name {:?}", c.name)));
            }
        }

        let needs_corpus = matches!(stage, Stage::Annotate | Stage::Synthesize);
        if needs_corpus && self.corpora.is_empty() {
            v.push(violation(Schema, "corpora", "at least one corpus is required"));
        }
        if stage == Stage::BuildInflections && self.resources.lexicons.is_empty() {
            v.push(violation(ModeResource, "resources.lexicons", "build-inflections needs bilingual lexicons"));
        }
        if stage == Stage::Annotate && self.resources.inventory.is_none() {
            v.push(violation(ModeResource, "resources.inventory", "annotate needs a sense inventory"));
        }
        if all || stage == Stage::Synthesize {
            match self.noising.mode {
                Mode::Aa if self.resources.lexicons.is_empty() => {
                    v.push(violation(ModeResource, "resources.lexicons", "aa mode needs bilingual lexicons"))
                }
                Mode::Wsp => {
                    if self.resources.inventory.is_none() {
                        v.push(violation(ModeResource, "resources.inventory", "wsp mode needs a sense inventory"));
                    }
                    for (i, c) in self.corpora.iter().enumerate() {
                        if c.annotations.is_none() {
                            v.push(violation(
                                ModeResource,
                                format!("corpora[{i}].annotations"),
                                "wsp mode needs sense annotations for every corpus",
                            ));
                        }
                    }
                }
                _ => {}
            }
        }
        if matches!(stage, Stage::Evaluate | Stage::Compare) && self.eval.test_set.is_none() {
            v.push(violation(ModeResource, "eval.test_set", "evaluation needs a test set"));
        }
        if stage == Stage::Train {
            let m = self.synthesis_dir().join("manifest.json");
            if !m.is_file() {
                v.push(violation(Path, "out_dir", format!("{} not found; run synthesize first", m.display())));
            }
        }

        self.check_languages(stage, &mut v);
        v
    }

    fn check_languages(&self, stage: Stage, v: &mut Vec<Violation>) {
        use ViolationCode::*;
        let targets: Vec<&str> = self.noising.target_langs.iter().map(|t| t.lang.as_str()).collect();
        let mut seen = BTreeSet::new();
        for t in &targets {
            if !seen.insert(*t) {
                v.push(violation(Lang, "noising.target_langs", format!("{t} listed twice")));
            }
        }
        let synth = matches!(stage, Stage::Validate | Stage::Synthesize);
        if synth && self.noising.mode == Mode::Aa && !self.resources.lexicons.is_empty() {
            let covered: BTreeSet<&str> = self.resources.lexicons.iter().map(|l| l.tgt.as_str()).collect();
            for t in &targets {
                if !covered.contains(t) {
                    v.push(violation(Lang, "noising.target_langs", format!("no lexicon translates into {t}")));
                }
            }
        }
        if synth && self.noising.mode == Mode::Wsp {
            if let Some(p) = self.resources.inventory.as_ref().filter(|p| p.is_file()) {
                match SenseInventory::load(p) {
                    Ok(inv) => {
                        for t in &targets {
                            if !inv.languages().contains(*t) {
                                v.push(violation(Lang, "noising.target_langs", format!("inventory has no {t} lexicalizations")));
                            }
                        }
                    }
                    Err(e) => v.push(violation(Data, "resources.inventory", e.to_string())),
                }
            }
        }
        for (i, l) in self.resources.lexicons.iter().enumerate() {
            if l.src == l.tgt {
                v.push(violation(Lang, format!("resources.lexicons[{i}]"), "source and target language are equal"));
            }
        }
        if stage == Stage::BuildInflections || stage == Stage::Validate {
            for (i, l) in self.resources.lexicons.iter().enumerate() {
                if stage == Stage::BuildInflections && !self.resources.lemma_tables.contains_key(&l.tgt) {
                    v.push(violation(
                        Lang,
                        format!("resources.lexicons[{i}]"),
                        format!("no lemma table for target language {}", l.tgt),
                    ));
                }
            }
        }
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, mode: Option<Mode>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(m) = mode {
            self.noising.mode = m;
        }
        if let Some(o) = out {
            self.out_dir = o;
        }
    }
}
