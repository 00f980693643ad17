//! Synthetic English-to-Italian task with skewed two-sense ambiguous nouns.
//!
//! Sentences are `f a k g`: a filler, an ambiguous word, a context word that
//! selects the sense, and a second filler. The reference translates token by
//! token, so the sense of `a` decides which of its two Italian words appears.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::Path;

use rand::Rng;
use senseswitch::codeswitch::{
    read_dataset, synthesize_corpus, InflectionMaps, KbResources, LexiconSet, Mode, NoisingConfig, SourceItem,
    SynthesisOptions, SynthesisResources,
};
use senseswitch::eval::{dibimt_score, DibimtItem};
use senseswitch::lexicon::{BilingualLexicon, Lemmatizer};
use senseswitch::seeding::item_rng;
use senseswitch::sense_inventory::{SenseInventory, SynsetId};
use senseswitch::trainer::{train, TextPair, TrainConfig};
use senseswitch::wsd::{AnnotatedSentence, CorpusSentence, TokenAnnotation};

#[derive(Debug, Clone)]
pub struct AmbiguityTask {
    pub ambiguous: usize,
    pub fillers: usize,
    /// Probability of the second, rarer sense.
    pub rare_prob: f64,
    pub parallel: usize,
    /// English monolingual sentences.
    pub monolingual: usize,
    /// Italian monolingual sentences.
    pub monolingual_it: usize,
    pub replacement_ratio: f64,
}

impl Default for AmbiguityTask {
    fn default() -> Self {
        AmbiguityTask {
            ambiguous: 10,
            fillers: 4,
            rare_prob: 0.2,
            parallel: 400,
            monolingual: 2000,
            monolingual_it: 0,
            replacement_ratio: 0.25,
        }
    }
}

pub struct Sample {
    pub english: Vec<String>,
    pub italian: Vec<String>,
    pub annotations: Vec<TokenAnnotation>,
    pub word: usize,
    pub sense: usize,
}

pub struct Resources {
    pub inventory: SenseInventory,
    pub lexicons: LexiconSet,
    pub inflections: InflectionMaps,
    pub lemmatizer: Lemmatizer,
}

fn amb(i: usize) -> String {
    format!("a{i}")
}
fn amb_it(i: usize, s: usize) -> String {
    format!("ta{i}s{s}")
}
fn amb_syn(i: usize, s: usize) -> String {
    format!("a{i}s{s}#n")
}

impl AmbiguityTask {
    /// `(english, italian, synset)` for every lexical unit.
    fn units(&self) -> Vec<(String, String, String)> {
        let mut out = Vec::new();
        for i in 0..self.ambiguous {
            for s in 0..2 {
                out.push((amb(i), amb_it(i, s), amb_syn(i, s)));
            }
        }
        for s in 0..2 {
            out.push((format!("k{s}"), format!("tk{s}"), format!("k{s}#n")));
        }
        for j in 0..self.fillers {
            out.push((format!("f{j}"), format!("tf{j}"), format!("f{j}#n")));
            out.push((format!("g{j}"), format!("tg{j}"), format!("g{j}#n")));
        }
        out
    }

    pub fn resources(&self) -> Resources {
        let units = self.units();
        let lines: Vec<String> = units
            .iter()
            .map(|(en, it, syn)| format!(r#"{{"id":"{syn}","pos":"n","lex":{{"en":["{en}"],"it":["{it}"]}}}}"#))
            .collect();
        let inventory = SenseInventory::from_reader(Cursor::new(lines.join("\n")), "ambiguity").expect("inventory");
        let mut lexicons = LexiconSet::new();
        lexicons.insert(BilingualLexicon::from_pairs(
            "en",
            "it",
            units.iter().map(|(en, it, _)| (en.as_str(), it.as_str())),
        ));
        lexicons.insert(BilingualLexicon::from_pairs(
            "it",
            "en",
            units.iter().map(|(en, it, _)| (it.as_str(), en.as_str())),
        ));
        Resources {
            inventory,
            lexicons,
            inflections: InflectionMaps::new(),
            lemmatizer: Lemmatizer::new(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, sense: Option<usize>) -> Sample {
        let f = rng.random_range(0..self.fillers);
        let i = rng.random_range(0..self.ambiguous);
        let s = sense.unwrap_or_else(|| usize::from(rng.random_bool(self.rare_prob)));
        let g = rng.random_range(0..self.fillers);
        let english = vec![format!("f{f}"), amb(i), format!("k{s}"), format!("g{g}")];
        let italian = vec![format!("tf{f}"), amb_it(i, s), format!("tk{s}"), format!("tg{g}")];
        let synsets = [format!("f{f}#n"), amb_syn(i, s), format!("k{s}#n"), format!("g{g}#n")];
        let annotations = english
            .iter()
            .zip(&synsets)
            .enumerate()
            .map(|(idx, (lemma, syn))| TokenAnnotation {
                token_index: idx,
                span_len: 1,
                lemma: lemma.clone(),
                pos: "n".into(),
                synset: SynsetId::new(syn.clone()).expect("synset id"),
                confidence: 1.0,
            })
            .collect();
        Sample {
            english,
            italian,
            annotations,
            word: i,
            sense: s,
        }
    }

    /// Parallel and monolingual source items drawn from `seed`.
    pub fn corpus(&self, seed: u64) -> Vec<SourceItem> {
        let mut rng = item_rng(seed, 1);
        let total = self.parallel + self.monolingual + self.monolingual_it;
        let mut items = Vec::with_capacity(total);
        for n in 0..total {
            let s = self.sample(&mut rng, None);
            let id = format!("s{n}");
            let item = if n < self.parallel {
                SourceItem::Parallel {
                    source: AnnotatedSentence {
                        sentence_id: id.clone(),
                        language: "en".into(),
                        tokens: s.english,
                        annotations: s.annotations,
                    },
                    target: CorpusSentence {
                        id,
                        lang: "it".into(),
                        tokens: s.italian,
                    },
                }
            } else if n < self.parallel + self.monolingual {
                SourceItem::Monolingual(AnnotatedSentence {
                    sentence_id: id,
                    language: "en".into(),
                    tokens: s.english,
                    annotations: s.annotations,
                })
            } else {
                let annotations = s
                    .annotations
                    .into_iter()
                    .zip(&s.italian)
                    .map(|(a, lemma)| TokenAnnotation { lemma: lemma.clone(), ..a })
                    .collect();
                SourceItem::Monolingual(AnnotatedSentence {
                    sentence_id: id,
                    language: "it".into(),
                    tokens: s.italian,
                    annotations,
                })
            };
            items.push(item);
        }
        items
    }

    /// `n` test items, all using the rare sense.
    pub fn rare_sense_items(&self, n: usize, seed: u64) -> Vec<DibimtItem> {
        let mut rng = item_rng(seed, 2);
        (0..n)
            .map(|k| {
                let s = self.sample(&mut rng, Some(1));
                DibimtItem {
                    id: format!("t{k}"),
                    source_sentence: s.english.join(" "),
                    ambiguous_word: amb(s.word),
                    pos: "n".into(),
                    good: vec![amb_it(s.word, s.sense)],
                    bad: vec![amb_it(s.word, 1 - s.sense)],
                }
            })
            .collect()
    }

    pub fn noising(&self, mode: Mode, seed: u64) -> NoisingConfig {
        let mut cfg = NoisingConfig::new(mode, self.replacement_ratio, &["en", "it"]);
        cfg.seed = seed;
        cfg.use_morph_inflection = false;
        cfg
    }

    /// Synthesizes the code-switched dataset for `mode` under `dir`.
    pub fn synthesize(&self, mode: Mode, seed: u64, dir: &Path) -> Vec<TextPair> {
        let res = self.resources();
        let synth = match mode {
            Mode::Aa => SynthesisResources {
                lexicons: Some(&res.lexicons),
                kb: None,
            },
            Mode::Wsp => SynthesisResources {
                lexicons: None,
                kb: Some(KbResources {
                    inventory: &res.inventory,
                    inflections: &res.inflections,
                    lemmatizer: &res.lemmatizer,
                }),
            },
        };
        let cfg = self.noising(mode, seed);
        let (manifest, _) = synthesize_corpus(
            self.corpus(seed).into_iter().map(Ok),
            synth,
            &cfg,
            &SynthesisOptions::default(),
            dir,
        )
        .expect("synthesis");
        read_dataset(dir, &manifest)
            .expect("dataset")
            .into_iter()
            .map(|r| TextPair {
                source: r.src,
                target: r.tgt,
            })
            .collect()
    }
}

pub struct ArmResult {
    pub accuracy: f64,
    pub seconds: f64,
}

/// Synthesizes, trains and scores one system on the rare-sense test set.
pub fn run_arm(task: &AmbiguityTask, mode: Mode, seed: u64, train_cfg: &TrainConfig, test: &[DibimtItem]) -> ArmResult {
    let start = std::time::Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let pairs = task.synthesize(mode, seed, dir.path());
    let mut cfg = train_cfg.clone();
    cfg.seed = seed;
    let outcome = train(&pairs, &cfg).expect("training");
    let noising = task.noising(mode, seed);
    let hyps: HashMap<String, String> =
        senseswitch::cli::decode_items(&outcome.model, test, &noising, Some("en"), Some("it"), 8).expect("decode");
    let report = dibimt_score(test, &hyps, None, "it");
    ArmResult {
        accuracy: report.overall.accuracy,
        seconds: start.elapsed().as_secs_f64(),
    }
}
