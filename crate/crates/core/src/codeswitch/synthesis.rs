//! Corpus-level synthesis: noise every sentence, shuffle, write shards and a
//! manifest.
//!
//! Output is a pure function of the input stream, the noising config and
//! [`SynthesisOptions`]. Each item is noised with its own generator
//! (`item_rng(seed, ordinal)`), so chunks are processed in parallel without
//! affecting the result.
//!
//! Shuffling keeps every serialized pair in memory until `max_in_memory` is
//! exceeded. Past that point pairs are scattered to `spill_buckets` temporary
//! files (bucket drawn from the `spill` stream of the item's ordinal), each
//! bucket is shuffled in memory, and buckets are concatenated in order. The
//! manifest records which path ran.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{
    noise_aa, noise_wsp, CodeSwitchedPair, FallbackConfig, KbResources, LexiconSet, Mode,
    NoiseTotals, NoisingConfig, TargetLang,
};
use crate::seeding::{derive_seed, item_rng};
use crate::wsd::{AnnotatedSentence, AnnotationStats, CorpusSentence, WsdError};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("mode `{mode}` requires {resource}")]
    MissingResource { mode: Mode, resource: &'static str },
    #[error("invalid noising config: {0}")]
    Config(#[from] super::ConfigError),
    #[error(transparent)]
    Input(#[from] WsdError),
    #[error("data error: {0}")]
    Data(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> SynthesisError + '_ {
    move |source| SynthesisError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub enum SourceItem {
    Parallel {
        source: AnnotatedSentence,
        target: CorpusSentence,
    },
    Monolingual(AnnotatedSentence),
}

#[derive(Clone, Copy, Default)]
pub struct SynthesisResources<'a> {
    pub lexicons: Option<&'a LexiconSet>,
    pub kb: Option<KbResources<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisOptions {
    #[serde(default = "default_shard_size")]
    pub shard_size: usize,
    #[serde(default = "default_max_in_memory")]
    pub max_in_memory: usize,
    #[serde(default = "default_spill_buckets")]
    pub spill_buckets: usize,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
}

fn default_shard_size() -> usize {
    100_000
}
fn default_max_in_memory() -> usize {
    4_000_000
}
fn default_spill_buckets() -> usize {
    16
}
fn default_chunk() -> usize {
    8192
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            shard_size: default_shard_size(),
            max_in_memory: default_max_in_memory(),
            spill_buckets: default_spill_buckets(),
            chunk_size: default_chunk(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub pairs: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleInfo {
    /// `in-memory` or `external`.
    pub strategy: String,
    pub buckets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub replacement_ratio: f64,
    pub target_langs: Vec<TargetLang>,
    pub use_morph_inflection: bool,
    pub fallback: FallbackConfig,
    pub totals: NoiseTotals,
    pub achieved_ratio: f64,
    pub shuffle: ShuffleInfo,
    pub shards: Vec<ShardInfo>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotation: BTreeMap<String, AnnotationStats>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SynthesisError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(io_at(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, SynthesisError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        serde_json::from_str(&text).map_err(|e| SynthesisError::Data(format!("{}: {e}", path.display())))
    }
}

/// Wall-clock measurements, kept out of the manifest so that the manifest
/// stays byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTiming {
    pub elapsed_secs: f64,
    pub pairs_per_sec: f64,
    pub threads: usize,
}

fn noise_item(
    item: &SourceItem,
    ordinal: u64,
    res: SynthesisResources<'_>,
    cfg: &NoisingConfig,
) -> CodeSwitchedPair {
    let mut rng = item_rng(cfg.seed, ordinal);
    let source = match item {
        SourceItem::Parallel { source, .. } => source,
        SourceItem::Monolingual(s) => s,
    };
    let noised = match cfg.mode {
        Mode::Aa => noise_aa(
            &source.tokens,
            &source.language,
            res.lexicons.expect("checked before noising"),
            cfg,
            &mut rng,
        ),
        Mode::Wsp => noise_wsp(source, res.kb.expect("checked before noising"), cfg, &mut rng),
    };
    match item {
        SourceItem::Parallel { target, .. } => {
            noised.translation_pair(&source.language, &target.tokens, &target.lang, cfg)
        }
        SourceItem::Monolingual(s) => noised.denoising_pair(&s.tokens, &s.language, cfg),
    }
}

struct ShardWriter {
    dir: PathBuf,
    shard_size: usize,
    current: Option<(BufWriter<File>, Sha256, usize, String)>,
    shards: Vec<ShardInfo>,
}

impl ShardWriter {
    fn new(dir: PathBuf, shard_size: usize) -> Result<Self, SynthesisError> {
        fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        // drop shards left by an earlier, larger run
        for entry in fs::read_dir(&dir).map_err(io_at(&dir))? {
            let entry = entry.map_err(io_at(&dir))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if name.starts_with("part-") && name.ends_with(".jsonl") {
                fs::remove_file(entry.path()).map_err(io_at(&entry.path()))?;
            }
        }
        Ok(ShardWriter {
            dir,
            shard_size: shard_size.max(1),
            current: None,
            shards: Vec::new(),
        })
    }

    fn write_line(&mut self, line: &str) -> Result<(), SynthesisError> {
        if self.current.is_none() {
            let name = format!("part-{:05}.jsonl", self.shards.len());
            let path = self.dir.join(&name);
            let file = File::create(&path).map_err(io_at(&path))?;
            self.current = Some((BufWriter::new(file), Sha256::new(), 0, name));
        }
        let (w, hasher, count, _) = self.current.as_mut().unwrap();
        let dir = self.dir.clone();
        w.write_all(line.as_bytes()).map_err(io_at(&dir))?;
        w.write_all(b"\n").map_err(io_at(&dir))?;
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        *count += 1;
        if *count >= self.shard_size {
            self.close_current()?;
        }
        Ok(())
    }

    fn close_current(&mut self) -> Result<(), SynthesisError> {
        if let Some((mut w, hasher, count, name)) = self.current.take() {
            w.flush().map_err(io_at(&self.dir))?;
            let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
            self.shards.push(ShardInfo {
                file: format!("data/{name}"),
                pairs: count,
                sha256,
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<ShardInfo>, SynthesisError> {
        self.close_current()?;
        Ok(self.shards)
    }
}

enum Buffer {
    Memory(Vec<String>),
    Spilled {
        dir: PathBuf,
        writers: Vec<BufWriter<File>>,
    },
}

fn spill_bucket(spill_seed: u64, ordinal: u64, buckets: usize) -> usize {
    item_rng(spill_seed, ordinal).random_range(0..buckets)
}

/// Noises `items`, shuffles the resulting pairs and writes them as shards
/// under `out_dir/data/`. Returns the manifest (not yet written) and timing.
pub fn synthesize_corpus<I>(
    items: I,
    res: SynthesisResources<'_>,
    cfg: &NoisingConfig,
    opts: &SynthesisOptions,
    out_dir: &Path,
) -> Result<(Manifest, SynthesisTiming), SynthesisError>
where
    I: Iterator<Item = Result<SourceItem, SynthesisError>>,
{
    cfg.validate()?;
    match cfg.mode {
        Mode::Aa if res.lexicons.is_none() => {
            return Err(SynthesisError::MissingResource {
                mode: Mode::Aa,
                resource: "bilingual lexicons",
            })
        }
        Mode::Wsp if res.kb.is_none() => {
            return Err(SynthesisError::MissingResource {
                mode: Mode::Wsp,
                resource: "a sense inventory",
            })
        }
        _ => {}
    }

    let started = Instant::now();
    let spill_seed = derive_seed(cfg.seed, "spill");
    let shuffle_seed = derive_seed(cfg.seed, "shuffle");
    let buckets = opts.spill_buckets.max(1);
    let mut totals = NoiseTotals::new();
    let mut buffer = Buffer::Memory(Vec::new());
    let mut ordinal: u64 = 0;
    let mut items = items.peekable();
    let mut chunk: Vec<SourceItem> = Vec::with_capacity(opts.chunk_size.max(1));

    while items.peek().is_some() {
        chunk.clear();
        while chunk.len() < opts.chunk_size.max(1) {
            match items.next() {
                Some(item) => chunk.push(item?),
                None => break,
            }
        }
        let base = ordinal;
        let noised: Vec<(CodeSwitchedPair, String)> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                let pair = noise_item(item, base + i as u64, res, cfg);
                let line = pair.to_json_line();
                (pair, line)
            })
            .collect();
        for (pair, line) in noised {
            totals.record(&pair);
            match &mut buffer {
                Buffer::Memory(lines) => lines.push(line),
                Buffer::Spilled { writers, dir } => {
                    let b = spill_bucket(spill_seed, ordinal, buckets);
                    writeln!(writers[b], "{line}").map_err(io_at(dir))?;
                }
            }
            ordinal += 1;
            if let Buffer::Memory(lines) = &buffer {
                if lines.len() > opts.max_in_memory {
                    buffer = spill(lines, out_dir, spill_seed, buckets)?;
                }
            }
        }
    }

    let mut shards = ShardWriter::new(out_dir.join("data"), opts.shard_size)?;
    let shuffle = match buffer {
        Buffer::Memory(mut lines) => {
            lines.shuffle(&mut item_rng(shuffle_seed, 0));
            for line in &lines {
                shards.write_line(line)?;
            }
            ShuffleInfo {
                strategy: "in-memory".into(),
                buckets: 1,
            }
        }
        Buffer::Spilled { dir, writers } => {
            for w in writers {
                w.into_inner().map_err(|e| SynthesisError::Io {
                    path: dir.display().to_string(),
                    source: e.into_error(),
                })?;
            }
            for b in 0..buckets {
                let path = dir.join(format!("bucket-{b:04}.jsonl"));
                let file = File::open(&path).map_err(io_at(&path))?;
                let mut lines = BufReader::new(file)
                    .lines()
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(io_at(&path))?;
                lines.shuffle(&mut item_rng(shuffle_seed, b as u64));
                for line in &lines {
                    shards.write_line(line)?;
                }
            }
            fs::remove_dir_all(&dir).map_err(io_at(&dir))?;
            ShuffleInfo {
                strategy: "external".into(),
                buckets,
            }
        }
    };
    let shards = shards.finish()?;

    let elapsed = started.elapsed().as_secs_f64();
    let timing = SynthesisTiming {
        elapsed_secs: elapsed,
        pairs_per_sec: if elapsed > 0.0 { totals.pairs as f64 / elapsed } else { 0.0 },
        threads: rayon::current_num_threads(),
    };
    let manifest = Manifest {
        format_version: 1,
        mode: cfg.mode,
        seed: cfg.seed,
        replacement_ratio: cfg.replacement_ratio,
        target_langs: cfg.target_langs.clone(),
        use_morph_inflection: cfg.use_morph_inflection,
        fallback: cfg.fallback,
        achieved_ratio: totals.achieved_ratio(),
        totals,
        shuffle,
        shards,
        annotation: BTreeMap::new(),
    };
    Ok((manifest, timing))
}

fn spill(lines: &[String], out_dir: &Path, spill_seed: u64, buckets: usize) -> Result<Buffer, SynthesisError> {
    let dir = out_dir.join(".spill");
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_at(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let mut writers = Vec::with_capacity(buckets);
    for b in 0..buckets {
        let path = dir.join(format!("bucket-{b:04}.jsonl"));
        writers.push(BufWriter::new(File::create(&path).map_err(io_at(&path))?));
    }
    for (ordinal, line) in lines.iter().enumerate() {
        let b = spill_bucket(spill_seed, ordinal as u64, buckets);
        writeln!(writers[b], "{line}").map_err(io_at(&dir))?;
    }
    Ok(Buffer::Spilled { dir, writers })
}

/// Reads every pair back from the shards listed in a manifest, in shard order.
pub fn read_dataset(out_dir: &Path, manifest: &Manifest) -> Result<Vec<super::DatasetRecord>, SynthesisError> {
    let mut out = Vec::with_capacity(manifest.totals.pairs);
    for shard in &manifest.shards {
        let path = out_dir.join(&shard.file);
        let file = File::open(&path).map_err(io_at(&path))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_at(&path))?;
            let rec = serde_json::from_str(&line)
                .map_err(|e| SynthesisError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
            out.push(rec);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::BilingualLexicon;

    fn sentence(id: &str, lang: &str, text: &str) -> AnnotatedSentence {
        AnnotatedSentence {
            sentence_id: id.into(),
            language: lang.into(),
            tokens: text.split_whitespace().map(str::to_string).collect(),
            annotations: Vec::new(),
        }
    }

    fn items() -> Vec<SourceItem> {
        vec![
            SourceItem::Parallel {
                source: sentence("p1", "en", "the bank"),
                target: CorpusSentence {
                    id: "p1".into(),
                    lang: "it".into(),
                    tokens: vec!["la".into(), "banca".into()],
                },
            },
            SourceItem::Parallel {
                source: sentence("p2", "en", "a river"),
                target: CorpusSentence {
                    id: "p2".into(),
                    lang: "it".into(),
                    tokens: vec!["un".into(), "fiume".into()],
                },
            },
            SourceItem::Monolingual(sentence("m1", "en", "bank river money")),
        ]
    }

    fn lexicons() -> LexiconSet {
        let mut set = LexiconSet::new();
        set.insert(BilingualLexicon::from_pairs(
            "en",
            "it",
            [("bank", "banca"), ("bank", "riva"), ("river", "fiume")],
        ));
        set
    }

    fn run(dir: &Path, opts: &SynthesisOptions) -> (Manifest, Vec<String>) {
        let lex = lexicons();
        let mut cfg = NoisingConfig::new(Mode::Aa, 0.5, &["it"]);
        cfg.seed = 11;
        let res = SynthesisResources {
            lexicons: Some(&lex),
            kb: None,
        };
        let (m, _) = synthesize_corpus(items().into_iter().map(Ok), res, &cfg, opts, dir).unwrap();
        let mut lines = Vec::new();
        for s in &m.shards {
            lines.extend(fs::read_to_string(dir.join(&s.file)).unwrap().lines().map(str::to_string));
        }
        (m, lines)
    }

    #[test]
    fn cardinality_language_tokens_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (ma, la) = run(a.path(), &SynthesisOptions::default());
        let (mb, lb) = run(b.path(), &SynthesisOptions::default());
        assert_eq!(la.len(), 3);
        assert_eq!(la, lb);
        assert_eq!(ma.to_json(), mb.to_json());
        assert_eq!(ma.totals.parallel_pairs, 2);
        assert_eq!(ma.totals.monolingual_pairs, 1);
        let recs: Vec<super::super::DatasetRecord> =
            la.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
        for r in &recs {
            assert!(r.src[0].starts_with("<lang_"));
            assert!(r.tgt[0].starts_with("<lang_"));
        }
        let mono = recs
            .iter()
            .find(|r| r.meta.origin == super::super::Origin::Monolingual)
            .unwrap();
        assert_eq!(mono.tgt, ["<lang_en>", "bank", "river", "money"]);
    }

    #[test]
    fn external_shuffle_matches_content_and_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let opts = SynthesisOptions {
            shard_size: 2,
            max_in_memory: 1,
            spill_buckets: 3,
            chunk_size: 2,
        };
        let (ma, mut la) = run(a.path(), &opts);
        let (_, lb) = run(b.path(), &opts);
        assert_eq!(la, lb);
        assert_eq!(ma.shuffle.strategy, "external");
        assert_eq!(ma.shards.len(), 2);
        assert!(!a.path().join(".spill").exists());
        let c = tempfile::tempdir().unwrap();
        let (_, mut lc) = run(c.path(), &SynthesisOptions::default());
        la.sort();
        lc.sort();
        assert_eq!(la, lc);
    }

    #[test]
    fn missing_resource_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = NoisingConfig::new(Mode::Wsp, 0.1, &["it"]);
        let err = synthesize_corpus(
            items().into_iter().map(Ok),
            SynthesisResources::default(),
            &cfg,
            &SynthesisOptions::default(),
            dir.path(),
        )
        .unwrap_err();
        assert!(matches!(err, SynthesisError::MissingResource { mode: Mode::Wsp, .. }));
    }
}
