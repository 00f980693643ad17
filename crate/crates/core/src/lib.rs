//! Code-switched pretraining data synthesis with sense-pivoted and
//! sense-agnostic substitution, a small reference seq2seq trainer for the
//! joint cross-entropy + contrastive objective, and translation
//! disambiguation scoring.

pub mod cli;
pub mod codeswitch;
pub mod eval;
pub mod lexicon;
pub mod seeding;
pub mod trainer;
pub mod sense_inventory;
pub mod wsd;

pub use codeswitch::{
    noise_aa, noise_wsp, CodeSwitchedPair, KbResources, LexiconSet, Method, Mode, NoisingConfig,
    Substitution,
};
pub use lexicon::{BilingualLexicon, InflectionMap, Lemmatizer};
pub use sense_inventory::{SenseInventory, SynsetId};
pub use wsd::{AnnotatedSentence, TokenAnnotation};
