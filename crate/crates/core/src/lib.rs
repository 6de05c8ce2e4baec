//! Pseudo-parallel training data generation from monolingual corpora and
//! bilingual dictionaries.
//!
//! The crate turns line-per-document corpora into seq2seq training pairs:
//!
//! - [`wbw`] translates a document word-by-word through dictionary lookup
//!   (with an English pivot for missing entries, named-entity transliteration,
//!   and compound splitting) and reports the missing-word rate.
//! - [`noiser`] manufactures denoiser training pairs by shuffling, removing,
//!   adding and substituting words at per-language calibrated rates, and
//!   calibrates the removal distribution from word-by-word coverage.
//! - [`pipeline`] drives the multilingual pair-generation loop, the external
//!   denoiser hook, the MLM / MLM-with-reordering baseline generators and the
//!   objective mixing schedule.
//!
//! Everything is deterministic under a fixed seed: per-record RNG streams are
//! derived in [`seeding`] from stable record coordinates, never from
//! execution order, so any degree of document-level parallelism produces
//! byte-identical output.

pub mod annotate;
pub mod corpus;
pub mod lexicon;
pub mod noiser;
pub mod pipeline;
pub mod seeding;
pub mod wbw;

pub use corpus::{
    Document, DocumentBatch, LanguageId, Objective, ParallelPair, Sentence, Span, Token, TokenKind,
};
pub use lexicon::{Lexicon, LexiconSet};
pub use noiser::{CalibrationReport, NoiseProfile};
pub use pipeline::{DenoiserHook, MixSchedule, MlmParams};
pub use seeding::SeedContext;
pub use wbw::{TokenOutcome, TokenResult, WbwResult};
