//! Denoiser training-data generation.
//!
//! A denoising model learns to restore a document from a corrupted copy, so
//! each pair here is (corrupted text, original text). Corruption applies four
//! word-level operations per sentence — shuffle, remove, add, substitute —
//! with rates drawn per sentence from per-language distributions. Added and
//! substituted words come from the *other* documents of the batch, which is
//! why corpora are processed in fixed-size batches.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{NerProvider, TransliterationProvider};
use crate::corpus::{Document, DocumentBatch, LanguageId, Objective, ParallelPair};
use crate::lexicon::LexiconSet;
use crate::seeding::SeedContext;
use crate::wbw::{self, WbwError};

/// Seed for calibration runs. Fixed so that the measured rates are a stable
/// property of corpus + lexicons, not of the generation run they feed.
pub const CALIBRATION_SEED: u64 = 0x0ca1_1b8a;

#[derive(Debug, Error)]
pub enum NoiserError {
    #[error("document {doc_id} is in {doc_lang} but the noise profile is for {profile_lang}")]
    LanguageMismatch {
        doc_id: String,
        doc_lang: LanguageId,
        profile_lang: LanguageId,
    },
    #[error("invalid noise profile for {lang}: {reason}")]
    InvalidProfile { lang: LanguageId, reason: String },
    #[error("calibration saw no documents to translate into {tgt}")]
    NoDocuments { tgt: LanguageId },
    #[error(transparent)]
    Wbw(#[from] WbwError),
}

/// Per-language corruption rates. Removal rates are drawn from a normal
/// distribution (clamped to `[0, 1]`), addition and substitution rates from
/// uniform ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub lang: LanguageId,
    pub remove_mean: f64,
    pub remove_std: f64,
    pub add_min: f64,
    pub add_max: f64,
    pub sub_min: f64,
    pub sub_max: f64,
}

impl NoiseProfile {
    /// Built-in rates for the three shipped languages, measured against the
    /// published 110k-pair bilingual dictionaries. Other languages need
    /// explicit profiles, typically from `calibrate`.
    pub fn builtin(lang: LanguageId) -> Option<NoiseProfile> {
        let (remove_mean, remove_std) = match lang.as_str() {
            "en" => (0.066, 0.061),
            "fr" => (0.152, 0.087),
            "de" => (0.137, 0.085),
            _ => return None,
        };
        Some(NoiseProfile {
            lang,
            remove_mean,
            remove_std,
            add_min: 0.01,
            add_max: 0.03,
            sub_min: 0.05,
            sub_max: 0.07,
        })
    }

    /// A profile from measured removal statistics plus the standard
    /// add/substitute ranges.
    pub fn from_removal_stats(lang: LanguageId, mean: f64, std: f64) -> NoiseProfile {
        NoiseProfile {
            lang,
            remove_mean: mean,
            remove_std: std,
            add_min: 0.01,
            add_max: 0.03,
            sub_min: 0.05,
            sub_max: 0.07,
        }
    }

    pub fn validate(&self) -> Result<(), NoiserError> {
        let fail = |reason: String| NoiserError::InvalidProfile {
            lang: self.lang,
            reason,
        };
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(fail(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("remove_mean", self.remove_mean)?;
        unit("add_min", self.add_min)?;
        unit("add_max", self.add_max)?;
        unit("sub_min", self.sub_min)?;
        unit("sub_max", self.sub_max)?;
        if !self.remove_std.is_finite() || self.remove_std < 0.0 {
            return Err(fail(format!(
                "remove_std = {} is negative",
                self.remove_std
            )));
        }
        if self.add_min > self.add_max {
            return Err(fail("add_min exceeds add_max".into()));
        }
        if self.sub_min > self.sub_max {
            return Err(fail("sub_min exceeds sub_max".into()));
        }
        Ok(())
    }
}

/// The four corruption operations, in their default application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOp {
    Shuffle,
    Remove,
    Add,
    Substitute,
}

impl NoiseOp {
    fn tag(self) -> &'static str {
        match self {
            NoiseOp::Shuffle => "shuffle",
            NoiseOp::Remove => "remove",
            NoiseOp::Add => "add",
            NoiseOp::Substitute => "substitute",
        }
    }
}

pub const DEFAULT_NOISE_ORDER: [NoiseOp; 4] = [
    NoiseOp::Shuffle,
    NoiseOp::Remove,
    NoiseOp::Add,
    NoiseOp::Substitute,
];

/// Counters for degenerate situations that are tolerated rather than fatal.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorruptionWarnings {
    /// Add/substitute wanted words but the batch pool was empty.
    pub empty_pool: u64,
    /// Documents whose corrupted text came out empty and were skipped.
    pub skipped_empty: u64,
}

/// Shuffles the words of each sentence independently; sentence order is
/// preserved. Draws from `rng` sentence by sentence.
pub fn shuffle_sentences(sentences: &mut [Vec<String>], rng: &mut impl Rng) {
    for tokens in sentences.iter_mut() {
        tokens.shuffle(rng);
    }
}

/// Removes `round(m · r)` words at distinct positions, where `r` is drawn
/// from the profile's removal distribution and clamped to `[0, 1]`.
/// Survivors keep their relative order.
pub fn remove_words(tokens: &mut Vec<String>, profile: &NoiseProfile, rng: &mut impl Rng) {
    let m = tokens.len();
    if m == 0 {
        return;
    }
    let rate = sample_removal_rate(profile, rng);
    let k = (m as f64 * rate).round() as usize;
    if k == 0 {
        return;
    }
    let mut doomed = vec![false; m];
    for idx in rand::seq::index::sample(rng, m, k.min(m)) {
        doomed[idx] = true;
    }
    let mut position = 0;
    tokens.retain(|_| {
        let keep = !doomed[position];
        position += 1;
        keep
    });
}

fn sample_removal_rate(profile: &NoiseProfile, rng: &mut impl Rng) -> f64 {
    let rate = Normal::new(profile.remove_mean, profile.remove_std)
        .map(|normal| normal.sample(rng))
        .unwrap_or(profile.remove_mean);
    rate.clamp(0.0, 1.0)
}

/// Inserts `round(m · c)` pool words at independently chosen positions, with
/// `c` uniform in the profile's add range and `m` the pre-insertion length.
/// The inserted words are sampled from the pool without replacement; a pool
/// smaller than the budget caps it, and an empty pool only counts a warning.
pub fn add_words(
    tokens: &mut Vec<String>,
    pool: &[&str],
    profile: &NoiseProfile,
    rng: &mut impl Rng,
    warnings: &mut CorruptionWarnings,
) {
    let m = tokens.len();
    if m == 0 {
        return;
    }
    let c = sample_uniform_rate(profile.add_min, profile.add_max, rng);
    let k = (m as f64 * c).round() as usize;
    if k == 0 {
        return;
    }
    if pool.is_empty() {
        warnings.empty_pool += 1;
        return;
    }
    let k = k.min(pool.len());
    for pick in rand::seq::index::sample(rng, pool.len(), k) {
        let position = rng.gen_range(0..=tokens.len());
        tokens.insert(position, pool[pick].to_string());
    }
}

/// Replaces `round(m · c)` words at distinct positions with pool words drawn
/// without replacement, with `c` uniform in the profile's substitute range.
/// Length is preserved; pool exhaustion shrinks the budget, an empty pool
/// only counts a warning.
pub fn substitute_words(
    tokens: &mut [String],
    pool: &[&str],
    profile: &NoiseProfile,
    rng: &mut impl Rng,
    warnings: &mut CorruptionWarnings,
) {
    let m = tokens.len();
    if m == 0 {
        return;
    }
    let c = sample_uniform_rate(profile.sub_min, profile.sub_max, rng);
    let k = (m as f64 * c).round() as usize;
    if k == 0 {
        return;
    }
    if pool.is_empty() {
        warnings.empty_pool += 1;
        return;
    }
    let k = k.min(m).min(pool.len());
    let positions = rand::seq::index::sample(rng, m, k);
    let words = rand::seq::index::sample(rng, pool.len(), k);
    for (position, pick) in positions.into_iter().zip(words) {
        tokens[position] = pool[pick].to_string();
    }
}

fn sample_uniform_rate(min: f64, max: f64, rng: &mut impl Rng) -> f64 {
    if max > min {
        Uniform::new_inclusive(min, max).sample(rng)
    } else {
        min
    }
}

/// The word pool of one batch: every token surface, deduplicated, tagged with
/// enough provenance to exclude words unique to the receiving document.
pub struct BatchPool {
    words: Vec<String>,
    first_doc: Vec<usize>,
    in_multiple_docs: Vec<bool>,
}

impl BatchPool {
    pub fn build(batch: &DocumentBatch) -> Self {
        let mut words: Vec<String> = Vec::new();
        let mut first_doc: Vec<usize> = Vec::new();
        let mut in_multiple_docs: Vec<bool> = Vec::new();
        let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
        for (di, doc) in batch.documents.iter().enumerate() {
            for token in doc.tokens() {
                match index.get(token.surface.as_str()) {
                    Some(&wi) => {
                        if first_doc[wi] != di {
                            in_multiple_docs[wi] = true;
                        }
                    }
                    None => {
                        index.insert(token.surface.clone(), words.len());
                        words.push(token.surface.clone());
                        first_doc.push(di);
                        in_multiple_docs.push(false);
                    }
                }
            }
        }
        BatchPool {
            words,
            first_doc,
            in_multiple_docs,
        }
    }

    /// Pool for the document at `doc_index`: every batch word except those
    /// appearing only in that document.
    pub fn for_document(&self, doc_index: usize) -> Vec<&str> {
        self.words
            .iter()
            .enumerate()
            .filter(|&(wi, _)| self.in_multiple_docs[wi] || self.first_doc[wi] != doc_index)
            .map(|(_, w)| w.as_str())
            .collect()
    }
}

/// Corrupts one document sentence by sentence, returning the surviving token
/// lists. Operations run in the given order with an independent RNG stream
/// per (sentence, operation), so documents can be corrupted in any order or
/// in parallel without changing output.
pub fn corrupt_document(
    doc: &Document,
    pool: &[&str],
    profile: &NoiseProfile,
    order: &[NoiseOp],
    seeds: &SeedContext,
    warnings: &mut CorruptionWarnings,
) -> Vec<Vec<String>> {
    let mut sentences: Vec<Vec<String>> = doc
        .sentences
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.surface.clone()).collect())
        .collect();
    for (si, tokens) in sentences.iter_mut().enumerate() {
        for op in order {
            let mut rng = seeds.sentence_rng(&doc.id, si, op.tag());
            match op {
                NoiseOp::Shuffle => tokens.shuffle(&mut rng),
                NoiseOp::Remove => remove_words(tokens, profile, &mut rng),
                NoiseOp::Add => add_words(tokens, pool, profile, &mut rng, warnings),
                NoiseOp::Substitute => substitute_words(tokens, pool, profile, &mut rng, warnings),
            }
        }
    }
    sentences
}

/// Denoiser pairs for one batch: input is the corrupted token stream, output
/// the original document text. Documents whose corruption comes out empty
/// are skipped and counted.
pub fn corrupt_batch(
    batch: &DocumentBatch,
    profile: &NoiseProfile,
    seeds: &SeedContext,
) -> Result<BatchCorruption, NoiserError> {
    corrupt_batch_ordered(batch, profile, &DEFAULT_NOISE_ORDER, seeds)
}

/// [`corrupt_batch`] with an explicit operation order.
pub fn corrupt_batch_ordered(
    batch: &DocumentBatch,
    profile: &NoiseProfile,
    order: &[NoiseOp],
    seeds: &SeedContext,
) -> Result<BatchCorruption, NoiserError> {
    profile.validate()?;
    for doc in &batch.documents {
        if doc.lang != profile.lang {
            return Err(NoiserError::LanguageMismatch {
                doc_id: doc.id.clone(),
                doc_lang: doc.lang,
                profile_lang: profile.lang,
            });
        }
    }
    let pool = BatchPool::build(batch);
    let mut warnings = CorruptionWarnings::default();
    let mut pairs = Vec::with_capacity(batch.len());
    for (di, doc) in batch.documents.iter().enumerate() {
        let doc_pool = pool.for_document(di);
        let sentences = corrupt_document(doc, &doc_pool, profile, order, seeds, &mut warnings);
        let input = join_sentences(&sentences);
        if input.is_empty() {
            warnings.skipped_empty += 1;
            log::warn!("{}: corruption removed every token, skipping pair", doc.id);
            continue;
        }
        pairs.push(ParallelPair {
            doc_id: doc.id.clone(),
            src_lang: doc.lang,
            tgt_lang: doc.lang,
            input,
            output: doc.text.clone(),
            objective: Objective::Denoise,
        });
    }
    Ok(BatchCorruption { pairs, warnings })
}

pub struct BatchCorruption {
    pub pairs: Vec<ParallelPair>,
    pub warnings: CorruptionWarnings,
}

fn join_sentences(sentences: &[Vec<String>]) -> String {
    let mut out = String::new();
    for token in sentences.iter().flatten() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Removal-rate statistics measured by translating documents into `tgt`
/// under the fixed [`CALIBRATION_SEED`]. Serializes with the target language
/// under the `lang` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    #[serde(rename = "lang")]
    pub tgt: LanguageId,
    pub mean: f64,
    pub std: f64,
    pub documents_seen: u64,
    pub tokens_seen: u64,
}

/// Measures the missing-word rate distribution for translation into `tgt`
/// across every document not already in `tgt`. The reported std is the
/// population standard deviation. At least one eligible document is required.
pub fn calibrate<'a>(
    batches: impl IntoIterator<Item = &'a DocumentBatch>,
    tgt: LanguageId,
    lexicons: &LexiconSet,
    ner: &dyn NerProvider,
    transliterator: &dyn TransliterationProvider,
) -> Result<CalibrationReport, NoiserError> {
    let seeds = SeedContext::new(CALIBRATION_SEED);
    let mut rates = Vec::new();
    let mut tokens_seen = 0u64;
    for batch in batches {
        for doc in &batch.documents {
            if doc.lang == tgt {
                continue;
            }
            let result = wbw::translate_document(doc, tgt, lexicons, ner, transliterator, &seeds)?;
            rates.push(result.missing_rate);
            tokens_seen += doc.token_count() as u64;
        }
    }
    if rates.is_empty() {
        return Err(NoiserError::NoDocuments { tgt });
    }
    let (mean, std) = population_stats(&rates);
    Ok(CalibrationReport {
        tgt,
        mean,
        std,
        documents_seen: rates.len() as u64,
        tokens_seen,
    })
}

/// Population mean and standard deviation (.len() as the divisor).
pub fn population_stats(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, variance.sqrt())
}
