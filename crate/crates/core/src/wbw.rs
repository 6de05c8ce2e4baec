//! Word-by-word translation.
//!
//! Each token is resolved independently through a fixed decision cascade;
//! tokens that survive are joined into the pseudo-translation, and the share
//! of dictionary misses is reported as the document's missing-word rate.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::annotate::{self, split_compound, NerProvider, TransliterationProvider};
use crate::corpus::{Document, LanguageId, Token, TokenKind};
use crate::lexicon::{LexiconError, LexiconSet};
use crate::seeding::SeedContext;

#[derive(Debug, Error)]
pub enum WbwError {
    #[error("document {doc_id} is already in {lang}; refusing identity translation")]
    SameLanguage { doc_id: String, lang: LanguageId },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

/// How one token was rendered in the target language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenResult {
    /// Dictionary hit; carries the chosen candidate.
    Translated(String),
    /// Copied verbatim (punctuation and numbers).
    Copied,
    /// Named entity rendered by the transliterator.
    Transliterated(String),
    /// No candidates anywhere; the token is omitted from the output.
    Dropped,
}

/// A [`TokenResult`] tied back to its position in the source document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenOutcome {
    pub sentence_index: usize,
    pub token_index: usize,
    pub result: TokenResult,
}

/// A translated document: the output text, the per-token provenance, and the
/// missing-word rate over dictionary-eligible tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct WbwResult {
    pub text: String,
    pub outcomes: Vec<TokenOutcome>,
    pub missing_rate: f64,
}

/// Resolves a single token:
///
/// 1. punctuation and numbers are copied verbatim;
/// 2. a non-empty candidate list (direct, then pivot) yields a uniformly
///    chosen translation;
/// 3. named-entity tokens are transliterated;
/// 4. compounds translate component-by-component, rejoined with their
///    original separators, provided every component resolves;
/// 5. anything left is dropped.
///
/// There is no error path: a missing lexicon route just means empty candidate
/// lists, and `Dropped` is the total fallback. Callers that need routing
/// errors validate up front, as [`translate_document`] does.
pub fn translate_token(
    token: &Token,
    src: LanguageId,
    tgt: LanguageId,
    lexicons: &LexiconSet,
    is_named_entity: bool,
    transliterator: &dyn TransliterationProvider,
    rng: &mut impl Rng,
) -> TokenResult {
    if matches!(token.kind, TokenKind::Punctuation | TokenKind::Number) {
        return TokenResult::Copied;
    }
    if let Some(choice) = choose_candidate(lexicons, src, tgt, &token.surface, rng) {
        return TokenResult::Translated(choice);
    }
    if is_named_entity {
        return TokenResult::Transliterated(transliterator.transliterate(&token.surface, src, tgt));
    }
    if token.kind == TokenKind::Compound {
        if let Some(translated) = translate_compound(&token.surface, src, tgt, lexicons, rng) {
            return TokenResult::Translated(translated);
        }
    }
    TokenResult::Dropped
}

fn choose_candidate(
    lexicons: &LexiconSet,
    src: LanguageId,
    tgt: LanguageId,
    word: &str,
    rng: &mut impl Rng,
) -> Option<String> {
    let candidates = lexicons.candidates(src, tgt, word).ok()?;
    candidates.choose(rng).cloned()
}

/// Translates every component of a compound, keeping the original separators:
/// `high-end` becomes `haut-gamme` only if both `high` and `end` resolve.
fn translate_compound(
    surface: &str,
    src: LanguageId,
    tgt: LanguageId,
    lexicons: &LexiconSet,
    rng: &mut impl Rng,
) -> Option<String> {
    let (segments, separators) = split_compound(surface)?;
    let mut out = String::new();
    for (i, segment) in segments.iter().enumerate() {
        let choice = choose_candidate(lexicons, src, tgt, segment, rng)?;
        if i > 0 {
            out.push(separators[i - 1]);
        }
        out.push_str(&choice);
    }
    Some(out)
}

/// Translates a whole document into `tgt`. Fails up front when the document
/// is already in `tgt` or no lexicon route exists; after that every token has
/// a total outcome. The output text is the surviving token renderings joined
/// by single spaces.
pub fn translate_document(
    doc: &Document,
    tgt: LanguageId,
    lexicons: &LexiconSet,
    ner: &dyn NerProvider,
    transliterator: &dyn TransliterationProvider,
    seeds: &SeedContext,
) -> Result<WbwResult, WbwError> {
    if doc.lang == tgt {
        return Err(WbwError::SameLanguage {
            doc_id: doc.id.clone(),
            lang: doc.lang,
        });
    }
    if !lexicons.has_route(doc.lang, tgt) {
        return Err(LexiconError::MissingRoute {
            src: doc.lang,
            tgt,
            pivot: lexicons.pivot(),
        }
        .into());
    }

    let entity_flags = entity_flags(doc, ner);
    let mut outcomes = Vec::with_capacity(doc.token_count());
    for (si, sentence) in doc.sentences.iter().enumerate() {
        for (ti, token) in sentence.tokens.iter().enumerate() {
            let mut rng = seeds.token_rng(&doc.id, si, ti);
            let result = translate_token(
                token,
                doc.lang,
                tgt,
                lexicons,
                entity_flags[si][ti],
                transliterator,
                &mut rng,
            );
            outcomes.push(TokenOutcome {
                sentence_index: si,
                token_index: ti,
                result,
            });
        }
    }

    let mut text = String::with_capacity(doc.text.len());
    for (token, outcome) in doc.tokens().zip(&outcomes) {
        let piece = match &outcome.result {
            TokenResult::Translated(t) | TokenResult::Transliterated(t) => t.as_str(),
            TokenResult::Copied => token.surface.as_str(),
            TokenResult::Dropped => continue,
        };
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(piece);
    }

    let missing_rate = missing_rate(doc, &outcomes);
    log::debug!(
        "{} -> {tgt}: missing rate {missing_rate:.4} (all-token variant {:.4})",
        doc.id,
        missing_rate_all_tokens(&outcomes),
    );

    Ok(WbwResult {
        text,
        outcomes,
        missing_rate,
    })
}

fn entity_flags(doc: &Document, ner: &dyn NerProvider) -> Vec<Vec<bool>> {
    let mut flags: Vec<Vec<bool>> = doc
        .sentences
        .iter()
        .map(|s| vec![false; s.tokens.len()])
        .collect();
    for span in annotate::detect_named_entities(doc, ner) {
        let sentence = &mut flags[span.sentence_index];
        for ti in span.token_range {
            if ti < sentence.len() {
                sentence[ti] = true;
            }
        }
    }
    flags
}

/// Dropped share of the dictionary-eligible tokens: only `Word` and
/// `Compound` tokens count, and transliterated ones are excluded from the
/// denominator. No eligible tokens means a rate of zero.
pub fn missing_rate(doc: &Document, outcomes: &[TokenOutcome]) -> f64 {
    let mut dropped = 0usize;
    let mut eligible = 0usize;
    for (token, outcome) in doc.tokens().zip(outcomes) {
        if !matches!(token.kind, TokenKind::Word | TokenKind::Compound) {
            continue;
        }
        match outcome.result {
            TokenResult::Copied | TokenResult::Transliterated(_) => {}
            TokenResult::Translated(_) => eligible += 1,
            TokenResult::Dropped => {
                eligible += 1;
                dropped += 1;
            }
        }
    }
    if eligible == 0 {
        0.0
    } else {
        dropped as f64 / eligible as f64
    }
}

/// Diagnostic variant counting every token in the denominator; logged next to
/// the primary rate but never used for calibration.
pub fn missing_rate_all_tokens(outcomes: &[TokenOutcome]) -> f64 {
    let total = outcomes.len();
    if total == 0 {
        return 0.0;
    }
    let dropped = outcomes
        .iter()
        .filter(|o| o.result == TokenResult::Dropped)
        .count();
    dropped as f64 / total as f64
}
