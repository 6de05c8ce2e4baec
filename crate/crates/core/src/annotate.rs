//! Sentence splitting, tokenization, token classification, named-entity
//! detection and transliteration.
//!
//! The annotators are deliberately rule-based and language-agnostic: corpora
//! are lowercased before they get here, so everything downstream matches on
//! lowercase surfaces.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use crate::corpus::{Document, LanguageId, Sentence, Span, Token, TokenKind};
use crate::pipeline::run_line_protocol;

/// Definite articles stripped from the edges of detected entity spans, so
/// that "the riviera" transliterates as "riviera" while "the" still goes
/// through the dictionary.
pub const DEFINITE_ARTICLES: [&str; 7] = ["the", "le", "la", "les", "der", "die", "das"];

/// Separators that may join the alphabetic components of a compound word.
pub const COMPOUND_SEPARATORS: [char; 2] = ['-', '\''];

fn is_punct_char(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits text into trimmed sentences. A boundary is any run of `.`, `!`, `?`
/// followed by whitespace; the terminator stays with its sentence. Text
/// without a terminator is a single sentence. Whitespace-only fragments are
/// dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let is_terminator = matches!(chars[i], '.' | '!' | '?');
        let next_is_space = chars.get(i + 1).is_some_and(|c| c.is_whitespace());
        if is_terminator && next_is_space {
            push_trimmed(&chars[start..=i], &mut sentences);
            i += 1;
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            start = i;
        } else {
            i += 1;
        }
    }
    if start < chars.len() {
        push_trimmed(&chars[start..], &mut sentences);
    }
    sentences
}

fn push_trimmed(chars: &[char], out: &mut Vec<String>) {
    let text: String = chars.iter().collect();
    let trimmed = text.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
}

/// Tokenizes one sentence. Tokens are whitespace-delimited chunks with
/// leading and trailing punctuation runs detached as their own tokens, so
/// `"high-end," ` yields a `Compound` and a `Punctuation` token. Spans are
/// character offsets into the sentence; surfaces are never empty.
pub fn tokenize(sentence: &str) -> Vec<Token> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        push_chunk(&chars, start, i, &mut tokens);
    }
    tokens
}

fn push_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut core_start = start;
    while core_start < end && is_punct_char(chars[core_start]) {
        core_start += 1;
    }
    if core_start == end {
        // The whole chunk is punctuation: one token, not one per character.
        out.push(make_token(chars, start, end, TokenKind::Punctuation));
        return;
    }
    let mut core_end = end;
    while core_end > core_start && is_punct_char(chars[core_end - 1]) {
        core_end -= 1;
    }
    if core_start > start {
        out.push(make_token(chars, start, core_start, TokenKind::Punctuation));
    }
    let core: String = chars[core_start..core_end].iter().collect();
    let kind = classify_core(&core);
    out.push(Token {
        surface: core,
        kind,
        span: Span {
            start: core_start,
            end: core_end,
        },
    });
    if core_end < end {
        out.push(make_token(chars, core_end, end, TokenKind::Punctuation));
    }
}

fn make_token(chars: &[char], start: usize, end: usize, kind: TokenKind) -> Token {
    Token {
        surface: chars[start..end].iter().collect(),
        kind,
        span: Span { start, end },
    }
}

/// Kind of a chunk core: `Number` if it contains a digit and no letter,
/// `Compound` if it is letter segments joined by `-` or `'`, `Word` otherwise.
/// Interior punctuation (as in `"high-end"` or `"3:30"`) stays attached.
fn classify_core(core: &str) -> TokenKind {
    let has_digit = core.chars().any(|c| c.is_numeric());
    let has_alpha = core.chars().any(|c| c.is_alphabetic());
    if has_digit && !has_alpha {
        TokenKind::Number
    } else if split_compound(core).is_some() {
        TokenKind::Compound
    } else {
        TokenKind::Word
    }
}

/// Splits a compound surface into its alphabetic components and the
/// separators between them. Returns `None` unless the surface is at least two
/// non-empty all-alphabetic segments joined by single separators, which is
/// exactly the condition for `TokenKind::Compound`.
pub fn split_compound(surface: &str) -> Option<(Vec<&str>, Vec<char>)> {
    let mut segments = Vec::new();
    let mut separators = Vec::new();
    let mut seg_start = 0;
    for (idx, c) in surface.char_indices() {
        if COMPOUND_SEPARATORS.contains(&c) {
            segments.push(&surface[seg_start..idx]);
            separators.push(c);
            seg_start = idx + c.len_utf8();
        }
    }
    segments.push(&surface[seg_start..]);
    if segments.len() < 2 {
        return None;
    }
    let alphabetic = |s: &&str| !s.is_empty() && s.chars().all(|c| c.is_alphabetic());
    segments
        .iter()
        .all(alphabetic)
        .then_some((segments, separators))
}

/// Lowercases a raw corpus line and annotates it. Returns `None` when the
/// line tokenizes to zero tokens.
pub fn annotate_document(id: impl Into<String>, lang: LanguageId, line: &str) -> Option<Document> {
    let text = line.to_lowercase();
    let sentences: Vec<Sentence> = split_sentences(&text)
        .into_iter()
        .map(|s| {
            let tokens = tokenize(&s);
            Sentence { text: s, tokens }
        })
        .collect();
    if sentences.iter().all(|s| s.tokens.is_empty()) {
        return None;
    }
    Some(Document {
        id: id.into(),
        lang,
        text,
        sentences,
    })
}

/// A contiguous run of tokens within one sentence that names an entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeSpan {
    pub sentence_index: usize,
    pub token_range: Range<usize>,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider failed: {0}")]
    Failed(String),
}

/// Some providers wrap a resource that cannot serve concurrent requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderConcurrency {
    Concurrent,
    SingleUse,
}

/// Named-entity detection over an annotated document.
pub trait NerProvider: Send + Sync {
    fn detect(&self, doc: &Document) -> Result<Vec<NeSpan>, ProviderError>;

    fn concurrency(&self) -> ProviderConcurrency {
        ProviderConcurrency::Concurrent
    }
}

/// Word transliteration into the target script. Must return a non-empty
/// string for non-empty input; falls back to the input itself at worst.
pub trait TransliterationProvider: Send + Sync {
    fn transliterate(&self, word: &str, src: LanguageId, tgt: LanguageId) -> String;

    fn concurrency(&self) -> ProviderConcurrency {
        ProviderConcurrency::Concurrent
    }
}

/// Runs detection and strips definite articles from span edges. A provider
/// failure degrades to "no entities" with a logged warning rather than
/// aborting the document.
pub fn detect_named_entities(doc: &Document, provider: &dyn NerProvider) -> Vec<NeSpan> {
    let spans = match provider.detect(doc) {
        Ok(spans) => spans,
        Err(err) => {
            log::warn!(
                "{}: NER provider failed ({err}), treating as no entities",
                doc.id
            );
            return Vec::new();
        }
    };
    filter_definite_articles(doc, spans)
}

/// Trims [`DEFINITE_ARTICLES`] off both edges of each span and drops spans
/// that become empty. Interior articles are kept, and the operation is
/// idempotent. Spans that fall outside the document are discarded.
pub fn filter_definite_articles(doc: &Document, spans: Vec<NeSpan>) -> Vec<NeSpan> {
    spans
        .into_iter()
        .filter_map(|span| {
            let sentence = doc.sentences.get(span.sentence_index)?;
            let mut start = span.token_range.start;
            let mut end = span.token_range.end.min(sentence.tokens.len());
            let is_article =
                |i: usize| DEFINITE_ARTICLES.contains(&sentence.tokens[i].surface.as_str());
            while start < end && is_article(start) {
                start += 1;
            }
            while end > start && is_article(end - 1) {
                end -= 1;
            }
            (start < end).then_some(NeSpan {
                sentence_index: span.sentence_index,
                token_range: start..end,
            })
        })
        .collect()
}

/// Entity detection by lexicon membership: every token whose surface appears
/// in the gazetteer becomes a single-token entity span.
pub struct GazetteerNer {
    words: HashSet<String>,
}

impl GazetteerNer {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        GazetteerNer {
            words: words.into_iter().map(|w| w.into().to_lowercase()).collect(),
        }
    }

    /// Loads one entity word per line; blank lines are ignored.
    pub fn from_path(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = File::open(path)?;
        let mut words = HashSet::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            let word = line.trim();
            if !word.is_empty() {
                words.insert(word.to_lowercase());
            }
        }
        Ok(GazetteerNer { words })
    }
}

impl NerProvider for GazetteerNer {
    fn detect(&self, doc: &Document) -> Result<Vec<NeSpan>, ProviderError> {
        let mut spans = Vec::new();
        for (si, sentence) in doc.sentences.iter().enumerate() {
            for (ti, token) in sentence.tokens.iter().enumerate() {
                if self.words.contains(&token.surface) {
                    spans.push(NeSpan {
                        sentence_index: si,
                        token_range: ti..ti + 1,
                    });
                }
            }
        }
        Ok(spans)
    }
}

/// Built-in transliterator: folds diacritics to ASCII-ish base letters. For a
/// German source, umlauts expand to digraphs (ä→ae) instead of folding, and ß
/// becomes ss regardless of source language. Unknown characters pass through,
/// so the result is never empty for non-empty input.
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultTransliterator;

impl TransliterationProvider for DefaultTransliterator {
    fn transliterate(&self, word: &str, src: LanguageId, _tgt: LanguageId) -> String {
        transliterate_default(word, src)
    }
}

pub fn transliterate_default(word: &str, src: LanguageId) -> String {
    let german = src.as_str() == "de";
    let mut out = String::with_capacity(word.len());
    for c in word.chars() {
        match c {
            'ä' if german => out.push_str("ae"),
            'ö' if german => out.push_str("oe"),
            'ü' if german => out.push_str("ue"),
            'ß' => out.push_str("ss"),
            'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' => out.push('a'),
            'è' | 'é' | 'ê' | 'ë' => out.push('e'),
            'ì' | 'í' | 'î' | 'ï' => out.push('i'),
            'ò' | 'ó' | 'ô' | 'õ' | 'ö' => out.push('o'),
            'ù' | 'ú' | 'û' | 'ü' => out.push('u'),
            'ç' => out.push('c'),
            'ñ' => out.push('n'),
            'ý' | 'ÿ' => out.push('y'),
            'œ' => out.push_str("oe"),
            'æ' => out.push_str("ae"),
            _ => out.push(c),
        }
    }
    out
}

/// Entity detection through an external command speaking the line protocol:
/// it receives `{"id", "text"}` with the document text and answers with the
/// same id and a whitespace-separated list of entity surfaces. Every document
/// token matching one of the returned surfaces becomes a single-token span.
pub struct ExternalNer {
    pub command: String,
    pub timeout: Duration,
}

impl NerProvider for ExternalNer {
    fn detect(&self, doc: &Document) -> Result<Vec<NeSpan>, ProviderError> {
        let records = [(0u64, doc.text.clone())];
        let response = run_line_protocol(&self.command, self.timeout, &records)
            .map_err(|e| ProviderError::Failed(e.to_string()))?;
        let surfaces: HashSet<String> = response
            .into_iter()
            .flat_map(|(_, text)| {
                text.split_whitespace()
                    .map(|w| w.to_lowercase())
                    .collect::<Vec<_>>()
            })
            .collect();
        let gazetteer = GazetteerNer { words: surfaces };
        gazetteer.detect(doc)
    }

    fn concurrency(&self) -> ProviderConcurrency {
        ProviderConcurrency::SingleUse
    }
}

/// Transliteration through an external command speaking the line protocol,
/// one record per word. Any failure falls back to returning the word
/// unchanged, with a logged warning.
pub struct ExternalTransliterator {
    pub command: String,
    pub timeout: Duration,
}

impl TransliterationProvider for ExternalTransliterator {
    fn transliterate(&self, word: &str, _src: LanguageId, _tgt: LanguageId) -> String {
        let records = [(0u64, word.to_string())];
        match run_line_protocol(&self.command, self.timeout, &records) {
            Ok(response) => {
                let text = response
                    .into_iter()
                    .next()
                    .map(|(_, t)| t)
                    .unwrap_or_default();
                if text.is_empty() {
                    log::warn!("external transliterator returned empty text for {word:?}, keeping original");
                    word.to_string()
                } else {
                    text
                }
            }
            Err(err) => {
                log::warn!("external transliterator failed for {word:?} ({err}), keeping original");
                word.to_string()
            }
        }
    }

    fn concurrency(&self) -> ProviderConcurrency {
        ProviderConcurrency::SingleUse
    }
}

/// Serializes access to a provider that cannot handle concurrent callers.
pub struct Serialized<P>(Mutex<P>);

impl<P> Serialized<P> {
    pub fn new(provider: P) -> Self {
        Serialized(Mutex::new(provider))
    }
}

impl<P: NerProvider> NerProvider for Serialized<P> {
    fn detect(&self, doc: &Document) -> Result<Vec<NeSpan>, ProviderError> {
        self.0.lock().expect("provider lock poisoned").detect(doc)
    }
}

impl<P: TransliterationProvider> TransliterationProvider for Serialized<P> {
    fn transliterate(&self, word: &str, src: LanguageId, tgt: LanguageId) -> String {
        self.0
            .lock()
            .expect("provider lock poisoned")
            .transliterate(word, src, tgt)
    }
}

/// A provider that never reports entities; the default when no gazetteer or
/// external detector is configured.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoNer;

impl NerProvider for NoNer {
    fn detect(&self, _doc: &Document) -> Result<Vec<NeSpan>, ProviderError> {
        Ok(Vec::new())
    }
}
