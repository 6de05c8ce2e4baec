//! Core data model: languages, tokens, documents, batches, and the training
//! pairs every generator emits.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::annotate;

/// Default number of documents per batch; word pools for noise operations are
/// drawn from the other documents of the same batch.
pub const DEFAULT_BATCH_CAPACITY: usize = 1000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid language code {0:?}: expected exactly two lowercase ASCII letters")]
    InvalidLanguage(String),
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("batch capacity must be at least 1")]
    ZeroCapacity,
}

/// ISO 639-1 style language code: exactly two lowercase ASCII letters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageId([u8; 2]);

impl LanguageId {
    pub fn new(code: &str) -> Result<Self, CorpusError> {
        let bytes = code.as_bytes();
        if bytes.len() == 2 && bytes.iter().all(|b| b.is_ascii_lowercase()) {
            Ok(LanguageId([bytes[0], bytes[1]]))
        } else {
            Err(CorpusError::InvalidLanguage(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        // Constructed from two ASCII letters, so this is always valid UTF-8.
        std::str::from_utf8(&self.0).expect("language code is ASCII")
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LanguageId({})", self.as_str())
    }
}

impl FromStr for LanguageId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageId::new(s)
    }
}

impl Serialize for LanguageId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LanguageId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = String::deserialize(deserializer)?;
        LanguageId::new(&code).map_err(serde::de::Error::custom)
    }
}

/// What a token is, decided purely from its surface during tokenization.
/// `NamedEntity` is never produced by the tokenizer; entity spans come from a
/// [`annotate::NerProvider`] and are tracked separately from token kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Punctuation,
    Number,
    NamedEntity,
    Compound,
}

/// Half-open character-offset range into the sentence text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// Trimmed sentence text, including its terminator when one was present.
    pub text: String,
    pub tokens: Vec<Token>,
}

/// One corpus line, lowercased, split into sentences and tokenized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// `"<file name>:<line number>"`, 1-based line numbers.
    pub id: String,
    pub lang: LanguageId,
    /// The lowercased source line, otherwise untouched. Training pairs quote
    /// this text verbatim rather than reassembling it from tokens.
    pub text: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    /// All token surfaces joined by single spaces; the canonical form the
    /// MLM-style generators operate on.
    pub fn tokenized_text(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        for token in self.tokens() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&token.surface);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentBatch {
    pub documents: Vec<Document>,
    /// The capacity the batch was collected under; only the final batch of a
    /// corpus may hold fewer documents.
    pub capacity: usize,
}

impl DocumentBatch {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Which generator produced a training pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Spdg,
    Denoise,
    Mlm,
    MlmReorder,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Objective::Spdg => "spdg",
            Objective::Denoise => "denoise",
            Objective::Mlm => "mlm",
            Objective::MlmReorder => "mlm_reorder",
        };
        f.write_str(name)
    }
}

/// One seq2seq training example. Serialized as a single JSON object per line
/// with keys `id`, `src_lang`, `tgt_lang`, `input`, `output`, `objective`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub src_lang: LanguageId,
    pub tgt_lang: LanguageId,
    pub input: String,
    pub output: String,
    pub objective: Objective,
}

/// Streams a line-per-document corpus file into annotated batches.
///
/// Lines are lowercased before annotation; lines that tokenize to zero tokens
/// (empty or punctuation-free whitespace) are skipped with a logged warning.
/// An empty file yields no batches.
pub fn ingest_corpus(
    path: impl AsRef<Path>,
    lang: LanguageId,
    batch_capacity: usize,
) -> Result<DocumentBatches, CorpusError> {
    let path = path.as_ref();
    if batch_capacity == 0 {
        return Err(CorpusError::ZeroCapacity);
    }
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(DocumentBatches {
        lines: BufReader::new(file).lines(),
        path: path.to_path_buf(),
        file_name,
        lang,
        capacity: batch_capacity,
        line_number: 0,
        skipped_lines: 0,
        doc_limit: None,
        docs_yielded: 0,
        done: false,
    })
}

/// Iterator over the batches of one corpus file. Yields `Err` at most once
/// (on an I/O failure mid-file) and then stops.
pub struct DocumentBatches {
    lines: Lines<BufReader<File>>,
    path: PathBuf,
    file_name: String,
    lang: LanguageId,
    capacity: usize,
    line_number: usize,
    skipped_lines: u64,
    doc_limit: Option<usize>,
    docs_yielded: usize,
    done: bool,
}

impl DocumentBatches {
    /// Stop after at most `limit` documents (not lines); used by `--limit`.
    pub fn with_doc_limit(mut self, limit: Option<usize>) -> Self {
        self.doc_limit = limit;
        self
    }

    /// Lines skipped so far because they tokenized to zero tokens.
    pub fn skipped_lines(&self) -> u64 {
        self.skipped_lines
    }
}

impl Iterator for DocumentBatches {
    type Item = Result<DocumentBatch, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut documents = Vec::new();
        while documents.len() < self.capacity {
            if let Some(limit) = self.doc_limit {
                if self.docs_yielded + documents.len() >= limit {
                    self.done = true;
                    break;
                }
            }
            match self.lines.next() {
                Some(Ok(line)) => {
                    self.line_number += 1;
                    let id = format!("{}:{}", self.file_name, self.line_number);
                    match annotate::annotate_document(id, self.lang, &line) {
                        Some(doc) => documents.push(doc),
                        None => {
                            self.skipped_lines += 1;
                            log::warn!(
                                "{}:{}: line has no tokens, skipping",
                                self.file_name,
                                self.line_number
                            );
                        }
                    }
                }
                Some(Err(source)) => {
                    self.done = true;
                    return Some(Err(CorpusError::Io {
                        path: self.path.clone(),
                        source,
                    }));
                }
                None => {
                    self.done = true;
                    break;
                }
            }
        }
        if documents.is_empty() {
            return None;
        }
        self.docs_yielded += documents.len();
        Some(Ok(DocumentBatch {
            documents,
            capacity: self.capacity,
        }))
    }
}
