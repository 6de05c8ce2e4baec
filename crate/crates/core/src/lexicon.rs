//! Bilingual dictionaries and candidate lookup with pivoting.
//!
//! Lexicon files use the two-column format common to published bilingual
//! dictionary releases: one `source target` pair per line, whitespace
//! separated. A word may appear on many lines; its candidates keep file
//! order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::corpus::LanguageId;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("lexicon {path} has no valid entries")]
    Empty { path: PathBuf },
    #[error("no lexicon loaded for {src}-{tgt} and no pivot route through {pivot}")]
    MissingRoute {
        src: LanguageId,
        tgt: LanguageId,
        pivot: LanguageId,
    },
    #[error("no lexicon loaded for {src}-{tgt}")]
    MissingLexicon { src: LanguageId, tgt: LanguageId },
    #[error("a lexicon for {src}-{tgt} is already loaded")]
    DuplicatePair { src: LanguageId, tgt: LanguageId },
}

/// One directed dictionary. Source words are lowercased at load; targets are
/// kept verbatim. Candidate lists preserve first-occurrence file order with
/// exact duplicates dropped.
pub struct Lexicon {
    src: LanguageId,
    tgt: LanguageId,
    entries: HashMap<String, Vec<String>>,
    skipped_lines: u64,
    lookups: AtomicU64,
}

impl Lexicon {
    /// Loads a two-column lexicon file. Lines without exactly two
    /// whitespace-separated fields are skipped and counted; a file with zero
    /// valid lines is an error, as is an unreadable file.
    pub fn load(
        path: impl AsRef<Path>,
        src: LanguageId,
        tgt: LanguageId,
    ) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let map_io = |source| LexiconError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::open(path).map_err(map_io)?;
        let mut entries: HashMap<String, Vec<String>> = HashMap::new();
        let mut skipped_lines = 0u64;
        let mut valid_lines = 0u64;
        for (index, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(map_io)?;
            let mut fields = line.split_whitespace();
            match (fields.next(), fields.next(), fields.next()) {
                (Some(source), Some(target), None) => {
                    valid_lines += 1;
                    let candidates = entries.entry(source.to_lowercase()).or_default();
                    if !candidates.iter().any(|c| c == target) {
                        candidates.push(target.to_string());
                    }
                }
                (None, ..) => continue, // blank line, not malformed
                _ => {
                    skipped_lines += 1;
                    log::debug!(
                        "{}:{}: expected two fields, skipping",
                        path.display(),
                        index + 1
                    );
                }
            }
        }
        if skipped_lines > 0 {
            log::warn!(
                "{}: skipped {skipped_lines} malformed line(s)",
                path.display()
            );
        }
        if valid_lines == 0 {
            return Err(LexiconError::Empty {
                path: path.to_path_buf(),
            });
        }
        Ok(Lexicon {
            src,
            tgt,
            entries,
            skipped_lines,
            lookups: AtomicU64::new(0),
        })
    }

    /// Builds a lexicon from in-memory pairs, applying the same lowercasing
    /// and deduplication as [`Lexicon::load`].
    pub fn from_pairs<I, S, T>(src: LanguageId, tgt: LanguageId, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: Into<String>,
    {
        let mut entries: HashMap<String, Vec<String>> = HashMap::new();
        for (source, target) in pairs {
            let target = target.into();
            let candidates = entries.entry(source.as_ref().to_lowercase()).or_default();
            if !candidates.iter().any(|c| c == &target) {
                candidates.push(target);
            }
        }
        Lexicon {
            src,
            tgt,
            entries,
            skipped_lines: 0,
            lookups: AtomicU64::new(0),
        }
    }

    pub fn src(&self) -> LanguageId {
        self.src
    }

    pub fn tgt(&self) -> LanguageId {
        self.tgt
    }

    /// Candidates for a word, lowercasing the query to match load-time
    /// normalization. Unknown words get an empty slice. Thread-safe lookup
    /// counting feeds the run statistics.
    pub fn lookup(&self, word: &str) -> &[String] {
        self.lookups.fetch_add(1, Ordering::Relaxed);
        let hit = if word.chars().any(char::is_uppercase) {
            self.entries.get(&word.to_lowercase())
        } else {
            self.entries.get(word)
        };
        hit.map(Vec::as_slice).unwrap_or(&[])
    }

    /// Distinct source words.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skipped_lines(&self) -> u64 {
        self.skipped_lines
    }

    pub fn lookup_count(&self) -> u64 {
        self.lookups.load(Ordering::Relaxed)
    }
}

/// Candidate list from a lookup: either borrowed straight from a lexicon or
/// assembled by pivoting. Derefs to an ordered `[String]` slice.
#[derive(Debug)]
pub enum Candidates<'a> {
    Direct(&'a [String]),
    Pivoted(Vec<String>),
}

impl Deref for Candidates<'_> {
    type Target = [String];

    fn deref(&self) -> &[String] {
        match self {
            Candidates::Direct(slice) => slice,
            Candidates::Pivoted(vec) => vec,
        }
    }
}

/// All lexicons of a run, keyed by ordered language pair, plus the pivot
/// language used to bridge pairs a dictionary misses.
pub struct LexiconSet {
    lexicons: HashMap<(LanguageId, LanguageId), Lexicon>,
    pivot: LanguageId,
}

impl LexiconSet {
    pub fn new(pivot: LanguageId) -> Self {
        LexiconSet {
            lexicons: HashMap::new(),
            pivot,
        }
    }

    pub fn pivot(&self) -> LanguageId {
        self.pivot
    }

    /// Registers a lexicon; each ordered pair may be loaded once.
    pub fn insert(&mut self, lexicon: Lexicon) -> Result<(), LexiconError> {
        let key = (lexicon.src, lexicon.tgt);
        if self.lexicons.contains_key(&key) {
            return Err(LexiconError::DuplicatePair {
                src: key.0,
                tgt: key.1,
            });
        }
        self.lexicons.insert(key, lexicon);
        Ok(())
    }

    pub fn get(&self, src: LanguageId, tgt: LanguageId) -> Option<&Lexicon> {
        self.lexicons.get(&(src, tgt))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Lexicon> {
        self.lexicons.values()
    }

    fn pivot_route(&self, src: LanguageId, tgt: LanguageId) -> Option<(&Lexicon, &Lexicon)> {
        if src == self.pivot || tgt == self.pivot {
            return None;
        }
        Some((self.get(src, self.pivot)?, self.get(self.pivot, tgt)?))
    }

    /// Whether `src -> tgt` can be answered at all, directly or by pivoting.
    pub fn has_route(&self, src: LanguageId, tgt: LanguageId) -> bool {
        self.get(src, tgt).is_some() || self.pivot_route(src, tgt).is_some()
    }

    /// Candidates for a word with pivot fallback: a non-empty direct hit wins
    /// and never consults the pivot; otherwise candidates are chained through
    /// the pivot (`src -> pivot -> tgt`), deduplicated, in hop order. Errors
    /// when the direct lexicon is missing — use [`LexiconSet::candidates`]
    /// when a pivot-only route should be acceptable.
    pub fn lookup_with_pivot(
        &self,
        src: LanguageId,
        tgt: LanguageId,
        word: &str,
    ) -> Result<Candidates<'_>, LexiconError> {
        if self.get(src, tgt).is_none() {
            return Err(LexiconError::MissingLexicon { src, tgt });
        }
        Ok(self.resolve(src, tgt, word))
    }

    /// Candidates for a word over any available route. Errors only when
    /// neither a direct lexicon nor a complete pivot chain is loaded.
    pub fn candidates(
        &self,
        src: LanguageId,
        tgt: LanguageId,
        word: &str,
    ) -> Result<Candidates<'_>, LexiconError> {
        if !self.has_route(src, tgt) {
            return Err(LexiconError::MissingRoute {
                src,
                tgt,
                pivot: self.pivot,
            });
        }
        Ok(self.resolve(src, tgt, word))
    }

    fn resolve(&self, src: LanguageId, tgt: LanguageId, word: &str) -> Candidates<'_> {
        if let Some(direct) = self.get(src, tgt) {
            let hits = direct.lookup(word);
            if !hits.is_empty() {
                return Candidates::Direct(hits);
            }
        }
        let Some((src_pivot, pivot_tgt)) = self.pivot_route(src, tgt) else {
            return Candidates::Direct(&[]);
        };
        let mut merged: Vec<String> = Vec::new();
        for bridge in src_pivot.lookup(word) {
            for candidate in pivot_tgt.lookup(bridge) {
                if !merged.iter().any(|c| c == candidate) {
                    merged.push(candidate.clone());
                }
            }
        }
        Candidates::Pivoted(merged)
    }
}
