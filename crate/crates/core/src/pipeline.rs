//! Pair generation: the multilingual word-by-word loop, the external
//! denoiser hook, the MLM baseline generators and the objective mixing
//! schedule.
//!
//! The generation loop follows a fixed iteration order — corpora as given,
//! documents in corpus order, target languages in configured order — and
//! derives all randomness from record coordinates, so its output is a pure
//! function of (inputs, seed).

use std::collections::HashMap;
use std::io;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{NerProvider, TransliterationProvider};
use crate::corpus::{CorpusError, Document, DocumentBatch, LanguageId, Objective, ParallelPair};
use crate::lexicon::{LexiconError, LexiconSet};
use crate::seeding::SeedContext;
use crate::wbw::{self, TokenResult, WbwError, WbwResult};

#[derive(Debug, Error)]
pub enum HookError {
    #[error("failed to start denoiser hook: {0}")]
    Spawn(io::Error),
    #[error("denoiser hook I/O failed: {0}")]
    Io(io::Error),
    #[error("denoiser hook timed out after {0:.1?}")]
    Timeout(Duration),
    #[error("denoiser hook answered {received} record(s) for {sent} sent")]
    CountMismatch { sent: usize, received: usize },
    #[error("denoiser hook response repeats id {0}")]
    DuplicateId(u64),
    #[error("denoiser hook response is missing id {0}")]
    MissingId(u64),
    #[error("denoiser hook response is not a valid record: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("denoiser hook exited with {0}")]
    ChildFailed(ExitStatus),
    #[error("denoiser hook reader thread died")]
    ReaderFailed,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Wbw(#[from] WbwError),
    #[error(transparent)]
    Hook(#[from] HookError),
    #[error("writing a pair failed: {0}")]
    Sink(#[from] io::Error),
    #[error("document {doc_id}: word-by-word output into {tgt} is empty")]
    EmptyTranslation { doc_id: String, tgt: LanguageId },
    #[error("document {doc_id} has no tokens")]
    EmptyDocument { doc_id: String },
    #[error("language {0} is listed twice")]
    DuplicateLanguage(LanguageId),
    #[error("invalid MLM parameters: {0}")]
    InvalidMlmParams(String),
    #[error("invalid mix schedule: {0}")]
    InvalidSchedule(String),
    #[error("the {0} stream is empty")]
    EmptyStream(&'static str),
    #[error("invalid pair filter {expr:?}: {reason}")]
    InvalidPairFilter { expr: String, reason: String },
}

// ---------------------------------------------------------------------------
// External hook line protocol
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct HookRecord {
    id: u64,
    text: String,
}

#[derive(Serialize)]
struct HookRecordRef<'a> {
    id: u64,
    text: &'a str,
}

/// Runs `command` through `sh -c`, writes one `{"id", "text"}` JSON object
/// per record to its stdin, and reads the same number of records back from
/// its stdout. Responses may arrive in any order; they are returned in
/// request order. Any shortfall — timeout, bad JSON, wrong count, unknown or
/// repeated ids, nonzero exit — fails the whole call, since a partial answer
/// cannot be attributed safely.
pub fn run_line_protocol(
    command: &str,
    timeout: Duration,
    records: &[(u64, String)],
) -> Result<Vec<(u64, String)>, HookError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let mut payload = String::new();
    for (id, text) in records {
        let line = serde_json::to_string(&HookRecordRef { id: *id, text })?;
        payload.push_str(&line);
        payload.push('\n');
    }

    let mut shell = Command::new("sh");
    shell
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit());
    // Give the hook its own process group so a timeout can take down any
    // grandchildren the shell forked; otherwise they keep the stdout pipe
    // open and the reader never sees EOF.
    #[cfg(unix)]
    std::os::unix::process::CommandExt::process_group(&mut shell, 0);
    let mut child = shell.spawn().map_err(HookError::Spawn)?;
    let mut stdin = child.stdin.take().expect("stdin was piped");
    let stdout = child.stdout.take().expect("stdout was piped");

    // Writer and reader run on their own threads so a child that buffers its
    // whole input before answering cannot deadlock us.
    let writer = std::thread::spawn(move || {
        use std::io::Write;
        // A child may legitimately exit before consuming all input; the
        // resulting broken pipe shows up as a count mismatch on the read side.
        let _ = stdin.write_all(payload.as_bytes());
    });
    let (tx, rx) = mpsc::channel();
    let reader = std::thread::spawn(move || {
        use std::io::{BufRead, BufReader};
        let mut lines = Vec::new();
        for line in BufReader::new(stdout).lines() {
            match line {
                Ok(line) => lines.push(line),
                Err(err) => {
                    let _ = tx.send(Err(err));
                    return;
                }
            }
        }
        let _ = tx.send(Ok(lines));
    });

    let received = rx.recv_timeout(timeout);
    let result = match received {
        Ok(Ok(lines)) => wait_with_deadline(&mut child, timeout).and_then(|status| {
            if status.success() {
                Ok(lines)
            } else {
                Err(HookError::ChildFailed(status))
            }
        }),
        Ok(Err(err)) => {
            kill_quietly(&mut child);
            Err(HookError::Io(err))
        }
        Err(mpsc::RecvTimeoutError::Timeout) => {
            kill_quietly(&mut child);
            Err(HookError::Timeout(timeout))
        }
        Err(mpsc::RecvTimeoutError::Disconnected) => {
            kill_quietly(&mut child);
            Err(HookError::ReaderFailed)
        }
    };
    let _ = writer.join();
    let _ = reader.join();
    parse_hook_response(records, &result?)
}

fn kill_quietly(child: &mut Child) {
    #[cfg(unix)]
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// The child has closed stdout but may still be exiting; poll for its status
/// rather than blocking without bound.
fn wait_with_deadline(child: &mut Child, timeout: Duration) -> Result<ExitStatus, HookError> {
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(status) = child.try_wait().map_err(HookError::Io)? {
            return Ok(status);
        }
        if Instant::now() >= deadline {
            kill_quietly(child);
            return Err(HookError::Timeout(timeout));
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn parse_hook_response(
    records: &[(u64, String)],
    lines: &[String],
) -> Result<Vec<(u64, String)>, HookError> {
    if lines.len() != records.len() {
        return Err(HookError::CountMismatch {
            sent: records.len(),
            received: lines.len(),
        });
    }
    let mut by_id: HashMap<u64, String> = HashMap::with_capacity(lines.len());
    for line in lines {
        let record: HookRecord = serde_json::from_str(line)?;
        if by_id.insert(record.id, record.text).is_some() {
            return Err(HookError::DuplicateId(record.id));
        }
    }
    records
        .iter()
        .map(|(id, _)| {
            by_id
                .remove(id)
                .map(|text| (*id, text))
                .ok_or(HookError::MissingId(*id))
        })
        .collect()
}

/// Post-processing stage for generated translations: either the built-in
/// identity (emit the word-by-word text as-is) or an external command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HookMode {
    Identity,
    External { command: String },
}

/// The denoiser stage of pair generation. An external command receives the
/// line protocol of [`run_line_protocol`]; `{lang}` in the command is
/// replaced by the target language of the records being sent, so one
/// configuration can address per-language denoiser models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenoiserHook {
    pub mode: HookMode,
    pub timeout: Duration,
}

impl DenoiserHook {
    pub fn identity() -> Self {
        DenoiserHook {
            mode: HookMode::Identity,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn external(command: impl Into<String>, timeout: Duration) -> Self {
        DenoiserHook {
            mode: HookMode::External {
                command: command.into(),
            },
            timeout,
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self.mode, HookMode::External { .. })
    }

    /// Runs one batch of records through the hook. Identity mode echoes.
    pub fn run(
        &self,
        records: &[(u64, String)],
        lang: Option<LanguageId>,
    ) -> Result<Vec<(u64, String)>, HookError> {
        match &self.mode {
            HookMode::Identity => Ok(records.to_vec()),
            HookMode::External { command } => {
                let command = match lang {
                    Some(lang) => command.replace("{lang}", lang.as_str()),
                    None => command.clone(),
                };
                run_line_protocol(&command, self.timeout, records)
            }
        }
    }
}

/// Sends records through the configured hook; the all-or-nothing batch
/// semantics of [`run_line_protocol`] apply.
pub fn denoise_external(
    hook: &DenoiserHook,
    records: &[(u64, String)],
) -> Result<Vec<(u64, String)>, HookError> {
    hook.run(records, None)
}

// ---------------------------------------------------------------------------
// Multilingual pair generation
// ---------------------------------------------------------------------------

/// Restricts generation to an explicit set of ordered language pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairFilter {
    allowed: std::collections::HashSet<(LanguageId, LanguageId)>,
}

impl PairFilter {
    /// Parses `"en-fr,fr-en"` style lists of ordered pairs.
    pub fn parse(expr: &str) -> Result<Self, PipelineError> {
        let invalid = |reason: &str| PipelineError::InvalidPairFilter {
            expr: expr.to_string(),
            reason: reason.to_string(),
        };
        let mut allowed = std::collections::HashSet::new();
        for item in expr.split(',') {
            let item = item.trim();
            let Some((src, tgt)) = item.split_once('-') else {
                return Err(invalid("expected <src>-<tgt> items"));
            };
            let src = LanguageId::new(src).map_err(|e| invalid(&e.to_string()))?;
            let tgt = LanguageId::new(tgt).map_err(|e| invalid(&e.to_string()))?;
            if src == tgt {
                return Err(invalid("a pair must name two distinct languages"));
            }
            allowed.insert((src, tgt));
        }
        if allowed.is_empty() {
            return Err(invalid("no pairs given"));
        }
        Ok(PairFilter { allowed })
    }

    pub fn allows(&self, src: LanguageId, tgt: LanguageId) -> bool {
        self.allowed.contains(&(src, tgt))
    }
}

impl std::str::FromStr for PairFilter {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PairFilter::parse(s)
    }
}

/// Everything the generation loop needs besides the documents themselves.
pub struct SpdgContext<'a> {
    pub langs: &'a [LanguageId],
    pub filter: Option<&'a PairFilter>,
    pub lexicons: &'a LexiconSet,
    pub ner: &'a dyn NerProvider,
    pub transliterator: &'a dyn TransliterationProvider,
    pub hook: &'a DenoiserHook,
    pub seeds: &'a SeedContext,
}

/// Counters the generation loop accumulates; serialized into run reports.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PipelineStats {
    pub documents: u64,
    pub pairs: u64,
    pub tokens: u64,
    pub dropped_tokens: u64,
    /// Pairs skipped because the (possibly hook-processed) output was empty.
    pub empty_translations: u64,
    /// Hook invocations that failed outright; each one skips its whole batch.
    pub hook_failed_batches: u64,
    pub pairs_skipped_by_hook: u64,
}

/// The targets a document translates into: every configured language except
/// its own, in configured order, honoring the pair filter.
pub fn targets_for(
    doc_lang: LanguageId,
    langs: &[LanguageId],
    filter: Option<&PairFilter>,
) -> Vec<LanguageId> {
    langs
        .iter()
        .copied()
        .filter(|&tgt| tgt != doc_lang)
        .filter(|&tgt| filter.is_none_or(|f| f.allows(doc_lang, tgt)))
        .collect()
}

/// Checks that every ordered language pair that generation will need can be
/// answered by the loaded lexicons. Run before streaming any corpus so that
/// configuration holes fail fast instead of after hours of work.
pub fn validate_language_pairs(
    langs: &[LanguageId],
    filter: Option<&PairFilter>,
    lexicons: &LexiconSet,
) -> Result<(), PipelineError> {
    for (i, &lang) in langs.iter().enumerate() {
        if langs[..i].contains(&lang) {
            return Err(PipelineError::DuplicateLanguage(lang));
        }
    }
    for &src in langs {
        for tgt in targets_for(src, langs, filter) {
            if !lexicons.has_route(src, tgt) {
                return Err(LexiconError::MissingRoute {
                    src,
                    tgt,
                    pivot: lexicons.pivot(),
                }
                .into());
            }
        }
    }
    Ok(())
}

/// Word-by-word translations of one document into each of its targets. Pure
/// per-document work with no shared state, safe to fan out across workers.
pub fn wbw_for_targets(
    doc: &Document,
    ctx: &SpdgContext<'_>,
) -> Result<Vec<(LanguageId, WbwResult)>, PipelineError> {
    let mut results = Vec::new();
    for tgt in targets_for(doc.lang, ctx.langs, ctx.filter) {
        let result = wbw::translate_document(
            doc,
            tgt,
            ctx.lexicons,
            ctx.ner,
            ctx.transliterator,
            ctx.seeds,
        )?;
        results.push((tgt, result));
    }
    Ok(results)
}

/// Turns per-document translations into emitted pairs, sending the texts
/// through the denoiser hook first. External hooks are invoked once per
/// target language per batch; a failed invocation skips exactly the pairs it
/// covered. Pairs are emitted document-major in input order, so output does
/// not depend on how the translations were computed.
pub fn pairs_from_wbw(
    documents: &[Document],
    translated: Vec<Vec<(LanguageId, WbwResult)>>,
    hook: &DenoiserHook,
    stats: &mut PipelineStats,
    sink: &mut dyn FnMut(ParallelPair) -> io::Result<()>,
) -> Result<(), PipelineError> {
    debug_assert_eq!(documents.len(), translated.len());
    stats.documents += documents.len() as u64;

    let mut slots: Vec<(usize, LanguageId, Option<String>)> = Vec::new();
    for (di, results) in translated.into_iter().enumerate() {
        for (tgt, result) in results {
            stats.tokens += result.outcomes.len() as u64;
            stats.dropped_tokens += result
                .outcomes
                .iter()
                .filter(|o| o.result == TokenResult::Dropped)
                .count() as u64;
            if result.text.is_empty() {
                stats.empty_translations += 1;
                log::warn!(
                    "{}: word-by-word output into {tgt} is empty, skipping pair",
                    documents[di].id
                );
                continue;
            }
            slots.push((di, tgt, Some(result.text)));
        }
    }

    if hook.is_external() {
        let mut langs_in_order: Vec<LanguageId> = Vec::new();
        for &(_, tgt, _) in &slots {
            if !langs_in_order.contains(&tgt) {
                langs_in_order.push(tgt);
            }
        }
        for lang in langs_in_order {
            let indices: Vec<usize> = slots
                .iter()
                .enumerate()
                .filter(|(_, slot)| slot.1 == lang)
                .map(|(i, _)| i)
                .collect();
            let records: Vec<(u64, String)> = indices
                .iter()
                .map(|&i| (i as u64, slots[i].2.clone().expect("slot text present")))
                .collect();
            match hook.run(&records, Some(lang)) {
                Ok(responses) => {
                    for (id, text) in responses {
                        slots[id as usize].2 = Some(text);
                    }
                }
                Err(err) => {
                    log::error!("denoiser hook failed for {lang}: {err}; skipping its batch");
                    stats.hook_failed_batches += 1;
                    stats.pairs_skipped_by_hook += indices.len() as u64;
                    for &i in &indices {
                        slots[i].2 = None;
                    }
                }
            }
        }
    }

    for (di, tgt, output) in slots {
        let Some(output) = output else { continue };
        if output.is_empty() {
            stats.empty_translations += 1;
            continue;
        }
        let doc = &documents[di];
        stats.pairs += 1;
        sink(ParallelPair {
            doc_id: doc.id.clone(),
            src_lang: doc.lang,
            tgt_lang: tgt,
            input: doc.text.clone(),
            output,
            objective: Objective::Spdg,
        })?;
    }
    Ok(())
}

/// One training pair for one (document, target) combination, through the
/// hook. The single-record convenience path of the batch machinery.
pub fn spdg_pair(
    doc: &Document,
    tgt: LanguageId,
    ctx: &SpdgContext<'_>,
) -> Result<ParallelPair, PipelineError> {
    let result = wbw::translate_document(
        doc,
        tgt,
        ctx.lexicons,
        ctx.ner,
        ctx.transliterator,
        ctx.seeds,
    )?;
    if result.text.is_empty() {
        return Err(PipelineError::EmptyTranslation {
            doc_id: doc.id.clone(),
            tgt,
        });
    }
    let records = [(0u64, result.text)];
    let output = ctx
        .hook
        .run(&records, Some(tgt))?
        .into_iter()
        .next()
        .map(|(_, text)| text)
        .unwrap_or_default();
    if output.is_empty() {
        return Err(PipelineError::EmptyTranslation {
            doc_id: doc.id.clone(),
            tgt,
        });
    }
    Ok(ParallelPair {
        doc_id: doc.id.clone(),
        src_lang: doc.lang,
        tgt_lang: tgt,
        input: doc.text.clone(),
        output,
        objective: Objective::Spdg,
    })
}

/// Generates every pair of one batch, sequentially.
pub fn spdg_batch(
    batch: &DocumentBatch,
    ctx: &SpdgContext<'_>,
    stats: &mut PipelineStats,
    sink: &mut dyn FnMut(ParallelPair) -> io::Result<()>,
) -> Result<(), PipelineError> {
    let translated = batch
        .documents
        .iter()
        .map(|doc| wbw_for_targets(doc, ctx))
        .collect::<Result<Vec<_>, _>>()?;
    pairs_from_wbw(&batch.documents, translated, ctx.hook, stats, sink)
}

/// Drives generation over a stream of batches (callers chain their corpora
/// in configuration order). Language-pair routing is validated before the
/// first batch is pulled.
pub fn multilingual_spdg<I>(
    batches: I,
    ctx: &SpdgContext<'_>,
    mut sink: impl FnMut(ParallelPair) -> io::Result<()>,
) -> Result<PipelineStats, PipelineError>
where
    I: IntoIterator<Item = Result<DocumentBatch, CorpusError>>,
{
    validate_language_pairs(ctx.langs, ctx.filter, ctx.lexicons)?;
    let mut stats = PipelineStats::default();
    for batch in batches {
        let batch = batch?;
        spdg_batch(&batch, ctx, &mut stats, &mut sink)?;
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// MLM baselines
// ---------------------------------------------------------------------------

fn default_mask_ratio() -> f64 {
    0.15
}

fn default_mean_span_length() -> f64 {
    3.0
}

fn default_sentinel_format() -> String {
    "<extra_id_{i}>".to_string()
}

fn default_reorder_mask_token() -> String {
    "<mask>".to_string()
}

/// Parameters shared by the two MLM-style baseline generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmParams {
    /// Fraction of tokens to mask.
    #[serde(default = "default_mask_ratio")]
    pub mask_ratio: f64,
    /// Mean length of a masked span (geometric distribution).
    #[serde(default = "default_mean_span_length")]
    pub mean_span_length: f64,
    /// Sentinel template for span masking; `{i}` is the span index.
    #[serde(default = "default_sentinel_format")]
    pub sentinel_format: String,
    /// Single mask token used by the reordering variant.
    #[serde(default = "default_reorder_mask_token")]
    pub reorder_mask_token: String,
}

impl Default for MlmParams {
    fn default() -> Self {
        MlmParams {
            mask_ratio: default_mask_ratio(),
            mean_span_length: default_mean_span_length(),
            sentinel_format: default_sentinel_format(),
            reorder_mask_token: default_reorder_mask_token(),
        }
    }
}

impl MlmParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(PipelineError::InvalidMlmParams(format!(
                "mask_ratio = {} is outside [0, 1]",
                self.mask_ratio
            )));
        }
        if self.mean_span_length < 1.0 || self.mean_span_length.is_nan() {
            return Err(PipelineError::InvalidMlmParams(format!(
                "mean_span_length = {} is below 1",
                self.mean_span_length
            )));
        }
        if self.sentinel_format.is_empty() || self.reorder_mask_token.is_empty() {
            return Err(PipelineError::InvalidMlmParams(
                "mask tokens must be non-empty".into(),
            ));
        }
        Ok(())
    }

    fn sentinel(&self, index: usize) -> String {
        self.sentinel_format.replace("{i}", &index.to_string())
    }
}

/// Geometric span length with the given mean, by inversion; values start
/// at 1.
fn sample_span_length(mean: f64, rng: &mut impl Rng) -> usize {
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let u: f64 = rng.gen_range(0.0..1.0);
    let len = ((1.0 - u).ln() / (1.0 - p).ln()).ceil();
    len.max(1.0) as usize
}

/// Chooses which tokens to mask: spans with geometric lengths at uniformly
/// chosen starts, preferring placements that leave at least one unmasked
/// token between spans, until exactly `budget` tokens are masked.
fn select_mask(m: usize, budget: usize, mean_span: f64, rng: &mut impl Rng) -> Vec<bool> {
    let mut mask = vec![false; m];
    let mut remaining = budget.min(m);
    while remaining > 0 {
        let mut len = sample_span_length(mean_span, rng).min(remaining);
        loop {
            if place_span(&mut mask, len, true, rng) || place_span(&mut mask, len, false, rng) {
                remaining -= len;
                break;
            }
            len -= 1;
            if len == 0 {
                // Unreachable while unmasked tokens remain; bail defensively.
                remaining = 0;
                break;
            }
        }
    }
    mask
}

fn place_span(mask: &mut [bool], len: usize, require_gaps: bool, rng: &mut impl Rng) -> bool {
    let m = mask.len();
    if len == 0 || len > m {
        return false;
    }
    let mut starts = Vec::new();
    'starts: for s in 0..=(m - len) {
        for flag in &mask[s..s + len] {
            if *flag {
                continue 'starts;
            }
        }
        if require_gaps {
            if s > 0 && mask[s - 1] {
                continue;
            }
            if s + len < m && mask[s + len] {
                continue;
            }
        }
        starts.push(s);
    }
    match starts.choose(rng) {
        Some(&s) => {
            for flag in &mut mask[s..s + len] {
                *flag = true;
            }
            true
        }
        None => false,
    }
}

/// Masked runs of a mask vector as (start, end) half-open ranges.
fn masked_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let start = i;
            while i < mask.len() && mask[i] {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    runs
}

/// Span-corruption pair over the tokenized document: masked spans are
/// replaced by indexed sentinels in the input, and the output lists each
/// sentinel followed by the tokens it hid. At least one token is always
/// masked so the output is never empty.
pub fn mlm_pairs(
    doc: &Document,
    params: &MlmParams,
    seeds: &SeedContext,
) -> Result<ParallelPair, PipelineError> {
    params.validate()?;
    let tokens: Vec<&str> = doc.tokens().map(|t| t.surface.as_str()).collect();
    let m = tokens.len();
    if m == 0 {
        return Err(PipelineError::EmptyDocument {
            doc_id: doc.id.clone(),
        });
    }
    let mut rng = seeds.doc_rng(&doc.id, "mlm");
    let budget = ((params.mask_ratio * m as f64).round() as usize).clamp(1, m);
    let mask = select_mask(m, budget, params.mean_span_length, &mut rng);
    let runs = masked_runs(&mask);

    let mut input = Vec::with_capacity(m);
    let mut output = Vec::new();
    let mut run_index = 0;
    let mut i = 0;
    while i < m {
        if mask[i] {
            let (start, end) = runs[run_index];
            let sentinel = params.sentinel(run_index);
            input.push(sentinel.clone());
            output.push(sentinel);
            output.extend(tokens[start..end].iter().map(|t| t.to_string()));
            run_index += 1;
            i = end;
        } else {
            input.push(tokens[i].to_string());
            i += 1;
        }
    }

    Ok(ParallelPair {
        doc_id: doc.id.clone(),
        src_lang: doc.lang,
        tgt_lang: doc.lang,
        input: input.join(" "),
        output: output.join(" "),
        objective: Objective::Mlm,
    })
}

/// Reordering variant: sentences are permuted uniformly, spans are masked
/// with one fixed mask token, and the output is the document's original
/// token sequence. A zero mask ratio masks nothing, so a single-sentence
/// document degenerates to input == output.
pub fn mlm_reorder_pairs(
    doc: &Document,
    params: &MlmParams,
    seeds: &SeedContext,
) -> Result<ParallelPair, PipelineError> {
    params.validate()?;
    if doc.token_count() == 0 {
        return Err(PipelineError::EmptyDocument {
            doc_id: doc.id.clone(),
        });
    }
    let mut rng = seeds.doc_rng(&doc.id, "mlm_reorder");
    let mut order: Vec<usize> = (0..doc.sentences.len()).collect();
    order.shuffle(&mut rng);

    let tokens: Vec<&str> = order
        .iter()
        .flat_map(|&si| doc.sentences[si].tokens.iter().map(|t| t.surface.as_str()))
        .collect();
    let m = tokens.len();
    let budget = ((params.mask_ratio * m as f64).round() as usize).min(m);
    let mask = if budget == 0 {
        vec![false; m]
    } else {
        select_mask(m, budget, params.mean_span_length, &mut rng)
    };
    let runs = masked_runs(&mask);

    let mut input = Vec::with_capacity(m);
    let mut run_index = 0;
    let mut i = 0;
    while i < m {
        if mask[i] {
            input.push(params.reorder_mask_token.as_str());
            i = runs[run_index].1;
            run_index += 1;
        } else {
            input.push(tokens[i]);
            i += 1;
        }
    }

    Ok(ParallelPair {
        doc_id: doc.id.clone(),
        src_lang: doc.lang,
        tgt_lang: doc.lang,
        input: input.join(" "),
        output: doc.tokenized_text(),
        objective: Objective::MlmReorder,
    })
}

// ---------------------------------------------------------------------------
// Mixing schedule
// ---------------------------------------------------------------------------

fn default_spdg_fraction() -> f64 {
    0.75
}

/// How pseudo-parallel and baseline pairs share a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSchedule {
    /// Share of steps trained on pseudo-parallel pairs.
    #[serde(default = "default_spdg_fraction")]
    pub spdg_fraction: f64,
    pub total_steps: usize,
    pub batch_size: usize,
    /// Default is a phase split: the pseudo-parallel share runs first, then
    /// the baseline share. Interleaving instead draws each block's objective
    /// independently.
    #[serde(default)]
    pub interleaved: bool,
}

impl MixSchedule {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.spdg_fraction) {
            return Err(PipelineError::InvalidSchedule(format!(
                "spdg_fraction = {} is outside [0, 1]",
                self.spdg_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(PipelineError::InvalidSchedule("batch_size is zero".into()));
        }
        Ok(())
    }
}

/// One training step's worth of pairs, tagged with the stream it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MixBlock {
    pub step: usize,
    pub objective: Objective,
    pub pairs: Vec<ParallelPair>,
}

/// Lays out `total_steps` blocks over the two streams. Streams cycle when
/// exhausted (each wrap logs the new epoch). The default schedule is the
/// phase split — `round(spdg_fraction · total_steps)` pseudo-parallel blocks,
/// then baseline blocks; `interleaved` replaces the split with an independent
/// per-block draw at the same fraction.
pub fn mix_schedule<'a>(
    spdg: &'a [ParallelPair],
    baseline: &'a [ParallelPair],
    schedule: &MixSchedule,
    seeds: &SeedContext,
) -> Result<MixBlocks<'a>, PipelineError> {
    schedule.validate()?;
    if spdg.is_empty() {
        return Err(PipelineError::EmptyStream("pseudo-parallel"));
    }
    if baseline.is_empty() {
        return Err(PipelineError::EmptyStream("baseline"));
    }
    let spdg_steps = (schedule.spdg_fraction * schedule.total_steps as f64).round() as usize;
    Ok(MixBlocks {
        spdg: StreamCursor::new(spdg, "pseudo-parallel"),
        baseline: StreamCursor::new(baseline, "baseline"),
        schedule: schedule.clone(),
        spdg_steps,
        step: 0,
        rng: seeds.run_rng("mix"),
    })
}

struct StreamCursor<'a> {
    pairs: &'a [ParallelPair],
    name: &'static str,
    next: usize,
    epoch: usize,
}

impl<'a> StreamCursor<'a> {
    fn new(pairs: &'a [ParallelPair], name: &'static str) -> Self {
        StreamCursor {
            pairs,
            name,
            next: 0,
            epoch: 0,
        }
    }

    fn take(&mut self, count: usize) -> Vec<ParallelPair> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            if self.next == self.pairs.len() {
                self.next = 0;
                self.epoch += 1;
                log::info!(
                    "{} stream exhausted after {} pair(s); starting epoch {}",
                    self.name,
                    self.pairs.len(),
                    self.epoch + 1
                );
            }
            out.push(self.pairs[self.next].clone());
            self.next += 1;
        }
        out
    }
}

pub struct MixBlocks<'a> {
    spdg: StreamCursor<'a>,
    baseline: StreamCursor<'a>,
    schedule: MixSchedule,
    spdg_steps: usize,
    step: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl Iterator for MixBlocks<'_> {
    type Item = MixBlock;

    fn next(&mut self) -> Option<Self::Item> {
        if self.step >= self.schedule.total_steps {
            return None;
        }
        let use_spdg = if self.schedule.interleaved {
            self.rng.gen_bool(self.schedule.spdg_fraction)
        } else {
            self.step < self.spdg_steps
        };
        let cursor = if use_spdg {
            &mut self.spdg
        } else {
            &mut self.baseline
        };
        let pairs = cursor.take(self.schedule.batch_size);
        let block = MixBlock {
            step: self.step,
            objective: pairs[0].objective,
            pairs,
        };
        self.step += 1;
        Some(block)
    }
}
