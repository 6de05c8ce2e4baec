//! One function per subcommand. Generation commands share the same shape:
//! stream batches off disk, fan per-document work across the rayon pool,
//! emit results sequentially in document order (so the output bytes do not
//! depend on the worker count), and leave a stats sidecar next to the file.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;

use spdg_core::corpus::{ingest_corpus, Document, DocumentBatch, LanguageId, ParallelPair};
use spdg_core::noiser::{
    self, corrupt_document, BatchPool, CorruptionWarnings, DEFAULT_NOISE_ORDER,
};
use spdg_core::pipeline::{
    mix_schedule, mlm_pairs, mlm_reorder_pairs, pairs_from_wbw, validate_language_pairs,
    wbw_for_targets, PipelineError, PipelineStats, SpdgContext,
};
use spdg_core::wbw::{translate_document, TokenResult};

use crate::config::Runtime;
use crate::report::{PairWriter, RunStats};
use crate::{CliResult, Failure};

/// Batches of one corpus, materialized up front. `limit` caps documents.
fn load_batches(
    rt: &Runtime,
    lang: LanguageId,
    limit: Option<usize>,
) -> CliResult<Vec<DocumentBatch>> {
    let path = rt.config.corpus_path(lang)?;
    let reader = ingest_corpus(path, lang, rt.config.batch_capacity).map_err(Failure::data)?;
    reader
        .with_doc_limit(limit)
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::data)
}

fn spdg_context<'a>(rt: &'a Runtime) -> SpdgContext<'a> {
    SpdgContext {
        langs: &rt.config.languages,
        filter: rt.filter.as_ref(),
        lexicons: &rt.lexicons,
        ner: rt.ner.as_ref(),
        transliterator: rt.transliterator.as_ref(),
        hook: &rt.hook,
        seeds: &rt.seeds,
    }
}

/// [`spdg_core::pipeline::spdg_batch`] with the per-document translation fanned
/// across the rayon pool; emission stays sequential and in document order.
fn spdg_batch_parallel(
    batch: &DocumentBatch,
    ctx: &SpdgContext<'_>,
    stats: &mut PipelineStats,
    sink: &mut dyn FnMut(ParallelPair) -> io::Result<()>,
) -> Result<(), PipelineError> {
    let translated = batch
        .documents
        .par_iter()
        .map(|doc| wbw_for_targets(doc, ctx))
        .collect::<Result<Vec<_>, _>>()?;
    pairs_from_wbw(&batch.documents, translated, ctx.hook, stats, sink)
}

fn finish_run(
    mut run: RunStats,
    writer: PairWriter,
    output: &Path,
    started: Instant,
) -> CliResult<()> {
    run.pairs_per_objective = writer.finish().map_err(Failure::data)?;
    run.finalize(started);
    let sidecar = run.write_sidecar(output).map_err(Failure::data)?;
    run.log_summary();
    log::info!("wrote {} (stats: {})", output.display(), sidecar.display());
    Ok(())
}

// --- calibrate ---------------------------------------------------------

pub fn calibrate(rt: &Runtime, output_dir: &Path, limit: Option<usize>) -> CliResult<()> {
    validate_language_pairs(&rt.config.languages, rt.filter.as_ref(), &rt.lexicons)
        .map_err(Failure::config)?;
    fs::create_dir_all(output_dir)
        .with_context(|| format!("cannot create {}", output_dir.display()))
        .map_err(Failure::data)?;

    let languages = &rt.config.languages;
    let mut batches_by_lang: BTreeMap<LanguageId, Vec<DocumentBatch>> = BTreeMap::new();
    for &lang in languages {
        batches_by_lang.insert(lang, load_batches(rt, lang, limit)?);
    }

    let mut reports = Vec::new();
    for &tgt in languages {
        let sources: Vec<LanguageId> = languages
            .iter()
            .copied()
            .filter(|&src| src != tgt)
            .filter(|&src| rt.filter.as_ref().is_none_or(|f| f.allows(src, tgt)))
            .collect();
        if sources.is_empty() {
            log::info!("skipping target {tgt}: no source languages after filtering");
            continue;
        }
        let batches = sources.iter().flat_map(|src| batches_by_lang[src].iter());
        let report = noiser::calibrate(
            batches,
            tgt,
            &rt.lexicons,
            rt.ner.as_ref(),
            rt.transliterator.as_ref(),
        )
        .map_err(Failure::data)?;

        let path = output_dir.join(format!("calibration_{tgt}.json"));
        let mut file = BufWriter::new(File::create(&path).map_err(Failure::data)?);
        serde_json::to_writer_pretty(&mut file, &report)
            .map_err(io::Error::other)
            .and_then(|()| file.write_all(b"\n"))
            .and_then(|()| file.flush())
            .map_err(Failure::data)?;
        log::info!("wrote {}", path.display());
        reports.push(report);
    }

    if reports.is_empty() {
        return Err(Failure::config(anyhow!(
            "nothing to calibrate: need at least two languages (after --pairs filtering)"
        )));
    }

    eprintln!(
        "{:<8} {:>10} {:>10} {:>12} {:>12}",
        "target", "mean", "std", "documents", "tokens"
    );
    for report in &reports {
        eprintln!(
            "{:<8} {:>10.4} {:>10.4} {:>12} {:>12}",
            report.tgt.to_string(),
            report.mean,
            report.std,
            report.documents_seen,
            report.tokens_seen
        );
    }
    Ok(())
}

// --- wbw ----------------------------------------------------------------

#[derive(Serialize)]
struct WbwLine<'a> {
    id: &'a str,
    input: &'a str,
    wbw: &'a str,
    missing_rate: f64,
}

pub fn wbw(
    rt: &Runtime,
    src: &str,
    tgt: &str,
    output: &Path,
    limit: Option<usize>,
) -> CliResult<()> {
    let src = rt.parse_lang(src)?;
    let tgt = rt.parse_lang(tgt)?;
    if src == tgt {
        return Err(Failure::config(anyhow!(
            "source and target language are both {src}"
        )));
    }
    if !rt.lexicons.has_route(src, tgt) {
        return Err(Failure::config(anyhow!(
            "no lexicon loaded for ({src}, {tgt}) and no pivot route through {}",
            rt.lexicons.pivot()
        )));
    }

    let started = Instant::now();
    let mut run = RunStats::default();
    let mut out = BufWriter::new(File::create(output).map_err(Failure::data)?);
    let path = rt.config.corpus_path(src)?;
    let reader = ingest_corpus(path, src, rt.config.batch_capacity).map_err(Failure::data)?;
    for batch in reader.with_doc_limit(limit) {
        let batch = batch.map_err(Failure::data)?;
        let results = batch
            .documents
            .par_iter()
            .map(|doc| {
                translate_document(
                    doc,
                    tgt,
                    &rt.lexicons,
                    rt.ner.as_ref(),
                    rt.transliterator.as_ref(),
                    &rt.seeds,
                )
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(Failure::data)?;
        for (doc, result) in batch.documents.iter().zip(&results) {
            run.count_document(result.outcomes.len() as u64);
            run.count_dropped(
                result
                    .outcomes
                    .iter()
                    .filter(|o| o.result == TokenResult::Dropped)
                    .count() as u64,
                result.outcomes.len() as u64,
            );
            let line = WbwLine {
                id: &doc.id,
                input: &doc.text,
                wbw: &result.text,
                missing_rate: result.missing_rate,
            };
            serde_json::to_writer(&mut out, &line)
                .map_err(io::Error::other)
                .and_then(|()| out.write_all(b"\n"))
                .map_err(Failure::data)?;
        }
        log::info!(
            "translated {} documents into {tgt}",
            run.documents_processed
        );
    }
    out.flush().map_err(Failure::data)?;

    run.finalize(started);
    let sidecar = run.write_sidecar(output).map_err(Failure::data)?;
    run.log_summary();
    log::info!("wrote {} (stats: {})", output.display(), sidecar.display());
    Ok(())
}

// --- denoise-data -------------------------------------------------------

pub fn denoise_data(
    rt: &Runtime,
    lang: &str,
    output: &Path,
    limit: Option<usize>,
) -> CliResult<()> {
    let lang = rt.parse_lang(lang)?;
    let profile = rt.config.noise_profile(lang)?;

    let started = Instant::now();
    let mut run = RunStats::default();
    let mut warnings = CorruptionWarnings::default();
    let mut writer = PairWriter::create(output).map_err(Failure::data)?;
    let path = rt.config.corpus_path(lang)?;
    let reader = ingest_corpus(path, lang, rt.config.batch_capacity).map_err(Failure::data)?;
    for batch in reader.with_doc_limit(limit) {
        let batch = batch.map_err(Failure::data)?;
        let pool = BatchPool::build(&batch);
        // Mirrors corrupt_batch: per-document corruption is pure given the
        // pool and seeds, so it can fan out; emission keeps document order.
        let corrupted: Vec<(Vec<Vec<String>>, CorruptionWarnings)> = batch
            .documents
            .par_iter()
            .enumerate()
            .map(|(di, doc)| {
                let doc_pool = pool.for_document(di);
                let mut doc_warnings = CorruptionWarnings::default();
                let sentences = corrupt_document(
                    doc,
                    &doc_pool,
                    &profile,
                    &DEFAULT_NOISE_ORDER,
                    &rt.seeds,
                    &mut doc_warnings,
                );
                (sentences, doc_warnings)
            })
            .collect();
        for (doc, (sentences, doc_warnings)) in batch.documents.iter().zip(corrupted) {
            warnings.empty_pool += doc_warnings.empty_pool;
            run.count_document(doc.token_count() as u64);
            let input = sentences.concat().join(" ");
            if input.is_empty() {
                warnings.skipped_empty += 1;
                log::warn!("{}: corruption removed every token, skipping pair", doc.id);
                continue;
            }
            writer
                .write(&ParallelPair {
                    doc_id: doc.id.clone(),
                    src_lang: lang,
                    tgt_lang: lang,
                    input,
                    output: doc.text.clone(),
                    objective: spdg_core::corpus::Objective::Denoise,
                })
                .map_err(Failure::data)?;
        }
        log::info!("corrupted {} documents", run.documents_processed);
    }
    if warnings.empty_pool > 0 {
        log::warn!(
            "{} add/substitute passes found an empty batch pool",
            warnings.empty_pool
        );
    }
    if warnings.skipped_empty > 0 {
        log::warn!(
            "{} documents skipped (corrupted to empty)",
            warnings.skipped_empty
        );
    }
    finish_run(run, writer, output, started)
}

// --- spdg-data ----------------------------------------------------------

pub fn spdg_data(rt: &Runtime, output: &Path, limit: Option<usize>) -> CliResult<()> {
    let ctx = spdg_context(rt);
    validate_language_pairs(ctx.langs, ctx.filter, ctx.lexicons).map_err(Failure::config)?;

    let started = Instant::now();
    let mut run = RunStats::default();
    let mut pstats = PipelineStats::default();
    let mut writer = PairWriter::create(output).map_err(Failure::data)?;

    if let Some(schedule) = rt.config.mix.clone() {
        // Mixed run: materialize both streams, then lay the schedule out.
        let mut spdg_pairs = Vec::new();
        for &lang in &rt.config.languages {
            for batch in load_batches(rt, lang, limit)? {
                spdg_batch_parallel(&batch, &ctx, &mut pstats, &mut |pair| {
                    spdg_pairs.push(pair);
                    Ok(())
                })
                .map_err(Failure::data)?;
            }
        }
        let mut baseline = Vec::new();
        for &lang in &rt.config.languages {
            for batch in load_batches(rt, lang, limit)? {
                let pairs = batch
                    .documents
                    .par_iter()
                    .map(|doc| mlm_pairs(doc, &rt.config.mlm, &rt.seeds))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(Failure::data)?;
                baseline.extend(pairs);
            }
        }

        let blocks =
            mix_schedule(&spdg_pairs, &baseline, &schedule, &rt.seeds).map_err(Failure::data)?;
        let mut block_counts: BTreeMap<String, u64> = BTreeMap::new();
        for block in blocks {
            *block_counts.entry(block.objective.to_string()).or_insert(0) += 1;
            for pair in &block.pairs {
                writer.write(pair).map_err(Failure::data)?;
            }
        }
        run.blocks_per_objective = Some(block_counts);
    } else {
        for &lang in &rt.config.languages {
            let path = rt.config.corpus_path(lang)?;
            let reader =
                ingest_corpus(path, lang, rt.config.batch_capacity).map_err(Failure::data)?;
            for batch in reader.with_doc_limit(limit) {
                let batch = batch.map_err(Failure::data)?;
                spdg_batch_parallel(&batch, &ctx, &mut pstats, &mut |pair| writer.write(&pair))
                    .map_err(Failure::data)?;
                log::info!(
                    "{lang}: {} documents through the pipeline",
                    pstats.documents
                );
            }
        }
    }

    run.absorb_pipeline(&pstats);
    if pstats.empty_translations > 0 {
        log::warn!("{} empty translations skipped", pstats.empty_translations);
    }
    if pstats.pairs_skipped_by_hook > 0 {
        log::warn!(
            "{} pairs skipped across {} failed hook batches",
            pstats.pairs_skipped_by_hook,
            pstats.hook_failed_batches
        );
    }
    finish_run(run, writer, output, started)
}

// --- mlm-data -----------------------------------------------------------

pub fn mlm_data(
    rt: &Runtime,
    lang: Option<&str>,
    reorder: bool,
    output: &Path,
    limit: Option<usize>,
) -> CliResult<()> {
    let languages: Vec<LanguageId> = match lang {
        Some(code) => vec![rt.parse_lang(code)?],
        None => rt.config.languages.clone(),
    };

    let started = Instant::now();
    let mut run = RunStats::default();
    let mut writer = PairWriter::create(output).map_err(Failure::data)?;
    let make_pair = |doc: &Document| {
        if reorder {
            mlm_reorder_pairs(doc, &rt.config.mlm, &rt.seeds)
        } else {
            mlm_pairs(doc, &rt.config.mlm, &rt.seeds)
        }
    };
    for &lang in &languages {
        let path = rt.config.corpus_path(lang)?;
        let reader = ingest_corpus(path, lang, rt.config.batch_capacity).map_err(Failure::data)?;
        for batch in reader.with_doc_limit(limit) {
            let batch = batch.map_err(Failure::data)?;
            let pairs = batch
                .documents
                .par_iter()
                .map(make_pair)
                .collect::<Result<Vec<_>, _>>()
                .map_err(Failure::data)?;
            for (doc, pair) in batch.documents.iter().zip(pairs) {
                run.count_document(doc.token_count() as u64);
                writer.write(&pair).map_err(Failure::data)?;
            }
        }
        log::info!("{lang}: {} documents masked", run.documents_processed);
    }
    finish_run(run, writer, output, started)
}

// --- stats --------------------------------------------------------------

pub fn stats(file: &Path) -> CliResult<()> {
    let reader = File::open(file)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", file.display()))
        .map_err(Failure::data)?;

    let mut by_objective: BTreeMap<String, u64> = BTreeMap::new();
    let mut by_direction: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(Failure::data)?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: ParallelPair = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: not a pair record", file.display(), i + 1))
            .map_err(Failure::data)?;
        *by_objective.entry(pair.objective.to_string()).or_insert(0) += 1;
        *by_direction
            .entry(format!("{}-{}", pair.src_lang, pair.tgt_lang))
            .or_insert(0) += 1;
        total += 1;
    }

    println!("{:<14} {:>10}", "objective", "pairs");
    for (objective, count) in &by_objective {
        println!("{objective:<14} {count:>10}");
    }
    println!();
    println!("{:<14} {:>10}", "direction", "pairs");
    for (direction, count) in &by_direction {
        println!("{direction:<14} {count:>10}");
    }
    println!();
    println!("{:<14} {:>10}", "total", total);
    Ok(())
}

/// Picks the output path: the flag wins, then the config, else an error.
pub fn resolve_output(flag: Option<PathBuf>, config: Option<&Path>) -> CliResult<PathBuf> {
    flag.or_else(|| config.map(Path::to_path_buf))
        .ok_or_else(|| {
            Failure::config(anyhow!(
                "no output path: pass --output or set \"output\" in the config"
            ))
        })
}
