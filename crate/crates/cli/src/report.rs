//! Run accounting: the JSONL pair writer and the stats sidecar every data
//! command leaves next to its output file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use spdg_core::corpus::ParallelPair;
use spdg_core::pipeline::PipelineStats;

/// Counters reported after every generation run and serialized to
/// `<output>.stats.json`.
#[derive(Debug, Default, Serialize)]
pub struct RunStats {
    pub documents_processed: u64,
    pub tokens_processed: u64,
    /// Share of translated tokens that fell through the whole cascade.
    pub dropped_token_rate: f64,
    pub pairs_per_objective: BTreeMap<String, u64>,
    pub hook_failures: u64,
    /// Mixed-schedule runs only: emitted blocks per objective.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks_per_objective: Option<BTreeMap<String, u64>>,
    pub wall_seconds: f64,
    pub tokens_per_second: f64,
    #[serde(skip)]
    dropped: u64,
    #[serde(skip)]
    attempted: u64,
}

impl RunStats {
    pub fn absorb_pipeline(&mut self, stats: &PipelineStats) {
        self.documents_processed += stats.documents;
        self.tokens_processed += stats.tokens;
        self.hook_failures += stats.hook_failed_batches;
        self.dropped += stats.dropped_tokens;
        self.attempted += stats.tokens;
    }

    pub fn count_document(&mut self, tokens: u64) {
        self.documents_processed += 1;
        self.tokens_processed += tokens;
    }

    pub fn count_dropped(&mut self, dropped: u64, attempted: u64) {
        self.dropped += dropped;
        self.attempted += attempted;
    }

    pub fn finalize(&mut self, started: Instant) {
        if self.attempted > 0 {
            self.dropped_token_rate = self.dropped as f64 / self.attempted as f64;
        }
        let elapsed = started.elapsed().as_secs_f64();
        self.wall_seconds = elapsed;
        self.tokens_per_second = if elapsed > 0.0 {
            self.tokens_processed as f64 / elapsed
        } else {
            0.0
        };
    }

    pub fn write_sidecar(&self, output: &Path) -> io::Result<PathBuf> {
        let path = sidecar_path(output);
        let mut file = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut file, self).map_err(io::Error::other)?;
        file.write_all(b"\n")?;
        file.flush()?;
        Ok(path)
    }

    pub fn log_summary(&self) {
        let pairs: u64 = self.pairs_per_objective.values().sum();
        log::info!(
            "processed {} documents / {} tokens in {:.2}s ({:.0} tokens/s)",
            self.documents_processed,
            self.tokens_processed,
            self.wall_seconds,
            self.tokens_per_second
        );
        log::info!(
            "emitted {pairs} pairs ({}), dropped-token rate {:.4}, hook failures {}",
            join_counts(&self.pairs_per_objective),
            self.dropped_token_rate,
            self.hook_failures
        );
        if let Some(blocks) = &self.blocks_per_objective {
            log::info!("schedule blocks: {}", join_counts(blocks));
        }
    }
}

fn join_counts(counts: &BTreeMap<String, u64>) -> String {
    if counts.is_empty() {
        return "none".into();
    }
    counts
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `pairs.jsonl` gets its stats at `pairs.jsonl.stats.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".stats.json");
    output.with_file_name(name)
}

/// Buffered JSONL sink that keeps per-objective line counts in step with the
/// bytes it writes, so the sidecar always matches the file.
pub struct PairWriter {
    out: BufWriter<File>,
    counts: BTreeMap<String, u64>,
}

impl PairWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(PairWriter {
            out: BufWriter::new(File::create(path)?),
            counts: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, pair: &ParallelPair) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, pair).map_err(io::Error::other)?;
        self.out.write_all(b"\n")?;
        *self.counts.entry(pair.objective.to_string()).or_insert(0) += 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<BTreeMap<String, u64>> {
        self.out.flush()?;
        Ok(self.counts)
    }
}
