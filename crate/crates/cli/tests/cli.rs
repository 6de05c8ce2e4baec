//! Black-box tests for the `spdg` binary: exit-code discipline, output
//! shapes, determinism flags, and the stats sidecar contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: TempDir::new().expect("create temp dir"),
        }
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        fs::write(&path, content).expect("write fixture file");
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, value: Value) -> PathBuf {
        self.write("config.json", &value.to_string())
    }
}

fn spdg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdg"))
        .args(args)
        .env("SPDG_LOG", "error")
        .output()
        .expect("run spdg binary")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn read_lines(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).expect("read output file");
    text.lines().map(str::to_owned).collect()
}

fn read_json_lines(path: &Path) -> Vec<Value> {
    read_lines(path)
        .iter()
        .map(|l| serde_json::from_str(l).expect("valid JSON line"))
        .collect()
}

fn read_stats(output: &Path) -> Value {
    let mut name = output.file_name().unwrap().to_os_string();
    name.push(".stats.json");
    let text = fs::read_to_string(output.with_file_name(name)).expect("read stats sidecar");
    serde_json::from_str(&text).expect("valid stats JSON")
}

/// Full-coverage en/fr fixture: every word of either corpus has an entry in
/// both directions.
fn en_fr_fixture(docs_en: &[&str], docs_fr: &[&str]) -> (Fixture, Value) {
    let fixture = Fixture::new();
    fixture.write("en.txt", &docs_en.join("\n"));
    fixture.write("fr.txt", &docs_fr.join("\n"));
    fixture.write(
        "en-fr.txt",
        "the le\ncat chat\ndog chien\nsat assis\nran courut\non sur\nmat tapis\nfast vite\nhouse maison\nbig grand\n",
    );
    fixture.write(
        "fr-en.txt",
        "le the\nchat cat\nchien dog\nassis sat\ncourut ran\nsur on\ntapis mat\nvite fast\nmaison house\ngrand big\n",
    );
    let config = json!({
        "languages": ["en", "fr"],
        "corpora": {
            "en": fixture.path("en.txt"),
            "fr": fixture.path("fr.txt"),
        },
        "lexicons": {
            "en-fr": fixture.path("en-fr.txt"),
            "fr-en": fixture.path("fr-en.txt"),
        },
        "seed": 11,
    });
    (fixture, config)
}

#[test]
fn wbw_emits_one_line_per_document_with_expected_keys() {
    let (fixture, config) = en_fr_fixture(
        &[
            "the cat sat on the mat",
            "the dog ran fast",
            "the big house",
        ],
        &["le chat assis"],
    );
    let config = fixture.config(config);
    let out = fixture.path("wbw.jsonl");
    let result = spdg(&[
        "wbw",
        "--config",
        config.to_str().unwrap(),
        "--src",
        "en",
        "--tgt",
        "fr",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));

    let lines = read_json_lines(&out);
    assert_eq!(lines.len(), 3);
    for line in &lines {
        let mut keys: Vec<&str> = line
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        keys.sort_unstable();
        assert_eq!(keys, ["id", "input", "missing_rate", "wbw"]);
        assert_eq!(line["missing_rate"], json!(0.0), "full-coverage lexicon");
    }
    assert_eq!(lines[0]["input"], json!("the cat sat on the mat"));
    assert_eq!(lines[0]["wbw"], json!("le chat assis sur le tapis"));
}

#[test]
fn wbw_reruns_are_byte_identical() {
    let (fixture, config) = en_fr_fixture(
        &["the cat sat on the mat", "the dog ran fast"],
        &["le chat"],
    );
    let config = fixture.config(config);
    for name in ["a.jsonl", "b.jsonl"] {
        let out = fixture.path(name);
        let result = spdg(&[
            "wbw",
            "--config",
            config.to_str().unwrap(),
            "--src",
            "en",
            "--tgt",
            "fr",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    assert_eq!(
        fs::read(fixture.path("a.jsonl")).unwrap(),
        fs::read(fixture.path("b.jsonl")).unwrap()
    );
}

#[test]
fn wbw_empty_corpus_gives_empty_file_and_success() {
    let (fixture, config) = en_fr_fixture(&[], &["le chat"]);
    let config = fixture.config(config);
    let out = fixture.path("empty.jsonl");
    let result = spdg(&[
        "wbw",
        "--config",
        config.to_str().unwrap(),
        "--src",
        "en",
        "--tgt",
        "fr",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn wbw_hundred_documents_give_hundred_lines() {
    let docs: Vec<String> = (0..100).map(|i| format!("the cat sat {i}")).collect();
    let doc_refs: Vec<&str> = docs.iter().map(String::as_str).collect();
    let (fixture, config) = en_fr_fixture(&doc_refs, &["le chat"]);
    let config = fixture.config(config);
    let out = fixture.path("hundred.jsonl");
    let result = spdg(&[
        "wbw",
        "--config",
        config.to_str().unwrap(),
        "--src",
        "en",
        "--tgt",
        "fr",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    assert_eq!(read_lines(&out).len(), 100);
}

#[test]
fn limit_caps_documents_per_corpus() {
    let docs: Vec<String> = (0..20).map(|i| format!("the cat sat {i}")).collect();
    let doc_refs: Vec<&str> = docs.iter().map(String::as_str).collect();
    let (fixture, config) = en_fr_fixture(&doc_refs, &["le chat"]);
    let config = fixture.config(config);
    let out = fixture.path("limited.jsonl");
    let result = spdg(&[
        "wbw",
        "--config",
        config.to_str().unwrap(),
        "--src",
        "en",
        "--tgt",
        "fr",
        "--output",
        out.to_str().unwrap(),
        "--limit",
        "5",
    ]);
    assert!(result.status.success());
    assert_eq!(read_lines(&out).len(), 5);
}

#[test]
fn missing_lexicon_pair_exits_2_and_names_the_pair() {
    let fixture = Fixture::new();
    fixture.write("en.txt", "the cat\n");
    fixture.write("fr.txt", "le chat\n");
    fixture.write("en-fr.txt", "the le\ncat chat\n");
    let config = fixture.config(json!({
        "languages": ["en", "fr"],
        "corpora": { "en": fixture.path("en.txt"), "fr": fixture.path("fr.txt") },
        "lexicons": { "en-fr": fixture.path("en-fr.txt") },
    }));
    let out = fixture.path("x.jsonl");
    let result = spdg(&[
        "wbw",
        "--config",
        config.to_str().unwrap(),
        "--src",
        "fr",
        "--tgt",
        "en",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = stderr_of(&result);
    assert!(
        stderr.contains("fr") && stderr.contains("en"),
        "error names the pair: {stderr}"
    );
}

#[test]
fn missing_corpus_file_exits_2() {
    let fixture = Fixture::new();
    let config = fixture.config(json!({
        "languages": ["en"],
        "corpora": { "en": fixture.path("nope.txt") },
    }));
    let result = spdg(&[
        "denoise-data",
        "--config",
        config.to_str().unwrap(),
        "--lang",
        "en",
        "--output",
        fixture.path("x.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2() {
    let fixture = Fixture::new();
    let config = fixture.write("config.json", "{ not json");
    let result = spdg(&["spdg-data", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let result = spdg(&["spdg-data", "--frobnicate"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn stats_on_missing_file_exits_3() {
    let fixture = Fixture::new();
    let result = spdg(&["stats", fixture.path("missing.jsonl").to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3));
}

#[test]
fn stats_on_malformed_line_exits_3() {
    let fixture = Fixture::new();
    let file = fixture.write("pairs.jsonl", "this is not json\n");
    let result = spdg(&["stats", file.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3));
}

#[test]
fn denoise_zero_rates_permute_tokens_and_stats_count_corpus_tokens() {
    // Pre-tokenized corpus text so whitespace splitting matches the
    // pipeline's own tokenization.
    let fixture = Fixture::new();
    fixture.write(
        "en.txt",
        "the cat sat on the mat\nthe dog ran fast today\nthe big house stood still\n",
    );
    let config = fixture.config(json!({
        "languages": ["en"],
        "corpora": { "en": fixture.path("en.txt") },
        "noise": {
            "en": {
                "remove_mean": 0.0, "remove_std": 0.0,
                "add_min": 0.0, "add_max": 0.0,
                "sub_min": 0.0, "sub_max": 0.0,
            }
        },
        "seed": 3,
    }));
    let out = fixture.path("den.jsonl");
    let result = spdg(&[
        "denoise-data",
        "--config",
        config.to_str().unwrap(),
        "--lang",
        "en",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));

    let lines = read_json_lines(&out);
    assert_eq!(lines.len(), 3);
    for line in &lines {
        let mut input: Vec<&str> = line["input"].as_str().unwrap().split(' ').collect();
        let mut output: Vec<&str> = line["output"].as_str().unwrap().split(' ').collect();
        input.sort_unstable();
        output.sort_unstable();
        assert_eq!(input, output, "zero-rate corruption only reorders");
    }

    let stats = read_stats(&out);
    assert_eq!(stats["tokens_processed"], json!(16), "6 + 5 + 5 tokens");
    assert_eq!(stats["documents_processed"], json!(3));
    assert_eq!(
        stats["pairs_per_objective"]["denoise"],
        json!(lines.len()),
        "sidecar counts equal line counts"
    );
}

#[test]
fn spdg_data_three_languages_identity_hook_balanced_pairs() {
    let fixture = Fixture::new();
    let langs = ["en", "fr", "de"];
    let words: BTreeMap<&str, [&str; 3]> = BTreeMap::from([
        ("en", ["the", "cat", "runs"]),
        ("fr", ["le", "chat", "court"]),
        ("de", ["die", "katze", "rennt"]),
    ]);
    for lang in langs {
        let w = words[lang];
        let docs: Vec<String> = (0..10)
            .map(|_| format!("{} {} {}", w[0], w[1], w[2]))
            .collect();
        fixture.write(&format!("{lang}.txt"), &docs.join("\n"));
    }
    let mut lexicons = serde_json::Map::new();
    for src in langs {
        for tgt in langs {
            if src == tgt {
                continue;
            }
            let entries: String = words[src]
                .iter()
                .zip(words[tgt])
                .map(|(s, t)| format!("{s} {t}\n"))
                .collect();
            let path = fixture.write(&format!("{src}-{tgt}.txt"), &entries);
            lexicons.insert(format!("{src}-{tgt}"), json!(path));
        }
    }
    let config = fixture.config(json!({
        "languages": langs,
        "corpora": {
            "en": fixture.path("en.txt"),
            "fr": fixture.path("fr.txt"),
            "de": fixture.path("de.txt"),
        },
        "lexicons": lexicons,
        "seed": 5,
    }));
    let out = fixture.path("pairs.jsonl");
    let result = spdg(&[
        "spdg-data",
        "--config",
        config.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));

    let lines = read_json_lines(&out);
    assert_eq!(lines.len(), 60, "3 languages x 10 docs x 2 targets");
    let mut per_direction: BTreeMap<String, usize> = BTreeMap::new();
    for line in &lines {
        let key = format!(
            "{}-{}",
            line["src_lang"].as_str().unwrap(),
            line["tgt_lang"].as_str().unwrap()
        );
        *per_direction.entry(key).or_insert(0) += 1;
    }
    assert_eq!(per_direction.len(), 6);
    assert!(per_direction.values().all(|&n| n == 10));

    let stats = read_stats(&out);
    assert_eq!(stats["pairs_per_objective"]["spdg"], json!(60));

    // The stats subcommand reports the same counts from the file alone.
    let report = spdg(&["stats", out.to_str().unwrap()]);
    assert!(report.status.success());
    let stdout = String::from_utf8_lossy(&report.stdout).into_owned();
    assert!(stdout.contains("spdg") && stdout.contains("60"), "{stdout}");
}

#[test]
fn pairs_filter_restricts_directions() {
    let (fixture, config) = en_fr_fixture(
        &["the cat sat", "the dog ran"],
        &["le chat assis", "le chien courut"],
    );
    let config = fixture.config(config);
    let out = fixture.path("filtered.jsonl");
    let result = spdg(&[
        "spdg-data",
        "--config",
        config.to_str().unwrap(),
        "--pairs",
        "en-fr",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));
    let lines = read_json_lines(&out);
    assert_eq!(lines.len(), 2);
    for line in &lines {
        assert_eq!(line["src_lang"], json!("en"));
        assert_eq!(line["tgt_lang"], json!("fr"));
    }
}

#[test]
fn workers_do_not_change_output_bytes() {
    let docs: Vec<String> = (0..50)
        .map(|i| format!("the cat sat on the mat {i}"))
        .collect();
    let doc_refs: Vec<&str> = docs.iter().map(String::as_str).collect();
    let (fixture, config) = en_fr_fixture(&doc_refs, &["le chat assis"]);
    let config = fixture.config(config);
    for (name, workers) in [("w1.jsonl", "1"), ("w4.jsonl", "4")] {
        let out = fixture.path(name);
        let result = spdg(&[
            "spdg-data",
            "--config",
            config.to_str().unwrap(),
            "--workers",
            workers,
            "--output",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    assert_eq!(
        fs::read(fixture.path("w1.jsonl")).unwrap(),
        fs::read(fixture.path("w4.jsonl")).unwrap()
    );
}

#[test]
fn seed_flag_varies_candidate_choice_deterministically() {
    let fixture = Fixture::new();
    let doc: String = vec!["word"; 50].join(" ");
    fixture.write("en.txt", &doc);
    fixture.write("fr.txt", "mot\n");
    fixture.write("en-fr.txt", "word a\nword b\nword c\nword d\n");
    fixture.write("fr-en.txt", "mot word\n");
    let config = fixture.config(json!({
        "languages": ["en", "fr"],
        "corpora": { "en": fixture.path("en.txt"), "fr": fixture.path("fr.txt") },
        "lexicons": { "en-fr": fixture.path("en-fr.txt"), "fr-en": fixture.path("fr-en.txt") },
    }));
    let run = |name: &str, seed: &str| {
        let out = fixture.path(name);
        let result = spdg(&[
            "wbw",
            "--config",
            config.to_str().unwrap(),
            "--src",
            "en",
            "--tgt",
            "fr",
            "--seed",
            seed,
            "--output",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
        fs::read(out).unwrap()
    };
    let seed1a = run("s1a.jsonl", "1");
    let seed1b = run("s1b.jsonl", "1");
    let seed2 = run("s2.jsonl", "2");
    assert_eq!(seed1a, seed1b, "same seed, same bytes");
    assert_ne!(seed1a, seed2, "50 four-way choices differ across seeds");
}

#[test]
fn mixed_mode_writes_blocks_and_reports_block_counts() {
    let (fixture, mut config) = en_fr_fixture(
        &["the cat sat on the mat", "the dog ran fast"],
        &["le chat assis", "le chien courut vite"],
    );
    config["mix"] = json!({ "total_steps": 100, "batch_size": 1, "spdg_fraction": 0.75 });
    let config = fixture.config(config);
    let out = fixture.path("mixed.jsonl");
    let result = spdg(&[
        "spdg-data",
        "--config",
        config.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));

    let lines = read_json_lines(&out);
    assert_eq!(lines.len(), 100, "100 blocks x batch_size 1");
    let spdg_lines = lines
        .iter()
        .filter(|l| l["objective"] == json!("spdg"))
        .count();
    let mlm_lines = lines
        .iter()
        .filter(|l| l["objective"] == json!("mlm"))
        .count();
    assert_eq!((spdg_lines, mlm_lines), (75, 25));
    // Phase split: pseudo-parallel first, baseline after.
    assert!(lines[..75].iter().all(|l| l["objective"] == json!("spdg")));
    assert!(lines[75..].iter().all(|l| l["objective"] == json!("mlm")));

    let stats = read_stats(&out);
    assert_eq!(stats["blocks_per_objective"]["spdg"], json!(75));
    assert_eq!(stats["blocks_per_objective"]["mlm"], json!(25));
    assert_eq!(stats["pairs_per_objective"]["spdg"], json!(75));
    assert_eq!(stats["pairs_per_objective"]["mlm"], json!(25));
}

#[test]
fn failing_hook_skips_batches_but_exits_zero() {
    let (fixture, mut config) = en_fr_fixture(
        &["the cat sat", "the dog ran"],
        &["le chat assis", "le chien courut"],
    );
    // Drops the last line of every batch: a protocol violation, so each
    // invocation's whole batch is discarded.
    config["denoiser"] = json!({ "command": "sed '$d'" });
    let config = fixture.config(config);
    let out = fixture.path("hooked.jsonl");
    let result = spdg(&[
        "spdg-data",
        "--config",
        config.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "hook failures are not fatal: {}",
        stderr_of(&result)
    );
    assert_eq!(read_lines(&out).len(), 0, "no partial pairs");
    let stats = read_stats(&out);
    assert_eq!(stats["hook_failures"], json!(2), "one per language batch");
    assert!(stats["pairs_per_objective"].as_object().unwrap().is_empty());
}

#[test]
fn identity_hook_command_preserves_pairs() {
    let (fixture, mut config) = en_fr_fixture(&["the cat sat"], &["le chat assis"]);
    config["denoiser"] = json!({ "command": "cat" });
    let config = fixture.config(config);
    let out = fixture.path("cat.jsonl");
    let result = spdg(&[
        "spdg-data",
        "--config",
        config.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));
    let lines = read_json_lines(&out);
    assert_eq!(lines.len(), 2);
    let stats = read_stats(&out);
    assert_eq!(stats["hook_failures"], json!(0));
}

#[test]
fn mlm_data_reorder_flag_switches_objective() {
    let (fixture, config) = en_fr_fixture(
        &["the cat sat. the dog ran. the big house."],
        &["le chat assis. le chien courut."],
    );
    let config = fixture.config(config);
    let plain = fixture.path("mlm.jsonl");
    let result = spdg(&[
        "mlm-data",
        "--config",
        config.to_str().unwrap(),
        "--output",
        plain.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));
    let lines = read_json_lines(&plain);
    assert_eq!(lines.len(), 2, "one pair per document, both languages");
    assert!(lines.iter().all(|l| l["objective"] == json!("mlm")));

    let reordered = fixture.path("reorder.jsonl");
    let result = spdg(&[
        "mlm-data",
        "--config",
        config.to_str().unwrap(),
        "--reorder",
        "--lang",
        "en",
        "--output",
        reordered.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let lines = read_json_lines(&reordered);
    assert_eq!(lines.len(), 1, "restricted to one language");
    assert!(lines.iter().all(|l| l["objective"] == json!("mlm_reorder")));
    assert!(lines[0]["input"].as_str().unwrap().contains("<mask>"));
}

#[test]
fn calibrate_writes_report_per_target_language() {
    let (fixture, config) = en_fr_fixture(
        &["the cat sat on the mat", "the dog ran fast"],
        &["le chat assis", "le chien courut vite"],
    );
    let config = fixture.config(config);
    let dir = fixture.path("reports");
    let result = spdg(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--output",
        dir.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr_of(&result));
    for lang in ["en", "fr"] {
        let report: Value = serde_json::from_str(
            &fs::read_to_string(dir.join(format!("calibration_{lang}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(report["lang"], json!(lang));
        assert_eq!(report["mean"], json!(0.0), "full-coverage lexicons");
        assert_eq!(report["std"], json!(0.0));
    }
    let stderr = stderr_of(&result);
    assert!(
        stderr.contains("target") && stderr.contains("mean"),
        "{stderr}"
    );
}

#[test]
fn log_env_var_controls_stderr_verbosity() {
    let (fixture, config) = en_fr_fixture(&["the cat sat"], &["le chat"]);
    let config = fixture.config(config);
    let run = |level: &str, name: &str| {
        let out = fixture.path(name);
        let result = Command::new(env!("CARGO_BIN_EXE_spdg"))
            .args([
                "wbw",
                "--config",
                config.to_str().unwrap(),
                "--src",
                "en",
                "--tgt",
                "fr",
                "--output",
                out.to_str().unwrap(),
            ])
            .env("SPDG_LOG", level)
            .output()
            .expect("run spdg binary");
        assert!(result.status.success());
        stderr_of(&result)
    };
    let noisy = run("info", "noisy.jsonl");
    let quiet = run("error", "quiet.jsonl");
    assert!(
        noisy.contains("wrote"),
        "info level reports progress: {noisy}"
    );
    assert!(!quiet.contains("wrote"), "error level stays quiet: {quiet}");
}
