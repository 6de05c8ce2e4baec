//! Run configuration: one JSON file describes corpora, lexicons, providers
//! and generation parameters, with a handful of flag overrides on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde::Deserialize;

use spdg_core::annotate::{
    ExternalNer, ExternalTransliterator, GazetteerNer, NerProvider, NoNer, Serialized,
    TransliterationProvider,
};
use spdg_core::corpus::LanguageId;
use spdg_core::lexicon::{Lexicon, LexiconSet};
use spdg_core::noiser::NoiseProfile;
use spdg_core::pipeline::{DenoiserHook, MixSchedule, MlmParams, PairFilter};
use spdg_core::seeding::SeedContext;

use crate::{CliResult, Failure};

fn default_pivot() -> LanguageId {
    LanguageId::new("en").expect("en is a valid code")
}

fn default_batch_capacity() -> usize {
    spdg_core::corpus::DEFAULT_BATCH_CAPACITY
}

fn default_timeout_secs() -> u64 {
    30
}

/// Noise rates as written in a config file; the add/substitute ranges default
/// to the shipped values so a calibration run only has to supply the removal
/// statistics.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRates {
    pub remove_mean: f64,
    pub remove_std: f64,
    #[serde(default = "NoiseRates::default_add_min")]
    pub add_min: f64,
    #[serde(default = "NoiseRates::default_add_max")]
    pub add_max: f64,
    #[serde(default = "NoiseRates::default_sub_min")]
    pub sub_min: f64,
    #[serde(default = "NoiseRates::default_sub_max")]
    pub sub_max: f64,
}

impl NoiseRates {
    fn default_add_min() -> f64 {
        0.01
    }
    fn default_add_max() -> f64 {
        0.03
    }
    fn default_sub_min() -> f64 {
        0.05
    }
    fn default_sub_max() -> f64 {
        0.07
    }

    fn into_profile(self, lang: LanguageId) -> NoiseProfile {
        NoiseProfile {
            lang,
            remove_mean: self.remove_mean,
            remove_std: self.remove_std,
            add_min: self.add_min,
            add_max: self.add_max,
            sub_min: self.sub_min,
            sub_max: self.sub_max,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Shell command speaking the line protocol; `{lang}` expands to the
    /// target language.
    pub command: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub languages: Vec<LanguageId>,
    /// Corpus file per language, one document per line.
    pub corpora: BTreeMap<LanguageId, PathBuf>,
    /// Lexicon file per ordered pair, keyed like `"en-fr"`.
    #[serde(default)]
    pub lexicons: BTreeMap<String, PathBuf>,
    #[serde(default = "default_pivot")]
    pub pivot: LanguageId,
    #[serde(default = "default_batch_capacity")]
    pub batch_capacity: usize,
    #[serde(default)]
    pub seed: u64,
    /// Per-language noise rates; en/fr/de fall back to the shipped defaults.
    #[serde(default)]
    pub noise: BTreeMap<LanguageId, NoiseRates>,
    /// External denoiser; omitted means the identity hook.
    #[serde(default)]
    pub denoiser: Option<DenoiserConfig>,
    #[serde(default)]
    pub mlm: MlmParams,
    /// When present, `spdg-data` interleaves pseudo-parallel and MLM blocks.
    #[serde(default)]
    pub mix: Option<MixSchedule>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// One entity word per line; detected entities transliterate instead of
    /// dropping on dictionary misses.
    #[serde(default)]
    pub gazetteer: Option<PathBuf>,
    /// External entity detector speaking the line protocol.
    #[serde(default)]
    pub ner_command: Option<String>,
    /// External transliterator speaking the line protocol.
    #[serde(default)]
    pub transliterator_command: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub provider_timeout_secs: u64,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .map_err(Failure::config)?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))
            .map_err(Failure::config)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> CliResult<()> {
        let fail = |msg: String| Err(Failure::config(anyhow!(msg)));
        if self.languages.is_empty() {
            return fail("config lists no languages".into());
        }
        for (i, lang) in self.languages.iter().enumerate() {
            if self.languages[..i].contains(lang) {
                return fail(format!("language {lang} is listed twice"));
            }
            if !self.corpora.contains_key(lang) {
                return fail(format!("language {lang} has no corpus path"));
            }
        }
        for (lang, path) in &self.corpora {
            if !path.is_file() {
                return fail(format!("corpus for {lang} not found: {}", path.display()));
            }
        }
        for (key, path) in &self.lexicons {
            parse_pair_key(key)?;
            if !path.is_file() {
                return fail(format!("lexicon {key} not found: {}", path.display()));
            }
        }
        if let Some(path) = &self.gazetteer {
            if !path.is_file() {
                return fail(format!("gazetteer not found: {}", path.display()));
            }
        }
        if self.batch_capacity == 0 {
            return fail("batch_capacity must be at least 1".into());
        }
        for (lang, rates) in &self.noise {
            rates
                .clone()
                .into_profile(*lang)
                .validate()
                .map_err(Failure::config)?;
        }
        if self.gazetteer.is_some() && self.ner_command.is_some() {
            return fail("configure either gazetteer or ner_command, not both".into());
        }
        self.mlm.validate().map_err(Failure::config)?;
        if let Some(mix) = &self.mix {
            mix.validate().map_err(Failure::config)?;
        }
        Ok(())
    }

    /// The noise profile for one language: explicit configuration first,
    /// then the shipped defaults.
    pub fn noise_profile(&self, lang: LanguageId) -> CliResult<NoiseProfile> {
        if let Some(rates) = self.noise.get(&lang) {
            return Ok(rates.clone().into_profile(lang));
        }
        NoiseProfile::builtin(lang).ok_or_else(|| {
            Failure::config(anyhow!(
                "no noise profile for {lang}: add one under \"noise\" or run calibrate"
            ))
        })
    }

    pub fn corpus_path(&self, lang: LanguageId) -> CliResult<&Path> {
        self.corpora
            .get(&lang)
            .map(PathBuf::as_path)
            .ok_or_else(|| Failure::config(anyhow!("language {lang} has no corpus path")))
    }
}

fn parse_pair_key(key: &str) -> CliResult<(LanguageId, LanguageId)> {
    let invalid = || Failure::config(anyhow!("lexicon key {key:?} is not of the form \"xx-yy\""));
    let (src, tgt) = key.split_once('-').ok_or_else(invalid)?;
    let src = LanguageId::new(src).map_err(|_| invalid())?;
    let tgt = LanguageId::new(tgt).map_err(|_| invalid())?;
    Ok((src, tgt))
}

/// A fully wired run: parsed configuration plus the loaded lexicons,
/// providers, hook and seed context.
pub struct Runtime {
    pub config: PipelineConfig,
    pub lexicons: LexiconSet,
    pub ner: Box<dyn NerProvider>,
    pub transliterator: Box<dyn TransliterationProvider>,
    pub hook: DenoiserHook,
    pub seeds: SeedContext,
    pub filter: Option<PairFilter>,
}

impl Runtime {
    pub fn build(
        config: PipelineConfig,
        seed_override: Option<u64>,
        pair_filter: Option<&str>,
    ) -> CliResult<Self> {
        let mut lexicons = LexiconSet::new(config.pivot);
        for (key, path) in &config.lexicons {
            let (src, tgt) = parse_pair_key(key)?;
            // Paths were checked during validation; failures here mean the
            // file content is unusable, which is a data problem.
            let lexicon = Lexicon::load(path, src, tgt).map_err(Failure::data)?;
            log::info!("loaded lexicon {key}: {} entries", lexicon.len());
            lexicons.insert(lexicon).map_err(Failure::config)?;
        }

        let provider_timeout = Duration::from_secs(config.provider_timeout_secs);
        let ner: Box<dyn NerProvider> = if let Some(command) = &config.ner_command {
            Box::new(Serialized::new(ExternalNer {
                command: command.clone(),
                timeout: provider_timeout,
            }))
        } else if let Some(path) = &config.gazetteer {
            Box::new(GazetteerNer::from_path(path).map_err(Failure::data)?)
        } else {
            Box::new(NoNer)
        };
        let transliterator: Box<dyn TransliterationProvider> =
            if let Some(command) = &config.transliterator_command {
                Box::new(Serialized::new(ExternalTransliterator {
                    command: command.clone(),
                    timeout: provider_timeout,
                }))
            } else {
                Box::new(spdg_core::annotate::DefaultTransliterator)
            };

        let hook = match &config.denoiser {
            Some(denoiser) => DenoiserHook::external(
                denoiser.command.clone(),
                Duration::from_secs(denoiser.timeout_secs),
            ),
            None => DenoiserHook::identity(),
        };

        let seeds = SeedContext::new(seed_override.unwrap_or(config.seed));
        let filter = pair_filter
            .map(PairFilter::parse)
            .transpose()
            .map_err(Failure::config)?;

        Ok(Runtime {
            config,
            lexicons,
            ner,
            transliterator,
            hook,
            seeds,
            filter,
        })
    }

    pub fn parse_lang(&self, code: &str) -> CliResult<LanguageId> {
        let lang = LanguageId::new(code).map_err(Failure::config)?;
        if !self.config.languages.contains(&lang) {
            return Err(Failure::config(anyhow!(
                "language {lang} is not in the configured language list"
            )));
        }
        Ok(lang)
    }
}
