//! Property tests for the invariants the generators rely on.

use std::collections::HashMap;
use std::io::Write;

use proptest::prelude::*;

use spdg_core::annotate::{self, split_compound};
use spdg_core::corpus::{LanguageId, TokenKind};
use spdg_core::lexicon::Lexicon;
use spdg_core::noiser::{self, NoiseProfile, DEFAULT_NOISE_ORDER};
use spdg_core::pipeline::{mlm_pairs, mlm_reorder_pairs, MlmParams};
use spdg_core::seeding::SeedContext;

fn en() -> LanguageId {
    LanguageId::new("en").unwrap()
}

fn no_whitespace(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn is_subsequence(needle: &[String], haystack: &[String]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

fn zero_profile() -> NoiseProfile {
    NoiseProfile {
        lang: en(),
        remove_mean: 0.0,
        remove_std: 0.0,
        add_min: 0.0,
        add_max: 0.0,
        sub_min: 0.0,
        sub_max: 0.0,
    }
}

proptest! {
    #[test]
    fn tokenize_is_lossless_over_non_whitespace(s in "\\PC*") {
        let tokens = annotate::tokenize(&s);
        let concat: String = tokens.iter().map(|t| t.surface.as_str()).collect();
        prop_assert_eq!(concat, no_whitespace(&s));
    }

    #[test]
    fn token_spans_are_ordered_and_address_their_surfaces(s in "\\PC*") {
        let chars: Vec<char> = s.chars().collect();
        let tokens = annotate::tokenize(&s);
        for token in &tokens {
            prop_assert!(token.span.start < token.span.end);
            prop_assert!(!token.surface.is_empty());
            let slice: String = chars[token.span.start..token.span.end].iter().collect();
            prop_assert_eq!(slice, token.surface.clone());
        }
        for pair in tokens.windows(2) {
            prop_assert!(pair[0].span.end <= pair[1].span.start);
        }
    }

    #[test]
    fn token_kinds_match_their_surface_predicates(s in "\\PC*") {
        for token in annotate::tokenize(&s) {
            let has_digit = token.surface.chars().any(|c| c.is_numeric());
            let has_alpha = token.surface.chars().any(|c| c.is_alphabetic());
            let all_punct = token
                .surface
                .chars()
                .all(|c| !c.is_alphanumeric() && !c.is_whitespace());
            match token.kind {
                TokenKind::Punctuation => prop_assert!(all_punct),
                TokenKind::Number => prop_assert!(has_digit && !has_alpha),
                TokenKind::Compound => {
                    prop_assert!(split_compound(&token.surface).is_some())
                }
                TokenKind::Word => {
                    prop_assert!(!all_punct);
                    prop_assert!(!(has_digit && !has_alpha));
                    prop_assert!(split_compound(&token.surface).is_none());
                }
                TokenKind::NamedEntity => {
                    prop_assert!(false, "the tokenizer never emits NamedEntity")
                }
            }
        }
    }

    #[test]
    fn sentence_splitting_preserves_non_whitespace(s in "\\PC*") {
        let joined = annotate::split_sentences(&s).concat();
        prop_assert_eq!(no_whitespace(&joined), no_whitespace(&s));
    }

    #[test]
    fn zero_rate_corruption_permutes_within_sentences(
        sentences in prop::collection::vec(
            prop::collection::vec("[a-z]{1,8}", 1..12),
            1..5,
        ),
        seed in any::<u64>(),
    ) {
        let line = sentences
            .iter()
            .map(|words| format!("{}.", words.join(" ")))
            .collect::<Vec<_>>()
            .join(" ");
        let doc = annotate::annotate_document("p:1", en(), &line).unwrap();
        let seeds = SeedContext::new(seed);
        let mut warnings = Default::default();
        let corrupted = noiser::corrupt_document(
            &doc,
            &[],
            &zero_profile(),
            &DEFAULT_NOISE_ORDER,
            &seeds,
            &mut warnings,
        );
        prop_assert_eq!(corrupted.len(), doc.sentences.len());
        for (out, sentence) in corrupted.iter().zip(&doc.sentences) {
            let mut got = out.clone();
            let mut want: Vec<String> =
                sentence.tokens.iter().map(|t| t.surface.clone()).collect();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn removal_survivors_form_a_subsequence(
        words in prop::collection::vec("[a-z]{1,8}", 1..40),
        mean in 0.0f64..1.0,
        std in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut profile = zero_profile();
        profile.remove_mean = mean;
        profile.remove_std = std;
        let original = words.clone();
        let mut tokens = words;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        noiser::remove_words(&mut tokens, &profile, &mut rng);
        prop_assert!(tokens.len() <= original.len());
        prop_assert!(is_subsequence(&tokens, &original));
    }

    #[test]
    fn addition_keeps_originals_and_draws_from_the_pool(
        words in prop::collection::vec("[a-z]{1,8}", 1..40),
        pool in prop::collection::vec("[A-Z]{1,8}", 0..20),
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut profile = zero_profile();
        profile.add_min = 0.1;
        profile.add_max = 0.3;
        // The batch pool is deduplicated before it reaches the operators;
        // mirror that precondition, otherwise duplicate entries make
        // "distinct draws" unobservable on the word level.
        let mut pool = pool;
        pool.sort();
        pool.dedup();
        let pool_refs: Vec<&str> = pool.iter().map(String::as_str).collect();
        let original = words.clone();
        let mut tokens = words;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut warnings = Default::default();
        noiser::add_words(&mut tokens, &pool_refs, &profile, &mut rng, &mut warnings);
        // Uppercase pool vs lowercase words keeps the two distinguishable.
        prop_assert!(is_subsequence(&original, &tokens));
        let added: Vec<&String> = tokens
            .iter()
            .filter(|t| t.chars().next().unwrap().is_uppercase())
            .collect();
        let budget = (original.len() as f64 * profile.add_max).round() as usize;
        prop_assert!(added.len() <= budget.min(pool.len()));
        for word in &added {
            prop_assert!(pool.contains(word));
        }
        // Without replacement: added words are pairwise distinct.
        let mut dedup: Vec<&str> = added.iter().map(|s| s.as_str()).collect();
        dedup.sort();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), added.len());
    }

    #[test]
    fn substitution_preserves_length(
        words in prop::collection::vec("[a-z]{1,8}", 1..40),
        pool in prop::collection::vec("[A-Z]{1,8}", 0..20),
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut profile = zero_profile();
        profile.sub_min = 0.2;
        profile.sub_max = 0.6;
        let pool_refs: Vec<&str> = pool.iter().map(String::as_str).collect();
        let original = words.clone();
        let mut tokens = words;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut warnings = Default::default();
        noiser::substitute_words(&mut tokens, &pool_refs, &profile, &mut rng, &mut warnings);
        prop_assert_eq!(tokens.len(), original.len());
        for (token, orig) in tokens.iter().zip(&original) {
            prop_assert!(token == orig || pool.contains(token));
        }
    }

    #[test]
    fn mlm_splice_reconstructs_any_document(
        words in prop::collection::vec("[a-z]{2,8}", 1..80),
        ratio in 0.01f64..0.9,
        seed in any::<u64>(),
    ) {
        let doc = annotate::annotate_document("p:1", en(), &words.join(" ")).unwrap();
        let params = MlmParams {
            mask_ratio: ratio,
            ..MlmParams::default()
        };
        let pair = mlm_pairs(&doc, &params, &SeedContext::new(seed)).unwrap();

        let mut spans: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut current: Option<&str> = None;
        for token in pair.output.split_whitespace() {
            if token.starts_with("<extra_id_") {
                current = Some(token);
                spans.entry(token).or_default();
            } else {
                spans.get_mut(current.unwrap()).unwrap().push(token);
            }
        }
        let mut spliced: Vec<&str> = Vec::new();
        for token in pair.input.split_whitespace() {
            match spans.get(token) {
                Some(hidden) => spliced.extend(hidden),
                None => spliced.push(token),
            }
        }
        prop_assert_eq!(spliced.join(" "), doc.tokenized_text());
    }

    #[test]
    fn reorder_output_is_always_the_original_stream(
        sentences in prop::collection::vec(
            prop::collection::vec("[a-z]{2,8}", 1..10),
            1..5,
        ),
        ratio in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let line = sentences
            .iter()
            .map(|words| format!("{}.", words.join(" ")))
            .collect::<Vec<_>>()
            .join(" ");
        let doc = annotate::annotate_document("p:1", en(), &line).unwrap();
        let params = MlmParams {
            mask_ratio: ratio,
            ..MlmParams::default()
        };
        let pair = mlm_reorder_pairs(&doc, &params, &SeedContext::new(seed)).unwrap();
        prop_assert_eq!(pair.output, doc.tokenized_text());
        let vocab: std::collections::HashSet<&str> =
            doc.tokens().map(|t| t.surface.as_str()).collect();
        for token in pair.input.split_whitespace() {
            prop_assert!(token == "<mask>" || vocab.contains(token));
        }
    }

    #[test]
    fn lexicon_files_round_trip_with_first_occurrence_order(
        pairs in prop::collection::vec(("[a-zA-Z]{1,6}", "[a-z]{1,6}"), 1..40),
    ) {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for (src, tgt) in &pairs {
            writeln!(file, "{src} {tgt}").unwrap();
        }
        file.flush().unwrap();
        let lex = Lexicon::load(file.path(), en(), LanguageId::new("fr").unwrap()).unwrap();

        let mut expected: HashMap<String, Vec<&str>> = HashMap::new();
        for (src, tgt) in &pairs {
            let list = expected.entry(src.to_lowercase()).or_default();
            if !list.contains(&tgt.as_str()) {
                list.push(tgt);
            }
        }
        for (src, want) in expected {
            prop_assert_eq!(lex.lookup(&src), &want[..]);
        }
        prop_assert_eq!(lex.skipped_lines(), 0);
    }
}
