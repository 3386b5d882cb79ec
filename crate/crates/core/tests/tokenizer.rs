use std::collections::BTreeSet;

use proptest::prelude::*;

use chcomply::corpus::fixture::{lexing_fixture, planted_corpus, PlantedConfig};
use chcomply::tokenizer::{
    expand_design_keywords, lex_c, train_bpe, AUTOMOTIVE_SEED_KEYWORDS, DEFAULT_MAX_LEN,
};

#[test]
fn lexing_fixture_round_trips() {
    for f in lexing_fixture() {
        let seq = lex_c(&f.text);
        assert_eq!(seq.join(), f.text, "{}", f.path);
        assert_eq!(seq.separators.len(), seq.tokens.len() + 1);
    }
}

#[test]
fn decode_inverts_encode_on_planted_corpus() {
    let corpus = planted_corpus(&PlantedConfig::default());
    let streams: Vec<_> = corpus.files.iter().map(|f| lex_c(&f.text)).collect();
    let vocab = train_bpe(&streams, 512).unwrap();
    for (f, s) in corpus.files.iter().zip(&streams) {
        let enc = vocab.encode(&f.path, s, DEFAULT_MAX_LEN);
        assert!(!enc.truncated);
        assert_eq!(vocab.decode(&enc.subword_ids), s.tokens, "{}", f.path);
    }
}

/// Independent restatement: a surface form is a keyword iff some seed
/// occurs in it ignoring case.
#[test]
fn keyword_expansion_matches_substring_oracle() {
    let corpus = planted_corpus(&PlantedConfig::default());
    let streams: Vec<_> = corpus.files.iter().map(|f| lex_c(&f.text)).collect();
    let vocab = train_bpe(&streams, 512).unwrap();
    let seeds: BTreeSet<String> = AUTOMOTIVE_SEED_KEYWORDS.iter().map(|s| s.to_string()).collect();
    let got = expand_design_keywords(&seeds, &vocab);
    let mut want = seeds.clone();
    for form in vocab.surface_forms() {
        let lower = form.to_ascii_lowercase();
        if seeds.iter().any(|s| lower.contains(&s.to_ascii_lowercase())) {
            want.insert(form.to_string());
        }
    }
    assert_eq!(got, want);
    assert!(got.len() > seeds.len());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn lexing_is_lossless_for_ascii(src in "[ -~\n\t]{0,200}") {
        prop_assert_eq!(lex_c(&src).join(), src);
    }

    #[test]
    fn bpe_is_deterministic_and_bounded(words in proptest::collection::vec("[a-z_]{1,8}", 1..60), size in 40usize..200) {
        let seq = chcomply::tokenizer::TokenSequence::from_tokens(words.clone());
        match (train_bpe([&seq], size), train_bpe([&seq], size)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                prop_assert!(a.len() <= size);
                let enc = a.encode("p", &seq, DEFAULT_MAX_LEN);
                prop_assert_eq!(a.decode(&enc.subword_ids), words);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "nondeterministic outcome"),
        }
    }
}
