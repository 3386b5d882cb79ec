use std::collections::BTreeSet;

use super::bpe::SubwordVocabulary;

/// Design seed keywords for the automotive corpus.
pub const AUTOMOTIVE_SEED_KEYWORDS: [&str; 10] = [
    "signal", "read", "write", "run", "runnable", "CAN", "Rte", "call", "controller", "handler",
];

/// Seeds plus every vocabulary subword that contains a seed as a
/// case-insensitive substring.
pub fn expand_design_keywords(seeds: &BTreeSet<String>, vocab: &SubwordVocabulary) -> BTreeSet<String> {
    let lowered: Vec<String> = seeds.iter().map(|s| s.to_lowercase()).collect();
    let mut out = seeds.clone();
    for form in vocab.surface_forms() {
        let lf = form.to_lowercase();
        if lowered.iter().any(|s| lf.contains(s.as_str())) {
            out.insert(form.to_owned());
        }
    }
    out
}
