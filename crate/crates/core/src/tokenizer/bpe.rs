//! Byte-pair encoding over lexer tokens.
//!
//! Merges never cross token boundaries. Each token starts as its characters,
//! with the final character carrying the [`END_OF_WORD`] suffix so decoding
//! can recover token boundaries.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::lexer::TokenSequence;
use crate::error::{Error, Result};

pub const END_OF_WORD: &str = "</w>";
pub const DEFAULT_VOCAB_SIZE: usize = 2048;
pub const DEFAULT_MAX_LEN: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialIds {
    pub pad: u32,
    pub unknown: u32,
    pub mask: u32,
}

impl SpecialIds {
    pub const COUNT: usize = 3;

    pub fn contains(&self, id: u32) -> bool {
        id == self.pad || id == self.unknown || id == self.mask
    }
}

impl Default for SpecialIds {
    fn default() -> Self {
        SpecialIds {
            pad: 0,
            unknown: 1,
            mask: 2,
        }
    }
}

/// On-disk form of the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct VocabFile {
    alphabet: Vec<String>,
    merges: Vec<(String, String)>,
    id_map: BTreeMap<String, u32>,
    special_ids: SpecialIds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct SubwordVocabulary {
    alphabet: Vec<String>,
    merges: Vec<(String, String)>,
    id_map: BTreeMap<String, u32>,
    special_ids: SpecialIds,
    ranks: HashMap<(String, String), usize>,
    by_id: Vec<Option<String>>,
}

impl TryFrom<VocabFile> for SubwordVocabulary {
    type Error = String;

    fn try_from(f: VocabFile) -> std::result::Result<Self, String> {
        let size = SpecialIds::COUNT + f.id_map.len();
        let mut by_id = vec![None; size];
        for (s, &id) in &f.id_map {
            let slot = by_id
                .get_mut(id as usize)
                .ok_or_else(|| format!("id {id} out of range"))?;
            if f.special_ids.contains(id) || slot.is_some() {
                return Err(format!("id {id} assigned twice"));
            }
            *slot = Some(s.clone());
        }
        let ranks = f
            .merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Ok(SubwordVocabulary {
            alphabet: f.alphabet,
            merges: f.merges,
            id_map: f.id_map,
            special_ids: f.special_ids,
            ranks,
            by_id,
        })
    }
}

impl From<SubwordVocabulary> for VocabFile {
    fn from(v: SubwordVocabulary) -> Self {
        VocabFile {
            alphabet: v.alphabet,
            merges: v.merges,
            id_map: v.id_map,
            special_ids: v.special_ids,
        }
    }
}

/// Subword ids of one program after segmentation and truncation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedProgram {
    pub program_id: String,
    pub subword_ids: Vec<u32>,
    pub length: usize,
    pub truncated: bool,
}

impl EncodedProgram {
    pub fn new(program_id: impl Into<String>, subword_ids: Vec<u32>, truncated: bool) -> Self {
        EncodedProgram {
            program_id: program_id.into(),
            length: subword_ids.len(),
            subword_ids,
            truncated,
        }
    }
}

fn initial_symbols(token: &str) -> Vec<String> {
    let mut syms: Vec<String> = token.chars().map(String::from).collect();
    if let Some(last) = syms.last_mut() {
        last.push_str(END_OF_WORD);
    }
    syms
}

impl SubwordVocabulary {
    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn id_map(&self) -> &BTreeMap<String, u32> {
        &self.id_map
    }

    pub fn special_ids(&self) -> SpecialIds {
        self.special_ids
    }

    /// Total number of ids, specials included.
    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn id_of(&self, subword: &str) -> Option<u32> {
        self.id_map.get(subword).copied()
    }

    pub fn subword(&self, id: u32) -> Option<&str> {
        self.by_id.get(id as usize).and_then(|s| s.as_deref())
    }

    /// Learned subwords with the end-of-word marker removed.
    pub fn surface_forms(&self) -> impl Iterator<Item = &str> {
        self.id_map
            .keys()
            .map(|s| s.strip_suffix(END_OF_WORD).unwrap_or(s))
    }

    /// Applies merges in their learned order to a single token.
    pub fn segment(&self, token: &str) -> Vec<String> {
        let mut syms = initial_symbols(token);
        let mut last: Option<usize> = None;
        loop {
            // lowest-ranked pair present that comes after the last applied merge
            let mut best: Option<usize> = None;
            for w in syms.windows(2) {
                if let Some(&r) = self.ranks.get(&(w[0].clone(), w[1].clone())) {
                    if last.is_none_or(|l| r > l) && best.is_none_or(|b| r < b) {
                        best = Some(r);
                    }
                }
            }
            let Some(rank) = best else { break };
            let (left, right) = &self.merges[rank];
            syms = merge_symbols(&syms, left, right);
            last = Some(rank);
        }
        syms
    }

    /// Segments every token, maps symbols to ids, and keeps the first
    /// `max_len` ids.
    pub fn encode(&self, program_id: &str, tokens: &TokenSequence, max_len: usize) -> EncodedProgram {
        let mut cache: HashMap<&str, Vec<u32>> = HashMap::new();
        let mut ids = Vec::new();
        for tok in &tokens.tokens {
            let seg = cache.entry(tok.as_str()).or_insert_with(|| {
                self.segment(tok)
                    .iter()
                    .map(|s| self.id_of(s).unwrap_or(self.special_ids.unknown))
                    .collect()
            });
            ids.extend_from_slice(seg);
        }
        let truncated = ids.len() > max_len;
        ids.truncate(max_len);
        EncodedProgram::new(program_id, ids, truncated)
    }

    /// Rebuilds the token stream from ids. Unknown and special ids decode to
    /// U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        let mut tokens = Vec::new();
        let mut cur = String::new();
        for &id in ids {
            match self.subword(id) {
                Some(s) => match s.strip_suffix(END_OF_WORD) {
                    Some(head) => {
                        cur.push_str(head);
                        tokens.push(std::mem::take(&mut cur));
                    }
                    None => cur.push_str(s),
                },
                None => cur.push('\u{FFFD}'),
            }
        }
        if !cur.is_empty() {
            tokens.push(cur);
        }
        tokens
    }
}

fn merge_symbols(syms: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(syms[i].clone());
            i += 1;
        }
    }
    out
}

/// Result of training including the final segmentation of each distinct
/// training token.
#[derive(Debug, Clone)]
pub struct TrainedVocabulary {
    pub vocab: SubwordVocabulary,
    pub segmentations: BTreeMap<String, Vec<String>>,
}

/// Greedy BPE: repeatedly merges the most frequent adjacent symbol pair
/// (ties go to the lexicographically smallest pair) until the vocabulary
/// reaches `vocab_size` ids or no pair occurs twice.
pub fn train_bpe<'a, I>(streams: I, vocab_size: usize) -> Result<SubwordVocabulary>
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    train_bpe_detailed(streams, vocab_size).map(|t| t.vocab)
}

pub fn train_bpe_detailed<'a, I>(streams: I, vocab_size: usize) -> Result<TrainedVocabulary>
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    let mut freq: BTreeMap<&str, i64> = BTreeMap::new();
    for seq in streams {
        for t in &seq.tokens {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    // symbol interning
    let mut names: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, u32> = HashMap::new();
    let mut intern = |s: String, names: &mut Vec<String>| -> u32 {
        *lookup.entry(s.clone()).or_insert_with(|| {
            names.push(s);
            (names.len() - 1) as u32
        })
    };

    let words: Vec<&str> = freq.keys().copied().collect();
    let counts: Vec<i64> = freq.values().copied().collect();
    let mut symbols: Vec<Vec<u32>> = words
        .iter()
        .map(|w| {
            initial_symbols(w)
                .into_iter()
                .map(|s| intern(s, &mut names))
                .collect()
        })
        .collect();

    let alphabet: BTreeSet<String> = names.iter().cloned().collect();
    let minimum = alphabet.len() + SpecialIds::COUNT;
    if vocab_size < minimum {
        return Err(Error::VocabTooSmall {
            requested: vocab_size,
            minimum,
        });
    }
    let mut learned: BTreeSet<String> = alphabet.clone();
    let mut merges: Vec<(String, String)> = Vec::new();
    let mut merged_order: Vec<String> = Vec::new();

    let mut pair_counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, syms) in symbols.iter().enumerate() {
        for w in syms.windows(2) {
            *pair_counts.entry((w[0], w[1])).or_insert(0) += counts[wi];
            pair_words.entry((w[0], w[1])).or_default().insert(wi);
        }
    }

    while SpecialIds::COUNT + learned.len() < vocab_size {
        let best = pair_counts
            .iter()
            .filter(|(_, &c)| c >= 2)
            .max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    let ka = (&names[pa.0 as usize], &names[pa.1 as usize]);
                    let kb = (&names[pb.0 as usize], &names[pb.1 as usize]);
                    kb.cmp(&ka)
                })
            })
            .map(|(&p, _)| p);
        let Some((l, r)) = best else { break };

        let merged_name = format!("{}{}", names[l as usize], names[r as usize]);
        let merged = intern(merged_name.clone(), &mut names);
        merges.push((names[l as usize].clone(), names[r as usize].clone()));
        if learned.insert(merged_name.clone()) {
            merged_order.push(merged_name);
        }

        let mut affected: Vec<usize> = pair_words
            .get(&(l, r))
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        affected.sort_unstable();
        for wi in affected {
            let old = &symbols[wi];
            if !old.windows(2).any(|w| w[0] == l && w[1] == r) {
                continue;
            }
            let mut new = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && old[i] == l && old[i + 1] == r {
                    new.push(merged);
                    i += 2;
                } else {
                    new.push(old[i]);
                    i += 1;
                }
            }
            for w in old.windows(2) {
                let e = pair_counts.get_mut(&(w[0], w[1])).expect("pair was counted");
                *e -= counts[wi];
                if *e == 0 {
                    pair_counts.remove(&(w[0], w[1]));
                }
            }
            for w in new.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_insert(0) += counts[wi];
                pair_words.entry((w[0], w[1])).or_default().insert(wi);
            }
            symbols[wi] = new;
        }
    }

    let special_ids = SpecialIds::default();
    let mut id_map = BTreeMap::new();
    let mut next = SpecialIds::COUNT as u32;
    for s in alphabet.iter().chain(merged_order.iter()) {
        id_map.insert(s.clone(), next);
        next += 1;
    }
    let vocab = SubwordVocabulary::try_from(VocabFile {
        alphabet: alphabet.into_iter().collect(),
        merges,
        id_map,
        special_ids,
    })
    .expect("ids assigned sequentially");

    let segmentations = words
        .iter()
        .zip(&symbols)
        .map(|(w, s)| {
            (
                (*w).to_owned(),
                s.iter().map(|&i| names[i as usize].clone()).collect(),
            )
        })
        .collect();
    Ok(TrainedVocabulary {
        vocab,
        segmentations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::lex_c;

    /// Counts adjacent symbol pairs by brute force over the expanded word list.
    fn brute_force_best_pair(words: &[&str]) -> (String, String) {
        let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
        for w in words {
            let s = initial_symbols(w);
            for i in 0..s.len().saturating_sub(1) {
                *counts.entry((s[i].clone(), s[i + 1].clone())).or_default() += 1;
            }
        }
        let max = *counts.values().max().unwrap();
        counts.into_iter().find(|(_, c)| *c == max).unwrap().0
    }

    #[test]
    fn single_merge_budget_picks_most_frequent_pair() {
        let seq = TokenSequence::from_tokens(["aaab"]);
        // alphabet {a, b</w>} plus specials plus one merge
        let trained = train_bpe([&seq], SpecialIds::COUNT + 2 + 1).unwrap();
        assert_eq!(trained.alphabet(), ["a", "b</w>"]);
        assert_eq!(trained.merges(), [("a".to_string(), "a".to_string())]);
        assert_eq!(brute_force_best_pair(&["aaab"]), ("a".into(), "a".into()));
    }

    #[test]
    fn zero_budget_is_identity() {
        let seq = TokenSequence::from_tokens(["abc", "abc"]);
        let v = train_bpe([&seq], SpecialIds::COUNT + 3).unwrap();
        assert!(v.merges().is_empty());
        assert_eq!(v.segment("abc"), ["a", "b", "c</w>"]);
        assert!(matches!(
            train_bpe([&seq], SpecialIds::COUNT + 2),
            Err(Error::VocabTooSmall { .. })
        ));
    }

    #[test]
    fn empty_corpus_rejected() {
        let seq = TokenSequence::default();
        assert!(matches!(train_bpe([&seq], 100), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn ties_break_lexicographically() {
        // (a,b) and (c,d) both occur twice
        let seq = TokenSequence::from_tokens(["cd", "ab", "cd", "ab"]);
        let v = train_bpe([&seq], 100).unwrap();
        assert_eq!(v.merges()[0], ("a".to_string(), "b</w>".to_string()));
        assert_eq!(v.merges()[1], ("c".to_string(), "d</w>".to_string()));
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        let seq = TokenSequence::from_tokens(["xy", "xy", "pq"]);
        let v = train_bpe([&seq], 1000).unwrap();
        assert_eq!(v.merges().len(), 1);
    }

    #[test]
    fn segmentation_matches_training() {
        let src = "int controller_state = CTRL_IDLE; void Controller_Run(void) { controller_state++; } /* controller */";
        let seq = lex_c(src);
        let trained = train_bpe_detailed([&seq], 60).unwrap();
        for (word, seg) in &trained.segmentations {
            assert_eq!(&trained.vocab.segment(word), seg, "token {word:?}");
        }
    }

    #[test]
    fn encode_decode_round_trip_and_truncation() {
        let seq = lex_c("int a = 1; a += 2; return a;");
        let v = train_bpe([&seq], 40).unwrap();
        let enc = v.encode("p", &seq, DEFAULT_MAX_LEN);
        assert!(!enc.truncated);
        assert_eq!(enc.length, enc.subword_ids.len());
        assert_eq!(v.decode(&enc.subword_ids), seq.tokens);

        let short = v.encode("p", &seq, 3);
        assert!(short.truncated);
        assert_eq!(short.length, 3);
        assert_eq!(short.subword_ids, enc.subword_ids[..3]);
    }

    #[test]
    fn unknown_symbols_map_to_unknown_id() {
        let seq = lex_c("aa bb");
        let v = train_bpe([&seq], 20).unwrap();
        let other = TokenSequence::from_tokens(["zz"]);
        let enc = v.encode("q", &other, 10);
        assert!(enc.subword_ids.iter().all(|&i| i == v.special_ids().unknown));
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let seq = lex_c("signal_read(); signal_write(); Rte_Read_signal();");
        let v = train_bpe([&seq], 50).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: SubwordVocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.segment("signal_read"), v.segment("signal_read"));
    }
}
