use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, PatternInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryPair {
    /// Controller candidate.
    pub x: String,
    /// Handler candidate.
    pub y: String,
    pub polarity: Polarity,
    pub origin_instance: Option<String>,
}

impl QueryPair {
    pub fn positive(x: impl Into<String>, y: impl Into<String>, instance: impl Into<String>) -> Self {
        QueryPair {
            x: x.into(),
            y: y.into(),
            polarity: Polarity::Positive,
            origin_instance: Some(instance.into()),
        }
    }

    pub fn negative(x: impl Into<String>, y: impl Into<String>) -> Self {
        QueryPair {
            x: x.into(),
            y: y.into(),
            polarity: Polarity::Negative,
            origin_instance: None,
        }
    }

    /// Sort key used when results are written: positives first, then by ids.
    pub fn sort_key(&self) -> (Polarity, &str, &str) {
        (self.polarity, &self.x, &self.y)
    }
}

/// How much of the registry a positive query removes from its own benchmark.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaveOut {
    /// Drop every pair unrolled from the query's origin instance.
    #[default]
    Instance,
    /// Drop only the queried pair itself.
    Pair,
}

/// Cartesian unrolling of each instance into (controller program, handler program) pairs.
pub fn unroll_instances(corpus: &Corpus, registry: &[PatternInstance]) -> Result<Vec<QueryPair>> {
    if registry.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    let mut out = Vec::new();
    for inst in registry {
        let c = corpus
            .component(&inst.controller_swc)
            .ok_or_else(|| Error::UnknownInstance(inst.instance_id.clone()))?;
        let h = corpus
            .component(&inst.handler_swc)
            .ok_or_else(|| Error::UnknownInstance(inst.instance_id.clone()))?;
        for cp in &c.program_ids {
            for hp in &h.program_ids {
                out.push(QueryPair::positive(cp, hp, &inst.instance_id));
            }
        }
    }
    Ok(out)
}

/// Every program that takes part in at least one unrolled pair.
pub fn unrolled_members(corpus: &Corpus, registry: &[PatternInstance]) -> BTreeSet<String> {
    registry
        .iter()
        .flat_map(|i| [&i.controller_swc, &i.handler_swc])
        .filter_map(|swc| corpus.component(swc))
        .flat_map(|c| c.program_ids.iter().cloned())
        .collect()
}

/// Draws `n` distinct ordered pairs of programs that appear nowhere in the
/// unrolled registry.
pub fn sample_negative_queries(
    corpus: &Corpus,
    registry: &[PatternInstance],
    n: usize,
    seed: u64,
) -> Result<Vec<QueryPair>> {
    let members = unrolled_members(corpus, registry);
    let eligible: Vec<&str> = corpus
        .programs()
        .iter()
        .map(|p| p.id.as_str())
        .filter(|id| !members.contains(*id))
        .collect();
    let m = eligible.len();
    let total = m.saturating_mul(m.saturating_sub(1));
    if m < 2 || n > total {
        return Err(Error::Insufficient(format!(
            "{n} negative queries requested but only {m} programs outside the unrolled set ({total} ordered pairs)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair_at = |k: usize| {
        let i = k / (m - 1);
        let mut j = k % (m - 1);
        if j >= i {
            j += 1;
        }
        (i, j)
    };
    let picks: Vec<(usize, usize)> = if n.saturating_mul(2) > total {
        index::sample(&mut rng, total, n).into_iter().map(pair_at).collect()
    } else {
        let mut seen = HashSet::with_capacity(n);
        let mut picks = Vec::with_capacity(n);
        while picks.len() < n {
            let k = rng.gen_range(0..total);
            if seen.insert(k) {
                picks.push(pair_at(k));
            }
        }
        picks
    };
    Ok(picks
        .into_iter()
        .map(|(i, j)| QueryPair::negative(eligible[i], eligible[j]))
        .collect())
}

/// Instances that may contribute to the benchmark for `query`.
pub fn benchmark_instances_for(
    query: &QueryPair,
    registry: &[PatternInstance],
) -> Result<Vec<PatternInstance>> {
    match query.polarity {
        super::Polarity::Negative => Ok(registry.to_vec()),
        super::Polarity::Positive => {
            let origin = query
                .origin_instance
                .as_deref()
                .ok_or_else(|| Error::UnknownInstance("<none>".into()))?;
            if !registry.iter().any(|i| i.instance_id == origin) {
                return Err(Error::UnknownInstance(origin.to_owned()));
            }
            Ok(registry
                .iter()
                .filter(|i| i.instance_id != origin)
                .cloned()
                .collect())
        }
    }
}

/// Program pairs forming the benchmark for `query` under the leave-out rule.
pub fn benchmark_pairs_for(
    corpus: &Corpus,
    query: &QueryPair,
    registry: &[PatternInstance],
    mode: LeaveOut,
) -> Result<Vec<(String, String)>> {
    let instances = match (query.polarity, mode) {
        (Polarity::Positive, LeaveOut::Pair) => {
            // validates origin, keeps the full registry
            benchmark_instances_for(query, registry)?;
            registry.to_vec()
        }
        _ => benchmark_instances_for(query, registry)?,
    };
    if instances.is_empty() {
        return Err(Error::EmptyBenchmark);
    }
    let pairs: Vec<(String, String)> = unroll_instances(corpus, &instances)?
        .into_iter()
        .filter(|p| !(mode == LeaveOut::Pair && p.x == query.x && p.y == query.y))
        .map(|p| (p.x, p.y))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyBenchmark);
    }
    Ok(pairs)
}
