//! Benchmark offsets, handler prediction, cosine ranking and the compliance
//! label.

mod output;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{benchmark_pairs_for, Corpus, LeaveOut, PatternInstance, Polarity, QueryPair};
use crate::embedder::{EmbeddingStore, EmbeddingVector};
use crate::error::{Error, Result};
use crate::scalar::{dot, l2_norm, Scalar};

pub use output::{read_results_jsonl, results_to_csv_string, results_to_jsonl_string, ResultRecord};

/// Cosine similarity. Zero vectors are an error rather than similarity 0.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == T::zero() || nb == T::zero() {
        return Err(Error::ZeroVector("cosine operand".into()));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Mean controller-to-handler offset over a set of program pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct JointnessBenchmark<T> {
    pub r: Vec<T>,
    /// (controller, handler) program ids.
    pub source_pairs: Vec<(String, String)>,
    pub store_fingerprint: String,
}

pub fn compute_benchmark<T: Scalar>(
    pairs: &[(String, String)],
    store: &EmbeddingStore<T>,
) -> Result<JointnessBenchmark<T>> {
    if pairs.is_empty() {
        return Err(Error::EmptyBenchmark);
    }
    let mut r = vec![T::zero(); store.dim()];
    for (c, h) in pairs {
        let (ec, eh) = (store.require(c)?.values(), store.require(h)?.values());
        for ((acc, &hv), &cv) in r.iter_mut().zip(eh).zip(ec) {
            *acc += hv - cv;
        }
    }
    let n = T::lit(pairs.len() as f64);
    r.iter_mut().for_each(|v| *v /= n);
    Ok(JointnessBenchmark {
        r,
        source_pairs: pairs.to_vec(),
        store_fingerprint: store.fingerprint().to_owned(),
    })
}

/// Benchmark from every pair unrolled out of `instances`.
pub fn compute_benchmark_for_instances<T: Scalar>(
    corpus: &Corpus,
    instances: &[PatternInstance],
    store: &EmbeddingStore<T>,
) -> Result<JointnessBenchmark<T>> {
    if instances.is_empty() {
        return Err(Error::EmptyBenchmark);
    }
    let pairs: Vec<(String, String)> = crate::corpus::unroll_instances(corpus, instances)?
        .into_iter()
        .map(|q| (q.x, q.y))
        .collect();
    compute_benchmark(&pairs, store)
}

/// `e_x + r`, deliberately not re-normalized.
pub fn predict_handler<T: Scalar>(ex: &EmbeddingVector<T>, r: &[T]) -> Result<Vec<T>> {
    if ex.dim() != r.len() {
        return Err(Error::DimensionMismatch {
            expected: ex.dim(),
            got: r.len(),
        });
    }
    Ok(ex.values().iter().zip(r).map(|(&a, &b)| a + b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalBoundaries {
    pub b1: usize,
    pub b2: usize,
}

impl Default for IntervalBoundaries {
    fn default() -> Self {
        IntervalBoundaries { b1: 100, b2: 1000 }
    }
}

/// 1 for `k <= b1`, 2 for `b1 < k <= b2`, 3 beyond.
pub fn assign_interval(k: usize, boundaries: IntervalBoundaries) -> Result<u8> {
    if k == 0 {
        return Err(Error::NonPositiveRank(k));
    }
    Ok(if k <= boundaries.b1 {
        1
    } else if k <= boundaries.b2 {
        2
    } else {
        3
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssessConfig {
    /// Fraction of the corpus size that a rank must fall within.
    pub threshold_ratio: f64,
    pub boundaries: IntervalBoundaries,
}

impl Default for AssessConfig {
    fn default() -> Self {
        AssessConfig {
            threshold_ratio: 0.1,
            boundaries: IntervalBoundaries::default(),
        }
    }
}

/// Largest rank still labelled compliant: `max(1, floor(ratio * n))`.
/// The small epsilon keeps `0.1 * 5000` from flooring to 499.
pub fn label_threshold(corpus_size: usize, ratio: f64) -> usize {
    ((ratio * corpus_size as f64 + 1e-9).floor() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentResult {
    pub query: QueryPair,
    pub similarity: f64,
    pub rank: usize,
    pub label: bool,
    pub interval: u8,
    pub candidates_considered: usize,
}

/// Ranks `query.y` among every stored program except `query.x` by cosine
/// to `e_x + r`. Equal similarities are ordered by program id.
pub fn assess<T: Scalar>(
    query: &QueryPair,
    benchmark: &JointnessBenchmark<T>,
    store: &EmbeddingStore<T>,
    config: &AssessConfig,
) -> Result<AssessmentResult> {
    if query.x == query.y {
        return Err(Error::InvalidArgument(format!("query pairs {} with itself", query.x)));
    }
    if benchmark.r.len() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            got: benchmark.r.len(),
        });
    }
    let ex = store.require(&query.x)?;
    let ey = store.require(&query.y)?;
    let predicted = predict_handler(ex, &benchmark.r)?;
    if l2_norm(&predicted) == T::zero() {
        return Err(Error::ZeroVector(format!("prediction for {}", query.x)));
    }
    let target = cosine(ey.values(), &predicted)?;
    let mut ahead = 0usize;
    let mut candidates = 0usize;
    for (id, ez) in store.iter() {
        if id == query.x {
            continue;
        }
        candidates += 1;
        if id == query.y {
            continue;
        }
        let s = cosine(ez.values(), &predicted)?;
        if s > target || (s == target && id < query.y.as_str()) {
            ahead += 1;
        }
    }
    let rank = ahead + 1;
    Ok(AssessmentResult {
        query: query.clone(),
        similarity: target.to_f64_lossy(),
        rank,
        label: rank <= label_threshold(store.len(), config.threshold_ratio),
        interval: assign_interval(rank, config.boundaries)?,
        candidates_considered: candidates,
    })
}

/// `cos(e_c2 + (e_h1 - e_c1), e_h2)`.
pub fn parallelogram_check<T: Scalar>(
    pair1: (&str, &str),
    pair2: (&str, &str),
    store: &EmbeddingStore<T>,
) -> Result<T> {
    let (c1, h1) = (store.require(pair1.0)?, store.require(pair1.1)?);
    let (c2, h2) = (store.require(pair2.0)?, store.require(pair2.1)?);
    let offset: Vec<T> = h1
        .values()
        .iter()
        .zip(c1.values())
        .map(|(&h, &c)| h - c)
        .collect();
    let predicted = predict_handler(c2, &offset)?;
    cosine(&predicted, h2.values())
}

/// Where the benchmark for each query comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum BenchmarkSource<'a> {
    /// Registry minus the query's own instance (or pair).
    LeaveOut(LeaveOut),
    /// A fixed set of golden instances; positives drawn from them are skipped.
    Golden(&'a [PatternInstance]),
}

/// Assesses every query, building each benchmark from the registry under
/// `source`. Benchmarks are cached per excluded instance (or pair).
/// Results come back sorted by [`QueryPair::sort_key`].
pub fn assess_all<T: Scalar>(
    queries: &[QueryPair],
    corpus: &Corpus,
    store: &EmbeddingStore<T>,
    source: &BenchmarkSource<'_>,
    config: &AssessConfig,
) -> Result<Vec<AssessmentResult>> {
    let registry = corpus.instances();
    let mut cache: BTreeMap<String, JointnessBenchmark<T>> = BTreeMap::new();
    let mut jobs: Vec<(&QueryPair, String)> = Vec::with_capacity(queries.len());
    for q in queries {
        let key = match source {
            BenchmarkSource::Golden(golden) => {
                let from_golden = q.polarity == Polarity::Positive
                    && golden
                        .iter()
                        .any(|g| Some(g.instance_id.as_str()) == q.origin_instance.as_deref());
                if from_golden {
                    continue;
                }
                if !cache.contains_key("golden") {
                    let b = compute_benchmark_for_instances(corpus, golden, store)?;
                    cache.insert("golden".into(), b);
                }
                "golden".to_owned()
            }
            BenchmarkSource::LeaveOut(mode) => {
                let key = match (q.polarity, mode) {
                    (Polarity::Negative, _) => "*".to_owned(),
                    (Polarity::Positive, LeaveOut::Instance) => {
                        format!("instance:{}", q.origin_instance.as_deref().unwrap_or(""))
                    }
                    (Polarity::Positive, LeaveOut::Pair) => format!("pair:{}\u{0}{}", q.x, q.y),
                };
                if !cache.contains_key(&key) {
                    let pairs = benchmark_pairs_for(corpus, q, registry, *mode)?;
                    cache.insert(key.clone(), compute_benchmark(&pairs, store)?);
                }
                key
            }
        };
        jobs.push((q, key));
    }
    let mut results: Vec<AssessmentResult> = jobs
        .par_iter()
        .map(|(q, key)| assess(q, &cache[key], store, config))
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| a.query.sort_key().cmp(&b.query.sort_key()));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(v: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::normalize(v.to_vec(), "t").unwrap()
    }

    fn store(entries: &[(&str, &[f64])]) -> EmbeddingStore<f64> {
        let mut s = EmbeddingStore::new(entries[0].1.len(), "fp");
        for (id, v) in entries {
            s.insert(*id, unit(v)).unwrap();
        }
        s
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector(_))));
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn benchmark_mean_of_offsets() {
        let mut s = EmbeddingStore::<f64>::new(2, "fp");
        // offsets (0,2) and (2,0) with unit vectors: go through raw values
        s.insert("c1", EmbeddingVector::from_unit(vec![1.0, 0.0]).unwrap()).unwrap();
        s.insert("h1", EmbeddingVector::from_unit(vec![-1.0, 0.0]).unwrap()).unwrap();
        s.insert("c2", EmbeddingVector::from_unit(vec![0.0, -1.0]).unwrap()).unwrap();
        s.insert("h2", EmbeddingVector::from_unit(vec![0.0, 1.0]).unwrap()).unwrap();
        let pairs = vec![("c1".to_owned(), "h1".to_owned()), ("c2".to_owned(), "h2".to_owned())];
        let b = compute_benchmark(&pairs, &s).unwrap();
        assert_eq!(b.r, vec![-1.0, 1.0]);
        let single = compute_benchmark(&pairs[..1], &s).unwrap();
        assert_eq!(single.r, vec![-2.0, 0.0]);
        assert!(matches!(compute_benchmark(&[], &s), Err(Error::EmptyBenchmark)));
    }

    #[test]
    fn prediction_is_plain_addition() {
        let ex = EmbeddingVector::from_unit(vec![1.0, 0.0]).unwrap();
        assert_eq!(predict_handler(&ex, &[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(predict_handler(&ex, &[-1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn intervals() {
        let b = IntervalBoundaries::default();
        assert_eq!(assign_interval(1, b).unwrap(), 1);
        assert_eq!(assign_interval(100, b).unwrap(), 1);
        assert_eq!(assign_interval(101, b).unwrap(), 2);
        assert_eq!(assign_interval(1000, b).unwrap(), 2);
        assert_eq!(assign_interval(4999, b).unwrap(), 3);
        assert!(matches!(assign_interval(0, b), Err(Error::NonPositiveRank(0))));
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(label_threshold(5000, 0.1), 500);
        assert!(100 <= label_threshold(5000, 0.1));
        assert!(1500 > label_threshold(5000, 0.1));
        assert_eq!(label_threshold(5, 0.1), 1);
        assert_eq!(label_threshold(40, 0.1), 4);
    }

    #[test]
    fn ties_follow_program_id() {
        // b and d are identical, so they tie for every prediction
        let s = store(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("b", &[0.0, 1.0, 0.0]),
            ("c", &[0.0, 0.0, 1.0]),
            ("d", &[0.0, 1.0, 0.0]),
        ]);
        let bench = JointnessBenchmark {
            r: vec![-1.0, 1.0, 0.0],
            source_pairs: vec![],
            store_fingerprint: "fp".into(),
        };
        let to_b = assess(&QueryPair::negative("a", "b"), &bench, &s, &AssessConfig::default()).unwrap();
        let to_d = assess(&QueryPair::negative("a", "d"), &bench, &s, &AssessConfig::default()).unwrap();
        assert_eq!((to_b.rank, to_d.rank), (1, 2));
        assert_eq!(to_b.candidates_considered, 3);
        assert!((to_b.similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parallelogram_degenerate_self_check() {
        let s = store(&[("c", &[1.0, 2.0]), ("h", &[-3.0, 1.0])]);
        assert!((parallelogram_check(("c", "h"), ("c", "h"), &s).unwrap() - 1.0).abs() < 1e-12);
        assert!(parallelogram_check(("c", "h"), ("c", "zz"), &s).is_err());
    }

    proptest! {
        #[test]
        fn benchmark_union_is_weighted_mean(
            raw in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 8),
            split in 1usize..3,
        ) {
            prop_assume!(raw.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)));
            let mut s = EmbeddingStore::new(4, "fp");
            for (i, v) in raw.iter().enumerate() {
                s.insert(format!("p{i}"), unit(v)).unwrap();
            }
            let pairs: Vec<(String, String)> =
                (0..4).map(|i| (format!("p{}", 2 * i), format!("p{}", 2 * i + 1))).collect();
            let all = compute_benchmark(&pairs, &s).unwrap();
            let a = compute_benchmark(&pairs[..split], &s).unwrap();
            let b = compute_benchmark(&pairs[split..], &s).unwrap();
            for k in 0..4 {
                let w = (split as f64 * a.r[k] + (4 - split) as f64 * b.r[k]) / 4.0;
                prop_assert!((all.r[k] - w).abs() < 1e-12);
            }
        }

        #[test]
        fn rank_bounds_and_monotonicity(
            raw in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 6),
            r in proptest::collection::vec(-0.5f64..0.5, 3),
        ) {
            prop_assume!(raw.iter().all(|v| v.iter().any(|x| x.abs() > 1e-2)));
            let mut s = EmbeddingStore::new(3, "fp");
            for (i, v) in raw.iter().enumerate() {
                s.insert(format!("p{i}"), unit(v)).unwrap();
            }
            let bench = JointnessBenchmark { r: r.clone(), source_pairs: vec![], store_fingerprint: "fp".into() };
            let q = QueryPair::negative("p0", "p1");
            let Ok(res) = assess(&q, &bench, &s, &AssessConfig::default()) else {
                return Ok(());
            };
            prop_assert!(res.rank >= 1 && res.rank <= s.len() - 1);
            prop_assert_eq!(res.candidates_considered, s.len() - 1);
            // move p1 onto the prediction: its rank can only improve
            let pred = predict_handler(s.require("p0").unwrap(), &r).unwrap();
            if let Ok(v) = EmbeddingVector::normalize(pred, "pred") {
                let mut moved = s.clone();
                moved.insert("p1", v).unwrap();
                let again = assess(&q, &bench, &moved, &AssessConfig::default()).unwrap();
                prop_assert!(again.rank <= res.rank);
                prop_assert_eq!(assess(&q, &bench, &moved, &AssessConfig::default()).unwrap(), again);
            }
        }
    }
}
