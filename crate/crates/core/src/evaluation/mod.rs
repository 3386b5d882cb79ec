//! Confusion matrices, metrics, rank histograms and embedder comparison.

pub mod reference;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assessor::{assign_interval, AssessmentResult, IntervalBoundaries};
use crate::corpus::Polarity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, fp: usize, tn: usize) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    pub fn total(&self) -> usize {
        self.positives() + self.negatives()
    }

    pub fn to_csv_string(&self) -> String {
        format!("tp,fn,fp,tn\n{},{},{},{}\n", self.tp, self.fn_, self.fp, self.tn)
    }
}

fn check_polarity(results: &[AssessmentResult], want: Polarity, what: &str) -> Result<()> {
    if results.iter().any(|r| r.query.polarity != want) {
        return Err(Error::MixedPolarity(what.to_owned()));
    }
    Ok(())
}

/// Positives labelled compliant are true positives; negatives labelled
/// compliant are false positives.
pub fn confusion(
    positives: &[AssessmentResult],
    negatives: &[AssessmentResult],
) -> Result<ConfusionMatrix> {
    check_polarity(positives, Polarity::Positive, "positive")?;
    check_polarity(negatives, Polarity::Negative, "negative")?;
    let tp = positives.iter().filter(|r| r.label).count();
    let fp = negatives.iter().filter(|r| r.label).count();
    Ok(ConfusionMatrix::new(tp, positives.len() - tp, fp, negatives.len() - fp))
}

/// Splits a mixed result list by polarity.
pub fn split_by_polarity(
    results: &[AssessmentResult],
) -> (Vec<AssessmentResult>, Vec<AssessmentResult>) {
    results
        .iter()
        .cloned()
        .partition(|r| r.query.polarity == Polarity::Positive)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UndefinedTag {
    #[default]
    Undefined,
}

/// A ratio whose denominator may be zero. Serializes as a number or the
/// string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ratio {
    Defined(f64),
    Undefined(UndefinedTag),
}

impl Ratio {
    pub const UNDEFINED: Ratio = Ratio::Undefined(UndefinedTag::Undefined);

    pub fn of(num: f64, den: f64) -> Ratio {
        if den == 0.0 {
            Ratio::UNDEFINED
        } else {
            Ratio::Defined(num / den)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Defined(v) => Some(v),
            Ratio::Undefined(_) => None,
        }
    }

    pub fn is_defined(self) -> bool {
        self.value().is_some()
    }

    fn show(self) -> String {
        match self {
            Ratio::Defined(v) => format!("{v:.3}"),
            Ratio::Undefined(_) => "undefined".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Recall,
    Precision,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Recall, Metric::Precision, Metric::F1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::F1 => "f1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub embedder: String,
    /// Digest of the query set, so reports over different queries are not compared.
    pub query_set_id: String,
    pub confusion: ConfusionMatrix,
    pub accuracy: Ratio,
    pub recall: Ratio,
    pub precision: Ratio,
    pub f1: Ratio,
}

impl MetricsReport {
    pub fn get(&self, m: Metric) -> Ratio {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Recall => self.recall,
            Metric::Precision => self.precision,
            Metric::F1 => self.f1,
        }
    }

    pub fn to_text(&self) -> String {
        let cm = &self.confusion;
        let mut s = String::new();
        let _ = writeln!(s, "embedder: {}", self.embedder);
        let _ = writeln!(s, "query set: {}", self.query_set_id);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10}{:>8}{:>8}", "", "True", "False");
        let _ = writeln!(s, "{:<10}{:>8}{:>8}", "L+", cm.tp, cm.fn_);
        let _ = writeln!(s, "{:<10}{:>8}{:>8}", "L-", cm.fp, cm.tn);
        let _ = writeln!(s);
        for m in Metric::ALL {
            let _ = writeln!(s, "{:<10}{:>10}", m.name(), self.get(m).show());
        }
        s
    }
}

/// Accuracy, recall, precision and F1 from a confusion matrix. Needs at
/// least one positive and one negative sample.
pub fn metrics(
    cm: &ConfusionMatrix,
    embedder: impl Into<String>,
    query_set_id: impl Into<String>,
) -> Result<MetricsReport> {
    if cm.positives() == 0 || cm.negatives() == 0 {
        return Err(Error::InvalidArgument(
            "metrics need at least one positive and one negative sample".into(),
        ));
    }
    let (tp, fn_, fp, tn) = (cm.tp as f64, cm.fn_ as f64, cm.fp as f64, cm.tn as f64);
    let recall = Ratio::of(tp, tp + fn_);
    let precision = Ratio::of(tp, tp + fp);
    let f1 = match (precision.value(), recall.value()) {
        (Some(p), Some(r)) => Ratio::of(2.0 * p * r, p + r),
        _ => Ratio::UNDEFINED,
    };
    Ok(MetricsReport {
        embedder: embedder.into(),
        query_set_id: query_set_id.into(),
        confusion: *cm,
        accuracy: Ratio::of(tp + tn, tp + tn + fp + fn_),
        recall,
        precision,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDistribution {
    pub boundaries: IntervalBoundaries,
    pub positive_ranks: Vec<usize>,
    pub negative_ranks: Vec<usize>,
    /// Counts per interval (index 0 is interval 1).
    pub positive_counts: [usize; 3],
    pub negative_counts: [usize; 3],
    /// Negatives ranked into interval 1; ideally zero. Reported, never enforced.
    pub negatives_in_interval_1: usize,
}

impl RankDistribution {
    pub fn counts(&self, polarity: Polarity) -> [usize; 3] {
        match polarity {
            Polarity::Positive => self.positive_counts,
            Polarity::Negative => self.negative_counts,
        }
    }

    pub fn interval_totals(&self) -> BTreeMap<u8, usize> {
        (0..3)
            .map(|i| (i as u8 + 1, self.positive_counts[i] + self.negative_counts[i]))
            .collect()
    }
}

pub fn rank_distribution(
    results: &[AssessmentResult],
    boundaries: IntervalBoundaries,
) -> Result<RankDistribution> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no assessment results".into()));
    }
    let mut d = RankDistribution {
        boundaries,
        positive_ranks: Vec::new(),
        negative_ranks: Vec::new(),
        positive_counts: [0; 3],
        negative_counts: [0; 3],
        negatives_in_interval_1: 0,
    };
    for r in results {
        let bucket = assign_interval(r.rank, boundaries)? as usize - 1;
        match r.query.polarity {
            Polarity::Positive => {
                d.positive_ranks.push(r.rank);
                d.positive_counts[bucket] += 1;
            }
            Polarity::Negative => {
                d.negative_ranks.push(r.rank);
                d.negative_counts[bucket] += 1;
            }
        }
    }
    d.negatives_in_interval_1 = d.negative_counts[0];
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub values: Vec<Ratio>,
    /// Consecutive differences; undefined when either side is.
    pub deltas: Vec<Ratio>,
    pub non_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub embedders: Vec<String>,
    pub query_set_id: String,
    pub metrics: Vec<MetricComparison>,
    /// Every metric is defined and non-decreasing along the embedder order.
    pub trend_holds: bool,
}

impl ComparisonReport {
    pub fn metric(&self, m: Metric) -> &MetricComparison {
        self.metrics
            .iter()
            .find(|c| c.metric == m)
            .expect("all metrics present")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "metric");
        for e in &self.embedders {
            let _ = write!(s, "{e:>12}");
        }
        for i in 1..self.embedders.len() {
            let _ = write!(s, "{:>12}", format!("d{i}"));
        }
        let _ = writeln!(s);
        for c in &self.metrics {
            let _ = write!(s, "{:<12}", c.metric.name());
            for v in c.values.iter().chain(&c.deltas) {
                let _ = write!(s, "{:>12}", v.show());
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "monotone trend: {}", self.trend_holds);
        s
    }
}

/// Side-by-side metrics with deltas between consecutive embedders.
pub fn compare_embedders(reports: &[MetricsReport]) -> Result<ComparisonReport> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument("need at least two reports".into()));
    }
    let id = &reports[0].query_set_id;
    if let Some(r) = reports.iter().find(|r| &r.query_set_id != id) {
        return Err(Error::MismatchedQuerySets(format!(
            "{} used {} but {} used {}",
            reports[0].embedder, id, r.embedder, r.query_set_id
        )));
    }
    let metrics: Vec<MetricComparison> = Metric::ALL
        .iter()
        .map(|&m| {
            let values: Vec<Ratio> = reports.iter().map(|r| r.get(m)).collect();
            let deltas: Vec<Ratio> = values
                .windows(2)
                .map(|w| match (w[0].value(), w[1].value()) {
                    (Some(a), Some(b)) => Ratio::Defined(b - a),
                    _ => Ratio::UNDEFINED,
                })
                .collect();
            let non_decreasing = deltas.iter().all(|d| d.value().is_some_and(|v| v >= 0.0));
            MetricComparison {
                metric: m,
                values,
                deltas,
                non_decreasing,
            }
        })
        .collect();
    Ok(ComparisonReport {
        embedders: reports.iter().map(|r| r.embedder.clone()).collect(),
        query_set_id: id.clone(),
        trend_holds: metrics.iter().all(|m| m.non_decreasing),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QueryPair;
    use proptest::prelude::*;

    fn result(polarity: Polarity, rank: usize, label: bool) -> AssessmentResult {
        let query = match polarity {
            Polarity::Positive => QueryPair::positive("x", "y", "i"),
            Polarity::Negative => QueryPair::negative("x", "y"),
        };
        AssessmentResult {
            query,
            similarity: 0.5,
            rank,
            label,
            interval: 1,
            candidates_considered: 10,
        }
    }

    #[test]
    fn confusion_counts_and_polarity_check() {
        let pos: Vec<_> = (0..63).map(|i| result(Polarity::Positive, 1, i < 22)).collect();
        let neg: Vec<_> = (0..63).map(|i| result(Polarity::Negative, 1, i < 8)).collect();
        assert_eq!(confusion(&pos, &neg).unwrap(), ConfusionMatrix::new(22, 41, 8, 55));
        assert!(matches!(confusion(&neg, &neg), Err(Error::MixedPolarity(_))));
        assert_eq!(confusion(&pos[..5], &[]).unwrap(), ConfusionMatrix::new(5, 0, 0, 0));
    }

    #[test]
    fn all_correct_run() {
        let pos: Vec<_> = (0..4).map(|_| result(Polarity::Positive, 1, true)).collect();
        let neg: Vec<_> = (0..4).map(|_| result(Polarity::Negative, 9, false)).collect();
        let cm = confusion(&pos, &neg).unwrap();
        assert_eq!((cm.fn_, cm.fp), (0, 0));
    }

    #[test]
    fn degenerate_denominators() {
        let r = metrics(&ConfusionMatrix::new(0, 3, 2, 0), "e", "q").unwrap();
        assert_eq!(r.recall, Ratio::Defined(0.0));
        assert_eq!(r.precision, Ratio::Defined(0.0));
        assert_eq!(r.f1, Ratio::UNDEFINED);
        let r = metrics(&ConfusionMatrix::new(0, 3, 0, 2), "e", "q").unwrap();
        assert_eq!(r.precision, Ratio::UNDEFINED);
        assert_eq!(r.f1, Ratio::UNDEFINED);
        assert!(metrics(&ConfusionMatrix::new(0, 0, 1, 1), "e", "q").is_err());
    }

    #[test]
    fn ratio_json() {
        assert_eq!(serde_json::to_string(&Ratio::UNDEFINED).unwrap(), "\"undefined\"");
        assert_eq!(serde_json::to_string(&Ratio::Defined(0.5)).unwrap(), "0.5");
        let back: Ratio = serde_json::from_str("\"undefined\"").unwrap();
        assert_eq!(back, Ratio::UNDEFINED);
        let back: Ratio = serde_json::from_str("0.25").unwrap();
        assert_eq!(back, Ratio::Defined(0.25));
    }

    #[test]
    fn histogram_buckets() {
        let rs: Vec<_> = [1, 50, 300, 2000]
            .iter()
            .map(|&k| result(Polarity::Positive, k, true))
            .collect();
        let d = rank_distribution(&rs, IntervalBoundaries::default()).unwrap();
        assert_eq!(d.positive_counts, [2, 1, 1]);
        assert_eq!(d.negative_counts, [0, 0, 0]);
        assert_eq!(d.interval_totals().values().sum::<usize>(), 4);
    }

    #[test]
    fn identical_reports_have_zero_deltas() {
        let r = metrics(&ConfusionMatrix::new(5, 2, 1, 6), "a", "q").unwrap();
        let c = compare_embedders(&[r.clone(), r.clone()]).unwrap();
        for m in &c.metrics {
            assert_eq!(m.deltas, vec![Ratio::Defined(0.0)]);
        }
        assert!(c.trend_holds);
        let mut other = r.clone();
        other.query_set_id = "z".into();
        assert!(matches!(compare_embedders(&[r, other]), Err(Error::MismatchedQuerySets(_))));
    }

    proptest! {
        #[test]
        fn metric_identities(tp in 0usize..200, fn_ in 0usize..200, fp in 0usize..200, tn in 0usize..200) {
            prop_assume!(tp + fn_ > 0 && fp + tn > 0);
            let r = metrics(&ConfusionMatrix::new(tp, fn_, fp, tn), "e", "q").unwrap();
            for m in Metric::ALL {
                if let Some(v) = r.get(m).value() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            if let (Some(p), Some(rc), Some(f)) = (r.precision.value(), r.recall.value(), r.f1.value()) {
                prop_assert!((f - 2.0 * p * rc / (p + rc)).abs() < 1e-9);
                prop_assert!((f - 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64).abs() < 1e-9);
            }
            let acc = r.accuracy.value().unwrap();
            prop_assert!((acc - (tp + tn) as f64 / (tp + fn_ + fp + tn) as f64).abs() < 1e-12);
        }

        #[test]
        fn histogram_partitions(ranks in proptest::collection::vec((1usize..5000, any::<bool>()), 1..100)) {
            let rs: Vec<_> = ranks
                .iter()
                .map(|&(k, pos)| result(if pos { Polarity::Positive } else { Polarity::Negative }, k, true))
                .collect();
            let d = rank_distribution(&rs, IntervalBoundaries::default()).unwrap();
            prop_assert_eq!(d.positive_counts.iter().sum::<usize>(), d.positive_ranks.len());
            prop_assert_eq!(d.negative_counts.iter().sum::<usize>(), d.negative_ranks.len());
            prop_assert_eq!(d.positive_ranks.len() + d.negative_ranks.len(), rs.len());
        }
    }
}
