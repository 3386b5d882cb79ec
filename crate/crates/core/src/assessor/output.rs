use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::AssessmentResult;
use crate::corpus::{Polarity, QueryPair};
use crate::error::{Error, Result};

/// Flat on-disk form of an [`AssessmentResult`]; `m` is rounded to six
/// decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub x: String,
    pub y: String,
    pub polarity: Polarity,
    pub origin_instance: Option<String>,
    pub m: f64,
    pub k: usize,
    pub l: bool,
    pub interval: u8,
    pub candidates_considered: usize,
}

fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl From<&AssessmentResult> for ResultRecord {
    fn from(r: &AssessmentResult) -> Self {
        ResultRecord {
            x: r.query.x.clone(),
            y: r.query.y.clone(),
            polarity: r.query.polarity,
            origin_instance: r.query.origin_instance.clone(),
            m: round6(r.similarity),
            k: r.rank,
            l: r.label,
            interval: r.interval,
            candidates_considered: r.candidates_considered,
        }
    }
}

impl From<ResultRecord> for AssessmentResult {
    fn from(r: ResultRecord) -> Self {
        AssessmentResult {
            query: QueryPair {
                x: r.x,
                y: r.y,
                polarity: r.polarity,
                origin_instance: r.origin_instance,
            },
            similarity: r.m,
            rank: r.k,
            label: r.l,
            interval: r.interval,
            candidates_considered: r.candidates_considered,
        }
    }
}

pub fn results_to_jsonl_string<H: Serialize>(
    header: Option<&H>,
    results: &[AssessmentResult],
) -> Result<String> {
    let records: Vec<ResultRecord> = results.iter().map(ResultRecord::from).collect();
    crate::io::to_jsonl_string(header, &records)
}

pub fn read_results_jsonl<H: DeserializeOwned>(
    path: &Path,
    has_header: bool,
) -> Result<(Option<H>, Vec<AssessmentResult>)> {
    let (h, records) = crate::io::read_jsonl_with_header::<H, ResultRecord>(path, has_header)?;
    Ok((h, records.into_iter().map(AssessmentResult::from).collect()))
}

pub fn results_to_csv_string(results: &[AssessmentResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(ResultRecord::from(r))
            .map_err(|e| Error::schema("csv", e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::schema("csv", e))?;
    String::from_utf8(bytes).map_err(|e| Error::schema("csv", e))
}
