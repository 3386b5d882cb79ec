//! Program embeddings: the unit-norm vector type, the embedder contract, a
//! training-free hashed baseline and a small trainable embedder.

mod gradcheck;
mod hashed;
pub mod params_io;
mod trainable;
mod training;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{dot, l2_norm, Scalar};
use crate::tokenizer::EncodedProgram;

pub use gradcheck::{
    gradient_check, relative_error, triplet_vector_gradient_check, GradCheckReport, LossCase,
    FD_STEP, REL_ERROR_FLOOR,
};
pub use hashed::HashedBagEmbedder;
pub use trainable::{Gradients, Hyperparameters, TrainableEmbedder, DEFAULT_DIM};
pub use training::{fine_tune_roles, fine_tune_swc, EpochStats, TrainingData, TrainingLog};

pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Unit-norm program embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", transparent)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    /// L2-normalizes `raw`. Zero and non-finite inputs are reported, not
    /// perturbed.
    pub fn normalize(raw: Vec<T>, what: &str) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyEncoding(what.to_owned()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what.to_owned()));
        }
        let norm = l2_norm(&raw);
        if norm == T::zero() || !norm.is_finite() {
            return Err(Error::ZeroVector(what.to_owned()));
        }
        Ok(EmbeddingVector {
            values: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Wraps values that are already unit norm (within [`UNIT_NORM_TOLERANCE`]).
    pub fn from_unit(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        let norm = l2_norm(&values).to_f64_lossy();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "embedding norm {norm} is not 1"
            )));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        l2_norm(&self.values)
    }
}

impl<T> AsRef<[T]> for EmbeddingVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.values
    }
}

/// Anything that maps an encoded program to a unit-norm vector.
pub trait Embedder<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    /// Stable digest of configuration and parameters.
    fn fingerprint(&self) -> String;

    fn embed(&self, program: &EncodedProgram) -> Result<EmbeddingVector<T>>;
}

pub(crate) fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Squared-distance triplet objective `|a-p|^2 - |a-n|^2`, no margin.
pub fn triplet_loss<T: Scalar>(
    anchor: &EmbeddingVector<T>,
    positive: &EmbeddingVector<T>,
    negative: &EmbeddingVector<T>,
) -> Result<T> {
    triplet_loss_raw(anchor.values(), positive.values(), negative.values())
}

pub(crate) fn triplet_loss_raw<T: Scalar>(a: &[T], p: &[T], n: &[T]) -> Result<T> {
    for other in [p.len(), n.len()] {
        if other != a.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: other,
            });
        }
    }
    let sq = |x: &[T], y: &[T]| -> T { x.iter().zip(y).map(|(&u, &v)| (u - v) * (u - v)).sum() };
    Ok(sq(a, p) - sq(a, n))
}

/// Gradients of [`triplet_loss_raw`] with respect to each of its inputs.
pub(crate) fn triplet_loss_grad<T: Scalar>(a: &[T], p: &[T], n: &[T]) -> [Vec<T>; 3] {
    let two = T::lit(2.0);
    let ga = n.iter().zip(p).map(|(&nv, &pv)| two * (nv - pv)).collect();
    let gp = a.iter().zip(p).map(|(&av, &pv)| -two * (av - pv)).collect();
    let gn = a.iter().zip(n).map(|(&av, &nv)| two * (av - nv)).collect();
    [ga, gp, gn]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub d: usize,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct StoreRecord<T> {
    program_id: String,
    values: Vec<T>,
}

/// Embeddings for every program of a corpus, all of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<T> {
    vectors: BTreeMap<String, EmbeddingVector<T>>,
    d: usize,
    fingerprint: String,
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn new(d: usize, fingerprint: impl Into<String>) -> Self {
        EmbeddingStore {
            vectors: BTreeMap::new(),
            d,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, v: EmbeddingVector<T>) -> Result<()> {
        if v.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: v.dim(),
            });
        }
        self.vectors.insert(id.into(), v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector<T>> {
        self.vectors.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&EmbeddingVector<T>> {
        self.get(id).ok_or_else(|| Error::MissingEmbedding(id.to_owned()))
    }

    /// Entries ordered by program id.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector<T>)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn to_jsonl_string(&self, config_hash: Option<&str>) -> Result<String> {
        let header = StoreHeader {
            d: self.d,
            fingerprint: self.fingerprint.clone(),
            config_hash: config_hash.map(str::to_owned),
        };
        let records: Vec<StoreRecord<T>> = self
            .vectors
            .iter()
            .map(|(k, v)| StoreRecord {
                program_id: k.clone(),
                values: v.values.clone(),
            })
            .collect();
        crate::io::to_jsonl_string(Some(&header), &records)
    }

    pub fn write_jsonl(&self, path: &Path, config_hash: Option<&str>) -> Result<()> {
        std::fs::write(path, self.to_jsonl_string(config_hash)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<(Self, StoreHeader)> {
        let (header, records) =
            crate::io::read_jsonl_with_header::<StoreHeader, StoreRecord<T>>(path, true)?;
        let header = header.expect("header required");
        let mut store = EmbeddingStore::new(header.d, header.fingerprint.clone());
        for r in records {
            let v = EmbeddingVector::from_unit(r.values)
                .map_err(|e| Error::schema(path.display().to_string(), e))?;
            store.insert(r.program_id, v)?;
        }
        Ok((store, header))
    }
}

/// Embeds every program in parallel; output is independent of scheduling.
pub fn embed_corpus<T, E>(programs: &[EncodedProgram], embedder: &E) -> Result<EmbeddingStore<T>>
where
    T: Scalar,
    E: Embedder<T> + ?Sized,
{
    let vectors: Vec<(String, EmbeddingVector<T>)> = programs
        .par_iter()
        .map(|p| {
            embedder
                .embed(p)
                .map(|v| (p.program_id.clone(), v))
                .map_err(|e| Error::EmbedProgram {
                    program: p.program_id.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let mut store = EmbeddingStore::new(embedder.dim(), embedder.fingerprint());
    for (id, v) in vectors {
        store.insert(id, v)?;
    }
    Ok(store)
}

/// Mean within-group and cross-group Euclidean distance between embeddings,
/// grouping programs by `group_of`.
pub fn distance_statistics<T: Scalar>(
    store: &EmbeddingStore<T>,
    group_of: impl Fn(&str) -> Option<String>,
) -> (f64, f64) {
    let entries: Vec<(&str, &EmbeddingVector<T>)> = store.iter().collect();
    let (mut within, mut wn, mut cross, mut cn) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let d: f64 = entries[i]
                .1
                .values()
                .iter()
                .zip(entries[j].1.values())
                .map(|(&a, &b)| (a - b).to_f64_lossy().powi(2))
                .sum::<f64>()
                .sqrt();
            if group_of(entries[i].0) == group_of(entries[j].0) {
                within += d;
                wn += 1;
            } else {
                cross += d;
                cn += 1;
            }
        }
    }
    (within / wn.max(1) as f64, cross / cn.max(1) as f64)
}

/// Mean pairwise cosine inside `members` and between `members` and
/// everything else.
pub fn cosine_statistics<T: Scalar>(
    store: &EmbeddingStore<T>,
    is_member: impl Fn(&str) -> bool,
) -> (f64, f64) {
    let entries: Vec<(&str, &EmbeddingVector<T>)> = store.iter().collect();
    let (mut inside, mut inn, mut outside, mut outn) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let c = dot(entries[i].1.values(), entries[j].1.values()).to_f64_lossy();
            match (is_member(entries[i].0), is_member(entries[j].0)) {
                (true, true) => {
                    inside += c;
                    inn += 1;
                }
                (true, false) | (false, true) => {
                    outside += c;
                    outn += 1;
                }
                _ => {}
            }
        }
    }
    (inside / inn.max(1) as f64, outside / outn.max(1) as f64)
}
