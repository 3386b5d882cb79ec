use std::collections::BTreeMap;
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tokenizer::EncodedProgram;

/// Training-free baseline: signed feature hashing of subword ids into `dim`
/// buckets with `1 + ln(tf)` term weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedBagEmbedder<T = f64> {
    pub dim: usize,
    pub salt: u64,
    #[serde(skip)]
    _scalar: PhantomData<T>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl<T: Scalar> HashedBagEmbedder<T> {
    pub fn new(dim: usize, salt: u64) -> Self {
        HashedBagEmbedder {
            dim,
            salt,
            _scalar: PhantomData,
        }
    }

    /// Bucket index and sign for a subword id.
    pub fn bucket(&self, id: u32) -> (usize, bool) {
        let h = splitmix64(u64::from(id) ^ self.salt.rotate_left(17));
        ((h % self.dim as u64) as usize, h >> 63 == 1)
    }

    pub fn raw_features(&self, program: &EncodedProgram) -> Vec<T> {
        let mut tf: BTreeMap<u32, usize> = BTreeMap::new();
        for &id in &program.subword_ids {
            *tf.entry(id).or_insert(0) += 1;
        }
        let mut v = vec![T::zero(); self.dim];
        for (id, count) in tf {
            let (b, negative) = self.bucket(id);
            let w = T::one() + T::lit(count as f64).ln();
            if negative {
                v[b] -= w;
            } else {
                v[b] += w;
            }
        }
        v
    }
}

impl<T: Scalar> Embedder<T> for HashedBagEmbedder<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        sha256_hex(&[
            b"hashed-bag/v1",
            &(self.dim as u64).to_le_bytes(),
            &self.salt.to_le_bytes(),
        ])
    }

    fn embed(&self, program: &EncodedProgram) -> Result<EmbeddingVector<T>> {
        if program.subword_ids.is_empty() {
            return Err(Error::EmptyEncoding(program.program_id.clone()));
        }
        EmbeddingVector::normalize(self.raw_features(program), &program.program_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::dot;

    #[test]
    fn deterministic_and_unit_norm() {
        let e = HashedBagEmbedder::<f64>::new(64, 0);
        let p = EncodedProgram::new("p", vec![5, 6, 7, 5, 5, 900], false);
        let a = e.embed(&p).unwrap();
        assert_eq!(a, e.embed(&p).unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_support_gives_zero_cosine() {
        let e = HashedBagEmbedder::<f64>::new(64, 0);
        // pick ids whose buckets do not collide by inspecting the hash
        let mut used = std::collections::HashSet::new();
        let mut ids = Vec::new();
        for id in 3u32.. {
            if used.insert(e.bucket(id).0) {
                ids.push(id);
            }
            if ids.len() == 8 {
                break;
            }
        }
        let a = EncodedProgram::new("a", ids[..4].to_vec(), false);
        let b = EncodedProgram::new("b", ids[4..].to_vec(), false);
        let c = dot(e.embed(&a).unwrap().values(), e.embed(&b).unwrap().values());
        assert_eq!(c, 0.0);
    }

    #[test]
    fn empty_program_errors() {
        let e = HashedBagEmbedder::<f32>::new(16, 0);
        let p = EncodedProgram::new("p", vec![], false);
        assert!(matches!(e.embed(&p), Err(Error::EmptyEncoding(_))));
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = HashedBagEmbedder::<f64>::new(64, 0);
        assert_eq!(Embedder::<f64>::fingerprint(&a), Embedder::<f64>::fingerprint(&a.clone()));
        assert_ne!(
            Embedder::<f64>::fingerprint(&a),
            Embedder::<f64>::fingerprint(&HashedBagEmbedder::<f64>::new(64, 1))
        );
    }
}
