//! Binary parameter file for [`TrainableEmbedder`].
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 4    | magic `CHCE`                     |
//! | 4      | 4    | format version (u32, currently 1) |
//! | 8      | 4    | vocabulary rows `V` (u32)        |
//! | 12     | 4    | embedding dimension `d` (u32)    |
//! | 16     | 4·V·d | subword table, row-major f32 (`V x d`) |
//! | …      | 4·d·V | prediction head, row-major f32 (`d x V`) |
//!
//! Hyperparameters live in the JSON sidecar, not here.

use std::path::Path;

use super::trainable::{Hyperparameters, TrainableEmbedder};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"CHCE";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn to_bytes<T: Scalar>(e: &TrainableEmbedder<T>) -> Vec<u8> {
    let d = e.table().len() / e.vocab_len().max(1);
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * e.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(e.vocab_len() as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in e.table().iter().chain(e.head()) {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

pub fn from_bytes<T: Scalar>(
    bytes: &[u8],
    hyper: Hyperparameters,
    what: &str,
) -> Result<TrainableEmbedder<T>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::schema(what, "bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::schema(what, format!("unsupported version {version}")));
    }
    let (rows, d) = (word(8) as usize, word(12) as usize);
    let n = rows * d;
    if bytes.len() != HEADER_LEN + 8 * n {
        return Err(Error::schema(
            what,
            format!("expected {} bytes, found {}", HEADER_LEN + 8 * n, bytes.len()),
        ));
    }
    let floats: Vec<T> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| T::lit(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
        .collect();
    let (table, head) = floats.split_at(n);
    TrainableEmbedder::from_parts(rows, d, table.to_vec(), head.to_vec(), hyper)
}

pub fn write(path: &Path, e: &TrainableEmbedder<impl Scalar>) -> Result<()> {
    std::fs::write(path, to_bytes(e)).map_err(|err| Error::io(path, err))
}

pub fn read<T: Scalar>(path: &Path, hyper: Hyperparameters) -> Result<TrainableEmbedder<T>> {
    let bytes = std::fs::read(path).map_err(|err| Error::io(path, err))?;
    from_bytes(&bytes, hyper, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::Embedder;

    #[test]
    fn round_trip_through_f32_is_stable() {
        let e = TrainableEmbedder::<f64>::new(12, 5, Hyperparameters::default());
        let bytes = to_bytes(&e);
        assert_eq!(bytes.len(), 16 + 4 * 2 * 60);
        assert_eq!(&bytes[..4], b"CHCE");
        let back: TrainableEmbedder<f64> = from_bytes(&bytes, e.hyper.clone(), "t").unwrap();
        for i in 0..e.num_params() {
            assert_eq!(back.param(i), f64::from(e.param(i) as f32));
        }
        // second trip is exact
        let again: TrainableEmbedder<f64> = from_bytes(&to_bytes(&back), e.hyper.clone(), "t").unwrap();
        assert_eq!(again.fingerprint(), back.fingerprint());
    }

    #[test]
    fn rejects_corruption() {
        let e = TrainableEmbedder::<f32>::new(4, 2, Hyperparameters::default());
        let mut bytes = to_bytes(&e);
        assert!(from_bytes::<f32>(&bytes[..20], Hyperparameters::default(), "t").is_err());
        bytes[0] = b'X';
        assert!(from_bytes::<f32>(&bytes, Hyperparameters::default(), "t").is_err());
    }
}
