use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bpe::{EncodedProgram, SpecialIds};
use crate::error::{Error, Result};

pub const DEFAULT_MASK_FRACTION: f64 = 0.15;

/// Encoded program with a subset of positions replaced by the mask id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedProgram {
    pub base: EncodedProgram,
    /// Strictly increasing.
    pub masked_positions: Vec<usize>,
    pub original_ids: Vec<u32>,
}

impl MaskedProgram {
    pub fn program_id(&self) -> &str {
        &self.base.program_id
    }
}

/// Number of positions masked for a program of `length` subwords.
pub fn mask_count(length: usize, fraction: f64) -> usize {
    (fraction * length as f64).round() as usize
}

/// Masks exactly `round(fraction * length)` non-special positions chosen
/// uniformly without replacement.
pub fn mask(
    encoded: &EncodedProgram,
    specials: SpecialIds,
    fraction: f64,
    seed: u64,
) -> Result<MaskedProgram> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let count = mask_count(encoded.subword_ids.len(), fraction);
    let eligible: Vec<usize> = encoded
        .subword_ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| !specials.contains(id))
        .map(|(i, _)| i)
        .collect();
    if count == 0 || eligible.len() < count {
        return Err(Error::NoMaskablePosition(encoded.program_id.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = index::sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    positions.sort_unstable();

    let mut base = encoded.clone();
    let original_ids = positions
        .iter()
        .map(|&p| std::mem::replace(&mut base.subword_ids[p], specials.mask))
        .collect();
    Ok(MaskedProgram {
        base,
        masked_positions: positions,
        original_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn program(len: usize) -> EncodedProgram {
        EncodedProgram::new("p", (0..len as u32).map(|i| 3 + i % 50).collect(), false)
    }

    #[test]
    fn fifteen_of_hundred() {
        let m = mask(&program(100), SpecialIds::default(), 0.15, 1).unwrap();
        assert_eq!(m.masked_positions.len(), 15);
        for (&p, &orig) in m.masked_positions.iter().zip(&m.original_ids) {
            assert_eq!(m.base.subword_ids[p], SpecialIds::default().mask);
            assert_eq!(program(100).subword_ids[p], orig);
        }
    }

    #[test]
    fn single_token_has_nothing_to_mask() {
        assert!(matches!(
            mask(&program(1), SpecialIds::default(), 0.15, 1),
            Err(Error::NoMaskablePosition(_))
        ));
    }

    #[test]
    fn fraction_bounds() {
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                mask(&program(10), SpecialIds::default(), f, 1),
                Err(Error::FractionOutOfRange(_))
            ));
        }
    }

    #[test]
    fn specials_are_never_masked() {
        let mut p = program(40);
        for i in (0..40).step_by(2) {
            p.subword_ids[i] = SpecialIds::default().unknown;
        }
        let m = mask(&p, SpecialIds::default(), 0.3, 5).unwrap();
        assert!(m.masked_positions.iter().all(|i| i % 2 == 1));
    }

    proptest! {
        #[test]
        fn count_and_order(len in 7usize..3000, seed in any::<u64>(), fraction in 0.15f64..0.9) {
            let m = mask(&program(len), SpecialIds::default(), fraction, seed).unwrap();
            prop_assert_eq!(m.masked_positions.len(), (fraction * len as f64).round() as usize);
            prop_assert!(m.masked_positions.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(&m, &mask(&program(len), SpecialIds::default(), fraction, seed).unwrap());
        }
    }
}
