//! Central finite-difference checks for the hand-written gradients.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trainable::TrainableEmbedder;
use super::{triplet_loss_grad, triplet_loss_raw};
use crate::error::{Error, Result};
use crate::tokenizer::{EncodedProgram, MaskedProgram};

pub const FD_STEP: f64 = 1e-4;
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy)]
pub enum LossCase<'a> {
    Triplet {
        anchor: &'a EncodedProgram,
        positive: &'a EncodedProgram,
        negative: &'a EncodedProgram,
    },
    Mr { batch: &'a [MaskedProgram] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probed: usize,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

impl GradCheckReport {
    fn fold(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut r = GradCheckReport {
            max_relative_error: 0.0,
            probed: 0,
            max_abs_analytic: 0.0,
            max_abs_numeric: 0.0,
        };
        for (a, n) in pairs {
            r.max_relative_error = r.max_relative_error.max(relative_error(a, n));
            r.max_abs_analytic = r.max_abs_analytic.max(a.abs());
            r.max_abs_numeric = r.max_abs_numeric.max(n.abs());
            r.probed += 1;
        }
        r
    }
}

impl LossCase<'_> {
    fn loss(&self, e: &TrainableEmbedder<f64>) -> Result<f64> {
        match *self {
            LossCase::Triplet {
                anchor,
                positive,
                negative,
            } => e.triplet_program_loss(anchor, positive, negative),
            LossCase::Mr { batch } => Ok(e.mr_loss(batch)?.0),
        }
    }

    /// Parameters the loss can depend on: table rows of every id that
    /// occurs, plus the head for reconstruction.
    fn relevant(&self, e: &TrainableEmbedder<f64>) -> Vec<usize> {
        let d = e.table().len() / e.vocab_len().max(1);
        let mut ids = BTreeSet::new();
        match *self {
            LossCase::Triplet {
                anchor,
                positive,
                negative,
            } => {
                for p in [anchor, positive, negative] {
                    ids.extend(p.subword_ids.iter().copied());
                }
            }
            LossCase::Mr { batch } => {
                for m in batch {
                    ids.extend(m.base.subword_ids.iter().copied());
                }
            }
        }
        let mut out: Vec<usize> = ids
            .into_iter()
            .flat_map(|id| (id as usize * d)..(id as usize + 1) * d)
            .collect();
        if matches!(self, LossCase::Mr { .. }) {
            out.extend(e.table().len()..e.num_params());
        }
        out
    }
}

/// Compares analytic and central-difference gradients on `probes`
/// parameters drawn without replacement from those the loss touches.
pub fn gradient_check(
    embedder: &TrainableEmbedder<f64>,
    case: LossCase<'_>,
    probes: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let grads = match case {
        LossCase::Triplet {
            anchor,
            positive,
            negative,
        } => embedder.triplet_program_gradient(anchor, positive, negative)?,
        LossCase::Mr { batch } => embedder.mr_loss_gradient(batch)?,
    };
    let relevant = case.relevant(embedder);
    if relevant.is_empty() {
        return Err(Error::InvalidArgument("loss touches no parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, relevant.len(), probes.min(relevant.len()));
    let mut probe = embedder.clone();
    let mut pairs = Vec::with_capacity(picked.len());
    for k in picked {
        let i = relevant[k];
        let orig = probe.param(i);
        probe.set_param(i, orig + FD_STEP);
        let up = case.loss(&probe)?;
        probe.set_param(i, orig - FD_STEP);
        let down = case.loss(&probe)?;
        probe.set_param(i, orig);
        pairs.push((grads.get(i), (up - down) / (2.0 * FD_STEP)));
    }
    Ok(GradCheckReport::fold(pairs))
}

/// Checks the triplet gradient with respect to the three embedding
/// vectors themselves.
pub fn triplet_vector_gradient_check(a: &[f64], p: &[f64], n: &[f64]) -> Result<GradCheckReport> {
    triplet_loss_raw(a, p, n)?;
    let analytic = triplet_loss_grad(a, p, n);
    let mut inputs = [a.to_vec(), p.to_vec(), n.to_vec()];
    let mut pairs = Vec::new();
    for which in 0..3 {
        for j in 0..a.len() {
            let orig = inputs[which][j];
            inputs[which][j] = orig + FD_STEP;
            let up = triplet_loss_raw(&inputs[0], &inputs[1], &inputs[2])?;
            inputs[which][j] = orig - FD_STEP;
            let down = triplet_loss_raw(&inputs[0], &inputs[1], &inputs[2])?;
            inputs[which][j] = orig;
            pairs.push((analytic[which][j], (up - down) / (2.0 * FD_STEP)));
        }
    }
    Ok(GradCheckReport::fold(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::Hyperparameters;
    use crate::tokenizer::{mask, SpecialIds};

    fn model() -> TrainableEmbedder<f64> {
        TrainableEmbedder::new(
            40,
            6,
            Hyperparameters {
                seed: 9,
                window: 3,
                head_init_scale: 0.3,
                init_scale: 0.5,
                ..Hyperparameters::default()
            },
        )
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn triplet_program_gradient_matches() {
        let e = model();
        let a = EncodedProgram::new("a", vec![3, 4, 5, 6, 7], false);
        let p = EncodedProgram::new("p", vec![5, 8, 9, 9], false);
        let n = EncodedProgram::new("n", vec![10, 11, 3, 12, 13, 14], false);
        let r = gradient_check(
            &e,
            LossCase::Triplet { anchor: &a, positive: &p, negative: &n },
            200,
            1,
        )
        .unwrap();
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn mr_gradient_matches() {
        let e = model();
        let batch = vec![
            mask(&EncodedProgram::new("a", (3..23).collect(), false), SpecialIds::default(), 0.2, 1).unwrap(),
            mask(&EncodedProgram::new("b", (10..40).rev().collect(), false), SpecialIds::default(), 0.2, 2).unwrap(),
        ];
        let r = gradient_check(&e, LossCase::Mr { batch: &batch }, 200, 2).unwrap();
        assert_eq!(r.probed, 200);
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn symmetric_triplet_has_zero_gradient() {
        let v = [0.6, 0.8];
        let r = triplet_vector_gradient_check(&v, &v, &v).unwrap();
        assert!(r.max_abs_analytic < 1e-12 && r.max_abs_numeric < 1e-9);
        assert_eq!(r.max_relative_error, 0.0);
    }
}
