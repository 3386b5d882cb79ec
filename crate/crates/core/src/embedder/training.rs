use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trainable::TrainableEmbedder;
use crate::corpus::{Triplet, TripletKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tokenizer::{EncodedProgram, MaskedProgram};

/// Encoded programs plus their masked variants, keyed by program id.
/// Programs too short to mask simply contribute no reconstruction term.
#[derive(Debug, Clone, Default)]
pub struct TrainingData {
    pub encoded: BTreeMap<String, EncodedProgram>,
    pub masked: BTreeMap<String, MaskedProgram>,
}

impl TrainingData {
    pub fn new(encoded: Vec<EncodedProgram>, masked: Vec<MaskedProgram>) -> Self {
        TrainingData {
            encoded: encoded.into_iter().map(|e| (e.program_id.clone(), e)).collect(),
            masked: masked
                .into_iter()
                .map(|m| (m.program_id().to_owned(), m))
                .collect(),
        }
    }

    fn program(&self, id: &str) -> Result<&EncodedProgram> {
        self.encoded
            .get(id)
            .ok_or_else(|| Error::MissingStage(format!("encoded program {id}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Weighted objective averaged over triplets.
    pub loss: f64,
    pub triplet_loss: f64,
    pub mr_loss: f64,
    pub mr_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainingLog {
    pub fn all_finite(&self) -> bool {
        self.epochs
            .iter()
            .all(|e| e.loss.is_finite() && e.triplet_loss.is_finite() && e.mr_loss.is_finite())
    }
}

/// Fine-tunes on same/different-component triplets.
pub fn fine_tune_swc<T: Scalar>(
    embedder: &TrainableEmbedder<T>,
    triplets: &[Triplet],
    data: &TrainingData,
    epochs: usize,
) -> Result<(TrainableEmbedder<T>, TrainingLog)> {
    if triplets.iter().any(|t| t.kind != TripletKind::Swc) {
        return Err(Error::InvalidArgument("expected only swc triplets".into()));
    }
    fine_tune(embedder, triplets, data, epochs)
}

/// Fine-tunes on controller-role and handler-role triplets.
pub fn fine_tune_roles<T: Scalar>(
    embedder: &TrainableEmbedder<T>,
    triplets: &[Triplet],
    data: &TrainingData,
    epochs: usize,
) -> Result<(TrainableEmbedder<T>, TrainingLog)> {
    if triplets.iter().any(|t| t.kind == TripletKind::Swc) {
        return Err(Error::InvalidArgument("expected only role triplets".into()));
    }
    fine_tune(embedder, triplets, data, epochs)
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) | Error::ZeroVector(_) => Error::Divergence {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

fn fine_tune<T: Scalar>(
    embedder: &TrainableEmbedder<T>,
    triplets: &[Triplet],
    data: &TrainingData,
    epochs: usize,
) -> Result<(TrainableEmbedder<T>, TrainingLog)> {
    if triplets.is_empty() {
        return Err(Error::InvalidArgument("no training triplets".into()));
    }
    let mut model = embedder.clone();
    let hyper = model.hyper.clone();
    let batch_size = hyper.batch_size.max(1);
    let lr = T::lit(hyper.learning_rate);
    let tr_w = T::lit(hyper.triplet_weight);
    let mr_w = T::lit(hyper.mr_weight);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x7472_6169_6e00_0000);
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut grads = model.zero_gradients();
    let mut log = TrainingLog::default();

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let (mut tr_sum, mut mr_sum, mut mr_terms, mut correct, mut positions) =
            (0.0, 0.0, 0usize, 0usize, 0usize);
        for batch in order.chunks(batch_size) {
            TrainableEmbedder::reset(&mut grads);
            let scale = T::one() / T::lit(batch.len() as f64);
            for &i in batch {
                let t = &triplets[i];
                let (a, p, n) = (
                    data.program(&t.anchor)?,
                    data.program(&t.positive)?,
                    data.program(&t.negative)?,
                );
                let tr = model
                    .triplet_terms(a, p, n, Some((&mut grads, tr_w * scale)))
                    .map_err(|e| diverged(e, epoch))?;
                tr_sum += tr.to_f64_lossy();
                if hyper.mr_weight != 0.0 {
                    if let Some(m) = data.masked.get(&t.anchor) {
                        let count = T::lit(m.masked_positions.len() as f64);
                        let (l, c, k) = model
                            .mr_terms(m, Some((&mut grads, mr_w * scale / count)))
                            .map_err(|e| diverged(e, epoch))?;
                        mr_sum += l.to_f64_lossy() / k as f64;
                        mr_terms += 1;
                        correct += c;
                        positions += k;
                    }
                }
            }
            model.apply(&grads, lr);
        }
        let n = triplets.len() as f64;
        let triplet_loss = tr_sum / n;
        let mr_loss = if mr_terms > 0 { mr_sum / mr_terms as f64 } else { 0.0 };
        let loss = hyper.triplet_weight * triplet_loss + hyper.mr_weight * mr_sum / n;
        if !loss.is_finite() || model.table().iter().chain(model.head()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        log.epochs.push(EpochStats {
            epoch,
            loss,
            triplet_loss,
            mr_loss,
            mr_accuracy: if positions > 0 {
                correct as f64 / positions as f64
            } else {
                0.0
            },
        });
    }
    Ok((model, log))
}
