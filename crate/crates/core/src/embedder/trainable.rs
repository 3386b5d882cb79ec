//! Subword-table embedder trained with masked reconstruction and triplet
//! objectives. Gradients are written out by hand; `gradcheck` verifies them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sha256_hex, triplet_loss_grad, triplet_loss_raw, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::scalar::{dot, l2_norm, Scalar};
use crate::tokenizer::{EncodedProgram, MaskedProgram};

pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub triplet_weight: f64,
    pub mr_weight: f64,
    /// Context half-width around each masked position.
    pub window: usize,
    pub seed: u64,
    /// Subword rows start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Prediction head starts uniform in `[-head_init_scale, head_init_scale]`;
    /// zero gives a uniform predictor.
    pub head_init_scale: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 8,
            triplet_weight: 1.0,
            mr_weight: 1.0,
            window: 8,
            seed: 0,
            init_scale: 0.1,
            head_init_scale: 0.0,
        }
    }
}

/// Dense gradient buffers shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub table: Vec<T>,
    pub head: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros(vocab_len: usize, dim: usize) -> Self {
        Gradients {
            table: vec![T::zero(); vocab_len * dim],
            head: vec![T::zero(); vocab_len * dim],
        }
    }

    fn clear(&mut self) {
        self.table.iter_mut().for_each(|v| *v = T::zero());
        self.head.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Flat view matching [`TrainableEmbedder::param`] indexing.
    pub fn get(&self, i: usize) -> T {
        if i < self.table.len() {
            self.table[i]
        } else {
            self.head[i - self.table.len()]
        }
    }
}

/// Mean-pooled subword table, L2-normalized, plus a linear head that
/// predicts masked subwords from a context window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableEmbedder<T> {
    vocab_len: usize,
    dim: usize,
    /// `vocab_len x dim`, row-major.
    table: Vec<T>,
    /// `dim x vocab_len`, row-major.
    head: Vec<T>,
    pub hyper: Hyperparameters,
}

struct Pooled<T> {
    unit: Vec<T>,
    norm: T,
}

impl<T: Scalar> TrainableEmbedder<T> {
    pub fn new(vocab_len: usize, dim: usize, hyper: Hyperparameters) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut uniform = |scale: f64, n: usize| -> Vec<T> {
            (0..n)
                .map(|_| {
                    if scale == 0.0 {
                        T::zero()
                    } else {
                        T::lit(rng.gen_range(-scale..scale))
                    }
                })
                .collect()
        };
        let table = uniform(hyper.init_scale, vocab_len * dim);
        let head = uniform(hyper.head_init_scale, vocab_len * dim);
        TrainableEmbedder {
            vocab_len,
            dim,
            table,
            head,
            hyper,
        }
    }

    pub fn from_parts(
        vocab_len: usize,
        dim: usize,
        table: Vec<T>,
        head: Vec<T>,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        for got in [table.len(), head.len()] {
            if got != vocab_len * dim {
                return Err(Error::DimensionMismatch {
                    expected: vocab_len * dim,
                    got,
                });
            }
        }
        Ok(TrainableEmbedder {
            vocab_len,
            dim,
            table,
            head,
            hyper,
        })
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn head(&self) -> &[T] {
        &self.head
    }

    pub fn num_params(&self) -> usize {
        self.table.len() + self.head.len()
    }

    pub fn param(&self, i: usize) -> T {
        if i < self.table.len() {
            self.table[i]
        } else {
            self.head[i - self.table.len()]
        }
    }

    pub fn set_param(&mut self, i: usize, v: T) {
        if i < self.table.len() {
            self.table[i] = v;
        } else {
            let n = self.table.len();
            self.head[i - n] = v;
        }
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients::zeros(self.vocab_len, self.dim)
    }

    fn row(&self, id: u32) -> Result<&[T]> {
        let id = id as usize;
        if id >= self.vocab_len {
            return Err(Error::InvalidArgument(format!(
                "subword id {id} outside vocabulary of {}",
                self.vocab_len
            )));
        }
        Ok(&self.table[id * self.dim..(id + 1) * self.dim])
    }

    fn mean_rows<'a, I: IntoIterator<Item = &'a u32>>(&self, ids: I) -> Result<(Vec<T>, usize)> {
        let mut acc = vec![T::zero(); self.dim];
        let mut n = 0usize;
        for &id in ids {
            for (a, &r) in acc.iter_mut().zip(self.row(id)?) {
                *a += r;
            }
            n += 1;
        }
        if n > 0 {
            let inv = T::one() / T::lit(n as f64);
            acc.iter_mut().for_each(|a| *a *= inv);
        }
        Ok((acc, n))
    }

    fn pool(&self, program: &EncodedProgram) -> Result<Pooled<T>> {
        if program.subword_ids.is_empty() {
            return Err(Error::EmptyEncoding(program.program_id.clone()));
        }
        let (u, _) = self.mean_rows(&program.subword_ids)?;
        let norm = l2_norm(&u);
        if norm == T::zero() {
            return Err(Error::ZeroVector(program.program_id.clone()));
        }
        if !norm.is_finite() {
            return Err(Error::NonFinite(program.program_id.clone()));
        }
        Ok(Pooled {
            unit: u.iter().map(|&v| v / norm).collect(),
            norm,
        })
    }

    /// Pushes `d loss / d e` back through normalization and mean pooling.
    fn backprop_pool(
        &self,
        program: &EncodedProgram,
        pooled: &Pooled<T>,
        grad_e: &[T],
        grads: &mut Gradients<T>,
    ) {
        let proj = dot(&pooled.unit, grad_e);
        let scale = T::one() / (pooled.norm * T::lit(program.subword_ids.len() as f64));
        let grad_u: Vec<T> = grad_e
            .iter()
            .zip(&pooled.unit)
            .map(|(&g, &e)| (g - e * proj) * scale)
            .collect();
        for &id in &program.subword_ids {
            let row = &mut grads.table[id as usize * self.dim..(id as usize + 1) * self.dim];
            for (r, &g) in row.iter_mut().zip(&grad_u) {
                *r += g;
            }
        }
    }

    /// Triplet objective on three programs; accumulates `weight * dTR`.
    pub(crate) fn triplet_terms(
        &self,
        anchor: &EncodedProgram,
        positive: &EncodedProgram,
        negative: &EncodedProgram,
        grads: Option<(&mut Gradients<T>, T)>,
    ) -> Result<T> {
        let pa = self.pool(anchor)?;
        let pp = self.pool(positive)?;
        let pn = self.pool(negative)?;
        let loss = triplet_loss_raw(&pa.unit, &pp.unit, &pn.unit)?;
        if let Some((grads, weight)) = grads {
            let [ga, gp, gn] = triplet_loss_grad(&pa.unit, &pp.unit, &pn.unit);
            let scaled = |g: Vec<T>| -> Vec<T> { g.into_iter().map(|v| v * weight).collect() };
            self.backprop_pool(anchor, &pa, &scaled(ga), grads);
            self.backprop_pool(positive, &pp, &scaled(gp), grads);
            self.backprop_pool(negative, &pn, &scaled(gn), grads);
        }
        Ok(loss)
    }

    /// Summed cross-entropy over the masked positions of one program.
    /// Returns `(loss_sum, correct, positions)`; accumulates
    /// `weight * d(loss_sum)` when gradients are requested.
    pub(crate) fn mr_terms(
        &self,
        masked: &MaskedProgram,
        mut grads: Option<(&mut Gradients<T>, T)>,
    ) -> Result<(T, usize, usize)> {
        if masked.masked_positions.is_empty() {
            return Err(Error::NoMaskablePosition(masked.program_id().to_owned()));
        }
        let ids = &masked.base.subword_ids;
        let v = self.vocab_len;
        let w = self.hyper.window;
        let mut loss = T::zero();
        let mut correct = 0usize;
        let mut logits = vec![T::zero(); v];
        for (&pos, &target) in masked.masked_positions.iter().zip(&masked.original_ids) {
            if target as usize >= v {
                return Err(Error::InvalidArgument(format!("target id {target} outside vocabulary")));
            }
            let lo = pos.saturating_sub(w);
            let hi = (pos + w).min(ids.len() - 1);
            let window: Vec<u32> = (lo..=hi).filter(|&q| q != pos).map(|q| ids[q]).collect();
            let (ctx, n) = self.mean_rows(&window)?;
            if n == 0 {
                return Err(Error::InvalidArgument(format!(
                    "masked position {pos} of {} has no context",
                    masked.program_id()
                )));
            }
            logits.iter_mut().for_each(|z| *z = T::zero());
            for (k, &c) in ctx.iter().enumerate() {
                let head_row = &self.head[k * v..(k + 1) * v];
                for (z, &h) in logits.iter_mut().zip(head_row) {
                    *z += c * h;
                }
            }
            let (mut best, mut best_z) = (0usize, logits[0]);
            for (i, &z) in logits.iter().enumerate().skip(1) {
                if z > best_z {
                    best = i;
                    best_z = z;
                }
            }
            if best == target as usize {
                correct += 1;
            }
            let sum_exp: T = logits.iter().map(|&z| (z - best_z).exp()).sum();
            let lse = best_z + sum_exp.ln();
            loss += lse - logits[target as usize];

            if let Some((g, weight)) = grads.as_mut() {
                // dz = softmax - onehot
                let mut dz: Vec<T> = logits.iter().map(|&z| (z - lse).exp() * *weight).collect();
                dz[target as usize] -= *weight;
                let mut dctx = vec![T::zero(); self.dim];
                for (k, &c) in ctx.iter().enumerate() {
                    let head_row = &self.head[k * v..(k + 1) * v];
                    let grad_row = &mut g.head[k * v..(k + 1) * v];
                    let mut acc = T::zero();
                    for ((gh, &h), &d) in grad_row.iter_mut().zip(head_row).zip(&dz) {
                        *gh += c * d;
                        acc += h * d;
                    }
                    dctx[k] = acc;
                }
                let inv = T::one() / T::lit(n as f64);
                for &id in &window {
                    let row = &mut g.table[id as usize * self.dim..(id as usize + 1) * self.dim];
                    for (r, &d) in row.iter_mut().zip(&dctx) {
                        *r += d * inv;
                    }
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("mr loss for {}", masked.program_id())));
        }
        Ok((loss, correct, masked.masked_positions.len()))
    }

    /// Mean cross-entropy over every masked position in the batch and the
    /// fraction recovered by argmax.
    pub fn mr_loss(&self, batch: &[MaskedProgram]) -> Result<(T, f64)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty masked batch".into()));
        }
        let (mut total, mut correct, mut count) = (T::zero(), 0usize, 0usize);
        for m in batch {
            let (l, c, n) = self.mr_terms(m, None)?;
            total += l;
            correct += c;
            count += n;
        }
        Ok((total / T::lit(count as f64), correct as f64 / count as f64))
    }

    /// Gradient of [`Self::mr_loss`] (the batch mean) with respect to all parameters.
    pub fn mr_loss_gradient(&self, batch: &[MaskedProgram]) -> Result<Gradients<T>> {
        let count: usize = batch.iter().map(|m| m.masked_positions.len()).sum();
        let mut g = self.zero_gradients();
        let w = T::one() / T::lit(count.max(1) as f64);
        for m in batch {
            self.mr_terms(m, Some((&mut g, w)))?;
        }
        Ok(g)
    }

    pub fn triplet_program_loss(
        &self,
        anchor: &EncodedProgram,
        positive: &EncodedProgram,
        negative: &EncodedProgram,
    ) -> Result<T> {
        self.triplet_terms(anchor, positive, negative, None)
    }

    pub fn triplet_program_gradient(
        &self,
        anchor: &EncodedProgram,
        positive: &EncodedProgram,
        negative: &EncodedProgram,
    ) -> Result<Gradients<T>> {
        let mut g = self.zero_gradients();
        self.triplet_terms(anchor, positive, negative, Some((&mut g, T::one())))?;
        Ok(g)
    }

    /// Plain SGD step.
    pub(crate) fn apply(&mut self, grads: &Gradients<T>, lr: T) {
        for (p, &g) in self.table.iter_mut().zip(&grads.table) {
            *p -= lr * g;
        }
        for (p, &g) in self.head.iter_mut().zip(&grads.head) {
            *p -= lr * g;
        }
    }

    pub(crate) fn reset(grads: &mut Gradients<T>) {
        grads.clear();
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> TrainableEmbedder<U> {
        let conv = |v: &[T]| -> Vec<U> { v.iter().map(|&x| U::lit(x.to_f64_lossy())).collect() };
        TrainableEmbedder {
            vocab_len: self.vocab_len,
            dim: self.dim,
            table: conv(&self.table),
            head: conv(&self.head),
            hyper: self.hyper.clone(),
        }
    }
}

impl<T: Scalar> Embedder<T> for TrainableEmbedder<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        let mut params = Vec::with_capacity(8 * self.num_params());
        for &v in self.table.iter().chain(&self.head) {
            params.extend_from_slice(&v.fingerprint_bytes());
        }
        let hyper = serde_json::to_vec(&self.hyper).expect("hyperparameters serialize");
        sha256_hex(&[
            b"trainable/v1",
            &(self.vocab_len as u64).to_le_bytes(),
            &(self.dim as u64).to_le_bytes(),
            &hyper,
            &params,
        ])
    }

    fn embed(&self, program: &EncodedProgram) -> Result<EmbeddingVector<T>> {
        let pooled = self.pool(program)?;
        EmbeddingVector::from_unit(pooled.unit).or_else(|_| {
            // rounding can leave the norm a hair off for extreme inputs
            EmbeddingVector::normalize(self.mean_rows(&program.subword_ids)?.0, &program.program_id)
        })
    }
}
