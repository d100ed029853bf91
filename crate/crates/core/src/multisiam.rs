//! The group-batched siamese encoder. One shared sub-network (embedding +
//! LSTM + masked mean pool + L2 normalize) runs over the folded batch; the
//! result unfolds back to groups so the loss can index anchor and member
//! slots.

use crate::batch::{FlatBatch, GroupedBatch};
use crate::error::{Error, Result};
use crate::layers::{
    embedding_backward, embedding_forward, lstm_backward, lstm_forward, lstm_infer,
    masked_mean_pool, masked_mean_pool_backward, EmbeddingLayer, LstmCache, LstmGrads, LstmLayer,
};
use crate::rng::SeededRng;
use crate::tensor::{l2_normalize_rows, Tensor};
use crate::text::{EncodedText, Vocabulary};

/// Collapse the group axis: `batch_size x group_size x text_size` rows in
/// group-major order become one flat batch of `batch_size * group_size` rows.
pub fn fold(batch: &GroupedBatch) -> FlatBatch {
    FlatBatch {
        rows: batch.rows(),
        text_size: batch.text_size,
        ids: batch.ids.clone(),
        mask: batch.token_mask.clone(),
    }
}

/// Restore the group axis on per-row vectors: `(b*g) x dim -> b x g x dim`.
/// Row `i*g + k` becomes entry `[i, k, :]`, the exact inverse of `fold`.
pub fn unfold(flat: &Tensor, b: usize, g: usize) -> Result<Tensor> {
    let shape = flat.shape();
    if shape.len() != 2 || shape[0] != b * g {
        return Err(Error::Shape(format!(
            "cannot unfold shape {:?} into {} groups of {}",
            shape, b, g
        )));
    }
    flat.reshaped(vec![b, g, shape[1]])
}

/// Group embeddings plus per-row degeneracy flags (rows whose pooled vector
/// had no direction to normalize).
#[derive(Debug)]
pub struct GroupedEmbeddings {
    /// `batch_size x group_size x embedding_size`, rows L2-normalized.
    pub e: Tensor,
    pub degenerate: Vec<bool>,
}

pub struct MultiSiamCache {
    flat: FlatBatch,
    lstm: LstmCache,
    pooled: Tensor,
    degenerate: Vec<bool>,
    b: usize,
    g: usize,
}

/// Encoder with its vocabulary; text_size fixes the padded input length.
#[derive(Debug, Clone)]
pub struct MultiSiamModel {
    pub vocab: Vocabulary,
    pub embedding: EmbeddingLayer,
    pub encoder: LstmLayer,
    pub text_size: usize,
}

impl MultiSiamModel {
    pub fn new(
        vocab: Vocabulary,
        d_embed: usize,
        hidden: usize,
        text_size: usize,
        rng: &mut SeededRng,
    ) -> MultiSiamModel {
        let embedding = EmbeddingLayer::new(vocab.size(), d_embed, rng);
        let encoder = LstmLayer::new(d_embed, hidden, rng);
        MultiSiamModel {
            vocab,
            embedding,
            encoder,
            text_size,
        }
    }

    pub fn embedding_size(&self) -> usize {
        self.encoder.hidden()
    }
}

const NORM_EPS: f64 = 1e-12;

fn encode_flat(
    embedding: &EmbeddingLayer,
    encoder: &LstmLayer,
    flat: &FlatBatch,
    record: bool,
) -> Result<(Tensor, Vec<bool>, Option<(LstmCache, Tensor)>)> {
    let x = embedding_forward(flat, embedding)?;
    if record {
        let (hidden, cache) = lstm_forward(&x, &flat.mask, encoder)?;
        let pooled = masked_mean_pool(&hidden, &flat.mask)?;
        let (normalized, degenerate) = l2_normalize_rows(&pooled, NORM_EPS)?;
        Ok((normalized, degenerate, Some((cache, pooled))))
    } else {
        let hidden = lstm_infer(&x, &flat.mask, encoder)?;
        let pooled = masked_mean_pool(&hidden, &flat.mask)?;
        let (normalized, degenerate) = l2_normalize_rows(&pooled, NORM_EPS)?;
        Ok((normalized, degenerate, None))
    }
}

/// Training-mode forward pass over a grouped batch.
pub fn forward_grouped(
    model: &MultiSiamModel,
    batch: &GroupedBatch,
) -> Result<(GroupedEmbeddings, MultiSiamCache)> {
    let flat = fold(batch);
    let (normalized, degenerate, rec) =
        encode_flat(&model.embedding, &model.encoder, &flat, true)?;
    let (lstm, pooled) = rec.unwrap();
    let e = unfold(&normalized, batch.batch_size, batch.group_size)?;
    Ok((
        GroupedEmbeddings {
            e,
            degenerate: degenerate.clone(),
        },
        MultiSiamCache {
            flat,
            lstm,
            pooled,
            degenerate,
            b: batch.batch_size,
            g: batch.group_size,
        },
    ))
}

/// Inference on independent texts: the same sub-network applied per row,
/// identical to `forward_grouped` with one-member groups.
pub fn forward_flat(model: &MultiSiamModel, texts: &[EncodedText]) -> Result<Tensor> {
    if texts.is_empty() {
        return Ok(Tensor::zeros(vec![0, model.embedding_size()]));
    }
    let flat = FlatBatch::from_texts(texts)?;
    if flat.text_size != model.text_size {
        return Err(Error::Shape(format!(
            "encoded text length {} does not match model text_size {}",
            flat.text_size, model.text_size
        )));
    }
    let (normalized, _, _) = encode_flat(&model.embedding, &model.encoder, &flat, false)?;
    Ok(normalized)
}

#[derive(Debug)]
pub struct MultiSiamGrads {
    pub embedding: Tensor,
    pub encoder: LstmGrads,
}

/// Gradient of the L2 normalization: for row v with unit vector u = v/|v|,
/// dL/dv = (dL/du - (u . dL/du) u) / |v|. Degenerate rows pass zero.
pub(crate) fn normalize_backward(
    upstream: &Tensor,
    pooled: &Tensor,
    degenerate: &[bool],
) -> Result<Tensor> {
    if upstream.shape() != pooled.shape() {
        return Err(Error::Shape(format!(
            "normalize upstream shape {:?} does not match pooled shape {:?}",
            upstream.shape(),
            pooled.shape()
        )));
    }
    let (n, dim) = (pooled.shape()[0], pooled.shape()[1]);
    let mut out = Tensor::zeros(vec![n, dim]);
    for r in 0..n {
        if degenerate[r] {
            continue;
        }
        let v = pooled.row(r);
        let du = upstream.row(r);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let inv = 1.0 / norm;
        let dot: f64 = v
            .iter()
            .zip(du)
            .map(|(a, b)| a * inv * b)
            .sum();
        let o = out.row_mut(r);
        for k in 0..dim {
            o[k] = (du[k] - dot * v[k] * inv) * inv;
        }
    }
    Ok(out)
}

/// Backward pass from a gradient on the grouped embeddings down to the
/// shared parameters.
pub fn backward_grouped(
    model: &MultiSiamModel,
    cache: &MultiSiamCache,
    upstream: &Tensor,
) -> Result<MultiSiamGrads> {
    let emb_size = model.embedding_size();
    if upstream.shape() != [cache.b, cache.g, emb_size] {
        return Err(Error::Shape(format!(
            "upstream shape {:?}, expected [{}, {}, {}]",
            upstream.shape(),
            cache.b,
            cache.g,
            emb_size
        )));
    }
    let up_flat = upstream.reshaped(vec![cache.b * cache.g, emb_size])?;
    let d_pooled = normalize_backward(&up_flat, &cache.pooled, &cache.degenerate)?;
    let d_hidden = masked_mean_pool_backward(&d_pooled, &cache.flat.mask, cache.flat.text_size)?;
    let (encoder_grads, dx) = lstm_backward(&d_hidden, &cache.lstm, &model.encoder)?;
    let d_table = embedding_backward(&dx, &cache.flat, &model.embedding)?;
    Ok(MultiSiamGrads {
        embedding: d_table,
        encoder: encoder_grads,
    })
}
