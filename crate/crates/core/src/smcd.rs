//! Dual-head model: a shared trunk (embedding + LSTM) feeds a
//! classification head (LSTM + pool + dense + softmax) and a duplication
//! head (LSTM + pool + normalize) trained with the grouped triplet loss.

use crate::batch::GroupedBatch;
use crate::error::{Error, Result};
use crate::layers::{
    dense_backward, dense_forward, embedding_backward, embedding_forward, lstm_backward,
    lstm_forward, masked_mean_pool, masked_mean_pool_backward, DenseGrads, DenseLayer,
    EmbeddingLayer, LstmCache, LstmGrads, LstmLayer,
};
use crate::multisiam::{fold, normalize_backward, unfold, GroupedEmbeddings};
use crate::batch::FlatBatch;
use crate::rng::SeededRng;
use crate::tensor::{l2_normalize_rows, softmax_rows, Tensor};
use crate::text::{EncodedText, Vocabulary};
use crate::triplet::{triplet_loss, TripletBreakdown, TripletConfig};

#[derive(Debug, Clone)]
pub struct SmcdModel {
    pub vocab: Vocabulary,
    pub embedding: EmbeddingLayer,
    pub trunk_lstm: LstmLayer,
    pub cls_lstm: LstmLayer,
    pub cls_dense: DenseLayer,
    pub dup_lstm: LstmLayer,
    pub categories: Vec<String>,
    pub text_size: usize,
}

impl SmcdModel {
    pub fn new(
        vocab: Vocabulary,
        d_embed: usize,
        hidden: usize,
        text_size: usize,
        categories: Vec<String>,
        rng: &mut SeededRng,
    ) -> SmcdModel {
        let embedding = EmbeddingLayer::new(vocab.size(), d_embed, rng);
        let trunk_lstm = LstmLayer::new(d_embed, hidden, rng);
        let cls_lstm = LstmLayer::new(hidden, hidden, rng);
        let cls_dense = DenseLayer::new(hidden, categories.len(), rng);
        let dup_lstm = LstmLayer::new(hidden, hidden, rng);
        SmcdModel {
            vocab,
            embedding,
            trunk_lstm,
            cls_lstm,
            cls_dense,
            dup_lstm,
            categories,
            text_size,
        }
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn embedding_size(&self) -> usize {
        self.dup_lstm.hidden()
    }
}

pub struct SmcdOutput {
    /// `(b*g) x num_categories`, pre-softmax.
    pub logits: Tensor,
    /// Softmax of the logits, for reporting.
    pub probs: Tensor,
    /// Duplication-head embeddings, `b x g x hidden`, L2-normalized.
    pub dup: GroupedEmbeddings,
}

pub struct SmcdCache {
    flat: FlatBatch,
    trunk: LstmCache,
    cls: LstmCache,
    cls_pooled: Tensor,
    dup: LstmCache,
    dup_pooled: Tensor,
    dup_degenerate: Vec<bool>,
    b: usize,
    g: usize,
}

const NORM_EPS: f64 = 1e-12;

pub fn smcd_forward(model: &SmcdModel, batch: &GroupedBatch) -> Result<(SmcdOutput, SmcdCache)> {
    let flat = fold(batch);
    let x = embedding_forward(&flat, &model.embedding)?;
    let (trunk_out, trunk) = lstm_forward(&x, &flat.mask, &model.trunk_lstm)?;

    let (cls_hidden, cls) = lstm_forward(&trunk_out, &flat.mask, &model.cls_lstm)?;
    let cls_pooled = masked_mean_pool(&cls_hidden, &flat.mask)?;
    let logits = dense_forward(&cls_pooled, &model.cls_dense)?;
    let probs = softmax_rows(&logits)?;

    let (dup_hidden, dup) = lstm_forward(&trunk_out, &flat.mask, &model.dup_lstm)?;
    let dup_pooled = masked_mean_pool(&dup_hidden, &flat.mask)?;
    let (dup_norm, dup_degenerate) = l2_normalize_rows(&dup_pooled, NORM_EPS)?;
    let e = unfold(&dup_norm, batch.batch_size, batch.group_size)?;

    Ok((
        SmcdOutput {
            logits,
            probs,
            dup: GroupedEmbeddings {
                e,
                degenerate: dup_degenerate.clone(),
            },
        },
        SmcdCache {
            flat,
            trunk,
            cls,
            cls_pooled,
            dup,
            dup_pooled,
            dup_degenerate,
            b: batch.batch_size,
            g: batch.group_size,
        },
    ))
}

/// Duplication-head embeddings for independent texts (inference).
pub fn smcd_embed(model: &SmcdModel, texts: &[EncodedText]) -> Result<Tensor> {
    if texts.is_empty() {
        return Ok(Tensor::zeros(vec![0, model.embedding_size()]));
    }
    let flat = FlatBatch::from_texts(texts)?;
    let x = embedding_forward(&flat, &model.embedding)?;
    let trunk_out = crate::layers::lstm_infer(&x, &flat.mask, &model.trunk_lstm)?;
    let dup_hidden = crate::layers::lstm_infer(&trunk_out, &flat.mask, &model.dup_lstm)?;
    let dup_pooled = masked_mean_pool(&dup_hidden, &flat.mask)?;
    let (norm, _) = l2_normalize_rows(&dup_pooled, NORM_EPS)?;
    Ok(norm)
}

/// Class probabilities for independent texts (inference).
pub fn smcd_classify_probs(model: &SmcdModel, texts: &[EncodedText]) -> Result<Tensor> {
    if texts.is_empty() {
        return Ok(Tensor::zeros(vec![0, model.num_categories()]));
    }
    let flat = FlatBatch::from_texts(texts)?;
    let x = embedding_forward(&flat, &model.embedding)?;
    let trunk_out = crate::layers::lstm_infer(&x, &flat.mask, &model.trunk_lstm)?;
    let cls_hidden = crate::layers::lstm_infer(&trunk_out, &flat.mask, &model.cls_lstm)?;
    let cls_pooled = masked_mean_pool(&cls_hidden, &flat.mask)?;
    let logits = dense_forward(&cls_pooled, &model.cls_dense)?;
    softmax_rows(&logits)
}

/// Mean cross-entropy from logits, computed in log space, plus the logits
/// gradient `(softmax - onehot) / n`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::Shape(format!(
            "logits shape {:?} does not match {} labels",
            shape,
            labels.len()
        )));
    }
    let (n, c) = (shape[0], shape[1]);
    if n == 0 {
        return Err(Error::Data("cross entropy over an empty batch".into()));
    }
    let mut loss = 0.0;
    let mut dlogits = Tensor::zeros(vec![n, c]);
    for r in 0..n {
        let label = labels[r];
        if label >= c {
            return Err(Error::Index(format!(
                "label {} out of range for {} categories",
                label, c
            )));
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss -= row[label] - logsum;
        let drow = dlogits.row_mut(r);
        for j in 0..c {
            let p = (row[j] - logsum).exp();
            drow[j] = (p - if j == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, dlogits))
}

#[derive(Debug)]
pub struct SmcdLoss {
    pub total: f64,
    pub ce: f64,
    pub triplet: f64,
    pub breakdown: TripletBreakdown,
    pub dlogits: Tensor,
    /// Gradient on the duplication embeddings, already scaled by lambda.
    pub ddup: Tensor,
}

/// Combined objective: mean cross-entropy plus `lambda_dup` times the batch
/// triplet loss on the duplication head.
pub fn smcd_loss(
    output: &SmcdOutput,
    labels: &[usize],
    cfg: &TripletConfig,
    lambda_dup: f64,
) -> Result<SmcdLoss> {
    let (ce, dlogits) = cross_entropy(&output.logits, labels)?;
    let (breakdown, mut ddup) = triplet_loss(&output.dup.e, cfg)?;
    for v in ddup.data_mut() {
        *v *= lambda_dup;
    }
    let triplet = breakdown.loss;
    Ok(SmcdLoss {
        total: ce + lambda_dup * triplet,
        ce,
        triplet,
        breakdown,
        dlogits,
        ddup,
    })
}

#[derive(Debug)]
pub struct SmcdGrads {
    pub embedding: Tensor,
    pub trunk_lstm: LstmGrads,
    pub cls_lstm: LstmGrads,
    pub cls_dense: DenseGrads,
    pub dup_lstm: LstmGrads,
}

/// Backward pass: both heads propagate into the shared trunk, whose
/// gradients sum before flowing into the embedding table.
pub fn smcd_backward(
    model: &SmcdModel,
    cache: &SmcdCache,
    dlogits: &Tensor,
    ddup: &Tensor,
) -> Result<SmcdGrads> {
    // Classification head.
    let (cls_dense_grads, d_cls_pooled) = dense_backward(dlogits, &cache.cls_pooled, &model.cls_dense)?;
    let d_cls_hidden =
        masked_mean_pool_backward(&d_cls_pooled, &cache.flat.mask, cache.flat.text_size)?;
    let (cls_lstm_grads, d_trunk_cls) = lstm_backward(&d_cls_hidden, &cache.cls, &model.cls_lstm)?;

    // Duplication head.
    let emb = model.embedding_size();
    let ddup_flat = ddup.reshaped(vec![cache.b * cache.g, emb])?;
    let d_dup_pooled = normalize_backward(&ddup_flat, &cache.dup_pooled, &cache.dup_degenerate)?;
    let d_dup_hidden =
        masked_mean_pool_backward(&d_dup_pooled, &cache.flat.mask, cache.flat.text_size)?;
    let (dup_lstm_grads, d_trunk_dup) = lstm_backward(&d_dup_hidden, &cache.dup, &model.dup_lstm)?;

    // Shared trunk sees the sum of both head gradients.
    let mut d_trunk_out = d_trunk_cls;
    for (acc, v) in d_trunk_out.data_mut().iter_mut().zip(d_trunk_dup.data()) {
        *acc += v;
    }
    let (trunk_grads, dx) = lstm_backward(&d_trunk_out, &cache.trunk, &model.trunk_lstm)?;
    let embedding = embedding_backward(&dx, &cache.flat, &model.embedding)?;

    Ok(SmcdGrads {
        embedding,
        trunk_lstm: trunk_grads,
        cls_lstm: cls_lstm_grads,
        cls_dense: cls_dense_grads,
        dup_lstm: dup_lstm_grads,
    })
}
