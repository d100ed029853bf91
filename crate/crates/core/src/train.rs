//! Adam optimization and the seeded epoch loops for both models.

use std::time::Instant;

use serde::Serialize;

use crate::batch::{make_batches, EncodedGroup, GroupedBatch};
use crate::data::PairRecord;
use crate::error::{Error, Result};
use crate::eval::pair_accuracy;
use crate::multisiam::{backward_grouped, forward_grouped, MultiSiamModel};
use crate::pairwise::pairwise_siamese_loss;
use crate::rng::SeededRng;
use crate::smcd::{smcd_backward, smcd_forward, smcd_loss, SmcdModel};
use crate::tensor::Tensor;
use crate::text::Vocabulary;
use crate::triplet::{triplet_loss, TripletConfig};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub group_size: usize,
    pub text_size: usize,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub learning_rate: f64,
    /// Triplet margin.
    pub alpha: f64,
    /// Weight of the triplet term in the dual-head objective.
    pub lambda_dup: f64,
    pub seed: u64,
    pub optimizer: String,
    /// Optional global-norm gradient clip.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 10,
            batch_size: 256,
            group_size: 2,
            text_size: 32,
            embedding_size: 64,
            hidden_size: 64,
            learning_rate: 1e-3,
            alpha: 0.25,
            lambda_dup: 1.0,
            seed: 42,
            optimizer: "adam".into(),
            clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("group_size", self.group_size),
            ("text_size", self.text_size),
            ("embedding_size", self.embedding_size),
            ("hidden_size", self.hidden_size),
        ] {
            if v == 0 {
                return Err(Error::Data(format!("{} must be positive", name)));
            }
        }
        if self.group_size < 2 {
            return Err(Error::Data(
                "group_size must be at least 2 to form triplets".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Data("learning_rate must be positive".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Data("alpha must be non-negative".into()));
        }
        if !(self.lambda_dup >= 0.0 && self.lambda_dup.is_finite()) {
            return Err(Error::Data("lambda_dup must be non-negative".into()));
        }
        if self.optimizer != "adam" {
            return Err(Error::Data(format!(
                "unknown optimizer '{}', only 'adam' is supported",
                self.optimizer
            )));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Data("clip must be positive".into()));
            }
        }
        Ok(())
    }
}

/// First/second gradient moments per parameter tensor, in a fixed order
/// established by the first step.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }
}

/// One bias-corrected Adam update over named (parameter, gradient) pairs.
/// The entry order must stay identical across steps.
pub fn adam_step(
    entries: &mut [(&str, &mut Tensor, &Tensor)],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if state.moments.is_empty() {
        state.moments = entries
            .iter()
            .map(|(_, p, _)| {
                (
                    Tensor::zeros(p.shape().to_vec()),
                    Tensor::zeros(p.shape().to_vec()),
                )
            })
            .collect();
    }
    if state.moments.len() != entries.len() {
        return Err(Error::Shape(format!(
            "optimizer state holds {} tensors, step got {}",
            state.moments.len(),
            entries.len()
        )));
    }
    for (k, (name, param, grad)) in entries.iter().enumerate() {
        if param.shape() != grad.shape() || param.shape() != state.moments[k].0.shape() {
            return Err(Error::Shape(format!(
                "parameter {} shape {:?} does not match gradient {:?}",
                name,
                param.shape(),
                grad.shape()
            )));
        }
        if let Some(bad) = grad.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient {} in {}",
                bad, name
            )));
        }
    }
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    for (k, (_, param, grad)) in entries.iter_mut().enumerate() {
        let (m, v) = &mut state.moments[k];
        let (m, v) = (m.data_mut(), v.data_mut());
        let p = param.data_mut();
        for i in 0..p.len() {
            let g = grad.data()[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Scale all gradients down so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_by_global_norm(grads: &mut [&mut Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|t| t.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.iter_mut() {
            for v in t.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Per-epoch training record; one JSON object per line in metrics streams.
#[derive(Debug, Clone, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-step training loss (total objective).
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ce: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triplet: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub seconds_per_step: f64,
}

pub type Progress<'a> = &'a mut dyn FnMut(&EpochMetrics);

/// Train the grouped metric model: per epoch, shuffle and batch the groups,
/// run the shared encoder, and step Adam on the triplet loss. When
/// validation pairs are given, each epoch also reports pair accuracy at
/// `tau`.
pub fn train_multisiam(
    vocab: &Vocabulary,
    groups: &[EncodedGroup],
    cfg: &TrainConfig,
    validation: Option<(&[PairRecord], f64)>,
    mut progress: Option<Progress>,
) -> Result<(MultiSiamModel, Vec<EpochMetrics>)> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut model = MultiSiamModel::new(
        vocab.clone(),
        cfg.embedding_size,
        cfg.hidden_size,
        cfg.text_size,
        &mut rng,
    );
    let mut state = AdamState::new();
    let tcfg = TripletConfig { alpha: cfg.alpha };
    let mut metrics = Vec::new();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let batches = make_batches(groups, cfg.batch_size, &mut rng, true, false)?;
        if batches.is_empty() {
            return Err(Error::Data(format!(
                "no full batch of size {} can be formed from {} groups",
                cfg.batch_size,
                groups.len()
            )));
        }
        let mut loss_sum = 0.0;
        for batch in &batches {
            let (emb, cache) = forward_grouped(&model, batch)?;
            let (breakdown, de) = triplet_loss(&emb.e, &tcfg)?;
            if !breakdown.loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss in epoch {}",
                    epoch
                )));
            }
            let mut grads = backward_grouped(&model, &cache, &de)?;
            if let Some(c) = cfg.clip {
                clip_by_global_norm(
                    &mut [
                        &mut grads.embedding,
                        &mut grads.encoder.w,
                        &mut grads.encoder.b,
                    ],
                    c,
                );
            }
            adam_step(
                &mut [
                    ("embedding.table", &mut model.embedding.table, &grads.embedding),
                    ("encoder.w", &mut model.encoder.w, &grads.encoder.w),
                    ("encoder.b", &mut model.encoder.b, &grads.encoder.b),
                ],
                &mut state,
                cfg.learning_rate,
            )?;
            model.embedding.zero_pad_row();
            loss_sum += breakdown.loss;
        }
        let accuracy = match validation {
            Some((pairs, tau)) => Some(pair_accuracy(&model, pairs, tau)?),
            None => None,
        };
        let steps = batches.len() as f64;
        let m = EpochMetrics {
            epoch,
            loss: loss_sum / steps,
            ce: None,
            triplet: Some(loss_sum / steps),
            accuracy,
            seconds_per_step: started.elapsed().as_secs_f64() / steps,
        };
        if let Some(cb) = progress.as_deref_mut() {
            cb(&m);
        }
        metrics.push(m);
    }
    Ok((model, metrics))
}

/// Train the dual-head model on labeled groups. Metrics carry the mean
/// per-step cross-entropy, triplet, and total losses plus training
/// classification accuracy.
pub fn train_smcd(
    vocab: &Vocabulary,
    categories: &[String],
    groups: &[EncodedGroup],
    cfg: &TrainConfig,
    mut progress: Option<Progress>,
) -> Result<(SmcdModel, Vec<EpochMetrics>)> {
    cfg.validate()?;
    if categories.is_empty() {
        return Err(Error::Data("smcd training needs at least one category".into()));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut model = SmcdModel::new(
        vocab.clone(),
        cfg.embedding_size,
        cfg.hidden_size,
        cfg.text_size,
        categories.to_vec(),
        &mut rng,
    );
    let mut state = AdamState::new();
    let tcfg = TripletConfig { alpha: cfg.alpha };
    let mut metrics = Vec::new();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let batches = make_batches(groups, cfg.batch_size, &mut rng, true, false)?;
        if batches.is_empty() {
            return Err(Error::Data(format!(
                "no full batch of size {} can be formed from {} groups",
                cfg.batch_size,
                groups.len()
            )));
        }
        let (mut total_sum, mut ce_sum, mut triplet_sum) = (0.0, 0.0, 0.0);
        let (mut correct, mut rows) = (0usize, 0usize);
        for batch in &batches {
            let labels = batch.category_labels.clone().ok_or_else(|| {
                Error::Data("smcd training needs category labels on every group".into())
            })?;
            let (out, cache) = smcd_forward(&model, batch)?;
            let loss = smcd_loss(&out, &labels, &tcfg, cfg.lambda_dup)?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss in epoch {}",
                    epoch
                )));
            }
            for (r, &label) in labels.iter().enumerate() {
                let row = out.logits.row(r);
                let mut best = 0usize;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                if best == label {
                    correct += 1;
                }
            }
            rows += labels.len();
            let mut grads = smcd_backward(&model, &cache, &loss.dlogits, &loss.ddup)?;
            if let Some(c) = cfg.clip {
                clip_by_global_norm(
                    &mut [
                        &mut grads.embedding,
                        &mut grads.trunk_lstm.w,
                        &mut grads.trunk_lstm.b,
                        &mut grads.cls_lstm.w,
                        &mut grads.cls_lstm.b,
                        &mut grads.cls_dense.w,
                        &mut grads.cls_dense.b,
                        &mut grads.dup_lstm.w,
                        &mut grads.dup_lstm.b,
                    ],
                    c,
                );
            }
            adam_step(
                &mut [
                    ("embedding.table", &mut model.embedding.table, &grads.embedding),
                    ("trunk_lstm.w", &mut model.trunk_lstm.w, &grads.trunk_lstm.w),
                    ("trunk_lstm.b", &mut model.trunk_lstm.b, &grads.trunk_lstm.b),
                    ("cls_lstm.w", &mut model.cls_lstm.w, &grads.cls_lstm.w),
                    ("cls_lstm.b", &mut model.cls_lstm.b, &grads.cls_lstm.b),
                    ("cls_dense.w", &mut model.cls_dense.w, &grads.cls_dense.w),
                    ("cls_dense.b", &mut model.cls_dense.b, &grads.cls_dense.b),
                    ("dup_lstm.w", &mut model.dup_lstm.w, &grads.dup_lstm.w),
                    ("dup_lstm.b", &mut model.dup_lstm.b, &grads.dup_lstm.b),
                ],
                &mut state,
                cfg.learning_rate,
            )?;
            model.embedding.zero_pad_row();
            total_sum += loss.total;
            ce_sum += loss.ce;
            triplet_sum += loss.triplet;
        }
        let steps = batches.len() as f64;
        let m = EpochMetrics {
            epoch,
            loss: total_sum / steps,
            ce: Some(ce_sum / steps),
            triplet: Some(triplet_sum / steps),
            accuracy: Some(correct as f64 / rows as f64),
            seconds_per_step: started.elapsed().as_secs_f64() / steps,
        };
        if let Some(cb) = progress.as_deref_mut() {
            cb(&m);
        }
        metrics.push(m);
    }
    Ok((model, metrics))
}

/// Wall-clock comparison of the two training styles on identical texts.
#[derive(Debug, Clone, Serialize)]
pub struct StepTiming {
    pub steps: usize,
    pub multisiam_seconds_per_step: f64,
    pub pairwise_seconds_per_step: f64,
}

/// Time full training steps (forward, loss, backward, Adam update) for one
/// grouped batch against the classic two-branch formulation of the same
/// texts: anchors are each group's slot 0, positives its slot 1, encoded in
/// two separate passes and joined by the pairwise hard-negative loss.
pub fn compare_step_times(
    vocab: &Vocabulary,
    groups: &[EncodedGroup],
    cfg: &TrainConfig,
    steps: usize,
) -> Result<StepTiming> {
    cfg.validate()?;
    if steps == 0 {
        return Err(Error::Data("steps must be positive".into()));
    }
    if groups.len() < cfg.batch_size {
        return Err(Error::Data(format!(
            "need at least {} groups for one batch, got {}",
            cfg.batch_size,
            groups.len()
        )));
    }
    if groups.iter().any(|g| g.members.len() < 2) {
        return Err(Error::Data(
            "step timing needs groups with at least 2 members".into(),
        ));
    }
    let chosen: Vec<&EncodedGroup> = groups.iter().take(cfg.batch_size).collect();
    let batch = GroupedBatch::from_groups(&chosen)?;
    let tcfg = TripletConfig { alpha: cfg.alpha };

    let fresh = |vocab: &Vocabulary| {
        let mut rng = SeededRng::new(cfg.seed);
        MultiSiamModel::new(
            vocab.clone(),
            cfg.embedding_size,
            cfg.hidden_size,
            cfg.text_size,
            &mut rng,
        )
    };

    let mut model = fresh(vocab);
    let mut state = AdamState::new();
    let started = Instant::now();
    for _ in 0..steps {
        let (emb, cache) = forward_grouped(&model, &batch)?;
        let (_, de) = triplet_loss(&emb.e, &tcfg)?;
        let grads = backward_grouped(&model, &cache, &de)?;
        adam_step(
            &mut [
                ("embedding.table", &mut model.embedding.table, &grads.embedding),
                ("encoder.w", &mut model.encoder.w, &grads.encoder.w),
                ("encoder.b", &mut model.encoder.b, &grads.encoder.b),
            ],
            &mut state,
            cfg.learning_rate,
        )?;
        model.embedding.zero_pad_row();
    }
    let multisiam = started.elapsed().as_secs_f64() / steps as f64;

    let branch = |slot: usize| -> Result<GroupedBatch> {
        let singles: Vec<EncodedGroup> = chosen
            .iter()
            .map(|g| EncodedGroup {
                members: vec![g.members[slot].clone()],
                category: None,
                source_keys: vec![g.source_keys[slot]],
            })
            .collect();
        let refs: Vec<&EncodedGroup> = singles.iter().collect();
        GroupedBatch::from_groups(&refs)
    };
    let batch_a = branch(0)?;
    let batch_p = branch(1)?;
    let (b, d) = (cfg.batch_size, cfg.hidden_size);

    let mut model = fresh(vocab);
    let mut state = AdamState::new();
    let started = Instant::now();
    for _ in 0..steps {
        let (ea, ca) = forward_grouped(&model, &batch_a)?;
        let (ep, cp) = forward_grouped(&model, &batch_p)?;
        let ra = ea.e.reshaped(vec![b, d])?;
        let rp = ep.e.reshaped(vec![b, d])?;
        let (_, ga, gp) = pairwise_siamese_loss(&ra, &rp, &tcfg)?;
        let grad_a = backward_grouped(&model, &ca, &ga.reshaped(vec![b, 1, d])?)?;
        let grad_p = backward_grouped(&model, &cp, &gp.reshaped(vec![b, 1, d])?)?;
        // both branches share one set of weights, so their gradients add
        let mut ge = grad_a.embedding;
        for (v, &u) in ge.data_mut().iter_mut().zip(grad_p.embedding.data()) {
            *v += u;
        }
        let mut gw = grad_a.encoder.w;
        for (v, &u) in gw.data_mut().iter_mut().zip(grad_p.encoder.w.data()) {
            *v += u;
        }
        let mut gb = grad_a.encoder.b;
        for (v, &u) in gb.data_mut().iter_mut().zip(grad_p.encoder.b.data()) {
            *v += u;
        }
        adam_step(
            &mut [
                ("embedding.table", &mut model.embedding.table, &ge),
                ("encoder.w", &mut model.encoder.w, &gw),
                ("encoder.b", &mut model.encoder.b, &gb),
            ],
            &mut state,
            cfg.learning_rate,
        )?;
        model.embedding.zero_pad_row();
    }
    let pairwise = started.elapsed().as_secs_f64() / steps as f64;

    Ok(StepTiming {
        steps,
        multisiam_seconds_per_step: multisiam,
        pairwise_seconds_per_step: pairwise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::EncodedGroup;
    use crate::text::{encode_text, Vocabulary};

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let g = Tensor::zeros(vec![2, 2]);
        let mut state = AdamState::new();
        adam_step(&mut [("p", &mut p, &g)], &mut state, 0.1).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_single_step_matches_hand_formula() {
        let mut p = Tensor::new(vec![2], vec![0.7, -0.3]).unwrap();
        let g = Tensor::new(vec![2], vec![0.4, -1.2]).unwrap();
        let mut state = AdamState::new();
        adam_step(&mut [("p", &mut p, &g)], &mut state, 0.01).unwrap();
        // with zero moments, m_hat = g and v_hat = g^2 after bias correction
        for (i, &gi) in [0.4f64, -1.2].iter().enumerate() {
            let expect = [0.7, -0.3][i] - 0.01 * gi / (gi.abs() + ADAM_EPS);
            assert!((p.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_two_steps_match_scalar_oracle() {
        let mut p = Tensor::new(vec![1], vec![0.2]).unwrap();
        let g1 = Tensor::new(vec![1], vec![0.5]).unwrap();
        let g2 = Tensor::new(vec![1], vec![-0.1]).unwrap();
        let mut state = AdamState::new();
        adam_step(&mut [("p", &mut p, &g1)], &mut state, 0.05).unwrap();
        adam_step(&mut [("p", &mut p, &g2)], &mut state, 0.05).unwrap();

        // scalar reference
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.2f64);
        for (t, g) in [(1, 0.5f64), (2, -0.1f64)] {
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g;
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g;
            let mh = m / (1.0 - ADAM_BETA1.powi(t));
            let vh = v / (1.0 - ADAM_BETA2.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + ADAM_EPS);
        }
        assert!((p.data()[0] - x).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite_gradient_naming_tensor() {
        let mut p = Tensor::zeros(vec![2]);
        let g = Tensor::new(vec![2], vec![0.1, f64::NAN]).unwrap();
        let mut state = AdamState::new();
        let err = adam_step(&mut [("encoder.w", &mut p, &g)], &mut state, 0.1).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("encoder.w"), "{msg}");
        // params untouched on abort
        assert_eq!(p.data(), &[0.0, 0.0]);
    }

    #[test]
    fn clip_rescales_only_above_limit() {
        let mut a = Tensor::new(vec![2], vec![3.0, 0.0]).unwrap();
        let mut b = Tensor::new(vec![1], vec![4.0]).unwrap();
        let norm = clip_by_global_norm(&mut [&mut a, &mut b], 2.5);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((a.data()[0] - 1.5).abs() < 1e-12);
        assert!((b.data()[0] - 2.0).abs() < 1e-12);
        let mut c = Tensor::new(vec![1], vec![0.3]).unwrap();
        clip_by_global_norm(&mut [&mut c], 2.5);
        assert_eq!(c.data(), &[0.3]);
    }

    fn toy_vocab() -> Vocabulary {
        let texts: Vec<String> = (0..24).map(|i| format!("w{i}")).collect();
        Vocabulary::build_from_texts(&texts, 1).unwrap()
    }

    fn toy_groups(vocab: &Vocabulary, cfg: &TrainConfig, labeled: bool) -> Vec<EncodedGroup> {
        // 8 groups of 3 near-identical texts; 4 categories
        (0..8)
            .map(|g| {
                let texts: Vec<String> = (0..3)
                    .map(|m| format!("w{} w{} w{}", 3 * g, 3 * g + 1, (3 * g + m) % 24))
                    .collect();
                EncodedGroup {
                    members: texts
                        .iter()
                        .map(|t| encode_text(t, vocab, cfg.text_size))
                        .collect(),
                    category: labeled.then_some(g % 4),
                    source_keys: texts.iter().map(|t| crate::batch::source_key(t)).collect(),
                }
            })
            .collect()
    }

    fn micro_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 10,
            batch_size: 4,
            group_size: 3,
            text_size: 4,
            embedding_size: 8,
            hidden_size: 8,
            learning_rate: 0.01,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let vocab = toy_vocab();
        let cfg = TrainConfig {
            epochs: 0,
            ..micro_cfg()
        };
        let groups = toy_groups(&vocab, &cfg, false);
        let (model, metrics) = train_multisiam(&vocab, &groups, &cfg, None, None).unwrap();
        assert!(metrics.is_empty());
        // matches a freshly initialized model with the same seed
        let mut rng = SeededRng::new(cfg.seed);
        let fresh = MultiSiamModel::new(
            vocab.clone(),
            cfg.embedding_size,
            cfg.hidden_size,
            cfg.text_size,
            &mut rng,
        );
        assert_eq!(model.encoder.w.data(), fresh.encoder.w.data());
    }

    #[test]
    fn multisiam_micro_loss_halves() {
        let vocab = toy_vocab();
        let cfg = micro_cfg();
        let groups = toy_groups(&vocab, &cfg, false);
        let (_, metrics) = train_multisiam(&vocab, &groups, &cfg, None, None).unwrap();
        assert_eq!(metrics.len(), 10);
        let first = metrics[0].loss;
        let last = metrics[9].loss;
        assert!(last < 0.5 * first, "epoch1 {first} epoch10 {last}");
        for m in &metrics {
            assert!(m.loss.is_finite());
            assert!(m.seconds_per_step >= 0.0);
        }
    }

    #[test]
    fn multisiam_determinism_across_runs() {
        let vocab = toy_vocab();
        let cfg = TrainConfig {
            epochs: 5,
            ..micro_cfg()
        };
        let groups = toy_groups(&vocab, &cfg, false);
        let (a, ma) = train_multisiam(&vocab, &groups, &cfg, None, None).unwrap();
        let (b, mb) = train_multisiam(&vocab, &groups, &cfg, None, None).unwrap();
        assert_eq!(a.embedding.table.data(), b.embedding.table.data());
        assert_eq!(a.encoder.w.data(), b.encoder.w.data());
        assert_eq!(a.encoder.b.data(), b.encoder.b.data());
        let la: Vec<u64> = ma.iter().map(|m| m.loss.to_bits()).collect();
        let lb: Vec<u64> = mb.iter().map(|m| m.loss.to_bits()).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn pad_row_stays_zero_through_training() {
        let vocab = toy_vocab();
        let cfg = micro_cfg();
        let groups = toy_groups(&vocab, &cfg, false);
        let (model, _) = train_multisiam(&vocab, &groups, &cfg, None, None).unwrap();
        let d = model.embedding.table.shape()[1];
        assert!(model.embedding.table.data()[..d].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn validation_reports_accuracy_each_epoch() {
        let vocab = toy_vocab();
        let cfg = TrainConfig {
            epochs: 2,
            ..micro_cfg()
        };
        let groups = toy_groups(&vocab, &cfg, false);
        let pairs: Vec<PairRecord> = (0..4)
            .map(|i| PairRecord {
                q1: format!("w{} w{}", 3 * i, 3 * i + 1),
                q2: format!("w{} w{}", 3 * i, 3 * i + 2),
                is_duplicate: i % 2 == 0,
            })
            .collect();
        let (_, metrics) =
            train_multisiam(&vocab, &groups, &cfg, Some((&pairs, 0.7)), None).unwrap();
        for m in &metrics {
            let a = m.accuracy.unwrap();
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn smcd_micro_trains_and_reports_components() {
        // Both heads share the trunk, and from a cold start the pooled
        // states are nearly identical across inputs; the first epochs sit
        // on that plateau, so progress needs a longer horizon than the
        // embedding-only loop.
        let vocab = toy_vocab();
        let cfg = TrainConfig {
            epochs: 30,
            learning_rate: 0.005,
            ..micro_cfg()
        };
        let groups = toy_groups(&vocab, &cfg, true);
        let categories: Vec<String> = (0..4).map(|c| format!("cat{c}")).collect();
        let mut seen = 0usize;
        let mut cb = |_: &EpochMetrics| seen += 1;
        let (_, metrics) =
            train_smcd(&vocab, &categories, &groups, &cfg, Some(&mut cb)).unwrap();
        assert_eq!(seen, 30);
        assert_eq!(metrics.len(), 30);
        for m in &metrics {
            let (ce, triplet, acc) = (m.ce.unwrap(), m.triplet.unwrap(), m.accuracy.unwrap());
            assert!(ce > 0.0 && ce.is_finite());
            assert!(triplet >= 0.0 && triplet.is_finite());
            assert!((m.loss - (ce + cfg.lambda_dup * triplet)).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&acc));
        }
        // optimization makes progress
        assert!(metrics[29].loss < metrics[0].loss);
    }

    #[test]
    fn step_timing_reports_positive_times_for_both_styles() {
        let vocab = toy_vocab();
        let cfg = TrainConfig {
            group_size: 2,
            ..micro_cfg()
        };
        let groups: Vec<EncodedGroup> = toy_groups(&vocab, &cfg, false)
            .into_iter()
            .map(|mut g| {
                g.members.truncate(2);
                g.source_keys.truncate(2);
                g
            })
            .collect();
        let t = compare_step_times(&vocab, &groups, &cfg, 3).unwrap();
        assert_eq!(t.steps, 3);
        assert!(t.multisiam_seconds_per_step > 0.0);
        assert!(t.pairwise_seconds_per_step > 0.0);
        assert!(compare_step_times(&vocab, &groups, &cfg, 0).is_err());
        assert!(compare_step_times(&vocab, &groups[..2], &cfg, 1).is_err());
    }

    #[test]
    fn smcd_lambda_zero_reduces_to_classifier() {
        let vocab = toy_vocab();
        let cfg = TrainConfig {
            epochs: 3,
            lambda_dup: 0.0,
            ..micro_cfg()
        };
        let groups = toy_groups(&vocab, &cfg, true);
        let categories: Vec<String> = (0..4).map(|c| format!("cat{c}")).collect();
        let (model, metrics) =
            train_smcd(&vocab, &categories, &groups, &cfg, None).unwrap();
        for m in &metrics {
            assert!((m.loss - m.ce.unwrap()).abs() < 1e-12);
            // triplet still reported even though it carries no gradient
            assert!(m.triplet.unwrap() >= 0.0);
        }
        // the duplication head keeps its initialization under lambda 0
        let mut rng = SeededRng::new(cfg.seed);
        let fresh = SmcdModel::new(
            vocab.clone(),
            cfg.embedding_size,
            cfg.hidden_size,
            cfg.text_size,
            categories.clone(),
            &mut rng,
        );
        assert_eq!(model.dup_lstm.w.data(), fresh.dup_lstm.w.data());
    }

    #[test]
    fn smcd_determinism_across_runs() {
        let vocab = toy_vocab();
        let cfg = TrainConfig {
            epochs: 5,
            ..micro_cfg()
        };
        let groups = toy_groups(&vocab, &cfg, true);
        let categories: Vec<String> = (0..4).map(|c| format!("cat{c}")).collect();
        let (a, _) = train_smcd(&vocab, &categories, &groups, &cfg, None).unwrap();
        let (b, _) = train_smcd(&vocab, &categories, &groups, &cfg, None).unwrap();
        assert_eq!(a.embedding.table.data(), b.embedding.table.data());
        assert_eq!(a.trunk_lstm.w.data(), b.trunk_lstm.w.data());
        assert_eq!(a.cls_dense.w.data(), b.cls_dense.w.data());
        assert_eq!(a.dup_lstm.w.data(), b.dup_lstm.w.data());
    }

    #[test]
    fn unlabeled_groups_rejected_for_smcd() {
        let vocab = toy_vocab();
        let cfg = micro_cfg();
        let groups = toy_groups(&vocab, &cfg, false);
        let categories = vec!["cat0".to_string()];
        assert!(train_smcd(&vocab, &categories, &groups, &cfg, None).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = micro_cfg();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { group_size: 1, ..ok.clone() },
            TrainConfig { learning_rate: 0.0, ..ok.clone() },
            TrainConfig { optimizer: "sgd".into(), ..ok.clone() },
            TrainConfig { clip: Some(-1.0), ..ok.clone() },
            TrainConfig { text_size: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
