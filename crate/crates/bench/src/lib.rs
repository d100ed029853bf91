//! Shared fixtures for the benchmark targets.

use msia_core::batch::{source_key, EncodedGroup, GroupedBatch};
use msia_core::text::{encode_text, Vocabulary};
use msia_core::train::TrainConfig;
use msia_core::{MultiSiamModel, SeededRng};

/// Synthetic paraphrase-style groups over a small closed vocabulary.
pub fn fixture_groups(
    n_groups: usize,
    group_size: usize,
    text_size: usize,
    vocab: &Vocabulary,
) -> Vec<EncodedGroup> {
    (0..n_groups)
        .map(|g| {
            let texts: Vec<String> = (0..group_size)
                .map(|m| {
                    let toks: Vec<String> = (0..text_size.min(8))
                        .map(|t| format!("w{}", (g * 7 + t * 3 + m) % 96))
                        .collect();
                    toks.join(" ")
                })
                .collect();
            EncodedGroup {
                members: texts
                    .iter()
                    .map(|t| encode_text(t, vocab, text_size))
                    .collect(),
                category: None,
                source_keys: texts.iter().map(|t| source_key(t)).collect(),
            }
        })
        .collect()
}

pub fn fixture_vocab() -> Vocabulary {
    let texts: Vec<String> = (0..96).map(|i| format!("w{i}")).collect();
    Vocabulary::build_from_texts(&texts, 1).unwrap()
}

pub fn fixture_model(vocab: &Vocabulary, cfg: &TrainConfig) -> MultiSiamModel {
    let mut rng = SeededRng::new(cfg.seed);
    MultiSiamModel::new(
        vocab.clone(),
        cfg.embedding_size,
        cfg.hidden_size,
        cfg.text_size,
        &mut rng,
    )
}

pub fn fixture_batch(groups: &[EncodedGroup], batch_size: usize) -> GroupedBatch {
    let refs: Vec<&EncodedGroup> = groups.iter().take(batch_size).collect();
    GroupedBatch::from_groups(&refs).unwrap()
}
