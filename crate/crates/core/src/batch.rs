//! Group-batched model input. A batch holds `batch_size` groups of
//! `group_size` encoded texts each; the flat view stacks the groups so the
//! shared sub-network sees plain rows.

use crate::data::{GroupedData, PairRecord};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::text::{encode_text, pad_group, EncodedText, Vocabulary};

/// FNV-1a over the raw text; used to keep texts from the same source out of
/// one batch. A hash collision only defers a group to a later batch.
pub fn source_key(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// One encoded group: `group_size` texts that belong together, an optional
/// category index, and the source keys used by qid-disjoint batching.
#[derive(Debug, Clone)]
pub struct EncodedGroup {
    pub members: Vec<EncodedText>,
    pub category: Option<usize>,
    pub source_keys: Vec<u64>,
}

/// A batch of groups in row-major layout: ids and token mask are
/// `batch_size * group_size * text_size` long, mask 1 marks a real token.
#[derive(Debug, Clone)]
pub struct GroupedBatch {
    pub batch_size: usize,
    pub group_size: usize,
    pub text_size: usize,
    pub ids: Vec<u32>,
    pub token_mask: Vec<u8>,
    pub category_labels: Option<Vec<usize>>,
}

impl GroupedBatch {
    /// Assemble a batch from groups that must agree on group size and text
    /// size. Labels are present only when every group carries a category,
    /// replicated once per member.
    pub fn from_groups(groups: &[&EncodedGroup]) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Data("cannot build an empty batch".into()));
        }
        let group_size = groups[0].members.len();
        if group_size == 0 {
            return Err(Error::Data("groups must have at least one member".into()));
        }
        let text_size = groups[0].members[0].ids.len();
        let batch_size = groups.len();
        let mut ids = Vec::with_capacity(batch_size * group_size * text_size);
        let mut token_mask = Vec::with_capacity(batch_size * group_size * text_size);
        let all_labeled = groups.iter().all(|g| g.category.is_some());
        let mut category_labels = if all_labeled {
            Some(Vec::with_capacity(batch_size * group_size))
        } else {
            None
        };
        for (gi, group) in groups.iter().enumerate() {
            if group.members.len() != group_size {
                return Err(Error::Shape(format!(
                    "group {} has {} members, expected {}",
                    gi,
                    group.members.len(),
                    group_size
                )));
            }
            for member in &group.members {
                if member.ids.len() != text_size {
                    return Err(Error::Shape(format!(
                        "encoded text length {} differs from text_size {}",
                        member.ids.len(),
                        text_size
                    )));
                }
                for (t, &id) in member.ids.iter().enumerate() {
                    ids.push(id);
                    token_mask.push(u8::from(t < member.valid_len));
                }
                if let Some(labels) = category_labels.as_mut() {
                    labels.push(group.category.unwrap());
                }
            }
        }
        Ok(GroupedBatch {
            batch_size,
            group_size,
            text_size,
            ids,
            token_mask,
            category_labels,
        })
    }

    pub fn rows(&self) -> usize {
        self.batch_size * self.group_size
    }
}

/// Flat stack of encoded rows, the input the sub-network actually consumes.
#[derive(Debug, Clone)]
pub struct FlatBatch {
    pub rows: usize,
    pub text_size: usize,
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
}

impl FlatBatch {
    pub fn from_texts(texts: &[EncodedText]) -> Result<Self> {
        let text_size = texts.first().map_or(0, |t| t.ids.len());
        let mut ids = Vec::with_capacity(texts.len() * text_size);
        let mut mask = Vec::with_capacity(texts.len() * text_size);
        for text in texts {
            if text.ids.len() != text_size {
                return Err(Error::Shape(format!(
                    "encoded text length {} differs from text_size {}",
                    text.ids.len(),
                    text_size
                )));
            }
            for (t, &id) in text.ids.iter().enumerate() {
                ids.push(id);
                mask.push(u8::from(t < text.valid_len));
            }
        }
        Ok(FlatBatch {
            rows: texts.len(),
            text_size,
            ids,
            mask,
        })
    }
}

/// Shuffle groups and pack them into batches of exactly `batch_size`.
/// With `qid_disjoint` a group whose source keys collide with one already in
/// the open batch is deferred to a later batch. Partial batches are kept
/// only when `keep_partial` is set (evaluation); training drops them because
/// the in-batch negative pool needs the full batch.
pub fn make_batches(
    groups: &[EncodedGroup],
    batch_size: usize,
    rng: &mut SeededRng,
    qid_disjoint: bool,
    keep_partial: bool,
) -> Result<Vec<GroupedBatch>> {
    if batch_size < 2 {
        return Err(Error::Data(format!(
            "batch_size must be at least 2 to form negative pools, got {}",
            batch_size
        )));
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    rng.shuffle(&mut order);

    let mut batches = Vec::new();
    let mut remaining = order;
    while !remaining.is_empty() {
        let mut chosen: Vec<usize> = Vec::with_capacity(batch_size);
        let mut deferred: Vec<usize> = Vec::new();
        if qid_disjoint {
            let mut used: std::collections::HashSet<u64> = std::collections::HashSet::new();
            for idx in remaining {
                if chosen.len() == batch_size {
                    deferred.push(idx);
                    continue;
                }
                let keys = &groups[idx].source_keys;
                if keys.iter().any(|k| used.contains(k)) {
                    deferred.push(idx);
                } else {
                    used.extend(keys.iter().copied());
                    chosen.push(idx);
                }
            }
        } else {
            for idx in remaining {
                if chosen.len() == batch_size {
                    deferred.push(idx);
                } else {
                    chosen.push(idx);
                }
            }
        }
        if chosen.len() == batch_size || keep_partial {
            let refs: Vec<&EncodedGroup> = chosen.iter().map(|&i| &groups[i]).collect();
            batches.push(GroupedBatch::from_groups(&refs)?);
        }
        remaining = deferred;
    }
    Ok(batches)
}

/// Encode question pairs as 2-member groups for duplicate training.
pub fn pairs_to_groups(
    pairs: &[PairRecord],
    vocab: &Vocabulary,
    text_size: usize,
) -> Vec<EncodedGroup> {
    pairs
        .iter()
        .map(|p| EncodedGroup {
            members: vec![
                encode_text(&p.q1, vocab, text_size),
                encode_text(&p.q2, vocab, text_size),
            ],
            category: None,
            source_keys: vec![source_key(&p.q1), source_key(&p.q2)],
        })
        .collect()
}

/// Encode the grouped dataset: each group is truncated or padded (by
/// sampling its own members) to exactly `group_size` texts, and the category
/// becomes an index into `data.categories`.
pub fn grouped_to_groups(
    data: &GroupedData,
    vocab: &Vocabulary,
    text_size: usize,
    group_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<EncodedGroup>> {
    let mut out = Vec::new();
    for (gid, member_idx) in data.groups() {
        let texts: Vec<&str> = member_idx
            .iter()
            .map(|&i| data.records[i].text.as_str())
            .collect();
        let padded = pad_group(&texts, group_size, rng)?;
        let category = data
            .category_index(&data.records[member_idx[0]].category)
            .ok_or_else(|| Error::Data(format!("group {} has an unknown category", gid)))?;
        out.push(EncodedGroup {
            members: padded
                .iter()
                .map(|t| encode_text(t, vocab, text_size))
                .collect(),
            category: Some(category),
            source_keys: padded.iter().map(|t| source_key(t)).collect(),
        });
    }
    Ok(out)
}
