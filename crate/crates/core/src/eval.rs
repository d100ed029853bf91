//! Threshold grouping over embeddings, group verification, pair-accuracy
//! evaluation, and classification inference.

use serde::Serialize;

use crate::data::PairRecord;
use crate::error::{Error, Result};
use crate::multisiam::{forward_flat, MultiSiamModel};
use crate::smcd::{smcd_classify_probs, smcd_embed, SmcdModel};
use crate::tensor::Tensor;
use crate::text::{encode_text, EncodedText, Vocabulary};
use crate::triplet::cosine;

/// Rows embedded per forward pass during bulk evaluation; bounds the
/// activation memory while keeping matmuls reasonably sized.
const EMBED_CHUNK: usize = 256;

/// Partition of input indices into duplicate clusters.
#[derive(Debug, Clone, Serialize)]
pub struct GroupingResult {
    pub threshold: f64,
    pub clusters: Vec<Vec<usize>>,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Connected components of the graph with an edge wherever cosine similarity
/// strictly exceeds `tau`. Clusters are listed by their smallest member and
/// each cluster lists its members in ascending order.
pub fn group_by_threshold(e: &Tensor, tau: f64) -> Result<GroupingResult> {
    let shape = e.shape();
    if shape.len() != 2 {
        return Err(Error::Shape(format!(
            "expected embeddings of shape [n, d], got {:?}",
            shape
        )));
    }
    let n = shape[0];
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if cosine(e.row(i), e.row(j)) > tau {
                uf.union(i, j);
            }
        }
    }
    let mut cluster_of_root = std::collections::HashMap::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        let slot = *cluster_of_root.entry(root).or_insert_with(|| {
            clusters.push(Vec::new());
            clusters.len() - 1
        });
        clusters[slot].push(i);
    }
    Ok(GroupingResult {
        threshold: tau,
        clusters,
    })
}

/// Mean pairwise cosine over all member pairs; the group counts as
/// duplicates only when the mean strictly exceeds `tau`.
pub fn verify_group(e: &Tensor, tau: f64) -> Result<(bool, f64)> {
    let shape = e.shape();
    if shape.len() != 2 {
        return Err(Error::Shape(format!(
            "expected embeddings of shape [g, d], got {:?}",
            shape
        )));
    }
    let g = shape[0];
    if g < 2 {
        return Err(Error::Data(format!(
            "group verification needs at least 2 members, got {}",
            g
        )));
    }
    let mut sum = 0.0;
    for i in 0..g {
        for j in i + 1..g {
            sum += cosine(e.row(i), e.row(j));
        }
    }
    let score = sum / (g * (g - 1) / 2) as f64;
    Ok((score > tau, score))
}

fn embed_chunked<E>(embed: E, d: usize, texts: &[EncodedText]) -> Result<Tensor>
where
    E: Fn(&[EncodedText]) -> Result<Tensor>,
{
    let mut data = Vec::with_capacity(texts.len() * d);
    for chunk in texts.chunks(EMBED_CHUNK.max(1)) {
        let e = embed(chunk)?;
        data.extend_from_slice(e.data());
    }
    Tensor::new(vec![texts.len(), d], data)
}

/// Embed already-encoded texts in bounded chunks.
pub fn embed_encoded(model: &MultiSiamModel, texts: &[EncodedText]) -> Result<Tensor> {
    embed_chunked(|c| forward_flat(model, c), model.embedding_size(), texts)
}

/// Chunked duplication-head embeddings of the dual-head model.
pub fn embed_encoded_smcd(model: &SmcdModel, texts: &[EncodedText]) -> Result<Tensor> {
    embed_chunked(|c| smcd_embed(model, c), model.embedding_size(), texts)
}

fn pair_accuracy_over<E>(
    vocab: &Vocabulary,
    text_size: usize,
    d: usize,
    embed: E,
    pairs: &[PairRecord],
    tau: f64,
) -> Result<f64>
where
    E: Fn(&[EncodedText]) -> Result<Tensor>,
{
    if pairs.is_empty() {
        return Err(Error::Data("pair evaluation needs a non-empty test set".into()));
    }
    let encode = |text: &str| encode_text(text, vocab, text_size);
    let left: Vec<EncodedText> = pairs.iter().map(|p| encode(&p.q1)).collect();
    let right: Vec<EncodedText> = pairs.iter().map(|p| encode(&p.q2)).collect();
    let el = embed_chunked(&embed, d, &left)?;
    let er = embed_chunked(&embed, d, &right)?;
    let mut correct = 0usize;
    for (i, pair) in pairs.iter().enumerate() {
        let predicted = cosine(el.row(i), er.row(i)) > tau;
        if predicted == pair.is_duplicate {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Binary duplicate accuracy on labeled pairs: predict duplicate wherever
/// the embedding cosine strictly exceeds `tau`.
pub fn pair_accuracy(model: &MultiSiamModel, pairs: &[PairRecord], tau: f64) -> Result<f64> {
    pair_accuracy_over(
        &model.vocab,
        model.text_size,
        model.embedding_size(),
        |c| forward_flat(model, c),
        pairs,
        tau,
    )
}

/// Pair accuracy through the dual-head model's duplication embeddings.
pub fn pair_accuracy_smcd(model: &SmcdModel, pairs: &[PairRecord], tau: f64) -> Result<f64> {
    pair_accuracy_over(
        &model.vocab,
        model.text_size,
        model.embedding_size(),
        |c| smcd_embed(model, c),
        pairs,
        tau,
    )
}

/// Most probable category per text with its probability; ties resolve to
/// the first index.
pub fn classify(model: &SmcdModel, texts: &[String]) -> Result<Vec<(String, f64)>> {
    let encoded: Vec<EncodedText> = texts
        .iter()
        .map(|t| encode_text(t, &model.vocab, model.text_size))
        .collect();
    let probs = smcd_classify_probs(model, &encoded)?;
    let mut out = Vec::with_capacity(texts.len());
    for r in 0..texts.len() {
        let row = probs.row(r);
        let mut best = 0usize;
        for (j, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = j;
            }
        }
        out.push((model.categories[best].clone(), row[best]));
    }
    Ok(out)
}

/// Joint report: duplicate clusters from the duplication head plus a
/// category per input text from the classification head.
#[derive(Debug, Clone, Serialize)]
pub struct GroupAndClassify {
    pub grouping: GroupingResult,
    pub categories: Vec<(String, f64)>,
}

pub fn group_and_classify(model: &SmcdModel, texts: &[String], tau: f64) -> Result<GroupAndClassify> {
    let encoded: Vec<EncodedText> = texts
        .iter()
        .map(|t| encode_text(t, &model.vocab, model.text_size))
        .collect();
    let embeddings = smcd_embed(model, &encoded)?;
    let grouping = group_by_threshold(&embeddings, tau)?;
    let categories = classify(model, texts)?;
    Ok(GroupAndClassify {
        grouping,
        categories,
    })
}
