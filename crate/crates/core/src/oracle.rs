//! Brute-force reference for the batch triplet loss. Written from the loss
//! definition with plain scalar loops and no code shared with the main
//! implementation; tests compare the two on random batches.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn cos_ref(e: &Tensor, a: (usize, usize), b: (usize, usize)) -> f64 {
    let g = e.shape()[1];
    let d = e.shape()[2];
    let data = e.data();
    let pa = (a.0 * g + a.1) * d;
    let pb = (b.0 * g + b.1) * d;
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for t in 0..d {
        dot += data[pa + t] * data[pb + t];
        na += data[pa + t] * data[pa + t];
        nb += data[pb + t] * data[pb + t];
    }
    if na.sqrt() < 1e-12 || nb.sqrt() < 1e-12 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Loss value only, recomputed the long way for every anchor.
pub fn triplet_loss_oracle(e: &Tensor, alpha: f64) -> Result<f64> {
    let shape = e.shape();
    if shape.len() != 3 || shape[0] < 2 || shape[1] < 2 {
        return Err(Error::Data(format!(
            "oracle needs [n>=2, g>=2, d] embeddings, got {:?}",
            shape
        )));
    }
    let (n, g) = (shape[0], shape[1]);
    let mut total = 0.0;
    for i in 0..n {
        let mut ap = 0.0;
        for k in 1..g {
            ap += cos_ref(e, (i, 0), (i, k));
        }
        ap /= (g - 1) as f64;

        // Deliberately iterate groups before slots, the opposite of the
        // main implementation, to keep the computations independent.
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut best = f64::NEG_INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 1..g {
                let v = cos_ref(e, (i, 0), (j, k));
                sum += v;
                count += 1;
                if v > best {
                    best = v;
                }
            }
        }
        let mean = sum / count as f64;
        let c1 = (-ap + mean + alpha).max(0.0);
        let c2 = (-ap + best + alpha).max(0.0);
        total += c1 + c2;
    }
    Ok(total)
}
