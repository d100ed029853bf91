//! Classic two-branch siamese loss over explicit anchor and positive
//! batches. This is the conventional formulation the grouped loss reduces to
//! when groups have exactly two members; it also powers the step-time
//! comparison between the two training styles.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::triplet::{cosine, TripletBreakdown, TripletConfig};

/// Loss plus gradients for both branches. `anchors` and `positives` are
/// `n x d`; row i of each belongs to pair i, and every other positive row
/// serves as a negative for anchor i.
pub fn pairwise_siamese_loss(
    anchors: &Tensor,
    positives: &Tensor,
    cfg: &TripletConfig,
) -> Result<(TripletBreakdown, Tensor, Tensor)> {
    if anchors.shape().len() != 2 || anchors.shape() != positives.shape() {
        return Err(Error::Shape(format!(
            "anchor shape {:?} and positive shape {:?} must be equal rank-2",
            anchors.shape(),
            positives.shape()
        )));
    }
    let (n, d) = (anchors.shape()[0], anchors.shape()[1]);
    if n < 2 {
        return Err(Error::Data(format!(
            "pairwise loss needs at least 2 pairs for a negative pool, got {}",
            n
        )));
    }

    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sim[i * n + j] = cosine(anchors.row(i), positives.row(j));
        }
    }

    let mut dist_ap = vec![0.0; n];
    let mut mean_neg = vec![0.0; n];
    let mut closest_neg = vec![0.0; n];
    let mut argmax_gap = vec![0.0; n];
    let mut closest_at = vec![0usize; n];
    let mut cost1 = vec![0.0; n];
    let mut cost2 = vec![0.0; n];
    let mut loss = 0.0;

    for i in 0..n {
        let ap = sim[i * n + i];
        let mut sum = 0.0;
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        let mut best_at = 0usize;
        for j in 0..n {
            if j == i {
                continue;
            }
            let v = sim[i * n + j];
            sum += v;
            if v > best {
                second = best;
                best = v;
                best_at = j;
            } else if v > second {
                second = v;
            }
        }
        let mean = sum / (n - 1) as f64;
        let c1 = (-ap + mean + cfg.alpha).max(0.0);
        let c2 = (-ap + best + cfg.alpha).max(0.0);
        dist_ap[i] = ap;
        mean_neg[i] = mean;
        closest_neg[i] = best;
        argmax_gap[i] = if n > 2 { best - second } else { f64::INFINITY };
        closest_at[i] = best_at;
        cost1[i] = c1;
        cost2[i] = c2;
        loss += c1 + c2;
    }

    // Gradient on the similarity matrix, then through each cosine.
    let mut dsim = vec![0.0; n * n];
    for i in 0..n {
        let mut d_ap = 0.0;
        if cost1[i] > 0.0 {
            d_ap -= 1.0;
            let w = 1.0 / (n - 1) as f64;
            for j in 0..n {
                if j != i {
                    dsim[i * n + j] += w;
                }
            }
        }
        if cost2[i] > 0.0 {
            d_ap -= 1.0;
            dsim[i * n + closest_at[i]] += 1.0;
        }
        dsim[i * n + i] += d_ap;
    }

    let mut da = Tensor::zeros(vec![n, d]);
    let mut dp = Tensor::zeros(vec![n, d]);
    for i in 0..n {
        for j in 0..n {
            let gm = dsim[i * n + j];
            if gm == 0.0 {
                continue;
            }
            let u = anchors.row(i);
            let v = positives.row(j);
            let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nu < 1e-12 || nv < 1e-12 {
                continue;
            }
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            let c = dot / (nu * nv);
            let inv_uv = 1.0 / (nu * nv);
            let inv_uu = 1.0 / (nu * nu);
            let inv_vv = 1.0 / (nv * nv);
            let dar = da.row_mut(i);
            for t in 0..d {
                dar[t] += gm * (v[t] * inv_uv - c * u[t] * inv_uu);
            }
            let dpr = dp.row_mut(j);
            for t in 0..d {
                dpr[t] += gm * (u[t] * inv_uv - c * v[t] * inv_vv);
            }
        }
    }

    Ok((
        TripletBreakdown {
            dist_ap,
            mean_neg,
            closest_neg,
            argmax_gap,
            cost1,
            cost2,
            loss,
        },
        da,
        dp,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::tensor::finite_diff_check;
    use crate::triplet::triplet_loss;

    #[test]
    fn matches_grouped_loss_at_two_slots_bit_for_bit() {
        let mut rng = SeededRng::new(91);
        for _ in 0..100 {
            let n = 2 + rng.index(6);
            let d = 2 + rng.index(5);
            let e = Tensor::uniform(vec![n, 2, d], -1.0, 1.0, &mut rng);
            let mut a_data = Vec::with_capacity(n * d);
            let mut p_data = Vec::with_capacity(n * d);
            for i in 0..n {
                a_data.extend_from_slice(&e.data()[(i * 2) * d..(i * 2 + 1) * d]);
                p_data.extend_from_slice(&e.data()[(i * 2 + 1) * d..(i * 2 + 2) * d]);
            }
            let anchors = Tensor::new(vec![n, d], a_data).unwrap();
            let positives = Tensor::new(vec![n, d], p_data).unwrap();
            let cfg = TripletConfig { alpha: 0.25 };
            let (grouped, _) = triplet_loss(&e, &cfg).unwrap();
            let (pw, _, _) = pairwise_siamese_loss(&anchors, &positives, &cfg).unwrap();
            assert_eq!(grouped.loss.to_bits(), pw.loss.to_bits());
            for i in 0..n {
                assert_eq!(grouped.cost1[i].to_bits(), pw.cost1[i].to_bits());
                assert_eq!(grouped.cost2[i].to_bits(), pw.cost2[i].to_bits());
            }
        }
    }

    #[test]
    fn gradients_match_finite_difference() {
        let cfg = TripletConfig::default();
        let mut checked = 0;
        let mut seed = 100u64;
        while checked < 5 {
            seed += 1;
            let mut rng = SeededRng::new(seed);
            let anchors = Tensor::uniform(vec![4, 3], -1.0, 1.0, &mut rng);
            let positives = Tensor::uniform(vec![4, 3], -1.0, 1.0, &mut rng);
            let (bd, da, dp) = pairwise_siamese_loss(&anchors, &positives, &cfg).unwrap();
            if bd.min_kink_margin(cfg.alpha) < 1e-3 {
                continue;
            }
            let err_a = finite_diff_check(
                |a| Ok(pairwise_siamese_loss(a, &positives, &cfg)?.0.loss),
                &anchors,
                &da,
                1e-6,
            )
            .unwrap();
            assert!(err_a < 1e-6, "seed {seed} anchor rel err {err_a}");
            let err_p = finite_diff_check(
                |p| Ok(pairwise_siamese_loss(&anchors, p, &cfg)?.0.loss),
                &positives,
                &dp,
                1e-6,
            )
            .unwrap();
            assert!(err_p < 1e-6, "seed {seed} positive rel err {err_p}");
            checked += 1;
        }
    }

    #[test]
    fn single_pair_rejected() {
        let a = Tensor::zeros(vec![1, 3]);
        let p = Tensor::zeros(vec![1, 3]);
        assert!(pairwise_siamese_loss(&a, &p, &TripletConfig::default()).is_err());
    }
}
