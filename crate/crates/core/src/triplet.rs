//! Group-batched triplet objective. Each group contributes its slot-0 text
//! as the anchor; the remaining slots are positives. Negatives come from
//! every other group's non-anchor slots inside the same batch, so no
//! separate negative mining pass is needed.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct TripletConfig {
    /// Margin added to both the mean-negative and closest-negative hinges.
    pub alpha: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig { alpha: 0.25 }
    }
}

/// Cosine similarity; vectors without direction (norm below 1e-12) compare
/// as 0 and contribute no gradient.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    let nu = nu.sqrt();
    let nv = nv.sqrt();
    if nu < 1e-12 || nv < 1e-12 {
        return 0.0;
    }
    dot / (nu * nv)
}

/// Per-anchor terms of the batch loss, kept for metrics and for the
/// kink-distance probe used by gradient checking.
#[derive(Debug, Clone)]
pub struct TripletBreakdown {
    pub dist_ap: Vec<f64>,
    pub mean_neg: Vec<f64>,
    pub closest_neg: Vec<f64>,
    /// Gap between the closest negative and the runner-up; infinite when the
    /// pool has a single entry.
    pub argmax_gap: Vec<f64>,
    pub cost1: Vec<f64>,
    pub cost2: Vec<f64>,
    pub loss: f64,
}

impl TripletBreakdown {
    pub fn batch_size(&self) -> usize {
        self.dist_ap.len()
    }

    /// Distance from the nearest non-differentiable point: hinge arguments
    /// near zero or a near-tied closest negative. Gradient checks resample
    /// when this is small.
    pub fn min_kink_margin(&self, alpha: f64) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.dist_ap.len() {
            let arg1 = -self.dist_ap[i] + self.mean_neg[i] + alpha;
            let arg2 = -self.dist_ap[i] + self.closest_neg[i] + alpha;
            m = m.min(arg1.abs()).min(arg2.abs()).min(self.argmax_gap[i]);
        }
        m
    }
}

fn check_grouped_shape(e: &Tensor) -> Result<(usize, usize, usize)> {
    let shape = e.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "grouped embeddings must have 3 axes, got {:?}",
            shape
        )));
    }
    let (n, g, d) = (shape[0], shape[1], shape[2]);
    if n < 2 {
        return Err(Error::Data(format!(
            "triplet loss needs at least 2 groups for a negative pool, got {}",
            n
        )));
    }
    if g < 2 {
        return Err(Error::Data(format!(
            "triplet loss needs at least 2 slots per group, got {}",
            g
        )));
    }
    Ok((n, g, d))
}

/// Anchor-to-slot similarity matrices, one per non-anchor slot:
/// `M[k-1][i, j] = cosine(e[i, 0], e[j, k])` for k in 1..g.
pub fn slot_matrices(e: &Tensor) -> Result<Vec<Tensor>> {
    let (n, g, d) = check_grouped_shape(e)?;
    let data = e.data();
    let row = |i: usize, k: usize| &data[(i * g + k) * d..(i * g + k + 1) * d];
    let mut out = Vec::with_capacity(g - 1);
    for k in 1..g {
        let mut m = Tensor::zeros(vec![n, n]);
        {
            let md = m.data_mut();
            for i in 0..n {
                for j in 0..n {
                    md[i * n + j] = cosine(row(i, 0), row(j, k));
                }
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Batch triplet loss and its gradient with respect to the grouped
/// embeddings. Zero-cost anchors (hinge exactly at or below zero)
/// contribute no gradient.
pub fn triplet_loss(e: &Tensor, cfg: &TripletConfig) -> Result<(TripletBreakdown, Tensor)> {
    let (n, g, d) = check_grouped_shape(e)?;
    let mats = slot_matrices(e)?;
    let slots = g - 1;
    let pool = slots * (n - 1);

    let mut dist_ap = vec![0.0; n];
    let mut mean_neg = vec![0.0; n];
    let mut closest_neg = vec![0.0; n];
    let mut argmax_gap = vec![0.0; n];
    let mut closest_at = vec![(0usize, 0usize); n];
    let mut cost1 = vec![0.0; n];
    let mut cost2 = vec![0.0; n];
    let mut loss = 0.0;

    for i in 0..n {
        let mut ap_sum = 0.0;
        for m in &mats {
            ap_sum += m.data()[i * n + i];
        }
        let ap = ap_sum / slots as f64;

        let mut sum = 0.0;
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        let mut best_at = (0usize, 0usize);
        for (ki, m) in mats.iter().enumerate() {
            let md = m.data();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let v = md[i * n + j];
                sum += v;
                if v > best {
                    second = best;
                    best = v;
                    best_at = (ki, j);
                } else if v > second {
                    second = v;
                }
            }
        }
        let mean = sum / pool as f64;

        let c1 = (-ap + mean + cfg.alpha).max(0.0);
        let c2 = (-ap + best + cfg.alpha).max(0.0);
        dist_ap[i] = ap;
        mean_neg[i] = mean;
        closest_neg[i] = best;
        argmax_gap[i] = if pool > 1 { best - second } else { f64::INFINITY };
        closest_at[i] = best_at;
        cost1[i] = c1;
        cost2[i] = c2;
        loss += c1 + c2;
    }

    // Gradient on the similarity matrices, then through each cosine.
    let mut dmats: Vec<Tensor> = (0..slots).map(|_| Tensor::zeros(vec![n, n])).collect();
    for i in 0..n {
        let mut d_ap = 0.0;
        if cost1[i] > 0.0 {
            d_ap -= 1.0;
            let w = 1.0 / pool as f64;
            for dm in dmats.iter_mut() {
                let md = dm.data_mut();
                for j in 0..n {
                    if j != i {
                        md[i * n + j] += w;
                    }
                }
            }
        }
        if cost2[i] > 0.0 {
            d_ap -= 1.0;
            let (ki, j) = closest_at[i];
            dmats[ki].data_mut()[i * n + j] += 1.0;
        }
        if d_ap != 0.0 {
            let w = d_ap / slots as f64;
            for dm in dmats.iter_mut() {
                dm.data_mut()[i * n + i] += w;
            }
        }
    }

    let mut de = Tensor::zeros(vec![n, g, d]);
    {
        let ed = e.data();
        let ded = de.data_mut();
        let row = |i: usize, k: usize| &ed[(i * g + k) * d..(i * g + k + 1) * d];
        for (ki, dm) in dmats.iter().enumerate() {
            let k = ki + 1;
            let md = dm.data();
            for i in 0..n {
                for j in 0..n {
                    let gm = md[i * n + j];
                    if gm == 0.0 {
                        continue;
                    }
                    let u = row(i, 0);
                    let v = row(j, k);
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
                    for t in 0..d {
                        ded[(i * g) * d + t] += gm * (v[t] * inv_uv - c * u[t] * inv_uu);
                        ded[(j * g + k) * d + t] += gm * (u[t] * inv_uv - c * v[t] * inv_vv);
                    }
                }
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
        de,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::tensor::finite_diff_check;

    /// Hand-checkable instance: unit vectors in the plane, g=2, n=2.
    /// Anchors at 0 and 90 degrees, positives at 15 and 75 degrees.
    fn planar_instance() -> Tensor {
        let deg = |a: f64| a.to_radians();
        let v = |a: f64| [deg(a).cos(), deg(a).sin()];
        let rows = [v(0.0), v(15.0), v(90.0), v(75.0)];
        let mut data = Vec::new();
        for r in rows {
            data.extend_from_slice(&r);
        }
        Tensor::new(vec![2, 2, 2], data).unwrap()
    }

    #[test]
    fn planar_values_match_hand_computation() {
        let e = planar_instance();
        let cfg = TripletConfig { alpha: 0.25 };
        let (bd, _) = triplet_loss(&e, &cfg).unwrap();
        let c15 = 15f64.to_radians().cos();
        let c75 = 75f64.to_radians().cos();
        // dist_ap for both anchors is cos(15 deg); the only negative for
        // each anchor is the other group's positive at 75 deg away.
        for i in 0..2 {
            assert!((bd.dist_ap[i] - c15).abs() < 1e-12);
            assert!((bd.mean_neg[i] - c75).abs() < 1e-12);
            assert!((bd.closest_neg[i] - c75).abs() < 1e-12);
            let expect = (-c15 + c75 + 0.25).max(0.0);
            assert!((bd.cost1[i] - expect).abs() < 1e-12);
            assert!((bd.cost2[i] - expect).abs() < 1e-12);
        }
        assert!((bd.loss - 4.0 * (-c15 + c75 + 0.25).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn separated_groups_reach_zero_loss() {
        // Anchors and positives aligned within groups, orthogonal across:
        // dist_ap = 1, negatives = 0, costs = max(-1 + 0 + 0.25, 0) = 0.
        let e = Tensor::new(
            vec![2, 2, 2],
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        let (bd, de) = triplet_loss(&e, &TripletConfig::default()).unwrap();
        assert_eq!(bd.loss, 0.0);
        assert!(de.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_embeddings_give_margin_loss() {
        // Every vector equal: dist_ap = mean = closest = 1, both hinges open
        // at exactly alpha, so the loss is n * 2 * alpha.
        let data: Vec<f64> = (0..6).flat_map(|_| [0.6, 0.8]).collect();
        let e = Tensor::new(vec![3, 2, 2], data).unwrap();
        let (bd, _) = triplet_loss(&e, &TripletConfig { alpha: 0.25 }).unwrap();
        assert!((bd.loss - 3.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_batch_shapes() {
        assert!(triplet_loss(&Tensor::zeros(vec![1, 2, 3]), &TripletConfig::default()).is_err());
        assert!(triplet_loss(&Tensor::zeros(vec![3, 1, 3]), &TripletConfig::default()).is_err());
        assert!(triplet_loss(&Tensor::zeros(vec![4, 6]), &TripletConfig::default()).is_err());
    }

    #[test]
    fn anchor_permutation_preserves_loss() {
        let mut rng = SeededRng::new(11);
        let e = Tensor::uniform(vec![4, 3, 5], -1.0, 1.0, &mut rng);
        let cfg = TripletConfig::default();
        let (bd, _) = triplet_loss(&e, &cfg).unwrap();
        // Reverse the group order.
        let d = 3 * 5;
        let mut rev = Vec::new();
        for i in (0..4).rev() {
            rev.extend_from_slice(&e.data()[i * d..(i + 1) * d]);
        }
        let e2 = Tensor::new(vec![4, 3, 5], rev).unwrap();
        let (bd2, _) = triplet_loss(&e2, &cfg).unwrap();
        assert!((bd.loss - bd2.loss).abs() < 1e-12);
        for i in 0..4 {
            assert!((bd.cost1[i] - bd2.cost1[3 - i]).abs() < 1e-12);
            assert!((bd.cost2[i] - bd2.cost2[3 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn closest_negative_tie_takes_first_index() {
        // Two identical negatives: slot order decides.
        let e = Tensor::new(
            vec![2, 3, 2],
            vec![
                1.0, 0.0, // group 0 anchor
                1.0, 0.0, // group 0 slot 1
                1.0, 0.0, // group 0 slot 2
                0.0, 1.0, // group 1 anchor
                0.8, 0.6, // group 1 slot 1
                0.8, 0.6, // group 1 slot 2 (tied with slot 1 vs anchor 0)
            ],
        )
        .unwrap();
        let (bd, de) = triplet_loss(&e, &TripletConfig { alpha: 0.25 }).unwrap();
        // Anchor 0: negatives are group 1 slots, both at cos = 0.8.
        assert!((bd.closest_neg[0] - 0.8).abs() < 1e-12);
        assert_eq!(bd.argmax_gap[0], 0.0);
        // cost2 gradient must hit slot 1 of group 1 (first index in k order),
        // leaving slot 2 with only the mean-negative share.
        let d_slot1: f64 = de.data()[(1 * 3 + 1) * 2..(1 * 3 + 2) * 2]
            .iter()
            .map(|v| v.abs())
            .sum();
        let d_slot2: f64 = de.data()[(1 * 3 + 2) * 2..(1 * 3 + 3) * 2]
            .iter()
            .map(|v| v.abs())
            .sum();
        assert!(d_slot1 > d_slot2);
    }

    #[test]
    fn gradient_matches_finite_difference_away_from_kinks() {
        let cfg = TripletConfig::default();
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 8 {
            seed += 1;
            let mut rng = SeededRng::new(seed);
            let e = Tensor::uniform(vec![3, 2, 4], -1.0, 1.0, &mut rng);
            let (bd, de) = triplet_loss(&e, &cfg).unwrap();
            if bd.min_kink_margin(cfg.alpha) < 1e-3 {
                continue;
            }
            let err = finite_diff_check(
                |x| Ok(triplet_loss(x, &cfg)?.0.loss),
                &e,
                &de,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-6, "seed {seed} rel err {err}");
            checked += 1;
        }
    }

    #[test]
    fn loss_scale_invariant_to_vector_norms() {
        // Cosine ignores magnitudes: scaling any row leaves the loss alone.
        let mut rng = SeededRng::new(23);
        let e = Tensor::uniform(vec![3, 3, 4], -1.0, 1.0, &mut rng);
        let cfg = TripletConfig::default();
        let (bd, _) = triplet_loss(&e, &cfg).unwrap();
        let mut scaled = e.clone();
        for (pos, v) in scaled.data_mut().iter_mut().enumerate() {
            if pos / 4 % 2 == 0 {
                *v *= 7.25;
            }
        }
        let (bd2, _) = triplet_loss(&scaled, &cfg).unwrap();
        assert!((bd.loss - bd2.loss).abs() < 1e-9);
    }
}
