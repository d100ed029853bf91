//! Randomized invariant checks over the public API: threshold grouping
//! always returns a partition and only refines as the threshold rises, the
//! grouped loss keeps its algebraic identities under group permutation,
//! encoding and folding round-trip, and persistence is byte-stable.

use proptest::prelude::*;

use msia_core::batch::{source_key, EncodedGroup, GroupedBatch};
use msia_core::multisiam::{fold, unfold};
use msia_core::oracle::triplet_loss_oracle;
use msia_core::tensor::{l2_normalize_rows, softmax_rows};
use msia_core::text::{encode_text, tokenize};
use msia_core::{
    group_by_threshold, load_checkpoint, save_checkpoint, triplet_loss, Model, MultiSiamModel,
    SeededRng, Tensor, TripletConfig, Vocabulary, PAD_ID,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grouping_is_a_partition_ordered_by_smallest_member(
        (n, d) in (0usize..10, 1usize..5),
        tau in -0.99f64..0.99,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let e = Tensor::uniform(vec![n, d], -1.0, 1.0, &mut rng);
        let res = group_by_threshold(&e, tau).unwrap();
        let mut seen = vec![false; n];
        let mut last_head = None;
        for cluster in &res.clusters {
            prop_assert!(!cluster.is_empty());
            prop_assert!(cluster.windows(2).all(|w| w[0] < w[1]), "members not ascending");
            if let Some(prev) = last_head {
                prop_assert!(cluster[0] > prev, "clusters not ordered by smallest member");
            }
            last_head = Some(cluster[0]);
            for &i in cluster {
                prop_assert!(i < n);
                prop_assert!(!seen[i], "index {} in two clusters", i);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s), "some index missing from the partition");
    }

    #[test]
    fn raising_the_threshold_only_refines_clusters(
        (n, d) in (1usize..10, 1usize..5),
        taus in (-0.99f64..0.99, -0.99f64..0.99),
        seed in any::<u64>(),
    ) {
        let (a, b) = taus;
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut rng = SeededRng::new(seed);
        let e = Tensor::uniform(vec![n, d], -1.0, 1.0, &mut rng);
        let coarse = group_by_threshold(&e, lo).unwrap();
        let fine = group_by_threshold(&e, hi).unwrap();
        let mut coarse_of = vec![usize::MAX; n];
        for (ci, cluster) in coarse.clusters.iter().enumerate() {
            for &i in cluster {
                coarse_of[i] = ci;
            }
        }
        for cluster in &fine.clusters {
            let home = coarse_of[cluster[0]];
            prop_assert!(
                cluster.iter().all(|&i| coarse_of[i] == home),
                "a higher threshold merged indices that {lo} kept apart"
            );
        }
    }

    #[test]
    fn triplet_loss_identities_hold(
        dims in (2usize..5, 2usize..4, 1usize..5),
        seed in any::<u64>(),
    ) {
        let (n, g, d) = dims;
        let mut rng = SeededRng::new(seed);
        let e = Tensor::uniform(vec![n, g, d], -1.0, 1.0, &mut rng);
        let cfg = TripletConfig::default();
        let (breakdown, de) = triplet_loss(&e, &cfg).unwrap();
        let summed: f64 = breakdown
            .cost1
            .iter()
            .zip(&breakdown.cost2)
            .map(|(c1, c2)| c1 + c2)
            .sum();
        prop_assert!(breakdown.cost1.iter().all(|&c| c >= 0.0));
        prop_assert!(breakdown.cost2.iter().all(|&c| c >= 0.0));
        prop_assert!((breakdown.loss - summed).abs() <= 1e-12);
        prop_assert!(breakdown.loss >= 0.0);
        prop_assert_eq!(de.shape(), e.shape());
        let oracle = triplet_loss_oracle(&e, cfg.alpha).unwrap();
        prop_assert!((breakdown.loss - oracle).abs() <= 1e-12);

        // Permuting the groups must not move the total loss.
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let stride = g * d;
        let mut permuted = Vec::with_capacity(n * stride);
        for &i in &order {
            permuted.extend_from_slice(&e.data()[i * stride..(i + 1) * stride]);
        }
        let ep = Tensor::new(vec![n, g, d], permuted).unwrap();
        let (bp, _) = triplet_loss(&ep, &cfg).unwrap();
        prop_assert!((bp.loss - breakdown.loss).abs() <= 1e-12);
    }

    #[test]
    fn encoding_pads_masks_and_is_idempotent(
        text in "[a-z0-9 ]{0,40}",
        text_size in 1usize..12,
    ) {
        let corpus: Vec<String> = vec![
            "alpha beta gamma delta".into(),
            "one two three four five".into(),
        ];
        let vocab = Vocabulary::build_from_texts(&corpus, 1).unwrap();
        let first = encode_text(&text, &vocab, text_size);
        let second = encode_text(&text, &vocab, text_size);
        prop_assert_eq!(&first.ids, &second.ids);
        prop_assert_eq!(first.valid_len, second.valid_len);
        prop_assert_eq!(first.ids.len(), text_size);
        prop_assert!(first.valid_len <= text_size);
        prop_assert!(first.valid_len >= 1, "every text occupies at least one slot");
        let tokens = tokenize(&text);
        prop_assert_eq!(first.valid_len, tokens.len().clamp(1, text_size));
        for (pos, &id) in first.ids.iter().enumerate() {
            prop_assert!((id as usize) < vocab.size());
            if pos >= first.valid_len {
                prop_assert_eq!(id, PAD_ID, "tail position {} not padded", pos);
            }
        }
    }

    #[test]
    fn fold_and_unfold_invert_each_other(
        dims in (1usize..5, 1usize..4, 1usize..5),
        seed in any::<u64>(),
    ) {
        let (b, g, d) = dims;
        let mut rng = SeededRng::new(seed);
        let m = Tensor::uniform(vec![b * g, d], -1.0, 1.0, &mut rng);
        let u = unfold(&m, b, g).unwrap();
        prop_assert_eq!(u.shape(), &[b, g, d]);
        for (x, y) in m.data().iter().zip(u.data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn folded_batches_keep_ids_and_mask(
        group_sizes in prop::collection::vec(1usize..4, 1..4),
        text_size in 2usize..6,
    ) {
        let corpus: Vec<String> = (0..8).map(|i| format!("w{i} w{i}")).collect();
        let vocab = Vocabulary::build_from_texts(&corpus, 1).unwrap();
        let max = group_sizes.iter().max().copied().unwrap();
        let groups: Vec<EncodedGroup> = group_sizes
            .iter()
            .enumerate()
            .map(|(gi, &k)| {
                let texts: Vec<String> =
                    (0..max).map(|j| format!("w{} w{}", (gi + j) % 8, (gi + j + k) % 8)).collect();
                EncodedGroup {
                    members: texts.iter().map(|t| encode_text(t, &vocab, text_size)).collect(),
                    category: None,
                    source_keys: texts.iter().map(|t| source_key(t)).collect(),
                }
            })
            .collect();
        let refs: Vec<&EncodedGroup> = groups.iter().collect();
        let batch = GroupedBatch::from_groups(&refs).unwrap();
        let flat = fold(&batch);
        prop_assert_eq!(&flat.ids, &batch.ids);
        prop_assert_eq!(&flat.mask, &batch.token_mask);
        prop_assert_eq!(flat.rows, batch.rows());
        // No PAD id may carry a live mask bit.
        for (id, m) in flat.ids.iter().zip(&flat.mask) {
            if *id == PAD_ID {
                prop_assert_eq!(*m, 0u8);
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(
        (n, d) in (1usize..6, 1usize..6),
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let x = Tensor::uniform(vec![n, d], -30.0, 30.0, &mut rng);
        let s = softmax_rows(&x).unwrap();
        for r in 0..n {
            let row = s.row(r);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "row {} sums to {}", r, sum);
        }
    }

    #[test]
    fn normalized_rows_have_unit_or_zero_norm(
        (n, d) in (1usize..6, 1usize..6),
        seed in any::<u64>(),
        zero_row in any::<prop::sample::Index>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let mut x = Tensor::uniform(vec![n, d], -2.0, 2.0, &mut rng);
        let z = zero_row.index(n);
        for v in x.row_mut(z) {
            *v = 0.0;
        }
        let (normed, degenerate) = l2_normalize_rows(&x, 1e-12).unwrap();
        for r in 0..n {
            let norm: f64 = normed.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if degenerate[r] {
                prop_assert_eq!(norm, 0.0);
            } else {
                prop_assert!((norm - 1.0).abs() <= 1e-9, "row {} has norm {}", r, norm);
            }
        }
        prop_assert!(degenerate[z]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn equal_seeds_draw_equal_sequences(seed in any::<u64>()) {
        let mut a = SeededRng::new(seed);
        let mut b = SeededRng::new(seed);
        for _ in 0..1000 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoint_save_load_save_is_byte_stable(
        dims in (1usize..5, 1usize..5, 2usize..6),
        seed in any::<u64>(),
    ) {
        let (d_embed, hidden, text_size) = dims;
        let corpus: Vec<String> = (0..6).map(|i| format!("w{i} w{i}")).collect();
        let vocab = Vocabulary::build_from_texts(&corpus, 1).unwrap();
        let mut rng = SeededRng::new(seed);
        let model = Model::MultiSiam(MultiSiamModel::new(vocab, d_embed, hidden, text_size, &mut rng));
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&model, &p1).unwrap();
        let reloaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&reloaded, &p2).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
