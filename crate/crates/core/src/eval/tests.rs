use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::graph::split::{split_edges_lp, split_nodes, NodeSplit};
use crate::graph::{normalize_adjacency, sbm_generate, SbmConfig};
use crate::rng;
use crate::ssl::{MethodConfig, MethodKind, SslMethod};

/// All-pairs comparison: wins count 1, ties count 1/2.
fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        for j in (0..scores.len()).filter(|&j| !labels[j]) {
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Enumerate every distinct threshold from the top down; each one predicts
/// positive exactly the items scoring at or above it.
fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let total_pos = labels.iter().filter(|&&l| l).count() as f64;
    let (mut prev_recall, mut ap) = (0.0, 0.0);
    for t in thresholds {
        let predicted: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = predicted.iter().filter(|&&i| labels[i]).count() as f64;
        let precision = tp / predicted.len() as f64;
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Direct `Σ p_ij ln(p_ij / (p_i p_j))` over a dense contingency table.
fn nmi_oracle(u: &[usize], v: &[usize]) -> f64 {
    let n = u.len() as f64;
    let (ku, kv) = (u.iter().max().unwrap() + 1, v.iter().max().unwrap() + 1);
    let mut table = vec![vec![0.0; kv]; ku];
    for (&a, &b) in u.iter().zip(v) {
        table[a][b] += 1.0;
    }
    let a: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let b: Vec<f64> = (0..kv).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h = |c: &[f64]| -> f64 { c.iter().filter(|&&x| x > 0.0).map(|&x| -(x / n) * (x / n).ln()).sum() };
    let (hu, hv) = (h(&a), h(&b));
    let nonempty = |c: &[f64]| c.iter().filter(|&&x| x > 0.0).count();
    match (nonempty(&a) == 1, nonempty(&b) == 1) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut mi = 0.0;
    for i in 0..ku {
        for j in 0..kv {
            let nij = table[i][j];
            if nij > 0.0 {
                mi += (nij / n) * (n * nij / (a[i] * b[j])).ln();
            }
        }
    }
    mi / (hu * hv).sqrt()
}

/// Pair-confusion form: classify every unordered pair by whether each
/// clustering puts it together.
fn ari_oracle(u: &[usize], v: &[usize]) -> f64 {
    let (mut tp, mut fp, mut fne, mut tn) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            match (u[i] == u[j], v[i] == v[j]) {
                (true, true) => tp += 1,
                (true, false) => fne += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let den = (tp + fne) * (fne + tn) + (tp + fp) * (fp + tn);
    if den == 0 {
        return 1.0;
    }
    (2 * (tp * tn - fne * fp)) as f64 / den as f64
}

fn random_scores(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut r = rng::seeded(seed);
    let n = r.random_range(2..40);
    let levels = r.random_range(1..12);
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

fn random_clusters(seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng::seeded(seed);
    let n = r.random_range(2..60);
    let (ka, kb) = (r.random_range(1..6), r.random_range(1..6));
    (
        (0..n).map(|_| r.random_range(0..ka)).collect(),
        (0..n).map(|_| r.random_range(0..kb)).collect(),
    )
}

#[test]
fn auc_examples() {
    let l = [true, true, false, false];
    assert_eq!(auc(&[0.9, 0.8, 0.7, 0.1], &l).unwrap(), 1.0);
    assert_eq!(auc(&[0.8, 0.4, 0.6, 0.2], &l).unwrap(), 0.75);
    assert_eq!(auc(&[0.3; 4], &l).unwrap(), 0.5);
    assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    assert!(auc(&[0.1], &[true, false]).is_err());
}

#[test]
fn ap_examples() {
    let v = ap(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    assert!((v - 5.0 / 6.0).abs() < 1e-15);
    assert_eq!(ap(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
    assert!(ap(&[0.1, 0.2], &[false, false]).is_err());
}

#[test]
fn ranking_metrics_match_brute_force_oracles() {
    for seed in 0..1000 {
        let (s, l) = random_scores(seed);
        let (a, b) = (auc(&s, &l).unwrap(), auc_oracle(&s, &l));
        assert!((a - b).abs() <= 1e-12, "auc seed {seed}: {a} vs {b}");
        let (a, b) = (ap(&s, &l).unwrap(), ap_oracle(&s, &l));
        assert!((a - b).abs() <= 1e-12, "ap seed {seed}: {a} vs {b}");
    }
}

#[test]
fn clustering_metric_examples() {
    let u = [0, 0, 1, 1];
    let v = [0, 1, 0, 1];
    assert!((nmi(&u, &u).unwrap() - 1.0).abs() < 1e-15);
    assert!(nmi(&u, &v).unwrap().abs() < 1e-15);
    assert_eq!(ari(&u, &u).unwrap(), 1.0);
    assert!((ari(&u, &v).unwrap() + 0.5).abs() < 1e-15);
    assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
    assert_eq!(nmi(&[0, 0, 0], &[0, 1, 1]).unwrap(), 0.0);
    assert!(nmi(&[0, 1], &[0]).is_err());
    assert!(ari(&[0], &[0]).is_err());
}

#[test]
fn clustering_metrics_match_brute_force_oracles() {
    for seed in 0..1000 {
        let (u, v) = random_clusters(seed);
        let (a, b) = (nmi(&u, &v).unwrap(), nmi_oracle(&u, &v));
        assert!((a - b).abs() <= 1e-12, "nmi seed {seed}: {a} vs {b}");
        let (a, b) = (ari(&u, &v).unwrap(), ari_oracle(&u, &v));
        assert!((a - b).abs() <= 1e-12, "ari seed {seed}: {a} vs {b}");
    }
}

fn blobs() -> (Matrix, Vec<usize>) {
    let truth: Vec<usize> = (0..40).map(|i| i % 2).collect();
    let h = Matrix::from_fn(40, 2, |r, c| {
        let centre = if truth[r] == 0 { -10.0 } else { 10.0 };
        centre + rng::keyed_unit(5, r as u64, c as u64) - 0.5
    });
    (h, truth)
}

#[test]
fn kmeans_separates_blobs() {
    let (h, truth) = blobs();
    let fit = kmeans(&h, 2, &KMeansConfig::default()).unwrap();
    let same = fit.assignments.iter().zip(&truth).all(|(a, t)| a == t);
    let flipped = fit.assignments.iter().zip(&truth).all(|(a, t)| *a == 1 - t);
    assert!(same || flipped);
    assert_eq!(kmeans(&h, 2, &KMeansConfig::default()).unwrap(), fit);
}

#[test]
fn kmeans_degenerate_cases() {
    let (h, _) = blobs();
    let fit = kmeans(&h, 1, &KMeansConfig::default()).unwrap();
    assert!(fit.assignments.iter().all(|&a| a == 0));
    assert!(kmeans(&h, 0, &KMeansConfig::default()).is_err());
    assert!(kmeans(&h, 41, &KMeansConfig::default()).is_err());

    let base = Matrix::from_fn(6, 3, |r, c| (r * 7 + c * 3) as f64);
    let dup_rows: Vec<usize> = (0..12).map(|i| i / 2).collect();
    let fit = kmeans(&base.gather_rows(&dup_rows), 6, &KMeansConfig::default()).unwrap();
    assert!(fit.inertia.abs() < 1e-12, "{}", fit.inertia);
}

fn one_hot(labels: &[usize], c: usize) -> Matrix {
    Matrix::from_fn(labels.len(), c, |r, j| if labels[r] == j { 1.0 } else { 0.0 })
}

#[test]
fn one_hot_embeddings_are_perfect() {
    let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
    let h = one_hot(&labels, 3);
    let split = split_nodes(300, (0.2, 0.2, 0.6), 1).unwrap();
    let probe = ProbeConfig {
        hidden: vec![],
        lr: 0.05,
        ..ProbeConfig::default()
    };
    let r = eval_node_classification(&h, &labels, &split, &probe).unwrap();
    assert_eq!(r.test_accuracy, 1.0);
    let c = eval_node_clustering(&h, &labels, &KMeansConfig::default()).unwrap();
    assert_eq!((c.nmi, c.ari), (1.0, 1.0));
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let n = 2100;
    let mut r = rng::seeded(3);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..7)).collect();
    let h = Matrix::from_fn(n, 16, |i, j| rng::keyed_unit(4, i as u64, j as u64));
    let split = split_nodes(n, (0.1, 0.1, 0.8), 2).unwrap();
    let probe = ProbeConfig {
        hidden: vec![32],
        epochs: 100,
        ..ProbeConfig::default()
    };
    let acc = eval_node_classification(&h, &labels, &split, &probe).unwrap().test_accuracy;
    let m = split.test_indices().len() as f64;
    let p = 1.0 / 7.0;
    assert!((acc - p).abs() <= 3.0 * (p * (1.0 - p) / m).sqrt(), "{acc}");
}

#[test]
fn probe_rejects_class_missing_from_train() {
    let labels = vec![0, 0, 1, 1, 2, 2];
    let h = one_hot(&labels, 3);
    let split = NodeSplit::from_indices(6, &[0, 2], &[1, 3], &[4, 5]).unwrap();
    let err = eval_node_classification(&h, &labels, &split, &ProbeConfig::default()).unwrap_err();
    assert!(err.to_string().contains("class 2"), "{err}");
}

fn small_decoder(epochs: usize) -> LinkDecoderConfig {
    LinkDecoderConfig {
        decode_channels: 32,
        epochs,
        batch_size: 512,
        ..LinkDecoderConfig::default()
    }
}

#[test]
fn block_signal_predicts_intra_block_links() {
    let b = sbm_generate(&SbmConfig {
        blocks: 2,
        nodes_per_block: 40,
        p_in: 0.9,
        p_out: 0.0,
        feat_dim: 2,
        feat_noise: 0.0,
        seed: 1,
    })
    .unwrap();
    let split = split_edges_lp(&b.graph, 0.05, 0.1, 2).unwrap();
    let h = one_hot(&b.labels, 2);
    let r = eval_link_prediction(&h, &split, &small_decoder(50)).unwrap();
    assert!(r.test_auc >= 0.9, "{r:?}");
}

#[test]
fn random_embeddings_give_chance_auc() {
    let b = sbm_generate(&SbmConfig {
        blocks: 2,
        nodes_per_block: 150,
        p_in: 0.1,
        p_out: 0.1,
        feat_dim: 2,
        feat_noise: 0.0,
        seed: 3,
    })
    .unwrap();
    let split = split_edges_lp(&b.graph, 0.05, 0.1, 4).unwrap();
    let h = Matrix::from_fn(300, 8, |i, j| rng::keyed_unit(9, i as u64, j as u64) - 0.5);
    let r = eval_link_prediction(&h, &split, &small_decoder(30)).unwrap();
    let (p, q) = (split.test_pos.len() as f64, split.test_neg.len() as f64);
    let sigma = ((p + q + 1.0) / (12.0 * p * q)).sqrt();
    assert!((r.test_auc - 0.5).abs() <= 3.0 * sigma, "{} (sigma {sigma})", r.test_auc);

    let r0 = eval_link_prediction(&h, &split, &small_decoder(0)).unwrap();
    assert!((0.0..=1.0).contains(&r0.test_auc) && r0.test_ap.is_finite());
    assert_eq!(r0.best_epoch, 0);
}

#[test]
fn link_prediction_requires_splits() {
    let h = Matrix::zeros(4, 2);
    let split = crate::graph::split::EdgeSplit {
        train: vec![(0, 1)],
        val_pos: vec![(1, 2)],
        val_neg: vec![(0, 3)],
        test_pos: vec![],
        test_neg: vec![],
    };
    let err = eval_link_prediction(&h, &split, &small_decoder(1)).unwrap_err();
    assert!(err.to_string().contains("test_pos"), "{err}");
}

#[test]
fn random_embeddings_cluster_at_chance() {
    let labels: Vec<usize> = (0..500).map(|i| i % 5).collect();
    let h = Matrix::from_fn(500, 8, |i, j| rng::keyed_unit(11, i as u64, j as u64));
    let c = eval_node_clustering(&h, &labels, &KMeansConfig::default()).unwrap();
    assert!(c.nmi <= 0.1, "{c:?}");
}

#[test]
fn evaluation_leaves_embeddings_and_encoder_untouched() {
    let b = sbm_generate(&SbmConfig {
        blocks: 2,
        nodes_per_block: 40,
        p_in: 0.2,
        p_out: 0.02,
        feat_dim: 4,
        feat_noise: 0.5,
        seed: 5,
    })
    .unwrap();
    let adj = Arc::new(normalize_adjacency(&b.graph));
    let method = SslMethod::new(&MethodConfig::new(MethodKind::Gbt).with_width(8), 4, 0).unwrap();
    let h = method.embed(&adj, &b.features).unwrap();
    let (h_sum, p_sum) = (h.checksum(), method.params().checksum());
    let split = b.split(&Default::default()).unwrap();
    eval_node_classification(&h, &b.labels, &split.nodes, &ProbeConfig { epochs: 5, ..Default::default() }).unwrap();
    eval_link_prediction(&h, &split.edges, &small_decoder(3)).unwrap();
    eval_node_clustering(&h, &b.labels, &KMeansConfig::default()).unwrap();
    assert_eq!(h.checksum(), h_sum);
    assert_eq!(method.params().checksum(), p_sum);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clustering_metrics_are_symmetric_bounded_and_label_free(
        u in prop::collection::vec(0usize..4, 2..50),
        seed in any::<u64>(),
    ) {
        let mut r = rng::seeded(seed);
        let v: Vec<usize> = u.iter().map(|_| r.random_range(0..4)).collect();
        let relabel = |x: &[usize]| x.iter().map(|&c| 10 + 3 * (3 - c)).collect::<Vec<_>>();
        let (n1, n2) = (nmi(&u, &v).unwrap(), nmi(&v, &u).unwrap());
        prop_assert!((n1 - n2).abs() < 1e-12 && (0.0..=1.0).contains(&n1));
        let (a1, a2) = (ari(&u, &v).unwrap(), ari(&v, &u).unwrap());
        prop_assert!((a1 - a2).abs() < 1e-12 && (-1.0..=1.0).contains(&a1));
        prop_assert!((nmi(&relabel(&u), &v).unwrap() - n1).abs() < 1e-12);
        prop_assert!((ari(&relabel(&u), &v).unwrap() - a1).abs() < 1e-12);
        prop_assert_eq!(ari(&u, &u).unwrap(), 1.0);
    }

    #[test]
    fn auc_is_invariant_to_monotone_rescoring(seed in any::<u64>()) {
        let (s, l) = random_scores(seed);
        let t: Vec<f64> = s.iter().map(|x| 3.0 * x.powi(3) + 1.0).collect();
        prop_assert_eq!(auc(&s, &l).unwrap(), auc(&t, &l).unwrap());
        prop_assert_eq!(ap(&s, &l).unwrap(), ap(&t, &l).unwrap());
    }
}
