use std::sync::Arc;

use proptest::prelude::*;

use super::losses::*;
use super::*;
use crate::graph::{normalize_adjacency, sbm_generate, DatasetBundle, SbmConfig, SparseGraph};
use crate::linalg::{Matrix, SparseMatrix};
use crate::rng;
use crate::sampling::{Batcher, SamplerConfig, Strategy};
use crate::tensor::{gradcheck, Tape, Var};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::from_fn(rows, cols, |r, c| 2.0 * rng::keyed_unit(seed, r as u64, c as u64) - 1.0)
}

/// Columns of a 4x4 Hadamard matrix without the constant column: zero mean,
/// unit population variance, mutually orthogonal.
fn hadamard_columns() -> Matrix {
    Matrix::from_rows(&[[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]).unwrap()
}

fn eval2(f: impl Fn(&mut Tape, Var, Var) -> crate::Result<Var>, a: &Matrix, b: &Matrix) -> f64 {
    let mut t = Tape::new();
    let (va, vb) = (t.constant(a.clone()), t.constant(b.clone()));
    let out = f(&mut t, va, vb).unwrap();
    t.scalar(out)
}

fn sbm(npb: usize, seed: u64) -> DatasetBundle {
    sbm_with(npb, 0.1, seed)
}

fn sbm_with(npb: usize, p_in: f64, seed: u64) -> DatasetBundle {
    sbm_generate(&SbmConfig {
        blocks: 2,
        nodes_per_block: npb,
        p_in,
        p_out: p_in / 10.0,
        feat_dim: 8,
        feat_noise: 0.5,
        seed,
    })
    .unwrap()
}

fn small(kind: MethodKind, width: usize) -> MethodConfig {
    let mut cfg = MethodConfig::new(kind).with_width(width);
    if kind == MethodKind::Bgrl {
        cfg.bgrl = Some(BgrlParams {
            predictor_hidden: width,
            ..BgrlParams::default()
        });
    }
    if kind == MethodKind::S2gae {
        cfg.s2gae = Some(S2gaeParams {
            decode_channels: width,
            ..S2gaeParams::default()
        });
    }
    cfg
}

fn inputs<'a>(b: &'a DatasetBundle, adj: &'a Arc<SparseMatrix>) -> Inputs<'a> {
    Inputs {
        graph: &b.graph,
        adj,
        features: &b.features,
    }
}

#[test]
fn zero_augmentation_is_identity() {
    let b = sbm(20, 1);
    let spec = AugmentationSpec {
        drop_edge_p: 0.0,
        drop_feat_p: 0.0,
        seed: 9,
    };
    let (g, x) = augment(&b.graph, &b.features, &spec).unwrap();
    assert_eq!(g, b.graph);
    assert_eq!(x, b.features);
}

#[test]
fn full_feature_drop_zeroes_everything() {
    let b = sbm(10, 2);
    let spec = AugmentationSpec {
        drop_edge_p: 0.0,
        drop_feat_p: 1.0,
        seed: 3,
    };
    let (_, x) = augment(&b.graph, &b.features, &spec).unwrap();
    assert!(x.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn half_edge_drop_is_binomial() {
    let edges: Vec<(usize, usize)> = (0..1000).map(|i| (2 * i, 2 * i + 1)).collect();
    let g = SparseGraph::from_edges(&edges, 2000).unwrap();
    let x = Matrix::zeros(2000, 1);
    for seed in 0..5 {
        let spec = AugmentationSpec {
            drop_edge_p: 0.5,
            drop_feat_p: 0.0,
            seed,
        };
        let (g2, _) = augment(&g, &x, &spec).unwrap();
        let sigma = (1000.0f64 * 0.25).sqrt();
        assert!((g2.num_edges() as f64 - 500.0).abs() <= 3.0 * sigma, "{}", g2.num_edges());
        assert!(g2.edges().all(|(u, v)| g.has_edge(u, v)));
        let (again, _) = augment(&g, &x, &spec).unwrap();
        assert_eq!(again, g2);
    }
    let bad = AugmentationSpec {
        drop_edge_p: 1.5,
        drop_feat_p: 0.0,
        seed: 0,
    };
    assert!(augment(&g, &x, &bad).is_err());
}

#[test]
fn block_edge_drop_matches_graph_edge_drop() {
    let b = sbm(30, 4);
    let adj = Arc::new(normalize_adjacency(&b.graph));
    let rule = EdgeDrop::Uniform(0.4);
    let dropped = drop_edges(&b.graph, &rule, 77);
    let all: Vec<usize> = (0..b.num_nodes()).collect();
    let block = super::augment::drop_block_edges(&b.graph, &adj, &all, &all, &rule, 77);
    for (r, c, _) in block.triplets() {
        assert!(r == c || dropped.has_edge(r, c));
    }
    assert_eq!(block.nnz(), b.num_nodes() + 2 * dropped.num_edges());
}

#[test]
fn degree_weighted_drop_prefers_low_degree_edges() {
    let star: Vec<(usize, usize)> = (1..8).map(|v| (0, v)).chain([(8, 9)]).collect();
    let g = SparseGraph::from_edges(&star, 10).unwrap();
    let rule = EdgeDrop::degree_weighted(&g, 0.3);
    assert!(rule.prob(&g, 8, 9) > rule.prob(&g, 0, 1));
    assert!(g.edges().all(|(u, v)| (0.0..=0.7).contains(&rule.prob(&g, u, v))));
}

#[test]
fn gbt_closed_forms() {
    let z = hadamard_columns();
    let l = z.cols() as f64;
    assert!(eval2(gbt_loss, &z, &z).abs() < 1e-6);
    let neg = eval2(gbt_loss, &z, &z.scale(-1.0));
    assert!((neg - 4.0 * l).abs() < 1e-6, "{neg}");
}

/// Independent column standardization: population variance, scaled by 1/√N.
fn cca_oracle_standardize(z: &Matrix) -> Vec<Vec<f64>> {
    let n = z.rows() as f64;
    (0..z.cols())
        .map(|j| {
            let col: Vec<f64> = (0..z.rows()).map(|r| z.get(r, j)).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            col.iter().map(|v| (v - mean) / (var + STANDARDIZE_EPS).sqrt() / n.sqrt()).collect()
        })
        .collect()
}

#[test]
fn cca_ssg_closed_forms() {
    let z = hadamard_columns();
    let v = eval2(|t, a, b| cca_ssg_loss(t, a, b, 1e-3), &z, &z);
    assert!(v.abs() < 1e-6, "{v}");

    let z1 = random_matrix(9, 3, 1);
    let z2 = z1.zip_map(&random_matrix(9, 3, 2), |a, e| a + 0.3 * e).unwrap();
    let (s1, s2) = (cca_oracle_standardize(&z1), cca_oracle_standardize(&z2));
    let expect: f64 = s1
        .iter()
        .flatten()
        .zip(s2.iter().flatten())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let got = eval2(|t, a, b| cca_ssg_loss(t, a, b, 0.0), &z1, &z2);
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    let mut t = Tape::new();
    let (a, b) = (t.constant(z1), t.constant(z2));
    assert!(cca_ssg_loss(&mut t, a, b, -1.0).is_err());
}

#[test]
fn bgrl_term_vanishes_on_agreement() {
    let p = random_matrix(5, 4, 3);
    let v = eval2(bgrl_term, &p, &p);
    assert!(v.abs() < 1e-12);
    let v = eval2(bgrl_term, &p, &p.scale(3.0));
    assert!(v.abs() < 1e-12);
    let v = eval2(bgrl_term, &p, &p.scale(-1.0));
    assert!((v - 4.0).abs() < 1e-12);
}

#[test]
fn ema_boundaries() {
    let mut online = crate::tensor::ParamStore::new();
    online.insert("a", random_matrix(2, 3, 1));
    online.insert("b", random_matrix(1, 3, 2));
    let mut target = crate::tensor::ParamStore::new();
    target.insert("a", random_matrix(2, 3, 5));
    let before = target.clone();
    ema_update(&mut target, &online, 1.0).unwrap();
    assert_eq!(target, before);
    ema_update(&mut target, &online, 0.0).unwrap();
    assert_eq!(target.get(target.id_of("a").unwrap()), online.get(online.id_of("a").unwrap()));
    let mut t2 = before.clone();
    ema_update(&mut t2, &online, 0.25).unwrap();
    let expect = before.get(before.id_of("a").unwrap()).zip_map(online.get(online.id_of("a").unwrap()), |t, o| 0.25 * t + 0.75 * o).unwrap();
    assert!(t2.get(t2.id_of("a").unwrap()).max_abs_diff(&expect) < 1e-15);
    assert!(ema_update(&mut t2, &online, 1.5).is_err());
}

#[test]
fn gca_two_orthogonal_nodes() {
    let u = Matrix::identity(2);
    let v = eval2(|t, a, b| gca_infonce_loss(t, a, b, 1.0), &u, &u);
    let e = std::f64::consts::E;
    let expect = -(e / (e + 2.0)).ln();
    assert!((v - expect).abs() < 1e-12, "{v}");
    assert!((expect - 0.5514).abs() < 1e-4);
}

#[test]
fn gca_uniform_softmax_limit() {
    for n in [2usize, 5, 9] {
        let u = random_matrix(n, 3, n as u64);
        let v = random_matrix(n, 3, n as u64 + 100);
        let got = eval2(|t, a, b| gca_infonce_loss(t, a, b, 1e9), &u, &v);
        assert!((got - ((2 * n - 1) as f64).ln()).abs() < 1e-6, "{n}: {got}");
    }
    let mut t = Tape::new();
    let a = t.constant(Matrix::identity(2));
    assert!(gca_infonce_loss(&mut t, a, a, 0.0).is_err());
}

#[test]
fn node_masking_counts_and_token() {
    let x = random_matrix(100, 4, 8);
    let token = [9.0, 8.0, 7.0, 6.0];
    let m = mask_nodes(&x, &token, 0.0, 1).unwrap();
    assert!(m.mask_index.is_empty());
    assert_eq!(m.x_masked, x);
    let m = mask_nodes(&x, &token, 0.5, 1).unwrap();
    assert_eq!(m.mask_index.len(), 50);
    for (k, &i) in m.mask_index.iter().enumerate() {
        assert_eq!(m.x_masked.row(i), &token);
        assert_eq!(m.targets.row(k), x.row(i));
    }
    for i in (0..100).filter(|i| !m.mask_index.contains(i)) {
        assert_eq!(m.x_masked.row(i), x.row(i));
    }
    assert_eq!(mask_nodes(&x, &token, 0.5, 1).unwrap(), m);
    assert!(mask_nodes(&x, &token, 1.5, 1).is_err());
}

#[test]
fn scaled_cosine_error_closed_forms() {
    let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
    let sce = |g: u32| move |t: &mut Tape, a: Var, b: Var| graphmae_loss(t, a, b, g);
    assert!(eval2(sce(3), &x, &x).abs() < 1e-15);
    let perp = Matrix::from_rows(&[[0.0, 1.0], [3.0, 0.0]]).unwrap();
    assert!((eval2(sce(1), &x, &perp) - 1.0).abs() < 1e-15);
    assert!((eval2(sce(2), &x, &x.scale(-1.0)) - 4.0).abs() < 1e-15);
    let mut t = Tape::new();
    let e = t.constant(Matrix::zeros(0, 2));
    assert!(graphmae_loss(&mut t, e, e, 1).is_err());
}

#[test]
fn edge_masking_counts() {
    let edges: Vec<(usize, usize)> = (0..10).map(|i| (i, i + 1)).collect();
    let g = SparseGraph::from_edges(&edges, 11).unwrap();
    let (vis, hidden) = mask_edges(&g, 0.5, 3).unwrap();
    assert_eq!(hidden.len(), 5);
    assert_eq!(vis.num_edges(), 5);
    for &(u, v) in &hidden {
        assert!(g.has_edge(u, v) && !vis.has_edge(u, v));
    }
    assert!(mask_edges(&SparseGraph::empty(4), 0.5, 0).is_err());
    assert!(mask_edges(&g, 1.0, 0).is_err());
}

#[test]
fn bce_closed_forms() {
    let zeros = Matrix::zeros(3, 1);
    let v = eval2(s2gae_loss, &zeros, &Matrix::zeros(2, 1));
    assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    let mut prev = v;
    for s in [1.0, 5.0, 20.0, 60.0] {
        let v = eval2(s2gae_loss, &Matrix::filled(3, 1, s), &Matrix::filled(2, 1, -s));
        assert!(v < prev && v >= 0.0);
        prev = v;
    }
    assert!(prev < 1e-20);
}

type LossFn = fn(&mut Tape, Var, Var) -> crate::Result<Var>;

fn all_losses() -> Vec<(&'static str, LossFn)> {
    vec![
        ("gbt", gbt_loss),
        ("cca_ssg", |t, a, b| cca_ssg_loss(t, a, b, 0.05)),
        ("bgrl", |t, a, b| bgrl_loss(t, a, b, b, a)),
        ("gca", |t, a, b| gca_infonce_loss(t, a, b, 0.5)),
        ("graphmae", |t, a, b| graphmae_loss(t, a, b, 3)),
        ("s2gae", |t, a, b| {
            let (a1, b1) = (t.row_sum(a), t.row_sum(b));
            s2gae_loss(t, a1, b1)
        }),
    ]
}

#[test]
fn loss_gradients_match_finite_differences() {
    for seed in 0..10u64 {
        let a = random_matrix(6, 3, seed);
        let b = random_matrix(6, 3, seed + 1000);
        for (name, f) in all_losses() {
            let g = |t: &mut Tape, v: &[Var]| f(t, v[0], v[1]);
            let ratio = gradcheck::check(&g, &[a.clone(), b.clone()], 1e-6, 1e-4, 1e-6).unwrap();
            assert!(ratio <= 1.0, "{name} seed {seed}: {ratio}");
        }
    }
}

#[test]
fn losses_are_invariant_to_joint_row_permutation() {
    let a = random_matrix(7, 3, 11);
    let b = random_matrix(7, 3, 12);
    let perm = [4, 0, 6, 2, 1, 5, 3];
    let (pa, pb) = (a.gather_rows(&perm), b.gather_rows(&perm));
    for (name, f) in all_losses() {
        let x = eval2(f, &a, &b);
        let y = eval2(f, &pa, &pb);
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{name}: {x} vs {y}");
    }
}

#[test]
fn config_rejects_foreign_tables_and_out_of_space_values() {
    let mut cfg = MethodConfig::new(MethodKind::Gbt);
    cfg.gca = Some(GcaParams::default());
    assert!(cfg.validate().unwrap_err().to_string().contains("method.gca"));

    let mut cfg = MethodConfig::new(MethodKind::Graphmae);
    cfg.graphmae = Some(GraphmaeParams {
        mask_rate: 1.5,
        ..GraphmaeParams::default()
    });
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("mask_rate") && err.contains("{0.4, 0.5, 0.6, 0.7, 0.8}"), "{err}");

    for kind in MethodKind::ALL {
        MethodConfig::new(kind).validate().unwrap();
        assert_eq!(MethodKind::parse(kind.as_str()).unwrap(), kind);
    }
    assert!(MethodKind::parse("dgi").is_err());

    let parsed: MethodConfig = toml::from_str("kind = \"bgrl\"\nlr = 0.001\n[bgrl]\nema_decay = 0.9\n").unwrap();
    assert_eq!(parsed.bgrl_params().ema_decay, 0.9);
    assert!(toml::from_str::<MethodConfig>("kind = \"bgrl\"\nlearning_rate = 0.1\n").is_err());
}

#[test]
fn bgrl_target_receives_no_gradient() {
    let b = sbm(15, 3);
    let adj = Arc::new(normalize_adjacency(&b.graph));
    let m = SslMethod::new(&small(MethodKind::Bgrl, 8), b.feat_dim(), 1).unwrap();
    let target = m.target_params().unwrap();
    let online_encoder = m.params().iter().filter(|(n, _)| n.starts_with("enc.")).count();
    assert_eq!(target.len(), online_encoder);
    let mut tape = Tape::new();
    let bound = m.params().bind(&mut tape);
    let tb = target.bind_frozen(&mut tape);
    let loss = m.loss(&mut tape, &bound, &inputs(&b, &adj), None, 5).unwrap();
    let mut grads = tape.backward(loss).unwrap();
    assert!(tb.collect(&mut grads).iter().all(Option::is_none));
}

#[test]
fn bgrl_target_tracks_online_by_ema() {
    let b = sbm(15, 3);
    let adj = Arc::new(normalize_adjacency(&b.graph));
    let mut cfg = small(MethodKind::Bgrl, 8);
    cfg.bgrl.as_mut().unwrap().ema_decay = 0.0;
    let mut m = SslMethod::new(&cfg, b.feat_dim(), 1).unwrap();
    m.training_step(&inputs(&b, &adj), None).unwrap();
    let t = m.target_params().unwrap();
    for (id, (_, v)) in t.ids().zip(t.iter()) {
        assert_eq!(v, m.params().get(id));
    }
    cfg.bgrl.as_mut().unwrap().ema_decay = 1.0;
    let mut m = SslMethod::new(&cfg, b.feat_dim(), 1).unwrap();
    let before = m.target_params().unwrap().clone();
    m.training_step(&inputs(&b, &adj), None).unwrap();
    assert_eq!(m.target_params().unwrap(), &before);
}

#[test]
fn method_gradients_match_finite_differences() {
    let b = sbm_with(6, 0.7, 7);
    assert!((0..b.num_nodes()).all(|v| b.graph.degree(v) > 0));
    let adj = Arc::new(normalize_adjacency(&b.graph));
    for kind in MethodKind::ALL {
        let mut m = SslMethod::new(&small(kind, 4), b.feat_dim(), 3).unwrap();
        let mut p = m.params().clone();
        let ids: Vec<_> = p.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            if p.get(id).as_slice().iter().all(|&v| v == 0.0) {
                let (r, c) = p.get(id).shape();
                *p.get_mut(id) = random_matrix(r, c, 500 + k as u64).scale(0.5);
            }
        }
        m.load_params(&p).unwrap();
        let inp = inputs(&b, &adj);
        let ratio = gradcheck::check_params(m.params(), |t, bd| m.loss(t, bd, &inp, None, 21), 1e-6, 1e-4, 1e-6).unwrap();
        assert!(ratio <= 1.0, "{kind}: {ratio}");
    }
}

fn sampler(strategy: Strategy) -> SamplerConfig {
    SamplerConfig {
        strategy,
        batch_size: 32,
        fanouts: vec![5],
        num_clusters: 4,
        clusters_per_batch: 2,
        renormalize: false,
    }
}

#[test]
fn every_method_runs_under_every_strategy() {
    let b = sbm(50, 5);
    let graph = Arc::new(b.graph.clone());
    let adj = Arc::new(normalize_adjacency(&b.graph));
    for kind in MethodKind::ALL {
        for strategy in [Strategy::Full, Strategy::Node, Strategy::Subgraph] {
            let mut m = SslMethod::new(&small(kind, 8), b.feat_dim(), 2).unwrap();
            let batcher = Batcher::new(sampler(strategy), Arc::clone(&graph), Arc::clone(&adj), m.depth(), 4).unwrap();
            for epoch in 0..2 {
                for plan in batcher.epoch(epoch).unwrap() {
                    let s = m.training_step(&inputs(&b, &adj), Some(&plan)).unwrap();
                    assert!(s.loss.is_finite() && s.retained_elements > 0, "{kind}/{strategy:?}");
                }
            }
            let h = m.embed(&adj, &b.features).unwrap();
            assert_eq!(h.shape(), (100, m.embed_dim()), "{kind}");
            assert!(h.is_finite());
        }
    }
}

#[test]
fn two_hundred_steps_reduce_every_loss() {
    let b = sbm(50, 6);
    let adj = Arc::new(normalize_adjacency(&b.graph));
    let probe = |m: &SslMethod| -> f64 {
        (0..8u64).map(|s| m.evaluate_loss(&inputs(&b, &adj), None, 1000 + s).unwrap()).sum::<f64>() / 8.0
    };
    for kind in MethodKind::ALL {
        let mut m = SslMethod::new(&small(kind, 16), b.feat_dim(), 9).unwrap();
        let before = probe(&m);
        for _ in 0..200 {
            m.training_step(&inputs(&b, &adj), None).unwrap();
        }
        let after = probe(&m);
        assert!(after < before, "{kind}: {before} -> {after}");
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let b = sbm(40, 8);
    let graph = Arc::new(b.graph.clone());
    let adj = Arc::new(normalize_adjacency(&b.graph));
    let trace = |kind: MethodKind| {
        let mut m = SslMethod::new(&small(kind, 8), b.feat_dim(), 13).unwrap();
        let batcher = Batcher::new(sampler(Strategy::Node), Arc::clone(&graph), Arc::clone(&adj), m.depth(), 4).unwrap();
        let mut out = Vec::new();
        for e in 0..3 {
            for plan in batcher.epoch(e).unwrap() {
                out.push(m.training_step(&inputs(&b, &adj), Some(&plan)).unwrap().loss.to_bits());
            }
        }
        (out, m.params().checksum())
    };
    for kind in MethodKind::ALL {
        assert_eq!(trace(kind), trace(kind), "{kind}");
    }
}

#[test]
fn wrong_depth_plan_is_rejected() {
    let b = sbm(10, 1);
    let graph = Arc::new(b.graph.clone());
    let adj = Arc::new(normalize_adjacency(&b.graph));
    let mut m = SslMethod::new(&small(MethodKind::Graphmae, 8), b.feat_dim(), 0).unwrap();
    assert_eq!(m.depth(), 3);
    let batcher = Batcher::new(sampler(Strategy::Node), graph, Arc::clone(&adj), 2, 0).unwrap();
    let plan = &batcher.epoch(0).unwrap()[0];
    assert!(m.training_step(&inputs(&b, &adj), Some(plan)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn masking_counts_are_floors(n in 1usize..300, rate in 0.0f64..1.0, seed in any::<u64>()) {
        let x = Matrix::zeros(n, 1);
        let m = mask_nodes(&x, &[1.0], rate, seed).unwrap();
        prop_assert_eq!(m.mask_index.len(), crate::graph::split::floor_count(rate, n));
        prop_assert!(m.mask_index.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn feature_drop_zeroes_whole_columns(p in 0.0f64..1.0, seed in any::<u64>()) {
        let x = Matrix::filled(5, 40, 1.0);
        let y = drop_features(&x, &FeatureDrop::Uniform(p), seed);
        for j in 0..40 {
            let col: Vec<f64> = (0..5).map(|r| y.get(r, j)).collect();
            prop_assert!(col.iter().all(|&v| v == 0.0) || col.iter().all(|&v| v == 1.0));
            prop_assert_eq!(col[0] == 1.0, column_kept(&FeatureDrop::Uniform(p), seed, j));
        }
    }
}

