use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::graph::{normalize_adjacency, SparseGraph};
use crate::linalg::SparseMatrix;
use crate::rng;
use crate::sampling::{full_batch_plan, node_sampling_plan, partition_graph, subgraph_batch};
use crate::tensor::gradcheck;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::from_fn(rows, cols, |r, c| 2.0 * rng::keyed_unit(seed, r as u64, c as u64) - 1.0)
}

fn random_graph(n: usize, p: f64, seed: u64) -> SparseGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng::keyed_unit(seed, u as u64, v as u64) < p {
                edges.push((u, v));
            }
        }
    }
    SparseGraph::from_edges(&edges, n).unwrap()
}

fn build(cfg: &EncoderConfig, in_dim: usize, seed: u64) -> (Encoder, ParamStore) {
    let mut store = ParamStore::new();
    let enc = Encoder::new(cfg, in_dim, "enc", &mut store, &mut rng::seeded(seed)).unwrap();
    (enc, store)
}

fn gat_cfg(dims: Vec<usize>, heads: usize) -> EncoderConfig {
    EncoderConfig::gat(
        dims,
        GatConfig {
            num_heads: heads,
            attn_drop: 0.0,
            negative_slope: 0.2,
        },
    )
}

fn run_full(enc: &Encoder, store: &ParamStore, adj: &Arc<SparseMatrix>, x: &Matrix) -> Matrix {
    enc.embed(store, adj, x).unwrap()
}

fn run_plan(enc: &Encoder, store: &ParamStore, plan: &crate::sampling::BatchPlan, x: &Matrix) -> Matrix {
    let mut tape = crate::tensor::Tape::new();
    let bound = store.bind_frozen(&mut tape);
    let xv = tape.constant(x.gather_rows(plan.input_nodes()));
    let outs = enc.forward_minibatch(&mut tape, &bound, plan, xv, Mode::Eval).unwrap();
    tape.value(*outs.last().unwrap()).clone()
}

#[test]
fn identity_layer_on_empty_graph_returns_features() {
    let (enc, mut store) = build(&EncoderConfig::gcn(vec![3]), 3, 0);
    let w = store.id_of("enc.0.weight").unwrap();
    *store.get_mut(w) = Matrix::identity(3);
    let g = SparseGraph::empty(4);
    let adj = Arc::new(normalize_adjacency(&g));
    let x = random_matrix(4, 3, 1);
    assert_eq!(run_full(&enc, &store, &adj, &x), x);
}

#[test]
fn two_layer_gcn_on_path_matches_dense_reference() {
    let cfg = EncoderConfig {
        activation: Activation::Relu,
        ..EncoderConfig::gcn(vec![3, 2])
    };
    let (enc, store) = build(&cfg, 2, 5);
    let g = SparseGraph::from_edges(&[(0, 1), (1, 2)], 3).unwrap();
    let adj = Arc::new(normalize_adjacency(&g));
    let x = random_matrix(3, 2, 2);

    let deg = [2.0f64, 3.0, 2.0];
    let a = |u: usize, v: usize| -> f64 {
        if u == v || u.abs_diff(v) == 1 {
            1.0 / (deg[u] * deg[v]).sqrt()
        } else {
            0.0
        }
    };
    let dense_layer = |h: &Vec<Vec<f64>>, w: &Matrix, b: &Matrix, relu: bool| -> Vec<Vec<f64>> {
        let hw: Vec<Vec<f64>> = h
            .iter()
            .map(|row| (0..w.cols()).map(|j| (0..w.rows()).map(|k| row[k] * w.get(k, j)).sum()).collect())
            .collect();
        (0..3)
            .map(|u| {
                (0..w.cols())
                    .map(|j| {
                        let v = (0..3).map(|v| a(u, v) * hw[v][j]).sum::<f64>() + b.get(0, j);
                        if relu {
                            v.max(0.0)
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let p = |n: &str| store.get(store.id_of(n).unwrap());
    let h1 = dense_layer(&x.to_rows(), p("enc.0.weight"), p("enc.0.bias"), true);
    let h2 = dense_layer(&h1, p("enc.1.weight"), p("enc.1.bias"), false);
    let got = run_full(&enc, &store, &adj, &x);
    for (r, row) in h2.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            assert!((got.get(r, c) - v).abs() < 1e-12);
        }
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let g = random_graph(7, 0.4, 3);
    let adj = Arc::new(normalize_adjacency(&g));
    let x = random_matrix(7, 3, 4);
    let cfgs = [
        EncoderConfig::gcn(vec![4, 3]),
        EncoderConfig {
            activation: Activation::Elu,
            ..EncoderConfig::gcn(vec![4, 3])
        },
        gat_cfg(vec![4, 3], 2),
        EncoderConfig {
            kind: EncoderKind::Mlp,
            ..EncoderConfig::gcn(vec![4, 2])
        },
    ];
    for cfg in cfgs {
        let (enc, store) = build(&cfg, 3, 8);
        let ratio = gradcheck::check_params(
            &store,
            |t, b| {
                let xv = t.constant(x.clone());
                let h = enc.forward_full(t, b, &adj, xv, Mode::Eval)?;
                let sq = t.powi(*h.last().unwrap(), 2);
                Ok(t.sum(sq))
            },
            1e-6,
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(ratio <= 1.0, "{:?}: ratio {ratio}", cfg.kind);
    }
}

#[test]
fn petersen_relabeling_permutes_rows_exactly() {
    let outer: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
    let spokes: Vec<(usize, usize)> = (0..5).map(|i| (i, i + 5)).collect();
    let inner: Vec<(usize, usize)> = (0..5).map(|i| (5 + i, 5 + (i + 2) % 5)).collect();
    let edges: Vec<_> = outer.into_iter().chain(spokes).chain(inner).collect();
    let g = SparseGraph::from_edges(&edges, 10).unwrap();
    let adj = Arc::new(normalize_adjacency(&g));

    let dyadic = |rows: usize, cols: usize, seed: u64| {
        Matrix::from_fn(rows, cols, |r, c| {
            (rng::keyed_unit(seed, r as u64, c as u64) * 16.0).floor() / 8.0 - 1.0
        })
    };
    let (enc, mut store) = build(&EncoderConfig::gcn(vec![4, 3]), 5, 1);
    let ids: Vec<_> = store.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let (r, c) = store.get(id).shape();
        if (r, c) != (1, 1) {
            *store.get_mut(id) = dyadic(r, c, 100 + i as u64);
        }
    }
    let x = dyadic(10, 5, 7);
    let h = run_full(&enc, &store, &adj, &x);

    let perm = [3, 7, 0, 9, 5, 1, 8, 2, 6, 4];
    let gp = g.permute(&perm).unwrap();
    let adj_p = Arc::new(normalize_adjacency(&gp));
    let mut xp = Matrix::zeros(10, 5);
    for v in 0..10 {
        xp.row_mut(perm[v]).copy_from_slice(x.row(v));
    }
    let hp = run_full(&enc, &store, &adj_p, &xp);
    for v in 0..10 {
        assert_eq!(hp.row(perm[v]), h.row(v));
    }
}

#[test]
fn single_self_loop_attention_is_one() {
    let (enc, store) = build(&gat_cfg(vec![3], 2), 3, 2);
    let block = Arc::new(SparseMatrix::identity(1));
    let h = random_matrix(1, 3, 3);
    let (out, weights) = enc.gat_attention(&store, 0, &block, &h).unwrap();
    for w in &weights {
        assert_eq!(w.as_slice(), &[1.0]);
    }
    let mut expect = Matrix::zeros(1, 3);
    for head in 0..2 {
        let wh = h.matmul(store.get(store.id_of(&format!("enc.0.h{head}.weight")).unwrap())).unwrap();
        expect.add_assign(&wh).unwrap();
    }
    assert!(out.max_abs_diff(&expect.scale(0.5)) < 1e-15);
}

#[test]
fn symmetric_neighbors_share_attention() {
    let (enc, store) = build(&gat_cfg(vec![3], 1), 2, 4);
    let block = Arc::new(SparseMatrix::from_rows(3, vec![vec![(1, 1.0), (2, 1.0)]]).unwrap());
    let h = Matrix::from_rows(&[[0.3, -0.2], [1.0, 2.0], [1.0, 2.0]]).unwrap();
    let (_, weights) = enc.gat_attention(&store, 0, &block, &h).unwrap();
    assert_eq!(weights[0], vec![0.5, 0.5]);
}

#[test]
fn config_validation() {
    assert!(EncoderConfig::gcn(vec![]).validate().is_err());
    assert!(EncoderConfig::gcn(vec![4, 0]).validate().is_err());
    assert!(gat_cfg(vec![6, 4], 4).validate().is_err());
    assert!(gat_cfg(vec![8, 3], 4).validate().is_ok());
    let mut c = EncoderConfig::gcn(vec![4]);
    c.gat = Some(GatConfig::default());
    assert!(c.validate().is_err());
    c.kind = EncoderKind::Gat;
    assert!(c.validate().is_ok());
    c.gat = None;
    assert!(c.validate().is_err());
}

#[test]
fn mlp_head_shapes_and_eval_determinism() {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "head", &[5, 8, 3], Activation::Relu, 0.5, &mut rng::seeded(1)).unwrap();
    let x = random_matrix(4, 5, 2);
    let a = mlp.predict(&store, &x).unwrap();
    assert_eq!(a.shape(), (4, 3));
    assert_eq!(a, mlp.predict(&store, &x).unwrap());
    assert!(Mlp::new(&mut store, "bad", &[5], Activation::Relu, 0.0, &mut rng::seeded(1)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn minibatch_matches_full_forward(n in 1usize..40, p in 0.0f64..0.3, gs in any::<u64>(), kind in 0usize..3) {
        let g = random_graph(n, p, gs);
        let adj = Arc::new(normalize_adjacency(&g));
        let cfg = match kind {
            0 => EncoderConfig::gcn(vec![5, 3]),
            1 => gat_cfg(vec![4, 3], 2),
            _ => EncoderConfig { kind: EncoderKind::Mlp, ..EncoderConfig::gcn(vec![5, 3]) },
        };
        let (enc, store) = build(&cfg, 4, gs);
        let x = random_matrix(n, 4, gs ^ 1);
        let full = run_full(&enc, &store, &adj, &x);

        let fp = full_batch_plan(&g, &adj, 2).unwrap();
        prop_assert!(run_plan(&enc, &store, &fp, &x).max_abs_diff(&full) <= 1e-12);

        let seeds: Vec<usize> = (0..n).rev().step_by(2).collect();
        let np = node_sampling_plan(&g, &adj, &seeds, &[n, n], gs).unwrap();
        prop_assert_eq!(np.max_block_deviation(&adj), 0.0);
        let got = run_plan(&enc, &store, &np, &x);
        prop_assert!(got.max_abs_diff(&full.gather_rows(&seeds)) <= 1e-12);

        let k = n.min(3);
        let part = partition_graph(&g, k, gs).unwrap();
        let all: Vec<usize> = (0..k).collect();
        let sp = subgraph_batch(&g, &adj, &part, &all, 2, false).unwrap();
        prop_assert!(run_plan(&enc, &store, &sp, &x).max_abs_diff(&full) <= 1e-12);
    }

    #[test]
    fn attention_rows_are_distributions(n in 1usize..30, p in 0.0f64..0.5, gs in any::<u64>()) {
        let g = random_graph(n, p, gs);
        let adj = Arc::new(normalize_adjacency(&g));
        let (enc, store) = build(&gat_cfg(vec![4], 3), 3, gs);
        let h = random_matrix(n, 3, gs ^ 7);
        let (_, weights) = enc.gat_attention(&store, 0, &adj, &h).unwrap();
        for w in weights {
            for r in 0..n {
                let (s, e) = (adj.row_offsets()[r], adj.row_offsets()[r + 1]);
                prop_assert!((w[s..e].iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }
}
