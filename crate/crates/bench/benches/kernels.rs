use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use graphfm::experiment::PreparedData;
use graphfm::graph::{normalize_adjacency, sbm_generate, SbmConfig, SplitConfig};
use graphfm::sampling::{Batcher, SamplerConfig, Strategy};
use graphfm::ssl::{MethodConfig, MethodKind, SslMethod};
use graphfm::{DatasetBundle, Matrix};

fn sbm(nodes_per_block: usize, feat_dim: usize) -> DatasetBundle {
    sbm_generate(&SbmConfig {
        blocks: 4,
        nodes_per_block,
        p_in: 8.0 / nodes_per_block as f64,
        p_out: 0.5 / nodes_per_block as f64,
        feat_dim,
        feat_noise: 1.0,
        seed: 7,
    })
    .unwrap()
}

fn dense(rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |r, c| ((r * 31 + c * 17) % 97) as f64 / 97.0 - 0.5)
}

fn bench_spmm(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmm");
    for nodes_per_block in [250, 1000, 5000] {
        let b = sbm(nodes_per_block, 8);
        let adj = normalize_adjacency(&b.graph);
        let x = dense(adj.cols(), 64);
        group.throughput(Throughput::Elements(adj.nnz() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(adj.rows()), &(adj, x), |bench, (adj, x)| {
            bench.iter(|| adj.spmm(black_box(x)).unwrap())
        });
    }
    group.finish();
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [256, 1024, 4096] {
        let (a, w) = (dense(n, 128), dense(128, 128));
        group.throughput(Throughput::Elements((n * 128 * 128) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &(a, w), |bench, (a, w)| {
            bench.iter(|| black_box(a).matmul(w).unwrap())
        });
    }
    group.finish();
}

fn bench_training_step(c: &mut Criterion) {
    let data = PreparedData::new(sbm(500, 32), &SplitConfig::default()).unwrap();
    let mut group = c.benchmark_group("training_epoch");
    group.sample_size(10);
    for kind in [MethodKind::Gbt, MethodKind::Graphmae] {
        for strategy in [Strategy::Full, Strategy::Node, Strategy::Subgraph] {
            let cfg = MethodConfig::new(kind);
            let mut method = SslMethod::new(&cfg, data.bundle.feat_dim(), 0).unwrap();
            let batcher = Batcher::new(
                SamplerConfig {
                    strategy,
                    ..SamplerConfig::default()
                },
                Arc::clone(&data.graph),
                Arc::clone(&data.adj),
                method.depth(),
                0,
            )
            .unwrap();
            let plans = batcher.epoch(0).unwrap();
            let id = BenchmarkId::new(kind.as_str(), strategy.as_str());
            group.bench_function(id, |bench| {
                bench.iter(|| {
                    for plan in &plans {
                        black_box(method.training_step(&data.inputs(), Some(plan)).unwrap());
                    }
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_spmm, bench_matmul, bench_training_step);
criterion_main!(benches);
