use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trxos::data::{DatasetIndex, Expectations, Split, SynthSuite};
use trxos::eval::ScoreTable;
use trxos::exec::{set_execution, Execution};
use trxos::model::{Model, ModelConfig};
use trxos::tensor::Tensor;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (a, b) = (random(256, 256, &mut rng), random(256, 256, &mut rng));
    let mut group = c.benchmark_group("matmul_256");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            set_execution(mode);
            bench.iter(|| a.matmul(&b).unwrap());
        });
    }
    group.finish();
}

fn small_suite() -> SynthSuite {
    SynthSuite { per_class: 6, ..SynthSuite::builtin() }
}

fn score_table(c: &mut Criterion) {
    let expect = Expectations { frames: Some(16), joints: Some(24), pelvis: 0 };
    let test = DatasetIndex::from_suite(&small_suite(), 1, &expect).unwrap().split(Split::Test);
    let cfg = ModelConfig { embed_dim: 32, query_dim: 32, key_dim: 32, value_dim: 32, ..Default::default() };
    let model = Model::init(cfg, 0).unwrap();
    let mut group = c.benchmark_group("score_table");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            set_execution(mode);
            bench.iter(|| ScoreTable::build(&model, &test).unwrap());
        });
    }
    group.finish();
}

fn synth(c: &mut Criterion) {
    let suite = small_suite();
    let mut group = c.benchmark_group("synth_generate");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            set_execution(mode);
            bench.iter(|| suite.generate(3));
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, score_table, synth);
criterion_main!(benches);
