//! Parallel-vs-sequential comparison of the three data-parallel surfaces:
//! finite-difference gradients (per-coordinate), multi-seed training
//! sweeps (per-seed), and the gradcheck audit (per-case). Requires the
//! `parallel` feature so both code paths exist side by side.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tmsgd::autodiff::{finite_difference_gradient, finite_difference_gradient_seq, Tensor};
use tmsgd::harness::{
    parse_train_config_str, run_gradcheck, run_seed_sweep, run_seed_sweep_seq, TrainConfig,
};
use tmsgd::models::{Activation, MlpModel, Targets, Task};
use tmsgd::optim::Method;
use tmsgd::rng::SplitMix64;

fn fd_setup() -> (MlpModel, Tensor, Targets) {
    let mut rng = SplitMix64::new(1);
    let model = MlpModel::init(&[8, 24, 24, 4], Activation::Tanh, Task::Regression, 2).unwrap();
    let batch = Tensor::matrix(16, 8, (0..128).map(|_| rng.gaussian()).collect()).unwrap();
    let targets =
        Targets::Values(Tensor::matrix(16, 4, (0..64).map(|_| rng.gaussian()).collect()).unwrap());
    (model, batch, targets)
}

fn bench_fd_gradient(c: &mut Criterion) {
    let (model, batch, targets) = fd_setup();
    let params: Vec<Tensor> = model.parameters().into_iter().cloned().collect();
    let eval = move |ps: &[Tensor]| {
        let mut m = model.clone();
        m.set_parameters(ps).unwrap();
        m.loss_value(&batch, &targets).unwrap()
    };

    let mut group = c.benchmark_group("fd_gradient");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| finite_difference_gradient(&eval, &params, 1e-5))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| finite_difference_gradient_seq(&eval, &params, 1e-5))
    });
    group.finish();
}

fn sweep_base() -> TrainConfig {
    let text = "task = two_moons\nmethod = sgd\nlearning_rate = 0.05\nepochs = 10\n\
                batch_size = 20\ndata_seed = 0\ninit_seed = 0\nhidden = 16\nnoise = 0.15\nn = 120\n";
    parse_train_config_str(text).unwrap().0
}

fn bench_seed_sweep(c: &mut Criterion) {
    let base = sweep_base();
    let seeds: Vec<u64> = (1..=8).collect();
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter_batched(
            || (base.clone(), seeds.clone()),
            |(cfg, seeds)| run_seed_sweep(&cfg, Method::Sgd, Method::TmSgd, &seeds).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("sequential", |b| {
        b.iter_batched(
            || (base.clone(), seeds.clone()),
            |(cfg, seeds)| run_seed_sweep_seq(&cfg, Method::Sgd, Method::TmSgd, &seeds).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_gradcheck(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradcheck");
    group.sample_size(10);
    // The audit itself fans out per case; compare against a single-thread pool.
    group.bench_function("parallel", |b| b.iter(|| run_gradcheck(0).unwrap()));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    group.bench_function("single_thread_pool", |b| {
        b.iter(|| pool.install(|| run_gradcheck(0).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_fd_gradient, bench_seed_sweep, bench_gradcheck);
criterion_main!(benches);
