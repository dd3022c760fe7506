use criterion::{criterion_group, criterion_main, Criterion};

use cylwave_bench::standard_setup;
use cylwave_core::carleman::{self, CarlemanSetup};
use cylwave_core::{assemble_gradient, solve_adjoint, solve_forward, HistoryMode, MisfitResidual};

// 100 steps on the 37 x 17 x 17 grid
const T: f64 = 0.3;

fn forward(c: &mut Criterion) {
    let (model, p, _) = standard_setup(T);
    c.bench_function("forward_100_steps", |b| b.iter(|| solve_forward(&model, &p, HistoryMode::None).unwrap()));
    c.bench_function("forward_100_steps_with_history", |b| {
        b.iter(|| solve_forward(&model, &p, HistoryMode::Every(1)).unwrap())
    });
}

fn gradient(c: &mut Criterion) {
    let (model, p, mask) = standard_setup(T);
    let (hist, rec) = solve_forward(&model, &p, HistoryMode::Every(1)).unwrap();
    let mut obs = rec.clone();
    obs.samples.iter_mut().for_each(|v| *v *= 1.1);
    let residual = MisfitResidual::new(&rec, &obs, 0.0).unwrap();
    let guess = model.space_part().clone();
    c.bench_function("adjoint_and_gradient_100_steps", |b| {
        b.iter(|| {
            let lam = solve_adjoint(&model, &p, &residual).unwrap();
            assemble_gradient(&p, &hist, &lam, model.space_part(), &guess, 0.01, &mask).unwrap()
        })
    });
}

fn carleman_chain(c: &mut Criterion) {
    let template = CarlemanSetup::monotone_fixture();
    let f = carleman::monotone_fixture_model();
    c.bench_function("admissible_chain_1000_samples", |b| {
        b.iter(|| carleman::admissible_chain(&template, &f, 1000, 1).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = forward, gradient, carleman_chain
}
criterion_main!(benches);
