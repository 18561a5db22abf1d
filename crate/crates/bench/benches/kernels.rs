use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lidqr::baselines::rq_fit;
use lidqr::experiments::gen_example1;
use lidqr::sampler::{init_parallel, mh_step, LidSampler, Target};
use lidqr::{rng, LidModel, PriorSpec, QuantileGrid};
use std::hint::black_box;

fn loglik(c: &mut Criterion) {
    let data = gen_example1(200, 1).unwrap();
    let mut g = c.benchmark_group("lid_loglik");
    for m in [15, 63] {
        let grid = QuantileGrid::make(m, 0).unwrap();
        let model = LidModel::new(init_parallel(&data, &grid).unwrap(), grid, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(m), &model, |b, model| b.iter(|| model.loglik(black_box(&data)).unwrap()));
    }
    g.finish();
}

fn sampler_steps(c: &mut Criterion) {
    let data = gen_example1(100, 2).unwrap();
    let grid = QuantileGrid::make(15, 0).unwrap();
    let prior = PriorSpec::iid(30, 0.0, 10.0).unwrap();
    let target = Target { data: &data, grid: &grid, prior: &prior, tail_sd: 1.0, proposal_sd: 0.1 };
    let start = init_parallel(&data, &grid).unwrap();
    let mut g = c.benchmark_group("sampler_1000_steps");
    g.bench_function("incremental", |b| {
        b.iter(|| {
            let mut s = LidSampler::new(start.clone(), &target).unwrap();
            let mut r = rng::seeded(3);
            for _ in 0..1000 {
                s.step(&mut r).unwrap();
            }
            s.loglik()
        })
    });
    g.bench_function("full_recompute", |b| {
        b.iter(|| {
            let mut state = start.clone();
            let mut ll = target.loglik(&state).unwrap();
            let mut r = rng::seeded(3);
            for _ in 0..1000 {
                let o = mh_step(&state, ll, &target, &mut r).unwrap();
                state = o.state;
                ll = o.loglik;
            }
            ll
        })
    });
    g.finish();
}

fn rq(c: &mut Criterion) {
    let mut g = c.benchmark_group("rq_fit");
    for n in [100, 1000] {
        let data = gen_example1(n, 5).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| b.iter(|| rq_fit(black_box(d), 0.5, None).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, loglik, sampler_steps, rq);
criterion_main!(benches);
