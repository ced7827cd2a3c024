use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use sparsemix::model::{E0Policy, MeanPrior, PriorSpec};
use sparsemix::randkit::{gig_sample, RngStream};
use sparsemix::sampler::Sweeper;
use sparsemix_bench::equal_weights_start;

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(20);
    for (name, spec) in [
        ("standard_k15", PriorSpec::standard(15)),
        ("ng_k15", PriorSpec::new(15, MeanPrior::normal_gamma(), E0Policy::Fixed { value: 0.01 })),
        ("standard_k30", PriorSpec::standard(30)),
    ] {
        let (data, hyper, state, rng) = equal_weights_start(&spec, 1);
        let mut sweeper = Sweeper::new(&data, &hyper, &spec);
        group.bench_function(name, |b| {
            b.iter_batched_ref(
                || (state.clone(), rng.clone()),
                |(s, r)| sweeper.sweep(s, r, true).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn gig(c: &mut Criterion) {
    let mut group = c.benchmark_group("gig");
    let mut rng = RngStream::new(2, 0);
    for (name, p, a, b) in
        [("lambda_update", -1.5, 1.0, 0.3), ("near_gamma", 2.0, 2.0, 1e-6), ("concentrated", 0.5, 50.0, 50.0)]
    {
        group.bench_function(name, |bench| bench.iter(|| gig_sample(p, a, b, &mut rng).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, sweep, gig);
criterion_main!(benches);
