//! Criterion benchmarks comparing the parallel and sequential filter cores.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use epi_core::model::{ContactMode, ModelKind, ModelSpec, ReportingMode};
use epi_core::obs::{ObsFamily, ObsModelSpec, Observation};
use epi_core::smc::{
    run_filter, ExecMode, FilterSettings, InferenceModel, InitStateDist, ParamPriors, ScalarPrior,
};

fn synthetic_model() -> InferenceModel {
    InferenceModel {
        spec: ModelSpec {
            kind: ModelKind::Sir,
            pop_size: 767,
            contact_mode: ContactMode::BrownianLog,
            reporting_mode: ReportingMode::Constant,
        },
        obs: ObsModelSpec { family: ObsFamily::Binomial, dynamic_rho: false },
        init: InitStateDist::Fixed([762, 5, 0]),
        priors: ParamPriors {
            gamma: Some(ScalarPrior::Gamma { shape: 11.0, rate: 20.0 }),
            lambda_beta: Some(ScalarPrior::Gamma { shape: 15.0, rate: 0.14 }),
            rho: Some(ScalarPrior::Beta { a: 90.0, b: 15.0 }),
            log_beta0: Some(ScalarPrior::Normal { mean: -6.5, sd: 0.5 }),
            ..Default::default()
        },
    }
}

fn synthetic_data() -> Vec<Observation> {
    let counts = [3u64, 9, 31, 75, 130, 176, 159, 116, 64, 31, 17, 9, 4, 2];
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| Observation { time: (i + 1) as f64, count: c })
        .collect()
}

fn bench_filter(c: &mut Criterion) {
    let model = synthetic_model();
    let data = synthetic_data();
    let mut group = c.benchmark_group("filter");
    group.sample_size(10);
    for &n in &[1_000usize, 10_000] {
        for (label, exec) in
            [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)]
        {
            let settings = FilterSettings { n_particles: n, seed: 7, exec, ..Default::default() };
            group.bench_with_input(BenchmarkId::new(label, n), &settings, |b, s| {
                b.iter(|| run_filter(&model, s, &data).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_filter);
criterion_main!(benches);
