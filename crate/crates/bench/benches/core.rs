use std::hint::black_box;

use ara_core::agents::{AgentConfig, QrAgent, TransitionRef};
use ara_core::approx::{Activation, Mlp, MlpSpec};
use ara_core::distcore::{distorted_mean, RiskPolicy};
use ara_core::rnd::{RndConfig, RndEstimator};
use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn distortion(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("distorted_mean");
    for n in [8usize, 32, 200] {
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &values, |b, v| {
            b.iter(|| distorted_mean(black_box(v), black_box(0.25)))
        });
    }
    group.finish();
}

fn mlp(c: &mut Criterion) {
    let net = Mlp::new(&MlpSpec::new(vec![4, 64, 64, 96], Activation::Relu, 1)).unwrap();
    let x = [0.3, -1.2, 0.7, 0.05];
    let grad_out = vec![0.01; 96];
    c.bench_function("mlp_forward_4x64x64x96", |b| {
        b.iter(|| net.forward(black_box(&x)).unwrap())
    });
    c.bench_function("mlp_forward_backward_4x64x64x96", |b| {
        b.iter(|| {
            let trace = net.forward_trace(black_box(&x)).unwrap();
            net.backward(&trace, &grad_out).unwrap()
        })
    });
}

fn updates(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = AgentConfig {
        batch_size: 64,
        hidden_layers: vec![64, 64],
        risk_policy: RiskPolicy::StaticCvar { alpha: 0.5 },
        ..AgentConfig::default()
    };
    let obs: Vec<Vec<f64>> = (0..65)
        .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let batch: Vec<TransitionRef<'_>> = (0..64)
        .map(|i| TransitionRef {
            observation: &obs[i],
            action: i % 3,
            reward: rng.gen_range(-1.0..1.0),
            next_observation: &obs[i + 1],
            terminal: i % 17 == 0,
        })
        .collect();
    let alphas = vec![0.5; 64];
    let agent = QrAgent::new(4, 3, cfg, 3).unwrap();
    c.bench_function("qr_update_batch64_n32", |b| {
        b.iter_batched_ref(
            || agent.clone(),
            |a| a.qr_update(&batch, &alphas).unwrap(),
            BatchSize::SmallInput,
        )
    });

    let mut rnd = RndEstimator::new(4, &RndConfig::default(), 4).unwrap();
    let states: Vec<&[f64]> = obs.iter().take(64).map(|o| o.as_slice()).collect();
    c.bench_function("rnd_update_batch64", |b| {
        b.iter(|| rnd.update(black_box(&states)).unwrap())
    });
}

criterion_group!(benches, distortion, mlp, updates);
criterion_main!(benches);
