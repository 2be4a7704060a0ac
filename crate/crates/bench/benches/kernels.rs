use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cqrlab_core::agents::{AgentConfig, Algo, QAgent};
use cqrlab_core::nn::MlpParams;
use cqrlab_core::replay::Transition;
use cqrlab_core::rrm::{RrmConfig, RrmEnv};
use cqrlab_core::uav::{UavConfig, UavEnv};
use cqrlab_core::Environment;

const BATCH: usize = 64;

fn network(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = MlpParams::he_uniform(&[24, 128, 128, 81 * 32], &mut rng).unwrap();
    let xs: Vec<f64> = (0..BATCH * 24).map(|_| rng.random()).collect();
    let up: Vec<f64> = (0..BATCH * 81 * 32)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let acts = net.forward_batch(&xs, BATCH).unwrap();

    let mut g = c.benchmark_group("mlp 24-128-128-2592");
    g.bench_function("forward_batch", |b| {
        b.iter(|| net.forward_batch(black_box(&xs), BATCH).unwrap())
    });
    g.bench_function("backward_batch", |b| {
        b.iter(|| net.backward_batch(black_box(&acts), &up).unwrap())
    });
    g.finish();
}

fn random_batch(rng: &mut ChaCha8Rng, obs_dim: usize, actions: usize) -> Vec<Transition> {
    (0..BATCH)
        .map(|_| Transition {
            state: (0..obs_dim).map(|_| rng.random()).collect(),
            action: rng.random_range(0..actions),
            reward: rng.random_range(-1.0..0.0),
            next_state: (0..obs_dim).map(|_| rng.random()).collect(),
            done: rng.random::<f64>() < 0.01,
        })
        .collect()
}

fn train_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("train_step uav");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = random_batch(&mut rng, 12, 55);
    let refs: Vec<&Transition> = data.iter().collect();
    for algo in [Algo::Dqn, Algo::Qrdqn, Algo::Cql, Algo::Cqr] {
        let agent = QAgent::new(AgentConfig::for_algo(algo), 12, 55, &mut rng).unwrap();
        g.bench_function(algo.name(), |b| {
            b.iter_batched_ref(
                || agent.clone(),
                |a| a.train_step(&refs).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

fn env_steps(c: &mut Criterion) {
    let mut g = c.benchmark_group("env step");
    let mut ucfg = UavConfig::default();
    ucfg.place_devices(7);
    let mut uav = UavEnv::new(ucfg).unwrap();
    uav.reset(3);
    let mut k = 0usize;
    g.bench_function("uav", |b| {
        b.iter(|| {
            k = (k + 1) % 55;
            if uav.step(k).unwrap().done {
                uav.reset(3);
            }
        })
    });
    let mut rrm = RrmEnv::new(RrmConfig::default()).unwrap();
    rrm.reset(3);
    g.bench_function("rrm", |b| {
        b.iter(|| {
            k = (k + 1) % 81;
            if rrm.step(k).unwrap().done {
                rrm.reset(3);
            }
        })
    });
    g.finish();
}

criterion_group!(benches, network, train_step, env_steps);
criterion_main!(benches);
