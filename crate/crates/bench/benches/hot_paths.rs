//! Hot-path benchmarks: network forward/backward, a full training step,
//! the categorical projection, and sum-tree operations.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rtl_core::agent::{categorical_project, AgentConfig, AtomSupport, RainbowAgent};
use rtl_core::nn::{FreezeMask, Network, INPUT_SHAPE};
use rtl_core::replay::{BufferConfig, ObsStack, PrioritizedReplay, SumTree, Transition};
use rtl_core::tensor::Tensor;

fn random_input(seed: u64) -> Tensor {
    Tensor::uniform(INPUT_SHAPE.to_vec(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn bench_forward(c: &mut Criterion) {
    let net = Network::new_default(5, 21, 0);
    let x = random_input(1);
    c.bench_function("forward_zero_noise", |b| {
        b.iter(|| net.forward_pass(black_box(&x), None).unwrap())
    });
    let draw = net.sample_noise(&mut ChaCha8Rng::seed_from_u64(2));
    c.bench_function("forward_with_noise", |b| {
        b.iter(|| net.forward_pass(black_box(&x), Some(&draw)).unwrap())
    });
}

fn bench_backward(c: &mut Criterion) {
    let net = Network::new_default(5, 21, 0);
    let x = random_input(3);
    let d_logits = Tensor::uniform(vec![5, 21], 1.0, &mut ChaCha8Rng::seed_from_u64(4));
    let eff = net.materialize(None);
    c.bench_function("forward_backward", |b| {
        b.iter(|| {
            let (_, cache) = net.forward(&eff, black_box(&x)).unwrap();
            net.backward(&eff, &cache, &d_logits).unwrap()
        })
    });
}

fn filled_replay(n: usize) -> PrioritizedReplay {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut replay = PrioritizedReplay::new(BufferConfig::default());
    for i in 0..n {
        let obs = ObsStack::from_tensor(&random_input(100 + i as u64));
        let next = ObsStack::from_tensor(&random_input(200 + i as u64));
        replay.push(
            Transition {
                obs,
                action: rng.gen_range(0..5),
                return_g: rng.gen_range(-1.0..1.0),
                next_obs: next,
                terminal: rng.gen_bool(0.05),
                n_actual: 3,
            },
            Some(rng.gen_range(0.1..2.0)),
        );
    }
    replay
}

fn bench_train_step(c: &mut Criterion) {
    let cfg = AgentConfig {
        warmup_steps: 0,
        ..AgentConfig::default()
    };
    let mut agent = RainbowAgent::new(cfg, 5, 6).unwrap();
    let mut replay = filled_replay(1024);
    let mask = FreezeMask::empty();
    c.bench_function("train_step_batch32", |b| {
        b.iter(|| agent.train_step(&mut replay, 0.6, &mask).unwrap())
    });
}

fn bench_projection(c: &mut Criterion) {
    let support = AtomSupport::new(21, -10.0, 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut probs = vec![0.0; 21];
    for p in &mut probs {
        *p = rng.gen_range(0.0..1.0);
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    c.bench_function("categorical_project_21", |b| {
        b.iter(|| categorical_project(black_box(&probs), 0.73, 0.970299, &support))
    });
}

fn bench_sum_tree(c: &mut Criterion) {
    let mut tree = SumTree::new(50_000);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..50_000 {
        tree.set(i, rng.gen_range(0.01..2.0));
    }
    c.bench_function("sum_tree_set", |b| {
        let mut i = 0;
        b.iter(|| {
            tree.set(i % 50_000, 1.25);
            i += 1;
        })
    });
    c.bench_function("sum_tree_find_prefix", |b| {
        b.iter(|| tree.find_prefix(black_box(tree.total() * 0.37)))
    });
}

criterion_group!(
    benches,
    bench_forward,
    bench_backward,
    bench_train_step,
    bench_projection,
    bench_sum_tree
);
criterion_main!(benches);
