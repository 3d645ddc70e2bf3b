//! Property-based checks of the algorithmic invariants: the categorical
//! projection conserves probability mass and (absent clamping) the mean, the
//! sum tree stays consistent with a brute-force reference under arbitrary
//! edits, n-step folding matches a direct discounted sum, frozen layers are
//! bitwise inert under the optimizer, and checkpoints round-trip exactly.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rtl_core::agent::{categorical_project, AtomSupport};
use rtl_core::nn::{
    apply_gradients, AdamConfig, FreezeMask, GradientSet, Network, OptimizerState,
};
use rtl_core::replay::{
    BufferConfig, NStepFolder, ObsStack, PrioritizedReplay, StepRecord, SumTree, Transition,
};
use rtl_core::surgery::{Checkpoint, CheckpointMeta};

/// Tiny observation whose single value tags the step it came from, letting a
/// test recover window boundaries from emitted transitions.
fn marker(value: f64) -> ObsStack {
    ObsStack::from_raw(vec![value as f32], [1, 1, 1])
}

fn prob_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(1e-6f64..1.0, n).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / sum).collect()
    })
}

proptest! {
    /// Projection output is a probability row: non-negative everywhere and
    /// summing to exactly the input mass, no matter how hard the target
    /// distribution clamps against the support edges.
    #[test]
    fn projection_conserves_probability_mass(
        n_atoms in 2usize..=41,
        v_min in -20.0f64..0.0,
        span in 0.5f64..40.0,
        reward in -30.0f64..30.0,
        discount in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let support = AtomSupport::new(n_atoms, v_min, v_min + span).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n_atoms).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
        let sum: f64 = raw.iter().sum();
        let row: Vec<f64> = raw.iter().map(|p| p / sum).collect();

        let out = categorical_project(&row, reward, discount, &support);

        prop_assert_eq!(out.len(), n_atoms);
        for &p in &out {
            prop_assert!(p >= 0.0, "negative projected mass {}", p);
        }
        let total: f64 = out.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "mass drifted to {}", total);
    }

    /// When every shifted atom stays strictly inside the support, the
    /// projection is mean-preserving: E[out] = reward + discount * E[in].
    #[test]
    fn projection_preserves_mean_without_clamping(
        discount in 0.0f64..0.99,
        reward_frac in -0.95f64..0.95,
        row in prob_row(21),
    ) {
        let support = AtomSupport::new(21, -10.0, 10.0).unwrap();
        // |reward| <= 0.95 * 10 * (1 - discount) keeps Tz_j inside [-10, 10].
        let reward = reward_frac * 10.0 * (1.0 - discount);

        let out = categorical_project(&row, reward, discount, &support);

        let mean_in: f64 = row
            .iter()
            .zip(support.atoms())
            .map(|(p, z)| p * z)
            .sum();
        let mean_out: f64 = out
            .iter()
            .zip(support.atoms())
            .map(|(p, z)| p * z)
            .sum();
        let expect = reward + discount * mean_in;
        prop_assert!(
            (mean_out - expect).abs() < 1e-9,
            "mean {} != {}",
            mean_out,
            expect
        );
    }

    /// The tree total, stored leaves, and prefix descents all agree with a
    /// brute-force array after an arbitrary sequence of overwrites.
    #[test]
    fn sum_tree_matches_reference_after_arbitrary_edits(
        min_capacity in 1usize..=300,
        ops in proptest::collection::vec((0usize..300, 0.0f64..10.0), 1..200),
        fracs in proptest::collection::vec(0.0f64..1.0, 4),
    ) {
        let mut tree = SumTree::new(min_capacity);
        let cap = tree.capacity();
        let mut reference = vec![0.0f64; cap];
        for (slot, priority) in ops {
            let leaf = slot % cap;
            tree.set(leaf, priority);
            reference[leaf] = priority;
        }

        let total_ref: f64 = reference.iter().sum();
        let scale = total_ref.max(1.0);
        prop_assert!((tree.total() - total_ref).abs() < 1e-9 * scale);
        prop_assert!(tree.max_node_error() < 1e-9 * scale);
        for (leaf, &want) in reference.iter().enumerate() {
            prop_assert_eq!(tree.get(leaf), want);
        }

        if total_ref > 0.0 {
            for frac in fracs {
                let u = frac * total_ref;
                let idx = tree.find_prefix(u);
                prop_assert!(idx < cap);
                let before: f64 = reference[..idx].iter().sum();
                prop_assert!(
                    before <= u + 1e-9 * scale,
                    "prefix {} overshoots u {}",
                    before,
                    u
                );
                prop_assert!(
                    u <= before + reference[idx] + 1e-9 * scale,
                    "u {} past leaf {} span",
                    u,
                    idx
                );
            }
        }
    }

    /// Every emitted n-step transition carries exactly the discounted sum of
    /// the rewards in its window, the bootstrap observation from the window
    /// end, and a terminal flag only when the window absorbed the episode end.
    #[test]
    fn nstep_fold_matches_direct_discounted_sum(
        n in 1usize..=5,
        gamma in 0.0f64..1.0,
        rewards in proptest::collection::vec(-5.0f64..5.0, 1..=12),
        ends_terminal in any::<bool>(),
    ) {
        let len = rewards.len();
        let mut folder = NStepFolder::new(n, gamma);
        let mut emitted: Vec<Transition> = Vec::new();
        for (t, &r) in rewards.iter().enumerate() {
            let out = folder.push(StepRecord {
                obs: marker(t as f64),
                action: t % 4,
                reward: r,
                next_obs: marker((t + 1) as f64),
                terminal: ends_terminal && t == len - 1,
            });
            emitted.extend(out);
        }

        let expected_count = if ends_terminal {
            len
        } else {
            len.saturating_sub(n - 1)
        };
        prop_assert_eq!(emitted.len(), expected_count);
        prop_assert_eq!(folder.pending_len(), len - expected_count);

        for tr in &emitted {
            let start = tr.obs.to_tensor().iter().next().copied().unwrap() as usize;
            let horizon = tr.n_actual as usize;
            prop_assert!(horizon >= 1 && horizon <= n);
            prop_assert!(start + horizon <= len);
            if ends_terminal {
                prop_assert_eq!(horizon, n.min(len - start));
            } else {
                prop_assert_eq!(horizon, n);
            }
            prop_assert_eq!(tr.terminal, ends_terminal && start + horizon == len);

            let bootstrap = tr.next_obs.to_tensor().iter().next().copied().unwrap() as usize;
            prop_assert_eq!(bootstrap, start + horizon);

            let direct: f64 = (0..horizon)
                .map(|i| gamma.powi(i as i32) * rewards[start + i])
                .sum();
            prop_assert!(
                (tr.return_g - direct).abs() < 1e-12 * direct.abs().max(1.0),
                "return {} != direct {}",
                tr.return_g,
                direct
            );
        }
    }

    /// A serialized checkpoint decodes to the identical metadata and
    /// bit-identical tensors, including arbitrary extra metadata entries.
    #[test]
    fn checkpoints_round_trip_bitwise(
        seed in any::<u64>(),
        env in "[a-z]{1,8}",
        train_steps in any::<u64>(),
        extra in proptest::collection::btree_map(
            "[a-z][a-z0-9_]{0,11}",
            "[a-zA-Z0-9 ._:/-]{0,16}",
            0..5,
        ),
    ) {
        let net = Network::new_default(4, 21, seed);
        let ckpt = Checkpoint::from_network(
            &net,
            CheckpointMeta {
                env,
                train_steps,
                seed,
                n_actions: 0,
                n_atoms: 0,
                architecture_hash: 0,
                created_unix: 1_700_000_000,
                extra: extra.into_iter().collect::<BTreeMap<_, _>>(),
            },
        );

        let decoded = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();

        prop_assert_eq!(&decoded.meta, &ckpt.meta);
        prop_assert_eq!(decoded.tensors.len(), ckpt.tensors.len());
        for (name, t) in &ckpt.tensors {
            let d = decoded.tensors.get(name).expect("tensor dropped");
            prop_assert_eq!(d.shape(), t.shape());
            let same = d
                .iter()
                .zip(t.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same, "tensor {} not bit-identical", name);
        }
    }
}

proptest! {
    // Each case touches every parameter of a full-size network a few times,
    // so keep the case count small.
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Frozen layers keep parameters bitwise fixed and accumulate no Adam
    /// moments, while every unfrozen layer moves under a nonzero gradient.
    #[test]
    fn frozen_layers_are_bitwise_inert_under_adam(
        k in 0usize..=5,
        seed in any::<u64>(),
        applies in 1usize..=3,
    ) {
        let mut net = Network::new_default(4, 21, seed);
        let snapshot = net.clone();
        let mut opt = OptimizerState::new(&net, AdamConfig::default());
        let mask = FreezeMask::first_depths(k);

        let mut grads = GradientSet::zeros_like(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for layer in &mut grads.layers {
            for t in &mut layer.tensors {
                for v in t.data_mut() {
                    *v = rand::Rng::gen_range(&mut rng, -1.0..1.0);
                }
            }
        }

        for _ in 0..applies {
            apply_gradients(&mut net, &grads, &mut opt, &mask).unwrap();
        }

        let frozen: Vec<String> = (1..=k).map(|d| format!("layer{}", d)).collect();
        let mut flat = 0usize;
        for (layer, before) in net.layers().zip(snapshot.layers()) {
            let name = format!("layer{}", layer.depth);
            let is_frozen = frozen.contains(&name);
            let mut any_moved = false;
            for ((_, now), (_, was)) in layer.params.tensors().iter().zip(before.params.tensors())
            {
                for (a, b) in now.iter().zip(was.iter()) {
                    if a.to_bits() != b.to_bits() {
                        any_moved = true;
                    }
                }
                let (m, v) = opt.moments(flat);
                if is_frozen {
                    prop_assert!(m.iter().all(|&x| x == 0.0), "{} first moment touched", name);
                    prop_assert!(v.iter().all(|&x| x == 0.0), "{} second moment touched", name);
                }
                flat += 1;
            }
            if is_frozen {
                prop_assert!(!any_moved, "{} parameters moved while frozen", name);
            } else {
                prop_assert!(any_moved, "{} never moved despite gradients", name);
            }
        }
    }

    /// Sampling returns live indices and importance weights normalized so the
    /// batch maximum is exactly one; priority updates keep the tree coherent.
    #[test]
    fn replay_sampling_weights_normalize_to_batch_max(
        entries in 33usize..200,
        beta in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut replay = PrioritizedReplay::new(BufferConfig {
            capacity: 256,
            ..BufferConfig::default()
        });
        for t in 0..entries {
            replay.push(
                Transition {
                    obs: marker(t as f64),
                    action: t % 4,
                    return_g: 0.0,
                    next_obs: marker((t + 1) as f64),
                    terminal: false,
                    n_actual: 1,
                },
                None,
            );
        }
        let errors: Vec<f64> = (0..entries)
            .map(|_| rand::Rng::gen_range(&mut rng, 0.0..3.0))
            .collect();
        let indices: Vec<usize> = (0..entries).collect();
        replay.update_priorities(&indices, &errors).unwrap();
        prop_assert!(replay.max_tree_error() < 1e-9);

        let batch = replay.sample(32, beta, &mut rng).unwrap();
        prop_assert_eq!(batch.indices.len(), 32);
        let mut max_w = 0.0f64;
        for (&idx, &w) in batch.indices.iter().zip(&batch.is_weights) {
            prop_assert!(idx < replay.len());
            prop_assert!(w.is_finite() && w > 0.0 && w <= 1.0);
            max_w = max_w.max(w);
        }
        prop_assert_eq!(max_w, 1.0);
    }
}
