//! Scratch calibration harness; run explicitly with
//! `cargo test --test tuning_probe -- --ignored --nocapture <name>`.

use itsr_core::env::Environment;
use itsr_core::mcts::MctsConfig;
use itsr_core::nn::{HeadKind, NetworkConfig, PolicyValueNet};
use itsr_core::retrieval::{evaluate, NetFactory};
use itsr_core::toy_env::ToyEnv;
use itsr_core::training::{self, CurriculumStage, TrainingConfig};
use std::time::Instant;

fn tcfg(stages: &[(usize, usize)], episodes: usize, batches: usize) -> TrainingConfig {
    TrainingConfig {
        stages: stages
            .iter()
            .map(|&(epochs, max_len)| CurriculumStage {
                epochs,
                max_len: Some(max_len),
            })
            .collect(),
        episodes_per_epoch: episodes,
        buffer_capacity: 10_000,
        batch_size: 64,
        batches_per_epoch: batches,
    }
}

fn eval_accuracy(
    env: &ToyEnv,
    net: &PolicyValueNet<f32>,
    pairs: usize,
) -> (f64, f64, Vec<(usize, f64, usize)>) {
    let eval_eps =
        training::generate_episodes(env, pairs, env.max_depth(), 999, "eval", &[]).unwrap();
    let report = evaluate(env, &NetFactory { net }, &eval_eps, &[100], env.max_depth());
    // Accuracy bucketed by ground-truth length.
    let mut buckets: Vec<(usize, usize, usize)> = vec![(0, 0, 0); 19];
    for rec in &report.episodes {
        let b = rec.ground_truth_len.min(18);
        buckets[b].0 = b;
        buckets[b].1 += usize::from(rec.single_shot_success);
        buckets[b].2 += 1;
    }
    let by_len = buckets
        .into_iter()
        .filter(|&(_, _, n)| n > 0)
        .map(|(b, s, n)| (b, s as f64 / n as f64, n))
        .collect();
    (report.single_shot_accuracy, report.top_k[0].1, by_len)
}

fn run_probe(
    env: &ToyEnv,
    name: &str,
    stages: &[(usize, usize)],
    episodes: usize,
    batches: usize,
    seed: u64,
    supervised: bool,
) {
    let t0 = Instant::now();
    let head = if supervised {
        HeadKind::Classifier
    } else {
        HeadKind::ActorCritic
    };
    let netcfg = NetworkConfig::toy(env.action_count(), env.side(), head);
    let mut net = PolicyValueNet::<f32>::new(netcfg, seed).unwrap();
    let cfg = tcfg(stages, episodes, batches);
    let mcfg = MctsConfig::default();

    // Cheap mid-training eval on 200 pairs.
    let eval_probe = |net: &PolicyValueNet<f32>| {
        let eval_eps =
            training::generate_episodes(env, 200, env.max_depth(), 999, "eval", &[]).unwrap();
        let report = evaluate(env, &NetFactory { net }, &eval_eps, &[100], env.max_depth());
        report.single_shot_accuracy
    };
    let mut epoch_count = 0usize;
    let mut hook = |net: &PolicyValueNet<f32>, m: &itsr_core::training::EpochMetrics| {
        epoch_count += 1;
        println!(
            "  [{name}] s{}e{}: ce {:.4} mse {:.4} success {:.3} ({}s)",
            m.stage,
            m.epoch,
            m.policy_ce,
            m.value_mse,
            m.success_rate,
            t0.elapsed().as_secs()
        );
        if epoch_count.is_multiple_of(4) {
            println!(
                "  [{name}] >> eval@{epoch_count}: single-shot {:.3}",
                eval_probe(net)
            );
        }
        Ok(())
    };

    let result = if supervised {
        training::train_supervised(env, &mut net, &cfg, seed, None, Some(&mut hook))
    } else {
        training::train_mcts(env, &mut net, &cfg, &mcfg, seed, None, Some(&mut hook))
    };
    result.unwrap();
    let train_time = t0.elapsed().as_secs_f64();

    let (ss, top100, by_len) = eval_accuracy(env, &net, 500);
    println!("[{name}] single_shot {ss:.3} top100 {top100:.3} | train {train_time:.0}s");
    for (len, acc, n) in by_len {
        println!("  [{name}] len {len}: {acc:.2} (n={n})");
    }
}

/// Greedy rollout with no legality mask: the net sees a full softmax and a
/// trajectory fails outright the moment its argmax is illegal.
fn unmasked_single_shot(
    env: &ToyEnv,
    net: &PolicyValueNet<f32>,
    source: &itsr_core::image::Image,
    target: &itsr_core::image::Image,
) -> bool {
    use itsr_core::env::StatePair;
    let all = vec![true; env.action_count()];
    let mut current = source.clone();
    for _ in 0..env.max_depth() {
        if current == *target {
            return true;
        }
        let pair = StatePair::new(current.clone(), target.clone()).unwrap();
        let out = net.forward(&pair, &all).unwrap();
        let action = out
            .policy
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        match env.apply(action, &current) {
            Ok(next) => current = next,
            Err(_) => return false, // illegal pick kills the trajectory
        }
    }
    current == *target
}

/// Mean unmasked probability mass the net puts on illegal actions.
fn illegal_mass(env: &ToyEnv, net: &PolicyValueNet<f32>, pairs: &[itsr_core::env::Episode]) -> f64 {
    use itsr_core::env::StatePair;
    let all = vec![true; env.action_count()];
    let mut total = 0.0;
    for ep in pairs.iter().take(100) {
        let pair = StatePair::new(ep.source.clone(), ep.target.clone()).unwrap();
        let out = net.forward(&pair, &all).unwrap();
        let legal = env.legal_mask(&ep.source, &env.new_usage());
        total += out
            .policy
            .iter()
            .zip(&legal)
            .filter(|(_, &ok)| !ok)
            .map(|(&p, _)| f64::from(p))
            .sum::<f64>();
    }
    total / pairs.len().min(100) as f64
}

/// Supervised baseline trained with an all-true mask (plain softmax CE, so
/// illegal logits are pushed down only via normalization), evaluated with
/// and without masking.
#[test]
#[ignore]
fn probe_free_sup_mask_ablation() {
    let env = ToyEnv::free();
    let stages_spec: &[(usize, usize)] = &[(4, 4), (6, 8), (8, 18)];
    let cfg = tcfg(stages_spec, 800, 500);
    let eval_eps =
        training::generate_episodes(&env, 500, env.max_depth(), 999, "eval", &[]).unwrap();

    for masked_training in [true, false] {
        let netcfg = NetworkConfig::toy(env.action_count(), env.side(), HeadKind::Classifier);
        let mut net = PolicyValueNet::<f32>::new(netcfg, 5).unwrap();
        // Manual supervised loop so the item masks can be overridden.
        let mut buffer = itsr_core::training::ReplayBuffer::new(cfg.buffer_capacity);
        for (si, stage) in cfg.stages.iter().enumerate() {
            let max_len = stage.max_len.unwrap();
            for epoch in 0..stage.epochs {
                let episodes = training::generate_episodes(
                    &env,
                    cfg.episodes_per_epoch,
                    max_len,
                    5,
                    "gen",
                    &[si as u64, epoch as u64],
                )
                .unwrap();
                for ep in &episodes {
                    let mut items = training::supervised_items(&env, ep).unwrap();
                    if !masked_training {
                        for item in &mut items {
                            item.legal = vec![true; env.action_count()];
                        }
                    }
                    buffer.extend(items);
                }
                let mut orng = itsr_core::seeds::rng(5, "optim", &[si as u64, epoch as u64]);
                for _ in 0..cfg.batches_per_epoch {
                    let idx = buffer.sample_indices(cfg.batch_size, &mut orng).unwrap();
                    let batch: Vec<&itsr_core::training::ReplayItem> =
                        idx.iter().map(|&i| buffer.get(i)).collect();
                    net.train_step(&batch).unwrap();
                }
            }
        }

        let report = evaluate(
            &env,
            &NetFactory { net: &net },
            &eval_eps,
            &[100],
            env.max_depth(),
        );
        let unmasked_acc = eval_eps
            .iter()
            .filter(|ep| unmasked_single_shot(&env, &net, &ep.source, &ep.target))
            .count() as f64
            / eval_eps.len() as f64;
        println!(
            "[ablation masked_training={masked_training}] masked_eval={:.3} unmasked_eval={unmasked_acc:.3} illegal_mass={:.4}",
            report.single_shot_accuracy,
            illegal_mass(&env, &net, &eval_eps),
        );
    }
}

#[test]
#[ignore]
fn probe_image_trained_vs_untrained() {
    use itsr_core::env::StatePair;
    use itsr_core::image_env::{ImageEnv, ImageEnvConfig};
    use itsr_core::mcts::NetEvaluator;
    use itsr_core::retrieval::top_k_search;
    let t0 = Instant::now();
    let env = ImageEnv::with_procedural_pool(ImageEnvConfig::default(), 11, 32);
    let episodes = training::generate_episodes(&env, 200, 3, 990_001, "eval", &[]).unwrap();

    let fraction = |net: &PolicyValueNet<f32>| {
        episodes
            .iter()
            .filter(|ep| {
                let pair = StatePair::new(ep.source.clone(), ep.target.clone()).unwrap();
                let evaluator = NetEvaluator::new(net, &ep.target).unwrap();
                top_k_search(&env, &pair, &evaluator, 100, env.max_depth()).success
            })
            .count() as f64
            / episodes.len() as f64
    };

    let untrained = PolicyValueNet::<f32>::new(
        NetworkConfig::image(env.action_count(), env.side(), HeadKind::ActorCritic),
        77,
    )
    .unwrap();
    println!("[image] untrained top-100: {:.3} ({}s)", fraction(&untrained), t0.elapsed().as_secs());

    let mut net = PolicyValueNet::<f32>::new(
        NetworkConfig::image(env.action_count(), env.side(), HeadKind::ActorCritic),
        41,
    )
    .unwrap();
    let cfg = TrainingConfig {
        stages: vec![
            CurriculumStage { epochs: 2, max_len: Some(2) },
            CurriculumStage { epochs: 2, max_len: Some(3) },
        ],
        episodes_per_epoch: 150,
        buffer_capacity: 10_000,
        batch_size: 64,
        batches_per_epoch: 150,
    };
    let mut hook = |_: &PolicyValueNet<f32>, m: &itsr_core::training::EpochMetrics| {
        println!(
            "  [image] s{}e{}: ce {:.4} mse {:.4} success {:.3} ({}s)",
            m.stage, m.epoch, m.policy_ce, m.value_mse, m.success_rate,
            t0.elapsed().as_secs()
        );
        Ok(())
    };
    training::train_mcts(&env, &mut net, &cfg, &MctsConfig::default(), 41, None, Some(&mut hook))
        .unwrap();
    println!("[image] trained top-100: {:.3} ({}s)", fraction(&net), t0.elapsed().as_secs());
}

#[test]
#[ignore]
fn probe_con_sup_scale() {
    let env = ToyEnv::constrained();
    run_probe(
        &env,
        "con-sup-big",
        &[(3, 4), (5, 8), (8, 18)],
        600,
        500,
        2,
        true,
    );
}

#[test]
#[ignore]
fn probe_con_mcts_scale() {
    let env = ToyEnv::constrained();
    run_probe(
        &env,
        "con-mcts-1000",
        &[(5, 4), (30, 8), (50, 18)],
        1000,
        500,
        1,
        false,
    );
}

#[test]
#[ignore]
fn probe_free_mcts_scale() {
    let env = ToyEnv::free();
    run_probe(
        &env,
        "free-mcts-35",
        &[(5, 4), (12, 8), (18, 18)],
        800,
        500,
        41,
        false,
    );
}

#[test]
#[ignore]
fn probe_free_sup_scale() {
    let env = ToyEnv::free();
    run_probe(
        &env,
        "free-sup-35",
        &[(5, 4), (12, 8), (18, 18)],
        800,
        500,
        42,
        true,
    );
}
