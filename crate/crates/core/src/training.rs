//! Curriculum-staged training: MCTS self-play with experience replay, and
//! the supervised next-action baseline trained on the same episode stream.

use crate::env::{EnvError, Environment, Episode, StatePair};
use crate::mcts::{self, MctsConfig, NetEvaluator, SearchError};
use crate::nn::{NetError, PolicyValueNet, Scalar};
use crate::retrieval::single_shot;
use crate::seeds;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumStage {
    pub epochs: usize,
    /// Cap on ground-truth length for generated episodes; `None` means the
    /// environment's own depth cap.
    #[serde(default)]
    pub max_len: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub stages: Vec<CurriculumStage>,
    pub episodes_per_epoch: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            stages: vec![
                CurriculumStage {
                    epochs: 5,
                    max_len: Some(4),
                },
                CurriculumStage {
                    epochs: 30,
                    max_len: Some(8),
                },
                CurriculumStage {
                    epochs: 50,
                    max_len: None,
                },
            ],
            episodes_per_epoch: 1000,
            buffer_capacity: 10_000,
            batch_size: 64,
            batches_per_epoch: 200,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.stages.is_empty() {
            return Err("at least one curriculum stage is required".into());
        }
        if self.stages.iter().any(|s| s.epochs == 0) {
            return Err("every stage needs at least one epoch".into());
        }
        // Stage caps must not shrink (None = unlimited sorts last).
        let mut prev = 0usize;
        for (i, stage) in self.stages.iter().enumerate() {
            match stage.max_len {
                Some(0) => return Err("stage max_len must be >= 1".into()),
                Some(len) => {
                    if len < prev {
                        return Err(format!(
                            "stage {i} shortens the curriculum ({len} < {prev})"
                        ));
                    }
                    prev = len;
                }
                None => prev = usize::MAX,
            }
        }
        if self.episodes_per_epoch == 0
            || self.buffer_capacity == 0
            || self.batch_size == 0
            || self.batches_per_epoch == 0
        {
            return Err("training volumes must be positive".into());
        }
        Ok(())
    }
}

/// One training sample: a state pair, its legal mask, the policy target, and
/// the episode outcome as value target.
#[derive(Clone, Debug)]
pub struct ReplayItem {
    pub pair: StatePair,
    pub legal: Vec<bool>,
    pub policy: Vec<f32>,
    pub value: f32,
}

/// FIFO ring of training items; eviction is strictly oldest-first.
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<ReplayItem>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, item: ReplayItem) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn extend(&mut self, items: impl IntoIterator<Item = ReplayItem>) {
        for item in items {
            self.push(item);
        }
    }

    pub fn get(&self, ix: usize) -> &ReplayItem {
        &self.items[ix]
    }

    /// Uniform batch indices: with replacement while the buffer is smaller
    /// than the batch, without replacement otherwise.
    pub fn sample_indices(
        &self,
        batch_size: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>, TrainError> {
        let n = self.items.len();
        if n == 0 {
            return Err(TrainError::EmptyBuffer);
        }
        if n < batch_size {
            return Ok((0..batch_size).map(|_| rng.random_range(0..n)).collect());
        }
        // Partial Fisher-Yates: the first `batch_size` entries are a uniform
        // draw without replacement.
        let mut indices: Vec<usize> = (0..n).collect();
        for i in 0..batch_size {
            let j = rng.random_range(i..n);
            indices.swap(i, j);
        }
        indices.truncate(batch_size);
        Ok(indices)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochMetrics {
    pub stage: usize,
    pub epoch: usize,
    pub policy_ce: f64,
    pub value_mse: f64,
    pub total_loss: f64,
    /// Fraction of this epoch's episodes that reached the goal (self-play for
    /// MCTS training, greedy rollouts for the supervised baseline).
    pub success_rate: f64,
    pub episodes: usize,
    pub new_items: usize,
    pub buffer_size: usize,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("self-play success rate stayed at 0 through stage {stage}; the curriculum never finds a solution")]
    CurriculumStalled { stage: usize },
    #[error("sampling from an empty replay buffer")]
    EmptyBuffer,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("epoch hook failed: {0}")]
    Hook(String),
}

/// Called after every epoch with the freshly updated network; the CLI uses
/// this for checkpointing and metric streaming.
pub type EpochHook<'a, F> = dyn FnMut(&PolicyValueNet<F>, &EpochMetrics) -> Result<(), String> + 'a;

/// Seed-derived episode batch; parallel generation reproduces exactly.
pub fn generate_episodes(
    env: &dyn Environment,
    count: usize,
    max_len: usize,
    master: u64,
    domain: &str,
    idx: &[u64],
) -> Result<Vec<Episode>, EnvError> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut indices = idx.to_vec();
            indices.push(i as u64);
            let mut rng = seeds::rng(master, domain, &indices);
            env.generate_pair(max_len, &mut rng)
        })
        .collect()
}

fn optimize_epoch<F: Scalar>(
    net: &mut PolicyValueNet<F>,
    buffer: &ReplayBuffer,
    tcfg: &TrainingConfig,
    rng: &mut dyn RngCore,
) -> Result<(f64, f64), TrainError> {
    let mut ce_sum = 0.0;
    let mut mse_sum = 0.0;
    for _ in 0..tcfg.batches_per_epoch {
        let indices = buffer.sample_indices(tcfg.batch_size, rng)?;
        let batch: Vec<&ReplayItem> = indices.iter().map(|&i| buffer.get(i)).collect();
        let report = net.train_step(&batch)?;
        ce_sum += report.policy_ce;
        mse_sum += report.value_mse;
    }
    let n = tcfg.batches_per_epoch as f64;
    Ok((ce_sum / n, mse_sum / n))
}

/// Curriculum self-play training. Per epoch: generate episodes at the
/// stage's length cap, self-play each with search, append the items to the
/// replay buffer, then optimize on uniformly sampled batches.
///
/// `skip_through` resumes a run: every (stage, epoch) up to and including
/// the marker is skipped. Seeds are keyed by (stage, epoch), so the
/// remaining epochs replay exactly; only the replay-buffer history from the
/// skipped epochs is absent.
pub fn train_mcts<F: Scalar>(
    env: &dyn Environment,
    net: &mut PolicyValueNet<F>,
    tcfg: &TrainingConfig,
    mcfg: &MctsConfig,
    master_seed: u64,
    skip_through: Option<(usize, usize)>,
    mut hook: Option<&mut EpochHook<'_, F>>,
) -> Result<Vec<EpochMetrics>, TrainError> {
    let mut buffer = ReplayBuffer::new(tcfg.buffer_capacity);
    let mut all_metrics = Vec::new();
    for (stage_ix, stage) in tcfg.stages.iter().enumerate() {
        let max_len = stage
            .max_len
            .unwrap_or(env.max_depth())
            .min(env.max_depth());
        let mut stage_successes = 0usize;
        let mut stage_skipped = false;
        for epoch in 0..stage.epochs {
            if skipped(skip_through, stage_ix, epoch) {
                stage_skipped = true;
                continue;
            }
            let sa = stage_ix as u64;
            let ep = epoch as u64;
            let episodes = generate_episodes(
                env,
                tcfg.episodes_per_epoch,
                max_len,
                master_seed,
                "gen",
                &[sa, ep],
            )?;
            let outcomes: Result<Vec<mcts::SelfPlayOutcome>, SearchError> = episodes
                .par_iter()
                .enumerate()
                .map(|(i, episode)| {
                    let evaluator = NetEvaluator::new(net, &episode.target)
                        .expect("episode matches network input");
                    let mut rng = seeds::rng(master_seed, "play", &[sa, ep, i as u64]);
                    mcts::self_play_episode(
                        env, episode, &evaluator, mcfg, max_len, &mut rng, false,
                    )
                })
                .collect();
            let outcomes = outcomes?;

            let successes = outcomes.iter().filter(|o| o.reward > 0.0).count();
            stage_successes += successes;
            let mut new_items = 0usize;
            for outcome in outcomes {
                new_items += outcome.items.len();
                buffer.extend(outcome.items);
            }

            let mut orng = seeds::rng(master_seed, "optim", &[sa, ep]);
            let (policy_ce, value_mse) = optimize_epoch(net, &buffer, tcfg, &mut orng)?;

            let metrics = EpochMetrics {
                stage: stage_ix,
                epoch,
                policy_ce,
                value_mse,
                total_loss: policy_ce + value_mse,
                success_rate: successes as f64 / tcfg.episodes_per_epoch as f64,
                episodes: tcfg.episodes_per_epoch,
                new_items,
                buffer_size: buffer.len(),
            };
            if let Some(hook) = hook.as_mut() {
                hook(net, &metrics).map_err(TrainError::Hook)?;
            }
            all_metrics.push(metrics);
        }
        if stage_successes == 0 && !stage_skipped {
            return Err(TrainError::CurriculumStalled { stage: stage_ix });
        }
    }
    Ok(all_metrics)
}

fn skipped(skip_through: Option<(usize, usize)>, stage: usize, epoch: usize) -> bool {
    match skip_through {
        Some((s, e)) => (stage, epoch) <= (s, e),
        None => false,
    }
}

/// Supervised next-action baseline: the same episode stream (identical
/// generator seeds), but one classification sample per ground-truth step.
/// The reported success rate is a greedy rollout over a sample of the
/// epoch's episodes.
pub fn train_supervised<F: Scalar>(
    env: &dyn Environment,
    net: &mut PolicyValueNet<F>,
    tcfg: &TrainingConfig,
    master_seed: u64,
    skip_through: Option<(usize, usize)>,
    mut hook: Option<&mut EpochHook<'_, F>>,
) -> Result<Vec<EpochMetrics>, TrainError> {
    let mut buffer = ReplayBuffer::new(tcfg.buffer_capacity);
    let mut all_metrics = Vec::new();
    for (stage_ix, stage) in tcfg.stages.iter().enumerate() {
        let max_len = stage
            .max_len
            .unwrap_or(env.max_depth())
            .min(env.max_depth());
        let mut stage_successes = 0usize;
        let mut stage_skipped = false;
        for epoch in 0..stage.epochs {
            if skipped(skip_through, stage_ix, epoch) {
                stage_skipped = true;
                continue;
            }
            let sa = stage_ix as u64;
            let ep = epoch as u64;
            let episodes = generate_episodes(
                env,
                tcfg.episodes_per_epoch,
                max_len,
                master_seed,
                "gen",
                &[sa, ep],
            )?;
            let mut new_items = 0usize;
            for episode in &episodes {
                let items = supervised_items(env, episode)?;
                new_items += items.len();
                buffer.extend(items);
            }

            let mut orng = seeds::rng(master_seed, "optim", &[sa, ep]);
            let (policy_ce, _) = optimize_epoch(net, &buffer, tcfg, &mut orng)?;

            // Greedy single-shot success over a fixed-size probe of this
            // epoch's episodes.
            let probe = episodes.len().min(100);
            let successes: usize = episodes[..probe]
                .par_iter()
                .map(|episode| {
                    let pair = StatePair::new(episode.source.clone(), episode.target.clone())
                        .expect("same side");
                    let evaluator = NetEvaluator::new(net, &episode.target)
                        .expect("episode matches network input");
                    usize::from(single_shot(env, &pair, &evaluator, max_len).success)
                })
                .sum();
            stage_successes += successes;

            let metrics = EpochMetrics {
                stage: stage_ix,
                epoch,
                policy_ce,
                value_mse: 0.0,
                total_loss: policy_ce,
                success_rate: successes as f64 / probe as f64,
                episodes: tcfg.episodes_per_epoch,
                new_items,
                buffer_size: buffer.len(),
            };
            if let Some(hook) = hook.as_mut() {
                hook(net, &metrics).map_err(TrainError::Hook)?;
            }
            all_metrics.push(metrics);
        }
        if stage_successes == 0 && !stage_skipped {
            return Err(TrainError::CurriculumStalled { stage: stage_ix });
        }
    }
    Ok(all_metrics)
}

/// One classification sample per step of the ground truth: the label of
/// sample `i` is action `i`.
pub fn supervised_items(
    env: &dyn Environment,
    episode: &Episode,
) -> Result<Vec<ReplayItem>, EnvError> {
    let action_count = env.action_count();
    let mut current = episode.source.clone();
    let mut usage = env.new_usage();
    let mut items = Vec::with_capacity(episode.ground_truth.len());
    for &action in &episode.ground_truth.actions {
        let legal = env.legal_mask(&current, &usage);
        let mut policy = vec![0.0f32; action_count];
        policy[action] = 1.0;
        items.push(ReplayItem {
            pair: StatePair::new(current.clone(), episode.target.clone())
                .expect("episode images share a side"),
            legal,
            policy,
            value: 0.0,
        });
        current = env.apply(action, &current)?;
        usage.bump(action);
    }
    Ok(items)
}
