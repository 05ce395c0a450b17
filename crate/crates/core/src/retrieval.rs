//! Inference-time retrieval: a greedy single-shot rollout, budgeted
//! best-first search over the actor's probabilities, and the evaluation
//! harness that computes single-shot and top-K accuracy over a test set.

use crate::env::{ActionId, Environment, Episode, StatePair, Trajectory};
use crate::image::Image;
use crate::mcts::{Evaluator, NetEvaluator, RandomEvaluator, UniformEvaluator};
use crate::nn::{PolicyValueNet, Scalar};
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{self, Write};
use std::path::Path;

/// Builds a per-pair evaluator. Retrieval uses only the action distribution;
/// the critic's value plays no role here.
pub trait EvaluatorFactory: Sync {
    fn for_pair<'a>(&'a self, index: usize, target: &Image) -> Box<dyn Evaluator + 'a>;
}

pub struct NetFactory<'n, F: Scalar> {
    pub net: &'n PolicyValueNet<F>,
}

impl<F: Scalar> EvaluatorFactory for NetFactory<'_, F> {
    fn for_pair<'a>(&'a self, _index: usize, target: &Image) -> Box<dyn Evaluator + 'a> {
        Box::new(NetEvaluator::new(self.net, target).expect("target matches network input"))
    }
}

pub struct UniformFactory;

impl EvaluatorFactory for UniformFactory {
    fn for_pair<'a>(&'a self, _index: usize, _target: &Image) -> Box<dyn Evaluator + 'a> {
        Box::new(UniformEvaluator)
    }
}

/// Independent random policy per pair, seeded by the pair index.
pub struct RandomFactory {
    pub seed: u64,
}

impl EvaluatorFactory for RandomFactory {
    fn for_pair<'a>(&'a self, index: usize, _target: &Image) -> Box<dyn Evaluator + 'a> {
        Box::new(RandomEvaluator::new(crate::seeds::derive_seed(
            self.seed,
            "retrieval-random",
            &[index as u64],
        )))
    }
}

#[derive(Clone, Debug)]
pub struct SingleShotResult {
    pub trajectory: Trajectory,
    pub success: bool,
    pub expansions: usize,
}

/// One greedy depth-first trajectory: argmax of the masked actor
/// probabilities at every step (ties to the lowest action id), stopping at
/// the goal or the depth cap. A reported success always re-verifies under
/// `apply_sequence`.
pub fn single_shot(
    env: &dyn Environment,
    pair: &StatePair,
    evaluator: &dyn Evaluator,
    max_depth: usize,
) -> SingleShotResult {
    let mut current = pair.current.clone();
    let mut usage = env.new_usage();
    let mut trajectory = Trajectory::empty();
    let mut goal = current == pair.target;
    while !goal && trajectory.len() < max_depth {
        let legal = env.legal_mask(&current, &usage);
        if !legal.iter().any(|&ok| ok) {
            break;
        }
        let (probs, _) = evaluator.evaluate(&current, &legal);
        let action = argmax(&probs, &legal);
        current = env.apply(action, &current).expect("argmax action is legal");
        usage.bump(action);
        trajectory.push(action);
        goal = current == pair.target;
    }
    let expansions = trajectory.len();
    let success = goal
        && env
            .apply_sequence(&trajectory, &pair.current)
            .map(|img| img == pair.target)
            .unwrap_or(false);
    SingleShotResult {
        trajectory,
        success,
        expansions,
    }
}

fn argmax(probs: &[f64], legal: &[bool]) -> ActionId {
    let mut best: Option<(ActionId, f64)> = None;
    for (a, (&p, &ok)) in probs.iter().zip(legal).enumerate() {
        if ok && best.is_none_or(|(_, b)| p > b) {
            best = Some((a, p));
        }
    }
    best.expect("at least one legal action").0
}

#[derive(Clone, Debug)]
pub struct TopKResult {
    pub trajectory: Option<Trajectory>,
    pub success: bool,
    pub expansions: usize,
}

struct SearchNode {
    image: Image,
    usage: crate::env::UsageCounter,
    depth: usize,
    /// ln of the cumulative probability of the prefix reaching this node.
    log_prob: f64,
    parent: usize,
    action: ActionId,
}

struct FrontierEdge {
    /// ln(parent cumulative probability * actor probability of the action).
    score: f64,
    seq: u64,
    node: usize,
    action: ActionId,
}

impl PartialEq for FrontierEdge {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for FrontierEdge {}
impl PartialOrd for FrontierEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for FrontierEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on score; ties go to the earlier insertion.
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Best-first expansion of the retrieval tree. Edge scores are the product
/// of actor probabilities along the prefix times the probability of the
/// candidate action (tracked in log space; the ordering is identical).
/// Every materialized node costs one unit of the budget `k`.
pub fn top_k_search(
    env: &dyn Environment,
    pair: &StatePair,
    evaluator: &dyn Evaluator,
    k: usize,
    max_depth: usize,
) -> TopKResult {
    let (result, _) = top_k_search_with_scores(env, pair, evaluator, k, max_depth);
    result
}

/// Like `top_k_search` but also returns the popped edge scores in order
/// (diagnostics; the sequence is non-increasing).
pub fn top_k_search_with_scores(
    env: &dyn Environment,
    pair: &StatePair,
    evaluator: &dyn Evaluator,
    k: usize,
    max_depth: usize,
) -> (TopKResult, Vec<f64>) {
    if pair.current == pair.target {
        return (
            TopKResult {
                trajectory: Some(Trajectory::empty()),
                success: true,
                expansions: 0,
            },
            Vec::new(),
        );
    }
    let mut nodes = vec![SearchNode {
        image: pair.current.clone(),
        usage: env.new_usage(),
        depth: 0,
        log_prob: 0.0,
        parent: usize::MAX,
        action: 0,
    }];
    let mut frontier = BinaryHeap::new();
    let mut seq = 0u64;
    let mut popped_scores = Vec::new();
    push_children(
        env,
        evaluator,
        &nodes,
        0,
        max_depth,
        &mut frontier,
        &mut seq,
    );

    let mut expansions = 0usize;
    while expansions < k {
        let Some(edge) = frontier.pop() else { break };
        popped_scores.push(edge.score);
        let image = env
            .apply(edge.action, &nodes[edge.node].image)
            .expect("frontier actions are legal");
        expansions += 1;
        let mut usage = nodes[edge.node].usage.clone();
        usage.bump(edge.action);
        nodes.push(SearchNode {
            image,
            usage,
            depth: nodes[edge.node].depth + 1,
            log_prob: edge.score,
            parent: edge.node,
            action: edge.action,
        });
        let ix = nodes.len() - 1;
        if nodes[ix].image == pair.target {
            let trajectory = reconstruct(&nodes, ix);
            let verified = env
                .apply_sequence(&trajectory, &pair.current)
                .map(|img| img == pair.target)
                .unwrap_or(false);
            return (
                TopKResult {
                    trajectory: Some(trajectory),
                    success: verified,
                    expansions,
                },
                popped_scores,
            );
        }
        push_children(
            env,
            evaluator,
            &nodes,
            ix,
            max_depth,
            &mut frontier,
            &mut seq,
        );
    }
    (
        TopKResult {
            trajectory: None,
            success: false,
            expansions,
        },
        popped_scores,
    )
}

fn push_children(
    env: &dyn Environment,
    evaluator: &dyn Evaluator,
    nodes: &[SearchNode],
    ix: usize,
    max_depth: usize,
    frontier: &mut BinaryHeap<FrontierEdge>,
    seq: &mut u64,
) {
    let node = &nodes[ix];
    if node.depth >= max_depth {
        return;
    }
    let legal = env.legal_mask(&node.image, &node.usage);
    if !legal.iter().any(|&ok| ok) {
        return;
    }
    let (probs, _) = evaluator.evaluate(&node.image, &legal);
    for (action, (&p, &ok)) in probs.iter().zip(&legal).enumerate() {
        if ok && p > 0.0 {
            frontier.push(FrontierEdge {
                score: node.log_prob + p.ln(),
                seq: *seq,
                node: ix,
                action,
            });
            *seq += 1;
        }
    }
}

fn reconstruct(nodes: &[SearchNode], mut ix: usize) -> Trajectory {
    let mut actions = Vec::new();
    while ix != 0 {
        actions.push(nodes[ix].action);
        ix = nodes[ix].parent;
    }
    actions.reverse();
    Trajectory::new(actions)
}

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub ground_truth_len: usize,
    pub single_shot_success: bool,
    pub single_shot_len: usize,
    /// Adjacent invert-invert pairs in the greedy trajectory (environments
    /// without an `invert` action always report 0).
    pub single_shot_consecutive_inversions: usize,
    pub top_k_success: bool,
    /// Expansions consumed by the best-first search (= budget when it failed).
    pub top_k_expansions: usize,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub single_shot_accuracy: f64,
    /// (K, accuracy) pairs, non-decreasing in K.
    pub top_k: Vec<(usize, f64)>,
    pub mean_expansions_to_solution: Option<f64>,
    /// Fraction of greedy trajectories containing a wasted invert-invert
    /// pair; `None` when the environment has no `invert` action. A trained
    /// model should drive this towards 0.
    pub consecutive_inversion_rate: Option<f64>,
    pub episodes: Vec<EpisodeRecord>,
}

/// Runs both metrics over a test set. The top-K curve for every requested K
/// comes from a single best-first run at the largest budget: a success using
/// `e` expansions is a success for every K >= e.
pub fn evaluate(
    env: &dyn Environment,
    factory: &dyn EvaluatorFactory,
    episodes: &[Episode],
    ks: &[usize],
    max_depth: usize,
) -> EvalReport {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let invert_id = env.action_id("invert");
    let records: Vec<EpisodeRecord> = episodes
        .par_iter()
        .enumerate()
        .map(|(index, ep)| {
            let pair = StatePair::new(ep.source.clone(), ep.target.clone()).expect("same side");
            let evaluator = factory.for_pair(index, &ep.target);
            let ss = single_shot(env, &pair, evaluator.as_ref(), max_depth);
            let tk = top_k_search(env, &pair, evaluator.as_ref(), k_max, max_depth);
            let double_inversions = invert_id.map_or(0, |id| {
                ss.trajectory
                    .actions
                    .windows(2)
                    .filter(|w| w[0] == id && w[1] == id)
                    .count()
            });
            EpisodeRecord {
                index,
                ground_truth_len: ep.ground_truth.len(),
                single_shot_success: ss.success,
                single_shot_len: ss.trajectory.len(),
                single_shot_consecutive_inversions: double_inversions,
                top_k_success: tk.success,
                top_k_expansions: tk.expansions,
            }
        })
        .collect();

    let n = records.len().max(1) as f64;
    let single_shot_accuracy = records.iter().filter(|r| r.single_shot_success).count() as f64 / n;
    let top_k = ks
        .iter()
        .map(|&k| {
            let hits = records
                .iter()
                .filter(|r| r.top_k_success && r.top_k_expansions <= k)
                .count();
            (k, hits as f64 / n)
        })
        .collect();
    let solved: Vec<usize> = records
        .iter()
        .filter(|r| r.top_k_success)
        .map(|r| r.top_k_expansions)
        .collect();
    let mean_expansions_to_solution = if solved.is_empty() {
        None
    } else {
        Some(solved.iter().sum::<usize>() as f64 / solved.len() as f64)
    };
    let consecutive_inversion_rate = invert_id.map(|_| {
        records
            .iter()
            .filter(|r| r.single_shot_consecutive_inversions > 0)
            .count() as f64
            / n
    });
    EvalReport {
        single_shot_accuracy,
        top_k,
        mean_expansions_to_solution,
        consecutive_inversion_rate,
        episodes: records,
    }
}

impl EvalReport {
    pub fn write_jsonl(&self, path: &Path) -> io::Result<()> {
        let mut out = io::BufWriter::new(std::fs::File::create(path)?);
        for rec in &self.episodes {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Aggregate rows: `model,env,metric,k,value`.
    pub fn write_csv(&self, model: &str, env_name: &str, path: &Path) -> io::Result<()> {
        let mut out = io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "model,env,metric,k,value")?;
        writeln!(
            out,
            "{model},{env_name},single_shot_accuracy,,{:.6}",
            self.single_shot_accuracy
        )?;
        for &(k, acc) in &self.top_k {
            writeln!(out, "{model},{env_name},top_k_accuracy,{k},{acc:.6}")?;
        }
        if let Some(mean) = self.mean_expansions_to_solution {
            writeln!(out, "{model},{env_name},mean_expansions,,{mean:.6}")?;
        }
        if let Some(rate) = self.consecutive_inversion_rate {
            writeln!(
                out,
                "{model},{env_name},consecutive_inversion_rate,,{rate:.6}"
            )?;
        }
        out.flush()
    }

    /// K-vs-accuracy series for plotting.
    pub fn write_plot_data(&self, path: &Path) -> io::Result<()> {
        let mut out = io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "k,accuracy")?;
        for &(k, acc) in &self.top_k {
            writeln!(out, "{k},{acc:.6}")?;
        }
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy_env::ToyEnv;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_pair_succeeds_with_zero_expansions() {
        let env = ToyEnv::free();
        let img = env.render(&crate::toy_env::GridState::empty(9));
        let pair = StatePair::new(img.clone(), img).unwrap();
        let ss = single_shot(&env, &pair, &UniformEvaluator, 18);
        assert!(ss.success && ss.trajectory.is_empty() && ss.expansions == 0);
        let tk = top_k_search(&env, &pair, &UniformEvaluator, 10, 18);
        assert!(tk.success && tk.expansions == 0);
        assert!(tk.trajectory.unwrap().is_empty());
    }

    #[test]
    fn top_k_budget_one_suffices_when_the_actor_is_right() {
        // One-step pair whose correct action has the maximum probability:
        // a single expansion must solve it.
        let env = ToyEnv::constrained();
        let start = crate::toy_env::GridState::empty(9);
        let end = env
            .state_apply(&start, env.insert_action_id(1, None))
            .unwrap();
        let pair = StatePair::new(env.render(&start), env.render(&end)).unwrap();

        struct Peaked(usize);
        impl crate::mcts::Evaluator for Peaked {
            fn evaluate(&self, _current: &crate::image::Image, legal: &[bool]) -> (Vec<f64>, f64) {
                let mut p = vec![0.0; legal.len()];
                let rest = 0.2 / (legal.len() - 1) as f64;
                for (a, &ok) in legal.iter().enumerate() {
                    if ok {
                        p[a] = if a == self.0 { 0.8 } else { rest };
                    }
                }
                (p, 0.0)
            }
        }
        let result = top_k_search(&env, &pair, &Peaked(env.insert_action_id(1, None)), 1, 18);
        assert!(result.success);
        assert_eq!(result.expansions, 1);
        assert_eq!(result.trajectory.unwrap().len(), 1);
    }

    #[test]
    fn trivial_pairs_evaluate_to_perfect_accuracy() {
        let env = ToyEnv::free();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let episodes: Vec<crate::env::Episode> = (0..20)
            .map(|_| {
                let img = env.render(&env.sample_start(&mut rng));
                crate::env::Episode {
                    source: img.clone(),
                    target: img,
                    ground_truth: crate::env::Trajectory::empty(),
                    reward: 0.0,
                }
            })
            .collect();
        let report = evaluate(&env, &UniformFactory, &episodes, &[10], 18);
        assert_eq!(report.single_shot_accuracy, 1.0);
        assert_eq!(report.top_k[0].1, 1.0);
    }

    #[test]
    fn top_k_budget_is_respected_and_monotone() {
        let env = ToyEnv::free();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let ep = env.generate_pair(3, &mut rng).unwrap();
            let pair = StatePair::new(ep.source.clone(), ep.target.clone()).unwrap();
            let small = top_k_search(&env, &pair, &UniformEvaluator, 30, 18);
            let large = top_k_search(&env, &pair, &UniformEvaluator, 300, 18);
            assert!(small.expansions <= 30 && large.expansions <= 300);
            if small.success {
                assert!(large.success);
                assert_eq!(small.trajectory, large.trajectory);
                assert_eq!(small.expansions, large.expansions);
            }
        }
    }

    #[test]
    fn popped_scores_never_increase() {
        let env = ToyEnv::free();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ep = env.generate_pair(4, &mut rng).unwrap();
        let pair = StatePair::new(ep.source.clone(), ep.target.clone()).unwrap();
        let (_, scores) = top_k_search_with_scores(&env, &pair, &UniformEvaluator, 200, 18);
        for w in scores.windows(2) {
            assert!(w[0] >= w[1], "scores increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn successes_replay_through_the_environment() {
        let env = ToyEnv::free();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let episodes: Vec<_> = (0..20)
            .map(|_| env.generate_pair(2, &mut rng).unwrap())
            .collect();
        let report = evaluate(&env, &UniformFactory, &episodes, &[50, 100], 18);
        for rec in &report.episodes {
            if rec.top_k_success {
                let ep = &episodes[rec.index];
                let pair = StatePair::new(ep.source.clone(), ep.target.clone()).unwrap();
                let tk = top_k_search(&env, &pair, &UniformEvaluator, 100, 18);
                let replay = env
                    .apply_sequence(&tk.trajectory.unwrap(), &ep.source)
                    .unwrap();
                assert_eq!(replay, ep.target);
            }
        }
        // Curve is non-decreasing.
        for w in report.top_k.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn random_policy_rarely_solves_free_pairs_single_shot() {
        let env = ToyEnv::free();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let episodes: Vec<_> = (0..200)
            .map(|_| env.generate_pair(18, &mut rng).unwrap())
            .collect();
        let report = evaluate(&env, &RandomFactory { seed: 5 }, &episodes, &[10], 18);
        assert!(
            report.single_shot_accuracy < 0.05,
            "random policy scored {}",
            report.single_shot_accuracy
        );
    }
}
