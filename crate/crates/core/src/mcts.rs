//! PUCT tree search over environment actions, guided by network priors, plus
//! the self-play episode driver that turns searches into training items.
//!
//! Single-agent conventions: leaf values are +1 at the goal, -1 at the depth
//! cap, otherwise the critic's estimate; backups add the value along the
//! path with no sign alternation.

use crate::env::{ActionId, Environment, Episode, StatePair, Trajectory, UsageCounter};
use crate::image::Image;
use crate::nn::{PolicyValueNet, Scalar};
use crate::training::ReplayItem;
use ndarray::Array1;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MctsConfig {
    /// Simulations per move.
    pub iterations: usize,
    pub c_puct: f64,
    pub dirichlet_alpha: f64,
    pub dirichlet_epsilon: f64,
    /// Temperature for visit-count policy targets.
    pub temperature: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            c_puct: 1.0,
            dirichlet_alpha: 5.0,
            dirichlet_epsilon: 0.25,
            temperature: 1.0,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.iterations < 1 {
            return Err("iterations must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.dirichlet_epsilon) {
            return Err("dirichlet_epsilon must be in [0, 1]".into());
        }
        for (value, name) in [
            (self.temperature, "temperature"),
            (self.dirichlet_alpha, "dirichlet_alpha"),
            (self.c_puct, "c_puct"),
        ] {
            if value.is_nan() || value <= 0.0 {
                return Err(format!("{name} must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("cannot search from a terminal root")]
    TerminalRoot,
}

/// Prior/value source for leaf evaluation. Priors must be 0 on illegal
/// actions and sum to 1 over legal ones; values must lie in [-1, 1].
pub trait Evaluator {
    fn evaluate(&self, current: &Image, legal: &[bool]) -> (Vec<f64>, f64);
}

/// Network-backed evaluator for a fixed target image. The target embedding
/// is computed once; current-image embeddings are memoized so repeated states
/// across the tree (and across the moves of one episode) cost one backbone
/// pass each.
pub struct NetEvaluator<'a, F: Scalar> {
    net: &'a PolicyValueNet<F>,
    target_embed: Array1<F>,
    cache: RefCell<HashMap<Image, Array1<F>>>,
}

impl<'a, F: Scalar> NetEvaluator<'a, F> {
    pub fn new(net: &'a PolicyValueNet<F>, target: &Image) -> Result<Self, crate::nn::NetError> {
        Ok(Self {
            net,
            target_embed: net.embed(target)?,
            cache: RefCell::new(HashMap::new()),
        })
    }
}

impl<F: Scalar> Evaluator for NetEvaluator<'_, F> {
    fn evaluate(&self, current: &Image, legal: &[bool]) -> (Vec<f64>, f64) {
        let mut cache = self.cache.borrow_mut();
        let embed = cache
            .entry(current.clone())
            .or_insert_with(|| self.net.embed(current).expect("side checked at setup"));
        let out = self
            .net
            .output_from_embeds(embed, &self.target_embed, legal);
        (
            out.policy
                .iter()
                .map(|p| p.to_f64().expect("finite"))
                .collect(),
            out.value.to_f64().expect("finite"),
        )
    }
}

/// Uniform priors over legal actions, value 0.
pub struct UniformEvaluator;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, _current: &Image, legal: &[bool]) -> (Vec<f64>, f64) {
        let n = legal.iter().filter(|&&ok| ok).count().max(1);
        let p = 1.0 / n as f64;
        (
            legal.iter().map(|&ok| if ok { p } else { 0.0 }).collect(),
            0.0,
        )
    }
}

/// Fresh random distribution over legal actions on every call.
pub struct RandomEvaluator {
    rng: RefCell<rand_chacha::ChaCha8Rng>,
}

impl RandomEvaluator {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: RefCell::new(crate::seeds::rng(seed, "random-eval", &[])),
        }
    }
}

impl Evaluator for RandomEvaluator {
    fn evaluate(&self, _current: &Image, legal: &[bool]) -> (Vec<f64>, f64) {
        let mut rng = self.rng.borrow_mut();
        let raw: Vec<f64> = legal
            .iter()
            .map(|&ok| if ok { rng.random::<f64>() + 1e-9 } else { 0.0 })
            .collect();
        let sum: f64 = raw.iter().sum();
        (raw.into_iter().map(|v| v / sum).collect(), 0.0)
    }
}

/// Mixes a Dirichlet(alpha) sample over the legal actions into the priors:
/// `p_i * (1 - eps) + eps * d_i`. `eps = 0` leaves the priors untouched.
pub fn add_dirichlet_noise(
    priors: &mut [f64],
    legal: &[bool],
    alpha: f64,
    eps: f64,
    rng: &mut dyn RngCore,
) {
    if eps == 0.0 {
        return;
    }
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let mut noise = vec![0.0; priors.len()];
    let mut sum = 0.0;
    for (i, &ok) in legal.iter().enumerate() {
        if ok {
            let g: f64 = gamma.sample(rng);
            noise[i] = g;
            sum += g;
        }
    }
    if sum <= 0.0 {
        return;
    }
    for (i, &ok) in legal.iter().enumerate() {
        if ok {
            priors[i] = priors[i] * (1.0 - eps) + eps * noise[i] / sum;
        }
    }
}

#[derive(Clone, Debug)]
struct Edge {
    prior: f64,
    visits: u32,
    value_sum: f64,
    child: Option<usize>,
}

impl Edge {
    fn mean_value(&self) -> f64 {
        self.value_sum / f64::from(self.visits.max(1))
    }
}

#[derive(Debug)]
struct Node {
    image: Image,
    depth: usize,
    usage: UsageCounter,
    /// +1 goal, -1 depth cap; `None` for non-terminal states.
    terminal: Option<f64>,
    legal: Vec<bool>,
    edges: Vec<Edge>,
    expanded: bool,
}

/// One search tree, owned by exactly one worker.
pub struct SearchTree<'a> {
    env: &'a dyn Environment,
    target: Image,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl<'a> SearchTree<'a> {
    pub fn new(
        env: &'a dyn Environment,
        target: Image,
        root_image: Image,
        root_depth: usize,
        root_usage: UsageCounter,
        max_depth: usize,
    ) -> Self {
        let terminal = terminal_value(&root_image, &target, root_depth, max_depth);
        Self {
            env,
            target,
            max_depth,
            nodes: vec![Node {
                image: root_image,
                depth: root_depth,
                usage: root_usage,
                terminal,
                legal: Vec::new(),
                edges: Vec::new(),
                expanded: false,
            }],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_legal(&self) -> &[bool] {
        &self.nodes[0].legal
    }

    pub fn root_visits(&self) -> Vec<u32> {
        self.nodes[0].edges.iter().map(|e| e.visits).collect()
    }

    pub fn root_priors(&self) -> Vec<f64> {
        self.nodes[0].edges.iter().map(|e| e.prior).collect()
    }

    pub fn root_mean_values(&self) -> Vec<f64> {
        self.nodes[0].edges.iter().map(Edge::mean_value).collect()
    }

    /// Runs `cfg.iterations` simulations. When `noise_rng` is given, a
    /// Dirichlet sample is mixed into the root priors first (stored network
    /// estimates elsewhere in the tree are never perturbed).
    pub fn run(
        &mut self,
        evaluator: &dyn Evaluator,
        cfg: &MctsConfig,
        noise_rng: Option<&mut dyn RngCore>,
    ) -> Result<(), SearchError> {
        if self.nodes[0].terminal.is_some() {
            return Err(SearchError::TerminalRoot);
        }
        if !self.nodes[0].expanded {
            self.expand(0, evaluator);
        }
        if let Some(rng) = noise_rng {
            let root = &mut self.nodes[0];
            let mut priors: Vec<f64> = root.edges.iter().map(|e| e.prior).collect();
            add_dirichlet_noise(
                &mut priors,
                &root.legal,
                cfg.dirichlet_alpha,
                cfg.dirichlet_epsilon,
                rng,
            );
            for (edge, p) in root.edges.iter_mut().zip(priors) {
                edge.prior = p;
            }
        }
        for _ in 0..cfg.iterations {
            self.simulate(evaluator, cfg.c_puct);
        }
        Ok(())
    }

    fn expand(&mut self, ix: usize, evaluator: &dyn Evaluator) -> f64 {
        let legal = self
            .env
            .legal_mask(&self.nodes[ix].image, &self.nodes[ix].usage);
        let (priors, value) = evaluator.evaluate(&self.nodes[ix].image, &legal);
        let node = &mut self.nodes[ix];
        node.edges = priors
            .iter()
            .map(|&p| Edge {
                prior: p,
                visits: 0,
                value_sum: 0.0,
                child: None,
            })
            .collect();
        node.legal = legal;
        node.expanded = true;
        value.clamp(-1.0, 1.0)
    }

    /// PUCT: argmax over legal actions of
    /// `Q(a) + c_puct * P(a) * sqrt(total + 1) / (1 + N(a))`.
    /// The `+ 1` keeps an unvisited node ordered by priors; ties resolve to
    /// the lowest action id.
    fn select_child(&self, ix: usize, c_puct: f64) -> ActionId {
        let node = &self.nodes[ix];
        let total: u32 = node.edges.iter().map(|e| e.visits).sum();
        let sqrt_total = f64::from(total + 1).sqrt();
        let mut best: Option<(ActionId, f64)> = None;
        for (a, edge) in node.edges.iter().enumerate() {
            if !node.legal[a] {
                continue;
            }
            let q = edge.mean_value();
            let u = c_puct * edge.prior * sqrt_total / (1.0 + f64::from(edge.visits));
            let score = q + u;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((a, score));
            }
        }
        best.expect("at least one legal action").0
    }

    fn simulate(&mut self, evaluator: &dyn Evaluator, c_puct: f64) {
        let mut path: Vec<(usize, ActionId)> = Vec::new();
        let mut ix = 0;
        let value = loop {
            if let Some(v) = self.nodes[ix].terminal {
                break v;
            }
            if !self.nodes[ix].expanded {
                break self.expand(ix, evaluator);
            }
            let action = self.select_child(ix, c_puct);
            let child = match self.nodes[ix].edges[action].child {
                Some(c) => c,
                None => {
                    let image = self
                        .env
                        .apply(action, &self.nodes[ix].image)
                        .expect("selected action is legal");
                    let depth = self.nodes[ix].depth + 1;
                    let mut usage = self.nodes[ix].usage.clone();
                    usage.bump(action);
                    let terminal = terminal_value(&image, &self.target, depth, self.max_depth);
                    self.nodes.push(Node {
                        image,
                        depth,
                        usage,
                        terminal,
                        legal: Vec::new(),
                        edges: Vec::new(),
                        expanded: false,
                    });
                    let new_ix = self.nodes.len() - 1;
                    self.nodes[ix].edges[action].child = Some(new_ix);
                    new_ix
                }
            };
            path.push((ix, action));
            ix = child;
        };
        for (node_ix, action) in path {
            let edge = &mut self.nodes[node_ix].edges[action];
            edge.visits += 1;
            edge.value_sum += value;
        }
    }

    /// Visit-count policy over the root's legal actions.
    pub fn policy_target(&self, tau: f64) -> Vec<f64> {
        let root = &self.nodes[0];
        visits_to_policy(&self.root_visits(), &root.legal, tau)
    }
}

/// pi(a) proportional to N(a)^(1/tau) over legal actions; illegal actions
/// get exactly 0. Temperatures below 0.01 collapse to the argmax one-hot
/// (ties to the lowest action id).
pub fn visits_to_policy(visits: &[u32], legal: &[bool], tau: f64) -> Vec<f64> {
    let mut pi = vec![0.0; visits.len()];
    if tau < 0.01 {
        let mut best: Option<(usize, u32)> = None;
        for (a, &n) in visits.iter().enumerate() {
            if legal[a] && best.is_none_or(|(_, b)| n > b) {
                best = Some((a, n));
            }
        }
        if let Some((a, _)) = best {
            pi[a] = 1.0;
        }
        return pi;
    }
    let mut sum = 0.0;
    for (a, &n) in visits.iter().enumerate() {
        if legal[a] && n > 0 {
            let w = f64::from(n).powf(1.0 / tau);
            pi[a] = w;
            sum += w;
        }
    }
    if sum > 0.0 {
        for p in &mut pi {
            *p /= sum;
        }
    }
    pi
}

fn terminal_value(image: &Image, target: &Image, depth: usize, max_depth: usize) -> Option<f64> {
    if image == target {
        Some(1.0)
    } else if depth >= max_depth {
        Some(-1.0)
    } else {
        None
    }
}

/// Per-move search record for `--trace-search` dumps.
#[derive(Clone, Debug, Serialize)]
pub struct MoveTrace {
    pub depth: usize,
    pub priors: Vec<f64>,
    pub visits: Vec<u32>,
    pub chosen: ActionId,
}

#[derive(Debug)]
pub struct SelfPlayOutcome {
    pub items: Vec<ReplayItem>,
    pub reward: f32,
    pub actions: Trajectory,
    pub traces: Option<Vec<MoveTrace>>,
}

/// Plays one episode with search at every move: add root noise, run the
/// configured simulations, record `(state, pi)`, sample the move from pi.
/// Terminal reward (+1 goal / -1 depth cap) becomes the value target of
/// every recorded item.
pub fn self_play_episode(
    env: &dyn Environment,
    episode: &Episode,
    evaluator: &dyn Evaluator,
    cfg: &MctsConfig,
    max_depth: usize,
    rng: &mut dyn RngCore,
    want_trace: bool,
) -> Result<SelfPlayOutcome, SearchError> {
    let mut current = episode.source.clone();
    let mut usage = env.new_usage();
    let mut depth = 0usize;
    let mut items: Vec<ReplayItem> = Vec::new();
    let mut actions = Trajectory::empty();
    let mut traces = want_trace.then(Vec::new);

    let reward = loop {
        if current == episode.target {
            break 1.0f32;
        }
        if depth >= max_depth {
            break -1.0f32;
        }
        let mut tree = SearchTree::new(
            env,
            episode.target.clone(),
            current.clone(),
            depth,
            usage.clone(),
            max_depth,
        );
        tree.run(evaluator, cfg, Some(rng))?;
        let pi = tree.policy_target(cfg.temperature);
        let action = sample_index(&pi, rng);
        if let Some(traces) = traces.as_mut() {
            traces.push(MoveTrace {
                depth,
                priors: tree.root_priors(),
                visits: tree.root_visits(),
                chosen: action,
            });
        }
        items.push(ReplayItem {
            pair: StatePair::new(current.clone(), episode.target.clone()).expect("same side"),
            legal: tree.root_legal().to_vec(),
            policy: pi.iter().map(|&p| p as f32).collect(),
            value: 0.0,
        });
        current = env
            .apply(action, &current)
            .expect("sampled action is legal");
        usage.bump(action);
        depth += 1;
        actions.push(action);
    };

    for item in &mut items {
        item.value = reward;
    }
    Ok(SelfPlayOutcome {
        items,
        reward,
        actions,
        traces,
    })
}

/// Samples an index from an (unnormalized-tolerant) distribution.
pub fn sample_index(weights: &[f64], rng: &mut dyn RngCore) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "cannot sample from all-zero weights");
    let mut draw = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            if draw < w {
                return i;
            }
            draw -= w;
        }
    }
    last_positive
}
