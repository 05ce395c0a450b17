//! The shared environment contract: actions, trajectories, state pairs,
//! episodes, the deterministic transition, and the goal/reward rules.
//!
//! Both concrete environments are pure: `apply` never mutates its input and
//! the same inputs always produce bit-identical outputs, so everything here
//! is safe to call from any number of workers without coordination.

use crate::image::Image;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ActionId = usize;

/// One entry of an environment's action table.
#[derive(Clone, Debug)]
pub struct ActionInfo {
    pub id: ActionId,
    pub name: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("action {action} is illegal{}", position.map(|p| format!(" at position {p}")).unwrap_or_default())]
    IllegalAction {
        action: ActionId,
        position: Option<usize>,
    },
    #[error("image side {got} does not match environment side {expected}")]
    DimensionMismatch { expected: u32, got: u32 },
    #[error("image is not a rendering of any environment state")]
    UnrecognizedState,
    #[error("pair generation failed after {attempts} attempts")]
    GenerationFailure { attempts: usize },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

/// Ordered list of action ids, applied left to right.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub actions: Vec<ActionId>,
}

impl Trajectory {
    pub fn new(actions: Vec<ActionId>) -> Self {
        Self { actions }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, action: ActionId) {
        self.actions.push(action);
    }

    /// Action names resolved against an environment's table.
    pub fn names(&self, env: &dyn Environment) -> Vec<String> {
        self.actions
            .iter()
            .map(|&a| env.actions()[a].name.clone())
            .collect()
    }
}

/// The search state: the image reached so far and the target to hit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatePair {
    pub current: Image,
    pub target: Image,
}

impl StatePair {
    pub fn new(current: Image, target: Image) -> Result<Self, EnvError> {
        if current.side() != target.side() {
            return Err(EnvError::DimensionMismatch {
                expected: target.side(),
                got: current.side(),
            });
        }
        Ok(Self { current, target })
    }
}

/// A generated problem instance. The generator guarantees that applying
/// `ground_truth` to `source` yields `target` exactly and that
/// `source != target`. `reward` is 0 until the episode has been played out.
#[derive(Clone, Debug)]
pub struct Episode {
    pub source: Image,
    pub target: Image,
    pub ground_truth: Trajectory,
    pub reward: f32,
}

/// Per-action application counts along the current trajectory. Used by the
/// image environment to cap repetitions; ignored by the toy environment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct UsageCounter(pub Vec<u16>);

impl UsageCounter {
    pub fn new(action_count: usize) -> Self {
        Self(vec![0; action_count])
    }

    pub fn count(&self, action: ActionId) -> u16 {
        self.0[action]
    }

    pub fn bump(&mut self, action: ActionId) {
        self.0[action] += 1;
    }
}

pub trait Environment: Send + Sync {
    fn actions(&self) -> &[ActionInfo];

    /// Side length of every image in this environment.
    fn side(&self) -> u32;

    /// Hard cap on trajectory length (search depth and generation alike).
    fn max_depth(&self) -> usize;

    /// Per-action legality in the given state, given the per-action usage
    /// accumulated along the trajectory so far.
    fn legal_mask(&self, current: &Image, usage: &UsageCounter) -> Vec<bool>;

    /// Applies one transformation, returning a new image.
    fn apply(&self, action: ActionId, image: &Image) -> Result<Image, EnvError>;

    /// Samples a problem instance whose ground truth has length in
    /// `1..=max_len`.
    fn generate_pair(&self, max_len: usize, rng: &mut dyn RngCore) -> Result<Episode, EnvError>;

    fn action_count(&self) -> usize {
        self.actions().len()
    }

    fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions().iter().find(|a| a.name == name).map(|a| a.id)
    }

    fn new_usage(&self) -> UsageCounter {
        UsageCounter::new(self.action_count())
    }

    /// Left-to-right fold of `apply`. The empty trajectory is the identity.
    /// An illegal step is reported with its position in the sequence.
    fn apply_sequence(&self, trajectory: &Trajectory, image: &Image) -> Result<Image, EnvError> {
        let mut current = image.clone();
        for (pos, &action) in trajectory.actions.iter().enumerate() {
            current = self.apply(action, &current).map_err(|e| match e {
                EnvError::IllegalAction { action, .. } => EnvError::IllegalAction {
                    action,
                    position: Some(pos),
                },
                other => other,
            })?;
        }
        Ok(current)
    }
}

/// Goal test: bit-exact pixel equality.
pub fn is_goal(pair: &StatePair) -> bool {
    pair.current == pair.target
}

/// Terminal reward: +1 at the goal, -1 when the depth budget is exhausted
/// without reaching it, 0 on non-terminal states.
pub fn reward(pair: &StatePair, depth: usize, max_depth: usize) -> f32 {
    if is_goal(pair) {
        1.0
    } else if depth >= max_depth {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_pair_requires_matching_sides() {
        let a = Image::zeros(4);
        let b = Image::zeros(5);
        assert!(matches!(
            StatePair::new(a, b),
            Err(EnvError::DimensionMismatch {
                expected: 5,
                got: 4
            })
        ));
    }

    #[test]
    fn goal_is_symmetric_and_exact() {
        let x = Image::from_fn(3, |r, c| (r + c) as u8);
        let mut y = x.clone();
        assert!(is_goal(&StatePair::new(x.clone(), y.clone()).unwrap()));
        assert!(is_goal(&StatePair::new(y.clone(), x.clone()).unwrap()));
        y.set(0, 0, 9);
        assert!(!is_goal(&StatePair::new(x.clone(), y.clone()).unwrap()));
        assert!(!is_goal(&StatePair::new(y, x).unwrap()));
    }

    #[test]
    fn reward_cases() {
        let x = Image::zeros(2);
        let y = Image::filled(2, 1);
        let goal = StatePair::new(x.clone(), x.clone()).unwrap();
        let miss = StatePair::new(x, y).unwrap();
        assert_eq!(reward(&goal, 3, 10), 1.0);
        assert_eq!(reward(&miss, 10, 10), -1.0);
        assert_eq!(reward(&miss, 3, 10), 0.0);
    }
}
