//! Brute-force ground truth: breadth-first solving, constrained sequence
//! counting, and solution-multiplicity counting. Everything here is the
//! independent check for the learned search paths.

use crate::env::{ActionId, Environment, StatePair, Trajectory, UsageCounter};
use crate::image::Image;
use std::collections::HashMap;
use thiserror::Error;

/// Work cap for exhaustive searches: a search that materializes more states
/// than this aborts instead of hanging.
pub const ENUMERATION_BUDGET: usize = 10_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration budget of {budget} states exceeded")]
    BudgetExceeded { budget: usize },
}

/// Dynamic program over per-symbol usage vectors for sequences drawn from an
/// `alphabet` where every symbol may appear at most `cap` times.
///
/// `table[n][u]` counts the length-`n` completions available from usage
/// state `u` (encoded base `cap+1`).
pub struct UsageDp {
    alphabet: usize,
    cap: usize,
    table: Vec<Vec<u64>>,
}

impl UsageDp {
    pub fn new(alphabet: usize, cap: usize, max_len: usize) -> Self {
        let states = (cap + 1).pow(alphabet as u32);
        let mut table = vec![vec![0u64; states]; max_len + 1];
        table[0].fill(1);
        for n in 1..=max_len {
            for u in 0..states {
                let mut total = 0u64;
                for sym in 0..alphabet {
                    if let Some(next) = Self::bump_state(u, sym, alphabet, cap) {
                        total += table[n - 1][next];
                    }
                }
                table[n][u] = total;
            }
        }
        Self {
            alphabet,
            cap,
            table,
        }
    }

    fn bump_state(state: usize, sym: usize, alphabet: usize, cap: usize) -> Option<usize> {
        debug_assert!(sym < alphabet);
        let base = cap + 1;
        let place = base.pow(sym as u32);
        let count = (state / place) % base;
        (count < cap).then(|| state + place)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Number of valid completions of length `n` from a usage state.
    pub fn completions(&self, n: usize, state: usize) -> u64 {
        self.table[n][state]
    }

    /// Advances a usage state by one use of `sym`; `None` when capped out.
    pub fn advance(&self, state: usize, sym: usize) -> Option<usize> {
        Self::bump_state(state, sym, self.alphabet, self.cap)
    }

    pub fn count_exact(&self, len: usize) -> u64 {
        self.completions(len, 0)
    }

    pub fn count_range(&self, min_len: usize, max_len: usize) -> u64 {
        (min_len..=max_len).map(|n| self.count_exact(n)).sum()
    }
}

/// Exact count of sequences with lengths in `min_len..=max_len` over an
/// alphabet with a per-symbol repetition cap.
pub fn count_sequences(alphabet: usize, cap: usize, min_len: usize, max_len: usize) -> u64 {
    UsageDp::new(alphabet, cap, max_len).count_range(min_len, max_len)
}

/// Same count by explicit depth-first enumeration: the cross-check for the
/// dynamic program. Only usable for small spaces.
pub fn count_sequences_by_enumeration(
    alphabet: usize,
    cap: usize,
    min_len: usize,
    max_len: usize,
) -> u64 {
    fn recurse(counts: &mut [usize], cap: usize, len: usize, min: usize, max: usize) -> u64 {
        let mut total = if len >= min { 1 } else { 0 };
        if len == max {
            return total;
        }
        for sym in 0..counts.len() {
            if counts[sym] < cap {
                counts[sym] += 1;
                total += recurse(counts, cap, len + 1, min, max);
                counts[sym] -= 1;
            }
        }
        total
    }
    let mut counts = vec![0usize; alphabet];
    recurse(&mut counts, cap, 0, min_len, max_len)
}

/// Breadth-first shortest solution over `(image, usage)` states, deduplicated.
/// Returns `Ok(None)` when no solution exists within `max_depth`.
pub fn bfs_solve(
    pair: &StatePair,
    env: &dyn Environment,
    max_depth: usize,
) -> Result<Option<Trajectory>, OracleError> {
    if pair.current == pair.target {
        return Ok(Some(Trajectory::empty()));
    }
    struct NodeRec {
        image: Image,
        usage: UsageCounter,
        parent: usize,
        action: ActionId,
    }
    let mut nodes = vec![NodeRec {
        image: pair.current.clone(),
        usage: env.new_usage(),
        parent: usize::MAX,
        action: 0,
    }];
    let mut seen: HashMap<(Image, UsageCounter), ()> = HashMap::new();
    seen.insert((pair.current.clone(), env.new_usage()), ());
    let mut frontier = vec![0usize];
    for _depth in 0..max_depth {
        let mut next_frontier = Vec::new();
        for &node_ix in &frontier {
            let mask = env.legal_mask(&nodes[node_ix].image, &nodes[node_ix].usage);
            for (action, ok) in mask.into_iter().enumerate() {
                if !ok {
                    continue;
                }
                if nodes.len() >= ENUMERATION_BUDGET {
                    return Err(OracleError::BudgetExceeded {
                        budget: ENUMERATION_BUDGET,
                    });
                }
                let image = env
                    .apply(action, &nodes[node_ix].image)
                    .expect("legal action must apply");
                let mut usage = nodes[node_ix].usage.clone();
                usage.bump(action);
                if image == pair.target {
                    let mut actions = vec![action];
                    let mut at = node_ix;
                    while at != 0 {
                        actions.push(nodes[at].action);
                        at = nodes[at].parent;
                    }
                    actions.reverse();
                    return Ok(Some(Trajectory::new(actions)));
                }
                let key = (image.clone(), usage.clone());
                if seen.contains_key(&key) {
                    continue;
                }
                seen.insert(key, ());
                nodes.push(NodeRec {
                    image,
                    usage,
                    parent: node_ix,
                    action,
                });
                next_frontier.push(nodes.len() - 1);
            }
        }
        frontier = next_frontier;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(None)
}

/// Number of distinct legal action sequences of exactly `exact_len` whose
/// fold maps `pair.current` onto `pair.target`.
pub fn count_solutions(
    pair: &StatePair,
    env: &dyn Environment,
    exact_len: usize,
) -> Result<u64, OracleError> {
    fn recurse(
        env: &dyn Environment,
        image: &Image,
        usage: &UsageCounter,
        target: &Image,
        remaining: usize,
        visited: &mut usize,
    ) -> Result<u64, OracleError> {
        if remaining == 0 {
            return Ok(u64::from(image == target));
        }
        let mut total = 0u64;
        let mask = env.legal_mask(image, usage);
        for (action, ok) in mask.into_iter().enumerate() {
            if !ok {
                continue;
            }
            *visited += 1;
            if *visited > ENUMERATION_BUDGET {
                return Err(OracleError::BudgetExceeded {
                    budget: ENUMERATION_BUDGET,
                });
            }
            let next = env.apply(action, image).expect("legal action must apply");
            let mut next_usage = usage.clone();
            next_usage.bump(action);
            total += recurse(env, &next, &next_usage, target, remaining - 1, visited)?;
        }
        Ok(total)
    }
    let mut visited = 0usize;
    recurse(
        env,
        &pair.current,
        &env.new_usage(),
        &pair.target,
        exact_len,
        &mut visited,
    )
}
