//! Scripted reference policies: random, forward, oracle and noisy oracle.

use rand::Rng;

use super::Policy;
use crate::episode::{Decision, DecisionView, Phase};
use crate::error::PolicyError;
use crate::graph::{bfs_to, NodeIdx};
use crate::seed::{mix_seed, rng};

/// Confidence reported by the random and forward baselines.
pub const SCRIPTED_CONFIDENCE: f64 = 0.5;

fn keep_going(reason: &str) -> Decision {
    Decision::new(Phase::Stop, 0, SCRIPTED_CONFIDENCE, reason)
}

fn no_options() -> PolicyError {
    PolicyError::Config("choice requested at a node without outgoing edges".into())
}

/// Uniform choice among perspectives; never stops.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    seed: u64,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&self, view: &DecisionView<'_>) -> Result<Decision, PolicyError> {
        match view.phase {
            Phase::Stop => Ok(keep_going("random baseline never stops")),
            Phase::Choice => {
                let n = view.perspectives.len();
                if n == 0 {
                    return Err(no_options());
                }
                let i = rng(mix_seed(self.seed, view.seed)).gen_range(0..n);
                Ok(Decision::new(Phase::Choice, i as i64, SCRIPTED_CONFIDENCE, "random pick"))
            }
        }
    }
}

/// Takes the perspective closest to straight ahead; ties go clockwise.
/// Never stops.
#[derive(Debug, Clone, Copy)]
pub struct ForwardPolicy;

impl Policy for ForwardPolicy {
    fn name(&self) -> &str {
        "forward"
    }

    fn decide(&self, view: &DecisionView<'_>) -> Result<Decision, PolicyError> {
        match view.phase {
            Phase::Stop => Ok(keep_going("forward baseline never stops")),
            Phase::Choice => {
                let best = view
                    .perspectives
                    .iter()
                    .min_by(|a, b| {
                        a.delta
                            .abs()
                            .total_cmp(&b.delta.abs())
                            .then_with(|| b.delta.total_cmp(&a.delta))
                    })
                    .ok_or_else(no_options)?;
                Ok(Decision::new(Phase::Choice, best.index as i64, SCRIPTED_CONFIDENCE, "keep heading"))
            }
        }
    }
}

/// Next node the oracle heads for: the ground-truth successor while on the
/// ground-truth path, otherwise the first hop of a recomputed canonical
/// shortest path. `None` at the goal or when the goal is unreachable.
pub fn oracle_target(view: &DecisionView<'_>) -> Option<NodeIdx> {
    let g = view.graph;
    let here = g.id(view.node);
    if here == view.task.goal {
        return None;
    }
    if let Some(i) = view.task.gt_path.iter().position(|n| n == here) {
        if let Some(next) = view.task.gt_path.get(i + 1).and_then(|id| g.idx(id)) {
            if g.edge_between(view.node, next).is_some() {
                return Some(next);
            }
        }
    }
    let goal = g.idx(&view.task.goal)?;
    g.canonical_next(view.node, &bfs_to(g, goal))
}

fn oracle_index(view: &DecisionView<'_>) -> Option<usize> {
    let target = oracle_target(view)?;
    view.perspectives.iter().position(|p| p.to == target)
}

fn at_goal(view: &DecisionView<'_>) -> bool {
    view.graph.id(view.node) == view.task.goal
}

fn stop_at_goal(view: &DecisionView<'_>, confidence: f64) -> Decision {
    if at_goal(view) {
        Decision::new(Phase::Stop, -1, confidence, "goal reached")
    } else {
        Decision::new(Phase::Stop, 0, confidence, "not there yet")
    }
}

/// Follows the ground truth exactly and stops at the goal.
#[derive(Debug, Clone, Copy)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn decide(&self, view: &DecisionView<'_>) -> Result<Decision, PolicyError> {
        match view.phase {
            Phase::Stop => Ok(stop_at_goal(view, 1.0)),
            Phase::Choice => {
                let i = oracle_index(view).or(if view.perspectives.is_empty() { None } else { Some(0) });
                let i = i.ok_or_else(no_options)?;
                Ok(Decision::new(Phase::Choice, i as i64, 1.0, "shortest path"))
            }
        }
    }
}

/// Oracle that errs with probability `p`. An erroneous choice is a uniform
/// pick among the non-oracle perspectives with confidence in [0.2, 0.6);
/// a correct one has confidence in [0.8, 1.0). Stops exactly at the goal.
///
/// Like a model reading its prompt, it follows an injected backtrack hint
/// and avoids recently visited nodes and edges that memory marks as failed
/// whenever that still leaves an alternative.
#[derive(Debug, Clone)]
pub struct NoisyOraclePolicy {
    p: f64,
    seed: u64,
}

impl NoisyOraclePolicy {
    pub fn new(p: f64, seed: u64) -> Self {
        Self { p, seed }
    }
}

impl Policy for NoisyOraclePolicy {
    fn name(&self) -> &str {
        "noisy_oracle"
    }

    fn decide(&self, view: &DecisionView<'_>) -> Result<Decision, PolicyError> {
        if view.phase == Phase::Stop {
            return Ok(stop_at_goal(view, 1.0));
        }
        let n = view.perspectives.len();
        if n == 0 {
            return Err(no_options());
        }
        let mut r = rng(mix_seed(self.seed, view.seed));
        let (u, pick, cu): (f64, f64, f64) = (r.gen(), r.gen(), r.gen());
        let confident = |i: usize, why: &str| Decision::new(Phase::Choice, i as i64, 0.8 + 0.2 * cu, why);

        if let Some(h) = view.context.hint.filter(|&h| h < n) {
            return Ok(confident(h, "following the hint"));
        }
        let Some(best) = oracle_index(view) else {
            return Ok(confident(0, "no better option"));
        };
        let mut others: Vec<usize> = (0..n).filter(|&i| i != best).collect();
        let ctx = view.context;
        for exclude in [&ctx.recent_nodes, &ctx.avoid] {
            if exclude.is_empty() {
                continue;
            }
            let kept: Vec<usize> = others
                .iter()
                .copied()
                .filter(|&i| !exclude.contains(&view.perspectives[i].to))
                .collect();
            if !kept.is_empty() {
                others = kept;
            }
        }
        if u < self.p && !others.is_empty() {
            let i = others[((pick * others.len() as f64) as usize).min(others.len() - 1)];
            Ok(Decision::new(Phase::Choice, i as i64, 0.2 + 0.4 * cu, "guess"))
        } else {
            Ok(confident(best, "shortest path"))
        }
    }
}
