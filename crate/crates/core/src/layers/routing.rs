//! Token-to-expert routing.
//!
//! Both routers consume an `[n, E]` score matrix that is already softmax
//! normalized along the expert axis; the selected score of each
//! `(token, expert)` pair becomes its combine weight unchanged.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::tensor::{top_k_indices, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    /// Each token picks its two best experts, subject to expert capacity.
    Top2,
    /// Each expert picks its `k` best tokens.
    ExpertChoice,
}

impl Gating {
    pub const ALL: [Gating; 2] = [Gating::Top2, Gating::ExpertChoice];
}

/// Per-expert capacity `floor(c * n_tokens / n_experts)`.
pub fn capacity(capacity_factor: u32, n_tokens: usize, n_experts: usize) -> usize {
    capacity_factor as usize * n_tokens / n_experts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub token: usize,
    pub expert: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub n_tokens: usize,
    pub n_experts: usize,
    /// Assignments in routing order.
    pub assignments: Vec<Assignment>,
    /// Tokens with no assignment, ascending. They reach the next layer only
    /// through the residual path.
    pub dropped_tokens: Vec<usize>,
}

impl RoutingDecision {
    fn from_assignments(n_tokens: usize, n_experts: usize, assignments: Vec<Assignment>) -> Self {
        let mut seen = vec![false; n_tokens];
        for a in &assignments {
            seen[a.token] = true;
        }
        let dropped_tokens = (0..n_tokens).filter(|&t| !seen[t]).collect();
        Self {
            n_tokens,
            n_experts,
            assignments,
            dropped_tokens,
        }
    }

    /// Number of tokens assigned to each expert.
    pub fn expert_loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.n_experts];
        for a in &self.assignments {
            loads[a.expert] += 1;
        }
        loads
    }

    /// Number of experts serving each token.
    pub fn token_fanout(&self) -> Vec<usize> {
        let mut fan = vec![0; self.n_tokens];
        for a in &self.assignments {
            fan[a.token] += 1;
        }
        fan
    }

    /// Tokens routed to `expert`, ascending, with their combine weights.
    pub fn expert_slots(&self, expert: usize) -> Vec<(usize, f64)> {
        let mut slots: Vec<(usize, f64)> = self
            .assignments
            .iter()
            .filter(|a| a.expert == expert)
            .map(|a| (a.token, a.weight))
            .collect();
        slots.sort_by_key(|&(t, _)| t);
        slots
    }
}

/// Expert-axis softmax of `x[n, d] * w_g[d, E]`.
pub fn gate_scores(tape: &mut Tape, x: Var, w_g: Var) -> Result<Var> {
    let logits = tape.matmul(x, w_g)?;
    tape.softmax(logits, 1)
}

/// Token-choice routing with two experts per token.
///
/// Tokens are visited in index order. Each takes its top-2 experts (ties to
/// the lower expert index); an assignment to an expert already holding
/// `capacity` tokens is dropped. With a single expert this degenerates to
/// top-1.
pub fn route_top2(scores: &Tensor, capacity: usize) -> Result<RoutingDecision> {
    let (n, e) = scores.dims2()?;
    let per_token = e.min(2);
    let mut loads = vec![0usize; e];
    let mut assignments = Vec::with_capacity(n * per_token);
    for t in 0..n {
        let row = scores.row(t);
        for ex in top_k_indices(row, per_token)? {
            if loads[ex] < capacity {
                loads[ex] += 1;
                assignments.push(Assignment {
                    token: t,
                    expert: ex,
                    weight: row[ex],
                });
            }
        }
    }
    Ok(RoutingDecision::from_assignments(n, e, assignments))
}

/// Expert-choice routing: every expert independently takes its `capacity`
/// highest-scoring tokens (ties to the lower token index).
pub fn route_expert_choice(scores: &Tensor, capacity: usize) -> Result<RoutingDecision> {
    let (n, e) = scores.dims2()?;
    if capacity > n {
        bail!(
            Input,
            "expert capacity {} exceeds the {} tokens available",
            capacity,
            n
        );
    }
    let mut assignments = Vec::with_capacity(e * capacity);
    let mut column = vec![0.0; n];
    for ex in 0..e {
        for (t, c) in column.iter_mut().enumerate() {
            *c = scores.at(t, ex);
        }
        for t in top_k_indices(&column, capacity)? {
            assignments.push(Assignment {
                token: t,
                expert: ex,
                weight: column[t],
            });
        }
    }
    Ok(RoutingDecision::from_assignments(n, e, assignments))
}

pub fn route(gating: Gating, scores: &Tensor, capacity: usize) -> Result<RoutingDecision> {
    match gating {
        Gating::Top2 => route_top2(scores, capacity),
        Gating::ExpertChoice => route_expert_choice(scores, capacity),
    }
}
