//! Per-abstraction control policies.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::Mdp;

pub const DEFAULT_GAMMA: f64 = 0.95;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Greedy,
    Random,
}

/// A policy over one abstraction's abstract states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstractPolicy {
    pub index: usize,
    pub kind: PolicyKind,
    n_actions: usize,
    /// Greedy action per abstract state; empty for random policies.
    pub table: Vec<usize>,
    /// Converged state values, for diagnostics; empty for random policies.
    pub values: Vec<f64>,
}

impl AbstractPolicy {
    /// Uniform random policy over `n_actions`.
    pub fn random(index: usize, n_actions: usize) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::Parameter("random policy needs at least one action".into()));
        }
        Ok(Self {
            index,
            kind: PolicyKind::Random,
            n_actions,
            table: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Action for abstract state `z`. Random policies draw once from `rng`
    /// and ignore `z`; greedy policies never touch `rng`.
    pub fn act<R: Rng + ?Sized>(&self, z: usize, rng: &mut R) -> Result<usize> {
        match self.kind {
            PolicyKind::Random => Ok(rng.random_range(0..self.n_actions)),
            PolicyKind::Greedy => self.table.get(z).copied().ok_or(Error::Index {
                what: "abstract state",
                index: z,
                len: self.table.len(),
            }),
        }
    }
}

/// Result of [`value_iteration`], with the sup-norm change of every sweep.
#[derive(Debug, Clone)]
pub struct Solved {
    pub policy: AbstractPolicy,
    pub residuals: Vec<f64>,
}

fn q_value(m: &Mdp, values: &[f64], s: usize, a: usize, gamma: f64) -> f64 {
    let future: f64 = m
        .row(s, a)
        .iter()
        .zip(values)
        .map(|(&p, &v)| p * v)
        .sum();
    m.reward(s, a) + gamma * future
}

/// Discounted value iteration on a quotient MDP, stopping once the largest
/// value change of a sweep drops below `tol`. The returned policy is greedy
/// in the converged values; ties go to the lowest action index.
pub fn value_iteration(q: &Mdp, index: usize, gamma: f64, tol: f64) -> Result<Solved> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Parameter(format!("gamma {gamma} outside [0, 1)")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Parameter(format!("tolerance {tol} must be positive")));
    }
    let n = q.n_states();
    let mut values = vec![0.0; n];
    let mut residuals = Vec::new();
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..q.n_actions())
                    .map(|a| q_value(q, &values, s, a, gamma))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = next
            .iter()
            .zip(&values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        values = next;
        residuals.push(delta);
        if delta < tol {
            break;
        }
    }
    let table = (0..n)
        .map(|s| {
            let mut best = 0;
            let mut best_q = q_value(q, &values, s, 0, gamma);
            for a in 1..q.n_actions() {
                let qa = q_value(q, &values, s, a, gamma);
                if qa > best_q {
                    best = a;
                    best_q = qa;
                }
            }
            best
        })
        .collect();
    Ok(Solved {
        policy: AbstractPolicy {
            index,
            kind: PolicyKind::Greedy,
            n_actions: q.n_actions(),
            table,
            values,
        },
        residuals,
    })
}
