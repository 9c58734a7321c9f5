//! Finite Markov decision processes and context catalogs.
//!
//! Transitions are stored per action as dense row-stochastic matrices,
//! `transitions[a][s][s'] = P(s' | s, a)`, and rewards as `rewards[s][a] =
//! R(s, a)`. State-only rewards are written as rows that are constant across
//! actions.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for row sums and probability comparisons.
pub const PROB_TOL: f64 = 1e-9;

/// Unvalidated MDP data, as read from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMdp {
    /// `transitions[a][s][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]`
    pub rewards: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    Shape(String),
    RowSum { action: usize, state: usize, sum: f64 },
    Entry { action: usize, state: usize, next: usize, value: f64 },
    NonFiniteReward { state: usize, action: usize, value: f64 },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Shape(msg) => write!(f, "{msg}"),
            Issue::RowSum { action, state, sum } => {
                write!(f, "row (state {state}, action {action}) sums to {sum}")
            }
            Issue::Entry {
                action,
                state,
                next,
                value,
            } => write!(
                f,
                "P({next} | {state}, {action}) = {value} is not a probability"
            ),
            Issue::NonFiniteReward {
                state,
                action,
                value,
            } => write!(f, "R({state}, {action}) = {value} is not finite"),
        }
    }
}

/// Every violated invariant of a candidate MDP.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Checks shape, stochasticity and reward finiteness, reporting every
/// violation rather than stopping at the first.
pub fn validate_mdp(raw: &RawMdp) -> std::result::Result<(), ValidationReport> {
    let mut issues = Vec::new();
    let n_actions = raw.transitions.len();
    let n_states = raw.rewards.len();
    if n_actions == 0 {
        issues.push(Issue::Shape("no actions".into()));
    }
    if n_states == 0 {
        issues.push(Issue::Shape("no states".into()));
    }
    for (a, matrix) in raw.transitions.iter().enumerate() {
        if matrix.len() != n_states {
            issues.push(Issue::Shape(format!(
                "action {a} has {} rows, expected {n_states}",
                matrix.len()
            )));
        }
        for (s, row) in matrix.iter().enumerate() {
            if row.len() != n_states {
                issues.push(Issue::Shape(format!(
                    "row (state {s}, action {a}) has {} entries, expected {n_states}",
                    row.len()
                )));
                continue;
            }
            let mut row_ok = true;
            for (next, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    row_ok = false;
                    issues.push(Issue::Entry {
                        action: a,
                        state: s,
                        next,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if row_ok && (sum - 1.0).abs() > PROB_TOL {
                issues.push(Issue::RowSum {
                    action: a,
                    state: s,
                    sum,
                });
            }
        }
    }
    for (s, row) in raw.rewards.iter().enumerate() {
        if row.len() != n_actions {
            issues.push(Issue::Shape(format!(
                "reward row {s} has {} entries, expected {n_actions}",
                row.len()
            )));
        }
        for (a, &r) in row.iter().enumerate() {
            if !r.is_finite() {
                issues.push(Issue::NonFiniteReward {
                    state: s,
                    action: a,
                    value: r,
                });
            }
        }
    }
    for (what, labels, len) in [
        ("state", &raw.state_labels, n_states),
        ("action", &raw.action_labels, n_actions),
    ] {
        if let Some(labels) = labels {
            if labels.len() != len {
                issues.push(Issue::Shape(format!(
                    "{} {what} labels for {len} {what}s",
                    labels.len()
                )));
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { issues })
    }
}

/// A validated finite MDP; one context of the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    state_labels: Option<Vec<String>>,
    action_labels: Option<Vec<String>>,
}

impl TryFrom<RawMdp> for Mdp {
    type Error = Error;

    fn try_from(mut raw: RawMdp) -> Result<Self> {
        validate_mdp(&raw).map_err(Error::InvalidMdp)?;
        // Rows within tolerance are renormalized exactly once, here.
        for row in raw.transitions.iter_mut().flatten() {
            let sum: f64 = row.iter().sum();
            if sum != 1.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        Ok(Mdp {
            n_states: raw.rewards.len(),
            n_actions: raw.transitions.len(),
            transitions: raw.transitions,
            rewards: raw.rewards,
            state_labels: raw.state_labels,
            action_labels: raw.action_labels,
        })
    }
}

impl From<Mdp> for RawMdp {
    fn from(m: Mdp) -> Self {
        RawMdp {
            transitions: m.transitions,
            rewards: m.rewards,
            state_labels: m.state_labels,
            action_labels: m.action_labels,
        }
    }
}

impl Mdp {
    /// Builds and validates an MDP from `transitions[a][s][s']` and `rewards[s][a]`.
    pub fn new(transitions: Vec<Vec<Vec<f64>>>, rewards: Vec<Vec<f64>>) -> Result<Self> {
        Self::try_from(RawMdp {
            transitions,
            rewards,
            state_labels: None,
            action_labels: None,
        })
    }

    /// State-only rewards: `state_rewards[s]` is copied across all actions.
    pub fn with_state_rewards(
        transitions: Vec<Vec<Vec<f64>>>,
        state_rewards: &[f64],
    ) -> Result<Self> {
        let n_actions = transitions.len();
        let rewards = state_rewards.iter().map(|&r| vec![r; n_actions]).collect();
        Self::new(transitions, rewards)
    }

    pub fn with_labels(mut self, states: Vec<String>, actions: Vec<String>) -> Result<Self> {
        if states.len() != self.n_states || actions.len() != self.n_actions {
            return Err(Error::Dimension(format!(
                "labels {}x{} for MDP {}x{}",
                states.len(),
                actions.len(),
                self.n_states,
                self.n_actions
            )));
        }
        self.state_labels = Some(states);
        self.action_labels = Some(actions);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `P(next | state, action)`; indices must be in range.
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions[action][state][next]
    }

    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        &self.transitions[action][state]
    }

    /// `transitions()[a][s][s']`
    pub fn transitions(&self) -> &[Vec<Vec<f64>>] {
        &self.transitions
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state][action]
    }

    pub fn reward_row(&self, state: usize) -> &[f64] {
        &self.rewards[state]
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        self.state_labels.as_deref()
    }

    pub fn action_labels(&self) -> Option<&[String]> {
        self.action_labels.as_deref()
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state < self.n_states {
            Ok(())
        } else {
            Err(Error::Index {
                what: "state",
                index: state,
                len: self.n_states,
            })
        }
    }

    pub fn check_action(&self, action: usize) -> Result<()> {
        if action < self.n_actions {
            Ok(())
        } else {
            Err(Error::Index {
                what: "action",
                index: action,
                len: self.n_actions,
            })
        }
    }

    /// Draws `s' ~ P(. | state, action)` with exactly one uniform draw.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<usize> {
        self.check_state(state)?;
        self.check_action(action)?;
        Ok(sample_categorical(self.row(state, action), rng))
    }
}

/// Inverse-CDF draw from a probability vector. Falls back to the last state
/// with positive mass when rounding leaves the cumulative sum short of `u`.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Ordered contexts over one shared state and action space.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextCatalog {
    contexts: Vec<Mdp>,
}

impl ContextCatalog {
    pub fn new(contexts: Vec<Mdp>) -> Result<Self> {
        let first = contexts
            .first()
            .ok_or_else(|| Error::Parameter("context catalog is empty".into()))?;
        for (i, m) in contexts.iter().enumerate().skip(1) {
            if m.n_states() != first.n_states() || m.n_actions() != first.n_actions() {
                return Err(Error::Dimension(format!(
                    "context {i} is {}x{}, context 0 is {}x{}",
                    m.n_states(),
                    m.n_actions(),
                    first.n_states(),
                    first.n_actions()
                )));
            }
        }
        Ok(Self { contexts })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn get(&self, i: usize) -> Result<&Mdp> {
        self.contexts.get(i).ok_or(Error::Index {
            what: "context",
            index: i,
            len: self.contexts.len(),
        })
    }

    pub fn contexts(&self) -> &[Mdp] {
        &self.contexts
    }

    pub fn n_states(&self) -> usize {
        self.contexts[0].n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.contexts[0].n_actions()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn grid3() -> Vec<Vec<Vec<f64>>> {
        let left = vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ];
        let right = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ];
        vec![left, right]
    }

    #[test]
    fn deterministic_grid_is_valid() {
        let raw = RawMdp {
            transitions: grid3(),
            rewards: vec![vec![0.0; 2]; 3],
            state_labels: None,
            action_labels: None,
        };
        assert!(validate_mdp(&raw).is_ok());
    }

    #[test]
    fn bad_row_sum_is_reported() {
        let mut t = grid3();
        t[0][1] = vec![0.5, 0.6, 0.0];
        let raw = RawMdp {
            transitions: t,
            rewards: vec![vec![0.0; 2]; 3],
            state_labels: None,
            action_labels: None,
        };
        let report = validate_mdp(&raw).unwrap_err();
        assert_eq!(report.issues.len(), 1);
        match &report.issues[0] {
            Issue::RowSum { action, state, sum } => {
                assert_eq!((*action, *state), (0, 1));
                assert!((sum - 1.1).abs() < 1e-12);
            }
            other => panic!("unexpected issue {other:?}"),
        }
    }

    #[test]
    fn every_violation_is_enumerated() {
        let mut t = grid3();
        t[0][0] = vec![1.5, -0.5, 0.0];
        t[1][2] = vec![0.2, 0.2, 0.2];
        let raw = RawMdp {
            transitions: t,
            rewards: vec![vec![0.0, f64::NAN], vec![0.0; 2], vec![f64::INFINITY, 0.0]],
            state_labels: None,
            action_labels: None,
        };
        let report = validate_mdp(&raw).unwrap_err();
        let entries = report
            .issues
            .iter()
            .filter(|i| matches!(i, Issue::Entry { .. }))
            .count();
        let sums = report
            .issues
            .iter()
            .filter(|i| matches!(i, Issue::RowSum { .. }))
            .count();
        let rewards = report
            .issues
            .iter()
            .filter(|i| matches!(i, Issue::NonFiniteReward { .. }))
            .count();
        assert_eq!((entries, sums, rewards), (2, 1, 2));
    }

    #[test]
    fn near_stochastic_rows_are_renormalized() {
        let mut t = grid3();
        t[0][0] = vec![0.5 + 4e-10, 0.5, 0.0];
        let m = Mdp::with_state_rewards(t, &[0.0, 0.0, 1.0]).unwrap();
        let sum: f64 = m.row(0, 0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert_eq!(m.reward(2, 1), 1.0);
    }

    #[test]
    fn one_hot_rows_sample_deterministically() {
        let m = Mdp::with_state_rewards(grid3(), &[0.0; 3]).unwrap();
        let mut rng = stream(1, Stream::Environment);
        for _ in 0..100 {
            assert_eq!(m.sample_transition(1, 1, &mut rng).unwrap(), 2);
            assert_eq!(m.sample_transition(0, 0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn sampling_is_replayable() {
        let mut t = grid3();
        t[0][1] = vec![0.3, 0.3, 0.4];
        let m = Mdp::with_state_rewards(t, &[0.0; 3]).unwrap();
        let draw = |seed| {
            let mut rng = stream(seed, Stream::Environment);
            (0..200)
                .map(|_| m.sample_transition(1, 0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
    }

    #[test]
    fn out_of_range_indices_error() {
        let m = Mdp::with_state_rewards(grid3(), &[0.0; 3]).unwrap();
        let mut rng = stream(0, Stream::Environment);
        assert!(matches!(
            m.sample_transition(3, 0, &mut rng),
            Err(Error::Index { what: "state", .. })
        ));
        assert!(matches!(
            m.sample_transition(0, 2, &mut rng),
            Err(Error::Index { what: "action", .. })
        ));
    }

    #[test]
    fn catalog_rejects_mismatched_shapes() {
        let a = Mdp::with_state_rewards(grid3(), &[0.0; 3]).unwrap();
        let b = Mdp::with_state_rewards(vec![vec![vec![1.0]]], &[0.0]).unwrap();
        assert!(matches!(
            ContextCatalog::new(vec![a.clone(), b]),
            Err(Error::Dimension(_))
        ));
        assert!(ContextCatalog::new(vec![]).is_err());
        assert_eq!(ContextCatalog::new(vec![a.clone(), a]).unwrap().len(), 2);
    }
}
