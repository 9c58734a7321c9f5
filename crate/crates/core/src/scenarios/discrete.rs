//! Three-state tracking world.
//!
//! The robot moves over `s1 s2 s3` with actions `L` and `R`. An object sits
//! at one end of the track and pays reward 1 while the robot shares its
//! cell. Context 0 puts the object on `s3`, context 1 on `s1`; the dynamics
//! are shared. Their coarsest bisimulations are `{s1,s2},{s3}` and
//! `{s1},{s2,s3}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bisim::{abstract_catalog, Abstraction};
use crate::error::{Error, Result};
use crate::filter::RewardPredictor;
use crate::mdp::{ContextCatalog, Mdp};

pub const N_STATES: usize = 3;
pub const ACTION_LEFT: usize = 0;
pub const ACTION_RIGHT: usize = 1;

/// Default probability that a move carries the robot all the way to the end
/// of the track in the direction of motion.
pub const DEFAULT_JUMP_PROB: f64 = 0.6;

/// Shared dynamics of the two tracking contexts, `transitions[a][s][s']`
/// with actions `[L, R]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl DiscreteConfig {
    /// `L` from `s2` or `s3` lands on `s1` with probability `jump` and on
    /// `s2` otherwise; `R` mirrors it toward `s3`. Moving into a wall stays.
    pub fn with_jump_prob(jump: f64) -> Self {
        let stay = 1.0 - jump;
        let left = vec![
            vec![1.0, 0.0, 0.0],
            vec![jump, stay, 0.0],
            vec![jump, stay, 0.0],
        ];
        let right = vec![
            vec![0.0, stay, jump],
            vec![0.0, stay, jump],
            vec![0.0, 0.0, 1.0],
        ];
        Self {
            transitions: vec![left, right],
        }
    }
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        Self::with_jump_prob(DEFAULT_JUMP_PROB)
    }
}

/// What the filter sees at one step: the (noisy) observed state and the
/// action that led there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscreteObs {
    pub state: usize,
    pub action: usize,
}

impl RewardPredictor<DiscreteObs> for Vec<Abstraction> {
    fn n_abstractions(&self) -> usize {
        self.len()
    }

    fn predicted_reward(&self, index: usize, obs: &DiscreteObs) -> Result<f64> {
        let ab = self.get(index).ok_or(Error::Index {
            what: "abstraction",
            index,
            len: self.len(),
        })?;
        let z = ab.map_state(obs.state)?;
        ab.source().check_action(obs.action)?;
        Ok(ab.block_reward(z, obs.action))
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteScenario {
    pub catalog: ContextCatalog,
    pub abstractions: Vec<Abstraction>,
    pub sigma: f64,
}

fn labelled(m: Mdp) -> Result<Mdp> {
    m.with_labels(
        vec!["s1".into(), "s2".into(), "s3".into()],
        vec!["L".into(), "R".into()],
    )
}

/// Builds both tracking contexts from `cfg` and checks that their coarsest
/// bisimulations have the expected block structure.
pub fn build_discrete_scenario(cfg: &DiscreteConfig, sigma: f64) -> Result<DiscreteScenario> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Parameter(format!("sigma {sigma} outside [0, 1]")));
    }
    if cfg.transitions.len() != 2
        || cfg
            .transitions
            .iter()
            .any(|m| m.len() != N_STATES || m.iter().any(|r| r.len() != N_STATES))
    {
        return Err(Error::Scenario(
            "tracking world needs two 3x3 transition matrices (L, R)".into(),
        ));
    }
    let object_on_s3 = labelled(Mdp::with_state_rewards(
        cfg.transitions.clone(),
        &[0.0, 0.0, 1.0],
    )?)?;
    let object_on_s1 = labelled(Mdp::with_state_rewards(
        cfg.transitions.clone(),
        &[1.0, 0.0, 0.0],
    )?)?;
    let catalog = ContextCatalog::new(vec![object_on_s3, object_on_s1])?;
    let abstractions = abstract_catalog(&catalog)?;
    let expected: [&[Vec<usize>]; 2] = [&[vec![0, 1], vec![2]], &[vec![0], vec![1, 2]]];
    for (ab, want) in abstractions.iter().zip(expected) {
        if ab.partition().blocks() != want {
            return Err(Error::Scenario(format!(
                "context {} partitions into {:?}, expected {:?}; the transitions do not \
                 reproduce the tracking abstractions",
                ab.index(),
                ab.partition().blocks(),
                want
            )));
        }
    }
    Ok(DiscreteScenario {
        catalog,
        abstractions,
        sigma,
    })
}

/// With probability `1 - sigma` returns `true_state`, otherwise a uniform
/// draw over the other `n_states - 1` states. Always consumes two draws.
pub fn observe_state_discrete<R: Rng + ?Sized>(
    true_state: usize,
    n_states: usize,
    sigma: f64,
    rng: &mut R,
) -> usize {
    let flip = rng.random::<f64>() < sigma;
    let other = if n_states > 1 {
        rng.random_range(0..n_states - 1)
    } else {
        0
    };
    if flip && n_states > 1 {
        if other >= true_state {
            other + 1
        } else {
            other
        }
    } else {
        true_state
    }
}
