//! Online attention switching: a discrete Bayes filter over the abstraction
//! catalog.
//!
//! Each step runs a dynamics update through the abstraction transition model
//! `p(phi_t = i | phi_{t-1} = j)`, then a measurement update with the reward
//! detection likelihood `p(r_t | phi_t = i, s_t)`, then picks the
//! maximum-likelihood abstraction:
//!
//! ```text
//! prior_i     = sum_j T[i][j] * b_j
//! posterior_i = L_i * prior_i / sum_j L_j * prior_j
//! ml          = argmax_i posterior_i   (lowest index on ties)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::PROB_TOL;

pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Tolerance for "observed reward equals predicted reward".
pub const REWARD_TOL: f64 = 1e-9;

/// Probability vector over the abstraction catalog.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefState {
    probs: Vec<f64>,
    step: usize,
}

impl BeliefState {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Parameter("belief over an empty catalog".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Parameter(format!("belief {probs:?} has invalid entries")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::Parameter(format!("belief sums to {sum}")));
        }
        Ok(Self { probs, step: 0 })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("belief over an empty catalog".into()));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
            step: 0,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Number of completed filter steps.
    pub fn step(&self) -> usize {
        self.step
    }
}

/// Column-stochastic matrix; `matrix[i][j] = p(phi_t = i | phi_{t-1} = j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionModel {
    matrix: Vec<Vec<f64>>,
}

impl TransitionModel {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n = matrix.len();
        if n == 0 || matrix.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension("transition model must be square and non-empty".into()));
        }
        if matrix.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Parameter("transition model entries must lie in [0, 1]".into()));
        }
        for j in 0..n {
            let sum: f64 = matrix.iter().map(|row| row[j]).sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::Parameter(format!(
                    "transition model column {j} sums to {sum}"
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// Keep the current abstraction with probability `stay`, otherwise move
    /// uniformly to one of the others. A single abstraction always stays.
    pub fn sticky(n: usize, stay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&stay) {
            return Err(Error::Parameter(format!("stay probability {stay} outside [0, 1]")));
        }
        if n == 0 {
            return Err(Error::Dimension("transition model over an empty catalog".into()));
        }
        if n == 1 {
            return Self::new(vec![vec![1.0]]);
        }
        let leave = (1.0 - stay) / (n - 1) as f64;
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { stay } else { leave }).collect())
            .collect();
        Self::new(matrix)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::sticky(n, 1.0)
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i][j]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }
}

/// The reward each abstraction predicts for an observation.
pub trait RewardPredictor<O: ?Sized> {
    fn n_abstractions(&self) -> usize;
    fn predicted_reward(&self, index: usize, obs: &O) -> Result<f64>;
}

/// Reward detection likelihood `p(r | phi_i, s)`: `1 - epsilon` when `r`
/// matches abstraction `i`'s predicted reward at the observation, `epsilon`
/// otherwise. With `epsilon = 0` this is the exact indicator.
#[derive(Debug, Clone)]
pub struct DetectionModel<P> {
    predictor: P,
    epsilon: f64,
}

impl<P> DetectionModel<P> {
    pub fn new(predictor: P, epsilon: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&epsilon) {
            return Err(Error::Parameter(format!("epsilon {epsilon} outside [0, 0.5]")));
        }
        Ok(Self { predictor, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn predictor(&self) -> &P {
        &self.predictor
    }

    pub fn likelihood<O: ?Sized>(&self, reward: f64, index: usize, obs: &O) -> Result<f64>
    where
        P: RewardPredictor<O>,
    {
        let predicted = self.predictor.predicted_reward(index, obs)?;
        Ok(if (predicted - reward).abs() <= REWARD_TOL {
            1.0 - self.epsilon
        } else {
            self.epsilon
        })
    }

    pub fn likelihoods<O: ?Sized>(&self, reward: f64, obs: &O) -> Result<Vec<f64>>
    where
        P: RewardPredictor<O>,
    {
        (0..self.predictor.n_abstractions())
            .map(|i| self.likelihood(reward, i, obs))
            .collect()
    }
}

pub fn dynamics_update(b: &BeliefState, model: &TransitionModel) -> Result<BeliefState> {
    if model.len() != b.len() {
        return Err(Error::Dimension(format!(
            "transition model over {} abstractions, belief over {}",
            model.len(),
            b.len()
        )));
    }
    let probs = model
        .matrix
        .iter()
        .map(|row| row.iter().zip(&b.probs).map(|(t, p)| t * p).sum())
        .collect();
    Ok(BeliefState {
        probs,
        step: b.step,
    })
}

/// Bayes rule with per-abstraction likelihoods. Returns
/// [`Error::DegenerateUpdate`] when every `L_i * b_i` is zero.
pub fn measurement_update(b: &BeliefState, likelihoods: &[f64]) -> Result<BeliefState> {
    if likelihoods.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{} likelihoods for a belief over {}",
            likelihoods.len(),
            b.len()
        )));
    }
    let joint: Vec<f64> = likelihoods.iter().zip(&b.probs).map(|(l, p)| l * p).collect();
    let evidence: f64 = joint.iter().sum();
    if evidence <= 0.0 || !evidence.is_finite() {
        return Err(Error::DegenerateUpdate);
    }
    Ok(BeliefState {
        probs: joint.into_iter().map(|x| x / evidence).collect(),
        step: b.step,
    })
}

/// Lowest index attaining the maximum posterior probability.
pub fn ml_abstraction(b: &BeliefState) -> usize {
    let mut best = 0;
    for (i, &p) in b.probs.iter().enumerate().skip(1) {
        if p > b.probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct OasStep {
    pub belief: BeliefState,
    pub ml: usize,
    /// Every likelihood vanished; `belief` is the dynamics-updated prior.
    pub degenerate: bool,
}

/// One filter step from precomputed likelihoods: dynamics update, then
/// measurement update, then maximum-likelihood selection.
///
/// A degenerate measurement (all likelihoods zero) keeps the dynamics
/// prior and is flagged in the result.
pub fn oas_step_with_likelihoods(
    b: &BeliefState,
    model: &TransitionModel,
    likelihoods: &[f64],
) -> Result<OasStep> {
    let prior = dynamics_update(b, model)?;
    let (mut belief, degenerate) = match measurement_update(&prior, likelihoods) {
        Ok(post) => (post, false),
        Err(Error::DegenerateUpdate) => {
            log::warn!(
                "step {}: all detection likelihoods are zero; keeping the predicted belief",
                b.step + 1
            );
            (prior, true)
        }
        Err(e) => return Err(e),
    };
    belief.step = b.step + 1;
    let ml = ml_abstraction(&belief);
    Ok(OasStep {
        belief,
        ml,
        degenerate,
    })
}

pub fn oas_step<P, O: ?Sized>(
    b: &BeliefState,
    model: &TransitionModel,
    detection: &DetectionModel<P>,
    reward: f64,
    obs: &O,
) -> Result<OasStep>
where
    P: RewardPredictor<O>,
{
    let likelihoods = detection.likelihoods(reward, obs)?;
    oas_step_with_likelihoods(b, model, &likelihoods)
}
