//! Seeded trials, per-step traces and the accuracy/lag/reward metrics.
//!
//! One step of a trial follows the filter loop exactly: the robot acts with
//! the policy of the previous step's ML abstraction applied to the previous
//! observation, the environment moves under the active context, the robot
//! observes a (noisy) state and the true reward, and the filter updates.

use std::fmt;

use serde::Serialize;

use crate::bisim::Abstraction;
use crate::error::{Error, Result};
use crate::filter::{oas_step, BeliefState, DetectionModel, TransitionModel};
use crate::mdp::ContextCatalog;
use crate::policy::AbstractPolicy;
use crate::rng::TrialStreams;
use crate::scenarios::continuous::{
    observe_state_continuous, pursuit_policy, Command, ContinuousConfig, ContinuousScenario,
    ProjectionCatalog, RelState,
};
use crate::scenarios::discrete::{observe_state_discrete, DiscreteObs};
use crate::schedule::{switch_times, SwitchSchedule};

/// Abstraction transition model, detection smoothing and initial belief.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub model: TransitionModel,
    pub epsilon: f64,
    pub prior: BeliefState,
}

impl FilterConfig {
    fn check(&self, n: usize) -> Result<()> {
        if self.model.len() != n || self.prior.len() != n {
            return Err(Error::Dimension(format!(
                "catalog of {n} abstractions, transition model over {}, prior over {}",
                self.model.len(),
                self.prior.len()
            )));
        }
        Ok(())
    }
}

/// A state as recorded in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TraceState {
    Discrete(usize),
    Continuous(RelState),
}

impl fmt::Display for TraceState {
    /// Discrete states print as their index, continuous ones as
    /// `x1;y1;x2;y2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceState::Discrete(s) => write!(f, "{s}"),
            TraceState::Continuous(v) => write!(f, "{};{};{};{}", v[0], v[1], v[2], v[3]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub true_ctx: usize,
    pub ml: usize,
    pub belief: Vec<f64>,
    pub state: TraceState,
    pub obs: TraceState,
    pub action: usize,
    pub reward: f64,
    /// Every detection likelihood was zero at this step.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialTrace {
    pub seed: u64,
    pub n_abstractions: usize,
    pub rows: Vec<TraceRow>,
}

impl TrialTrace {
    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn true_contexts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.true_ctx).collect()
    }

    pub fn ml_sequence(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.ml).collect()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.action).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.reward).collect()
    }

    pub fn degenerate_steps(&self) -> usize {
        self.rows.iter().filter(|r| r.degenerate).count()
    }
}

/// Runs one trial on a finite catalog.
///
/// `policies[i]` acts on abstraction `i`'s abstract states. The initial state
/// is uniform over `S`, drawn from the environment stream; `sigma` is the
/// observation flip probability. Rewards are paid by the active context on
/// the state reached, and predicted by each abstraction from the observed
/// state.
pub fn run_finite_trial(
    catalog: &ContextCatalog,
    abstractions: &[Abstraction],
    policies: &[AbstractPolicy],
    sigma: f64,
    schedule: &SwitchSchedule,
    filter: &FilterConfig,
    seed: u64,
) -> Result<TrialTrace> {
    use rand::Rng;

    let n = catalog.len();
    if abstractions.len() != n || policies.len() != n {
        return Err(Error::Dimension(format!(
            "{n} contexts, {} abstractions, {} policies",
            abstractions.len(),
            policies.len()
        )));
    }
    if let Some(&bad) = schedule.as_slice().iter().find(|&&c| c >= n) {
        return Err(Error::Index {
            what: "scheduled context",
            index: bad,
            len: n,
        });
    }
    filter.check(n)?;
    let detection = DetectionModel::new(abstractions.to_vec(), filter.epsilon)?;
    let n_states = catalog.n_states();
    let mut rng = TrialStreams::new(seed);

    let mut state = rng.environment.random_range(0..n_states);
    let mut obs = observe_state_discrete(state, n_states, sigma, &mut rng.observation);
    let mut belief = filter.prior.clone();
    let mut ml = crate::filter::ml_abstraction(&belief);
    let mut rows = Vec::with_capacity(schedule.horizon());

    for t in 0..schedule.horizon() {
        let ctx = schedule.active(t);
        let inner = (|| -> Result<TraceRow> {
            let z = abstractions[ml].map_state(obs)?;
            let action = policies[ml].act(z, &mut rng.policy)?;
            state = catalog.get(ctx)?.sample_transition(state, action, &mut rng.environment)?;
            obs = observe_state_discrete(state, n_states, sigma, &mut rng.observation);
            let reward = catalog.get(ctx)?.reward(state, action);
            let out = oas_step(
                &belief,
                &filter.model,
                &detection,
                reward,
                &DiscreteObs { state: obs, action },
            )?;
            belief = out.belief;
            ml = out.ml;
            Ok(TraceRow {
                t,
                true_ctx: ctx,
                ml,
                belief: belief.probs().to_vec(),
                state: TraceState::Discrete(state),
                obs: TraceState::Discrete(obs),
                action,
                reward,
                degenerate: out.degenerate,
            })
        })();
        rows.push(inner.map_err(|e| e.at_step(t))?);
    }
    Ok(TrialTrace {
        seed,
        n_abstractions: n,
        rows,
    })
}

/// How the continuous robot picks commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuousPolicy {
    /// Pursue the human kept by the ML abstraction.
    Pursuit,
    /// Uniform over the six commands.
    Random,
}

/// Hook that edits each observation before the robot uses it.
pub type Perturbation<'a> = &'a mut dyn FnMut(usize, &mut RelState);

/// Runs one pursuit trial; `schedule` gives the treat holder per step.
///
/// When `perturb` is set it is applied to every observation (including the
/// initial one, at `t = 0`) before both the policy and the filter see it.
pub fn run_continuous_trial(
    cfg: &ContinuousConfig,
    policy: ContinuousPolicy,
    schedule: &SwitchSchedule,
    filter: &FilterConfig,
    seed: u64,
    mut perturb: Option<Perturbation<'_>>,
) -> Result<TrialTrace> {
    use rand::Rng;

    let catalog = ProjectionCatalog::for_config(cfg)?;
    filter.check(catalog.0.len())?;
    if let Some(&bad) = schedule.as_slice().iter().find(|&&c| c >= 2) {
        return Err(Error::Index {
            what: "treat holder",
            index: bad,
            len: 2,
        });
    }
    let detection = DetectionModel::new(catalog.clone(), filter.epsilon)?;
    let mut scenario = ContinuousScenario::new(cfg.clone())?;
    let mut rng = TrialStreams::new(seed);
    let mut observe = |t: usize, s: &RelState, rng: &mut TrialStreams| {
        let mut o = observe_state_continuous(s, &cfg.depth_noise, &mut rng.observation);
        if let Some(p) = perturb.as_mut() {
            p(t, &mut o);
        }
        o
    };

    let mut obs = observe(0, &scenario.true_state(), &mut rng);
    let mut belief = filter.prior.clone();
    let mut ml = crate::filter::ml_abstraction(&belief);
    let mut rows = Vec::with_capacity(schedule.horizon());

    for t in 0..schedule.horizon() {
        let holder = schedule.active(t);
        let command = match policy {
            ContinuousPolicy::Pursuit => {
                pursuit_policy(&catalog.0[ml], &obs, &cfg.robot, cfg.stop_fraction)
            }
            ContinuousPolicy::Random => {
                Command::ALL[rng.policy.random_range(0..Command::ALL.len())]
            }
        };
        let out = scenario.step(command, holder).map_err(|e| e.at_step(t))?;
        obs = observe(t + 1, &out.true_state, &mut rng);
        let step = oas_step(&belief, &filter.model, &detection, out.reward, &obs)
            .map_err(|e| e.at_step(t))?;
        belief = step.belief;
        ml = step.ml;
        rows.push(TraceRow {
            t,
            true_ctx: holder,
            ml,
            belief: belief.probs().to_vec(),
            state: TraceState::Continuous(out.true_state),
            obs: TraceState::Continuous(obs),
            action: command.index(),
            reward: out.reward,
            degenerate: step.degenerate,
        });
    }
    Ok(TrialTrace {
        seed,
        n_abstractions: 2,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub accuracy: f64,
    /// In steps.
    pub avg_lag: f64,
    /// In steps.
    pub max_lag: f64,
    pub normalized_reward: f64,
    pub switches: usize,
}

/// Accuracy, switch lags and normalized reward from per-step sequences.
///
/// The lag of a switch at `tau` is the first `k >= 0` with
/// `ml[tau + k] == truth[tau]`, searched only up to the next switch; a switch
/// never caught in its window counts the full window length.
pub fn metrics_from_sequences(truth: &[usize], ml: &[usize], rewards: &[f64]) -> Result<TrialMetrics> {
    let horizon = truth.len();
    if ml.len() != horizon || rewards.len() != horizon {
        return Err(Error::Dimension(format!(
            "sequence lengths differ: truth {horizon}, ml {}, rewards {}",
            ml.len(),
            rewards.len()
        )));
    }
    if horizon == 0 {
        return Err(Error::Dimension("empty trial".into()));
    }
    let correct = truth.iter().zip(ml).filter(|(a, b)| a == b).count();
    let switches = switch_times(truth);
    let lags: Vec<usize> = switches
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let end = switches.get(k + 1).copied().unwrap_or(horizon);
            (tau..end)
                .position(|t| ml[t] == truth[tau])
                .unwrap_or(end - tau)
        })
        .collect();
    let (avg_lag, max_lag) = if lags.is_empty() {
        (0.0, 0.0)
    } else {
        (
            lags.iter().sum::<usize>() as f64 / lags.len() as f64,
            *lags.iter().max().unwrap() as f64,
        )
    };
    Ok(TrialMetrics {
        accuracy: correct as f64 / horizon as f64,
        avg_lag,
        max_lag,
        normalized_reward: rewards.iter().sum::<f64>() / horizon as f64,
        switches: switches.len(),
    })
}

pub fn compute_metrics(trace: &TrialTrace, schedule: &SwitchSchedule) -> Result<TrialMetrics> {
    if trace.horizon() != schedule.horizon() {
        return Err(Error::Dimension(format!(
            "trace has {} steps, schedule {}",
            trace.horizon(),
            schedule.horizon()
        )));
    }
    if trace.true_contexts() != schedule.as_slice() {
        return Err(Error::Dimension("trace contexts disagree with the schedule".into()));
    }
    metrics_from_sequences(schedule.as_slice(), &trace.ml_sequence(), &trace.rewards())
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub accuracy: Summary,
    pub avg_lag: Summary,
    pub max_lag: Summary,
    pub normalized_reward: Summary,
    pub trials: usize,
}

pub fn aggregate(metrics: &[TrialMetrics]) -> Result<Aggregate> {
    if metrics.is_empty() {
        return Err(Error::Parameter("cannot aggregate zero trials".into()));
    }
    let it = metrics.iter();
    Ok(Aggregate {
        accuracy: Summary::of(it.clone().map(|m| m.accuracy)),
        avg_lag: Summary::of(it.clone().map(|m| m.avg_lag)),
        max_lag: Summary::of(it.clone().map(|m| m.max_lag)),
        normalized_reward: Summary::of(it.map(|m| m.normalized_reward)),
        trials: metrics.len(),
    })
}
