//! Experiment suite files.
//!
//! A suite is a TOML document. Top-level keys set defaults for every
//! experiment; each `[[experiment]]` table overrides them. Without any
//! `[[experiment]]` table the top level is itself the single experiment.
//!
//! | key | type | default |
//! |---|---|---|
//! | `name` | string | pattern label |
//! | `model` | string | `stay=<p>` or `matrix` |
//! | `scenario` | `"discrete"` \| `"continuous"` | required |
//! | `scenario_config` | path to a scenario TOML file | built-in world |
//! | `discrete` | inline table `{ transitions = [...] }` | jump probability 0.6 |
//! | `continuous` | inline table (robot, humans, radius, noise) | built-in walk |
//! | `pattern` | table `{ kind = "step", switch_at = 100 }`, `periodic`/`period`, `uniform-random`, `switches`/`at`, `scripted`/`sequence` | required |
//! | `horizon` | integer ≥ 1 | 500 discrete, 300 continuous |
//! | `sigma` | probability (discrete observation flips) | 0 |
//! | `depth_noise` | table `{ a, b }` (continuous) | `{ a = 0.02, b = 0.01 }` |
//! | `stay` | probability of keeping the abstraction | 0.8 |
//! | `transition_matrix` | column-stochastic N×N matrix, replaces `stay` | none |
//! | `epsilon` | detection smoothing in [0, 0.5] | 0.001 |
//! | `prior` | probability vector over abstractions | uniform |
//! | `policy` | `"random"` \| `"abstract"` (discrete) \| `"pursuit"` (continuous) | random / pursuit |
//! | `gamma` | discount for `abstract`, in [0, 1) | 0.95 |
//! | `seeds` | list of trial seeds | `[0, 1, 2, 3, 4]` |
//!
//! Suite-only keys: `out_dir` (path) and `traces` (bool, default false).
//! Relative `scenario_config` paths resolve against the suite file's
//! directory; the parsed suite inlines the scenario so that a written suite
//! is self-contained.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{BeliefState, TransitionModel, DEFAULT_EPSILON};
use crate::mdp::PROB_TOL;
use crate::policy::DEFAULT_GAMMA;
use crate::rng::stream;
use crate::rng::Stream;
use crate::scenarios::continuous::{ContinuousConfig, DepthNoise};
use crate::scenarios::discrete::{build_discrete_scenario, DiscreteConfig};
use crate::schedule::{make_schedule, SwitchPattern};

pub const DEFAULT_DISCRETE_HORIZON: usize = 500;
pub const DEFAULT_CONTINUOUS_HORIZON: usize = 300;
pub const DEFAULT_STAY: f64 = 0.8;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Random,
    Abstract,
    Pursuit,
}

/// The environment of one experiment, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSpec {
    Discrete { world: DiscreteConfig, sigma: f64 },
    Continuous(ContinuousConfig),
}

impl ScenarioSpec {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioSpec::Discrete { .. } => ScenarioKind::Discrete,
            ScenarioSpec::Continuous(_) => ScenarioKind::Continuous,
        }
    }
}

/// Abstraction transition model as configured.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Stay(f64),
    Matrix(Vec<Vec<f64>>),
}

impl ModelSpec {
    pub fn build(&self, n: usize) -> Result<TransitionModel> {
        match self {
            ModelSpec::Stay(p) => TransitionModel::sticky(n, *p),
            ModelSpec::Matrix(m) => TransitionModel::new(m.clone()),
        }
    }

    fn default_label(&self) -> String {
        match self {
            ModelSpec::Stay(p) => format!("stay={p}"),
            ModelSpec::Matrix(_) => "matrix".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub model_label: String,
    pub scenario: ScenarioSpec,
    pub pattern: SwitchPattern,
    pub horizon: usize,
    pub model: ModelSpec,
    pub epsilon: f64,
    /// `None` is uniform.
    pub prior: Option<Vec<f64>>,
    pub policy: PolicyMode,
    pub gamma: f64,
    pub seeds: Vec<u64>,
}

/// Both scenarios have two contexts.
pub const N_CONTEXTS: usize = 2;

impl ExperimentConfig {
    pub fn prior_belief(&self) -> Result<BeliefState> {
        match &self.prior {
            Some(p) => BeliefState::new(p.clone()),
            None => BeliefState::uniform(N_CONTEXTS),
        }
    }

    /// Metric tables report lags in steps for the discrete world and in
    /// seconds for the continuous one.
    pub fn lag_unit_seconds(&self) -> Option<f64> {
        match self.scenario {
            ScenarioSpec::Discrete { .. } => None,
            ScenarioSpec::Continuous(_) => Some(crate::scenarios::CONTROL_PERIOD),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub experiments: Vec<ExperimentConfig>,
    pub out_dir: Option<PathBuf>,
    pub traces: bool,
}

/// Keys shared by the top level and `[[experiment]]` tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<ScenarioKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario_config: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pattern: Option<SwitchPattern>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_noise: Option<DepthNoise>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transition_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prior: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<PolicyMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    discrete: Option<DiscreteConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    continuous: Option<ContinuousConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    traces: Option<bool>,
    #[serde(flatten)]
    defaults: RawExperiment,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    experiment: Vec<RawExperiment>,
}

macro_rules! pick {
    ($exp:expr, $top:expr, $field:ident) => {
        $exp.$field.clone().or_else(|| $top.$field.clone())
    };
}

/// Reads and validates a suite file.
pub fn parse_config(path: &Path) -> Result<SuiteConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses suite text; relative scenario paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<SuiteConfig> {
    let raw: RawSuite = toml::from_str(text).map_err(|e| Error::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;
    let experiments = if raw.experiment.is_empty() {
        vec![resolve(&RawExperiment::default(), &raw.defaults, base, "")?]
    } else {
        raw.experiment
            .iter()
            .enumerate()
            .map(|(i, e)| resolve(e, &raw.defaults, base, &format!("experiment[{i}].")))
            .collect::<Result<_>>()?
    };
    Ok(SuiteConfig {
        experiments,
        out_dir: raw.out_dir,
        traces: raw.traces.unwrap_or(false),
    })
}

fn probability(key: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::config(key, format!("{v} is outside [0, 1]")))
    }
}

fn load_scenario_file<T: for<'de> Deserialize<'de>>(path: &Path, key: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::config(key, format!("{}: {e}", path.display())))
}

fn resolve(exp: &RawExperiment, top: &RawExperiment, base: &Path, prefix: &str) -> Result<ExperimentConfig> {
    let key = |k: &str| format!("{prefix}{k}");
    let kind = pick!(exp, top, scenario).ok_or_else(|| Error::config(key("scenario"), "missing"))?;
    let pattern = pick!(exp, top, pattern).ok_or_else(|| Error::config(key("pattern"), "missing"))?;
    let scenario_file = pick!(exp, top, scenario_config).map(|p| base.join(p));

    let scenario = match kind {
        ScenarioKind::Discrete => {
            if pick!(exp, top, depth_noise).is_some() {
                return Err(Error::config(key("depth_noise"), "only applies to the continuous scenario"));
            }
            let world = match (pick!(exp, top, discrete), scenario_file) {
                (Some(w), _) => w,
                (None, Some(p)) => load_scenario_file(&p, &key("scenario_config"))?,
                (None, None) => DiscreteConfig::default(),
            };
            let sigma = probability(&key("sigma"), pick!(exp, top, sigma).unwrap_or(0.0))?;
            build_discrete_scenario(&world, sigma)
                .map_err(|e| Error::config(key("discrete"), e.to_string()))?;
            ScenarioSpec::Discrete { world, sigma }
        }
        ScenarioKind::Continuous => {
            if pick!(exp, top, sigma).is_some() {
                return Err(Error::config(key("sigma"), "only applies to the discrete scenario"));
            }
            let mut world = match (pick!(exp, top, continuous), scenario_file) {
                (Some(w), _) => w,
                (None, Some(p)) => load_scenario_file(&p, &key("scenario_config"))?,
                (None, None) => ContinuousConfig::default(),
            };
            if let Some(noise) = pick!(exp, top, depth_noise) {
                world.depth_noise = noise;
            }
            world
                .validate()
                .map_err(|e| Error::config(key("continuous"), e.to_string()))?;
            ScenarioSpec::Continuous(world)
        }
    };

    let horizon = pick!(exp, top, horizon).unwrap_or(match kind {
        ScenarioKind::Discrete => DEFAULT_DISCRETE_HORIZON,
        ScenarioKind::Continuous => DEFAULT_CONTINUOUS_HORIZON,
    });
    if horizon == 0 {
        return Err(Error::config(key("horizon"), "must be at least 1"));
    }
    make_schedule(&pattern, N_CONTEXTS, horizon, &mut stream(0, Stream::Schedule))
        .map_err(|e| Error::config(key("pattern"), e.to_string()))?;

    // The most specific table that sets either key decides the model.
    let source = if exp.stay.is_some() || exp.transition_matrix.is_some() { exp } else { top };
    let model = match (source.stay, &source.transition_matrix) {
        (Some(_), Some(_)) => {
            return Err(Error::config(key("stay"), "give either stay or transition_matrix"));
        }
        (Some(p), None) => ModelSpec::Stay(probability(&key("stay"), p)?),
        (None, Some(m)) => ModelSpec::Matrix(m.clone()),
        (None, None) => ModelSpec::Stay(DEFAULT_STAY),
    };
    let model_key = match model {
        ModelSpec::Stay(_) => key("stay"),
        ModelSpec::Matrix(_) => key("transition_matrix"),
    };
    model
        .build(N_CONTEXTS)
        .map_err(|e| Error::config(model_key, e.to_string()))?;

    let epsilon = pick!(exp, top, epsilon).unwrap_or(DEFAULT_EPSILON);
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(Error::config(key("epsilon"), format!("{epsilon} is outside [0, 0.5]")));
    }
    let prior = pick!(exp, top, prior);
    if let Some(p) = &prior {
        if p.len() != N_CONTEXTS {
            return Err(Error::config(key("prior"), format!("needs {N_CONTEXTS} entries")));
        }
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) || (p.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
            return Err(Error::config(key("prior"), "must be a probability vector"));
        }
    }
    let policy = pick!(exp, top, policy).unwrap_or(match kind {
        ScenarioKind::Discrete => PolicyMode::Random,
        ScenarioKind::Continuous => PolicyMode::Pursuit,
    });
    match (kind, policy) {
        (ScenarioKind::Discrete, PolicyMode::Pursuit) => {
            return Err(Error::config(key("policy"), "pursuit needs the continuous scenario"));
        }
        (ScenarioKind::Continuous, PolicyMode::Abstract) => {
            return Err(Error::config(key("policy"), "abstract needs the discrete scenario"));
        }
        _ => {}
    }
    let gamma = pick!(exp, top, gamma).unwrap_or(DEFAULT_GAMMA);
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config(key("gamma"), format!("{gamma} is outside [0, 1)")));
    }
    let seeds = pick!(exp, top, seeds).unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    if seeds.is_empty() {
        return Err(Error::config(key("seeds"), "needs at least one seed"));
    }

    Ok(ExperimentConfig {
        name: pick!(exp, top, name).unwrap_or_else(|| pattern.label()),
        model_label: pick!(exp, top, model).unwrap_or_else(|| model.default_label()),
        scenario,
        pattern,
        horizon,
        model,
        epsilon,
        prior,
        policy,
        gamma,
        seeds,
    })
}

fn to_raw(e: &ExperimentConfig) -> RawExperiment {
    let (stay, transition_matrix) = match &e.model {
        ModelSpec::Stay(p) => (Some(*p), None),
        ModelSpec::Matrix(m) => (None, Some(m.clone())),
    };
    let mut raw = RawExperiment {
        name: Some(e.name.clone()),
        model: Some(e.model_label.clone()),
        scenario: Some(e.scenario.kind()),
        pattern: Some(e.pattern.clone()),
        horizon: Some(e.horizon),
        stay,
        transition_matrix,
        epsilon: Some(e.epsilon),
        prior: e.prior.clone(),
        policy: Some(e.policy),
        gamma: Some(e.gamma),
        seeds: Some(e.seeds.clone()),
        ..RawExperiment::default()
    };
    match &e.scenario {
        ScenarioSpec::Discrete { world, sigma } => {
            raw.sigma = Some(*sigma);
            raw.discrete = Some(world.clone());
        }
        ScenarioSpec::Continuous(world) => raw.continuous = Some(world.clone()),
    }
    raw
}

/// Serializes a suite with every experiment fully spelled out, so that
/// `parse_config_str(&write_config(s)?, _) == s`.
pub fn write_config(suite: &SuiteConfig) -> Result<String> {
    let raw = RawSuite {
        out_dir: suite.out_dir.clone(),
        traces: Some(suite.traces),
        defaults: RawExperiment::default(),
        experiment: suite.experiments.iter().map(to_raw).collect(),
    };
    toml::to_string(&raw).map_err(|e| Error::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })
}
