//! Experimental environments: a three-state tracking world with two reward
//! contexts, and a planar two-human pursuit simulation.

pub mod continuous;
pub mod discrete;

pub use continuous::{
    observe_state_continuous, pursuit_policy, Command, ContinuousConfig, ContinuousScenario,
    DepthNoise, HumanTrack, Pose, ProjectionAbstraction, ProjectionCatalog, RobotParams,
    CONTROL_PERIOD,
};
pub use discrete::{
    build_discrete_scenario, observe_state_discrete, DiscreteConfig, DiscreteObs,
    DiscreteScenario,
};
