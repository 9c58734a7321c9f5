//! Planar pursuit of one of two walking humans.
//!
//! A unicycle robot chooses among six constant-velocity commands at 5 Hz.
//! Two humans follow scripted time-stamped waypoint tracks; whoever holds
//! the treat (the active context) pays reward 1 while the robot is within
//! the reward radius. The state the robot sees is `[x1, y1, x2, y2]`, both
//! humans' positions in the robot frame, corrupted by depth noise whose
//! standard deviation grows linearly with range.
//!
//! Each context's abstraction keeps only the treat holder's coordinates;
//! see [`ProjectionAbstraction`].

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::RewardPredictor;

/// Control period in seconds (5 Hz).
pub const CONTROL_PERIOD: f64 = 0.2;

/// Both humans' positions in the robot frame: `[x1, y1, x2, y2]`.
pub type RelState = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Left,
    Right,
    Straight,
    RightStraight,
    LeftStraight,
    Stop,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Left,
        Command::Right,
        Command::Straight,
        Command::RightStraight,
        Command::LeftStraight,
        Command::Stop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::Index {
            what: "command",
            index: i,
            len: Self::ALL.len(),
        })
    }

    /// `(linear m/s, angular rad/s)`
    pub fn velocity(self, robot: &RobotParams) -> (f64, f64) {
        let (v, w) = (robot.linear_speed, robot.angular_speed);
        match self {
            Command::Left => (0.0, w),
            Command::Right => (0.0, -w),
            Command::Straight => (v, 0.0),
            Command::RightStraight => (v, -w),
            Command::LeftStraight => (v, w),
            Command::Stop => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    pub linear_speed: f64,
    pub angular_speed: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            linear_speed: 1.2,
            angular_speed: 1.2,
        }
    }
}

/// Per-coordinate depth noise standard deviation `a + b * range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthNoise {
    pub a: f64,
    pub b: f64,
}

impl Default for DepthNoise {
    fn default() -> Self {
        Self { a: 0.02, b: 0.01 }
    }
}

impl DepthNoise {
    pub fn std_at(&self, range: f64) -> f64 {
        self.a + self.b * range
    }
}

/// Waypoints `[time_s, x, y]` with strictly increasing times; the human
/// moves at constant speed between consecutive waypoints and holds the
/// last position afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanTrack {
    pub waypoints: Vec<[f64; 3]>,
}

impl HumanTrack {
    pub fn position(&self, time: f64) -> [f64; 2] {
        let w = &self.waypoints;
        if time <= w[0][0] {
            return [w[0][1], w[0][2]];
        }
        for seg in w.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if time <= b[0] {
                let f = (time - a[0]) / (b[0] - a[0]);
                return [a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])];
            }
        }
        let last = w[w.len() - 1];
        [last[1], last[2]]
    }

    /// Fastest segment speed in m/s.
    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|s| (s[1][1] - s[0][1]).hypot(s[1][2] - s[0][2]) / (s[1][0] - s[0][0]))
            .fold(0.0, f64::max)
    }

    fn validate(&self, which: usize) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::Parameter(format!("human {which} has no waypoints")));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("human {which} has non-finite waypoints")));
        }
        if self.waypoints.windows(2).any(|s| s[1][0] <= s[0][0]) {
            return Err(Error::Parameter(format!(
                "human {which} waypoint times must increase strictly"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousConfig {
    pub robot_start: Pose,
    #[serde(default)]
    pub robot: RobotParams,
    pub humans: [HumanTrack; 2],
    /// Reward radius in metres; the reward ball is closed.
    #[serde(default = "default_reward_radius")]
    pub reward_radius: f64,
    /// The pursuit policy stops inside `stop_fraction * reward_radius`.
    #[serde(default = "default_stop_fraction")]
    pub stop_fraction: f64,
    #[serde(default)]
    pub depth_noise: DepthNoise,
}

fn default_reward_radius() -> f64 {
    1.0
}

fn default_stop_fraction() -> f64 {
    0.8
}

impl Default for ContinuousConfig {
    /// A one-minute hallway walk. Human 1 holds the treat first and hands it
    /// over at 20 s; human 2 hands it back at 40 s. While not holding the
    /// treat each human wanders: walking ahead out of range, crossing in
    /// front of the holder, zig-zagging behind, leaving to the side.
    fn default() -> Self {
        let human1 = HumanTrack {
            waypoints: vec![
                [0.0, 0.8, 0.2],
                [8.0, 4.8, 0.2],
                [12.0, 6.8, 0.6],
                [20.0, 10.8, 0.3],
                [24.0, 11.8, 1.5],
                [28.0, 12.4, 1.6],
                [32.0, 14.6, 0.6],
                [36.0, 17.0, 0.0],
                [40.0, 19.5, 0.4],
                [50.0, 24.5, 0.2],
                [60.0, 29.5, 0.3],
            ],
        };
        let human2 = HumanTrack {
            waypoints: vec![
                [0.0, 1.6, -1.4],
                [5.0, 5.5, -2.0],
                [9.0, 5.0, 1.4],
                [13.0, 7.5, 1.8],
                [17.0, 10.0, -1.0],
                [20.0, 11.4, -0.4],
                [30.0, 16.4, -0.8],
                [40.0, 18.9, -0.9],
                [45.0, 20.0, -2.2],
                [50.0, 19.0, -3.5],
                [60.0, 17.0, -4.0],
            ],
        };
        Self {
            robot_start: Pose {
                x: 0.0,
                y: 0.2,
                heading: 0.0,
            },
            robot: RobotParams::default(),
            humans: [human1, human2],
            reward_radius: default_reward_radius(),
            stop_fraction: default_stop_fraction(),
            depth_noise: DepthNoise::default(),
        }
    }
}

impl ContinuousConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reward_radius > 0.0 && self.reward_radius.is_finite()) {
            return Err(Error::Parameter(format!(
                "reward radius {} must be positive",
                self.reward_radius
            )));
        }
        if !(0.0..=1.0).contains(&self.stop_fraction) {
            return Err(Error::Parameter(format!(
                "stop fraction {} outside [0, 1]",
                self.stop_fraction
            )));
        }
        if self.depth_noise.a < 0.0 || self.depth_noise.b < 0.0 {
            return Err(Error::Parameter("depth noise parameters must be non-negative".into()));
        }
        if self.robot.linear_speed < 0.0 || self.robot.angular_speed < 0.0 {
            return Err(Error::Parameter("robot speeds must be non-negative".into()));
        }
        for (i, h) in self.humans.iter().enumerate() {
            h.validate(i)?;
        }
        Ok(())
    }
}

/// Pose after driving `(v, w)` for `dt` seconds (exact unicycle arc).
pub fn integrate(pose: Pose, v: f64, w: f64, dt: f64) -> Pose {
    let th = pose.heading;
    let (dx, dy) = if w == 0.0 {
        (v * dt * th.cos(), v * dt * th.sin())
    } else {
        let r = v / w;
        (
            r * ((th + w * dt).sin() - th.sin()),
            r * (th.cos() - (th + w * dt).cos()),
        )
    };
    Pose {
        x: pose.x + dx,
        y: pose.y + dy,
        heading: th + w * dt,
    }
}

/// `point` expressed in the frame of `pose`.
pub fn to_robot_frame(pose: Pose, point: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (point[0] - pose.x, point[1] - pose.y);
    let (s, c) = pose.heading.sin_cos();
    [c * dx + s * dy, -s * dx + c * dy]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousStep {
    pub true_state: RelState,
    pub reward: f64,
}

/// Mutable world state of one trial.
#[derive(Debug, Clone)]
pub struct ContinuousScenario {
    config: ContinuousConfig,
    robot: Pose,
    tick: usize,
}

impl ContinuousScenario {
    pub fn new(config: ContinuousConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            robot: config.robot_start,
            config,
            tick: 0,
        })
    }

    pub fn config(&self) -> &ContinuousConfig {
        &self.config
    }

    pub fn robot(&self) -> Pose {
        self.robot
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * CONTROL_PERIOD
    }

    pub fn human_positions(&self) -> [[f64; 2]; 2] {
        let t = self.time();
        [
            self.config.humans[0].position(t),
            self.config.humans[1].position(t),
        ]
    }

    pub fn true_state(&self) -> RelState {
        let [h1, h2] = self.human_positions();
        let a = to_robot_frame(self.robot, h1);
        let b = to_robot_frame(self.robot, h2);
        [a[0], a[1], b[0], b[1]]
    }

    /// Reward with `holder` carrying the treat, from the true state.
    pub fn reward(&self, holder: usize) -> f64 {
        let [h1, h2] = self.human_positions();
        let h = if holder == 0 { h1 } else { h2 };
        let d = (h[0] - self.robot.x).hypot(h[1] - self.robot.y);
        if d <= self.config.reward_radius {
            1.0
        } else {
            0.0
        }
    }

    /// Advances one control period: the robot drives `command`, the humans
    /// walk their tracks, and the reward is paid for `holder`.
    pub fn step(&mut self, command: Command, holder: usize) -> Result<ContinuousStep> {
        if holder > 1 {
            return Err(Error::Index {
                what: "treat holder",
                index: holder,
                len: 2,
            });
        }
        let (v, w) = command.velocity(&self.config.robot);
        self.robot = integrate(self.robot, v, w, CONTROL_PERIOD);
        self.tick += 1;
        Ok(ContinuousStep {
            true_state: self.true_state(),
            reward: self.reward(holder),
        })
    }
}

/// Adds zero-mean Gaussian noise to each coordinate, with standard deviation
/// `a + b * range` of that human. Always consumes four normal draws.
pub fn observe_state_continuous<R: Rng + ?Sized>(
    true_state: &RelState,
    noise: &DepthNoise,
    rng: &mut R,
) -> RelState {
    let mut obs = *true_state;
    for h in 0..2 {
        let range = true_state[2 * h].hypot(true_state[2 * h + 1]);
        let std = noise.std_at(range);
        for k in 0..2 {
            let z: f64 = StandardNormal.sample(rng);
            obs[2 * h + k] += std * z;
        }
    }
    obs
}

/// Attention on one human: states that differ only in the other human's
/// coordinates are equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionAbstraction {
    pub kept: usize,
    pub reward_radius: f64,
}

impl ProjectionAbstraction {
    pub fn new(kept: usize, reward_radius: f64) -> Result<Self> {
        if kept > 1 {
            return Err(Error::Index {
                what: "human",
                index: kept,
                len: 2,
            });
        }
        Ok(Self {
            kept,
            reward_radius,
        })
    }

    /// Which of `[x1, y1, x2, y2]` the abstraction keeps.
    pub fn mask(&self) -> [bool; 4] {
        let mut m = [false; 4];
        m[2 * self.kept] = true;
        m[2 * self.kept + 1] = true;
        m
    }

    /// The abstract state: the kept human's relative position.
    pub fn project(&self, obs: &RelState) -> [f64; 2] {
        [obs[2 * self.kept], obs[2 * self.kept + 1]]
    }

    pub fn predicted_reward(&self, obs: &RelState) -> f64 {
        let [x, y] = self.project(obs);
        if x.hypot(y) <= self.reward_radius {
            1.0
        } else {
            0.0
        }
    }
}

/// One projection abstraction per human, in human order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCatalog(pub Vec<ProjectionAbstraction>);

impl ProjectionCatalog {
    pub fn for_config(cfg: &ContinuousConfig) -> Result<Self> {
        Ok(Self(vec![
            ProjectionAbstraction::new(0, cfg.reward_radius)?,
            ProjectionAbstraction::new(1, cfg.reward_radius)?,
        ]))
    }
}

impl RewardPredictor<RelState> for ProjectionCatalog {
    fn n_abstractions(&self) -> usize {
        self.0.len()
    }

    fn predicted_reward(&self, index: usize, obs: &RelState) -> Result<f64> {
        self.0
            .get(index)
            .map(|ab| ab.predicted_reward(obs))
            .ok_or(Error::Index {
                what: "abstraction",
                index,
                len: self.0.len(),
            })
    }
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = a.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r - tau
    } else {
        r
    }
}

/// Distances closer than this count as equal when ranking commands.
const DISTANCE_TIE: f64 = 1e-9;

/// Greedy one-tick pursuit of the kept human.
///
/// Stops inside `stop_fraction * reward_radius`. Otherwise picks the command
/// whose one-tick motion leaves the robot closest to the kept human (treated
/// as static), then, among distances tied within 1e-9, the one leaving the
/// smallest bearing error, then the
/// lowest command index. Reads only the kept coordinates.
pub fn pursuit_policy(
    ab: &ProjectionAbstraction,
    obs: &RelState,
    robot: &RobotParams,
    stop_fraction: f64,
) -> Command {
    let target = ab.project(obs);
    if target[0].hypot(target[1]) <= stop_fraction * ab.reward_radius {
        return Command::Stop;
    }
    let origin = Pose {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };
    let score = |c: Command| {
        let (v, w) = c.velocity(robot);
        let next = integrate(origin, v, w, CONTROL_PERIOD);
        let rel = to_robot_frame(next, target);
        let dist = rel[0].hypot(rel[1]);
        let bearing = wrap_angle(rel[1].atan2(rel[0])).abs();
        (dist, bearing)
    };
    let mut best = Command::ALL[0];
    let mut best_score = score(best);
    for &c in &Command::ALL[1..] {
        let s = score(c);
        let tied = (s.0 - best_score.0).abs() <= DISTANCE_TIE;
        if (!tied && s.0 < best_score.0) || (tied && s.1 < best_score.1) {
            best = c;
            best_score = s;
        }
    }
    best
}
