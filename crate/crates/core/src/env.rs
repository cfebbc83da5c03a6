//! The multi-robot Markov game: scene generation, per-robot observations,
//! safety-filtered stepping, collision and coverage detection, rewards.

use crate::dynamics::{self, Action, DynParams, DynamicsModel, RobotState};
use crate::error::{Error, Result};
use crate::math::{cosine_distance, wrap_angle, Vec2};
use crate::rng::{derive_seed, seeded, stream};
use crate::vo::{self, ConeSet, SafetyMode, SpeedLimit, VoError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Rejected samples tolerated per generated scene.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Dense distance/heading/projection shaping.
    #[default]
    Shaped,
    /// `α` on coverage, `-β` on collision, else 0.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub mode: RewardMode,
    pub lambda_distance: f64,
    pub lambda_heading: f64,
    pub lambda_projection: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            mode: RewardMode::Shaped,
            lambda_distance: 1.0,
            lambda_heading: 0.1,
            lambda_projection: 0.05,
            alpha: 10.0,
            beta: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub robot_radius: f64,
    pub obstacle_radius: f64,
    pub goal_radius: f64,
    /// Centre-to-centre sensing range R_s.
    pub sensing_range: f64,
    /// The workspace is `[-half_width, half_width]²`.
    pub half_width: f64,
    pub max_steps: usize,
    /// Collision margin δ.
    pub collision_margin: f64,
    /// Extra inflation of velocity obstacles beyond δ, absorbing actuation
    /// noise.
    pub safety_buffer: f64,
    /// Coverage threshold ε on distance plus cosine distance.
    pub coverage_tolerance: f64,
    /// Neighbour slots K_max in an observation.
    pub neighbor_slots: usize,
    /// Steepness `c` of the sigmoid projection.
    pub sigmoid_steepness: f64,
    pub gamma: f64,
    pub reward: RewardParams,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            robot_radius: 0.05,
            obstacle_radius: 0.12,
            goal_radius: 0.02,
            sensing_range: 0.2,
            half_width: 1.0,
            max_steps: 300,
            collision_margin: 0.01,
            safety_buffer: 0.005,
            coverage_tolerance: 0.05,
            neighbor_slots: 6,
            sigmoid_steepness: 10.0,
            gamma: 0.95,
            reward: RewardParams::default(),
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.robot_radius > 0.0 && self.obstacle_radius > 0.0 && self.goal_radius > 0.0) {
            return Err("radii must be positive".into());
        }
        if !(self.sensing_range > self.robot_radius) {
            return Err("sensing_range must exceed robot_radius".into());
        }
        if !(self.collision_margin > 0.0 && self.coverage_tolerance > 0.0) {
            return Err("collision_margin and coverage_tolerance must be positive".into());
        }
        if !(self.safety_buffer >= 0.0) {
            return Err("safety_buffer must be non-negative".into());
        }
        if !(self.half_width > self.obstacle_radius && self.half_width > self.robot_radius) {
            return Err("workspace too small for its bodies".into());
        }
        if !(self.sigmoid_steepness > 0.0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err("sigmoid_steepness must be positive and gamma in [0, 1]".into());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be positive".into());
        }
        Ok(())
    }

    fn robot_pair_threshold(&self) -> f64 {
        2.0 * self.robot_radius + self.collision_margin
    }

    fn obstacle_threshold(&self, obstacle_radius: f64) -> f64 {
        self.robot_radius + obstacle_radius + self.collision_margin
    }

    /// Goals are kept far enough apart that two robots resting within the
    /// coverage tolerance of neighbouring goals are still collision-free.
    fn goal_separation(&self) -> f64 {
        self.robot_pair_threshold() + 2.0 * self.coverage_tolerance
    }

    fn goal_obstacle_clearance(&self) -> f64 {
        self.obstacle_threshold(self.obstacle_radius) + self.coverage_tolerance
    }

    /// Length of the flattened observation for `goals` goals.
    pub fn observation_dim(&self, goals: usize) -> usize {
        OWN_FEATURES + NEIGHBOR_FEATURES * self.neighbor_slots + GOAL_FEATURES * goals
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub state: RobotState,
    /// Set once the robot has collided; it then stays in place.
    pub frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub pos: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub pos: Vec2,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scene {
    pub robots: Vec<Robot>,
    pub obstacles: Vec<Obstacle>,
    pub goals: Vec<Goal>,
    pub t: usize,
}

impl Scene {
    /// Robots at rest with the given poses.
    pub fn new(robots: &[(Vec2, f64)], obstacles: Vec<Obstacle>, goals: Vec<Goal>) -> Self {
        Self {
            robots: robots
                .iter()
                .map(|&(p, th)| Robot {
                    state: RobotState::at(p, th),
                    frozen: false,
                })
                .collect(),
            obstacles,
            goals,
            t: 0,
        }
    }

    /// Same scene with every position shifted by `offset`.
    pub fn translated(&self, offset: Vec2) -> Self {
        let mut s = self.clone();
        s.robots.iter_mut().for_each(|r| r.state.pos += offset);
        s.obstacles.iter_mut().for_each(|o| o.pos += offset);
        s.goals.iter_mut().for_each(|g| g.pos += offset);
        s
    }
}

fn sample_point<R: Rng + ?Sized>(rng: &mut R, half: f64) -> Vec2 {
    Vec2::new(rng.random_range(-half..=half), rng.random_range(-half..=half))
}

fn sample_heading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    wrap_angle(rng.random_range(-PI..PI))
}

/// Uniform rejection sampling of obstacles, then goals, then robots.
pub fn generate_scene<R: Rng + ?Sized>(
    rng: &mut R,
    n_robots: usize,
    n_obstacles: usize,
    params: &EnvParams,
) -> Result<Scene> {
    let mut rejected = 0usize;
    let fail = |rejected| Error::GenerationFailure {
        rejected,
        robots: n_robots,
        obstacles: n_obstacles,
    };
    let r_obs = params.obstacle_radius;

    let mut obstacles: Vec<Obstacle> = Vec::with_capacity(n_obstacles);
    while obstacles.len() < n_obstacles {
        let pos = sample_point(rng, params.half_width - r_obs);
        if obstacles.iter().all(|o| o.pos.distance(pos) > o.radius + r_obs) {
            obstacles.push(Obstacle { pos, radius: r_obs });
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(fail(rejected));
            }
        }
    }

    let body_half = params.half_width - params.robot_radius;
    let mut goals: Vec<Goal> = Vec::with_capacity(n_robots);
    while goals.len() < n_robots {
        let pos = sample_point(rng, body_half);
        let theta = sample_heading(rng);
        let ok = goals.iter().all(|g| g.pos.distance(pos) >= params.goal_separation())
            && obstacles
                .iter()
                .all(|o| o.pos.distance(pos) > params.goal_obstacle_clearance());
        if ok {
            goals.push(Goal { pos, theta });
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(fail(rejected));
            }
        }
    }

    let mut robots: Vec<Robot> = Vec::with_capacity(n_robots);
    while robots.len() < n_robots {
        let pos = sample_point(rng, body_half);
        let theta = sample_heading(rng);
        let ok = robots
            .iter()
            .all(|r| r.state.pos.distance(pos) > params.robot_pair_threshold())
            && obstacles
                .iter()
                .all(|o| o.pos.distance(pos) > params.obstacle_threshold(o.radius))
            && goals
                .iter()
                .all(|g| g.pos.distance(pos) >= 2.0 * params.goal_radius);
        if ok {
            robots.push(Robot {
                state: RobotState::at(pos, theta),
                frozen: false,
            });
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(fail(rejected));
            }
        }
    }

    Ok(Scene {
        robots,
        obstacles,
        goals,
        t: 0,
    })
}

pub const OWN_FEATURES: usize = 6;
pub const NEIGHBOR_FEATURES: usize = 6;
pub const GOAL_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Robot,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborSlot {
    pub rel_pos: Vec2,
    pub rel_vel: Vec2,
    pub kind: EntityKind,
}

/// What one robot sees: its own state, the nearest sensed entities and every
/// goal. Relative vectors are in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pose: [f64; 3],
    pub velocity: Vec2,
    pub omega: f64,
    /// Sorted by distance, at most `neighbor_slots` entries.
    pub neighbors: Vec<NeighborSlot>,
    pub neighbor_slots: usize,
    /// Per goal: relative position and wrapped relative heading.
    pub goals: Vec<(Vec2, f64)>,
}

impl Observation {
    pub fn dim(&self) -> usize {
        OWN_FEATURES + NEIGHBOR_FEATURES * self.neighbor_slots + GOAL_FEATURES * self.goals.len()
    }

    /// Fixed-length feature vector; empty neighbour slots are all zero.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.write_into(&mut out);
        out
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.pose);
        out.extend_from_slice(&[self.velocity.x, self.velocity.y, self.omega]);
        for k in 0..self.neighbor_slots {
            match self.neighbors.get(k) {
                Some(s) => out.extend_from_slice(&[
                    s.rel_pos.x,
                    s.rel_pos.y,
                    s.rel_vel.x,
                    s.rel_vel.y,
                    if s.kind == EntityKind::Robot { 1.0 } else { 0.0 },
                    1.0,
                ]),
                None => out.extend_from_slice(&[0.0; NEIGHBOR_FEATURES]),
            }
        }
        for (rel, dth) in &self.goals {
            out.extend_from_slice(&[rel.x, rel.y, *dth]);
        }
    }
}

struct Sensed {
    index: usize,
    kind: EntityKind,
    pos: Vec2,
    vel: Vec2,
    radius: f64,
    distance: f64,
}

fn sensed_entities(scene: &Scene, n: usize, params: &EnvParams) -> Vec<Sensed> {
    let me = scene.robots[n].state.pos;
    let mut out = Vec::new();
    for (i, r) in scene.robots.iter().enumerate() {
        if i == n {
            continue;
        }
        let d = r.state.pos.distance(me);
        if d <= params.sensing_range {
            out.push(Sensed {
                index: i,
                kind: EntityKind::Robot,
                pos: r.state.pos,
                vel: r.state.vel,
                radius: params.robot_radius,
                distance: d,
            });
        }
    }
    for (i, o) in scene.obstacles.iter().enumerate() {
        let d = o.pos.distance(me);
        if d <= params.sensing_range {
            out.push(Sensed {
                index: i,
                kind: EntityKind::Obstacle,
                pos: o.pos,
                vel: Vec2::ZERO,
                radius: o.radius,
                distance: d,
            });
        }
    }
    out
}

pub fn observe(scene: &Scene, n: usize, params: &EnvParams) -> Observation {
    let me = &scene.robots[n].state;
    let mut sensed = sensed_entities(scene, n, params);
    sensed.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    sensed.truncate(params.neighbor_slots);
    Observation {
        pose: [me.pos.x, me.pos.y, me.theta],
        velocity: me.vel,
        omega: me.omega,
        neighbors: sensed
            .iter()
            .map(|s| NeighborSlot {
                rel_pos: s.pos - me.pos,
                rel_vel: s.vel - me.vel,
                kind: s.kind,
            })
            .collect(),
        neighbor_slots: params.neighbor_slots,
        goals: scene
            .goals
            .iter()
            .map(|g| (g.pos - me.pos, wrap_angle(g.theta - me.theta)))
            .collect(),
    }
}

/// Binary robot × goal matrix: entry set when distance plus cosine distance
/// of headings is within the tolerance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl AssignmentMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols));
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.cols + j]
    }

    /// `φᵀφ = I`: every goal held by exactly one robot and no robot on two
    /// goals, with as many robots as goals.
    pub fn is_covering(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for a in 0..self.cols {
            for b in 0..self.cols {
                let dot: u32 = (0..self.rows)
                    .map(|i| u32::from(self.get(i, a)) * u32::from(self.get(i, b)))
                    .sum();
                if dot != u32::from(a == b) {
                    return false;
                }
            }
        }
        true
    }
}

pub fn assignment_matrix(scene: &Scene, tolerance: f64) -> AssignmentMatrix {
    let cols = scene.goals.len();
    let mut data = Vec::with_capacity(scene.robots.len() * cols);
    for r in &scene.robots {
        for g in &scene.goals {
            let score = r.state.pos.distance(g.pos) + cosine_distance(r.state.theta, g.theta);
            data.push(u8::from(score <= tolerance));
        }
    }
    AssignmentMatrix {
        rows: scene.robots.len(),
        cols,
        data,
    }
}

pub fn coverage(phi: &AssignmentMatrix) -> bool {
    phi.is_covering()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum Body {
    Robot(usize),
    Obstacle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collision {
    pub robot: usize,
    pub other: Body,
}

/// Every robot-robot pair within `2R + δ` and robot-obstacle pair within
/// `R + r + δ` (inclusive).
pub fn collisions(scene: &Scene, params: &EnvParams) -> Vec<Collision> {
    let mut out = Vec::new();
    let pair = params.robot_pair_threshold();
    for (i, a) in scene.robots.iter().enumerate() {
        for (j, b) in scene.robots.iter().enumerate().skip(i + 1) {
            if a.state.pos.distance(b.state.pos) <= pair {
                out.push(Collision {
                    robot: i,
                    other: Body::Robot(j),
                });
            }
        }
        for (k, o) in scene.obstacles.iter().enumerate() {
            if a.state.pos.distance(o.pos) <= params.obstacle_threshold(o.radius) {
                out.push(Collision {
                    robot: i,
                    other: Body::Obstacle(k),
                });
            }
        }
    }
    out
}

/// For each goal, distance to its nearest robot.
pub fn goal_distances(scene: &Scene) -> Vec<f64> {
    scene
        .goals
        .iter()
        .map(|g| {
            scene
                .robots
                .iter()
                .map(|r| r.state.pos.distance(g.pos))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn goal_heading_gaps(scene: &Scene) -> Vec<f64> {
    scene
        .goals
        .iter()
        .map(|g| {
            scene
                .robots
                .iter()
                .map(|r| cosine_distance(r.state.theta, g.theta))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Global reward shared by every robot.
pub fn reward(scene: &Scene, projected: &[bool], collisions: &[Collision], params: &EnvParams) -> f64 {
    let rp = &params.reward;
    match rp.mode {
        RewardMode::Sparse => {
            if !collisions.is_empty() {
                -rp.beta
            } else if coverage(&assignment_matrix(scene, params.coverage_tolerance)) {
                rp.alpha
            } else {
                0.0
            }
        }
        RewardMode::Shaped => {
            let worst = |v: Vec<f64>| v.into_iter().fold(0.0_f64, f64::max);
            let r_d = -worst(goal_distances(scene));
            let r_r = -worst(goal_heading_gaps(scene));
            let r_c = -(projected.iter().filter(|p| **p).count() as f64);
            rp.lambda_distance * r_d + rp.lambda_heading * r_r + rp.lambda_projection * r_c
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    pub projected: Vec<bool>,
    /// Robots for which no safe velocity existed; they were held still.
    pub no_safe_velocity: Vec<bool>,
    /// Commands actually applied, after the safety layer.
    pub executed: Vec<Action>,
    /// Noiseless velocity implied by each executed command.
    pub executed_velocity: Vec<Vec2>,
    /// Executed velocity still inside the cone set it was checked against.
    pub executed_in_vo: Vec<bool>,
    /// Collisions first detected on this step.
    pub collisions: Vec<Collision>,
    pub goal_distances: Vec<f64>,
    pub covered: bool,
    pub timeout: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observations: Vec<Observation>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A scene plus everything needed to advance it.
#[derive(Debug, Clone)]
pub struct Env {
    pub params: EnvParams,
    pub dyn_params: DynParams,
    pub model: DynamicsModel,
    pub safety: SafetyMode,
    scene: Scene,
    noise: Vec<ChaCha8Rng>,
}

impl Env {
    pub fn new(params: EnvParams, dyn_params: DynParams, model: DynamicsModel, safety: SafetyMode) -> Self {
        Self {
            params,
            dyn_params,
            model,
            safety,
            scene: Scene::default(),
            noise: Vec::new(),
        }
    }

    /// Fresh random scene; all randomness of the episode derives from `seed`.
    pub fn reset(&mut self, seed: u64, n_robots: usize, n_obstacles: usize) -> Result<Vec<Observation>> {
        let mut rng = seeded(derive_seed(seed, stream::SCENE));
        let scene = generate_scene(&mut rng, n_robots, n_obstacles, &self.params)?;
        Ok(self.load_scene(scene, seed))
    }

    /// Installs a prepared scene.
    pub fn load_scene(&mut self, scene: Scene, seed: u64) -> Vec<Observation> {
        let noise_seed = derive_seed(seed, stream::NOISE);
        self.noise = (0..scene.robots.len())
            .map(|n| {
                let mut r = seeded(noise_seed);
                r.set_stream(n as u64);
                r
            })
            .collect();
        self.scene = scene;
        self.observations()
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.scene.robots.len())
            .map(|n| observe(&self.scene, n, &self.params))
            .collect()
    }

    pub fn observation_dim(&self) -> usize {
        self.params.observation_dim(self.scene.goals.len())
    }

    /// Velocity obstacles of every entity robot `n` senses. Robots with a
    /// lower index have already committed their velocity for this step, so
    /// those are used; the rest contribute their current velocity.
    fn cone_set(&self, n: usize, committed: &[Option<Vec2>]) -> ConeSet {
        let me = &self.scene.robots[n].state;
        let inflated = self.params.robot_radius + self.params.collision_margin;
        let buffered = inflated + self.params.safety_buffer;
        let mut cs = ConeSet::new();
        for s in sensed_entities(&self.scene, n, &self.params) {
            let vel = match s.kind {
                EntityKind::Robot => committed[s.index].unwrap_or(s.vel),
                EntityKind::Obstacle => s.vel,
            };
            // Inside the buffer, shrink it to the clearance left so the
            // neighbour still cannot be approached.
            let clearance = me.pos.distance(s.pos) - s.radius;
            let radius = buffered.min(clearance * (1.0 - 1e-9)).max(inflated);
            match vo::compute_vo(me.pos, radius, s.pos, vel, s.radius) {
                Ok(c) => cs.push(c),
                // Already in contact: recorded as a collision, no cone exists.
                Err(VoError::Overlap { .. }) => {}
                Err(e) => unreachable!("{e}"),
            }
        }
        cs
    }

    fn reachable(&self, s: &RobotState) -> (Vec2, f64) {
        let base = if self.dyn_params.momentum { s.vel } else { Vec2::ZERO };
        (base, self.dyn_params.max_speed_change())
    }

    /// Cones robot `n` currently senses, every entity at its present velocity.
    pub fn velocity_obstacles(&self, n: usize) -> ConeSet {
        self.cone_set(n, &vec![None; self.scene.robots.len()])
    }

    /// Disk of velocities robot `n` can reach in one step; it lies inside
    /// the actuator box, so any velocity in it is executable.
    pub fn speed_limit(&self, n: usize) -> SpeedLimit {
        let (center, radius) = self.reachable(&self.scene.robots[n].state);
        SpeedLimit { center, radius }
    }

    /// Runs the safety layer on one robot's raw command.
    fn filter(&self, n: usize, raw: Action, cs: &ConeSet) -> (Action, bool, bool) {
        let s = &self.scene.robots[n].state;
        let p = &self.dyn_params;
        let tentative = dynamics::predicted_velocity(self.model, s, &raw, p);
        if self.safety == SafetyMode::Off || !cs.contains(tentative) {
            return (raw, false, false);
        }
        let c = self.params.sigmoid_steepness;
        let (base, reach) = self.reachable(s);
        match self.model {
            DynamicsModel::Holonomic => {
                let limit = SpeedLimit { center: base, radius: reach };
                match vo::safe_velocity(cs, tentative, self.safety, c, Some(limit)) {
                    Ok(sv) => (
                        dynamics::velocity_to_command(self.model, sv.velocity, raw.torque, s, p),
                        true,
                        false,
                    ),
                    Err(_) => (
                        dynamics::velocity_to_command(self.model, base, raw.torque, s, p),
                        true,
                        true,
                    ),
                }
            }
            DynamicsModel::Nonholonomic => {
                let heading = Vec2::from_angle(dynamics::predicted_heading(s, raw.torque, p));
                let base_speed = base.dot(heading);
                let (lo, hi) = (base_speed - reach, base_speed + reach);
                let projected = vo::safe_velocity(cs, tentative, self.safety, c, None);
                let target = projected.map(|sv| sv.velocity.dot(heading)).unwrap_or(0.0);
                let (speed, stuck) = match self.safety {
                    SafetyMode::Sigmoid if projected.is_ok() => (target.clamp(lo, hi), false),
                    _ => match vo::safe_speed_along(cs, heading, target, lo, hi) {
                        Some(sp) => (sp, false),
                        None => (0.0_f64.clamp(lo, hi), true),
                    },
                };
                let force = ((speed - base_speed) * p.mass / p.dt).clamp(-p.a_max, p.a_max);
                (Action::new(Vec2::new(force, 0.0), raw.torque), true, stuck)
            }
        }
    }

    /// Advances every robot by one step through the safety layer.
    pub fn step(&mut self, raw_actions: &[Action]) -> StepResult {
        let n_robots = self.scene.robots.len();
        assert_eq!(raw_actions.len(), n_robots, "one action per robot");
        let p = self.dyn_params;
        let mut committed: Vec<Option<Vec2>> = vec![None; n_robots];
        let mut info = StepInfo {
            projected: vec![false; n_robots],
            no_safe_velocity: vec![false; n_robots],
            executed: vec![Action::default(); n_robots],
            executed_velocity: vec![Vec2::ZERO; n_robots],
            executed_in_vo: vec![false; n_robots],
            ..Default::default()
        };

        for n in 0..n_robots {
            let robot = self.scene.robots[n];
            if robot.frozen {
                committed[n] = Some(Vec2::ZERO);
                continue;
            }
            let raw = raw_actions[n].clamped(p.a_max);
            let cs = if self.safety == SafetyMode::Off {
                ConeSet::new()
            } else {
                self.cone_set(n, &committed)
            };
            let (exec, projected, stuck) = self.filter(n, raw, &cs);
            let v = dynamics::predicted_velocity(self.model, &robot.state, &exec, &p);
            info.executed[n] = exec;
            info.executed_velocity[n] = v;
            info.executed_in_vo[n] = cs.contains(v);
            info.projected[n] = projected;
            info.no_safe_velocity[n] = stuck;
            committed[n] = Some(v);
        }

        let was_frozen: Vec<bool> = self.scene.robots.iter().map(|r| r.frozen).collect();
        for n in 0..n_robots {
            if was_frozen[n] {
                continue;
            }
            let r = &mut self.scene.robots[n];
            r.state = dynamics::step(self.model, &r.state, &info.executed[n], &p, &mut self.noise[n]);
        }
        self.scene.t += 1;

        info.collisions = collisions(&self.scene, &self.params)
            .into_iter()
            .filter(|c| match c.other {
                Body::Robot(j) => !(was_frozen[c.robot] && was_frozen[j]),
                Body::Obstacle(_) => !was_frozen[c.robot],
            })
            .collect();
        for c in &info.collisions {
            let mut freeze = |i: usize| {
                let r = &mut self.scene.robots[i];
                r.frozen = true;
                r.state.vel = Vec2::ZERO;
                r.state.omega = 0.0;
            };
            freeze(c.robot);
            if let Body::Robot(j) = c.other {
                freeze(j);
            }
        }

        info.covered = coverage(&assignment_matrix(&self.scene, self.params.coverage_tolerance));
        info.timeout = !info.covered && self.scene.t >= self.params.max_steps;
        info.goal_distances = goal_distances(&self.scene);
        let reward = reward(&self.scene, &info.projected, &info.collisions, &self.params);
        StepResult {
            observations: self.observations(),
            reward,
            done: info.covered || info.timeout,
            info,
        }
    }
}
