//! Model-based comparison planner: greedy nearest-goal assignment plus a
//! proportional controller whose velocity is made safe by the VO layer.

use crate::dynamics::{self, Action, DynamicsModel};
use crate::env::{Env, Observation, Scene};
use crate::math::{wrap_angle, Vec2};
use crate::rng::{derive_seed, seeded, stream};
use crate::rollout::Policy;
use crate::vo::{self, SafetyMode};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineGains {
    /// Position gain, 1/s.
    pub k_p: f64,
    pub k_theta: f64,
    /// Cap on the desired speed, m/s.
    pub v_max: f64,
    /// Average the desired velocity with the current one before projection.
    pub reciprocal: bool,
}

impl Default for BaselineGains {
    fn default() -> Self {
        Self {
            k_p: 1.0,
            k_theta: 20.0,
            v_max: 0.3,
            reciprocal: false,
        }
    }
}

impl BaselineGains {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k_p > 0.0 && self.k_theta >= 0.0 && self.v_max > 0.0) {
            return Err("baseline gains must be positive".into());
        }
        Ok(())
    }
}

/// `assignment[robot] = goal`.
pub type Assignment = Vec<usize>;

/// Robots in index order each claim their nearest unclaimed goal; exact
/// distance ties are broken uniformly at random.
pub fn greedy_assign<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Assignment {
    let mut claimed = vec![false; scene.goals.len()];
    let mut out = Vec::with_capacity(scene.robots.len());
    for robot in &scene.robots {
        let p = robot.state.pos;
        let mut best = f64::INFINITY;
        let mut ties: Vec<usize> = Vec::new();
        for (j, g) in scene.goals.iter().enumerate().filter(|(j, _)| !claimed[*j]) {
            let d = p.distance(g.pos);
            if d < best {
                best = d;
                ties.clear();
                ties.push(j);
            } else if d == best {
                ties.push(j);
            }
        }
        let Some(&first) = ties.first() else {
            break;
        };
        let pick = if ties.len() > 1 {
            ties[rng.random_range(0..ties.len())]
        } else {
            first
        };
        claimed[pick] = true;
        out.push(pick);
    }
    out
}

/// Desired velocity and torque for one robot before the safety layer.
fn desired(env: &Env, n: usize, goal: usize, gains: &BaselineGains) -> (Vec2, f64) {
    let scene = env.scene();
    let s = &scene.robots[n].state;
    let g = &scene.goals[goal];
    let offset = g.pos - s.pos;
    let mut v = offset * gains.k_p;
    let speed = v.norm();
    if speed > gains.v_max {
        v = v * (gains.v_max / speed);
    }
    if gains.reciprocal {
        v = (v + s.vel) * 0.5;
    }
    let target_heading = match env.model {
        DynamicsModel::Holonomic => g.theta,
        // A unicycle has to face its direction of travel until it arrives.
        DynamicsModel::Nonholonomic if offset.norm() > env.params.coverage_tolerance => offset.angle(),
        DynamicsModel::Nonholonomic => g.theta,
    };
    (v, gains.k_theta * wrap_angle(target_heading - s.theta))
}

/// One command per robot: proportional control toward the assigned goal,
/// made safe by the hard projection within the reachable speed disk.
pub fn vo_controller_step(env: &Env, assignment: &Assignment, gains: &BaselineGains) -> Vec<Action> {
    let p = &env.dyn_params;
    let c = env.params.sigmoid_steepness;
    env.scene()
        .robots
        .iter()
        .enumerate()
        .map(|(n, robot)| {
            if robot.frozen {
                return Action::default();
            }
            let (v, torque) = desired(env, n, assignment[n], gains);
            let limit = env.speed_limit(n);
            let cs = env.velocity_obstacles(n);
            let safe = match vo::safe_velocity(&cs, v, SafetyMode::Min, c, Some(limit)) {
                Ok(sv) => sv.velocity,
                Err(_) => limit.center,
            };
            dynamics::velocity_to_command(env.model, safe, torque, &robot.state, p)
        })
        .collect()
}

/// The baseline as a [`Policy`]; assigns goals once per episode.
#[derive(Debug, Clone)]
pub struct GreedyVoPolicy {
    pub gains: BaselineGains,
    assignment: Assignment,
}

impl GreedyVoPolicy {
    pub fn new(gains: BaselineGains) -> Self {
        Self {
            gains,
            assignment: Vec::new(),
        }
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }
}

impl Policy for GreedyVoPolicy {
    fn begin_episode(&mut self, scene: &Scene, seed: u64) {
        let mut rng = seeded(derive_seed(seed, stream::POLICY));
        self.assignment = greedy_assign(scene, &mut rng);
    }

    fn act(&mut self, env: &Env, _observations: &[Observation]) -> Vec<Action> {
        vo_controller_step(env, &self.assignment, &self.gains)
    }
}
