//! Running policies through the environment and aggregating metrics.

use crate::dynamics::{Action, DynamicsModel};
use crate::env::{Env, Observation, Scene};
use crate::error::Result;
use crate::math::Vec2;
use crate::persistence::{EpisodeRecord, RobotSnapshot, StepRecord};
use crate::rng::{derive_seed, seeded, stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Maps the joint observation to one raw command per robot.
pub trait Policy {
    /// Called after every reset; `seed` is the episode seed.
    fn begin_episode(&mut self, _scene: &Scene, _seed: u64) {}

    fn act(&mut self, env: &Env, observations: &[Observation]) -> Vec<Action>;
}

/// Uniform random commands within the actuator bounds.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    model: DynamicsModel,
    a_max: f64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(model: DynamicsModel, a_max: f64) -> Self {
        Self {
            model,
            a_max,
            rng: seeded(0),
        }
    }
}

impl Policy for RandomPolicy {
    fn begin_episode(&mut self, _scene: &Scene, seed: u64) {
        self.rng = seeded(derive_seed(seed, stream::POLICY));
    }

    fn act(&mut self, env: &Env, _observations: &[Observation]) -> Vec<Action> {
        let dim = self.model.action_dim();
        (0..env.scene().robots.len())
            .map(|_| {
                let a: Vec<f64> = (0..dim).map(|_| self.rng.random_range(-self.a_max..=self.a_max)).collect();
                Action::from_slice(self.model, &a)
            })
            .collect()
    }
}

/// Seed of the `index`-th evaluation episode under `base`. Scene sets are
/// shared across methods evaluated with the same base seed.
pub fn episode_seed(base: u64, index: u64) -> u64 {
    derive_seed(derive_seed(base, stream::EVAL), index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub steps: usize,
    /// Step at which coverage was first reached.
    pub time_to_coverage: Option<usize>,
    pub collisions: usize,
    /// Robot-steps whose command was altered by the safety layer.
    pub projections: usize,
    pub robot_steps: usize,
    pub total_reward: f64,
    pub record: Option<EpisodeRecord>,
}

fn snapshot(scene: &Scene, projected: &[bool], collided: &[bool]) -> Vec<RobotSnapshot> {
    scene
        .robots
        .iter()
        .enumerate()
        .map(|(i, r)| RobotSnapshot {
            x: r.state.pos.x,
            y: r.state.pos.y,
            theta: r.state.theta,
            vx: r.state.vel.x,
            vy: r.state.vel.y,
            omega: r.state.omega,
            projected: projected.get(i).copied().unwrap_or(false),
            collided: collided.get(i).copied().unwrap_or(false),
        })
        .collect()
}

/// Runs one episode on a freshly generated scene.
pub fn run_episode(
    env: &mut Env,
    policy: &mut dyn Policy,
    seed: u64,
    robots: usize,
    obstacles: usize,
    record: bool,
) -> Result<EpisodeOutcome> {
    let mut obs = env.reset(seed, robots, obstacles)?;
    policy.begin_episode(env.scene(), seed);
    let mut rec = record.then(|| EpisodeRecord {
        dt: env.dyn_params.dt,
        scene: env.scene().clone(),
        steps: vec![StepRecord {
            step: 0,
            robots: snapshot(env.scene(), &[], &[]),
        }],
    });
    let mut out = EpisodeOutcome {
        steps: 0,
        time_to_coverage: None,
        collisions: 0,
        projections: 0,
        robot_steps: 0,
        total_reward: 0.0,
        record: None,
    };
    loop {
        let actions = policy.act(env, &obs);
        let res = env.step(&actions);
        out.steps += 1;
        out.total_reward += res.reward;
        out.collisions += res.info.collisions.len();
        out.projections += res.info.projected.iter().filter(|p| **p).count();
        out.robot_steps += robots;
        if res.info.covered && out.time_to_coverage.is_none() {
            out.time_to_coverage = Some(out.steps);
        }
        if let Some(rec) = rec.as_mut() {
            let collided: Vec<bool> = env.scene().robots.iter().map(|r| r.frozen).collect();
            rec.steps.push(StepRecord {
                step: out.steps,
                robots: snapshot(env.scene(), &res.info.projected, &collided),
            });
        }
        obs = res.observations;
        if res.done {
            break;
        }
    }
    out.record = rec;
    Ok(out)
}

/// Aggregate evaluation metrics. Time statistics are over covered episodes
/// only and absent when none were covered.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub covered: usize,
    pub coverage_rate: f64,
    pub mean_steps_to_coverage: Option<f64>,
    pub median_steps_to_coverage: Option<f64>,
    pub p90_steps_to_coverage: Option<f64>,
    pub mean_seconds_to_coverage: Option<f64>,
    pub collisions: usize,
    pub projection_rate: f64,
    pub mean_reward: f64,
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[usize], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1] as f64)
}

impl Metrics {
    pub fn from_outcomes(outcomes: &[EpisodeOutcome], dt: f64) -> Self {
        let n = outcomes.len();
        if n == 0 {
            return Self::default();
        }
        let mut times: Vec<usize> = outcomes.iter().filter_map(|o| o.time_to_coverage).collect();
        times.sort_unstable();
        let mean_steps = (!times.is_empty()).then(|| times.iter().sum::<usize>() as f64 / times.len() as f64);
        let robot_steps: usize = outcomes.iter().map(|o| o.robot_steps).sum();
        Self {
            episodes: n,
            covered: times.len(),
            coverage_rate: times.len() as f64 / n as f64,
            mean_steps_to_coverage: mean_steps,
            median_steps_to_coverage: percentile(&times, 0.5),
            p90_steps_to_coverage: percentile(&times, 0.9),
            mean_seconds_to_coverage: mean_steps.map(|s| s * dt),
            collisions: outcomes.iter().map(|o| o.collisions).sum(),
            projection_rate: if robot_steps == 0 {
                0.0
            } else {
                outcomes.iter().map(|o| o.projections).sum::<usize>() as f64 / robot_steps as f64
            },
            mean_reward: outcomes.iter().map(|o| o.total_reward).sum::<f64>() / n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalSpec {
    pub episodes: usize,
    pub robots: usize,
    pub obstacles: usize,
    pub seed: u64,
    /// Full step records are kept for this many leading episodes.
    pub record: usize,
}

/// Evaluates `policy` over `spec.episodes` seeded scenes.
pub fn evaluate(env: &mut Env, policy: &mut dyn Policy, spec: &EvalSpec) -> Result<(Metrics, Vec<EpisodeRecord>)> {
    let mut outcomes = Vec::with_capacity(spec.episodes);
    let mut records = Vec::new();
    for i in 0..spec.episodes {
        let seed = episode_seed(spec.seed, i as u64);
        let mut o = run_episode(env, policy, seed, spec.robots, spec.obstacles, i < spec.record)?;
        if let Some(r) = o.record.take() {
            records.push(r);
        }
        outcomes.push(o);
    }
    Ok((Metrics::from_outcomes(&outcomes, env.dyn_params.dt), records))
}

/// Mean speed of robots in a record, for quick sanity summaries.
pub fn mean_speed(record: &EpisodeRecord) -> f64 {
    let (sum, count) = record.steps.iter().flat_map(|s| &s.robots).fold((0.0, 0usize), |(s, c), r| {
        (s + Vec2::new(r.vx, r.vy).norm(), c + 1)
    });
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
