//! Centralized-critic, decentralized-actor training.
//!
//! Every robot owns a deterministic actor on its own observation and a critic
//! on the joint observation and joint action of all robots. Rollouts run
//! through the smooth safety projection; evaluation uses the hard one.

mod replay;

pub use replay::{Minibatch, ReplayBuffer, Transition};

use crate::dynamics::{Action, DynamicsModel};
use crate::env::{Env, Observation};
use crate::error::{Error, Result};
use crate::nn::{Adam, Gradients, Mlp, OutputActivation};
use crate::persistence::RunConfig;
use crate::rng::{derive_seed, seeded, stream};
use crate::rollout::{self, EvalSpec, Metrics, Policy};
use crate::vo::SafetyMode;
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Target-network tracking rate ρ.
    pub soft_update_rate: f64,
    pub buffer_capacity: usize,
    pub minibatch: usize,
    /// Exploration noise std as a fraction of `a_max`, at the first episode.
    pub noise_start: f64,
    pub noise_end: f64,
    /// Fraction of `episodes` over which the noise decays linearly.
    pub noise_decay: f64,
    /// Environment steps between update rounds.
    pub update_every: usize,
    /// Safety mode during training rollouts.
    pub safety: SafetyMode,
    /// Run an evaluation every this many episodes; 0 disables.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Write a checkpoint every this many episodes; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Stops training early once exceeded. Runs that hit the cap are not
    /// reproducible.
    pub max_wall_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 30_000,
            hidden: vec![128, 128],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            soft_update_rate: 0.01,
            buffer_capacity: 100_000,
            minibatch: 1024,
            noise_start: 0.3,
            noise_end: 0.05,
            noise_decay: 0.5,
            update_every: 1,
            safety: SafetyMode::Sigmoid,
            eval_every: 0,
            eval_episodes: 20,
            checkpoint_every: 1000,
            max_wall_seconds: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("hidden layer sizes must be non-empty and positive".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err("learning rates must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.soft_update_rate) {
            return Err("soft_update_rate must lie in [0, 1]".into());
        }
        if self.buffer_capacity == 0 || self.minibatch == 0 || self.update_every == 0 {
            return Err("buffer_capacity, minibatch and update_every must be positive".into());
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0 && self.noise_decay >= 0.0) {
            return Err("noise parameters must be non-negative".into());
        }
        Ok(())
    }
}

/// Live and target networks of one robot with their optimizer states.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Deterministic actors of a trained run.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub actors: Vec<Mlp>,
    pub model: DynamicsModel,
}

impl Policy for ActorPolicy {
    fn act(&mut self, _env: &Env, observations: &[Observation]) -> Vec<Action> {
        assert_eq!(observations.len(), self.actors.len(), "policy trained for a different robot count");
        observations
            .iter()
            .zip(&self.actors)
            .map(|(o, actor)| {
                let (a, _) = actor.forward_one(&o.to_vec()).expect("observation width matches actor");
                Action::from_slice(self.model, &a)
            })
            .collect()
    }
}

/// Per-episode training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    pub covered: bool,
    pub collisions: usize,
    pub projections: usize,
    pub noise_std: f64,
    pub updates: usize,
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval: Option<Metrics>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Mean pre-step Bellman loss over robots.
    pub critic_loss: f64,
    /// Mean critic value of the current actions over robots.
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    config: RunConfig,
    agents: Vec<AgentNets>,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    episode: usize,
    env: Env,
    obs_dim: usize,
    act_dim: usize,
}

impl Trainer {
    /// Fresh networks seeded from the run seed and the network index.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let robots = config.robots;
        let obs_dim = config.env.observation_dim(robots);
        let act_dim = config.model.action_dim();
        let joint = robots * (obs_dim + act_dim);
        let t = &config.train;
        let a_max = config.dynamics.a_max;
        let net_seed = derive_seed(config.seed, stream::NETWORK);
        let agents = (0..robots)
            .map(|n| {
                let actor = Mlp::new(
                    &layer_sizes(obs_dim, &t.hidden, act_dim),
                    OutputActivation::ScaledTanh(a_max),
                    &mut seeded(derive_seed(net_seed, 2 * n as u64)),
                );
                let critic = Mlp::new(
                    &layer_sizes(joint, &t.hidden, 1),
                    OutputActivation::Identity,
                    &mut seeded(derive_seed(net_seed, 2 * n as u64 + 1)),
                );
                AgentNets {
                    actor_opt: Adam::new(&actor, t.actor_lr),
                    critic_opt: Adam::new(&critic, t.critic_lr),
                    target_actor: actor.clone(),
                    target_critic: critic.clone(),
                    actor,
                    critic,
                }
            })
            .collect();
        let rng = seeded(derive_seed(config.seed, stream::TRAINER));
        Self::from_parts(config, agents, rng, 0)
    }

    /// Reassembles a trainer from checkpointed state. The replay buffer
    /// starts empty.
    pub fn from_parts(config: RunConfig, agents: Vec<AgentNets>, rng: ChaCha8Rng, episode: usize) -> Result<Self> {
        config.validate()?;
        let obs_dim = config.env.observation_dim(config.robots);
        let act_dim = config.model.action_dim();
        if agents.len() != config.robots {
            return Err(Error::Shape {
                expected: config.robots,
                got: agents.len(),
            });
        }
        let joint = config.robots * (obs_dim + act_dim);
        for a in &agents {
            if a.actor.input_dim() != obs_dim
                || a.actor.output_dim() != act_dim
                || a.critic.input_dim() != joint
                || a.critic.output_dim() != 1
                || a.target_actor.sizes() != a.actor.sizes()
                || a.target_critic.sizes() != a.critic.sizes()
            {
                return Err(Error::Format("network shapes do not match the configuration".into()));
            }
        }
        let env = Env::new(config.env.clone(), config.dynamics, config.model, config.train.safety);
        Ok(Self {
            buffer: ReplayBuffer::new(config.train.buffer_capacity),
            config,
            agents,
            rng,
            episode,
            env,
            obs_dim,
            act_dim,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentNets] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentNets] {
        &mut self.agents
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut ReplayBuffer {
        &mut self.buffer
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Episodes completed so far.
    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn robots(&self) -> usize {
        self.agents.len()
    }

    pub fn policy(&self) -> ActorPolicy {
        ActorPolicy {
            actors: self.agents.iter().map(|a| a.actor.clone()).collect(),
            model: self.config.model,
        }
    }

    /// Exploration std for `episode`: linear decay then constant.
    pub fn noise_std(&self, episode: usize) -> f64 {
        let t = &self.config.train;
        let horizon = t.noise_decay * t.episodes as f64;
        let frac = if horizon > 0.0 {
            (episode as f64 / horizon).min(1.0)
        } else {
            1.0
        };
        self.config.dynamics.a_max * (t.noise_start + (t.noise_end - t.noise_start) * frac)
    }

    /// Actor output for robot `n`, plus clamped Gaussian noise when exploring.
    pub fn act(&mut self, n: usize, observation: &[f64], explore: bool, noise_std: f64) -> Result<Vec<f64>> {
        let (mut a, _) = self.agents[n].actor.forward_one(observation)?;
        if explore && noise_std > 0.0 {
            let a_max = self.config.dynamics.a_max;
            for x in &mut a {
                let z: f64 = self.rng.sample(StandardNormal);
                *x = (*x + noise_std * z).clamp(-a_max, a_max);
            }
        }
        Ok(a)
    }

    fn obs_block<'a>(&self, x: &'a Array2<f64>, n: usize) -> ArrayView2<'a, f64> {
        x.slice(s![.., n * self.obs_dim..(n + 1) * self.obs_dim])
    }

    /// Joint next actions from the target actors.
    pub fn target_actions(&self, batch: &Minibatch) -> Array2<f64> {
        let blocks: Vec<Array2<f64>> = self
            .agents
            .iter()
            .enumerate()
            .map(|(m, a)| {
                a.target_actor
                    .predict(self.obs_block(&batch.next_observations, m))
                    .expect("observation width")
            })
            .collect();
        let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
        concatenate(Axis(1), &views).expect("equal row counts")
    }

    /// Bellman targets `r + γ(1 − terminal)Q'_n(H', A')`.
    pub fn bellman_targets(&self, n: usize, batch: &Minibatch, next_actions: &Array2<f64>) -> Vec<f64> {
        let input = concatenate![Axis(1), batch.next_observations.view(), next_actions.view()];
        let q_next = self.agents[n].target_critic.predict(input.view()).expect("critic width");
        let gamma = self.config.env.gamma;
        (0..batch.len())
            .map(|i| batch.rewards[i] + gamma * (1.0 - batch.terminal[i]) * q_next[[i, 0]])
            .collect()
    }

    /// Mean squared Bellman error of robot `n`'s critic and its gradient.
    pub fn critic_loss_and_grad(&self, n: usize, batch: &Minibatch, targets: &[f64]) -> (f64, Gradients) {
        let input = concatenate![Axis(1), batch.observations.view(), batch.actions.view()];
        let critic = &self.agents[n].critic;
        let (q, tape) = critic.forward(input.view()).expect("critic width");
        let b = batch.len() as f64;
        let mut upstream = Array2::zeros((batch.len(), 1));
        let mut loss = 0.0;
        for (i, y) in targets.iter().enumerate() {
            let e = q[[i, 0]] - y;
            loss += e * e;
            upstream[[i, 0]] = 2.0 * e / b;
        }
        let (g, _) = critic.backward(tape, upstream.view());
        (loss / b, g)
    }

    /// One Adam step on robot `n`'s critic; returns the pre-step loss.
    pub fn critic_update(&mut self, n: usize, batch: &Minibatch, next_actions: &Array2<f64>) -> f64 {
        let targets = self.bellman_targets(n, batch, next_actions);
        let (loss, g) = self.critic_loss_and_grad(n, batch, &targets);
        let agent = &mut self.agents[n];
        agent.critic_opt.update(&mut agent.critic, &g);
        loss
    }

    /// Mean `Q_n(H, A)` with robot `n`'s action replaced by its current actor
    /// output, and the gradient of its negation with respect to the actor.
    pub fn actor_objective_and_grad(&self, n: usize, batch: &Minibatch) -> (f64, Gradients) {
        let agent = &self.agents[n];
        let (a_n, actor_tape) = agent.actor.forward(self.obs_block(&batch.observations, n)).expect("actor width");
        let mut actions = batch.actions.clone();
        let cols = n * self.act_dim..(n + 1) * self.act_dim;
        actions.slice_mut(s![.., cols.clone()]).assign(&a_n);
        let input = concatenate![Axis(1), batch.observations.view(), actions.view()];
        let (q, critic_tape) = agent.critic.forward(input.view()).expect("critic width");
        let b = batch.len() as f64;
        let upstream = Array2::from_elem((batch.len(), 1), -1.0 / b);
        let (_, d_input) = agent.critic.backward(critic_tape, upstream.view());
        let offset = self.robots() * self.obs_dim;
        let d_action = d_input.slice(s![.., offset + cols.start..offset + cols.end]);
        let (g, _) = agent.actor.backward(actor_tape, d_action);
        (q.sum() / b, g)
    }

    /// One Adam step ascending robot `n`'s critic; returns the pre-step objective.
    pub fn actor_update(&mut self, n: usize, batch: &Minibatch) -> f64 {
        let (objective, g) = self.actor_objective_and_grad(n, batch);
        let agent = &mut self.agents[n];
        agent.actor_opt.update(&mut agent.actor, &g);
        objective
    }

    pub fn soft_update_targets(&mut self) {
        let rho = self.config.train.soft_update_rate;
        for a in &mut self.agents {
            a.target_actor.soft_update(&a.actor, rho);
            a.target_critic.soft_update(&a.critic, rho);
        }
    }

    /// Critic then actor update for every robot on one shared minibatch,
    /// followed by target tracking. `None` until the buffer holds a full
    /// minibatch.
    pub fn update(&mut self) -> Option<UpdateStats> {
        let size = self.config.train.minibatch;
        if self.buffer.len() < size {
            return None;
        }
        let batch = self.buffer.sample(&mut self.rng, size);
        let next_actions = self.target_actions(&batch);
        let (mut loss, mut objective) = (0.0, 0.0);
        for n in 0..self.robots() {
            loss += self.critic_update(n, &batch, &next_actions);
            objective += self.actor_update(n, &batch);
        }
        self.soft_update_targets();
        let k = self.robots() as f64;
        Some(UpdateStats {
            critic_loss: loss / k,
            actor_objective: objective / k,
        })
    }

    fn flatten(observations: &[Observation]) -> Vec<f64> {
        let mut v = Vec::new();
        for o in observations {
            o.write_into(&mut v);
        }
        v
    }

    /// One exploratory training episode.
    pub fn run_episode(&mut self) -> Result<EpisodeLog> {
        let episode = self.episode;
        let noise_std = self.noise_std(episode);
        let seed = derive_seed(derive_seed(self.config.seed, stream::EPISODE), episode as u64);
        let robots = self.config.robots;
        let model = self.config.model;
        let mut observations = self.env.reset(seed, robots, self.config.obstacles)?;
        let mut joint = Self::flatten(&observations);
        let mut log = EpisodeLog {
            episode,
            steps: 0,
            reward: 0.0,
            covered: false,
            collisions: 0,
            projections: 0,
            noise_std,
            updates: 0,
            critic_loss: None,
            actor_objective: None,
            eval: None,
        };
        let (mut loss_sum, mut objective_sum) = (0.0, 0.0);
        loop {
            let mut actions = Vec::with_capacity(robots);
            for (n, o) in observations.iter().enumerate() {
                let a = self.act(n, &o.to_vec(), true, noise_std)?;
                actions.push(Action::from_slice(model, &a));
            }
            let res = self.env.step(&actions);
            let next_joint = Self::flatten(&res.observations);
            self.buffer.push(Transition {
                observations: joint,
                actions: res.info.executed.iter().flat_map(|a| a.to_vec(model)).collect(),
                reward: res.reward,
                next_observations: next_joint.clone(),
                terminal: res.info.covered,
            });
            log.steps += 1;
            log.reward += res.reward;
            log.collisions += res.info.collisions.len();
            log.projections += res.info.projected.iter().filter(|p| **p).count();
            log.covered |= res.info.covered;
            if log.steps.is_multiple_of(self.config.train.update_every) {
                if let Some(u) = self.update() {
                    log.updates += 1;
                    loss_sum += u.critic_loss;
                    objective_sum += u.actor_objective;
                }
            }
            joint = next_joint;
            observations = res.observations;
            if res.done {
                break;
            }
        }
        if log.updates > 0 {
            log.critic_loss = Some(loss_sum / log.updates as f64);
            log.actor_objective = Some(objective_sum / log.updates as f64);
        }
        self.episode += 1;
        let every = self.config.train.eval_every;
        if every > 0 && self.episode.is_multiple_of(every) {
            let eval_seed = derive_seed(derive_seed(self.config.seed, stream::EVAL), self.episode as u64);
            log.eval = Some(self.evaluate(self.config.train.eval_episodes, eval_seed)?);
        }
        Ok(log)
    }

    /// Trains until `config.train.episodes` episodes are complete, the
    /// wall-clock cap is hit, or `on_episode` returns an error.
    pub fn train(&mut self, mut on_episode: impl FnMut(&Self, &EpisodeLog) -> Result<()>) -> Result<()> {
        let start = Instant::now();
        while self.episode < self.config.train.episodes {
            let log = self.run_episode()?;
            on_episode(self, &log)?;
            if let Some(cap) = self.config.train.max_wall_seconds {
                if start.elapsed().as_secs_f64() > cap {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Greedy actors under the configured inference safety mode.
    pub fn evaluate(&self, episodes: usize, seed: u64) -> Result<Metrics> {
        evaluate_policy(&self.config, &mut self.policy(), self.config.safety, episodes, seed)
    }
}

/// Runs `policy` on `episodes` scenes of the configured size.
pub fn evaluate_policy(
    config: &RunConfig,
    policy: &mut dyn Policy,
    safety: SafetyMode,
    episodes: usize,
    seed: u64,
) -> Result<Metrics> {
    let mut env = Env::new(config.env.clone(), config.dynamics, config.model, safety);
    let spec = EvalSpec {
        episodes,
        robots: config.robots,
        obstacles: config.obstacles,
        seed,
        record: 0,
    };
    Ok(rollout::evaluate(&mut env, policy, &spec)?.0)
}

#[cfg(test)]
mod tests;
