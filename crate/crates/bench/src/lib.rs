//! Fixtures shared by the benchmarks, built deterministically from a seed so
//! successive runs measure identical work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeplan_core::maddpg::{Trainer, Transition};
use safeplan_core::persistence::RunConfig;
use safeplan_core::vo::{compute_vo, ConeSet};
use safeplan_core::{DynParams, DynamicsModel, Env, EnvParams, SafetyMode, Vec2};

/// `k` cones around a robot at the origin together with a velocity that lies
/// inside at least one of them.
pub fn blocked_velocity(k: usize, seed: u64) -> (ConeSet, Vec2) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let cs: ConeSet = (0..k)
            .filter_map(|_| {
                let d = rng.random_range(0.3..1.2);
                let p = Vec2::from_angle(rng.random_range(-3.1..3.1)) * d;
                let v = Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                compute_vo(Vec2::ZERO, 0.05, p, v, 0.12).ok()
            })
            .collect();
        let v = Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        if cs.len() == k && cs.contains(v) {
            return (cs, v);
        }
    }
}

pub fn loaded_env(robots: usize, obstacles: usize, model: DynamicsModel, safety: SafetyMode) -> Env {
    let mut env = Env::new(EnvParams::default(), DynParams::default(), model, safety);
    env.reset(7, robots, obstacles).expect("scene fits");
    env
}

/// A trainer whose buffer already holds one minibatch of random rows.
pub fn warm_trainer(robots: usize, hidden: usize, minibatch: usize) -> Trainer {
    let mut cfg = RunConfig {
        robots,
        obstacles: 2,
        ..Default::default()
    };
    cfg.train.hidden = vec![hidden, hidden];
    cfg.train.minibatch = minibatch;
    let mut t = Trainer::new(cfg).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (od, ad) = (t.obs_dim() * robots, t.act_dim() * robots);
    for _ in 0..minibatch {
        t.buffer_mut().push(Transition {
            observations: (0..od).map(|_| rng.random_range(-1.0..1.0)).collect(),
            actions: (0..ad).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(-2.0..0.0),
            next_observations: (0..od).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal: false,
        });
    }
    t
}
