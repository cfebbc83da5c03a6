use super::*;
use crate::nn::{flat_params, param_mut};

fn tiny(robots: usize, obstacles: usize) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 5,
        robots,
        obstacles,
        ..Default::default()
    };
    cfg.env.max_steps = 20;
    cfg.train.hidden = vec![12, 10];
    cfg.train.minibatch = 16;
    cfg.train.episodes = 3;
    cfg
}

/// Buffer filled with random transitions of the right widths.
fn filled(trainer: &mut Trainer, count: usize, seed: u64) {
    let mut rng = seeded(seed);
    let n = trainer.robots();
    let (od, ad) = (trainer.obs_dim() * n, trainer.act_dim() * n);
    for _ in 0..count {
        trainer.buffer_mut().push(Transition {
            observations: (0..od).map(|_| rng.random_range(-1.0..1.0)).collect(),
            actions: (0..ad).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(-2.0..0.0),
            next_observations: (0..od).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal: rng.random_bool(0.1),
        });
    }
}

fn batch(trainer: &mut Trainer, size: usize, seed: u64) -> Minibatch {
    filled(trainer, size, seed);
    trainer.buffer().sample(&mut seeded(seed + 1), size)
}

#[test]
fn greedy_action_is_deterministic() {
    let mut t = Trainer::new(tiny(2, 0)).unwrap();
    let o = vec![0.1; t.obs_dim()];
    let a = t.act(0, &o, false, 0.3).unwrap();
    assert_eq!(a, t.act(0, &o, false, 0.3).unwrap());
    assert_eq!(a, t.act(0, &o, true, 0.0).unwrap());
    assert_eq!(a.len(), 3);
}

#[test]
fn exploration_noise_replays_under_seed() {
    let o = vec![0.1; tiny(2, 0).env.observation_dim(2)];
    let mut a = Trainer::new(tiny(2, 0)).unwrap();
    let mut b = Trainer::new(tiny(2, 0)).unwrap();
    let greedy = a.act(1, &o, false, 0.0).unwrap();
    let na = a.act(1, &o, true, 0.3).unwrap();
    assert_eq!(na, b.act(1, &o, true, 0.3).unwrap());
    assert_ne!(na, greedy);
    assert!(na.iter().all(|x| x.abs() <= 1.0));
}

#[test]
fn noise_schedule_decays_linearly_then_holds() {
    let mut cfg = tiny(1, 0);
    cfg.train.episodes = 100;
    let t = Trainer::new(cfg).unwrap();
    assert!((t.noise_std(0) - 0.3).abs() < 1e-15);
    assert!((t.noise_std(25) - 0.175).abs() < 1e-15);
    assert!((t.noise_std(50) - 0.05).abs() < 1e-15);
    assert!((t.noise_std(99) - 0.05).abs() < 1e-15);
}

/// Makes the target critic output a constant.
fn constant_target_critic(t: &mut Trainer, n: usize, value: f64) {
    let c = &mut t.agents_mut()[n].target_critic;
    let last = c.layers.last_mut().unwrap();
    last.weights.fill(0.0);
    last.biases.fill(value);
}

#[test]
fn bellman_target_examples() {
    let mut t = Trainer::new(tiny(2, 0)).unwrap();
    let mut mb = batch(&mut t, 4, 1);
    constant_target_critic(&mut t, 0, 2.0);
    mb.rewards.fill(1.0);
    mb.terminal = ndarray::arr1(&[0.0, 1.0, 0.0, 1.0]);
    let next = t.target_actions(&mb);
    let y = t.bellman_targets(0, &mb, &next);
    assert!((y[0] - 2.9).abs() < 1e-12);
    assert_eq!(y[1], 1.0);
    assert!((y[2] - 2.9).abs() < 1e-12);
    assert_eq!(y[3], 1.0);
}

#[test]
fn critic_loss_decreases_on_frozen_batch() {
    let mut t = Trainer::new(tiny(3, 1)).unwrap();
    let mb = batch(&mut t, 64, 3);
    let next = t.target_actions(&mb);
    let mut losses = Vec::new();
    for _ in 0..11 {
        losses.push(t.critic_update(0, &mb, &next));
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn critic_gradient_matches_finite_differences() {
    let mut t = Trainer::new(tiny(2, 1)).unwrap();
    let mb = batch(&mut t, 8, 4);
    let next = t.target_actions(&mb);
    let y = t.bellman_targets(1, &mb, &next);
    let (_, g) = t.critic_loss_and_grad(1, &mb, &y);
    let analytic = g.to_flat();
    let mut probe = t.clone();
    for k in (0..analytic.len()).step_by(7) {
        let orig = *param_mut(&mut probe.agents_mut()[1].critic, k);
        *param_mut(&mut probe.agents_mut()[1].critic, k) = orig + 1e-6;
        let up = probe.critic_loss_and_grad(1, &mb, &y).0;
        *param_mut(&mut probe.agents_mut()[1].critic, k) = orig - 1e-6;
        let down = probe.critic_loss_and_grad(1, &mb, &y).0;
        *param_mut(&mut probe.agents_mut()[1].critic, k) = orig;
        let fd = (up - down) / 2e-6;
        let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3);
        assert!(err < 1e-4, "param {k}: fd {fd} vs {}", analytic[k]);
    }
}

#[test]
fn constant_critic_leaves_actor_unchanged() {
    let mut t = Trainer::new(tiny(2, 0)).unwrap();
    let mb = batch(&mut t, 8, 5);
    let last = t.agents_mut()[0].critic.layers.last_mut().unwrap();
    last.weights.fill(0.0);
    last.biases.fill(0.7);
    let before = t.agents()[0].actor.clone();
    let (obj, g) = t.actor_objective_and_grad(0, &mb);
    assert!((obj - 0.7).abs() < 1e-12);
    assert!(g.to_flat().iter().all(|x| *x == 0.0));
    t.actor_update(0, &mb);
    assert_eq!(t.agents()[0].actor, before);
}

/// Replaces robot `n`'s critic with `Q = a_n[component]`.
fn linear_critic_on_own_action(t: &mut Trainer, n: usize, component: usize) {
    let width = t.robots() * (t.obs_dim() + t.act_dim());
    let mut critic = Mlp::zeros(&[width, 1], OutputActivation::Identity);
    critic.layers[0].weights[[0, t.robots() * t.obs_dim() + n * t.act_dim() + component]] = 1.0;
    let a = &mut t.agents_mut()[n];
    a.critic_opt = Adam::new(&critic, 1e-3);
    a.critic = critic;
}

#[test]
fn identity_critic_raises_actor_output() {
    let mut t = Trainer::new(tiny(2, 0)).unwrap();
    let mb = batch(&mut t, 16, 6);
    linear_critic_on_own_action(&mut t, 1, 0);
    let before = t.actor_objective_and_grad(1, &mb).0;
    for _ in 0..20 {
        t.actor_update(1, &mb);
    }
    let after = t.actor_objective_and_grad(1, &mb).0;
    assert!(after > before, "{after} <= {before}");
}

fn actor_fd_check(t: &Trainer, n: usize, mb: &Minibatch) -> f64 {
    let (_, g) = t.actor_objective_and_grad(n, mb);
    let analytic = g.to_flat();
    let mut probe = t.clone();
    let mut worst = 0.0_f64;
    for (k, a) in analytic.iter().enumerate() {
        let orig = *param_mut(&mut probe.agents_mut()[n].actor, k);
        *param_mut(&mut probe.agents_mut()[n].actor, k) = orig + 1e-5;
        let up = -probe.actor_objective_and_grad(n, mb).0;
        *param_mut(&mut probe.agents_mut()[n].actor, k) = orig - 1e-5;
        let down = -probe.actor_objective_and_grad(n, mb).0;
        *param_mut(&mut probe.agents_mut()[n].actor, k) = orig;
        let fd = (up - down) / 2e-5;
        worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-3));
    }
    worst
}

#[test]
fn composed_actor_gradient_matches_finite_differences() {
    let mut t = Trainer::new(tiny(2, 1)).unwrap();
    let mb = batch(&mut t, 8, 7);
    assert!(actor_fd_check(&t, 0, &mb) < 1e-4);
    linear_critic_on_own_action(&mut t, 1, 2);
    assert!(actor_fd_check(&t, 1, &mb) < 1e-4);
}

#[test]
fn single_robot_critic_sees_own_observation_and_action() {
    let t = Trainer::new(tiny(1, 0)).unwrap();
    assert_eq!(t.agents()[0].critic.input_dim(), t.obs_dim() + t.act_dim());
    assert_eq!(t.agents()[0].actor.input_dim(), t.obs_dim());
}

#[test]
fn critics_share_joint_input_width() {
    let t = Trainer::new(tiny(3, 2)).unwrap();
    let w = t.agents()[0].critic.input_dim();
    assert!(t.agents().iter().all(|a| a.critic.input_dim() == w));
    assert_ne!(flat_params(&t.agents()[0].critic), flat_params(&t.agents()[1].critic));
}

#[test]
fn targets_start_equal_and_track() {
    let mut t = Trainer::new(tiny(2, 0)).unwrap();
    assert_eq!(t.agents()[0].actor, t.agents()[0].target_actor);
    filled(&mut t, 40, 8);
    t.update().unwrap();
    let a = &t.agents()[0];
    assert_ne!(a.actor, a.target_actor);
    assert_eq!(a.actor_opt.step, 1);
    assert_eq!(a.critic_opt.step, 1);
}

#[test]
fn training_is_reproducible() {
    let run = || {
        let mut t = Trainer::new(tiny(2, 1)).unwrap();
        let mut logs = Vec::new();
        t.train(|_, l| {
            logs.push(serde_json::to_string(l).unwrap());
            Ok(())
        })
        .unwrap();
        (logs, flat_params(&t.agents()[1].actor))
    };
    let (la, pa) = run();
    let (lb, pb) = run();
    assert_eq!(la.len(), 3);
    assert_eq!(la, lb);
    assert_eq!(pa, pb);
}

#[test]
fn training_stores_executed_actions_and_updates() {
    let mut t = Trainer::new(tiny(2, 1)).unwrap();
    let log = t.run_episode().unwrap();
    assert_eq!(log.steps, 20);
    assert_eq!(t.buffer().len(), 20);
    // Updates start once a full minibatch is stored.
    assert_eq!(log.updates, 20 - 16 + 1);
    assert!(log.critic_loss.is_some());
    let tr = t.buffer().iter().next().unwrap();
    assert_eq!(tr.observations.len(), 2 * t.obs_dim());
    assert_eq!(tr.actions.len(), 2 * 3);
    assert!(tr.actions.iter().all(|a| a.abs() <= 1.0));
}

#[test]
fn periodic_evaluation_is_logged() {
    let mut cfg = tiny(2, 0);
    cfg.train.eval_every = 2;
    cfg.train.eval_episodes = 2;
    let mut t = Trainer::new(cfg).unwrap();
    assert!(t.run_episode().unwrap().eval.is_none());
    let m = t.run_episode().unwrap().eval.unwrap();
    assert_eq!(m.episodes, 2);
}

#[test]
fn evaluation_of_zero_episodes_is_empty() {
    let t = Trainer::new(tiny(2, 0)).unwrap();
    assert_eq!(t.evaluate(0, 1).unwrap(), Metrics::default());
}

#[test]
fn impossible_scene_aborts_training() {
    let mut cfg = tiny(2, 0);
    cfg.obstacles = 200;
    let mut t = Trainer::new(cfg).unwrap();
    assert!(matches!(t.run_episode(), Err(Error::GenerationFailure { .. })));
}
