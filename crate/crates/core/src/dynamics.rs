//! Force/torque-driven robot dynamics.
//!
//! Velocity is set directly from the applied force over one step,
//! `v(t+1) = ((F + z) / κ) Δ`, and position integrates the new velocity,
//! `p(t+1) = p(t) + v(t+1) Δ`. Heading follows the same rule with torque and
//! rotational inertia. With `momentum` enabled the previous velocity is kept
//! and the force term is added to it.

use crate::math::{wrap_angle, Vec2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsModel {
    /// Force in any planar direction.
    #[default]
    Holonomic,
    /// Unicycle: force only along the heading.
    Nonholonomic,
}

impl DynamicsModel {
    /// Length of the flat action vector produced by a policy.
    pub fn action_dim(self) -> usize {
        match self {
            DynamicsModel::Holonomic => 3,
            DynamicsModel::Nonholonomic => 2,
        }
    }
}

impl fmt::Display for DynamicsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DynamicsModel::Holonomic => "holonomic",
            DynamicsModel::Nonholonomic => "nonholonomic",
        })
    }
}

impl FromStr for DynamicsModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "holonomic" => Ok(DynamicsModel::Holonomic),
            "nonholonomic" => Ok(DynamicsModel::Nonholonomic),
            other => Err(format!(
                "unknown dynamics `{other}` (expected holonomic or nonholonomic)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub pos: Vec2,
    /// Heading in (-π, π].
    pub theta: f64,
    /// World-frame linear velocity. Always parallel to the heading for
    /// non-holonomic robots.
    pub vel: Vec2,
    pub omega: f64,
}

impl RobotState {
    pub fn at(pos: Vec2, theta: f64) -> Self {
        Self {
            pos,
            theta: wrap_angle(theta),
            ..Default::default()
        }
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    /// Signed speed along the heading.
    pub fn speed(&self) -> f64 {
        self.vel.dot(self.heading())
    }
}

/// Force and torque. For non-holonomic robots only `force.x` (the force along
/// the heading) is used.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub force: Vec2,
    pub torque: f64,
}

impl Action {
    pub fn new(force: Vec2, torque: f64) -> Self {
        Self { force, torque }
    }

    pub fn from_slice(model: DynamicsModel, a: &[f64]) -> Self {
        debug_assert_eq!(a.len(), model.action_dim());
        match model {
            DynamicsModel::Holonomic => Self::new(Vec2::new(a[0], a[1]), a[2]),
            DynamicsModel::Nonholonomic => Self::new(Vec2::new(a[0], 0.0), a[1]),
        }
    }

    pub fn to_vec(&self, model: DynamicsModel) -> Vec<f64> {
        match model {
            DynamicsModel::Holonomic => vec![self.force.x, self.force.y, self.torque],
            DynamicsModel::Nonholonomic => vec![self.force.x, self.torque],
        }
    }

    /// Component-wise clamp to `[-a_max, a_max]`.
    pub fn clamped(&self, a_max: f64) -> Self {
        Self::new(
            Vec2::new(self.force.x.clamp(-a_max, a_max), self.force.y.clamp(-a_max, a_max)),
            self.torque.clamp(-a_max, a_max),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynParams {
    /// Mass κ (kg).
    pub mass: f64,
    /// Rotational inertia J (kg·m²).
    pub inertia: f64,
    /// Step Δ (s).
    pub dt: f64,
    /// Actuation noise standard deviation σ (N).
    pub noise_std: f64,
    /// Bound on every force/torque component (N).
    pub a_max: f64,
    /// Keep the previous velocity and add the force impulse to it.
    pub momentum: bool,
}

impl Default for DynParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: 1.0,
            dt: 0.1,
            noise_std: 0.01,
            a_max: 1.0,
            momentum: false,
        }
    }
}

impl DynParams {
    /// Largest per-component velocity change one step can produce.
    pub fn max_speed_change(&self) -> f64 {
        self.a_max * self.dt / self.mass
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mass > 0.0 && self.inertia > 0.0 && self.dt > 0.0) {
            return Err("mass, inertia and dt must be positive".into());
        }
        if !(self.noise_std >= 0.0) || !(self.a_max > 0.0) {
            return Err("noise_std must be >= 0 and a_max > 0".into());
        }
        Ok(())
    }
}

fn noise<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * std
}

fn rotate_step(s: &RobotState, torque: f64, p: &DynParams, z: f64) -> (f64, f64) {
    let impulse = (torque + z) / p.inertia * p.dt;
    let omega = if p.momentum { s.omega + impulse } else { impulse };
    (omega, wrap_angle(s.theta + omega * p.dt))
}

pub fn step_holonomic<R: Rng + ?Sized>(
    s: &RobotState,
    a: &Action,
    p: &DynParams,
    rng: &mut R,
) -> RobotState {
    let a = a.clamped(p.a_max);
    let z = Vec2::new(noise(rng, p.noise_std), noise(rng, p.noise_std));
    let z_tau = noise(rng, p.noise_std);
    let impulse = (a.force + z) / p.mass * p.dt;
    let vel = if p.momentum { s.vel + impulse } else { impulse };
    let (omega, theta) = rotate_step(s, a.torque, p, z_tau);
    RobotState {
        pos: s.pos + vel * p.dt,
        theta,
        vel,
        omega,
    }
}

pub fn step_nonholonomic<R: Rng + ?Sized>(
    s: &RobotState,
    a: &Action,
    p: &DynParams,
    rng: &mut R,
) -> RobotState {
    let a = a.clamped(p.a_max);
    let z = noise(rng, p.noise_std);
    let z_tau = noise(rng, p.noise_std);
    let impulse = (a.force.x + z) / p.mass * p.dt;
    let speed = if p.momentum { s.speed() + impulse } else { impulse };
    let (omega, theta) = rotate_step(s, a.torque, p, z_tau);
    let vel = Vec2::from_angle(theta) * speed;
    RobotState {
        pos: s.pos + vel * p.dt,
        theta,
        vel,
        omega,
    }
}

pub fn step<R: Rng + ?Sized>(
    model: DynamicsModel,
    s: &RobotState,
    a: &Action,
    p: &DynParams,
    rng: &mut R,
) -> RobotState {
    match model {
        DynamicsModel::Holonomic => step_holonomic(s, a, p, rng),
        DynamicsModel::Nonholonomic => step_nonholonomic(s, a, p, rng),
    }
}

/// Heading after applying `torque` without noise.
pub fn predicted_heading(s: &RobotState, torque: f64, p: &DynParams) -> f64 {
    rotate_step(s, torque.clamp(-p.a_max, p.a_max), p, 0.0).1
}

/// Velocity a noiseless step with `a` would produce.
pub fn predicted_velocity(model: DynamicsModel, s: &RobotState, a: &Action, p: &DynParams) -> Vec2 {
    let a = a.clamped(p.a_max);
    match model {
        DynamicsModel::Holonomic => {
            let impulse = a.force / p.mass * p.dt;
            if p.momentum {
                s.vel + impulse
            } else {
                impulse
            }
        }
        DynamicsModel::Nonholonomic => {
            let impulse = a.force.x / p.mass * p.dt;
            let speed = if p.momentum { s.speed() + impulse } else { impulse };
            Vec2::from_angle(predicted_heading(s, a.torque, p)) * speed
        }
    }
}

/// Inverse of the noiseless velocity update: the force that realizes
/// `v_safe`, with `torque` passed through. Holonomic forces beyond `a_max` are
/// scaled down keeping their direction; non-holonomic robots realize only the
/// component of `v_safe` along the heading they will have after the step.
pub fn velocity_to_command(
    model: DynamicsModel,
    v_safe: Vec2,
    torque: f64,
    s: &RobotState,
    p: &DynParams,
) -> Action {
    let base = if p.momentum { s.vel } else { Vec2::ZERO };
    match model {
        DynamicsModel::Holonomic => {
            let mut force = (v_safe - base) * (p.mass / p.dt);
            let worst = force.x.abs().max(force.y.abs());
            if worst > p.a_max {
                force = force * (p.a_max / worst);
            }
            Action::new(force, torque)
        }
        DynamicsModel::Nonholonomic => {
            let heading = Vec2::from_angle(predicted_heading(s, torque, p));
            let base_speed = if p.momentum { s.speed() } else { 0.0 };
            let f = ((v_safe.dot(heading) - base_speed) * (p.mass / p.dt)).clamp(-p.a_max, p.a_max);
            Action::new(Vec2::new(f, 0.0), torque)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn quiet() -> DynParams {
        DynParams {
            noise_std: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn holonomic_unit_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = step_holonomic(&RobotState::default(), &Action::new(Vec2::new(1.0, 0.0), 0.0), &quiet(), &mut rng);
        assert!((s.vel - Vec2::new(0.1, 0.0)).norm() < 1e-15);
        assert!((s.pos - Vec2::new(0.01, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_force_keeps_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let start = RobotState {
            pos: Vec2::new(0.3, -0.2),
            theta: 1.0,
            vel: Vec2::new(0.05, 0.0),
            omega: 0.0,
        };
        let s = step_holonomic(&start, &Action::default(), &quiet(), &mut rng);
        assert_eq!(s.vel, Vec2::ZERO);
        assert_eq!(s.pos, start.pos);
        assert_eq!(s.theta, start.theta);
    }

    #[test]
    fn seeded_noise_is_replayable() {
        let p = DynParams {
            noise_std: 0.5,
            ..Default::default()
        };
        let a = Action::new(Vec2::new(0.4, -0.2), 0.1);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let s1 = step_holonomic(&RobotState::default(), &a, &p, &mut r1);
        let s2 = step_holonomic(&RobotState::default(), &a, &p, &mut r2);
        assert_eq!(s1, s2);

        let mut replay = ChaCha8Rng::seed_from_u64(9);
        let zx: f64 = replay.sample::<f64, _>(StandardNormal) * 0.5;
        let zy: f64 = replay.sample::<f64, _>(StandardNormal) * 0.5;
        assert_eq!(s1.vel.x, (0.4 + zx) / 1.0 * 0.1);
        assert_eq!(s1.vel.y, (-0.2 + zy) / 1.0 * 0.1);
    }

    #[test]
    fn unicycle_moves_along_heading() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = step_nonholonomic(&RobotState::default(), &Action::new(Vec2::new(1.0, 0.0), 0.0), &quiet(), &mut rng);
        assert!((s.pos - Vec2::new(0.01, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn unicycle_quarter_turn_in_place() {
        // ω Δ = τ Δ² / J = π/2 needs τ = (π/2) J / Δ², beyond the default bound.
        let p = DynParams {
            a_max: 200.0,
            ..quiet()
        };
        let tau = FRAC_PI_2 * p.inertia / (p.dt * p.dt);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = step_nonholonomic(&RobotState::default(), &Action::new(Vec2::ZERO, tau), &p, &mut rng);
        assert!((s.theta - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(s.pos, Vec2::ZERO);
    }

    #[test]
    fn unicycle_zero_action_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let start = RobotState::at(Vec2::new(0.2, 0.1), -2.0);
        let s = step_nonholonomic(&start, &Action::default(), &quiet(), &mut rng);
        assert_eq!(s, start);
    }

    #[test]
    fn command_inverts_holonomic_update() {
        let p = quiet();
        let a = velocity_to_command(DynamicsModel::Holonomic, Vec2::new(0.1, 0.0), 0.0, &RobotState::default(), &p);
        assert!((a.force - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        let z = velocity_to_command(DynamicsModel::Holonomic, Vec2::ZERO, 0.0, &RobotState::default(), &p);
        assert_eq!(z.force, Vec2::ZERO);
        let big = velocity_to_command(DynamicsModel::Holonomic, Vec2::new(0.3, 0.15), 0.0, &RobotState::default(), &p);
        assert!((big.force - Vec2::new(1.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn heading_stays_wrapped() {
        let p = DynParams {
            a_max: 500.0,
            ..quiet()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = RobotState::at(Vec2::ZERO, PI);
        for k in 0..500 {
            let tau = if k % 3 == 0 { 400.0 } else { -170.0 };
            s = step_nonholonomic(&s, &Action::new(Vec2::new(1.0, 0.0), tau), &p, &mut rng);
            assert!(s.theta > -PI && s.theta <= PI);
            assert!(s.vel.cross(s.heading()).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_variant_accumulates() {
        let p = DynParams {
            momentum: true,
            ..quiet()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Action::new(Vec2::new(1.0, 0.0), 0.0);
        let s1 = step_holonomic(&RobotState::default(), &a, &p, &mut rng);
        let s2 = step_holonomic(&s1, &a, &p, &mut rng);
        assert!((s2.vel.x - 0.2).abs() < 1e-15);
    }
}
