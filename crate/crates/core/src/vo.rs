//! Velocity obstacles in 2D velocity space and the safety projections built on
//! them.
//!
//! A [`Cone`] is the set of robot velocities whose relative motion towards a
//! disk-shaped body eventually brings the two bodies into contact. A
//! [`ConeSet`] is the union of the cones of every sensed body. Two projections
//! map an unsafe velocity back out of the union:
//!
//! * [`project_min`]: nearest safe velocity (hard guarantee, used at inference).
//! * [`project_sigmoid`]: direction-space shifted sigmoid over the blocked arc
//!   (smooth, used while training).

use crate::math::{wrap_angle, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::str::FromStr;

/// Outward displacement applied to projected velocities (m/s) so that the
/// membership test of the result is robustly false.
pub const PROJECTION_MARGIN: f64 = 1e-4;

/// Maximum number of re-projections when a sigmoid result lands in another
/// cone of the union.
pub const MAX_UNION_ITERATIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum VoError {
    #[error("bodies overlap: distance {distance} <= combined radius {combined_radius}")]
    Overlap { distance: f64, combined_radius: f64 },
    #[error("no safe velocity outside the velocity-obstacle union")]
    NoSafeVelocity,
}

/// A single velocity obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    apex: Vec2,
    axis: Vec2,
    half_angle: f64,
}

impl Cone {
    /// `axis` is normalized here; `half_angle` must lie in (0, π/2].
    pub fn new(apex: Vec2, axis: Vec2, half_angle: f64) -> Self {
        let axis = axis.normalized().expect("cone axis must be non-zero");
        debug_assert!(half_angle > 0.0 && half_angle <= FRAC_PI_2);
        Self {
            apex,
            axis,
            half_angle,
        }
    }

    pub fn apex(&self) -> Vec2 {
        self.apex
    }

    pub fn axis(&self) -> Vec2 {
        self.axis
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    /// Strict membership. The apex itself is outside: zero relative velocity
    /// never closes the gap between non-overlapping bodies.
    pub fn contains(&self, v: Vec2) -> bool {
        let w = v - self.apex;
        if w.norm_sq() == 0.0 {
            return false;
        }
        let angle = self.axis.cross(w).atan2(self.axis.dot(w)).abs();
        angle < self.half_angle
    }

    /// Signed angle of `v - apex` from the axis.
    pub fn offset_angle(&self, v: Vec2) -> f64 {
        let w = v - self.apex;
        self.axis.cross(w).atan2(self.axis.dot(w))
    }

    /// The two boundary rays as (direction, outward normal): counter-clockwise
    /// side first.
    pub fn boundary(&self) -> [(Vec2, Vec2); 2] {
        let left = self.axis.rotate(self.half_angle);
        let right = self.axis.rotate(-self.half_angle);
        [(left, left.perp()), (right, -right.perp())]
    }
}

/// Union of velocity obstacles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConeSet {
    cones: Vec<Cone>,
}

impl ConeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, cone: Cone) {
        self.cones.push(cone);
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn len(&self) -> usize {
        self.cones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cones.is_empty()
    }

    pub fn contains(&self, v: Vec2) -> bool {
        self.cones.iter().any(|c| c.contains(v))
    }

    pub fn first_containing(&self, v: Vec2) -> Option<usize> {
        self.cones.iter().position(|c| c.contains(v))
    }

    fn containing_except(&self, v: Vec2, skip: usize) -> Option<usize> {
        self.cones
            .iter()
            .enumerate()
            .position(|(i, c)| i != skip && c.contains(v))
    }
}

impl FromIterator<Cone> for ConeSet {
    fn from_iter<I: IntoIterator<Item = Cone>>(iter: I) -> Self {
        Self {
            cones: iter.into_iter().collect(),
        }
    }
}

/// Builds the velocity obstacle that a disk at `obs_pos` moving with
/// `obs_vel` induces on a robot at `robot_pos`.
pub fn compute_vo(
    robot_pos: Vec2,
    robot_radius: f64,
    obs_pos: Vec2,
    obs_vel: Vec2,
    obs_radius: f64,
) -> Result<Cone, VoError> {
    debug_assert!(robot_pos.is_finite() && obs_pos.is_finite());
    debug_assert!(robot_radius > 0.0 && obs_radius > 0.0);
    let offset = obs_pos - robot_pos;
    let distance = offset.norm();
    let combined_radius = robot_radius + obs_radius;
    if !(distance > combined_radius) {
        return Err(VoError::Overlap {
            distance,
            combined_radius,
        });
    }
    Ok(Cone {
        apex: obs_vel,
        axis: offset / distance,
        half_angle: (combined_radius / distance).asin(),
    })
}

/// Disk of reachable velocities a projection result must stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLimit {
    pub center: Vec2,
    pub radius: f64,
}

impl SpeedLimit {
    pub fn around_origin(radius: f64) -> Self {
        Self {
            center: Vec2::ZERO,
            radius,
        }
    }

    pub fn contains(&self, v: Vec2) -> bool {
        (v - self.center).norm() <= self.radius
    }
}

fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> impl Iterator<Item = f64> {
    let oc = origin - center;
    let b = dir.dot(oc);
    let disc = b * b - (oc.norm_sq() - radius * radius);
    let roots = if disc < 0.0 {
        [f64::NAN, f64::NAN]
    } else {
        let s = disc.sqrt();
        [-b - s, -b + s]
    };
    roots.into_iter().filter(|t| *t >= 0.0)
}

fn ray_ray(a1: Vec2, d1: Vec2, a2: Vec2, d2: Vec2) -> Option<Vec2> {
    let denom = d1.cross(d2);
    if denom.abs() < 1e-12 {
        return None;
    }
    let diff = a2 - a1;
    let s = diff.cross(d2) / denom;
    let t = diff.cross(d1) / denom;
    (s >= 0.0 && t >= 0.0).then(|| a1 + d1 * s)
}

fn min_projection_candidates(cs: &ConeSet, v: Vec2, limit: Option<SpeedLimit>) -> Vec<Vec2> {
    let m = PROJECTION_MARGIN;
    let mut out = Vec::with_capacity(8 * cs.len() + 4);
    out.push(Vec2::ZERO);
    let rays: Vec<(Vec2, Vec2, Vec2)> = cs
        .cones
        .iter()
        .flat_map(|c| c.boundary().map(|(d, n)| (c.apex, d, n)))
        .collect();
    for cone in &cs.cones {
        out.push(cone.apex);
    }
    for &(a, d, n) in &rays {
        let t = (v - a).dot(d);
        if t > 0.0 {
            out.push(a + d * t + n * m);
        }
        if let Some(l) = limit {
            for t in ray_circle(a, d, l.center, l.radius) {
                let p = a + d * t;
                let radial = (p - l.center).normalized().unwrap_or(Vec2::ZERO);
                out.push(p + n * m - radial * m);
            }
        }
    }
    for (i, &(a1, d1, n1)) in rays.iter().enumerate() {
        for &(a2, d2, n2) in &rays[i + 1..] {
            if let Some(p) = ray_ray(a1, d1, a2, d2) {
                let push = (n1 + n2).normalized().unwrap_or(n1);
                out.push(p + push * (2.0 * m));
            }
        }
    }
    if let Some(l) = limit {
        out.push(l.center);
        if let Some(dir) = (v - l.center).normalized() {
            out.push(l.center + dir * (l.radius * (1.0 - 1e-9)));
        }
    }
    out
}

fn nearest_safe(cs: &ConeSet, v: Vec2, limit: Option<SpeedLimit>) -> Result<Vec2, VoError> {
    min_projection_candidates(cs, v, limit)
        .into_iter()
        .filter(|p| p.is_finite() && !cs.contains(*p))
        .filter(|p| limit.is_none_or(|l| l.contains(*p)))
        .min_by(|a, b| (*a - v).norm_sq().total_cmp(&(*b - v).norm_sq()))
        .ok_or(VoError::NoSafeVelocity)
}

/// Nearest velocity outside every cone. Identity on the safe set.
pub fn project_min(cs: &ConeSet, v: Vec2) -> Result<Vec2, VoError> {
    if !cs.contains(v) {
        return Ok(v);
    }
    nearest_safe(cs, v, None)
}

/// [`project_min`] restricted to velocities inside `limit`.
pub fn project_min_within(cs: &ConeSet, v: Vec2, limit: SpeedLimit) -> Result<Vec2, VoError> {
    if !cs.contains(v) && limit.contains(v) {
        return Ok(v);
    }
    nearest_safe(cs, v, Some(limit))
}

/// Directions (at a fixed speed) blocked by one cone: the arc of the speed
/// circle that contains the candidate velocity. `upper` is reached by turning
/// counter-clockwise from the candidate, `lower` clockwise; both are unwrapped
/// relative to the candidate's angle so `lower < theta < upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockedArc {
    pub lower: f64,
    pub upper: f64,
}

impl BlockedArc {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn span(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Returns `None` when `v` is outside the cone, has zero speed, or the whole
/// speed circle lies inside the cone.
pub fn blocked_arc(cone: &Cone, v: Vec2) -> Option<BlockedArc> {
    let speed = v.norm();
    if speed == 0.0 || !cone.contains(v) {
        return None;
    }
    let theta = v.angle();
    let mut ccw = f64::INFINITY;
    let mut cw = f64::INFINITY;
    for (d, _) in cone.boundary() {
        for t in ray_circle(cone.apex, d, Vec2::ZERO, speed) {
            let phi = (cone.apex + d * t).angle();
            let delta = (phi - theta).rem_euclid(TAU);
            if delta > 0.0 {
                ccw = ccw.min(delta);
                cw = cw.min(TAU - delta);
            }
        }
    }
    (ccw.is_finite() && cw.is_finite()).then_some(BlockedArc {
        lower: theta - cw,
        upper: theta + ccw,
    })
}

/// Shifted sigmoid over a blocked arc:
/// `θ' = (θ_i − θ_k) / (1 + exp(−c (θ − θ_j))) + θ_k` with `θ_i` the upper
/// end, `θ_k` the lower end and `θ_j` the midpoint.
pub fn sigmoid_angle(theta: f64, arc: BlockedArc, c: f64) -> f64 {
    let s = 1.0 / (1.0 + (-c * (theta - arc.mid())).exp());
    (arc.upper - arc.lower) * s + arc.lower
}

fn sigmoid_in_cone(cone: &Cone, v: Vec2, c: f64) -> Option<Vec2> {
    let arc = blocked_arc(cone, v)?;
    let theta = sigmoid_angle(v.angle(), arc, c);
    Some(Vec2::from_angle(wrap_angle(theta)) * v.norm())
}

/// Smooth projection: rotates the candidate along its speed circle with the
/// shifted sigmoid of the arc blocked by the cone containing it. Speed is
/// preserved. When the result lands in another cone the projection is repeated
/// for that cone, up to [`MAX_UNION_ITERATIONS`] times, before falling back to
/// [`project_min`].
pub fn project_sigmoid(cs: &ConeSet, v: Vec2, c: f64) -> Result<Vec2, VoError> {
    debug_assert!(c > 0.0);
    let Some(mut idx) = cs.first_containing(v) else {
        return Ok(v);
    };
    let mut current = v;
    for _ in 0..MAX_UNION_ITERATIONS {
        let Some(next) = sigmoid_in_cone(&cs.cones[idx], current, c) else {
            return project_min(cs, v);
        };
        current = next;
        match cs.containing_except(current, idx) {
            None => return Ok(current),
            Some(j) => idx = j,
        }
    }
    project_min(cs, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SafetyMode {
    /// Nearest safe velocity.
    #[default]
    Min,
    /// Shifted sigmoid projection.
    Sigmoid,
    /// Safety layer disabled.
    Off,
}

impl fmt::Display for SafetyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SafetyMode::Min => "min",
            SafetyMode::Sigmoid => "sigmoid",
            SafetyMode::Off => "off",
        })
    }
}

impl FromStr for SafetyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(SafetyMode::Min),
            "sigmoid" => Ok(SafetyMode::Sigmoid),
            "off" => Ok(SafetyMode::Off),
            other => Err(format!("unknown safety mode `{other}` (expected min, sigmoid or off)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeVelocity {
    pub velocity: Vec2,
    /// Whether a projection was applied.
    pub projected: bool,
}

/// Applies the safety layer: identity on the safe set, otherwise the
/// projection selected by `mode`. `limit` only constrains the min projection.
pub fn safe_velocity(
    cs: &ConeSet,
    v: Vec2,
    mode: SafetyMode,
    c: f64,
    limit: Option<SpeedLimit>,
) -> Result<SafeVelocity, VoError> {
    if mode == SafetyMode::Off || !cs.contains(v) {
        return Ok(SafeVelocity {
            velocity: v,
            projected: false,
        });
    }
    let velocity = match mode {
        SafetyMode::Min => match limit {
            Some(l) => nearest_safe(cs, v, Some(l))?,
            None => nearest_safe(cs, v, None)?,
        },
        SafetyMode::Sigmoid => project_sigmoid(cs, v, c)?,
        SafetyMode::Off => unreachable!(),
    };
    Ok(SafeVelocity {
        velocity,
        projected: true,
    })
}

/// Safe signed speed along a fixed unit direction, nearest to `target`, with
/// the speed restricted to `[lo, hi]`. Used for robots that can only move
/// along their heading.
pub fn safe_speed_along(cs: &ConeSet, dir: Vec2, target: f64, lo: f64, hi: f64) -> Option<f64> {
    let m = PROJECTION_MARGIN;
    let mut candidates = vec![target.clamp(lo, hi), lo, hi, 0.0];
    for cone in &cs.cones {
        for (d, _) in cone.boundary() {
            let denom = dir.cross(d);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = cone.apex.cross(dir) / denom;
            if t < 0.0 {
                continue;
            }
            let s = cone.apex.cross(d) / denom;
            candidates.extend([s - m, s + m]);
        }
        let s_apex = cone.apex.dot(dir);
        if (cone.apex - dir * s_apex).norm() < 1e-12 {
            candidates.push(s_apex);
        }
    }
    candidates
        .into_iter()
        .filter(|s| s.is_finite() && *s >= lo && *s <= hi && !cs.contains(dir * *s))
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_cone() -> Cone {
        compute_vo(Vec2::ZERO, 0.05, Vec2::new(0.5, 0.0), Vec2::ZERO, 0.12).unwrap()
    }

    /// Simulates relative motion and reports whether the bodies touch.
    fn rollout_collides(robot: Vec2, obs: Vec2, rel_vel: Vec2, radius: f64) -> bool {
        let dt = 1e-3;
        let steps = (100.0 / dt) as usize;
        (0..=steps).any(|k| (robot + rel_vel * (k as f64 * dt) - obs).norm() <= radius)
    }

    #[test]
    fn static_cone_geometry() {
        let c = static_cone();
        assert_eq!(c.apex(), Vec2::ZERO);
        assert!((c.axis() - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        assert!((c.half_angle() - 0.34_f64.asin()).abs() < 1e-15);
        assert!((c.half_angle() - 0.3469).abs() < 1e-4);
    }

    #[test]
    fn half_angle_matches_ray_sampling() {
        // Largest angle whose ray still meets the disk, by dense sampling.
        let n = 200_000;
        let mut widest = 0.0_f64;
        for k in 0..n {
            let a = k as f64 / n as f64 * FRAC_PI_2;
            let dir = Vec2::from_angle(a);
            let t = Vec2::new(0.5, 0.0).dot(dir);
            if (dir * t - Vec2::new(0.5, 0.0)).norm() <= 0.17 {
                widest = a;
            }
        }
        assert!((widest - static_cone().half_angle()).abs() < 1e-5);
    }

    #[test]
    fn overlapping_bodies_have_no_cone() {
        let err = compute_vo(Vec2::ZERO, 0.05, Vec2::ZERO, Vec2::ZERO, 0.12).unwrap_err();
        assert!(matches!(err, VoError::Overlap { .. }));
        // Exactly touching bodies count as overlapping.
        assert!(compute_vo(Vec2::ZERO, 0.25, Vec2::new(0.75, 0.0), Vec2::ZERO, 0.5).is_err());
    }

    #[test]
    fn moving_obstacle_translates_cone() {
        let moving = compute_vo(Vec2::ZERO, 0.05, Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0), 0.12).unwrap();
        let fixed = static_cone();
        assert_eq!(moving.apex(), Vec2::new(0.0, 1.0));
        assert_eq!(moving.axis(), fixed.axis());
        assert_eq!(moving.half_angle(), fixed.half_angle());
        for v in [Vec2::new(1.0, 1.0), Vec2::new(0.3, 1.2), Vec2::new(1.0, 0.0), Vec2::new(0.5, 1.05)] {
            let oracle = rollout_collides(Vec2::ZERO, Vec2::new(0.5, 0.0), v - Vec2::new(0.0, 1.0), 0.17);
            assert_eq!(moving.contains(v), oracle, "v = {v:?}");
        }
    }

    #[test]
    fn membership_examples() {
        let cs: ConeSet = [static_cone()].into_iter().collect();
        assert!(cs.contains(Vec2::new(1.0, 0.0)));
        assert!(rollout_collides(Vec2::ZERO, Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0), 0.17));
        assert!(!cs.contains(Vec2::new(0.0, 1.0)));
        assert!(!rollout_collides(Vec2::ZERO, Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0), 0.17));
        assert!(!cs.contains(Vec2::ZERO));
    }

    #[test]
    fn min_projection_onto_boundary_ray() {
        let cs: ConeSet = [static_cone()].into_iter().collect();
        let v = Vec2::new(1.0, 0.0);
        let p = project_min(&cs, v).unwrap();
        let beta = static_cone().half_angle();
        let foot = Vec2::from_angle(beta) * beta.cos();
        assert!((foot - Vec2::new(0.8844, 0.3198)).norm() < 1e-4);
        // Either side is equally near; result sits one margin outside.
        let mirrored = Vec2::new(foot.x, -foot.y);
        let d = (p - foot).norm().min((p - mirrored).norm());
        assert!((d - PROJECTION_MARGIN).abs() < 1e-12);
        assert!(!cs.contains(p));

        // Dense sampling of safe velocities finds nothing nearer.
        let mut best = f64::INFINITY;
        for i in 0..=500 {
            for j in 0..=800 {
                let w = Vec2::new(0.5 + i as f64 * 0.001, -0.4 + j as f64 * 0.001);
                if !cs.contains(w) {
                    best = best.min((w - v).norm());
                }
            }
        }
        assert!((p - v).norm() <= best + PROJECTION_MARGIN + 1e-9);
        assert!((p - v).norm() >= best - 2e-3);
    }

    #[test]
    fn min_projection_identity_on_safe_set() {
        let cs: ConeSet = [static_cone()].into_iter().collect();
        let v = Vec2::new(0.0, 1.0);
        assert_eq!(project_min(&cs, v).unwrap(), v);
        let empty = ConeSet::new();
        assert_eq!(project_min(&empty, Vec2::new(3.0, -2.0)).unwrap(), Vec2::new(3.0, -2.0));
    }

    #[test]
    fn bounded_projection_stays_inside_limit() {
        let moving = compute_vo(Vec2::ZERO, 0.06, Vec2::new(0.15, 0.0), Vec2::new(-0.05, 0.0), 0.05).unwrap();
        let cs: ConeSet = [moving].into_iter().collect();
        let limit = SpeedLimit::around_origin(0.1);
        let v = Vec2::new(0.08, 0.01);
        assert!(cs.contains(v));
        let p = project_min_within(&cs, v, limit).unwrap();
        assert!(!cs.contains(p));
        assert!(limit.contains(p));
    }

    #[test]
    fn union_covering_everything_reports_no_safe_velocity() {
        // Three moving neighbours whose cones, intersected with a small speed
        // disk, leave nothing free.
        let mut cs = ConeSet::new();
        for k in 0..3 {
            let dir = Vec2::from_angle(k as f64 * TAU / 3.0);
            cs.push(Cone::new(-dir * 0.5, dir, FRAC_PI_2));
        }
        let r = project_min_within(&cs, Vec2::new(0.01, 0.0), SpeedLimit::around_origin(0.1));
        assert_eq!(r, Err(VoError::NoSafeVelocity));
    }

    #[test]
    fn sigmoid_midpoint_and_limits() {
        let arc = BlockedArc {
            lower: -0.3,
            upper: 0.4,
        };
        assert!((sigmoid_angle(arc.mid(), arc, 10.0) - 0.05).abs() < 1e-15);
        // Approaching the upper end from inside with a steep sigmoid.
        let near = sigmoid_angle(arc.upper - 1e-9, arc, 50.0);
        let expected = arc.upper - arc.span() / (1.0 + (50.0 * arc.span() / 2.0).exp());
        assert!((near - expected).abs() < 1e-12);
        assert!((near - arc.upper).abs() < 1e-6);
        let low = sigmoid_angle(arc.lower + 1e-9, arc, 50.0);
        assert!((low - arc.lower).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_arc_of_static_cone_is_the_cone_itself() {
        let cone = static_cone();
        let arc = blocked_arc(&cone, Vec2::new(0.3, 0.05)).unwrap();
        assert!((arc.upper - cone.half_angle()).abs() < 1e-12);
        assert!((arc.lower + cone.half_angle()).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_projection_preserves_speed_and_is_identity_outside() {
        let cs: ConeSet = [static_cone()].into_iter().collect();
        let v = Vec2::new(0.1, 0.01);
        let p = project_sigmoid(&cs, v, 10.0).unwrap();
        assert!((p.norm() - v.norm()).abs() < 1e-15);
        let outside = Vec2::new(-0.1, 0.0);
        assert_eq!(project_sigmoid(&cs, outside, 10.0).unwrap(), outside);
    }

    #[test]
    fn safe_velocity_dispatch() {
        let cs: ConeSet = [static_cone()].into_iter().collect();
        let safe = Vec2::new(0.0, 0.1);
        assert_eq!(
            safe_velocity(&cs, safe, SafetyMode::Min, 10.0, None).unwrap(),
            SafeVelocity { velocity: safe, projected: false }
        );
        let bad = Vec2::new(0.1, 0.0);
        let min = safe_velocity(&cs, bad, SafetyMode::Min, 10.0, None).unwrap();
        assert!(min.projected);
        assert_eq!(min.velocity, project_min(&cs, bad).unwrap());
        let sig = safe_velocity(&cs, bad, SafetyMode::Sigmoid, 10.0, None).unwrap();
        assert!(sig.projected);
        assert_eq!(sig.velocity, project_sigmoid(&cs, bad, 10.0).unwrap());
        let off = safe_velocity(&cs, bad, SafetyMode::Off, 10.0, None).unwrap();
        assert_eq!(off, SafeVelocity { velocity: bad, projected: false });
    }

    #[test]
    fn speed_along_heading() {
        let cs: ConeSet = [static_cone()].into_iter().collect();
        let dir = Vec2::new(1.0, 0.0);
        // Forward is blocked, reverse and standstill are not.
        let s = safe_speed_along(&cs, dir, 0.1, -0.1, 0.1).unwrap();
        assert_eq!(s, 0.0);
        let up = Vec2::new(0.0, 1.0);
        assert_eq!(safe_speed_along(&cs, up, 0.1, -0.1, 0.1), Some(0.1));
    }

    #[test]
    fn safety_mode_parsing() {
        assert_eq!("sigmoid".parse::<SafetyMode>().unwrap(), SafetyMode::Sigmoid);
        assert!("bogus".parse::<SafetyMode>().is_err());
        assert_eq!(SafetyMode::Off.to_string(), "off");
    }
}
