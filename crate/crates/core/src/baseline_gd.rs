//! Deterministic gradient-descent controller on the same local energy the
//! sampler uses. It moves each robot's velocity straight downhill, so it
//! settles in whatever local minimum is nearest.

use crate::potential::LocalView;
use crate::vec2::Vec2;

/// Central-difference gradient of `energy` at `v` with component step `h`.
/// A component whose two probes are not both finite is set to zero.
pub fn central_gradient<E: Fn(Vec2) -> f64>(energy: E, v: Vec2, h: f64) -> Vec2 {
    let diff = |dir: Vec2| {
        let plus = energy(v + dir * h);
        let minus = energy(v - dir * h);
        let g = (plus - minus) / (2.0 * h);
        if g.is_finite() {
            g
        } else {
            0.0
        }
    };
    Vec2::new(diff(Vec2::new(1.0, 0.0)), diff(Vec2::new(0.0, 1.0)))
}

/// One descent step `v − μ·∇H(v)`, clamped to the speed limit.
pub fn gd_velocity_with<E: Fn(Vec2) -> f64>(velocity: Vec2, energy: E, v_max: f64, step_size: f64, h: f64) -> Vec2 {
    let grad = central_gradient(energy, velocity, h);
    (velocity - grad * step_size).clamp_norm(v_max)
}

/// [`gd_velocity_with`] on a robot's local view. `diff_step` is relative to
/// `v_max`.
pub fn gd_velocity(velocity: Vec2, view: &LocalView<'_>, step_size: f64, diff_step: f64) -> Vec2 {
    gd_velocity_with(velocity, |v| view.energy(v), view.v_max, step_size, diff_step * view.v_max)
}
