//! Energy terms of the local Gibbs potential.
//!
//! Every robot evaluates its energy for a *candidate* velocity using only
//! what it senses: same- and cross-type neighbours, nearby obstacle points,
//! and the virtual attractors aimed at its type. Pair distances are taken
//! between predicted positions one tick ahead, so the candidate velocity
//! enters the pair terms through the motion model.
//!
//! The total is
//!
//! ```text
//! H(v̄) = Σ_obstacles Φ(|q̄ − o|, C_obs) + Σ_attractors Φ(|q̄ − a|, C_att)
//!      + Σ_neighbours Φ(|q̄ − q̄_j|, C(i, j))
//!      + ½ m |V(v̄)|² + ½ m (v_max − |v̄|)²
//! ```
//!
//! where `Φ` is the Coulomb-Buckingham pair energy and `V` the resultant of
//! same-type neighbour velocities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KineticMode, PotentialParams, SignMode, VirtualAttractor};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Robot,
    ObstaclePoint,
    Attractor,
}

/// One sensed entity, relative to the observing robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborObservation {
    pub relative_position: Vec2,
    pub velocity: Vec2,
    pub type_label: usize,
    pub kind: ObservationKind,
}

impl NeighborObservation {
    pub fn robot(relative_position: Vec2, velocity: Vec2, type_label: usize) -> Self {
        NeighborObservation {
            relative_position,
            velocity,
            type_label,
            kind: ObservationKind::Robot,
        }
    }

    pub fn obstacle(relative_position: Vec2) -> Self {
        NeighborObservation {
            relative_position,
            velocity: Vec2::ZERO,
            type_label: usize::MAX,
            kind: ObservationKind::ObstaclePoint,
        }
    }
}

/// Exp-6 (Buckingham) pair energy plus a Coulomb term `k_e·C/r`.
///
/// Fails for `r <= 0`; see [`pair_energy`] for the floored variant used in
/// the simulation.
pub fn coulomb_buckingham(r: f64, charge_product: f64, params: &PotentialParams) -> Result<f64> {
    if r.is_nan() || r <= 0.0 {
        return Err(Error::NonPositiveDistance(r));
    }
    Ok(raw_pair_energy(r, charge_product, params))
}

#[inline]
fn raw_pair_energy(r: f64, charge_product: f64, p: &PotentialParams) -> f64 {
    let a = p.alpha;
    let s = p.r0 / r;
    let s6 = s * s * s;
    let s6 = s6 * s6;
    let buckingham = p.epsilon / (a - 6.0) * (6.0 * (a * (1.0 - r / p.r0)).exp() - a * s6);
    buckingham + p.coulomb_coupling * charge_product / r
}

/// [`coulomb_buckingham`] with distances below `d_min` raised to `d_min`.
#[inline]
pub fn pair_energy(r: f64, charge_product: f64, params: &PotentialParams) -> f64 {
    let r = if r > params.d_min { r } else { params.d_min };
    raw_pair_energy(r, charge_product, params)
}

/// Signed charge product between two robot types.
///
/// `Literal` is positive for the same group and negative otherwise;
/// `Segregating` is its negation, so that same-type pairs attract and
/// cross-type pairs repel.
pub fn charge_product(type_i: usize, type_j: usize, params: &PotentialParams) -> f64 {
    let magnitude = (params.charge(type_i) * params.charge(type_j)).abs();
    let same = type_i == type_j;
    match (params.sign_mode, same) {
        (SignMode::Literal, true) | (SignMode::Segregating, false) => magnitude,
        (SignMode::Literal, false) | (SignMode::Segregating, true) => -magnitude,
    }
}

/// Always positive: obstacles repel under either sign mode.
pub fn obstacle_charge_product(own_type: usize, params: &PotentialParams) -> f64 {
    (params.charge(own_type) * params.obstacle_charge).abs()
}

/// Always non-positive: attractors pull robots of their target type.
pub fn attractor_charge_product(own_type: usize, attractor: &VirtualAttractor, params: &PotentialParams) -> f64 {
    -(params.charge(own_type) * attractor.charge).abs()
}

/// Resultant velocity of same-type robot neighbours.
pub fn resultant_relative_velocity(
    candidate: Vec2,
    neighbors: &[NeighborObservation],
    own_type: usize,
    mode: KineticMode,
) -> Vec2 {
    neighbors
        .iter()
        .filter(|n| n.kind == ObservationKind::Robot && n.type_label == own_type)
        .map(|n| match mode {
            KineticMode::Relative => n.velocity - candidate,
            KineticMode::Literal => n.velocity,
        })
        .sum()
}

#[inline]
pub fn kinetic_energy(resultant: Vec2, mass: f64) -> f64 {
    0.5 * mass * resultant.norm_sq()
}

/// Penalty on the speed deficit `v_max − |v̄|`.
#[inline]
pub fn speed_incentive(candidate: Vec2, v_max: f64, mass: f64) -> f64 {
    let deficit = v_max - candidate.norm();
    0.5 * mass * deficit * deficit
}

/// Singleton energy: repulsion from sensed obstacle points plus attraction
/// to the attractors targeting `own_type`.
pub fn obstacle_term(
    position: Vec2,
    candidate: Vec2,
    obstacles: &[NeighborObservation],
    attractors: &[VirtualAttractor],
    own_type: usize,
    params: &PotentialParams,
    dt: f64,
) -> f64 {
    let step = candidate * dt;
    let c_obs = obstacle_charge_product(own_type, params);
    let mut e: f64 = obstacles
        .iter()
        .filter(|o| o.kind == ObservationKind::ObstaclePoint)
        .map(|o| pair_energy((step - o.relative_position).norm(), c_obs, params))
        .sum();
    let predicted = position + step;
    for a in attractors.iter().filter(|a| a.target_type == own_type) {
        let c = attractor_charge_product(own_type, a, params);
        e += pair_energy(predicted.distance(a.position), c, params);
    }
    e
}

/// Everything a robot knows when scoring candidate velocities.
#[derive(Debug, Clone, Copy)]
pub struct LocalView<'a> {
    /// Absolute position; only attractors need it.
    pub position: Vec2,
    pub own_type: usize,
    pub robots: &'a [NeighborObservation],
    pub obstacles: &'a [NeighborObservation],
    pub attractors: &'a [VirtualAttractor],
    pub params: &'a PotentialParams,
    pub v_max: f64,
    pub dt: f64,
}

impl LocalView<'_> {
    /// Local potential energy of `candidate`.
    pub fn energy(&self, candidate: Vec2) -> f64 {
        hamiltonian(self, candidate)
    }
}

/// Sum of the singleton, pairwise, consensus and speed terms.
pub fn hamiltonian(view: &LocalView<'_>, candidate: Vec2) -> f64 {
    let p = view.params;
    let dt = view.dt;
    let step = candidate * dt;
    let mut e = obstacle_term(
        view.position,
        candidate,
        view.obstacles,
        view.attractors,
        view.own_type,
        p,
        dt,
    );
    let mut resultant = Vec2::ZERO;
    for n in view.robots.iter().filter(|n| n.kind == ObservationKind::Robot) {
        let predicted_gap = step - (n.relative_position + n.velocity * dt);
        e += pair_energy(predicted_gap.norm(), charge_product(view.own_type, n.type_label, p), p);
        if n.type_label == view.own_type {
            resultant += match p.kinetic_mode {
                KineticMode::Relative => n.velocity - candidate,
                KineticMode::Literal => n.velocity,
            };
        }
    }
    e += kinetic_energy(resultant, p.mass);
    if p.speed_incentive {
        e += speed_incentive(candidate, view.v_max, p.mass);
    }
    e
}

/// Samples the pair energy at `n` evenly spaced distances in `(lo, hi]`.
pub fn sample_pair_curve(charge_product: f64, params: &PotentialParams, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|k| {
            let r = lo + (hi - lo) * k as f64 / n as f64;
            (r, pair_energy(r, charge_product, params))
        })
        .collect()
}
