//! Per-robot Metropolis update of the velocity, and the exact local Gibbs
//! distribution over a finite velocity grid that it approximates.
//!
//! Each update runs a short chain `V⁽⁰⁾ … V⁽ᴵ⁾` started at the robot's
//! current velocity. A proposal `v̄` is accepted when it lowers the energy,
//! or otherwise with probability `exp(−ΔE/T)`. Proposals outside the speed
//! limit are rejected without evaluating the energy. The new velocity is
//! the mean of the chain after burn-in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProposalCenter, SamplerParams};
use crate::potential::LocalView;
use crate::vec2::Vec2;

/// Private random stream of one robot at one tick.
///
/// The stream is a pure function of `(seed, robot, tick)`, so results do
/// not depend on the order in which robots are updated.
pub fn robot_stream(seed: u64, robot: usize, tick: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    rng.set_stream(robot as u64);
    // 2^32 words per tick is far more than one update consumes.
    rng.set_word_pos((tick as u128) << 32);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Metropolis acceptance test for an energy change `delta` drawn against
/// the uniform variate `u`.
#[inline]
pub fn accepts(delta: f64, temperature: f64, u: f64) -> bool {
    delta < 0.0 || u < (-delta / temperature).exp()
}

/// Source of candidate velocities.
pub trait Proposal {
    /// Draws a candidate around `center`. `None` means the move is rejected
    /// outright and the chain stays put.
    fn propose<R: Rng + ?Sized>(&self, center: Vec2, rng: &mut R) -> Option<Vec2>;
}

/// Bivariate normal proposal with a fixed covariance.
#[derive(Debug, Clone, Copy)]
pub struct GaussianProposal {
    // lower Cholesky factor
    l11: f64,
    l21: f64,
    l22: f64,
}

impl GaussianProposal {
    pub fn new(covariance: [[f64; 2]; 2]) -> Self {
        let [[a, b], [_, d]] = covariance;
        let l11 = a.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
        let l22 = (d - l21 * l21).max(0.0).sqrt();
        GaussianProposal { l11, l21, l22 }
    }
}

impl Proposal for GaussianProposal {
    fn propose<R: Rng + ?Sized>(&self, center: Vec2, rng: &mut R) -> Option<Vec2> {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        Some(center + Vec2::new(self.l11 * z1, self.l21 * z1 + self.l22 * z2))
    }
}

/// Square velocity lattice `{(i·h, j·h) : |i|, |j| ≤ half}`.
///
/// Doubles as a symmetric random-walk proposal: from a lattice point it
/// jumps uniformly to one of the other points within `reach` steps in each
/// axis; jumps leaving the lattice are rejected.
#[derive(Debug, Clone, Copy)]
pub struct VelocityLattice {
    pub spacing: f64,
    pub half: i32,
    pub reach: i32,
}

impl VelocityLattice {
    pub fn points(&self) -> Vec<Vec2> {
        let h = self.half;
        (-h..=h)
            .flat_map(|i| (-h..=h).map(move |j| (i, j)))
            .map(|(i, j)| Vec2::new(i as f64 * self.spacing, j as f64 * self.spacing))
            .collect()
    }

    /// Index of `v` in [`points`](Self::points), if `v` is (numerically) on
    /// the lattice.
    pub fn index_of(&self, v: Vec2) -> Option<usize> {
        let (i, j) = self.coords(v);
        let h = self.half;
        ((-h..=h).contains(&i) && (-h..=h).contains(&j)).then(|| ((i + h) * (2 * h + 1) + (j + h)) as usize)
    }

    fn coords(&self, v: Vec2) -> (i32, i32) {
        ((v.x / self.spacing).round() as i32, (v.y / self.spacing).round() as i32)
    }
}

impl Proposal for VelocityLattice {
    fn propose<R: Rng + ?Sized>(&self, center: Vec2, rng: &mut R) -> Option<Vec2> {
        let (i, j) = self.coords(center);
        let side = 2 * self.reach + 1;
        // uniform over the (side² − 1) offsets other than (0, 0)
        let mut k = rng.random_range(0..side * side - 1);
        if k >= (side * side) / 2 {
            k += 1;
        }
        let (ni, nj) = (i + k / side - self.reach, j + k % side - self.reach);
        let h = self.half;
        ((-h..=h).contains(&ni) && (-h..=h).contains(&nj))
            .then(|| Vec2::new(ni as f64 * self.spacing, nj as f64 * self.spacing))
    }
}

/// Full record of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub velocities: Vec<Vec2>,
    pub energies: Vec<f64>,
    pub acceptance_count: usize,
}

impl ChainTrace {
    /// Mean of `V⁽q⁾ … V⁽ᴵ⁾`.
    pub fn burn_in_mean(&self, burn_in: usize) -> Vec2 {
        let tail = &self.velocities[burn_in..];
        tail.iter().copied().sum::<Vec2>() / tail.len() as f64
    }
}

/// Runs `steps` Metropolis rounds from `start`.
///
/// `energy` scores candidates, `proposal` draws them around either `start`
/// or the current chain state, and candidates faster than `v_max` are
/// rejected. Non-finite candidate energies are rejected too.
#[allow(clippy::too_many_arguments)]
pub fn run_chain<E, P, R>(
    start: Vec2,
    energy: E,
    proposal: &P,
    center: ProposalCenter,
    v_max: f64,
    temperature: f64,
    steps: usize,
    rng: &mut R,
) -> ChainTrace
where
    E: Fn(Vec2) -> f64,
    P: Proposal,
    R: Rng + ?Sized,
{
    let mut trace = ChainTrace {
        velocities: Vec::with_capacity(steps + 1),
        energies: Vec::with_capacity(steps + 1),
        acceptance_count: 0,
    };
    chain(start, &energy, proposal, center, v_max, temperature, steps, rng, |v, u, accepted| {
        trace.velocities.push(v);
        trace.energies.push(u);
        trace.acceptance_count += accepted as usize;
    });
    trace
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn chain<E, P, R, S>(
    start: Vec2,
    energy: &E,
    proposal: &P,
    center: ProposalCenter,
    v_max: f64,
    temperature: f64,
    steps: usize,
    rng: &mut R,
    mut sink: S,
) where
    E: Fn(Vec2) -> f64,
    P: Proposal,
    R: Rng + ?Sized,
    S: FnMut(Vec2, f64, bool),
{
    let mut v = start;
    let mut u = energy(start);
    if !u.is_finite() {
        // any finite candidate improves on an undefined start
        u = f64::INFINITY;
    }
    sink(v, u, false);
    for _ in 0..steps {
        let c = match center {
            ProposalCenter::PreviousVelocity => start,
            ProposalCenter::ChainState => v,
        };
        let r: f64 = rng.random();
        let accepted = match proposal.propose(c, rng) {
            Some(cand) if cand.norm() <= v_max => {
                let e = energy(cand);
                if e.is_finite() && accepts(e - u, temperature, r) {
                    v = cand;
                    u = e;
                    true
                } else {
                    false
                }
            }
            _ => false,
        };
        sink(v, u, accepted);
    }
}

/// New velocity for one robot: the post-burn-in mean of a Gaussian-proposal
/// Metropolis chain on `view`'s energy, projected back onto the speed limit.
pub fn metropolis_update<R: Rng + ?Sized>(
    velocity: Vec2,
    view: &LocalView<'_>,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<Vec2> {
    metropolis_update_with(velocity, |v| view.energy(v), view.v_max, params, rng)
}

/// [`metropolis_update`] for an arbitrary energy function.
pub fn metropolis_update_with<E, R>(
    velocity: Vec2,
    energy: E,
    v_max: f64,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<Vec2>
where
    E: Fn(Vec2) -> f64,
    R: Rng + ?Sized,
{
    if params.burn_in >= params.iterations {
        return Err(Error::InvalidConfig(vec![format!(
            "sampler.burn_in ({}) must be below sampler.iterations ({})",
            params.burn_in, params.iterations
        )]));
    }
    let proposal = GaussianProposal::new(params.covariance(v_max));
    // mean taken as offsets from V⁽q⁾ so a chain that never moves returns
    // its start bit-for-bit
    let mut k = 0usize;
    let mut anchor = Vec2::ZERO;
    let mut sum = Vec2::ZERO;
    chain(
        velocity,
        &energy,
        &proposal,
        params.proposal_center,
        v_max,
        params.temperature,
        params.iterations,
        rng,
        |v, _, _| {
            if k == params.burn_in {
                anchor = v;
            } else if k > params.burn_in {
                sum += v - anchor;
            }
            k += 1;
        },
    );
    let mean = anchor + sum / (params.iterations - params.burn_in + 1) as f64;
    Ok(mean.clamp_norm(v_max))
}

/// Normalized Gibbs weights `exp(−E/T) / Σ exp(−E/T)`.
pub fn gibbs_pmf(energies: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - min) / temperature).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Exact local Gibbs distribution of one robot's velocity over `grid`.
pub fn gibbs_local_pmf(view: &LocalView<'_>, grid: &[Vec2], temperature: f64) -> Result<Vec<f64>> {
    if let Some(z) = grid.iter().find(|z| z.norm() > view.v_max) {
        return Err(Error::InvalidConfig(vec![format!(
            "grid velocity ({}, {}) exceeds v_max {}",
            z.x, z.y, view.v_max
        )]));
    }
    let energies: Vec<f64> = grid.iter().map(|&z| view.energy(z)).collect();
    gibbs_pmf(&energies, temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PotentialParams;
    use crate::potential::NeighborObservation;
    use approx::assert_relative_eq;

    #[test]
    fn downhill_always_accepted() {
        for u in [0.0, 0.5, 0.999_999] {
            assert!(accepts(-0.5, 1.0, u));
        }
    }

    #[test]
    fn uphill_acceptance_threshold() {
        let threshold = (-0.7f64).exp();
        assert!((threshold - 0.4966).abs() < 1e-4);
        assert!(accepts(0.7, 1.0, 0.3));
        assert!(!accepts(0.7, 1.0, 0.6));
    }

    #[test]
    fn two_point_pmf() {
        let p = gibbs_pmf(&[0.0, 2f64.ln()], 1.0).unwrap();
        assert_relative_eq!(p[0], 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(p[1], 1.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn pmf_errors_and_shift_invariance() {
        assert!(matches!(gibbs_pmf(&[], 1.0), Err(Error::EmptyGrid)));
        let e = [0.3, -1.2, 4.0, 0.0];
        let shifted: Vec<f64> = e.iter().map(|x| x + 17.5).collect();
        let a = gibbs_pmf(&e, 0.7).unwrap();
        let b = gibbs_pmf(&shifted, 0.7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_robot_pmf_is_uniform_without_speed_term() {
        let p = PotentialParams {
            speed_incentive: false,
            ..PotentialParams::default()
        };
        let view = LocalView {
            position: Vec2::new(5.0, 5.0),
            own_type: 0,
            robots: &[],
            obstacles: &[],
            attractors: &[],
            params: &p,
            v_max: 1.0,
            dt: 0.02,
        };
        let lattice = VelocityLattice {
            spacing: 0.17,
            half: 4,
            reach: 1,
        };
        let pmf = gibbs_local_pmf(&view, &lattice.points(), 1.0).unwrap();
        for x in &pmf {
            assert_relative_eq!(*x, 1.0 / 81.0, max_relative = 1e-12);
        }
        let outside = [Vec2::new(0.9, 0.9)];
        assert!(gibbs_local_pmf(&view, &outside, 1.0).is_err());
    }

    #[test]
    fn trace_shape_and_downhill_acceptance() {
        let energy = |v: Vec2| (v - Vec2::new(0.3, -0.2)).norm_sq() * 10.0;
        let prop = GaussianProposal::new([[0.04, 0.0], [0.0, 0.04]]);
        let mut rng = robot_stream(1, 0, 0);
        let t = run_chain(Vec2::ZERO, energy, &prop, ProposalCenter::ChainState, 1.0, 1.0, 200, &mut rng);
        assert_eq!(t.velocities.len(), 201);
        assert_eq!(t.energies.len(), 201);
        assert_eq!(t.velocities[0], Vec2::ZERO);
        assert_eq!(t.energies[0], energy(Vec2::ZERO));
        assert!(t.velocities.iter().all(|v| v.norm() <= 1.0));
        let moves = t.velocities.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(moves, t.acceptance_count);
    }

    #[test]
    fn replayed_chain_accepts_every_downhill_proposal() {
        // Re-derive each proposal from the same stream and check the rule.
        let energy = |v: Vec2| (v - Vec2::new(-0.4, 0.1)).norm_sq() * 30.0;
        let prop = GaussianProposal::new([[0.02, 0.005], [0.005, 0.03]]);
        let t = run_chain(
            Vec2::new(0.5, 0.5),
            energy,
            &prop,
            ProposalCenter::ChainState,
            1.0,
            1.0,
            500,
            &mut robot_stream(9, 3, 4),
        );
        let mut rng = robot_stream(9, 3, 4);
        for k in 1..t.velocities.len() {
            let _r: f64 = rng.random();
            let cand = prop.propose(t.velocities[k - 1], &mut rng).unwrap();
            if cand.norm() <= 1.0 && energy(cand) < t.energies[k - 1] {
                assert_eq!(t.velocities[k], cand);
            }
        }
    }

    #[test]
    fn degenerate_proposal_keeps_velocity() {
        let params = SamplerParams {
            proposal_covariance: Some([[1e-300, 0.0], [0.0, 1e-300]]),
            ..SamplerParams::default()
        };
        let v0 = Vec2::new(0.25, -0.5);
        let e = |v: Vec2| v.norm_sq();
        let v1 = metropolis_update_with(v0, e, 1.0, &params, &mut robot_stream(0, 0, 0)).unwrap();
        assert!((v1 - v0).norm() < 1e-100);
    }

    #[test]
    fn all_rejected_returns_start_exactly() {
        let v0 = Vec2::new(0.1, 0.7);
        let e = |v: Vec2| if v == v0 { 0.0 } else { f64::INFINITY };
        let v1 = metropolis_update_with(v0, e, 1.0, &SamplerParams::default(), &mut robot_stream(5, 1, 2)).unwrap();
        assert_eq!(v1, v0);
    }

    #[test]
    fn burn_in_must_be_below_iterations() {
        let params = SamplerParams {
            iterations: 10,
            burn_in: 10,
            ..SamplerParams::default()
        };
        let r = metropolis_update_with(Vec2::ZERO, |_| 0.0, 1.0, &params, &mut robot_stream(0, 0, 0));
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn update_is_reproducible() {
        let p = PotentialParams::default();
        let robots = [
            NeighborObservation::robot(Vec2::new(0.25, 0.1), Vec2::new(0.3, 0.9), 0),
            NeighborObservation::robot(Vec2::new(-0.2, 0.3), Vec2::new(-0.8, 0.1), 1),
        ];
        let view = LocalView {
            position: Vec2::new(2.0, 2.0),
            own_type: 0,
            robots: &robots,
            obstacles: &[],
            attractors: &[],
            params: &p,
            v_max: 1.0,
            dt: 0.02,
        };
        let s = SamplerParams::default();
        let a = metropolis_update(Vec2::new(0.1, 0.1), &view, &s, &mut robot_stream(42, 7, 100)).unwrap();
        let b = metropolis_update(Vec2::new(0.1, 0.1), &view, &s, &mut robot_stream(42, 7, 100)).unwrap();
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.y.to_bits(), b.y.to_bits());
        let c = metropolis_update(Vec2::new(0.1, 0.1), &view, &s, &mut robot_stream(42, 7, 101)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lattice_indexing() {
        let l = VelocityLattice {
            spacing: 0.1,
            half: 4,
            reach: 2,
        };
        let pts = l.points();
        assert_eq!(pts.len(), 81);
        for (k, p) in pts.iter().enumerate() {
            assert_eq!(l.index_of(*p), Some(k));
        }
        assert_eq!(l.index_of(Vec2::new(0.5, 0.0)), None);
    }

    #[test]
    fn lattice_proposal_is_symmetric() {
        // Empirical jump frequencies between two interior points match in
        // both directions (each allowed jump has probability 1/24).
        let l = VelocityLattice {
            spacing: 0.1,
            half: 4,
            reach: 2,
        };
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(0.1, -0.2);
        let mut rng = robot_stream(3, 0, 0);
        let n = 240_000;
        let mut ab = 0;
        let mut ba = 0;
        for _ in 0..n {
            if l.propose(a, &mut rng).and_then(|v| l.index_of(v)) == l.index_of(b) {
                ab += 1;
            }
            if l.propose(b, &mut rng).and_then(|v| l.index_of(v)) == l.index_of(a) {
                ba += 1;
            }
        }
        let expect = n as f64 / 24.0;
        assert!((ab as f64 - expect).abs() < 5.0 * expect.sqrt());
        assert!((ba as f64 - expect).abs() < 5.0 * expect.sqrt());
    }
}
