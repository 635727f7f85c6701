//! Domain types and scenario configuration.
//!
//! A [`SwarmConfig`] fully describes one scenario: the group partition, the
//! arena and its obstacle point cloud, virtual attractors, the energy and
//! sampler parameters, and the run controls. Everything here is immutable
//! once validated and can be shared read-only between workers.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// State of one robot at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Index of the robot's group in the partition.
    pub group: usize,
}

/// Holonomic motion model: the next position is `q + v·dt`.
#[inline]
pub fn kinematic_step(position: Vec2, velocity: Vec2, dt: f64) -> Vec2 {
    position + velocity * dt
}

/// Disjoint, exhaustive assignment of robots to groups.
///
/// Scenario files carry only the per-group sizes; robots are then numbered
/// group by group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct GroupPartition {
    assignment: Vec<usize>,
    sizes: Vec<usize>,
}

impl GroupPartition {
    /// Robots `0..sizes[0]` form group 0, the next `sizes[1]` group 1, etc.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let assignment = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
            .collect();
        GroupPartition {
            assignment,
            sizes: sizes.to_vec(),
        }
    }

    /// Builds a partition from an explicit robot → group map. Groups with no
    /// members below the largest index are kept as empty groups.
    pub fn from_assignment(assignment: Vec<usize>) -> Self {
        let count = assignment.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0; count];
        for &k in &assignment {
            sizes[k] += 1;
        }
        GroupPartition { assignment, sizes }
    }

    pub fn robot_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn group_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn group_of(&self, robot: usize) -> usize {
        self.assignment[robot]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &k)| k == group)
            .map(|(i, _)| i)
    }
}

impl From<Vec<usize>> for GroupPartition {
    fn from(sizes: Vec<usize>) -> Self {
        GroupPartition::from_sizes(&sizes)
    }
}

impl From<GroupPartition> for Vec<usize> {
    fn from(p: GroupPartition) -> Self {
        p.sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Segment { a, b }
    }
}

impl From<[f64; 4]> for Segment {
    fn from(s: [f64; 4]) -> Self {
        Segment::new(Vec2::new(s[0], s[1]), Vec2::new(s[2], s[3]))
    }
}

impl From<Segment> for [f64; 4] {
    fn from(s: Segment) -> Self {
        [s.a.x, s.a.y, s.b.x, s.b.y]
    }
}

/// Samples every segment at intervals of at most `spacing`, endpoints
/// included. Points shared by several segments appear once, and the output
/// is sorted so it does not depend on segment order.
pub fn build_obstacle_points(segments: &[Segment], spacing: f64) -> Vec<Vec2> {
    assert!(spacing > 0.0, "point spacing must be positive");
    // Keyed on a 1e-9 m lattice so shared corners collapse.
    let key = |p: Vec2| ((p.x * 1e9).round() as i64, (p.y * 1e9).round() as i64);
    let mut seen = BTreeSet::new();
    let mut points = Vec::new();
    let mut push = |p: Vec2| {
        if seen.insert(key(p)) {
            points.push(p);
        }
    };
    for s in segments {
        let len = s.a.distance(s.b);
        let n = (len / spacing - 1e-9).ceil().max(0.0) as usize;
        if n == 0 {
            push(s.a);
            if len > 0.0 {
                push(s.b);
            }
            continue;
        }
        for k in 0..n {
            push(s.a + (s.b - s.a) * (k as f64 / n as f64));
        }
        push(s.b);
    }
    points.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    points
}

/// Serialized form of [`Arena`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ArenaSpec {
    width: f64,
    height: f64,
    perimeter_walls: bool,
    segments: Vec<Segment>,
    point_spacing: f64,
}

impl Default for ArenaSpec {
    fn default() -> Self {
        ArenaSpec {
            width: 10.0,
            height: 10.0,
            perimeter_walls: true,
            segments: Vec::new(),
            point_spacing: 0.05,
        }
    }
}

/// Rectangular region `[0, width] × [0, height]` with walls and obstacles
/// discretized into a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ArenaSpec", into = "ArenaSpec")]
pub struct Arena {
    pub width: f64,
    pub height: f64,
    pub perimeter_walls: bool,
    /// Interior obstacle segments, in addition to the perimeter.
    pub segments: Vec<Segment>,
    pub point_spacing: f64,
    obstacle_points: Vec<Vec2>,
}

impl Arena {
    pub fn new(width: f64, height: f64, perimeter_walls: bool, segments: Vec<Segment>, point_spacing: f64) -> Self {
        let mut arena = Arena {
            width,
            height,
            perimeter_walls,
            segments,
            point_spacing,
            obstacle_points: Vec::new(),
        };
        if point_spacing > 0.0 {
            arena.obstacle_points = build_obstacle_points(&arena.wall_segments(), point_spacing);
        }
        arena
    }

    /// A walled square of side `side`.
    pub fn square(side: f64) -> Self {
        Arena::new(side, side, true, Vec::new(), ArenaSpec::default().point_spacing)
    }

    /// Perimeter walls (if enabled) followed by the interior segments.
    pub fn wall_segments(&self) -> Vec<Segment> {
        let (w, h) = (self.width, self.height);
        let mut segs = Vec::with_capacity(4 + self.segments.len());
        if self.perimeter_walls {
            let c = [Vec2::new(0.0, 0.0), Vec2::new(w, 0.0), Vec2::new(w, h), Vec2::new(0.0, h)];
            for i in 0..4 {
                segs.push(Segment::new(c[i], c[(i + 1) % 4]));
            }
        }
        segs.extend_from_slice(&self.segments);
        segs
    }

    pub fn obstacle_points(&self) -> &[Vec2] {
        &self.obstacle_points
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    /// Projects `p` into the closed arena rectangle shrunk by `margin`.
    pub fn clamp(&self, p: Vec2, margin: f64) -> Vec2 {
        let mx = margin.min(self.width / 2.0);
        let my = margin.min(self.height / 2.0);
        Vec2::new(p.x.clamp(mx, self.width - mx), p.y.clamp(my, self.height - my))
    }
}

impl From<ArenaSpec> for Arena {
    fn from(s: ArenaSpec) -> Self {
        Arena::new(s.width, s.height, s.perimeter_walls, s.segments, s.point_spacing)
    }
}

impl From<Arena> for ArenaSpec {
    fn from(a: Arena) -> Self {
        ArenaSpec {
            width: a.width,
            height: a.height,
            perimeter_walls: a.perimeter_walls,
            segments: a.segments,
            point_spacing: a.point_spacing,
        }
    }
}

/// A fixed point that attracts robots of one type only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualAttractor {
    pub position: Vec2,
    pub target_type: usize,
    pub charge: f64,
}

/// Sign convention for the robot–robot charge product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// Same-group products are positive (repulsive Coulomb term).
    Literal,
    /// Same-group products are negative: same type attracts, different
    /// types repel.
    #[default]
    Segregating,
}

/// How the resultant velocity of same-type neighbours is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticMode {
    /// `Σ (v_j − v̄)`: relative to the candidate velocity.
    #[default]
    Relative,
    /// `Σ v_j`: plain sum of neighbour velocities.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialParams {
    /// Well depth.
    pub epsilon: f64,
    /// Distance of the energy minimum of the exp-6 part, meters.
    pub r0: f64,
    /// Steepness of the exponential wall; must exceed 6.
    pub alpha: f64,
    /// Per-type charges. A single entry applies to every type.
    pub charges: Vec<f64>,
    /// Charge of obstacle points. The obstacle product is always repulsive.
    pub obstacle_charge: f64,
    /// Coulomb coupling constant.
    pub coulomb_coupling: f64,
    pub mass: f64,
    pub sign_mode: SignMode,
    pub kinetic_mode: KineticMode,
    /// Whether the full-speed incentive term is part of the energy.
    pub speed_incentive: bool,
    /// Distance floor substituted for smaller pair distances, meters.
    pub d_min: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        PotentialParams {
            epsilon: 1.0,
            r0: 0.2,
            alpha: 60.0,
            charges: vec![1.0],
            obstacle_charge: 1.0,
            coulomb_coupling: 1.5,
            mass: 10.0,
            sign_mode: SignMode::Segregating,
            kinetic_mode: KineticMode::Relative,
            speed_incentive: true,
            d_min: 1e-4,
        }
    }
}

impl PotentialParams {
    pub fn charge(&self, group: usize) -> f64 {
        match self.charges.as_slice() {
            [c] => *c,
            cs => cs[group],
        }
    }

    fn validate(&self, groups: usize, errs: &mut Vec<String>) {
        if !(self.alpha > 6.0) {
            errs.push(format!("potential.alpha must exceed 6, got {}", self.alpha));
        }
        if !(self.epsilon > 0.0) {
            errs.push(format!("potential.epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.r0 > 0.0) {
            errs.push(format!("potential.r0 must be positive, got {}", self.r0));
        }
        if !(self.coulomb_coupling >= 0.0) {
            errs.push(format!(
                "potential.coulomb_coupling must be nonnegative, got {}",
                self.coulomb_coupling
            ));
        }
        if !(self.mass > 0.0) {
            errs.push(format!("potential.mass must be positive, got {}", self.mass));
        }
        if !(self.d_min > 0.0) {
            errs.push(format!("potential.d_min must be positive, got {}", self.d_min));
        }
        if self.charges.is_empty() || (self.charges.len() != 1 && self.charges.len() != groups) {
            errs.push(format!(
                "potential.charges must have 1 or {groups} entries, got {}",
                self.charges.len()
            ));
        }
        if self.charges.iter().chain([&self.obstacle_charge]).any(|c| !c.is_finite()) {
            errs.push("potential.charges must be finite".into());
        }
    }
}

/// Where the Gaussian proposal is centred at each chain step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalCenter {
    /// Always the robot's velocity at the start of the update.
    #[default]
    PreviousVelocity,
    /// The current chain state (a symmetric random walk).
    ChainState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerParams {
    pub iterations: usize,
    pub burn_in: usize,
    /// Proposal covariance, (m/s)². `None` means `(0.1·v_max)²·I`.
    pub proposal_covariance: Option<[[f64; 2]; 2]>,
    pub temperature: f64,
    pub proposal_center: ProposalCenter,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            iterations: 100,
            burn_in: 50,
            proposal_covariance: None,
            temperature: 0.01,
            proposal_center: ProposalCenter::PreviousVelocity,
        }
    }
}

impl SamplerParams {
    pub fn covariance(&self, v_max: f64) -> [[f64; 2]; 2] {
        self.proposal_covariance.unwrap_or_else(|| {
            let s = (0.1 * v_max).powi(2);
            [[s, 0.0], [0.0, s]]
        })
    }

    fn validate(&self, v_max: f64, errs: &mut Vec<String>) {
        if self.burn_in >= self.iterations {
            errs.push(format!(
                "sampler.burn_in ({}) must be below sampler.iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if !(self.temperature > 0.0) {
            errs.push(format!("sampler.temperature must be positive, got {}", self.temperature));
        }
        let [[a, b], [c, d]] = self.covariance(v_max);
        let spd = a > 0.0 && (b - c).abs() <= 1e-12 * (a.abs() + d.abs()) && a * d - b * c > 0.0;
        if !spd {
            errs.push("sampler.proposal_covariance must be symmetric positive-definite".into());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    /// Metropolis sampling of the Gibbs distribution.
    #[default]
    Grf,
    /// Deterministic gradient descent on the same energy.
    Gd,
}

impl std::fmt::Display for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Controller::Grf => "grf",
            Controller::Gd => "gd",
        })
    }
}

impl std::str::FromStr for Controller {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grf" => Ok(Controller::Grf),
            "gd" => Ok(Controller::Gd),
            other => Err(Error::InvalidConfig(vec![format!(
                "controller must be `grf` or `gd`, got `{other}`"
            )])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdParams {
    pub step_size: f64,
    /// Finite-difference step as a fraction of `v_max`.
    pub diff_step: f64,
}

impl Default for GdParams {
    fn default() -> Self {
        GdParams {
            step_size: 0.1,
            diff_step: 1e-3,
        }
    }
}

/// Sensor noise truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTruncation {
    /// Components are clipped to ±σ.
    #[default]
    Bounded,
    Unbounded,
}

/// A complete scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmConfig {
    #[serde(rename = "group_sizes")]
    pub partition: GroupPartition,
    pub arena: Arena,
    pub attractors: Vec<VirtualAttractor>,
    pub potential: PotentialParams,
    pub sampler: SamplerParams,
    pub gd: GdParams,
    pub controller: Controller,
    pub v_max: f64,
    pub sensing_radius: f64,
    pub tick_duration: f64,
    pub noise_fraction: f64,
    pub noise_truncation: NoiseTruncation,
    pub robot_radius: f64,
    pub cluster_threshold: f64,
    pub seed: u64,
    pub max_ticks: u64,
    /// Metric sampling stride in ticks.
    pub stride: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            partition: GroupPartition::from_sizes(&[10; 5]),
            arena: Arena::square(10.0),
            attractors: Vec::new(),
            potential: PotentialParams::default(),
            sampler: SamplerParams::default(),
            gd: GdParams::default(),
            controller: Controller::Grf,
            v_max: 1.0,
            sensing_radius: 0.5,
            tick_duration: 0.02,
            noise_fraction: 0.0,
            noise_truncation: NoiseTruncation::Bounded,
            robot_radius: 0.07,
            cluster_threshold: 0.3,
            seed: 0,
            max_ticks: 20_000,
            stride: 10,
        }
    }
}

impl SwarmConfig {
    /// Largest distance a robot can travel in one tick.
    pub fn displacement_cap(&self) -> f64 {
        self.v_max * self.tick_duration
    }

    /// Checks every invariant and reports all offending keys at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let groups = self.partition.group_count();
        if !(self.v_max > 0.0) {
            errs.push(format!("v_max must be positive, got {}", self.v_max));
        }
        if !(self.tick_duration > 0.0) {
            errs.push(format!("tick_duration must be positive, got {}", self.tick_duration));
        }
        if !(self.sensing_radius > 0.0) {
            errs.push(format!("sensing_radius must be positive, got {}", self.sensing_radius));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            errs.push(format!("noise_fraction must lie in [0, 1), got {}", self.noise_fraction));
        }
        if !(self.robot_radius >= 0.0) {
            errs.push(format!("robot_radius must be nonnegative, got {}", self.robot_radius));
        }
        if !(self.cluster_threshold > 0.0) {
            errs.push(format!(
                "cluster_threshold must be positive, got {}",
                self.cluster_threshold
            ));
        }
        if self.stride == 0 {
            errs.push("stride must be at least 1".into());
        }
        if !(self.arena.width > 0.0 && self.arena.height > 0.0) {
            errs.push("arena.width and arena.height must be positive".into());
        }
        if !(self.arena.point_spacing > 0.0) {
            errs.push(format!(
                "arena.point_spacing must be positive, got {}",
                self.arena.point_spacing
            ));
        }
        if !(self.gd.step_size > 0.0 && self.gd.diff_step > 0.0) {
            errs.push("gd.step_size and gd.diff_step must be positive".into());
        }
        for (n, a) in self.attractors.iter().enumerate() {
            if a.target_type >= groups {
                errs.push(format!(
                    "attractors[{n}].target_type {} names no group (have {groups})",
                    a.target_type
                ));
            }
            if !a.position.is_finite() || !a.charge.is_finite() {
                errs.push(format!("attractors[{n}] must have finite position and charge"));
            }
        }
        self.potential.validate(groups, &mut errs);
        self.sampler.validate(self.v_max, &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}
