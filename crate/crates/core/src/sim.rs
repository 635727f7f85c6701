//! Synchronous swarm simulation.
//!
//! Each tick every robot senses the tick-`t` snapshot, picks a new velocity
//! with the configured controller, and only then do all robots move. The
//! per-robot work reads nothing but the snapshot and the robot's own random
//! stream, so it runs in parallel without affecting results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline_gd::gd_velocity;
use crate::error::Result;
use crate::metrics::MetricSample;
use crate::model::{kinematic_step, Arena, Controller, NoiseTruncation, RobotState, SwarmConfig};
use crate::potential::{LocalView, NeighborObservation};
use crate::sampler::{metropolis_update, robot_stream};
use crate::vec2::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub tick: u64,
    pub robots: Vec<RobotState>,
}

/// Gaussian sensor noise on relative positions and observed velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub fraction: f64,
    pub position_sigma: f64,
    pub velocity_sigma: f64,
    pub truncation: NoiseTruncation,
}

impl NoiseParams {
    pub fn from_config(config: &SwarmConfig) -> Self {
        NoiseParams {
            fraction: config.noise_fraction,
            position_sigma: config.noise_fraction * config.sensing_radius,
            velocity_sigma: config.noise_fraction * config.v_max,
            truncation: config.noise_truncation,
        }
    }

    pub fn none() -> Self {
        NoiseParams {
            fraction: 0.0,
            position_sigma: 0.0,
            velocity_sigma: 0.0,
            truncation: NoiseTruncation::Bounded,
        }
    }

    fn is_active(&self) -> bool {
        self.position_sigma > 0.0 || self.velocity_sigma > 0.0
    }

    /// Zero-mean normal variate; in bounded mode it is redrawn until it lies
    /// within `±sigma`.
    fn draw<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if self.truncation == NoiseTruncation::Unbounded || z.abs() <= 1.0 {
                return z * sigma;
            }
        }
    }

    fn perturb<R: Rng + ?Sized>(&self, v: Vec2, sigma: f64, rng: &mut R) -> Vec2 {
        v + Vec2::new(self.draw(sigma, rng), self.draw(sigma, rng))
    }
}

/// Uniform grid over obstacle points for range queries.
#[derive(Debug, Clone)]
pub struct ObstacleIndex {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<Vec2>>,
}

impl ObstacleIndex {
    pub fn new(arena: &Arena, cell: f64) -> Self {
        // pad one cell on each side so wall points sit inside the grid
        let cols = (arena.width / cell).ceil() as usize + 3;
        let rows = (arena.height / cell).ceil() as usize + 3;
        let mut index = ObstacleIndex {
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        };
        for &p in arena.obstacle_points() {
            let (c, r) = index.cell_of(p);
            index.buckets[r * cols + c].push(p);
        }
        index
    }

    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let c = ((p.x / self.cell).floor() + 1.0).clamp(0.0, (self.cols - 1) as f64) as usize;
        let r = ((p.y / self.cell).floor() + 1.0).clamp(0.0, (self.rows - 1) as f64) as usize;
        (c, r)
    }

    /// Calls `f` on every point within `radius` (inclusive) of `q`.
    /// `radius` must not exceed the cell size.
    pub fn for_each_within(&self, q: Vec2, radius: f64, mut f: impl FnMut(Vec2)) {
        let (c, r) = self.cell_of(q);
        let r2 = radius * radius;
        for rr in r.saturating_sub(1)..=(r + 1).min(self.rows - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(self.cols - 1) {
                for &p in &self.buckets[rr * self.cols + cc] {
                    if (p - q).norm_sq() <= r2 {
                        f(p);
                    }
                }
            }
        }
    }
}

/// What robot `i` perceives of the snapshot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observations {
    pub robots: Vec<NeighborObservation>,
    pub obstacles: Vec<NeighborObservation>,
}

/// Robots within `λ` (boundary included) and obstacle points within `λ`,
/// each corrupted independently by `noise` after the range test.
pub fn sense<R: Rng + ?Sized>(
    i: usize,
    robots: &[RobotState],
    obstacles: &ObstacleIndex,
    sensing_radius: f64,
    noise: &NoiseParams,
    rng: &mut R,
) -> Observations {
    let me = robots[i];
    let r2 = sensing_radius * sensing_radius;
    let mut obs = Observations::default();
    for (j, other) in robots.iter().enumerate() {
        if j == i {
            continue;
        }
        let rel = other.position - me.position;
        if rel.norm_sq() <= r2 {
            obs.robots.push(NeighborObservation::robot(rel, other.velocity, other.group));
        }
    }
    obstacles.for_each_within(me.position, sensing_radius, |p| {
        obs.obstacles.push(NeighborObservation::obstacle(p - me.position));
    });
    if noise.is_active() {
        for o in &mut obs.robots {
            o.relative_position = noise.perturb(o.relative_position, noise.position_sigma, rng);
            o.velocity = noise.perturb(o.velocity, noise.velocity_sigma, rng);
        }
        for o in &mut obs.obstacles {
            o.relative_position = noise.perturb(o.relative_position, noise.position_sigma, rng);
        }
    }
    obs
}

/// Random initial placement: uniform over the arena, at least one robot
/// diameter from the walls and from each other, velocities zero. Depends
/// only on the seed, the partition and the arena.
pub fn initial_state(config: &SwarmConfig) -> SwarmState {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_1417_u64.rotate_left(40));
    let arena = &config.arena;
    let sep = 2.0 * config.robot_radius;
    let margin = sep.min(arena.width / 2.0).min(arena.height / 2.0);
    let mut robots: Vec<RobotState> = Vec::with_capacity(config.partition.robot_count());
    for id in 0..config.partition.robot_count() {
        let mut attempts = 0u32;
        let position = loop {
            let p = Vec2::new(
                rng.random_range(margin..=arena.width - margin),
                rng.random_range(margin..=arena.height - margin),
            );
            attempts += 1;
            // give up on spacing in hopelessly crowded arenas
            if attempts > 10_000 || robots.iter().all(|r| r.position.distance(p) >= sep) {
                break p;
            }
        };
        robots.push(RobotState {
            id,
            position,
            velocity: Vec2::ZERO,
            group: config.partition.group_of(id),
        });
    }
    SwarmState { tick: 0, robots }
}

/// A running simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SwarmConfig,
    obstacles: ObstacleIndex,
    noise: NoiseParams,
    state: SwarmState,
}

impl Simulation {
    pub fn new(config: SwarmConfig) -> Result<Self> {
        let state = initial_state(&config);
        Simulation::with_state(config, state)
    }

    pub fn with_state(config: SwarmConfig, state: SwarmState) -> Result<Self> {
        config.validate()?;
        let obstacles = ObstacleIndex::new(&config.arena, config.sensing_radius);
        let noise = NoiseParams::from_config(&config);
        Ok(Simulation {
            config,
            obstacles,
            noise,
            state,
        })
    }

    pub fn config(&self) -> &SwarmConfig {
        &self.config
    }

    pub fn state(&self) -> &SwarmState {
        &self.state
    }

    pub fn obstacles(&self) -> &ObstacleIndex {
        &self.obstacles
    }

    pub fn metrics(&self) -> MetricSample {
        MetricSample::measure(
            self.state.tick,
            &self.state.robots,
            self.config.partition.group_count(),
            self.config.cluster_threshold,
        )
    }

    /// New velocity of robot `i` from the current snapshot.
    pub fn next_velocity(&self, i: usize) -> Vec2 {
        let c = &self.config;
        let robots = &self.state.robots;
        let mut rng = robot_stream(c.seed, i, self.state.tick);
        let obs = sense(i, robots, &self.obstacles, c.sensing_radius, &self.noise, &mut rng);
        let me = robots[i];
        let view = LocalView {
            position: me.position,
            own_type: me.group,
            robots: &obs.robots,
            obstacles: &obs.obstacles,
            attractors: &c.attractors,
            params: &c.potential,
            v_max: c.v_max,
            dt: c.tick_duration,
        };
        match c.controller {
            Controller::Grf => metropolis_update(me.velocity, &view, &c.sampler, &mut rng)
                .expect("sampler parameters are validated at construction"),
            Controller::Gd => gd_velocity(me.velocity, &view, c.gd.step_size, c.gd.diff_step),
        }
    }

    /// Advances one tick.
    pub fn step(&mut self) {
        let n = self.state.robots.len();
        let velocities: Vec<Vec2> = if n >= 32 {
            (0..n).into_par_iter().map(|i| self.next_velocity(i)).collect()
        } else {
            (0..n).map(|i| self.next_velocity(i)).collect()
        };
        self.apply(velocities);
    }

    /// Like [`step`](Self::step), computing robot updates in `order`.
    /// Exposed to check that update order does not matter.
    pub fn step_in_order(&mut self, order: &[usize]) {
        let mut velocities = vec![Vec2::ZERO; self.state.robots.len()];
        for &i in order {
            velocities[i] = self.next_velocity(i);
        }
        self.apply(velocities);
    }

    fn apply(&mut self, velocities: Vec<Vec2>) {
        let dt = self.config.tick_duration;
        for (r, v) in self.state.robots.iter_mut().zip(velocities) {
            r.velocity = v;
            r.position = self.config.arena.clamp(kinematic_step(r.position, v, dt), 0.0);
        }
        self.state.tick += 1;
    }
}

/// Iterator over `(state, metrics)` at tick 0, every `stride` ticks, and at
/// the final tick.
pub struct Run {
    sim: Simulation,
    done: bool,
}

impl Iterator for Run {
    type Item = (SwarmState, MetricSample);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let max = self.sim.config.max_ticks;
        let stride = self.sim.config.stride;
        let out = (self.sim.state.clone(), self.sim.metrics());
        if self.sim.state.tick >= max {
            self.done = true;
        } else {
            let target = (self.sim.state.tick + stride).min(max);
            while self.sim.state.tick < target {
                self.sim.step();
            }
        }
        Some(out)
    }
}

/// Validates `config` and returns the lazily evaluated run.
pub fn run(config: SwarmConfig) -> Result<Run> {
    Ok(Run {
        sim: Simulation::new(config)?,
        done: false,
    })
}
