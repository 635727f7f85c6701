//! Segregation and flocking metrics.

use serde::{Deserialize, Serialize};

use crate::model::RobotState;
use crate::vec2::Vec2;

/// One metric snapshot of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub tick: u64,
    pub cluster_count: usize,
    /// `None` when every group has fewer than two robots.
    pub per_group_mean_pairwise_distance: Option<f64>,
    pub velocity_consensus_error: f64,
    pub mean_speed: f64,
}

impl MetricSample {
    pub fn measure(tick: u64, robots: &[RobotState], group_count: usize, cluster_threshold: f64) -> Self {
        MetricSample {
            tick,
            cluster_count: cluster_count(robots, cluster_threshold),
            per_group_mean_pairwise_distance: mean_intragroup_distance(robots, group_count),
            velocity_consensus_error: velocity_consensus_error(robots, group_count),
            mean_speed: mean_speed(robots),
        }
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `true` if `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }
}

/// Number of connected components of the graph linking same-type robots
/// closer than `threshold` (strictly).
pub fn cluster_count(robots: &[RobotState], threshold: f64) -> usize {
    let mut uf = UnionFind::new(robots.len());
    let t2 = threshold * threshold;
    for i in 0..robots.len() {
        for j in (i + 1)..robots.len() {
            if robots[i].group == robots[j].group && (robots[i].position - robots[j].position).norm_sq() < t2 {
                uf.union(i, j);
            }
        }
    }
    uf.set_count()
}

/// First tick at which the cluster count hits its minimum over `samples`.
pub fn convergence_iteration(samples: &[MetricSample]) -> Option<u64> {
    let min = samples.iter().map(|s| s.cluster_count).min()?;
    samples.iter().find(|s| s.cluster_count == min).map(|s| s.tick)
}

fn groups(robots: &[RobotState], group_count: usize) -> Vec<Vec<&RobotState>> {
    let mut g = vec![Vec::new(); group_count];
    for r in robots {
        g[r.group].push(r);
    }
    g
}

/// Mean over nonempty groups of the mean deviation `|v_i − v̄_k|` from the
/// group's mean velocity.
pub fn velocity_consensus_error(robots: &[RobotState], group_count: usize) -> f64 {
    let per_group: Vec<f64> = groups(robots, group_count)
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let n = g.len() as f64;
            let mean = g.iter().map(|r| r.velocity).sum::<Vec2>() / n;
            g.iter().map(|r| (r.velocity - mean).norm()).sum::<f64>() / n
        })
        .collect();
    if per_group.is_empty() {
        0.0
    } else {
        per_group.iter().sum::<f64>() / per_group.len() as f64
    }
}

/// Mean over groups with at least two robots of the mean pairwise distance
/// within the group.
pub fn mean_intragroup_distance(robots: &[RobotState], group_count: usize) -> Option<f64> {
    let per_group: Vec<f64> = groups(robots, group_count)
        .into_iter()
        .filter(|g| g.len() >= 2)
        .map(|g| {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..g.len() {
                for j in (i + 1)..g.len() {
                    sum += g[i].position.distance(g[j].position);
                    pairs += 1;
                }
            }
            sum / pairs as f64
        })
        .collect();
    (!per_group.is_empty()).then(|| per_group.iter().sum::<f64>() / per_group.len() as f64)
}

pub fn mean_speed(robots: &[RobotState]) -> f64 {
    if robots.is_empty() {
        return 0.0;
    }
    robots.iter().map(|r| r.velocity.norm()).sum::<f64>() / robots.len() as f64
}
