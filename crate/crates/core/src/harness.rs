//! Run records, batch sweeps and their on-disk formats.
//!
//! A single run produces a [`RunRecord`] (JSON) holding the fully resolved
//! configuration, the metric stream and summary numbers, plus the metric
//! stream again as line-delimited JSON. Batches fan a base scenario out
//! over a parameter grid, controllers and seeds, and write one CSV row per
//! run and one aggregate row per (cell, controller).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{convergence_iteration, MetricSample};
use crate::model::{Controller, GroupPartition, SwarmConfig};
use crate::scenario;
use crate::sim::{Simulation, SwarmState};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.575_829_303_548_901;

/// Mean distance of each type to each attractor at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorSample {
    pub tick: u64,
    /// `mean_distance[type][attractor]`; `None` for empty types.
    pub mean_distance: Vec<Vec<Option<f64>>>,
}

/// Everything needed to reproduce and assess one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub controller: Controller,
    pub seed: u64,
    /// SHA-256 of the canonical JSON encoding of `config`.
    pub config_hash: String,
    pub config: SwarmConfig,
    pub initial_state: String,
    pub samples: Vec<MetricSample>,
    pub final_cluster_count: usize,
    pub min_cluster_count: usize,
    pub convergence_tick: Option<u64>,
    /// Largest single-tick displacement of any robot, meters.
    pub max_displacement: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attractor_distances: Vec<AttractorSample>,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    /// The metric stream as line-delimited JSON. Contains no timing data, so
    /// it is byte-identical across repeated runs.
    pub fn metrics_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("metric samples serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn config_hash(config: &SwarmConfig) -> String {
    let json = serde_json::to_vec(config).expect("configuration serializes");
    let digest = Sha256::digest(&json);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// One line of the optional per-tick state dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateLine {
    pub tick: u64,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    #[serde(rename = "type")]
    pub group: usize,
}

pub fn state_lines(state: &SwarmState) -> impl Iterator<Item = StateLine> + '_ {
    state.robots.iter().map(move |r| StateLine {
        tick: state.tick,
        id: r.id,
        x: r.position.x,
        y: r.position.y,
        vx: r.velocity.x,
        vy: r.velocity.y,
        group: r.group,
    })
}

fn attractor_sample(state: &SwarmState, config: &SwarmConfig) -> AttractorSample {
    let groups = config.partition.group_count();
    let mean_distance = (0..groups)
        .map(|k| {
            let members: Vec<_> = state.robots.iter().filter(|r| r.group == k).collect();
            config
                .attractors
                .iter()
                .map(|a| {
                    (!members.is_empty()).then(|| {
                        members.iter().map(|r| r.position.distance(a.position)).sum::<f64>() / members.len() as f64
                    })
                })
                .collect()
        })
        .collect();
    AttractorSample {
        tick: state.tick,
        mean_distance,
    }
}

/// Executes one run to `max_ticks`, sampling every `stride` ticks and at
/// the end. `on_state` sees every state (including tick 0).
pub fn execute(config: &SwarmConfig, mut on_state: impl FnMut(&SwarmState)) -> Result<RunRecord> {
    let started = Instant::now();
    let mut sim = Simulation::new(config.clone())?;
    let track_attractors = !config.attractors.is_empty();
    let mut samples = Vec::new();
    let mut attractor_distances = Vec::new();
    let mut max_displacement: f64 = 0.0;
    let mut emit = |sim: &Simulation, samples: &mut Vec<MetricSample>| {
        samples.push(sim.metrics());
        if track_attractors {
            attractor_distances.push(attractor_sample(sim.state(), config));
        }
    };
    on_state(sim.state());
    emit(&sim, &mut samples);
    while sim.state().tick < config.max_ticks {
        let before: Vec<_> = sim.state().robots.iter().map(|r| r.position).collect();
        sim.step();
        for (r, p) in sim.state().robots.iter().zip(&before) {
            max_displacement = max_displacement.max(r.position.distance(*p));
        }
        on_state(sim.state());
        let t = sim.state().tick;
        if t % config.stride == 0 || t == config.max_ticks {
            emit(&sim, &mut samples);
        }
    }
    let final_cluster_count = samples.last().map_or(0, |s| s.cluster_count);
    let min_cluster_count = samples.iter().map(|s| s.cluster_count).min().unwrap_or(0);
    Ok(RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        controller: config.controller,
        seed: config.seed,
        config_hash: config_hash(config),
        config: config.clone(),
        initial_state: format!(
            "uniform positions, min separation {} m from walls and robots, zero velocity",
            2.0 * config.robot_radius
        ),
        convergence_tick: convergence_iteration(&samples),
        samples,
        final_cluster_count,
        min_cluster_count,
        max_displacement,
        attractor_distances,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Paths written by [`write_run`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub record: PathBuf,
    pub metrics: PathBuf,
    pub states: Option<PathBuf>,
}

/// Runs `config` and writes `record.json`, `metrics.jsonl` and optionally
/// `states.jsonl` into `out_dir`.
pub fn write_run(config: &SwarmConfig, out_dir: &Path, dump_states: bool) -> Result<(RunRecord, RunFiles)> {
    config.validate()?;
    let mut states = String::new();
    let record = execute(config, |s| {
        if dump_states {
            for line in state_lines(s) {
                states.push_str(&serde_json::to_string(&line).expect("state lines serialize"));
                states.push('\n');
            }
        }
    })?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = RunFiles {
        record: out_dir.join("record.json"),
        metrics: out_dir.join("metrics.jsonl"),
        states: dump_states.then(|| out_dir.join("states.jsonl")),
    };
    write_atomic(&files.metrics, record.metrics_jsonl().as_bytes())?;
    if let Some(p) = &files.states {
        write_atomic(p, states.as_bytes())?;
    }
    write_atomic(&files.record, &serde_json::to_vec_pretty(&record)?)?;
    Ok((record, files))
}

/// One sweep dimension: `key` takes each of `values` in turn. Besides any
/// scenario key, `groups` and `group_size` set the partition to
/// `group_size` robots in each of `groups` groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    /// Parses `key=v1,v2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (key, vals) = s.split_once('=').ok_or_else(|| Error::BadOverride(s.to_string()))?;
        let values: Vec<String> = vals.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if key.trim().is_empty() || values.is_empty() {
            return Err(Error::BadOverride(s.to_string()));
        }
        Ok(SweepAxis {
            key: key.trim().to_string(),
            values,
        })
    }
}

/// A grid cell: one value per sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub assignments: Vec<(String, String)>,
}

impl Cell {
    pub fn label(&self) -> String {
        if self.assignments.is_empty() {
            return "base".into();
        }
        self.assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// `base` with this cell's values applied.
    pub fn apply(&self, base: &SwarmConfig) -> Result<SwarmConfig> {
        let mut table: toml::Table = toml::from_str(&scenario::to_toml(base)).map_err(|e| Error::Parse(e.to_string()))?;
        let mut groups = base.partition.group_count();
        let mut size = base.partition.group_sizes().first().copied().unwrap_or(0);
        let mut repartition = false;
        for (k, v) in &self.assignments {
            match k.as_str() {
                "groups" | "group_size" => {
                    let n: usize = v
                        .parse()
                        .map_err(|_| Error::InvalidConfig(vec![format!("{k} must be a count, got `{v}`")]))?;
                    if k == "groups" {
                        groups = n;
                    } else {
                        size = n;
                    }
                    repartition = true;
                }
                _ => scenario::apply_override(&mut table, &format!("{k}={v}"))?,
            }
        }
        let mut config: SwarmConfig = table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        if repartition {
            config.partition = GroupPartition::from_sizes(&vec![size; groups]);
        }
        config.validate()?;
        Ok(config)
    }
}

pub fn cells(axes: &[SweepAxis]) -> Vec<Cell> {
    let mut out = vec![Cell {
        assignments: Vec::new(),
    }];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|c| {
                axis.values.iter().map(move |v| {
                    let mut a = c.assignments.clone();
                    a.push((axis.key.clone(), v.clone()));
                    Cell { assignments: a }
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub base: SwarmConfig,
    pub seeds: Vec<u64>,
    pub controllers: Vec<Controller>,
    pub sweep: Vec<SweepAxis>,
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub cell: String,
    pub controller: Controller,
    pub seed: u64,
    pub groups: usize,
    pub robots: usize,
    pub final_cluster_count: usize,
    pub min_cluster_count: usize,
    pub convergence_tick: Option<u64>,
    pub config_hash: String,
}

/// Mean and normal-approximation 99% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci99: f64,
}

impl MeanCi {
    pub fn of(xs: &[f64]) -> Option<MeanCi> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let ci99 = if xs.len() < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Z_99 * (var / n).sqrt()
        };
        Some(MeanCi { mean, ci99 })
    }
}

/// One row of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: String,
    pub controller: Controller,
    pub runs: usize,
    pub groups: usize,
    pub robots: usize,
    pub min_clusters_mean: f64,
    pub min_clusters_ci99: f64,
    pub final_clusters_mean: f64,
    pub final_clusters_ci99: f64,
    /// Over runs with a defined convergence tick.
    pub convergence_mean: Option<f64>,
    pub convergence_ci99: Option<f64>,
    pub ci_method: String,
}

/// Groups rows by (cell, controller), preserving first-appearance order.
pub fn aggregate(rows: &[BatchRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, Controller)> = Vec::new();
    for r in rows {
        let k = (r.cell.clone(), r.controller);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(cell, controller)| {
            let group: Vec<&BatchRow> = rows.iter().filter(|r| r.cell == cell && r.controller == controller).collect();
            let min: Vec<f64> = group.iter().map(|r| r.min_cluster_count as f64).collect();
            let fin: Vec<f64> = group.iter().map(|r| r.final_cluster_count as f64).collect();
            let conv: Vec<f64> = group.iter().filter_map(|r| r.convergence_tick.map(|t| t as f64)).collect();
            let min = MeanCi::of(&min).expect("group is nonempty");
            let fin = MeanCi::of(&fin).expect("group is nonempty");
            let conv = MeanCi::of(&conv);
            AggregateRow {
                cell,
                controller,
                runs: group.len(),
                groups: group[0].groups,
                robots: group[0].robots,
                min_clusters_mean: min.mean,
                min_clusters_ci99: min.ci99,
                final_clusters_mean: fin.mean,
                final_clusters_ci99: fin.ci99,
                convergence_mean: conv.map(|c| c.mean),
                convergence_ci99: conv.map(|c| c.ci99),
                ci_method: "normal".into(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub rows: Vec<BatchRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Runs every (cell, controller, seed) combination. A given seed yields the
/// same initial state for every controller. Runs execute on the rayon pool;
/// rows come back in grid order regardless.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchResult> {
    if spec.seeds.is_empty() {
        return Err(Error::InvalidConfig(vec!["batch needs at least one seed".into()]));
    }
    let controllers = if spec.controllers.is_empty() {
        vec![spec.base.controller]
    } else {
        spec.controllers.clone()
    };
    let mut jobs = Vec::new();
    for cell in cells(&spec.sweep) {
        let label = cell.label();
        let cell_config = cell.apply(&spec.base).map_err(|e| Error::BatchCell {
            cell: label.clone(),
            seed: spec.seeds[0],
            source: Box::new(e),
        })?;
        for &controller in &controllers {
            for &seed in &spec.seeds {
                let config = SwarmConfig {
                    controller,
                    seed,
                    ..cell_config.clone()
                };
                jobs.push((label.clone(), config));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(cell, config)| {
            let record = execute(config, |_| {}).map_err(|e| Error::BatchCell {
                cell: cell.clone(),
                seed: config.seed,
                source: Box::new(e),
            })?;
            Ok(BatchRow {
                cell: cell.clone(),
                controller: config.controller,
                seed: config.seed,
                groups: config.partition.group_count(),
                robots: config.partition.robot_count(),
                final_cluster_count: record.final_cluster_count,
                min_cluster_count: record.min_cluster_count,
                convergence_tick: record.convergence_tick,
                config_hash: record.config_hash,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = aggregate(&rows);
    Ok(BatchResult { rows, aggregates })
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

/// Writes `runs.csv` and `aggregate.csv` into `out_dir`.
pub fn write_batch(result: &BatchResult, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let runs = out_dir.join("runs.csv");
    let agg = out_dir.join("aggregate.csv");
    write_atomic(&runs, &to_csv(&result.rows)?)?;
    write_atomic(&agg, &to_csv(&result.aggregates)?)?;
    Ok((runs, agg))
}
