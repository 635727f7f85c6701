use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grf_swarm::harness::{self, BatchSpec, SweepAxis};
use grf_swarm::model::{Controller, SwarmConfig};
use grf_swarm::potential::{charge_product, sample_pair_curve};
use grf_swarm::scenario::{self, load_scenario};
use grf_swarm::{Error, Result};

/// Segregative flocking simulator and experiment runner.
#[derive(Debug, Parser)]
#[command(name = "grf-swarm", version)]
struct Cli {
    /// Worker threads for batch runs and large swarms.
    #[arg(long, global = true, env = "GRF_SWARM_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute one run and write its record and metric stream.
    Run(RunArgs),
    /// Run a parameter grid over several seeds and controllers.
    Batch(BatchArgs),
    /// Execute one run with virtual attractors active and report each
    /// type's distance to them.
    Shape(RunArgs),
    /// Check a scenario and print the resolved configuration.
    Validate(ScenarioArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file, or `preset:<name>`.
    #[arg(long)]
    scenario: PathBuf,
    /// Override a scenario key, e.g. `--set potential.alpha=40`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    controller: Option<Controller>,
    #[arg(long)]
    stride: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Also write every tick's robot states to `states.jsonl`.
    #[arg(long)]
    dump_states: bool,
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Seeds as a list (`1,2,3`) or a half-open range (`0..20`).
    #[arg(long, default_value = "0..10")]
    seeds: String,
    /// Controllers to compare, e.g. `grf,gd`.
    #[arg(long, value_delimiter = ',')]
    controller: Vec<Controller>,
    #[arg(long)]
    stride: Option<u64>,
    /// Sweep axis `key=v1,v2,...`; repeat for a grid.
    #[arg(long, value_name = "KEY=V1,V2")]
    sweep: Vec<SweepAxis>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidConfig(vec![format!("seeds: cannot parse `{s}`")]);
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn resolve(args: &RunArgs) -> Result<SwarmConfig> {
    let mut overrides = args.scenario.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(c) = args.controller {
        overrides.push(format!("controller=\"{c}\""));
    }
    if let Some(s) = args.stride {
        overrides.push(format!("stride={s}"));
    }
    load_scenario(&args.scenario.scenario, &overrides)
}

fn run(args: &RunArgs, expect_attractors: bool) -> Result<()> {
    let config = resolve(args)?;
    if expect_attractors && config.attractors.is_empty() {
        eprintln!("warning: scenario has no `attractors`; running as a plain run");
    }
    let (record, files) = harness::write_run(&config, &args.out_dir, args.dump_states)?;
    println!(
        "controller={} seed={} final_clusters={} min_clusters={} convergence_tick={} max_step={:.6} m",
        record.controller,
        record.seed,
        record.final_cluster_count,
        record.min_cluster_count,
        record.convergence_tick.map_or("none".into(), |t| t.to_string()),
        record.max_displacement
    );
    if let Some(last) = record.attractor_distances.last() {
        for (k, row) in last.mean_distance.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|d| d.map_or("-".into(), |d| format!("{d:.3}"))).collect();
            println!("type {k} mean distance to attractors: [{}]", cells.join(", "));
        }
    }
    println!("wrote {}", files.record.display());
    Ok(())
}

fn batch(args: &BatchArgs) -> Result<()> {
    let mut overrides = args.scenario.overrides.clone();
    if let Some(s) = args.stride {
        overrides.push(format!("stride={s}"));
    }
    let base = load_scenario(&args.scenario.scenario, &overrides)?;
    let spec = BatchSpec {
        base,
        seeds: parse_seeds(&args.seeds)?,
        controllers: args.controller.clone(),
        sweep: args.sweep.clone(),
    };
    let result = harness::run_batch(&spec)?;
    let (runs, agg) = harness::write_batch(&result, &args.out_dir)?;
    println!("cell,controller,runs,min_clusters_mean,ci99,final_clusters_mean,ci99,convergence_mean");
    for a in &result.aggregates {
        println!(
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{}",
            a.cell,
            a.controller,
            a.runs,
            a.min_clusters_mean,
            a.min_clusters_ci99,
            a.final_clusters_mean,
            a.final_clusters_ci99,
            a.convergence_mean.map_or("none".into(), |c| format!("{c:.1}"))
        );
    }
    println!("wrote {} and {}", runs.display(), agg.display());
    Ok(())
}

fn validate(args: &ScenarioArgs) -> Result<()> {
    let config = load_scenario(&args.scenario, &args.overrides)?;
    print!("{}", scenario::to_toml(&config));
    let p = &config.potential;
    let lo = p.d_min;
    let hi = config.sensing_radius;
    let curve = sample_pair_curve(charge_product(0, 0, p), p, lo, hi, 10_000);
    let (r_min, e_min) = curve.iter().copied().fold((f64::NAN, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    println!("# same-type pair minimum: {e_min:.4} at r = {r_min:.4} m");
    if config.partition.group_count() > 1 {
        let cross = sample_pair_curve(charge_product(0, 1, p), p, lo, hi, 10_000);
        let monotone = cross.windows(2).all(|w| w[1].1 < w[0].1);
        println!("# cross-type pair strictly decreasing on ({lo}, {hi}]: {monotone}");
    }
    println!("# config hash {}", harness::config_hash(&config));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run(a) => run(a, false),
        Command::Shape(a) => run(a, true),
        Command::Batch(a) => batch(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidConfig(_) | Error::Parse(_) | Error::BadOverride(_) => 2,
                _ => 1,
            })
        }
    }
}
