use grf_swarm::harness::execute;
use grf_swarm::model::{Arena, Controller, GroupPartition, RobotState, SamplerParams, SwarmConfig, VirtualAttractor};
use grf_swarm::potential::{LocalView, NeighborObservation};
use grf_swarm::sampler::robot_stream;
use grf_swarm::scenario::preset;
use grf_swarm::sim::{initial_state, sense, NoiseParams, ObstacleIndex, Simulation, SwarmState};
use grf_swarm::Vec2;

fn small(seed: u64) -> SwarmConfig {
    SwarmConfig {
        partition: GroupPartition::from_sizes(&[4, 4, 4]),
        arena: Arena::square(2.0),
        seed,
        max_ticks: 60,
        stride: 5,
        ..SwarmConfig::default()
    }
}

#[test]
fn update_order_does_not_matter() {
    let config = SwarmConfig {
        noise_fraction: 0.1,
        ..small(21)
    };
    let mut forward = Simulation::new(config.clone()).unwrap();
    let mut shuffled = Simulation::new(config).unwrap();
    let n = forward.state().robots.len();
    let mut order: Vec<usize> = (0..n).rev().collect();
    for t in 0..60 {
        order.rotate_left(t % n);
        forward.step();
        shuffled.step_in_order(&order);
        assert_eq!(forward.state(), shuffled.state(), "tick {t}");
    }
}

#[test]
fn noise_free_sensing_is_symmetric() {
    let config = SwarmConfig {
        partition: GroupPartition::from_sizes(&[15, 15]),
        ..small(2)
    };
    for seed in 0..20 {
        let state = initial_state(&SwarmConfig { seed, ..config.clone() });
        let index = ObstacleIndex::new(&config.arena, config.sensing_radius);
        let n = state.robots.len();
        let neighbours: Vec<Vec<Vec2>> = (0..n)
            .map(|i| {
                let mut rng = robot_stream(seed, i, 0);
                let obs = sense(i, &state.robots, &index, config.sensing_radius, &NoiseParams::none(), &mut rng);
                obs.robots.iter().map(|o| state.robots[i].position + o.relative_position).collect()
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let sees = |a: usize, b: usize| neighbours[a].iter().any(|p| p.distance(state.robots[b].position) < 1e-12);
                assert_eq!(sees(i, j), sees(j, i), "seed {seed}: {i} vs {j}");
                let within = state.robots[i].position.distance(state.robots[j].position) <= config.sensing_radius;
                assert_eq!(sees(i, j), within);
            }
        }
    }
}

#[test]
fn robots_beyond_sensing_range_are_irrelevant() {
    let config = small(5);
    let robots = vec![
        RobotState { id: 0, position: Vec2::new(0.8, 0.8), velocity: Vec2::new(0.2, 0.1), group: 0 },
        RobotState { id: 1, position: Vec2::new(1.0, 0.9), velocity: Vec2::new(-0.3, 0.0), group: 1 },
    ];
    let mut with_far = robots.clone();
    with_far.push(RobotState { id: 2, position: Vec2::new(1.9, 1.9), velocity: Vec2::new(0.0, 0.9), group: 0 });
    let cfg = |n: usize| SwarmConfig {
        partition: GroupPartition::from_assignment(vec![0, 1, 0][..n].to_vec()),
        ..config.clone()
    };
    let near = Simulation::with_state(cfg(2), SwarmState { tick: 7, robots }).unwrap();
    let far = Simulation::with_state(cfg(3), SwarmState { tick: 7, robots: with_far }).unwrap();
    assert_eq!(near.next_velocity(0), far.next_velocity(0));
    assert_eq!(near.next_velocity(1), far.next_velocity(1));
}

#[test]
fn displacement_never_exceeds_the_cap() {
    for controller in [Controller::Grf, Controller::Gd] {
        for seed in 0..4 {
            let config = SwarmConfig {
                controller,
                noise_fraction: 0.2,
                max_ticks: 300,
                ..small(seed)
            };
            let record = execute(&config, |_| {}).unwrap();
            assert!(record.max_displacement <= config.displacement_cap() + 1e-12, "{controller} {seed}");
        }
    }
}

#[test]
fn positions_stay_inside_the_arena() {
    let config = SwarmConfig {
        noise_fraction: 0.3,
        max_ticks: 400,
        ..small(8)
    };
    execute(&config, |s| {
        for r in &s.robots {
            assert!(config.arena.contains(r.position), "{r:?}");
            assert!(r.velocity.norm() <= config.v_max + 1e-12);
        }
    })
    .unwrap();
}

#[test]
fn isolated_robot_reaches_full_speed_when_cold() {
    // At the default temperature thermal spread keeps the speed a few
    // percent below v_max, and a wide proposal wastes half its draws outside
    // the speed ball. A cold, narrow chain sits on the minimum.
    let config = SwarmConfig {
        partition: GroupPartition::from_sizes(&[1]),
        arena: Arena::square(40.0),
        sampler: SamplerParams {
            temperature: 1e-4,
            proposal_covariance: Some([[0.0025, 0.0], [0.0, 0.0025]]),
            ..SamplerParams::default()
        },
        seed: 1,
        ..SwarmConfig::default()
    };
    let mut sim = Simulation::with_state(
        config,
        SwarmState {
            tick: 0,
            robots: vec![RobotState { id: 0, position: Vec2::new(20.0, 20.0), velocity: Vec2::ZERO, group: 0 }],
        },
    )
    .unwrap();
    for _ in 0..400 {
        sim.step();
    }
    let speed = sim.state().robots[0].velocity.norm();
    assert!((0.99..=1.0 + 1e-12).contains(&speed), "{speed}");
}

#[test]
fn attractors_only_act_on_their_type() {
    let p = grf_swarm::model::PotentialParams::default();
    let attractors = [VirtualAttractor { position: Vec2::new(1.0, 1.0), target_type: 0, charge: 20.0 }];
    let robots = [NeighborObservation::robot(Vec2::new(0.2, 0.0), Vec2::new(0.5, 0.0), 1)];
    let view = |own_type, attractors| LocalView {
        position: Vec2::new(1.3, 1.2),
        own_type,
        robots: &robots,
        obstacles: &[],
        attractors,
        params: &p,
        v_max: 1.0,
        dt: 0.02,
    };
    for v in [Vec2::ZERO, Vec2::new(0.3, -0.4), Vec2::new(-0.9, 0.1)] {
        assert_eq!(view(1, &attractors).energy(v), view(1, &[]).energy(v));
        assert!(view(0, &attractors).energy(v) < view(0, &[]).energy(v));
    }
}

#[test]
fn each_type_gathers_at_its_attractor() {
    let base = preset("desk-shape").unwrap();
    for seed in 0..3 {
        let record = execute(&SwarmConfig { seed, ..base.clone() }, |_| {}).unwrap();
        let late = &record.attractor_distances[record.attractor_distances.len() / 2..];
        for k in 0..2 {
            let mean = |a: usize| late.iter().map(|s| s.mean_distance[k][a].unwrap()).sum::<f64>() / late.len() as f64;
            let own = base.attractors.iter().position(|a| a.target_type == k).unwrap();
            let other = 1 - own;
            assert!(mean(own) < mean(other), "seed {seed} type {k}: {} vs {}", mean(own), mean(other));
        }
    }
}

#[test]
fn shipped_scenarios_match_presets() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in grf_swarm::scenario::PRESETS {
        let path = dir.join(format!("{name}.toml"));
        let loaded = grf_swarm::scenario::load_scenario(&path, &[]).unwrap();
        assert_eq!(loaded, preset(name).unwrap(), "{name}");
    }
}
