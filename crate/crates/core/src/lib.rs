//! Decentralized segregative flocking for heterogeneous robot swarms.
//!
//! Each robot samples its next velocity from a local Gibbs distribution
//! over a Coulomb-Buckingham pair energy plus kinetic consensus terms. Robots
//! of the same type attract and align, robots of different types repel, and
//! walls are point clouds that repel everyone. Over time the swarm sorts
//! itself into one moving cluster per type.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: robots, partitions, arenas and the scenario configuration.
//! * [`potential`]: the energy terms and the local Hamiltonian.
//! * [`sampler`]: the Metropolis velocity update and the exact local Gibbs
//!   distribution it targets.
//! * [`baseline_gd`]: a deterministic gradient-descent contrast controller.
//! * [`sim`]: sensing, synchronous stepping, and run iteration.
//! * [`metrics`]: cluster counts, cohesion and velocity consensus.
//! * [`harness`] and [`scenario`]: scenario files, run records and batches.
//!
//! ```
//! use grf_swarm::model::{Arena, GroupPartition, SwarmConfig};
//! use grf_swarm::sim::Simulation;
//!
//! let config = SwarmConfig {
//!     partition: GroupPartition::from_sizes(&[3, 3]),
//!     arena: Arena::square(3.0),
//!     seed: 7,
//!     ..SwarmConfig::default()
//! };
//! let mut sim = Simulation::new(config)?;
//! for _ in 0..10 {
//!     sim.step();
//! }
//! assert_eq!(sim.state().tick, 10);
//! # Ok::<(), grf_swarm::Error>(())
//! ```

pub mod baseline_gd;
mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod potential;
pub mod sampler;
pub mod scenario;
pub mod sim;
mod vec2;

pub use error::{Error, Result};
pub use vec2::Vec2;

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/sampler.md")]
    mod sampler {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/parameters.md")]
    mod parameters {}
}
