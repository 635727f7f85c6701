//! Scenario files.
//!
//! A scenario is a TOML document whose keys map one-to-one onto
//! [`SwarmConfig`]; omitted keys take their defaults and unknown keys are
//! rejected. Dotted `key=value` overrides are applied to the document
//! before it is decoded, so they obey the same schema.
//!
//! ```toml
//! group_sizes = [5, 5, 5]
//! max_ticks = 5000
//! seed = 7
//!
//! [arena]
//! width = 4.0
//! height = 4.0
//!
//! [potential]
//! sign_mode = "segregating"
//!
//! [[attractors]]
//! position = [1.0, 1.0]
//! target_type = 0
//! charge = 20.0
//! ```

use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{Arena, GroupPartition, PotentialParams, SwarmConfig, VirtualAttractor};
use crate::Vec2;

/// Decodes and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<SwarmConfig> {
    parse_with_overrides(text, &[])
}

/// Decodes `text` after applying `key=value` overrides.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<SwarmConfig> {
    let mut table: Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: SwarmConfig = table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Reads a scenario from `path`. A path of the form `preset:<name>` selects
/// a built-in preset instead.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<SwarmConfig> {
    let text = match path.to_str().and_then(|s| s.strip_prefix("preset:")) {
        Some(name) => {
            let preset = preset(name).ok_or_else(|| Error::Parse(format!("unknown preset `{name}`")))?;
            to_toml(&preset)
        }
        None => std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
    };
    parse_with_overrides(&text, overrides)
}

/// Sets a dotted key. The value is read as a TOML literal, falling back to
/// a bare string.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::BadOverride(assignment.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::BadOverride(assignment.to_string()));
    }
    let value = toml::from_str::<Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::BadOverride(format!("{assignment}: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Canonical TOML rendering of a configuration, including every default.
pub fn to_toml(config: &SwarmConfig) -> String {
    toml::to_string(config).expect("configuration is always representable")
}

/// Names of the built-in presets.
pub const PRESETS: &[&str] = &[
    "full-segregation",
    "full-flocking",
    "desk-segregation",
    "desk-flocking",
    "desk-shape",
];

/// Built-in scenarios. The full-scale ones use the full 10 m arena and
/// 20000 ticks; the desk-scale ones shrink robot counts, arenas and run
/// length but keep the physics. `desk-shape` drops the speed term so robots
/// can come to rest on their attractor.
pub fn preset(name: &str) -> Option<SwarmConfig> {
    let base = SwarmConfig::default();
    Some(match name {
        "full-segregation" => SwarmConfig {
            partition: GroupPartition::from_sizes(&[10; 5]),
            max_ticks: 20_000,
            ..base
        },
        "full-flocking" => SwarmConfig {
            partition: GroupPartition::from_sizes(&[30; 5]),
            max_ticks: 20_000,
            ..base
        },
        "desk-segregation" => SwarmConfig {
            partition: GroupPartition::from_sizes(&[5; 3]),
            arena: Arena::square(4.0),
            max_ticks: 5_000,
            ..base
        },
        "desk-flocking" => SwarmConfig {
            partition: GroupPartition::from_sizes(&[5; 2]),
            arena: Arena::square(6.0),
            max_ticks: 10_000,
            ..base
        },
        "desk-shape" => SwarmConfig {
            partition: GroupPartition::from_sizes(&[5; 2]),
            arena: Arena::square(4.0),
            max_ticks: 3_000,
            // robots must be able to stop on their site
            potential: PotentialParams {
                speed_incentive: false,
                ..PotentialParams::default()
            },
            attractors: vec![
                VirtualAttractor {
                    position: Vec2::new(1.0, 1.0),
                    target_type: 0,
                    charge: 20.0,
                },
                VirtualAttractor {
                    position: Vec2::new(3.0, 3.0),
                    target_type: 1,
                    charge: 20.0,
                },
            ],
            ..base
        },
        _ => return None,
    })
}
