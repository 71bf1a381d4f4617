//! Safeguards and maps shipped with the crate, embedded at compile time.

use crate::gridworld::{load_map, GridMap};
use crate::safeguard::{parse_safeguard, Safeguard};

/// Names of the valid shipped safeguards.
pub const SAFEGUARDS: &[&str] = &[
    "basic-lava",
    "basic-creeper",
    "safeguard-1",
    "safeguard-2",
    "safeguard-3",
    "doom-basic-lava",
    "doom-basic-enemy",
    "doom-safeguard-1",
    "doom-safeguard-2",
];

/// The Minecraft-style progression, from the basic machines to safeguard 3.
pub const CURRICULUM: &[&str] = &[
    "basic-lava",
    "basic-creeper",
    "safeguard-1",
    "safeguard-2",
    "safeguard-3",
];

pub fn safeguard_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "basic-lava" => include_str!("../fixtures/safeguards/basic-lava.sg"),
        "basic-creeper" => include_str!("../fixtures/safeguards/basic-creeper.sg"),
        "safeguard-1" => include_str!("../fixtures/safeguards/safeguard-1.sg"),
        "safeguard-2" => include_str!("../fixtures/safeguards/safeguard-2.sg"),
        "safeguard-3" => include_str!("../fixtures/safeguards/safeguard-3.sg"),
        "doom-basic-lava" => include_str!("../fixtures/safeguards/doom-basic-lava.sg"),
        "doom-basic-enemy" => include_str!("../fixtures/safeguards/doom-basic-enemy.sg"),
        "doom-safeguard-1" => include_str!("../fixtures/safeguards/doom-safeguard-1.sg"),
        "doom-safeguard-2" => include_str!("../fixtures/safeguards/doom-safeguard-2.sg"),
        "nondeterministic" => include_str!("../fixtures/safeguards/nondeterministic.sg"),
        _ => return None,
    })
}

/// Parses a shipped safeguard. Panics on unknown names.
pub fn safeguard(name: &str) -> Safeguard {
    let text = safeguard_text(name).unwrap_or_else(|| panic!("no shipped safeguard '{name}'"));
    parse_safeguard(text).unwrap_or_else(|e| panic!("shipped safeguard '{name}': {e}"))
}

/// Names of the shipped maps. `crafting` is the default 10x10 world; the
/// `layout-*` maps rearrange the same objects.
pub const MAPS: &[&str] = &[
    "crafting",
    "layout-gap",
    "layout-river",
    "layout-pools",
    "layout-ring",
    "graded-hazards",
    "corridor",
];

pub fn map_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "crafting" => include_str!("../fixtures/maps/crafting.map"),
        "layout-gap" => include_str!("../fixtures/maps/layout-gap.map"),
        "layout-river" => include_str!("../fixtures/maps/layout-river.map"),
        "layout-pools" => include_str!("../fixtures/maps/layout-pools.map"),
        "layout-ring" => include_str!("../fixtures/maps/layout-ring.map"),
        "graded-hazards" => include_str!("../fixtures/maps/graded-hazards.map"),
        "corridor" => include_str!("../fixtures/maps/corridor.map"),
        _ => return None,
    })
}

/// Parses a shipped map. Panics on unknown names.
pub fn map(name: &str) -> GridMap {
    let text = map_text(name).unwrap_or_else(|| panic!("no shipped map '{name}'"));
    load_map(text).unwrap_or_else(|e| panic!("shipped map '{name}': {e}"))
}
