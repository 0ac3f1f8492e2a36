//! Playback spheres travelling along paths.

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use glam::Vec3;
use serde::{Deserialize, Serialize};

use crate::district::{DistrictGrid, QueryOptions};
use crate::model::{Dataset, Path, PathId};
use crate::selector::WorldShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaybackMode {
    /// Clock is compared against each atom's time value.
    GlobalTime,
    /// Clock advances a fractional atom index.
    Index,
    /// Index playback from each path's first contact with a selection.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackState {
    pub enabled: bool,
    pub mode: PlaybackMode,
    pub clock: f64,
    pub speed: f64,
    pub sphere_radius: f64,
    pub drop_offsets: BTreeMap<PathId, u32>,
}

impl Default for PlaybackState {
    fn default() -> Self {
        PlaybackState {
            enabled: false,
            mode: PlaybackMode::Index,
            clock: 0.0,
            speed: 1.0,
            sphere_radius: 0.1,
            drop_offsets: BTreeMap::new(),
        }
    }
}

impl PlaybackState {
    pub fn advance(&mut self, dt: f64) {
        if dt > 0.0 {
            self.clock += dt;
        }
    }
}

fn strictly_increasing(times: &[f32]) -> bool {
    times.windows(2).all(|w| w[0] < w[1])
}

fn at_fractional_index(positions: &[Vec3], f: f64) -> Option<Vec3> {
    if !(f >= 0.0) || positions.is_empty() {
        return None;
    }
    let last = (positions.len() - 1) as f64;
    if f > last {
        return None;
    }
    let i = f.floor() as usize;
    if i + 1 >= positions.len() {
        return Some(positions[positions.len() - 1]);
    }
    let t = (f - i as f64) as f32;
    Some(positions[i].lerp(positions[i + 1], t))
}

/// Sphere position on `path` at the current clock, or `None` when the
/// sphere has not started or has run past the end. Paths without strictly
/// increasing times fall back to index playback.
pub fn sphere_position(path: &Path, state: &PlaybackState) -> Option<Vec3> {
    let s = state.clock * state.speed;
    match state.mode {
        PlaybackMode::GlobalTime => match &path.times {
            Some(times) if times.len() >= 2 && strictly_increasing(times) => {
                if s < times[0] as f64 || s > times[times.len() - 1] as f64 {
                    return None;
                }
                let k = times.partition_point(|&t| (t as f64) <= s);
                if k >= times.len() {
                    return Some(path.positions[times.len() - 1]);
                }
                let (t0, t1) = (times[k - 1] as f64, times[k] as f64);
                let u = ((s - t0) / (t1 - t0)) as f32;
                Some(path.positions[k - 1].lerp(path.positions[k], u))
            }
            _ => at_fractional_index(&path.positions, s),
        },
        PlaybackMode::Index => at_fractional_index(&path.positions, s),
        PlaybackMode::Drop => {
            let start = *state.drop_offsets.get(&path.id)?;
            at_fractional_index(&path.positions, start as f64 + s)
        }
    }
}

/// Seeds drop playback: every visible path touching `shape` starts at the
/// lower atom of its first touching ribbon, all at clock zero.
pub fn drop_on_selection(
    grid: &DistrictGrid,
    state: &mut PlaybackState,
    shape: &WorldShape,
    visible: &FixedBitSet,
    options: QueryOptions,
) {
    state.drop_offsets.clear();
    for hit in grid.query(shape, options, Some(visible)) {
        state.drop_offsets.entry(hit.path_id).or_insert(hit.index);
    }
    state.clock = 0.0;
    state.mode = PlaybackMode::Drop;
}

/// Positions of all playing spheres among visible paths.
pub fn sphere_positions(dataset: &Dataset, state: &PlaybackState, visible: &FixedBitSet) -> Vec<(PathId, Vec3)> {
    let ids: Box<dyn Iterator<Item = PathId>> = match state.mode {
        PlaybackMode::Drop => Box::new(state.drop_offsets.keys().copied()),
        _ => Box::new(0..dataset.path_count() as PathId),
    };
    ids.filter(|&id| visible.contains(id as usize))
        .filter_map(|id| sphere_position(dataset.path(id)?, state).map(|p| (id, p)))
        .collect()
}
