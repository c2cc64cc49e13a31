//! Random source and receiver placement inside the voxelised room.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scene::{Placement, VoxelGrid, RECEIVER_HEIGHT};
use crate::sharm::ARRAY_RADIUS;

pub const MIN_SOURCE_RECEIVER_DISTANCE: f64 = 0.5;
/// Random draws allowed per requested point before giving up.
const ATTEMPTS_PER_POINT: usize = 2000;

/// Receivers at `floor_z + 1.5 m`, sources anywhere; all on air-cell
/// centres of the largest air region with room for the array plus one cell.
/// Returns fewer points than requested (with a warning) when the room is
/// too crowded, and an error when none fit.
pub fn sample_placements(
    grid: &VoxelGrid,
    floor_z: f64,
    sources: usize,
    receivers: usize,
    seed: u64,
) -> Result<Placement> {
    let region = grid
        .largest_region()
        .ok_or_else(|| Error::Placement("scene has no air region".into()))?;
    let clearance = ARRAY_RADIUS + grid.dx();
    let z_rcv = floor_z + RECEIVER_HEIGHT;
    let half = grid.dx() / 2.0;
    let mut air = Vec::new();
    let mut layer = Vec::new();
    for idx in 0..grid.cell_count() {
        if grid.region_of(idx) == Some(region) {
            air.push(idx);
            if (grid.cell_center(idx).z - z_rcv).abs() <= half {
                layer.push(idx);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let usable = |p: &Vec3| grid.containing_region(p) == Some(region) && grid.clearance_ok(p, clearance);

    let mut rcv: Vec<Vec3> = Vec::new();
    let mut tries = 0;
    while rcv.len() < receivers && tries < ATTEMPTS_PER_POINT * receivers && !layer.is_empty() {
        tries += 1;
        let c = grid.cell_center(layer[rng.random_range(0..layer.len())]);
        let p = Vec3::new(c.x, c.y, z_rcv);
        if !rcv.iter().any(|q| (q - p).norm() < 1e-9) && usable(&p) {
            rcv.push(p);
        }
    }
    let mut src: Vec<Vec3> = Vec::new();
    let mut tries = 0;
    while src.len() < sources && tries < ATTEMPTS_PER_POINT * sources && !air.is_empty() && !rcv.is_empty() {
        tries += 1;
        let p = grid.cell_center(air[rng.random_range(0..air.len())]);
        let far = rcv.iter().all(|q| (q - p).norm() >= MIN_SOURCE_RECEIVER_DISTANCE);
        if far && !src.iter().any(|q| (q - p).norm() < 1e-9) && usable(&p) {
            src.push(p);
        }
    }
    if src.is_empty() || rcv.is_empty() {
        return Err(Error::Placement(format!(
            "room too small: placed {} of {sources} sources and {} of {receivers} receivers",
            src.len(),
            rcv.len()
        )));
    }
    if src.len() < sources || rcv.len() < receivers {
        log::warn!(
            "partial placement: {} of {sources} sources, {} of {receivers} receivers",
            src.len(),
            rcv.len()
        );
    }
    Ok(Placement {
        sources: src,
        receivers: rcv,
        receiver_height: RECEIVER_HEIGHT,
    })
}
