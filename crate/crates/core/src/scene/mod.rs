//! Room geometry: meshes, voxel grids and source / receiver placements.

mod mesh;
mod voxel;

pub use mesh::{load_mesh, parse_obj, write_obj, LoadedMesh, TriMesh};
pub use voxel::{voxelize, CellKind, VoxelGrid, DEFAULT_CELL_BUDGET};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Default receiver (array centre) height above the floor, in metres.
pub const RECEIVER_HEIGHT: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub sources: Vec<Vec3>,
    /// Array centres.
    pub receivers: Vec<Vec3>,
    pub receiver_height: f64,
}

impl Placement {
    /// Checks that every point lies in one air region with at least
    /// `array_radius + dx` of air around it. Returns that region.
    pub fn validate(&self, grid: &VoxelGrid, array_radius: f64) -> Result<u32> {
        let clearance = array_radius + grid.dx();
        let mut region = None;
        let points = self
            .sources
            .iter()
            .map(|p| ("source", p))
            .chain(self.receivers.iter().map(|p| ("receiver", p)));
        for (i, (what, p)) in points.enumerate() {
            let r = grid
                .containing_region(p)
                .ok_or_else(|| Error::Placement(format!("{what} {i} at {:?} is not in air", p.as_slice())))?;
            if *region.get_or_insert(r) != r {
                return Err(Error::Placement(format!("{what} {i} lies in a different air region")));
            }
            if !grid.clearance_ok(p, clearance) {
                return Err(Error::Placement(format!(
                    "{what} {i} at {:?} is closer than {clearance:.3} m to a surface",
                    p.as_slice()
                )));
            }
        }
        region.ok_or_else(|| Error::Placement("no sources or receivers".into()))
    }
}
