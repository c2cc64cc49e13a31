//! Fixtures shared by the benchmarks.

use hoarir::materials::{statistical_admittance, MaterialSpec};
use hoarir::scene::voxelize;
use hoarir::{MaterialTable, TriMesh, Vec3, VoxelGrid};

/// A 4 × 3 × 2.5 m room with one uniform material.
pub fn small_room() -> (TriMesh, MaterialTable) {
    let mut mesh = TriMesh::cuboid(Vec3::zeros(), Vec3::new(4.0, 3.0, 2.5), "wall").expect("valid box");
    let table = MaterialTable::new(vec![MaterialSpec::uniform("wall", 0.2, 0.3).expect("valid")], 0).expect("valid");
    mesh.set_uniform_material(0);
    (mesh, table)
}

pub fn small_grid(dx: f64) -> VoxelGrid {
    let (mesh, _) = small_room();
    let g = statistical_admittance(0.2).expect("valid");
    voxelize(&mesh, dx, &[g], u64::MAX).expect("voxelises")
}
