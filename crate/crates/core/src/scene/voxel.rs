//! Conservative voxelisation of a triangle mesh into air / boundary / exterior cells.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::{clipped_triangle_area, triangle_box_overlap, Aabb, Vec3};
use crate::scene::TriMesh;

pub const DEFAULT_CELL_BUDGET: u64 = 64_000_000;

const NO_MATERIAL: u16 = u16::MAX;
const NO_REGION: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellKind {
    Air,
    Boundary,
    Exterior,
}

/// Cell-centred grid. Cell `(i, j, k)` is centred at `origin + (i, j, k)·dx`
/// and stored at `i + nx·(j + ny·k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dx: f64,
    origin: Vec3,
    dims: [usize; 3],
    kinds: Vec<CellKind>,
    cell_material: Vec<u16>,
    material_admittance: Vec<f64>,
    region: Vec<u32>,
    region_sizes: Vec<usize>,
}

impl VoxelGrid {
    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[CellKind] {
        &self.kinds
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn cell_center(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.dx
    }

    /// Index offsets of the six face neighbours (-x, +x, -y, +y, -z, +z).
    /// Only valid for cells not on the grid's outer layer, which holds for
    /// every air and boundary cell.
    #[inline]
    pub fn neighbors(&self, idx: usize) -> [usize; 6] {
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        [idx - sx, idx + sx, idx - sy, idx + sy, idx - sz, idx + sz]
    }

    pub fn kind(&self, idx: usize) -> CellKind {
        self.kinds[idx]
    }

    /// Cell whose centre is nearest to `p`, if inside the grid.
    pub fn cell_of(&self, p: &Vec3) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.dx).round();
            if !(0.0..self.dims[a] as f64).contains(&f) {
                return None;
            }
            c[a] = f as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    pub fn material(&self, idx: usize) -> Option<usize> {
        let m = self.cell_material[idx];
        (m != NO_MATERIAL).then_some(m as usize)
    }

    /// Specific admittance of a boundary cell.
    pub fn admittance(&self, idx: usize) -> Option<f64> {
        self.material(idx).map(|m| self.material_admittance[m])
    }

    /// Number of air cells sharing a face with `idx`.
    pub fn boundary_face_count(&self, idx: usize) -> u8 {
        self.neighbors(idx)
            .iter()
            .filter(|&&n| self.kinds[n] == CellKind::Air)
            .count() as u8
    }

    /// Connected air region of the cell at `idx`.
    pub fn region_of(&self, idx: usize) -> Option<u32> {
        let r = self.region[idx];
        (r != NO_REGION).then_some(r)
    }

    /// Connected air region containing `p`; `None` if `p` is outside the grid
    /// or falls in a boundary or exterior cell.
    pub fn containing_region(&self, p: &Vec3) -> Option<u32> {
        self.cell_of(p).and_then(|idx| self.region_of(idx))
    }

    pub fn region_count(&self) -> usize {
        self.region_sizes.len()
    }

    /// Air-cell count per region, indexed by region id.
    pub fn region_sizes(&self) -> &[usize] {
        &self.region_sizes
    }

    /// Region with the most air cells (lowest id on ties).
    pub fn largest_region(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (r, &n) in self.region_sizes.iter().enumerate() {
            if best.is_none_or(|(m, _)| n > m) {
                best = Some((n, r as u32));
            }
        }
        best.map(|(_, r)| r)
    }

    pub fn air_volume(&self, region: u32) -> f64 {
        self.region_sizes[region as usize] as f64 * self.dx.powi(3)
    }

    /// True when every cell centred within `radius` of `p` is air.
    pub fn clearance_ok(&self, p: &Vec3, radius: f64) -> bool {
        let reach = (radius / self.dx).ceil() as i64 + 1;
        let Some(center) = self.cell_of(p) else {
            return false;
        };
        let c = self.coords(center);
        let r2 = radius * radius;
        for dk in -reach..=reach {
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    let (i, j, k) = (c[0] as i64 + di, c[1] as i64 + dj, c[2] as i64 + dk);
                    if i < 0
                        || j < 0
                        || k < 0
                        || i >= self.dims[0] as i64
                        || j >= self.dims[1] as i64
                        || k >= self.dims[2] as i64
                    {
                        return false;
                    }
                    let idx = self.index(i as usize, j as usize, k as usize);
                    if (self.cell_center(idx) - p).norm_squared() <= r2 && self.kinds[idx] != CellKind::Air {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Nearest air cell to `p` within one cell of its containing cell.
    pub fn nearest_air(&self, p: &Vec3) -> Option<usize> {
        let center = self.cell_of(p)?;
        if self.kinds[center] == CellKind::Air {
            return Some(center);
        }
        let c = self.coords(center);
        let mut best: Option<(f64, usize)> = None;
        for dk in -1i64..=1 {
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (i, j, k) = (c[0] as i64 + di, c[1] as i64 + dj, c[2] as i64 + dk);
                    if i < 0 || j < 0 || k < 0 {
                        continue;
                    }
                    let (i, j, k) = (i as usize, j as usize, k as usize);
                    if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
                        continue;
                    }
                    let idx = self.index(i, j, k);
                    if self.kinds[idx] != CellKind::Air {
                        continue;
                    }
                    let d = (self.cell_center(idx) - p).norm_squared();
                    if best.is_none_or(|(bd, bi)| d < bd || (d == bd && idx < bi)) {
                        best = Some((d, idx));
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

/// Voxelises `mesh` at cell size `dx`. `admittance[m]` is the boundary
/// admittance of material `m`; every `mesh.material_ids` entry must index it.
///
/// Cells whose closed box touches a triangle become boundary cells carrying
/// the material with the largest clipped area in that cell (lowest index on
/// ties). Exterior is flood-filled from the one-cell margin, the rest is air,
/// and boundary cells with no air face neighbour are demoted to exterior.
pub fn voxelize(mesh: &TriMesh, dx: f64, admittance: &[f64], cell_budget: u64) -> Result<VoxelGrid> {
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::Domain(format!("cell size {dx} must be positive")));
    }
    if let Some(g) = admittance.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::Domain(format!("admittance {g} outside [0, 1]")));
    }
    if let Some(&m) = mesh.material_ids.iter().find(|&&m| m >= admittance.len()) {
        return Err(Error::Domain(format!("material id {m} has no admittance")));
    }
    if admittance.len() >= NO_MATERIAL as usize {
        return Err(Error::Domain("too many materials".into()));
    }

    let bb: Aabb = mesh.bounds();
    let ext = bb.extent();
    let dims = [0, 1, 2].map(|a| (ext[a] / dx).ceil() as usize + 3);
    let cells = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
    match cells {
        Some(c) if c <= cell_budget => {}
        _ => {
            return Err(Error::CellBudget {
                cells: cells.unwrap_or(u64::MAX),
                budget: cell_budget,
            })
        }
    }
    let origin = bb.min - Vec3::repeat(dx);
    let n = dims[0] * dims[1] * dims[2];
    let index = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);

    // Per-cell intersected area by material.
    let half = Vec3::repeat(dx / 2.0);
    let mut hits: HashMap<usize, Vec<(u16, f64)>> = HashMap::new();
    for t in 0..mesh.triangle_count() {
        let tri = mesh.corners(t);
        let mat = mesh.material_ids[t] as u16;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let mn = tri.iter().map(|v| v[a]).fold(f64::INFINITY, f64::min);
            let mx = tri.iter().map(|v| v[a]).fold(f64::NEG_INFINITY, f64::max);
            lo[a] = (((mn - origin[a]) / dx - 0.5).floor().max(0.0)) as usize;
            hi[a] = ((((mx - origin[a]) / dx + 0.5).ceil()) as usize).min(dims[a] - 1);
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let c = origin + Vec3::new(i as f64, j as f64, k as f64) * dx;
                    if !triangle_box_overlap(&c, &half, tri) {
                        continue;
                    }
                    let area = clipped_triangle_area(&c, &half, tri);
                    let entry = hits.entry(index(i, j, k)).or_default();
                    match entry.iter_mut().find(|(m, _)| *m == mat) {
                        Some(slot) => slot.1 += area,
                        None => entry.push((mat, area)),
                    }
                }
            }
        }
    }

    let mut cell_material = vec![NO_MATERIAL; n];
    for (&idx, mats) in &hits {
        let mut best = (NO_MATERIAL, f64::NEG_INFINITY);
        for &(m, a) in mats {
            if a > best.1 || (a == best.1 && m < best.0) {
                best = (m, a);
            }
        }
        cell_material[idx] = best.0;
    }

    // Flood-fill exterior from the margin corner; the margin shell is connected.
    let mut kinds = vec![CellKind::Air; n];
    for (idx, m) in cell_material.iter().enumerate() {
        if *m != NO_MATERIAL {
            kinds[idx] = CellKind::Boundary;
        }
    }
    let mut visited = vec![false; n];
    let mut stack = vec![0usize];
    visited[0] = true;
    while let Some(idx) = stack.pop() {
        kinds[idx] = CellKind::Exterior;
        for nb in face_neighbors_checked(idx, dims).into_iter().flatten() {
            if !visited[nb] && kinds[nb] != CellKind::Boundary {
                visited[nb] = true;
                stack.push(nb);
            }
        }
    }

    // Boundary cells that touch no air are not needed by the solver.
    for idx in 0..n {
        if kinds[idx] == CellKind::Boundary {
            let touches_air = face_neighbors_checked(idx, dims)
                .into_iter()
                .flatten()
                .any(|nb| kinds[nb] == CellKind::Air);
            if !touches_air {
                kinds[idx] = CellKind::Exterior;
                cell_material[idx] = NO_MATERIAL;
            }
        }
    }

    // Label connected air regions in scan order.
    let mut region = vec![NO_REGION; n];
    let mut region_sizes = Vec::new();
    for seed in 0..n {
        if kinds[seed] != CellKind::Air || region[seed] != NO_REGION {
            continue;
        }
        let id = region_sizes.len() as u32;
        let mut size = 0;
        region[seed] = id;
        stack.push(seed);
        while let Some(idx) = stack.pop() {
            size += 1;
            for nb in face_neighbors_checked(idx, dims).into_iter().flatten() {
                if kinds[nb] == CellKind::Air && region[nb] == NO_REGION {
                    region[nb] = id;
                    stack.push(nb);
                }
            }
        }
        region_sizes.push(size);
    }

    Ok(VoxelGrid {
        dx,
        origin,
        dims,
        kinds,
        cell_material,
        material_admittance: admittance.to_vec(),
        region,
        region_sizes,
    })
}

fn face_neighbors_checked(idx: usize, dims: [usize; 3]) -> [Option<usize>; 6] {
    let [nx, ny, nz] = dims;
    let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
    let sy = nx;
    let sz = nx * ny;
    [
        (i > 0).then(|| idx - 1),
        (i + 1 < nx).then(|| idx + 1),
        (j > 0).then(|| idx - sy),
        (j + 1 < ny).then(|| idx + sy),
        (k > 0).then(|| idx - sz),
        (k + 1 < nz).then(|| idx + sz),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(min: f64, max: f64) -> TriMesh {
        TriMesh::cuboid(Vec3::repeat(min), Vec3::repeat(max), "wall").unwrap()
    }

    #[test]
    fn unit_cube_at_half_metre() {
        // Centres at -0.5, 0, 0.5, 1, 1.5 per axis. Cells centred on 0 and 1
        // touch the faces; only (0.5, 0.5, 0.5) is enclosed. Of the 26 shell
        // cells, the 6 face-adjacent ones border it and stay boundary.
        let g = voxelize(&cube(0.0, 1.0), 0.5, &[0.3], DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(g.dims(), [5, 5, 5]);
        let count = |k| g.kinds().iter().filter(|&&c| c == k).count();
        assert_eq!(count(CellKind::Air), 1);
        assert_eq!(count(CellKind::Boundary), 6);
        assert_eq!(count(CellKind::Exterior), 125 - 7);
        let centre = g.index(2, 2, 2);
        assert_eq!(g.kind(centre), CellKind::Air);
        for nb in g.neighbors(centre) {
            assert_eq!(g.kind(nb), CellKind::Boundary);
            assert_eq!(g.boundary_face_count(nb), 1);
            assert_eq!(g.admittance(nb), Some(0.3));
        }
        assert_eq!(g.region_count(), 1);
        assert_eq!(g.containing_region(&Vec3::repeat(0.5)), Some(0));
        assert_eq!(g.containing_region(&Vec3::repeat(1000.0)), None);
    }

    #[test]
    fn two_disjoint_boxes_give_two_regions() {
        let mut m = cube(0.0, 1.0);
        m.append(&TriMesh::cuboid(Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.0, 1.0, 1.0), "wall").unwrap());
        let g = voxelize(&m, 0.1, &[0.0], DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(g.region_count(), 2);
        let a = g.containing_region(&Vec3::new(0.5, 0.5, 0.5)).unwrap();
        let b = g.containing_region(&Vec3::new(2.5, 0.5, 0.5)).unwrap();
        assert_ne!(a, b);
        assert_eq!(g.region_sizes()[a as usize], g.region_sizes()[b as usize]);
        assert_eq!(g.containing_region(&Vec3::new(1.5, 0.5, 0.5)), None);
    }

    #[test]
    fn boundary_cells_border_air() {
        let mut m = cube(0.0, 2.0);
        m.append(&TriMesh::cuboid(Vec3::repeat(0.7), Vec3::repeat(1.1), "table").unwrap());
        m.material_ids = (0..m.triangle_count()).map(|t| usize::from(t >= 12)).collect();
        let g = voxelize(&m, 0.13, &[0.1, 0.9], DEFAULT_CELL_BUDGET).unwrap();
        let mut seen = [false; 2];
        for idx in 0..g.cell_count() {
            if g.kind(idx) == CellKind::Boundary {
                let f = g.boundary_face_count(idx);
                assert!((1..=6).contains(&f));
                seen[g.material(idx).unwrap()] = true;
            } else {
                assert_eq!(g.material(idx), None);
            }
        }
        assert_eq!(seen, [true, true]);
        // the closed table encloses a sealed pocket of its own
        assert_eq!(g.region_count(), 2);
        assert_eq!(g.containing_region(&Vec3::repeat(0.3)), g.largest_region());
    }

    #[test]
    fn budget_exceeded() {
        match voxelize(&cube(0.0, 1.0), 0.01, &[0.0], 1000) {
            Err(Error::CellBudget { cells, budget }) => {
                assert_eq!(budget, 1000);
                assert_eq!(cells, 103u64.pow(3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let m = cube(0.0, 1.3);
        let a = voxelize(&m, 0.07, &[0.2], DEFAULT_CELL_BUDGET).unwrap();
        let b = voxelize(&m, 0.07, &[0.2], DEFAULT_CELL_BUDGET).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clearance_and_snapping() {
        let g = voxelize(&cube(0.0, 2.0), 0.1, &[0.0], DEFAULT_CELL_BUDGET).unwrap();
        assert!(g.clearance_ok(&Vec3::repeat(1.0), 0.5));
        assert!(!g.clearance_ok(&Vec3::repeat(1.0), 1.05));
        let wall_cell = g.cell_of(&Vec3::new(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(g.kind(wall_cell), CellKind::Boundary);
        let snapped = g.nearest_air(&Vec3::new(0.0, 1.0, 1.0)).unwrap();
        assert!((g.cell_center(snapped) - Vec3::new(0.1, 1.0, 1.0)).norm() < 1e-9);
    }
}
