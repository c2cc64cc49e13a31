//! Image-source method for axis-aligned shoebox rooms.

use super::EnergyDeposit;
use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::materials::NUM_BANDS;
use crate::scene::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shoebox {
    pub min: Vec3,
    pub max: Vec3,
}

impl Shoebox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|a| !(max[a] > min[a])) {
            return Err(Error::Domain("shoebox extent must be positive on every axis".into()));
        }
        Ok(Shoebox { min, max })
    }

    /// Recognises a mesh made only of axis-aligned faces lying on its own
    /// bounding box.
    pub fn from_mesh(mesh: &TriMesh) -> Result<Self> {
        let b: Aabb = mesh.bounds();
        let tol = 1e-9 * (1.0 + b.extent().norm());
        for t in 0..mesh.triangle_count() {
            let c = mesh.corners(t);
            let on_face = (0..3).any(|a| {
                c.iter().all(|v| (v[a] - b.min[a]).abs() <= tol) || c.iter().all(|v| (v[a] - b.max[a]).abs() <= tol)
            });
            if !on_face {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is not on the bounding box; not a shoebox"
                )));
            }
        }
        Shoebox::new(b.min, b.max)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] > self.min[a] && p[a] < self.max[a])
    }
}

/// Specular arrivals through every image of order ≤ `max_order`, with the
/// same energy convention as the ray tracer: `(1 - α_b)^order / d²`. An
/// image coinciding with the receiver is skipped.
pub fn image_source_oracle(
    room: &Shoebox,
    absorption: &[f64; NUM_BANDS],
    source: &Vec3,
    receiver: &Vec3,
    max_order: usize,
    speed_of_sound: f64,
) -> Result<Vec<EnergyDeposit>> {
    if !room.contains(source) || !room.contains(receiver) {
        return Err(Error::Placement(
            "source and receiver must lie inside the shoebox".into(),
        ));
    }
    let len = room.max - room.min;
    let s = source - room.min;
    let r = receiver - room.min;
    let q_max = max_order as i64;
    // per axis: (coordinate relative to min, reflection count)
    let axis_images = |a: usize| -> Vec<(f64, usize)> {
        let mut v = Vec::new();
        for q in -q_max..=q_max {
            for p in 0..2i64 {
                let order = (2 * q - p).unsigned_abs() as usize;
                if order <= max_order {
                    let x = if p == 0 { s[a] } else { -s[a] } + 2.0 * q as f64 * len[a];
                    v.push((x, order));
                }
            }
        }
        v
    };
    let (ix, iy, iz) = (axis_images(0), axis_images(1), axis_images(2));
    let mut out = Vec::new();
    for &(x, ox) in &ix {
        for &(y, oy) in &iy {
            for &(z, oz) in &iz {
                let order = ox + oy + oz;
                if order > max_order {
                    continue;
                }
                let img = Vec3::new(x, y, z);
                let d = (img - r).norm();
                if d < 1e-9 {
                    continue;
                }
                out.push(EnergyDeposit {
                    time: d / speed_of_sound,
                    direction: (img - r) / d,
                    band_energy: absorption.map(|a| (1.0 - a).powi(order as i32) / (d * d)),
                    sign: 1.0,
                });
            }
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}
