//! Triangle meshes with per-face semantic labels, loaded from Wavefront OBJ.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{triangle_area, Aabb, Vec3};
use crate::materials::{LabelMatcher, MaterialTable};

/// Triangles below this area (m²) are dropped during validation.
const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub surface_labels: Vec<String>,
    /// Index into the material table; all zero until [`TriMesh::assign_materials`].
    pub material_ids: Vec<usize>,
}

/// A validated mesh plus the number of degenerate triangles removed.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriMesh,
    pub dropped_degenerate: usize,
}

impl TriMesh {
    /// Validates and builds a mesh, dropping zero-area triangles.
    #[allow(clippy::new_ret_no_self)]
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, surface_labels: Vec<String>) -> Result<LoadedMesh> {
        if triangles.len() != surface_labels.len() {
            return Err(Error::Shape(format!(
                "{} triangles but {} labels",
                triangles.len(),
                surface_labels.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&i) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex {i} of {}",
                    vertices.len()
                )));
            }
        }
        let mut kept = Vec::with_capacity(triangles.len());
        let mut labels = Vec::with_capacity(triangles.len());
        let mut dropped = 0;
        for (tri, label) in triangles.into_iter().zip(surface_labels) {
            let [a, b, c] = tri.map(|i| vertices[i]);
            if triangle_area(&a, &b, &c) < DEGENERATE_AREA {
                dropped += 1;
            } else {
                kept.push(tri);
                labels.push(label);
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangle(s)");
        }
        let mesh = TriMesh {
            material_ids: vec![0; kept.len()],
            vertices,
            triangles: kept,
            surface_labels: labels,
        };
        let ext = mesh.bounds().extent();
        if ext.iter().any(|&e| e <= 0.0) {
            return Err(Error::InvalidMesh(format!(
                "bounding box is flat: extent {:?}",
                ext.as_slice()
            )));
        }
        Ok(LoadedMesh {
            mesh,
            dropped_degenerate: dropped,
        })
    }

    /// Axis-aligned box from `min` to `max` with outward-facing triangles.
    pub fn cuboid(min: Vec3, max: Vec3, label: &str) -> Result<Self> {
        let mut m = TriMesh {
            vertices: Vec::new(),
            triangles: Vec::new(),
            surface_labels: Vec::new(),
            material_ids: Vec::new(),
        };
        m.push_cuboid(min, max, label);
        Ok(TriMesh::new(m.vertices, m.triangles, m.surface_labels)?.mesh)
    }

    fn push_cuboid(&mut self, min: Vec3, max: Vec3, label: &str) {
        let base = self.vertices.len();
        for k in 0..8 {
            self.vertices.push(Vec3::new(
                if k & 1 == 0 { min.x } else { max.x },
                if k & 2 == 0 { min.y } else { max.y },
                if k & 4 == 0 { min.z } else { max.z },
            ));
        }
        // quads wound counter-clockwise seen from outside
        const QUADS: [[usize; 4]; 6] = [
            [0, 2, 3, 1], // z = min
            [4, 5, 7, 6], // z = max
            [0, 1, 5, 4], // y = min
            [2, 6, 7, 3], // y = max
            [0, 4, 6, 2], // x = min
            [1, 3, 7, 5], // x = max
        ];
        for q in QUADS {
            let q = q.map(|i| base + i);
            self.triangles.push([q[0], q[1], q[2]]);
            self.triangles.push([q[0], q[2], q[3]]);
            self.surface_labels.push(label.to_string());
            self.surface_labels.push(label.to_string());
            self.material_ids.extend([0, 0]);
        }
    }

    /// Appends another mesh (vertex indices are offset; material ids kept).
    pub fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
        self.surface_labels.extend_from_slice(&other.surface_labels);
        self.material_ids.extend_from_slice(&other.material_ids);
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [&Vec3; 3] {
        self.triangles[t].map(|i| &self.vertices[i])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        triangle_area(a, b, c)
    }

    /// Unit normal following the triangle winding.
    pub fn normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn bounds(&self) -> Aabb {
        let mut bb = Aabb::empty();
        for tri in &self.triangles {
            for &i in tri {
                bb.grow(&self.vertices[i]);
            }
        }
        bb
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.triangle_area(t)).sum()
    }

    /// Enclosed volume by the divergence theorem. Exact for a single closed,
    /// consistently wound surface; orientation sign is discarded.
    pub fn volume(&self) -> f64 {
        let signed: f64 = (0..self.triangle_count())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(&b.cross(c)) / 6.0
            })
            .sum();
        signed.abs()
    }

    /// Resolves every triangle's label to a material index. `overrides`
    /// maps an exact label to a table entry name and wins over the matcher.
    pub fn assign_materials(
        &mut self,
        table: &MaterialTable,
        overrides: &HashMap<String, String>,
        matcher: &dyn LabelMatcher,
    ) -> Result<()> {
        let mut cache: HashMap<&str, usize> = HashMap::new();
        let mut ids = Vec::with_capacity(self.triangle_count());
        for label in &self.surface_labels {
            let id = match cache.get(label.as_str()) {
                Some(&id) => id,
                None => {
                    let id = match overrides.get(label) {
                        Some(name) => table.position(name).ok_or_else(|| {
                            Error::Config(format!("override for `{label}` names unknown material `{name}`"))
                        })?,
                        None => matcher.match_label(label, table),
                    };
                    cache.insert(label, id);
                    id
                }
            };
            ids.push(id);
        }
        self.material_ids = ids;
        Ok(())
    }

    /// Sets every triangle to one material.
    pub fn set_uniform_material(&mut self, id: usize) {
        self.material_ids = vec![id; self.triangle_count()];
    }
}

/// Loads an OBJ file. See [`parse_obj`].
pub fn load_mesh(path: &Path) -> Result<LoadedMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).tagged(path.display().to_string()))?;
    parse_obj(&text, path)
}

/// Parses the `v` / `f` / `g` / `o` / `usemtl` subset of Wavefront OBJ.
///
/// Faces may use `v`, `v/vt`, `v//vn` or `v/vt/vn` references, negative
/// (relative) indices and more than three corners (fan-triangulated). Each
/// face is labelled with the most recent `g`, `o` or `usemtl` name.
pub fn parse_obj(text: &str, path: &Path) -> Result<LoadedMesh> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut labels = Vec::new();
    let mut label = String::new();

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "v" => {
                let mut c = [0.0; 3];
                for slot in c.iter_mut() {
                    let tok = it.next().ok_or_else(|| err(ln, "vertex needs 3 coordinates".into()))?;
                    *slot = tok
                        .parse::<f64>()
                        .map_err(|e| err(ln, format!("bad coordinate `{tok}`: {e}")))?;
                    if !slot.is_finite() {
                        return Err(err(ln, format!("non-finite coordinate `{tok}`")));
                    }
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            "f" => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|e| err(ln, format!("bad face index `{tok}`: {e}")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(err(ln, "face index 0 is invalid".into()));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err(
                            ln,
                            format!("face index {i} out of range ({} vertices)", vertices.len()),
                        ));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(err(ln, "face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                    labels.push(label.clone());
                }
            }
            "g" | "o" | "usemtl" => {
                label = it.collect::<Vec<_>>().join(" ");
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::InvalidMesh(format!("{}: no faces", path.display())));
    }
    TriMesh::new(vertices, triangles, labels)
}

/// Serialises a mesh as OBJ with one `g` group per run of equal labels.
pub fn write_obj(mesh: &TriMesh) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    let mut current: Option<&str> = None;
    for (tri, label) in mesh.triangles.iter().zip(&mesh.surface_labels) {
        if current != Some(label.as_str()) {
            let _ = writeln!(out, "g {label}");
            current = Some(label);
        }
        let _ = writeln!(out, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1);
    }
    out
}
