//! Small geometric helpers shared by the mesh, voxel and ray code.

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Slab test; returns the entry distance if the ray hits within `t_max`.
    pub fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let ta = (self.min[a] - origin[a]) * inv_dir[a];
            let tb = (self.max[a] - origin[a]) * inv_dir[a];
            let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            // NaN from 0 * inf leaves the bounds untouched.
            if lo > t0 {
                t0 = lo;
            }
            if hi < t1 {
                t1 = hi;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Möller–Trumbore intersection. Returns the hit distance along `dir`.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    const EPS: f64 = 1e-12;
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}

/// Separating-axis test between a triangle and a closed axis-aligned box.
pub fn triangle_box_overlap(center: &Vec3, half: &Vec3, tri: [&Vec3; 3]) -> bool {
    let v0 = tri[0] - center;
    let v1 = tri[1] - center;
    let v2 = tri[2] - center;
    let e = [v1 - v0, v2 - v1, v0 - v2];

    // Box face normals.
    for a in 0..3 {
        let lo = v0[a].min(v1[a]).min(v2[a]);
        let hi = v0[a].max(v1[a]).max(v2[a]);
        if lo > half[a] || hi < -half[a] {
            return false;
        }
    }

    // Triangle normal.
    let n = e[0].cross(&e[1]);
    let d = n.dot(&v0);
    let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
    if d.abs() > r {
        return false;
    }

    // Edge cross products.
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    for edge in &e {
        for ax in &axes {
            let a = ax.cross(edge);
            if a.norm_squared() < 1e-30 {
                continue;
            }
            let p0 = a.dot(&v0);
            let p1 = a.dot(&v1);
            let p2 = a.dot(&v2);
            let r = half.x * a.x.abs() + half.y * a.y.abs() + half.z * a.z.abs();
            if p0.min(p1).min(p2) > r || p0.max(p1).max(p2) < -r {
                return false;
            }
        }
    }
    true
}

/// Area of the part of a triangle lying inside a closed box (Sutherland–Hodgman clip).
pub fn clipped_triangle_area(center: &Vec3, half: &Vec3, tri: [&Vec3; 3]) -> f64 {
    let mut poly: Vec<Vec3> = tri.iter().map(|v| *v - center).collect();
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            if poly.is_empty() {
                return 0.0;
            }
            // keep points with sign * p[axis] <= half[axis]
            let inside = |p: &Vec3| sign * p[axis] <= half[axis];
            let mut out = Vec::with_capacity(poly.len() + 2);
            for i in 0..poly.len() {
                let cur = poly[i];
                let prev = poly[(i + poly.len() - 1) % poly.len()];
                let (ci, pi) = (inside(&cur), inside(&prev));
                if ci != pi {
                    let t = (sign * half[axis] - prev[axis]) / (cur[axis] - prev[axis]);
                    out.push(prev + (cur - prev) * t);
                }
                if ci {
                    out.push(cur);
                }
            }
            poly = out;
        }
    }
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = Vec3::zeros();
    for i in 1..poly.len() - 1 {
        acc += (poly[i] - poly[0]).cross(&(poly[i + 1] - poly[0]));
    }
    0.5 * acc.norm()
}

/// Unit vector drawn uniformly from the sphere given two uniform samples in [0, 1).
pub fn uniform_sphere(u1: f64, u2: f64) -> Vec3 {
    let z = 1.0 - 2.0 * u1;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Cosine-weighted direction on the hemisphere around `normal`.
pub fn cosine_hemisphere(normal: &Vec3, u1: f64, u2: f64) -> Vec3 {
    let r = u1.sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    let (t, b) = orthonormal_basis(normal);
    let local_z = (1.0 - u1).max(0.0).sqrt();
    (t * (r * phi.cos()) + b * (r * phi.sin()) + normal * local_z).normalize()
}

pub fn orthonormal_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t = n.cross(&helper).normalize();
    let b = n.cross(&t);
    (t, b)
}
