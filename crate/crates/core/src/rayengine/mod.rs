//! Stochastic ray tracing with arrivals deposited straight into SH channels,
//! plus a shoebox image-source oracle.

mod accumulate;
mod bvh;
mod oracle;
#[cfg(test)]
mod tests;

pub use accumulate::{air_absorption, deposit_to_sh, AirAbsorption, ShIRAccumulator};
pub use bvh::{Bvh, Hit};
pub use oracle::{image_source_oracle, Shoebox};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{cosine_hemisphere, uniform_sphere, Vec3};
use crate::materials::{MaterialTable, NUM_BANDS};
use crate::scene::TriMesh;
use crate::sharm::ARRAY_RADIUS;
use crate::SPEED_OF_SOUND;

const RAYS_PER_TASK: usize = 512;
/// Grid used to recognise repeated specular paths by their virtual source.
const IMAGE_QUANTUM: f64 = 1e-6;
const SURFACE_OFFSET: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceParams {
    pub ray_count: usize,
    pub max_bounces: usize,
    pub seed: u64,
    pub receiver_radius: f64,
    /// Rays are dropped once their path is longer than this many seconds.
    pub max_time: f64,
    /// Termination threshold relative to a ray's emitted energy, on the loudest band.
    pub energy_floor: f64,
    pub speed_of_sound: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams {
            ray_count: 100_000,
            max_bounces: 100,
            seed: 0,
            receiver_radius: ARRAY_RADIUS,
            max_time: 1.0,
            energy_floor: 1e-6,
            speed_of_sound: SPEED_OF_SOUND,
        }
    }
}

/// One arrival at the receiver. Energies follow the free-field convention:
/// a direct path of length `d` deposits `1/d²` in every band.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDeposit {
    pub time: f64,
    /// Unit vector from the receiver toward where the sound comes from.
    pub direction: Vec3,
    pub band_energy: [f64; NUM_BANDS],
    pub sign: f64,
}

/// Per-band energy bookkeeping in emitted units (each band emits 4π in total).
///
/// `emitted + reweighted = absorbed + escaped + residual`, where `reweighted`
/// is the net change from the per-band scattering reweighting and `residual`
/// is what rays still carried when they were terminated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyBudget {
    pub emitted: [f64; NUM_BANDS],
    pub reweighted: [f64; NUM_BANDS],
    pub absorbed: [f64; NUM_BANDS],
    pub escaped: [f64; NUM_BANDS],
    pub residual: [f64; NUM_BANDS],
}

impl EnergyBudget {
    fn add(&mut self, o: &EnergyBudget) {
        for b in 0..NUM_BANDS {
            self.emitted[b] += o.emitted[b];
            self.reweighted[b] += o.reweighted[b];
            self.absorbed[b] += o.absorbed[b];
            self.escaped[b] += o.escaped[b];
            self.residual[b] += o.residual[b];
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceOutput {
    /// Sorted by arrival time.
    pub deposits: Vec<EnergyDeposit>,
    pub budget: EnergyBudget,
}

#[derive(Debug, Clone, Copy)]
struct Surface {
    absorption: [f64; NUM_BANDS],
    scattering: [f64; NUM_BANDS],
    mean_scattering: f64,
}

/// Mesh, acceleration structure and per-triangle materials ready for tracing.
#[derive(Debug, Clone)]
pub struct RayScene {
    bvh: Bvh,
    normals: Vec<Vec3>,
    surfaces: Vec<Surface>,
    surface_of: Vec<usize>,
    closed: bool,
}

impl RayScene {
    pub fn new(mesh: &TriMesh, table: &MaterialTable) -> Result<Self> {
        if mesh.triangle_count() == 0 {
            return Err(Error::InvalidMesh("no triangles to trace against".into()));
        }
        if mesh.material_ids.len() != mesh.triangle_count() {
            return Err(Error::Shape("material ids do not match triangle count".into()));
        }
        let surfaces = table
            .entries()
            .iter()
            .map(|m| Surface {
                absorption: m.absorption,
                scattering: m.scattering,
                mean_scattering: m.mean_scattering(),
            })
            .collect();
        Ok(RayScene {
            bvh: Bvh::build(mesh),
            normals: (0..mesh.triangle_count()).map(|t| mesh.normal(t)).collect(),
            surfaces,
            surface_of: mesh.material_ids.clone(),
            closed: is_closed(mesh),
        })
    }

    /// Whether the mesh is watertight (every edge shared by an even number of triangles).
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        self.bvh.intersect(origin, dir, f64::INFINITY)
    }

    /// Crossing-parity test, majority of three skewed directions. Open meshes
    /// have no interior, so every point counts as inside.
    pub fn contains(&self, p: &Vec3) -> bool {
        if !self.closed {
            return true;
        }
        let dirs = [
            Vec3::new(0.301, 0.197, 0.933),
            Vec3::new(-0.711, 0.423, -0.561),
            Vec3::new(0.129, -0.887, 0.443),
        ];
        let odd = dirs
            .iter()
            .filter(|d| {
                let d = d.normalize();
                let mut o = *p;
                let mut n = 0;
                while let Some(h) = self.intersect(&o, &d) {
                    n += 1;
                    o += d * (h.distance + SURFACE_OFFSET);
                }
                n % 2 == 1
            })
            .count();
        odd >= 2
    }
}

fn is_closed(mesh: &TriMesh) -> bool {
    let key = |v: &Vec3| v.map(|x| (x / 1e-9).round() as i64);
    let mut edges: HashMap<([i64; 3], [i64; 3]), usize> = HashMap::new();
    for t in 0..mesh.triangle_count() {
        let c = mesh.corners(t);
        for i in 0..3 {
            let a: [i64; 3] = key(c[i]).into();
            let b: [i64; 3] = key(c[(i + 1) % 3]).into();
            *edges.entry(if a < b { (a, b) } else { (b, a) }).or_default() += 1;
        }
    }
    edges.values().all(|&n| n % 2 == 0)
}

/// Traces `params.ray_count` rays from `source` and records every crossing of
/// the receiver sphere around `receiver`.
///
/// Fully specular paths that reach the receiver through the same virtual
/// source are merged into one deposit with exact image-source timing and a
/// positive sign. Once a path has scattered diffusely its deposits keep their
/// own timing and a random sign.
pub fn trace(scene: &RayScene, source: &Vec3, receiver: &Vec3, params: &TraceParams) -> Result<TraceOutput> {
    if params.ray_count == 0 {
        return Err(Error::Domain("ray count must be positive".into()));
    }
    if !(params.receiver_radius > 0.0) || !(params.speed_of_sound > 0.0) {
        return Err(Error::Domain(
            "receiver radius and speed of sound must be positive".into(),
        ));
    }
    for (what, p) in [("source", source), ("receiver", receiver)] {
        if !scene.contains(p) {
            return Err(Error::Placement(format!(
                "{what} at {:?} is outside the room volume",
                p.as_slice()
            )));
        }
    }
    let tasks: Vec<usize> = (0..params.ray_count.div_ceil(RAYS_PER_TASK)).collect();
    let chunks: Vec<(Vec<Arrival>, EnergyBudget)> = tasks
        .par_iter()
        .map(|&t| {
            let lo = t * RAYS_PER_TASK;
            let hi = (lo + RAYS_PER_TASK).min(params.ray_count);
            let mut out = Vec::new();
            let mut budget = EnergyBudget::default();
            for i in lo..hi {
                trace_ray(scene, source, receiver, params, i as u64, &mut out, &mut budget);
            }
            (out, budget)
        })
        .collect();

    let mut budget = EnergyBudget::default();
    let mut deposits: Vec<EnergyDeposit> = Vec::new();
    let mut merged: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    for (arrivals, b) in chunks {
        budget.add(&b);
        for a in arrivals {
            match a.image {
                Some(key) => match merged.get(&key) {
                    Some(&i) => {
                        let d = &mut deposits[i];
                        let w: f64 = a.deposit.band_energy.iter().sum();
                        d.direction += a.deposit.direction * w;
                        for (x, y) in d.band_energy.iter_mut().zip(&a.deposit.band_energy) {
                            *x += y;
                        }
                    }
                    None => {
                        merged.insert(key, deposits.len());
                        let mut d = a.deposit;
                        let w: f64 = d.band_energy.iter().sum();
                        d.direction *= w;
                        deposits.push(d);
                    }
                },
                None => deposits.push(a.deposit),
            }
        }
    }
    for &i in merged.values() {
        let d = &mut deposits[i];
        let n = d.direction.norm();
        if n > 0.0 {
            d.direction /= n;
        }
    }
    deposits.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(TraceOutput { deposits, budget })
}

struct Arrival {
    image: Option<[i64; 3]>,
    deposit: EnergyDeposit,
}

fn trace_ray(
    scene: &RayScene,
    source: &Vec3,
    receiver: &Vec3,
    params: &TraceParams,
    index: u64,
    out: &mut Vec<Arrival>,
    budget: &mut EnergyBudget,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(index);
    let e0 = 4.0 * std::f64::consts::PI / params.ray_count as f64;
    let cross_section = std::f64::consts::PI * params.receiver_radius * params.receiver_radius;
    let max_len = params.max_time * params.speed_of_sound;

    let mut energy = [e0; NUM_BANDS];
    for e in budget.emitted.iter_mut() {
        *e += e0;
    }
    let mut origin = *source;
    let mut dir = uniform_sphere(rng.random(), rng.random());
    // path length so far, and the virtual source plus the length already
    // travelled when it was created
    let mut travelled = 0.0;
    let mut virtual_source = *source;
    let mut base_len = 0.0;
    let mut specular = true;
    let mut bounces = 0;

    loop {
        let hit = scene.intersect(&origin, &dir);
        let seg_len = hit.map_or(f64::INFINITY, |h| h.distance);

        // receiver sphere entry along this segment
        let to_rx = receiver - origin;
        let along = to_rx.dot(&dir);
        let miss2 = to_rx.norm_squared() - along * along;
        let r2 = params.receiver_radius * params.receiver_radius;
        if miss2 <= r2 {
            let entry = along - (r2 - miss2).sqrt();
            if entry >= 0.0 && entry <= seg_len {
                let time = (base_len + (receiver - virtual_source).norm()) / params.speed_of_sound;
                if time * params.speed_of_sound <= max_len {
                    let sign = if specular || rng.random::<bool>() { 1.0 } else { -1.0 };
                    let band_energy = energy.map(|e| e / cross_section);
                    out.push(Arrival {
                        image: specular.then(|| virtual_source.map(|x| (x / IMAGE_QUANTUM).round() as i64).into()),
                        deposit: EnergyDeposit {
                            time,
                            direction: -dir,
                            band_energy,
                            sign,
                        },
                    });
                }
            }
        }

        let Some(hit) = hit else {
            for b in 0..NUM_BANDS {
                budget.escaped[b] += energy[b];
            }
            return;
        };
        travelled += hit.distance;
        let point = origin + dir * hit.distance;
        let surface = &scene.surfaces[scene.surface_of[hit.triangle]];
        let normal = scene.normals[hit.triangle];
        let facing = if normal.dot(&dir) < 0.0 { normal } else { -normal };

        let s_mean = surface.mean_scattering;
        let diffuse = s_mean > 0.0 && rng.random::<f64>() < s_mean;
        for b in 0..NUM_BANDS {
            let w = if diffuse {
                surface.scattering[b] / s_mean
            } else {
                (1.0 - surface.scattering[b]) / (1.0 - s_mean)
            };
            let before = energy[b];
            energy[b] *= w;
            budget.reweighted[b] += energy[b] - before;
            let lost = energy[b] * surface.absorption[b];
            budget.absorbed[b] += lost;
            energy[b] -= lost;
        }
        if diffuse {
            dir = cosine_hemisphere(&facing, rng.random(), rng.random());
            virtual_source = point;
            base_len = travelled;
            specular = false;
        } else {
            dir -= normal * (2.0 * dir.dot(&normal));
            virtual_source -= normal * (2.0 * (virtual_source - point).dot(&normal));
        }
        origin = point + facing * SURFACE_OFFSET;
        bounces += 1;

        let loudest = energy.iter().cloned().fold(0.0, f64::max);
        if bounces > params.max_bounces
            || loudest < params.energy_floor * e0
            || travelled > max_len + params.receiver_radius
        {
            for b in 0..NUM_BANDS {
                budget.residual[b] += energy[b];
            }
            return;
        }
    }
}

/// Text table, one deposit per line: time, direction xyz, sign, six energies.
pub fn write_deposit_dump(deposits: &[EnergyDeposit]) -> String {
    let mut s = String::from("# time dx dy dz sign e125 e250 e500 e1k e2k e4k\n");
    for d in deposits {
        let _ = write!(
            s,
            "{:.9} {:.9} {:.9} {:.9} {}",
            d.time, d.direction.x, d.direction.y, d.direction.z, d.sign
        );
        for e in &d.band_energy {
            let _ = write!(s, " {e:.9e}");
        }
        s.push('\n');
    }
    s
}

pub fn read_deposit_dump(text: &str) -> Result<Vec<EnergyDeposit>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: "<deposits>".into(),
                line: i + 1,
                msg: format!("{e}"),
            })?;
        if vals.len() != 5 + NUM_BANDS {
            return Err(Error::Parse {
                path: "<deposits>".into(),
                line: i + 1,
                msg: format!("expected {} fields, found {}", 5 + NUM_BANDS, vals.len()),
            });
        }
        out.push(EnergyDeposit {
            time: vals[0],
            direction: Vec3::new(vals[1], vals[2], vals[3]),
            sign: vals[4],
            band_energy: std::array::from_fn(|b| vals[5 + b]),
        });
    }
    Ok(out)
}
