//! Seven-point leapfrog on a cell grid with locally reacting boundary cells.
//!
//! Air cells are updated; boundary and exterior cells are solid and hold zero.
//! For an air cell with `K` air neighbours and boundary neighbours of summed
//! admittance `B`:
//!
//! ```text
//! p⁺ = [(2 - Kλ²) p + λ² Σ p_nb - (1 - λB/2) p⁻] / (1 + λB/2)
//! ```
//!
//! which reduces to the standard interior update when `K = 6`. Interior cells
//! go through a uniform, vectorisable row pass; the few cells with other
//! coefficients are recomputed from a side list.

use rayon::prelude::*;

use super::source::SourcePulse;
use super::{ProbeMode, ReceiverBatch, SimulationPlan};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scene::{CellKind, VoxelGrid};

const DIVERGENCE_FACTOR: f64 = 1e6;
const FULL_SCAN_INTERVAL: usize = 128;

/// A probe as a weighted sum of cell pressures.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Probe {
    pub taps: Vec<(usize, f32)>,
}

impl Probe {
    pub fn new(grid: &VoxelGrid, p: &Vec3, mode: ProbeMode) -> Result<Self> {
        let snap = grid
            .nearest_air(p)
            .ok_or_else(|| Error::Placement(format!("probe at {:?} has no nearby air cell", p.as_slice())))?;
        match mode {
            ProbeMode::Snap => Ok(Probe {
                taps: vec![(snap, 1.0)],
            }),
            ProbeMode::Trilinear => {
                let rel = (p - grid.origin()) / grid.dx();
                let base = [rel.x.floor(), rel.y.floor(), rel.z.floor()];
                let frac = [rel.x - base[0], rel.y - base[1], rel.z - base[2]];
                let mut taps = Vec::with_capacity(8);
                for corner in 0..8 {
                    let mut w = 1.0;
                    let mut c = [0usize; 3];
                    for a in 0..3 {
                        let hi = (corner >> a) & 1 == 1;
                        w *= if hi { frac[a] } else { 1.0 - frac[a] };
                        c[a] = base[a] as usize + usize::from(hi);
                    }
                    let idx = grid.index(c[0], c[1], c[2]);
                    if w > 0.0 && grid.kind(idx) == CellKind::Air {
                        taps.push((idx, w as f32));
                    }
                }
                if taps.is_empty() {
                    taps.push((snap, 1.0));
                }
                Ok(Probe { taps })
            }
        }
    }

    #[inline]
    fn read(&self, p: &[f32]) -> f64 {
        self.taps.iter().map(|&(i, w)| (w * p[i]) as f64).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct RowSpan {
    start: usize,
    end: usize,
}

/// Time-stepping state for one source.
pub struct Simulation<'g> {
    grid: &'g VoxelGrid,
    courant: f64,
    dt: f64,
    p: Vec<f32>,
    p_prev: Vec<f32>,
    a0: f32,
    l2: f32,
    /// Per plane, the rows' air spans (global indices, end exclusive).
    planes: Vec<Vec<RowSpan>>,
    special: Vec<usize>,
    special_coef: Vec<[f32; 3]>,
    scratch: Vec<f32>,
    source_cell: usize,
    source_gain: f64,
    pulse: SourcePulse,
    step: usize,
}

impl<'g> Simulation<'g> {
    pub fn new(plan: &SimulationPlan, grid: &'g VoxelGrid, source: &Vec3) -> Result<Self> {
        let source_cell = grid
            .nearest_air(source)
            .ok_or_else(|| Error::Placement(format!("source at {:?} is not in air", source.as_slice())))?;
        let lam = plan.courant;
        let lam2 = lam * lam;
        let [nx, ny, nz] = grid.dims();
        let n = grid.cell_count();

        let mut planes = vec![Vec::new(); nz];
        for (k, rows) in planes.iter_mut().enumerate() {
            for j in 0..ny {
                let row = grid.index(0, j, k);
                let first = (0..nx).find(|&i| grid.kind(row + i) == CellKind::Air);
                if let Some(lo) = first {
                    let hi = (0..nx).rev().find(|&i| grid.kind(row + i) == CellKind::Air).unwrap();
                    rows.push(RowSpan {
                        start: row + lo,
                        end: row + hi + 1,
                    });
                }
            }
        }

        let mut special = Vec::new();
        let mut special_coef = Vec::new();
        for span in planes.iter().flatten() {
            for idx in span.start..span.end {
                if grid.kind(idx) != CellKind::Air {
                    special.push(idx);
                    special_coef.push([0.0; 3]);
                    continue;
                }
                let mut air = 0;
                let mut beta = 0.0;
                for nb in grid.neighbors(idx) {
                    match grid.kind(nb) {
                        CellKind::Air => air += 1,
                        CellKind::Boundary => beta += grid.admittance(nb).unwrap_or(0.0),
                        CellKind::Exterior => {}
                    }
                }
                if air == 6 {
                    continue;
                }
                let d = 1.0 + 0.5 * lam * beta;
                special.push(idx);
                special_coef.push([
                    ((2.0 - air as f64 * lam2) / d) as f32,
                    (lam2 / d) as f32,
                    ((1.0 - 0.5 * lam * beta) / d) as f32,
                ]);
            }
        }

        let dx = grid.dx();
        Ok(Simulation {
            grid,
            courant: lam,
            dt: plan.dt,
            p: vec![0.0; n],
            p_prev: vec![0.0; n],
            a0: (2.0 - 6.0 * lam2) as f32,
            l2: lam2 as f32,
            planes,
            scratch: vec![0.0; special.len()],
            special,
            special_coef,
            source_cell,
            // free-field response to this soft source is pulse(t - r/c) / r
            source_gain: 4.0 * std::f64::consts::PI * lam2 / dx,
            pulse: SourcePulse::for_f_max(plan.f_max),
            step: 0,
        })
    }

    pub fn source_cell(&self) -> usize {
        self.source_cell
    }

    pub fn pulse(&self) -> SourcePulse {
        self.pulse
    }

    /// Peak value written into the source cell by the pulse alone.
    pub fn injected_peak(&self) -> f64 {
        self.source_gain
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn pressure(&self) -> &[f32] {
        &self.p
    }

    /// Advances one time step and injects the source at the new time level.
    pub fn step(&mut self) {
        let p = &self.p;
        let prev = &self.p_prev;
        self.scratch
            .par_iter_mut()
            .zip(self.special.par_iter().zip(self.special_coef.par_iter()))
            .for_each(|(out, (&idx, &[a, b, c]))| {
                let sum = neighbor_sum(p, idx, self.grid);
                *out = a * p[idx] + b * sum - c * prev[idx];
            });

        let plane = self.grid.dims()[0] * self.grid.dims()[1];
        let nx = self.grid.dims()[0];
        let (a0, l2) = (self.a0, self.l2);
        let planes = &self.planes;
        self.p_prev.par_chunks_mut(plane).enumerate().for_each(|(k, out)| {
            let base = k * plane;
            for span in &planes[k] {
                let (s, e) = (span.start, span.end);
                let len = e - s;
                let o = &mut out[s - base..e - base];
                let c = &p[s..e];
                let xm = &p[s - 1..e - 1];
                let xp = &p[s + 1..e + 1];
                let ym = &p[s - nx..e - nx];
                let yp = &p[s + nx..e + nx];
                let zm = &p[s - plane..e - plane];
                let zp = &p[s + plane..e + plane];
                for i in 0..len {
                    let sum = (xm[i] + xp[i]) + (ym[i] + yp[i]) + (zm[i] + zp[i]);
                    o[i] = a0 * c[i] + l2 * sum - o[i];
                }
            }
        });

        for (&idx, &v) in self.special.iter().zip(&self.scratch) {
            self.p_prev[idx] = v;
        }
        std::mem::swap(&mut self.p, &mut self.p_prev);
        self.step += 1;
        let t = self.step as f64 * self.dt;
        self.p[self.source_cell] += (self.source_gain * self.pulse.value(t)) as f32;
    }

    /// Discrete energy between the two stored time levels:
    /// `½Σ(pⁿ - pⁿ⁻¹)² + (λ²/2)Σ_edges (Δpⁿ)(Δpⁿ⁻¹)` over air cells and
    /// air-air edges. Non-increasing without sources when admittances are ≥ 0.
    pub fn energy(&self) -> f64 {
        let g = self.grid;
        let lam2 = self.courant * self.courant;
        let [nx, ny, _] = g.dims();
        let steps = [1, nx, nx * ny];
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for span in self.planes.iter().flatten() {
            for idx in span.start..span.end {
                if g.kind(idx) != CellKind::Air {
                    continue;
                }
                let (p, q) = (self.p[idx] as f64, self.p_prev[idx] as f64);
                kinetic += (p - q) * (p - q);
                for s in steps {
                    let nb = idx + s;
                    if g.kind(nb) == CellKind::Air {
                        potential += (p - self.p[nb] as f64) * (q - self.p_prev[nb] as f64);
                    }
                }
            }
        }
        0.5 * kinetic + 0.5 * lam2 * potential
    }

    fn check_finite(&self, limit: f64, probes: &[Probe]) -> Result<()> {
        let bad = |v: f32| !v.is_finite() || (v as f64).abs() > limit;
        let mut diverged =
            bad(self.p[self.source_cell]) || probes.iter().any(|pr| pr.taps.iter().any(|&(i, _)| bad(self.p[i])));
        if !diverged && self.step % FULL_SCAN_INTERVAL == 0 {
            diverged = self.p.par_iter().any(|&v| bad(v));
        }
        if diverged {
            Err(Error::Diverged { step: self.step })
        } else {
            Ok(())
        }
    }
}

#[inline]
fn neighbor_sum(p: &[f32], idx: usize, grid: &VoxelGrid) -> f32 {
    let [m1, p1, m2, p2, m3, p3] = grid.neighbors(idx);
    (p[m1] + p[p1]) + (p[m2] + p[p2]) + (p[m3] + p[p3])
}

/// Runs `plan.steps` samples for one source and records every probe of the
/// batch at every step (sample 0 is the quiescent initial state).
pub(crate) fn simulate(
    plan: &SimulationPlan,
    grid: &VoxelGrid,
    source: &Vec3,
    batch: &ReceiverBatch,
) -> Result<Vec<Vec<f64>>> {
    let mut sim = Simulation::new(plan, grid, source)?;
    let region = grid.region_of(sim.source_cell());
    for (i, probe) in batch.probes.iter().enumerate() {
        if probe.taps.iter().any(|&(c, _)| grid.region_of(c) != region) {
            return Err(Error::Placement(format!("probe {i} is not in the source's air region")));
        }
    }
    let limit = DIVERGENCE_FACTOR * sim.injected_peak();
    let mut traces: Vec<Vec<f64>> = batch.probes.iter().map(|_| Vec::with_capacity(plan.steps)).collect();
    for (tr, probe) in traces.iter_mut().zip(&batch.probes) {
        tr.push(probe.read(sim.pressure()));
    }
    for _ in 1..plan.steps {
        sim.step();
        sim.check_finite(limit, &batch.probes)?;
        for (tr, probe) in traces.iter_mut().zip(&batch.probes) {
            tr.push(probe.read(sim.pressure()));
        }
    }
    Ok(traces)
}
