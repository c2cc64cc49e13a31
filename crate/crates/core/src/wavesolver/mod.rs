//! Low-frequency FDTD simulation on the voxel grid, sampled at virtual
//! spherical arrays.

mod resample;
mod solver;
mod source;

use std::io::Write;
use std::path::Path;

pub use resample::{resample, resample_and_limit};
pub use solver::Simulation;
pub use source::{deconvolve_pulse, SourcePulse};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scene::VoxelGrid;
use crate::sharm::SphericalGrid;
use crate::SPEED_OF_SOUND;
use solver::Probe;

/// Largest stable Courant number of the 3-D seven-point scheme.
pub fn max_courant() -> f64 {
    1.0 / 3f64.sqrt()
}

pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct FdtdParams {
    /// Highest frequency the grid is designed for, in Hz.
    pub f_max: f64,
    /// Points per wavelength at `f_max`; sets `dx = c / (ppw · f_max)`.
    pub ppw: f64,
    /// Explicit cell size, overriding `ppw`.
    pub dx_override: Option<f64>,
    pub courant: f64,
    pub c: f64,
    /// Simulated time in seconds.
    pub duration: f64,
    pub memory_budget: u64,
    pub probe_mode: ProbeMode,
}

impl Default for FdtdParams {
    fn default() -> Self {
        FdtdParams {
            f_max: 900.0,
            ppw: 19.0,
            dx_override: None,
            courant: max_courant(),
            c: SPEED_OF_SOUND,
            duration: 0.5,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            probe_mode: ProbeMode::Snap,
        }
    }
}

impl FdtdParams {
    pub fn dx(&self) -> f64 {
        self.dx_override.unwrap_or(self.c / (self.ppw * self.f_max))
    }
}

/// How a probe position is read from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeMode {
    /// Nearest air-cell centre.
    #[default]
    Snap,
    /// Trilinear blend of the surrounding air cells.
    Trilinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationPlan {
    pub dx: f64,
    pub dt: f64,
    pub fs_int: f64,
    pub courant: f64,
    pub f_max: f64,
    /// Number of recorded samples, including the initial one at t = 0.
    pub steps: usize,
    /// Field storage in bytes (traces excluded).
    pub memory_bytes: u64,
}

impl SimulationPlan {
    /// Trace storage for `probes` probes, in bytes.
    pub fn trace_bytes(&self, probes: usize) -> u64 {
        (self.steps * probes * std::mem::size_of::<f64>()) as u64
    }
}

/// Derives the time step from the Courant number and checks the budgets.
pub fn plan(params: &FdtdParams, grid: &VoxelGrid) -> Result<SimulationPlan> {
    if !(params.courant > 0.0) || params.courant > max_courant() + 1e-12 {
        return Err(Error::Unstable {
            courant: params.courant,
        });
    }
    if !(params.duration > 0.0) || !(params.f_max > 0.0) || !(params.c > 0.0) {
        return Err(Error::Domain("duration, f_max and c must be positive".into()));
    }
    let dx = grid.dx();
    let dt = params.courant * dx / params.c;
    let fs_int = 1.0 / dt;
    let steps = (params.duration * fs_int - 1e-9).ceil() as usize + 1;
    // two f32 pressure fields plus ~2 bytes of per-cell metadata
    let memory_bytes = grid.cell_count() as u64 * 10;
    if memory_bytes > params.memory_budget {
        return Err(Error::MemoryBudget {
            bytes: memory_bytes,
            budget: params.memory_budget,
        });
    }
    Ok(SimulationPlan {
        dx,
        dt,
        fs_int,
        courant: params.courant,
        f_max: params.f_max,
        steps,
        memory_bytes,
    })
}

/// A group of receiver arrays simulated together in one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverBatch {
    pub array_centers: Vec<Vec3>,
    /// `directions × radius` around each centre, array-major.
    pub probe_points: Vec<Vec3>,
    pub(crate) probes: Vec<Probe>,
}

impl ReceiverBatch {
    pub fn new(grid: &VoxelGrid, sphere: &SphericalGrid, centers: &[Vec3], mode: ProbeMode) -> Result<Self> {
        let probe_points: Vec<Vec3> = centers.iter().flat_map(|c| sphere.positions(c)).collect();
        let probes = probe_points
            .iter()
            .map(|p| Probe::new(grid, p, mode))
            .collect::<Result<_>>()?;
        Ok(ReceiverBatch {
            array_centers: centers.to_vec(),
            probe_points,
            probes,
        })
    }

    pub fn probe_count(&self) -> usize {
        self.probe_points.len()
    }

    /// Cell indices read by each probe.
    pub fn probe_cells(&self) -> Vec<Vec<usize>> {
        self.probes
            .iter()
            .map(|p| p.taps.iter().map(|t| t.0).collect())
            .collect()
    }
}

/// Splits receivers into consecutive groups of at most `batch_size` arrays.
pub fn make_batches(
    grid: &VoxelGrid,
    sphere: &SphericalGrid,
    receivers: &[Vec3],
    batch_size: usize,
    mode: ProbeMode,
) -> Result<Vec<ReceiverBatch>> {
    if batch_size == 0 {
        return Err(Error::Domain("batch size must be at least 1".into()));
    }
    receivers
        .chunks(batch_size)
        .map(|c| ReceiverBatch::new(grid, sphere, c, mode))
        .collect()
}

/// Solver runs needed per room: `sources × ceil(receivers / capacity)`.
pub fn run_count(sources: usize, receivers: usize, capacity: usize) -> usize {
    sources * receivers.div_ceil(capacity.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureTraces {
    pub fs: f64,
    /// One series per probe, batch order.
    pub traces: Vec<Vec<f64>>,
    pub probe_points: Vec<Vec3>,
}

impl PressureTraces {
    /// The 64 (or grid-size) traces of array `index` within the batch.
    pub fn array(&self, index: usize, mics: usize) -> &[Vec<f64>] {
        &self.traces[index * mics..(index + 1) * mics]
    }
}

/// One solver run: a source and every probe of `batch`. Deterministic; the
/// traces do not depend on how receivers were grouped.
pub fn run(plan: &SimulationPlan, grid: &VoxelGrid, source: &Vec3, batch: &ReceiverBatch) -> Result<PressureTraces> {
    let traces = solver::simulate(plan, grid, source, batch)?;
    Ok(PressureTraces {
        fs: plan.fs_int,
        traces,
        probe_points: batch.probe_points.clone(),
    })
}

/// Writes traces as a text header followed by little-endian f32 samples,
/// probe-major.
pub fn write_trace_dump(path: &Path, traces: &PressureTraces) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let samples = traces.traces.first().map_or(0, Vec::len);
    writeln!(f, "hoarir-traces 1")?;
    writeln!(f, "fs {}", traces.fs)?;
    writeln!(f, "probes {}", traces.traces.len())?;
    writeln!(f, "samples {samples}")?;
    for p in &traces.probe_points {
        writeln!(f, "{} {} {}", p.x, p.y, p.z)?;
    }
    writeln!(f, "data")?;
    for tr in &traces.traces {
        for v in tr {
            f.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_trace_dump`].
pub fn read_trace_dump(path: &Path) -> Result<PressureTraces> {
    let bytes = std::fs::read(path)?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.to_string(),
    };
    let marker = b"\ndata\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing data marker"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not text"))?;
    let mut lines = header.lines();
    let field = |line: Option<&str>, key: &str| -> Result<String> {
        line.and_then(|l| l.strip_prefix(key))
            .map(|v| v.trim().to_string())
            .ok_or_else(|| bad(&format!("expected `{key}`")))
    };
    field(lines.next(), "hoarir-traces")?;
    let fs: f64 = field(lines.next(), "fs")?.parse().map_err(|_| bad("bad fs"))?;
    let probes: usize = field(lines.next(), "probes")?
        .parse()
        .map_err(|_| bad("bad probe count"))?;
    let samples: usize = field(lines.next(), "samples")?
        .parse()
        .map_err(|_| bad("bad sample count"))?;
    let mut probe_points = Vec::with_capacity(probes);
    for _ in 0..probes {
        let v: Vec<f64> = lines
            .next()
            .ok_or_else(|| bad("missing probe line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad coordinate")))
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(bad("probe line needs 3 values"));
        }
        probe_points.push(Vec3::new(v[0], v[1], v[2]));
    }
    let data = &bytes[split + marker.len()..];
    if data.len() != probes * samples * 4 {
        return Err(bad("data length does not match header"));
    }
    if samples == 0 {
        return Ok(PressureTraces {
            fs,
            traces: vec![Vec::new(); probes],
            probe_points,
        });
    }
    let traces = data
        .chunks(samples * 4)
        .map(|ch| {
            ch.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect()
        })
        .collect();
    Ok(PressureTraces {
        fs,
        traces,
        probe_points,
    })
}
