//! Job configuration and batch orchestration: scene configs in, AmbiX WAV
//! files, a line-delimited manifest and summary tables out.

mod output;
mod placement;
mod room;
mod stats;

pub use output::{
    append_manifest, generator_version, read_ambix, read_manifest, write_ambix, ManifestEntry, PairIds, CONVENTION_TAG,
};
pub use placement::{sample_placements, MIN_SOURCE_RECEIVER_DISTANCE};
pub use room::{prepare_room, run_jobs, run_room, PreparedRoom, RoomReport, RunCounter};
pub use stats::{compare_dirs, dataset_stats};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{DEFAULT_CROSSOVER_HZ, DEFAULT_OUTPUT_FS};
use crate::scene::DEFAULT_CELL_BUDGET;
use crate::sharm::{DEFAULT_REGULARIZATION, MAX_ORDER};
use crate::wavesolver::DEFAULT_MEMORY_BUDGET;

/// Either a count to sample or explicit coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Positions {
    Count(usize),
    Explicit(Vec<[f64; 3]>),
}

impl Positions {
    pub fn len(&self) -> usize {
        match self {
            Positions::Count(n) => *n,
            Positions::Explicit(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One room's simulation job, read from a TOML file. Relative paths are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    /// Scene identifier used for the output directory; defaults to the mesh stem.
    pub name: Option<String>,
    pub mesh: PathBuf,
    /// Material table; the bundled one when absent.
    pub materials: Option<PathBuf>,
    /// Surface label → material name, taking precedence over label matching.
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
    #[serde(default = "default_sources")]
    pub sources: Positions,
    #[serde(default = "default_receivers")]
    pub receivers: Positions,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_crossover")]
    pub crossover_hz: f64,
    #[serde(default = "default_fs_out")]
    pub fs_out: f64,
    /// Impulse response length in seconds.
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Simulated wave-solver time; `duration` when absent.
    pub fdtd_duration: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gate")]
    pub rt60_gate: f64,
    #[serde(default = "default_rays")]
    pub ray_count: usize,
    #[serde(default = "default_bounces")]
    pub max_bounces: usize,
    #[serde(default = "default_ppw")]
    pub ppw: f64,
    pub dx_override: Option<f64>,
    /// Receiver arrays simulated together per wave-solver run.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_grid")]
    pub grid: String,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
    #[serde(default = "default_cell_budget")]
    pub cell_budget: u64,
    #[serde(default = "default_memory_budget")]
    pub memory_budget: u64,
}

fn default_sources() -> Positions {
    Positions::Count(5)
}
fn default_receivers() -> Positions {
    Positions::Count(10)
}
fn default_order() -> usize {
    7
}
fn default_crossover() -> f64 {
    DEFAULT_CROSSOVER_HZ
}
fn default_fs_out() -> f64 {
    DEFAULT_OUTPUT_FS
}
fn default_duration() -> f64 {
    1.0
}
fn default_gate() -> f64 {
    1.2
}
fn default_rays() -> usize {
    100_000
}
fn default_bounces() -> usize {
    100
}
fn default_ppw() -> f64 {
    19.0
}
fn default_batch() -> usize {
    5
}
fn default_grid() -> String {
    "fliege64".into()
}
fn default_regularization() -> f64 {
    DEFAULT_REGULARIZATION
}
fn default_cell_budget() -> u64 {
    DEFAULT_CELL_BUDGET
}
fn default_memory_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}

impl JobSpec {
    /// A job with every default and the given mesh.
    pub fn with_mesh(mesh: impl Into<PathBuf>) -> Self {
        let mut spec: JobSpec = toml::from_str("mesh = \"\"").expect("defaults parse");
        spec.mesh = mesh.into();
        spec
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: JobSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.mesh = base_dir.join(&spec.mesh);
        spec.materials = spec.materials.map(|m| base_dir.join(m));
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).tagged(path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| e.tagged(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.sources.is_empty() || self.receivers.is_empty() {
            return fail("need at least one source and one receiver".into());
        }
        if self.order > MAX_ORDER {
            return fail(format!("order {} exceeds {MAX_ORDER}", self.order));
        }
        if !(self.rt60_gate > 0.0) {
            return fail("rt60_gate must be positive".into());
        }
        if !(self.duration > 0.0) || self.fdtd_duration.is_some_and(|d| !(d > 0.0)) {
            return fail("durations must be positive".into());
        }
        if !(self.fs_out >= 8000.0) {
            return fail(format!("fs_out {} Hz is too low for the octave bands", self.fs_out));
        }
        if !(self.crossover_hz > 0.0 && 2.5 * self.crossover_hz < self.fs_out) {
            return fail(format!("crossover {} Hz does not fit fs_out", self.crossover_hz));
        }
        if self.ray_count == 0 || self.batch_size == 0 {
            return fail("ray_count and batch_size must be positive".into());
        }
        if !(self.ppw > 0.0) || self.dx_override.is_some_and(|d| !(d > 0.0)) {
            return fail("ppw and dx_override must be positive".into());
        }
        Ok(())
    }

    pub fn scene_id(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.mesh
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scene".into())
        })
    }

    pub fn fdtd_seconds(&self) -> f64 {
        self.fdtd_duration.unwrap_or(self.duration)
    }
}
