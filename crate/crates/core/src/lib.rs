//! Hybrid wave / geometric simulator for higher-order Ambisonic room impulse
//! responses.
//!
//! The low band (up to ~900 Hz) is solved with a 7-point FDTD scheme sampled
//! on a virtual 64-point spherical array and encoded to spherical harmonics;
//! the high band is ray traced with arrivals deposited directly into SH
//! channels. The two are aligned, level-matched and joined with a zero-phase
//! complementary crossover into an ACN/SN3D (AmbiX) impulse response.
//!
//! Module map:
//!
//! - [`scene`]: triangle meshes, voxelisation, placements
//! - [`materials`]: absorption tables, label matching, boundary admittance
//! - [`sharm`]: real spherical harmonics, sampling grids, least-squares encoder
//! - [`wavesolver`]: FDTD simulation, receiver batching, resampling
//! - [`rayengine`]: stochastic ray tracing, image-source oracle, SH deposition
//! - [`hybrid`]: alignment, calibration and crossover merge
//! - [`metrics`]: decay curves, reverberation time, DRR, C50, comparisons
//! - [`pipeline`]: job configs, room runs, AmbiX output, manifests, statistics

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dsp;
pub mod error;
pub mod geom;
pub mod hybrid;
pub mod materials;
pub mod metrics;
pub mod pipeline;
pub mod rayengine;
pub mod scene;
pub mod sharm;
pub mod wavesolver;

pub use error::{Error, Result};
pub use geom::Vec3;
pub use hybrid::{AmbisonicIR, CrossoverSpec};
pub use materials::{MaterialSpec, MaterialTable, BAND_CENTERS_HZ, NUM_BANDS};
pub use metrics::{ComparisonStats, MetricsReport};
pub use pipeline::{JobSpec, ManifestEntry};
pub use rayengine::{EnergyDeposit, TraceParams};
pub use scene::{Placement, TriMesh, VoxelGrid};
pub use sharm::{EncodingMatrix, Normalization, ShConfig, SphericalGrid};
pub use wavesolver::{FdtdParams, PressureTraces, ReceiverBatch};

/// Speed of sound used throughout, in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
