//! AmbiX WAV files and manifest records.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::AmbisonicIR;
use crate::materials::NUM_BANDS;
use crate::sharm::{hex_digest, ShConfig, MAX_ORDER};

pub const CONVENTION_TAG: &str = "ambix-acn-sn3d";
const MANIFEST_FORMAT: u32 = 1;

/// Short hash identifying the generator build and manifest format.
pub fn generator_version() -> String {
    let id = format!("hoarir-core {} manifest {MANIFEST_FORMAT}", env!("CARGO_PKG_VERSION"));
    hex_digest(id.as_bytes())[..16].to_string()
}

/// 32-bit float WAV, channels in ACN order.
pub fn write_ambix(ir: &AmbisonicIR, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: ir.channels().len() as u16,
        sample_rate: ir.fs().round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for k in 0..ir.len() {
        for ch in ir.channels() {
            w.write_sample(ch[k] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads a float or integer WAV whose channel count is a square `(N+1)²`.
pub fn read_ambix(path: &Path) -> Result<AmbisonicIR> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let n = spec.channels as usize;
    let order = (n as f64).sqrt().round() as usize - 1;
    if (order + 1) * (order + 1) != n || order > MAX_ORDER {
        return Err(Error::Convention(format!(
            "{}: {n} channels is not an Ambisonic channel count",
            path.display()
        )));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()?
        }
    };
    let frames = samples.len() / n;
    let channels = (0..n)
        .map(|c| (0..frames).map(|k| samples[k * n + c]).collect())
        .collect();
    AmbisonicIR::new(ShConfig::ambix(order)?, spec.sample_rate as f64, channels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairIds {
    pub source: usize,
    pub receiver: usize,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestEntry {
    Rir {
        rir_id: String,
        scene_id: String,
        pair: PairIds,
        source_position: [f64; 3],
        receiver_position: [f64; 3],
        /// Broadband T20-based reverberation time.
        rt60: Option<f64>,
        t20_bands: Vec<Option<f64>>,
        #[serde(with = "crate::metrics::sentinel")]
        drr_db: f64,
        /// Relative to the output root.
        path: String,
        convention: String,
        order: usize,
        channels: usize,
        fs: f64,
        crossover_hz: f64,
        air_volume_m3: f64,
        mean_absorption: [f64; NUM_BANDS],
        generator: String,
    },
    /// A gated room (no pair) or a single pair above the gate.
    Gate {
        scene_id: String,
        pair: Option<PairIds>,
        rt60: f64,
        rt60_gate: f64,
        generator: String,
    },
    Error {
        scene_id: String,
        pair: Option<PairIds>,
        error_kind: String,
        message: String,
        generator: String,
    },
}

impl ManifestEntry {
    pub fn scene_id(&self) -> &str {
        match self {
            ManifestEntry::Rir { scene_id, .. }
            | ManifestEntry::Gate { scene_id, .. }
            | ManifestEntry::Error { scene_id, .. } => scene_id,
        }
    }

    pub fn pair(&self) -> Option<PairIds> {
        match self {
            ManifestEntry::Rir { pair, .. } => Some(*pair),
            ManifestEntry::Gate { pair, .. } | ManifestEntry::Error { pair, .. } => *pair,
        }
    }

    /// Ordering used before writing: scene, then pair (room-level first).
    pub fn sort_key(&self) -> (String, Option<PairIds>, u8) {
        let rank = match self {
            ManifestEntry::Rir { .. } => 0,
            ManifestEntry::Gate { .. } => 1,
            ManifestEntry::Error { .. } => 2,
        };
        (self.scene_id().to_string(), self.pair(), rank)
    }
}

/// Appends entries, one JSON object per line.
pub fn append_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let f = std::fs::File::open(path).map_err(|e| Error::from(e).tagged(path.display().to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
