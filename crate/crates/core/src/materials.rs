//! Octave-band material table, surface-label matching and boundary parameters.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scene::TriMesh;

pub const NUM_BANDS: usize = 6;

/// Octave band centres shared by absorption tables, the ray engine and the
/// metric filter bank.
pub const BAND_CENTERS_HZ: [f64; NUM_BANDS] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0];

const BUNDLED_TABLE: &str = include_str!("../assets/materials.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MaterialSpec {
    pub name: String,
    pub absorption: [f64; NUM_BANDS],
    pub scattering: [f64; NUM_BANDS],
}

impl MaterialSpec {
    pub fn uniform(name: impl Into<String>, absorption: f64, scattering: f64) -> Result<Self> {
        let spec = MaterialSpec {
            name: name.into(),
            absorption: [absorption; NUM_BANDS],
            scattering: [scattering; NUM_BANDS],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &f64| (0.0..=1.0).contains(v);
        if !self.absorption.iter().all(ok) || !self.scattering.iter().all(ok) {
            return Err(Error::Domain(format!(
                "material `{}`: coefficients must lie in [0, 1]",
                self.name
            )));
        }
        Ok(())
    }

    pub fn mean_scattering(&self) -> f64 {
        self.scattering.iter().sum::<f64>() / NUM_BANDS as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    entries: Vec<MaterialSpec>,
    default_id: usize,
}

#[derive(Deserialize)]
struct TableFile {
    default: Option<String>,
    material: Vec<MaterialSpec>,
}

impl MaterialTable {
    pub fn new(entries: Vec<MaterialSpec>, default_id: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("material table is empty".into()));
        }
        if default_id >= entries.len() {
            return Err(Error::Config(format!(
                "default material index {default_id} out of range"
            )));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            e.validate()?;
            if !seen.insert(e.name.as_str()) {
                return Err(Error::Config(format!("duplicate material `{}`", e.name)));
            }
        }
        Ok(MaterialTable { entries, default_id })
    }

    /// The generic table compiled into the library.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_TABLE).expect("bundled material table is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TableFile = toml::from_str(text).map_err(|e| Error::Config(format!("material table: {e}")))?;
        let default_id = match &file.default {
            Some(name) => file
                .material
                .iter()
                .position(|m| &m.name == name)
                .ok_or_else(|| Error::Config(format!("default material `{name}` not in table")))?,
            None => 0,
        };
        Self::new(file.material, default_id)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| e.tagged(path.display().to_string()))
    }

    pub fn entries(&self) -> &[MaterialSpec] {
        &self.entries
    }

    pub fn get(&self, id: usize) -> &MaterialSpec {
        &self.entries[id]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn default_id(&self) -> usize {
        self.default_id
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Matches `label` with the default token-overlap matcher.
    pub fn match_label(&self, label: &str) -> usize {
        TokenOverlapMatcher.match_label(label, self)
    }
}

/// Maps a free-text surface label to a table entry.
pub trait LabelMatcher: Send + Sync {
    fn match_label(&self, label: &str, table: &MaterialTable) -> usize;
}

/// Jaccard similarity between label tokens and entry-name tokens. Two tokens
/// are equivalent when equal or when one is a prefix (of at least three
/// characters) of the other, so "wooden" meets "wood" and "tiled" meets "tile".
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlapMatcher;

impl TokenOverlapMatcher {
    pub fn score(label: &str, name: &str) -> f64 {
        let a = tokens(label);
        let b = tokens(name);
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let shared = a
            .iter()
            .filter(|x| b.iter().any(|y| tokens_equivalent(x, y)))
            .count()
            .min(b.len());
        shared as f64 / (a.len() + b.len() - shared) as f64
    }
}

impl LabelMatcher for TokenOverlapMatcher {
    fn match_label(&self, label: &str, table: &MaterialTable) -> usize {
        let mut best = (0.0, table.default_id());
        for (i, e) in table.entries().iter().enumerate() {
            let s = Self::score(label, &e.name);
            if s > best.0 {
                best = (s, i);
            }
        }
        best.1
    }
}

fn tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect::<String>()
        .to_lowercase();
    let mut out: Vec<String> = Vec::new();
    for t in cleaned.split_whitespace() {
        if !out.iter().any(|o| o == t) {
            out.push(t.to_string());
        }
    }
    out
}

fn tokens_equivalent(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    short.chars().count() >= 3 && long.starts_with(short)
}

/// Normal-incidence conversion of an energy absorption coefficient to a
/// specific acoustic admittance: `R = sqrt(1 - α)`, `γ = (1 - R) / (1 + R)`.
pub fn absorption_to_admittance(alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("absorption {alpha} outside [0, 1]")));
    }
    let r = (1.0 - alpha).sqrt();
    Ok((1.0 - r) / (1.0 + r))
}

/// Diffuse-field absorption of a locally reacting wall with real specific
/// admittance `gamma` (angle-weighted over the half space):
/// `8γ [1 + γ/(1+γ) - 2γ ln((1+γ)/γ)]`.
pub fn statistical_absorption(gamma: f64) -> f64 {
    if gamma <= 0.0 {
        return 0.0;
    }
    8.0 * gamma * (1.0 + gamma / (1.0 + gamma) - 2.0 * gamma * ((1.0 + gamma) / gamma).ln())
}

/// Admittance where [`statistical_absorption`] peaks (about 0.95 there).
fn statistical_peak() -> f64 {
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if statistical_absorption(a) < statistical_absorption(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest admittance whose diffuse-field absorption equals `alpha`;
/// absorption beyond the attainable peak maps to the peak.
pub fn statistical_admittance(alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("absorption {alpha} outside [0, 1]")));
    }
    let peak = statistical_peak();
    if alpha >= statistical_absorption(peak) {
        return Ok(peak);
    }
    let (mut lo, mut hi) = (0.0, peak);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if statistical_absorption(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Frequency-independent admittance for the wave solver: mean absorption over
/// bands centred at or below `f_max` (the lowest band alone if none are),
/// matched in the diffuse-field sense so the wave band decays like the rays.
pub fn broadband_admittance(spec: &MaterialSpec, f_max: f64) -> f64 {
    let used: Vec<f64> = BAND_CENTERS_HZ
        .iter()
        .zip(&spec.absorption)
        .filter(|(fc, _)| **fc <= f_max)
        .map(|(_, a)| *a)
        .collect();
    let alpha = if used.is_empty() {
        spec.absorption[0]
    } else {
        used.iter().sum::<f64>() / used.len() as f64
    };
    statistical_admittance(alpha.clamp(0.0, 1.0)).expect("clamped")
}

/// Sabine reverberation time for one band of a closed mesh whose triangles
/// carry resolved material ids.
pub fn sabine_rt60(mesh: &TriMesh, table: &MaterialTable, band: usize) -> Result<f64> {
    if band >= NUM_BANDS {
        return Err(Error::Domain(format!("band {band} out of range")));
    }
    let volume = mesh.volume();
    let mut absorption_area = 0.0;
    for t in 0..mesh.triangle_count() {
        absorption_area += mesh.triangle_area(t) * table.get(mesh.material_ids[t]).absorption[band];
    }
    if absorption_area <= 0.0 {
        return Err(Error::ZeroEnergy(
            "total absorption is zero; reverberation time is infinite".into(),
        ));
    }
    Ok(0.161 * volume / absorption_area)
}
