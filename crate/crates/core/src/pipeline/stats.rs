//! Dataset summary tables and directory-level comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::output::{read_ambix, ManifestEntry};
use crate::error::{Error, Result};
use crate::materials::{BAND_CENTERS_HZ, NUM_BANDS};
use crate::metrics::{compare, ComparisonStats, MetricsReport};

const RT60_BIN_S: f64 = 0.1;

/// Tab-separated summary of the emitted RIRs: an RT60 histogram with 0.1 s
/// bins, room volumes, and mean absorption per band. Sections start with a
/// `#` line.
pub fn dataset_stats(entries: &[ManifestEntry]) -> Result<String> {
    let mut rt60s = Vec::new();
    let mut rooms: BTreeMap<&str, (f64, [f64; NUM_BANDS])> = BTreeMap::new();
    for e in entries {
        if let ManifestEntry::Rir {
            scene_id,
            rt60,
            air_volume_m3,
            mean_absorption,
            ..
        } = e
        {
            if let Some(t) = rt60 {
                rt60s.push(*t);
            }
            rooms.insert(scene_id, (*air_volume_m3, *mean_absorption));
        }
    }
    if rooms.is_empty() {
        return Err(Error::Shape("manifest has no emitted impulse responses".into()));
    }

    let mut s = String::from("# rt60_histogram\nbin_start_s\tbin_end_s\tcount\n");
    let bin = |t: f64| (t / RT60_BIN_S + 1e-9).floor() as i64;
    if let (Some(lo), Some(hi)) = (rt60s.iter().map(|&t| bin(t)).min(), rt60s.iter().map(|&t| bin(t)).max()) {
        for b in lo..=hi {
            let n = rt60s.iter().filter(|&&t| bin(t) == b).count();
            let _ = writeln!(
                s,
                "{:.1}\t{:.1}\t{n}",
                b as f64 * RT60_BIN_S,
                (b + 1) as f64 * RT60_BIN_S
            );
        }
    }

    let vols: Vec<f64> = rooms.values().map(|r| r.0).collect();
    let (min, max) = vols
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = vols.iter().sum::<f64>() / vols.len() as f64;
    let _ = writeln!(s, "# volume\nrooms\tmin_m3\tmean_m3\tmax_m3");
    let _ = writeln!(s, "{}\t{min:.2}\t{mean:.2}\t{max:.2}", vols.len());

    let _ = writeln!(s, "# absorption\nband_hz\tmean_alpha");
    for (b, fc) in BAND_CENTERS_HZ.iter().enumerate() {
        let a = rooms.values().map(|r| r.1[b]).sum::<f64>() / rooms.len() as f64;
        let _ = writeln!(s, "{fc}\t{a:.4}");
    }
    Ok(s)
}

fn wav_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::from(e).tagged(dir.display().to_string()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn analyze_file(path: &Path) -> Result<MetricsReport> {
    let ir = read_ambix(path)?;
    MetricsReport::analyze(ir.w(), ir.fs()).map_err(|e| e.tagged(path.display().to_string()))
}

/// Pairs WAV files by relative path under `sim` and `reference` and compares
/// the W-channel metrics.
pub fn compare_dirs(sim: &Path, reference: &Path) -> Result<ComparisonStats> {
    let (a, b) = (wav_files(sim)?, wav_files(reference)?);
    if a != b {
        let missing: Vec<String> = a
            .iter()
            .filter(|p| !b.contains(p))
            .chain(b.iter().filter(|p| !a.contains(p)))
            .map(|p| p.display().to_string())
            .collect();
        return Err(Error::Shape(format!("unpaired files: {}", missing.join(", "))));
    }
    let reports =
        |root: &Path| -> Result<Vec<MetricsReport>> { a.par_iter().map(|rel| analyze_file(&root.join(rel))).collect() };
    compare(&reports(sim)?, &reports(reference)?)
}
