//! Set-level error statistics between simulated and reference reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BandMetrics, MetricsReport};
use crate::error::{Error, Result};
use crate::materials::{BAND_CENTERS_HZ, NUM_BANDS};

/// Deepest level of the decay curves entering the EDF error.
pub const EDF_COMPARE_DB: f64 = -30.0;

/// Statistics for one band; `None` when no pair had the value on both sides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BandComparison {
    /// Mean absolute percentage error of T20.
    pub t20_mape: Option<f64>,
    /// Mean squared dB difference of the decay curves down to -30 dB.
    pub edf_mse: Option<f64>,
    /// Mean squared DRR difference, dB².
    pub drr_mse: Option<f64>,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonStats {
    pub broadband: BandComparison,
    pub bands: Vec<BandComparison>,
}

#[derive(Default)]
struct Acc {
    t20: Vec<f64>,
    edf: Vec<f64>,
    drr: Vec<f64>,
    pairs: usize,
}

impl Acc {
    fn push(&mut self, sim: &BandMetrics, reference: &BandMetrics) {
        self.pairs += 1;
        if let (Some(s), Some(r)) = (sim.t20, reference.t20) {
            self.t20.push((s - r).abs() / r * 100.0);
        }
        let n = reference
            .edf
            .iter()
            .take_while(|&&v| v >= EDF_COMPARE_DB)
            .count()
            .min(sim.edf.len());
        if n > 0 {
            let mse = sim.edf[..n]
                .iter()
                .zip(&reference.edf[..n])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            self.edf.push(mse);
        }
        if sim.drr.is_finite() && reference.drr.is_finite() {
            self.drr.push((sim.drr - reference.drr).powi(2));
        } else if sim.drr == reference.drr {
            self.drr.push(0.0);
        }
    }

    fn finish(self) -> BandComparison {
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        BandComparison {
            t20_mape: mean(self.t20),
            edf_mse: mean(self.edf),
            drr_mse: mean(self.drr),
            pairs: self.pairs,
        }
    }
}

/// Pairs `sim[i]` with `reference[i]`.
pub fn compare(sim: &[MetricsReport], reference: &[MetricsReport]) -> Result<ComparisonStats> {
    if sim.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} simulated reports but {} references",
            sim.len(),
            reference.len()
        )));
    }
    if sim.is_empty() {
        return Err(Error::Shape("no report pairs to compare".into()));
    }
    let mut broadband = Acc::default();
    let mut bands: Vec<Acc> = (0..NUM_BANDS).map(|_| Acc::default()).collect();
    for (s, r) in sim.iter().zip(reference) {
        broadband.push(&s.broadband, &r.broadband);
        for (b, acc) in bands.iter_mut().enumerate() {
            if let (Some(Some(sb)), Some(Some(rb))) = (s.bands.get(b), r.bands.get(b)) {
                acc.push(sb, rb);
            }
        }
    }
    Ok(ComparisonStats {
        broadband: broadband.finish(),
        bands: bands.into_iter().map(Acc::finish).collect(),
    })
}

/// Tab-separated table: one row per band plus broadband.
pub fn format_comparison_table(stats: &ComparisonStats) -> String {
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut s = String::from("band\tt20_mape_pct\tedf_mse_db2\tdrr_mse_db2\tpairs\n");
    let mut row = |name: &str, c: &BandComparison| {
        let _ = writeln!(
            s,
            "{name}\t{}\t{}\t{}\t{}",
            cell(c.t20_mape),
            cell(c.edf_mse),
            cell(c.drr_mse),
            c.pairs
        );
    };
    row("broadband", &stats.broadband);
    for (fc, c) in BAND_CENTERS_HZ.iter().zip(&stats.bands) {
        row(&format!("{fc}"), c);
    }
    s
}
