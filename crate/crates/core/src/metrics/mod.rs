//! Room-acoustic parameters of single-channel impulse responses and
//! set-level comparison statistics.

mod compare;

pub use compare::{compare, format_comparison_table, BandComparison, ComparisonStats};

use serde::{Deserialize, Serialize};

use crate::dsp::OctaveBank;
use crate::error::{Error, Result};
use crate::materials::NUM_BANDS;

/// Fraction of the global peak that marks the onset.
const ONSET_THRESHOLD: f64 = 0.02;
/// Back-off stops before samples quieter than this fraction of the peak.
const ONSET_FLOOR: f64 = 1e-3;
/// Stand-in for log10(0) in decay curves.
pub const EDF_FLOOR_DB: f64 = -300.0;
const EDF_TRUNCATE_DB: f64 = -60.0;
pub const DIRECT_WINDOW_S: f64 = 0.0025;
pub const CLARITY_SPLIT_S: f64 = 0.050;
/// Spacing of the decay curves stored in reports.
pub const EDF_GRID_S: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRange {
    pub upper_db: f64,
    pub lower_db: f64,
}

pub const T20_RANGE: FitRange = FitRange {
    upper_db: -5.0,
    lower_db: -25.0,
};
pub const T30_RANGE: FitRange = FitRange {
    upper_db: -5.0,
    lower_db: -35.0,
};
pub const EDT_RANGE: FitRange = FitRange {
    upper_db: 0.0,
    lower_db: -10.0,
};

/// First sample above 2 % of the peak magnitude, moved back while the
/// magnitude keeps falling and stays above 0.1 % of the peak.
pub fn onset_detect(ir: &[f64]) -> Result<usize> {
    let peak = ir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::NoOnset("signal is silent or not finite".into()));
    }
    let mut i = ir
        .iter()
        .position(|v| v.abs() > ONSET_THRESHOLD * peak)
        .expect("peak exceeds threshold");
    let floor = ONSET_FLOOR * peak;
    while i > 0 && ir[i - 1].abs() < ir[i].abs() && ir[i - 1].abs() > floor {
        i -= 1;
    }
    Ok(i)
}

/// Schroeder backward integral from `onset`, in dB relative to the total.
/// Silent tails read [`EDF_FLOOR_DB`]; the curve ends at the first sample
/// below -60 dB.
pub fn schroeder_edf(ir: &[f64], onset: usize) -> Result<Vec<f64>> {
    if onset >= ir.len() {
        return Err(Error::Domain(format!(
            "onset {onset} beyond signal of {} samples",
            ir.len()
        )));
    }
    let tail = &ir[onset..];
    let mut acc = vec![0.0; tail.len()];
    let mut sum = 0.0;
    for (a, v) in acc.iter_mut().zip(tail).rev() {
        sum += v * v;
        *a = sum;
    }
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::ZeroEnergy("no energy after onset".into()));
    }
    let mut edf = Vec::with_capacity(acc.len());
    for a in acc {
        let db = if a > 0.0 {
            (10.0 * (a / sum).log10()).max(EDF_FLOOR_DB)
        } else {
            EDF_FLOOR_DB
        };
        edf.push(db);
        if db < EDF_TRUNCATE_DB {
            break;
        }
    }
    Ok(edf)
}

/// Reverberation time from a least-squares line through the part of `edf`
/// between the range's bounds, extrapolated to 60 dB.
pub fn rt_from_edf(edf: &[f64], fs: f64, range: FitRange) -> Result<f64> {
    let deepest = edf.iter().cloned().fold(f64::INFINITY, f64::min);
    let start = edf.iter().position(|&v| v <= range.upper_db);
    let end = edf.iter().position(|&v| v < range.lower_db);
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::DecayRange {
            deepest_db: deepest,
            needed_db: range.lower_db,
        });
    };
    let pts = &edf[start..end.max(start + 2).min(edf.len())];
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return Err(Error::DecayRange {
            deepest_db: deepest,
            needed_db: range.lower_db,
        });
    }
    let mean_t = pts.len() as f64 / 2.0 - 0.5;
    let mean_y = pts.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in pts.iter().enumerate() {
        let dt = k as f64 - mean_t;
        sxy += dt * (y - mean_y);
        sxx += dt * dt;
    }
    let slope = sxy / sxx * fs;
    if !(slope < 0.0) {
        return Err(Error::DecayRange {
            deepest_db: deepest,
            needed_db: range.lower_db,
        });
    }
    Ok(-60.0 / slope)
}

fn energy_ratio_db(num: f64, den: f64) -> Result<f64> {
    if !(num > 0.0) && !(den > 0.0) {
        return Err(Error::ZeroEnergy("signal is silent".into()));
    }
    if !(den > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (num / den).log10())
}

/// Direct-to-reverberant ratio with a ±2.5 ms direct window around `onset`.
/// Returns `+inf` when nothing lies outside the window.
pub fn drr(ir: &[f64], fs: f64, onset: usize) -> Result<f64> {
    let w = (DIRECT_WINDOW_S * fs).round() as usize;
    let lo = onset.saturating_sub(w);
    let hi = (onset + w + 1).min(ir.len());
    let direct: f64 = ir[lo..hi].iter().map(|v| v * v).sum();
    let total: f64 = ir.iter().map(|v| v * v).sum();
    energy_ratio_db(direct, (total - direct).max(0.0))
}

/// Clarity with a 50 ms split after `onset`. Returns `+inf` when no energy
/// arrives after the split.
pub fn c50(ir: &[f64], fs: f64, onset: usize) -> Result<f64> {
    let split = (onset + (CLARITY_SPLIT_S * fs).round() as usize).min(ir.len());
    let early: f64 = ir[onset.min(split)..split].iter().map(|v| v * v).sum();
    let late: f64 = ir[split..].iter().map(|v| v * v).sum();
    energy_ratio_db(early, late)
}

/// Octave-band copies of `ir` at 125 Hz … 4 kHz; bands the sample rate
/// cannot hold are `None`.
pub fn octave_filterbank(ir: &[f64], fs: f64) -> [Option<Vec<f64>>; NUM_BANDS] {
    let bank = OctaveBank::new(fs);
    for b in (0..NUM_BANDS).filter(|&b| !bank.supported(b)) {
        log::warn!(
            "octave band {} Hz dropped: fs {fs} Hz is below twice its upper edge",
            crate::materials::BAND_CENTERS_HZ[b]
        );
    }
    bank.split(ir)
}

/// Per-band (or broadband) parameters. Reverberation times are `None` when
/// the decay does not reach the fit range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub t20: Option<f64>,
    pub t30: Option<f64>,
    pub edt: Option<f64>,
    #[serde(with = "sentinel")]
    pub drr: f64,
    #[serde(with = "sentinel")]
    pub c50: f64,
    /// Decay curve in dB sampled every millisecond from the onset.
    pub edf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fs: f64,
    pub onset_sample: usize,
    pub broadband: BandMetrics,
    /// 125 Hz … 4 kHz; `None` for bands above the sample rate's reach.
    pub bands: Vec<Option<BandMetrics>>,
}

impl MetricsReport {
    /// Analyses one channel (normally the omnidirectional W channel).
    pub fn analyze(ir: &[f64], fs: f64) -> Result<Self> {
        let onset = onset_detect(ir)?;
        let broadband = band_metrics(ir, fs, onset)?;
        let bands = octave_filterbank(ir, fs)
            .into_iter()
            .map(|b| b.map(|x| band_metrics(&x, fs, onset)).transpose())
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricsReport {
            fs,
            onset_sample: onset,
            broadband,
            bands,
        })
    }

    /// Broadband T20-based reverberation time.
    pub fn rt60(&self) -> Option<f64> {
        self.broadband.t20
    }
}

fn band_metrics(x: &[f64], fs: f64, onset: usize) -> Result<BandMetrics> {
    let edf = schroeder_edf(x, onset)?;
    let fit = |r| match rt_from_edf(&edf, fs, r) {
        Ok(t) => Ok(Some(t)),
        Err(Error::DecayRange { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let step = EDF_GRID_S * fs;
    let grid: Vec<f64> = (0..)
        .map(|k| (k as f64 * step).round() as usize)
        .take_while(|&i| i < edf.len())
        .map(|i| edf[i])
        .collect();
    Ok(BandMetrics {
        t20: fit(T20_RANGE)?,
        t30: fit(T30_RANGE)?,
        edt: fit(EDT_RANGE)?,
        drr: drr(x, fs, onset)?,
        c50: c50(x, fs, onset)?,
        edf: grid,
    })
}

/// Serialises `+inf` as the string `"+inf"`, other values as numbers.
pub(crate) mod sentinel {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("+inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "+inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unexpected value `{t}`"))),
        }
    }
}
