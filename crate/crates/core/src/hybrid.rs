//! Joining the wave-based low band and the ray-traced high band into one
//! Ambisonic impulse response.

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::dsp::{filtfilt, Sos};
use crate::error::{Error, Result};
use crate::metrics::onset_detect;
use crate::sharm::{channel_count, ShConfig};

pub const DEFAULT_CROSSOVER_HZ: f64 = 900.0;
pub const DEFAULT_OUTPUT_FS: f64 = 48000.0;
/// Direct-sound window used for alignment.
pub const ALIGN_WINDOW_S: f64 = 0.020;
/// Largest shift `align` will consider.
pub const ALIGN_MAX_LAG_S: f64 = 0.005;
/// Early segment used for level calibration.
pub const CALIBRATION_WINDOW_S: f64 = 0.080;
/// Calibration bands: one half-octave each side of the crossover.
pub const LOW_CAL_BAND: (f64, f64) = (600.0, 900.0);
pub const HIGH_CAL_BAND: (f64, f64) = (900.0, 1350.0);

#[derive(Debug, Clone, PartialEq)]
pub struct AmbisonicIR {
    config: ShConfig,
    fs: f64,
    channels: Vec<Vec<f64>>,
}

impl AmbisonicIR {
    pub fn new(config: ShConfig, fs: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.len() != config.channels() {
            return Err(Error::Shape(format!(
                "order {} needs {} channels, got {}",
                config.order(),
                config.channels(),
                channels.len()
            )));
        }
        if !(fs > 0.0) {
            return Err(Error::Domain(format!("sample rate {fs} must be positive")));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite sample in impulse response".into()));
        }
        Ok(AmbisonicIR { config, fs, channels })
    }

    pub fn config(&self) -> ShConfig {
        self.config
    }

    pub fn order(&self) -> usize {
        self.config.order()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The omnidirectional channel.
    pub fn w(&self) -> &[f64] {
        &self.channels[0]
    }

    /// Drops channels above `order`.
    pub fn truncate_order(&self, order: usize) -> Result<Self> {
        if order > self.order() {
            return Err(Error::Shape(format!("cannot raise order {} to {order}", self.order())));
        }
        let config = ShConfig::new(order, self.config.normalization())?;
        Ok(AmbisonicIR {
            config,
            fs: self.fs,
            channels: self.channels[..channel_count(order)].to_vec(),
        })
    }

    pub fn scaled(&self, gain: f64) -> Self {
        AmbisonicIR {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|v| v * gain).collect())
                .collect(),
            ..self.clone()
        }
    }

    /// Moves every channel by `samples` (positive delays), keeping the length.
    pub fn shifted(&self, samples: i64) -> Self {
        let len = self.len() as i64;
        let channels = self
            .channels
            .iter()
            .map(|c| {
                (0..len)
                    .map(|k| {
                        let src = k - samples;
                        if (0..len).contains(&src) {
                            c[src as usize]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        AmbisonicIR {
            channels,
            ..self.clone()
        }
    }
}

/// Zero-phase complementary crossover. `order` is the combined
/// (forward-backward) slope; each pass uses a Butterworth of half that order,
/// so the two branches sum to unity at every frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverSpec {
    pub f_c: f64,
    pub order: usize,
}

impl Default for CrossoverSpec {
    fn default() -> Self {
        CrossoverSpec {
            f_c: DEFAULT_CROSSOVER_HZ,
            order: 8,
        }
    }
}

impl CrossoverSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.order == 0 || self.order % 2 != 0 {
            return Err(Error::Domain(format!(
                "crossover order {} must be even and positive",
                self.order
            )));
        }
        if !(self.f_c > 0.0 && self.f_c < fs / 2.0) {
            return Err(Error::Domain(format!("crossover {} Hz outside (0, fs/2)", self.f_c)));
        }
        Ok(())
    }

    pub fn lowpass(&self, fs: f64) -> Sos {
        Sos::butter_lowpass(self.order / 2, self.f_c, fs)
    }

    pub fn highpass(&self, fs: f64) -> Sos {
        Sos::butter_highpass(self.order / 2, self.f_c, fs)
    }

    /// Zero-phase magnitude of the low branch at `f`.
    pub fn low_gain(&self, f: f64, fs: f64) -> f64 {
        self.lowpass(fs).response(f, fs).norm_sqr()
    }

    pub fn high_gain(&self, f: f64, fs: f64) -> f64 {
        self.highpass(fs).response(f, fs).norm_sqr()
    }
}

fn check_pair(low: &AmbisonicIR, high: &AmbisonicIR) -> Result<()> {
    if low.fs != high.fs {
        return Err(Error::Convention(format!(
            "sample rates differ: {} vs {}",
            low.fs, high.fs
        )));
    }
    if low.config.normalization() != high.config.normalization() {
        return Err(Error::Convention("SH normalisations differ".into()));
    }
    Ok(())
}

/// Shift to apply to `high` (negative advances it) that best lines up the
/// W-channel direct sound of the two bands.
///
/// Both W channels are low-passed at the default crossover, then correlated
/// over [`ALIGN_WINDOW_S`] from the earlier of the two onsets, for lags up to
/// [`ALIGN_MAX_LAG_S`] either way. The wave band's onset sits ahead of the
/// true arrival by up to the array radius (and by filter pre-ringing), so
/// onsets only anchor the window and never the lag itself.
pub fn align(low: &AmbisonicIR, high: &AmbisonicIR) -> Result<i64> {
    check_pair(low, high)?;
    let onset_a = onset_detect(low.w()).map_err(|e| e.tagged("low band"))?;
    let onset_b = onset_detect(high.w()).map_err(|e| e.tagged("high band"))?;
    let lp = Sos::butter_lowpass(4, DEFAULT_CROSSOVER_HZ.min(0.4 * low.fs), low.fs);
    let (a, b) = (filtfilt(&lp, low.w()), filtfilt(&lp, high.w()));
    let start = onset_a.min(onset_b);
    let w = (ALIGN_WINDOW_S * low.fs).round() as usize;
    let max_lag = (ALIGN_MAX_LAG_S * low.fs).round() as i64;
    let window = &a[start..(start + w).min(a.len())];
    let corr = |lag: i64| -> f64 {
        window
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let j = (start + i) as i64 + lag;
                if (0..b.len() as i64).contains(&j) {
                    v * b[j as usize]
                } else {
                    0.0
                }
            })
            .sum()
    };
    let mut best = (f64::NEG_INFINITY, 0i64);
    for lag in -max_lag..=max_lag {
        let c = corr(lag);
        // nearest-to-zero lag wins ties
        if c > best.0 || (c == best.0 && lag.abs() < best.1.abs()) {
            best = (c, lag);
        }
    }
    log::debug!("align: onsets {onset_a}/{onset_b}, lag {}", best.1);
    Ok(-best.1)
}

/// Mean spectral power density over `band` of `x[start..start + len]`.
fn band_density(x: &[f64], start: usize, len: usize, fs: f64, band: (f64, f64)) -> f64 {
    let seg = &x[start.min(x.len())..(start + len).min(x.len())];
    let n_fft = (4 * len).next_power_of_two();
    let mut buf: Vec<Complex64> = seg.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n_fft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let df = fs / n_fft as f64;
    let lo = (band.0 / df).ceil() as usize;
    let hi = (band.1 / df).floor() as usize;
    let bins = &buf[lo..=hi];
    bins.iter().map(|c| c.norm_sqr()).sum::<f64>() / bins.len() as f64
}

/// Gain for `high` that matches its W-channel level just above the
/// crossover to the low band's level just below it, measured as spectral
/// density over the first 80 ms after the low band's onset.
pub fn calibrate_gain(low: &AmbisonicIR, high: &AmbisonicIR) -> Result<f64> {
    check_pair(low, high)?;
    let start = onset_detect(low.w()).map_err(|e| e.tagged("low band"))?;
    let len = (CALIBRATION_WINDOW_S * low.fs).round() as usize;
    let p_low = band_density(low.w(), start, len, low.fs, LOW_CAL_BAND);
    let p_high = band_density(high.w(), start, len, high.fs, HIGH_CAL_BAND);
    if !(p_low > 0.0) {
        return Err(Error::ZeroEnergy("low band has no energy below the crossover".into()));
    }
    if !(p_high > 0.0) {
        return Err(Error::ZeroEnergy("high band has no energy above the crossover".into()));
    }
    Ok((p_low / p_high).sqrt())
}

/// `LP(low) + HP(high)` per channel, zero-phase. The higher-order input is
/// truncated to the lower order; the output has the longer length.
pub fn merge(low: &AmbisonicIR, high: &AmbisonicIR, spec: &CrossoverSpec) -> Result<AmbisonicIR> {
    check_pair(low, high)?;
    spec.validate(low.fs)?;
    let order = low.order().min(high.order());
    let (low, high) = (low.truncate_order(order)?, high.truncate_order(order)?);
    let len = low.len().max(high.len());
    let (lp, hp) = (spec.lowpass(low.fs), spec.highpass(low.fs));
    let channels = low
        .channels
        .par_iter()
        .zip(&high.channels)
        .map(|(l, h)| {
            let mut out = vec![0.0; len];
            for (o, v) in out.iter_mut().zip(filtfilt(&lp, l)) {
                *o += v;
            }
            for (o, v) in out.iter_mut().zip(filtfilt(&hp, h)) {
                *o += v;
            }
            out
        })
        .collect();
    AmbisonicIR::new(low.config, low.fs, channels)
}

/// What [`hybridize`] applied to the high band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeInfo {
    pub offset_samples: i64,
    pub gain: f64,
}

/// Align, calibrate and merge in one step.
pub fn hybridize(low: &AmbisonicIR, high: &AmbisonicIR, spec: &CrossoverSpec) -> Result<(AmbisonicIR, MergeInfo)> {
    let order = low.order().min(high.order());
    let high = high.truncate_order(order)?;
    let offset = align(low, &high)?;
    let shifted = high.shifted(offset);
    let gain = calibrate_gain(low, &shifted)?;
    let merged = merge(low, &shifted.scaled(gain), spec)?;
    Ok((
        merged,
        MergeInfo {
            offset_samples: offset,
            gain,
        },
    ))
}
