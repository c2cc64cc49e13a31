//! Arbitrary-ratio band-limited resampling (Kaiser-windowed sinc, polyphase
//! table) and the final zero-phase band limit.

use rayon::prelude::*;

use super::PressureTraces;
use crate::dsp::{filtfilt, Sos};
use crate::error::{Error, Result};

const PHASES: usize = 512;
const ZERO_CROSSINGS: f64 = 24.0;
const KAISER_BETA: f64 = 8.6;
const CUTOFF_FRACTION: f64 = 0.45;
const LIMIT_ORDER: usize = 10;

/// Symmetric low-pass kernel tabulated at `PHASES` points per input sample.
struct Kernel {
    half_width: f64,
    table: Vec<f64>,
}

impl Kernel {
    fn new(fs_in: f64, fs_out: f64) -> Self {
        let nu = CUTOFF_FRACTION * fs_in.min(fs_out) / fs_in; // cycles per input sample
        let half_width = ZERO_CROSSINGS / (2.0 * nu);
        let n = (half_width * PHASES as f64).ceil() as usize + 2;
        let i0_beta = bessel_i0(KAISER_BETA);
        let table = (0..n)
            .map(|j| {
                let u = j as f64 / PHASES as f64;
                if u >= half_width {
                    return 0.0;
                }
                let t = u / half_width;
                let w = bessel_i0(KAISER_BETA * (1.0 - t * t).sqrt()) / i0_beta;
                2.0 * nu * sinc(2.0 * nu * u) * w
            })
            .collect();
        Kernel { half_width, table }
    }

    #[inline]
    fn eval(&self, u: f64) -> f64 {
        let pos = u.abs() * PHASES as f64;
        let j = pos as usize;
        if j + 1 >= self.table.len() {
            return 0.0;
        }
        let f = pos - j as f64;
        self.table[j] * (1.0 - f) + self.table[j + 1] * f
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let a = std::f64::consts::PI * x;
        a.sin() / a
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Resamples every series from `fs_in` to `fs_out`. Output sample `m` sits at
/// time `m / fs_out`; the kernel is symmetric so no delay is introduced.
pub fn resample(signals: &[Vec<f64>], fs_in: f64, fs_out: f64) -> Vec<Vec<f64>> {
    let len = signals.first().map_or(0, Vec::len);
    if len == 0 {
        return signals.to_vec();
    }
    let kernel = Kernel::new(fs_in, fs_out);
    let out_len = ((len - 1) as f64 * fs_out / fs_in + 1e-9).floor() as usize + 1;
    let ratio = fs_in / fs_out;
    // Tap positions and weights are shared by all series.
    let taps: Vec<(usize, Vec<f64>)> = (0..out_len)
        .map(|m| {
            let x = m as f64 * ratio;
            let lo = (x - kernel.half_width).ceil().max(0.0) as usize;
            let hi = ((x + kernel.half_width).floor() as usize).min(len - 1);
            let w = (lo..=hi).map(|k| kernel.eval(x - k as f64)).collect();
            (lo, w)
        })
        .collect();
    signals
        .par_iter()
        .map(|s| {
            taps.iter()
                .map(|(lo, w)| w.iter().zip(&s[*lo..]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

/// Resamples traces to `fs_out` and band-limits them to `f_max` with a
/// zero-phase Butterworth low-pass.
pub fn resample_and_limit(traces: &PressureTraces, fs_out: f64, f_max: f64) -> Result<PressureTraces> {
    if !(fs_out >= 2.0 * f_max) || !(f_max > 0.0) {
        return Err(Error::Domain(format!(
            "output rate {fs_out} Hz is below twice f_max = {f_max} Hz"
        )));
    }
    let resampled = resample(&traces.traces, traces.fs, fs_out);
    let lp = Sos::butter_lowpass(LIMIT_ORDER, f_max, fs_out);
    let limited = resampled.par_iter().map(|s| filtfilt(&lp, s)).collect();
    Ok(PressureTraces {
        fs: fs_out,
        traces: limited,
        probe_points: traces.probe_points.clone(),
    })
}
