//! Band-limited excitation pulse and its removal from recorded traces.

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::dsp::Sos;

/// Differentiated Gaussian `-u·exp((1 - u²)/2)` with `u = (t - t0)/τ`:
/// unit peak, zero mean, spectrum peaking at `1/(2πτ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePulse {
    pub tau: f64,
    pub t0: f64,
}

impl SourcePulse {
    /// Pulse whose spectral peak sits at `f_max / 3`, delayed by five widths.
    pub fn for_f_max(f_max: f64) -> Self {
        let tau = 3.0 / (2.0 * std::f64::consts::PI * f_max);
        SourcePulse { tau, t0: 5.0 * tau }
    }

    pub fn value(&self, t: f64) -> f64 {
        let u = (t - self.t0) / self.tau;
        -u * (0.5 * (1.0 - u * u)).exp()
    }

    /// Time after which the pulse is below 1e-9 of its peak.
    pub fn support(&self) -> f64 {
        self.t0 + 7.0 * self.tau
    }

    pub fn sampled(&self, fs: f64, len: usize) -> Vec<f64> {
        (0..len).map(|n| self.value(n as f64 / fs)).collect()
    }
}

/// Corner of the high-pass folded into the deconvolution target. The pulse
/// has no DC, so below this the inverse would mostly integrate the static
/// pressure offset a closed room keeps after the source has fired.
pub const DECONV_HIGHPASS_HZ: f64 = 20.0;
/// Raised-cosine fade applied to the end of each trace before inversion.
const END_FADE_S: f64 = 0.01;

/// Wiener deconvolution of each trace by the pulse sampled at `fs`. The
/// regulariser is `eps · max|S|²`, so bins where the pulse carries no energy
/// (DC, far above its band) are suppressed instead of amplified. The target is
/// a causal 4th-order Butterworth high-pass at [`DECONV_HIGHPASS_HZ`] rather
/// than a bare impulse, so the static pressure step turns into a decay after
/// each arrival instead of a precursor.
pub fn deconvolve_pulse(traces: &[Vec<f64>], pulse: &SourcePulse, fs: f64, eps: f64) -> Vec<Vec<f64>> {
    let len = traces.first().map_or(0, Vec::len);
    if len == 0 {
        return traces.to_vec();
    }
    let pulse_len = (pulse.support() * fs).ceil() as usize + 1;
    // generous guard so the acausal part of the inverse does not wrap onto the tail
    let n_fft = (2 * len + pulse_len).next_power_of_two();
    let fade = ((END_FADE_S * fs) as usize).min(len);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);

    let mut s: Vec<Complex64> = pulse
        .sampled(fs, pulse_len)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    s.resize(n_fft, Complex64::new(0.0, 0.0));
    fwd.process(&mut s);
    let peak = s.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let reg = eps * peak;
    let target = Sos::butter_highpass(4, DECONV_HIGHPASS_HZ, fs);
    let filt: Vec<Complex64> = s
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let t = target.response(k as f64 * fs / n_fft as f64, fs);
            c.conj() * t / (c.norm_sqr() + reg)
        })
        .collect();

    traces
        .iter()
        .map(|x| {
            let mut buf: Vec<Complex64> = x
                .iter()
                .enumerate()
                .map(|(n, &v)| {
                    let left = len - n;
                    let w = if left <= fade {
                        0.5 - 0.5 * (std::f64::consts::PI * left as f64 / (fade + 1) as f64).cos()
                    } else {
                        1.0
                    };
                    Complex64::new(v * w, 0.0)
                })
                .collect();
            buf.resize(n_fft, Complex64::new(0.0, 0.0));
            fwd.process(&mut buf);
            for (b, f) in buf.iter_mut().zip(&filt) {
                *b *= f;
            }
            inv.process(&mut buf);
            buf[..len].iter().map(|c| c.re / n_fft as f64).collect()
        })
        .collect()
}
