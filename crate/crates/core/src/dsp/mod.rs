//! Shared signal-processing primitives: IIR design, zero-phase filtering,
//! octave banks, spectra.

pub mod bands;
pub mod filter;

pub use bands::{ComplementaryBank, OctaveBank};
pub use filter::{filtfilt, zero_phase_bandpass, Biquad, Sos};

use rustfft::{num_complex::Complex64, FftPlanner};

/// Magnitude spectrum of `x` zero-padded to `n_fft` points (bins 0..=n_fft/2).
pub fn magnitude_spectrum(x: &[f64], n_fft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().take(n_fft).map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n_fft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    buf[..=n_fft / 2].iter().map(|c| c.norm()).collect()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn db_power(x: f64) -> f64 {
    10.0 * x.log10()
}
