//! Octave-band analysis and synthesis banks on the 125 Hz – 4 kHz grid.

use std::f64::consts::SQRT_2;

use super::filter::{filtfilt, zero_phase_bandpass, Sos};
use crate::materials::{BAND_CENTERS_HZ, NUM_BANDS};

const ANALYSIS_ORDER: usize = 3;
const SYNTHESIS_ORDER: usize = 4;

/// Zero-phase octave band-pass filters, -3 dB at `fc/√2` and `fc·√2`.
///
/// Bands whose upper edge is at or above Nyquist are not built.
#[derive(Debug, Clone)]
pub struct OctaveBank {
    fs: f64,
    bands: [Option<Sos>; NUM_BANDS],
}

impl OctaveBank {
    pub fn new(fs: f64) -> Self {
        let bands = BAND_CENTERS_HZ.map(|fc| {
            let (lo, hi) = (fc / SQRT_2, fc * SQRT_2);
            (fs >= 2.0 * hi).then(|| zero_phase_bandpass(ANALYSIS_ORDER, lo, hi, fs))
        });
        OctaveBank { fs, bands }
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn supported(&self, band: usize) -> bool {
        self.bands[band].is_some()
    }

    pub fn band(&self, band: usize) -> Option<&Sos> {
        self.bands[band].as_ref()
    }

    /// Filters `x` into each supported band.
    pub fn split(&self, x: &[f64]) -> [Option<Vec<f64>>; NUM_BANDS] {
        std::array::from_fn(|b| self.bands[b].as_ref().map(|sos| filtfilt(sos, x)))
    }
}

/// Complementary band splitter: band `k` is `H_0 … H_{k-1} · L_k` where
/// `L_i + H_i = 1` at each of the five inter-band edges, so the six bands
/// sum back to the input exactly. Used to shape per-band ray energy into a
/// single broadband signal.
#[derive(Debug, Clone)]
pub struct ComplementaryBank {
    lows: Vec<Sos>,
    highs: Vec<Sos>,
}

impl ComplementaryBank {
    pub fn new(fs: f64) -> Self {
        let edges: Vec<f64> = BAND_CENTERS_HZ[..NUM_BANDS - 1].iter().map(|fc| fc * SQRT_2).collect();
        assert!(
            fs > 2.0 * edges[edges.len() - 1],
            "sample rate {fs} too low for the octave synthesis bank"
        );
        ComplementaryBank {
            lows: edges
                .iter()
                .map(|&e| Sos::butter_lowpass(SYNTHESIS_ORDER, e, fs))
                .collect(),
            highs: edges
                .iter()
                .map(|&e| Sos::butter_highpass(SYNTHESIS_ORDER, e, fs))
                .collect(),
        }
    }

    /// Sums `bands[k]` passed through band `k`'s filter.
    pub fn combine(&self, bands: &[Vec<f64>; NUM_BANDS]) -> Vec<f64> {
        // Horner form: acc = L_k(x_k) + H_k(acc), from the top band down.
        let mut acc = bands[NUM_BANDS - 1].clone();
        for k in (0..NUM_BANDS - 1).rev() {
            let high = filtfilt(&self.highs[k], &acc);
            let low = filtfilt(&self.lows[k], &bands[k]);
            acc = high.iter().zip(&low).map(|(h, l)| h + l).collect();
        }
        acc
    }

    /// Magnitude of band `k`'s combined zero-phase response at `f`.
    pub fn band_gain(&self, k: usize, f: f64, fs: f64) -> f64 {
        let mut g = 1.0;
        for i in 0..k {
            g *= self.highs[i].response(f, fs).norm_sqr();
        }
        if k < NUM_BANDS - 1 {
            g *= self.lows[k].response(f, fs).norm_sqr();
        }
        g
    }
}
