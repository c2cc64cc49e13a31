//! Butterworth designs as cascaded biquads, and forward-backward (zero-phase)
//! filtering.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

/// One second-order section, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

/// A cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    sections: Vec<Biquad>,
    max_pole_radius: f64,
}

impl Sos {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Butterworth low-pass, -3 dB at `fc` for a single pass.
    pub fn butter_lowpass(order: usize, fc: f64, fs: f64) -> Self {
        let wc = prewarp(fc, fs);
        let poles: Vec<Complex64> = butter_prototype(order).iter().map(|p| p * wc).collect();
        from_analog(&poles, 0, order, fs, 0.0)
    }

    /// Butterworth high-pass, -3 dB at `fc` for a single pass.
    pub fn butter_highpass(order: usize, fc: f64, fs: f64) -> Self {
        let wc = prewarp(fc, fs);
        let poles: Vec<Complex64> = butter_prototype(order)
            .iter()
            .map(|p| Complex64::new(wc, 0.0) / p)
            .collect();
        from_analog(&poles, order, 0, fs, fs / 2.0)
    }

    /// Butterworth band-pass from an order-`order` prototype. `bw_scale`
    /// widens the design bandwidth around the geometric centre while the
    /// nominal edges stay `f_lo` / `f_hi`.
    pub fn butter_bandpass(order: usize, f_lo: f64, f_hi: f64, fs: f64, bw_scale: f64) -> Self {
        let w1 = prewarp(f_lo, fs);
        let w2 = prewarp(f_hi, fs);
        let w0 = (w1 * w2).sqrt();
        let bw = (w2 - w1) * bw_scale;
        let mut poles = Vec::with_capacity(2 * order);
        for p in butter_prototype(order) {
            let half = p * (bw / 2.0);
            let disc = (half * half - Complex64::new(w0 * w0, 0.0)).sqrt();
            poles.push(half + disc);
            poles.push(half - disc);
        }
        // digital frequency corresponding to the analog centre
        let f_center = fs / PI * (w0 / (2.0 * fs)).atan();
        from_analog(&poles, order, order, fs, f_center)
    }

    /// Complex response at frequency `f`.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let w = 2.0 * PI * f / fs;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            let num = s.b[0] + z1 * s.b[1] + z2 * s.b[2];
            let den = 1.0 + z1 * s.a[0] + z2 * s.a[1];
            acc * num / den
        })
    }

    /// Causal filtering in place, zero initial state (transposed direct form II).
    pub fn filter_in_place(&self, x: &mut [f64]) {
        for s in &self.sections {
            let [b0, b1, b2] = s.b;
            let [a1, a2] = s.a;
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
        }
    }

    /// Number of samples after which the impulse response has decayed below
    /// roughly 1e-14 of its peak.
    pub fn settle_len(&self) -> usize {
        let r = self.max_pole_radius.clamp(1e-6, 1.0 - 1e-12);
        let n = (1e-14f64).ln() / r.ln();
        (n * 1.5) as usize + 16 * self.sections.len() + 16
    }
}

/// Forward-backward filtering. The signal is zero-padded on both sides by the
/// filter's settling length so the result is the exact zero-phase response
/// |H|² applied to the finite signal.
pub fn filtfilt(sos: &Sos, x: &[f64]) -> Vec<f64> {
    let pad = sos.settle_len();
    let mut buf = vec![0.0; x.len() + 2 * pad];
    buf[pad..pad + x.len()].copy_from_slice(x);
    sos.filter_in_place(&mut buf);
    buf.reverse();
    sos.filter_in_place(&mut buf);
    buf.reverse();
    buf.truncate(pad + x.len());
    buf.drain(..pad);
    buf
}

/// Zero-phase band-pass whose combined (forward-backward) response is -3 dB
/// at `f_lo` and `f_hi`.
pub fn zero_phase_bandpass(order: usize, f_lo: f64, f_hi: f64, fs: f64) -> Sos {
    // single-pass |H|^2 at the edge must be 1/sqrt(2): (edge/design)^(2N) = sqrt(2) - 1
    let scale = (std::f64::consts::SQRT_2 - 1.0).powf(-1.0 / (2.0 * order as f64));
    Sos::butter_bandpass(order, f_lo, f_hi, fs, scale)
}

pub(crate) fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn butter_prototype(order: usize) -> Vec<Complex64> {
    let n = order as f64;
    (1..=order)
        .map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n - 1.0) / (2.0 * n)))
        .collect()
}

/// Bilinear transform of an analog pole set with `n_origin` zeros at s = 0 and
/// `n_inf` zeros at infinity, normalised to unit gain at `f_ref`.
fn from_analog(poles: &[Complex64], n_origin: usize, n_inf: usize, fs: f64, f_ref: f64) -> Sos {
    let k = 2.0 * fs;
    let dpoles: Vec<Complex64> = poles.iter().map(|s| (k + s) / (k - s)).collect();
    let max_pole_radius = dpoles.iter().map(|z| z.norm()).fold(0.0, f64::max);

    let mut complex: Vec<Complex64> = dpoles.iter().copied().filter(|z| z.im > 1e-12).collect();
    complex.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    let mut real: Vec<f64> = dpoles.iter().filter(|z| z.im.abs() <= 1e-12).map(|z| z.re).collect();
    real.sort_by(f64::total_cmp);

    // s = 0 maps to z = 1, s = inf maps to z = -1; alternate so band-pass
    // sections each get one of each.
    let mut zeros = Vec::with_capacity(n_origin + n_inf);
    let (mut o, mut i) = (n_origin, n_inf);
    while o + i > 0 {
        if o >= i && o > 0 {
            zeros.push(1.0);
            o -= 1;
        } else {
            zeros.push(-1.0);
            i -= 1;
        }
    }
    let mut zeros = zeros.into_iter();

    let mut sections = Vec::new();
    for z in complex {
        let (za, zb) = (zeros.next().unwrap_or(0.0), zeros.next().unwrap_or(0.0));
        sections.push(Biquad {
            b: [1.0, -(za + zb), za * zb],
            a: [-2.0 * z.re, z.norm_sqr()],
        });
    }
    for pair in real.chunks(2) {
        if pair.len() == 2 {
            let (za, zb) = (zeros.next().unwrap_or(0.0), zeros.next().unwrap_or(0.0));
            sections.push(Biquad {
                b: [1.0, -(za + zb), za * zb],
                a: [-(pair[0] + pair[1]), pair[0] * pair[1]],
            });
        } else {
            let za = zeros.next().unwrap_or(0.0);
            sections.push(Biquad {
                b: [1.0, -za, 0.0],
                a: [-pair[0], 0.0],
            });
        }
    }

    let mut sos = Sos {
        sections,
        max_pole_radius,
    };
    let g = sos.response(f_ref, fs).norm();
    if let Some(first) = sos.sections.first_mut() {
        for b in first.b.iter_mut() {
            *b /= g;
        }
    }
    sos
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn butterworth_lowpass_is_3db_at_cutoff() {
        for order in [1, 2, 3, 4, 5, 10] {
            let sos = Sos::butter_lowpass(order, 900.0, 48000.0);
            let g = sos.response(900.0, 48000.0).norm();
            assert!((db(g) + 3.0103).abs() < 0.01, "order {order}: {}", db(g));
            assert!((sos.response(0.0, 48000.0).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lowpass_and_highpass_power_complementary() {
        let fs = 48000.0;
        let lp = Sos::butter_lowpass(4, 900.0, fs);
        let hp = Sos::butter_highpass(4, 900.0, fs);
        for f in [20.0, 100.0, 600.0, 900.0, 1300.0, 5000.0, 20000.0] {
            let s = lp.response(f, fs).norm_sqr() + hp.response(f, fs).norm_sqr();
            assert!((s - 1.0).abs() < 1e-9, "f={f}: {s}");
        }
    }

    #[test]
    fn bandpass_edges_and_centre() {
        let fs = 48000.0;
        let fc = 1000.0;
        let (lo, hi) = (fc / 2f64.sqrt(), fc * 2f64.sqrt());
        let bp = Sos::butter_bandpass(3, lo, hi, fs, 1.0);
        assert!((bp.response(fc, fs).norm() - 1.0).abs() < 1e-3);
        assert!((db(bp.response(lo, fs).norm()) + 3.0103).abs() < 0.02);
        assert!((db(bp.response(hi, fs).norm()) + 3.0103).abs() < 0.02);
        let zp = zero_phase_bandpass(3, lo, hi, fs);
        let combined = zp.response(lo, fs).norm_sqr();
        assert!((db(combined) + 3.0103).abs() < 0.02, "{}", db(combined));
    }

    #[test]
    fn filtfilt_is_zero_phase() {
        let fs = 8000.0;
        let lp = Sos::butter_lowpass(4, 500.0, fs);
        let mut x = vec![0.0; 801];
        x[400] = 1.0;
        let y = filtfilt(&lp, &x);
        for k in 1..300 {
            assert!((y[400 + k] - y[400 - k]).abs() < 1e-12);
        }
        let peak = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, 400);
    }
}
