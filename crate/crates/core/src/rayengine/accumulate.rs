//! Deposition of ray arrivals into SH channel time series.

use rayon::prelude::*;

use super::EnergyDeposit;
use crate::dsp::ComplementaryBank;
use crate::error::{Error, Result};
use crate::materials::NUM_BANDS;
use crate::sharm::{sh_basis_into, ShConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ShIRAccumulator {
    pub config: ShConfig,
    pub fs: f64,
    /// `(order + 1)²` series in ACN order, band filtering already applied.
    pub channels: Vec<Vec<f64>>,
    /// Deposits at or after the configured duration.
    pub dropped: usize,
}

/// Each deposit adds `sign·sqrt(E_b)·Y(direction)` to band `b` of every
/// channel at its nearest output sample; the six band streams are then
/// shaped by `bank` and summed.
pub fn deposit_to_sh(
    deposits: &[EnergyDeposit],
    config: ShConfig,
    fs: f64,
    duration: f64,
    bank: &ComplementaryBank,
) -> Result<ShIRAccumulator> {
    if !(fs > 0.0) || !(duration > 0.0) {
        return Err(Error::Domain("sample rate and duration must be positive".into()));
    }
    let len = (duration * fs).round() as usize;
    let nch = config.channels();
    let mut kept = Vec::with_capacity(deposits.len());
    let mut basis = Vec::with_capacity(deposits.len() * nch);
    let mut dropped = 0;
    let mut y = vec![0.0; nch];
    for d in deposits {
        if !(d.time >= 0.0) {
            return Err(Error::Domain(format!("negative arrival time {}", d.time)));
        }
        let k = (d.time * fs).round() as usize;
        if k >= len {
            dropped += 1;
            continue;
        }
        let n = d.direction.norm();
        if !(n > 0.0) {
            return Err(Error::Domain("deposit direction is zero".into()));
        }
        sh_basis_into(&(d.direction / n), &config, &mut y);
        basis.extend_from_slice(&y);
        kept.push((k, d.band_energy.map(|e| d.sign * e.max(0.0).sqrt())));
    }

    let channels: Vec<Vec<f64>> = (0..nch)
        .into_par_iter()
        .map(|c| {
            let mut bands: [Vec<f64>; NUM_BANDS] = std::array::from_fn(|_| vec![0.0; len]);
            for (i, (k, amp)) in kept.iter().enumerate() {
                let w = basis[i * nch + c];
                for b in 0..NUM_BANDS {
                    bands[b][*k] += w * amp[b];
                }
            }
            bank.combine(&bands)
        })
        .collect();
    Ok(ShIRAccumulator {
        config,
        fs,
        channels,
        dropped,
    })
}

/// Per-band energy attenuation of air, in 1/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirAbsorption {
    pub per_metre: [f64; NUM_BANDS],
}

impl AirAbsorption {
    pub fn none() -> Self {
        AirAbsorption {
            per_metre: [0.0; NUM_BANDS],
        }
    }
}

impl Default for AirAbsorption {
    /// 20 °C, 50 % relative humidity.
    fn default() -> Self {
        AirAbsorption {
            per_metre: [1.0e-4, 3.0e-4, 6.3e-4, 1.07e-3, 2.27e-3, 6.77e-3],
        }
    }
}

/// Scales each deposit's band energy by `exp(-m_b · c · t)`.
pub fn air_absorption(deposits: &mut [EnergyDeposit], air: &AirAbsorption, speed_of_sound: f64) {
    for d in deposits {
        let dist = d.time * speed_of_sound;
        for (e, m) in d.band_energy.iter_mut().zip(&air.per_metre) {
            *e *= (-m * dist).exp();
        }
    }
}
