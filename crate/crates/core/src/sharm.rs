//! Real spherical harmonics in ACN order, the bundled sampling grid, and the
//! least-squares microphone-to-SH encoder.

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::Vec3;

pub const MAX_ORDER: usize = 9;

/// Radius of the virtual microphone sphere, in metres.
pub const ARRAY_RADIUS: f64 = 0.42;

/// Default Tikhonov weight on the Gram matrix normalised by the grid size.
pub const DEFAULT_REGULARIZATION: f64 = 1e-6;

const FLIEGE64: &str = include_str!("../assets/fliege64.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Normalization {
    /// Schmidt semi-normalised (AmbiX).
    #[default]
    Sn3d,
    /// Fully normalised: SN3D scaled by `sqrt(2n + 1)`.
    N3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShConfig {
    order: usize,
    normalization: Normalization,
}

impl Default for ShConfig {
    fn default() -> Self {
        ShConfig {
            order: 7,
            normalization: Normalization::Sn3d,
        }
    }
}

impl ShConfig {
    pub fn new(order: usize, normalization: Normalization) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::Domain(format!("order {order} exceeds {MAX_ORDER}")));
        }
        Ok(ShConfig { order, normalization })
    }

    /// ACN / SN3D at `order`.
    pub fn ambix(order: usize) -> Result<Self> {
        Self::new(order, Normalization::Sn3d)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn channels(&self) -> usize {
        channel_count(self.order)
    }
}

pub fn channel_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Ambisonic channel number of degree `n`, index `m` (|m| ≤ n).
pub fn acn(n: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= n);
    ((n * n + n) as i64 + m) as usize
}

/// Degree of ACN channel `c`.
pub fn acn_degree(c: usize) -> usize {
    (c as f64).sqrt().floor() as usize
}

/// Real SH values at a unit direction, ACN order, no Condon-Shortley phase.
pub fn sh_basis(direction: &Vec3, config: &ShConfig) -> Result<Vec<f64>> {
    let norm = direction.norm();
    if !((norm - 1.0).abs() <= 1e-6) {
        return Err(Error::Domain(format!("direction norm {norm} is not 1")));
    }
    let mut out = vec![0.0; config.channels()];
    sh_basis_into(direction, config, &mut out);
    Ok(out)
}

/// As [`sh_basis`] without the unit-norm check; `out` must hold
/// `config.channels()` values.
pub fn sh_basis_into(d: &Vec3, config: &ShConfig, out: &mut [f64]) {
    let order = config.order;
    let (x, y, z) = (d.x, d.y, d.z);
    // cos/sin parts of (x + iy)^m
    let mut cm = [0.0; MAX_ORDER + 1];
    let mut sm = [0.0; MAX_ORDER + 1];
    cm[0] = 1.0;
    for m in 1..=order {
        cm[m] = cm[m - 1] * x - sm[m - 1] * y;
        sm[m] = sm[m - 1] * x + cm[m - 1] * y;
    }
    let mut diag = 1.0; // (2m - 1)!!
    for m in 0..=order {
        if m > 0 {
            diag *= (2 * m - 1) as f64;
        }
        // q holds d^m/dz^m P_n(z) for n = m, m+1, ...
        let mut q_prev = 0.0;
        let mut q = diag;
        for n in m..=order {
            if n == m + 1 {
                q_prev = q;
                q = z * (2 * m + 1) as f64 * diag;
            } else if n > m + 1 {
                let next = ((2 * n - 1) as f64 * z * q - (n + m - 1) as f64 * q_prev) / (n - m) as f64;
                q_prev = q;
                q = next;
            }
            let mut k = sn3d_factor(n, m) * q;
            if config.normalization == Normalization::N3d {
                k *= ((2 * n + 1) as f64).sqrt();
            }
            out[acn(n, m as i64)] = k * cm[m];
            if m > 0 {
                out[acn(n, -(m as i64))] = k * sm[m];
            }
        }
    }
}

fn sn3d_factor(n: usize, m: usize) -> f64 {
    // sqrt((2 - δ_m0) (n - m)! / (n + m)!)
    let mut ratio = 1.0;
    for k in (n - m + 1)..=(n + m) {
        ratio /= k as f64;
    }
    let delta = if m == 0 { 1.0 } else { 2.0 };
    (delta * ratio).sqrt()
}

/// Rescales ACN coefficients in place into the `to` convention from the other one.
pub fn convert_normalization(coeffs: &mut [f64], to: Normalization) {
    for (c, v) in coeffs.iter_mut().enumerate() {
        let s = ((2 * acn_degree(c) + 1) as f64).sqrt();
        match to {
            Normalization::N3d => *v *= s,
            Normalization::Sn3d => *v /= s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalGrid {
    pub name: String,
    pub directions: Vec<Vec3>,
    pub radius: f64,
    /// Hex SHA-256 of the asset text.
    pub content_hash: String,
}

impl SphericalGrid {
    /// Parses whitespace-separated `x y z` lines; `#` starts a comment.
    pub fn from_text(name: &str, text: &str, radius: f64) -> Result<Self> {
        let mut directions = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    path: name.into(),
                    line: ln + 1,
                    msg: format!("{e}"),
                })?;
            if vals.len() != 3 {
                return Err(Error::Parse {
                    path: name.into(),
                    line: ln + 1,
                    msg: "expected 3 values".into(),
                });
            }
            let v = Vec3::new(vals[0], vals[1], vals[2]);
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("{name}: row {} is not unit length", ln + 1)));
            }
            directions.push(v);
        }
        Ok(SphericalGrid {
            name: name.to_string(),
            directions,
            radius,
            content_hash: hex_digest(text.as_bytes()),
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Microphone positions around `center`.
    pub fn positions(&self, center: &Vec3) -> Vec<Vec3> {
        self.directions.iter().map(|d| center + d * self.radius).collect()
    }

    /// `M × C` matrix of basis values at the grid directions.
    pub fn sampling_matrix(&self, config: &ShConfig) -> DMatrix<f64> {
        let c = config.channels();
        let mut y = DMatrix::zeros(self.len(), c);
        let mut row = vec![0.0; c];
        for (i, d) in self.directions.iter().enumerate() {
            sh_basis_into(d, config, &mut row);
            for (k, v) in row.iter().enumerate() {
                y[(i, k)] = *v;
            }
        }
        y
    }
}

/// Bundled grids by name. Only `fliege64` ships.
pub fn load_grid(name: &str) -> Result<SphericalGrid> {
    match name {
        "fliege64" => SphericalGrid::from_text(name, FLIEGE64, ARRAY_RADIUS),
        other => Err(Error::UnknownGrid(other.to_string())),
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMatrix {
    /// `C × M`: SH channels from microphone samples.
    pub matrix: DMatrix<f64>,
    pub config: ShConfig,
    pub grid_hash: String,
}

/// Regularised least-squares encoder `(G/M + εI)⁻¹ Yᵀ/M` with `G = YᵀY`.
pub fn build_encoder(grid: &SphericalGrid, config: ShConfig, regularization: f64) -> Result<EncodingMatrix> {
    let m = grid.len();
    let c = config.channels();
    if c > m {
        return Err(Error::Domain(format!(
            "order {} needs {c} directions, grid has {m}",
            config.order()
        )));
    }
    if !(regularization >= 0.0 && regularization.is_finite()) {
        return Err(Error::Domain(format!("regularization {regularization} must be >= 0")));
    }
    let y = grid.sampling_matrix(&config);
    let scale = 1.0 / m as f64;
    let gram = y.transpose() * &y * scale + DMatrix::identity(c, c) * regularization;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Domain(format!(
            "grid `{}` is rank deficient at order {}",
            grid.name,
            config.order()
        ))
    })?;
    let matrix = chol.solve(&(y.transpose() * scale));
    Ok(EncodingMatrix {
        matrix,
        config,
        grid_hash: grid.content_hash.clone(),
    })
}

impl EncodingMatrix {
    pub fn channels(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn mics(&self) -> usize {
        self.matrix.ncols()
    }

    /// Encodes one snapshot of microphone values.
    pub fn encode_sample(&self, mics: &[f64]) -> Vec<f64> {
        (0..self.channels())
            .map(|c| (0..self.mics()).map(|i| self.matrix[(c, i)] * mics[i]).sum())
            .collect()
    }
}

/// Per-sample encoding of `M` microphone series into `C` SH series.
pub fn encode_frames(mic_signals: &[Vec<f64>], enc: &EncodingMatrix) -> Result<Vec<Vec<f64>>> {
    if mic_signals.len() != enc.mics() {
        return Err(Error::Shape(format!(
            "{} microphone signals for a {}-input encoder",
            mic_signals.len(),
            enc.mics()
        )));
    }
    let len = mic_signals.first().map_or(0, Vec::len);
    if mic_signals.iter().any(|s| s.len() != len) {
        return Err(Error::Shape("microphone signals differ in length".into()));
    }
    let mut out = vec![vec![0.0; len]; enc.channels()];
    for (c, ch) in out.iter_mut().enumerate() {
        for (i, sig) in mic_signals.iter().enumerate() {
            let w = enc.matrix[(c, i)];
            for (o, s) in ch.iter_mut().zip(sig) {
                *o += w * s;
            }
        }
    }
    Ok(out)
}

/// Hook for per-degree radial equalisation of encoded open-sphere signals.
/// The pipeline applies none by default.
pub trait RadialEqualizer: Send + Sync {
    fn equalize(&self, degree: usize, channel: &mut [f64], fs: f64);
}

pub fn apply_radial_eq(channels: &mut [Vec<f64>], fs: f64, eq: &dyn RadialEqualizer) {
    for (c, ch) in channels.iter_mut().enumerate() {
        eq.equalize(acn_degree(c), ch, fs);
    }
}
