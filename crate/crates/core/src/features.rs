//! Spectral wavelet features for multichannel curves.
//!
//! Each channel is turned into the magnitudes of its leading Fourier
//! coefficients, which are then expanded in an orthonormal wavelet basis;
//! channel results are concatenated in channel order.

use std::io::Read;
use std::str::FromStr;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::read_labeled_rows;
use crate::error::{Result, SfdaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveletFamily {
    Haar,
    /// Daubechies wavelet with four taps.
    D4,
}

impl WaveletFamily {
    fn lowpass(&self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFamily::D4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * std::f64::consts::SQRT_2;
                vec![
                    (1.0 + s3) / d,
                    (3.0 + s3) / d,
                    (3.0 - s3) / d,
                    (1.0 - s3) / d,
                ]
            }
        }
    }
}

impl FromStr for WaveletFamily {
    type Err = SfdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" => Ok(WaveletFamily::Haar),
            "d4" | "db2" => Ok(WaveletFamily::D4),
            other => Err(SfdaError::InvalidParameter(format!(
                "unknown wavelet family {other:?}"
            ))),
        }
    }
}

/// Curves of one observation, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelRecord {
    channels: DMatrix<f64>,
}

impl MultichannelRecord {
    pub fn new(channels: DMatrix<f64>) -> Result<Self> {
        if channels.nrows() == 0 {
            return Err(SfdaError::InvalidParameter("record has no channels".into()));
        }
        if channels.ncols() < 2 {
            return Err(SfdaError::InvalidParameter(
                "curves need at least two time points".into(),
            ));
        }
        for row in 0..channels.nrows() {
            if let Some(col) = channels.row(row).iter().position(|v| !v.is_finite()) {
                return Err(SfdaError::NonFinite { row, col });
            }
        }
        Ok(MultichannelRecord { channels })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.channels.ncols()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.channels.row(c).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Fourier magnitudes kept per channel; also the wavelet length, so it
    /// must be a power of two.
    pub n_coeffs: usize,
    pub family: WaveletFamily,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_coeffs: 64,
            family: WaveletFamily::Haar,
        }
    }
}

/// Magnitudes of the first `n_freq` coefficients of the unnormalised DFT of
/// `curve`, zero-padded to the next power of two.
pub fn spectrum(curve: &[f64], n_freq: usize) -> Result<Vec<f64>> {
    let padded = curve.len().next_power_of_two();
    if n_freq > padded {
        return Err(SfdaError::InvalidParameter(format!(
            "{n_freq} frequencies requested from a transform of length {padded}"
        )));
    }
    let mut buf: Vec<Complex<f64>> = curve.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(padded, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    Ok(buf[..n_freq].iter().map(|c| c.norm()).collect())
}

fn check_dyadic(len: usize) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(SfdaError::InvalidParameter(format!(
            "wavelet transform needs a power-of-two length, got {len}"
        )));
    }
    Ok(())
}

/// Full-depth periodised orthonormal wavelet transform. The output holds the
/// final approximation coefficient first, then detail coefficients from the
/// coarsest level to the finest.
pub fn dwt(signal: &[f64], family: WaveletFamily) -> Result<Vec<f64>> {
    check_dyadic(signal.len())?;
    let h = family.lowpass();
    let g = highpass(&h);
    let mut out = signal.to_vec();
    let mut m = signal.len();
    let mut scratch = vec![0.0; m];
    while m > 1 {
        let half = m / 2;
        for k in 0..half {
            let (mut a, mut d) = (0.0, 0.0);
            for (i, (&hi, &gi)) in h.iter().zip(&g).enumerate() {
                let x = out[(2 * k + i) % m];
                a += hi * x;
                d += gi * x;
            }
            scratch[k] = a;
            scratch[half + k] = d;
        }
        out[..m].copy_from_slice(&scratch[..m]);
        m = half;
    }
    Ok(out)
}

/// Inverse of [`dwt`].
pub fn idwt(coeffs: &[f64], family: WaveletFamily) -> Result<Vec<f64>> {
    check_dyadic(coeffs.len())?;
    let h = family.lowpass();
    let g = highpass(&h);
    let n = coeffs.len();
    let mut out = coeffs.to_vec();
    let mut scratch = vec![0.0; n];
    let mut m = 2;
    while m <= n {
        let half = m / 2;
        scratch[..m].iter_mut().for_each(|v| *v = 0.0);
        for k in 0..half {
            let a = out[k];
            let d = out[half + k];
            for (i, (&hi, &gi)) in h.iter().zip(&g).enumerate() {
                scratch[(2 * k + i) % m] += hi * a + gi * d;
            }
        }
        out[..m].copy_from_slice(&scratch[..m]);
        m *= 2;
    }
    Ok(out)
}

fn highpass(h: &[f64]) -> Vec<f64> {
    let l = h.len();
    (0..l)
        .map(|i| {
            if i % 2 == 0 {
                h[l - 1 - i]
            } else {
                -h[l - 1 - i]
            }
        })
        .collect()
}

/// [`dwt`] restricted to length-64 signals.
pub fn dwt64(signal: &[f64], family: WaveletFamily) -> Result<Vec<f64>> {
    if signal.len() != 64 {
        return Err(SfdaError::DimensionMismatch(format!(
            "expected 64 values, got {}",
            signal.len()
        )));
    }
    dwt(signal, family)
}

/// Features of one record: `n_coeffs` wavelet coefficients per channel.
pub fn featurize(rec: &MultichannelRecord, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    check_dyadic(cfg.n_coeffs)?;
    let mut out = Vec::with_capacity(rec.n_channels() * cfg.n_coeffs);
    for c in 0..rec.n_channels() {
        let spec = spectrum(&rec.channel(c), cfg.n_coeffs)?;
        out.extend(dwt(&spec, cfg.family)?);
    }
    Ok(out)
}

/// Reads records stored one per CSV row as `label, v_1, …, v_{c·T}` with the
/// values of channel 1 first, then channel 2, and so on.
pub fn read_multichannel_csv<R: Read>(
    reader: R,
    channels: usize,
) -> Result<Vec<(usize, MultichannelRecord)>> {
    if channels == 0 {
        return Err(SfdaError::InvalidParameter(
            "channel count must be positive".into(),
        ));
    }
    let (labels, rows) = read_labeled_rows(reader)?;
    labels
        .into_iter()
        .zip(rows)
        .enumerate()
        .map(|(i, (label, values))| {
            if values.len() % channels != 0 {
                return Err(SfdaError::Parse(format!(
                    "record {}: {} values do not split into {} channels",
                    i + 1,
                    values.len(),
                    channels
                )));
            }
            let t = values.len() / channels;
            let rec = MultichannelRecord::new(DMatrix::from_row_slice(channels, t, &values))?;
            Ok((label, rec))
        })
        .collect()
}
