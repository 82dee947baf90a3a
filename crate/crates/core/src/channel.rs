//! Analog channel simulation: complex mapping, per-vector power
//! normalization, AWGN / i.i.d. Rayleigh fading and zero-forcing
//! equalization with perfect CSI.
//!
//! SNR is defined per complex symbol against unit average signal power, so
//! the complex noise variance is `10^(-snr_db/10)`, split evenly between the
//! real and imaginary parts.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::Ratio;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, substream};

/// Gains with magnitude below this are clamped before division.
pub const GAIN_CLAMP: f64 = 1e-6;
/// Allowed deviation of a transmitted signal's mean power from 1.
pub const POWER_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexSignal {
    pub symbols: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(symbols: Vec<Complex64>) -> Self {
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `(1/L) Σ |s_i|²`.
    pub fn mean_power(&self) -> f64 {
        if self.symbols.is_empty() {
            return 0.0;
        }
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        })
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            other => Err(Error::InvalidArgument(format!(
                "unknown channel kind {other:?}"
            ))),
        }
    }
}

/// Parses an SNR in dB. The literal `inf` selects the noiseless channel.
pub fn parse_snr_db(s: &str) -> Result<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("+inf") {
        return Ok(f64::INFINITY);
    }
    let v: f64 = t
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("invalid SNR {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid SNR {s:?}")));
    }
    Ok(v)
}

/// Formats an SNR the way [`parse_snr_db`] reads it.
pub fn format_snr_db(snr_db: f64) -> String {
    if snr_db == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{snr_db}")
    }
}

/// Comma-separated SNR list, e.g. `-7,-4,0,4,7` or `0,10,inf`.
pub fn parse_snr_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(parse_snr_db)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// `+inf` means noiseless.
    pub snr_db: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(kind: ChannelKind, snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("invalid SNR {snr_db}")));
        }
        Ok(Self { kind, snr_db, seed })
    }
}

/// Per-symbol gains `H_i` and additive noise `n_i` of one transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Draws a realization of `len` symbols for `(cfg.seed, stream_id)`.
    ///
    /// Noise and gains come from separate child streams, and the noise is a
    /// fixed standard-normal draw scaled by `σ`. The same stream therefore
    /// sees the same underlying noise at every SNR and on both channel kinds.
    pub fn draw(len: usize, cfg: &ChannelConfig, stream_id: u64) -> Self {
        let sigma = (snr_to_noise_variance(cfg.snr_db) / 2.0).sqrt();
        let mut noise_rng = stream_rng(cfg.seed, substream(stream_id, 0));
        let noise = (0..len)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut noise_rng);
                let im: f64 = StandardNormal.sample(&mut noise_rng);
                Complex64::new(sigma * re, sigma * im)
            })
            .collect();
        let gains = match cfg.kind {
            ChannelKind::Awgn => vec![Complex64::new(1.0, 0.0); len],
            ChannelKind::Rayleigh => {
                let mut gain_rng = stream_rng(cfg.seed, substream(stream_id, 1));
                let s = std::f64::consts::FRAC_1_SQRT_2;
                (0..len)
                    .map(|_| {
                        let re: f64 = StandardNormal.sample(&mut gain_rng);
                        let im: f64 = StandardNormal.sample(&mut gain_rng);
                        Complex64::new(s * re, s * im)
                    })
                    .collect()
            }
        };
        Self { gains, noise }
    }

    /// `ẑ_i = H_i · s_i + n_i`.
    pub fn apply(&self, signal: &ComplexSignal) -> Result<ComplexSignal> {
        if signal.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: signal.len(),
            });
        }
        Ok(ComplexSignal::new(
            signal
                .symbols
                .iter()
                .zip(&self.gains)
                .zip(&self.noise)
                .map(|((s, h), n)| h * s + n)
                .collect(),
        ))
    }
}

/// Pairs consecutive reals into symbols: `s_i = v[2i] + j·v[2i+1]`.
pub fn to_complex(v: &[f64]) -> Result<ComplexSignal> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "cannot map odd length {} onto complex symbols",
            v.len()
        )));
    }
    Ok(ComplexSignal::new(
        v.chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect(),
    ))
}

/// Inverse of [`to_complex`].
pub fn to_real(s: &ComplexSignal) -> Vec<f64> {
    s.symbols.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Scales the signal to unit mean power per symbol. Returns the scaled
/// signal and the multiplier that was applied.
pub fn normalize_power(s: &ComplexSignal) -> Result<(ComplexSignal, f64)> {
    let energy: f64 = s.symbols.iter().map(|c| c.norm_sqr()).sum();
    if energy == 0.0 || !energy.is_finite() {
        return Err(Error::InvalidArgument(
            "cannot normalize an all-zero or non-finite signal".into(),
        ));
    }
    let scale = (s.len() as f64 / energy).sqrt();
    Ok((
        ComplexSignal::new(s.symbols.iter().map(|c| c * scale).collect()),
        scale,
    ))
}

/// Complex noise variance `σ² = 10^(-snr_db/10)` under unit signal power.
/// `+inf` dB gives 0.
pub fn snr_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Sends a power-normalized signal through the channel described by `cfg`.
/// Deterministic in `(cfg.seed, stream_id)`.
pub fn transmit(
    s: &ComplexSignal,
    cfg: &ChannelConfig,
    stream_id: u64,
) -> Result<(ComplexSignal, ChannelRealization)> {
    let power = s.mean_power();
    if (power - 1.0).abs() > POWER_TOLERANCE {
        return Err(Error::NotNormalized { power });
    }
    let realization = ChannelRealization::draw(s.len(), cfg, stream_id);
    let received = realization.apply(s)?;
    Ok((received, realization))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EqualizeStats {
    /// Number of gains whose magnitude was clamped up to [`GAIN_CLAMP`].
    pub clamped: usize,
}

/// Zero-forcing equalization with perfect CSI: `received_i / H_i`.
pub fn equalize(
    received: &ComplexSignal,
    realization: &ChannelRealization,
) -> Result<(ComplexSignal, EqualizeStats)> {
    if received.len() != realization.len() {
        return Err(Error::DimensionMismatch {
            expected: realization.len(),
            actual: received.len(),
        });
    }
    let mut stats = EqualizeStats::default();
    let symbols = received
        .symbols
        .iter()
        .zip(&realization.gains)
        .map(|(r, h)| {
            let mag = h.norm();
            let h = if mag < GAIN_CLAMP {
                stats.clamped += 1;
                if mag == 0.0 {
                    Complex64::new(GAIN_CLAMP, 0.0)
                } else {
                    h * (GAIN_CLAMP / mag)
                }
            } else {
                *h
            };
            r / h
        })
        .collect();
    Ok((ComplexSignal::new(symbols), stats))
}

/// Channel bandwidth ratio `(k/2) / (height · width · channels)`.
pub fn cbr(k: u64, height: u64, width: u64, channels: u64) -> Result<Ratio<u64>> {
    if k == 0 || !k.is_multiple_of(2) || height == 0 || width == 0 || channels == 0 {
        return Err(Error::InvalidArgument(format!(
            "cbr needs positive even k and positive geometry (k={k}, {height}x{width}x{channels})"
        )));
    }
    let denom = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::InvalidArgument("image geometry overflows".into()))?;
    Ok(Ratio::new(k / 2, denom))
}
