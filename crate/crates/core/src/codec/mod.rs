//! Lightweight MLP encoder (512 → k) and mirrored decoder (k → 512).
//!
//! [`CodecParams`] is the stored form (`f32`, the `SCDC` file format).
//! [`Network`] is the `f64` working form used for forward passes, gradients
//! and training.

mod adam;
mod matrix;
mod network;
mod train;

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::embedding_io::ByteReader;
use crate::error::{Error, Result};
use crate::rng::{rng_for, Purpose};

pub use adam::{Adam, AdamConfig};
pub use matrix::Matrix;
pub use network::{Mode, Network, PipelineOutput, Tensors, BN_EPS, TENSOR_NAMES};
pub use train::{train, train_step, StepRng, TrainConfig, TrainReport, Trainer};

/// Embedding dimension at the codec input and output.
pub const FEATURE_DIM: usize = 512;
/// Width of the hidden layer in both encoder and decoder.
pub const HIDDEN_DIM: usize = 512;
/// Largest supported compressed dimension.
pub const MAX_K: usize = 4096;

pub const PARAMS_MAGIC: [u8; 4] = *b"SCDC";
pub const PARAMS_VERSION: u32 = 1;

/// Encoder/decoder weights, biases and batch-norm state.
///
/// Weight matrices are row-major `in × out`, so a layer computes `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecParams {
    pub k: usize,
    pub enc_w1: Vec<f32>,
    pub enc_b1: Vec<f32>,
    pub enc_w2: Vec<f32>,
    pub enc_b2: Vec<f32>,
    pub bn_gamma: Vec<f32>,
    pub bn_beta: Vec<f32>,
    pub bn_running_mean: Vec<f32>,
    pub bn_running_var: Vec<f32>,
    pub dec_w1: Vec<f32>,
    pub dec_b1: Vec<f32>,
    pub dec_w2: Vec<f32>,
    pub dec_b2: Vec<f32>,
}

fn check_k(k: usize) -> Result<()> {
    if !(2..=MAX_K).contains(&k) || !k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "compressed dimension k = {k} must be even and within 2..={MAX_K}"
        )));
    }
    Ok(())
}

fn glorot(seed: u64, tensor: u64, fan_in: usize, fan_out: usize) -> Vec<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = rng_for(seed, Purpose::Init, &[tensor]);
    (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit) as f32)
        .collect()
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

impl CodecParams {
    /// Glorot-uniform weights, zero biases, identity batch norm.
    pub fn init(k: usize, seed: u64) -> Result<Self> {
        check_k(k)?;
        Ok(Self {
            k,
            enc_w1: glorot(seed, 0, FEATURE_DIM, HIDDEN_DIM),
            enc_b1: vec![0.0; HIDDEN_DIM],
            enc_w2: glorot(seed, 2, HIDDEN_DIM, k),
            enc_b2: vec![0.0; k],
            bn_gamma: vec![1.0; k],
            bn_beta: vec![0.0; k],
            bn_running_mean: vec![0.0; k],
            bn_running_var: vec![1.0; k],
            dec_w1: glorot(seed, 6, k, HIDDEN_DIM),
            dec_b1: vec![0.0; HIDDEN_DIM],
            dec_w2: glorot(seed, 8, HIDDEN_DIM, FEATURE_DIM),
            dec_b2: vec![0.0; FEATURE_DIM],
        })
    }

    /// Total stored scalars for compressed dimension `k`, batch-norm running
    /// statistics included.
    pub fn count_for(k: usize) -> usize {
        FEATURE_DIM * HIDDEN_DIM
            + HIDDEN_DIM
            + HIDDEN_DIM * k
            + k
            + 4 * k
            + k * HIDDEN_DIM
            + HIDDEN_DIM
            + HIDDEN_DIM * FEATURE_DIM
            + FEATURE_DIM
    }

    fn tensors(&self) -> [&Vec<f32>; 12] {
        [
            &self.enc_w1,
            &self.enc_b1,
            &self.enc_w2,
            &self.enc_b2,
            &self.bn_gamma,
            &self.bn_beta,
            &self.bn_running_mean,
            &self.bn_running_var,
            &self.dec_w1,
            &self.dec_b1,
            &self.dec_w2,
            &self.dec_b2,
        ]
    }

    fn shapes(k: usize) -> [usize; 12] {
        [
            FEATURE_DIM * HIDDEN_DIM,
            HIDDEN_DIM,
            HIDDEN_DIM * k,
            k,
            k,
            k,
            k,
            k,
            k * HIDDEN_DIM,
            HIDDEN_DIM,
            HIDDEN_DIM * FEATURE_DIM,
            FEATURE_DIM,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        for (t, &n) in self.tensors().iter().zip(&Self::shapes(self.k)) {
            if t.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite codec parameter".into()));
            }
        }
        if self.bn_running_var.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("negative running variance".into()));
        }
        Ok(())
    }

    pub fn to_network(&self) -> Network {
        Network {
            k: self.k,
            params: Tensors {
                enc_w1: widen(&self.enc_w1),
                enc_b1: widen(&self.enc_b1),
                enc_w2: widen(&self.enc_w2),
                enc_b2: widen(&self.enc_b2),
                bn_gamma: widen(&self.bn_gamma),
                bn_beta: widen(&self.bn_beta),
                dec_w1: widen(&self.dec_w1),
                dec_b1: widen(&self.dec_b1),
                dec_w2: widen(&self.dec_w2),
                dec_b2: widen(&self.dec_b2),
            },
            running_mean: widen(&self.bn_running_mean),
            running_var: widen(&self.bn_running_var),
        }
    }

    /// Rounds a working network to stored precision.
    pub fn from_network(net: &Network) -> Self {
        let p = &net.params;
        Self {
            k: net.k,
            enc_w1: narrow(&p.enc_w1),
            enc_b1: narrow(&p.enc_b1),
            enc_w2: narrow(&p.enc_w2),
            enc_b2: narrow(&p.enc_b2),
            bn_gamma: narrow(&p.bn_gamma),
            bn_beta: narrow(&p.bn_beta),
            bn_running_mean: narrow(&net.running_mean),
            bn_running_var: narrow(&net.running_var),
            dec_w1: narrow(&p.dec_w1),
            dec_b1: narrow(&p.dec_b1),
            dec_w2: narrow(&p.dec_w2),
            dec_b2: narrow(&p.dec_b2),
        }
    }

    /// `SCDC` encoding: magic, version u32, k u32, then every tensor in
    /// declaration order as little-endian `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(12 + 4 * self.param_count());
        out.extend_from_slice(&PARAMS_MAGIC);
        out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        for t in self.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        let magic = rd.magic()?;
        if magic != PARAMS_MAGIC {
            return Err(Error::BadMagic {
                expected: PARAMS_MAGIC,
                found: magic,
            });
        }
        let version = rd.u32("version")?;
        if version != PARAMS_VERSION {
            return Err(Error::VersionMismatch {
                expected: PARAMS_VERSION,
                found: version,
            });
        }
        let k = rd.u32("k")? as usize;
        check_k(k)?;
        let mut tensors: Vec<Vec<f32>> = Vec::with_capacity(12);
        for n in Self::shapes(k) {
            let mut t = vec![0f32; n];
            rd.f32_into(&mut t, "codec tensor")?;
            tensors.push(t);
        }
        if rd.remaining() != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} trailing bytes in codec file",
                rd.remaining()
            )));
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("twelve tensors");
        let params = Self {
            k,
            enc_w1: next(),
            enc_b1: next(),
            enc_w2: next(),
            enc_b2: next(),
            bn_gamma: next(),
            bn_beta: next(),
            bn_running_mean: next(),
            bn_running_var: next(),
            dec_w1: next(),
            dec_b1: next(),
            dec_w2: next(),
            dec_b2: next(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Eval-mode encoder output for a batch of embeddings.
    pub fn encode(&self, y: &Matrix) -> Result<Matrix> {
        self.to_network().encode_eval(y)
    }

    pub fn decode(&self, z_hat: &Matrix) -> Result<Matrix> {
        self.to_network().decode(z_hat)
    }
}
