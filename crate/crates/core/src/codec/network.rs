//! `f64` working form of the codec, with forward passes and hand-derived
//! gradients for the full transmit/receive pipeline.
//!
//! Encoder: `z = BN(ReLU(y·W1 + b1)·W2 + b2)`.
//! Decoder: `ŷ = ReLU(ẑ·V1 + c1)·V2 + c2`.
//!
//! Between the two sits per-sample power normalization followed by the
//! channel. The channel realization is a constant of the forward pass and
//! zero-forcing undoes the gain, so the signal path through the channel has
//! identity Jacobian.

use crate::channel::{equalize, to_complex, to_real, ChannelRealization, ComplexSignal};
use crate::error::{Error, Result};

use super::matrix::{affine, affine_backward, relu_backward_in_place, relu_in_place, Matrix};
use super::{FEATURE_DIM, HIDDEN_DIM};

/// Variance floor inside batch normalization.
pub const BN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; no state changes.
    Eval,
}

/// Names of the trainable tensors, in storage order.
pub const TENSOR_NAMES: [&str; 10] = [
    "enc_w1", "enc_b1", "enc_w2", "enc_b2", "bn_gamma", "bn_beta", "dec_w1", "dec_b1", "dec_w2",
    "dec_b2",
];

/// The ten trainable tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub enc_w1: Vec<f64>,
    pub enc_b1: Vec<f64>,
    pub enc_w2: Vec<f64>,
    pub enc_b2: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub dec_w1: Vec<f64>,
    pub dec_b1: Vec<f64>,
    pub dec_w2: Vec<f64>,
    pub dec_b2: Vec<f64>,
}

impl Tensors {
    pub fn zeros(k: usize) -> Self {
        Self {
            enc_w1: vec![0.0; FEATURE_DIM * HIDDEN_DIM],
            enc_b1: vec![0.0; HIDDEN_DIM],
            enc_w2: vec![0.0; HIDDEN_DIM * k],
            enc_b2: vec![0.0; k],
            bn_gamma: vec![0.0; k],
            bn_beta: vec![0.0; k],
            dec_w1: vec![0.0; k * HIDDEN_DIM],
            dec_b1: vec![0.0; HIDDEN_DIM],
            dec_w2: vec![0.0; HIDDEN_DIM * FEATURE_DIM],
            dec_b2: vec![0.0; FEATURE_DIM],
        }
    }

    pub fn as_slices(&self) -> [&Vec<f64>; 10] {
        [
            &self.enc_w1,
            &self.enc_b1,
            &self.enc_w2,
            &self.enc_b2,
            &self.bn_gamma,
            &self.bn_beta,
            &self.dec_w1,
            &self.dec_b1,
            &self.dec_w2,
            &self.dec_b2,
        ]
    }

    pub fn as_slices_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.enc_w1,
            &mut self.enc_b1,
            &mut self.enc_w2,
            &mut self.enc_b2,
            &mut self.bn_gamma,
            &mut self.bn_beta,
            &mut self.dec_w1,
            &mut self.dec_b1,
            &mut self.dec_w2,
            &mut self.dec_b2,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub k: usize,
    pub params: Tensors,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Intermediate values kept by a training forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Matrix,
    h1: Matrix,
    a1: Matrix,
    xhat: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    input: Matrix,
    g1: Matrix,
    a: Matrix,
}

struct PipelineForward {
    z: Matrix,
    enc: EncoderCache,
    norms: Vec<f64>,
    gain: f64,
    y_hat: Matrix,
    dec: DecoderCache,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    clamped_gains: usize,
}

/// Outcome of one forward/backward pass over the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub loss: f64,
    pub grads: Tensors,
    /// Running statistics after this batch (not yet written back).
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub clamped_gains: usize,
}

impl Network {
    pub fn check_input(&self, y: &Matrix, expected: usize) -> Result<()> {
        if y.cols != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: y.cols,
            });
        }
        if y.rows == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        Ok(())
    }

    fn encoder_forward(
        &self,
        y: &Matrix,
        mode: Mode,
        momentum: f64,
    ) -> (Matrix, EncoderCache, Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let k = self.k;
        let h1 = affine(y, &p.enc_w1, &p.enc_b1);
        let mut a1 = h1.clone();
        relu_in_place(&mut a1);
        let h2 = affine(&a1, &p.enc_w2, &p.enc_b2);
        let b = y.rows;

        let (mean, var, new_rm, new_rv) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; k];
                for i in 0..b {
                    for (m, &v) in mean.iter_mut().zip(h2.row(i)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= b as f64);
                let mut var = vec![0.0; k];
                for i in 0..b {
                    for ((s, &v), &m) in var.iter_mut().zip(h2.row(i)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= b as f64);
                let unbias = if b > 1 {
                    b as f64 / (b - 1) as f64
                } else {
                    1.0
                };
                let new_rm = self
                    .running_mean
                    .iter()
                    .zip(&mean)
                    .map(|(r, m)| (1.0 - momentum) * r + momentum * m)
                    .collect();
                let new_rv = self
                    .running_var
                    .iter()
                    .zip(&var)
                    .map(|(r, v)| (1.0 - momentum) * r + momentum * v * unbias)
                    .collect();
                (mean, var, new_rm, new_rv)
            }
            Mode::Eval => (
                self.running_mean.clone(),
                self.running_var.clone(),
                self.running_mean.clone(),
                self.running_var.clone(),
            ),
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Matrix::zeros(b, k);
        let mut z = Matrix::zeros(b, k);
        for i in 0..b {
            for j in 0..k {
                let xh = (h2.data[i * k + j] - mean[j]) * inv_std[j];
                xhat.data[i * k + j] = xh;
                z.data[i * k + j] = p.bn_gamma[j] * xh + p.bn_beta[j];
            }
        }
        let cache = EncoderCache {
            input: y.clone(),
            h1,
            a1,
            xhat,
            inv_std,
        };
        (z, cache, new_rm, new_rv)
    }

    /// Encoder forward. In [`Mode::Train`] the batch must hold at least two
    /// samples and the running statistics are updated with `momentum`.
    pub fn encode(&mut self, y: &Matrix, mode: Mode, momentum: f64) -> Result<Matrix> {
        self.check_input(y, FEATURE_DIM)?;
        if mode == Mode::Train && y.rows < 2 {
            return Err(Error::InvalidArgument(
                "train-mode batch normalization needs at least 2 samples".into(),
            ));
        }
        let (z, _, rm, rv) = self.encoder_forward(y, mode, momentum);
        if mode == Mode::Train {
            self.running_mean = rm;
            self.running_var = rv;
        }
        Ok(z)
    }

    /// Eval-mode encoder; never changes state.
    pub fn encode_eval(&self, y: &Matrix) -> Result<Matrix> {
        self.check_input(y, FEATURE_DIM)?;
        Ok(self.encoder_forward(y, Mode::Eval, 0.0).0)
    }

    fn decoder_forward(&self, z_hat: &Matrix) -> (Matrix, DecoderCache) {
        let p = &self.params;
        let g1 = affine(z_hat, &p.dec_w1, &p.dec_b1);
        let mut a = g1.clone();
        relu_in_place(&mut a);
        let y_hat = affine(&a, &p.dec_w2, &p.dec_b2);
        (
            y_hat,
            DecoderCache {
                input: z_hat.clone(),
                g1,
                a,
            },
        )
    }

    pub fn decode(&self, z_hat: &Matrix) -> Result<Matrix> {
        self.check_input(z_hat, self.k)?;
        Ok(self.decoder_forward(z_hat).0)
    }

    fn pipeline_forward(
        &self,
        y: &Matrix,
        channel: Option<&[ChannelRealization]>,
        mode: Mode,
        momentum: f64,
    ) -> Result<PipelineForward> {
        self.check_input(y, FEATURE_DIM)?;
        if mode == Mode::Train && y.rows < 2 {
            return Err(Error::InvalidArgument(
                "train-mode batch normalization needs at least 2 samples".into(),
            ));
        }
        if let Some(ch) = channel {
            if ch.len() != y.rows {
                return Err(Error::DimensionMismatch {
                    expected: y.rows,
                    actual: ch.len(),
                });
            }
        }
        let (b, k) = (y.rows, self.k);
        let (z, enc, running_mean, running_var) = self.encoder_forward(y, mode, momentum);

        // power normalization and channel, per sample
        let gain = ((k / 2) as f64).sqrt();
        let mut z_hat = Matrix::zeros(b, k);
        let mut norms = vec![0.0; b];
        let mut clamped_gains = 0;
        for i in 0..b {
            let zr = z.row(i);
            let norm = zr.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "encoder output {i} has zero or non-finite norm"
                )));
            }
            norms[i] = norm;
            let u: Vec<f64> = zr.iter().map(|v| v * gain / norm).collect();
            let received = match channel {
                None => u,
                Some(ch) => {
                    let s = to_complex(&u)?;
                    let rx: ComplexSignal = ch[i].apply(&s)?;
                    let (eq, stats) = equalize(&rx, &ch[i])?;
                    clamped_gains += stats.clamped;
                    to_real(&eq)
                }
            };
            z_hat.row_mut(i).copy_from_slice(&received);
        }
        let (y_hat, dec) = self.decoder_forward(&z_hat);
        Ok(PipelineForward {
            z,
            enc,
            norms,
            gain,
            y_hat,
            dec,
            running_mean,
            running_var,
            clamped_gains,
        })
    }

    /// Forward pass of the whole pipeline plus analytic gradients of the MSE
    /// reconstruction loss.
    ///
    /// `channel` holds one realization per sample (`None` = noiseless). The
    /// returned running statistics are what a train-mode step would store.
    pub fn pipeline_grad(
        &self,
        y: &Matrix,
        channel: Option<&[ChannelRealization]>,
        mode: Mode,
        momentum: f64,
    ) -> Result<PipelineOutput> {
        let fwd = self.pipeline_forward(y, channel, mode, momentum)?;
        let b = y.rows;
        let n = (b * FEATURE_DIM) as f64;
        let mut loss = 0.0;
        let mut d_out = Matrix::zeros(b, FEATURE_DIM);
        for (d, (&o, &t)) in d_out
            .data
            .iter_mut()
            .zip(fwd.y_hat.data.iter().zip(&y.data))
        {
            let diff = o - t;
            loss += diff * diff;
            *d = 2.0 * diff / n;
        }
        loss /= n;

        let mut grads = Tensors::zeros(self.k);
        let d_zhat = self.decoder_backward(&fwd.dec, &d_out, &mut grads);
        let d_z = normalize_backward(&fwd.z, &fwd.norms, fwd.gain, &d_zhat);
        self.encoder_backward(&fwd.enc, &d_z, mode, &mut grads);

        Ok(PipelineOutput {
            loss,
            grads,
            running_mean: fwd.running_mean,
            running_var: fwd.running_var,
            clamped_gains: fwd.clamped_gains,
        })
    }

    /// Which hidden units are active (pre-activation > 0), encoder layer
    /// first, then decoder layer, row by row. The pipeline is smooth in the
    /// parameters wherever this pattern does not change, which is what a
    /// finite-difference check needs to know.
    pub fn relu_pattern(
        &self,
        y: &Matrix,
        channel: Option<&[ChannelRealization]>,
        mode: Mode,
    ) -> Result<Vec<bool>> {
        let fwd = self.pipeline_forward(y, channel, mode, 0.0)?;
        Ok(fwd
            .enc
            .h1
            .data
            .iter()
            .chain(&fwd.dec.g1.data)
            .map(|&v| v > 0.0)
            .collect())
    }

    /// Returns the gradient with respect to the received signal.
    fn decoder_backward(
        &self,
        cache: &DecoderCache,
        d_out: &Matrix,
        grads: &mut Tensors,
    ) -> Matrix {
        let p = &self.params;
        let mut d_a = affine_backward(
            &cache.a,
            &p.dec_w2,
            d_out,
            &mut grads.dec_w2,
            &mut grads.dec_b2,
            true,
        )
        .expect("input gradient requested");
        relu_backward_in_place(&mut d_a, &cache.g1);
        affine_backward(
            &cache.input,
            &p.dec_w1,
            &d_a,
            &mut grads.dec_w1,
            &mut grads.dec_b1,
            true,
        )
        .expect("input gradient requested")
    }

    fn encoder_backward(
        &self,
        cache: &EncoderCache,
        d_z: &Matrix,
        mode: Mode,
        grads: &mut Tensors,
    ) {
        let p = &self.params;
        let (b, k) = (d_z.rows, self.k);
        let mut d_h2 = Matrix::zeros(b, k);
        for j in 0..k {
            let mut sum_dz = 0.0;
            let mut sum_dz_xhat = 0.0;
            for i in 0..b {
                let g = d_z.data[i * k + j];
                sum_dz += g;
                sum_dz_xhat += g * cache.xhat.data[i * k + j];
            }
            grads.bn_beta[j] += sum_dz;
            grads.bn_gamma[j] += sum_dz_xhat;
            let gamma = p.bn_gamma[j];
            let inv = cache.inv_std[j];
            match mode {
                Mode::Train => {
                    // dxhat = gamma·dz; dh = inv/B · (B·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                    let bf = b as f64;
                    for i in 0..b {
                        let dxh = gamma * d_z.data[i * k + j];
                        d_h2.data[i * k + j] = inv / bf
                            * (bf * dxh
                                - gamma * sum_dz
                                - cache.xhat.data[i * k + j] * gamma * sum_dz_xhat);
                    }
                }
                Mode::Eval => {
                    for i in 0..b {
                        d_h2.data[i * k + j] = gamma * inv * d_z.data[i * k + j];
                    }
                }
            }
        }
        let mut d_a1 = affine_backward(
            &cache.a1,
            &p.enc_w2,
            &d_h2,
            &mut grads.enc_w2,
            &mut grads.enc_b2,
            true,
        )
        .expect("input gradient requested");
        relu_backward_in_place(&mut d_a1, &cache.h1);
        affine_backward(
            &cache.input,
            &p.enc_w1,
            &d_a1,
            &mut grads.enc_w1,
            &mut grads.enc_b1,
            false,
        );
    }

    /// Loss only, for finite-difference checks.
    pub fn pipeline_loss(
        &self,
        y: &Matrix,
        channel: Option<&[ChannelRealization]>,
        mode: Mode,
    ) -> Result<f64> {
        Ok(self.pipeline_grad(y, channel, mode, 0.0)?.loss)
    }
}

/// Backward of `u = c · z / ‖z‖` per row:
/// `dz = (c/‖z‖) · (du − ẑ (ẑ·du))` with `ẑ = z/‖z‖`.
fn normalize_backward(z: &Matrix, norms: &[f64], gain: f64, d_u: &Matrix) -> Matrix {
    let mut d_z = Matrix::zeros(z.rows, z.cols);
    for (i, &norm) in norms.iter().enumerate() {
        let zr = z.row(i);
        let du = d_u.row(i);
        let proj: f64 = zr.iter().zip(du).map(|(a, b)| a / norm * b).sum();
        for ((d, &zv), &g) in d_z.row_mut(i).iter_mut().zip(zr).zip(du) {
            *d = gain / norm * (g - zv / norm * proj);
        }
    }
    d_z
}
