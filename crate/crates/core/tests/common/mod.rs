//! Finite-difference oracle shared by the gradient tests and the acceptance
//! run.

#![allow(dead_code)]

use rand::Rng;
use semlink::channel::ChannelRealization;
use semlink::codec::{CodecParams, Matrix, Mode, Network, TENSOR_NAMES};
use semlink::embedding_io::generate_synthetic;
use semlink::rng::{rng_for, Purpose};

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
const ENTRIES_PER_TENSOR: usize = 24;
/// The encoder output bias feeds train-mode batch norm, which cancels it:
/// its true gradient is zero and both estimates are rounding noise
/// (~1e-14). The floor keeps that noise from reading as a relative error.
const NORM_FLOOR: f64 = 1e-8;

/// `n` synthetic embeddings, classes interleaved.
pub fn batch(n: usize) -> Matrix {
    let ds = generate_synthetic(4, n, 512, 0.05, 21).unwrap();
    let rows: Vec<&[f32]> = (0..n)
        .map(|i| ds.records[(i % 4) * n + i / 4].vector.as_slice())
        .collect();
    Matrix::from_f32_rows(&rows)
}

/// A network with non-trivial batch-norm affine and bias values.
pub fn network(k: usize) -> Network {
    let mut net = CodecParams::init(k, 8).unwrap().to_network();
    let mut rng = rng_for(99, Purpose::Init, &[1234]);
    for v in net.params.bn_gamma.iter_mut() {
        *v = rng.random_range(0.5..1.5);
    }
    for t in [
        &mut net.params.bn_beta,
        &mut net.params.enc_b1,
        &mut net.params.dec_b1,
        &mut net.params.dec_b2,
    ] {
        for v in t.iter_mut() {
            *v = rng.random_range(-0.1..0.1);
        }
    }
    net
}

/// Per-tensor relative error `‖g − fd‖ / max(‖g‖, ‖fd‖, NORM_FLOOR)` over a
/// seeded sample of entries of every trainable tensor.
///
/// Entries whose ±STEP perturbation flips a ReLU are redrawn: the loss is
/// only piecewise smooth and a difference quotient across a kink measures
/// nothing about the derivative.
pub fn check(
    net: &Network,
    y: &Matrix,
    channel: Option<&[ChannelRealization]>,
) -> Vec<(String, f64)> {
    let analytic = net
        .pipeline_grad(y, channel, Mode::Train, 0.1)
        .unwrap()
        .grads;
    let analytic = analytic.as_slices();
    let mut out = Vec::new();
    for (t, name) in TENSOR_NAMES.iter().enumerate() {
        let len = analytic[t].len();
        let mut rng = rng_for(5, Purpose::Init, &[t as u64]);
        let (mut diff, mut na, mut nf) = (0.0f64, 0.0f64, 0.0f64);
        let (mut used, mut draws) = (0, 0);
        while used < ENTRIES_PER_TENSOR.min(len) {
            draws += 1;
            assert!(draws < 50 * ENTRIES_PER_TENSOR, "{name}: too many kinks");
            let i = rng.random_range(0..len);
            let mut plus = net.clone();
            plus.params.as_slices_mut()[t][i] += STEP;
            let mut minus = net.clone();
            minus.params.as_slices_mut()[t][i] -= STEP;
            if plus.relu_pattern(y, channel, Mode::Train).unwrap()
                != minus.relu_pattern(y, channel, Mode::Train).unwrap()
            {
                continue;
            }
            used += 1;
            let fd = (plus.pipeline_loss(y, channel, Mode::Train).unwrap()
                - minus.pipeline_loss(y, channel, Mode::Train).unwrap())
                / (2.0 * STEP);
            let a = analytic[t][i];
            diff += (a - fd).powi(2);
            na += a * a;
            nf += fd * fd;
        }
        let rel = diff.sqrt() / na.sqrt().max(nf.sqrt()).max(NORM_FLOOR);
        out.push((name.to_string(), rel));
    }
    out
}
