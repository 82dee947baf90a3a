//! Monte-Carlo calibration of the channel model.

use num_complex::Complex64;
use semlink::channel::{
    equalize, normalize_power, snr_to_noise_variance, to_complex, transmit, ChannelConfig,
    ChannelKind, ChannelRealization,
};
use semlink::rng::{stream_id, Purpose};

const SYMBOLS: usize = 1_000_000;

fn mean_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64
}

#[test]
fn awgn_noise_power_matches_snr() {
    for snr in [-7.0, 0.0, 4.0, 10.0] {
        let cfg = ChannelConfig::new(ChannelKind::Awgn, snr, 17).unwrap();
        let r = ChannelRealization::draw(SYMBOLS, &cfg, 3);
        let target = snr_to_noise_variance(snr);
        let got = mean_sq(&r.noise);
        assert!(
            (got / target - 1.0).abs() < 0.01,
            "snr {snr}: {got} vs {target}"
        );
        // Real and imaginary parts carry half the variance each.
        let re = r.noise.iter().map(|c| c.re * c.re).sum::<f64>() / SYMBOLS as f64;
        assert!((re / (target / 2.0) - 1.0).abs() < 0.01);
        assert!(r.gains.iter().all(|h| *h == Complex64::new(1.0, 0.0)));
    }
}

#[test]
fn rayleigh_gain_has_unit_second_moment() {
    let cfg = ChannelConfig::new(ChannelKind::Rayleigh, 5.0, 4).unwrap();
    let r = ChannelRealization::draw(SYMBOLS, &cfg, 11);
    let power = mean_sq(&r.gains);
    assert!((power - 1.0).abs() < 0.01, "E|H|^2 = {power}");
    let mean: Complex64 = r.gains.iter().sum::<Complex64>() / SYMBOLS as f64;
    assert!(mean.norm() < 0.01);
    // |H|^2 is exponential with unit mean, so P(|H|^2 < 0.1) = 1 - e^{-0.1}.
    let below = r.gains.iter().filter(|h| h.norm_sqr() < 0.1).count() as f64 / SYMBOLS as f64;
    assert!((below - (1.0 - (-0.1f64).exp())).abs() < 0.002, "{below}");
}

fn lag1(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cov = x
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / (n - 1.0);
    cov / var
}

#[test]
fn draws_are_uncorrelated() {
    let cfg = ChannelConfig::new(ChannelKind::Rayleigh, 0.0, 8).unwrap();
    let r = ChannelRealization::draw(SYMBOLS, &cfg, 2);
    let noise_re: Vec<f64> = r.noise.iter().map(|c| c.re).collect();
    let gain_re: Vec<f64> = r.gains.iter().map(|c| c.re).collect();
    assert!(lag1(&noise_re).abs() < 0.01);
    assert!(lag1(&gain_re).abs() < 0.01);
    let re_im = r.noise.iter().map(|c| c.re * c.im).sum::<f64>() / SYMBOLS as f64;
    assert!(re_im.abs() < 0.01 * snr_to_noise_variance(0.0));
    let cross = r
        .noise
        .iter()
        .zip(&r.gains)
        .map(|(n, h)| n.re * h.re)
        .sum::<f64>()
        / SYMBOLS as f64;
    assert!(cross.abs() < 0.01);
}

#[test]
fn neighbouring_streams_are_independent() {
    let cfg = ChannelConfig::new(ChannelKind::Awgn, 0.0, 1).unwrap();
    let n = 200_000;
    let a = ChannelRealization::draw(n, &cfg, stream_id(Purpose::EvalChannel, &[0, 0]));
    let b = ChannelRealization::draw(n, &cfg, stream_id(Purpose::EvalChannel, &[0, 1]));
    let corr = a
        .noise
        .iter()
        .zip(&b.noise)
        .map(|(x, y)| x.re * y.re)
        .sum::<f64>()
        / (n as f64 * 0.5);
    assert!(corr.abs() < 0.01, "{corr}");
}

#[test]
fn equalized_awgn_error_has_noise_power() {
    let n = 200_000;
    let v: Vec<f64> = (0..2 * n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let (s, _) = normalize_power(&to_complex(&v).unwrap()).unwrap();
    let cfg = ChannelConfig::new(ChannelKind::Rayleigh, 7.0, 6).unwrap();
    let (rx, realization) = transmit(&s, &cfg, 9).unwrap();
    let (eq, stats) = equalize(&rx, &realization).unwrap();
    // After zero-forcing the residual is n / H, exactly.
    for i in (0..n).step_by(997) {
        let expected = realization.noise[i] / realization.gains[i];
        assert!((eq.symbols[i] - s.symbols[i] - expected).norm() < 1e-9 * (1.0 + expected.norm()));
    }
    assert_eq!(stats.clamped, 0);

    let awgn = ChannelConfig::new(ChannelKind::Awgn, 7.0, 6).unwrap();
    let (rx, realization) = transmit(&s, &awgn, 9).unwrap();
    let (eq, _) = equalize(&rx, &realization).unwrap();
    let err: Vec<Complex64> = eq
        .symbols
        .iter()
        .zip(&s.symbols)
        .map(|(a, b)| a - b)
        .collect();
    let target = snr_to_noise_variance(7.0);
    assert!((mean_sq(&err) / target - 1.0).abs() < 0.02);
}
