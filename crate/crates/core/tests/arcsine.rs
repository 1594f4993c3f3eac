//! The arcsine law behind the one-bit covariance reconstruction.

mod common;

use std::f64::consts::FRAC_PI_2;

use blindmimo::blind_onebit::{arcsine_forward, arcsine_inverse, sample_quantized_autocorr};
use blindmimo::txrx::onebit;
use blindmimo::{CMat, C64};
use common::*;
use proptest::prelude::*;

/// Sign correlation of unit-variance complex Gaussians with correlation `c`.
fn sign_correlation(c: f64, samples: usize, seed: u64) -> (C64, f64) {
    let mut g = rng(seed);
    let orth = (1.0 - c * c).sqrt();
    let mut acc = C64::new(0.0, 0.0);
    for _ in 0..samples {
        let x = cn(&mut g, 1.0);
        let y = x * c + cn(&mut g, 1.0) * orth;
        acc += onebit(x) * onebit(y).conj();
    }
    let p = (2.0 / std::f64::consts::PI) * c.asin();
    let sigma = ((1.0 - p * p) / (2.0 * samples as f64)).sqrt();
    (acc / samples as f64, sigma)
}

#[test]
fn monte_carlo_matches_arcsine_law() {
    for (i, c) in [0.1, 0.5, 0.9].into_iter().enumerate() {
        let (est, sigma) = sign_correlation(c, 1_000_000, 40 + i as u64);
        let predicted = arcsine_forward(&CMat::from_element(1, 1, C64::new(c, 0.0))).unwrap()[(0, 0)];
        assert!((est.re - predicted.re).abs() < 3.0 * sigma, "c = {c}: {} vs {}", est.re, predicted.re);
        assert!(est.im.abs() < 3.0 * sigma, "c = {c}: imaginary part {}", est.im);
    }
}

#[test]
fn round_trip_on_grid() {
    let grid: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
    let m = CMat::from_fn(1000, 1, |i, _| C64::new(grid[i], grid[999 - i]));
    let back = arcsine_inverse(&arcsine_forward(&m).unwrap());
    for (a, b) in back.iter().zip(m.iter()) {
        assert!((a - b).norm() < 1e-12);
    }
    let f = arcsine_forward(&m).unwrap();
    for (z, x) in f.iter().zip(grid.iter()) {
        assert!((z.re - x.asin() / FRAC_PI_2).abs() < 1e-15);
    }
}

#[test]
fn white_signs_have_identity_covariance() {
    let mut g = rng(5);
    let r = CMat::from_fn(6, 1000, |_, _| onebit(cn(&mut g, 1.0)));
    let c = sample_quantized_autocorr(&r, 3).unwrap();
    let zero = &c.c_r[0];
    for i in 0..6 {
        assert!((zero[(i, i)] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }
    let off = (zero - CMat::identity(6, 6)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(off < 0.1, "{off}");
    for n in 1..1000 {
        assert_eq!(c.c_r[1000 - n], c.c_r[n].adjoint());
        if n > 3 && n < 997 {
            assert_eq!(c.c_r[n].norm(), 0.0);
        }
    }
}

#[test]
fn rejects_out_of_range() {
    assert!(arcsine_forward(&CMat::from_element(1, 1, C64::new(1.5, 0.0))).is_err());
}

proptest! {
    #[test]
    fn round_trip_anywhere(re in -1.0f64..=1.0, im in -1.0f64..=1.0) {
        let m = CMat::from_element(1, 1, C64::new(re, im));
        let back = arcsine_inverse(&arcsine_forward(&m).unwrap());
        prop_assert!((back[(0, 0)] - m[(0, 0)]).norm() < 1e-12);
    }
}
