#![allow(dead_code)]

use blindmimo::{build_dictionary, ArrayGeometry, CMat, Dictionary, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * sd, im * sd)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn(rng, 1.0))
}

pub fn narrowband(n: usize, t: usize) -> Dictionary {
    build_dictionary(&ArrayGeometry::ula(n, 0.5, 60.5e9, 1e6), t, 0).unwrap()
}

pub fn wideband(n: usize, t: usize, t_d: usize) -> Dictionary {
    build_dictionary(&ArrayGeometry::ula(n, 0.5, 60.5e9, 7e9), t, t_d).unwrap()
}

/// `−∂f/∂S*` by central differences, with `∂/∂s* = (∂/∂x + j∂/∂y)/2`.
pub fn numeric_descent(f: impl Fn(&CMat) -> f64, s: &CMat, h: f64) -> CMat {
    let mut out = CMat::zeros(s.nrows(), s.ncols());
    for idx in 0..s.len() {
        let probe = |dz: C64| {
            let mut p = s.clone();
            p[idx] += dz;
            f(&p)
        };
        let dx = (probe(C64::new(h, 0.0)) - probe(C64::new(-h, 0.0))) / (2.0 * h);
        let dy = (probe(C64::new(0.0, h)) - probe(C64::new(0.0, -h))) / (2.0 * h);
        out[idx] = -C64::new(dx, dy) * 0.5;
    }
    out
}

pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn nondiag(m: &CMat) -> CMat {
    let mut out = m.clone();
    for i in 0..m.nrows().min(m.ncols()) {
        out[(i, i)] = C64::new(0.0, 0.0);
    }
    out
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}
