//! Uplink block transmission: symbols, noise, unitary DFTs and one-bit
//! quantization.
//!
//! Blocks are stored as `N × T` (or `K × T`) matrices whose column `m` is the
//! vector at frequency bin (or time sample) `m`. Every DFT is unitary.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::complex_normal;
use crate::error::{invalid, mismatch};
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolDistribution {
    #[default]
    Gaussian,
    Qpsk,
}

#[derive(Debug, Clone)]
pub struct SymbolBlock {
    /// `K × T`, column `m` is `x[m]`.
    pub x_freq: CMat,
    pub distribution: SymbolDistribution,
    pub rho: f64,
}

/// Block sizes `(N, K, T, T_D)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub max_delay: usize,
}

/// One coherence block of observations.
#[derive(Debug, Clone)]
pub struct RxBlock {
    /// Unquantized DFT-domain observations `y[m]`, `N × T`.
    pub y_freq: Option<CMat>,
    /// One-bit time-domain observations `r̃[n]`, `N × T`.
    pub r_time: Option<CMat>,
    /// Unitary DFT of `r_time`.
    pub r_freq: Option<CMat>,
    pub rho: f64,
    pub dims: BlockDims,
}

impl RxBlock {
    pub fn is_onebit(&self) -> bool {
        self.r_time.is_some()
    }

    pub fn y(&self) -> Result<&CMat> {
        self.y_freq.as_ref().ok_or(Error::MissingData("unquantized observations"))
    }

    pub fn r_freq(&self) -> Result<&CMat> {
        self.r_freq.as_ref().ok_or(Error::MissingData("one-bit observations"))
    }

    pub fn r_time(&self) -> Result<&CMat> {
        self.r_time.as_ref().ok_or(Error::MissingData("one-bit observations"))
    }

    /// Builds a one-bit block directly from time-domain sign observations.
    pub fn from_onebit(r_time: CMat, rho: f64, dims: BlockDims) -> Result<Self> {
        if r_time.nrows() != dims.n || r_time.ncols() != dims.t {
            return Err(mismatch("one-bit block does not match its dimensions"));
        }
        let r_freq = dft_block(&r_time, Direction::Forward);
        Ok(Self {
            y_freq: None,
            r_time: Some(r_time),
            r_freq: Some(r_freq),
            rho,
            dims,
        })
    }
}

/// Draws `K × T` frequency-domain symbols with per-symbol variance `rho`.
///
/// Gaussian symbols are `CN(0, ρ)` in the frequency domain. QPSK symbols are
/// drawn in the time domain from `√ρ{±1 ± j}/√2` and then transformed.
pub fn draw_symbols<R: Rng + ?Sized>(
    k: usize,
    t: usize,
    rho: f64,
    distribution: SymbolDistribution,
    rng: &mut R,
) -> Result<SymbolBlock> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("symbol variance must be positive"));
    }
    let x_freq = match distribution {
        SymbolDistribution::Gaussian => CMat::from_fn(k, t, |_, _| complex_normal(rng, rho)),
        SymbolDistribution::Qpsk => {
            let amp = (rho / 2.0).sqrt();
            let time = CMat::from_fn(k, t, |_, _| {
                let re = if rng.random::<bool>() { amp } else { -amp };
                let im = if rng.random::<bool>() { amp } else { -amp };
                C64::new(re, im)
            });
            dft_block(&time, Direction::Forward)
        }
    };
    Ok(SymbolBlock {
        x_freq,
        distribution,
        rho,
    })
}

/// `y[m] = H[m] x[m] + z[m]` with `z[m] ~ CN(0, I)`.
pub fn simulate_rx<R: Rng + ?Sized>(
    channel: &[CMat],
    symbols: &SymbolBlock,
    max_delay: usize,
    rng: &mut R,
) -> Result<RxBlock> {
    simulate(channel, symbols, max_delay, Some(rng))
}

/// Noise-free variant of [`simulate_rx`].
pub fn simulate_rx_noiseless(channel: &[CMat], symbols: &SymbolBlock, max_delay: usize) -> Result<RxBlock> {
    simulate::<rand_chacha::ChaCha8Rng>(channel, symbols, max_delay, None)
}

fn simulate<R: Rng + ?Sized>(
    channel: &[CMat],
    symbols: &SymbolBlock,
    max_delay: usize,
    mut rng: Option<&mut R>,
) -> Result<RxBlock> {
    let t = symbols.x_freq.ncols();
    let k = symbols.x_freq.nrows();
    if channel.len() != t {
        return Err(mismatch(format!("{} channel bins for {} symbols", channel.len(), t)));
    }
    let n = channel.first().map(|h| h.nrows()).unwrap_or(0);
    if channel.iter().any(|h| h.nrows() != n || h.ncols() != k) {
        return Err(mismatch("channel matrices must all be N × K"));
    }
    let mut y = CMat::zeros(n, t);
    for (m, h) in channel.iter().enumerate() {
        let mut col = y.column_mut(m);
        col.gemv(C64::new(1.0, 0.0), h, &symbols.x_freq.column(m), C64::new(0.0, 0.0));
        if let Some(rng) = rng.as_deref_mut() {
            for z in col.iter_mut() {
                *z += complex_normal(rng, 1.0);
            }
        }
    }
    Ok(RxBlock {
        y_freq: Some(y),
        r_time: None,
        r_freq: None,
        rho: symbols.rho,
        dims: BlockDims { n, k, t, max_delay },
    })
}

/// `(1/√2) sign(Re z) + (j/√2) sign(Im z)` with `sign(0) = +1`.
pub fn onebit(z: C64) -> C64 {
    let s = |x: f64| if x < 0.0 { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    C64::new(s(z.re), s(z.im))
}

/// Quantizes the time-domain received signal to one bit per real dimension.
pub fn quantize_onebit(rx: &RxBlock) -> Result<RxBlock> {
    let y = rx.y()?;
    let y_time = dft_block(y, Direction::Inverse);
    let r_time = y_time.map(onebit);
    let r_freq = dft_block(&r_time, Direction::Forward);
    Ok(RxBlock {
        y_freq: rx.y_freq.clone(),
        r_time: Some(r_time),
        r_freq: Some(r_freq),
        rho: rx.rho,
        dims: rx.dims,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unitary DFT of every row of `x` (each row is one length-`T` sequence).
pub fn dft_block(x: &CMat, direction: Direction) -> CMat {
    let t = x.ncols();
    if t == 0 {
        return x.clone();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = match direction {
        Direction::Forward => planner.plan_fft_forward(t),
        Direction::Inverse => planner.plan_fft_inverse(t),
    };
    let scale = 1.0 / (t as f64).sqrt();
    let mut out = CMat::zeros(x.nrows(), t);
    let mut buf = vec![C64::new(0.0, 0.0); t];
    for r in 0..x.nrows() {
        for (b, v) in buf.iter_mut().zip(x.row(r).iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (c, v) in buf.iter().enumerate() {
            out[(r, c)] = v * scale;
        }
    }
    out
}

pub fn idft_block(x: &CMat) -> CMat {
    dft_block(x, Direction::Inverse)
}

/// Converts a decibel SNR to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
