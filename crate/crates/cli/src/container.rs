//! Binary container for observation blocks and estimates.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `BLINDMIM` |
//! | 4     | `u32` format version |
//! | 4     | `u32` kind (see [`Kind`]) |
//! | 32    | `u64` dims `N, K, T, T_D` |
//! | 8     | `f64` linear SNR `ρ` |
//! | rest  | complex payload as interleaved `f64` real/imaginary pairs |
//!
//! Payload shapes, each matrix row-major:
//!
//! - `YFreq`: `N × T`, column `m` is `y[m]`.
//! - `OnebitTime`: `N × T`, column `n` is `r̃[n]`.
//! - `Coefficients`: `N(T_D+1) × K`.
//! - `Channel`: `T` matrices `H[m]` of size `N × K`, in bin order.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use blindmimo::{BlockDims, CMat, RxBlock, C64};

pub const MAGIC: [u8; 8] = *b"BLINDMIM";
pub const VERSION: u32 = 1;
const HEADER: usize = 16 + 32 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    YFreq = 0,
    OnebitTime = 1,
    Coefficients = 2,
    Channel = 3,
}

impl Kind {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            0 => Some(Kind::YFreq),
            1 => Some(Kind::OnebitTime),
            2 => Some(Kind::Coefficients),
            3 => Some(Kind::Channel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormatError(pub String);

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed container: {}", self.0)
    }
}

impl std::error::Error for FormatError {}

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: Kind,
    pub dims: BlockDims,
    pub rho: f64,
    pub matrices: Vec<CMat>,
}

fn shapes(kind: Kind, d: &BlockDims) -> Option<Vec<(usize, usize)>> {
    Some(match kind {
        Kind::YFreq | Kind::OnebitTime => vec![(d.n, d.t)],
        Kind::Coefficients => vec![(d.n.checked_mul(d.max_delay.checked_add(1)?)?, d.k)],
        Kind::Channel => vec![(d.n, d.k); d.t],
    })
}

impl Container {
    /// Observation container for `rx`; one-bit blocks store `r̃`.
    pub fn from_rx(rx: &RxBlock) -> Result<Self, FormatError> {
        let (kind, m) = match (&rx.r_time, &rx.y_freq) {
            (Some(r), _) => (Kind::OnebitTime, r.clone()),
            (None, Some(y)) => (Kind::YFreq, y.clone()),
            (None, None) => return Err(bad("block holds no observations")),
        };
        Ok(Self {
            kind,
            dims: rx.dims,
            rho: rx.rho,
            matrices: vec![m],
        })
    }

    pub fn to_rx(&self) -> Result<RxBlock, FormatError> {
        let m = self.matrices[0].clone();
        match self.kind {
            Kind::YFreq => Ok(RxBlock {
                y_freq: Some(m),
                r_time: None,
                r_freq: None,
                rho: self.rho,
                dims: self.dims,
            }),
            Kind::OnebitTime => RxBlock::from_onebit(m, self.rho, self.dims).map_err(|e| bad(e.to_string())),
            k => Err(bad(format!("kind {} is not an observation block", k as u32))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let count: usize = self.matrices.iter().map(|m| m.len()).sum();
        let mut out = Vec::with_capacity(HEADER + 16 * count);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind as u32).to_le_bytes());
        for v in [self.dims.n, self.dims.k, self.dims.t, self.dims.max_delay] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.rho.to_le_bytes());
        for m in &self.matrices {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.extend_from_slice(&m[(r, c)].re.to_le_bytes());
                    out.extend_from_slice(&m[(r, c)].im.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < HEADER {
            return Err(bad(format!("{} bytes is shorter than the {HEADER}-byte header", bytes.len())));
        }
        if bytes[..8] != MAGIC {
            return Err(bad("wrong magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let kind = Kind::from_u32(u32_at(12)).ok_or_else(|| bad(format!("unknown kind {}", u32_at(12))))?;
        let dim = |i: usize| usize::try_from(u64_at(16 + 8 * i)).map_err(|_| bad("dimension overflows"));
        let dims = BlockDims {
            n: dim(0)?,
            k: dim(1)?,
            t: dim(2)?,
            max_delay: dim(3)?,
        };
        if dims.n == 0 || dims.t == 0 {
            return Err(bad("N and T must be positive"));
        }
        let rho = f64_at(48);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(bad(format!("rho = {rho} is not a positive number")));
        }
        let shapes = shapes(kind, &dims).ok_or_else(|| bad("dimensions overflow"))?;
        let count = shapes
            .iter()
            .try_fold(0usize, |acc, (r, c)| r.checked_mul(*c).and_then(|v| acc.checked_add(v)))
            .ok_or_else(|| bad("dimensions overflow"))?;
        let expected = count.checked_mul(16).and_then(|v| v.checked_add(HEADER));
        if expected != Some(bytes.len()) {
            return Err(bad(format!(
                "payload holds {} bytes, dimensions require {}",
                bytes.len() - HEADER,
                count.saturating_mul(16)
            )));
        }
        let mut offset = HEADER;
        let mut matrices = Vec::with_capacity(shapes.len());
        for (rows, cols) in shapes {
            let mut m = CMat::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    m[(r, c)] = C64::new(f64_at(offset), f64_at(offset + 8));
                    offset += 16;
                }
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(bad("payload holds non-finite values"));
            }
            matrices.push(m);
        }
        if kind == Kind::OnebitTime && matrices[0].iter().any(|z| z.re.abs() != FRAC_1_SQRT_2 || z.im.abs() != FRAC_1_SQRT_2) {
            return Err(bad("one-bit entries must be ±1/√2 ± j/√2"));
        }
        Ok(Self {
            kind,
            dims,
            rho,
            matrices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(kind: Kind) -> Container {
        let dims = BlockDims {
            n: 3,
            k: 2,
            t: 4,
            max_delay: 1,
        };
        let (rows, cols) = shapes(kind, &dims).unwrap()[0];
        let count = shapes(kind, &dims).unwrap().len();
        let v = FRAC_1_SQRT_2;
        let matrices = (0..count)
            .map(|i| {
                CMat::from_fn(rows, cols, |r, c| match kind {
                    Kind::OnebitTime => C64::new(if (r + c) % 2 == 0 { v } else { -v }, v),
                    _ => C64::new((r * 10 + c + i) as f64, -0.5 * r as f64),
                })
            })
            .collect();
        Container {
            kind,
            dims,
            rho: 0.25,
            matrices,
        }
    }

    #[test]
    fn round_trip_every_kind() {
        for kind in [Kind::YFreq, Kind::OnebitTime, Kind::Coefficients, Kind::Channel] {
            let c = sample(kind);
            let bytes = c.to_bytes();
            assert_eq!(&bytes[..8], b"BLINDMIM");
            assert_eq!(Container::from_bytes(&bytes).unwrap(), c);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample(Kind::Coefficients).to_bytes();
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[48..56].try_into().unwrap()), 0.25);
        assert_eq!(bytes.len(), 56 + 16 * 6 * 2);
        assert_eq!(f64::from_le_bytes(bytes[56 + 16..64 + 16].try_into().unwrap()), 1.0);
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample(Kind::YFreq).to_bytes();
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Container::from_bytes(&bytes[..10]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Container::from_bytes(&wrong).is_err());
        let mut wrong = bytes.clone();
        wrong[12] = 9;
        assert!(Container::from_bytes(&wrong).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Container::from_bytes(&longer).is_err());
        let mut signs = sample(Kind::OnebitTime).to_bytes();
        signs[56] = 0;
        assert!(Container::from_bytes(&signs).is_err());
    }
}
