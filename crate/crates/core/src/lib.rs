//! Blind sparse estimation of broadband massive-MIMO channels.
//!
//! The crate covers the whole link-level chain used to study blind uplink
//! channel estimation at a base station with `N` antennas and `K` users:
//!
//! - [`channel`]: sparse multipath channels and the delay-angle dictionary
//!   `F_m = [1, e^{-jω_m/B}, …, e^{-jT_Dω_m/B}] ⊗ A(ω_m)`.
//! - [`txrx`]: symbol generation, the DFT-domain receive model
//!   `y[m] = H[m]x[m] + z[m]` and one-bit quantization.
//! - [`blind_ideal`]: ℓ1-regularized maximum-likelihood estimation from
//!   unquantized observations (proximal gradient with backtracking).
//! - [`blind_onebit`]: the EM variant for one-bit observations, built on the
//!   arcsine law.
//! - [`crb`]: clairvoyant Fisher information matrices and the `η_CRB`
//!   predictor.
//! - [`eval`]: the `η` correlation metric with ambiguity resolution,
//!   pilot-based baselines and the Monte-Carlo experiment runner.
//!
//! All matrices are dense `nalgebra` matrices over `Complex<f64>`.

pub mod blind_ideal;
pub mod blind_onebit;
pub mod channel;
pub mod config;
pub mod crb;
mod error;
pub mod eval;
pub mod linalg;
pub mod prox;
pub mod txrx;

pub use error::{Error, Result};

pub use blind_ideal::{estimate_blind, CovarianceStats, LikelihoodModel, SolverConfig, SparseEstimate};
pub use blind_onebit::{estimate_blind_onebit, QuantizedCovariance};
pub use channel::{
    build_dictionary, draw_channel, ArrayGeometry, ArrayKind, ChannelRealization, Dictionary,
    ResponseModel,
};
pub use config::{ExperimentConfig, Method};
pub use crb::{FisherKind, FisherMatrix};
pub use eval::{run_experiment, CcdfTable, EtaResult, ExperimentOutcome, MethodCurve};
pub use txrx::{BlockDims, RxBlock, SymbolBlock, SymbolDistribution};

/// Complex double used throughout the crate.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
