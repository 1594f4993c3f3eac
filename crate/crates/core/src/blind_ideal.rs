//! Blind ℓ1-regularized maximum-likelihood estimation from unquantized
//! observations.
//!
//! The Gaussian log-likelihood of a block with covariances
//! `Q_m = ρF_mSS^HF_m^H + I` only depends on the data through the per-bin
//! second moments `Φ_m` (`y[m]y[m]^H` for raw observations). When every
//! `F_m` is the same the bins collapse into a single block holding
//! `Σ_m Φ_m`, which makes the narrowband solver independent of `T`.

use serde::{Deserialize, Serialize};

use crate::channel::Dictionary;
use crate::error::{invalid, mismatch};
use crate::linalg::{all_finite, hermitian_eig_desc, hpd_inverse_logdet, trace};
use crate::prox::{self, kkt_from_descent, SmoothObjective};
use crate::{CMat, Error, Result, RxBlock, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub mu0: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub tol_rel_obj: f64,
    pub min_step: f64,
    /// Extrapolate each step from the previous two iterates, restarting
    /// whenever the extrapolated step fails to improve the objective.
    pub accelerate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 4.0,
            mu0: 1.0,
            beta: 0.5,
            max_iters: 500,
            tol_rel_obj: 1e-6,
            min_step: 1e-12,
            accelerate: false,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be non-negative"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("beta must lie in (0, 1)"));
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(invalid("mu0 must be positive"));
        }
        if !(self.min_step > 0.0) {
            return Err(invalid("min_step must be positive"));
        }
        Ok(())
    }
}

/// Estimated coefficient matrix with solver diagnostics.
#[derive(Debug, Clone)]
pub struct SparseEstimate {
    /// `Ŝ`, `N(T_D+1) × K`.
    pub coefficients: CMat,
    /// Regularized objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub final_step: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Fewer than `K` positive eigenvalues in the initializer, or
    /// rank-deficient pilots for the pilot baseline.
    pub rank_deficient: bool,
}

impl SparseEstimate {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// One group of frequency bins sharing the same dictionary matrix.
#[derive(Debug, Clone)]
pub struct StatBlock {
    /// Bin whose `F_m` is used.
    pub freq: usize,
    /// Summed second moment `Σ Φ_m` over the group.
    pub cov: CMat,
    /// Number of bins in the group.
    pub weight: f64,
    trace: f64,
}

impl StatBlock {
    fn new(freq: usize, cov: CMat, weight: f64) -> Self {
        let trace = trace(&cov).re;
        Self {
            freq,
            cov,
            weight,
            trace,
        }
    }
}

/// Second-order statistics the likelihood depends on.
#[derive(Debug, Clone)]
pub struct CovarianceStats {
    blocks: Vec<StatBlock>,
}

impl CovarianceStats {
    /// From raw `N × T` observations, `Φ_m = y[m]y[m]^H`.
    pub fn from_observations(obs: &CMat, dictionary: &Dictionary) -> Result<Self> {
        check_obs(obs, dictionary)?;
        if dictionary.is_flat() {
            let cov = obs * obs.adjoint();
            return Ok(Self {
                blocks: vec![StatBlock::new(0, cov, obs.ncols() as f64)],
            });
        }
        let blocks = obs
            .column_iter()
            .enumerate()
            .map(|(m, y)| StatBlock::new(m, &y * y.adjoint(), 1.0))
            .collect();
        Ok(Self { blocks })
    }

    /// From per-bin second moments `Φ_m`.
    pub fn from_spectral(covs: &[CMat], dictionary: &Dictionary) -> Result<Self> {
        let n = dictionary.n_antennas();
        if covs.len() != dictionary.n_freqs() {
            return Err(mismatch(format!("{} covariances for {} bins", covs.len(), dictionary.n_freqs())));
        }
        if covs.iter().any(|c| c.nrows() != n || c.ncols() != n) {
            return Err(mismatch("spectral covariances must be N × N"));
        }
        if dictionary.is_flat() {
            let mut sum = CMat::zeros(n, n);
            for c in covs {
                sum += c;
            }
            return Ok(Self {
                blocks: vec![StatBlock::new(0, sum, covs.len() as f64)],
            });
        }
        let blocks = covs
            .iter()
            .enumerate()
            .map(|(m, c)| StatBlock::new(m, c.clone(), 1.0))
            .collect();
        Ok(Self { blocks })
    }

    /// One block holding `cov` summed over `weight` bins sharing `F_0`.
    pub(crate) fn single(cov: CMat, weight: f64) -> Self {
        Self {
            blocks: vec![StatBlock::new(0, cov, weight)],
        }
    }

    pub fn blocks(&self) -> &[StatBlock] {
        &self.blocks
    }
}

fn check_obs(obs: &CMat, dictionary: &Dictionary) -> Result<()> {
    if obs.nrows() != dictionary.n_antennas() || obs.ncols() != dictionary.n_freqs() {
        return Err(mismatch(format!(
            "observations are {}×{}, dictionary expects {}×{}",
            obs.nrows(),
            obs.ncols(),
            dictionary.n_antennas(),
            dictionary.n_freqs()
        )));
    }
    if !all_finite(obs) {
        return Err(Error::NonFinite("observations"));
    }
    Ok(())
}

/// `L(S) = −Σ_m tr(Q_m^{-1}Φ_m) − Σ_m log|Q_m|`, evaluated through the
/// `K × K` matrices `ρS^HF_m^HF_mS + I`.
#[derive(Debug, Clone, Copy)]
pub struct LikelihoodModel<'a> {
    pub dictionary: &'a Dictionary,
    pub stats: &'a CovarianceStats,
    pub rho: f64,
}

struct BlockTerms {
    /// `P = F_m S`.
    p: CMat,
    /// `(ρP^HP + I)^{-1}`.
    w: CMat,
    logdet: f64,
}

impl<'a> LikelihoodModel<'a> {
    pub fn new(dictionary: &'a Dictionary, stats: &'a CovarianceStats, rho: f64) -> Self {
        Self { dictionary, stats, rho }
    }

    fn terms(&self, block: &StatBlock, s: &CMat) -> Option<BlockTerms> {
        let p = self.dictionary.apply(block.freq, s);
        let k = p.ncols();
        let m = p.ad_mul(&p).scale(self.rho) + CMat::identity(k, k);
        let (w, logdet) = hpd_inverse_logdet(&m)?;
        Some(BlockTerms { p, w, logdet })
    }

    pub fn loglikelihood(&self, s: &CMat) -> f64 {
        let mut total = 0.0;
        for block in self.stats.blocks() {
            let Some(t) = self.terms(block, s) else {
                return f64::NAN;
            };
            // tr(Q^{-1}Φ) = tr Φ − ρ tr(W P^H Φ P)
            let phi_p = &block.cov * &t.p;
            let inner = trace(&(&t.w * t.p.ad_mul(&phi_p))).re;
            total -= block.trace - self.rho * inner + block.weight * t.logdet;
        }
        total
    }

    /// `Δ = −∂L/∂S* = Σ_m ρF_m^H(Q_m^{-1}F_mS − Q_m^{-1}Φ_mQ_m^{-1}F_mS)`.
    pub fn gradient(&self, s: &CMat) -> CMat {
        let mut delta = CMat::zeros(s.nrows(), s.ncols());
        for block in self.stats.blocks() {
            let Some(t) = self.terms(block, s) else {
                return CMat::from_element(s.nrows(), s.ncols(), C64::new(f64::NAN, f64::NAN));
            };
            // Q^{-1}P = P W
            let pw = &t.p * &t.w;
            let b = &block.cov * &pw;
            let qinv_b = &b - (&pw * t.p.ad_mul(&b)).scale(self.rho);
            let inner = (pw.scale(block.weight) - qinv_b).scale(self.rho);
            delta += self.dictionary.apply_adjoint(block.freq, &inner);
        }
        delta
    }
}

impl SmoothObjective for LikelihoodModel<'_> {
    fn value(&self, s: &CMat) -> f64 {
        self.loglikelihood(s)
    }

    fn descent(&self, s: &CMat) -> CMat {
        self.gradient(s)
    }
}

fn check_s(s: &CMat, dictionary: &Dictionary) -> Result<()> {
    if s.nrows() != dictionary.n_coeffs() {
        return Err(mismatch(format!("S has {} rows, expected {}", s.nrows(), dictionary.n_coeffs())));
    }
    if !all_finite(s) {
        return Err(Error::NonFinite("coefficient matrix"));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho must be positive"));
    }
    Ok(())
}

/// Gaussian log-likelihood of the unquantized observations in `rx`.
pub fn loglikelihood(s: &CMat, rx: &RxBlock, dictionary: &Dictionary, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    check_s(s, dictionary)?;
    let stats = CovarianceStats::from_observations(rx.y()?, dictionary)?;
    Ok(LikelihoodModel::new(dictionary, &stats, rho).loglikelihood(s))
}

/// `Δ = −∂L/∂S*` for the unquantized observations in `rx`.
pub fn gradient(s: &CMat, rx: &RxBlock, dictionary: &Dictionary, rho: f64) -> Result<CMat> {
    check_rho(rho)?;
    check_s(s, dictionary)?;
    let stats = CovarianceStats::from_observations(rx.y()?, dictionary)?;
    Ok(LikelihoodModel::new(dictionary, &stats, rho).gradient(s))
}

/// Closed-form low-SNR initializer.
#[derive(Debug, Clone)]
pub struct SubspaceInit {
    pub coefficients: CMat,
    /// Leading eigenvalues of `Σ_m F_m^H(Φ_m − I)F_m`, descending.
    pub eigenvalues: Vec<f64>,
    pub rank_deficient: bool,
}

/// `Σ_m F_m^H(y[m]y[m]^H − I)F_m` for `N × T` observations.
pub fn subspace_matrix(obs: &CMat, dictionary: &Dictionary) -> Result<CMat> {
    check_obs(obs, dictionary)?;
    let nc = dictionary.n_coeffs();
    let t = obs.ncols() as f64;
    if dictionary.is_flat() {
        let v = dictionary.apply_adjoint(0, obs);
        return Ok(&v * v.adjoint() - dictionary.gram(0).scale(t));
    }
    let mut m = CMat::zeros(nc, nc);
    for idx in 0..obs.ncols() {
        let v = dictionary.apply_adjoint(idx, &obs.columns(idx, 1).into_owned());
        m += &v * v.adjoint() - dictionary.gram(idx);
    }
    Ok(m)
}

/// `scale · V_{1:K} √[Σ_{1:K}]₊` from the eigendecomposition of `m`.
pub fn subspace_from_matrix(m: &CMat, k: usize, scale: f64) -> SubspaceInit {
    let (values, vectors) = hermitian_eig_desc(m);
    let k_eff = k.min(values.len());
    let mut s = CMat::zeros(m.nrows(), k);
    let mut positive = 0;
    for j in 0..k_eff {
        let lam = values[j].max(0.0);
        if values[j] > 0.0 {
            positive += 1;
        }
        s.set_column(j, &(vectors.column(j) * C64::new(scale * lam.sqrt(), 0.0)));
    }
    SubspaceInit {
        coefficients: s,
        eigenvalues: values[..k_eff].to_vec(),
        rank_deficient: positive < k,
    }
}

/// Subspace initializer `S0 = (Tρ)^{-1/2} V_{1:K}√[Σ_{1:K}]₊`.
pub fn subspace_init(rx: &RxBlock, dictionary: &Dictionary, rho: f64, k: usize) -> Result<SubspaceInit> {
    check_rho(rho)?;
    let y = rx.y()?;
    let m = subspace_matrix(y, dictionary)?;
    let scale = 1.0 / (y.ncols() as f64 * rho).sqrt();
    Ok(subspace_from_matrix(&m, k, scale))
}

/// Algorithm: subspace initialization followed by thresholded gradient
/// ascent with backtracking on the regularized likelihood.
pub fn estimate_blind(rx: &RxBlock, dictionary: &Dictionary, rho: f64, config: &SolverConfig) -> Result<SparseEstimate> {
    let init = subspace_init(rx, dictionary, rho, rx.dims.k)?;
    let mut est = estimate_blind_from(rx, dictionary, rho, init.coefficients, config)?;
    est.rank_deficient = init.rank_deficient;
    Ok(est)
}

/// Runs the iterations from a given starting point.
pub fn estimate_blind_from(
    rx: &RxBlock,
    dictionary: &Dictionary,
    rho: f64,
    s0: CMat,
    config: &SolverConfig,
) -> Result<SparseEstimate> {
    config.validate()?;
    check_rho(rho)?;
    check_s(&s0, dictionary)?;
    let stats = CovarianceStats::from_observations(rx.y()?, dictionary)?;
    let model = LikelihoodModel::new(dictionary, &stats, rho);
    Ok(prox::maximize_l1(&model, s0, config))
}

/// Largest violation of the first-order optimality conditions of the
/// regularized problem at `S`.
pub fn kkt_residual(s: &CMat, rx: &RxBlock, dictionary: &Dictionary, rho: f64, lambda: f64) -> Result<f64> {
    let delta = gradient(s, rx, dictionary, rho)?;
    Ok(kkt_from_descent(&delta, s, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dictionary, complex_normal, draw_channel, ArrayGeometry};
    use crate::linalg::max_abs;
    use crate::txrx::{draw_symbols, simulate_rx, simulate_rx_noiseless, BlockDims, SymbolDistribution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_block(n: usize, t: usize, t_d: usize, seed: u64) -> (Dictionary, RxBlock, CMat) {
        let g = ArrayGeometry::ula(n, 0.5, 60.5e9, 7e9);
        let d = build_dictionary(&g, t, t_d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = CMat::from_fn(n, t, |_, _| complex_normal(&mut rng, 1.5));
        let s = CMat::from_fn(d.n_coeffs(), 2, |_, _| complex_normal(&mut rng, 0.5));
        let rx = RxBlock {
            y_freq: Some(y),
            r_time: None,
            r_freq: None,
            rho: 0.5,
            dims: BlockDims { n, k: 2, t, max_delay: t_d },
        };
        (d, rx, s)
    }

    /// Direct N×N evaluation of the likelihood.
    fn dense_loglikelihood(s: &CMat, rx: &RxBlock, d: &Dictionary, rho: f64) -> f64 {
        let y = rx.y().unwrap();
        let n = d.n_antennas();
        let mut total = 0.0;
        for m in 0..d.n_freqs() {
            let h = d.matrix(m) * s;
            let q = (&h * h.adjoint()).scale(rho) + CMat::identity(n, n);
            let qinv = q.clone().try_inverse().unwrap();
            let ym = y.column(m);
            total -= (ym.adjoint() * &qinv * ym)[(0, 0)].re + q.determinant().re.ln();
        }
        total
    }

    #[test]
    fn zero_coefficients_give_energy() {
        let (d, rx, s) = random_block(4, 5, 1, 1);
        let z = CMat::zeros(s.nrows(), 2);
        let l = loglikelihood(&z, &rx, &d, 0.5).unwrap();
        let energy: f64 = rx.y().unwrap().iter().map(|v| v.norm_sqr()).sum();
        assert!((l + energy).abs() < 1e-12);
        assert!(max_abs(&gradient(&z, &rx, &d, 0.5).unwrap()) == 0.0);
    }

    #[test]
    fn reduced_form_matches_dense() {
        for seed in 0..5 {
            let (d, rx, s) = random_block(3, 4, 1, seed);
            let a = loglikelihood(&s, &rx, &d, 0.5).unwrap();
            let b = dense_loglikelihood(&s, &rx, &d, 0.5);
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
        let (d, rx, s) = random_block(2, 1, 0, 9);
        let s = s.columns(0, 1).into_owned();
        let a = loglikelihood(&s, &rx, &d, 0.5).unwrap();
        assert!((a - dense_loglikelihood(&s, &rx, &d, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (d, rx, s) = random_block(4, 3, 1, 3);
        let g = gradient(&s, &rx, &d, 0.5).unwrap();
        let h = 1e-6;
        let f = |x: &CMat| loglikelihood(x, &rx, &d, 0.5).unwrap();
        for idx in 0..s.len() {
            let mut sp = s.clone();
            sp[idx] += C64::new(h, 0.0);
            let mut sm = s.clone();
            sm[idx] -= C64::new(h, 0.0);
            let dre = (f(&sp) - f(&sm)) / (2.0 * h);
            let mut sp = s.clone();
            sp[idx] += C64::new(0.0, h);
            let mut sm = s.clone();
            sm[idx] -= C64::new(0.0, h);
            let dim = (f(&sp) - f(&sm)) / (2.0 * h);
            let fd = -C64::new(dre, dim) * 0.5;
            assert!((fd - g[idx]).norm() < 1e-6 * g[idx].norm().max(1.0));
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let (d, rx, s) = random_block(4, 8, 0, 4);
        let g0 = max_abs(&gradient(&s, &rx, &d, 0.5).unwrap());
        let config = SolverConfig::with_lambda(1e3 * g0.max(1.0));
        let est = estimate_blind_from(&rx, &d, 0.5, s, &config).unwrap();
        assert!(max_abs(&est.coefficients) == 0.0);
        let z = CMat::zeros(est.coefficients.nrows(), 2);
        assert_eq!(kkt_residual(&z, &rx, &d, 0.5, config.lambda).unwrap(), 0.0);
    }

    #[test]
    fn empty_observations_give_zero_init() {
        let (d, mut rx, _) = random_block(4, 6, 0, 5);
        rx.y_freq = Some(CMat::zeros(4, 6));
        let init = subspace_init(&rx, &d, 0.5, 2).unwrap();
        assert!(max_abs(&init.coefficients) == 0.0);
        assert!(init.rank_deficient);
    }

    #[test]
    fn noise_free_init_recovers_support() {
        let g = ArrayGeometry::ula(16, 0.5, 60.5e9, 1e6);
        let d = build_dictionary(&g, 400, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ch = draw_channel(&d, 1, 1, true, &mut rng).unwrap();
        let truth = ch.coefficients.column(0).iter().position(|z| z.norm() > 0.0).unwrap();
        let h = ch.transfer(&d);
        let x = draw_symbols(1, 400, 10.0, SymbolDistribution::Gaussian, &mut rng).unwrap();
        let rx = simulate_rx_noiseless(&h, &x, 0).unwrap();
        let init = subspace_init(&rx, &d, 10.0, 1).unwrap();
        let col = init.coefficients.column(0);
        let best = (0..16).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
        assert_eq!(best, truth);
    }

    #[test]
    fn trace_is_monotone_and_kkt_small() {
        let g = ArrayGeometry::ula(8, 0.5, 60.5e9, 1e6);
        let d = build_dictionary(&g, 64, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = draw_channel(&d, 2, 2, true, &mut rng).unwrap();
        let x = draw_symbols(2, 64, 1.0, SymbolDistribution::Gaussian, &mut rng).unwrap();
        let rx = simulate_rx(&ch.transfer(&d), &x, 0, &mut rng).unwrap();
        let config = SolverConfig {
            lambda: 2.0,
            tol_rel_obj: 1e-14,
            max_iters: 20_000,
            ..SolverConfig::default()
        };
        let est = estimate_blind(&rx, &d, 1.0, &config).unwrap();
        assert!(est.objective_trace.windows(2).all(|w| w[1] >= w[0]));
        let r = kkt_residual(&est.coefficients, &rx, &d, 1.0, 2.0).unwrap();
        assert!(r < 1e-4, "kkt {r} after {} iterations", est.iterations);
        assert!((r - est.kkt_residual).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (d, rx, s) = random_block(4, 3, 0, 1);
        assert!(loglikelihood(&s, &rx, &d, 0.0).is_err());
        let mut bad = s.clone();
        bad[0] = C64::new(f64::NAN, 0.0);
        assert!(loglikelihood(&bad, &rx, &d, 0.5).is_err());
        let config = SolverConfig {
            beta: 1.5,
            ..SolverConfig::default()
        };
        assert!(estimate_blind(&rx, &d, 0.5, &config).is_err());
    }
}
