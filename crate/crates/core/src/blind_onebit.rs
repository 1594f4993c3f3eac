//! Blind estimation from one-bit observations.
//!
//! The likelihood of sign data has no closed form, so the estimator
//! alternates between reconstructing the unquantized spectral covariances
//! from the sign autocorrelation (arcsine law) and one thresholded gradient
//! step on the resulting Gaussian surrogate.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use crate::blind_ideal::{subspace_from_matrix, subspace_matrix, CovarianceStats, LikelihoodModel, SubspaceInit};
use crate::channel::Dictionary;
use crate::error::{invalid, mismatch};
use crate::linalg::{all_finite, hermitian_defect, nondiag, trace};
use crate::prox::{backtracking_step, kkt_from_descent, regularized};
use crate::{CMat, CVec, Error, Result, RxBlock, SolverConfig, SparseEstimate, C64};

/// Windowed circular sample autocorrelation `Ĉ_r[n]` of the sign sequence.
#[derive(Debug, Clone)]
pub struct QuantizedCovariance {
    /// `Ĉ_r[n]` for `n = 0..T`; zero for `T_D < n < T − T_D`.
    pub c_r: Vec<CMat>,
    pub max_lag: usize,
}

impl QuantizedCovariance {
    pub fn len(&self) -> usize {
        self.c_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_r.is_empty()
    }

    /// `G[m] = Σ_n sin((π/2)Ĉ_r[n]) e^{−j2πmn/T}`, the reconstructed
    /// unit-diagonal spectral covariance before rescaling.
    pub fn sin_spectrum(&self) -> Vec<CMat> {
        let t = self.c_r.len();
        let lags: Vec<(usize, CMat)> = self
            .c_r
            .iter()
            .enumerate()
            .filter(|(n, _)| *n <= self.max_lag || *n >= t - self.max_lag)
            .map(|(n, c)| (n, arcsine_inverse(c)))
            .collect();
        (0..t)
            .map(|m| {
                let n_ant = lags[0].1.nrows();
                let mut g = CMat::zeros(n_ant, n_ant);
                for (n, c) in &lags {
                    let w = C64::from_polar(1.0, -2.0 * PI * ((m * n) % t) as f64 / t as f64);
                    g += c.map(|z| z * w);
                }
                g
            })
            .collect()
    }
}

/// `Ĉ_r[n] = (1/T) Σ_t r̃[t+n] r̃[t]^H` (circular) for `|n| ≤ T_D`, with
/// `Ĉ_r[T−n] = Ĉ_r[n]^H`.
pub fn sample_quantized_autocorr(r_time: &CMat, max_lag: usize) -> Result<QuantizedCovariance> {
    let (n, t) = r_time.shape();
    if t <= 2 * max_lag {
        return Err(invalid(format!(
            "lag window 2·{max_lag} does not fit in a block of {t} samples"
        )));
    }
    if !all_finite(r_time) {
        return Err(Error::NonFinite("one-bit observations"));
    }
    let mut c_r = vec![CMat::zeros(n, n); t];
    for lag in 0..=max_lag {
        let mut c = CMat::zeros(n, n);
        for s in 0..t {
            let a = r_time.column((s + lag) % t);
            let b = r_time.column(s);
            c.gerc(C64::new(1.0, 0.0), &a, &b, C64::new(1.0, 0.0));
        }
        c.unscale_mut(t as f64);
        if lag > 0 {
            c_r[t - lag] = c.adjoint();
        } else {
            c = (&c + c.adjoint()).scale(0.5);
        }
        c_r[lag] = c;
    }
    Ok(QuantizedCovariance { c_r, max_lag })
}

/// Sign correlation predicted by the arcsine law for a unit-diagonal
/// Gaussian correlation matrix, `(2/π)(arcsin Re c + j arcsin Im c)`.
pub fn arcsine_forward(c_y: &CMat) -> Result<CMat> {
    const SLACK: f64 = 1e-12;
    if c_y.iter().any(|z| !(z.re.abs() <= 1.0 + SLACK && z.im.abs() <= 1.0 + SLACK)) {
        return Err(invalid("correlation entries must have real and imaginary parts in [-1, 1]"));
    }
    let f = |x: f64| x.clamp(-1.0, 1.0).asin() / FRAC_PI_2;
    Ok(c_y.map(|z| C64::new(f(z.re), f(z.im))))
}

/// Entrywise `sin((π/2)·)` on real and imaginary parts.
pub fn arcsine_inverse(c_r: &CMat) -> CMat {
    c_r.map(|z| C64::new((FRAC_PI_2 * z.re).sin(), (FRAC_PI_2 * z.im).sin()))
}

/// `D = (1/T) Σ_m diag(ρF_mSS^HF_m^H + I)` as a vector.
fn received_power(s: &CMat, dictionary: &Dictionary, rho: f64) -> Vec<f64> {
    let n = dictionary.n_antennas();
    let t = dictionary.n_freqs();
    let mut acc = vec![0.0; n];
    let mut add = |p: &CMat, w: f64| {
        for (a, row) in p.row_iter().enumerate() {
            acc[a] += w * row.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    };
    if dictionary.is_flat() {
        add(&dictionary.apply(0, s), t as f64);
    } else {
        for m in 0..t {
            add(&dictionary.apply(m, s), 1.0);
        }
    }
    acc.into_iter().map(|v| 1.0 + rho * v / t as f64).collect()
}

fn rescale(g: &CMat, d_sqrt: &[f64]) -> CMat {
    CMat::from_fn(g.nrows(), g.ncols(), |a, b| g[(a, b)] * (d_sqrt[a] * d_sqrt[b]))
}

fn check_cr(c_r: &QuantizedCovariance, dictionary: &Dictionary) -> Result<()> {
    if c_r.len() != dictionary.n_freqs() {
        return Err(mismatch(format!("{} lags for {} bins", c_r.len(), dictionary.n_freqs())));
    }
    let n = dictionary.n_antennas();
    if c_r.c_r.iter().any(|c| c.nrows() != n || c.ncols() != n) {
        return Err(mismatch("lag covariances must be N × N"));
    }
    let scale = c_r.c_r[0].iter().map(|z| z.norm()).fold(1.0, f64::max);
    if hermitian_defect(&c_r.c_r[0]) > 1e-10 * scale {
        return Err(Error::NotHermitian("zero-lag sign covariance"));
    }
    Ok(())
}

/// E-step: `Φ̂_y[m] = D^{1/2} G[m] D^{1/2}` for every bin.
pub fn estep_cov(c_r: &QuantizedCovariance, s_prev: &CMat, dictionary: &Dictionary, rho: f64) -> Result<Vec<CMat>> {
    check_cr(c_r, dictionary)?;
    if s_prev.nrows() != dictionary.n_coeffs() {
        return Err(mismatch("S has the wrong number of rows"));
    }
    if !all_finite(s_prev) {
        return Err(Error::NonFinite("previous estimate"));
    }
    let d_sqrt: Vec<f64> = received_power(s_prev, dictionary, rho).iter().map(|v| v.sqrt()).collect();
    Ok(c_r.sin_spectrum().iter().map(|g| rescale(g, &d_sqrt)).collect())
}

/// Gradient `−∂L/∂S*` of the surrogate likelihood with fixed `Φ̂_y[m]`.
pub fn em_gradient(s_prev: &CMat, phi_y: &[CMat], dictionary: &Dictionary, rho: f64) -> Result<CMat> {
    let stats = CovarianceStats::from_spectral(phi_y, dictionary)?;
    Ok(LikelihoodModel::new(dictionary, &stats, rho).gradient(s_prev))
}

/// Surrogate log-likelihood with fixed `Φ̂_y[m]`.
pub fn em_surrogate(s: &CMat, phi_y: &[CMat], dictionary: &Dictionary, rho: f64) -> Result<f64> {
    let stats = CovarianceStats::from_spectral(phi_y, dictionary)?;
    Ok(LikelihoodModel::new(dictionary, &stats, rho).loglikelihood(s))
}

/// Precomputed sign spectrum reused by every E-step.
struct EStep<'a> {
    dictionary: &'a Dictionary,
    rho: f64,
    /// `Σ_m G[m]` when the dictionary is flat, else every `G[m]`.
    spectra: Vec<CMat>,
}

impl<'a> EStep<'a> {
    fn new(c_r: &QuantizedCovariance, dictionary: &'a Dictionary, rho: f64) -> Self {
        let g = c_r.sin_spectrum();
        let spectra = if dictionary.is_flat() {
            let mut sum = CMat::zeros(g[0].nrows(), g[0].ncols());
            for gm in &g {
                sum += gm;
            }
            vec![sum]
        } else {
            g
        };
        Self {
            dictionary,
            rho,
            spectra,
        }
    }

    fn stats(&self, s: &CMat) -> Result<CovarianceStats> {
        let d_sqrt: Vec<f64> = received_power(s, self.dictionary, self.rho)
            .iter()
            .map(|v| v.sqrt())
            .collect();
        if self.dictionary.is_flat() {
            let cov = rescale(&self.spectra[0], &d_sqrt);
            return Ok(CovarianceStats::single(cov, self.dictionary.n_freqs() as f64));
        }
        let phi: Vec<CMat> = self.spectra.iter().map(|g| rescale(g, &d_sqrt)).collect();
        CovarianceStats::from_spectral(&phi, self.dictionary)
    }
}

/// Low-SNR initializer `S0 = √(π/(2Tρ)) V_{1:K}√[Σ_{1:K}]₊` built from
/// `Σ_m F_m^H(r[m]r[m]^H − I)F_m`.
pub fn onebit_subspace_init(rx: &RxBlock, dictionary: &Dictionary, rho: f64, k: usize) -> Result<SubspaceInit> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho must be positive"));
    }
    let r = rx.r_freq()?;
    let m = subspace_matrix(r, dictionary)?;
    let scale = (PI / (2.0 * r.ncols() as f64 * rho)).sqrt();
    Ok(subspace_from_matrix(&m, k, scale))
}

/// One EM iteration from `s`: E-step at `s`, then one backtracking
/// M-step. Returns the step together with the surrogate regularized
/// objective at `s`.
pub fn em_iteration(
    c_r: &QuantizedCovariance,
    s: &CMat,
    dictionary: &Dictionary,
    rho: f64,
    mu: f64,
    config: &SolverConfig,
) -> Result<(crate::prox::Step, f64)> {
    check_cr(c_r, dictionary)?;
    let estep = EStep::new(c_r, dictionary, rho);
    let stats = estep.stats(s)?;
    let model = LikelihoodModel::new(dictionary, &stats, rho);
    let before = regularized(&model, s, config.lambda);
    Ok((backtracking_step(&model, s, before, config.lambda, mu, config), before))
}

/// EM-based blind estimation from one-bit observations.
pub fn estimate_blind_onebit(
    rx: &RxBlock,
    dictionary: &Dictionary,
    rho: f64,
    config: &SolverConfig,
) -> Result<SparseEstimate> {
    let init = onebit_subspace_init(rx, dictionary, rho, rx.dims.k)?;
    let mut est = estimate_blind_onebit_from(rx, dictionary, rho, init.coefficients, config)?;
    est.rank_deficient = init.rank_deficient;
    Ok(est)
}

/// EM iterations from a given starting point.
///
/// The objective trace holds the surrogate regularized objective after
/// every accepted M-step. Each entry is at least the value of the same
/// surrogate before the step; entries from different E-steps are not
/// comparable.
pub fn estimate_blind_onebit_from(
    rx: &RxBlock,
    dictionary: &Dictionary,
    rho: f64,
    s0: CMat,
    config: &SolverConfig,
) -> Result<SparseEstimate> {
    config.validate()?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho must be positive"));
    }
    if s0.nrows() != dictionary.n_coeffs() || !all_finite(&s0) {
        return Err(invalid("initial estimate has the wrong shape or is not finite"));
    }
    let c_r = sample_quantized_autocorr(rx.r_time()?, dictionary.max_delay())?;
    check_cr(&c_r, dictionary)?;
    let estep = EStep::new(&c_r, dictionary, rho);
    let lambda = config.lambda;
    let mut s = s0;
    let mut mu = config.mu0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_stats = estep.stats(&s)?;
    while iterations < config.max_iters {
        let model = LikelihoodModel::new(dictionary, &last_stats, rho);
        let before = regularized(&model, &s, lambda);
        if trace.is_empty() {
            trace.push(before);
        }
        let step = backtracking_step(&model, &s, before, lambda, mu, config);
        mu = step.mu / config.beta;
        if !step.accepted {
            break;
        }
        iterations += 1;
        let change = (step.objective - before).abs() / before.abs().max(f64::MIN_POSITIVE);
        s = step.s;
        trace.push(step.objective);
        last_stats = estep.stats(&s)?;
        if change < config.tol_rel_obj {
            converged = true;
            break;
        }
    }
    let model = LikelihoodModel::new(dictionary, &last_stats, rho);
    let kkt_residual = kkt_from_descent(&model.gradient(&s), &s, lambda);
    Ok(SparseEstimate {
        coefficients: s,
        objective_trace: trace,
        iterations,
        final_step: mu,
        kkt_residual,
        converged,
        rank_deficient: false,
    })
}

/// First-order low-SNR approximation of `P(r | H)` for one flat-fading
/// sign vector, `4^{-N}(1 + ρ(2/π) tr(H^H(rr^H − I)H))`.
pub fn onebit_prob_firstorder(r: &CVec, h: &CMat, rho: f64) -> Result<f64> {
    let n = check_prob_inputs(r, h)?;
    let rh = r.adjoint() * h;
    let quad = rh.norm_squared() - h.norm_squared();
    Ok(0.25f64.powi(n as i32) * (1.0 + rho * (2.0 / PI) * quad))
}

/// Equivalent form `4^{-N}(1 + ρ(2/π) r^H nondiag(HH^H) r)`, valid for
/// unit-modulus sign entries.
pub fn onebit_prob_firstorder_nondiag(r: &CVec, h: &CMat, rho: f64) -> Result<f64> {
    let n = check_prob_inputs(r, h)?;
    let nd = nondiag(&(h * h.adjoint()));
    let quad = (r.adjoint() * nd * r)[(0, 0)].re;
    Ok(0.25f64.powi(n as i32) * (1.0 + rho * (2.0 / PI) * quad))
}

fn check_prob_inputs(r: &CVec, h: &CMat) -> Result<usize> {
    if r.len() != h.nrows() {
        return Err(mismatch("sign vector and channel have different lengths"));
    }
    if r.len() > 31 {
        return Err(Error::TooLarge(format!("{} antennas", r.len())));
    }
    Ok(r.len())
}

/// Every sign vector in `{±1/√2 ± j/√2}^n`, in lexicographic order.
pub fn sign_vectors(n: usize) -> Result<Vec<CVec>> {
    if n > 8 {
        return Err(Error::TooLarge(format!("4^{n} sign vectors")));
    }
    let count = 1usize << (2 * n);
    Ok((0..count)
        .map(|code| {
            CVec::from_fn(n, |i, _| {
                let bits = (code >> (2 * i)) & 3;
                let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                C64::new(re, im)
            })
        })
        .collect())
}

/// Both sides of `4^{-N} Σ_r r^HDr · r^HBr = tr(D nondiag(B)) + tr(D)tr(B)`,
/// the left side by enumeration.
pub fn sign_enumeration_identity(d: &CMat, b: &CMat) -> Result<(C64, C64)> {
    let n = d.nrows();
    if d.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(mismatch("D and B must be square of the same size"));
    }
    let signs = sign_vectors(n)?;
    let mut lhs = C64::new(0.0, 0.0);
    for r in &signs {
        let rd = (r.adjoint() * d * r)[(0, 0)];
        let rb = (r.adjoint() * b * r)[(0, 0)];
        lhs += rd * rb;
    }
    lhs /= signs.len() as f64;
    let rhs = trace(&(d * nondiag(b))) + trace(d) * trace(b);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dictionary, complex_normal, ArrayGeometry};
    use crate::linalg::max_abs;
    use crate::txrx::{quantize_onebit, BlockDims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_signs(n: usize, t: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(n, t, |_, _| crate::txrx::onebit(complex_normal(rng, 1.0)))
    }

    #[test]
    fn autocorr_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_signs(4, 40, &mut rng);
        let c = sample_quantized_autocorr(&r, 3).unwrap();
        for a in 0..4 {
            assert!((c.c_r[0][(a, a)] - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
        for n in 4..=36 {
            assert!(max_abs(&c.c_r[n]) == 0.0);
        }
        for n in 1..=3 {
            assert_eq!(c.c_r[n], c.c_r[40 - n].adjoint());
        }
        assert!(sample_quantized_autocorr(&r, 20).is_err());
    }

    #[test]
    fn autocorr_matches_dft_of_outer_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_signs(3, 16, &mut rng);
        let c = sample_quantized_autocorr(&r, 7).unwrap();
        let rf = crate::txrx::dft_block(&r, crate::txrx::Direction::Forward);
        // Σ_n C[n] e^{−j2πmn/T} with every lag retained except n = 8.
        let mut c8 = CMat::zeros(3, 3);
        for s in 0..16 {
            c8 += r.column((s + 8) % 16) * r.column(s).adjoint();
        }
        c8.unscale_mut(16.0);
        for m in 0..16 {
            let mut acc = c8.map(|z| z * C64::from_polar(1.0, -PI * m as f64));
            for (n, cn) in c.c_r.iter().enumerate() {
                acc += cn.map(|z| z * C64::from_polar(1.0, -2.0 * PI * (m * n) as f64 / 16.0));
            }
            let direct = rf.column(m) * rf.column(m).adjoint();
            assert!((acc - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn arcsine_values() {
        let c = CMat::from_row_slice(1, 2, &[C64::new(1.0, 0.0), C64::new(0.5, -0.5)]);
        let r = arcsine_forward(&c).unwrap();
        assert!((r[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((r[(0, 1)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!((r[(0, 1)].im + 1.0 / 3.0).abs() < 1e-15);
        assert!((arcsine_inverse(&r) - c).norm() < 1e-15);
        let bad = CMat::from_element(1, 1, C64::new(1.1, 0.0));
        assert!(arcsine_forward(&bad).is_err());
    }

    #[test]
    fn delta_lag_gives_power_profile() {
        let g = ArrayGeometry::ula(3, 0.5, 60.5e9, 1e6);
        let d = build_dictionary(&g, 5, 0).unwrap();
        let mut c_r = vec![CMat::zeros(3, 3); 5];
        c_r[0] = CMat::identity(3, 3);
        let qc = QuantizedCovariance { c_r, max_lag: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = CMat::from_fn(3, 1, |_, _| complex_normal(&mut rng, 1.0));
        let phi = estep_cov(&qc, &s, &d, 0.7).unwrap();
        let dvec = received_power(&s, &d, 0.7);
        let expected = CMat::from_diagonal(&nalgebra::DVector::from_iterator(3, dvec.iter().map(|v| C64::new(*v, 0.0))));
        for p in &phi {
            assert!((p - &expected).norm() < 1e-12);
        }
        let zero = estep_cov(&qc, &CMat::zeros(3, 1), &d, 0.7).unwrap();
        assert!((&zero[0] - CMat::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn em_gradient_matches_ideal_with_plugin() {
        let g = ArrayGeometry::ula(4, 0.5, 60.5e9, 7e9);
        let d = build_dictionary(&g, 6, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = CMat::from_fn(4, 6, |_, _| complex_normal(&mut rng, 1.0));
        let s = CMat::from_fn(8, 2, |_, _| complex_normal(&mut rng, 0.3));
        let phi: Vec<CMat> = y.column_iter().map(|c| &c * c.adjoint()).collect();
        let rx = RxBlock {
            y_freq: Some(y),
            r_time: None,
            r_freq: None,
            rho: 0.8,
            dims: BlockDims { n: 4, k: 2, t: 6, max_delay: 1 },
        };
        let a = em_gradient(&s, &phi, &d, 0.8).unwrap();
        let b = crate::blind_ideal::gradient(&s, &rx, &d, 0.8).unwrap();
        assert!((a - b).norm() < 1e-10);
        let z = em_gradient(&CMat::zeros(8, 2), &phi, &d, 0.8).unwrap();
        assert!(max_abs(&z) == 0.0);
    }

    #[test]
    fn m_step_never_decreases_surrogate() {
        let g = ArrayGeometry::ula(8, 0.5, 60.5e9, 1e6);
        let d = build_dictionary(&g, 200, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = crate::channel::draw_channel(&d, 2, 2, true, &mut rng).unwrap();
        let x = crate::txrx::draw_symbols(2, 200, 0.5, crate::SymbolDistribution::Gaussian, &mut rng).unwrap();
        let rx = quantize_onebit(&crate::txrx::simulate_rx(&ch.transfer(&d), &x, 0, &mut rng).unwrap()).unwrap();
        let c_r = sample_quantized_autocorr(rx.r_time().unwrap(), 0).unwrap();
        let config = SolverConfig::with_lambda(8.0);
        let mut s = onebit_subspace_init(&rx, &d, 0.5, 2).unwrap().coefficients;
        let mut mu = 1.0;
        for _ in 0..30 {
            let (step, before) = em_iteration(&c_r, &s, &d, 0.5, mu, &config).unwrap();
            assert!(step.objective >= before);
            s = step.s;
            mu = step.mu;
        }
    }

    #[test]
    fn init_scaling_ratio() {
        let g = ArrayGeometry::ula(4, 0.5, 60.5e9, 1e6);
        let d = build_dictionary(&g, 50, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = random_signs(4, 50, &mut rng);
        let dims = BlockDims { n: 4, k: 1, t: 50, max_delay: 0 };
        let rx1 = RxBlock::from_onebit(r, 0.5, dims).unwrap();
        let rx2 = RxBlock {
            y_freq: rx1.r_freq.clone(),
            ..rx1.clone()
        };
        let a = onebit_subspace_init(&rx1, &d, 0.5, 1).unwrap();
        let b = crate::blind_ideal::subspace_init(&rx2, &d, 0.5, 1).unwrap();
        if max_abs(&b.coefficients) > 0.0 {
            let ratio = a.coefficients.norm() / b.coefficients.norm();
            assert!((ratio - FRAC_PI_2.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn large_lambda_zero() {
        let g = ArrayGeometry::ula(4, 0.5, 60.5e9, 1e6);
        let d = build_dictionary(&g, 64, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = random_signs(4, 64, &mut rng);
        let rx = RxBlock::from_onebit(r, 0.5, BlockDims { n: 4, k: 2, t: 64, max_delay: 0 }).unwrap();
        let est = estimate_blind_onebit(&rx, &d, 0.5, &SolverConfig::with_lambda(1e6)).unwrap();
        assert!(max_abs(&est.coefficients) == 0.0);
    }

    #[test]
    fn enumeration_identity_identity_matrices() {
        let i = CMat::identity(2, 2);
        let (lhs, rhs) = sign_enumeration_identity(&i, &i).unwrap();
        assert!((lhs - C64::new(4.0, 0.0)).norm() < 1e-12);
        assert!((rhs - C64::new(4.0, 0.0)).norm() < 1e-12);
        assert!(sign_enumeration_identity(&CMat::identity(9, 9), &CMat::identity(9, 9)).is_err());
    }

    #[test]
    fn firstorder_at_zero_rho() {
        let r = sign_vectors(3).unwrap()[5].clone();
        let h = CMat::from_element(3, 2, C64::new(0.3, -0.2));
        assert!((onebit_prob_firstorder(&r, &h, 0.0).unwrap() - 1.0 / 64.0).abs() < 1e-15);
    }
}
