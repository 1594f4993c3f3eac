//! Performance metric, pilot-based baselines and the Monte-Carlo runner.

use std::f64::consts::PI;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blind_ideal::{estimate_blind_from, subspace_from_matrix, subspace_init};
use crate::blind_onebit::{estimate_blind_onebit_from, onebit_subspace_init};
use crate::channel::{build_dictionary, channel_transfer, draw_channel, Dictionary};
use crate::config::{CrbKind, ExperimentConfig, Method};
use crate::crb::{eta_crb, fisher_on_support, EtaCrb, FisherKind};
use crate::error::{invalid, mismatch};
use crate::linalg::{all_finite, hermitian_eig_desc, hpd_inverse_logdet, polar_unitary};
use crate::prox::{maximize_l1, SmoothObjective};
use crate::txrx::{draw_symbols, quantize_onebit, simulate_rx};
use crate::{CMat, Error, Result, SolverConfig, SparseEstimate, C64};

/// Per-user correlation after ambiguity resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaResult {
    pub eta_per_user: Vec<f64>,
    /// Delay `d` such that `ĥ_k[m] ≈ h_k[m] e^{−j2πdm/T}`.
    pub best_delay_shift: Vec<i64>,
    /// `permutation[k]` is the estimate column assigned to true user `k`.
    pub permutation: Vec<usize>,
    pub method_label: String,
    /// Users whose assigned estimate is identically zero.
    pub zero_estimate: Vec<bool>,
}

fn check_pair(h_hat: &[CMat], h_true: &[CMat]) -> Result<(usize, usize)> {
    if h_hat.len() != h_true.len() || h_true.is_empty() {
        return Err(mismatch("estimate and channel must cover the same non-empty set of bins"));
    }
    let (n, k) = h_true[0].shape();
    if h_true.iter().chain(h_hat.iter()).any(|h| h.shape() != (n, k)) {
        return Err(mismatch("estimate and channel matrices must all be N × K"));
    }
    if h_hat.iter().any(|h| !all_finite(h)) {
        return Err(Error::NonFinite("channel estimate"));
    }
    Ok((n, k))
}

/// `η` between every true user (rows) and every estimated column
/// (columns), with the maximizing delay shift.
pub fn eta_matrix(h_hat: &[CMat], h_true: &[CMat], t_d: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<i64>>)> {
    let (_, k) = check_pair(h_hat, h_true)?;
    let t = h_true.len();
    let power = |h: &[CMat], j: usize| h.iter().map(|m| m.column(j).norm_squared()).sum::<f64>();
    let p_true: Vec<f64> = (0..k).map(|j| power(h_true, j)).collect();
    let p_hat: Vec<f64> = (0..k).map(|j| power(h_hat, j)).collect();
    let mut eta = vec![vec![0.0; k]; k];
    let mut shift = vec![vec![0i64; k]; k];
    let t_d = t_d as i64;
    for a in 0..k {
        for b in 0..k {
            let denom = (p_true[a] * p_hat[b]).sqrt();
            if denom == 0.0 {
                continue;
            }
            let c: Vec<C64> = (0..t).map(|m| h_true[m].column(a).dotc(&h_hat[m].column(b))).collect();
            let mut best = (-1.0, 0i64);
            for d in -t_d..=t_d {
                let s: C64 = c
                    .iter()
                    .enumerate()
                    .map(|(m, z)| z * C64::from_polar(1.0, 2.0 * PI * ((d * m as i64).rem_euclid(t as i64)) as f64 / t as f64))
                    .sum();
                let v = s.norm() / denom;
                if v > best.0 {
                    best = (v, d);
                }
            }
            eta[a][b] = best.0.min(1.0);
            shift[a][b] = best.1;
        }
    }
    Ok((eta, shift))
}

/// `η_k` with estimate column `k` assigned to user `k`.
pub fn eta_metric(h_hat: &[CMat], h_true: &[CMat], t_d: usize) -> Result<EtaResult> {
    let (eta, shift) = eta_matrix(h_hat, h_true, t_d)?;
    let k = eta.len();
    Ok(build_result(h_hat, &eta, &shift, (0..k).collect(), ""))
}

fn build_result(h_hat: &[CMat], eta: &[Vec<f64>], shift: &[Vec<i64>], perm: Vec<usize>, label: &str) -> EtaResult {
    let zero = perm
        .iter()
        .map(|&j| h_hat.iter().all(|m| m.column(j).iter().all(|z| z.norm() == 0.0)))
        .collect();
    EtaResult {
        eta_per_user: perm.iter().enumerate().map(|(a, &b)| eta[a][b]).collect(),
        best_delay_shift: perm.iter().enumerate().map(|(a, &b)| shift[a][b]).collect(),
        permutation: perm,
        method_label: label.to_string(),
        zero_estimate: zero,
    }
}

/// Assignment of estimated columns to users maximizing `Σ_k η_k`.
pub fn resolve_permutation(h_hat: &[CMat], h_true: &[CMat], t_d: usize) -> Result<EtaResult> {
    let (eta, shift) = eta_matrix(h_hat, h_true, t_d)?;
    let perm = best_assignment(&eta);
    Ok(build_result(h_hat, &eta, &shift, perm, ""))
}

/// Exhaustive search up to 8 users, Hungarian algorithm beyond.
pub fn best_assignment(weights: &[Vec<f64>]) -> Vec<usize> {
    if weights.len() <= 8 {
        assignment_exhaustive(weights)
    } else {
        assignment_hungarian(weights)
    }
}

/// Maximum-weight assignment by enumeration; ties keep the
/// lexicographically first permutation.
pub fn assignment_exhaustive(weights: &[Vec<f64>]) -> Vec<usize> {
    let k = weights.len();
    let mut best = (f64::NEG_INFINITY, (0..k).collect::<Vec<_>>());
    for perm in (0..k).permutations(k) {
        let score: f64 = perm.iter().enumerate().map(|(a, &b)| weights[a][b]).sum();
        if score > best.0 {
            best = (score, perm);
        }
    }
    best.1
}

/// Maximum-weight assignment with the O(K³) Hungarian method.
pub fn assignment_hungarian(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let max = weights.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cost = |i: usize, j: usize| max - weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Empirical `Pr(η ≥ t)` on a threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CcdfTable {
    pub thresholds: Vec<f64>,
    pub prob: Vec<f64>,
    pub n_samples: usize,
}

/// `points` thresholds evenly spaced on `[0, 1]`.
pub fn eta_grid(points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![0.0];
    }
    (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
}

pub fn ccdf(values: &[f64], grid: &[f64]) -> Result<CcdfTable> {
    if grid.is_empty() {
        return Err(invalid("empty threshold grid"));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(invalid("thresholds must be finite"));
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let prob = grid
        .iter()
        .map(|&t| {
            if n == 0 {
                return 0.0;
            }
            let below = sorted.partition_point(|&v| v < t);
            (n - below) as f64 / n as f64
        })
        .collect();
    Ok(CcdfTable {
        thresholds: grid.to_vec(),
        prob,
        n_samples: n,
    })
}

/// `K × T_T` pilots `x_k[t] = √ρ e^{j2πkt/T_T}`, mutually orthogonal.
pub fn orthogonal_pilots(k: usize, t_t: usize, rho: f64) -> Result<CMat> {
    if t_t < k {
        return Err(invalid(format!("{t_t} pilot symbols cannot separate {k} users")));
    }
    let amp = rho.sqrt();
    Ok(CMat::from_fn(k, t_t, |u, t| {
        C64::from_polar(amp, 2.0 * PI * ((u * t) % t_t) as f64 / t_t as f64)
    }))
}

fn pilot_rank_deficient(x_t: &CMat) -> bool {
    let (vals, _) = hermitian_eig_desc(&(x_t * x_t.adjoint()));
    let max = vals.first().cloned().unwrap_or(0.0);
    vals.last().map_or(true, |&v| v <= 1e-10 * max.max(f64::MIN_POSITIVE))
}

struct PilotLs<'a> {
    f: CMat,
    x: &'a CMat,
    y: &'a CMat,
}

impl SmoothObjective for PilotLs<'_> {
    fn value(&self, s: &CMat) -> f64 {
        -(&self.f * s * self.x - self.y).norm_squared()
    }

    fn descent(&self, s: &CMat) -> CMat {
        let r = &self.f * s * self.x - self.y;
        self.f.adjoint() * r * self.x.adjoint()
    }
}

/// Sparse pilot-only estimate `argmin_S ‖F S X_T − Y_T‖² + λ‖S‖_{1,1}`
/// (frequency-flat dictionaries only). The trace holds the maximized
/// objective `−‖F S X_T − Y_T‖² − λ‖S‖_{1,1}`.
pub fn pilot_ls_estimate(y_t: &CMat, x_t: &CMat, dictionary: &Dictionary, config: &SolverConfig) -> Result<SparseEstimate> {
    config.validate()?;
    if !dictionary.is_flat() {
        return Err(Error::Unsupported("pilot least squares needs a frequency-flat dictionary".into()));
    }
    if y_t.nrows() != dictionary.n_antennas() || y_t.ncols() != x_t.ncols() {
        return Err(mismatch("pilot observations must be N × T_T"));
    }
    if !all_finite(y_t) || !all_finite(x_t) {
        return Err(Error::NonFinite("pilot block"));
    }
    let objective = PilotLs {
        f: dictionary.matrix(0),
        x: x_t,
        y: y_t,
    };
    let mut est = maximize_l1(&objective, CMat::zeros(dictionary.n_coeffs(), x_t.nrows()), config);
    est.rank_deficient = pilot_rank_deficient(x_t);
    Ok(est)
}

/// Semi-blind likelihood over an unstructured channel `H`,
/// `−tr(Y_D^H Q^{-1} Y_D) − T_D log|Q| − ‖H X_T − Y_T‖²` with
/// `Q = ρHH^H + I` and `T_D` data columns.
pub struct SemiBlindObjective<'a> {
    pub y_t: &'a CMat,
    pub x_t: &'a CMat,
    /// `Y_D Y_D^H`.
    pub data_cov: CMat,
    pub n_data: usize,
    pub rho: f64,
}

impl<'a> SemiBlindObjective<'a> {
    pub fn new(y_t: &'a CMat, y_d: &CMat, x_t: &'a CMat, rho: f64) -> Self {
        Self {
            y_t,
            x_t,
            data_cov: y_d * y_d.adjoint(),
            n_data: y_d.ncols(),
            rho,
        }
    }

    fn q_inverse(&self, h: &CMat) -> Option<(CMat, f64)> {
        let n = h.nrows();
        hpd_inverse_logdet(&((h * h.adjoint()).scale(self.rho) + CMat::identity(n, n)))
    }

    fn pilot_residual(&self, h: &CMat) -> Option<CMat> {
        (self.x_t.ncols() > 0).then(|| h * self.x_t - self.y_t)
    }
}

impl SmoothObjective for SemiBlindObjective<'_> {
    fn value(&self, h: &CMat) -> f64 {
        let Some((qinv, logdet)) = self.q_inverse(h) else {
            return f64::NAN;
        };
        let data = crate::linalg::trace(&(&qinv * &self.data_cov)).re;
        let pilot = self.pilot_residual(h).map_or(0.0, |r| r.norm_squared());
        -data - self.n_data as f64 * logdet - pilot
    }

    /// `−(ρQ^{-1}RQ^{-1}H − T_D ρQ^{-1}H − (HX_T − Y_T)X_T^H)`.
    fn descent(&self, h: &CMat) -> CMat {
        let Some((qinv, _)) = self.q_inverse(h) else {
            return CMat::from_element(h.nrows(), h.ncols(), C64::new(f64::NAN, f64::NAN));
        };
        let qh = &qinv * h;
        let mut up = (&qinv * &self.data_cov * &qh).scale(self.rho) - qh.scale(self.n_data as f64 * self.rho);
        if let Some(r) = self.pilot_residual(h) {
            up -= r * self.x_t.adjoint();
        }
        -up
    }
}

#[derive(Debug, Clone)]
pub struct SemiBlindEstimate {
    pub h: CMat,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Semi-blind maximum likelihood from pilot and data columns, started at
/// the subspace solution rotated onto the pilots.
pub fn semiblind_estimate(
    y_t: &CMat,
    y_d: &CMat,
    x_t: &CMat,
    rho: f64,
    config: &SolverConfig,
) -> Result<SemiBlindEstimate> {
    config.validate()?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho must be positive"));
    }
    let n = y_d.nrows();
    let k = x_t.nrows();
    if y_t.nrows() != n || y_t.ncols() != x_t.ncols() {
        return Err(mismatch("pilot observations must be N × T_T"));
    }
    if k == 0 {
        return Err(invalid("need at least one user"));
    }
    if !all_finite(y_t) || !all_finite(y_d) || !all_finite(x_t) {
        return Err(Error::NonFinite("semi-blind block"));
    }
    let t = y_t.ncols() + y_d.ncols();
    let mut all = CMat::zeros(n, t);
    all.columns_mut(0, y_t.ncols()).copy_from(y_t);
    all.columns_mut(y_t.ncols(), y_d.ncols()).copy_from(y_d);
    let m = &all * all.adjoint() - CMat::identity(n, n).scale(t as f64);
    let h0 = subspace_from_matrix(&m, k, 1.0 / (t as f64 * rho).sqrt()).coefficients;
    let h0 = if x_t.ncols() > 0 {
        let u = polar_unitary(&(h0.adjoint() * y_t * x_t.adjoint()));
        h0 * u
    } else {
        h0
    };
    let objective = SemiBlindObjective::new(y_t, y_d, x_t, rho);
    let no_penalty = SolverConfig {
        lambda: 0.0,
        ..config.clone()
    };
    let est = maximize_l1(&objective, h0, &no_penalty);
    Ok(SemiBlindEstimate {
        h: est.coefficients,
        objective_trace: est.objective_trace,
        iterations: est.iterations,
        converged: est.converged,
    })
}

/// Pooled `η` samples and their CCDF for one method and SNR.
#[derive(Debug, Clone)]
pub struct MethodCurve {
    pub method: Method,
    pub rho_db: f64,
    /// Per-user `η`, realization-major.
    pub samples: Vec<f64>,
    pub table: CcdfTable,
    /// Realizations where the estimator returned an error.
    pub failures: usize,
}

/// `η_CRB` predictor averaged over realizations.
#[derive(Debug, Clone)]
pub struct CrbCurve {
    pub kind: CrbKind,
    pub rho_db: f64,
    /// Per-user values from realizations with an invertible `J̃`.
    pub values: Vec<f64>,
    pub eta_mean: f64,
    pub n_singular: usize,
    pub n_unreliable: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub curves: Vec<MethodCurve>,
    pub crb: Vec<CrbCurve>,
    pub n_realizations: usize,
}

impl ExperimentOutcome {
    pub fn curve(&self, method: Method, rho_db: f64) -> Option<&MethodCurve> {
        self.curves.iter().find(|c| c.method == method && c.rho_db == rho_db)
    }
}

/// Results of one realization, indexed `[rho][method]` and `[rho][kind]`.
#[derive(Debug, Clone)]
pub struct RealizationOutput {
    pub eta: Vec<Vec<Result<Vec<f64>>>>,
    pub crb: Vec<Vec<Result<EtaCrb>>>,
}

fn fisher_kind(kind: CrbKind, dictionary: &Dictionary) -> FisherKind {
    match kind {
        CrbKind::Ideal => FisherKind::IdealExact,
        CrbKind::Onebit if dictionary.is_flat() => FisherKind::OneBitLowSnrFlat,
        CrbKind::Onebit => FisherKind::OneBitLowSnrWideband,
    }
}

/// Random stream for realization `idx`.
pub fn realization_rng(master_seed: u64, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(idx as u64);
    rng
}

/// Runs every configured estimator and bound on realization `idx`.
pub fn run_realization(config: &ExperimentConfig, dictionary: &Dictionary, idx: usize) -> RealizationOutput {
    let rhos = config.rho_linear();
    let kinds = config.crb_kinds();
    let methods = &config.estimators;
    let s = &config.scenario;
    let mut rng = realization_rng(config.monte_carlo.master_seed, idx);
    let channel = match draw_channel(dictionary, s.k, s.l, s.on_grid, &mut rng) {
        Ok(c) => c,
        Err(e) => {
            return RealizationOutput {
                eta: rhos.iter().map(|_| methods.iter().map(|_| Err(e.clone())).collect()).collect(),
                crb: rhos.iter().map(|_| kinds.iter().map(|_| Err(e.clone())).collect()).collect(),
            };
        }
    };
    let h_true = channel.transfer(dictionary);
    let s_grid = channel.grid_coefficients(dictionary);
    let h_grid = channel_transfer(&s_grid, dictionary);
    let mut eta = Vec::with_capacity(rhos.len());
    let mut crb = Vec::with_capacity(rhos.len());
    for (rho_index, &rho) in rhos.iter().enumerate() {
        let block = simulate_block(config, &h_true, rho, &mut rng);
        eta.push(
            methods
                .iter()
                .map(|&m| {
                    let block = block.as_ref().map_err(Clone::clone)?;
                    let h_hat = run_method(config, dictionary, m, block, rho, rho_index)?;
                    Ok(resolve_permutation(&h_hat, &h_true, s.t_d)?.eta_per_user)
                })
                .collect(),
        );
        crb.push(bounds_at(dictionary, &kinds, &s_grid, &h_grid, rho));
    }
    RealizationOutput { eta, crb }
}

fn bounds_at(
    dictionary: &Dictionary,
    kinds: &[CrbKind],
    s_grid: &CMat,
    h_grid: &Result<Vec<CMat>>,
    rho: f64,
) -> Vec<Result<EtaCrb>> {
    kinds
        .iter()
        .map(|&kind| {
            let h_grid = h_grid.as_ref().map_err(Clone::clone)?;
            let fisher = fisher_on_support(fisher_kind(kind, dictionary), s_grid, dictionary, rho)?;
            eta_crb(&fisher, h_grid, dictionary)
        })
        .collect()
}

/// `η_CRB` only, for the bounds in `kinds`. Channels match those drawn by
/// [`run_experiment`] for the same seed.
pub fn run_bounds(config: &ExperimentConfig, kinds: &[CrbKind]) -> Result<Vec<CrbCurve>> {
    config.validate()?;
    let geometry = config.geometry()?;
    let s = &config.scenario;
    let dictionary = build_dictionary(&geometry, s.t, s.t_d)?;
    let rhos = config.rho_linear();
    let per_realization: Vec<Vec<Vec<Result<EtaCrb>>>> = (0..config.monte_carlo.n_realizations)
        .into_par_iter()
        .map(|idx| {
            let mut rng = realization_rng(config.monte_carlo.master_seed, idx);
            match draw_channel(&dictionary, s.k, s.l, s.on_grid, &mut rng) {
                Ok(channel) => {
                    let s_grid = channel.grid_coefficients(&dictionary);
                    let h_grid = channel_transfer(&s_grid, &dictionary);
                    rhos.iter().map(|&rho| bounds_at(&dictionary, kinds, &s_grid, &h_grid, rho)).collect()
                }
                Err(e) => rhos.iter().map(|_| kinds.iter().map(|_| Err(e.clone())).collect()).collect(),
            }
        })
        .collect();
    let mut out = Vec::new();
    for (ri, &rdb) in config.rho_db().iter().enumerate() {
        for (ki, &kind) in kinds.iter().enumerate() {
            out.push(crb_curve(kind, rdb, per_realization.iter().map(|r| &r[ri][ki])));
        }
    }
    Ok(out)
}

fn crb_curve<'a>(kind: CrbKind, rho_db: f64, results: impl Iterator<Item = &'a Result<EtaCrb>>) -> CrbCurve {
    let mut values = Vec::new();
    let mut n_singular = 0;
    let mut n_unreliable = 0;
    for r in results {
        match r {
            Ok(e) if e.singular => n_singular += 1,
            Ok(e) => {
                if e.unreliable {
                    n_unreliable += 1;
                }
                values.extend_from_slice(&e.eta);
            }
            Err(_) => n_singular += 1,
        }
    }
    let eta_mean = if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    CrbCurve {
        kind,
        rho_db,
        values,
        eta_mean,
        n_singular,
        n_unreliable,
    }
}

/// Received block for one SNR, with pilots written into the first `T_T`
/// symbol slots when a pilot-based method is selected.
struct Block {
    rx: crate::RxBlock,
    pilots: Option<CMat>,
}

fn simulate_block(config: &ExperimentConfig, h_true: &[CMat], rho: f64, rng: &mut ChaCha8Rng) -> Result<Block> {
    let s = &config.scenario;
    let mut symbols = draw_symbols(s.k, s.t, rho, s.symbols, rng)?;
    let pilots = if config.uses_pilots() {
        let x = orthogonal_pilots(s.k, config.pilots.t_t, rho)?;
        symbols.x_freq.columns_mut(0, x.ncols()).copy_from(&x);
        Some(x)
    } else {
        None
    };
    let mut rx = simulate_rx(h_true, &symbols, s.t_d, rng)?;
    if config.uses_onebit() {
        rx = quantize_onebit(&rx)?;
    }
    Ok(Block { rx, pilots })
}

fn run_method(
    config: &ExperimentConfig,
    dictionary: &Dictionary,
    method: Method,
    block: &Block,
    rho: f64,
    rho_index: usize,
) -> Result<Vec<CMat>> {
    let k = config.scenario.k;
    let solver = config.solver.for_method_at(method, rho_index);
    let rx = &block.rx;
    let s_hat = match method {
        Method::Subspace => subspace_init(rx, dictionary, rho, k)?.coefficients,
        Method::SparseBlind => {
            let init = subspace_init(rx, dictionary, rho, k)?;
            estimate_blind_from(rx, dictionary, rho, init.coefficients, &solver)?.coefficients
        }
        Method::OnebitSubspace => onebit_subspace_init(rx, dictionary, rho, k)?.coefficients,
        Method::OnebitSparseBlind => {
            let init = onebit_subspace_init(rx, dictionary, rho, k)?;
            estimate_blind_onebit_from(rx, dictionary, rho, init.coefficients, &solver)?.coefficients
        }
        Method::PilotLs | Method::Semiblind => {
            let x_t = block.pilots.as_ref().ok_or(Error::MissingData("pilot symbols"))?;
            let y = rx.y()?;
            let t_t = x_t.ncols();
            let y_t = y.columns(0, t_t).into_owned();
            if method == Method::PilotLs {
                pilot_ls_estimate(&y_t, x_t, dictionary, &solver)?.coefficients
            } else {
                let y_d = y.columns(t_t, y.ncols() - t_t).into_owned();
                let h = semiblind_estimate(&y_t, &y_d, x_t, rho, &solver)?.h;
                return Ok(vec![h; dictionary.n_freqs()]);
            }
        }
    };
    channel_transfer(&s_hat, dictionary)
}

/// Runs the Monte-Carlo experiment described by `config` on the current
/// rayon pool. Results do not depend on the number of threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let geometry = config.geometry()?;
    let s = &config.scenario;
    let dictionary = build_dictionary(&geometry, s.t, s.t_d)?;
    if config.uses_pilots() && !dictionary.is_flat() {
        return Err(invalid("pilot-based estimators need a frequency-flat scenario"));
    }
    let n = config.monte_carlo.n_realizations;
    let outputs: Vec<RealizationOutput> = (0..n)
        .into_par_iter()
        .map(|idx| run_realization(config, &dictionary, idx))
        .collect();
    let grid = eta_grid(config.output.eta_grid_points);
    let rho_db = config.rho_db();
    let kinds = config.crb_kinds();
    let mut curves = Vec::new();
    let mut crb = Vec::new();
    for (ri, &rdb) in rho_db.iter().enumerate() {
        for (mi, &method) in config.estimators.iter().enumerate() {
            let mut samples = Vec::new();
            let mut failures = 0;
            for out in &outputs {
                match &out.eta[ri][mi] {
                    Ok(v) => samples.extend_from_slice(v),
                    Err(_) => failures += 1,
                }
            }
            let table = ccdf(&samples, &grid)?;
            curves.push(MethodCurve {
                method,
                rho_db: rdb,
                samples,
                table,
                failures,
            });
        }
        for (ki, &kind) in kinds.iter().enumerate() {
            crb.push(crb_curve(kind, rdb, outputs.iter().map(|o| &o.crb[ri][ki])));
        }
    }
    Ok(ExperimentOutcome {
        curves,
        crb,
        n_realizations: n,
    })
}

/// Median of a sample (mean of the two central values for even sizes).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_normal, ArrayGeometry};

    fn random_h(n: usize, k: usize, t: usize, seed: u64) -> Vec<CMat> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t).map(|_| CMat::from_fn(n, k, |_, _| complex_normal(&mut rng, 1.0))).collect()
    }

    #[test]
    fn identity_phase_and_shift() {
        let h = random_h(4, 2, 16, 1);
        let r = eta_metric(&h, &h, 3).unwrap();
        assert!(r.eta_per_user.iter().all(|e| (e - 1.0).abs() < 1e-12));
        assert_eq!(r.best_delay_shift, vec![0, 0]);
        let phase = C64::from_polar(1.0, 0.7);
        let hp: Vec<CMat> = h.iter().map(|m| m * phase).collect();
        assert!(eta_metric(&hp, &h, 3).unwrap().eta_per_user.iter().all(|e| (e - 1.0).abs() < 1e-12));
        for d in [-3i64, 2] {
            let hs: Vec<CMat> = h
                .iter()
                .enumerate()
                .map(|(m, x)| x * C64::from_polar(1.0, -2.0 * PI * d as f64 * m as f64 / 16.0))
                .collect();
            let r = eta_metric(&hs, &h, 3).unwrap();
            assert!(r.eta_per_user.iter().all(|e| (e - 1.0).abs() < 1e-12));
            assert_eq!(r.best_delay_shift, vec![d, d]);
        }
    }

    #[test]
    fn swapped_columns() {
        let h = random_h(4, 2, 8, 2);
        let swapped: Vec<CMat> = h.iter().map(|m| CMat::from_columns(&[m.column(1), m.column(0)])).collect();
        let r = resolve_permutation(&swapped, &h, 0).unwrap();
        assert_eq!(r.permutation, vec![1, 0]);
        assert!(r.eta_per_user.iter().all(|e| (e - 1.0).abs() < 1e-12));
        assert_eq!(resolve_permutation(&h, &h, 0).unwrap().permutation, vec![0, 1]);
    }

    #[test]
    fn zero_estimate_flagged() {
        let h = random_h(3, 1, 4, 3);
        let z = vec![CMat::zeros(3, 1); 4];
        let r = eta_metric(&z, &h, 0).unwrap();
        assert_eq!(r.eta_per_user, vec![0.0]);
        assert_eq!(r.zero_estimate, vec![true]);
    }

    #[test]
    fn hungarian_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 1..=6 {
            for _ in 0..20 {
                let w: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| complex_normal(&mut rng, 1.0).re).collect()).collect();
                let a = assignment_exhaustive(&w);
                let b = assignment_hungarian(&w);
                let score = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| w[i][j]).sum::<f64>();
                assert!((score(&a) - score(&b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ccdf_counts() {
        let values = [0.1, 0.5, 0.5, 0.9, 0.2, 0.7, 0.3, 0.95, 0.6, 0.4];
        let t = ccdf(&values, &[0.0, 0.3, 0.5, 0.95, 1.0]).unwrap();
        assert_eq!(t.prob, vec![1.0, 0.8, 0.6, 0.1, 0.0]);
        assert!(ccdf(&values, &[]).is_err());
        let c = ccdf(&[0.4; 5], &eta_grid(11)).unwrap();
        assert!(c.prob.iter().take(5).all(|&p| p == 1.0));
        assert!(c.prob.iter().skip(5).all(|&p| p == 0.0));
    }

    #[test]
    fn pilots_are_orthogonal() {
        let x = orthogonal_pilots(2, 10, 0.5).unwrap();
        let g = &x * x.adjoint();
        assert!((g - CMat::identity(2, 2).scale(5.0)).norm() < 1e-12);
        assert!(orthogonal_pilots(3, 2, 1.0).is_err());
    }

    #[test]
    fn pilot_ls_exact_without_noise() {
        let g = ArrayGeometry::ula(4, 0.5, 60.5e9, 1e6);
        let d = build_dictionary(&g, 8, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = CMat::from_fn(4, 2, |_, _| complex_normal(&mut rng, 1.0));
        let x = orthogonal_pilots(2, 4, 1.0).unwrap();
        let y = d.matrix(0) * &s * &x;
        let config = SolverConfig {
            lambda: 0.0,
            tol_rel_obj: 1e-16,
            max_iters: 5000,
            ..SolverConfig::default()
        };
        let est = pilot_ls_estimate(&y, &x, &d, &config).unwrap();
        let err = (d.matrix(0) * &est.coefficients - d.matrix(0) * &s).norm();
        assert!(err < 1e-6, "{err} after {} iterations, converged {}", est.iterations, est.converged);
        assert!(est.objective_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(!est.rank_deficient);
    }

    #[test]
    fn semiblind_reduces_to_blind_without_pilots() {
        let g = ArrayGeometry::ula(4, 0.5, 60.5e9, 1e6);
        let d = build_dictionary(&g, 6, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = CMat::from_fn(4, 6, |_, _| complex_normal(&mut rng, 1.0));
        let s = CMat::from_fn(4, 2, |_, _| complex_normal(&mut rng, 0.5));
        let h = d.matrix(0) * &s;
        let empty_y = CMat::zeros(4, 0);
        let empty_x = CMat::zeros(2, 0);
        let obj = SemiBlindObjective::new(&empty_y, &y, &empty_x, 0.4);
        let rx = crate::RxBlock {
            y_freq: Some(y.clone()),
            r_time: None,
            r_freq: None,
            rho: 0.4,
            dims: crate::BlockDims { n: 4, k: 2, t: 6, max_delay: 0 },
        };
        let l = crate::blind_ideal::loglikelihood(&s, &rx, &d, 0.4).unwrap();
        assert!((obj.value(&h) - l).abs() < 1e-10 * l.abs());
    }
}
