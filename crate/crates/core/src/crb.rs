//! Clairvoyant Fisher information for the sparse coefficients and the
//! `η_CRB` predictor derived from it.
//!
//! Rows and columns are indexed user-major: coefficient `i` of user `k`
//! sits at `k·N(T_D+1) + i`. Entry `((k,i),(k',i'))` is
//! `E[∂ln p/∂s*_{k,i} · ∂ln p/∂s_{k',i'}]`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channel::{unitary_dft_matrix, Dictionary};
use crate::error::{invalid, mismatch};
use crate::linalg::{hpd_inverse, nondiag, trace};
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherKind {
    IdealExact,
    IdealLowSnr,
    OneBitLowSnrFlat,
    OneBitLowSnrWideband,
}

impl FisherKind {
    pub fn label(self) -> &'static str {
        match self {
            FisherKind::IdealExact => "ideal_exact",
            FisherKind::IdealLowSnr => "ideal_low_snr",
            FisherKind::OneBitLowSnrFlat => "onebit_low_snr_flat",
            FisherKind::OneBitLowSnrWideband => "onebit_low_snr_wideband",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub j: CMat,
    /// Global indices `k·N(T_D+1) + i` of the rows, ascending.
    pub support: Vec<usize>,
    pub kind: FisherKind,
    /// `N(T_D+1)`.
    pub n_coeffs: usize,
    pub n_users: usize,
}

impl FisherMatrix {
    pub fn is_reduced(&self) -> bool {
        self.support.len() < self.n_coeffs * self.n_users
    }

    /// `(user, coefficient)` of row `r`.
    pub fn entry(&self, r: usize) -> (usize, usize) {
        let g = self.support[r];
        (g / self.n_coeffs, g % self.n_coeffs)
    }
}

/// Support `{k·N(T_D+1) + i | s_{k,i} ≠ 0}` of a coefficient matrix.
pub fn support_of(s: &CMat) -> Vec<usize> {
    let nc = s.nrows();
    let mut out = Vec::new();
    for k in 0..s.ncols() {
        for i in 0..nc {
            if s[(i, k)] != C64::new(0.0, 0.0) {
                out.push(k * nc + i);
            }
        }
    }
    out
}

fn check_channel(h: &[CMat], dictionary: &Dictionary, rho: f64) -> Result<usize> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho must be positive"));
    }
    if h.len() != dictionary.n_freqs() {
        return Err(mismatch(format!("{} channel bins for {} dictionary bins", h.len(), dictionary.n_freqs())));
    }
    let n = dictionary.n_antennas();
    let k = h.first().map(|m| m.ncols()).unwrap_or(0);
    if k == 0 || h.iter().any(|m| m.nrows() != n || m.ncols() != k) {
        return Err(mismatch("channel matrices must all be N × K with K ≥ 1"));
    }
    Ok(k)
}

fn full_support(k: usize, nc: usize) -> Vec<usize> {
    (0..k * nc).collect()
}

fn check_support(support: &[usize], k: usize, nc: usize) -> Result<()> {
    if support.is_empty() {
        return Err(invalid("empty support"));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) || support.iter().any(|&g| g >= k * nc) {
        return Err(invalid("support must be strictly increasing and in range"));
    }
    Ok(())
}

/// Columns `cols` of `F_m`.
fn dictionary_columns(dictionary: &Dictionary, m: usize, cols: &[usize]) -> CMat {
    let n = dictionary.n_antennas();
    let a = dictionary.array(m);
    let mut f = CMat::zeros(n, cols.len());
    for (j, &c) in cols.iter().enumerate() {
        let p = dictionary.delay_phase(m, c / n);
        f.set_column(j, &(a.column(c % n) * p));
    }
    f
}

/// Distinct coefficient indices of a support and, per row, the position of
/// its coefficient in that list.
fn coefficient_map(support: &[usize], nc: usize) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut cols: Vec<usize> = support.iter().map(|g| g % nc).collect();
    cols.sort_unstable();
    cols.dedup();
    let rows = support
        .iter()
        .map(|g| (g / nc, cols.binary_search(&(g % nc)).unwrap()))
        .collect();
    (cols, rows)
}

/// Bins grouped by identical `(F_m, H[m])`, as `(representative, count)`.
fn bin_groups(h: &[CMat], dictionary: &Dictionary) -> Vec<(usize, f64)> {
    if dictionary.is_flat() && h.iter().all(|m| m == &h[0]) {
        vec![(0, h.len() as f64)]
    } else {
        (0..h.len()).map(|m| (m, 1.0)).collect()
    }
}

/// `Σ_m ρ² conj(H^H W H) ⊗ F^H W F` restricted to `support`, with
/// `W = Q_m^{-1}` or `I`.
fn ideal_on(h: &[CMat], dictionary: &Dictionary, rho: f64, support: &[usize], exact: bool) -> Result<CMat> {
    let nc = dictionary.n_coeffs();
    let (cols, rows) = coefficient_map(support, nc);
    let n = dictionary.n_antennas();
    let mut j = CMat::zeros(support.len(), support.len());
    for (m, count) in bin_groups(h, dictionary) {
        let hm = &h[m];
        let f = dictionary_columns(dictionary, m, &cols);
        let (a, b) = if exact {
            let q = (hm * hm.adjoint()).scale(rho) + CMat::identity(n, n);
            let qinv = hpd_inverse(&q).ok_or(Error::NonFinite("channel covariance"))?;
            (hm.adjoint() * &qinv * hm, f.adjoint() * &qinv * &f)
        } else {
            (hm.ad_mul(hm), f.ad_mul(&f))
        };
        let w = rho * rho * count;
        for (r, &(k, p)) in rows.iter().enumerate() {
            for (c, &(k2, p2)) in rows.iter().enumerate() {
                j[(r, c)] += a[(k, k2)].conj() * b[(p, p2)] * w;
            }
        }
    }
    Ok(j)
}

/// Exact Fisher information with `Q_m = ρH[m]H[m]^H + I`.
pub fn fisher_ideal(h: &[CMat], dictionary: &Dictionary, rho: f64) -> Result<FisherMatrix> {
    let k = check_channel(h, dictionary, rho)?;
    let support = full_support(k, dictionary.n_coeffs());
    fisher_ideal_on(h, dictionary, rho, support)
}

/// [`fisher_ideal`] evaluated only on the rows and columns in `support`.
pub fn fisher_ideal_on(h: &[CMat], dictionary: &Dictionary, rho: f64, support: Vec<usize>) -> Result<FisherMatrix> {
    let k = check_channel(h, dictionary, rho)?;
    check_support(&support, k, dictionary.n_coeffs())?;
    Ok(FisherMatrix {
        j: ideal_on(h, dictionary, rho, &support, true)?,
        support,
        kind: FisherKind::IdealExact,
        n_coeffs: dictionary.n_coeffs(),
        n_users: k,
    })
}

/// Low-SNR approximation `ρ² Σ_m conj(H^H H) ⊗ F^H F`.
pub fn fisher_ideal_lowsnr(h: &[CMat], dictionary: &Dictionary, rho: f64) -> Result<FisherMatrix> {
    let k = check_channel(h, dictionary, rho)?;
    let support = full_support(k, dictionary.n_coeffs());
    Ok(FisherMatrix {
        j: ideal_on(h, dictionary, rho, &support, false)?,
        support,
        kind: FisherKind::IdealLowSnr,
        n_coeffs: dictionary.n_coeffs(),
        n_users: k,
    })
}

/// Rows and columns of `fisher` on the support of `s_true`.
pub fn reduce_support(fisher: &FisherMatrix, s_true: &CMat) -> Result<FisherMatrix> {
    if s_true.nrows() != fisher.n_coeffs || s_true.ncols() != fisher.n_users {
        return Err(mismatch("S does not match the Fisher layout"));
    }
    let wanted = support_of(s_true);
    if wanted.is_empty() {
        return Err(invalid("empty support"));
    }
    let pos: Vec<usize> = wanted
        .iter()
        .map(|g| {
            fisher
                .support
                .binary_search(g)
                .map_err(|_| invalid("support not contained in the Fisher matrix"))
        })
        .collect::<Result<_>>()?;
    let j = CMat::from_fn(pos.len(), pos.len(), |r, c| fisher.j[(pos[r], pos[c])]);
    Ok(FisherMatrix {
        j,
        support: wanted,
        kind: fisher.kind,
        n_coeffs: fisher.n_coeffs,
        n_users: fisher.n_users,
    })
}

fn onebit_flat_on(h: &CMat, dictionary: &Dictionary, rho: f64, t: f64, support: &[usize]) -> CMat {
    let nc = dictionary.n_coeffs();
    let (cols, rows) = coefficient_map(support, nc);
    let f = dictionary_columns(dictionary, 0, &cols);
    let hh = h.ad_mul(h);
    let ff = f.ad_mul(&f);
    let scale = t * (2.0 * rho / PI).powi(2);
    CMat::from_fn(support.len(), support.len(), |r, c| {
        let (k, p) = rows[r];
        let (k2, p2) = rows[c];
        let diag: C64 = (0..h.nrows())
            .map(|a| f[(a, p)].conj() * f[(a, p2)] * h[(a, k)] * h[(a, k2)].conj())
            .sum();
        (hh[(k, k2)].conj() * ff[(p, p2)] - diag) * scale
    })
}

/// Low-SNR one-bit Fisher information for a frequency-flat dictionary,
/// `T(2ρ/π)²[conj(H^H H) ⊗ F^H F − (I ⊗ F^H) B (I ⊗ F)]` with
/// `B_{k,k'} = diag(h_k h_{k'}^H)`.
pub fn fisher_onebit_flat(h: &[CMat], dictionary: &Dictionary, rho: f64) -> Result<FisherMatrix> {
    let k = check_channel(h, dictionary, rho)?;
    fisher_onebit_flat_on(h, dictionary, rho, full_support(k, dictionary.n_coeffs()))
}

pub fn fisher_onebit_flat_on(h: &[CMat], dictionary: &Dictionary, rho: f64, support: Vec<usize>) -> Result<FisherMatrix> {
    let k = check_channel(h, dictionary, rho)?;
    if !dictionary.is_flat() {
        return Err(Error::Unsupported("flat one-bit Fisher needs a frequency-flat dictionary".into()));
    }
    if h.iter().any(|m| m != &h[0]) {
        return Err(Error::Unsupported("flat one-bit Fisher needs a frequency-flat channel".into()));
    }
    check_support(&support, k, dictionary.n_coeffs())?;
    Ok(FisherMatrix {
        j: onebit_flat_on(&h[0], dictionary, rho, h.len() as f64, &support),
        support,
        kind: FisherKind::OneBitLowSnrFlat,
        n_coeffs: dictionary.n_coeffs(),
        n_users: k,
    })
}

/// Low-SNR one-bit Fisher information for a frequency-selective dictionary,
/// `(2ρ/π)²[Σ_m conj(H_m^H H_m) ⊗ F_m^H F_m − T·VV^H]` with
/// `V_{(k,i),a} = (1/T)Σ_m H_m[a,k] conj(F_m[a,i])`.
///
/// The subtracted term collects the diagonal of the time-domain sign
/// covariance, which is the same at every time instant.
pub fn fisher_onebit_wideband(h: &[CMat], dictionary: &Dictionary, rho: f64) -> Result<FisherMatrix> {
    let k = check_channel(h, dictionary, rho)?;
    fisher_onebit_wideband_on(h, dictionary, rho, full_support(k, dictionary.n_coeffs()))
}

pub fn fisher_onebit_wideband_on(
    h: &[CMat],
    dictionary: &Dictionary,
    rho: f64,
    support: Vec<usize>,
) -> Result<FisherMatrix> {
    let k = check_channel(h, dictionary, rho)?;
    let nc = dictionary.n_coeffs();
    check_support(&support, k, nc)?;
    let (cols, rows) = coefficient_map(&support, nc);
    let n = dictionary.n_antennas();
    let t = h.len();
    let s = support.len();
    let mut first = CMat::zeros(s, s);
    let mut v = CMat::zeros(s, n);
    for (m, hm) in h.iter().enumerate() {
        let f = dictionary_columns(dictionary, m, &cols);
        let hh = hm.ad_mul(hm);
        let ff = f.ad_mul(&f);
        for (r, &(k1, p1)) in rows.iter().enumerate() {
            for (c, &(k2, p2)) in rows.iter().enumerate() {
                first[(r, c)] += hh[(k1, k2)].conj() * ff[(p1, p2)];
            }
            for a in 0..n {
                v[(r, a)] += hm[(a, k1)] * f[(a, p1)].conj();
            }
        }
    }
    v.unscale_mut(t as f64);
    let j = (first - (&v * v.adjoint()).scale(t as f64)).scale((2.0 * rho / PI).powi(2));
    Ok(FisherMatrix {
        j,
        support,
        kind: FisherKind::OneBitLowSnrWideband,
        n_coeffs: nc,
        n_users: k,
    })
}

/// Largest `N·T` accepted by [`fisher_onebit_wideband_trace`].
pub const TRACE_FORM_MAX_NT: usize = 2048;

/// Entrywise evaluation of the one-bit wideband Fisher information through
/// `(2ρ/π)² tr(Ū^H H̄_k Ē_i^H Ū nondiag(Ū^H Ē_{i'} H̄_{k'}^H Ū))` with
/// `Ū = U_T ⊗ I_N`. Materializes `NT × NT` matrices.
pub fn fisher_onebit_wideband_trace(h: &[CMat], dictionary: &Dictionary, rho: f64) -> Result<FisherMatrix> {
    let k = check_channel(h, dictionary, rho)?;
    let n = dictionary.n_antennas();
    let t = h.len();
    if n * t > TRACE_FORM_MAX_NT {
        return Err(Error::TooLarge(format!("N·T = {} exceeds {}", n * t, TRACE_FORM_MAX_NT)));
    }
    let nc = dictionary.n_coeffs();
    let u = crate::linalg::kron(&unitary_dft_matrix(t), &CMat::identity(n, n));
    let f: Vec<CMat> = (0..t).map(|m| dictionary.matrix(m)).collect();
    // Ū^H blockdiag(h_k[m] f_{i,m}^H) Ū for every (k, i).
    let blocks: Vec<CMat> = (0..k * nc)
        .map(|g| {
            let (kk, i) = (g / nc, g % nc);
            let mut a = CMat::zeros(n * t, n * t);
            for m in 0..t {
                let outer = h[m].column(kk) * f[m].column(i).adjoint();
                a.view_mut((m * n, m * n), (n, n)).copy_from(&outer);
            }
            u.adjoint() * a * &u
        })
        .collect();
    let scale = (2.0 * rho / PI).powi(2);
    let j = CMat::from_fn(k * nc, k * nc, |r, c| {
        // Ū^H Ē_{i'} H̄_{k'}^H Ū is the adjoint of the block for (k', i').
        let b = blocks[c].adjoint();
        trace(&(&blocks[r] * nondiag(&b))) * scale
    });
    Ok(FisherMatrix {
        j,
        support: full_support(k, nc),
        kind: FisherKind::OneBitLowSnrWideband,
        n_coeffs: nc,
        n_users: k,
    })
}

/// Fisher information of `kind` on the support of `s`, for the channel
/// `H[m] = F_m S`.
pub fn fisher_on_support(kind: FisherKind, s: &CMat, dictionary: &Dictionary, rho: f64) -> Result<FisherMatrix> {
    let h = crate::channel::channel_transfer(s, dictionary)?;
    let support = support_of(s);
    if support.is_empty() {
        return Err(invalid("empty support"));
    }
    match kind {
        FisherKind::IdealExact => fisher_ideal_on(&h, dictionary, rho, support),
        FisherKind::IdealLowSnr => {
            let k = check_channel(&h, dictionary, rho)?;
            Ok(FisherMatrix {
                j: ideal_on(&h, dictionary, rho, &support, false)?,
                support,
                kind,
                n_coeffs: dictionary.n_coeffs(),
                n_users: k,
            })
        }
        FisherKind::OneBitLowSnrFlat => fisher_onebit_flat_on(&h, dictionary, rho, support),
        FisherKind::OneBitLowSnrWideband => fisher_onebit_wideband_on(&h, dictionary, rho, support),
    }
}

/// Per-user `η_CRB` together with numerical diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaCrb {
    pub eta: Vec<f64>,
    /// `J̃` could not be inverted; every `η` is reported as 0.
    pub singular: bool,
    /// Condition number above [`CONDITION_LIMIT`].
    pub unreliable: bool,
    pub condition: f64,
}

pub const CONDITION_LIMIT: f64 = 1e12;

/// `η_CRB,k = 1/√(1 + Σ_m tr(F_mΠ_k J̃^{-1} Π_k^H F_m^H) / Σ_m ‖h_k[m]‖²)`.
pub fn eta_crb(fisher: &FisherMatrix, h: &[CMat], dictionary: &Dictionary) -> Result<EtaCrb> {
    let k = fisher.n_users;
    if h.len() != dictionary.n_freqs() || h.iter().any(|m| m.ncols() != k) {
        return Err(mismatch("channel does not match the Fisher layout"));
    }
    let herm = (&fisher.j + fisher.j.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let Some(chol) = Cholesky::new(herm).filter(|_| min > 0.0) else {
        return Ok(EtaCrb {
            eta: vec![0.0; k],
            singular: true,
            unreliable: true,
            condition,
        });
    };
    let cov = chol.inverse();
    let nc = fisher.n_coeffs;
    let mut eta = Vec::with_capacity(k);
    for user in 0..k {
        let rows: Vec<usize> = (0..fisher.support.len())
            .filter(|&r| fisher.support[r] / nc == user)
            .collect();
        let signal: f64 = h.iter().map(|m| m.column(user).norm_squared()).sum();
        if signal == 0.0 {
            return Err(invalid(format!("user {user} has a zero channel")));
        }
        let cols: Vec<usize> = rows.iter().map(|&r| fisher.support[r] % nc).collect();
        let ckk = CMat::from_fn(rows.len(), rows.len(), |a, b| cov[(rows[a], rows[b])]);
        let mut error = 0.0;
        if !rows.is_empty() {
            for m in 0..dictionary.n_freqs() {
                let f = dictionary_columns(dictionary, m, &cols);
                error += trace(&(&f * &ckk * f.adjoint())).re;
            }
        }
        eta.push(1.0 / (1.0 + error / signal).sqrt());
    }
    Ok(EtaCrb {
        eta,
        singular: false,
        unreliable: condition > CONDITION_LIMIT,
        condition,
    })
}
