//! Array geometry, broadband steering vectors, the delay-angle dictionary
//! and random sparse multipath channels.
//!
//! Layout conventions:
//!
//! - Antenna `(n1, n2)` of an `N1 × N2` array is element `n1·N2 + n2`.
//! - Dictionary column `d·N + i` is angular atom `i` at delay tap `d`,
//!   `0 ≤ d ≤ T_D`.
//! - Frequency `m` has angular frequency `ω_m = 2πB(m/T − ⌊m/T + 1/2⌋)`.

use std::f64::consts::PI;

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch};
use crate::{CMat, CVec, Result, C64};

/// Ratio `√N · B / f_c` at or above which the array response is treated as
/// frequency dependent by [`ResponseModel::Auto`].
pub const WIDEBAND_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Ula,
    Upa,
}

/// How the array response depends on frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseModel {
    /// Frequency dependent iff `√max(N1,N2) · B / f_c ≥ 0.1`.
    #[default]
    Auto,
    /// Ignore the `(1 + f/f_c)` beam-squint factor.
    Flat,
    /// Always evaluate the steering vectors at every subcarrier.
    Wideband,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub kind: ArrayKind,
    pub n1: usize,
    pub n2: usize,
    /// Element spacing in carrier wavelengths.
    pub spacing: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub response: ResponseModel,
}

impl ArrayGeometry {
    pub fn ula(n: usize, spacing: f64, carrier_hz: f64, bandwidth_hz: f64) -> Self {
        Self {
            kind: ArrayKind::Ula,
            n1: n,
            n2: 1,
            spacing,
            carrier_hz,
            bandwidth_hz,
            response: ResponseModel::Auto,
        }
    }

    pub fn upa(n1: usize, n2: usize, spacing: f64, carrier_hz: f64, bandwidth_hz: f64) -> Self {
        Self {
            kind: ArrayKind::Upa,
            n1,
            n2,
            spacing,
            carrier_hz,
            bandwidth_hz,
            response: ResponseModel::Auto,
        }
    }

    pub fn with_response(mut self, response: ResponseModel) -> Self {
        self.response = response;
        self
    }

    pub fn n_antennas(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(invalid("array dimensions must be positive"));
        }
        if self.kind == ArrayKind::Ula && self.n2 != 1 {
            return Err(invalid("a ULA has n2 = 1"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(invalid("element spacing must be positive"));
        }
        if !(self.carrier_hz > 0.0 && self.bandwidth_hz > 0.0) {
            return Err(invalid("carrier and bandwidth must be positive"));
        }
        if self.bandwidth_hz > self.carrier_hz {
            return Err(invalid("bandwidth exceeds carrier frequency"));
        }
        Ok(())
    }

    /// Whether the array response is reused across subcarriers.
    pub fn is_frequency_flat(&self) -> bool {
        match self.response {
            ResponseModel::Flat => true,
            ResponseModel::Wideband => false,
            ResponseModel::Auto => {
                let n = self.n1.max(self.n2) as f64;
                n.sqrt() * self.bandwidth_hz / self.carrier_hz < WIDEBAND_THRESHOLD
            }
        }
    }

    /// Spatial frequencies `(u1, u2)` seen by the array for a plane wave from
    /// `(θ, φ)`. A ULA only sees `sin θ`.
    pub fn spatial_frequencies(&self, theta: f64, phi: f64) -> [f64; 2] {
        match self.kind {
            ArrayKind::Ula => [theta.sin(), 0.0],
            ArrayKind::Upa => [theta.sin() * phi.sin(), theta.sin() * phi.cos()],
        }
    }

    /// Grid of `count` spatial frequencies for which the flat steering
    /// vectors form the columns of the unitary DFT matrix.
    pub fn spatial_grid(&self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| wrap_half(i as f64 / count as f64) / self.spacing)
            .collect()
    }
}

fn wrap_half(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

/// Steering vector for spatial frequencies `(u1, u2)` at baseband angular
/// frequency `omega` (rad/s). Unit 2-norm.
pub fn steering_from_spatial(geometry: &ArrayGeometry, u: [f64; 2], omega: f64) -> CVec {
    let n = geometry.n_antennas();
    let squint = 1.0 + omega / (2.0 * PI * geometry.carrier_hz);
    let scale = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |idx, _| {
        let n1 = (idx / geometry.n2) as f64;
        let n2 = (idx % geometry.n2) as f64;
        let phase = -2.0 * PI * geometry.spacing * (n1 * u[0] + n2 * u[1]) * squint;
        C64::from_polar(scale, phase)
    })
}

/// Broadband steering vector `a(θ, φ, ω)`.
pub fn steering_vector(geometry: &ArrayGeometry, theta: f64, phi: f64, omega: f64) -> CVec {
    steering_from_spatial(geometry, geometry.spatial_frequencies(theta, phi), omega)
}

/// DFT-bin angular frequencies `ω_m ∈ [−πB, πB)` for a block of `t` symbols.
pub fn frequency_grid(t: usize, bandwidth_hz: f64) -> Vec<f64> {
    (0..t)
        .map(|m| 2.0 * PI * bandwidth_hz * wrap_half(m as f64 / t as f64))
        .collect()
}

/// Angular array response `A(ω)` on the dictionary grid.
pub fn angular_dictionary(geometry: &ArrayGeometry, omega: f64) -> CMat {
    let n = geometry.n_antennas();
    let g1 = geometry.spatial_grid(geometry.n1);
    let g2 = geometry.spatial_grid(geometry.n2);
    let mut a = CMat::zeros(n, n);
    for (i1, &u1) in g1.iter().enumerate() {
        for (i2, &u2) in g2.iter().enumerate() {
            let u2 = if geometry.kind == ArrayKind::Ula { 0.0 } else { u2 };
            a.set_column(i1 * geometry.n2 + i2, &steering_from_spatial(geometry, [u1, u2], omega));
        }
    }
    a
}

/// Per-frequency delay-angle dictionaries `F_m`, stored in factored form.
#[derive(Debug, Clone)]
pub struct Dictionary {
    geometry: ArrayGeometry,
    max_delay: usize,
    omegas: Vec<f64>,
    /// One entry when the array response is frequency flat, else one per `m`.
    arrays: Vec<CMat>,
}

/// Builds `F_m` for `m = 0..t` with `t_d + 1` delay taps.
pub fn build_dictionary(geometry: &ArrayGeometry, t: usize, t_d: usize) -> Result<Dictionary> {
    geometry.validate()?;
    if t == 0 {
        return Err(invalid("block length must be at least 1"));
    }
    if t_d >= t {
        return Err(invalid(format!(
            "delay spread T_D = {t_d} must be shorter than the block length T = {t}"
        )));
    }
    let omegas = frequency_grid(t, geometry.bandwidth_hz);
    let arrays = if geometry.is_frequency_flat() {
        vec![angular_dictionary(geometry, 0.0)]
    } else {
        omegas.iter().map(|&w| angular_dictionary(geometry, w)).collect()
    };
    Ok(Dictionary {
        geometry: geometry.clone(),
        max_delay: t_d,
        omegas,
        arrays,
    })
}

impl Dictionary {
    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn n_antennas(&self) -> usize {
        self.geometry.n_antennas()
    }

    pub fn n_taps(&self) -> usize {
        self.max_delay + 1
    }

    /// Number of columns `N·(T_D + 1)`.
    pub fn n_coeffs(&self) -> usize {
        self.n_antennas() * self.n_taps()
    }

    pub fn n_freqs(&self) -> usize {
        self.omegas.len()
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn array_is_flat(&self) -> bool {
        self.arrays.len() == 1
    }

    /// All `F_m` identical.
    pub fn is_flat(&self) -> bool {
        self.max_delay == 0 && self.array_is_flat()
    }

    /// Angular frequency used for the array response at bin `m`.
    pub fn response_omega(&self, m: usize) -> f64 {
        if self.array_is_flat() {
            0.0
        } else {
            self.omegas[m]
        }
    }

    pub fn array(&self, m: usize) -> &CMat {
        if self.array_is_flat() {
            &self.arrays[0]
        } else {
            &self.arrays[m]
        }
    }

    /// `e^{−j d ω_m / B}`.
    pub fn delay_phase(&self, m: usize, d: usize) -> C64 {
        C64::from_polar(1.0, -(d as f64) * self.omegas[m] / self.geometry.bandwidth_hz)
    }

    /// Materialized `F_m`.
    pub fn matrix(&self, m: usize) -> CMat {
        let n = self.n_antennas();
        let a = self.array(m);
        let mut f = CMat::zeros(n, self.n_coeffs());
        for d in 0..self.n_taps() {
            let p = self.delay_phase(m, d);
            f.columns_mut(d * n, n).copy_from(&a.map(|z| z * p));
        }
        f
    }

    /// `F_m S` using the Kronecker structure.
    pub fn apply(&self, m: usize, s: &CMat) -> CMat {
        let n = self.n_antennas();
        assert_eq!(s.nrows(), self.n_coeffs(), "coefficient rows");
        let mut combined = s.rows(0, n).into_owned();
        for d in 1..self.n_taps() {
            let p = self.delay_phase(m, d);
            combined.zip_apply(&s.rows(d * n, n), |acc, z| *acc += z * p);
        }
        self.array(m) * combined
    }

    /// `F_m^H V` using the Kronecker structure.
    pub fn apply_adjoint(&self, m: usize, v: &CMat) -> CMat {
        let n = self.n_antennas();
        assert_eq!(v.nrows(), n, "observation rows");
        let base = self.array(m).ad_mul(v);
        let mut out = CMat::zeros(self.n_coeffs(), v.ncols());
        for d in 0..self.n_taps() {
            let p = self.delay_phase(m, d).conj();
            out.rows_mut(d * n, n).copy_from(&base.map(|z| z * p));
        }
        out
    }

    /// `F_m^H F_m`.
    pub fn gram(&self, m: usize) -> CMat {
        let n = self.n_antennas();
        let a = self.array(m);
        let aa = a.ad_mul(a);
        let taps = self.n_taps();
        let phases: Vec<C64> = (0..taps).map(|d| self.delay_phase(m, d)).collect();
        let mut g = CMat::zeros(self.n_coeffs(), self.n_coeffs());
        for d in 0..taps {
            for e in 0..taps {
                let c = phases[d].conj() * phases[e];
                g.view_mut((d * n, e * n), (n, n)).copy_from(&aa.map(|z| z * c));
            }
        }
        g
    }

    /// Index of the grid atom nearest to spatial frequency `u` along one
    /// array dimension of size `count` (circular distance in `d·u`).
    fn nearest_atom(&self, u: f64, count: usize) -> usize {
        let x = self.geometry.spacing * u * count as f64;
        (x.round().rem_euclid(count as f64)) as usize % count
    }
}

/// One propagation path.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Angle of arrival θ (rad).
    pub theta: f64,
    /// Azimuth φ (rad).
    pub phi: f64,
    /// Spatial frequencies seen by the array. On-grid paths carry the snapped
    /// grid values.
    pub spatial: [f64; 2],
    /// Delay in symbol periods (`t·B`), within `[0, T_D]`.
    pub delay: f64,
    pub gain: C64,
}

/// Ground-truth multipath parameters and their dictionary coefficients.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Paths per user.
    pub paths: Vec<Vec<Path>>,
    /// `S`, `N(T_D+1) × K`. Exactly sparse for on-grid draws, otherwise the
    /// least-squares projection of the exact transfer function.
    pub coefficients: CMat,
    pub on_grid: bool,
}

/// Draws `k` users with `l` paths each.
///
/// Angles are uniform in `[0, π)`, azimuths in `[0, 2π)`, gains `CN(0, 1)`
/// and delays uniform in `[0, T_D]` symbols. With `on_grid` the spatial
/// frequencies snap to the dictionary grid and delays to integers.
pub fn draw_channel<R: Rng + ?Sized>(
    dictionary: &Dictionary,
    k: usize,
    l: usize,
    on_grid: bool,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if k == 0 || l == 0 {
        return Err(invalid("need at least one user and one path"));
    }
    let geometry = dictionary.geometry();
    let t_d = dictionary.max_delay();
    let mut paths = Vec::with_capacity(k);
    for _ in 0..k {
        let mut user = Vec::with_capacity(l);
        for _ in 0..l {
            let theta = rng.random::<f64>() * PI;
            let phi = rng.random::<f64>() * 2.0 * PI;
            let delay = rng.random::<f64>() * t_d as f64;
            let gain = complex_normal(rng, 1.0);
            let mut spatial = geometry.spatial_frequencies(theta, phi);
            let mut delay = delay;
            if on_grid {
                let g1 = geometry.spatial_grid(geometry.n1);
                let g2 = geometry.spatial_grid(geometry.n2);
                spatial[0] = g1[dictionary.nearest_atom(spatial[0], geometry.n1)];
                if geometry.kind == ArrayKind::Upa {
                    spatial[1] = g2[dictionary.nearest_atom(spatial[1], geometry.n2)];
                }
                delay = delay.round();
            }
            user.push(Path {
                theta,
                phi,
                spatial,
                delay,
                gain,
            });
        }
        paths.push(user);
    }
    let mut realization = ChannelRealization {
        paths,
        coefficients: CMat::zeros(dictionary.n_coeffs(), k),
        on_grid,
    };
    realization.coefficients = if on_grid {
        realization.grid_coefficients(dictionary)
    } else {
        realization.projected_coefficients(dictionary)?
    };
    Ok(realization)
}

impl ChannelRealization {
    pub fn n_users(&self) -> usize {
        self.paths.len()
    }

    /// Exact transfer function `h_k(ω_m) = Σ_ℓ s a(θ, φ, ω_m) e^{−jω_m t}` for
    /// every bin, as `N × K` matrices. The array response follows the
    /// dictionary's frequency model.
    pub fn transfer(&self, dictionary: &Dictionary) -> Vec<CMat> {
        let geometry = dictionary.geometry();
        let n = dictionary.n_antennas();
        let b = geometry.bandwidth_hz;
        (0..dictionary.n_freqs())
            .map(|m| {
                let omega = dictionary.omegas()[m];
                let response_omega = dictionary.response_omega(m);
                let mut h = CMat::zeros(n, self.n_users());
                for (k, user) in self.paths.iter().enumerate() {
                    for path in user {
                        let a = steering_from_spatial(geometry, path.spatial, response_omega);
                        let w = path.gain * C64::from_polar(1.0, -omega * path.delay / b);
                        let mut col = h.column_mut(k);
                        col.axpy(w, &a, C64::new(1.0, 0.0));
                    }
                }
                h
            })
            .collect()
    }

    /// Coefficients obtained by snapping every path to its nearest atom and
    /// integer delay. Colliding paths add up.
    pub fn grid_coefficients(&self, dictionary: &Dictionary) -> CMat {
        let geometry = dictionary.geometry();
        let n = dictionary.n_antennas();
        let mut s = CMat::zeros(dictionary.n_coeffs(), self.n_users());
        for (k, user) in self.paths.iter().enumerate() {
            for path in user {
                let i1 = dictionary.nearest_atom(path.spatial[0], geometry.n1);
                let i2 = if geometry.kind == ArrayKind::Upa {
                    dictionary.nearest_atom(path.spatial[1], geometry.n2)
                } else {
                    0
                };
                let d = (path.delay.round() as usize).min(dictionary.max_delay());
                s[(d * n + i1 * geometry.n2 + i2, k)] += path.gain;
            }
        }
        s
    }

    /// Least-squares projection `argmin_S Σ_m ‖F_m S − H[m]‖²`.
    pub fn projected_coefficients(&self, dictionary: &Dictionary) -> Result<CMat> {
        let h = self.transfer(dictionary);
        let nc = dictionary.n_coeffs();
        let mut gram = CMat::zeros(nc, nc);
        let mut rhs = CMat::zeros(nc, self.n_users());
        if dictionary.is_flat() {
            let g = dictionary.gram(0);
            gram += g.scale(h.len() as f64);
            for hm in &h {
                rhs += dictionary.apply_adjoint(0, hm);
            }
        } else {
            for (m, hm) in h.iter().enumerate() {
                gram += dictionary.gram(m);
                rhs += dictionary.apply_adjoint(m, hm);
            }
        }
        if let Some(chol) = Cholesky::new(gram.clone()) {
            return Ok(chol.solve(&rhs));
        }
        let pinv = gram
            .pseudo_inverse(1e-12)
            .map_err(|e| invalid(format!("projection failed: {e}")))?;
        Ok(pinv * rhs)
    }
}

/// `H[m] = F_m S` for every bin.
pub fn channel_transfer(s: &CMat, dictionary: &Dictionary) -> Result<Vec<CMat>> {
    if s.nrows() != dictionary.n_coeffs() {
        return Err(mismatch(format!(
            "S has {} rows, dictionary has {} columns",
            s.nrows(),
            dictionary.n_coeffs()
        )));
    }
    if dictionary.is_flat() {
        let h = dictionary.apply(0, s);
        return Ok(vec![h; dictionary.n_freqs()]);
    }
    Ok((0..dictionary.n_freqs()).map(|m| dictionary.apply(m, s)).collect())
}

/// One `CN(0, variance)` sample.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * sd, im * sd)
}

/// Unitary `n`-point DFT matrix `[U]_{a,b} = e^{−j2πab/n}/√n`.
pub fn unitary_dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |a, b| {
        C64::from_polar(scale, -2.0 * PI * ((a * b) % n) as f64 / n as f64)
    })
}
