//! Small dense linear-algebra helpers on complex matrices.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::{CMat, C64};

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Ties keep the order returned by the solver.
pub fn hermitian_eig_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let sym = hermitian_part(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entrywise modulus of `M - M^H`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Inverse and log-determinant of a Hermitian positive definite matrix.
///
/// Falls back to LU when the Cholesky factorization fails numerically.
pub fn hpd_inverse_logdet(m: &CMat) -> Option<(CMat, f64)> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
        return Some((chol.inverse(), logdet));
    }
    let lu = m.clone().lu();
    let det = lu.determinant();
    let inv = lu.try_inverse()?;
    Some((inv, det.norm().ln()))
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hpd_inverse(m: &CMat) -> Option<CMat> {
    hpd_inverse_logdet(m).map(|(inv, _)| inv)
}

/// Complex soft thresholding `e^{j∠m} max(|m| - τ, 0)`, entrywise.
pub fn soft_threshold(m: &CMat, tau: f64) -> CMat {
    m.map(|z| {
        let r = z.norm();
        if r <= tau {
            C64::new(0.0, 0.0)
        } else {
            z * ((r - tau) / r)
        }
    })
}

/// `‖S‖_{1,1} = Σ |s_ij|`.
pub fn l11_norm(s: &CMat) -> f64 {
    s.iter().map(|z| z.norm()).sum()
}

/// `B - diag(B)`.
pub fn nondiag(b: &CMat) -> CMat {
    let mut out = b.clone();
    out.fill_diagonal(C64::new(0.0, 0.0));
    out
}

/// Diagonal part of `B` as a matrix.
pub fn diag_part(b: &CMat) -> CMat {
    CMat::from_diagonal(&b.diagonal())
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Complex trace.
pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().copied().sum()
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unitary polar factor `U V^H` of `M = U Σ V^H`.
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Whether every entry is finite.
pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn soft_threshold_cases() {
        let m = CMat::from_row_slice(1, 3, &[c(0.5, 0.0), C64::from_polar(3.0, std::f64::consts::FRAC_PI_4), c(0.0, -2.0)]);
        assert_eq!(soft_threshold(&m, 0.0), m);
        let out = soft_threshold(&m, 1.0);
        assert_eq!(out[(0, 0)], c(0.0, 0.0));
        let expected = C64::from_polar(2.0, std::f64::consts::FRAC_PI_4);
        assert_abs_diff_eq!((out[(0, 1)] - expected).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((out[(0, 2)] - c(0.0, -1.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn eig_sorted_descending() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 2.0), c(0.0, -2.0), c(1.0, 0.0)]);
        let (vals, vecs) = hermitian_eig_desc(&m);
        assert!(vals[0] >= vals[1]);
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        let recon = &vecs * CMat::from_diagonal(&nalgebra::DVector::from_iterator(2, vals.iter().map(|&v| c(v, 0.0)))) * vecs.adjoint();
        assert!(max_abs(&(recon - m)) < 1e-12);
    }

    #[test]
    fn hpd_logdet_matches_determinant() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5), c(3.0, 0.0)]);
        let (inv, logdet) = hpd_inverse_logdet(&m).unwrap();
        assert_abs_diff_eq!(logdet, m.determinant().re.ln(), epsilon = 1e-12);
        assert!(max_abs(&(inv * &m - CMat::identity(2, 2))) < 1e-12);
    }
}
