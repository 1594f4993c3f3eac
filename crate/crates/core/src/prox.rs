//! Proximal-gradient ascent for `max_S f(S) − λ‖S‖_{1,1}` with the
//! backtracking rule shared by every estimator in the crate.
//!
//! Gradients follow the Wirtinger convention: objectives return
//! `Δ = −∂f/∂S*`, and one step is `S ← soft(S − μΔ, μλ/2)`.

use crate::blind_ideal::{SolverConfig, SparseEstimate};
use crate::linalg::{l11_norm, soft_threshold};
use crate::CMat;

/// A smooth objective to be maximized.
pub trait SmoothObjective {
    fn value(&self, s: &CMat) -> f64;

    /// `Δ = −∂f/∂S*`.
    fn descent(&self, s: &CMat) -> CMat;
}

/// `f(S) − λ‖S‖_{1,1}`.
pub fn regularized<O: SmoothObjective + ?Sized>(objective: &O, s: &CMat, lambda: f64) -> f64 {
    objective.value(s) - lambda * l11_norm(s)
}

#[derive(Debug, Clone)]
pub struct Step {
    pub s: CMat,
    pub objective: f64,
    pub mu: f64,
    /// False when the step size fell below the floor without improvement.
    pub accepted: bool,
}

/// One thresholded gradient step, shrinking `μ ← βμ` until the smooth part
/// stays above its quadratic model at `S`,
/// `f(Z) ≥ f(S) − 2Re⟨Δ, Z − S⟩ − ‖Z − S‖²/μ`, and the regularized objective
/// does not decrease. The model test rules out overshooting steps that merely
/// land on an equal value.
pub fn backtracking_step<O: SmoothObjective + ?Sized>(
    objective: &O,
    s: &CMat,
    current: f64,
    lambda: f64,
    mu: f64,
    config: &SolverConfig,
) -> Step {
    let delta = objective.descent(s);
    let smooth = current + lambda * l11_norm(s);
    match search(objective, s, smooth, &delta, current, lambda, mu, config) {
        Ok(step) => step,
        Err(mu) => Step {
            s: s.clone(),
            objective: current,
            mu,
            accepted: false,
        },
    }
}

/// Thresholded steps from `base` with shrinking `μ`. Accepts the first
/// candidate that satisfies the quadratic model at `base` and reaches
/// `floor`; returns the final `μ` when the step floor is hit.
#[allow(clippy::too_many_arguments)]
fn search<O: SmoothObjective + ?Sized>(
    objective: &O,
    base: &CMat,
    base_smooth: f64,
    delta: &CMat,
    floor: f64,
    lambda: f64,
    mut mu: f64,
    config: &SolverConfig,
) -> std::result::Result<Step, f64> {
    let slack = 1e-12 * base_smooth.abs().max(1.0);
    loop {
        let candidate = soft_threshold(&(base - delta.scale(mu)), mu * lambda / 2.0);
        let diff = &candidate - base;
        let smooth_new = objective.value(&candidate);
        let model = base_smooth - 2.0 * delta.dotc(&diff).re - diff.norm_squared() / mu;
        let value = smooth_new - lambda * l11_norm(&candidate);
        if smooth_new >= model - slack && value >= floor {
            return Ok(Step {
                s: candidate,
                objective: value,
                mu,
                accepted: true,
            });
        }
        mu *= config.beta;
        if mu < config.min_step {
            return Err(mu);
        }
    }
}

/// Step from the extrapolated point `S + ω(S − S_prev)`. Falls back to a
/// plain step from `S` when the extrapolated step would not reach the
/// current objective.
fn momentum_step<O: SmoothObjective + ?Sized>(
    objective: &O,
    s: &CMat,
    s_prev: &CMat,
    omega: f64,
    current: f64,
    lambda: f64,
    mu: f64,
    config: &SolverConfig,
) -> (Step, bool) {
    let y = s + (s - s_prev).scale(omega);
    let y_smooth = objective.value(&y);
    if y_smooth.is_finite() {
        let delta = objective.descent(&y);
        if let Ok(step) = search(objective, &y, y_smooth, &delta, current, lambda, mu, config) {
            return (step, true);
        }
    }
    (backtracking_step(objective, s, current, lambda, mu, config), false)
}

/// KKT residual of `max f − λ‖S‖₁` given `Δ = −∂f/∂S*` at `S`.
///
/// Nonzero entries need `Δ_ij + (λ/2)e^{j∠s_ij} = 0`; zero entries need
/// `|Δ_ij| ≤ λ/2`.
pub fn kkt_from_descent(delta: &CMat, s: &CMat, lambda: f64) -> f64 {
    delta
        .iter()
        .zip(s.iter())
        .map(|(d, z)| {
            if z.norm() > 0.0 {
                (d + z.unscale(z.norm()) * (lambda / 2.0)).norm()
            } else {
                (d.norm() - lambda / 2.0).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Runs thresholded gradient ascent from `s0` until the relative change of
/// the regularized objective drops below `tol_rel_obj`.
pub fn maximize_l1<O: SmoothObjective + ?Sized>(objective: &O, s0: CMat, config: &SolverConfig) -> SparseEstimate {
    let lambda = config.lambda;
    let mut s = s0;
    let mut current = regularized(objective, &s, lambda);
    let mut trace = vec![current];
    let mut mu = config.mu0;
    let mut converged = false;
    let mut iterations = 0;
    let mut s_prev = s.clone();
    let mut momentum = 1.0_f64;
    while iterations < config.max_iters {
        let step = if config.accelerate && iterations > 0 {
            let next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let omega = (momentum - 1.0) / next;
            let (step, kept) = momentum_step(objective, &s, &s_prev, omega, current, lambda, mu, config);
            momentum = if kept { next } else { 1.0 };
            step
        } else {
            backtracking_step(objective, &s, current, lambda, mu, config)
        };
        mu = step.mu / config.beta;
        if !step.accepted {
            break;
        }
        iterations += 1;
        let change = (step.objective - current).abs() / current.abs().max(f64::MIN_POSITIVE);
        s_prev = std::mem::replace(&mut s, step.s);
        current = step.objective;
        trace.push(current);
        if change < config.tol_rel_obj {
            converged = true;
            break;
        }
    }
    let kkt_residual = kkt_from_descent(&objective.descent(&s), &s, lambda);
    SparseEstimate {
        coefficients: s,
        objective_trace: trace,
        iterations,
        final_step: mu,
        kkt_residual,
        converged,
        rank_deficient: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    /// f(S) = −‖S − A‖², maximized at A; prox solution is soft(A, λ/2).
    struct Quadratic(CMat);

    impl SmoothObjective for Quadratic {
        fn value(&self, s: &CMat) -> f64 {
            -(s - &self.0).norm_squared()
        }
        fn descent(&self, s: &CMat) -> CMat {
            s - &self.0
        }
    }

    #[test]
    fn solves_separable_lasso() {
        let a = CMat::from_row_slice(1, 3, &[C64::new(3.0, 0.0), C64::new(0.0, 0.2), C64::new(-1.0, 1.0)]);
        let config = SolverConfig {
            lambda: 1.0,
            tol_rel_obj: 1e-15,
            max_iters: 10_000,
            ..SolverConfig::default()
        };
        let est = maximize_l1(&Quadratic(a.clone()), CMat::zeros(1, 3), &config);
        let expected = soft_threshold(&a, 0.5);
        assert!((est.coefficients - expected).norm() < 1e-8);
        assert!(est.kkt_residual < 1e-8);
        assert!(est.objective_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    /// f(S) = −‖M S − A‖² with an ill-conditioned diagonal `M`.
    struct Stretched(CMat, Vec<f64>);

    impl SmoothObjective for Stretched {
        fn value(&self, s: &CMat) -> f64 {
            let r = CMat::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * self.1[i] - self.0[(i, j)]);
            -r.norm_squared()
        }
        fn descent(&self, s: &CMat) -> CMat {
            CMat::from_fn(s.nrows(), s.ncols(), |i, j| (s[(i, j)] * self.1[i] - self.0[(i, j)]) * self.1[i])
        }
    }

    #[test]
    fn momentum_reaches_the_same_point_faster() {
        let a = CMat::from_column_slice(3, 1, &[C64::new(3.0, 1.0), C64::new(-2.0, 0.5), C64::new(0.4, -0.1)]);
        let obj = Stretched(a, vec![1.0, 0.1, 0.03]);
        let plain = SolverConfig {
            lambda: 0.01,
            tol_rel_obj: 1e-14,
            max_iters: 200_000,
            ..SolverConfig::default()
        };
        let fast = SolverConfig {
            accelerate: true,
            ..plain.clone()
        };
        let p = maximize_l1(&obj, CMat::zeros(3, 1), &plain);
        let f = maximize_l1(&obj, CMat::zeros(3, 1), &fast);
        assert!((&p.coefficients - &f.coefficients).norm() < 1e-4);
        assert!(f.iterations < p.iterations);
        assert!(f.objective_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn kkt_branches() {
        let s = CMat::from_row_slice(1, 2, &[C64::new(2.0, 0.0), C64::new(0.0, 0.0)]);
        let delta = CMat::from_row_slice(1, 2, &[C64::new(-0.5, 0.0), C64::new(0.3, 0.0)]);
        assert_eq!(kkt_from_descent(&delta, &s, 1.0), 0.0);
        let delta = CMat::from_row_slice(1, 2, &[C64::new(-0.5, 0.0), C64::new(0.9, 0.0)]);
        assert!((kkt_from_descent(&delta, &s, 1.0) - 0.4).abs() < 1e-15);
    }
}
