//! Exponential-family identities behind the MMSE formula and the Poincaré
//! lower bound.
//!
//! A conditional law is described through [`ExpFamilyModel`]:
//!
//! ```text
//! f(y | x) = h(y) · exp(<η(x), T(y)> − φ(x))
//! ```
//!
//! The Jacobian convention used throughout is `J(y)` of shape `k × d`
//! (observation dimension × parameter dimension) with
//! `∇_y <η, T(y)> = J(y) η`. With it:
//!
//! * `∇_y i(x; y) = J(y) (η(x) − E[η(X) | Y = y])`
//! * `η(x) − E[η(X) | Y = y] = J(y)^+ ∇_y i(x; y)` when `J` has full column rank
//! * `mmse(η(X) | Y) ≥ E[ρ(X)² κ(X) Var(i(X; Y) | X)]`.

use crate::linalg::{self, RealMatrix, RealVector};
use crate::Error;

/// Conditional law `f(y | x)` in non-canonical exponential-family form, plus
/// the marginal and the posterior mean of the natural parameter.
///
/// The marginal may condition on side information held by the model (for
/// example a known pilot); `x` is whatever is being estimated.
pub trait ExpFamilyModel {
    /// Observation dimension `k`.
    fn obs_dim(&self) -> usize;
    /// Natural-parameter dimension `d`.
    fn param_dim(&self) -> usize;
    /// `log h(y)`.
    fn log_base_measure(&self, y: &[f64]) -> f64;
    /// `η(x)`.
    fn natural_param(&self, x: &[f64]) -> Vec<f64>;
    /// `T(y)`.
    fn sufficient_stat(&self, y: &[f64]) -> Vec<f64>;
    /// `J(y)`, `k × d`.
    fn suff_stat_jacobian(&self, y: &[f64]) -> RealMatrix;
    /// `φ(x)`.
    fn log_partition(&self, x: &[f64]) -> f64;
    /// `log f(y | x)`, in closed form.
    fn log_lik(&self, y: &[f64], x: &[f64]) -> f64;
    /// `log f(y)`.
    fn log_marginal(&self, y: &[f64]) -> f64;
    /// `E[η(X) | Y = y]`, in closed form.
    fn posterior_mean_eta(&self, y: &[f64]) -> Vec<f64>;
}

/// Closed-form Poincaré constant and singular-value floor of a channel.
pub trait PoincareIngredients {
    fn kappa(&self, x: &[f64]) -> f64;
    fn rho(&self, x: &[f64]) -> f64;
}

/// `log f(y | x) − log f(y)`.
pub fn info_density<M: ExpFamilyModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
) -> Result<f64, Error> {
    let v = model.log_lik(y, x) - model.log_marginal(y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: "information density",
        })
    }
}

/// `J(y) (η(x) − E[η(X) | Y = y])`.
pub fn grad_info_density<M: ExpFamilyModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    posterior_mean_eta: &[f64],
) -> RealVector {
    let diff: Vec<f64> = model
        .natural_param(x)
        .iter()
        .zip(posterior_mean_eta)
        .map(|(a, b)| a - b)
        .collect();
    RealVector(model.suff_stat_jacobian(y).matvec(&diff))
}

/// Central-difference step `max(1e-6, 1e-6 |y|)`.
pub fn fd_step(y: f64) -> f64 {
    (1e-6 * y.abs()).max(1e-6)
}

/// Step for second differences; the gradient step would drown in round-off.
pub fn fd_step_hessian(y: f64) -> f64 {
    (1e-4 * y.abs()).max(1e-4)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, y: &[f64]) -> Vec<f64> {
    let mut probe = y.to_vec();
    (0..y.len())
        .map(|i| {
            let h = fd_step(y[i]);
            probe[i] = y[i] + h;
            let fp = f(&probe);
            probe[i] = y[i] - h;
            let fm = f(&probe);
            probe[i] = y[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian of a scalar function.
pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, y: &[f64]) -> RealMatrix {
    let k = y.len();
    let mut hess = RealMatrix::zeros(k, k);
    let mut p = y.to_vec();
    let f0 = f(y);
    for i in 0..k {
        let hi = fd_step_hessian(y[i]);
        p[i] = y[i] + hi;
        let fp = f(&p);
        p[i] = y[i] - hi;
        let fm = f(&p);
        p[i] = y[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in (i + 1)..k {
            let hj = fd_step_hessian(y[j]);
            let mut eval = |si: f64, sj: f64| {
                p[i] = y[i] + si * hi;
                p[j] = y[j] + sj * hj;
                let v = f(&p);
                p[i] = y[i];
                p[j] = y[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Max-abs residual of the TRE identity
/// `∇_y log(f(y) / h(y)) = J(y) E[η(X) | Y = y]`, left side by central
/// differences.
pub fn tre_residual<M: ExpFamilyModel + ?Sized>(model: &M, y: &[f64]) -> f64 {
    let lhs = fd_gradient(|v| model.log_marginal(v) - model.log_base_measure(v), y);
    let rhs = model
        .suff_stat_jacobian(y)
        .matvec(&model.posterior_mean_eta(y));
    lhs.iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Bakry–Émery constant
/// `max{0, min_y λ_min(H_y[−log h(y)] − H_y <η(x), T(y)>)}` over `probes`,
/// Hessians by finite differences.
pub fn bakry_emery_constant<M: ExpFamilyModel + ?Sized>(
    model: &M,
    x: &[f64],
    probes: &[Vec<f64>],
) -> f64 {
    let eta = model.natural_param(x);
    let potential =
        |y: &[f64]| -model.log_base_measure(y) - linalg::dot(&eta, &model.sufficient_stat(y));
    let min_eig = probes
        .iter()
        .map(|y| {
            let hess = fd_hessian(potential, y);
            linalg::symmetric_eigenvalues(&hess).map_or(f64::NEG_INFINITY, |ev| ev.0[0])
        })
        .fold(f64::INFINITY, f64::min);
    min_eig.max(0.0)
}

/// One sample of the MMSE identity: `‖J(y)^+ ∇_y i‖²`.
pub fn theorem1_mmse_term(grad: &[f64], jac_pinv: &RealMatrix) -> f64 {
    let v = jac_pinv.matvec(grad);
    linalg::dot(&v, &v)
}

/// One outer sample of the lower bound: `ρ² κ Var(i | ·)`.
pub fn poincare_lb_term(kappa: f64, rho: f64, cond_var: f64) -> f64 {
    rho * rho * kappa * cond_var
}

/// `|log f(y|x) − (log h(y) + <η(x), T(y)> − φ(x))|`.
pub fn decomposition_residual<M: ExpFamilyModel + ?Sized>(model: &M, x: &[f64], y: &[f64]) -> f64 {
    let assembled = model.log_base_measure(y)
        + linalg::dot(&model.natural_param(x), &model.sufficient_stat(y))
        - model.log_partition(x);
    (model.log_lik(y, x) - assembled).abs()
}

/// Largest relative error between `J(y)` and central differences of `T`.
///
/// Entry `(i, j)` of `J` is `∂T_j / ∂y_i`.
pub fn jacobian_fd_residual<M: ExpFamilyModel + ?Sized>(model: &M, y: &[f64]) -> f64 {
    let jac = model.suff_stat_jacobian(y);
    let scale = jac
        .as_slice()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let mut worst = 0.0f64;
    for j in 0..model.param_dim() {
        let fd = fd_gradient(|v| model.sufficient_stat(v)[j], y);
        for (i, d) in fd.iter().enumerate() {
            worst = worst.max((d - jac[(i, j)]).abs() / scale);
        }
    }
    worst
}
