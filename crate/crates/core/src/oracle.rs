//! Ground truth that does not go through the estimators it checks.
//!
//! The channel modules estimate the MMSE through gradients of the
//! information density and pseudo-inverse Jacobians; the oracles here use the
//! closed-form mixture posterior mean instead, with their own density code.
//! The vector oracle also takes a different algebraic route (Woodbury in the
//! channel dimension instead of inverting the observation covariance).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, Cholesky, RealMatrix};
use crate::mc::{self, EstimateCI};
use crate::scalar::ScalarChannelSpec;
use crate::vector::VectorChannelSpec;
use crate::Error;

/// Nodes and weights for `∫ e^{-t²} f(t) dt ≈ Σ w_i f(t_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn expect_std_normal(&self, f: impl Fn(f64) -> f64) -> f64 {
        let s = std::f64::consts::SQRT_2;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(s * t))
            .sum::<f64>()
            / PI.sqrt()
    }
}

pub const MAX_HERMITE_ORDER: usize = 512;

/// Gauss–Hermite rule: Jacobi-matrix eigenvalues as starting points, then
/// Newton on orthonormal Hermite polynomials, which also yields the weights.
/// Nodes are returned in increasing order.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule, Error> {
    if !(2..=MAX_HERMITE_ORDER).contains(&order) {
        return Err(Error::InvalidConfig {
            field: "quadrature order",
            reason: format!("{order} outside 2..={MAX_HERMITE_ORDER}"),
        });
    }
    let n = order;
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let mut guesses = tridiagonal_eigenvalues(vec![0.0; n], off);
    guesses.sort_by(f64::total_cmp);
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for mut z in guesses {
        let mut pp = 0.0;
        for _ in 0..20 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes.push(z);
        weights.push(2.0 / (pp * pp));
    }
    // Enforce exact symmetry.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let t = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -t;
        nodes[j] = t;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e`, by implicit QL.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, off: Vec<f64>) -> Vec<f64> {
    let n = d.len();
    let mut e = off;
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 60, "tridiagonal QL did not converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d
}

fn mixture_log_marginal(spec: &ScalarChannelSpec, y: f64, x: f64) -> f64 {
    // Written out independently of `scalar::log_marginal_scalar`.
    let s2 = spec.sigma_s2;
    let v = x * x * spec.sigma_h2 + s2;
    let a = if spec.alpha < 1.0 {
        (1.0 - spec.alpha).ln() - 0.5 * (2.0 * PI * s2).ln() - y * y / (2.0 * s2)
    } else {
        f64::NEG_INFINITY
    };
    let b = spec.alpha.ln() - 0.5 * (2.0 * PI * v).ln() - y * y / (2.0 * v);
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn raw_info_density(spec: &ScalarChannelSpec, h: f64, y: f64, x: f64) -> f64 {
    let s2 = spec.sigma_s2;
    let cond = -0.5 * (2.0 * PI * s2).ln() - (y - h * x).powi(2) / (2.0 * s2);
    cond - mixture_log_marginal(spec, y, x)
}

/// `Var(i(h; hx + σ_s Z, x))` by quadrature, with the rule centred on the
/// conditional law (`y = hx + σ_s √2 t`).
pub fn scalar_inner_variance(
    spec: &ScalarChannelSpec,
    h: f64,
    x: f64,
    rule: &QuadratureRule,
) -> f64 {
    let sd = spec.sigma_s2.sqrt();
    let vals: Vec<f64> = rule
        .nodes
        .iter()
        .map(|t| raw_info_density(spec, h, h * x + sd * std::f64::consts::SQRT_2 * t, x))
        .collect();
    let norm = PI.sqrt();
    let mean: f64 = vals
        .iter()
        .zip(&rule.weights)
        .map(|(v, w)| w * v)
        .sum::<f64>()
        / norm;
    let var: f64 = vals
        .iter()
        .zip(&rule.weights)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum::<f64>()
        / norm;
    var.max(0.0)
}

/// Outer step of [`scalar_lb_quadrature`] in the `asinh` variable.
pub const LB_OUTER_STEP: f64 = 1.0 / 16.0;

/// The scalar lower bound by quadrature in both the noise and the active
/// channel gain (plus the blockage atom). Deterministic.
///
/// `Var(i | h, x)` changes on the scale `σ_s/|x|` around `h = 0` and on the
/// scale `σ_H` elsewhere, so the outer integral uses the trapezoid rule in
/// `u` with `h = (σ_s/|x|) sinh u`, which resolves both.
pub fn scalar_lb_quadrature(
    spec: &ScalarChannelSpec,
    inner: &QuadratureRule,
    outer_step: f64,
) -> Result<f64, Error> {
    spec.require_nonzero_pilot()?;
    let sh = spec.sigma_h2.sqrt();
    let mut total = 0.0;
    for (&x, &p) in spec.pilot.values().iter().zip(spec.pilot.probs()) {
        let blocked = scalar_inner_variance(spec, 0.0, x, inner);
        let c = spec.sigma_s2.sqrt() / x.abs();
        let n = ((12.0 * sh / c).asinh() / outer_step).ceil() as i64;
        let active: f64 = (-n..=n)
            .map(|k| {
                let u = k as f64 * outer_step;
                let h = c * u.sinh();
                let density = (-0.5 * (h / sh).powi(2)).exp() / (sh * (2.0 * PI).sqrt());
                density * c * u.cosh() * scalar_inner_variance(spec, h, x, inner)
            })
            .sum::<f64>()
            * outer_step;
        total += p * spec.sigma_s2 / (x * x) * ((1.0 - spec.alpha) * blocked + spec.alpha * active);
    }
    Ok(total)
}

/// `(H − E[H | Y, X])²` averaged over the joint law, posterior mean in
/// closed form.
pub fn scalar_mmse_oracle(
    spec: &ScalarChannelSpec,
    trials: u64,
    seed: u64,
    chunks: usize,
) -> Result<EstimateCI, Error> {
    spec.require_nonzero_pilot()?;
    let sd_h = spec.sigma_h2.sqrt();
    let sd_s = spec.sigma_s2.sqrt();
    mc::run_chunked(trials, chunks, seed, |rng, n, acc| {
        for _ in 0..n {
            let x = spec.pilot.sample(rng);
            let active = rng.random::<f64>() < spec.alpha;
            let g: f64 = rng.sample(StandardNormal);
            let h = if active { sd_h * g } else { 0.0 };
            let z: f64 = rng.sample(StandardNormal);
            let y = h * x + sd_s * z;
            let v = x * x * spec.sigma_h2 + spec.sigma_s2;
            // Active-component posterior probability through its log-odds.
            let log_odds = if spec.alpha < 1.0 {
                spec.alpha.ln() - (1.0 - spec.alpha).ln() - 0.5 * (v / spec.sigma_s2).ln()
                    + 0.5 * y * y * (1.0 / spec.sigma_s2 - 1.0 / v)
            } else {
                f64::INFINITY
            };
            let p_active = 0.5 * (1.0 + (0.5 * log_odds).tanh());
            let estimate = p_active * x * spec.sigma_h2 / v * y;
            acc.update((h - estimate).powi(2))?;
        }
        Ok(())
    })
}

/// Posterior-mean machinery for one pilot, built in the channel dimension:
/// `G = (C^T C + (σ_s²/σ_H²) I)^{-1} C^T` is the Wiener gain and
/// `y^T Σ^{-1} y = (2/σ_s²)(‖y‖² − y^T C G y)`.
struct WoodburyPosterior {
    c: RealMatrix,
    gain: RealMatrix,
    log_det_ratio: f64,
}

impl WoodburyPosterior {
    fn new(c: RealMatrix, sigma_h2: f64, sigma_s2: f64) -> Result<Self, Error> {
        let ctc = c.transpose().matmul(&c)?;
        let k = ctc.rows();
        let m = ctc.add(&RealMatrix::identity(k).scaled(sigma_s2 / sigma_h2))?;
        let gain = Cholesky::new(&m)?.inverse().matmul(&c.transpose())?;
        // log det(Σ) − log det(σ_s²/2 I) = log det(I + (σ_H²/σ_s²) C^T C).
        let det_arg = RealMatrix::identity(k).add(&ctc.scaled(sigma_h2 / sigma_s2))?;
        let log_det_ratio = Cholesky::new(&det_arg)?.log_det();
        Ok(Self {
            c,
            gain,
            log_det_ratio,
        })
    }
}

/// `‖H − E[H | Y, X]‖²` averaged over the joint law of the vector channel.
pub fn vector_mmse_oracle(
    spec: &VectorChannelSpec,
    trials: u64,
    seed: u64,
    chunks: usize,
) -> Result<EstimateCI, Error> {
    let posts = spec
        .pilot_atoms()
        .iter()
        .map(|atom| {
            WoodburyPosterior::new(
                linalg::build_sensing_matrix(&atom.matrix, spec.n),
                spec.sigma_h2,
                spec.sigma_s2,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sd_h = (spec.sigma_h2 / 2.0).sqrt();
    let sd_s = (spec.sigma_s2 / 2.0).sqrt();
    let log_prior_odds = if spec.alpha < 1.0 {
        spec.alpha.ln() - (1.0 - spec.alpha).ln()
    } else {
        f64::INFINITY
    };
    mc::run_chunked(trials, chunks, seed, |rng, n, acc| {
        let d = posts[0].c.cols();
        let k = posts[0].c.rows();
        let mut h = vec![0.0; d];
        let mut y = vec![0.0; k];
        let mut est = vec![0.0; d];
        let mut cg = vec![0.0; k];
        for _ in 0..n {
            let post = &posts[spec.sample_atom(rng)];
            let active = rng.random::<f64>() < spec.alpha;
            for v in h.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = if active { sd_h * g } else { 0.0 };
            }
            post.c.matvec_into(&h, &mut y);
            for v in y.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sd_s * z;
            }
            post.gain.matvec_into(&y, &mut est);
            post.c.matvec_into(&est, &mut cg);
            // Log-likelihood ratio active vs blocked:
            // ½ y^T((σ_s²/2)^{-1} − Σ^{-1}) y − ½ log det ratio.
            let quad = linalg::dot(&y, &cg) / spec.sigma_s2;
            let log_odds = log_prior_odds + quad - 0.5 * post.log_det_ratio;
            let p_active = 0.5 * (1.0 + (0.5 * log_odds).tanh());
            let err: f64 = h
                .iter()
                .zip(&est)
                .map(|(a, b)| (a - p_active * b).powi(2))
                .sum();
            acc.update(err)?;
        }
        Ok(())
    })
}
