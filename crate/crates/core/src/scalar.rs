//! Real scalar channel with blockage:
//! `Y = H X + Z`, `H ~ (1−α) δ₀ + α N(0, σ_H²)`, `Z ~ N(0, σ_s²)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::expfam::{ExpFamilyModel, PoincareIngredients};
use crate::linalg::RealMatrix;
use crate::mc::{self, EstimateCI, Stream};
use crate::numeric::{log_add_exp, log_normal_pdf, softmax_first};
use crate::oracle::{self, QuadratureRule};
use crate::Error;

/// Finite-support pilot distribution (a single atom for a deterministic
/// pilot).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPilot {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl ScalarPilot {
    pub fn deterministic(x: f64) -> Self {
        Self {
            values: vec![x],
            probs: vec![1.0],
        }
    }

    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, Error> {
        let bad = |reason: String| Error::InvalidConfig {
            field: "pilot",
            reason,
        };
        if values.is_empty() || values.len() != probs.len() {
            return Err(bad(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(bad(format!("value {v} is not finite")));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(bad(format!("probability {p} is not in [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(bad(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { values, probs })
    }

    pub fn uniform(values: Vec<f64>) -> Result<Self, Error> {
        let p = 1.0 / values.len().max(1) as f64;
        let probs = vec![p; values.len()];
        Self::new(values, probs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `E[f(X)]`, exactly.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(&x, &p)| p * f(x))
            .sum()
    }

    /// Draws a pilot. A single atom consumes no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.values.len() == 1 {
            return self.values[0];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (&x, &p) in self.values.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return x;
            }
        }
        *self.values.last().expect("nonempty pilot")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarChannelSpec {
    pub alpha: f64,
    pub sigma_h2: f64,
    pub sigma_s2: f64,
    pub pilot: ScalarPilot,
}

impl ScalarChannelSpec {
    pub fn new(
        alpha: f64,
        sigma_h2: f64,
        sigma_s2: f64,
        pilot: ScalarPilot,
    ) -> Result<Self, Error> {
        let spec = Self {
            alpha,
            sigma_h2,
            sigma_s2,
            pilot,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "alpha",
                reason: format!("{} is not in (0, 1]", self.alpha),
            });
        }
        if !(self.sigma_h2.is_finite() && self.sigma_h2 > 0.0) {
            return Err(Error::InvalidConfig {
                field: "sigma_h2",
                reason: format!("{} is not positive", self.sigma_h2),
            });
        }
        if !(self.sigma_s2.is_finite() && self.sigma_s2 > 0.0) {
            return Err(Error::InvalidConfig {
                field: "sigma_s2",
                reason: format!("{} is not positive", self.sigma_s2),
            });
        }
        Ok(())
    }

    pub fn with_sigma_s2(&self, sigma_s2: f64) -> Result<Self, Error> {
        Self::new(self.alpha, self.sigma_h2, sigma_s2, self.pilot.clone())
    }

    /// The bound, the MMSE formula and the asymptote all divide by `x`.
    pub fn require_nonzero_pilot(&self) -> Result<(), Error> {
        match self
            .pilot
            .values
            .iter()
            .zip(&self.pilot.probs)
            .find(|(x, p)| **x == 0.0 && **p > 0.0)
        {
            Some(_) => Err(Error::InvalidConfig {
                field: "pilot",
                reason: "has mass at 0".into(),
            }),
            None => Ok(()),
        }
    }

    /// Variance of `Y` given an active channel.
    fn active_var(&self, x: f64) -> f64 {
        x * x * self.sigma_h2 + self.sigma_s2
    }

    /// Log-weights of the blocked and active components of `f(y | x)`, each
    /// shifted by `+ y² / (2 σ_s²) + ½ log(2π σ_s²)`.
    fn shifted_log_weights(&self, y: f64, x: f64) -> (f64, f64) {
        let v = self.active_var(x);
        let blocked = if self.alpha < 1.0 {
            (1.0 - self.alpha).ln()
        } else {
            f64::NEG_INFINITY
        };
        // y²/(2σ_s²) − y²/(2v) = y² x² σ_H² / (2 σ_s² v)
        let active = self.alpha.ln()
            + 0.5 * (self.sigma_s2 / v).ln()
            + y * y * x * x * self.sigma_h2 / (2.0 * self.sigma_s2 * v);
        (blocked, active)
    }

    /// Posterior probability that the channel is active.
    fn active_weight(&self, y: f64, x: f64) -> f64 {
        let (b, a) = self.shifted_log_weights(y, x);
        softmax_first(a, b)
    }
}

/// `log f(y | x)` of the two-component mixture.
pub fn log_marginal_scalar(spec: &ScalarChannelSpec, y: f64, x: f64) -> f64 {
    let blocked = if spec.alpha < 1.0 {
        (1.0 - spec.alpha).ln() + log_normal_pdf(y, spec.sigma_s2)
    } else {
        f64::NEG_INFINITY
    };
    let active = spec.alpha.ln() + log_normal_pdf(y, spec.active_var(x));
    log_add_exp(blocked, active)
}

/// `i(h; y, x) = log f(y | h, x) − log f(y | x)`.
///
/// Evaluated as `−(y − hx)²/(2σ_s²) − LSE(log-weights)` with both mixture
/// exponents kept relative to the blocked component, so nothing overflows
/// and the large `y²/σ_s²` terms never cancel.
pub fn info_density_scalar(spec: &ScalarChannelSpec, h: f64, y: f64, x: f64) -> f64 {
    let (b, a) = spec.shifted_log_weights(y, x);
    let r = y - h * x;
    -r * r / (2.0 * spec.sigma_s2) + y * y / (2.0 * spec.sigma_s2) - log_add_exp(b, a)
}

/// `∂_y i(h; y, x) = (hx − y)/σ_s² + y ((1−w)/σ_s² + w/v)`.
pub fn grad_info_density_scalar(spec: &ScalarChannelSpec, h: f64, y: f64, x: f64) -> f64 {
    let w = spec.active_weight(y, x);
    let v = spec.active_var(x);
    (h * x - y) / spec.sigma_s2 + y * ((1.0 - w) / spec.sigma_s2 + w / v)
}

/// `E[H | Y = y, X = x] = w (x σ_H² / v) y`.
pub fn posterior_mean_scalar(spec: &ScalarChannelSpec, y: f64, x: f64) -> f64 {
    spec.active_weight(y, x) * x * spec.sigma_h2 / spec.active_var(x) * y
}

fn draw_h(spec: &ScalarChannelSpec, rng: &mut Stream) -> f64 {
    let active = rng.random::<f64>() < spec.alpha;
    let g: f64 = rng.sample(StandardNormal);
    if active {
        spec.sigma_h2.sqrt() * g
    } else {
        0.0
    }
}

/// How `Var(i | H = h, X = x)` is computed inside the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMethod {
    /// Gauss–Hermite rule of this order.
    Quadrature(usize),
    /// Nested Monte Carlo with this many draws.
    NestedMc(u64),
}

impl Default for InnerMethod {
    fn default() -> Self {
        Self::Quadrature(200)
    }
}

/// `Var(i | H = h, X = x)` by quadrature over `y = hx + σ_s √2 t`.
pub fn conditional_variance_quadrature(
    spec: &ScalarChannelSpec,
    h: f64,
    x: f64,
    rule: &QuadratureRule,
) -> f64 {
    let scale = (2.0 * spec.sigma_s2).sqrt();
    let norm = std::f64::consts::PI.sqrt();
    let mut mean = 0.0;
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        mean += w * info_density_scalar(spec, h, h * x + scale * t, x);
    }
    mean /= norm;
    let mut var = 0.0;
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let d = info_density_scalar(spec, h, h * x + scale * t, x) - mean;
        var += w * d * d;
    }
    (var / norm).max(0.0)
}

/// `Var(i | H = h, X = x)` from `draws` noise samples (unbiased).
pub fn conditional_variance_mc(
    spec: &ScalarChannelSpec,
    h: f64,
    x: f64,
    draws: u64,
    rng: &mut Stream,
) -> Result<f64, Error> {
    let sd = spec.sigma_s2.sqrt();
    let mut acc = EstimateCI::empty();
    for _ in 0..draws {
        let z: f64 = rng.sample(StandardNormal);
        acc.update(info_density_scalar(spec, h, h * x + sd * z, x))?;
    }
    Ok(acc.variance())
}

/// `E[(σ_s²/X²) Var(i | H, X)]` by outer Monte Carlo over `(H, X)`.
pub fn poincare_lb_scalar(
    spec: &ScalarChannelSpec,
    trials: u64,
    inner: InnerMethod,
    seed: u64,
    chunks: usize,
) -> Result<EstimateCI, Error> {
    spec.require_nonzero_pilot()?;
    let rule = match inner {
        InnerMethod::Quadrature(order) => Some(oracle::gauss_hermite(order)?),
        InnerMethod::NestedMc(0) => {
            return Err(Error::InvalidConfig {
                field: "inner_trials",
                reason: "must be at least 2".into(),
            })
        }
        InnerMethod::NestedMc(_) => None,
    };
    let model_at = |x: f64| ScalarExpFamily { spec, x };
    mc::run_chunked(trials, chunks, seed, |rng, n, acc| {
        for _ in 0..n {
            let x = spec.pilot.sample(rng);
            let h = draw_h(spec, rng);
            let var = match (&rule, inner) {
                (Some(rule), _) => conditional_variance_quadrature(spec, h, x, rule),
                (None, InnerMethod::NestedMc(k)) => conditional_variance_mc(spec, h, x, k, rng)?,
                (None, InnerMethod::Quadrature(_)) => unreachable!(),
            };
            let m = model_at(x);
            acc.update(crate::expfam::poincare_lb_term(
                m.kappa(&[h]),
                m.rho(&[h]),
                var,
            ))?;
        }
        Ok(())
    })
}

/// `E[(σ_s²/X)² (∂_y i)²]` over `(H, X, Z)`.
pub fn mmse_scalar_theorem1(
    spec: &ScalarChannelSpec,
    trials: u64,
    seed: u64,
    chunks: usize,
) -> Result<EstimateCI, Error> {
    spec.require_nonzero_pilot()?;
    let sd = spec.sigma_s2.sqrt();
    mc::run_chunked(trials, chunks, seed, |rng, n, acc| {
        for _ in 0..n {
            let x = spec.pilot.sample(rng);
            let h = draw_h(spec, rng);
            let z: f64 = rng.sample(StandardNormal);
            let y = h * x + sd * z;
            let g = spec.sigma_s2 / x * grad_info_density_scalar(spec, h, y, x);
            acc.update(g * g)?;
        }
        Ok(())
    })
}

/// `E[α σ_H² σ_s² / (α X² σ_H² + σ_s²)]`.
pub fn lmmse_scalar(spec: &ScalarChannelSpec) -> f64 {
    let (a, sh, ss) = (spec.alpha, spec.sigma_h2, spec.sigma_s2);
    spec.pilot.expect(|x| a * sh * ss / (a * x * x * sh + ss))
}

/// High-SNR slope of the bound, `(α/2) E[1/X²]`.
pub fn asymptote_scalar(spec: &ScalarChannelSpec) -> Result<f64, Error> {
    spec.require_nonzero_pilot()?;
    Ok(0.5 * spec.alpha * spec.pilot.expect(|x| 1.0 / (x * x)))
}

/// The scalar channel at a fixed pilot as an exponential family in `h`:
/// `log h(y) = log N(y; 0, σ_s²)`, `η(h) = h`, `T(y) = x y / σ_s²`,
/// `φ(h) = h² x² / (2σ_s²)`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarExpFamily<'a> {
    pub spec: &'a ScalarChannelSpec,
    pub x: f64,
}

impl ExpFamilyModel for ScalarExpFamily<'_> {
    fn obs_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn log_base_measure(&self, y: &[f64]) -> f64 {
        log_normal_pdf(y[0], self.spec.sigma_s2)
    }
    fn natural_param(&self, h: &[f64]) -> Vec<f64> {
        vec![h[0]]
    }
    fn sufficient_stat(&self, y: &[f64]) -> Vec<f64> {
        vec![self.x * y[0] / self.spec.sigma_s2]
    }
    fn suff_stat_jacobian(&self, _y: &[f64]) -> RealMatrix {
        RealMatrix::from_rows(&[vec![self.x / self.spec.sigma_s2]])
    }
    fn log_partition(&self, h: &[f64]) -> f64 {
        h[0] * h[0] * self.x * self.x / (2.0 * self.spec.sigma_s2)
    }
    fn log_lik(&self, y: &[f64], h: &[f64]) -> f64 {
        log_normal_pdf(y[0] - h[0] * self.x, self.spec.sigma_s2)
    }
    fn log_marginal(&self, y: &[f64]) -> f64 {
        log_marginal_scalar(self.spec, y[0], self.x)
    }
    fn posterior_mean_eta(&self, y: &[f64]) -> Vec<f64> {
        vec![posterior_mean_scalar(self.spec, y[0], self.x)]
    }
}

impl PoincareIngredients for ScalarExpFamily<'_> {
    fn kappa(&self, _h: &[f64]) -> f64 {
        1.0 / self.spec.sigma_s2
    }
    fn rho(&self, _h: &[f64]) -> f64 {
        self.spec.sigma_s2 / self.x.abs()
    }
}
