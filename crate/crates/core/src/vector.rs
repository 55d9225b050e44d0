//! Realified MIMO channel with blockage:
//! `Y = C_X H + Z`, `H ~ (1−α) δ₀ + α N(0, (σ_H²/2) I_{2NM})`,
//! `Z ~ N(0, (σ_s²/2) I_{2NT})`, `C_X = I_N ⊗ realify_mat(X^T)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::expfam::{self, ExpFamilyModel, PoincareIngredients};
use crate::linalg::{self, Cholesky, ComplexMatrix, RealMatrix, RealVector};
use crate::mc::{self, EstimateCI, Stream};
use crate::numeric::{log_add_exp, softmax_first, LN_2PI};
use crate::Error;

/// Which singular-value floor enters the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoRule {
    /// `ρ = σ_min((σ_s²/2) C_X^+) = (σ_s²/2) / σ_max(C_X)`.
    #[default]
    Spectral,
    /// `ρ = (σ_s²/2) / ‖C_X‖_F`, the relaxation behind the closed-form
    /// high-SNR slope.
    Frobenius,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotAtom {
    /// `M x T`.
    pub matrix: ComplexMatrix,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorChannelSpec {
    pub alpha: f64,
    pub sigma_h2: f64,
    pub sigma_s2: f64,
    pub m: usize,
    pub n: usize,
    pub t: usize,
    atoms: Vec<PilotAtom>,
    /// Average power budget `P_T`: every pilot must satisfy `tr(R_X) ≤ M P_T`.
    pub power_budget: Option<f64>,
    pub rho_rule: RhoRule,
}

impl VectorChannelSpec {
    pub fn new(
        alpha: f64,
        sigma_h2: f64,
        sigma_s2: f64,
        (m, n, t): (usize, usize, usize),
        atoms: Vec<PilotAtom>,
    ) -> Result<Self, Error> {
        let spec = Self {
            alpha,
            sigma_h2,
            sigma_s2,
            m,
            n,
            t,
            atoms,
            power_budget: None,
            rho_rule: RhoRule::Spectral,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Deterministic pilot `X = I` (rectangular `M x T`).
    pub fn identity_pilot(
        alpha: f64,
        sigma_h2: f64,
        sigma_s2: f64,
        (m, n, t): (usize, usize, usize),
    ) -> Result<Self, Error> {
        let atom = PilotAtom {
            matrix: ComplexMatrix::identity_rect(m, t),
            prob: 1.0,
        };
        Self::new(alpha, sigma_h2, sigma_s2, (m, n, t), vec![atom])
    }

    pub fn with_power_budget(mut self, p_t: f64) -> Result<Self, Error> {
        self.power_budget = Some(p_t);
        self.validate()?;
        Ok(self)
    }

    pub fn with_rho_rule(mut self, rule: RhoRule) -> Self {
        self.rho_rule = rule;
        self
    }

    pub fn with_sigma_s2(&self, sigma_s2: f64) -> Result<Self, Error> {
        let mut s = self.clone();
        s.sigma_s2 = sigma_s2;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidConfig { field, reason });
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("{} is not in (0, 1]", self.alpha));
        }
        if !(self.sigma_h2.is_finite() && self.sigma_h2 > 0.0) {
            return bad("sigma_h2", format!("{} is not positive", self.sigma_h2));
        }
        if !(self.sigma_s2.is_finite() && self.sigma_s2 > 0.0) {
            return bad("sigma_s2", format!("{} is not positive", self.sigma_s2));
        }
        if self.m == 0 || self.n == 0 || self.t == 0 {
            return bad(
                "dimensions",
                format!(
                    "M, N, T = {}, {}, {} must be positive",
                    self.m, self.n, self.t
                ),
            );
        }
        if self.atoms.is_empty() {
            return bad("pilot", "no pilot matrices".into());
        }
        let total: f64 = self.atoms.iter().map(|a| a.prob).sum();
        if self
            .atoms
            .iter()
            .any(|a| !(a.prob.is_finite() && a.prob >= 0.0))
            || (total - 1.0).abs() > 1e-9
        {
            return bad(
                "pilot",
                format!("probabilities must be nonnegative and sum to 1 (sum {total})"),
            );
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.matrix.shape() != (self.m, self.t) {
                return bad(
                    "pilot",
                    format!(
                        "matrix {i} is {:?}, expected M x T = {:?}",
                        atom.matrix.shape(),
                        (self.m, self.t)
                    ),
                );
            }
            if atom
                .matrix
                .as_slice()
                .iter()
                .any(|z| !(z.re.is_finite() && z.im.is_finite()))
            {
                return bad("pilot", format!("matrix {i} has non-finite entries"));
            }
            if self.t < self.m {
                return bad(
                    "pilot",
                    format!(
                        "sensing matrix is rank deficient: T = {} < M = {}",
                        self.t, self.m
                    ),
                );
            }
            // C_X has the singular values of realify_mat(X^T).
            let block = linalg::realify_mat(&atom.matrix.transpose());
            let sv = linalg::singular_values(&block);
            let (smax, smin) = (sv.0[0], *sv.0.last().expect("nonempty"));
            if smin <= linalg::rank_tolerance(&block, smax) {
                return bad(
                    "pilot",
                    format!("sensing matrix {i} is rank deficient (sigma_min = {smin:e})"),
                );
            }
            if let Some(p_t) = self.power_budget {
                let power = linalg::sample_covariance(&atom.matrix).trace().re;
                if power > self.m as f64 * p_t * (1.0 + 1e-12) {
                    return bad(
                        "power_budget",
                        format!(
                            "pilot {i} has tr(R_X) = {power} > M P_T = {}",
                            self.m as f64 * p_t
                        ),
                    );
                }
            }
        }
        Ok(())
    }

    pub fn pilot_atoms(&self) -> &[PilotAtom] {
        &self.atoms
    }

    /// Index of a drawn pilot. A single atom consumes no randomness.
    pub fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.atoms.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            acc += a.prob;
            if u < acc {
                return i;
            }
        }
        self.atoms.len() - 1
    }

    /// Channel dimension `2NM`.
    pub fn param_dim(&self) -> usize {
        2 * self.n * self.m
    }

    /// Observation dimension `2NT`.
    pub fn obs_dim(&self) -> usize {
        2 * self.n * self.t
    }

    /// One cache per pilot atom.
    pub fn caches(&self) -> Result<Vec<VectorDensityCache>, Error> {
        self.atoms
            .iter()
            .map(|a| VectorDensityCache::new(self, &a.matrix))
            .collect()
    }
}

/// Everything about `f(y | x)` that depends on the pilot and `σ_s²`.
#[derive(Debug, Clone)]
pub struct VectorDensityCache {
    pub alpha: f64,
    pub sigma_h2: f64,
    pub sigma_s2: f64,
    /// `C_X`, `2NT x 2NM`.
    pub c: RealMatrix,
    /// `Σ_{Y|X} = (σ_H²/2) C C^T + (σ_s²/2) I`.
    pub sigma_yx: RealMatrix,
    pub sigma_yx_inv: RealMatrix,
    pub log_det_sigma_yx: f64,
    /// `log det((σ_s²/2) I)`.
    pub log_det_noise: f64,
    pub c_pinv: RealMatrix,
    /// Wiener gain `(σ_H²/2) C^T Σ^{-1}`.
    pub gain: RealMatrix,
    pub kappa: f64,
    pub rho: f64,
}

pub const INVERSE_RESIDUAL_TOL: f64 = 1e-8;

impl VectorDensityCache {
    pub fn new(spec: &VectorChannelSpec, pilot: &ComplexMatrix) -> Result<Self, Error> {
        let c = linalg::build_sensing_matrix(pilot, spec.n);
        let k = c.rows();
        let ct = c.transpose();
        let sigma_yx = c
            .matmul(&ct)?
            .scaled(spec.sigma_h2 / 2.0)
            .add(&RealMatrix::identity(k).scaled(spec.sigma_s2 / 2.0))?;
        let chol = Cholesky::new(&sigma_yx)?;
        let sigma_yx_inv = chol.inverse();
        let residual = sigma_yx
            .matmul(&sigma_yx_inv)?
            .max_abs_diff(&RealMatrix::identity(k));
        if residual.is_nan() || residual >= INVERSE_RESIDUAL_TOL {
            return Err(Error::NonFinite {
                what: "observation covariance inverse (residual too large)",
            });
        }
        let c_pinv = linalg::pinv(&c)?;
        let gain = ct.matmul(&sigma_yx_inv)?.scaled(spec.sigma_h2 / 2.0);
        let (kappa, rho) = kappa_rho(&c, spec.sigma_s2, spec.rho_rule);
        Ok(Self {
            alpha: spec.alpha,
            sigma_h2: spec.sigma_h2,
            sigma_s2: spec.sigma_s2,
            log_det_sigma_yx: chol.log_det(),
            log_det_noise: k as f64 * (spec.sigma_s2 / 2.0).ln(),
            c,
            sigma_yx,
            sigma_yx_inv,
            c_pinv,
            gain,
            kappa,
            rho,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.c.rows()
    }

    pub fn param_dim(&self) -> usize {
        self.c.cols()
    }

    /// `(log-weight blocked, log-weight active)` of the mixture at `y`,
    /// given `y^T Σ^{-1} y`.
    fn log_weights(&self, y: &[f64], quad: f64) -> (f64, f64) {
        let k = self.obs_dim() as f64;
        let blocked = if self.alpha < 1.0 {
            (1.0 - self.alpha).ln()
                - 0.5 * (k * LN_2PI + self.log_det_noise + 2.0 * linalg::dot(y, y) / self.sigma_s2)
        } else {
            f64::NEG_INFINITY
        };
        let active = self.alpha.ln() - 0.5 * (k * LN_2PI + self.log_det_sigma_yx + quad);
        (blocked, active)
    }

    fn log_cond(&self, ch: &[f64], y: &[f64]) -> f64 {
        let k = self.obs_dim() as f64;
        let r2: f64 = y.iter().zip(ch).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * (k * LN_2PI + self.log_det_noise) - r2 / self.sigma_s2
    }
}

fn kappa_rho(c: &RealMatrix, sigma_s2: f64, rule: RhoRule) -> (f64, f64) {
    let kappa = 2.0 / sigma_s2;
    let norm = match rule {
        RhoRule::Spectral => linalg::singular_values(c).0[0],
        RhoRule::Frobenius => c.frobenius_norm(),
    };
    (kappa, 0.5 * sigma_s2 / norm)
}

/// `(κ, ρ)` of a built cache.
pub fn kappa_rho_vector(cache: &VectorDensityCache) -> (f64, f64) {
    (cache.kappa, cache.rho)
}

/// `log f(y | x)`.
pub fn log_marginal_vector(cache: &VectorDensityCache, y: &[f64]) -> f64 {
    let s = cache.sigma_yx_inv.matvec(y);
    let (b, a) = cache.log_weights(y, linalg::dot(y, &s));
    log_add_exp(b, a)
}

/// `log f(y | h, x) − log f(y | x)`.
pub fn info_density_vector(cache: &VectorDensityCache, h: &[f64], y: &[f64]) -> f64 {
    let ch = cache.c.matvec(h);
    cache.log_cond(&ch, y) - log_marginal_vector(cache, y)
}

/// Reusable buffers for the hot loops.
struct Scratch {
    s: Vec<f64>,
    y: Vec<f64>,
}

impl Scratch {
    fn new(k: usize) -> Self {
        Self {
            s: vec![0.0; k],
            y: vec![0.0; k],
        }
    }
}

fn info_density_with_mean(cache: &VectorDensityCache, ch: &[f64], y: &[f64], s: &mut [f64]) -> f64 {
    cache.sigma_yx_inv.matvec_into(y, s);
    let (b, a) = cache.log_weights(y, linalg::dot(y, s));
    cache.log_cond(ch, y) - log_add_exp(b, a)
}

/// Posterior probability that the channel is active.
pub fn active_weight(cache: &VectorDensityCache, y: &[f64]) -> f64 {
    let s = cache.sigma_yx_inv.matvec(y);
    let (b, a) = cache.log_weights(y, linalg::dot(y, &s));
    softmax_first(a, b)
}

/// `∇_y i = (2/σ_s²)(C h − y) + (1−w)(2/σ_s²) y + w Σ^{-1} y`.
pub fn grad_info_density_vector(cache: &VectorDensityCache, h: &[f64], y: &[f64]) -> RealVector {
    let s = cache.sigma_yx_inv.matvec(y);
    let (b, a) = cache.log_weights(y, linalg::dot(y, &s));
    let w = softmax_first(a, b);
    let ch = cache.c.matvec(h);
    let g = 2.0 / cache.sigma_s2;
    RealVector(
        ch.iter()
            .zip(y)
            .zip(&s)
            .map(|((c, yv), sv)| g * (c - yv) + (1.0 - w) * g * yv + w * sv)
            .collect(),
    )
}

/// `E[H | Y = y, X] = w (σ_H²/2) C^T Σ^{-1} y`.
pub fn posterior_mean_vector(cache: &VectorDensityCache, y: &[f64]) -> RealVector {
    let w = active_weight(cache, y);
    RealVector(cache.gain.matvec(y).into_iter().map(|v| w * v).collect())
}

/// One gradient-identity sample `‖(σ_s²/2) C^+ ∇_y i‖²`.
pub fn theorem1_term_vector(cache: &VectorDensityCache, h: &[f64], y: &[f64]) -> f64 {
    let grad = grad_info_density_vector(cache, h, y);
    expfam::theorem1_mmse_term(&grad.0, &cache.c_pinv) * (cache.sigma_s2 / 2.0).powi(2)
}

/// `‖H − E[H | y]‖²` written as the mixture ratio
/// `[(1−α) N₀(y) h + α N₁(y) (h − G y)] / [(1−α) N₀(y) + α N₁(y)]`,
/// both weights divided by the larger one before exponentiating.
pub fn mmse_ratio_term(cache: &VectorDensityCache, h: &[f64], y: &[f64]) -> f64 {
    let s = cache.sigma_yx_inv.matvec(y);
    let (b, a) = cache.log_weights(y, linalg::dot(y, &s));
    let top = a.max(b);
    let (wb, wa) = ((b - top).exp(), (a - top).exp());
    let gy = cache.gain.matvec(y);
    h.iter()
        .zip(&gy)
        .map(|(hv, g)| {
            let e = (wb * hv + wa * (hv - g)) / (wb + wa);
            e * e
        })
        .sum()
}

fn draw_h(alpha: f64, sd: f64, h: &mut [f64], rng: &mut Stream) -> bool {
    let active = rng.random::<f64>() < alpha;
    for v in h.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v = if active { sd * g } else { 0.0 };
    }
    active
}

fn draw_y(cache: &VectorDensityCache, ch: &[f64], y: &mut [f64], rng: &mut Stream) {
    let sd = (cache.sigma_s2 / 2.0).sqrt();
    for (v, c) in y.iter_mut().zip(ch) {
        let z: f64 = rng.sample(StandardNormal);
        *v = c + sd * z;
    }
}

/// Unbiased `Var(i | H = h, X)` from `draws` noise samples.
pub fn inner_variance_vector(
    cache: &VectorDensityCache,
    h: &[f64],
    draws: u64,
    rng: &mut Stream,
) -> Result<f64, Error> {
    let ch = cache.c.matvec(h);
    let mut buf = Scratch::new(cache.obs_dim());
    inner_variance_with_mean(cache, &ch, draws, rng, &mut buf)
}

fn inner_variance_with_mean(
    cache: &VectorDensityCache,
    ch: &[f64],
    draws: u64,
    rng: &mut Stream,
    buf: &mut Scratch,
) -> Result<f64, Error> {
    let mut acc = EstimateCI::empty();
    for _ in 0..draws {
        draw_y(cache, ch, &mut buf.y, rng);
        acc.update(info_density_with_mean(cache, ch, &buf.y, &mut buf.s))?;
    }
    Ok(acc.variance())
}

/// `E[ρ² κ Var(i | H, X)]`: `trials` outer draws of `(H, X)`, each with
/// `inner_trials` noise draws.
pub fn poincare_lb_vector(
    spec: &VectorChannelSpec,
    trials: u64,
    inner_trials: u64,
    seed: u64,
    chunks: usize,
) -> Result<EstimateCI, Error> {
    if inner_trials < 2 {
        return Err(Error::InvalidConfig {
            field: "inner_trials",
            reason: "must be at least 2".into(),
        });
    }
    let caches = spec.caches()?;
    let sd_h = (spec.sigma_h2 / 2.0).sqrt();
    mc::run_chunked(trials, chunks, seed, |rng, n, acc| {
        let mut h = vec![0.0; spec.param_dim()];
        let mut buf = Scratch::new(spec.obs_dim());
        for _ in 0..n {
            let cache = &caches[spec.sample_atom(rng)];
            draw_h(spec.alpha, sd_h, &mut h, rng);
            let ch = cache.c.matvec(&h);
            let var = inner_variance_with_mean(cache, &ch, inner_trials, rng, &mut buf)?;
            acc.update(expfam::poincare_lb_term(cache.kappa, cache.rho, var))?;
        }
        Ok(())
    })
}

/// MMSE through the pseudo-inverse-gradient identity, averaged over
/// `(H, X, Z)`.
pub fn mmse_vector_theorem1(
    spec: &VectorChannelSpec,
    trials: u64,
    seed: u64,
    chunks: usize,
) -> Result<EstimateCI, Error> {
    let caches = spec.caches()?;
    let sd_h = (spec.sigma_h2 / 2.0).sqrt();
    mc::run_chunked(trials, chunks, seed, |rng, n, acc| {
        let mut h = vec![0.0; spec.param_dim()];
        let mut y = vec![0.0; spec.obs_dim()];
        for _ in 0..n {
            let cache = &caches[spec.sample_atom(rng)];
            draw_h(spec.alpha, sd_h, &mut h, rng);
            let ch = cache.c.matvec(&h);
            draw_y(cache, &ch, &mut y, rng);
            acc.update(theorem1_term_vector(cache, &h, &y))?;
        }
        Ok(())
    })
}

/// `(N σ_s² / (4T)) E[tr((R + σ_s²/(2αTσ_H²) I_{2M})^{-1})]`.
pub fn lmmse_vector(spec: &VectorChannelSpec) -> Result<f64, Error> {
    let (n, t) = (spec.n as f64, spec.t as f64);
    let shift = spec.sigma_s2 / (2.0 * spec.alpha * t * spec.sigma_h2);
    let mut total = 0.0;
    for atom in &spec.atoms {
        let r = linalg::realified_sample_covariance(&atom.matrix);
        let a = r.add(&RealMatrix::identity(r.rows()).scaled(shift))?;
        total += atom.prob * Cholesky::new(&a)?.inverse().trace();
    }
    Ok(n * spec.sigma_s2 / (4.0 * t) * total)
}

/// High-SNR floor slope `(α/4) / tr(E[R])`.
pub fn asymptote_vector(spec: &VectorChannelSpec) -> f64 {
    let tr: f64 = spec
        .atoms
        .iter()
        .map(|a| a.prob * linalg::realified_sample_covariance(&a.matrix).trace())
        .sum();
    0.25 * spec.alpha / tr
}

/// The vector channel at a fixed pilot as an exponential family in `h`:
/// `log h(y) = −‖y‖²/σ_s² − NT log(π σ_s²)`, `η(h) = h`,
/// `T(y) = (2/σ_s²) C^T y`, `φ(h) = ‖C h‖²/σ_s²`.
#[derive(Debug, Clone, Copy)]
pub struct VectorExpFamily<'a> {
    pub cache: &'a VectorDensityCache,
}

impl ExpFamilyModel for VectorExpFamily<'_> {
    fn obs_dim(&self) -> usize {
        self.cache.obs_dim()
    }
    fn param_dim(&self) -> usize {
        self.cache.param_dim()
    }
    fn log_base_measure(&self, y: &[f64]) -> f64 {
        let s2 = self.cache.sigma_s2;
        -linalg::dot(y, y) / s2 - 0.5 * y.len() as f64 * (std::f64::consts::PI * s2).ln()
    }
    fn natural_param(&self, h: &[f64]) -> Vec<f64> {
        h.to_vec()
    }
    fn sufficient_stat(&self, y: &[f64]) -> Vec<f64> {
        let g = 2.0 / self.cache.sigma_s2;
        self.cache
            .c
            .transpose()
            .matvec(y)
            .into_iter()
            .map(|v| g * v)
            .collect()
    }
    fn suff_stat_jacobian(&self, _y: &[f64]) -> RealMatrix {
        self.cache.c.scaled(2.0 / self.cache.sigma_s2)
    }
    fn log_partition(&self, h: &[f64]) -> f64 {
        let ch = self.cache.c.matvec(h);
        linalg::dot(&ch, &ch) / self.cache.sigma_s2
    }
    fn log_lik(&self, y: &[f64], h: &[f64]) -> f64 {
        self.cache.log_cond(&self.cache.c.matvec(h), y)
    }
    fn log_marginal(&self, y: &[f64]) -> f64 {
        log_marginal_vector(self.cache, y)
    }
    fn posterior_mean_eta(&self, y: &[f64]) -> Vec<f64> {
        posterior_mean_vector(self.cache, y).0
    }
}

impl PoincareIngredients for VectorExpFamily<'_> {
    fn kappa(&self, _h: &[f64]) -> f64 {
        self.cache.kappa
    }
    fn rho(&self, _h: &[f64]) -> f64 {
        self.cache.rho
    }
}
