//! Fast invariant suite behind `mmse-poincare check`.

use mmse_poincare_core::expfam::{self, ExpFamilyModel};
use mmse_poincare_core::linalg::{self, ComplexMatrix};
use mmse_poincare_core::mc;
use mmse_poincare_core::oracle;
use mmse_poincare_core::scalar::*;
use mmse_poincare_core::vector::*;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst < tol,
        detail: format!("max residual {worst:.3e} (tol {tol:e})"),
    }
}

fn scalar_specs() -> Vec<ScalarChannelSpec> {
    vec![
        ScalarChannelSpec::new(0.4, 1.0, 1.0, ScalarPilot::deterministic(1.0)).unwrap(),
        ScalarChannelSpec::new(0.4, 1.0, 1e-3, ScalarPilot::deterministic(1.0)).unwrap(),
        ScalarChannelSpec::new(
            0.7,
            2.0,
            0.5,
            ScalarPilot::new(vec![0.5, -1.5], vec![0.3, 0.7]).unwrap(),
        )
        .unwrap(),
        ScalarChannelSpec::new(1.0, 1.0, 1.0, ScalarPilot::deterministic(2.0)).unwrap(),
    ]
}

fn vector_specs() -> Vec<VectorChannelSpec> {
    let mut rng = mc::derive_stream(0xC0FFEE, 0);
    let random: Vec<Complex64> = (0..6)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let wide = ComplexMatrix::new(2, 3, random).unwrap();
    vec![
        VectorChannelSpec::identity_pilot(0.4, 1.0, 1.0, (2, 2, 2)).unwrap(),
        VectorChannelSpec::identity_pilot(0.4, 1.0, 1e-2, (4, 4, 4)).unwrap(),
        VectorChannelSpec::new(
            0.6,
            1.5,
            0.7,
            (2, 1, 3),
            vec![PilotAtom {
                matrix: wide,
                prob: 1.0,
            }],
        )
        .unwrap(),
    ]
}

/// `(h, y, x)` draws from the joint law.
fn scalar_draws(spec: &ScalarChannelSpec, n: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = mc::derive_stream(seed, 0);
    (0..n)
        .map(|_| {
            let x = spec.pilot.sample(&mut rng);
            let active = rng.random::<f64>() < spec.alpha;
            let g: f64 = rng.sample(StandardNormal);
            let h = if active {
                spec.sigma_h2.sqrt() * g
            } else {
                0.0
            };
            let z: f64 = rng.sample(StandardNormal);
            (h, h * x + spec.sigma_s2.sqrt() * z, x)
        })
        .collect()
}

fn vector_draws(cache: &VectorDensityCache, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = mc::derive_stream(seed, 0);
    let hs = (cache.sigma_h2 / 2.0).sqrt();
    let ss = (cache.sigma_s2 / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let active = rng.random::<f64>() < cache.alpha;
            let h: Vec<f64> = (0..cache.param_dim())
                .map(|_| {
                    if active {
                        hs * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    }
                })
                .collect();
            let y: Vec<f64> = cache
                .c
                .matvec(&h)
                .into_iter()
                .map(|m| m + ss * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (h, y)
        })
        .collect()
}

/// `∫ f(y | x) dy` by the trapezoid rule, which converges geometrically
/// for Gaussian integrands once the step is below the narrowest width.
pub fn marginal_mass(spec: &ScalarChannelSpec, x: f64) -> f64 {
    let narrow = spec.sigma_s2.sqrt();
    let wide = (x * x * spec.sigma_h2 + spec.sigma_s2).sqrt();
    let step = narrow / 4.0;
    let n = (40.0 * wide / step).ceil() as i64;
    (-n..=n)
        .map(|k| log_marginal_scalar(spec, k as f64 * step, x).exp())
        .sum::<f64>()
        * step
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn run_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();

    let rule = oracle::gauss_hermite(200).expect("order 200 is in range");
    let moment8 = rule.expect_std_normal(|z| z.powi(8));
    let total: f64 = rule.weights.iter().sum();
    out.push(result(
        "gauss-hermite weights and E[Z^8]",
        (total - std::f64::consts::PI.sqrt())
            .abs()
            .max((moment8 - 105.0).abs() / 105.0),
        1e-9,
    ));

    let (mut grad, mut tre, mut ident, mut norm) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (k, spec) in scalar_specs().iter().enumerate() {
        for (h, y, x) in scalar_draws(spec, 200, 100 + k as u64) {
            let g = grad_info_density_scalar(spec, h, y, x);
            let fd = expfam::fd_gradient(|v| info_density_scalar(spec, h, v[0], x), &[y])[0];
            grad = grad.max((g - fd).abs() / g.abs().max(1.0));
            let model = ScalarExpFamily { spec, x };
            let scale = model.suff_stat_jacobian(&[y])[(0, 0)].abs() * (1.0 + y.abs());
            tre = tre.max(expfam::tre_residual(&model, &[y]) / scale.max(1.0));
            let direct = (h - posterior_mean_scalar(spec, y, x)).powi(2);
            let via = (spec.sigma_s2 / x * g).powi(2);
            ident = ident.max((direct - via).abs() / direct.max(1.0));
        }
        for &x in spec.pilot.values() {
            norm = norm.max((marginal_mass(spec, x) - 1.0).abs());
        }
    }
    out.push(result("scalar gradient vs finite differences", grad, 1e-6));
    out.push(result("scalar TRE residual", tre, 1e-5));
    out.push(result(
        "scalar MMSE gradient identity (pointwise)",
        ident,
        1e-8,
    ));
    out.push(result(
        "scalar marginal normalization (trapezoid)",
        norm,
        1e-8,
    ));

    let (mut grad, mut tre, mut ident, mut be) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut normalization = CheckResult {
        name: "vector normalization (MC, 3 SE)",
        passed: true,
        detail: String::new(),
    };
    for (k, spec) in vector_specs().iter().enumerate() {
        let cache = &spec.caches().expect("check pilots are full rank")[0];
        let draws = vector_draws(cache, 100, 200 + k as u64);
        for (h, y) in draws.iter().take(20) {
            let g = grad_info_density_vector(cache, h, y);
            let fd = expfam::fd_gradient(|v| info_density_vector(cache, h, v), y);
            let scale = g.norm().max(1.0);
            grad = grad.max(
                g.0.iter()
                    .zip(&fd)
                    .map(|(a, b)| (a - b).abs() / scale)
                    .fold(0.0, f64::max),
            );
            let model = VectorExpFamily { cache };
            let smax = linalg::singular_values(&cache.c).0[0];
            let tre_scale = 2.0 / spec.sigma_s2 * smax * (1.0 + linalg::norm2(y));
            tre = tre.max(expfam::tre_residual(&model, y) / tre_scale.max(1.0));
        }
        for (h, y) in &draws {
            let pm = posterior_mean_vector(cache, y);
            let direct: f64 = h.iter().zip(&pm.0).map(|(a, b)| (a - b) * (a - b)).sum();
            ident = ident.max((direct - theorem1_term_vector(cache, h, y)).abs() / direct.max(1.0));
        }
        let model = VectorExpFamily { cache };
        let probes: Vec<Vec<f64>> = draws.iter().take(3).map(|d| d.1.clone()).collect();
        let zero = vec![0.0; cache.param_dim()];
        be = be.max(rel(
            expfam::bakry_emery_constant(&model, &zero, &probes),
            cache.kappa,
        ));

        // E_{Y ~ f(y | x)}[exp(i(h; Y))] = 1 for a fixed active h. At high
        // SNR the mass sits on rare draws and the estimator is useless.
        if spec.sigma_s2 < 0.5 {
            continue;
        }
        let h = &draws
            .iter()
            .find(|d| d.0.iter().any(|v| *v != 0.0))
            .unwrap_or(&draws[0])
            .0;
        let est = mc::run_chunked(20_000, 8, 300 + k as u64, |rng, n, acc| {
            let hs = (cache.sigma_h2 / 2.0).sqrt();
            let ss = (cache.sigma_s2 / 2.0).sqrt();
            for _ in 0..n {
                let active = rng.random::<f64>() < cache.alpha;
                let hh: Vec<f64> = (0..cache.param_dim())
                    .map(|_| {
                        if active {
                            hs * rng.sample::<f64, _>(StandardNormal)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let y: Vec<f64> = cache
                    .c
                    .matvec(&hh)
                    .into_iter()
                    .map(|m| m + ss * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                acc.update(info_density_vector(cache, h, &y).exp())?;
            }
            Ok(())
        });
        match est {
            Ok(e) if e.covers_within(1.0, 3.0) => {}
            Ok(e) => {
                normalization.passed = false;
                normalization.detail = format!("spec {k}: {} +- {}", e.mean(), e.std_error());
            }
            Err(err) => {
                normalization.passed = false;
                normalization.detail = format!("spec {k}: {err}");
            }
        }
    }
    if normalization.passed {
        normalization.detail = "E[exp(i)] covers 1 for every test channel".into();
    }
    out.push(result("vector gradient vs finite differences", grad, 1e-6));
    out.push(result("vector TRE residual", tre, 1e-5));
    out.push(result(
        "vector MMSE gradient identity (pointwise)",
        ident,
        1e-8,
    ));
    out.push(result(
        "vector Bakry-Emery constant = 2/sigma_s^2",
        be,
        1e-4,
    ));
    out.push(normalization);

    // realify(H X) = C_X realify(H)
    let mut rng = mc::derive_stream(0xBEEF, 0);
    let mut cplx = |r: usize, c: usize| {
        let data = (0..r * c)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        ComplexMatrix::new(r, c, data).unwrap()
    };
    let (x, h) = (cplx(3, 4), cplx(2, 3));
    let lhs =
        linalg::build_sensing_matrix(&x, 2).matvec(&linalg::realify_columns(&h.transpose()).0);
    let rhs = linalg::realify_columns(&h.matmul(&x).unwrap().transpose());
    let worst = lhs
        .iter()
        .zip(&rhs.0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(result("realification homomorphism", worst, 1e-12));

    let fig2 = VectorChannelSpec::identity_pilot(0.4, 1.0, 1.0, (4, 4, 4)).unwrap();
    let fig1 = ScalarChannelSpec::new(0.4, 1.0, 1.0, ScalarPilot::deterministic(1.0)).unwrap();
    let closed = (lmmse_vector(&fig2).map_or(f64::INFINITY, |v| (v - 16.0 / 3.5).abs()))
        .max((lmmse_scalar(&fig1) - 0.4 / 1.4).abs());
    out.push(result("LMMSE closed forms", closed, 1e-12));
    out
}
