use mmse_poincare_core::linalg::{self, Cholesky, ComplexMatrix, RealMatrix};
use mmse_poincare_core::mc::{self, combined_std_error, EstimateCI};
use mmse_poincare_core::numeric::LN_2PI;
use mmse_poincare_core::oracle;
use mmse_poincare_core::vector::*;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

fn identity(alpha: f64, sigma_s2: f64, dim: usize) -> VectorChannelSpec {
    VectorChannelSpec::identity_pilot(alpha, 1.0, sigma_s2, (dim, dim, dim)).unwrap()
}

fn random_pilot(m: usize, t: usize, seed: u64) -> ComplexMatrix {
    let mut rng = mc::derive_stream(seed, 99);
    let data = (0..m * t)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    ComplexMatrix::new(m, t, data).unwrap()
}

fn draw_h(spec: &VectorChannelSpec, rng: &mut mc::Stream, active: bool) -> Vec<f64> {
    let sd = (spec.sigma_h2 / 2.0).sqrt();
    (0..spec.param_dim())
        .map(|_| {
            if active {
                sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        })
        .collect()
}

fn draw_y(cache: &VectorDensityCache, h: &[f64], rng: &mut mc::Stream) -> Vec<f64> {
    let sd = (cache.sigma_s2 / 2.0).sqrt();
    cache
        .c
        .matvec(h)
        .into_iter()
        .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[test]
fn gaussian_case_mmse_is_wiener() {
    let spec = identity(1.0, 1.0, 2);
    let t1 = mmse_vector_theorem1(&spec, 200_000, 1, 16).unwrap();
    let or = oracle::vector_mmse_oracle(&spec, 200_000, 2, 16).unwrap();
    assert!(t1.covers_within(2.0, 3.0), "{t1:?}");
    assert!(or.covers_within(2.0, 3.0), "{or:?}");
    assert!((lmmse_vector(&spec).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn oracle_saturates_at_prior_energy() {
    let or = oracle::vector_mmse_oracle(&identity(0.4, 1e3, 2), 200_000, 3, 16).unwrap();
    assert!((or.mean() - 1.6).abs() <= 0.02 * 1.6, "{or:?}");
}

#[test]
fn theorem1_mmse_agrees_with_oracle() {
    let spec = identity(0.4, 1.0, 4);
    let t1 = mmse_vector_theorem1(&spec, 1_000_000, 4, 64).unwrap();
    let or = oracle::vector_mmse_oracle(&spec, 1_000_000, 5, 64).unwrap();
    assert!(
        (t1.mean() - or.mean()).abs() <= 3.0 * combined_std_error(&t1, &or),
        "{t1:?} vs {or:?}"
    );

    let atoms = vec![
        PilotAtom {
            matrix: random_pilot(2, 3, 6),
            prob: 0.3,
        },
        PilotAtom {
            matrix: random_pilot(2, 3, 7),
            prob: 0.7,
        },
    ];
    let spec = VectorChannelSpec::new(0.6, 1.5, 0.4, (2, 2, 3), atoms).unwrap();
    let t1 = mmse_vector_theorem1(&spec, 200_000, 8, 16).unwrap();
    let or = oracle::vector_mmse_oracle(&spec, 200_000, 9, 16).unwrap();
    assert!(
        (t1.mean() - or.mean()).abs() <= 3.0 * combined_std_error(&t1, &or),
        "{t1:?} vs {or:?}"
    );
}

#[test]
fn pointwise_identity_against_oracle_posterior() {
    // The oracle replays the same draws: its per-sample error equals the
    // pseudo-inverse-gradient term.
    let spec = VectorChannelSpec::new(
        0.5,
        0.8,
        0.3,
        (2, 2, 3),
        vec![PilotAtom {
            matrix: random_pilot(2, 3, 10),
            prob: 1.0,
        }],
    )
    .unwrap();
    let a = mmse_vector_theorem1(&spec, 1_000, 11, 1).unwrap();
    let b = oracle::vector_mmse_oracle(&spec, 1_000, 11, 1).unwrap();
    assert!((a.mean() - b.mean()).abs() < 1e-10);
    assert!((a.m2() - b.m2()).abs() < 1e-8);
}

/// MSE of the best affine estimator of `H` from `Y`, fitted on one sample
/// and evaluated on a fresh one.
fn empirical_linear_mse(spec: &VectorChannelSpec, trials: u64, seed: u64) -> EstimateCI {
    let cache = &spec.caches().unwrap()[0];
    let (d, k) = (spec.param_dim(), spec.obs_dim());
    let sample = |rng: &mut mc::Stream| {
        let active = rng.random::<f64>() < spec.alpha;
        let h = draw_h(spec, rng, active);
        let y = draw_y(cache, &h, rng);
        (h, y)
    };
    let mut rng = mc::derive_stream(seed, 0);
    let mut sum_h = vec![0.0; d];
    let mut sum_y = vec![0.0; k];
    let mut hy = RealMatrix::zeros(d, k);
    let mut yy = RealMatrix::zeros(k, k);
    for _ in 0..trials {
        let (h, y) = sample(&mut rng);
        for i in 0..k {
            sum_y[i] += y[i];
            for j in 0..k {
                yy[(i, j)] += y[i] * y[j];
            }
        }
        for i in 0..d {
            sum_h[i] += h[i];
            for j in 0..k {
                hy[(i, j)] += h[i] * y[j];
            }
        }
    }
    let n = trials as f64;
    let mh: Vec<f64> = sum_h.iter().map(|v| v / n).collect();
    let my: Vec<f64> = sum_y.iter().map(|v| v / n).collect();
    for i in 0..k {
        for j in 0..k {
            yy[(i, j)] = yy[(i, j)] / n - my[i] * my[j];
        }
    }
    for i in 0..d {
        for j in 0..k {
            hy[(i, j)] = hy[(i, j)] / n - mh[i] * my[j];
        }
    }
    // beta = Cov(h, y) Cov(y)^{-1}
    let beta = hy.matmul(&Cholesky::new(&yy).unwrap().inverse()).unwrap();
    let mut rng = mc::derive_stream(seed, 1);
    let mut acc = EstimateCI::empty();
    for _ in 0..trials {
        let (h, y) = sample(&mut rng);
        let centered: Vec<f64> = y.iter().zip(&my).map(|(a, b)| a - b).collect();
        let est = beta.matvec(&centered);
        let err: f64 = (0..d).map(|i| (h[i] - mh[i] - est[i]).powi(2)).sum();
        acc.update(err).unwrap();
    }
    acc
}

#[test]
fn lmmse_matches_empirical_regression() {
    let spec = identity(0.4, 1.0, 2);
    let mse = empirical_linear_mse(&spec, 1_000_000, 21);
    let want = lmmse_vector(&spec).unwrap();
    assert!(mse.covers_within(want, 3.0), "{mse:?} vs {want}");

    let spec = VectorChannelSpec::new(
        0.7,
        1.2,
        0.5,
        (2, 2, 2),
        vec![PilotAtom {
            matrix: random_pilot(2, 2, 22),
            prob: 1.0,
        }],
    )
    .unwrap();
    let mse = empirical_linear_mse(&spec, 1_000_000, 23);
    let want = lmmse_vector(&spec).unwrap();
    assert!(mse.covers_within(want, 3.0), "{mse:?} vs {want}");
}

#[test]
fn lmmse_saturates_at_prior_energy() {
    let spec = identity(1.0, 1e12, 2);
    assert!((lmmse_vector(&spec).unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn inner_variance_limits() {
    let spec = identity(0.4, 1e-6, 2);
    let cache = &spec.caches().unwrap()[0];
    let mut rng = mc::derive_stream(31, 0);
    let h = draw_h(&spec, &mut rng, true);
    let v = inner_variance_vector(cache, &h, 20_000, &mut rng).unwrap();
    assert!((v - 4.0).abs() <= 0.03 * 4.0, "{v}");
    let v0 = inner_variance_vector(cache, &[0.0; 8], 20_000, &mut rng).unwrap();
    assert!(v0 < 1e-2, "{v0}");
}

#[test]
fn info_density_normalizes() {
    let spec = VectorChannelSpec::new(
        0.4,
        1.0,
        0.7,
        (2, 1, 2),
        vec![PilotAtom {
            matrix: random_pilot(2, 2, 40),
            prob: 1.0,
        }],
    )
    .unwrap();
    let cache = &spec.caches().unwrap()[0];
    let mut rng = mc::derive_stream(41, 0);
    let h = draw_h(&spec, &mut rng, true);
    // E_{Y ~ f(y|x)}[exp(i(h; Y))] = 1
    let forward = mc::run_chunked(100_000, 8, 42, |rng, n, acc| {
        for _ in 0..n {
            let active = rng.random::<f64>() < spec.alpha;
            let hh = draw_h(&spec, rng, active);
            let y = draw_y(cache, &hh, rng);
            acc.update(info_density_vector(cache, &h, &y).exp())?;
        }
        Ok(())
    })
    .unwrap();
    assert!(forward.covers_within(1.0, 3.0), "{forward:?}");
    // E_{Y ~ f(y|h,x)}[exp(−i(h; Y))] = 1. The estimator only has finite
    // variance when every mixture covariance is below σ_s² I.
    let wide = identity(0.4, 4.0, 2);
    let wide_cache = &wide.caches().unwrap()[0];
    let h = draw_h(&wide, &mut rng, true);
    let reverse = mc::run_chunked(100_000, 8, 43, |rng, n, acc| {
        for _ in 0..n {
            let y = draw_y(wide_cache, &h, rng);
            acc.update((-info_density_vector(wide_cache, &h, &y)).exp())?;
        }
        Ok(())
    })
    .unwrap();
    assert!(reverse.covers_within(1.0, 3.0), "{reverse:?}");
}

#[test]
fn marginal_normalizes_against_reference() {
    let spec = identity(0.4, 0.5, 1);
    let cache = &spec.caches().unwrap()[0];
    let k = cache.obs_dim();
    let tau: f64 = 1.5;
    let est = mc::run_chunked(100_000, 8, 51, |rng, n, acc| {
        for _ in 0..n {
            let y: Vec<f64> = (0..k)
                .map(|_| tau.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let log_ref = -0.5 * (k as f64 * (LN_2PI + tau.ln()) + linalg::dot(&y, &y) / tau);
            acc.update((log_marginal_vector(cache, &y) - log_ref).exp())?;
        }
        Ok(())
    })
    .unwrap();
    assert!(est.covers_within(1.0, 3.0), "{est:?}");
}

#[test]
fn tre_on_single_antenna() {
    let spec = identity(0.4, 0.6, 1);
    let cache = &spec.caches().unwrap()[0];
    let model = VectorExpFamily { cache };
    let mut rng = mc::derive_stream(61, 0);
    for _ in 0..50 {
        let y: Vec<f64> = (0..2)
            .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert!(mmse_poincare_core::expfam::tre_residual(&model, &y) < 1e-5);
    }
}

#[test]
fn bound_below_mmse_below_lmmse() {
    for (i, s2) in [1e-3, 1e-1, 1.0, 5.0].into_iter().enumerate() {
        let spec = identity(0.4, s2, 2);
        let lb = poincare_lb_vector(&spec, 400, 500, 70 + i as u64, 16).unwrap();
        let t1 = mmse_vector_theorem1(&spec, 100_000, 80 + i as u64, 16).unwrap();
        assert!(
            lb.mean() <= t1.mean() + 3.0 * combined_std_error(&lb, &t1),
            "{s2}: {lb:?} {t1:?}"
        );
        assert!(
            t1.mean() <= lmmse_vector(&spec).unwrap() + 3.0 * t1.std_error(),
            "{s2}"
        );
    }
}

#[test]
fn frobenius_bound_tracks_closed_form_slope() {
    let spec = identity(0.4, 1e-4, 4).with_rho_rule(RhoRule::Frobenius);
    let lb = poincare_lb_vector(&spec, 400, 1_000, 91, 16).unwrap();
    let slope = lb.mean() / 1e-4;
    // Converges to the closed form from above as the noise vanishes.
    assert!((0.095..=0.12).contains(&slope), "{slope}");
}
