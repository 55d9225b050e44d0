//! Monte Carlo plumbing: streaming moments, reproducible random streams and
//! the chunked parallel reduction every estimator in this crate goes through.
//!
//! A run of `trials` samples is cut into a fixed number of chunks. Chunk `k`
//! draws from its own ChaCha stream `k` under the run seed and accumulates a
//! private [`EstimateCI`]; chunk results are merged in chunk order by a single
//! reducer. The result therefore depends on `(seed, trials, chunks)` only,
//! never on how many worker threads executed the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::Error;

/// Random stream handed to each chunk.
pub type Stream = ChaCha8Rng;

/// Default number of chunks a run is split into.
pub const DEFAULT_CHUNKS: usize = 64;

/// z-value of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// Streaming mean / sum of squared deviations / count.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimateCI {
    mean: f64,
    m2: f64,
    count: u64,
}

impl EstimateCI {
    pub const fn empty() -> Self {
        Self {
            mean: 0.0,
            m2: 0.0,
            count: 0,
        }
    }

    /// A zero-width estimate, for quantities known in closed form.
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            m2: 0.0,
            count: u64::MAX,
        }
    }

    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Result<Self, Error> {
        let mut acc = Self::empty();
        for s in samples {
            acc.update(s)?;
        }
        Ok(acc)
    }

    /// Welford single-sample update.
    pub fn update(&mut self, sample: f64) -> Result<(), Error> {
        if !sample.is_finite() {
            return Err(Error::NonFinite {
                what: "Monte Carlo sample",
            });
        }
        self.count += 1;
        let delta = sample - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (sample - self.mean);
        Ok(())
    }

    /// Parallel (Chan et al.) merge. Written symmetrically in `a` and `b`,
    /// so `a.merge(&b)` and `b.merge(&a)` agree bit for bit.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        Self {
            mean: (na * self.mean + nb * other.mean) / n,
            m2: self.m2 + other.m2 + delta * delta * (na * nb / n),
            count: self.count + other.count,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Unbiased sample variance; `NAN` below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    /// Standard error of the mean. Infinite below two samples.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        if self.count == u64::MAX {
            return 0.0;
        }
        (self.m2 / ((self.count - 1) as f64 * self.count as f64)).sqrt()
    }

    /// Half width of the 95% interval.
    pub fn ci95(&self) -> f64 {
        Z95 * self.std_error()
    }

    pub fn interval(&self) -> (f64, f64) {
        let hw = self.ci95();
        (self.mean - hw, self.mean + hw)
    }

    pub fn covers(&self, value: f64) -> bool {
        let (lo, hi) = self.interval();
        lo <= value && value <= hi
    }

    /// `|mean − value| ≤ k · std_error`.
    pub fn covers_within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error()
    }

    /// Multiplies every sample by `s` after the fact.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mean: self.mean * s,
            m2: self.m2 * s * s,
            count: self.count,
        }
    }
}

/// `sqrt(se_a^2 + se_b^2)`.
pub fn combined_std_error(a: &EstimateCI, b: &EstimateCI) -> f64 {
    a.std_error().hypot(b.std_error())
}

/// Reproducible sub-stream `chunk_id` of `seed`.
pub fn derive_stream(seed: u64, chunk_id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk_id);
    rng
}

/// Mixes a tag into a seed (splitmix64 finalizer) so that independent
/// quantities of one run never share a stream family.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `trials` samples split over `chunks` deterministic streams.
///
/// `chunk_fn(stream, n, acc)` must push exactly the chunk's `n` samples into
/// `acc`. Chunk results are merged in chunk order.
pub fn run_chunked<F>(
    trials: u64,
    chunks: usize,
    seed: u64,
    chunk_fn: F,
) -> Result<EstimateCI, Error>
where
    F: Fn(&mut Stream, u64, &mut EstimateCI) -> Result<(), Error> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidConfig {
            field: "trials",
            reason: "must be at least 1".into(),
        });
    }
    let chunks = (chunks.max(1) as u64).min(trials);
    let base = trials / chunks;
    let extra = trials % chunks;
    let partials: Vec<EstimateCI> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let n = base + u64::from(k < extra);
            let mut rng = derive_stream(seed, k);
            let mut acc = EstimateCI::empty();
            chunk_fn(&mut rng, n, &mut acc)?;
            Ok(acc)
        })
        .collect::<Result<_, Error>>()?;
    Ok(partials
        .iter()
        .fold(EstimateCI::empty(), |acc, p| acc.merge(p)))
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

/// Which columns of a sweep to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantitySet {
    pub lb: bool,
    pub mmse_t1: bool,
    pub mmse_oracle: bool,
    pub lmmse: bool,
    pub asymptote: bool,
}

impl QuantitySet {
    pub const ALL: Self = Self {
        lb: true,
        mmse_t1: true,
        mmse_oracle: true,
        lmmse: true,
        asymptote: true,
    };
}

impl Default for QuantitySet {
    fn default() -> Self {
        Self::ALL
    }
}

/// Inner conditional-variance method for the scalar bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarInner {
    /// Gauss–Hermite rule of the given order.
    Quadrature(usize),
    /// Nested Monte Carlo with `inner_trials` draws.
    NestedMc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub trials: u64,
    pub inner_trials: u64,
    /// Outer draws of the bound. `None` uses `trials` for the scalar
    /// channel and `trials / inner_trials` (at least [`MIN_LB_OUTER`]) for
    /// the vector channel.
    pub lb_trials: Option<u64>,
    pub chunks: usize,
    pub quantities: QuantitySet,
    pub scalar_inner: ScalarInner,
}

pub const MIN_LB_OUTER: u64 = 200;

impl SweepSettings {
    pub fn new(trials: u64) -> Self {
        Self {
            trials,
            inner_trials: 2_000,
            lb_trials: None,
            chunks: DEFAULT_CHUNKS,
            quantities: QuantitySet::ALL,
            scalar_inner: ScalarInner::Quadrature(200),
        }
    }

    pub fn scalar_lb_outer(&self) -> u64 {
        self.lb_trials.unwrap_or(self.trials)
    }

    pub fn vector_lb_outer(&self) -> u64 {
        self.lb_trials
            .unwrap_or_else(|| (self.trials / self.inner_trials.max(1)).max(MIN_LB_OUTER))
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma_s2: f64,
    pub lb: Option<EstimateCI>,
    pub mmse_t1: Option<EstimateCI>,
    pub mmse_oracle: Option<EstimateCI>,
    pub lmmse: Option<f64>,
    /// High-SNR bound slope times `sigma_s2`.
    pub asymptote_line: Option<f64>,
}

/// A channel that can produce one sweep row at a given noise variance.
pub trait SweepModel: Sync {
    fn sweep_row(
        &self,
        sigma_s2: f64,
        settings: &SweepSettings,
        seed: u64,
    ) -> Result<SweepRow, Error>;
}

/// Evaluates every grid point. Each row's seed is derived from the run seed
/// and the bit pattern of its `sigma_s2`, so a row can be recomputed alone.
pub fn run_sweep<M: SweepModel + ?Sized>(
    model: &M,
    grid: &[f64],
    settings: &SweepSettings,
    seed: u64,
) -> Result<Vec<SweepRow>, Error> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig {
            field: "grid",
            reason: "must not be empty".into(),
        });
    }
    if let Some(bad) = grid.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::InvalidConfig {
            field: "grid",
            reason: format!("sigma_s2 = {bad} is not positive"),
        });
    }
    grid.iter()
        .map(|&s| {
            model
                .sweep_row(s, settings, derive_seed(seed, s.to_bits()))
                .map_err(|e| Error::Sweep {
                    sigma_s2: s,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// `points_per_decade` log-spaced values from `start` to `stop` inclusive.
pub fn log_grid(start: f64, stop: f64, points_per_decade: usize) -> Vec<f64> {
    let (a, b) = (start.log10(), stop.log10());
    let n = ((b - a) * points_per_decade as f64).round() as usize;
    if n == 0 {
        return vec![start];
    }
    (0..=n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / n as f64))
        .collect()
}
