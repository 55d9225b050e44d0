//! MMSE, LMMSE and Poincaré-inequality lower bounds for channel estimation in
//! Gaussian channels with blockage.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: realification, Kronecker products, pseudoinverse, SVD.
//! * [`expfam`]: generic exponential-family identities (information density,
//!   its gradient, the TRE identity, Bakry–Émery constants, per-sample MMSE
//!   and lower-bound terms).
//! * [`scalar`] and [`vector`]: the two blockage channels, in closed form.
//! * [`mc`]: deterministic chunked Monte Carlo and sweep orchestration.
//! * [`oracle`]: independent ground truth (Gauss–Hermite quadrature,
//!   posterior-mean MMSE estimators) used by tests and the `check` suite.
//! * [`sweep`]: glue that turns a channel into rows of an SNR sweep.

pub mod expfam;
pub mod linalg;
pub mod mc;
pub mod numeric;
pub mod oracle;
pub mod scalar;
pub mod sweep;
pub mod vector;

use thiserror::Error;

pub use linalg::LinalgError;
pub use mc::{EstimateCI, SweepRow, SweepSettings};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("sweep point sigma_s2 = {sigma_s2:e}: {source}")]
    Sweep { sigma_s2: f64, source: Box<Error> },
}
