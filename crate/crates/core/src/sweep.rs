//! Sweep rows for both channels.

use crate::mc::{derive_seed, ScalarInner, SweepModel, SweepRow, SweepSettings};
use crate::oracle;
use crate::scalar::{self, InnerMethod, ScalarChannelSpec};
use crate::vector::{self, VectorChannelSpec};
use crate::Error;

const TAG_LB: u64 = 1;
// The oracle replays the gradient-identity draws, so the two MMSE columns are paired
// and differ only through the identity itself.
const TAG_MMSE: u64 = 2;

impl SweepModel for ScalarChannelSpec {
    fn sweep_row(
        &self,
        sigma_s2: f64,
        settings: &SweepSettings,
        seed: u64,
    ) -> Result<SweepRow, Error> {
        let spec = self.with_sigma_s2(sigma_s2)?;
        let q = settings.quantities;
        let inner = match settings.scalar_inner {
            ScalarInner::Quadrature(order) => InnerMethod::Quadrature(order),
            ScalarInner::NestedMc => InnerMethod::NestedMc(settings.inner_trials),
        };
        let chunks = settings.chunks;
        Ok(SweepRow {
            sigma_s2,
            lb: q
                .lb
                .then(|| {
                    scalar::poincare_lb_scalar(
                        &spec,
                        settings.scalar_lb_outer(),
                        inner,
                        derive_seed(seed, TAG_LB),
                        chunks,
                    )
                })
                .transpose()?,
            mmse_t1: q
                .mmse_t1
                .then(|| {
                    scalar::mmse_scalar_theorem1(
                        &spec,
                        settings.trials,
                        derive_seed(seed, TAG_MMSE),
                        chunks,
                    )
                })
                .transpose()?,
            mmse_oracle: q
                .mmse_oracle
                .then(|| {
                    oracle::scalar_mmse_oracle(
                        &spec,
                        settings.trials,
                        derive_seed(seed, TAG_MMSE),
                        chunks,
                    )
                })
                .transpose()?,
            lmmse: q.lmmse.then(|| scalar::lmmse_scalar(&spec)),
            asymptote_line: q
                .asymptote
                .then(|| scalar::asymptote_scalar(&spec).map(|s| s * sigma_s2))
                .transpose()?,
        })
    }
}

impl SweepModel for VectorChannelSpec {
    fn sweep_row(
        &self,
        sigma_s2: f64,
        settings: &SweepSettings,
        seed: u64,
    ) -> Result<SweepRow, Error> {
        let spec = self.with_sigma_s2(sigma_s2)?;
        let q = settings.quantities;
        let chunks = settings.chunks;
        Ok(SweepRow {
            sigma_s2,
            lb: q
                .lb
                .then(|| {
                    vector::poincare_lb_vector(
                        &spec,
                        settings.vector_lb_outer(),
                        settings.inner_trials,
                        derive_seed(seed, TAG_LB),
                        chunks,
                    )
                })
                .transpose()?,
            mmse_t1: q
                .mmse_t1
                .then(|| {
                    vector::mmse_vector_theorem1(
                        &spec,
                        settings.trials,
                        derive_seed(seed, TAG_MMSE),
                        chunks,
                    )
                })
                .transpose()?,
            mmse_oracle: q
                .mmse_oracle
                .then(|| {
                    oracle::vector_mmse_oracle(
                        &spec,
                        settings.trials,
                        derive_seed(seed, TAG_MMSE),
                        chunks,
                    )
                })
                .transpose()?,
            lmmse: q.lmmse.then(|| vector::lmmse_vector(&spec)).transpose()?,
            asymptote_line: q
                .asymptote
                .then(|| vector::asymptote_vector(&spec) * sigma_s2),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{run_sweep, QuantitySet};
    use crate::scalar::ScalarPilot;

    #[test]
    fn rows_follow_quantity_selection() {
        let spec = ScalarChannelSpec::new(0.4, 1.0, 1.0, ScalarPilot::deterministic(1.0)).unwrap();
        let mut settings = SweepSettings::new(200);
        settings.quantities = QuantitySet {
            lb: false,
            mmse_t1: true,
            mmse_oracle: false,
            lmmse: true,
            asymptote: false,
        };
        let rows = run_sweep(&spec, &[0.5, 1.0], &settings, 4).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(
            rows[0].lb.is_none()
                && rows[0].mmse_oracle.is_none()
                && rows[0].asymptote_line.is_none()
        );
        assert!(rows[1].mmse_t1.is_some());
        assert!((rows[1].lmmse.unwrap() - 0.4 / 1.4).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_grid_point() {
        let spec = ScalarChannelSpec::new(0.4, 1.0, 1.0, ScalarPilot::deterministic(0.0)).unwrap();
        let err = run_sweep(&spec, &[0.25], &SweepSettings::new(10), 0).unwrap_err();
        assert!(matches!(err, Error::Sweep { sigma_s2, .. } if sigma_s2 == 0.25));
        assert!(run_sweep(&spec, &[], &SweepSettings::new(10), 0).is_err());
        assert!(run_sweep(&spec, &[-1.0], &SweepSettings::new(10), 0).is_err());
    }

    #[test]
    fn mmse_columns_are_paired() {
        let spec = ScalarChannelSpec::new(
            0.4,
            1.0,
            0.3,
            ScalarPilot::uniform(vec![1.0, -2.0]).unwrap(),
        )
        .unwrap();
        let row = spec.sweep_row(0.3, &SweepSettings::new(2_000), 5).unwrap();
        let (a, b) = (row.mmse_t1.unwrap(), row.mmse_oracle.unwrap());
        assert!((a.mean() - b.mean()).abs() < 1e-12 * a.mean());
        let v = VectorChannelSpec::identity_pilot(0.4, 1.0, 0.3, (2, 2, 2)).unwrap();
        let mut settings = SweepSettings::new(500);
        settings.quantities.lb = false;
        let row = v.sweep_row(0.3, &settings, 5).unwrap();
        let (a, b) = (row.mmse_t1.unwrap(), row.mmse_oracle.unwrap());
        assert!((a.mean() - b.mean()).abs() < 1e-10 * a.mean());
    }

    #[test]
    fn rows_do_not_depend_on_grid_order() {
        let spec = VectorChannelSpec::identity_pilot(0.4, 1.0, 1.0, (1, 1, 1)).unwrap();
        let mut settings = SweepSettings::new(300);
        settings.inner_trials = 20;
        settings.chunks = 4;
        let a = run_sweep(&spec, &[0.1, 1.0], &settings, 9).unwrap();
        let b = run_sweep(&spec, &[1.0, 0.1], &settings, 9).unwrap();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[0]);
    }
}
