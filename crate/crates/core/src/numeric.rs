//! Log-domain helpers shared by the channel models.

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(exp(a) + exp(b))`, exact when either side is `-inf`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Weight `exp(a) / (exp(a) + exp(b))`, computed without overflow.
#[inline]
pub fn softmax_first(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return 0.0;
    }
    if b == f64::NEG_INFINITY {
        return 1.0;
    }
    if a >= b {
        1.0 / (1.0 + (b - a).exp())
    } else {
        let e = (a - b).exp();
        e / (1.0 + e)
    }
}

/// `log N(y; 0, var)` for scalar `y`.
#[inline]
pub fn log_normal_pdf(y: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + y * y / var)
}

/// `ln` that maps `0` to `-inf` instead of surprising anyone.
#[inline]
pub fn ln_or_neg_inf(p: f64) -> f64 {
    if p == 0.0 {
        f64::NEG_INFINITY
    } else {
        p.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn normal_pdf(y: f64, var: f64) -> f64 {
        (-(y * y) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn log_add_exp_handles_extremes() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        assert_eq!(
            log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_first_is_stable() {
        assert_eq!(softmax_first(0.0, 0.0), 0.5);
        assert_eq!(softmax_first(-1e4, 0.0), 0.0);
        assert_eq!(softmax_first(1e4, 0.0), 1.0);
        assert_eq!(softmax_first(f64::NEG_INFINITY, 0.0), 0.0);
    }

    #[test]
    fn log_normal_matches_direct() {
        for &(y, v) in &[(0.0, 1.0), (1.3, 0.4), (-2.0, 3.0)] {
            assert!((log_normal_pdf(y, v).exp() - normal_pdf(y, v)).abs() < 1e-15);
        }
        assert!((LN_2PI - (2.0 * PI).ln()).abs() < 1e-15);
    }
}
