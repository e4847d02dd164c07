//! Student-t tail probabilities and critical values.
//!
//! Two-tailed probabilities come from the regularized incomplete beta
//! function, `P(|T_df| >= t) = I_{df/(df+t^2)}(df/2, 1/2)`. Critical values
//! invert that relation by bracketing bisection.

use statrs::function::beta::ln_beta;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 200_000;

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `0 <= x <= 1`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_fraction(a, b, x) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_fraction(b, a, 1.0 - x) / b).clamp(0.0, 1.0)
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// `P(|T_df| >= |t|)`. Infinite `t` gives 0.
pub fn t_two_tailed_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    let t2 = t * t;
    let x = 1.0 / (1.0 + t2 / df);
    incomplete_beta(df / 2.0, 0.5, x)
}

/// Critical value `c >= 0` with `P(|T_df| >= c) == p`.
pub fn t_critical(p_two_tailed: f64, df: f64) -> Result<f64> {
    if !(p_two_tailed > 0.0 && p_two_tailed <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "two-tailed p must lie in (0, 1], got {p_two_tailed}"
        )));
    }
    if !(df >= 1.0) || !df.is_finite() {
        return Err(Error::InvalidArgument(format!("df must be >= 1, got {df}")));
    }
    if p_two_tailed == 1.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while t_two_tailed_p(hi, df) > p_two_tailed {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "p = {p_two_tailed} too small to invert at df = {df}"
            )));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if t_two_tailed_p(mid, df) > p_two_tailed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Standard-normal critical value `z` with `P(|Z| >= z) == p`.
pub fn normal_critical(p_two_tailed: f64) -> Result<f64> {
    if !(p_two_tailed > 0.0 && p_two_tailed <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "two-tailed p must lie in (0, 1], got {p_two_tailed}"
        )));
    }
    Ok(std::f64::consts::SQRT_2 * erfc_inv(p_two_tailed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a; I_x(1, b) = 1 - (1-x)^b.
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((incomplete_beta(1.0, 1.0, x) - x).abs() < 1e-15);
            assert!((incomplete_beta(3.5, 1.0, x) - x.powf(3.5)).abs() < 1e-14);
            assert!((incomplete_beta(1.0, 2.5, x) - (1.0 - (1.0 - x).powf(2.5))).abs() < 1e-14);
        }
    }

    #[test]
    fn two_tailed_p_matches_statrs_cdf() {
        for &df in &[1.0, 2.0, 5.0, 17.0, 48.0, 1000.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for &t in &[0.1, 0.7, 1.5, 2.2, 4.0, 9.0] {
                let want = 2.0 * dist.cdf(-t);
                let got = t_two_tailed_p(t, df);
                assert!((got - want).abs() <= 1e-12 * want.max(1e-3), "t={t} df={df}");
            }
        }
    }

    #[test]
    fn critical_values() {
        assert_eq!(t_critical(1.0, 7.0).unwrap(), 0.0);
        // Standard t tables: t_{0.975, 10} = 2.228138851986...
        assert!((t_critical(0.05, 10.0).unwrap() - 2.228_138_851_986_274).abs() < 1e-8);
        assert!((t_critical(0.05, 1.0).unwrap() - 12.706_204_736_174_7).abs() < 1e-8);
        // Cornish-Fisher: z + (z^3 + z) / (4 df) at df = 1e6.
        let z = 1.959_963_984_540_054_f64;
        let approx = z + (z.powi(3) + z) / 4e6;
        assert!((t_critical(0.05, 1e6).unwrap() - approx).abs() < 1e-8);
        assert!((normal_critical(0.05).unwrap() - z).abs() < 1e-12);
    }

    #[test]
    fn critical_inverts_p() {
        for &df in &[1.0, 3.0, 30.0, 198.0] {
            for &p in &[0.5, 0.05, 0.01, 1e-6] {
                let c = t_critical(p, df).unwrap();
                assert!((t_two_tailed_p(c, df) - p).abs() <= 1e-10 * p);
            }
        }
    }

    #[test]
    fn critical_monotone() {
        let ps = [0.9, 0.5, 0.2, 0.05, 0.01, 0.001];
        for &df in &[1.0, 4.0, 50.0] {
            let cs: Vec<f64> = ps.iter().map(|&p| t_critical(p, df).unwrap()).collect();
            assert!(cs.windows(2).all(|w| w[0] < w[1]), "{cs:?}");
        }
        for &p in &[0.3, 0.05, 0.001] {
            let cs: Vec<f64> = [1.0, 2.0, 10.0, 100.0, 1e4]
                .iter()
                .map(|&df| t_critical(p, df).unwrap())
                .collect();
            assert!(cs.windows(2).all(|w| w[0] >= w[1]), "{cs:?}");
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(t_critical(0.0, 3.0).is_err());
        assert!(t_critical(1.5, 3.0).is_err());
        assert!(t_critical(0.05, 0.5).is_err());
        assert!(normal_critical(0.0).is_err());
    }
}
