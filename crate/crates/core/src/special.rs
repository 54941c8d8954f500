//! Scalar special functions: standard-normal CDF/quantile and
//! digamma/trigamma/inverse-digamma used by Dirichlet maximum likelihood.

use statrs::distribution::{ContinuousCDF, Normal};

/// Standard-normal CDF Φ(x), accurate to a few ulp even deep in the tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard-normal quantile Φ⁻¹(p), p in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Digamma ψ(x) for x > 0: recurrence up to x ≥ 10, then the asymptotic series.
pub fn digamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ln x − 1/(2x) − Σ B_{2n}/(2n x^{2n})
    acc + x.ln() - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                + inv2 * (-1.0 / 120.0 + inv2 * (1.0 / 252.0 + inv2 * (-1.0 / 240.0 + inv2 * (1.0 / 132.0)))))
}

/// Trigamma ψ′(x) for x > 0: recurrence up to x ≥ 10, then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        * (1.0
            + inv * (0.5
                + inv * (1.0 / 6.0
                    + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))))))
}

/// Inverse digamma: the x > 0 with ψ(x) = y, by Newton iteration.
pub fn inv_digamma(y: f64) -> f64 {
    // Initialization from the two asymptotic regimes of ψ.
    let mut x = if y >= -2.22 { y.exp() + 0.5 } else { -1.0 / (y + 0.577_215_664_901_532_9) };
    for _ in 0..32 {
        let step = (digamma(x) - y) / trigamma(x);
        x -= step;
        if x <= 0.0 {
            x = 1e-12;
        }
        if step.abs() <= 1e-13 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rel(actual: f64, expected: f64, rtol: f64) {
        let err = (actual - expected).abs() / expected.abs().max(1e-300);
        assert!(err <= rtol, "actual {actual:e} expected {expected:e} rel err {err:e}");
    }

    #[test]
    fn normal_cdf_reference_values() {
        // mpmath: ncdf(x) at the four reliability indices and zero
        assert_rel(normal_cdf(-4.2), 1.3345749015906328e-5, 1e-12);
        assert_rel(normal_cdf(-3.5), 2.3262907903552504e-4, 1e-12);
        assert_rel(normal_cdf(-3.0), 1.3498980316300945e-3, 1e-12);
        assert_rel(normal_cdf(-2.5), 6.2096653257761352e-3, 1e-12);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normal_quantile_round_trip() {
        for &x in &[-4.2, -3.0, -1.0, 0.0, 0.7, 2.5, 3.9] {
            let p = normal_cdf(x);
            assert!((normal_quantile(p) - x).abs() < 1e-8, "round trip at {x}");
        }
    }

    #[test]
    fn digamma_reference_values() {
        // mpmath digamma
        let cases = [
            (0.01, -100.56088545786867),
            (0.1, -10.423754940411076),
            (0.5, -1.9635100260214235),
            (1.0, -0.57721566490153286),
            (1.5, 0.036489973978576521),
            (2.0, 0.42278433509846714),
            (5.0, 1.5061176684318005),
            (10.0, 2.2517525890667211),
            (123.456, 4.8118293238289854),
        ];
        for (x, want) in cases {
            assert_rel(digamma(x), want, 1e-12);
        }
    }

    #[test]
    fn trigamma_reference_values() {
        // mpmath polygamma(1, x)
        let cases = [
            (0.01, 10001.621213528313),
            (0.1, 101.43329915079275),
            (0.5, 4.9348022005446793),
            (1.0, 1.6449340668482264),
            (1.5, 0.93480220054467931),
            (2.0, 0.64493406684822644),
            (5.0, 0.22132295573711533),
            (10.0, 0.10516633568168575),
            (123.456, 0.0081329458342781978),
        ];
        for (x, want) in cases {
            assert_rel(trigamma(x), want, 1e-12);
        }
    }

    #[test]
    fn inv_digamma_round_trip() {
        for &x in &[0.01, 0.05, 0.15, 0.5, 1.0, 3.0, 47.0] {
            let y = digamma(x);
            assert_rel(inv_digamma(y), x, 1e-10);
        }
    }

    #[test]
    fn trigamma_is_digamma_derivative() {
        for &x in &[0.3, 1.1, 4.5, 20.0] {
            let h = 1e-6;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert_rel(trigamma(x), fd, 1e-7);
        }
    }
}
