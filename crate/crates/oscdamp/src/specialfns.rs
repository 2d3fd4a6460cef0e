//! Associated Laguerre polynomials, Bessel functions and factorial helpers.

use faer::c64;

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// `sqrt((m + k)! / m!)`
pub fn sqrt_rising(m: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((m + i) as f64).sqrt()).product()
}

/// `L_n^k(x)` by the three-term upward recurrence.
pub fn laguerre(n: usize, k: usize, x: f64) -> f64 {
    let kf = k as f64;
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + kf - x;
    for m in 1..n {
        let mf = m as f64;
        let next = ((2.0 * mf + 1.0 + kf - x) * cur - (mf + kf) * prev) / (mf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `L_n^k(z)` for complex argument.
pub fn laguerre_complex(n: usize, k: usize, z: c64) -> c64 {
    let kf = k as f64;
    let one = c64::new(1.0, 0.0);
    if n == 0 {
        return one;
    }
    let mut prev = one;
    let mut cur = one * (1.0 + kf) - z;
    for m in 1..n {
        let mf = m as f64;
        let next = ((one * (2.0 * mf + 1.0 + kf) - z) * cur - prev * (mf + kf)) / (mf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `L_n^k(x) = sum_j C(n+k, n-j) (-x)^j / j!`
pub fn laguerre_explicit(n: usize, k: usize, x: f64) -> f64 {
    let mut s = 0.0;
    let mut term = 1.0;
    for j in 0..=n {
        if j > 0 {
            term *= -x / j as f64;
        }
        s += binomial(n + k, n - j) * term;
    }
    s
}

/// Bessel function `J_k(x)` of integer order by Miller's downward recurrence.
pub fn bessel_j(k: i64, x: f64) -> f64 {
    let n = k.unsigned_abs() as usize;
    let sign_order = if k < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let sign_arg = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let ax = x.abs();
    if ax == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let top = n.max(ax.ceil() as usize);
    let start = 2 * ((top + 20 + (40.0 * top as f64).sqrt() as usize) / 2);
    let mut t_next = 0.0;
    let mut t = 1.0e-30;
    let mut norm = 0.0;
    let mut value = 0.0;
    for j in (1..=start).rev() {
        let t_prev = 2.0 * j as f64 / ax * t - t_next;
        t_next = t;
        t = t_prev;
        let idx = j - 1;
        if idx == n {
            value = t;
        }
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * t;
        }
        if t.abs() > 1e250 {
            t *= 1e-250;
            t_next *= 1e-250;
            norm *= 1e-250;
            value *= 1e-250;
        }
    }
    norm += t;
    sign_order * sign_arg * value / norm
}

/// Modified Bessel function `I_k(x)` of integer order by its power series.
pub fn bessel_i(k: i64, x: f64) -> f64 {
    let n = k.unsigned_abs() as usize;
    let half = 0.5 * x;
    let mut term = (0..n).fold(1.0, |acc, i| acc * half / (i + 1) as f64);
    let mut sum = term;
    let q = half * half;
    for j in 1..10_000 {
        term *= q / (j as f64 * (j + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn laguerre_low_orders() {
        assert_eq!(laguerre(0, 3, 1.7), 1.0);
        assert!((laguerre(1, 2, 0.5) - 2.5).abs() < 1e-15);
        assert!((laguerre(2, 0, 1.0) - (-0.5)).abs() < 1e-15);
    }

    fn laguerre_exact(n: usize, k: usize, num: i64, den: i64) -> f64 {
        use num::{BigInt, BigRational, ToPrimitive};
        let x = BigRational::new(BigInt::from(num), BigInt::from(den));
        let mut sum = BigRational::from_integer(BigInt::from(0));
        let mut power = BigRational::from_integer(BigInt::from(1));
        let mut fact = BigInt::from(1);
        for j in 0..=n {
            if j > 0 {
                power = -power * x.clone();
                fact *= BigInt::from(j);
            }
            let mut c = BigInt::from(1);
            for i in 0..(n - j) {
                c = c * BigInt::from(n + k - i) / BigInt::from(i + 1);
            }
            sum += BigRational::from_integer(c) * power.clone() / BigRational::from_integer(fact.clone());
        }
        sum.to_f64().unwrap()
    }

    #[test]
    fn laguerre_recurrence_matches_explicit_sum() {
        for n in 0..=30 {
            for k in 0..=10 {
                for &(num, den) in &[(0, 1), (3, 10), (2, 1), (15, 2)] {
                    let x = num as f64 / den as f64;
                    let exact = laguerre_exact(n, k, num, den);
                    let a = laguerre(n, k, x);
                    assert!((a - exact).abs() <= 1e-12 * exact.abs(), "n={n} k={k} x={x}: {a} vs {exact}");
                    if n <= 12 && x <= 2.0 {
                        let b = laguerre_explicit(n, k, x);
                        assert!((b - exact).abs() <= 1e-9 * exact.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn complex_laguerre_agrees_on_real_axis() {
        let z = c64::new(1.3, 0.0);
        assert!((laguerre_complex(9, 2, z).re - laguerre(9, 2, 1.3)).abs() < 1e-12);
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1, 2.5) - 0.497_094_102_464_274_4).abs() < 1e-14);
        assert!((bessel_j(5, 10.0) - (-0.234_061_528_186_793_6)).abs() < 1e-13);
        assert!((bessel_i(0, 1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i(2, 3.0) - 2.245_212_440_929_951_6).abs() < 1e-13);
    }

    #[test]
    fn bessel_parseval_sum() {
        let x = 1.5;
        let s: f64 = (-40..=40).map(|k| bessel_j(k, x).powi(2)).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bessel_symmetries() {
        assert!((bessel_j(-3, 2.0) + bessel_j(3, 2.0)).abs() < 1e-15);
        assert!((bessel_j(3, -2.0) + bessel_j(3, 2.0)).abs() < 1e-15);
        assert_eq!(bessel_j(4, 0.0), 0.0);
        assert_eq!(bessel_j(0, 0.0), 1.0);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(10, 3), 120.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert!((sqrt_rising(2, 2) - 12f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn jacobi_anger_generating_function(x in -3.0f64..3.0, y in 0.3f64..2.0) {
            let s: f64 = (-60..=60).map(|k| y.powi(k as i32) * bessel_j(k, x)).sum();
            let want = (0.5 * x * (y - 1.0 / y)).exp();
            prop_assert!((s - want).abs() < 1e-11 * want.abs().max(1.0));
        }

        #[test]
        fn laguerre_generating_function(x in 0.0f64..4.0, y in -0.9f64..0.9, k in 0usize..5) {
            let want = (1.0 + y).powi(-(k as i32) - 1) * (x * y / (1.0 + y)).exp();
            let s: f64 = (0..600).map(|n| (-y).powi(n as i32) * laguerre(n, k, x)).sum();
            prop_assert!((s - want).abs() < 1e-9 * want.abs().max(1.0));
        }

        #[test]
        fn bessel_laguerre_series(x in 0.0f64..3.0, y in 0.0f64..3.0, k in 0usize..4) {
            let want = bessel_j(k as i64, 2.0 * (x * y).sqrt());
            let mut s = 0.0;
            for n in 0..120 {
                s += (n as f64 * y.ln() - ln_factorial(n + k)).exp() * laguerre(n, k, x);
            }
            let got = (x * y).powf(0.5 * k as f64) * (-y).exp() * s;
            prop_assert!((got - want).abs() < 1e-10);
        }

        #[test]
        fn laguerre_bilinear_closed_sum(x in 0.05f64..0.6, y in 0.1f64..3.0, z in 0.1f64..3.0, k in 0usize..4) {
            let mut s = 0.0;
            for n in 0..400 {
                let w = (n as f64 * x.ln() + ln_factorial(n) - ln_factorial(n + k)).exp();
                s += w * laguerre(n, k, y) * laguerre(n, k, z);
            }
            let xyz = x * y * z;
            let want = xyz.powf(-0.5 * k as f64) / (1.0 - x)
                * (-x * (y + z) / (1.0 - x)).exp()
                * bessel_i(k as i64, 2.0 * xyz.sqrt() / (1.0 - x));
            prop_assert!((s - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }
}
