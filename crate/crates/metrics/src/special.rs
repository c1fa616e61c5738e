//! Special functions backing the test distributions.
//!
//! The error function is expressed through the regularized incomplete gamma
//! function (`erf(x) = P(1/2, x^2)`), so one well-tested kernel serves both the
//! normal and chi-square tails.

use crate::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const MAX_ITER: usize = 500;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_count(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

fn gamma_prefactor<T: Scalar>(a: T, x: T) -> T {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn gamma_series<T: Scalar>(a: T, x: T) -> T {
    let eps = T::epsilon();
    let mut ap = a;
    let mut del = T::one() / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap = ap + T::one();
        del = del * x / ap;
        sum = sum + del;
        if del.abs() < sum.abs() * eps {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_continued_fraction<T: Scalar>(a: T, x: T) -> T {
    let eps = T::epsilon();
    let tiny = T::min_positive_value() / eps;
    let two = T::lit(2.0);
    let mut b = x + T::one() - a;
    let mut c = T::one() / tiny;
    let mut d = T::one() / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let i = T::from_count(i);
        let an = -i * (i - a);
        b = b + two;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let del = d * c;
        h = h * del;
        if (del - T::one()).abs() < eps {
            break;
        }
    }
    gamma_prefactor(a, x) * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p<T: Scalar>(a: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x < a + T::one() {
        gamma_series(a, x)
    } else {
        T::one() - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q<T: Scalar>(a: T, x: T) -> T {
    if x <= T::zero() {
        return T::one();
    }
    if x < a + T::one() {
        T::one() - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

pub fn erf<T: Scalar>(x: T) -> T {
    let p = gamma_p(T::lit(0.5), x * x);
    if x < T::zero() {
        -p
    } else {
        p
    }
}

pub fn erfc<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x >= T::zero() {
        gamma_q(half, x * x)
    } else {
        T::one() + gamma_p(half, x * x)
    }
}

pub fn normal_pdf<T: Scalar>(z: T) -> T {
    (-(z * z) * T::lit(0.5)).exp() / T::lit((2.0 * std::f64::consts::PI).sqrt())
}

pub fn normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * erfc(-z / T::lit(std::f64::consts::SQRT_2))
}

/// Upper tail `1 - Φ(z)` without cancellation for large `z`.
pub fn normal_sf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * erfc(z / T::lit(std::f64::consts::SQRT_2))
}

/// Inverse of the standard normal CDF, Acklam's rational approximation
/// polished with one Halley step.
pub fn normal_ppf<T: Scalar>(p: T) -> T {
    if p <= T::zero() {
        return T::neg_infinity();
    }
    if p >= T::one() {
        return T::infinity();
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] =
        [-5.447_609_879_822_406e1, 1.615_858_368_580_409e2, -1.556_989_798_598_866e2, 6.680_131_188_771_972e1, -1.328_068_155_288_572e1];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    let pf = p.to_f64().unwrap_or(0.5);
    let low = 0.024_25;
    let x = if pf < low {
        let q = (-2.0 * pf.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if pf <= 1.0 - low {
        let q = pf - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - pf).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = T::lit(x);
    let e = normal_cdf(x) - p;
    let u = e * T::lit((2.0 * std::f64::consts::PI).sqrt()) * (x * x * T::lit(0.5)).exp();
    x - u / (T::one() + x * u * T::lit(0.5))
}

/// Survival function of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf<T: Scalar>(x: T, df: T) -> T {
    gamma_q(df * T::lit(0.5), x * T::lit(0.5))
}
