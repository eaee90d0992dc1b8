//! Special functions behind the t and normal distributions.

use statrs::function::gamma::ln_gamma;

const CF_TOLERANCE: f64 = 1e-12;
const CF_MAX_TERMS: usize = 10_000;
const TINY: f64 = 1e-300;

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`.
///
/// Evaluated with the modified Lentz continued fraction, switching to the
/// symmetry relation `I_x(a, b) = 1 - I_{1-x}(b, a)` where it converges faster.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        (front * beta_fraction(a, b, x) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - front * beta_fraction(b, a, 1.0 - x) / b).clamp(0.0, 1.0)
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_TERMS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t))
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-lambda form of the CDF
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda
            * (1..=5)
                .map(|k| ((2 * k - 1) as f64).powi(2))
                .map(|j| (j * y).exp())
                .sum::<f64>();
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let q = (1..=20)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum::<f64>();
        (2.0 * q).clamp(0.0, 1.0)
    }
}

/// Dallal-Wilkinson approximation to the Lilliefors p-value of a KS
/// statistic `d` computed against a normal fitted to `n` samples.
///
/// The approximation is accurate for `p <= 0.1`; larger values only keep
/// their ordering and are capped at 1.
pub fn lilliefors_p(d: f64, n: usize) -> f64 {
    let (mut d, mut n) = (d, n as f64);
    if n > 100.0 {
        d *= (n / 100.0).powf(0.49);
        n = 100.0;
    }
    let n2 = n + 2.78019;
    let p = (-7.01256 * d * d * n2 + 2.99587 * d * n2.sqrt() - 0.122119 + 0.974598 / n.sqrt() + 1.67997 / n).exp();
    p.clamp(0.0, 1.0)
}
