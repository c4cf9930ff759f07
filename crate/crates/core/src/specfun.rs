//! Scalar special functions: modified Bessel `I_α`, Kummer's `₁F₁`,
//! parabolic cylinder `D_ν` for negative index, Gegenbauer and Chebyshev
//! polynomials.
//!
//! Functions that can overflow come in pairs: a log-space variant
//! (`ln_*`) that is always finite, and a plain variant that reports
//! [`Error::Overflow`] when the value leaves the `f64` range.

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::gauss::gauss_legendre;

/// Largest natural log that still exponentiates to a finite `f64`.
pub const LN_MAX: f64 = 709.0;

/// Ultraspherical index `λ = (d-1)/2` of a sphere `S_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Order {
    lambda: f64,
}

impl Order {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return domain(format!("order requires lambda >= 0, got {lambda}"));
        }
        Ok(Self { lambda })
    }

    pub fn from_dim(d: usize) -> Result<Self> {
        if d == 0 {
            return domain("sphere dimension must be at least 1");
        }
        Ok(Self { lambda: lambda_of_dim(d) })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Sphere dimension `d = 2λ + 1`, if integral.
    pub fn dim(&self) -> Option<usize> {
        let d = 2.0 * self.lambda + 1.0;
        (d.fract() == 0.0).then_some(d as usize)
    }
}

pub fn lambda_of_dim(d: usize) -> f64 {
    (d as f64 - 1.0) / 2.0
}

/// `ln (a)_n = ln Γ(a+n) - ln Γ(a)` for `a > 0`.
pub fn ln_pochhammer(a: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    ln_gamma(a + n) - ln_gamma(a)
}

pub fn pochhammer(a: f64, n: usize) -> f64 {
    if a > 0.0 {
        ln_pochhammer(a, n as f64).exp()
    } else {
        (0..n).map(|k| a + k as f64).product()
    }
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    pub(crate) fn add(&mut self, ln_term: f64) {
        if ln_term == f64::NEG_INFINITY {
            return;
        }
        if ln_term > self.max {
            self.scaled = self.scaled * (self.max - ln_term).exp() + 1.0;
            self.max = ln_term;
        } else {
            self.scaled += (ln_term - self.max).exp();
        }
    }

    pub(crate) fn ln(&self) -> f64 {
        self.max + self.scaled.ln()
    }

    pub(crate) fn max(&self) -> f64 {
        self.max
    }
}

/// `ln I_α(x)` for `α, x ≥ 0`.
///
/// Direct power series up to `x = 30`; beyond that the series is summed
/// outward from its largest term so nothing overflows.
pub fn ln_bessel_i(alpha: f64, x: f64) -> f64 {
    if !(alpha >= 0.0) || !(x >= 0.0) {
        return f64::NAN;
    }
    if x == 0.0 {
        return if alpha == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let half = 0.5 * x;
    let q = half * half;
    if x <= 30.0 {
        let ln_t0 = alpha * half.ln() - ln_gamma(alpha + 1.0);
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 0.0;
        loop {
            term *= q / ((n + 1.0) * (n + alpha + 1.0));
            sum += term;
            n += 1.0;
            if term < 1e-17 * sum {
                break;
            }
        }
        return ln_t0 + sum.ln();
    }
    // largest term sits where (n+1)(n+α+1) ≈ q
    let mode = ((-(alpha + 2.0) + (alpha * alpha + 4.0 * q).sqrt()) / 2.0).max(0.0).round();
    let ln_tm = (2.0 * mode + alpha) * half.ln() - ln_gamma(mode + 1.0) - ln_gamma(mode + alpha + 1.0);
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut n = mode;
    loop {
        term *= q / ((n + 1.0) * (n + alpha + 1.0));
        sum += term;
        n += 1.0;
        if term < 1e-17 * sum {
            break;
        }
    }
    term = 1.0;
    n = mode;
    while n >= 1.0 {
        term *= n * (n + alpha) / q;
        sum += term;
        n -= 1.0;
        if term < 1e-17 * sum {
            break;
        }
    }
    ln_tm + sum.ln()
}

/// Modified Bessel function of the first kind `I_α(x)`.
pub fn bessel_i(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !(x >= 0.0) {
        return domain(format!("bessel_i requires alpha, x >= 0 (alpha={alpha}, x={x})"));
    }
    let l = ln_bessel_i(alpha, x);
    if l > LN_MAX {
        return Err(Error::Overflow(format!(
            "I_{alpha}({x}) exceeds f64 range; use bessel_i_ratio or ln_bessel_i"
        )));
    }
    Ok(l.exp())
}

/// `I_{λ+n}(x) / I_λ(x)` for `x > 0`.
pub fn bessel_i_ratio(lambda: f64, n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    (ln_bessel_i(lambda + n as f64, x) - ln_bessel_i(lambda, x)).exp()
}

/// `ln ₁F₁(a; b; x)` for `a, b > 0` and `x ≥ 0`; all series terms are positive.
pub fn ln_hyp1f1_nonneg(a: f64, b: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let ln_x = x.ln();
    let mut acc = LogSum::new();
    let mut ln_term = 0.0;
    acc.add(ln_term);
    let mut n = 0.0;
    loop {
        let ratio = (a + n) * x / ((b + n) * (n + 1.0));
        ln_term += (a + n).ln() + ln_x - (b + n).ln() - (n + 1.0).ln();
        acc.add(ln_term);
        n += 1.0;
        if ratio < 1.0 && ln_term < acc.max() - 41.0 {
            break;
        }
        if n > 1e7 {
            break;
        }
    }
    acc.ln()
}

/// Plain series `Σ (a)_n / ((b)_n n!) x^n`; `a` may be any real.
fn hyp1f1_series(a: f64, b: f64, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    loop {
        term *= (a + n) * x / ((b + n) * (n + 1.0));
        sum += term;
        n += 1.0;
        if term == 0.0 {
            break;
        }
        let ratio = ((a + n) * x / ((b + n) * (n + 1.0))).abs();
        if ratio < 1.0 && term.abs() < 1e-17 * sum.abs() {
            break;
        }
        if n > 1e7 {
            break;
        }
    }
    sum
}

/// Confluent hypergeometric function `₁F₁(a; b; x)` for `a, b > 0`.
///
/// Negative arguments go through Kummer's transformation
/// `₁F₁(a; b; x) = e^x ₁F₁(b-a; b; -x)`.
pub fn hyp1f1(a: f64, b: f64, x: f64) -> f64 {
    if x >= 0.0 {
        ln_hyp1f1_nonneg(a, b, x).exp()
    } else {
        x.exp() * hyp1f1_series(b - a, b, -x)
    }
}

/// `ln D_ν(z)` for `ν < 0`, from the integral representation
/// `D_ν(z) = e^{-z²/4}/Γ(-ν) ∫₀^∞ t^{-ν-1} e^{-zt-t²/2} dt`.
pub fn ln_parabolic_cylinder_d(nu: f64, z: f64) -> Result<f64> {
    if !(nu < 0.0) {
        return domain(format!("parabolic_cylinder_d requires nu < 0, got {nu}"));
    }
    let mu = -nu;
    let ln_integral = if mu >= 1.0 {
        ln_peak_integral(mu, z)
    } else {
        // t = s^{1/μ} absorbs the t^{μ-1} singularity at the origin
        let f = |s: f64| {
            let t = s.powf(1.0 / mu);
            -z * t - 0.5 * t * t
        };
        let upper = {
            let t_hi = (-z).max(0.0) + 12.0;
            t_hi.powf(mu)
        };
        let value = adaptive_panels(|s| f(s).exp(), 0.0, upper)?;
        value.ln() - mu.ln()
    };
    Ok(-0.25 * z * z - ln_gamma(mu) + ln_integral)
}

/// `ln ∫₀^∞ t^{μ-1} e^{-zt-t²/2} dt` for `μ ≥ 1`.
///
/// The log-integrand has second derivative at most -1, so it is bounded by
/// a unit-variance Gaussian around its peak; ten units either side leaves
/// a neglected mass below e^{-50} relative.
fn ln_peak_integral(mu: f64, z: f64) -> f64 {
    let a = mu - 1.0;
    let peak = 0.5 * (-z + (z * z + 4.0 * a).sqrt());
    let phi = |t: f64| {
        if t <= 0.0 {
            if a == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            a * t.ln() - z * t - 0.5 * t * t
        }
    };
    let phi_peak = phi(peak.max(0.0));
    let lo = (peak - 10.0).max(0.0);
    let hi = peak + 10.0;
    let g = |t: f64| (phi(t) - phi_peak).exp();
    let left = if peak <= lo {
        0.0
    } else if lo > 0.0 || a.fract() == 0.0 {
        adaptive_panels(&g, lo, peak).unwrap_or(f64::NAN)
    } else {
        // t^a is not smooth at the origin: grade the panels geometrically
        let mut s = 0.0;
        let mut b = peak;
        for _ in 0..80 {
            s += adaptive_panels(&g, 0.5 * b, b).unwrap_or(f64::NAN);
            b *= 0.5;
        }
        s
    };
    let right = adaptive_panels(&g, peak.max(0.0), hi).unwrap_or(f64::NAN);
    phi_peak + (left + right).ln()
}

/// Composite 20-point Gauss-Legendre with panel doubling until two
/// successive estimates agree to 1e-13 relative.
fn adaptive_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    let (x, w) = gauss_legendre(20);
    let panel_sum = |panels: usize| {
        let h = (b - a) / panels as f64;
        let mut s = 0.0;
        for p in 0..panels {
            let c = a + h * (p as f64 + 0.5);
            for (xi, wi) in x.iter().zip(&w) {
                s += wi * f(c + 0.5 * h * xi);
            }
        }
        0.5 * h * s
    };
    let mut panels = 4;
    let mut prev = panel_sum(panels);
    while panels < 1 << 14 {
        panels *= 2;
        let next = panel_sum(panels);
        if (next - prev).abs() <= 1e-13 * next.abs() {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence(format!("panel quadrature on [{a}, {b}]")))
}

/// Parabolic cylinder function `D_ν(z)` for `ν < 0`.
pub fn parabolic_cylinder_d(nu: f64, z: f64) -> Result<f64> {
    let l = ln_parabolic_cylinder_d(nu, z)?;
    if l > LN_MAX {
        return Err(Error::Overflow(format!("D_{nu}({z}) exceeds f64 range")));
    }
    Ok(l.exp())
}

/// Gegenbauer polynomial `C_n^λ(t)` for `λ > 0`, by the three-term recurrence.
pub fn gegenbauer_c(n: usize, lambda: f64, t: f64) -> f64 {
    let mut c0 = 1.0;
    if n == 0 {
        return c0;
    }
    let mut c1 = 2.0 * lambda * t;
    for k in 2..=n {
        let kf = k as f64;
        let c2 = (2.0 * t * (kf + lambda - 1.0) * c1 - (kf + 2.0 * lambda - 2.0) * c0) / kf;
        c0 = c1;
        c1 = c2;
    }
    c1
}

/// `C_n^λ(1) = (2λ)_n / n!`.
pub fn gegenbauer_at_one(n: usize, lambda: f64) -> f64 {
    (ln_pochhammer(2.0 * lambda, n as f64) - ln_gamma(n as f64 + 1.0)).exp()
}

/// `γ_n^λ = 1 / ((1 + n/λ) C_n^λ(1))`, with `γ_0 = 1` and `γ_n^0 = 1/2`.
pub fn gamma_constant(n: usize, lambda: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if lambda == 0.0 {
        return 0.5;
    }
    let nf = n as f64;
    (-(nf / lambda).ln_1p() - ln_pochhammer(2.0 * lambda, nf) + ln_gamma(nf + 1.0)).exp()
}

pub fn chebyshev_t(n: usize, t: f64) -> f64 {
    (n as f64 * t.clamp(-1.0, 1.0).acos()).cos()
}

/// Max-normalised ultraspherical polynomial `D_n^λ`: `T_n` for `λ = 0`,
/// otherwise `C_n^λ / C_n^λ(1)`.
pub fn ultraspherical_d(n: usize, lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        chebyshev_t(n, t)
    } else {
        normalized_recurrence(n, lambda, t).pop().unwrap_or(1.0)
    }
}

/// `[D_0^λ(t), …, D_{n_max}^λ(t)]`.
pub fn ultraspherical_d_all(n_max: usize, lambda: f64, t: f64) -> Vec<f64> {
    if lambda == 0.0 {
        let theta = t.clamp(-1.0, 1.0).acos();
        (0..=n_max).map(|n| (n as f64 * theta).cos()).collect()
    } else {
        normalized_recurrence(n_max, lambda, t)
    }
}

// D_n = (2(n+λ-1) t D_{n-1} - (n-1) D_{n-2}) / (n+2λ-1)
fn normalized_recurrence(n_max: usize, lambda: f64, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    if n_max == 0 {
        return out;
    }
    out.push(t);
    for n in 2..=n_max {
        let nf = n as f64;
        let v = (2.0 * (nf + lambda - 1.0) * t * out[n - 1] - (nf - 1.0) * out[n - 2])
            / (nf + 2.0 * lambda - 1.0);
        out.push(v);
    }
    out
}
