//! Raw Gaussian quadrature rules on `[-1, 1]`.
//!
//! Nodes are found by Newton iteration on the three-term recurrence,
//! started from the usual asymptotic guesses. Nodes are returned in
//! decreasing order.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// Gauss-Legendre nodes and weights for `∫_{-1}^{1} f(x) dx`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, p_prev) = legendre_pair(n, x);
            dp = nf * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, p_prev) = legendre_pair(n, x);
        dp = if p.is_finite() { nf * (x * p - p_prev) / (x * x - 1.0) } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Gauss-Gegenbauer rule for `∫_{-1}^{1} f(x) (1-x²)^{λ-1/2} dx`.
///
/// For `λ = 0` this is the Gauss-Chebyshev rule with equal weights.
pub fn gauss_gegenbauer(n: usize, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_gegenbauer needs at least one node");
    assert!(lambda >= 0.0, "gauss_gegenbauer needs lambda >= 0");
    let nf = n as f64;
    if lambda == 0.0 {
        let nodes = (1..=n)
            .map(|k| (PI * (2.0 * k as f64 - 1.0) / (2.0 * nf)).cos())
            .collect();
        return (nodes, vec![PI / nf; n]);
    }
    if (lambda - 0.5).abs() < 1e-15 {
        return gauss_legendre(n);
    }
    // log of π 2^{2-2λ} Γ(n+2λ) / (n! Γ(λ)²)
    let ln_k = PI.ln() + (2.0 - 2.0 * lambda) * 2f64.ln() + ln_gamma(nf + 2.0 * lambda)
        - ln_gamma(nf + 1.0)
        - 2.0 * ln_gamma(lambda);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let k = i as f64 + 1.0;
        let mut x = (PI * (k + 0.5 * lambda - 0.5) / (nf + lambda)).cos();
        for _ in 0..100 {
            let (c, dc) = gegenbauer_with_derivative(n, lambda, x);
            let dx = c / dc;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dc) = gegenbauer_with_derivative(n, lambda, x);
        let w = (ln_k - (1.0 - x * x).ln() - 2.0 * dc.abs().ln()).exp();
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    // ln Γ at large arguments is only good to ~1e-13 absolute; the total
    // mass B(1/2, λ+1/2) is known more accurately
    let mass = (ln_gamma(0.5) + ln_gamma(lambda + 0.5) - ln_gamma(lambda + 1.0)).exp();
    let scale = mass / weights.iter().sum::<f64>();
    weights.iter_mut().for_each(|w| *w *= scale);
    (nodes, weights)
}

/// `C_n^λ(x)` and its derivative, via the recurrence and
/// `(1-x²) C_n' = (n+2λ-1) C_{n-1} - n x C_n`.
fn gegenbauer_with_derivative(n: usize, lambda: f64, x: f64) -> (f64, f64) {
    let mut c0 = 1.0;
    let mut c1 = 2.0 * lambda * x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let c2 = (2.0 * x * (kf + lambda - 1.0) * c1 - (kf + 2.0 * lambda - 2.0) * c0) / kf;
        c0 = c1;
        c1 = c2;
    }
    let nf = n as f64;
    let dc = ((nf + 2.0 * lambda - 1.0) * c0 - nf * x * c1) / (1.0 - x * x);
    (c1, dc)
}
