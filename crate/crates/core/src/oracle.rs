//! Independent numerical oracles: quadrature against the latitude measure
//! ν_d, Monte-Carlo integration over `S_d`, tabulated latitude CDFs and
//! goodness-of-fit tests.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::gauss::{gauss_gegenbauer, gauss_legendre};
use crate::specfun::lambda_of_dim;

/// Normalising constant of `h_d`, `Γ(λ+1) / (Γ(1/2) Γ(λ+1/2))`.
pub fn h_norm(d: usize) -> f64 {
    let lambda = lambda_of_dim(d);
    (ln_gamma(lambda + 1.0) - ln_gamma(0.5) - ln_gamma(lambda + 0.5)).exp()
}

/// Lebesgue density on `[-1, 1]` of the latitude `η·X` for `X ~ unif(S_d)`.
pub fn h_d(d: usize, y: f64) -> f64 {
    let lambda = lambda_of_dim(d);
    if y.abs() >= 1.0 {
        return if lambda > 0.5 { 0.0 } else if lambda == 0.5 { 0.5 } else { f64::INFINITY };
    }
    h_norm(d) * (1.0 - y * y).powf(lambda - 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// Gauss-Legendre in the angle `θ = arccos y`; weights are Lebesgue
    /// weights in `y`, so integrands must carry `h_d` themselves.
    GaussLegendre,
    /// Gauss-Gegenbauer for the weight `(1-y²)^{λ-1/2}`.
    GaussGegenbauer,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub d: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    nu_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(kind: RuleKind, d: usize, n: usize) -> Self {
        assert!(d >= 1 && n >= 1);
        let lambda = lambda_of_dim(d);
        let norm = h_norm(d);
        match kind {
            RuleKind::GaussLegendre => {
                let (x, w) = gauss_legendre(n);
                let mut nodes = Vec::with_capacity(n);
                let mut weights = Vec::with_capacity(n);
                let mut nu_weights = Vec::with_capacity(n);
                for (xi, wi) in x.iter().zip(&w) {
                    let theta = 0.5 * PI * (1.0 - xi);
                    let (s, c) = theta.sin_cos();
                    nodes.push(c);
                    weights.push(0.5 * PI * wi * s);
                    nu_weights.push(0.5 * PI * wi * norm * s.powf(2.0 * lambda));
                }
                Self { kind, d, nodes, weights, nu_weights }
            }
            RuleKind::GaussGegenbauer => {
                let (nodes, weights) = gauss_gegenbauer(n, lambda);
                let nu_weights = weights.iter().map(|w| w * norm).collect();
                Self { kind, d, nodes, weights, nu_weights }
            }
        }
    }

    /// Shared, lazily built rule.
    pub fn cached(kind: RuleKind, d: usize, n: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<(RuleKind, usize, usize), Arc<QuadratureRule>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().unwrap().get(&(kind, d, n)) {
            return rule.clone();
        }
        let rule = Arc::new(Self::new(kind, d, n));
        cache.lock().unwrap().insert((kind, d, n), rule.clone());
        rule
    }

    /// `∫ f dν_d`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.nu_weights).map(|(&y, w)| w * f(y)).sum()
    }

    /// `∫ |f| dν_d`, the scale against which cancellation is judged.
    pub fn integrate_abs<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.nu_weights).map(|(&y, w)| w * f(y).abs()).sum()
    }

    /// Weights `w_i` with `Σ w_i f(y_i) ≈ ∫ f dν_d`.
    pub fn nu_weights(&self) -> &[f64] {
        &self.nu_weights
    }
}

/// `∫ f dν_d` by Gauss-Gegenbauer with node doubling from `n_nodes` until two
/// estimates agree to 1e-12 (relative to `∫|f| dν_d`).
///
/// `d = 0` is the two-point law at `±1`.
pub fn integrate_latitude<F: Fn(f64) -> f64>(f: F, d: usize, n_nodes: usize) -> Result<f64> {
    if d == 0 {
        return Ok(0.5 * (f(1.0) + f(-1.0)));
    }
    let mut n = n_nodes.max(2);
    let mut prev = QuadratureRule::cached(RuleKind::GaussGegenbauer, d, n).integrate(&f);
    while n < 1 << 14 {
        n *= 2;
        let rule = QuadratureRule::cached(RuleKind::GaussGegenbauer, d, n);
        let next = rule.integrate(&f);
        let scale = rule.integrate_abs(&f).max(f64::MIN_POSITIVE);
        if (next - prev).abs() <= 1e-12 * scale {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence(format!("latitude quadrature did not settle by {n} nodes")))
}

/// Tabulated CDF of the latitude law with ν_d-density `g`.
///
/// The table lives on the angle `φ = arccos(-y)`, where the Lebesgue
/// density `c g(-cos φ) sin^{2λ} φ` is smooth for every `λ`. Between
/// nodes the CDF is a monotone cubic Hermite interpolant.
#[derive(Debug, Clone)]
pub struct LatitudeCdf {
    phi: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// Mass before normalisation; should be 1 for a valid `g`.
    pub total_mass: f64,
}

const CDF_CELLS: usize = 4096;

impl LatitudeCdf {
    pub fn new<G: Fn(f64) -> f64>(g: G, d: usize) -> Self {
        Self::with_cells(g, d, CDF_CELLS)
    }

    pub fn with_cells<G: Fn(f64) -> f64>(g: G, d: usize, cells: usize) -> Self {
        let lambda = lambda_of_dim(d);
        let norm = h_norm(d);
        let dens = |phi: f64| {
            let (s, c) = phi.sin_cos();
            let w = if lambda == 0.0 { 1.0 } else { s.abs().powf(2.0 * lambda) };
            (norm * g(-c) * w).max(0.0)
        };
        let (gx, gw) = gauss_legendre(8);
        let h = PI / cells as f64;
        let phi: Vec<f64> = (0..=cells).map(|j| j as f64 * h).collect();
        let mut values = Vec::with_capacity(cells + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for j in 0..cells {
            let mid = phi[j] + 0.5 * h;
            let cell: f64 = gx.iter().zip(&gw).map(|(x, w)| w * dens(mid + 0.5 * h * x)).sum();
            acc += 0.5 * h * cell;
            values.push(acc);
        }
        let total_mass = acc;
        values.iter_mut().for_each(|v| *v /= total_mass);
        let mut slopes: Vec<f64> = phi.iter().map(|&p| dens(p) / total_mass).collect();
        // Fritsch-Carlson limiter keeps every cell monotone
        for j in 0..cells {
            let delta = (values[j + 1] - values[j]) / h;
            if delta <= 0.0 {
                slopes[j] = 0.0;
                slopes[j + 1] = 0.0;
                continue;
            }
            let a = slopes[j] / delta;
            let b = slopes[j + 1] / delta;
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slopes[j] = tau * a * delta;
                slopes[j + 1] = tau * b * delta;
            }
        }
        Self { phi, values, slopes, total_mass }
    }

    fn hermite(&self, j: usize, s: f64) -> f64 {
        let h = self.phi[j + 1] - self.phi[j];
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.values[j]
            + (s3 - 2.0 * s2 + s) * h * self.slopes[j]
            + (-2.0 * s3 + 3.0 * s2) * self.values[j + 1]
            + (s3 - s2) * h * self.slopes[j + 1]
    }

    /// `P(Y ≤ y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= -1.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 1.0;
        }
        let phi = (-y).acos();
        let cells = self.phi.len() - 1;
        let h = PI / cells as f64;
        let j = ((phi / h) as usize).min(cells - 1);
        self.hermite(j, (phi - self.phi[j]) / h).clamp(0.0, 1.0)
    }

    /// Smallest `y` with `cdf(y) ≥ u`, solved to near machine precision.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return -1.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let j = self.values.partition_point(|&v| v < u).clamp(1, self.values.len() - 1) - 1;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.hermite(j, mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.phi[j + 1] - self.phi[j];
        -(self.phi[j] + 0.5 * (lo + hi) * h).cos()
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // small-x form converges fast where the alternating series does not
        let mut s = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            s += (-(m * m) * PI * PI / (8.0 * x * x)).exp();
        }
        return (1.0 - (2.0 * PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov statistic `D_n`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            if f.is_nan() {
                // a broken CDF must not look like a good fit
                return f64::INFINITY;
            }
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// One-sample KS p-value from the asymptotic Kolmogorov law, with the
/// usual `√n + 0.12 + 0.11/√n` finite-sample adjustment.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let d = ks_statistic(samples, cdf);
    let sn = (samples.len() as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample KS p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.total_cmp(q));
    xb.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let sn = (na * nb / (na + nb)).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2 {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test. Adjacent bins are merged left to right until
/// each expected count is at least 5.
pub fn chi2_test(counts: &[u64], expected: &[f64]) -> Result<Chi2> {
    if counts.len() != expected.len() {
        return Err(Error::DimensionMismatch { expected: expected.len(), got: counts.len() });
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &x) in counts.iter().zip(expected) {
        o += c as f64;
        e += x;
        if e >= 5.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    if bins.len() < 2 || bins.iter().any(|b| b.1 < 5.0) {
        return Err(Error::InsufficientCounts(format!(
            "{} usable bins after merging to expected >= 5",
            bins.iter().filter(|b| b.1 >= 5.0).count()
        )));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let p_value = if statistic == 0.0 { 1.0 } else { gamma_ur(0.5 * dof as f64, 0.5 * statistic) };
    Ok(Chi2 { statistic, dof, p_value })
}

/// Uniform point on `S_d ⊂ R^{d+1}` from a normalised Gaussian vector.
pub fn uniform_on_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..=d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Monte-Carlo mean of `f` over `unif(S_d)`; returns `(mean, standard error)`.
pub fn mc_sphere_mean<F, R>(f: F, d: usize, n: usize, rng: &mut R) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let x = uniform_on_sphere(d, rng);
        let v = f(&x);
        let delta = v - mean;
        mean += delta / (i as f64 + 1.0);
        m2 += delta * (v - mean);
    }
    let var = if n > 1 { m2 / (n as f64 - 1.0) } else { 0.0 };
    (mean, (var / n as f64).sqrt())
}
