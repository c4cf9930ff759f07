//! Isotropic distribution families on `S_d` and their latitude laws.
//!
//! Every family has a density `x ↦ g(η·x)` with respect to `unif(S_d)`;
//! `g` is a density on `[-1, 1]` with respect to the latitude measure ν_d.
//! Sampling goes through the polar map: draw the latitude `Y`, draw a
//! uniform longitude `Z` on `S_{d-1}`, and return `Φ_η(Y, Z)`.

use std::f64::consts::{LN_2, PI, SQRT_2};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::oracle::LatitudeCdf;
use crate::specfun::{
    gamma_constant, hyp1f1, lambda_of_dim, ln_bessel_i, ln_hyp1f1_nonneg, ln_parabolic_cylinder_d,
    ln_pochhammer, ultraspherical_d, ultraspherical_d_all,
};

/// Unit vector in `R^{d+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return domain("a sphere point needs at least two coordinates");
        }
        let norm = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= 1e-12) {
            return domain(format!("point is not on the unit sphere (norm {norm})"));
        }
        Ok(Self { coords })
    }

    /// Scales a nonzero vector onto the sphere.
    pub fn normalized(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return domain("cannot normalise a zero or non-finite vector");
        }
        Self::new(v.into_iter().map(|x| x / norm).collect())
    }

    /// North pole `e₁` of `S_d`.
    pub fn e1(d: usize) -> Self {
        let mut coords = vec![0.0; d + 1];
        coords[0] = 1.0;
        Self { coords }
    }

    /// Sphere dimension `d`; the ambient space is `R^{d+1}`.
    pub fn d(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        dot(&self.coords, &other.coords)
    }

    pub fn random_uniform<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        Self { coords: gaussian_direction(d + 1, rng) }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian_direction<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform longitude on `S_{d-1} ⊂ R^d`; for `d = 1` a random sign.
pub fn random_longitude<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    if d == 1 {
        vec![if rng.random::<bool>() { 1.0 } else { -1.0 }]
    } else {
        gaussian_direction(d, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    Uniform,
    /// Spherical power, `g ∝ |t|^{2p}`.
    Sp { p: f64 },
    /// Spherical beta, `g ∝ (1-t)^{p-1} (1+t)^{q-1}`.
    SBeta { p: f64, q: f64 },
    Vmf { rho: f64 },
    Watson { rho: f64 },
    /// Angular Gaussian with identity covariance.
    Ag { rho: f64 },
    /// Wrapped Cauchy (circle only).
    Wc { rho: f64 },
    /// Wrapped normal (circle only).
    Wn { rho: f64 },
    /// `g = 1 + α D_n^λ`.
    Delta { n: usize, alpha: f64 },
    /// Turán partial sums `Σ_{k≤n} (1/2)_k/k! T_k` (circle only).
    Sigma { n: usize },
    /// `Σ (1/2)_n/n! ρ^n T_n` in closed form (circle only).
    Turan { rho: f64 },
    /// Brownian motion started at η, observed at `time`.
    Brownian { time: f64 },
}

impl FamilyKind {
    fn validate(&self, d: usize) -> Result<()> {
        let lambda = lambda_of_dim(d);
        let circle_only = |name: &str| {
            if d == 1 {
                Ok(())
            } else {
                domain(format!("{name} is defined on the circle only (d = 1), got d = {d}"))
            }
        };
        match *self {
            FamilyKind::Uniform => Ok(()),
            FamilyKind::Sp { p } => {
                if p > -0.5 {
                    Ok(())
                } else {
                    domain(format!("SP requires p > -1/2, got {p}"))
                }
            }
            FamilyKind::SBeta { p, q } => {
                if p > 0.5 - lambda && q > 0.5 - lambda {
                    Ok(())
                } else {
                    domain(format!("SBeta requires p, q > {} (got {p}, {q})", 0.5 - lambda))
                }
            }
            FamilyKind::Vmf { rho } | FamilyKind::Ag { rho } => {
                if rho >= 0.0 && rho.is_finite() {
                    Ok(())
                } else {
                    domain(format!("rho must be finite and >= 0, got {rho}"))
                }
            }
            FamilyKind::Watson { rho } => {
                if rho.is_finite() {
                    Ok(())
                } else {
                    domain("Watson requires a finite rho")
                }
            }
            FamilyKind::Wc { rho } => {
                circle_only("WC")?;
                if (0.0..1.0).contains(&rho) {
                    Ok(())
                } else {
                    domain(format!("WC requires rho in [0,1), got {rho}"))
                }
            }
            FamilyKind::Wn { rho } => {
                circle_only("WN")?;
                if rho > 0.0 && rho.is_finite() {
                    Ok(())
                } else {
                    domain(format!("WN requires rho > 0, got {rho}"))
                }
            }
            FamilyKind::Delta { n, alpha } => {
                if n == 0 && alpha != 0.0 {
                    domain("Delta with n = 0 requires alpha = 0 (D_0 is constant)")
                } else if alpha.abs() <= 1.0 {
                    Ok(())
                } else {
                    domain(format!("Delta requires |alpha| <= 1, got {alpha}"))
                }
            }
            FamilyKind::Sigma { .. } => circle_only("Sigma"),
            FamilyKind::Turan { rho } => {
                circle_only("Turan")?;
                if (0.0..1.0).contains(&rho) {
                    Ok(())
                } else {
                    domain(format!("Turan requires rho in [0,1), got {rho}"))
                }
            }
            FamilyKind::Brownian { time } => {
                if time > 0.0 && time.is_finite() {
                    Ok(())
                } else {
                    domain(format!("Brownian requires t > 0, got {time}"))
                }
            }
        }
    }

    /// `g(t)` for a kind already validated for dimension `d`.
    pub(crate) fn g(&self, d: usize, t: f64) -> f64 {
        let lambda = lambda_of_dim(d);
        let t = t.clamp(-1.0, 1.0);
        match *self {
            FamilyKind::Uniform => 1.0,
            FamilyKind::Sp { p } => sp_constant(p, lambda) * t.abs().powf(2.0 * p),
            FamilyKind::SBeta { p, q } => {
                let side = |e: f64, x: f64| if e == 0.0 { 0.0 } else { e * x.ln() };
                (ln_sbeta_constant(p, q, lambda) + side(p - 1.0, 1.0 - t) + side(q - 1.0, 1.0 + t)).exp()
            }
            FamilyKind::Vmf { rho } => {
                if rho == 0.0 {
                    1.0
                } else {
                    (ln_vmf_constant(rho, lambda) + rho * t).exp()
                }
            }
            FamilyKind::Watson { rho } => (rho * t * t - ln_watson_normaliser(rho, lambda)).exp(),
            FamilyKind::Ag { rho } => ag_density(rho, d, t),
            FamilyKind::Wc { rho } => (1.0 - rho * rho) / (1.0 - 2.0 * rho * t + rho * rho),
            FamilyKind::Wn { rho } => {
                let c = harmonic_coefficients(|n| {
                    let nf = n as f64;
                    LN_2 - 0.5 * nf * nf * rho
                });
                ultraspherical_series(&c, 0.0, t)
            }
            FamilyKind::Delta { n, alpha } => 1.0 + alpha * ultraspherical_d(n, lambda, t),
            FamilyKind::Sigma { n } => turan_partial_sum(n, t),
            FamilyKind::Turan { rho } => {
                let phi = (1.0 - 2.0 * rho * t + rho * rho).sqrt();
                (1.0 - rho * t + phi).sqrt() / (SQRT_2 * phi)
            }
            FamilyKind::Brownian { time } => {
                let c = harmonic_coefficients(|n| {
                    let nf = n as f64;
                    -gamma_constant(n, lambda).ln() - 0.5 * nf * (nf + 2.0 * lambda) * time
                });
                ultraspherical_series(&c, lambda, t)
            }
        }
    }
}

/// `Γ(1/2) Γ(p+λ+1) / (Γ(p+1/2) Γ(λ+1))`.
fn sp_constant(p: f64, lambda: f64) -> f64 {
    (ln_gamma(0.5) + ln_gamma(p + lambda + 1.0) - ln_gamma(p + 0.5) - ln_gamma(lambda + 1.0)).exp()
}

/// `ln c_d(p, q)` for the spherical beta family.
fn ln_sbeta_constant(p: f64, q: f64, lambda: f64) -> f64 {
    -(p + q + 2.0 * (lambda - 1.0)) * LN_2 + ln_gamma(0.5) + ln_gamma(lambda + 0.5)
        + ln_gamma(p + q + 2.0 * lambda - 1.0)
        - ln_gamma(lambda + 1.0)
        - ln_gamma(p + lambda - 0.5)
        - ln_gamma(q + lambda - 0.5)
}

/// `ln(ρ^λ / (2^λ Γ(λ+1) I_λ(ρ)))`.
fn ln_vmf_constant(rho: f64, lambda: f64) -> f64 {
    let head = if lambda == 0.0 { 0.0 } else { lambda * (rho.ln() - LN_2) };
    head - ln_gamma(lambda + 1.0) - ln_bessel_i(lambda, rho)
}

/// `ln ₁F₁(1/2; λ+1; ρ)`, through Kummer's transformation for `ρ < 0`.
fn ln_watson_normaliser(rho: f64, lambda: f64) -> f64 {
    if rho >= 0.0 {
        ln_hyp1f1_nonneg(0.5, lambda + 1.0, rho)
    } else {
        rho + ln_hyp1f1_nonneg(lambda + 0.5, lambda + 1.0, -rho)
    }
}

/// Angular Gaussian latitude density. The power series has only positive
/// terms for `t ≥ 0`; for `t < 0` and `ρ > 1` it cancels badly, so the
/// equivalent parabolic cylinder form is used there.
fn ag_density(rho: f64, d: usize, t: f64) -> f64 {
    if rho == 0.0 {
        return 1.0;
    }
    let df = d as f64;
    let a = 0.5 * (df + 1.0);
    if t >= 0.0 || rho <= 1.0 {
        if t == 0.0 {
            return (-rho * rho).exp();
        }
        let ln_x = (2.0 * rho * t.abs()).ln();
        let ln_g0 = ln_gamma(a);
        let mut sum = 0.0;
        let mut max = 0.0f64;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..100_000usize {
            let kf = k as f64;
            let l = kf * ln_x + ln_gamma(a + 0.5 * kf) - ln_gamma(kf + 1.0) - ln_g0 - rho * rho;
            let v = l.exp();
            sum += if t < 0.0 && k % 2 == 1 { -v } else { v };
            max = max.max(v);
            if l < prev && v <= 1e-17 * max {
                break;
            }
            prev = l;
        }
        return sum;
    }
    let ln_d = ln_parabolic_cylinder_d(-(df + 1.0), -SQRT_2 * rho * t)
        .expect("index -(d+1) is negative");
    (-rho * rho + ln_gamma(df + 1.0) + 0.5 * rho * rho * t * t + ln_d - 0.5 * (df - 1.0) * LN_2
        - ln_gamma(a))
    .exp()
}

/// `[1, c_1, …, c_N]` with `c_n = exp(ln_c(n))`, cut once the terms have
/// passed their maximum and dropped below 1e-17 of it.
fn harmonic_coefficients<F: Fn(usize) -> f64>(ln_c: F) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut max = 0.0f64;
    let mut prev = f64::NEG_INFINITY;
    for n in 1..100_000usize {
        let l = ln_c(n);
        let v = l.exp();
        out.push(v);
        max = max.max(v);
        if l < prev && v <= 1e-17 * max.max(1.0) {
            break;
        }
        prev = l;
    }
    out
}

/// `Σ c_n D_n^λ(t)`.
pub(crate) fn ultraspherical_series(c: &[f64], lambda: f64, t: f64) -> f64 {
    let d = ultraspherical_d_all(c.len() - 1, lambda, t);
    c.iter().zip(&d).map(|(a, b)| a * b).sum()
}

/// `(1/2)_k / k!` for `k = 0..=n`.
pub fn turan_coefficients(n: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(n + 1);
    a.push(1.0);
    for k in 1..=n {
        let kf = k as f64;
        a.push(a[k - 1] * (kf - 0.5) / kf);
    }
    a
}

/// `Σ_{k≤n} (1/2)_k/k! T_k(t)` by Clenshaw's recurrence.
pub fn turan_partial_sum(n: usize, t: f64) -> f64 {
    let a = turan_coefficients(n);
    let (mut b1, mut b2) = (0.0, 0.0);
    for k in (1..=n).rev() {
        let b0 = a[k] + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    a[0] + t * b1 - b2
}

/// An isotropic family with pole `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalFamily {
    pub kind: FamilyKind,
    pub eta: SpherePoint,
}

impl SphericalFamily {
    pub fn new(kind: FamilyKind, eta: SpherePoint) -> Result<Self> {
        kind.validate(eta.d())?;
        Ok(Self { kind, eta })
    }

    pub fn d(&self) -> usize {
        self.eta.d()
    }

    pub fn lambda(&self) -> f64 {
        lambda_of_dim(self.d())
    }

    /// `g(t)`, so that `density(x) = g(η·x)`.
    pub fn latitude_density(&self, t: f64) -> f64 {
        self.kind.g(self.d(), t)
    }

    /// Density with respect to `unif(S_d)`.
    pub fn density(&self, x: &SpherePoint) -> Result<f64> {
        if x.d() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: x.d() });
        }
        Ok(self.latitude_density(self.eta.dot(x)))
    }

    /// The closed-form constant in front of the unnormalised density; 1 for
    /// families whose density is normalised by construction.
    pub fn norming_constant(&self) -> f64 {
        let lambda = self.lambda();
        match self.kind {
            FamilyKind::Sp { p } => sp_constant(p, lambda),
            FamilyKind::SBeta { p, q } => ln_sbeta_constant(p, q, lambda).exp(),
            FamilyKind::Vmf { rho } => {
                if rho == 0.0 {
                    1.0
                } else {
                    ln_vmf_constant(rho, lambda).exp()
                }
            }
            FamilyKind::Watson { rho } => 1.0 / hyp1f1(0.5, lambda + 1.0, rho),
            _ => 1.0,
        }
    }

    pub fn latitude_law(&self) -> LatitudeLaw {
        LatitudeLaw::Family { d: self.d(), kind: self.kind.clone() }
    }

    /// Prepares a sampler; cheap except for families sampled by tabulated
    /// inverse CDF, so build it once for repeated draws.
    pub fn sampler(&self) -> FamilySampler {
        FamilySampler { eta: self.eta.clone(), latitude: self.latitude_law().sampler() }
    }

    /// One draw; builds a fresh sampler each call.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpherePoint {
        self.sampler().sample(rng)
    }
}

/// Law of the latitude `η·X`.
#[derive(Debug, Clone, PartialEq)]
pub enum LatitudeLaw {
    /// Density `g` with respect to ν_d.
    Family { d: usize, kind: FamilyKind },
    PointMass { d: usize, y: f64 },
}

impl LatitudeLaw {
    pub fn d(&self) -> usize {
        match self {
            LatitudeLaw::Family { d, .. } | LatitudeLaw::PointMass { d, .. } => *d,
        }
    }

    /// `g(t)`; `None` for a point mass.
    pub fn density(&self, t: f64) -> Option<f64> {
        match self {
            LatitudeLaw::Family { d, kind } => Some(kind.g(*d, t)),
            LatitudeLaw::PointMass { .. } => None,
        }
    }

    /// CDF of the latitude, tabulated where no closed form is used.
    pub fn cdf(&self) -> LatitudeDistribution {
        match self {
            LatitudeLaw::Family { d, kind } => {
                let (d, kind) = (*d, kind.clone());
                LatitudeDistribution::Table(LatitudeCdf::new(move |t| kind.g(d, t), d))
            }
            LatitudeLaw::PointMass { y, .. } => LatitudeDistribution::Step(*y),
        }
    }

    pub fn sampler(&self) -> LatitudeSampler {
        let (d, kind) = match self {
            LatitudeLaw::PointMass { y, .. } => return LatitudeSampler::Point(*y),
            LatitudeLaw::Family { d, kind } => (*d, kind),
        };
        let lambda = lambda_of_dim(d);
        match *kind {
            FamilyKind::Uniform => LatitudeSampler::Uniform { d },
            FamilyKind::SBeta { p, q } => LatitudeSampler::Beta {
                law: Beta::new(p + lambda - 0.5, q + lambda - 0.5).expect("validated parameters"),
            },
            FamilyKind::Sp { p } => LatitudeSampler::SignedRoot {
                law: Beta::new(p + 0.5, lambda + 0.5).expect("validated parameters"),
            },
            FamilyKind::Delta { alpha, .. } => {
                LatitudeSampler::Rejection { d, kind: kind.clone(), bound: 1.0 + alpha.abs() }
            }
            FamilyKind::Sigma { n } => LatitudeSampler::Rejection {
                d,
                kind: kind.clone(),
                bound: turan_coefficients(n).iter().sum(),
            },
            _ => {
                let kind = kind.clone();
                LatitudeSampler::Table(Box::new(LatitudeCdf::new(move |t| kind.g(d, t), d)))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum LatitudeDistribution {
    Table(LatitudeCdf),
    Step(f64),
}

impl LatitudeDistribution {
    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            LatitudeDistribution::Table(t) => t.cdf(y),
            LatitudeDistribution::Step(a) => {
                if y >= *a {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Exact latitude samplers.
#[derive(Debug, Clone)]
pub enum LatitudeSampler {
    Point(f64),
    /// The latitude shadow ν_d of the uniform law.
    Uniform { d: usize },
    /// `Y = 1 - 2B`.
    Beta { law: Beta<f64> },
    /// `Y = ±√B` with a fair sign.
    SignedRoot { law: Beta<f64> },
    /// Proposals from ν_d accepted with probability `g / bound`.
    Rejection { d: usize, kind: FamilyKind, bound: f64 },
    /// Inverse of a tabulated CDF.
    Table(Box<LatitudeCdf>),
}

impl LatitudeSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LatitudeSampler::Point(y) => *y,
            LatitudeSampler::Uniform { d } => uniform_latitude(*d, rng),
            LatitudeSampler::Beta { law } => 1.0 - 2.0 * law.sample(rng),
            LatitudeSampler::SignedRoot { law } => {
                let r = law.sample(rng).sqrt();
                if rng.random::<bool>() {
                    r
                } else {
                    -r
                }
            }
            LatitudeSampler::Rejection { d, kind, bound } => loop {
                let y = uniform_latitude(*d, rng);
                if rng.random::<f64>() * bound <= kind.g(*d, y) {
                    break y;
                }
            },
            LatitudeSampler::Table(cdf) => cdf.quantile(rng.random::<f64>()),
        }
    }
}

/// A draw from ν_d: `cos(πU)` on the circle, else `1 - 2B` with
/// `B ~ Beta(d/2, d/2)`.
fn uniform_latitude<R: Rng + ?Sized>(d: usize, rng: &mut R) -> f64 {
    if d == 1 {
        (PI * rng.random::<f64>()).cos()
    } else {
        let a = 0.5 * d as f64;
        1.0 - 2.0 * Beta::new(a, a).expect("positive shape").sample(rng)
    }
}

#[derive(Debug, Clone)]
pub struct FamilySampler {
    eta: SpherePoint,
    latitude: LatitudeSampler,
}

impl FamilySampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpherePoint {
        let y = self.latitude.sample(rng);
        let z = random_longitude(self.eta.d(), rng);
        polar_compose_unchecked(&self.eta, y, &z)
    }

    pub fn sample_latitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.latitude.sample(rng)
    }
}

/// `U v` for the Householder reflection `U` that swaps `e₁` and `η`.
fn householder_apply(eta: &[f64], v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = eta.iter().map(|e| -e).collect();
    u[0] += 1.0;
    let uu = dot(&u, &u);
    if uu == 0.0 {
        return v.to_vec();
    }
    let s = 2.0 * dot(&u, v) / uu;
    v.iter().zip(&u).map(|(vi, ui)| vi - s * ui).collect()
}

/// `Φ_η(y, z) = U (y, √(1-y²) z)` where `U` is the Householder reflection
/// with `U e₁ = η`. `z` is a unit vector in `R^d` (a sign for `d = 1`).
pub fn polar_compose(eta: &SpherePoint, y: f64, z: &[f64]) -> Result<SpherePoint> {
    let d = eta.d();
    if z.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: z.len() });
    }
    if !(y.abs() <= 1.0) {
        return domain(format!("latitude must lie in [-1, 1], got {y}"));
    }
    let zn = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (zn - 1.0).abs() > 1e-12 {
        return domain(format!("longitude must be a unit vector (norm {zn})"));
    }
    Ok(polar_compose_unchecked(eta, y, z))
}

fn polar_compose_unchecked(eta: &SpherePoint, y: f64, z: &[f64]) -> SpherePoint {
    if y == 1.0 {
        return eta.clone();
    }
    if y == -1.0 {
        return SpherePoint { coords: eta.coords.iter().map(|c| -c).collect() };
    }
    let s = (1.0 - y * y).max(0.0).sqrt();
    let mut v = Vec::with_capacity(z.len() + 1);
    v.push(y);
    v.extend(z.iter().map(|zi| s * zi));
    let mut coords = householder_apply(eta.coords(), &v);
    let norm = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
    coords.iter_mut().for_each(|c| *c /= norm);
    SpherePoint { coords }
}

/// Inverse of [`polar_compose`]: `(η·x, z)`. At `x = ±η` the longitude is
/// undefined and the image of `e₂` is returned.
pub fn polar_decompose(eta: &SpherePoint, x: &SpherePoint) -> Result<(f64, Vec<f64>)> {
    if x.d() != eta.d() {
        return Err(Error::DimensionMismatch { expected: eta.d(), got: x.d() });
    }
    let w = householder_apply(eta.coords(), x.coords());
    let y = w[0].clamp(-1.0, 1.0);
    let tail = &w[1..];
    let norm = tail.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z = if norm < 1e-300 {
        let mut e = vec![0.0; tail.len()];
        e[0] = 1.0;
        e
    } else {
        tail.iter().map(|v| v / norm).collect()
    };
    Ok((y, z))
}

/// `Q_η ↦ Q_{Uη}` for an orthogonal `U`.
pub fn apply_rotation(fam: &SphericalFamily, u: &DMatrix<f64>) -> Result<SphericalFamily> {
    let n = fam.d() + 1;
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.nrows().max(u.ncols()) });
    }
    let deviation = (u.transpose() * u - DMatrix::<f64>::identity(n, n)).abs().max();
    if deviation > 1e-10 {
        return Err(Error::NonOrthogonal(deviation));
    }
    let eta = nalgebra::DVector::from_column_slice(fam.eta.coords());
    let rotated = u * eta;
    Ok(SphericalFamily {
        kind: fam.kind.clone(),
        eta: SpherePoint::normalized(rotated.iter().copied().collect())?,
    })
}

/// Supremum of the SBeta(1, n+1) density, attained at `t = 1`:
/// `(2λ+1)_n / (λ+1/2)_n`.
pub fn sbeta_one_sup(n: usize, lambda: f64) -> f64 {
    let nf = n as f64;
    (ln_pochhammer(2.0 * lambda + 1.0, nf) - ln_pochhammer(lambda + 0.5, nf)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{integrate_latitude, ks_test};
    use crate::specfun::pochhammer;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::beta::beta_reg;

    fn fam(kind: FamilyKind, d: usize) -> SphericalFamily {
        SphericalFamily::new(kind, SpherePoint::e1(d)).unwrap()
    }

    fn point_at_latitude(d: usize, y: f64) -> SpherePoint {
        let mut v = vec![0.0; d + 1];
        v[0] = y;
        v[1] = (1.0 - y * y).sqrt();
        SpherePoint::new(v).unwrap()
    }

    fn test_grid() -> Vec<SphericalFamily> {
        let mut out = Vec::new();
        for d in [2usize, 3, 5] {
            for kind in [
                FamilyKind::Uniform,
                FamilyKind::Sp { p: 2.0 },
                FamilyKind::Sp { p: 0.7 },
                FamilyKind::SBeta { p: 1.0, q: 4.0 },
                FamilyKind::SBeta { p: 2.5, q: 1.5 },
                FamilyKind::Vmf { rho: 0.5 },
                FamilyKind::Vmf { rho: 7.0 },
                FamilyKind::Watson { rho: 2.0 },
                FamilyKind::Watson { rho: -3.0 },
                FamilyKind::Ag { rho: 0.5 },
                FamilyKind::Ag { rho: 2.0 },
                FamilyKind::Delta { n: 3, alpha: 0.8 },
                FamilyKind::Brownian { time: 0.3 },
            ] {
                out.push(fam(kind, d));
            }
        }
        for kind in [
            FamilyKind::Uniform,
            FamilyKind::Wc { rho: 0.6 },
            FamilyKind::Wn { rho: 0.4 },
            FamilyKind::Sigma { n: 7 },
            FamilyKind::Turan { rho: 0.5 },
            FamilyKind::Vmf { rho: 2.0 },
            FamilyKind::SBeta { p: 1.0, q: 3.0 },
            FamilyKind::Delta { n: 2, alpha: -1.0 },
        ] {
            out.push(fam(kind, 1));
        }
        out
    }

    #[test]
    fn density_examples() {
        let x = point_at_latitude(2, 0.3);
        assert_eq!(fam(FamilyKind::Vmf { rho: 0.0 }, 2).density(&x).unwrap(), 1.0);
        let wc = fam(FamilyKind::Wc { rho: 0.5 }, 1);
        assert!((wc.density(&SpherePoint::e1(1)).unwrap() - 3.0).abs() < 1e-15);
        let lambda = 0.5;
        let n = 3;
        let sb = fam(FamilyKind::SBeta { p: 1.0, q: n as f64 + 1.0 }, 2);
        let expected = 2f64.powi(-(n as i32)) * pochhammer(2.0 * lambda + 1.0, n)
            / pochhammer(lambda + 0.5, n)
            * 1.4f64.powi(n as i32);
        assert!((sb.density(&point_at_latitude(2, 0.4)).unwrap() - expected).abs() < 1e-13);
        assert!(matches!(sb.density(&SpherePoint::e1(3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn norming_constants() {
        let w = fam(FamilyKind::Watson { rho: 2.0 }, 3);
        assert!((w.norming_constant() - 1.0 / hyp1f1(0.5, 2.0, 2.0)).abs() < 1e-15);
        let lambda = 1.0;
        let n = 2;
        let sb = fam(FamilyKind::SBeta { p: 3.0, q: 3.0 }, 3);
        let expected = pochhammer(lambda + 1.0, n) / pochhammer(lambda + 0.5, n);
        assert!((sb.norming_constant() - expected).abs() < 1e-13);
        assert_eq!(fam(FamilyKind::Uniform, 4).norming_constant(), 1.0);
        // integer-power SP constant (λ+1)_n / (1/2)_n
        let sp = fam(FamilyKind::Sp { p: 3.0 }, 4);
        let expected = pochhammer(2.5, 3) / pochhammer(0.5, 3);
        assert!((sp.norming_constant() - expected).abs() < 1e-12);
    }

    #[test]
    fn every_family_integrates_to_one() {
        for f in test_grid() {
            let d = f.d();
            let v = integrate_latitude(|t| f.latitude_density(t), d, 64);
            // endpoint singularities (SP with p < 1/2-ish) converge slowly; use the angle table
            let v = match v {
                Ok(v) => v,
                Err(_) => LatitudeCdf::new(|t| f.latitude_density(t), d).total_mass,
            };
            assert!((v - 1.0).abs() < 1e-8, "{:?} d={d}: {v}", f.kind);
        }
    }

    #[test]
    fn latitude_law_examples() {
        let law = fam(FamilyKind::Uniform, 3).latitude_law();
        assert_eq!(law.density(0.2), Some(1.0));
        let delta = fam(FamilyKind::Delta { n: 4, alpha: 1.0 }, 3).latitude_law();
        for &t in &[-0.9, 0.1, 0.7] {
            assert!((delta.density(t).unwrap() - 1.0 - ultraspherical_d(4, 1.0, t)).abs() < 1e-15);
        }
        let f = fam(FamilyKind::Vmf { rho: 1.7 }, 2);
        let c = f.norming_constant();
        for &t in &[-1.0, -0.2, 0.5, 1.0] {
            let g = f.latitude_law().density(t).unwrap();
            assert!((g - c * (1.7 * t).exp()).abs() < 1e-13 * g);
            assert!((f.density(&point_at_latitude(2, t)).unwrap() - g).abs() < 1e-13 * g);
        }
    }

    #[test]
    fn isotropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in test_grid() {
            let d = f.d();
            let eta = SpherePoint::random_uniform(d, &mut rng);
            let f = SphericalFamily::new(f.kind.clone(), eta.clone()).unwrap();
            let y = 0.37;
            let base = f.latitude_density(y);
            for _ in 0..10 {
                let z = random_longitude(d, &mut rng);
                let x = polar_compose(&eta, y, &z).unwrap();
                let v = f.density(&x).unwrap();
                assert!((v - base).abs() < 1e-10 * base.max(1.0), "{:?}", f.kind);
            }
        }
    }

    #[test]
    fn ag_series_matches_chi_expectation() {
        // E[e^{-ρ²} exp(√2 ρ R t)] with R = √S, S ~ χ²_{d+1}
        let (gx, gw) = crate::gauss::gauss_legendre(30);
        for &d in &[2usize, 3] {
            for &rho in &[0.5, 1.0] {
                let df = d as f64;
                let ln_c = -0.5 * (df - 1.0) * LN_2 - ln_gamma(0.5 * (df + 1.0));
                for &t in &[-1.0, -0.4, 0.0, 0.6, 1.0] {
                    let panels = 200;
                    let h = 20.0 / panels as f64;
                    let mut s = 0.0;
                    for p in 0..panels {
                        let c = (p as f64 + 0.5) * h;
                        for (x, w) in gx.iter().zip(&gw) {
                            let r: f64 = c + 0.5 * h * x;
                            let l = ln_c + df * r.ln() - 0.5 * r * r - rho * rho + SQRT_2 * rho * r * t;
                            s += 0.5 * h * w * l.exp();
                        }
                    }
                    let g = ag_density(rho, d, t);
                    assert!((g - s).abs() < 1e-8 * s.max(1e-3), "d={d} ρ={rho} t={t}: {g} vs {s}");
                }
            }
        }
    }

    #[test]
    fn ag_branches_agree() {
        // series and parabolic cylinder forms on the negative side
        for &rho in &[0.8, 1.0] {
            for &t in &[-0.9, -0.3] {
                let d = 2;
                let df = d as f64;
                let a = 0.5 * (df + 1.0);
                let ln_d = ln_parabolic_cylinder_d(-(df + 1.0), -SQRT_2 * rho * t).unwrap();
                let pc = (-rho * rho + ln_gamma(df + 1.0) + 0.5 * rho * rho * t * t + ln_d
                    - 0.5 * (df - 1.0) * LN_2
                    - ln_gamma(a))
                .exp();
                let series = ag_density(rho, d, t);
                assert!((pc - series).abs() < 1e-10 * series);
            }
        }
    }

    #[test]
    fn turan_closed_form_matches_series() {
        for &rho in &[0.2, 0.5, 0.9] {
            let f = fam(FamilyKind::Turan { rho }, 1);
            let a = turan_coefficients(400);
            for &t in &[-1.0, -0.3, 0.0, 0.55, 1.0] {
                let series: f64 = a
                    .iter()
                    .enumerate()
                    .map(|(n, an)| an * rho.powi(n as i32) * crate::specfun::chebyshev_t(n, t))
                    .sum();
                assert!((f.latitude_density(t) - series).abs() < 1e-12, "ρ={rho} t={t}");
            }
        }
    }

    #[test]
    fn turan_partial_sums_positive_inside() {
        for n in 0..=50 {
            for i in 1..2000 {
                let theta = PI * i as f64 / 2000.0;
                assert!(turan_partial_sum(n, theta.cos()) > 0.0, "n={n} θ={theta}");
            }
        }
    }

    #[test]
    fn polar_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in 1..=4 {
            let eta = SpherePoint::random_uniform(d, &mut rng);
            let z = random_longitude(d, &mut rng);
            assert_eq!(polar_compose(&eta, 1.0, &z).unwrap().coords(), eta.coords());
            let x = polar_compose(&eta, 0.3, &z).unwrap();
            assert!((eta.dot(&x) - 0.3).abs() < 1e-12);
            let (y, z2) = polar_decompose(&eta, &x).unwrap();
            assert!((y - 0.3).abs() < 1e-12);
            assert!(z.iter().zip(&z2).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        let e1 = SpherePoint::e1(3);
        let z = [0.6, 0.0, 0.8];
        let x = polar_compose(&e1, 0.5, &z).unwrap();
        let s = 0.75f64.sqrt();
        let expect = [0.5, s * 0.6, 0.0, s * 0.8];
        assert!(x.coords().iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-15));
        let (_, z) = polar_decompose(&e1, &e1).unwrap();
        assert_eq!(z, vec![1.0, 0.0, 0.0]);
        assert!(polar_compose(&e1, 0.5, &[1.0, 0.0]).is_err());
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        m.qr().q()
    }

    #[test]
    fn rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = fam(FamilyKind::Vmf { rho: 2.0 }, 3);
        let same = apply_rotation(&f, &DMatrix::identity(4, 4)).unwrap();
        assert_eq!(same, f);
        let u1 = random_orthogonal(4, &mut rng);
        let u2 = random_orthogonal(4, &mut rng);
        let g = apply_rotation(&f, &u1).unwrap();
        for _ in 0..10 {
            let x = SpherePoint::random_uniform(3, &mut rng);
            let ux = SpherePoint::normalized((&u1 * nalgebra::DVector::from_column_slice(x.coords())).iter().copied().collect()).unwrap();
            assert!((g.density(&ux).unwrap() - f.density(&x).unwrap()).abs() < 1e-12);
        }
        let a = apply_rotation(&g, &u2).unwrap();
        let b = apply_rotation(&f, &(&u2 * &u1)).unwrap();
        assert!(a.eta.coords().iter().zip(b.eta.coords()).all(|(p, q)| (p - q).abs() < 1e-12));
        let mut bad = DMatrix::identity(4, 4);
        bad[(0, 1)] = 0.1;
        assert!(matches!(apply_rotation(&f, &bad), Err(Error::NonOrthogonal(_))));
    }

    #[test]
    fn uniform_sampler_is_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = fam(FamilyKind::Uniform, 2);
        let n = 100_000;
        let s = f.sampler();
        let mean = (0..n).map(|_| f.eta.dot(&s.sample(&mut rng))).sum::<f64>() / n as f64;
        // Var(Y) = 1/3 under ν_2
        assert!(mean.abs() < 3.0 * (1.0 / 3.0f64 / n as f64).sqrt());
    }

    #[test]
    fn sbeta_sampler_has_beta_shadow() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for d in [2usize, 3] {
            for n in [0usize, 2, 5] {
                let f = fam(FamilyKind::SBeta { p: 1.0, q: n as f64 + 1.0 }, d);
                let s = f.sampler();
                let xs: Vec<f64> =
                    (0..10_000).map(|_| (1.0 - f.eta.dot(&s.sample(&mut rng))) / 2.0).collect();
                let a = 0.5 * d as f64;
                let p = ks_test(&xs, |x| beta_reg(a, a + n as f64, x.clamp(0.0, 1.0)));
                assert!(p > 0.01, "d={d} n={n}: p={p}");
            }
        }
    }

    #[test]
    fn vmf_latitude_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = fam(FamilyKind::Vmf { rho: 0.5 }, 2);
        let s = f.sampler();
        let n = 20_000;
        let ys: Vec<f64> = (0..n).map(|_| s.sample_latitude(&mut rng)).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let m1 = integrate_latitude(|t| t * f.latitude_density(t), 2, 32).unwrap();
        let m2 = integrate_latitude(|t| t * t * f.latitude_density(t), 2, 32).unwrap();
        let se = ((m2 - m1 * m1) / n as f64).sqrt();
        assert!((mean - m1).abs() < 3.0 * se);
    }

    #[test]
    fn every_sampler_passes_latitude_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for f in test_grid() {
            let s = f.sampler();
            let ys: Vec<f64> = (0..10_000).map(|_| f.eta.dot(&s.sample(&mut rng))).collect();
            let cdf = f.latitude_law().cdf();
            let p = ks_test(&ys, |y| cdf.cdf(y));
            // ~50 families tested at once
            assert!(p > 1e-3, "{:?} d={}: p={p}", f.kind, f.d());
        }
    }

    #[test]
    fn parameter_domains() {
        let e = SpherePoint::e1(2);
        assert!(SphericalFamily::new(FamilyKind::Sp { p: -0.5 }, e.clone()).is_err());
        assert!(SphericalFamily::new(FamilyKind::SBeta { p: 0.0, q: 1.0 }, e.clone()).is_err());
        assert!(SphericalFamily::new(FamilyKind::SBeta { p: 0.1, q: 1.0 }, e.clone()).is_ok());
        assert!(SphericalFamily::new(FamilyKind::Wc { rho: 0.5 }, e.clone()).is_err());
        assert!(SphericalFamily::new(FamilyKind::Wc { rho: 1.0 }, SpherePoint::e1(1)).is_err());
        assert!(SphericalFamily::new(FamilyKind::Delta { n: 2, alpha: 1.1 }, e.clone()).is_err());
        assert!(SphericalFamily::new(FamilyKind::Vmf { rho: -1.0 }, e).is_err());
        assert!(SpherePoint::new(vec![1.0, 1e-5]).is_err());
        assert!(SpherePoint::new(vec![1.0, 1e-7]).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn polar_compose_is_unit_with_requested_latitude(
            d in 1usize..6, y in -1.0f64..1.0, seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eta = SpherePoint::random_uniform(d, &mut rng);
            let z = random_longitude(d, &mut rng);
            let x = polar_compose(&eta, y, &z).unwrap();
            let norm = x.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            prop_assert!((eta.dot(&x) - y).abs() < 1e-12);
        }

        #[test]
        fn delta_densities_are_nonnegative(
            n in 0usize..30, alpha in -1.0f64..=1.0, d in 1usize..7, t in -1.0f64..=1.0
        ) {
            let g = FamilyKind::Delta { n, alpha }.g(d, t);
            prop_assert!(g >= -1e-12);
        }

        #[test]
        fn ultraspherical_is_bounded(n in 0usize..60, lambda in 0.0f64..5.0, t in -1.0f64..=1.0) {
            prop_assert!(ultraspherical_d(n, lambda, t).abs() <= 1.0 + 1e-12);
        }
    }
}
