//! Discrete mixture representations `P_η = Σ w(n) Q_{n,η}` of the spherical
//! families, their numerical verification, the two-stage sampler and the
//! composition algebra of ultraspherical kernels.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::mixing::{beta_budget, beta_unit_root, sample_mixing, BetaBudget, MixingLaw};
use crate::oracle::{integrate_latitude, QuadratureRule, RuleKind};
use crate::specfun::{
    bessel_i_ratio, gamma_constant, lambda_of_dim, ln_pochhammer, ultraspherical_d,
    ultraspherical_d_all,
};
use crate::spherical::{sbeta_one_sup, turan_coefficients, FamilyKind, SpherePoint, SphericalFamily};

/// Budgets this close above one are treated as one (root-finding noise).
const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    VmfSBeta,
    WatsonSp,
    WatsonSBeta,
    AgSBeta,
    WcDelta,
    WnDelta,
    Vmf1Delta,
    VmfdDelta,
    TuranDelta,
    TuranSigma,
    BrownianDelta,
    BrownianSBeta,
}

impl Theorem {
    pub const ALL: [Theorem; 12] = [
        Theorem::VmfSBeta,
        Theorem::WatsonSp,
        Theorem::WatsonSBeta,
        Theorem::AgSBeta,
        Theorem::WcDelta,
        Theorem::WnDelta,
        Theorem::Vmf1Delta,
        Theorem::VmfdDelta,
        Theorem::TuranDelta,
        Theorem::TuranSigma,
        Theorem::BrownianDelta,
        Theorem::BrownianSBeta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::VmfSBeta => "vmf-sbeta",
            Theorem::WatsonSp => "watson-sp",
            Theorem::WatsonSBeta => "watson-sbeta",
            Theorem::AgSBeta => "ag-sbeta",
            Theorem::WcDelta => "wc-delta",
            Theorem::WnDelta => "wn-delta",
            Theorem::Vmf1Delta => "vmf1-delta",
            Theorem::VmfdDelta => "vmfd-delta",
            Theorem::TuranDelta => "turan-delta",
            Theorem::TuranSigma => "turan-sigma",
            Theorem::BrownianDelta => "brownian-delta",
            Theorem::BrownianSBeta => "brownian-sbeta",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Whether the parameter is a time `t` rather than a concentration `ρ`.
    pub fn is_timed(self) -> bool {
        matches!(self, Theorem::BrownianDelta | Theorem::BrownianSBeta)
    }

    fn circle_only(self) -> bool {
        matches!(
            self,
            Theorem::WcDelta | Theorem::WnDelta | Theorem::Vmf1Delta | Theorem::TuranDelta | Theorem::TuranSigma
        )
    }

    /// Parameter interval `[lo, hi]` on which the representation holds.
    pub fn validity(self, d: usize) -> Result<(f64, f64)> {
        let lambda = lambda_of_dim(d);
        let inf = f64::INFINITY;
        Ok(match self {
            Theorem::VmfSBeta | Theorem::WatsonSp | Theorem::AgSBeta => (0.0, inf),
            Theorem::WatsonSBeta => (-inf, 0.0),
            Theorem::WcDelta => (0.0, beta_unit_root(BetaBudget::Wc)?),
            Theorem::TuranDelta => (0.0, beta_unit_root(BetaBudget::Turan)?),
            Theorem::TuranSigma => (0.0, 1.0),
            Theorem::WnDelta => (beta_unit_root(BetaBudget::Wn)?, inf),
            Theorem::Vmf1Delta => (0.0, beta_unit_root(BetaBudget::Vmf1)?),
            Theorem::VmfdDelta => (0.0, beta_unit_root(BetaBudget::Vmfd { lambda })?),
            Theorem::BrownianDelta => (beta_unit_root(BetaBudget::Brownian { lambda })?, inf),
            Theorem::BrownianSBeta => (0.0, inf),
        })
    }
}

/// The indexed base family `n ↦ Q_{n,η}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Base {
    /// `SBeta(1, n+1)`.
    SBetaOne,
    /// `SP(n)`.
    Sp,
    /// `SBeta(n+1, n+1)`.
    SBetaSym,
    /// Uniform at `n = 0`, otherwise `Δ_{n,η,1}`.
    Delta,
    /// Uniform at `n = 0`, otherwise `Δ_{n,η,s_n}` with `s_n = ±1`.
    SignedDelta(Vec<f64>),
    /// Turán partial sums `Σ_n`.
    Sigma,
}

impl Base {
    pub fn member_kind(&self, n: usize) -> FamilyKind {
        let nf = n as f64;
        match self {
            Base::SBetaOne => FamilyKind::SBeta { p: 1.0, q: nf + 1.0 },
            Base::Sp => FamilyKind::Sp { p: nf },
            Base::SBetaSym => FamilyKind::SBeta { p: nf + 1.0, q: nf + 1.0 },
            Base::Delta if n == 0 => FamilyKind::Uniform,
            Base::Delta => FamilyKind::Delta { n, alpha: 1.0 },
            Base::SignedDelta(_) if n == 0 => FamilyKind::Uniform,
            Base::SignedDelta(s) => FamilyKind::Delta { n, alpha: s.get(n).copied().unwrap_or(1.0) },
            Base::Sigma => FamilyKind::Sigma { n },
        }
    }

    pub fn member(&self, n: usize, eta: &SpherePoint) -> Result<SphericalFamily> {
        SphericalFamily::new(self.member_kind(n), eta.clone())
    }

    /// `sup_t g_n(t)`.
    pub fn sup_density(&self, n: usize, lambda: f64) -> f64 {
        let nf = n as f64;
        match self {
            Base::SBetaOne => sbeta_one_sup(n, lambda),
            Base::Sp => (ln_pochhammer(lambda + 1.0, nf) - ln_pochhammer(0.5, nf)).exp(),
            Base::SBetaSym => (ln_pochhammer(lambda + 1.0, nf) - ln_pochhammer(lambda + 0.5, nf)).exp(),
            Base::Delta | Base::SignedDelta(_) => 2.0,
            Base::Sigma => turan_coefficients(n).iter().sum(),
        }
    }
}

/// Density of a representation's target on the latitude scale.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Family(SphericalFamily),
    /// `1 + Σ_{n≥1} c_n D_n^λ`, with `coeffs[0]` ignored.
    Expansion { d: usize, coeffs: Vec<f64> },
}

impl Target {
    pub fn latitude_density(&self, t: f64) -> f64 {
        match self {
            Target::Family(f) => f.latitude_density(t),
            Target::Expansion { d, coeffs } => {
                let lambda = lambda_of_dim(*d);
                let dn = ultraspherical_d_all(coeffs.len().saturating_sub(1), lambda, t);
                1.0 + coeffs.iter().zip(&dn).skip(1).map(|(c, v)| c * v).sum::<f64>()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixtureRepresentation {
    pub theorem: Option<Theorem>,
    pub weights: MixingLaw,
    pub base: Base,
    pub target: Target,
    pub eta: SpherePoint,
    /// Interval of the parameter where the identity holds.
    pub validity: (f64, f64),
}

impl MixtureRepresentation {
    pub fn d(&self) -> usize {
        self.eta.d()
    }

    /// `Σ_{n≤N} w(n) g_n(t)` over the retained table.
    pub fn mixture_density(&self, t: f64) -> f64 {
        let d = self.d();
        let lambda = lambda_of_dim(d);
        let w = self.weights.table();
        match &self.base {
            Base::Delta | Base::SignedDelta(_) => {
                let dn = ultraspherical_d_all(w.len() - 1, lambda, t);
                let mut s = w[0];
                for n in 1..w.len() {
                    let a = match self.base.member_kind(n) {
                        FamilyKind::Delta { alpha, .. } => alpha,
                        _ => 1.0,
                    };
                    s += w[n] * (1.0 + a * dn[n]);
                }
                s
            }
            base => w
                .iter()
                .enumerate()
                .filter(|(_, &wn)| wn != 0.0)
                .map(|(n, wn)| wn * base.member_kind(n).g(d, t))
                .sum(),
        }
    }

    /// Bound on the density contributed by the neglected tail: the tail
    /// mass times the base supremum just past the cut (and twice past it,
    /// for bases whose supremum grows with `n`).
    pub fn truncation_bound(&self) -> f64 {
        let lambda = lambda_of_dim(self.d());
        let n = self.weights.truncation() + 1;
        let sup = self.base.sup_density(n, lambda).max(self.base.sup_density(2 * n, lambda));
        self.weights.tail_bound() * sup
    }

    pub fn target_density(&self, t: f64) -> f64 {
        self.target.latitude_density(t)
    }
}

fn check_budget(theorem: Theorem, beta: f64, param: f64, validity: (f64, f64)) -> Result<f64> {
    if beta > 1.0 + BUDGET_SLACK {
        return domain(format!(
            "{} requires the parameter in [{}, {}] (budget {beta} > 1 at {param})",
            theorem.name(),
            validity.0,
            validity.1
        ));
    }
    Ok(beta.min(1.0))
}

/// Builds the representation of `theorem` with pole `eta` at parameter
/// `rho` (the time `t` for the Brownian theorems).
pub fn build_representation(theorem: Theorem, eta: &SpherePoint, rho: f64) -> Result<MixtureRepresentation> {
    let d = eta.d();
    let lambda = lambda_of_dim(d);
    if rho.is_nan() {
        return domain("parameter is NaN");
    }
    if theorem.circle_only() && d != 1 {
        return domain(format!("{} is a circle (d = 1) representation, got d = {d}", theorem.name()));
    }
    if theorem == Theorem::VmfdDelta && d < 2 {
        return domain("vmfd-delta needs d >= 2; use vmf1-delta on the circle");
    }
    let validity = theorem.validity(d)?;
    let in_range = match theorem {
        // the budget decides at the computed roots
        Theorem::WnDelta | Theorem::Vmf1Delta | Theorem::VmfdDelta | Theorem::BrownianDelta => {
            rho >= 0.0
        }
        Theorem::TuranSigma | Theorem::BrownianSBeta => rho >= validity.0 && rho < validity.1 && {
            theorem != Theorem::BrownianSBeta || rho > 0.0
        },
        _ => rho >= validity.0 && rho <= validity.1,
    };
    if !in_range {
        return domain(format!(
            "{} requires the parameter in [{}, {}], got {rho}",
            theorem.name(),
            validity.0,
            validity.1
        ));
    }

    let fam = |kind: FamilyKind| SphericalFamily::new(kind, eta.clone());
    let (weights, base, target) = match theorem {
        Theorem::VmfSBeta => (
            MixingLaw::chs(lambda + 0.5, 2.0 * lambda + 1.0, 2.0 * rho)?,
            Base::SBetaOne,
            fam(FamilyKind::Vmf { rho })?,
        ),
        Theorem::WatsonSp => {
            (MixingLaw::chs(0.5, lambda + 1.0, rho)?, Base::Sp, fam(FamilyKind::Watson { rho })?)
        }
        Theorem::WatsonSBeta => (
            MixingLaw::chs(lambda + 0.5, lambda + 1.0, -rho)?,
            Base::SBetaSym,
            fam(FamilyKind::Watson { rho })?,
        ),
        Theorem::AgSBeta => {
            let w = if rho == 0.0 { MixingLaw::point_mass_at_zero() } else { MixingLaw::dpc(lambda + 1.0, rho)? };
            (w, Base::SBetaOne, fam(FamilyKind::Ag { rho })?)
        }
        Theorem::WcDelta => {
            let beta = check_budget(theorem, beta_budget(BetaBudget::Wc, rho)?, rho, validity)?;
            let w = if rho == 0.0 {
                MixingLaw::point_mass_at_zero()
            } else {
                MixingLaw::zero_inflated(beta, &MixingLaw::geometric_n(1.0 - rho)?)?
            };
            (w, Base::Delta, fam(FamilyKind::Wc { rho })?)
        }
        Theorem::WnDelta => {
            let beta = check_budget(theorem, beta_budget(BetaBudget::Wn, rho)?, rho, validity)?;
            let w = MixingLaw::zero_inflated(beta, &MixingLaw::wn_weights(rho)?)?;
            (w, Base::Delta, fam(FamilyKind::Wn { rho })?)
        }
        Theorem::Vmf1Delta => {
            let beta = check_budget(theorem, beta_budget(BetaBudget::Vmf1, rho)?, rho, validity)?;
            let w = if rho == 0.0 {
                MixingLaw::point_mass_at_zero()
            } else {
                MixingLaw::zero_inflated(beta, &MixingLaw::positive_skellam(rho)?)?
            };
            (w, Base::Delta, fam(FamilyKind::Vmf { rho })?)
        }
        Theorem::VmfdDelta => {
            let beta =
                check_budget(theorem, beta_budget(BetaBudget::Vmfd { lambda }, rho)?, rho, validity)?;
            let w = if rho == 0.0 {
                MixingLaw::point_mass_at_zero()
            } else {
                MixingLaw::zero_inflated(beta, &MixingLaw::gen_positive_skellam(lambda, rho)?)?
            };
            (w, Base::Delta, fam(FamilyKind::Vmf { rho })?)
        }
        Theorem::TuranDelta => {
            let beta = check_budget(theorem, beta_budget(BetaBudget::Turan, rho)?, rho, validity)?;
            let w = if rho == 0.0 {
                MixingLaw::point_mass_at_zero()
            } else {
                MixingLaw::zero_inflated(beta, &MixingLaw::zinb(0.5, 1.0 - rho)?)?
            };
            (w, Base::Delta, fam(FamilyKind::Turan { rho })?)
        }
        Theorem::TuranSigma => {
            (MixingLaw::turan_geometric(rho)?, Base::Sigma, fam(FamilyKind::Turan { rho })?)
        }
        Theorem::BrownianDelta => {
            let b = BetaBudget::Brownian { lambda };
            let beta = check_budget(theorem, beta_budget(b, rho)?, rho, validity)?;
            let w = MixingLaw::zero_inflated(beta, &MixingLaw::brownian_weights(lambda, rho)?)?;
            (w, Base::Delta, fam(FamilyKind::Brownian { time: rho })?)
        }
        Theorem::BrownianSBeta => (
            MixingLaw::death_process(d, rho)?,
            Base::SBetaOne,
            fam(FamilyKind::Brownian { time: rho })?,
        ),
    };
    Ok(MixtureRepresentation {
        theorem: Some(theorem),
        weights,
        base,
        target: Target::Family(target),
        eta: eta.clone(),
        validity,
    })
}

/// Representation of `1 + Σ c_n D_n^λ` with `Σ|c_n| ≤ 1` over the signed
/// ultraspherical base: weights `|c_n|`, base signs `sign(c_n)`.
pub fn signed_delta_representation(coeffs: &[f64], eta: &SpherePoint) -> Result<MixtureRepresentation> {
    let budget: f64 = coeffs.iter().skip(1).map(|c| c.abs()).sum();
    if budget > 1.0 + BUDGET_SLACK {
        return domain(format!("coefficient budget {budget} exceeds 1"));
    }
    let mut w: Vec<f64> = coeffs.iter().map(|c| c.abs()).collect();
    if w.is_empty() {
        w.push(0.0);
    }
    w[0] = (1.0 - budget).max(0.0);
    let signs = coeffs.iter().map(|c| if *c < 0.0 { -1.0 } else { 1.0 }).collect();
    Ok(MixtureRepresentation {
        theorem: None,
        weights: MixingLaw::explicit(w, 0.0),
        base: Base::SignedDelta(signs),
        target: Target::Expansion { d: eta.d(), coeffs: coeffs.to_vec() },
        eta: eta.clone(),
        validity: (f64::NEG_INFINITY, f64::INFINITY),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    /// `sup |target − truncated mixture|` over the grid.
    pub sup_error: f64,
    /// Last mixture index used.
    pub truncation: usize,
    pub tail_mass: f64,
    /// Bound on what the neglected tail adds to the density.
    pub truncation_bound: f64,
}

impl Verification {
    pub fn passes(&self, tol: f64) -> bool {
        self.sup_error + self.truncation_bound < tol
    }
}

/// Chebyshev–Lobatto points `cos(πk/(m-1))`, endpoints included.
pub fn chebyshev_grid(m: usize) -> Vec<f64> {
    let m = m.max(2);
    (0..m).map(|k| (PI * k as f64 / (m - 1) as f64).cos()).collect()
}

/// Compares target and truncated mixture latitude densities on a
/// Chebyshev grid of `grid_size` points.
pub fn verify_representation(rep: &MixtureRepresentation, grid_size: usize) -> Verification {
    let sup_error = chebyshev_grid(grid_size)
        .into_iter()
        .map(|t| (rep.target_density(t) - rep.mixture_density(t)).abs())
        .fold(0.0, nan_max);
    Verification {
        sup_error,
        truncation: rep.weights.truncation(),
        tail_mass: rep.weights.tail_bound(),
        truncation_bound: rep.truncation_bound(),
    }
}

/// Maximum that lets a NaN poison the result as `+∞`.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::INFINITY
    } else {
        a.max(b)
    }
}

/// Draws the index from the mixing law, then a point from that base member.
pub fn two_stage_sample<R: Rng + ?Sized>(rep: &MixtureRepresentation, rng: &mut R) -> Result<SpherePoint> {
    let n = sample_mixing(&rep.weights, rng)?;
    Ok(rep.base.member(n, &rep.eta)?.sample(rng))
}

/// `w̃(n) = γ_n w(n) w'(n)` for `n ≥ 1` and `w̃(0) = 1 − Σ_{n≥1} w̃(n)`:
/// the weights of `∫ Q'_ζ P_η(dζ)` when both use the ultraspherical base.
pub fn compose(a: &MixingLaw, b: &MixingLaw, lambda: f64) -> MixingLaw {
    let len = a.table().len().max(b.table().len());
    let mut w = vec![0.0; len];
    for (n, wn) in w.iter_mut().enumerate().skip(1) {
        *wn = gamma_constant(n, lambda) * a.pmf(n) * b.pmf(n);
    }
    let mass: f64 = w.iter().sum();
    w[0] = 1.0 - mass;
    while w.len() > 1 && *w.last().unwrap() == 0.0 {
        w.pop();
    }
    MixingLaw::explicit(w, a.tail_bound() + b.tail_bound())
}

/// Nodes and ν_d-weights, exact for polynomials of degree `< 2n`; `d = 0`
/// gives the two-point law on `±1`.
fn latitude_rule(d: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    if d == 0 {
        return (vec![-1.0, 1.0], vec![0.5, 0.5]);
    }
    let rule = QuadratureRule::cached(RuleKind::GaussGegenbauer, d, n);
    (rule.nodes.clone(), rule.nu_weights().to_vec())
}

/// `∫ D_m^λ(η·x) D_n^λ(ξ·x) dunif(x)` through the two-angle reduction:
/// with `y = η·x`, `s = η·ξ` and `u` the latitude of the longitude of `x`
/// relative to `ξ`, `ξ·x = s y + √(1-s²)√(1-y²) u` where `y ~ ν_d` and
/// `u ~ ν_{d-1}` independently. The inner integrand is polynomial in
/// `y` and `u`, so Gauss rules of modest size are exact.
pub fn harmonic_product_integral(n: usize, m: usize, eta: &SpherePoint, xi: &SpherePoint) -> Result<f64> {
    if eta.d() != xi.d() {
        return Err(Error::DimensionMismatch { expected: eta.d(), got: xi.d() });
    }
    let d = eta.d();
    let lambda = lambda_of_dim(d);
    let s = eta.dot(xi).clamp(-1.0, 1.0);
    let c = (1.0 - s * s).sqrt();
    let k = (n + m) / 2 + 2;
    let (ys, wy) = latitude_rule(d, k);
    let (us, wu) = latitude_rule(d - 1, n / 2 + 2);
    let mut total = 0.0;
    for (&y, &a) in ys.iter().zip(&wy) {
        let r = c * (1.0 - y * y).max(0.0).sqrt();
        let inner: f64 = us
            .iter()
            .zip(&wu)
            .map(|(&u, &b)| b * ultraspherical_d(n, lambda, (s * y + r * u).clamp(-1.0, 1.0)))
            .sum();
        total += a * ultraspherical_d(m, lambda, y) * inner;
    }
    Ok(total)
}

/// Coefficients `β_n = ⟨g, D_n⟩ / ‖D_n‖²` in `L²(ν_d)` for `n ≤ n_max`.
pub fn expansion_coefficients_of<G: Fn(f64) -> f64>(g: G, d: usize, n_max: usize) -> Result<Vec<f64>> {
    let lambda = lambda_of_dim(d);
    (0..=n_max)
        .map(|n| {
            let ip = integrate_latitude(|t| g(t) * ultraspherical_d(n, lambda, t), d, 2 * n_max + 32)?;
            Ok(ip / gamma_constant(n, lambda))
        })
        .collect()
}

pub fn expansion_coefficients(fam: &SphericalFamily, n_max: usize) -> Result<Vec<f64>> {
    expansion_coefficients_of(|t| fam.latitude_density(t), fam.d(), n_max)
}

/// Closed-form expansion coefficients where the family has them.
pub fn closed_form_coefficients(fam: &SphericalFamily, n_max: usize) -> Option<Vec<f64>> {
    let lambda = fam.lambda();
    let gamma = |n: usize| gamma_constant(n, lambda);
    let c: Vec<f64> = match fam.kind {
        FamilyKind::Uniform => (0..=n_max).map(|n| if n == 0 { 1.0 } else { 0.0 }).collect(),
        FamilyKind::Vmf { rho } => {
            (0..=n_max).map(|n| if rho == 0.0 && n > 0 { 0.0 } else { bessel_i_ratio(lambda, n, rho) / gamma(n) }).collect()
        }
        FamilyKind::Wc { rho } => {
            (0..=n_max).map(|n| if n == 0 { 1.0 } else { 2.0 * rho.powi(n as i32) }).collect()
        }
        FamilyKind::Wn { rho } => (0..=n_max)
            .map(|n| if n == 0 { 1.0 } else { 2.0 * (-0.5 * (n * n) as f64 * rho).exp() })
            .collect(),
        FamilyKind::Turan { rho } => {
            let a = turan_coefficients(n_max);
            a.iter().enumerate().map(|(n, an)| an * rho.powi(n as i32)).collect()
        }
        FamilyKind::Sigma { n: k } => {
            let a = turan_coefficients(k);
            (0..=n_max).map(|n| a.get(n).copied().unwrap_or(0.0)).collect()
        }
        FamilyKind::Delta { n: k, alpha } => (0..=n_max)
            .map(|n| match n {
                0 if k == 0 => 1.0 + alpha,
                0 => 1.0,
                n if n == k => alpha,
                _ => 0.0,
            })
            .collect(),
        FamilyKind::Brownian { time } => (0..=n_max)
            .map(|n| {
                let nf = n as f64;
                (-0.5 * nf * (nf + 2.0 * lambda) * time).exp() / gamma(n)
            })
            .collect(),
        _ => return None,
    };
    Some(c)
}

/// Monte Carlo check of the self-mixing identities. The latitude of `ζ`
/// is drawn from `Δ_{n,η,β}` and the latitude of `x` about `ζ` from
/// `Δ_{m,ζ,α}`; the relative longitude `u ~ ν_{d-1}` enters through
/// `η·x = y₁y₂ + √(1-y₁²)√(1-y₂²) u` and is integrated by a Gauss rule.
/// The projection density estimate of `η·x` is compared with
/// `1 + γ_n α β D_n` (for `n = m`) or with `1` (for `n ≠ m`), and the
/// largest deviation on a latitude grid is returned.
pub fn self_mix_check<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    alpha: f64,
    beta: f64,
    lambda: f64,
    mc_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if alpha.abs() > 1.0 || beta.abs() > 1.0 {
        return domain("self mixing needs |alpha|, |beta| <= 1");
    }
    let d2 = 2.0 * lambda + 1.0;
    if (d2 - d2.round()).abs() > 1e-12 || d2 < 1.0 {
        return domain(format!("lambda must be (d-1)/2 for an integer d >= 1, got {lambda}"));
    }
    if n == 0 || m == 0 {
        return domain("self mixing needs orders n, m >= 1");
    }
    let d = d2.round() as usize;
    let eta = SpherePoint::e1(d);
    let outer = SphericalFamily::new(FamilyKind::Delta { n, alpha: beta }, eta.clone())?.sampler();
    let inner = SphericalFamily::new(FamilyKind::Delta { n: m, alpha }, eta)?.sampler();
    let jmax = n.max(m);
    let (us, wu) = latitude_rule(d - 1, jmax / 2 + 2);
    let mut sums = vec![0.0; jmax + 1];
    for _ in 0..mc_samples {
        let y1 = outer.sample_latitude(rng);
        let y2 = inner.sample_latitude(rng);
        let r = ((1.0 - y1 * y1) * (1.0 - y2 * y2)).max(0.0).sqrt();
        for (&u, &w) in us.iter().zip(&wu) {
            let t = (y1 * y2 + r * u).clamp(-1.0, 1.0);
            for (j, v) in ultraspherical_d_all(jmax, lambda, t).into_iter().enumerate() {
                sums[j] += w * v;
            }
        }
    }
    let total = mc_samples as f64;
    let coef: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(j, s)| if j == 0 { 1.0 } else { s / total / gamma_constant(j, lambda) })
        .collect();
    let claim = |t: f64| {
        if n == m {
            1.0 + gamma_constant(n, lambda) * alpha * beta * ultraspherical_d(n, lambda, t)
        } else {
            1.0
        }
    };
    let err = chebyshev_grid(101)
        .into_iter()
        .map(|t| {
            let dn = ultraspherical_d_all(jmax, lambda, t);
            let est: f64 = coef.iter().zip(&dn).map(|(c, v)| c * v).sum();
            (est - claim(t)).abs()
        })
        .fold(0.0, nan_max);
    Ok(err)
}
