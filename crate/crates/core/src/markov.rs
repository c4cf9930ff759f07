//! Isotropic random walks on `S_d`, their latitude chains and mixture
//! marginals, Brownian marginals, and the almost-sure coupling of the
//! von Mises–Fisher family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::error::{domain, Error, Result};
use crate::mixing::MixingLaw;
use crate::representations::{build_representation, MixtureRepresentation, Theorem};
use crate::specfun::{gamma_constant, lambda_of_dim};
use crate::spherical::{
    polar_compose, random_longitude, FamilyKind, LatitudeLaw, LatitudeSampler, SpherePoint,
};

/// Kernel `P(x, ·)` whose latitude `x·X₁` has the law `step_law`.
#[derive(Debug, Clone)]
pub struct IsotropicKernel {
    pub step_law: LatitudeLaw,
    sampler: LatitudeSampler,
}

impl IsotropicKernel {
    pub fn new(step_law: LatitudeLaw) -> Self {
        let sampler = step_law.sampler();
        Self { step_law, sampler }
    }

    /// The kernel `x ↦ Δ_{k,x,α}`.
    pub fn delta(d: usize, k: usize, alpha: f64) -> Result<Self> {
        let kind = if k == 0 { FamilyKind::Uniform } else { FamilyKind::Delta { n: k, alpha } };
        crate::spherical::SphericalFamily::new(kind.clone(), SpherePoint::e1(d))?;
        Ok(Self::new(LatitudeLaw::Family { d, kind }))
    }

    pub fn d(&self) -> usize {
        self.step_law.d()
    }

    pub fn sample_latitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler.sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub position: SpherePoint,
    pub step: usize,
    /// Starting point `η`.
    pub pole: SpherePoint,
}

impl ChainState {
    pub fn start(eta: SpherePoint) -> Self {
        Self { position: eta.clone(), step: 0, pole: eta }
    }

    pub fn latitude(&self) -> f64 {
        self.pole.dot(&self.position).clamp(-1.0, 1.0)
    }
}

/// One step: a latitude from the step law, a uniform longitude, and the
/// polar map around the current position.
pub fn chain_step<R: Rng + ?Sized>(
    kernel: &IsotropicKernel,
    state: &ChainState,
    rng: &mut R,
) -> Result<ChainState> {
    let d = state.position.d();
    if d != kernel.d() {
        return Err(Error::DimensionMismatch { expected: kernel.d(), got: d });
    }
    let y = kernel.sample_latitude(rng);
    let z = random_longitude(d, rng);
    Ok(ChainState {
        position: polar_compose(&state.position, y, &z)?,
        step: state.step + 1,
        pole: state.pole.clone(),
    })
}

/// `Y_0 = 1, Y_1, …, Y_n` with `Y_i = η·X_i` for the chain started at `η`.
pub fn latitude_chain<R: Rng + ?Sized>(
    kernel: &IsotropicKernel,
    eta: &SpherePoint,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return domain("a latitude chain needs at least one step");
    }
    let mut state = ChainState::start(eta.clone());
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(1.0);
    for _ in 0..n_steps {
        state = chain_step(kernel, &state, rng)?;
        out.push(state.latitude());
    }
    Ok(out)
}

/// A draw from the lumped transition `Q_Y(y, ·)`: the law of
/// `yZ + U √(1-y²) √(1-Z²)` with `Z` from the step law and `U ~ ν_{d-1}`
/// independent (`U = ±1` on the circle).
pub fn latitude_transition<R: Rng + ?Sized>(kernel: &IsotropicKernel, y: f64, rng: &mut R) -> f64 {
    let z = kernel.sample_latitude(rng);
    let d = kernel.d();
    let u = random_longitude(d, rng)[0];
    (y * z + u * ((1.0 - y * y) * (1.0 - z * z)).max(0.0).sqrt()).clamp(-1.0, 1.0)
}

/// `w_n(k) = (γ_k)^{n-1} w(k)^n` for `k ≥ 1`, with the remaining mass at 0:
/// the mixture weights of the `n`-step law of a Δ-kernel walk.
pub fn n_step_weights(w: &MixingLaw, n: usize, lambda: f64) -> Result<MixingLaw> {
    if n == 0 {
        return domain("n_step_weights needs n >= 1");
    }
    if n == 1 {
        return Ok(w.clone());
    }
    let mut out: Vec<f64> = (0..w.table().len())
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                gamma_constant(k, lambda).powi(n as i32 - 1) * w.pmf(k).powi(n as i32)
            }
        })
        .collect();
    out[0] = 1.0 - out.iter().sum::<f64>();
    Ok(MixingLaw::explicit(out, w.tail_bound()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrownianBase {
    Delta,
    SBeta,
}

/// Marginal at time `t` of Brownian motion on `S_d` started at `η`, as a
/// Δ-mixture (valid for `t ≥ t₀`) or a spherical-beta mixture (any `t > 0`).
pub fn brownian_marginal(eta: &SpherePoint, t: f64, base: BrownianBase) -> Result<MixtureRepresentation> {
    if eta.d() < 2 {
        return domain("Brownian marginals are provided for d >= 2");
    }
    let theorem = match base {
        BrownianBase::Delta => Theorem::BrownianDelta,
        BrownianBase::SBeta => Theorem::BrownianSBeta,
    };
    build_representation(theorem, eta, t)
}

/// Almost-sure construction of `(vMF_d(η, ρ))_{ρ≥0}` on one probability
/// space: `Y_n = 1 − 2V/(V + W₀ + … + W_n)` with `V, W₀ ~ Γ(d/2)` and
/// `W_i ~ Exp(1)`, the index `N_ρ` as the CHS(d/2, d, 2ρ) quantile of one
/// uniform `U`, and one longitude `Z`. Then `X_ρ = Φ_η(Y_{N_ρ}, Z)`.
#[derive(Debug, Clone)]
pub struct AsCoupling {
    pub eta: SpherePoint,
    pub z: Vec<f64>,
    pub u: f64,
    v: f64,
    /// `V + W₀ + … + W_n` for the indices drawn so far.
    sums: Vec<f64>,
    stream: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsDraw {
    pub rho: f64,
    pub n: usize,
    pub y: f64,
    pub x: SpherePoint,
}

impl AsCoupling {
    pub fn new<R: Rng + ?Sized>(eta: SpherePoint, rng: &mut R) -> Result<Self> {
        let d = eta.d();
        if d < 2 {
            return domain("the almost-sure vMF coupling needs d >= 2");
        }
        let half = Gamma::new(0.5 * d as f64, 1.0).expect("positive shape");
        let v = half.sample(rng);
        let w0 = half.sample(rng);
        let z = random_longitude(d, rng);
        let u = rng.random::<f64>();
        let stream = ChaCha8Rng::seed_from_u64(rng.random());
        Ok(Self { eta, z, u, v, sums: vec![v + w0], stream })
    }

    pub fn d(&self) -> usize {
        self.eta.d()
    }

    /// `Y_n`, extending the exponential stream as needed.
    pub fn y(&mut self, n: usize) -> f64 {
        while self.sums.len() <= n {
            let w: f64 = Exp1.sample(&mut self.stream);
            let last = *self.sums.last().unwrap();
            self.sums.push(last + w);
        }
        1.0 - 2.0 * self.v / self.sums[n]
    }

    /// `B_{n+1} = (1 - Y_{n+1}) / (1 - Y_n)`.
    pub fn b(&mut self, n: usize) -> f64 {
        let (a, b) = (self.y(n), self.y(n + 1));
        (1.0 - b) / (1.0 - a)
    }

    pub fn index(&self, rho: f64) -> Result<usize> {
        let d = self.d() as f64;
        Ok(MixingLaw::chs(0.5 * d, d, 2.0 * rho)?.quantile(self.u))
    }

    pub fn sample(&mut self, rho: f64) -> Result<AsDraw> {
        if !(rho >= 0.0) {
            return domain(format!("vMF requires rho >= 0, got {rho}"));
        }
        let n = self.index(rho)?;
        let y = self.y(n);
        let x = polar_compose(&self.eta, y, &self.z)?;
        Ok(AsDraw { rho, n, y, x })
    }
}

/// Checks that `upper(n)/lower(n)` is nondecreasing over the indices where
/// both laws carry non-negligible mass.
pub fn check_mlr(lower: &MixingLaw, upper: &MixingLaw) -> Result<()> {
    let len = lower.table().len().min(upper.table().len());
    let mut prev = f64::NEG_INFINITY;
    for n in 0..len {
        let (a, b) = (lower.pmf(n), upper.pmf(n));
        if a < 1e-300 || b < 1e-300 {
            continue;
        }
        let r = b.ln() - a.ln();
        if r < prev - 1e-10 * prev.abs().max(1.0) {
            return Err(Error::MlrViolation(n));
        }
        prev = r;
    }
    Ok(())
}

/// Inverse CDF of `law` at `u`; for a family with monotone likelihood
/// ratios this index is nondecreasing in the parameter.
pub fn mlr_quantile_couple(law: &MixingLaw, u: f64) -> usize {
    law.quantile(u)
}

/// Coupled indices along a family of laws ordered by parameter, after
/// checking the likelihood ratio of each consecutive pair.
pub fn coupled_path(laws: &[MixingLaw], u: f64) -> Result<Vec<usize>> {
    for pair in laws.windows(2) {
        check_mlr(&pair[0], &pair[1])?;
    }
    Ok(laws.iter().map(|l| mlr_quantile_couple(l, u)).collect())
}

/// `1 + γ_k^{n-1} α^n D_k^λ`: latitude density after `n` steps of the
/// `Δ_{k,·,α}` walk, summed from [`n_step_weights`].
pub fn delta_walk_density(d: usize, k: usize, alpha: f64, n: usize, t: f64) -> f64 {
    let lambda = lambda_of_dim(d);
    if k == 0 {
        return 1.0;
    }
    1.0 + gamma_constant(k, lambda).powi(n as i32 - 1) * alpha.powi(n as i32)
        * crate::specfun::ultraspherical_d(k, lambda, t)
}
