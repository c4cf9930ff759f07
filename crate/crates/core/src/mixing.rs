//! Mixing laws on `N₀`, the β budgets of the ultraspherical representations
//! and their unit roots.
//!
//! Every law is tabulated once up to an adaptive truncation index `N`
//! together with a bound on the neglected tail. Sampling uses the inverse
//! CDF of the table with the tail mass folded into index `N`.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::dd::Dd;
use crate::error::{domain, Error, Result};
use crate::specfun::{
    gamma_constant, ln_bessel_i, ln_hyp1f1_nonneg, ln_parabolic_cylinder_d, ln_pochhammer,
};

const LN_2: f64 = std::f64::consts::LN_2;
/// Terms below this fraction of the largest one count as negligible.
const NEGLIGIBLE: f64 = 1e-14;
const MAX_TERMS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub enum MixingKind {
    Chs { alpha: f64, beta: f64, tau: f64 },
    Dpc { delta: f64, tau: f64 },
    PositiveSkellam { rho: f64 },
    GenPositiveSkellam { kappa: f64, tau: f64 },
    /// `p(1-p)^n` on `N₀`.
    GeometricN0 { p: f64 },
    /// `p(1-p)^{n-1}` on `N`.
    GeometricN { p: f64 },
    Zinb { r: f64, p: f64 },
    /// `2 e^{-n²ρ/2} / β(ρ)` on `N`.
    WnWeights { rho: f64 },
    /// `e^{-n(n+2λ)t/2} / (γ_n β^λ(t))` on `N`.
    BrownianWeights { lambda: f64, t: f64 },
    DeathProcessWeights { d: usize, t: f64 },
    /// `geo_{N₀}(n | 1-ρ)`, the weights of the Turán partial-sum base.
    TuranGeometric { rho: f64 },
    PointMassAtZero,
    /// `(1-β) δ₀ + β·inner` for a law `inner` on `N`.
    ZeroInflated { beta: f64, inner: Box<MixingKind> },
    Explicit,
}

#[derive(Debug, Clone)]
pub struct MixingLaw {
    pub kind: MixingKind,
    pmf: Vec<f64>,
    tail: f64,
    valid: bool,
    cdf: Vec<f64>,
    lost_digits: f64,
}

impl MixingLaw {
    fn from_table(kind: MixingKind, mut pmf: Vec<f64>, tail: f64) -> Self {
        let mut valid = true;
        for p in pmf.iter_mut() {
            if *p < 0.0 {
                if *p >= -1e-15 {
                    *p = 0.0;
                } else {
                    valid = false;
                }
            }
        }
        let total: f64 = pmf.iter().sum::<f64>() + tail;
        if (total - 1.0).abs() > 1e-8 || !total.is_finite() {
            valid = false;
        }
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        Self { kind, pmf, tail, valid, cdf, lost_digits: 0.0 }
    }

    /// Tabulate a law whose `n`-th log mass is `ln_p(n)` for `n ≥ start`.
    fn tabulate<F: FnMut(usize) -> Result<f64>>(
        kind: MixingKind,
        start: usize,
        mut ln_p: F,
    ) -> Result<Self> {
        let (pmf, tail) = truncated_table(start, &mut ln_p)?;
        Ok(Self::from_table(kind, pmf, tail))
    }

    pub fn point_mass_at_zero() -> Self {
        Self::from_table(MixingKind::PointMassAtZero, vec![1.0], 0.0)
    }

    /// Confluent hypergeometric series law `CHS(α, β, τ)`.
    pub fn chs(alpha: f64, beta: f64, tau: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && tau >= 0.0) {
            return domain(format!("CHS requires alpha, beta > 0 and tau >= 0 (got {alpha}, {beta}, {tau})"));
        }
        let kind = MixingKind::Chs { alpha, beta, tau };
        if tau == 0.0 {
            return Ok(Self::from_table(kind, vec![1.0], 0.0));
        }
        let ln_norm = ln_hyp1f1_nonneg(alpha, beta, tau);
        let ln_tau = tau.ln();
        Self::tabulate(kind, 0, |n| Ok(ln_chs_term(n, alpha, beta, ln_tau) - ln_norm))
    }

    /// Discrete parabolic cylinder law `DPC(δ, τ)`.
    pub fn dpc(delta: f64, tau: f64) -> Result<Self> {
        check_dpc(delta, tau)?;
        Self::tabulate(MixingKind::Dpc { delta, tau }, 0, |k| ln_dpc(k, delta, tau))
    }

    pub fn positive_skellam(rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return domain(format!("positive Skellam requires rho > 0, got {rho}"));
        }
        let ln_c = ln_psk_const(rho);
        Self::tabulate(MixingKind::PositiveSkellam { rho }, 1, |n| {
            Ok(ln_c + ln_bessel_i(n as f64, rho))
        })
    }

    pub fn gen_positive_skellam(kappa: f64, tau: f64) -> Result<Self> {
        if !(kappa > 0.0 && tau > 0.0) {
            return domain(format!("generalized positive Skellam requires kappa, tau > 0 (got {kappa}, {tau})"));
        }
        let ln_c = ln_gpsk_const(kappa, tau);
        let ln_ik = ln_bessel_i(kappa, tau);
        Self::tabulate(MixingKind::GenPositiveSkellam { kappa, tau }, 1, |n| {
            Ok(ln_gpsk_head(n, kappa) + ln_c + ln_bessel_i(kappa + n as f64, tau) - ln_ik)
        })
    }

    pub fn geometric_n0(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return domain(format!("geometric law requires p in (0,1], got {p}"));
        }
        let kind = MixingKind::GeometricN0 { p };
        if p == 1.0 {
            return Ok(Self::from_table(kind, vec![1.0], 0.0));
        }
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        Self::tabulate(kind, 0, |n| Ok(lp + n as f64 * lq))
    }

    pub fn geometric_n(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return domain(format!("geometric law requires p in (0,1], got {p}"));
        }
        let kind = MixingKind::GeometricN { p };
        if p == 1.0 {
            return Ok(Self::from_table(kind, vec![0.0, 1.0], 0.0));
        }
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        Self::tabulate(kind, 1, |n| Ok(lp + (n - 1) as f64 * lq))
    }

    /// Zero-inflated negative binomial on `N`.
    pub fn zinb(r: f64, p: f64) -> Result<Self> {
        if !(r > 0.0 && p > 0.0 && p < 1.0) {
            return domain(format!("ZINB requires r > 0 and p in (0,1) (got {r}, {p})"));
        }
        Self::tabulate(MixingKind::Zinb { r, p }, 1, |n| Ok(ln_zinb(n, r, p)))
    }

    pub fn wn_weights(rho: f64) -> Result<Self> {
        let beta = beta_budget(BetaBudget::Wn, rho)?;
        let ln_b = beta.ln();
        Self::tabulate(MixingKind::WnWeights { rho }, 1, |n| {
            let nf = n as f64;
            Ok(LN_2 - 0.5 * nf * nf * rho - ln_b)
        })
    }

    pub fn brownian_weights(lambda: f64, t: f64) -> Result<Self> {
        let beta = beta_budget(BetaBudget::Brownian { lambda }, t)?;
        let ln_b = beta.ln();
        Self::tabulate(MixingKind::BrownianWeights { lambda, t }, 1, |n| {
            Ok(ln_brownian_term(n, lambda, t) - ln_b)
        })
    }

    /// Marginal law at time `t` of the pure death process behind the
    /// spherical-beta representation of Brownian motion on `S_d`.
    pub fn death_process(d: usize, t: f64) -> Result<Self> {
        check_death(d, t)?;
        let mut pmf = Vec::new();
        let mut max = 0.0f64;
        let mut small_run = 0;
        let mut lost = 0.0f64;
        for n in 0..MAX_TERMS {
            let w = death_process_weight(n, t, d)?;
            lost = lost.max(w.lost_digits);
            max = max.max(w.value);
            pmf.push(w.value);
            if w.value.abs() < NEGLIGIBLE * max {
                small_run += 1;
                if small_run >= 10 {
                    break;
                }
            } else {
                small_run = 0;
            }
        }
        let tail = geometric_tail(&pmf);
        let mut law = Self::from_table(MixingKind::DeathProcessWeights { d, t }, pmf, tail);
        law.lost_digits = lost;
        Ok(law)
    }

    pub fn turan_geometric(rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return domain(format!("Turan weights require rho in [0,1), got {rho}"));
        }
        let mut law = Self::geometric_n0(1.0 - rho)?;
        law.kind = MixingKind::TuranGeometric { rho };
        Ok(law)
    }

    /// `(1-β) δ₀ + β·inner`. A budget above one is kept as a raw weight
    /// vector and flagged as not a probability.
    pub fn zero_inflated(beta: f64, inner: &MixingLaw) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return domain(format!("zero inflation requires a finite beta >= 0, got {beta}"));
        }
        if inner.pmf(0) != 0.0 {
            return domain("zero inflation needs an inner law on N (no mass at 0)");
        }
        let kind = MixingKind::ZeroInflated { beta, inner: Box::new(inner.kind.clone()) };
        if beta == 0.0 {
            return Ok(Self::from_table(kind, vec![1.0], 0.0));
        }
        let mut pmf: Vec<f64> = inner.pmf.iter().map(|p| beta * p).collect();
        pmf[0] = 1.0 - beta;
        let mut law = Self::from_table(kind, pmf, beta * inner.tail);
        law.valid &= beta <= 1.0;
        law.lost_digits = inner.lost_digits;
        Ok(law)
    }

    /// A law given by an explicit weight table; `tail` bounds the mass beyond it.
    pub fn explicit(weights: Vec<f64>, tail: f64) -> Self {
        Self::from_table(MixingKind::Explicit, weights, tail)
    }

    pub fn pmf(&self, n: usize) -> f64 {
        self.pmf.get(n).copied().unwrap_or(0.0)
    }

    pub fn table(&self) -> &[f64] {
        &self.pmf
    }

    /// Last retained index `N`.
    pub fn truncation(&self) -> usize {
        self.pmf.len() - 1
    }

    /// Bound on `Σ_{n > N} pmf(n)`.
    pub fn tail_bound(&self) -> f64 {
        self.tail
    }

    pub fn is_valid_probability(&self) -> bool {
        self.valid
    }

    /// Decimal digits lost to cancellation while evaluating the table
    /// (only nonzero for the death-process weights).
    pub fn lost_digits(&self) -> f64 {
        self.lost_digits
    }

    /// Conditioning warning for alternating-series weights.
    pub fn warning(&self) -> Option<String> {
        (self.lost_digits > DEATH_DIGIT_LIMIT).then(|| {
            format!(
                "death-process weights lost {:.1} digits to cancellation; values are unreliable",
                self.lost_digits
            )
        })
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Smallest `n` with `P(N ≤ n) > u`; the tail sits at the last index.
    pub fn quantile(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.pmf.len() - 1)
    }
}

/// One draw by inverse CDF.
pub fn sample_mixing<R: Rng + ?Sized>(law: &MixingLaw, rng: &mut R) -> Result<usize> {
    if !law.valid {
        return Err(Error::Validity(format!("{:?} is not a probability law", law.kind)));
    }
    Ok(law.quantile(rng.random::<f64>()))
}

/// Tabulate `exp(ln_p(n))` from `start` until ten consecutive values fall
/// below `NEGLIGIBLE` times the largest so far; returns the table (zeros
/// below `start`) and a geometric bound on the remaining tail.
fn truncated_table<F: FnMut(usize) -> Result<f64>>(
    start: usize,
    ln_p: &mut F,
) -> Result<(Vec<f64>, f64)> {
    let mut pmf = vec![0.0; start];
    let mut ln_max = f64::NEG_INFINITY;
    let mut small_run = 0;
    let cut = NEGLIGIBLE.ln();
    for n in start..start + MAX_TERMS {
        let l = ln_p(n)?;
        ln_max = ln_max.max(l);
        pmf.push(l.exp());
        if l < ln_max + cut {
            small_run += 1;
            if small_run >= 10 {
                return Ok((pmf.clone(), geometric_tail(&pmf)));
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::NoConvergence(format!("mixing law still significant after {MAX_TERMS} terms")))
}

/// `p_N r / (1 - r)` with `r` the largest successive ratio over the last
/// ten entries; falls back to ten times the last entry if the run is not
/// yet decreasing.
fn geometric_tail(pmf: &[f64]) -> f64 {
    let n = pmf.len();
    if n < 2 {
        return 0.0;
    }
    let last = pmf[n - 1].abs();
    if last == 0.0 {
        return 0.0;
    }
    let from = n.saturating_sub(10).max(1);
    let r = (from..n)
        .filter(|&i| pmf[i - 1] != 0.0)
        .map(|i| (pmf[i] / pmf[i - 1]).abs())
        .fold(0.0, f64::max);
    if r < 1.0 {
        last * r / (1.0 - r)
    } else {
        10.0 * last
    }
}

fn ln_chs_term(n: usize, alpha: f64, beta: f64, ln_tau: f64) -> f64 {
    let nf = n as f64;
    ln_pochhammer(alpha, nf) - ln_pochhammer(beta, nf) + nf * ln_tau - ln_gamma(nf + 1.0)
}

/// `chs(n | α, β, τ)`.
pub fn chs_pmf(n: usize, alpha: f64, beta: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (ln_chs_term(n, alpha, beta, tau.ln()) - ln_hyp1f1_nonneg(alpha, beta, tau)).exp()
}

fn check_dpc(delta: f64, tau: f64) -> Result<()> {
    if !(delta > 0.5) {
        return domain(format!("DPC requires delta > 1/2, got {delta}"));
    }
    if !(tau > 0.0) {
        return domain(format!("DPC requires tau > 0, got {tau}"));
    }
    Ok(())
}

fn ln_dpc(k: usize, delta: f64, tau: f64) -> Result<f64> {
    let kf = k as f64;
    let z = std::f64::consts::SQRT_2 * tau;
    Ok(-ln_gamma(kf + 1.0) + kf * z.ln() + (kf + delta - 1.0) * LN_2 + (kf + 2.0 * delta - 1.0).ln()
        + ln_gamma(kf + delta - 0.5)
        - ln_gamma(0.5)
        - 0.5 * tau * tau
        + ln_parabolic_cylinder_d(-(kf + 2.0 * delta), z)?)
}

/// `dpc(k | δ, τ)` from the parabolic cylinder function.
pub fn dpc_pmf(k: usize, delta: f64, tau: f64) -> Result<f64> {
    check_dpc(delta, tau)?;
    Ok(ln_dpc(k, delta, tau)?.exp())
}

/// `ln 2 - ρ - ln(1 - e^{-ρ} I₀(ρ))`.
fn ln_psk_const(rho: f64) -> f64 {
    LN_2 - rho - (-(ln_bessel_i(0.0, rho) - rho).exp_m1()).ln()
}

/// `psk(n | ρ)`; zero at `n = 0`.
pub fn psk_pmf(n: usize, rho: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (ln_psk_const(rho) + ln_bessel_i(n as f64, rho)).exp()
}

/// `ln(1 + n/κ) + ln((2κ)_n / n!)`.
fn ln_gpsk_head(n: usize, kappa: f64) -> f64 {
    let nf = n as f64;
    (nf / kappa).ln_1p() + ln_pochhammer(2.0 * kappa, nf) - ln_gamma(nf + 1.0)
}

/// `ln(A / (1 - A))` with `A = 2^κ Γ(κ+1) τ^{-κ} e^{-τ} I_κ(τ)`.
fn ln_gpsk_const(kappa: f64, tau: f64) -> f64 {
    let ln_a = kappa * LN_2 + ln_gamma(kappa + 1.0) - kappa * tau.ln() - tau + ln_bessel_i(kappa, tau);
    ln_a - (-ln_a.exp_m1()).ln()
}

/// `gpsk(n | κ, τ)`; zero at `n = 0`.
pub fn gpsk_pmf(n: usize, kappa: f64, tau: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (ln_gpsk_head(n, kappa) + ln_gpsk_const(kappa, tau) + ln_bessel_i(kappa + n as f64, tau)
        - ln_bessel_i(kappa, tau))
    .exp()
}

fn ln_zinb(n: usize, r: f64, p: f64) -> f64 {
    let nf = n as f64;
    let ln_pr = r * p.ln();
    ln_pochhammer(r, nf) - ln_gamma(nf + 1.0) + nf * (-p).ln_1p() + ln_pr - (-ln_pr.exp_m1()).ln()
}

/// `znb(n | r, p)`; zero at `n = 0`.
pub fn zinb_pmf(n: usize, r: f64, p: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    ln_zinb(n, r, p).exp()
}

fn ln_brownian_term(n: usize, lambda: f64, t: f64) -> f64 {
    let nf = n as f64;
    -gamma_constant(n, lambda).ln() - 0.5 * nf * (nf + 2.0 * lambda) * t
}

fn check_death(d: usize, t: f64) -> Result<()> {
    if d < 2 {
        return domain(format!("death-process weights require d >= 2, got {d}"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("death-process weights require t > 0, got {t}"));
    }
    Ok(())
}

/// The double-double sums carry about 32 digits; beyond this much
/// cancellation fewer than six remain.
const DEATH_DIGIT_LIMIT: f64 = 26.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeathWeight {
    pub value: f64,
    /// `log10(max |term| / max(|sum|, 1e-16))`: digits lost to
    /// cancellation, judged against the weight or against `1e-16` of the
    /// unit mass, whichever is larger.
    pub lost_digits: f64,
}

impl DeathWeight {
    pub fn ill_conditioned(&self) -> bool {
        self.lost_digits > DEATH_DIGIT_LIMIT
    }
}

/// `w_t(n) = Σ_{k≥n} (-1)^{k-n} (d+2k-1) (d+n)_{k-1} / (n! (k-n)!) e^{-k(k+d-1)t/2}`.
///
/// The leading term is computed in `f64`; the ratios of successive terms
/// (rational in `k` times `e^{-(2k+d)t/2}`) and the alternating sum are
/// carried in double-double arithmetic.
pub fn death_process_weight(n: usize, t: f64, d: usize) -> Result<DeathWeight> {
    check_death(d, t)?;
    let df = d as f64;
    let nf = n as f64;
    // k = n; at n = 0 the Pochhammer symbol (d)_{-1} = 1/(d-1) cancels d-1
    let ln_lead = (df + 2.0 * nf - 1.0).ln() + ln_gamma(df + 2.0 * nf - 1.0)
        - ln_gamma(df + nf)
        - ln_gamma(nf + 1.0)
        - 0.5 * nf * (nf + df - 1.0) * t;
    if ln_lead < -745.0 {
        return Ok(DeathWeight { value: 0.0, lost_digits: 0.0 });
    }
    let q2 = Dd::exp(-t);
    let mut qpow = Dd::exp(-0.5 * (2.0 * nf + df) * t);
    let mut term = Dd::ONE;
    let mut sum = Dd::ONE;
    let mut max_term = 1.0f64;
    for k in n..n + MAX_TERMS {
        let kf = k as f64;
        let num = (df + 2.0 * kf + 1.0) * (df + nf + kf - 1.0);
        let den = (df + 2.0 * kf - 1.0) * (kf - nf + 1.0);
        let next = -(term * qpow * num / den);
        qpow = qpow * q2;
        let decreasing = next.hi.abs() < term.hi.abs();
        term = next;
        sum = sum + term;
        max_term = max_term.max(term.hi.abs());
        if decreasing && term.hi.abs() <= 1e-33 * sum.hi.abs().max(1e-300) {
            let lead = ln_lead.exp();
            let value = lead * sum.to_f64();
            let lost = (lead * max_term / value.abs().max(1e-16)).log10().max(0.0);
            return Ok(DeathWeight { value, lost_digits: lost });
        }
    }
    Err(Error::NoConvergence(format!("death-process series at n={n}, t={t}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaBudget {
    Wc,
    Wn,
    Vmf1,
    Vmfd { lambda: f64 },
    Turan,
    Brownian { lambda: f64 },
}

/// `β(ρ) = Σ_{n≥1} |β_n(ρ)|` for the family; for `Brownian` the argument is `t`.
pub fn beta_budget(family: BetaBudget, x: f64) -> Result<f64> {
    if x.is_nan() {
        return domain("beta budget argument is NaN");
    }
    match family {
        BetaBudget::Wc => {
            if !(0.0..1.0).contains(&x) {
                return domain(format!("WC requires rho in [0,1), got {x}"));
            }
            Ok(2.0 * x / (1.0 - x))
        }
        BetaBudget::Turan => {
            if !(0.0..1.0).contains(&x) {
                return domain(format!("Turan requires rho in [0,1), got {x}"));
            }
            Ok((1.0 - x).powf(-0.5) - 1.0)
        }
        BetaBudget::Wn => {
            if !(x > 0.0) {
                return domain(format!("WN requires rho > 0, got {x}"));
            }
            Ok(2.0 * positive_series(|n| -0.5 * (n * n) as f64 * x))
        }
        BetaBudget::Vmf1 => vmf_budget(0.0, x),
        BetaBudget::Vmfd { lambda } => vmf_budget(lambda, x),
        BetaBudget::Brownian { lambda } => {
            if !(lambda >= 0.0) {
                return domain(format!("Brownian budget requires lambda >= 0, got {lambda}"));
            }
            if !(x > 0.0) {
                return domain(format!("Brownian budget requires t > 0, got {x}"));
            }
            Ok(positive_series(|n| ln_brownian_term(n, lambda, x)))
        }
    }
}

fn vmf_budget(lambda: f64, rho: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return domain(format!("vMF budget requires lambda >= 0, got {lambda}"));
    }
    if !(rho >= 0.0) {
        return domain(format!("vMF requires rho >= 0, got {rho}"));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let ln_ratio = if lambda == 0.0 {
        rho - ln_bessel_i(0.0, rho)
    } else {
        lambda * rho.ln() + rho - lambda * LN_2 - ln_gamma(lambda + 1.0) - ln_bessel_i(lambda, rho)
    };
    Ok(ln_ratio.exp_m1())
}

/// `Σ_{n≥1} exp(ln_term(n))` for terms that rise to one mode and then
/// decay faster than geometrically.
fn positive_series<F: Fn(usize) -> f64>(ln_term: F) -> f64 {
    let mut sum = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for n in 1..MAX_TERMS {
        let l = ln_term(n);
        let v = l.exp();
        sum += v;
        if l < prev && v <= 1e-17 * sum {
            break;
        }
        prev = l;
    }
    sum
}

/// Solution of `β(·) = 1`, closed form where available, otherwise bisection
/// to 1e-12 on a bracket grown geometrically.
pub fn beta_unit_root(family: BetaBudget) -> Result<f64> {
    match family {
        BetaBudget::Wc => Ok(1.0 / 3.0),
        // (1-ρ)^{-1/2} = 2
        BetaBudget::Turan => Ok(0.75),
        BetaBudget::Vmf1 | BetaBudget::Vmfd { .. } => {
            let f = |x: f64| beta_budget(family, x).map(|b| b - 1.0);
            let mut hi = 1.0;
            while f(hi)? <= 0.0 {
                hi *= 2.0;
                if hi > 1e4 {
                    return Err(Error::NoBracket(format!("{family:?}: no crossing below 1e4")));
                }
            }
            bisect(f, 0.0, hi)
        }
        BetaBudget::Wn | BetaBudget::Brownian { .. } => {
            // decreasing from +∞ at the origin
            let f = |x: f64| beta_budget(family, x).map(|b| 1.0 - b);
            let mut lo = 1.0;
            while f(lo)? >= 0.0 {
                lo *= 0.5;
                if lo < 1e-8 {
                    return Err(Error::NoBracket(format!("{family:?}: budget below 1 near 0")));
                }
            }
            let mut hi = 1.0;
            while f(hi)? <= 0.0 {
                hi *= 2.0;
                if hi > 1e4 {
                    return Err(Error::NoBracket(format!("{family:?}: budget above 1 up to 1e4")));
                }
            }
            bisect(f, lo, hi)
        }
    }
}

/// Root of an increasing `f` with `f(lo) ≤ 0 < f(hi)`.
fn bisect<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::gauss_legendre;
    use crate::oracle::chi2_test;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn total(law: &MixingLaw) -> f64 {
        law.table().iter().sum::<f64>() + law.tail_bound()
    }

    #[test]
    fn chs_examples() {
        assert_eq!(chs_pmf(0, 0.7, 1.3, 0.0), 1.0);
        assert_eq!(chs_pmf(3, 0.7, 1.3, 0.0), 0.0);
        let s: f64 = (0..=200).map(|n| chs_pmf(n, 0.5, 1.5, 2.0)).sum();
        assert!((s - 1.0).abs() < 1e-13);
        let r = chs_pmf(1, 0.5, 1.5, 2.0) / chs_pmf(0, 0.5, 1.5, 2.0);
        assert!((r - 2.0 / 3.0).abs() < 1e-14);
        let law = MixingLaw::chs(0.5, 1.5, 2.0).unwrap();
        assert!((total(&law) - 1.0).abs() < 1e-12);
        assert!(law.tail_bound() < 1e-12);
        assert!(MixingLaw::chs(0.0, 1.0, 1.0).is_err());
        let law = MixingLaw::chs(1.0, 2.0, 0.0).unwrap();
        assert_eq!(law.table(), &[1.0]);
    }

    /// `E[V^{k/2} exp(-√2 τ √V)]` for `V ~ Γ(δ, rate 1/2)` by quadrature in `s = √V`.
    fn gamma_expectation(k: usize, delta: f64, tau: f64) -> f64 {
        let (x, w) = gauss_legendre(40);
        let panels = 400;
        let upper = 40.0;
        let h = upper / panels as f64;
        let ln_c = -ln_gamma(delta) - delta * LN_2;
        let mut s = 0.0;
        for p in 0..panels {
            let c = (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(&w) {
                let u = c + 0.5 * h * xi;
                let v = u * u;
                // density of V times dv = 2u du
                let ln_f = ln_c + (delta - 1.0) * v.ln() - 0.5 * v + (2.0 * u).ln();
                s += 0.5 * h * wi * (ln_f + 0.5 * k as f64 * v.ln() - std::f64::consts::SQRT_2 * tau * u).exp();
            }
        }
        s
    }

    #[test]
    fn dpc_matches_gamma_expectation() {
        let (k, delta, tau) = (2usize, 1.5, 0.8);
        let kf = k as f64;
        let expectation = gamma_expectation(k, delta, tau);
        let oracle = (-ln_gamma(kf + 1.0) + kf * (std::f64::consts::SQRT_2 * tau).ln() + kf * LN_2
            + ln_pochhammer(delta - 0.5, kf)
            - ln_pochhammer(2.0 * delta - 1.0, kf)
            - tau * tau)
            .exp()
            * expectation;
        let v = dpc_pmf(k, delta, tau).unwrap();
        assert!((v - oracle).abs() < 1e-10 * oracle, "{v} vs {oracle}");
    }

    #[test]
    fn dpc_sums_to_one_and_is_nonnegative() {
        let law = MixingLaw::dpc(1.5, 1.0).unwrap();
        assert!((total(&law) - 1.0).abs() < 1e-8);
        for &delta in &[1.0, 1.5, 2.0] {
            for &tau in &[0.5, 1.0, 2.0] {
                for k in 0..=50 {
                    assert!(dpc_pmf(k, delta, tau).unwrap() >= 0.0);
                }
            }
        }
        assert!(matches!(dpc_pmf(0, 0.5, 1.0), Err(Error::Domain(_))));
    }

    fn poisson(k: usize, mu: f64) -> f64 {
        (k as f64 * mu.ln() - mu - ln_gamma(k as f64 + 1.0)).exp()
    }

    #[test]
    fn psk_matches_poisson_difference() {
        let rho = 1.0;
        let mu = rho / 2.0;
        let mut by_gap = [0.0; 4];
        let mut unequal = 0.0;
        for a in 0..60 {
            for b in 0..60 {
                let p = poisson(a, mu) * poisson(b, mu);
                if a != b {
                    unequal += p;
                    let g = a.abs_diff(b);
                    if g < 4 {
                        by_gap[g] += p;
                    }
                }
            }
        }
        for n in 1..=3 {
            let brute = by_gap[n] / unequal;
            assert!((psk_pmf(n, rho) - brute).abs() < 1e-12, "n={n}");
        }
        let law = MixingLaw::positive_skellam(1.0).unwrap();
        assert!((total(&law) - 1.0).abs() < 1e-10);
        assert_eq!(law.pmf(0), 0.0);
    }

    #[test]
    fn gpsk_examples() {
        let law = MixingLaw::gen_positive_skellam(0.5, 0.8).unwrap();
        assert!((total(&law) - 1.0).abs() < 1e-8);
        // ratio of consecutive masses: (1+1/κ)(2κ)/((1+2/κ)(2κ)(2κ+1)/2) · I_{κ+1}/I_{κ+2}
        let (kappa, tau) = (1.0, 1.0);
        let direct = (1.0 + 1.0 / kappa) * (2.0 * kappa)
            / ((1.0 + 2.0 / kappa) * (2.0 * kappa) * (2.0 * kappa + 1.0) / 2.0)
            * (ln_bessel_i(kappa + 1.0, tau) - ln_bessel_i(kappa + 2.0, tau)).exp();
        let r = gpsk_pmf(1, kappa, tau) / gpsk_pmf(2, kappa, tau);
        assert!((r - direct).abs() < 1e-12 * direct);
        for n in 1..=5 {
            assert!((gpsk_pmf(n, 1e-6, 1.0) - psk_pmf(n, 1.0)).abs() < 1e-4);
        }
    }

    #[test]
    fn gpsk_converges_monotonically_to_psk() {
        let err = |kappa: f64| {
            (1..=10).map(|n| (gpsk_pmf(n, kappa, 1.0) - psk_pmf(n, 1.0)).abs()).fold(0.0, f64::max)
        };
        let e: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|&k| err(k)).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    }

    #[test]
    fn zinb_values() {
        let law = MixingLaw::zinb(0.5, 0.3).unwrap();
        assert!((total(&law) - 1.0).abs() < 1e-10);
        let (r, p) = (0.5f64, 0.3f64);
        // (1/2)_2 / 2! = 3/8
        let spot = 0.375 * (1.0 - p).powi(2) * p.powf(r) / (1.0 - p.powf(r));
        assert!((zinb_pmf(2, r, p) - spot).abs() < 1e-14);
    }

    #[test]
    fn budget_examples() {
        assert!((beta_budget(BetaBudget::Wc, 1.0 / 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(beta_budget(BetaBudget::Vmf1, 0.0).unwrap(), 0.0);
        assert!((beta_budget(BetaBudget::Turan, 0.75).unwrap() - 1.0).abs() < 1e-15);
        // 1 - 2^{-1/2} is not the unit root: the budget there is 2^{1/4} - 1
        let r = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
        let b = beta_budget(BetaBudget::Turan, r).unwrap();
        assert!((b - (2f64.powf(0.25) - 1.0)).abs() < 1e-14);
        assert!(matches!(beta_budget(BetaBudget::Wc, 1.0), Err(Error::Domain(_))));
        assert!(matches!(beta_budget(BetaBudget::Wn, 0.0), Err(Error::Domain(_))));
        // the d > 1 budget at λ = 0 reduces to the circle
        let a = beta_budget(BetaBudget::Vmfd { lambda: 0.0 }, 0.6).unwrap();
        let b = beta_budget(BetaBudget::Vmf1, 0.6).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn vmf1_budget_is_increasing() {
        let grid: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
        let b: Vec<f64> = grid.iter().map(|&r| beta_budget(BetaBudget::Vmf1, r).unwrap()).collect();
        assert!(b.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn unit_roots() {
        let r = beta_unit_root(BetaBudget::Vmf1).unwrap();
        assert!((r - 0.876842).abs() < 1e-5, "{r}");
        let r = beta_unit_root(BetaBudget::Wn).unwrap();
        assert!((r - 1.570818).abs() < 1e-5, "{r}");
        assert_eq!(beta_unit_root(BetaBudget::Wc).unwrap(), 1.0 / 3.0);
        assert_eq!(beta_unit_root(BetaBudget::Turan).unwrap(), 0.75);
        for &lambda in &[0.5, 1.0, 2.0] {
            let r = beta_unit_root(BetaBudget::Vmfd { lambda }).unwrap();
            assert!((beta_budget(BetaBudget::Vmfd { lambda }, r).unwrap() - 1.0).abs() < 1e-9);
            let t = beta_unit_root(BetaBudget::Brownian { lambda }).unwrap();
            assert!((beta_budget(BetaBudget::Brownian { lambda }, t).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn death_weights() {
        let law = MixingLaw::death_process(2, 1.0).unwrap();
        assert!((total(&law) - 1.0).abs() < 1e-8);
        assert!(law.table().iter().all(|&w| w >= 0.0));
        assert!(law.warning().is_none());
        let w0 = death_process_weight(0, 50.0, 2).unwrap().value;
        assert!((w0 - 1.0).abs() < 1e-12);
        assert!(death_process_weight(3, 50.0, 2).unwrap().value.abs() < 1e-12);
        for &t in &[0.2, 0.5, 2.0, 5.0] {
            for d in 2..=4 {
                let law = MixingLaw::death_process(d, t).unwrap();
                assert!((total(&law) - 1.0).abs() < 1e-8, "d={d} t={t}");
                assert!(law.is_valid_probability());
            }
        }
        assert!(death_process_weight(0, 1.0, 1).is_err());
    }

    #[test]
    fn death_weights_flag_cancellation_at_small_t() {
        let law = MixingLaw::death_process(2, 0.005).unwrap();
        assert!(law.warning().is_some(), "lost {}", law.lost_digits());
        assert!(MixingLaw::death_process(2, 0.02).unwrap().warning().is_some());
    }

    #[test]
    fn death_weights_hold_up_to_moderately_small_t() {
        for &t in &[0.05, 0.1] {
            let law = MixingLaw::death_process(2, t).unwrap();
            assert!(law.warning().is_none(), "t={t}: lost {}", law.lost_digits());
            assert!((total(&law) - 1.0).abs() < 1e-12, "t={t}");
            assert!(law.table().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn zero_inflation() {
        let inner = MixingLaw::geometric_n(0.75).unwrap();
        let law = MixingLaw::zero_inflated(2.0 * 0.25 / 0.75, &inner).unwrap();
        assert!((law.pmf(0) - 1.0 / 3.0).abs() < 1e-15);
        // β·geo_N(n|1-ρ) = 2ρ^n
        for n in 1..6 {
            assert!((law.pmf(n) - 2.0 * 0.25f64.powi(n as i32)).abs() < 1e-15);
        }
        let wn = MixingLaw::wn_weights(1.0).unwrap();
        let beta = beta_budget(BetaBudget::Wn, 1.0).unwrap();
        let raw = MixingLaw::zero_inflated(beta, &wn).unwrap();
        assert!(!raw.is_valid_probability());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_mixing(&raw, &mut rng), Err(Error::Validity(_))));
        assert!(MixingLaw::zero_inflated(0.5, &MixingLaw::geometric_n0(0.5).unwrap()).is_err());
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let pm = MixingLaw::point_mass_at_zero();
        assert!((0..100).all(|_| sample_mixing(&pm, &mut rng).unwrap() == 0));

        let law = MixingLaw::chs(0.5, 1.5, 2.0).unwrap();
        let n = 100_000;
        let mut counts = vec![0u64; law.table().len()];
        for _ in 0..n {
            counts[sample_mixing(&law, &mut rng).unwrap()] += 1;
        }
        let expected: Vec<f64> = law.table().iter().map(|p| p * n as f64).collect();
        assert!(chi2_test(&counts, &expected).unwrap().p_value > 0.01);
        let mut swapped = expected.clone();
        swapped.swap(0, 1);
        assert!(chi2_test(&counts, &swapped).unwrap().p_value < 1e-3);

        let geo = MixingLaw::geometric_n0(0.6).unwrap();
        let draws: Vec<f64> = (0..n).map(|_| sample_mixing(&geo, &mut rng).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (0.4f64 / (0.6 * 0.6)).sqrt() / (n as f64).sqrt();
        assert!((mean - 2.0 / 3.0).abs() < 3.0 * sd);
    }

    #[test]
    fn quantile_puts_tail_at_last_index() {
        let law = MixingLaw::explicit(vec![0.5, 0.25], 0.25);
        assert_eq!(law.quantile(0.1), 0);
        assert_eq!(law.quantile(0.6), 1);
        assert_eq!(law.quantile(0.9), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn chs_laws_are_normalised(alpha in 0.1f64..5.0, beta in 0.1f64..5.0, tau in 0.0f64..30.0) {
            let law = MixingLaw::chs(alpha, beta, tau).unwrap();
            prop_assert!(law.is_valid_probability());
            prop_assert!((total(&law) - 1.0).abs() < 1e-10);
            prop_assert!(law.table().iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn skellam_laws_are_normalised(kappa in 0.05f64..4.0, tau in 0.05f64..20.0) {
            let law = MixingLaw::gen_positive_skellam(kappa, tau).unwrap();
            prop_assert!((total(&law) - 1.0).abs() < 1e-8);
            let law = MixingLaw::positive_skellam(tau).unwrap();
            prop_assert!((total(&law) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn dpc_laws_are_normalised(delta in 0.6f64..3.0, tau in 0.1f64..3.0) {
            let law = MixingLaw::dpc(delta, tau).unwrap();
            prop_assert!((total(&law) - 1.0).abs() < 1e-8);
        }

        #[test]
        fn geometric_and_zinb_are_normalised(p in 0.05f64..0.95, r in 0.1f64..4.0) {
            for law in [MixingLaw::geometric_n0(p).unwrap(), MixingLaw::geometric_n(p).unwrap(),
                        MixingLaw::zinb(r, p).unwrap()] {
                prop_assert!((total(&law) - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn quantile_is_monotone(u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let law = MixingLaw::chs(1.0, 2.0, 3.0).unwrap();
            let (a, b) = if u <= v { (u, v) } else { (v, u) };
            prop_assert!(law.quantile(a) <= law.quantile(b));
        }
    }
}
