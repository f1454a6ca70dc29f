//! Single-hop channel ingredients: densities, Mellin templates and samplers.
//!
//! Every amplitude factor has a template `ψ x^{-1} H[ζ x]`:
//!
//! | factor | ψ | ζ | kernel |
//! |---|---|---|---|
//! | GG(α, β, Ω) | 1/Γ(β) | (β/Ω)^{1/α} | Γ(β + s/α) |
//! | pointing error (ρ², A₀) | ρ² | 1/A₀ | Γ(ρ² + s)/Γ(ρ² + 1 + s) |
//! | shadowing (m) | 1/Γ(m) | (m − 1)^{−1/2} | Γ(m − s/2) |
//! | mobility r^{−a/2}, r ~ RWP(d) | 6 | d^{a/2} | Γ(2 − a s/2)/Γ(4 − a s/2) |

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};
use thiserror::Error;

use crate::foxh::{Block, FoxHError, GammaPair, HDensity, MellinForm};
use crate::gamma::{gamma_real, ln_gamma};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    FoxH(#[from] FoxHError),
}

fn positive(name: &str, v: f64) -> Result<(), ChannelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ChannelError::InvalidParameter(format!("{name} = {v} must be positive and finite")))
    }
}

/// Generalized Gamma amplitude: `x^α ~ Gamma(β, Ω/β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GGParams {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
}

impl GGParams {
    pub fn new(alpha: f64, beta: f64, omega: f64) -> Result<Self, ChannelError> {
        let p = Self { alpha, beta, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("omega", self.omega)
    }

    /// Left-tail exponent of the amplitude density, `f(x) ∝ x^{αβ−1}`.
    pub fn tail_exponent(&self) -> f64 {
        self.alpha * self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DGGParams {
    pub first: GGParams,
    pub second: GGParams,
}

impl DGGParams {
    pub fn new(first: GGParams, second: GGParams) -> Result<Self, ChannelError> {
        let p = Self { first, second };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        self.first.validate()?;
        self.second.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointingParams {
    pub rho2: f64,
    pub a0: f64,
}

impl PointingParams {
    pub fn new(rho2: f64, a0: f64) -> Result<Self, ChannelError> {
        let p = Self { rho2, a0 };
        p.validate()?;
        Ok(p)
    }

    /// Pointing error given by `ρ` with full collection, `A₀ = 1`.
    pub fn from_rho(rho: f64) -> Result<Self, ChannelError> {
        Self::new(rho * rho, 1.0)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        positive("rho2", self.rho2)?;
        if !(self.a0 > 0.0 && self.a0 <= 1.0) {
            return Err(ChannelError::InvalidParameter(format!("a0 = {} must lie in (0, 1]", self.a0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowParams {
    pub m: f64,
}

impl ShadowParams {
    pub fn new(m: f64) -> Result<Self, ChannelError> {
        let p = Self { m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.m > 1.0 && self.m.is_finite()) {
            return Err(ChannelError::InvalidParameter(format!("m = {} must exceed 1", self.m)));
        }
        Ok(())
    }
}

/// Random-waypoint distance on `[0, d]` (meters) and path-loss exponent `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub d: f64,
    pub a: f64,
}

impl MobilityParams {
    pub fn new(d: f64, a: f64) -> Result<Self, ChannelError> {
        let p = Self { d, a };
        p.validate()?;
        Ok(p)
    }

    /// `a = 0` is accepted as the degenerate unit-path-loss case.
    pub fn validate(&self) -> Result<(), ChannelError> {
        positive("d", self.d)?;
        if !(0.0..=5.0).contains(&self.a) {
            return Err(ChannelError::InvalidParameter(format!("a = {} must lie in [0, 5]", self.a)));
        }
        Ok(())
    }
}

pub fn gg_pdf(p: &GGParams, x: f64) -> f64 {
    if !(x > 0.0) || x.is_infinite() {
        return 0.0;
    }
    let GGParams { alpha, beta, omega } = *p;
    let ln = alpha.ln() + beta * (beta / omega).ln() - ln_gamma(beta.into()).re + (alpha * beta - 1.0) * x.ln()
        - beta * x.powf(alpha) / omega;
    ln.exp()
}

pub fn gg_cdf(p: &GGParams, x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    statrs::function::gamma::gamma_lr(p.beta, p.beta * x.powf(p.alpha) / p.omega)
}

pub fn pe_pdf(q: &PointingParams, x: f64) -> f64 {
    if !(x > 0.0) || x > q.a0 {
        return 0.0;
    }
    q.rho2 / q.a0.powf(q.rho2) * x.powf(q.rho2 - 1.0)
}

pub fn pe_cdf(q: &PointingParams, x: f64) -> f64 {
    if !(x > 0.0) {
        0.0
    } else if x >= q.a0 {
        1.0
    } else {
        (x / q.a0).powf(q.rho2)
    }
}

/// Amplitude `1/√G` with `G ~ Gamma(m, 1/(m−1))`:
/// `2(m−1)^m / Γ(m) · x^{−2m−1} e^{−(m−1)/x²}`.
pub fn ig_sqrt_pdf(s: &ShadowParams, x: f64) -> f64 {
    if !(x > 0.0) || x.is_infinite() {
        return 0.0;
    }
    let m = s.m;
    let ln = 2f64.ln() + m * (m - 1.0).ln() - ln_gamma(m.into()).re - (2.0 * m + 1.0) * x.ln() - (m - 1.0) / (x * x);
    ln.exp()
}

pub fn ig_sqrt_cdf(s: &ShadowParams, x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(s.m, (s.m - 1.0) / (x * x))
}

/// `6r/d² − 6r²/d³` on `[0, d]`.
pub fn rwp_pdf(p: &MobilityParams, r: f64) -> f64 {
    if !(0.0..=p.d).contains(&r) {
        return 0.0;
    }
    6.0 * r / (p.d * p.d) - 6.0 * r * r / (p.d * p.d * p.d)
}

pub fn rwp_cdf(p: &MobilityParams, r: f64) -> f64 {
    let u = (r / p.d).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Inverse of [`rwp_cdf`]: solves `3u² − 2u³ = q` with the trigonometric cubic formula.
pub fn rwp_quantile(p: &MobilityParams, q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let w = (((1.0 - 2.0 * q).acos() - 2.0 * PI) / 3.0).cos();
    p.d * (0.5 + w).clamp(0.0, 1.0)
}

pub fn gg_form(p: &GGParams) -> MellinForm {
    MellinForm {
        psi: 1.0 / gamma_real(p.beta),
        phi: 0.0,
        zeta: (p.beta / p.omega).powf(1.0 / p.alpha),
        block: Block::new(1, 0, vec![], vec![GammaPair::new(p.beta, 1.0 / p.alpha)]),
    }
}

pub fn pe_form(q: &PointingParams) -> MellinForm {
    MellinForm {
        psi: q.rho2,
        phi: 0.0,
        zeta: 1.0 / q.a0,
        block: Block::new(1, 0, vec![GammaPair::new(q.rho2 + 1.0, 1.0)], vec![GammaPair::new(q.rho2, 1.0)]),
    }
}

pub fn shadow_form(s: &ShadowParams) -> MellinForm {
    MellinForm {
        psi: 1.0 / gamma_real(s.m),
        phi: 0.0,
        zeta: 1.0 / (s.m - 1.0).sqrt(),
        block: Block::new(0, 1, vec![GammaPair::new(1.0 - s.m, 0.5)], vec![]),
    }
}

/// Template of `r^{−a/2}`; `None` when `a = 0` (the factor is identically 1).
pub fn mobility_form(p: &MobilityParams) -> Option<MellinForm> {
    if p.a == 0.0 {
        return None;
    }
    let h = 0.5 * p.a;
    Some(MellinForm {
        psi: 6.0,
        phi: 0.0,
        zeta: p.d.powf(h),
        block: Block::new(0, 1, vec![GammaPair::new(-1.0, h)], vec![GammaPair::new(-3.0, h)]),
    })
}

pub fn dgg_form(p: &DGGParams) -> MellinForm {
    MellinForm::product(&[gg_form(&p.first), gg_form(&p.second)])
}

pub fn dgg_pe_form(p: &DGGParams, q: &PointingParams) -> MellinForm {
    MellinForm::product(&[gg_form(&p.first), gg_form(&p.second), pe_form(q)])
}

pub fn dgg_shadow_form(p: &DGGParams, s: &ShadowParams) -> MellinForm {
    MellinForm::product(&[gg_form(&p.first), gg_form(&p.second), shadow_form(s)])
}

pub fn lasthop_form(p: &DGGParams, s: &ShadowParams, mob: &MobilityParams) -> MellinForm {
    let mut parts = vec![gg_form(&p.first), gg_form(&p.second), shadow_form(s)];
    parts.extend(mobility_form(mob));
    MellinForm::product(&parts)
}

fn density_at(form: MellinForm, x: f64) -> Result<f64, ChannelError> {
    if x.is_nan() || x < 0.0 {
        return Err(ChannelError::InvalidParameter(format!("x = {x}")));
    }
    Ok(HDensity::new(&form).pdf(x)?)
}

pub fn dgg_pdf(p: &DGGParams, x: f64) -> Result<f64, ChannelError> {
    p.validate()?;
    density_at(dgg_form(p), x)
}

pub fn dgg_pe_pdf(p: &DGGParams, q: &PointingParams, x: f64) -> Result<f64, ChannelError> {
    p.validate()?;
    q.validate()?;
    density_at(dgg_pe_form(p, q), x)
}

pub fn dgg_shadow_pdf(p: &DGGParams, s: &ShadowParams, x: f64) -> Result<f64, ChannelError> {
    p.validate()?;
    s.validate()?;
    density_at(dgg_shadow_form(p, s), x)
}

pub fn lasthop_pdf(p: &DGGParams, s: &ShadowParams, mob: &MobilityParams, x: f64) -> Result<f64, ChannelError> {
    p.validate()?;
    s.validate()?;
    mob.validate()?;
    density_at(lasthop_form(p, s, mob), x)
}

pub fn sample_gg<R: Rng + ?Sized>(p: &GGParams, rng: &mut R) -> f64 {
    let g = Gamma::new(p.beta, p.omega / p.beta).expect("validated GG parameters");
    g.sample(rng).powf(1.0 / p.alpha)
}

pub fn sample_dgg<R: Rng + ?Sized>(p: &DGGParams, rng: &mut R) -> f64 {
    sample_gg(&p.first, rng) * sample_gg(&p.second, rng)
}

pub fn sample_pe<R: Rng + ?Sized>(q: &PointingParams, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    q.a0 * u.powf(1.0 / q.rho2)
}

pub fn sample_shadow<R: Rng + ?Sized>(s: &ShadowParams, rng: &mut R) -> f64 {
    let g = Gamma::new(s.m, 1.0 / (s.m - 1.0)).expect("validated shadowing parameter");
    1.0 / g.sample(rng).sqrt()
}

pub fn sample_rwp<R: Rng + ?Sized>(p: &MobilityParams, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    rwp_quantile(p, u)
}

pub fn sample_dgg_pe<R: Rng + ?Sized>(p: &DGGParams, q: &PointingParams, rng: &mut R) -> f64 {
    sample_dgg(p, rng) * sample_pe(q, rng)
}

pub fn sample_dgg_shadow<R: Rng + ?Sized>(p: &DGGParams, s: &ShadowParams, rng: &mut R) -> f64 {
    sample_dgg(p, rng) * sample_shadow(s, rng)
}

pub fn sample_lasthop<R: Rng + ?Sized>(p: &DGGParams, s: &ShadowParams, mob: &MobilityParams, rng: &mut R) -> f64 {
    let base = sample_dgg_shadow(p, s, rng);
    if mob.a == 0.0 {
        return base;
    }
    let r = sample_rwp(mob, rng).max(f64::MIN_POSITIVE);
    base * r.powf(-0.5 * mob.a)
}
