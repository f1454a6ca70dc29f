//! Products of independent factors, cascaded FSO/RF hops, SNR mapping and the
//! RF-plus-LOS SNR sum.

use std::sync::OnceLock;

use crate::channels::{self, ChannelError, DGGParams, MobilityParams, PointingParams, ShadowParams};
use crate::foxh::{
    AdaptiveEvaluator, Block, ContourPolicy, FoxHError, FoxHSpec, GammaPair, HDensity, JointPair, MellinForm,
};
use crate::quad::{integrate_from_zero, QuadError, Tolerance};

/// Density of `Π X_i` for independent `X_i` in template form.
pub fn product_pdf_spec(parts: &[MellinForm]) -> MellinForm {
    MellinForm::product(parts)
}

/// CDF of `Π X_i` as `F(x) = ψ H[ζ x]` where the returned block is the CDF kernel.
pub fn product_cdf_spec(parts: &[MellinForm]) -> MellinForm {
    let pdf = MellinForm::product(parts);
    MellinForm { block: pdf.block.cdf(), ..pdf }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopChainFSO {
    pub hops: Vec<(DGGParams, PointingParams)>,
}

impl HopChainFSO {
    pub fn new(hops: Vec<(DGGParams, PointingParams)>) -> Result<Self, ChannelError> {
        let c = Self { hops };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.hops.is_empty() {
            return Err(ChannelError::InvalidParameter("FSO chain needs at least one hop".into()));
        }
        for (d, p) in &self.hops {
            d.validate()?;
            p.validate()?;
        }
        Ok(())
    }

    pub fn form(&self) -> MellinForm {
        let parts: Vec<MellinForm> = self
            .hops
            .iter()
            .flat_map(|(d, p)| [channels::gg_form(&d.first), channels::gg_form(&d.second), channels::pe_form(p)])
            .collect();
        MellinForm::product(&parts)
    }
}

/// RF hops; the mobility factor applies to the last hop only.
#[derive(Debug, Clone, PartialEq)]
pub struct HopChainRF {
    pub hops: Vec<(DGGParams, ShadowParams)>,
    pub mobility: MobilityParams,
}

impl HopChainRF {
    pub fn new(hops: Vec<(DGGParams, ShadowParams)>, mobility: MobilityParams) -> Result<Self, ChannelError> {
        let c = Self { hops, mobility };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.hops.is_empty() {
            return Err(ChannelError::InvalidParameter("RF chain needs at least one hop".into()));
        }
        for (d, s) in &self.hops {
            d.validate()?;
            s.validate()?;
        }
        self.mobility.validate()
    }

    pub fn form(&self) -> MellinForm {
        let mut parts: Vec<MellinForm> = self
            .hops
            .iter()
            .flat_map(|(d, s)| [channels::gg_form(&d.first), channels::gg_form(&d.second), channels::shadow_form(s)])
            .collect();
        parts.extend(channels::mobility_form(&self.mobility));
        MellinForm::product(&parts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LOSLink {
    pub dgg: DGGParams,
    pub shadow: ShadowParams,
}

impl LOSLink {
    pub fn validate(&self) -> Result<(), ChannelError> {
        self.dgg.validate()?;
        self.shadow.validate()
    }

    pub fn form(&self) -> MellinForm {
        channels::dgg_shadow_form(&self.dgg, &self.shadow)
    }
}

/// Average SNRs with all deterministic gains folded in (linear).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrScale {
    pub gbar_fso: f64,
    pub gbar_rf: f64,
    pub gbar_los: f64,
}

impl SnrScale {
    pub fn uniform(gbar: f64) -> Self {
        Self { gbar_fso: gbar, gbar_rf: gbar, gbar_los: gbar }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for (n, v) in [("gbar_fso", self.gbar_fso), ("gbar_rf", self.gbar_rf), ("gbar_los", self.gbar_los)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::InvalidParameter(format!("{n} = {v} must be positive and finite")));
            }
        }
        Ok(())
    }
}

pub fn fso_cascade_pdf(chain: &HopChainFSO, x: f64) -> Result<f64, ChannelError> {
    chain.validate()?;
    Ok(HDensity::new(&chain.form()).pdf(x)?)
}

pub fn fso_cascade_cdf(chain: &HopChainFSO, x: f64) -> Result<f64, ChannelError> {
    chain.validate()?;
    Ok(HDensity::new(&chain.form()).cdf(x)?)
}

pub fn rf_cascade_pdf(chain: &HopChainRF, x: f64) -> Result<f64, ChannelError> {
    chain.validate()?;
    Ok(HDensity::new(&chain.form()).pdf(x)?)
}

pub fn rf_cascade_cdf(chain: &HopChainRF, x: f64) -> Result<f64, ChannelError> {
    chain.validate()?;
    Ok(HDensity::new(&chain.form()).cdf(x)?)
}

/// `f_γ(γ) = f_h(√(γ/ḡ)) / (2√(γ ḡ))` for `γ = ḡ h²`.
pub fn snr_pdf_from_amplitude<F: Fn(f64) -> f64>(pdf_h: F, gbar: f64, gamma: f64) -> f64 {
    if !(gamma > 0.0) {
        return 0.0;
    }
    pdf_h((gamma / gbar).sqrt()) / (2.0 * (gamma * gbar).sqrt())
}

/// Kernel block of `γ^{-s/2}`-type integrals: the amplitude kernel with the `Γ(−s/2)` factor
/// produced by the Laplace-domain combination.
fn r2v_block(form: &MellinForm) -> Block {
    form.block.with_upper_n(GammaPair::new(1.0, 0.5))
}

/// Bivariate spec of the sum `γ^RF + γ^LOS`: CDF when `pdf` is false, `γ ×` PDF otherwise.
pub fn r2v_spec(rf: &MellinForm, los: &MellinForm, pdf: bool) -> FoxHSpec {
    FoxHSpec {
        blocks: vec![r2v_block(rf), r2v_block(los)],
        joint_n: 0,
        joint_upper: vec![],
        joint_lower: vec![JointPair::new(if pdf { 1.0 } else { 0.0 }, vec![0.5, 0.5])],
    }
}

/// Statistics of `γ^R2V = γ^RF + γ^LOS`.
pub struct R2V {
    rf: HDensity,
    los: HDensity,
    scale: SnrScale,
    cdf_eval: OnceLock<Result<AdaptiveEvaluator, FoxHError>>,
    pdf_eval: OnceLock<Result<AdaptiveEvaluator, FoxHError>>,
    rel_tol: f64,
}

impl std::fmt::Debug for R2V {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("R2V").field("scale", &self.scale).finish()
    }
}

/// Which evaluation produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Closed,
    Fallback,
}

impl R2V {
    pub fn new(chain: &HopChainRF, los: &LOSLink, scale: SnrScale) -> Result<Self, ChannelError> {
        chain.validate()?;
        los.validate()?;
        scale.validate()?;
        Ok(Self::from_forms(&chain.form(), &los.form(), scale))
    }

    pub fn from_forms(rf: &MellinForm, los: &MellinForm, scale: SnrScale) -> Self {
        Self {
            rf: HDensity::new(rf),
            los: HDensity::new(los),
            scale,
            cdf_eval: OnceLock::new(),
            pdf_eval: OnceLock::new(),
            rel_tol: ContourPolicy::for_dimension(2).rel_tol,
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn rf(&self) -> &HDensity {
        &self.rf
    }

    pub fn los(&self) -> &HDensity {
        &self.los
    }

    pub fn scale(&self) -> SnrScale {
        self.scale
    }

    fn evaluator<'a>(
        &self,
        cell: &'a OnceLock<Result<AdaptiveEvaluator, FoxHError>>,
        pdf: bool,
    ) -> Result<&'a AdaptiveEvaluator, FoxHError> {
        cell.get_or_init(|| {
            let spec = r2v_spec(self.rf.form(), self.los.form(), pdf);
            AdaptiveEvaluator::new(&spec, ContourPolicy::for_dimension(2).with_rel_tol(self.rel_tol))
        })
        .as_ref()
        .map_err(Clone::clone)
    }

    fn args(&self, gamma: f64) -> [f64; 2] {
        [
            self.rf.form().zeta * (gamma / self.scale.gbar_rf).sqrt(),
            self.los.form().zeta * (gamma / self.scale.gbar_los).sqrt(),
        ]
    }

    fn prefactor(&self) -> f64 {
        self.rf.form().psi * self.los.form().psi / 4.0
    }

    /// Bivariate contour evaluation of the CDF.
    pub fn cdf_closed(&self, gamma: f64) -> Result<f64, FoxHError> {
        if !(gamma > 0.0) {
            return Ok(0.0);
        }
        let v = self.evaluator(&self.cdf_eval, false)?.eval(&self.args(gamma))?;
        Ok(self.prefactor() * v.value)
    }

    pub fn pdf_closed(&self, gamma: f64) -> Result<f64, FoxHError> {
        if !(gamma > 0.0) {
            return Ok(0.0);
        }
        let v = self.evaluator(&self.pdf_eval, true)?.eval(&self.args(gamma))?;
        Ok(self.prefactor() * v.value / gamma)
    }

    pub fn rf_pdf(&self, g: f64) -> Result<f64, FoxHError> {
        self.rf.snr_pdf(g, self.scale.gbar_rf)
    }

    pub fn rf_cdf(&self, g: f64) -> Result<f64, FoxHError> {
        self.rf.snr_cdf(g, self.scale.gbar_rf)
    }

    pub fn los_pdf(&self, g: f64) -> Result<f64, FoxHError> {
        self.los.snr_pdf(g, self.scale.gbar_los)
    }

    pub fn los_cdf(&self, g: f64) -> Result<f64, FoxHError> {
        self.los.snr_cdf(g, self.scale.gbar_los)
    }

    /// Convolution of the two SNR laws, split at `γ/2` so both endpoint singularities sit at 0.
    pub fn cdf_convolution(&self, gamma: f64) -> Result<f64, R2VError> {
        if !(gamma > 0.0) {
            return Ok(0.0);
        }
        let tol = Tolerance::new(1e-14, 1e-8);
        let half = 0.5 * gamma;
        let a = guarded(|u| Ok(self.rf_pdf(u)? * self.los_cdf(gamma - u)?), half, tol)?;
        let b = guarded(|v| Ok(self.los_pdf(v)? * self.rf_cdf(gamma - v)?), half, tol)?;
        let c = self.rf_cdf(half)? * self.los_cdf(half)?;
        Ok((a + b - c).clamp(0.0, 1.0))
    }

    pub fn pdf_convolution(&self, gamma: f64) -> Result<f64, R2VError> {
        if !(gamma > 0.0) {
            return Ok(0.0);
        }
        let tol = Tolerance::new(1e-300, 1e-8);
        let half = 0.5 * gamma;
        let a = guarded(|u| Ok(self.rf_pdf(u)? * self.los_pdf(gamma - u)?), half, tol)?;
        let b = guarded(|v| Ok(self.los_pdf(v)? * self.rf_pdf(gamma - v)?), half, tol)?;
        Ok(a + b)
    }

    /// CDF from the contour integral, falling back to the convolution when it fails.
    pub fn cdf(&self, gamma: f64) -> Result<(f64, Route), R2VError> {
        match self.cdf_closed(gamma) {
            Ok(v) if v.is_finite() => Ok((v.clamp(0.0, 1.0), Route::Closed)),
            _ => Ok((self.cdf_convolution(gamma)?, Route::Fallback)),
        }
    }

    pub fn pdf(&self, gamma: f64) -> Result<(f64, Route), R2VError> {
        match self.pdf_closed(gamma) {
            Ok(v) if v.is_finite() => Ok((v.max(0.0), Route::Closed)),
            _ => Ok((self.pdf_convolution(gamma)?, Route::Fallback)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum R2VError {
    #[error(transparent)]
    FoxH(#[from] FoxHError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// `∫_0^b f` where `f` may fail; the first failure aborts the integral.
fn guarded<F>(f: F, b: f64, tol: Tolerance) -> Result<f64, R2VError>
where
    F: Fn(f64) -> Result<f64, FoxHError>,
{
    let failure: OnceLock<FoxHError> = OnceLock::new();
    let r = integrate_from_zero(
        |u| match f(u) {
            Ok(v) => v,
            Err(e) => {
                let _ = failure.set(e);
                0.0
            }
        },
        b,
        tol,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e.into());
    }
    Ok(r?.value)
}

pub fn r2v_snr_cdf(chain: &HopChainRF, los: &LOSLink, scale: SnrScale, gamma: f64) -> Result<f64, R2VError> {
    let r = R2V::new(chain, los, scale).map_err(|e| match e {
        ChannelError::FoxH(f) => R2VError::FoxH(f),
        other => R2VError::FoxH(FoxHError::InvalidArgument(other.to_string())),
    })?;
    Ok(r.cdf(gamma)?.0)
}

pub fn r2v_snr_pdf(chain: &HopChainRF, los: &LOSLink, scale: SnrScale, gamma: f64) -> Result<f64, R2VError> {
    let r = R2V::new(chain, los, scale).map_err(|e| match e {
        ChannelError::FoxH(f) => R2VError::FoxH(f),
        other => R2VError::FoxH(FoxHError::InvalidArgument(other.to_string())),
    })?;
    Ok(r.pdf(gamma)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::GGParams;
    use crate::foxh::mellin_moment;

    fn rayleigh_power() -> MellinForm {
        // GG(2, 1, 1): |h|² ~ Exp(1)
        channels::gg_form(&GGParams::new(2.0, 1.0, 1.0).unwrap())
    }

    #[test]
    fn single_part_is_identity() {
        let f = rayleigh_power();
        assert_eq!(product_pdf_spec(std::slice::from_ref(&f)), f);
    }

    #[test]
    fn exponential_snr() {
        let d = HDensity::new(&rayleigh_power());
        let v = d.snr_pdf(1.0, 1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-8);
        let c = d.snr_cdf(2.0, 1.0).unwrap();
        assert!((c - (1.0 - (-2.0f64).exp())).abs() < 1e-8);
        let a = d.snr_pdf(3.0, 4.0).unwrap();
        let b = d.snr_pdf(0.75, 1.0).unwrap() / 4.0;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn sum_of_two_exponentials() {
        // Exp(1) + Exp(1) is Gamma(2, 1): F(γ) = 1 − (1+γ)e^{−γ}.
        let r = R2V::from_forms(&rayleigh_power(), &rayleigh_power(), SnrScale::uniform(1.0)).with_rel_tol(1e-8);
        for g in [0.1f64, 1.0, 3.0] {
            let e = 1.0 - (1.0 + g) * (-g).exp();
            let closed = r.cdf_closed(g).unwrap();
            let conv = r.cdf_convolution(g).unwrap();
            assert!((closed - e).abs() < 1e-7 * e.max(1e-3), "γ = {g}: {closed} vs {e}");
            assert!((conv - e).abs() < 1e-7 * e.max(1e-3), "γ = {g}: {conv} vs {e}");
            let pe = g * (-g).exp();
            let p = r.pdf_closed(g).unwrap();
            assert!((p - pe).abs() < 1e-7 * pe, "γ = {g}: {p} vs {pe}");
        }
    }

    #[test]
    fn product_moment_is_product_of_moments() {
        let a = channels::gg_form(&GGParams::new(1.8621, 0.5, 1.5074).unwrap());
        let b = channels::gg_form(&GGParams::new(1.0, 1.8, 0.928).unwrap());
        let ab = product_pdf_spec(&[a.clone(), b.clone()]);
        for r in [0.0, 0.5, 1.0, 2.0] {
            let e = mellin_moment(&a, r).unwrap() * mellin_moment(&b, r).unwrap();
            assert!((mellin_moment(&ab, r).unwrap() - e).abs() < 1e-10 * e);
        }
    }
}
