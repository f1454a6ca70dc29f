//! End-to-end statistics of fixed-gain AF and DF relaying, link budgets and the AF relay
//! constant.
//!
//! AF: `γ = γ_F γ_R / (γ_R + C)`, so `F_AF(γ) = E_R[F_F(γ (1 + C/γ_R))]`. Writing `F_F` through
//! its CCDF contour and `γ_R` through the RF and LOS kernels gives
//!
//! `F_AF(γ) = F_F(γ) − ψ_F ψ_RF ψ_L / 4 · T(z₁, z₂, z₃)`
//!
//! with `z₁ = ζ_F √(γ/γ̄_F)`, `z₂ = ζ_RF √(C/γ̄_RF)`, `z₃ = ζ_L √(C/γ̄_L)` and the trivariate
//! kernel
//!
//! `Θ_F^c(s₁) Θ_RF(s₂) Θ_L(s₃) Γ(−s₂/2) Γ(−s₃/2) Γ((s₂+s₃)/2) Γ((s₁−s₂−s₃)/2)
//!  / [Γ(s₁/2) Γ(−(s₂+s₃)/2)]`
//!
//! on `Re(s₂ + s₃) ∈ (−2, 0)`, `Re s₁ > Re(s₂ + s₃)`.

use std::sync::OnceLock;

use thiserror::Error;

use crate::cascade::{HopChainFSO, HopChainRF, LOSLink, R2VError, Route, SnrScale, R2V};
use crate::channels::ChannelError;
use crate::foxh::{
    validate, Block, ContourPolicy, FoxHError, FoxHEvaluator, FoxHSpec, GammaPair, HDensity, JointPair, MellinForm,
};
use crate::quad::{integrate_half_line, QuadError, Tolerance};

/// Speed of light (m/s).
pub const LIGHT_SPEED: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelayError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    FoxH(#[from] FoxHError),
    #[error(transparent)]
    R2V(#[from] R2VError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CPolicy {
    Explicit(f64),
    OnePlusMeanFso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayKind {
    FixedGainAF,
    DF,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayMode {
    pub kind: RelayKind,
    pub c_policy: CPolicy,
}

impl RelayMode {
    pub fn af(c_policy: CPolicy) -> Self {
        Self { kind: RelayKind::FixedGainAF, c_policy }
    }

    pub fn df() -> Self {
        Self { kind: RelayKind::DF, c_policy: CPolicy::OnePlusMeanFso }
    }

    pub fn validate(&self) -> Result<(), RelayError> {
        if let CPolicy::Explicit(c) = self.c_policy {
            if !(c > 0.0 && c.is_finite()) {
                return Err(RelayError::InvalidParameter(format!("C = {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Relay constant `C` of the fixed-gain AF SNR.
pub fn resolve_c(mode: &RelayMode, scale: &SnrScale) -> Result<f64, RelayError> {
    mode.validate()?;
    let c = match mode.c_policy {
        CPolicy::Explicit(c) => c,
        CPolicy::OnePlusMeanFso => 1.0 + scale.gbar_fso,
    };
    if !(c > 0.0 && c.is_finite()) {
        return Err(RelayError::InvalidParameter(format!("C = {c} must be positive")));
    }
    Ok(c)
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn positive(name: &str, v: f64) -> Result<(), RelayError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RelayError::InvalidParameter(format!("{name} = {v} must be positive and finite")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsoLinkBudget {
    pub wavelength_nm: f64,
    pub total_distance_m: f64,
    /// Infinite visibility means a clear, attenuation-free channel.
    pub visibility_km: f64,
    pub responsivity: f64,
    pub noise_a2_per_ghz: f64,
    pub bandwidth_ghz: f64,
    pub transmit_power_dbm: f64,
    pub hop_distances_m: Vec<f64>,
}

impl FsoLinkBudget {
    pub fn validate(&self) -> Result<(), RelayError> {
        positive("wavelength_nm", self.wavelength_nm)?;
        positive("total_distance_m", self.total_distance_m)?;
        if !(self.visibility_km > 0.0) {
            return Err(RelayError::InvalidParameter(format!(
                "visibility_km = {} must be positive",
                self.visibility_km
            )));
        }
        positive("responsivity", self.responsivity)?;
        positive("noise_a2_per_ghz", self.noise_a2_per_ghz)?;
        positive("bandwidth_ghz", self.bandwidth_ghz)?;
        if !self.transmit_power_dbm.is_finite() {
            return Err(RelayError::InvalidParameter("transmit_power_dbm must be finite".into()));
        }
        if self.hop_distances_m.is_empty() {
            return Err(RelayError::InvalidParameter("FSO budget needs at least one hop".into()));
        }
        for d in &self.hop_distances_m {
            positive("hop distance", *d)?;
        }
        let sum: f64 = self.hop_distances_m.iter().sum();
        if (sum - self.total_distance_m).abs() > 1e-6 * self.total_distance_m {
            return Err(RelayError::InvalidParameter(format!(
                "FSO hop distances sum to {sum} m, expected {} m",
                self.total_distance_m
            )));
        }
        Ok(())
    }

    /// Receiver noise variance (A²).
    pub fn noise_variance(&self) -> f64 {
        self.noise_a2_per_ghz * self.bandwidth_ghz
    }

    /// `γ̄_F = P (R h_l)² / σ²`.
    pub fn mean_snr(&self) -> Result<f64, RelayError> {
        let h = fso_path_gain(self)?;
        Ok(dbm_to_watt(self.transmit_power_dbm) * (self.responsivity * h).powi(2) / self.noise_variance())
    }
}

/// Size-distribution exponent `q` of Kim's visibility model.
pub fn kim_exponent(visibility_km: f64) -> f64 {
    let v = visibility_km;
    if v > 50.0 {
        1.6
    } else if v > 6.0 {
        1.3
    } else if v > 1.0 {
        0.16 * v + 0.34
    } else if v > 0.5 {
        v - 0.5
    } else {
        0.0
    }
}

/// Attenuation coefficient (1/km) `σ = 3.91/V · (λ/550 nm)^{−q}`.
pub fn kim_attenuation(visibility_km: f64, wavelength_nm: f64) -> f64 {
    if visibility_km.is_infinite() {
        return 0.0;
    }
    3.91 / visibility_km * (wavelength_nm / 550.0).powf(-kim_exponent(visibility_km))
}

/// Product of the per-hop Beer–Lambert attenuations.
pub fn fso_path_gain(b: &FsoLinkBudget) -> Result<f64, RelayError> {
    b.validate()?;
    let sigma = kim_attenuation(b.visibility_km, b.wavelength_nm);
    Ok(b.hop_distances_m.iter().map(|d| (-sigma * d / 1000.0).exp()).product())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfLinkBudget {
    pub carrier_mhz: f64,
    pub gt_dbi: f64,
    pub gr_dbi: f64,
    /// In-band noise power.
    pub noise_dbm: f64,
    pub bandwidth_mhz: f64,
    pub transmit_power_dbm: f64,
    pub hop_distances_m: Vec<f64>,
    /// Path-loss exponent per hop; the last one drives the random-waypoint factor.
    pub exponents: Vec<f64>,
    pub los_distance_m: f64,
    pub los_exponent: f64,
}

impl RfLinkBudget {
    pub fn validate(&self) -> Result<(), RelayError> {
        positive("carrier_mhz", self.carrier_mhz)?;
        positive("bandwidth_mhz", self.bandwidth_mhz)?;
        positive("los_distance_m", self.los_distance_m)?;
        for (n, v) in [
            ("gt_dbi", self.gt_dbi),
            ("gr_dbi", self.gr_dbi),
            ("noise_dbm", self.noise_dbm),
            ("transmit_power_dbm", self.transmit_power_dbm),
        ] {
            if !v.is_finite() {
                return Err(RelayError::InvalidParameter(format!("{n} must be finite")));
            }
        }
        if self.hop_distances_m.is_empty() || self.hop_distances_m.len() != self.exponents.len() {
            return Err(RelayError::InvalidParameter("one exponent per RF hop, at least one hop".into()));
        }
        for d in &self.hop_distances_m {
            positive("hop distance", *d)?;
        }
        for a in self.exponents.iter().chain([&self.los_exponent]) {
            if !(2.0..=5.0).contains(a) {
                return Err(RelayError::InvalidParameter(format!("path-loss exponent {a} outside [2, 5]")));
            }
        }
        Ok(())
    }

    fn wavelength_term(&self) -> f64 {
        LIGHT_SPEED / (4.0 * std::f64::consts::PI * self.carrier_mhz * 1e6)
    }

    /// `√(G_t G_r)`, applied once end to end.
    pub fn antenna_gain(&self) -> f64 {
        10f64.powf((self.gt_dbi + self.gr_dbi) / 20.0)
    }

    pub fn noise_power(&self) -> f64 {
        dbm_to_watt(self.noise_dbm)
    }

    /// `γ̄_RF = P (√(G_t G_r) Π g_i)² / σ²`.
    pub fn mean_snr_rf(&self) -> Result<f64, RelayError> {
        self.validate()?;
        let g: f64 = (0..self.hop_distances_m.len()).map(|i| rf_path_gain(self, i)).product::<Result<f64, _>>()?;
        Ok(dbm_to_watt(self.transmit_power_dbm) * (self.antenna_gain() * g).powi(2) / self.noise_power())
    }

    pub fn mean_snr_los(&self) -> Result<f64, RelayError> {
        self.validate()?;
        let g = self.wavelength_term() * self.los_distance_m.powf(-0.5 * self.los_exponent);
        Ok(dbm_to_watt(self.transmit_power_dbm) * (self.antenna_gain() * g).powi(2) / self.noise_power())
    }
}

/// Amplitude gain `c/(4π f_c) d^{−a/2}` of one RF hop. The last hop is referenced to 1 m: its
/// distance enters through the random-waypoint factor.
pub fn rf_path_gain(b: &RfLinkBudget, hop: usize) -> Result<f64, RelayError> {
    if hop >= b.hop_distances_m.len() {
        return Err(RelayError::InvalidParameter(format!("RF hop {hop} out of range")));
    }
    let base = b.wavelength_term();
    if hop + 1 == b.hop_distances_m.len() {
        Ok(base)
    } else {
        Ok(base * b.hop_distances_m[hop].powf(-0.5 * b.exponents[hop]))
    }
}

/// Channel laws, average SNRs and relaying mode of one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub fso: HopChainFSO,
    pub rf: HopChainRF,
    pub los: LOSLink,
    pub scale: SnrScale,
    pub mode: RelayMode,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), RelayError> {
        self.fso.validate()?;
        self.rf.validate()?;
        self.los.validate()?;
        self.scale.validate()?;
        self.mode.validate()
    }
}

/// Trivariate spec of the AF remainder `T`. With `ber_p = Some(p)` the first block carries the
/// extra `Γ(p − s₁/2)` of the BER integral.
pub fn af_remainder_spec(fso: &MellinForm, rf: &MellinForm, los: &MellinForm, ber_p: Option<f64>) -> FoxHSpec {
    let mut b1 = fso.normalized().block.ccdf().with_upper_den(GammaPair::new(0.0, 0.5));
    if let Some(p) = ber_p {
        b1 = b1.with_upper_n(GammaPair::new(1.0 - p, 0.5));
    }
    let kernel = |f: &MellinForm| f.normalized().block.with_upper_n(GammaPair::new(1.0, 0.5));
    FoxHSpec {
        blocks: vec![b1, kernel(rf), kernel(los)],
        joint_n: 2,
        joint_upper: vec![JointPair::new(1.0, vec![0.0, -0.5, -0.5]), JointPair::new(1.0, vec![-0.5, 0.5, 0.5])],
        joint_lower: vec![JointPair::new(1.0, vec![0.0, 0.5, 0.5])],
    }
}

fn left_gap(block: &Block) -> Result<f64, FoxHError> {
    let lo = validate(&FoxHSpec::univariate(block.clone()))?.bounds[0].0;
    Ok(-lo)
}

/// Contour abscissae for [`af_remainder_spec`]: `c₂, c₃` halfway into the left strips (capped
/// at −1/2) and `c₁` halfway between `max(−κ_F, c₂ + c₃)` and 0.
pub fn af_remainder_anchor(fso: &MellinForm, rf: &MellinForm, los: &MellinForm) -> Result<Vec<f64>, FoxHError> {
    let k1 = left_gap(&fso.normalized().block)?;
    let k2 = left_gap(&rf.normalized().block)?;
    let k3 = left_gap(&los.normalized().block)?;
    let c2 = -0.5 * k2.min(1.0);
    let c3 = -0.5 * k3.min(1.0);
    let c1 = 0.5 * (-k1).max(c2 + c3);
    Ok(vec![c1, c2, c3])
}

/// Analytic evaluators for one scenario.
pub struct System {
    scenario: Scenario,
    c: f64,
    fso: HDensity,
    r2v: R2V,
    tri: OnceLock<Result<FoxHEvaluator, FoxHError>>,
}

impl std::fmt::Debug for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("System").field("scenario", &self.scenario).field("c", &self.c).finish()
    }
}

impl System {
    pub fn new(scenario: Scenario) -> Result<Self, RelayError> {
        scenario.validate()?;
        let c = resolve_c(&scenario.mode, &scenario.scale)?;
        let fso = HDensity::new(&scenario.fso.form());
        let r2v = R2V::new(&scenario.rf, &scenario.los, scenario.scale)?;
        Ok(Self { scenario, c, fso, r2v, tri: OnceLock::new() })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn fso(&self) -> &HDensity {
        &self.fso
    }

    pub fn r2v(&self) -> &R2V {
        &self.r2v
    }

    pub fn fso_cdf(&self, gamma: f64) -> Result<f64, RelayError> {
        if !(gamma > 0.0) {
            return Ok(0.0);
        }
        Ok(self.fso.snr_cdf(gamma, self.scenario.scale.gbar_fso)?)
    }

    pub fn fso_pdf(&self, gamma: f64) -> Result<f64, RelayError> {
        if !(gamma > 0.0) {
            return Ok(0.0);
        }
        Ok(self.fso.snr_pdf(gamma, self.scenario.scale.gbar_fso)?)
    }

    pub fn r2v_cdf(&self, gamma: f64) -> Result<(f64, Route), RelayError> {
        Ok(self.r2v.cdf(gamma)?)
    }

    /// `F_F + F_R − F_F F_R`.
    pub fn df_cdf(&self, gamma: f64) -> Result<(f64, Route), RelayError> {
        let f = self.fso_cdf(gamma)?;
        let (r, route) = self.r2v_cdf(gamma)?;
        Ok((df_combine(f, r), route))
    }

    fn forms(&self) -> (MellinForm, MellinForm, MellinForm) {
        (self.fso.form().clone(), self.r2v.rf().form().clone(), self.r2v.los().form().clone())
    }

    /// `ψ_F ψ_RF ψ_L / 4`.
    pub fn af_prefactor(&self) -> f64 {
        let (f, r, l) = self.forms();
        f.psi * r.psi * l.psi / 4.0
    }

    /// Arguments `(z₂, z₃)` of the RF and LOS variables of the AF remainder.
    pub fn af_relay_args(&self) -> [f64; 2] {
        let (_, r, l) = self.forms();
        let s = self.scenario.scale;
        [r.zeta * (self.c / s.gbar_rf).sqrt(), l.zeta * (self.c / s.gbar_los).sqrt()]
    }

    pub fn af_evaluator(&self, ber_p: Option<f64>) -> Result<FoxHEvaluator, FoxHError> {
        let (f, r, l) = self.forms();
        let spec = af_remainder_spec(&f, &r, &l, ber_p);
        let anchor = af_remainder_anchor(&f, &r, &l)?;
        FoxHEvaluator::new(&spec, ContourPolicy::for_dimension(3).with_anchor(anchor))
    }

    fn tri(&self) -> Result<&FoxHEvaluator, FoxHError> {
        self.tri.get_or_init(|| self.af_evaluator(None)).as_ref().map_err(Clone::clone)
    }

    /// AF CDF from the trivariate contour integral.
    pub fn af_cdf_closed(&self, gamma: f64) -> Result<f64, RelayError> {
        if !(gamma > 0.0) {
            return Ok(0.0);
        }
        let f = self.fso_cdf(gamma)?;
        let z1 = self.fso.form().zeta * (gamma / self.scenario.scale.gbar_fso).sqrt();
        let [z2, z3] = self.af_relay_args();
        let t = self.tri()?.eval(&[z1, z2, z3])?;
        Ok((f - self.af_prefactor() * t.value).clamp(0.0, 1.0))
    }

    /// `F_F(γ) + ∫ f_R(x) [F_F(γ(1 + C/x)) − F_F(γ)] dx`.
    pub fn af_cdf_seminumeric(&self, gamma: f64) -> Result<f64, RelayError> {
        if !(gamma > 0.0) {
            return Ok(0.0);
        }
        let f0 = self.fso_cdf(gamma)?;
        let c = self.c;
        let inc = guarded_half_line(
            |x| {
                let (fr, _) = self.r2v.pdf(x)?;
                if fr == 0.0 {
                    return Ok(0.0);
                }
                Ok(fr * (self.fso_cdf(gamma * (1.0 + c / x))? - f0))
            },
            self.r2v_scale(),
            Tolerance::new(1e-15, 1e-7),
        )?;
        Ok((f0 + inc).clamp(0.0, 1.0))
    }

    /// Rough location of the bulk of `γ_R`.
    pub fn r2v_scale(&self) -> f64 {
        let (_, r, l) = self.forms();
        let s = self.scenario.scale;
        (s.gbar_rf / (r.zeta * r.zeta)).max(s.gbar_los / (l.zeta * l.zeta))
    }

    /// AF CDF: contour form when it converges, quadrature otherwise.
    pub fn af_cdf(&self, gamma: f64) -> Result<(f64, Route), RelayError> {
        match self.af_cdf_closed(gamma) {
            Ok(v) if v.is_finite() => Ok((v, Route::Closed)),
            _ => Ok((self.af_cdf_seminumeric(gamma)?, Route::Fallback)),
        }
    }

    /// End-to-end CDF for the configured relaying mode.
    pub fn cdf(&self, gamma: f64) -> Result<(f64, Route), RelayError> {
        match self.scenario.mode.kind {
            RelayKind::FixedGainAF => self.af_cdf(gamma),
            RelayKind::DF => self.df_cdf(gamma),
        }
    }
}

/// `F_F + F_R − F_F F_R = 1 − (1 − F_F)(1 − F_R)`.
pub fn df_combine(f_fso: f64, f_r2v: f64) -> f64 {
    f_fso + f_r2v - f_fso * f_r2v
}

/// `∫_0^∞ f` where `f` may fail; the first failure aborts the integral.
pub(crate) fn guarded_half_line<F>(f: F, scale: f64, tol: Tolerance) -> Result<f64, RelayError>
where
    F: Fn(f64) -> Result<f64, RelayError>,
{
    let failure: OnceLock<RelayError> = OnceLock::new();
    let r = integrate_half_line(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                let _ = failure.set(e);
                0.0
            }
        },
        scale,
        tol,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(r?.value)
}
