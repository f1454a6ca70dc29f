//! Scenario configuration files (TOML) and the bundled presets.
//!
//! External values are in dB, dBm, metres and the usual engineering units; conversion to
//! linear quantities happens when a [`Scenario`] is built.

use serde::Deserialize;
use thiserror::Error;

use crate::cascade::{HopChainFSO, HopChainRF, LOSLink, SnrScale};
use crate::channels::{ChannelError, DGGParams, GGParams, MobilityParams, PointingParams, ShadowParams};
use crate::metrics::ModulationParams;
use crate::montecarlo::Sampling;
use crate::relaying::{db_to_linear, CPolicy, FsoLinkBudget, RelayError, RelayMode, RfLinkBudget, Scenario};

pub const PRESETS: [(&str, &str); 5] = [
    ("st", include_str!("../presets/st.toml")),
    ("mt", include_str!("../presets/mt.toml")),
    ("fig4a", include_str!("../presets/fig4a.toml")),
    ("fig7b", include_str!("../presets/fig7b.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

fn field(name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: name.into(), message: message.into() }
}

/// A single value or a list, e.g. `hops = 3` or `hops = [2, 3, 4]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turbulence {
    St,
    Mt,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsoSection {
    pub turbulence: Turbulence,
    pub hops: OneOrMany<usize>,
    pub alpha1: Option<f64>,
    pub beta1: Option<f64>,
    pub omega1: Option<f64>,
    pub alpha2: Option<f64>,
    pub beta2: Option<f64>,
    pub omega2: Option<f64>,
    /// Pointing-error `ρ`; absent means 2.5 for two hops and 5 otherwise.
    pub rho: Option<f64>,
    #[serde(default = "one")]
    pub a0: f64,
    #[serde(default = "d_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default = "d_fso_distance")]
    pub distance_m: f64,
    pub hop_distances_m: Option<Vec<f64>>,
    #[serde(default = "d_visibility")]
    pub visibility_km: f64,
    #[serde(default = "d_responsivity")]
    pub responsivity: f64,
    #[serde(default = "d_noise_a2")]
    pub noise_a2_per_ghz: f64,
    #[serde(default = "one")]
    pub bandwidth_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfSection {
    pub hops: usize,
    #[serde(default = "d_alpha3")]
    pub alpha3: f64,
    #[serde(default = "d_beta34")]
    pub beta3: f64,
    #[serde(default = "d_omega3")]
    pub omega3: f64,
    #[serde(default = "one")]
    pub alpha4: f64,
    #[serde(default = "d_beta34")]
    pub beta4: f64,
    #[serde(default = "d_omega4")]
    pub omega4: f64,
    /// Shadowing `m`; absent means 1.2, 7.4 or 15 for 2, 3 or 5 hops.
    pub shadowing_m: Option<f64>,
    /// Path-loss exponent of the mobile last hop; absent means 4, 3 or 2 for 2, 3 or 5 hops.
    pub exponent: Option<f64>,
    #[serde(default = "d_carrier")]
    pub carrier_mhz: f64,
    #[serde(default = "d_antenna")]
    pub gt_dbi: f64,
    #[serde(default = "d_antenna")]
    pub gr_dbi: f64,
    #[serde(default = "d_noise_dbm")]
    pub noise_dbm: f64,
    #[serde(default = "d_rf_bandwidth")]
    pub bandwidth_mhz: f64,
    #[serde(default = "d_rf_distance")]
    pub distance_m: f64,
    pub hop_distances_m: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosSection {
    #[serde(default = "d_rf_distance")]
    pub distance_m: f64,
    #[serde(default = "d_los_exponent")]
    pub exponent: f64,
    #[serde(default = "d_los_shadow")]
    pub shadowing_m: f64,
}

impl Default for LosSection {
    fn default() -> Self {
        Self { distance_m: d_rf_distance(), exponent: d_los_exponent(), shadowing_m: d_los_shadow() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CValue {
    Explicit(f64),
    Named(CName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum CName {
    #[serde(rename = "one-plus-mean-fso")]
    OnePlusMeanFso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Af,
    Df,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaySection {
    pub mode: ModeName,
    #[serde(default = "d_c")]
    pub c: CValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSection {
    pub p: f64,
    pub q: f64,
}

impl Default for ModulationSection {
    fn default() -> Self {
        Self { p: 1.0, q: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Transmit power in dBm, applied to every link.
    Power,
    /// Common average SNR in dB.
    Snr,
}

/// Which SNR the metrics describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    EndToEnd,
    Fso,
    R2v,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
    pub values: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub gamma_th: f64,
    #[serde(default = "d_link")]
    pub link: Link,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "d_samples")]
    pub samples: u64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_workers")]
    pub workers: usize,
    #[serde(default = "d_batch")]
    pub batch: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { samples: d_samples(), seed: d_seed(), workers: d_workers(), batch: d_batch() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fso: FsoSection,
    pub rf: RfSection,
    #[serde(default)]
    pub los: LosSection,
    pub relay: RelaySection,
    #[serde(default)]
    pub modulation: ModulationSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

fn one() -> f64 {
    1.0
}
fn d_wavelength() -> f64 {
    1550.0
}
fn d_fso_distance() -> f64 {
    1000.0
}
fn d_visibility() -> f64 {
    3.0
}
fn d_responsivity() -> f64 {
    0.41
}
fn d_noise_a2() -> f64 {
    1e-14
}
fn d_alpha3() -> f64 {
    1.5
}
fn d_beta34() -> f64 {
    1.5
}
fn d_omega3() -> f64 {
    1.5793
}
fn d_omega4() -> f64 {
    0.9671
}
fn d_carrier() -> f64 {
    800.0
}
fn d_antenna() -> f64 {
    25.0
}
fn d_noise_dbm() -> f64 {
    -104.4
}
fn d_rf_bandwidth() -> f64 {
    20.0
}
fn d_rf_distance() -> f64 {
    100.0
}
fn d_los_exponent() -> f64 {
    4.0
}
fn d_los_shadow() -> f64 {
    1.2
}
fn d_c() -> CValue {
    CValue::Named(CName::OnePlusMeanFso)
}
fn d_link() -> Link {
    Link::EndToEnd
}
fn d_samples() -> u64 {
    1_000_000
}
fn d_seed() -> u64 {
    1
}
fn d_workers() -> usize {
    1
}
fn d_batch() -> u64 {
    65_536
}

/// Weak- and moderate-turbulence double generalized Gamma parameters.
pub fn turbulence_preset(t: Turbulence) -> Option<DGGParams> {
    let (a1, b1, o1, a2, b2, o2) = match t {
        Turbulence::St => (1.8621, 0.5, 1.5074, 1.0, 1.8, 0.928),
        Turbulence::Mt => (2.169, 0.55, 1.5793, 1.0, 2.35, 0.9671),
        Turbulence::Custom => return None,
    };
    Some(DGGParams {
        first: GGParams { alpha: a1, beta: b1, omega: o1 },
        second: GGParams { alpha: a2, beta: b2, omega: o2 },
    })
}

/// Pointing-error schedule: `ρ = 2.5` with two FSO hops, `ρ = 5` otherwise.
pub fn default_rho(k1: usize) -> f64 {
    if k1 == 2 {
        2.5
    } else {
        5.0
    }
}

/// Shadowing `m` and mobile-hop exponent `a` by RF hop count.
pub fn default_rf_schedule(k2: usize) -> (f64, f64) {
    match k2 {
        0..=2 => (1.2, 4.0),
        3 | 4 => (7.4, 3.0),
        _ => (15.0, 2.0),
    }
}

fn split(total: f64, n: usize) -> Vec<f64> {
    vec![total / n as f64; n]
}

/// One curve of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub fso_hops: usize,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &str) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.into(), source: e })?;
        Self::from_toml_str(&s)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (_, text) =
            PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| ConfigError::UnknownPreset(name.into()))?;
        Self::from_toml_str(text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let hops = self.fso.hops.values();
        if hops.is_empty() || hops.contains(&0) {
            return Err(field("fso.hops", "needs at least one hop"));
        }
        if self.rf.hops == 0 {
            return Err(field("rf.hops", "needs at least one hop"));
        }
        self.fso_dgg()?;
        if let Some(d) = &self.fso.hop_distances_m {
            if hops.len() != 1 || d.len() != hops[0] {
                return Err(field("fso.hop_distances_m", "needs a single hop count and one distance per hop"));
            }
        }
        if let Some(d) = &self.rf.hop_distances_m {
            if d.len() != self.rf.hops {
                return Err(field("rf.hop_distances_m", "one distance per RF hop"));
            }
        }
        let sweep = self.sweep_values()?;
        if sweep.is_empty() {
            return Err(field("sweep", "empty grid"));
        }
        if !(self.sweep.gamma_th > 0.0) {
            return Err(field("sweep.gamma_th", "must be positive"));
        }
        ModulationParams::new(self.modulation.p, self.modulation.q).map_err(|e| field("modulation", e.to_string()))?;
        self.sampling().validate().map_err(|e| field("simulation", e.to_string()))?;
        for v in self.variants() {
            self.scenario_at(&v, sweep[0])?;
        }
        Ok(())
    }

    fn fso_dgg(&self) -> Result<DGGParams, ConfigError> {
        if let Some(p) = turbulence_preset(self.fso.turbulence) {
            return Ok(p);
        }
        let f = &self.fso;
        let get = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| field(&format!("fso.{name}"), "required for custom turbulence"))
        };
        let first =
            GGParams { alpha: get("alpha1", f.alpha1)?, beta: get("beta1", f.beta1)?, omega: get("omega1", f.omega1)? };
        let second =
            GGParams { alpha: get("alpha2", f.alpha2)?, beta: get("beta2", f.beta2)?, omega: get("omega2", f.omega2)? };
        DGGParams::new(first, second).map_err(|e| field("fso", e.to_string()))
    }

    fn rf_dgg(&self) -> DGGParams {
        let r = &self.rf;
        DGGParams {
            first: GGParams { alpha: r.alpha3, beta: r.beta3, omega: r.omega3 },
            second: GGParams { alpha: r.alpha4, beta: r.beta4, omega: r.omega4 },
        }
    }

    /// Sweep grid (dBm or dB), inclusive of `stop` up to rounding.
    pub fn sweep_values(&self) -> Result<Vec<f64>, ConfigError> {
        let s = &self.sweep;
        if let Some(v) = &s.values {
            if s.start.is_some() || s.stop.is_some() || s.step.is_some() {
                return Err(field("sweep", "give either `values` or `start`/`stop`/`step`"));
            }
            return Ok(v.clone());
        }
        let (Some(a), Some(b), Some(h)) = (s.start, s.stop, s.step) else {
            return Err(field("sweep", "needs `values` or all of `start`, `stop`, `step`"));
        };
        if !(h > 0.0) || b < a {
            return Err(field("sweep.step", "must be positive with stop ≥ start"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + h * i as f64).collect())
    }

    pub fn variants(&self) -> Vec<Variant> {
        let hops = self.fso.hops.values();
        let many = hops.len() > 1;
        hops.into_iter()
            .map(|k| Variant { label: if many { format!("k1={k}") } else { String::new() }, fso_hops: k })
            .collect()
    }

    pub fn modulation(&self) -> ModulationParams {
        ModulationParams { p: self.modulation.p, q: self.modulation.q }
    }

    pub fn sampling(&self) -> Sampling {
        let s = self.simulation;
        Sampling { samples: s.samples, seed: s.seed, workers: s.workers, batch: s.batch }
    }

    pub fn relay_mode(&self) -> RelayMode {
        let c = match self.relay.c {
            CValue::Explicit(v) => CPolicy::Explicit(v),
            CValue::Named(CName::OnePlusMeanFso) => CPolicy::OnePlusMeanFso,
        };
        match self.relay.mode {
            ModeName::Af => RelayMode::af(c),
            ModeName::Df => RelayMode { kind: crate::relaying::RelayKind::DF, c_policy: c },
        }
    }

    pub fn fso_budget(&self, k1: usize, power_dbm: f64) -> FsoLinkBudget {
        let f = &self.fso;
        FsoLinkBudget {
            wavelength_nm: f.wavelength_nm,
            total_distance_m: f.distance_m,
            visibility_km: f.visibility_km,
            responsivity: f.responsivity,
            noise_a2_per_ghz: f.noise_a2_per_ghz,
            bandwidth_ghz: f.bandwidth_ghz,
            transmit_power_dbm: power_dbm,
            hop_distances_m: f.hop_distances_m.clone().unwrap_or_else(|| split(f.distance_m, k1)),
        }
    }

    fn rf_exponent(&self) -> f64 {
        self.rf.exponent.unwrap_or(default_rf_schedule(self.rf.hops).1)
    }

    pub fn rf_budget(&self, power_dbm: f64) -> RfLinkBudget {
        let r = &self.rf;
        let mut exponents = vec![2.0; r.hops];
        exponents[r.hops - 1] = self.rf_exponent();
        RfLinkBudget {
            carrier_mhz: r.carrier_mhz,
            gt_dbi: r.gt_dbi,
            gr_dbi: r.gr_dbi,
            noise_dbm: r.noise_dbm,
            bandwidth_mhz: r.bandwidth_mhz,
            transmit_power_dbm: power_dbm,
            hop_distances_m: r.hop_distances_m.clone().unwrap_or_else(|| split(r.distance_m, r.hops)),
            exponents,
            los_distance_m: self.los.distance_m,
            los_exponent: self.los.exponent,
        }
    }

    /// Channel laws of one curve; independent of the sweep value.
    pub fn chains(&self, v: &Variant) -> Result<(HopChainFSO, HopChainRF, LOSLink), ConfigError> {
        let rho = self.fso.rho.unwrap_or(default_rho(v.fso_hops));
        let pe = PointingParams::new(rho * rho, self.fso.a0).map_err(|e| field("fso.rho", e.to_string()))?;
        let fso = HopChainFSO::new(vec![(self.fso_dgg()?, pe); v.fso_hops]).map_err(|e| field("fso", e.to_string()))?;
        let (m_default, _) = default_rf_schedule(self.rf.hops);
        let shadow = ShadowParams::new(self.rf.shadowing_m.unwrap_or(m_default))
            .map_err(|e| field("rf.shadowing_m", e.to_string()))?;
        let rf_budget = self.rf_budget(0.0);
        let last = *rf_budget.hop_distances_m.last().expect("at least one RF hop");
        let mobility =
            MobilityParams::new(last, self.rf_exponent()).map_err(|e| field("rf.exponent", e.to_string()))?;
        let rf = HopChainRF::new(vec![(self.rf_dgg(), shadow); self.rf.hops], mobility)
            .map_err(|e| field("rf", e.to_string()))?;
        let los_shadow =
            ShadowParams::new(self.los.shadowing_m).map_err(|e| field("los.shadowing_m", e.to_string()))?;
        let los = LOSLink { dgg: self.rf_dgg(), shadow: los_shadow };
        los.validate().map_err(|e: ChannelError| field("los", e.to_string()))?;
        Ok((fso, rf, los))
    }

    /// Average SNRs at one sweep value.
    pub fn scale_at(&self, v: &Variant, x: f64) -> Result<SnrScale, ConfigError> {
        let wrap = |e: RelayError| field("budget", e.to_string());
        match self.sweep.kind {
            SweepKind::Snr => Ok(SnrScale::uniform(db_to_linear(x))),
            SweepKind::Power => {
                let rf = self.rf_budget(x);
                Ok(SnrScale {
                    gbar_fso: self.fso_budget(v.fso_hops, x).mean_snr().map_err(wrap)?,
                    gbar_rf: rf.mean_snr_rf().map_err(wrap)?,
                    gbar_los: rf.mean_snr_los().map_err(wrap)?,
                })
            }
        }
    }

    pub fn scenario_at(&self, v: &Variant, x: f64) -> Result<Scenario, ConfigError> {
        let (fso, rf, los) = self.chains(v)?;
        let s = Scenario { fso, rf, los, scale: self.scale_at(v, x)?, mode: self.relay_mode() };
        s.validate().map_err(|e| field("scenario", e.to_string()))?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let c = ScenarioConfig::preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!c.sweep_values().unwrap().is_empty());
        }
    }

    #[test]
    fn fig7b_grid_has_eleven_points() {
        let c = ScenarioConfig::preset("fig7b").unwrap();
        let v = c.sweep_values().unwrap();
        assert_eq!(v.len(), 11);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[10], 50.0);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = ScenarioConfig::preset("st")
            .map(|_| PRESETS[0].1.replace("turbulence = \"st\"", "turbulence = \"strong\""))
            .unwrap();
        let e = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("turbulence"), "{e}");
        let text = PRESETS[0].1.replace("[sweep]", "[sweep]\nbogus = 1");
        let e = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
    }

    #[test]
    fn pointing_schedule() {
        let c = ScenarioConfig::preset("fig4a").unwrap();
        let rhos: Vec<f64> = c.variants().iter().map(|v| c.chains(v).unwrap().0.hops[0].1.rho2.sqrt()).collect();
        assert_eq!(rhos, vec![2.5, 5.0, 5.0]);
    }
}
