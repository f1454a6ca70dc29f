//! Outage probability (exact and asymptotic), diversity order and average BER.
//!
//! Average BER of a CDF `F`: `P_e = q^p/(2Γ(p)) ∫ γ^{p−1} e^{−qγ} F(γ) dγ`. Applied to a contour
//! form in `√γ`, the integral adds `Γ(p − s/2) q^{s/2 − p}` to the kernel, which gives the
//! closed forms below.

use crate::cascade::{r2v_spec, Route};
use crate::foxh::{
    leading_cluster, pole_cluster_sum, ContourPolicy, FoxHError, FoxHEvaluator, FoxHSpec, GammaPair, JointPair,
    PoleSide,
};
use crate::gamma::gamma_real;
use crate::quad::{integrate_from_zero, Tolerance};
use crate::relaying::{guarded_half_line, RelayError, RelayKind, Scenario, System};

/// Nodes per circle of the pole-cluster integrals.
const CLUSTER_NODES: usize = 64;

/// Conditional error `Γ(p, qγ)/(2Γ(p))`; DBPSK is `p = q = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationParams {
    pub p: f64,
    pub q: f64,
}

impl ModulationParams {
    pub fn new(p: f64, q: f64) -> Result<Self, RelayError> {
        let m = Self { p, q };
        m.validate()?;
        Ok(m)
    }

    pub fn dbpsk() -> Self {
        Self { p: 1.0, q: 1.0 }
    }

    pub fn validate(&self) -> Result<(), RelayError> {
        if !(self.p > 0.0 && self.p.is_finite() && self.q > 0.0 && self.q.is_finite()) {
            return Err(RelayError::InvalidParameter(format!(
                "modulation p = {}, q = {} must be positive",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Smallest left-pole offsets of the FSO, RF and LOS kernels (in SNR units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantPoles {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl DominantPoles {
    pub fn g_out(&self) -> f64 {
        self.p1 + self.p2 + self.p3
    }
}

/// `p₁ = min{α_{i,1}β_{i,1}, α_{i,2}β_{i,2}, ρ_i²}/2` over the FSO hops, `p₂` likewise over the
/// RF hops, `p₃` for the LOS link.
pub fn diversity_order(s: &Scenario) -> (DominantPoles, f64) {
    let p1 = s
        .fso
        .hops
        .iter()
        .flat_map(|(d, pe)| [d.first.tail_exponent(), d.second.tail_exponent(), pe.rho2])
        .fold(f64::INFINITY, f64::min)
        / 2.0;
    let p2 =
        s.rf.hops
            .iter()
            .flat_map(|(d, _)| [d.first.tail_exponent(), d.second.tail_exponent()])
            .fold(f64::INFINITY, f64::min)
            / 2.0;
    let p3 = s.los.dgg.first.tail_exponent().min(s.los.dgg.second.tail_exponent()) / 2.0;
    let d = DominantPoles { p1, p2, p3 };
    (d, d.g_out())
}

/// `P_out = F_γ(γ_th)` for the configured mode.
pub fn outage(sys: &System, gamma_th: f64) -> Result<(f64, Route), RelayError> {
    if gamma_th.is_infinite() {
        return Ok((1.0, Route::Closed));
    }
    sys.cdf(gamma_th)
}

/// Leading high-SNR term of the FSO CDF: the residues of the dominant pole cluster.
pub fn fso_cdf_asymptote(sys: &System, gamma: f64) -> Result<f64, RelayError> {
    if !(gamma > 0.0) {
        return Ok(0.0);
    }
    let form = sys.fso().form();
    let spec = FoxHSpec::univariate(form.block.cdf());
    let (circle, _) = leading_cluster(&spec, 0, PoleSide::Left)?;
    let x = form.zeta * (gamma / sys.scenario().scale.gbar_fso).sqrt();
    Ok(form.psi * pole_cluster_sum(&spec, &[circle], &[x], CLUSTER_NODES)?)
}

/// Leading high-SNR term of the RF-plus-LOS CDF: iterated residues at the dominant clusters.
pub fn r2v_cdf_asymptote(sys: &System, gamma: f64) -> Result<f64, RelayError> {
    if !(gamma > 0.0) {
        return Ok(0.0);
    }
    let (rf, los) = (sys.r2v().rf().form(), sys.r2v().los().form());
    let spec = r2v_spec(rf, los, false);
    let (c0, _) = leading_cluster(&spec, 0, PoleSide::Left)?;
    let (c1, _) = leading_cluster(&spec, 1, PoleSide::Left)?;
    let s = sys.scenario().scale;
    let x = [rf.zeta * (gamma / s.gbar_rf).sqrt(), los.zeta * (gamma / s.gbar_los).sqrt()];
    let h = pole_cluster_sum(&spec, &[c0, c1], &x, CLUSTER_NODES)?;
    Ok(rf.psi * los.psi / 4.0 * h)
}

/// DF asymptote: FSO term plus the joint RF–LOS term.
pub fn outage_asymptotic_df(sys: &System, gamma_th: f64) -> Result<f64, RelayError> {
    Ok(fso_cdf_asymptote(sys, gamma_th)? + r2v_cdf_asymptote(sys, gamma_th)?)
}

/// AF asymptote `E_R[A_F(γ (1 + C/γ_R))]` with `A_F` the FSO asymptote, by quadrature.
pub fn outage_asymptotic_af(sys: &System, gamma_th: f64) -> Result<f64, RelayError> {
    if !(gamma_th > 0.0) {
        return Ok(0.0);
    }
    let c = sys.c();
    guarded_half_line(
        |x| {
            let (fr, _) = sys.r2v().pdf(x)?;
            if fr == 0.0 {
                return Ok(0.0);
            }
            Ok(fr * fso_cdf_asymptote(sys, gamma_th * (1.0 + c / x))?)
        },
        sys.r2v_scale(),
        Tolerance::new(1e-300, 1e-7),
    )
}

pub fn outage_asymptotic(sys: &System, gamma_th: f64) -> Result<f64, RelayError> {
    match sys.scenario().mode.kind {
        RelayKind::FixedGainAF => outage_asymptotic_af(sys, gamma_th),
        RelayKind::DF => outage_asymptotic_df(sys, gamma_th),
    }
}

/// Upper limit `u_hi = qγ_hi` where `u^{p−1} e^{−u}` falls below `1e-14` of its value at
/// `max(p − 1, 1)`.
fn ber_upper_limit(p: f64) -> f64 {
    let ln_w = |u: f64| (p - 1.0) * u.ln() - u;
    let u0 = (p - 1.0).max(1.0);
    let target = ln_w(u0) + 1e-14f64.ln();
    let mut hi = 2.0 * u0;
    while ln_w(hi) > target {
        hi *= 2.0;
    }
    let mut lo = u0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ln_w(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `q^p/(2Γ(p)) ∫ γ^{p−1} e^{−qγ} F(γ) dγ`, truncated at the negligible tail.
pub fn ber_quadrature<F>(cdf: F, m: ModulationParams) -> Result<f64, RelayError>
where
    F: Fn(f64) -> Result<f64, RelayError>,
{
    m.validate()?;
    let u_hi = ber_upper_limit(m.p);
    let failure = std::sync::OnceLock::new();
    let lg = crate::gamma::ln_gamma(num_complex::Complex64::new(m.p, 0.0)).re;
    let r = integrate_from_zero(
        |u| match cdf(u / m.q) {
            Ok(f) => f * ((m.p - 1.0) * u.ln() - u - lg).exp(),
            Err(e) => {
                let _ = failure.set(e);
                0.0
            }
        },
        u_hi,
        Tolerance::new(1e-300, 1e-8),
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(0.5 * r?.value)
}

fn eval_default(spec: &FoxHSpec, x: &[f64]) -> Result<f64, FoxHError> {
    Ok(FoxHEvaluator::new(spec, ContourPolicy::for_dimension(x.len()))?.eval(x)?.value)
}

/// FSO-link BER `ψ_F/(2Γ(p)) H[ζ_F/√(qγ̄_F)]` with kernel `Θ_F^{cdf}(s) Γ(p − s/2)`.
pub fn ber_fso_closed(sys: &System, m: ModulationParams) -> Result<f64, RelayError> {
    m.validate()?;
    let (spec, x, coef) = ber_fso_kernel(sys, m);
    Ok(coef * eval_default(&spec, &[x])?)
}

/// BER kernel of the FSO link, its argument and prefactor.
fn ber_fso_kernel(sys: &System, m: ModulationParams) -> (FoxHSpec, f64, f64) {
    let form = sys.fso().form();
    let spec = FoxHSpec::univariate(form.block.cdf().with_upper_n(GammaPair::new(1.0 - m.p, 0.5)));
    let x = form.zeta / (m.q * sys.scenario().scale.gbar_fso).sqrt();
    (spec, x, form.psi / (2.0 * gamma_real(m.p)))
}

/// BER kernel of the RF-plus-LOS link, its arguments and prefactor.
fn ber_r2v_kernel(sys: &System, m: ModulationParams) -> (FoxHSpec, [f64; 2], f64) {
    let (rf, los) = (sys.r2v().rf().form(), sys.r2v().los().form());
    let mut spec = r2v_spec(rf, los, false);
    spec.joint_upper.insert(0, JointPair::new(1.0 - m.p, vec![0.5, 0.5]));
    spec.joint_n += 1;
    let s = sys.scenario().scale;
    let x = [rf.zeta / (m.q * s.gbar_rf).sqrt(), los.zeta / (m.q * s.gbar_los).sqrt()];
    (spec, x, rf.psi * los.psi / (8.0 * gamma_real(m.p)))
}

/// RF-plus-LOS BER `ψ_RF ψ_L/(8Γ(p)) H₂[ζ/√(qγ̄)]` with the joint factor `Γ(p − (s₁+s₂)/2)`.
pub fn ber_r2v_closed(sys: &System, m: ModulationParams) -> Result<f64, RelayError> {
    m.validate()?;
    let (spec, x, coef) = ber_r2v_kernel(sys, m);
    Ok(coef * eval_default(&spec, &x)?)
}

/// Closed form first, quadrature of the matching CDF when it fails.
fn with_fallback<C, Q>(closed: C, quad: Q) -> Result<(f64, Route), RelayError>
where
    C: FnOnce() -> Result<f64, RelayError>,
    Q: FnOnce() -> Result<f64, RelayError>,
{
    match closed() {
        Ok(v) if v.is_finite() => Ok((v.clamp(0.0, 0.5), Route::Closed)),
        _ => Ok((quad()?, Route::Fallback)),
    }
}

pub fn ber_fso(sys: &System, m: ModulationParams) -> Result<(f64, Route), RelayError> {
    with_fallback(|| ber_fso_closed(sys, m), || ber_quadrature(|g| sys.fso_cdf(g), m))
}

pub fn ber_r2v(sys: &System, m: ModulationParams) -> Result<(f64, Route), RelayError> {
    with_fallback(|| ber_r2v_closed(sys, m), || ber_quadrature(|g| Ok(sys.r2v_cdf(g)?.0), m))
}

/// `P_F + P_R − 2 P_F P_R`.
pub fn ber_df_combine(p_fso: f64, p_r2v: f64) -> f64 {
    p_fso + p_r2v - 2.0 * p_fso * p_r2v
}

/// DF BER from the two link BERs.
pub fn ber_df(sys: &System, m: ModulationParams) -> Result<(f64, Route), RelayError> {
    let (f, rf) = ber_fso(sys, m)?;
    let (r, rr) = ber_r2v(sys, m)?;
    let route = if rf == Route::Closed && rr == Route::Closed { Route::Closed } else { Route::Fallback };
    Ok((ber_df_combine(f, r), route))
}

/// AF BER `P_F − ψ_F ψ_RF ψ_L/(8Γ(p)) T_p(ζ_F/√(qγ̄_F), z₂, z₃)`.
pub fn ber_af_closed(sys: &System, m: ModulationParams) -> Result<f64, RelayError> {
    m.validate()?;
    let pf = ber_fso_closed(sys, m)?;
    let ev = sys.af_evaluator(Some(m.p))?;
    let z1 = sys.fso().form().zeta / (m.q * sys.scenario().scale.gbar_fso).sqrt();
    let [z2, z3] = sys.af_relay_args();
    let t = ev.eval(&[z1, z2, z3])?.value;
    Ok(pf - sys.af_prefactor() / (2.0 * gamma_real(m.p)) * t)
}

pub fn ber_af(sys: &System, m: ModulationParams) -> Result<(f64, Route), RelayError> {
    with_fallback(|| ber_af_closed(sys, m), || ber_quadrature(|g| Ok(sys.af_cdf(g)?.0), m))
}

/// Average BER for the configured mode.
pub fn ber(sys: &System, m: ModulationParams) -> Result<(f64, Route), RelayError> {
    match sys.scenario().mode.kind {
        RelayKind::FixedGainAF => ber_af(sys, m),
        RelayKind::DF => ber_df(sys, m),
    }
}

/// Leading high-SNR term of the FSO BER with the mean SNR scaled by `k`.
pub fn ber_fso_asymptote_scaled(sys: &System, m: ModulationParams, k: f64) -> Result<f64, RelayError> {
    m.validate()?;
    let (spec, x, coef) = ber_fso_kernel(sys, m);
    let (circle, _) = leading_cluster(&spec, 0, PoleSide::Left)?;
    Ok(coef * pole_cluster_sum(&spec, &[circle], &[x * k.sqrt()], CLUSTER_NODES)?)
}

pub fn ber_fso_asymptote(sys: &System, m: ModulationParams) -> Result<f64, RelayError> {
    ber_fso_asymptote_scaled(sys, m, 1.0)
}

/// Leading high-SNR term of the RF-plus-LOS BER.
pub fn ber_r2v_asymptote(sys: &System, m: ModulationParams) -> Result<f64, RelayError> {
    m.validate()?;
    let (spec, x, coef) = ber_r2v_kernel(sys, m);
    let (c0, _) = leading_cluster(&spec, 0, PoleSide::Left)?;
    let (c1, _) = leading_cluster(&spec, 1, PoleSide::Left)?;
    Ok(coef * pole_cluster_sum(&spec, &[c0, c1], &x, CLUSTER_NODES)?)
}

/// AF BER asymptote `E_R[A_F^{BER}]` with the FSO mean SNR divided by `1 + C/γ_R`.
pub fn ber_asymptotic_af(sys: &System, m: ModulationParams) -> Result<f64, RelayError> {
    let c = sys.c();
    guarded_half_line(
        |x| {
            let (fr, _) = sys.r2v().pdf(x)?;
            if fr == 0.0 {
                return Ok(0.0);
            }
            Ok(fr * ber_fso_asymptote_scaled(sys, m, 1.0 + c / x)?)
        },
        sys.r2v_scale(),
        Tolerance::new(1e-300, 1e-7),
    )
}

pub fn ber_asymptotic(sys: &System, m: ModulationParams) -> Result<f64, RelayError> {
    match sys.scenario().mode.kind {
        RelayKind::FixedGainAF => ber_asymptotic_af(sys, m),
        RelayKind::DF => Ok(ber_fso_asymptote(sys, m)? + ber_r2v_asymptote(sys, m)?),
    }
}

/// Least-squares slope of `log10 y` against `log10 x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ber_of_degenerate_cdfs() {
        for m in [
            ModulationParams::dbpsk(),
            ModulationParams::new(0.5, 1.0).unwrap(),
            ModulationParams::new(2.0, 0.7).unwrap(),
        ] {
            let one = ber_quadrature(|_| Ok(1.0), m).unwrap();
            assert!((one - 0.5).abs() < 1e-10, "{one}");
            assert_eq!(ber_quadrature(|_| Ok(0.0), m).unwrap(), 0.0);
        }
    }

    #[test]
    fn dbpsk_over_exponential() {
        for gbar in [0.3, 10.0, 1e4] {
            let b = ber_quadrature(|g| Ok(-(-g / gbar).exp_m1()), ModulationParams::dbpsk()).unwrap();
            let exact = 1.0 / (2.0 * (1.0 + gbar));
            assert!((b - exact).abs() < 1e-6 * exact, "{gbar}: {b} vs {exact}");
        }
    }

    #[test]
    fn df_ber_algebra() {
        assert!((ber_df_combine(0.1, 0.2) - 0.26).abs() < 1e-15);
        assert!((ber_df_combine(0.5, 0.2) - 0.5).abs() < 1e-15);
        assert!((ber_df_combine(0.3, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.7)).collect();
        assert!((loglog_slope(&x, &y) + 0.7).abs() < 1e-12);
    }
}
