#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rislink::cascade::{HopChainFSO, HopChainRF, LOSLink, SnrScale};
use rislink::channels::{DGGParams, GGParams, MobilityParams, PointingParams, ShadowParams};
use rislink::config::{default_rf_schedule, turbulence_preset, ScenarioConfig, Turbulence};
use rislink::montecarlo::Sampling;
use rislink::quad::{integrate, integrate_half_line, QuadError, Tolerance};
use rislink::relaying::{CPolicy, RelayMode, Scenario, System};

pub fn st() -> DGGParams {
    turbulence_preset(Turbulence::St).unwrap()
}

pub fn mt() -> DGGParams {
    turbulence_preset(Turbulence::Mt).unwrap()
}

pub fn rf_dgg() -> DGGParams {
    DGGParams {
        first: GGParams { alpha: 1.5, beta: 1.5, omega: 1.5793 },
        second: GGParams { alpha: 1.0, beta: 1.5, omega: 0.9671 },
    }
}

pub fn rho_for(k1: usize) -> f64 {
    if k1 == 2 {
        2.5
    } else {
        5.0
    }
}

pub fn fso_chain(turb: &DGGParams, k1: usize) -> HopChainFSO {
    let pe = PointingParams::from_rho(rho_for(k1)).unwrap();
    HopChainFSO::new(vec![(*turb, pe); k1]).unwrap()
}

/// RF chain over a 100 m link split evenly; mobility on the last hop.
pub fn rf_chain(k2: usize) -> HopChainRF {
    let (m, a) = default_rf_schedule(k2);
    let shadow = ShadowParams::new(m).unwrap();
    let mobility = MobilityParams::new(100.0 / k2 as f64, a).unwrap();
    HopChainRF::new(vec![(rf_dgg(), shadow); k2], mobility).unwrap()
}

pub fn los_link() -> LOSLink {
    LOSLink { dgg: rf_dgg(), shadow: ShadowParams::new(1.2).unwrap() }
}

/// Scenario with every link at the same average SNR (dB).
pub fn scenario(turb: &DGGParams, k1: usize, k2: usize, mode: RelayMode, snr_db: f64) -> Scenario {
    Scenario {
        fso: fso_chain(turb, k1),
        rf: rf_chain(k2),
        los: los_link(),
        scale: SnrScale::uniform(10f64.powf(snr_db / 10.0)),
        mode,
    }
}

pub fn af() -> RelayMode {
    RelayMode::af(CPolicy::OnePlusMeanFso)
}

pub fn df() -> RelayMode {
    RelayMode::df()
}

pub fn system(turb: &DGGParams, k1: usize, k2: usize, mode: RelayMode, snr_db: f64) -> System {
    System::new(scenario(turb, k1, k2, mode, snr_db)).unwrap()
}

pub fn preset(name: &str) -> ScenarioConfig {
    ScenarioConfig::preset(name).unwrap()
}

/// `∫_0^∞ f` with the bulk near `scale`.
pub fn mass<F: Fn(f64) -> f64>(f: F, scale: f64) -> f64 {
    integrate_half_line(f, scale, Tolerance::new(1e-13, 1e-9)).unwrap().value
}

/// `∫_a^b f`.
pub fn mass_on<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    integrate(f, a, b, Tolerance::new(1e-13, 1e-10)).unwrap().value
}

/// Upper bound on `sup_x |F(x) − F_n(x)|` from `F` evaluated on `grid` empirical quantiles of
/// the sorted sample: on `[x_j, x_{j+1})` both functions are nondecreasing, so the gap is at
/// most `max(F(x_{j+1}) − F_n(x_j), F_n(x_{j+1}⁻) − F(x_j))`.
pub fn sup_distance_bound<F: Fn(f64) -> f64 + Sync>(sorted: &[f64], cdf: F, grid: usize) -> f64 {
    let n = sorted.len();
    let mut xs = vec![0.0];
    for j in 1..grid {
        let x = sorted[j * n / grid];
        if x > *xs.last().unwrap() {
            xs.push(x);
        }
    }
    let fe_at = |x: f64| sorted.partition_point(|&v| v <= x) as f64 / n as f64;
    let fe_below = |x: f64| sorted.partition_point(|&v| v < x) as f64 / n as f64;
    let f: Vec<f64> = xs.par_iter().map(|&x| if x > 0.0 { cdf(x) } else { 0.0 }).collect();
    let mut bound: f64 = 0.0;
    for j in 0..xs.len() {
        let (f_next, fe_next) = if j + 1 < xs.len() { (f[j + 1], fe_below(xs[j + 1])) } else { (1.0, 1.0) };
        let fe_j = if xs[j] > 0.0 { fe_at(xs[j]) } else { 0.0 };
        bound = bound.max(f_next - fe_j).max(fe_next - f[j]).max((f[j] - fe_j).abs());
    }
    bound
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub enum Support {
    HalfLine(f64),
    Interval(f64, f64),
}

pub struct DensityCase {
    pub name: String,
    pub pdf: Box<dyn Fn(f64) -> f64 + Sync>,
    pub support: Support,
}

impl DensityCase {
    fn new(name: impl Into<String>, support: Support, pdf: impl Fn(f64) -> f64 + Sync + 'static) -> Self {
        Self { name: name.into(), pdf: Box::new(pdf), support }
    }

    pub fn mass(&self) -> Result<f64, QuadError> {
        let tol = Tolerance::new(1e-13, 1e-9);
        Ok(match self.support {
            Support::HalfLine(s) => integrate_half_line(&self.pdf, s, tol)?.value,
            Support::Interval(a, b) => integrate(&self.pdf, a, b, tol)?.value,
        })
    }
}

/// Every single-hop, cascade and SNR density with the bundled parameter sets.
pub fn density_cases() -> Vec<DensityCase> {
    use rislink::cascade::{fso_cascade_pdf, rf_cascade_pdf, R2V};
    use rislink::channels::*;
    let mut v = Vec::new();
    for (label, d) in [("st", st()), ("mt", mt()), ("rf", rf_dgg())] {
        for (i, g) in [d.first, d.second].into_iter().enumerate() {
            v.push(DensityCase::new(format!("gg {label}{}", i + 1), Support::HalfLine(1.0), move |x| gg_pdf(&g, x)));
        }
        v.push(DensityCase::new(format!("dgg {label}"), Support::HalfLine(1.0), move |x| dgg_pdf(&d, x).unwrap()));
    }
    for rho in [1.0, 2.5, 5.0] {
        let q = PointingParams::from_rho(rho).unwrap();
        v.push(DensityCase::new(format!("pe rho={rho}"), Support::Interval(0.0, 1.0), move |x| pe_pdf(&q, x)));
        for (label, d) in [("st", st()), ("mt", mt())] {
            v.push(DensityCase::new(format!("dgg+pe {label} rho={rho}"), Support::HalfLine(1.0), move |x| {
                dgg_pe_pdf(&d, &q, x).unwrap()
            }));
        }
    }
    for m in [1.2, 7.4, 15.0] {
        let s = ShadowParams::new(m).unwrap();
        v.push(DensityCase::new(format!("shadow m={m}"), Support::HalfLine(1.0), move |x| ig_sqrt_pdf(&s, x)));
        let d = rf_dgg();
        v.push(DensityCase::new(format!("dgg+shadow m={m}"), Support::HalfLine(1.0), move |x| {
            dgg_shadow_pdf(&d, &s, x).unwrap()
        }));
    }
    for k2 in [1, 2, 3, 5] {
        let (m, a) = default_rf_schedule(k2);
        let dist = 100.0 / k2 as f64;
        let mob = MobilityParams::new(dist, a).unwrap();
        let s = ShadowParams::new(m).unwrap();
        let d = rf_dgg();
        v.push(DensityCase::new(format!("rwp d={dist}"), Support::Interval(0.0, dist), move |r| rwp_pdf(&mob, r)));
        let scale = dist.powf(-a / 2.0);
        v.push(DensityCase::new(format!("last hop m={m} a={a} d={dist}"), Support::HalfLine(scale), move |x| {
            lasthop_pdf(&d, &s, &mob, x).unwrap()
        }));
    }
    for (label, d) in [("st", st()), ("mt", mt())] {
        for k1 in 1..=4 {
            let c = fso_chain(&d, k1);
            v.push(DensityCase::new(format!("fso cascade {label} k1={k1}"), Support::HalfLine(1.0), move |x| {
                fso_cascade_pdf(&c, x).unwrap()
            }));
        }
    }
    for k2 in 1..=3 {
        let c = rf_chain(k2);
        let scale = 1.0 / c.form().zeta;
        v.push(DensityCase::new(format!("rf cascade k2={k2}"), Support::HalfLine(scale), move |x| {
            rf_cascade_pdf(&c, x).unwrap()
        }));
    }
    for k2 in [1, 2] {
        for snr_db in [0.0, 30.0] {
            let g = 10f64.powf(snr_db / 10.0);
            let r = R2V::new(&rf_chain(k2), &los_link(), SnrScale { gbar_fso: g, gbar_rf: g, gbar_los: g }).unwrap();
            let scale = g * (1.0 / r.rf().form().zeta).powi(2);
            v.push(DensityCase::new(format!("rf+los snr k2={k2} {snr_db} dB"), Support::HalfLine(scale), move |x| {
                r.pdf(x).unwrap().0
            }));
        }
    }
    for (label, d) in [("st", st()), ("mt", mt())] {
        let sys = system(&d, 3, 2, af(), 20.0);
        v.push(DensityCase::new(format!("fso snr {label} k1=3"), Support::HalfLine(100.0), move |x| {
            sys.fso_pdf(x).unwrap()
        }));
    }
    v
}

/// Largest `|H^{1,0}_{0,1}[x | ∅; (0,1)] − e^{−x}|` over a log grid.
pub fn exp_identity_error() -> f64 {
    use rislink::foxh::{AdaptiveEvaluator, Block, ContourPolicy, FoxHSpec};
    let spec = FoxHSpec::univariate(Block::exponential());
    let ev = AdaptiveEvaluator::new(&spec, ContourPolicy::for_dimension(1).with_rel_tol(1e-13)).unwrap();
    (-40..=30)
        .map(|e| {
            let x = 10f64.powf(e as f64 / 10.0);
            (ev.eval(&[x]).unwrap().value - (-x).exp()).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest relative gap between a separable 2- or 3-variable evaluation and the product of
/// the 1-variable evaluations.
pub fn separability_error() -> f64 {
    use rislink::foxh::{eval_1d, eval_2d, eval_3d, ContourPolicy, FoxHSpec};
    let blocks = [
        rislink::channels::gg_form(&st().first).block,
        rislink::channels::dgg_shadow_form(&rf_dgg(), &ShadowParams::new(1.2).unwrap()).block,
        rislink::channels::gg_form(&mt().second).block.cdf(),
    ];
    let one = |k: usize, x: f64| {
        eval_1d(&FoxHSpec::univariate(blocks[k].clone()), ContourPolicy::for_dimension(1).with_rel_tol(1e-12), x)
            .unwrap()
            .value
    };
    let mut worst: f64 = 0.0;
    for &(x1, x2, x3) in &[(0.3, 0.7, 0.5), (1.0, 2.0, 0.9), (2.5, 0.2, 0.1)] {
        let p2 = FoxHSpec::separable(blocks[..2].to_vec());
        let v2 = eval_2d(&p2, ContourPolicy::for_dimension(2).with_rel_tol(1e-10), x1, x2).unwrap().value;
        let e2 = one(0, x1) * one(1, x2);
        worst = worst.max((v2 - e2).abs() / e2.abs());
        let p3 = FoxHSpec::separable(blocks.to_vec());
        let v3 = eval_3d(&p3, ContourPolicy::for_dimension(3).with_rel_tol(1e-7), x1, x2, x3).unwrap().value;
        let e3 = e2 * one(2, x3);
        worst = worst.max((v3 - e3).abs() / e3.abs());
    }
    worst
}

/// `E[X^r] = Γ(β + r/α)/Γ(β) · (Ω/β)^{r/α}`.
pub fn gg_moment(p: &GGParams, r: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    (ln_gamma(p.beta + r / p.alpha) - ln_gamma(p.beta) + r / p.alpha * (p.omega / p.beta).ln()).exp()
}

/// Largest relative gap between template Mellin moments (single and double GG) and the
/// closed-form GG moments, plus the quadrature moment of the contour-evaluated dGG density.
pub fn moment_error() -> f64 {
    use rislink::channels::{dgg_form, dgg_pdf, gg_form};
    use rislink::foxh::mellin_moment;
    let mut worst: f64 = 0.0;
    for d in [st(), mt(), rf_dgg()] {
        for r in [0.5, 1.0, 2.0, 3.0] {
            for g in [d.first, d.second] {
                let m = mellin_moment(&gg_form(&g), r).unwrap();
                worst = worst.max((m / gg_moment(&g, r) - 1.0).abs());
            }
            let exact = gg_moment(&d.first, r) * gg_moment(&d.second, r);
            let m = mellin_moment(&dgg_form(&d), r).unwrap();
            worst = worst.max((m / exact - 1.0).abs());
        }
        for r in [1.0, 2.0] {
            let exact = gg_moment(&d.first, r) * gg_moment(&d.second, r);
            let q = integrate_half_line(|x| x.powf(r) * dgg_pdf(&d, x).unwrap(), 1.0, Tolerance::new(1e-15, 1e-11))
                .unwrap()
                .value;
            worst = worst.max((q / exact - 1.0).abs());
        }
    }
    worst
}

pub fn sampling(samples: u64, seed: u64) -> Sampling {
    Sampling { samples, seed, workers: std::thread::available_parallelism().map_or(1, |n| n.get()), batch: 1 << 16 }
}

/// A sampler paired with the analytic CDF of what it draws.
pub struct CdfCase {
    pub name: String,
    pub draw: Box<dyn Fn(&mut ChaCha8Rng) -> f64 + Sync>,
    pub cdf: Box<dyn Fn(f64) -> f64 + Sync>,
}

impl CdfCase {
    /// Bound on the Kolmogorov distance between `samples` draws and the analytic CDF.
    pub fn distance(&self, samples: u64, seed: u64, grid: usize) -> f64 {
        let v = sorted(sampling(samples, seed).collect(&self.draw).unwrap());
        sup_distance_bound(&v, &self.cdf, grid)
    }
}

/// FSO cascade (ST, MT; K1 = 1, 2), RF cascade (K2 = 1, 2), RF-plus-LOS SNR (K2 = 1, 2) and
/// end-to-end AF SNR (ST, K1, K2 in {1, 2}).
pub fn cdf_cases() -> Vec<CdfCase> {
    use rislink::cascade::{fso_cascade_cdf, r2v_snr_cdf, rf_cascade_cdf};
    use rislink::channels::sample_dgg_shadow;
    use rislink::montecarlo::{draw_with_c, sample_fso_cascade, sample_rf_cascade};
    let mut out = Vec::new();
    for (tn, t) in [("st", st()), ("mt", mt())] {
        for k1 in [1, 2] {
            let (a, b) = (fso_chain(&t, k1), fso_chain(&t, k1));
            out.push(CdfCase {
                name: format!("fso cascade {tn} K1={k1}"),
                draw: Box::new(move |r| sample_fso_cascade(&a, r)),
                cdf: Box::new(move |x| fso_cascade_cdf(&b, x).unwrap()),
            });
        }
    }
    for k2 in [1, 2] {
        let (a, b) = (rf_chain(k2), rf_chain(k2));
        out.push(CdfCase {
            name: format!("rf cascade K2={k2}"),
            draw: Box::new(move |r| sample_rf_cascade(&a, r)),
            cdf: Box::new(move |x| rf_cascade_cdf(&b, x).unwrap()),
        });
    }
    for k2 in [1, 2] {
        let scale = SnrScale { gbar_fso: 1.0, gbar_rf: 10.0, gbar_los: 3.0 };
        let (a, b, l) = (rf_chain(k2), rf_chain(k2), los_link());
        let lb = los_link();
        out.push(CdfCase {
            name: format!("rf+los snr K2={k2}"),
            draw: Box::new(move |r| {
                scale.gbar_rf * sample_rf_cascade(&a, r).powi(2)
                    + scale.gbar_los * sample_dgg_shadow(&l.dgg, &l.shadow, r).powi(2)
            }),
            cdf: Box::new(move |g| r2v_snr_cdf(&b, &lb, scale, g).unwrap()),
        });
    }
    for k1 in [1, 2] {
        for k2 in [1, 2] {
            let sys = system(&st(), k1, k2, af(), 10.0);
            let s = sys.scenario().clone();
            let c = sys.c();
            out.push(CdfCase {
                name: format!("af snr st K1={k1} K2={k2}"),
                draw: Box::new(move |r| draw_with_c(&s, c, r).af),
                cdf: Box::new(move |g| sys.af_cdf(g).unwrap().0),
            });
        }
    }
    out
}

/// Largest `|closed − seminumeric| / max(1% · seminumeric, 1e-4)` of the AF outage over
/// 0..95 dB in 5 dB steps at `γ_th = 1`.
pub fn af_route_gap(turb: &DGGParams, k1: usize, k2: usize) -> f64 {
    (0..20)
        .into_par_iter()
        .map(|i| {
            let sys = system(turb, k1, k2, af(), 5.0 * i as f64);
            let (a, b) = (sys.af_cdf_closed(1.0).unwrap(), sys.af_cdf_seminumeric(1.0).unwrap());
            (a - b).abs() / (0.01 * b).max(1e-4)
        })
        .reduce(|| 0.0, f64::max)
}
