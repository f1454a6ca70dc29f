//! Monte Carlo estimates of outage and BER from end-to-end SNR samples.
//!
//! Samples are drawn in fixed-size batches; batch `b` owns the ChaCha8 stream `b` of the plan
//! seed, and batch sums are reduced in batch order. The estimate therefore depends only on
//! `(seed, samples, batch)`, never on the worker count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::gamma_ur;

use crate::cascade::{HopChainFSO, HopChainRF};
use crate::channels::{sample_dgg_pe, sample_dgg_shadow, sample_lasthop};
use crate::metrics::{ber_df_combine, ModulationParams};
use crate::relaying::{resolve_c, RelayError, RelayKind, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct SimPlan {
    pub scenario: Scenario,
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub batch: u64,
}

impl SimPlan {
    pub fn validate(&self) -> Result<(), RelayError> {
        self.scenario.validate()?;
        self.sampling().validate()
    }

    pub fn sampling(&self) -> Sampling {
        Sampling { samples: self.samples, seed: self.seed, workers: self.workers, batch: self.batch }
    }
}

/// Sample budget and stream layout, independent of what is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sampling {
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub batch: u64,
}

impl Sampling {
    pub fn validate(&self) -> Result<(), RelayError> {
        if self.samples == 0 || self.workers == 0 || self.batch == 0 {
            return Err(RelayError::InvalidParameter("samples, workers and batch must be at least 1".into()));
        }
        Ok(())
    }

    fn batches(&self) -> u64 {
        self.samples.div_ceil(self.batch)
    }

    fn batch_len(&self, b: u64) -> u64 {
        self.batch.min(self.samples - b * self.batch)
    }

    /// Runs `f` on each batch's stream and returns the per-batch results in batch order.
    pub fn map_batches<T, F>(&self, f: F) -> Result<Vec<T>, RelayError>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
    {
        self.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| RelayError::InvalidParameter(format!("thread pool: {e}")))?;
        let run = |b: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(b);
            f(&mut rng, self.batch_len(b))
        };
        Ok(pool.install(|| (0..self.batches()).into_par_iter().map(run).collect()))
    }

    /// Sample mean of `g(draw)` with its standard error.
    pub fn mean<D>(&self, draw: D) -> Result<EmpiricalResult, RelayError>
    where
        D: Fn(&mut ChaCha8Rng) -> f64 + Sync,
    {
        let parts = self.map_batches(|rng, n| {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n {
                let v = draw(rng);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })?;
        let (s, s2) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        let n = self.samples as f64;
        let mean = s / n;
        let var = if self.samples > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Ok(EmpiricalResult { estimate: mean, std_error: (var / n).sqrt(), n_effective: self.samples })
    }

    /// Empirical probability of `pred(draw)`; standard error `√(p(1−p)/N)`.
    pub fn probability<D>(&self, draw: D) -> Result<EmpiricalResult, RelayError>
    where
        D: Fn(&mut ChaCha8Rng) -> bool + Sync,
    {
        let hits = self.map_batches(|rng, n| (0..n).filter(|_| draw(rng)).count() as u64)?;
        let k: u64 = hits.iter().sum();
        let n = self.samples as f64;
        let p = k as f64 / n;
        Ok(EmpiricalResult { estimate: p, std_error: (p * (1.0 - p) / n).sqrt(), n_effective: self.samples })
    }

    /// All draws, in stream order.
    pub fn collect<D>(&self, draw: D) -> Result<Vec<f64>, RelayError>
    where
        D: Fn(&mut ChaCha8Rng) -> f64 + Sync,
    {
        let parts = self.map_batches(|rng, n| (0..n).map(|_| draw(rng)).collect::<Vec<f64>>())?;
        Ok(parts.concat())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n_effective: u64,
}

/// One draw of the end-to-end SNRs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrDraw {
    pub fso: f64,
    pub r2v: f64,
    pub af: f64,
    pub df: f64,
}

impl SnrDraw {
    pub fn for_mode(&self, kind: RelayKind) -> f64 {
        match kind {
            RelayKind::FixedGainAF => self.af,
            RelayKind::DF => self.df,
        }
    }
}

/// Product of the FSO hop amplitudes.
pub fn sample_fso_cascade<R: Rng + ?Sized>(chain: &HopChainFSO, rng: &mut R) -> f64 {
    chain.hops.iter().map(|(d, p)| sample_dgg_pe(d, p, rng)).product()
}

/// Product of the RF hop amplitudes, the last one with the mobility factor.
pub fn sample_rf_cascade<R: Rng + ?Sized>(chain: &HopChainRF, rng: &mut R) -> f64 {
    let last = chain.hops.len() - 1;
    let mut h = 1.0;
    for (i, (d, s)) in chain.hops.iter().enumerate() {
        h *= if i == last { sample_lasthop(d, s, &chain.mobility, rng) } else { sample_dgg_shadow(d, s, rng) };
    }
    h
}

/// End-to-end SNRs of one channel realization with relay constant `c`.
pub fn draw_with_c<R: Rng + ?Sized>(s: &Scenario, c: f64, rng: &mut R) -> SnrDraw {
    let fso = s.scale.gbar_fso * sample_fso_cascade(&s.fso, rng).powi(2);
    let rf = s.scale.gbar_rf * sample_rf_cascade(&s.rf, rng).powi(2);
    let los = s.scale.gbar_los * sample_dgg_shadow(&s.los.dgg, &s.los.shadow, rng).powi(2);
    let r2v = rf + los;
    SnrDraw { fso, r2v, af: fso * r2v / (r2v + c), df: fso.min(r2v) }
}

pub fn draw_end_to_end_snr<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Result<SnrDraw, RelayError> {
    let c = resolve_c(&s.mode, &s.scale)?;
    Ok(draw_with_c(s, c, rng))
}

/// Conditional error probability `Γ(p, qγ)/(2Γ(p))`.
pub fn conditional_ber(m: &ModulationParams, gamma: f64) -> f64 {
    if gamma <= 0.0 {
        return 0.5;
    }
    0.5 * gamma_ur(m.p, m.q * gamma)
}

/// Conditional end-to-end error probability of one draw. A DF relay decodes and re-encodes, so a
/// bit is wrong when exactly one link flips it.
pub fn draw_ber(m: &ModulationParams, d: &SnrDraw, kind: RelayKind) -> f64 {
    match kind {
        RelayKind::FixedGainAF => conditional_ber(m, d.af),
        RelayKind::DF => ber_df_combine(conditional_ber(m, d.fso), conditional_ber(m, d.r2v)),
    }
}

/// Outage `Pr(γ ≤ γ_th)` of the plan's relaying mode.
pub fn estimate_outage(plan: &SimPlan, gamma_th: f64) -> Result<EmpiricalResult, RelayError> {
    plan.validate()?;
    let c = resolve_c(&plan.scenario.mode, &plan.scenario.scale)?;
    let kind = plan.scenario.mode.kind;
    plan.sampling().probability(|rng| draw_with_c(&plan.scenario, c, rng).for_mode(kind) <= gamma_th)
}

/// Average BER of the plan's relaying mode from the conditional-error kernel.
pub fn estimate_ber(plan: &SimPlan, m: ModulationParams) -> Result<EmpiricalResult, RelayError> {
    plan.validate()?;
    m.validate()?;
    let c = resolve_c(&plan.scenario.mode, &plan.scenario.scale)?;
    let kind = plan.scenario.mode.kind;
    plan.sampling().mean(|rng| draw_ber(&m, &draw_with_c(&plan.scenario, c, rng), kind))
}
