//! Fox H-functions of one to three variables.
//!
//! Convention: `H(x) = (2πi)^{-d} ∫ Θ(s) Π_k x_k^{-s_k} ds` with
//!
//! * lower pair `j < m`: `Γ(b + B s)` in the numerator, otherwise `Γ(1 − b − B s)` in the denominator;
//! * upper pair `j < n`: `Γ(1 − a − A s)` in the numerator, otherwise `Γ(a + A s)` in the denominator;
//! * joint upper pair `j < joint_n`: `Γ(1 − a − Σ A_k s_k)` in the numerator, otherwise `Γ(a + Σ A_k s_k)`
//!   in the denominator;
//! * joint lower pair: `Γ(1 − b − Σ B_k s_k)` in the denominator.
//!
//! Evaluation uses the trapezoidal rule on vertical lines. The per-variable factors and the
//! joint factors live on an integer lattice, so the multivariate sum is contracted one
//! variable at a time instead of visiting every lattice point.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use thiserror::Error;

use crate::gamma::{ln_gamma, pole_distance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FoxHError {
    #[error("malformed spec: {0}")]
    Malformed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no integration strip: {0}")]
    NoStrip(String),
    #[error("contour integral did not converge: estimate {estimate:e}, error {error:e}")]
    NotConverged { estimate: f64, error: f64 },
    #[error("repeated pole at s = {0}")]
    RepeatedPole(f64),
    #[error("moment order {0} lies outside the strip")]
    OutOfStrip(f64),
}

/// Offset/scale pair `(a, A)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPair {
    pub a: f64,
    pub scale: f64,
}

impl GammaPair {
    pub const fn new(a: f64, scale: f64) -> Self {
        Self { a, scale }
    }
}

/// Univariate parameter block `H^{m,n}_{p,q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub m: usize,
    pub n: usize,
    pub upper: Vec<GammaPair>,
    pub lower: Vec<GammaPair>,
}

impl Block {
    pub fn new(m: usize, n: usize, upper: Vec<GammaPair>, lower: Vec<GammaPair>) -> Self {
        Self { m, n, upper, lower }
    }

    /// `H^{1,0}_{0,1}[x | ∅; (0,1)] = e^{-x}`.
    pub fn exponential() -> Self {
        Self::new(1, 0, vec![], vec![GammaPair::new(0.0, 1.0)])
    }

    /// Block of `x^φ H(x)`.
    pub fn shifted(&self, phi: f64) -> Self {
        let shift = |p: &GammaPair| GammaPair::new(p.a + p.scale * phi, p.scale);
        Self::new(self.m, self.n, self.upper.iter().map(shift).collect(), self.lower.iter().map(shift).collect())
    }

    /// Block of `∫_0^x u^{-1} H(u) du`.
    pub fn cdf(&self) -> Self {
        let mut upper = vec![GammaPair::new(1.0, 1.0)];
        upper.extend_from_slice(&self.upper);
        let mut lower = self.lower.clone();
        lower.push(GammaPair::new(0.0, 1.0));
        Self::new(self.m, self.n + 1, upper, lower)
    }

    /// Block of `∫_x^∞ u^{-1} H(u) du`.
    pub fn ccdf(&self) -> Self {
        let mut lower = vec![GammaPair::new(0.0, 1.0)];
        lower.extend_from_slice(&self.lower);
        let mut upper = self.upper.clone();
        upper.push(GammaPair::new(1.0, 1.0));
        Self::new(self.m + 1, self.n, upper, lower)
    }

    /// Block whose kernel is the product of the given kernels; pairs keep group order.
    pub fn product(blocks: &[Block]) -> Self {
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for b in blocks {
            upper.extend_from_slice(&b.upper[..b.n]);
            lower.extend_from_slice(&b.lower[..b.m]);
        }
        for b in blocks {
            upper.extend_from_slice(&b.upper[b.n..]);
            lower.extend_from_slice(&b.lower[b.m..]);
        }
        Self::new(blocks.iter().map(|b| b.m).sum(), blocks.iter().map(|b| b.n).sum(), upper, lower)
    }

    /// Appends a pair to the numerator part of the upper group.
    pub fn with_upper_n(&self, pair: GammaPair) -> Self {
        let mut upper = self.upper.clone();
        upper.insert(self.n, pair);
        Self::new(self.m, self.n + 1, upper, self.lower.clone())
    }

    /// Appends a pair to the denominator part of the upper group.
    pub fn with_upper_den(&self, pair: GammaPair) -> Self {
        let mut upper = self.upper.clone();
        upper.push(pair);
        Self::new(self.m, self.n, upper, self.lower.clone())
    }
}

/// Joint pair `(a; A_1, …, A_d)` coupling the contour variables.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPair {
    pub a: f64,
    pub scales: Vec<f64>,
}

impl JointPair {
    pub fn new(a: f64, scales: Vec<f64>) -> Self {
        Self { a, scales }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoxHSpec {
    pub blocks: Vec<Block>,
    pub joint_n: usize,
    pub joint_upper: Vec<JointPair>,
    pub joint_lower: Vec<JointPair>,
}

impl FoxHSpec {
    pub fn univariate(block: Block) -> Self {
        Self { blocks: vec![block], joint_n: 0, joint_upper: vec![], joint_lower: vec![] }
    }

    pub fn separable(blocks: Vec<Block>) -> Self {
        Self { blocks, joint_n: 0, joint_upper: vec![], joint_lower: vec![] }
    }

    pub fn dimension(&self) -> usize {
        self.blocks.len()
    }

    fn check(&self) -> Result<(), FoxHError> {
        let d = self.blocks.len();
        if !(1..=3).contains(&d) {
            return Err(FoxHError::Malformed(format!("{d} variables, expected 1 to 3")));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.m > b.lower.len() || b.n > b.upper.len() {
                return Err(FoxHError::Malformed(format!("block {}: orders exceed pair counts", k + 1)));
            }
            if b.upper.iter().chain(&b.lower).any(|p| !p.a.is_finite() || !p.scale.is_finite() || p.scale == 0.0) {
                return Err(FoxHError::Malformed(format!("block {}: non-finite or zero pair", k + 1)));
            }
        }
        if self.joint_n > self.joint_upper.len() {
            return Err(FoxHError::Malformed("joint_n exceeds joint upper pair count".into()));
        }
        for p in self.joint_upper.iter().chain(&self.joint_lower) {
            if p.scales.len() != d {
                return Err(FoxHError::Malformed("joint pair scale count differs from variable count".into()));
            }
            if !p.a.is_finite() || p.scales.iter().any(|s| !s.is_finite()) || p.scales.iter().all(|s| *s == 0.0) {
                return Err(FoxHError::Malformed("joint pair must be finite with a nonzero scale".into()));
            }
        }
        Ok(())
    }
}

/// One Gamma factor `Γ(c0 + Σ coef_k s_k)^{±1}`.
#[derive(Debug, Clone)]
struct Term {
    c0: f64,
    coef: Vec<f64>,
    numerator: bool,
    block: Option<usize>,
}

impl Term {
    fn re_arg(&self, c: &[f64]) -> f64 {
        self.c0 + self.coef.iter().zip(c).map(|(a, x)| a * x).sum::<f64>()
    }

    fn ln_value(&self, s: &[Complex64]) -> Complex64 {
        let z = self.coef.iter().zip(s).fold(Complex64::new(self.c0, 0.0), |acc, (a, x)| acc + a * x);
        let v = ln_gamma(z);
        if self.numerator {
            v
        } else {
            -v
        }
    }

    fn describe(&self) -> String {
        let mut out = format!("Γ({}", self.c0);
        for (k, a) in self.coef.iter().enumerate() {
            if *a != 0.0 {
                out.push_str(&format!(" {} {}·s{}", if *a < 0.0 { "-" } else { "+" }, a.abs(), k + 1));
            }
        }
        out.push(')');
        out
    }
}

fn terms(spec: &FoxHSpec) -> Vec<Term> {
    let d = spec.blocks.len();
    let unit = |k: usize, a: f64| {
        let mut v = vec![0.0; d];
        v[k] = a;
        v
    };
    let mut out = Vec::new();
    for (k, b) in spec.blocks.iter().enumerate() {
        for (j, p) in b.lower.iter().enumerate() {
            out.push(if j < b.m {
                Term { c0: p.a, coef: unit(k, p.scale), numerator: true, block: Some(k) }
            } else {
                Term { c0: 1.0 - p.a, coef: unit(k, -p.scale), numerator: false, block: Some(k) }
            });
        }
        for (j, p) in b.upper.iter().enumerate() {
            out.push(if j < b.n {
                Term { c0: 1.0 - p.a, coef: unit(k, -p.scale), numerator: true, block: Some(k) }
            } else {
                Term { c0: p.a, coef: unit(k, p.scale), numerator: false, block: Some(k) }
            });
        }
    }
    for (j, p) in spec.joint_upper.iter().enumerate() {
        out.push(if j < spec.joint_n {
            Term { c0: 1.0 - p.a, coef: p.scales.iter().map(|x| -x).collect(), numerator: true, block: None }
        } else {
            Term { c0: p.a, coef: p.scales.clone(), numerator: false, block: None }
        });
    }
    for p in &spec.joint_lower {
        out.push(Term { c0: 1.0 - p.a, coef: p.scales.iter().map(|x| -x).collect(), numerator: false, block: None });
    }
    out
}

/// Admissible region of the contour.
#[derive(Debug, Clone, PartialEq)]
pub struct StripReport {
    /// Per-variable `(left, right)` bounds from the univariate factors.
    pub bounds: Vec<(f64, f64)>,
    /// Contour real parts.
    pub anchor: Vec<f64>,
}

impl StripReport {
    pub fn contains(&self, k: usize, c: f64) -> bool {
        let (l, r) = self.bounds[k];
        c > l && c < r
    }
}

/// Validates a [`FoxHSpec`] and finds a vertical contour separating every left pole family
/// from every right pole family.
pub fn validate(spec: &FoxHSpec) -> Result<StripReport, FoxHError> {
    spec.check()?;
    let d = spec.dimension();
    let ts = terms(spec);
    let mut bounds = Vec::with_capacity(d);
    let mut anchor = Vec::with_capacity(d);
    for k in 0..d {
        let mut left = (f64::NEG_INFINITY, String::new());
        let mut right = (f64::INFINITY, String::new());
        for t in ts.iter().filter(|t| t.numerator && t.block == Some(k)) {
            let a = t.coef[k];
            let edge = -t.c0 / a;
            if a > 0.0 && edge > left.0 {
                left = (edge, t.describe());
            } else if a < 0.0 && edge < right.0 {
                right = (edge, t.describe());
            }
        }
        if left.0 >= right.0 {
            return Err(FoxHError::NoStrip(format!(
                "variable {}: left family {} reaches {} but right family {} starts at {}",
                k + 1,
                left.1,
                left.0,
                right.1,
                right.0
            )));
        }
        bounds.push((left.0, right.0));
        anchor.push(match (left.0.is_finite(), right.0.is_finite()) {
            (true, true) => 0.5 * (left.0 + right.0),
            (true, false) => left.0 + 1.0,
            (false, true) => right.0 - 1.0,
            (false, false) => 0.0,
        });
    }
    let joint: Vec<&Term> = ts.iter().filter(|t| t.numerator && t.block.is_none()).collect();
    if joint.iter().any(|t| t.re_arg(&anchor) <= 0.0) {
        anchor = joint_anchor(&ts, &bounds)?;
    }
    Ok(StripReport { bounds, anchor })
}

/// Maximizes the smallest normalized margin `Re(arg)/|coef|` over all numerator factors by
/// enumerating vertices of the linear program in `(c, t)`.
fn joint_anchor(ts: &[Term], bounds: &[(f64, f64)]) -> Result<Vec<f64>, FoxHError> {
    let d = bounds.len();
    let span =
        bounds.iter().flat_map(|(l, r)| [*l, *r]).filter(|v| v.is_finite()).fold(1.0f64, |acc, v| acc.max(v.abs()));
    let box_half = span + 10.0;
    // rows: coef·c − |coef| t ≥ −c0
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for t in ts.iter().filter(|t| t.numerator) {
        let norm = t.coef.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut row = t.coef.clone();
        row.push(-norm);
        rows.push((row, -t.c0));
    }
    for k in 0..d {
        let mut lo = vec![0.0; d + 1];
        lo[k] = 1.0;
        rows.push((lo, -box_half));
        let mut hi = vec![0.0; d + 1];
        hi[k] = -1.0;
        rows.push((hi, -box_half));
    }
    let dim = d + 1;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pick = vec![0usize; dim];
    fn next_combination(pick: &mut [usize], n: usize) -> bool {
        let k = pick.len();
        for i in (0..k).rev() {
            if pick[i] < n - k + i {
                pick[i] += 1;
                for j in i + 1..k {
                    pick[j] = pick[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    if rows.len() < dim {
        return Err(FoxHError::NoStrip("too few constraints".into()));
    }
    for (i, p) in pick.iter_mut().enumerate() {
        *p = i;
    }
    loop {
        let mut a: Vec<Vec<f64>> = pick.iter().map(|&i| rows[i].0.clone()).collect();
        let mut b: Vec<f64> = pick.iter().map(|&i| rows[i].1).collect();
        if let Some(sol) = solve_dense(&mut a, &mut b) {
            let feasible =
                rows.iter().all(|(r, rhs)| r.iter().zip(&sol).map(|(x, y)| x * y).sum::<f64>() >= rhs - 1e-9);
            if feasible && best.as_ref().is_none_or(|(t, _)| sol[d] > *t) {
                best = Some((sol[d], sol));
            }
        }
        if !next_combination(&mut pick, rows.len()) {
            break;
        }
    }
    match best {
        Some((t, sol)) if t > 1e-9 => Ok(sol[..d].to_vec()),
        _ => Err(FoxHError::NoStrip(
            "joint numerator factors cannot be separated from the univariate pole families".into(),
        )),
    }
}

fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot[col];
            for (v, p) in a[row][col..n].iter_mut().zip(&pivot[col..n]) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Contour placement and refinement budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourPolicy {
    /// Contour real parts; `None` uses the validated anchor. An explicit anchor may sit
    /// outside the canonical strip (the caller then owns the meaning of the integral) but
    /// must avoid every numerator pole.
    pub anchor: Option<Vec<f64>>,
    /// Half-length of the truncated contour; `None` picks it from the integrand decay.
    pub truncation: Option<f64>,
    /// Minimum nodes per half-line on the coarsest level.
    pub nodes: usize,
    pub rel_tol: f64,
    pub max_levels: usize,
}

impl ContourPolicy {
    pub fn for_dimension(d: usize) -> Self {
        let (rel_tol, max_levels) = match d {
            1 => (1e-6, 12),
            2 => (1e-4, 8),
            _ => (1e-3, 6),
        };
        Self { anchor: None, truncation: None, nodes: 16, rel_tol, max_levels }
    }

    pub fn with_anchor(mut self, anchor: Vec<f64>) -> Self {
        self.anchor = Some(anchor);
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoxHValue {
    pub value: f64,
    pub error: f64,
}

const MAX_TRUNCATION: f64 = 400.0;
const LN_CUTOFF: f64 = 41.446_531_673_892_82; // ln 1e18

struct Keyed {
    weights: Vec<i64>,
    unit: f64,
}

struct Table {
    weights: Vec<i64>,
    offset: i64,
    vals: Vec<Complex64>,
    ln_scale: f64,
}

impl Table {
    fn get(&self, key: i64) -> Complex64 {
        let i = key - self.offset;
        if i < 0 || i as usize >= self.vals.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.vals[i as usize]
        }
    }

    fn abs(&self) -> Table {
        Table {
            weights: self.weights.clone(),
            offset: self.offset,
            vals: self.vals.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect(),
            ln_scale: self.ln_scale,
        }
    }
}

struct Level {
    h: f64,
    n: Vec<i64>,
    block_ln: Vec<Vec<Complex64>>,
    tables: Vec<Table>,
}

/// Reusable evaluator; lattice tables are built lazily per refinement level and shared
/// across arguments.
pub struct FoxHEvaluator {
    terms: Vec<Term>,
    dim: usize,
    anchor: Vec<f64>,
    policy: ContourPolicy,
    truncation: Vec<f64>,
    h0: f64,
    keyed: Vec<(usize, Keyed)>,
    direct: Vec<usize>,
    levels: Vec<OnceLock<Level>>,
}

impl std::fmt::Debug for FoxHEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FoxHEvaluator")
            .field("dim", &self.dim)
            .field("anchor", &self.anchor)
            .field("truncation", &self.truncation)
            .field("h0", &self.h0)
            .finish()
    }
}

impl FoxHEvaluator {
    pub fn new(spec: &FoxHSpec, policy: ContourPolicy) -> Result<Self, FoxHError> {
        spec.check()?;
        let dim = spec.dimension();
        let ts = terms(spec);
        let anchor = match &policy.anchor {
            Some(a) => {
                if a.len() != dim || a.iter().any(|v| !v.is_finite()) {
                    return Err(FoxHError::InvalidArgument("anchor length or value".into()));
                }
                for t in ts.iter().filter(|t| t.numerator) {
                    let r = t.re_arg(a);
                    if r <= 0.0 && pole_distance(r) < 1e-6 {
                        return Err(FoxHError::InvalidArgument(format!("anchor lies on a pole of {}", t.describe())));
                    }
                }
                a.clone()
            }
            None => validate(spec)?.anchor,
        };
        if policy.nodes == 0 || policy.max_levels == 0 || !(policy.rel_tol > 0.0) {
            return Err(FoxHError::InvalidArgument("policy budget must be positive".into()));
        }

        let mut keyed = Vec::new();
        let mut direct = Vec::new();
        for (i, t) in ts.iter().enumerate().filter(|(_, t)| t.block.is_none()) {
            match integer_weights(&t.coef) {
                Some(k) => keyed.push((i, k)),
                None => direct.push(i),
            }
        }

        let truncation: Vec<f64> = match policy.truncation {
            Some(t) if t > 0.0 => vec![t; dim],
            Some(_) => return Err(FoxHError::InvalidArgument("truncation must be positive".into())),
            None => (0..dim).map(|k| decay_length(&ts, &anchor, k)).collect(),
        };

        let mut delta = f64::INFINITY;
        for t in ts.iter().filter(|t| t.numerator) {
            let dist = pole_distance(t.re_arg(&anchor));
            for a in t.coef.iter().filter(|a| **a != 0.0) {
                delta = delta.min(dist / a.abs());
            }
        }
        let mut h0 = 0.5f64;
        if delta.is_finite() {
            h0 = h0.min(2.0 * PI * delta / ((1.0 / policy.rel_tol).ln() + 3.0));
        }
        for t in &truncation {
            h0 = h0.min(t / policy.nodes as f64);
        }

        let levels = (0..policy.max_levels).map(|_| OnceLock::new()).collect();
        Ok(Self { terms: ts, dim, anchor, policy, truncation, h0, keyed, direct, levels })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    fn level(&self, l: usize) -> &Level {
        self.levels[l].get_or_init(|| {
            let h = self.h0 / (1u64 << l) as f64;
            let n: Vec<i64> = self.truncation.iter().map(|t| (t / h).ceil() as i64).collect();
            let mut block_ln = Vec::with_capacity(self.dim);
            for k in 0..self.dim {
                let row: Vec<Complex64> = (-n[k]..=n[k])
                    .map(|j| {
                        let mut s = vec![Complex64::new(0.0, 0.0); self.dim];
                        s[k] = Complex64::new(self.anchor[k], h * j as f64);
                        self.terms.iter().filter(|t| t.block == Some(k)).map(|t| t.ln_value(&s)).sum()
                    })
                    .collect();
                block_ln.push(row);
            }
            let mut tables = Vec::with_capacity(self.keyed.len());
            for (i, kw) in &self.keyed {
                let t = &self.terms[*i];
                let span: i64 = kw.weights.iter().zip(&n).map(|(w, nk)| w.abs() * nk).sum();
                let re = t.re_arg(&self.anchor);
                let lns: Vec<Complex64> = (-span..=span)
                    .map(|key| {
                        let z = Complex64::new(re, h * kw.unit * key as f64);
                        let v = ln_gamma(z);
                        if t.numerator {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect();
                let (vals, ln_scale) = normalize_exp(&lns);
                tables.push(Table { weights: kw.weights.clone(), offset: -span, vals, ln_scale });
            }
            Level { h, n, block_ln, tables }
        })
    }

    /// Evaluates at `x` (one positive argument per variable).
    pub fn eval(&self, x: &[f64]) -> Result<FoxHValue, FoxHError> {
        if x.len() != self.dim {
            return Err(FoxHError::InvalidArgument(format!("expected {} arguments", self.dim)));
        }
        if x.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(FoxHError::InvalidArgument("arguments must be positive and finite".into()));
        }
        let ln_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let mut prev: Option<f64> = None;
        let mut last_err = f64::INFINITY;
        let mut last = 0.0;
        for l in 0..self.policy.max_levels {
            let (v, l1) = self.lattice_sum(self.level(l), &ln_x);
            if !v.is_finite() {
                return Err(FoxHError::NotConverged { estimate: v, error: f64::INFINITY });
            }
            if let Some(p) = prev {
                let err = (v - p).abs();
                if err <= self.policy.rel_tol * v.abs() || err <= 1e-13 * l1 {
                    return Ok(FoxHValue { value: v, error: err.max(f64::EPSILON * l1) });
                }
                last_err = err;
            }
            prev = Some(v);
            last = v;
        }
        Err(FoxHError::NotConverged { estimate: last, error: last_err })
    }

    /// Returns the trapezoid value and the matching sum of absolute values.
    fn lattice_sum(&self, lev: &Level, ln_x: &[f64]) -> (f64, f64) {
        let mut vars = Vec::with_capacity(self.dim);
        for (k, &lx) in ln_x.iter().enumerate().take(self.dim) {
            let lns: Vec<Complex64> = lev.block_ln[k]
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let s = Complex64::new(self.anchor[k], lev.h * (i as i64 - lev.n[k]) as f64);
                    v - s * lx
                })
                .collect();
            let (vals, ln_scale) = normalize_exp(&lns);
            vars.push(Var { n: lev.n[k], vals, ln_scale });
        }
        let front = (lev.h / (2.0 * PI)).powi(self.dim as i32);
        let (sum, l1) = if self.direct.is_empty() {
            let tables: Vec<Table> = lev.tables.iter().map(clone_table).collect();
            let abs_vars: Vec<Var> = vars.iter().map(Var::abs).collect();
            let abs_tables: Vec<Table> = lev.tables.iter().map(Table::abs).collect();
            let s = contract(vars.into_iter().map(Some).collect(), tables);
            let a = contract(abs_vars.into_iter().map(Some).collect(), abs_tables);
            (s.0.re * s.1.exp(), a.0.re * a.1.exp())
        } else {
            self.direct_sum(lev, &vars)
        };
        (front * sum, front * l1)
    }

    /// Visits every lattice point; used when a joint factor has incommensurate scales.
    fn direct_sum(&self, lev: &Level, vars: &[Var]) -> (f64, f64) {
        let d = self.dim;
        let ln_base: f64 =
            vars.iter().map(|v| v.ln_scale).sum::<f64>() + lev.tables.iter().map(|t| t.ln_scale).sum::<f64>();
        let mut idx: Vec<i64> = vars.iter().map(|v| -v.n).collect();
        let mut total = Complex64::new(0.0, 0.0);
        let mut abs_total = 0.0;
        loop {
            let mut v = Complex64::new(1.0, 0.0);
            for k in 0..d {
                v *= vars[k].vals[(idx[k] + vars[k].n) as usize];
            }
            for t in &lev.tables {
                let key: i64 = t.weights.iter().zip(&idx).map(|(w, j)| w * j).sum();
                v *= t.get(key);
            }
            if v != Complex64::new(0.0, 0.0) {
                let s: Vec<Complex64> = (0..d).map(|k| Complex64::new(self.anchor[k], lev.h * idx[k] as f64)).collect();
                let ln_direct: Complex64 = self.direct.iter().map(|&i| self.terms[i].ln_value(&s)).sum();
                v *= ln_direct.exp();
                total += v;
                abs_total += v.norm();
            }
            let mut k = 0;
            loop {
                if k == d {
                    let scale = ln_base.exp();
                    return (total.re * scale, abs_total * scale);
                }
                idx[k] += 1;
                if idx[k] <= vars[k].n {
                    break;
                }
                idx[k] = -vars[k].n;
                k += 1;
            }
        }
    }
}

fn clone_table(t: &Table) -> Table {
    Table { weights: t.weights.clone(), offset: t.offset, vals: t.vals.clone(), ln_scale: t.ln_scale }
}

fn integer_weights(coef: &[f64]) -> Option<Keyed> {
    let unit = coef.iter().filter(|a| **a != 0.0).fold(f64::INFINITY, |m, a| m.min(a.abs()));
    let mut weights = Vec::with_capacity(coef.len());
    for a in coef {
        let r = a / unit;
        if (r - r.round()).abs() > 1e-9 || r.abs() > 64.0 {
            return None;
        }
        weights.push(r.round() as i64);
    }
    Some(Keyed { weights, unit })
}

/// Length beyond which the variable-`k` factor (with the worst-case growth of the joint
/// denominators) has dropped 18 orders of magnitude below its peak.
fn decay_length(ts: &[Term], anchor: &[f64], k: usize) -> f64 {
    let growth: f64 = ts.iter().filter(|t| t.block.is_none() && !t.numerator).map(|t| 0.5 * PI * t.coef[k].abs()).sum();
    let f = |t: f64| {
        let mut s: Vec<Complex64> = anchor.iter().map(|c| Complex64::new(*c, 0.0)).collect();
        s[k] = Complex64::new(anchor[k], t);
        ts.iter().filter(|x| x.block == Some(k)).map(|x| x.ln_value(&s).re).sum::<f64>() + growth * t
    };
    let mut peak = f64::NEG_INFINITY;
    let mut below = 0;
    let mut t = 0.0;
    while t < MAX_TRUNCATION {
        let v = f(t);
        peak = peak.max(v);
        if v < peak - LN_CUTOFF {
            below += 1;
            if below >= 8 {
                return t;
            }
        } else {
            below = 0;
        }
        t += 0.25;
    }
    MAX_TRUNCATION
}

fn normalize_exp(lns: &[Complex64]) -> (Vec<Complex64>, f64) {
    let m = lns.iter().map(|v| v.re).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return (vec![Complex64::new(0.0, 0.0); lns.len()], 0.0);
    }
    let vals = lns.iter().map(|v| if v.re.is_finite() { (v - m).exp() } else { Complex64::new(0.0, 0.0) }).collect();
    (vals, m)
}

struct Var {
    n: i64,
    vals: Vec<Complex64>,
    ln_scale: f64,
}

impl Var {
    fn abs(&self) -> Var {
        Var {
            n: self.n,
            vals: self.vals.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect(),
            ln_scale: self.ln_scale,
        }
    }
}

fn key_range(weights: &[i64], vars: &[Option<Var>]) -> (i64, i64) {
    let span: i64 = weights.iter().zip(vars).filter_map(|(w, v)| v.as_ref().map(|v| w.abs() * v.n)).sum();
    (-span, span)
}

/// Sums `Π_k vars_k[j_k] Π_q tables_q[w_q · j]` over the lattice by eliminating variables
/// touched by at most one table. Returns `(mantissa, ln scale)`.
fn contract(mut vars: Vec<Option<Var>>, mut tables: Vec<Table>) -> (Complex64, f64) {
    let mut scalar = Complex64::new(1.0, 0.0);
    let mut ln_scale = 0.0;
    loop {
        // Merge tables with equal or opposite weights.
        let mut i = 0;
        while i < tables.len() {
            let mut j = i + 1;
            while j < tables.len() {
                let sign = if tables[j].weights == tables[i].weights {
                    1
                } else if tables[j].weights.iter().zip(&tables[i].weights).all(|(a, b)| *a == -*b) {
                    -1
                } else {
                    0
                };
                if sign != 0 {
                    let other = tables.swap_remove(j);
                    let (lo, hi) = key_range(&tables[i].weights, &vars);
                    let vals: Vec<Complex64> =
                        (lo..=hi).map(|key| tables[i].get(key) * other.get(sign * key)).collect();
                    let (vals, ln) = renormalize(vals);
                    let t = &mut tables[i];
                    t.ln_scale += other.ln_scale + ln;
                    t.vals = vals;
                    t.offset = lo;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        // Constant tables fold into the scalar.
        let mut i = 0;
        while i < tables.len() {
            if tables[i].weights.iter().zip(&vars).all(|(w, v)| *w == 0 || v.is_none()) {
                let t = tables.swap_remove(i);
                absorb(t.get(0), t.ln_scale, &mut scalar, &mut ln_scale);
            } else {
                i += 1;
            }
        }
        let touching = |k: usize, tables: &[Table]| tables.iter().filter(|t| t.weights[k] != 0).count();
        let candidate = (0..vars.len())
            .filter(|&k| vars[k].is_some())
            .min_by_key(|&k| touching(k, &tables))
            .filter(|&k| touching(k, &tables) <= 1);
        let Some(v) = candidate else { break };
        let var = vars[v].take().expect("alive variable");
        match tables.iter().position(|t| t.weights[v] != 0) {
            None => {
                let s: Complex64 = var.vals.iter().sum();
                absorb(s, var.ln_scale, &mut scalar, &mut ln_scale);
            }
            Some(q) => {
                let t = tables.swap_remove(q);
                let w = t.weights[v];
                let mut weights = t.weights.clone();
                weights[v] = 0;
                let (lo, hi) = key_range(&weights, &vars);
                let vals: Vec<Complex64> = (lo..=hi)
                    .map(|r| var.vals.iter().enumerate().map(|(i, e)| e * t.get(w * (i as i64 - var.n) + r)).sum())
                    .collect();
                let (vals, ln) = renormalize(vals);
                tables.push(Table { weights, offset: lo, vals, ln_scale: t.ln_scale + var.ln_scale + ln });
            }
        }
    }
    let alive: Vec<usize> = (0..vars.len()).filter(|&k| vars[k].is_some()).collect();
    if alive.is_empty() {
        return (scalar, ln_scale);
    }
    // Remaining variables are all coupled through two or more tables.
    let vs: Vec<&Var> = alive.iter().map(|&k| vars[k].as_ref().expect("alive")).collect();
    let mut idx: Vec<i64> = vs.iter().map(|v| -v.n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    'outer: loop {
        let mut v = Complex64::new(1.0, 0.0);
        for (a, var) in vs.iter().enumerate() {
            v *= var.vals[(idx[a] + var.n) as usize];
        }
        for t in &tables {
            let key: i64 = alive.iter().zip(&idx).map(|(&k, j)| t.weights[k] * j).sum();
            v *= t.get(key);
        }
        total += v;
        let mut a = 0;
        loop {
            if a == vs.len() {
                break 'outer;
            }
            idx[a] += 1;
            if idx[a] <= vs[a].n {
                break;
            }
            idx[a] = -vs[a].n;
            a += 1;
        }
    }
    let ln_rest: f64 = vs.iter().map(|v| v.ln_scale).sum::<f64>() + tables.iter().map(|t| t.ln_scale).sum::<f64>();
    absorb(total, ln_rest, &mut scalar, &mut ln_scale);
    (scalar, ln_scale)
}

fn absorb(z: Complex64, ln: f64, scalar: &mut Complex64, ln_scale: &mut f64) {
    *scalar *= z;
    *ln_scale += ln;
    let n = scalar.norm();
    if n > 0.0 && n.is_finite() {
        *scalar /= n;
        *ln_scale += n.ln();
    }
}

fn renormalize(vals: Vec<Complex64>) -> (Vec<Complex64>, f64) {
    let m = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if m == 0.0 || !m.is_finite() {
        return (vals, 0.0);
    }
    (vals.into_iter().map(|v| v / m).collect(), m.ln())
}

/// Deepest anchor bucket per dimension; bucket `b` sits at `2^{−b}` of the way from the
/// default anchor to the strip edge.
fn max_bucket(dim: usize) -> i32 {
    match dim {
        1 => 14,
        2 => 4,
        _ => 2,
    }
}

/// Shifts `0.25 · 2^{b/2}`, `b = 1..=UNBOUNDED_STEPS`, tried toward an unbounded strip edge.
const UNBOUNDED_STEPS: i32 = 28;

fn unbounded_shift(b: i32) -> f64 {
    0.25 * 2f64.powf(f64::from(b.abs()) / 2.0)
}

/// Evaluator that places each contour near the saddle of `|Θ(s) x^{−s}|` on the real axis,
/// choosing from a fixed ladder of anchors between the default and each strip edge; a
/// mid-strip contour cancels catastrophically for arguments far from one. One evaluator is
/// cached per ladder position.
pub struct AdaptiveEvaluator {
    spec: FoxHSpec,
    policy: ContourPolicy,
    report: StripReport,
    joint: Vec<Term>,
    all: Vec<Term>,
    cache: Mutex<HashMap<Vec<i32>, EvaluatorSlot>>,
}

type EvaluatorSlot = Arc<OnceLock<Result<FoxHEvaluator, FoxHError>>>;

impl std::fmt::Debug for AdaptiveEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdaptiveEvaluator").field("report", &self.report).finish()
    }
}

impl AdaptiveEvaluator {
    /// `policy.anchor` is ignored; anchors come from the validated strip.
    pub fn new(spec: &FoxHSpec, policy: ContourPolicy) -> Result<Self, FoxHError> {
        let report = validate(spec)?;
        let all = terms(spec);
        let joint = all.iter().filter(|t| t.numerator && t.block.is_none()).cloned().collect();
        let policy = ContourPolicy { anchor: None, ..policy };
        Ok(Self { spec: spec.clone(), policy, report, joint, all, cache: Mutex::new(HashMap::new()) })
    }

    pub fn report(&self) -> &StripReport {
        &self.report
    }

    /// Anchor of variable `k` at ladder position `b`: positive toward the left edge, negative
    /// toward the right edge.
    fn anchor_value(&self, k: usize, b: i32) -> f64 {
        let c0 = self.report.anchor[k];
        let (lo, hi) = self.report.bounds[k];
        let frac = 0.5f64.powi(b.abs());
        match b.signum() {
            1 if lo.is_infinite() => c0 - unbounded_shift(b),
            -1 if hi.is_infinite() => c0 + unbounded_shift(b),
            1 => lo + (c0 - lo) * frac,
            -1 => hi - (hi - c0) * frac,
            _ => c0,
        }
    }

    fn anchor_for(&self, key: &[i32]) -> Vec<f64> {
        key.iter().enumerate().map(|(k, &b)| self.anchor_value(k, b)).collect()
    }

    /// `ln|Θ(c) x^{−c}|`, the larger of the values on the real axis and a quarter step above
    /// it so isolated zeros of `Θ` do not look like saddles.
    fn log_height(&self, c: &[f64], x: &[f64]) -> f64 {
        let lx: f64 = c.iter().zip(x).map(|(a, v)| a * v.ln()).sum();
        [0.0, 0.25]
            .iter()
            .map(|&im| {
                let z: Vec<Complex64> = c.iter().map(|&a| Complex64::new(a, im)).collect();
                self.all.iter().map(|t| t.ln_value(&z).re).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
            - lx
    }

    /// Ladder position per variable, each chosen with the others at their defaults.
    pub fn bucket(&self, x: &[f64]) -> Vec<i32> {
        let cap = max_bucket(x.len());
        let key: Vec<i32> = (0..x.len())
            .map(|k| {
                let c0 = self.report.anchor[k];
                let (lo, hi) = self.report.bounds[k];
                let steps = |edge: f64, room: f64| {
                    if edge.is_infinite() {
                        UNBOUNDED_STEPS
                    } else if room > 0.0 {
                        cap
                    } else {
                        0
                    }
                };
                let (left, right) = (steps(lo, c0 - lo), steps(hi, hi - c0));
                let mut c = self.report.anchor.clone();
                let mut best = (f64::INFINITY, 0i32);
                for b in -right..=left {
                    c[k] = self.anchor_value(k, b);
                    let g = self.log_height(&c, x);
                    if g.is_finite() && (g < best.0 || (g == best.0 && b.abs() < best.1.abs())) {
                        best = (g, b);
                    }
                }
                best.1
            })
            .collect();
        let anchor = self.anchor_for(&key);
        if self.joint.iter().all(|t| t.re_arg(&anchor) > 0.0) {
            key
        } else {
            vec![0; x.len()]
        }
    }

    fn evaluator(&self, key: Vec<i32>) -> Result<Arc<OnceLock<Result<FoxHEvaluator, FoxHError>>>, FoxHError> {
        let mut cache = self.cache.lock().map_err(|_| FoxHError::Malformed("evaluator cache poisoned".into()))?;
        Ok(cache.entry(key).or_default().clone())
    }

    pub fn eval(&self, x: &[f64]) -> Result<FoxHValue, FoxHError> {
        if x.len() != self.report.anchor.len() {
            return Err(FoxHError::InvalidArgument(format!("expected {} arguments", self.report.anchor.len())));
        }
        if x.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(FoxHError::InvalidArgument("arguments must be positive and finite".into()));
        }
        let key = self.bucket(x);
        let anchor = self.anchor_for(&key);
        let cell = self.evaluator(key)?;
        let ev = cell
            .get_or_init(|| FoxHEvaluator::new(&self.spec, self.policy.clone().with_anchor(anchor)))
            .as_ref()
            .map_err(Clone::clone)?;
        ev.eval(x)
    }
}

pub fn eval_1d(spec: &FoxHSpec, policy: ContourPolicy, x: f64) -> Result<FoxHValue, FoxHError> {
    expect_dim(spec, 1)?;
    FoxHEvaluator::new(spec, policy)?.eval(&[x])
}

pub fn eval_2d(spec: &FoxHSpec, policy: ContourPolicy, x1: f64, x2: f64) -> Result<FoxHValue, FoxHError> {
    expect_dim(spec, 2)?;
    FoxHEvaluator::new(spec, policy)?.eval(&[x1, x2])
}

pub fn eval_3d(spec: &FoxHSpec, policy: ContourPolicy, x1: f64, x2: f64, x3: f64) -> Result<FoxHValue, FoxHError> {
    expect_dim(spec, 3)?;
    FoxHEvaluator::new(spec, policy)?.eval(&[x1, x2, x3])
}

fn expect_dim(spec: &FoxHSpec, d: usize) -> Result<(), FoxHError> {
    if spec.dimension() != d {
        return Err(FoxHError::Malformed(format!("expected {d} variable(s), got {}", spec.dimension())));
    }
    Ok(())
}

/// Which pole family a residue series is taken over: `Left` for the small-argument
/// expansion, `Right` for the large-argument one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoleSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoleSelector {
    pub side: PoleSide,
    pub count: usize,
}

impl PoleSelector {
    pub const fn left(count: usize) -> Self {
        Self { side: PoleSide::Left, count }
    }

    pub const fn right(count: usize) -> Self {
        Self { side: PoleSide::Right, count }
    }
}

/// `coefficient · Π_k x_k^{exponents_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueTerm {
    pub coefficient: f64,
    pub exponents: Vec<f64>,
}

impl ResidueTerm {
    pub fn at(&self, x: &[f64]) -> f64 {
        self.coefficient * self.exponents.iter().zip(x).map(|(e, v)| v.powf(*e)).product::<f64>()
    }
}

struct Pole {
    s: f64,
    term: usize,
    order: u32,
}

fn candidate_poles(ts: &[Term], k: usize, d: usize, side: PoleSide, count: usize) -> Vec<Pole> {
    let mut poles = Vec::new();
    for (i, t) in ts.iter().enumerate() {
        let mine = t.block == Some(k) || (d == 1 && t.block.is_none());
        if !t.numerator || !mine {
            continue;
        }
        let a = t.coef[k];
        if (side == PoleSide::Left && a > 0.0) || (side == PoleSide::Right && a < 0.0) {
            for l in 0..=count as u32 {
                poles.push(Pole { s: (-(l as f64) - t.c0) / a, term: i, order: l });
            }
        }
    }
    match side {
        PoleSide::Left => poles.sort_by(|p, q| q.s.total_cmp(&p.s)),
        PoleSide::Right => poles.sort_by(|p, q| p.s.total_cmp(&q.s)),
    }
    poles
}

fn same_pole(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

/// Leading terms of the residue series, `H(x) ≈ Σ c x^e`. Multivariate specs take iterated
/// residues in the univariate factors with the joint factors evaluated at the pole.
pub fn residue_expansion(spec: &FoxHSpec, selectors: &[PoleSelector]) -> Result<Vec<ResidueTerm>, FoxHError> {
    spec.check()?;
    let d = spec.dimension();
    if selectors.len() != d {
        return Err(FoxHError::InvalidArgument("one pole selector per variable".into()));
    }
    let ts = terms(spec);
    let mut per_var: Vec<Vec<Pole>> = Vec::with_capacity(d);
    for (k, sel) in selectors.iter().enumerate() {
        let cands = candidate_poles(&ts, k, d, sel.side, sel.count);
        let mut chosen: Vec<Pole> = Vec::new();
        for p in cands.iter() {
            if chosen.len() == sel.count {
                break;
            }
            if chosen.iter().any(|c| same_pole(c.s, p.s)) {
                return Err(FoxHError::RepeatedPole(p.s));
            }
            chosen.push(Pole { s: p.s, term: p.term, order: p.order });
        }
        for c in &chosen {
            if cands.iter().filter(|p| same_pole(p.s, c.s)).count() > 1 {
                return Err(FoxHError::RepeatedPole(c.s));
            }
        }
        per_var.push(chosen);
    }
    let mut out = Vec::new();
    let mut pick = vec![0usize; d];
    if per_var.iter().any(|v| v.is_empty()) {
        return Ok(out);
    }
    loop {
        let point: Vec<f64> = (0..d).map(|k| per_var[k][pick[k]].s).collect();
        let mut coef = 1.0;
        let mut used = Vec::with_capacity(d);
        for k in 0..d {
            let p = &per_var[k][pick[k]];
            let a = ts[p.term].coef[k].abs();
            let fact: f64 = (1..=p.order).map(f64::from).product();
            coef *= if p.order.is_multiple_of(2) { 1.0 } else { -1.0 } / (fact * a);
            used.push(p.term);
        }
        for (i, t) in ts.iter().enumerate() {
            if used.contains(&i) {
                continue;
            }
            let z = t.re_arg(&point);
            let at_pole = z <= 0.0 && (z - z.round()).abs() < 1e-12;
            if at_pole {
                if t.numerator {
                    return Err(FoxHError::RepeatedPole(point[0]));
                }
                coef = 0.0;
                continue;
            }
            let g = ln_gamma(Complex64::new(z, 0.0)).exp().re;
            coef *= if t.numerator { g } else { 1.0 / g };
        }
        out.push(ResidueTerm { coefficient: coef, exponents: point.iter().map(|s| -s).collect() });
        let mut k = 0;
        loop {
            if k == d {
                return Ok(out);
            }
            pick[k] += 1;
            if pick[k] < per_var[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

/// Circle in one contour variable enclosing a cluster of poles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleCircle {
    pub center: f64,
    pub radius: f64,
    pub side: PoleSide,
}

/// Sum of the residues of `Θ(s) Π x_k^{-s_k}` inside the given circles (one per variable),
/// signed as in the residue series. Handles coincident poles, where the series of
/// [`residue_expansion`] breaks down.
pub fn pole_cluster_sum(spec: &FoxHSpec, circles: &[PoleCircle], x: &[f64], nodes: usize) -> Result<f64, FoxHError> {
    spec.check()?;
    let d = spec.dimension();
    if circles.len() != d || x.len() != d || nodes < 4 {
        return Err(FoxHError::InvalidArgument("one circle and argument per variable, nodes ≥ 4".into()));
    }
    let ts = terms(spec);
    let ln_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let sign: f64 = circles.iter().map(|c| if c.side == PoleSide::Left { 1.0 } else { -1.0 }).product();
    let mut idx = vec![0usize; d];
    let mut total = Complex64::new(0.0, 0.0);
    loop {
        let mut s = Vec::with_capacity(d);
        let mut jac = Complex64::new(1.0, 0.0);
        for k in 0..d {
            let theta = 2.0 * PI * (idx[k] as f64 + 0.5) / nodes as f64;
            let w = Complex64::from_polar(circles[k].radius, theta);
            s.push(Complex64::new(circles[k].center, 0.0) + w);
            jac *= w;
        }
        let ln_val: Complex64 = ts.iter().map(|t| t.ln_value(&s)).sum::<Complex64>()
            - s.iter().zip(&ln_x).map(|(sk, lx)| sk * lx).sum::<Complex64>();
        total += ln_val.exp() * jac;
        let mut k = 0;
        loop {
            if k == d {
                return Ok(sign * total.re / (nodes as f64).powi(d as i32));
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Circle around the pole cluster nearest the contour in variable `k` (block factors only),
/// with the number of poles it holds. The radius is half the gap to the next distinct pole.
pub fn leading_cluster(spec: &FoxHSpec, k: usize, side: PoleSide) -> Result<(PoleCircle, usize), FoxHError> {
    spec.check()?;
    let d = spec.dimension();
    if k >= d {
        return Err(FoxHError::InvalidArgument(format!("variable {k} out of range")));
    }
    let ts = terms(spec);
    let cands = candidate_poles(&ts, k, d, side, 2);
    let Some(first) = cands.first() else {
        return Err(FoxHError::InvalidArgument("no poles on the requested side".into()));
    };
    let lead = first.s;
    let tight = |s: f64| (s - lead).abs() <= 1e-6 * lead.abs().max(1.0);
    let multiplicity = cands.iter().filter(|p| tight(p.s)).count();
    let gap = cands.iter().filter(|p| !tight(p.s)).map(|p| (p.s - lead).abs()).fold(f64::INFINITY, f64::min);
    let radius = if gap.is_finite() { 0.5 * gap } else { 0.5 };
    Ok((PoleCircle { center: lead, radius, side }, multiplicity))
}

/// Density template `ψ x^{φ−1} H[ζ x]` with a univariate block.
#[derive(Debug, Clone, PartialEq)]
pub struct MellinForm {
    pub psi: f64,
    pub phi: f64,
    pub zeta: f64,
    pub block: Block,
}

impl MellinForm {
    /// Same density written with `φ = 0`.
    pub fn normalized(&self) -> Self {
        if self.phi == 0.0 {
            return self.clone();
        }
        Self {
            psi: self.psi * self.zeta.powf(-self.phi),
            phi: 0.0,
            zeta: self.zeta,
            block: self.block.shifted(self.phi),
        }
    }

    /// Density of the product of independent variables with the given densities.
    pub fn product(forms: &[MellinForm]) -> Self {
        let norm: Vec<MellinForm> = forms.iter().map(MellinForm::normalized).collect();
        let blocks: Vec<Block> = norm.iter().map(|f| f.block.clone()).collect();
        Self {
            psi: norm.iter().map(|f| f.psi).product(),
            phi: 0.0,
            zeta: norm.iter().map(|f| f.zeta).product(),
            block: Block::product(&blocks),
        }
    }

    /// Strip of the kernel.
    pub fn strip(&self) -> Result<(f64, f64), FoxHError> {
        Ok(validate(&FoxHSpec::univariate(self.block.clone()))?.bounds[0])
    }

    /// `Θ(s)` at a real point.
    pub fn kernel(&self, s: f64) -> f64 {
        let ts = terms(&FoxHSpec::univariate(self.block.clone()));
        let z = [Complex64::new(s, 0.0)];
        ts.iter().map(|t| t.ln_value(&z)).sum::<Complex64>().exp().re
    }
}

/// `E[X^r] = ψ ζ^{−r−φ} Θ(r + φ)` for a density in template form.
pub fn mellin_moment(form: &MellinForm, r: f64) -> Result<f64, FoxHError> {
    let (lo, hi) = form.strip()?;
    let s = r + form.phi;
    if !(s > lo && s < hi) {
        return Err(FoxHError::OutOfStrip(r));
    }
    Ok(form.psi * form.zeta.powf(-s) * form.kernel(s))
}

/// Density `ψ x^{-1} H[ζ x]` with cached evaluators for the PDF, CDF and CCDF.
pub struct HDensity {
    form: MellinForm,
    pdf: OnceLock<Result<AdaptiveEvaluator, FoxHError>>,
    cdf: OnceLock<Result<AdaptiveEvaluator, FoxHError>>,
    ccdf: OnceLock<Result<AdaptiveEvaluator, FoxHError>>,
    rel_tol: f64,
}

impl std::fmt::Debug for HDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HDensity").field("form", &self.form).finish()
    }
}

impl HDensity {
    pub fn new(form: &MellinForm) -> Self {
        Self::with_rel_tol(form, ContourPolicy::for_dimension(1).rel_tol)
    }

    pub fn with_rel_tol(form: &MellinForm, rel_tol: f64) -> Self {
        Self { form: form.normalized(), pdf: OnceLock::new(), cdf: OnceLock::new(), ccdf: OnceLock::new(), rel_tol }
    }

    pub fn form(&self) -> &MellinForm {
        &self.form
    }

    fn evaluator<'a>(
        &self,
        cell: &'a OnceLock<Result<AdaptiveEvaluator, FoxHError>>,
        block: impl FnOnce() -> Block,
    ) -> Result<&'a AdaptiveEvaluator, FoxHError> {
        cell.get_or_init(|| {
            AdaptiveEvaluator::new(
                &FoxHSpec::univariate(block()),
                ContourPolicy::for_dimension(1).with_rel_tol(self.rel_tol),
            )
        })
        .as_ref()
        .map_err(Clone::clone)
    }

    fn check(x: f64) -> Result<(), FoxHError> {
        if x.is_nan() || x < 0.0 {
            return Err(FoxHError::InvalidArgument(format!("x = {x}")));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> Result<f64, FoxHError> {
        Self::check(x)?;
        let z = self.form.zeta * x;
        if z == 0.0 || z.is_infinite() {
            return Ok(0.0);
        }
        let ev = self.evaluator(&self.pdf, || self.form.block.clone())?;
        Ok(self.form.psi / x * ev.eval(&[z])?.value)
    }

    /// `Pr(X ≤ x)` from the left-tail contour.
    pub fn cdf_raw(&self, x: f64) -> Result<f64, FoxHError> {
        let ev = self.evaluator(&self.cdf, || self.form.block.cdf())?;
        Ok(self.form.psi * ev.eval(&[self.form.zeta * x])?.value)
    }

    /// `Pr(X > x)` from the right-tail contour.
    pub fn ccdf_raw(&self, x: f64) -> Result<f64, FoxHError> {
        let ev = self.evaluator(&self.ccdf, || self.form.block.ccdf())?;
        Ok(self.form.psi * ev.eval(&[self.form.zeta * x])?.value)
    }

    /// `Pr(X ≤ x)`, switching to the complement above the median.
    pub fn cdf(&self, x: f64) -> Result<f64, FoxHError> {
        Self::check(x)?;
        let z = self.form.zeta * x;
        if z == 0.0 {
            return Ok(0.0);
        }
        if z.is_infinite() {
            return Ok(1.0);
        }
        let f = self.cdf_raw(x)?;
        let v = if f > 0.5 { 1.0 - self.ccdf_raw(x)? } else { f };
        Ok(v.clamp(0.0, 1.0))
    }

    pub fn ccdf(&self, x: f64) -> Result<f64, FoxHError> {
        Ok(1.0 - self.cdf(x)?)
    }

    pub fn moment(&self, r: f64) -> Result<f64, FoxHError> {
        mellin_moment(&self.form, r)
    }

    /// Density of `γ = ḡ X²`.
    pub fn snr_pdf(&self, gamma: f64, gbar: f64) -> Result<f64, FoxHError> {
        if !(gbar > 0.0) {
            return Err(FoxHError::InvalidArgument(format!("gbar = {gbar}")));
        }
        Self::check(gamma)?;
        if gamma == 0.0 {
            return Ok(0.0);
        }
        let h = (gamma / gbar).sqrt();
        Ok(self.pdf(h)? * h / (2.0 * gamma))
    }

    /// `Pr(ḡ X² ≤ γ)`.
    pub fn snr_cdf(&self, gamma: f64, gbar: f64) -> Result<f64, FoxHError> {
        if !(gbar > 0.0) {
            return Err(FoxHError::InvalidArgument(format!("gbar = {gbar}")));
        }
        Self::check(gamma)?;
        self.cdf((gamma / gbar).sqrt())
    }
}
