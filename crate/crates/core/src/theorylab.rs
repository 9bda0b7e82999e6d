//! Brute-force checks of the bias bounds behind uncertainty-weighted
//! transfer, on finite instances where every expectation is an exact sum.
//!
//! The check functions are generic over [`FieldScalar`], so the same code
//! runs on `f64` for randomized sweeps and on `Ratio<i128>` when an identity
//! has to hold exactly. Randomness only picks instances.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::ndgrad::RngStream;
use crate::scalar::FieldScalar;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("instance vectors have different lengths")]
    Length,
    #[error("instance has no support points")]
    Empty,
    #[error("negative entry in {0}")]
    Negative(&'static str),
    #[error("source probability is zero at point {0} where the target has mass")]
    Unsupported(usize),
    #[error("{0} does not sum to one")]
    NotNormalized(&'static str),
    #[error("variance decomposition needs at least two samples")]
    TooFewSamples,
    #[error("discriminator probability at point {0} outside [1/(N+1), 1]")]
    OutOfRange(usize),
    #[error("true discriminator output is not constant, domains are not aligned")]
    NotAligned,
    #[error("domain-change factor {0} exceeds 2")]
    Factor(String),
}

fn sum<T: FieldScalar>(it: impl IntoIterator<Item = T>) -> T {
    it.into_iter().fold(T::zero(), |a, b| a + b)
}

fn count<T: FieldScalar>(n: usize) -> T {
    (0..n).fold(T::zero(), |a, _| a + T::one())
}

fn square<T: FieldScalar>(x: T) -> T {
    x * x
}

/// Finite support with source and target masses, a per-point loss and an
/// estimated transferability.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteInstance<T> {
    pub p_s: Vec<T>,
    pub p_t: Vec<T>,
    pub loss: Vec<T>,
    pub w_hat: Vec<T>,
}

impl<T: FieldScalar> DiscreteInstance<T> {
    pub fn new(p_s: Vec<T>, p_t: Vec<T>, loss: Vec<T>, w_hat: Vec<T>) -> Result<Self, TheoryError> {
        let m = p_s.len();
        if m == 0 {
            return Err(TheoryError::Empty);
        }
        if p_t.len() != m || loss.len() != m || w_hat.len() != m {
            return Err(TheoryError::Length);
        }
        for (name, v) in [("p_s", &p_s), ("p_t", &p_t), ("loss", &loss), ("w_hat", &w_hat)] {
            if v.iter().any(|x| x.is_negative()) {
                return Err(TheoryError::Negative(name));
            }
        }
        if let Some(i) = (0..m).find(|&i| p_s[i].is_zero() && !p_t[i].is_zero()) {
            return Err(TheoryError::Unsupported(i));
        }
        Ok(Self { p_s, p_t, loss, w_hat })
    }

    /// Checks that both masses sum to one within `tol`.
    pub fn check_normalized(&self, tol: T) -> Result<(), TheoryError> {
        for (name, v) in [("p_s", &self.p_s), ("p_t", &self.p_t)] {
            if (sum(v.iter().copied()) - T::one()).abs() > tol {
                return Err(TheoryError::NotNormalized(name));
            }
        }
        Ok(())
    }

    /// w = p_t / p_s, zero where neither domain has mass.
    pub fn true_ratio(&self) -> Vec<T> {
        self.p_s
            .iter()
            .zip(&self.p_t)
            .map(|(&s, &t)| if s.is_zero() { T::zero() } else { t / s })
            .collect()
    }

    fn source_mean(&self, f: impl Fn(usize) -> T) -> T {
        sum((0..self.p_s.len()).map(|i| self.p_s[i] * f(i)))
    }
}

/// Two sides of an identity or an inequality `lhs ≤ rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison<T> {
    pub lhs: T,
    pub rhs: T,
}

impl<T: FieldScalar> Comparison<T> {
    pub fn gap(&self) -> T {
        (self.lhs - self.rhs).abs()
    }

    pub fn slack(&self) -> T {
        self.rhs - self.lhs
    }
}

/// Target risk against the importance-weighted source risk:
/// `E_t[L]` vs `E_s[w L]` with the true ratio.
pub fn check_importance_identity<T: FieldScalar>(inst: &DiscreteInstance<T>) -> Comparison<T> {
    let w = inst.true_ratio();
    Comparison {
        lhs: sum((0..inst.p_t.len()).map(|i| inst.p_t[i] * inst.loss[i])),
        rhs: inst.source_mean(|i| w[i] * inst.loss[i]),
    }
}

/// Young's inequality on the weighting error:
/// `|E_s[(ŵ − w) L]| ≤ ½ (E_s[(ŵ − w)²] + E_s[L²])`.
pub fn check_bias_bound<T: FieldScalar>(inst: &DiscreteInstance<T>) -> Comparison<T> {
    let w = inst.true_ratio();
    let d = |i: usize| inst.w_hat[i] - w[i];
    let two = T::one() + T::one();
    Comparison {
        lhs: inst.source_mean(|i| d(i) * inst.loss[i]).abs(),
        rhs: (inst.source_mean(|i| square(d(i))) + inst.source_mean(|i| square(inst.loss[i]))) / two,
    }
}

/// Pointwise `(Ŵ − W)²` with `W = (1 − P)/P`, i.e. `((P − P̂)/(P P̂))²`.
pub fn ratio_deviation<T: FieldScalar>(p: T, p_hat: T) -> T {
    square((p - p_hat) / (p * p_hat))
}

/// `(N + 1)⁴ (P − P̂)²`.
pub fn ratio_deviation_bound<T: FieldScalar>(p: T, p_hat: T, n_bound: T) -> T {
    square(square(n_bound + T::one())) * square(p - p_hat)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridReport {
    pub points: usize,
    pub failures: usize,
    /// Largest `lhs / rhs` over grid pairs with `P ≠ P̂`.
    pub worst_ratio: f64,
}

/// Sweeps `P, P̂` over `[1/(N+1), 1]` with the given step and checks the
/// pointwise ratio-deviation bound.
pub fn check_ratio_variance_bound(n_bound: f64, step: f64) -> GridReport {
    let lo = 1.0 / (n_bound + 1.0);
    let k = ((1.0 - lo) / step).floor() as usize;
    let grid: Vec<f64> = (0..=k).map(|i| lo + i as f64 * step).chain([1.0]).collect();
    let mut report = GridReport {
        points: 0,
        failures: 0,
        worst_ratio: 0.0,
    };
    for &p in &grid {
        for &q in &grid {
            report.points += 1;
            let lhs = ratio_deviation(p, q);
            let rhs = ratio_deviation_bound(p, q, n_bound);
            if lhs > rhs * (1.0 + 1e-12) {
                report.failures += 1;
            }
            if p != q {
                report.worst_ratio = report.worst_ratio.max(lhs / rhs);
            }
        }
    }
    report
}

/// Exact moments of `E[(P − P̂)²]` against `Var P + Var P̂ + (E P − E P̂)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition<T> {
    pub lhs: T,
    pub rhs: T,
    /// `lhs − rhs`, algebraically `−2 Cov(P, P̂)`.
    pub gap: T,
    pub covariance: T,
}

/// Decomposition over a finite joint distribution with the given weights.
pub fn check_variance_decomposition_weighted<T: FieldScalar>(
    weights: &[T],
    p: &[T],
    p_hat: &[T],
) -> Result<Decomposition<T>, TheoryError> {
    if weights.len() != p.len() || p.len() != p_hat.len() {
        return Err(TheoryError::Length);
    }
    if p.len() < 2 {
        return Err(TheoryError::TooFewSamples);
    }
    if weights.iter().any(|w| w.is_negative()) {
        return Err(TheoryError::Negative("weights"));
    }
    let e = |f: &dyn Fn(usize) -> T| sum((0..p.len()).map(|i| weights[i] * f(i)));
    let mean_p = e(&|i| p[i]);
    let mean_q = e(&|i| p_hat[i]);
    let var_p = e(&|i| square(p[i] - mean_p));
    let var_q = e(&|i| square(p_hat[i] - mean_q));
    let covariance = e(&|i| (p[i] - mean_p) * (p_hat[i] - mean_q));
    let lhs = e(&|i| square(p[i] - p_hat[i]));
    let rhs = var_p + var_q + square(mean_p - mean_q);
    Ok(Decomposition {
        lhs,
        rhs,
        gap: lhs - rhs,
        covariance,
    })
}

/// Decomposition over equally weighted paired samples.
pub fn check_variance_decomposition<T: FieldScalar>(pairs: &[(T, T)]) -> Result<Decomposition<T>, TheoryError> {
    let w = T::one() / count::<T>(pairs.len().max(1));
    let weights = vec![w; pairs.len()];
    let (p, q): (Vec<T>, Vec<T>) = pairs.iter().copied().unzip();
    check_variance_decomposition_weighted(&weights, &p, &q)
}

/// Aligned instance: the true discriminator output is constant over the
/// support, `p_ds` is the discriminator-space source distribution and
/// `p_s` the source distribution the weighting error is measured under.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedInstance<T> {
    pub p_ds: Vec<T>,
    pub p_s: Vec<T>,
    pub p: Vec<T>,
    pub p_hat: Vec<T>,
    pub n_bound: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinalBound<T> {
    pub lhs: T,
    pub rhs: T,
    /// `max p_s / p_ds` over the support.
    pub factor: T,
    /// Whether every P̂ lies in `[1/(N+1), 1]`. The bound is only guaranteed
    /// then; outside that range it is evaluated but may fail.
    pub estimate_in_range: bool,
}

/// `E_s[(Ŵ − W)²] ≤ 2 (N+1)⁴ [Var_ds(P̂) + (E_ds P − E_ds P̂)²]`.
///
/// The true output must lie in `[1/(N+1), 1]` and `p_s / p_ds` may not
/// exceed 2; the estimate only needs to be a probability in `(0, 1]`.
pub fn check_final_bound<T: FieldScalar>(inst: &AlignedInstance<T>) -> Result<FinalBound<T>, TheoryError> {
    let m = inst.p.len();
    if m == 0 {
        return Err(TheoryError::Empty);
    }
    if inst.p_ds.len() != m || inst.p_s.len() != m || inst.p_hat.len() != m {
        return Err(TheoryError::Length);
    }
    for (name, v) in [("p_ds", &inst.p_ds), ("p_s", &inst.p_s)] {
        if v.iter().any(|x| x.is_negative()) {
            return Err(TheoryError::Negative(name));
        }
    }
    if inst.p.iter().any(|&x| x != inst.p[0]) {
        return Err(TheoryError::NotAligned);
    }
    let lo = T::one() / (inst.n_bound + T::one());
    let mut estimate_in_range = true;
    for i in 0..m {
        let (p, q) = (inst.p[i], inst.p_hat[i]);
        if p < lo || p > T::one() || q <= T::zero() || q > T::one() {
            return Err(TheoryError::OutOfRange(i));
        }
        estimate_in_range &= q >= lo;
    }
    let mut factor = T::zero();
    for i in 0..m {
        if inst.p_ds[i].is_zero() {
            if !inst.p_s[i].is_zero() {
                return Err(TheoryError::Unsupported(i));
            }
            continue;
        }
        let r = inst.p_s[i] / inst.p_ds[i];
        if r > factor {
            factor = r;
        }
    }
    let two = T::one() + T::one();
    if factor > two {
        return Err(TheoryError::Factor(format!("{factor:?}")));
    }
    let w_of = |x: T| (T::one() - x) / x;
    let lhs = sum((0..m).map(|i| inst.p_s[i] * square(w_of(inst.p_hat[i]) - w_of(inst.p[i]))));
    let e = |f: &dyn Fn(usize) -> T| sum((0..m).map(|i| inst.p_ds[i] * f(i)));
    let mean_p = e(&|i| inst.p[i]);
    let mean_q = e(&|i| inst.p_hat[i]);
    let var_q = e(&|i| square(inst.p_hat[i] - mean_q));
    let rhs = two * square(square(inst.n_bound + T::one())) * (var_q + square(mean_p - mean_q));
    Ok(FinalBound {
        lhs,
        rhs,
        factor,
        estimate_in_range,
    })
}

/// Randomized sweep settings. `corrupt` deliberately breaks every check so
/// that the harness itself can be shown to catch failures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryConfig {
    pub trials: usize,
    pub seed: u64,
    pub corrupt: bool,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 0,
            corrupt: false,
        }
    }
}

/// Outcome of one check over all trials.
///
/// `worst_margin` is the largest absolute deviation for identities and the
/// smallest slack `rhs − lhs` for inequalities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    pub worst_margin: f64,
    pub notes: BTreeMap<String, f64>,
    /// The first failing instance, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<serde_json::Value>,
}

impl CheckReport {
    fn new(name: &str, trials: usize, worst_margin: f64) -> Self {
        Self {
            name: name.to_string(),
            trials,
            failures: 0,
            worst_margin,
            notes: BTreeMap::new(),
            violation: None,
        }
    }

    fn fail(&mut self, instance: impl FnOnce() -> serde_json::Value) {
        self.failures += 1;
        if self.violation.is_none() {
            self.violation = Some(instance());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub const IDENTITY_TOL: f64 = 1e-12;

fn bound_holds(c: Comparison<f64>) -> bool {
    c.lhs <= c.rhs + IDENTITY_TOL * c.rhs.abs().max(1.0)
}

fn distribution(rng: &mut RngStream, m: usize, zero_prob: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m)
        .map(|_| if rng.uniform() < zero_prob { 0.0 } else { rng.uniform_in(0.01, 1.0) })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

fn random_instance(rng: &mut RngStream) -> DiscreteInstance<f64> {
    let m = 2 + rng.below(11);
    let p_s = distribution(rng, m, 0.0);
    let mut p_t = distribution(rng, m, 0.2);
    let scale = 1.0 / p_t.iter().sum::<f64>();
    p_t.iter_mut().for_each(|x| *x *= scale);
    let loss = (0..m).map(|_| rng.uniform_in(0.0, 5.0)).collect();
    let w_hat = (0..m).map(|_| rng.uniform_in(0.0, 10.0)).collect();
    DiscreteInstance::new(p_s, p_t, loss, w_hat).expect("generated instance is valid")
}

fn instance_json(inst: &DiscreteInstance<f64>, c: Comparison<f64>) -> serde_json::Value {
    json!({
        "p_s": inst.p_s, "p_t": inst.p_t, "loss": inst.loss, "w_hat": inst.w_hat,
        "lhs": c.lhs, "rhs": c.rhs,
    })
}

fn aligned_json(inst: &AlignedInstance<f64>, outcome: serde_json::Value) -> serde_json::Value {
    json!({
        "p_ds": inst.p_ds, "p_s": inst.p_s, "p": inst.p, "p_hat": inst.p_hat,
        "n": inst.n_bound, "outcome": outcome,
    })
}

/// Small positive rationals: a distribution with denominators below 100.
fn rational_distribution(rng: &mut RngStream, m: usize) -> Vec<Ratio<i128>> {
    let counts: Vec<i128> = (0..m).map(|_| 1 + rng.below(9) as i128).collect();
    let total: i128 = counts.iter().sum();
    counts.into_iter().map(|c| Ratio::new(c, total)).collect()
}

pub fn verify_importance_identity(cfg: &TheoryConfig) -> CheckReport {
    let mut rng = RngStream::new(cfg.seed, 200);
    let mut report = CheckReport::new("importance_identity", cfg.trials, 0.0);
    let mut exact_failures = 0;
    for _ in 0..cfg.trials {
        let inst = random_instance(&mut rng);
        let mut c = check_importance_identity(&inst);
        if cfg.corrupt {
            c.rhs += 1e-6;
        }
        report.worst_margin = report.worst_margin.max(c.gap());
        if c.gap() > IDENTITY_TOL {
            report.fail(|| instance_json(&inst, c));
        }

        let m = 2 + rng.below(4);
        let p_s = rational_distribution(&mut rng, m);
        let p_t = rational_distribution(&mut rng, m);
        let loss = (0..m).map(|_| Ratio::from_integer(rng.below(6) as i128)).collect();
        let exact = DiscreteInstance::new(p_s, p_t.clone(), loss, p_t).expect("rational instance is valid");
        let mut c = check_importance_identity(&exact);
        if cfg.corrupt {
            c.rhs += Ratio::new(1, 1_000_000);
        }
        if c.lhs != c.rhs {
            exact_failures += 1;
            let (lhs, rhs) = (c.lhs.to_string(), c.rhs.to_string());
            report.fail(|| json!({"exact": true, "lhs": lhs, "rhs": rhs}));
        }
    }
    report.notes.insert("exact_failures".into(), exact_failures as f64);
    report
}

pub fn verify_bias_bound(cfg: &TheoryConfig) -> CheckReport {
    let mut rng = RngStream::new(cfg.seed, 201);
    let mut report = CheckReport::new("bias_bound", cfg.trials, f64::INFINITY);
    for _ in 0..cfg.trials {
        let inst = random_instance(&mut rng);
        let mut c = check_bias_bound(&inst);
        if cfg.corrupt {
            c.rhs *= 0.25;
        }
        report.worst_margin = report.worst_margin.min(c.slack());
        if !bound_holds(c) {
            report.fail(|| instance_json(&inst, c));
        }
    }
    report
}

/// Grid bounds used alongside the random points.
pub const GRID_BOUNDS: [f64; 4] = [1.0, 2.0, 5.0, 10.0];
pub const GRID_STEP: f64 = 1e-3;

pub fn verify_ratio_variance_bound(cfg: &TheoryConfig) -> CheckReport {
    let mut rng = RngStream::new(cfg.seed, 202);
    let mut report = CheckReport::new("ratio_variance_bound", cfg.trials, f64::INFINITY);
    for _ in 0..cfg.trials {
        let n = rng.uniform_in(0.0, 20.0);
        let lo = 1.0 / (n + 1.0);
        let p = rng.uniform_in(lo, 1.0);
        let q = rng.uniform_in(lo, 1.0);
        let mut c = Comparison {
            lhs: ratio_deviation(p, q),
            rhs: ratio_deviation_bound(p, q, n),
        };
        if cfg.corrupt {
            c.rhs *= 0.25;
        }
        report.worst_margin = report.worst_margin.min(c.slack());
        if !bound_holds(c) {
            report.fail(|| json!({"p": p, "p_hat": q, "n": n, "lhs": c.lhs, "rhs": c.rhs}));
        }
    }
    let mut worst_ratio: f64 = 0.0;
    let mut points = 0;
    for n in GRID_BOUNDS {
        let grid = check_ratio_variance_bound(n, GRID_STEP);
        if grid.failures > 0 {
            report.fail(|| json!({"grid_n": n, "grid_failures": grid.failures}));
            report.failures += grid.failures - 1;
        }
        points += grid.points;
        worst_ratio = worst_ratio.max(grid.worst_ratio);
    }
    report.notes.insert("grid_points".into(), points as f64);
    report.notes.insert("grid_worst_ratio".into(), worst_ratio);
    report
}

pub fn verify_variance_decomposition(cfg: &TheoryConfig) -> CheckReport {
    let mut rng = RngStream::new(cfg.seed, 203);
    let mut report = CheckReport::new("variance_decomposition", cfg.trials, 0.0);
    let mut exact_failures = 0;
    let mut widest_gap: f64 = 0.0;
    for _ in 0..cfg.trials {
        let n = 2 + rng.below(49);
        let pairs: Vec<(f64, f64)> = (0..n).map(|_| (rng.uniform(), rng.uniform())).collect();
        let d = check_variance_decomposition(&pairs).expect("at least two samples");
        let expected = if cfg.corrupt { -d.covariance } else { -2.0 * d.covariance };
        let err = (d.gap - expected).abs();
        widest_gap = widest_gap.max(d.gap.abs());
        report.worst_margin = report.worst_margin.max(err);
        if err > IDENTITY_TOL {
            report.fail(|| json!({"pairs": pairs, "gap": d.gap, "covariance": d.covariance}));
        }

        // Independent product distribution in exact arithmetic: the
        // covariance vanishes, so the printed equality must hold exactly.
        let (ma, mb) = (1 + rng.below(3), 1 + rng.below(3));
        let qa = rational_distribution(&mut rng, ma);
        let qb = rational_distribution(&mut rng, mb);
        let va: Vec<Ratio<i128>> = (0..ma).map(|_| Ratio::new(1 + rng.below(20) as i128, 20)).collect();
        let vb: Vec<Ratio<i128>> = (0..mb).map(|_| Ratio::new(1 + rng.below(20) as i128, 20)).collect();
        let (mut w, mut p, mut q) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..ma {
            for j in 0..mb {
                w.push(qa[i] * qb[j]);
                p.push(va[i]);
                q.push(vb[j]);
            }
        }
        if w.len() < 2 {
            w.push(Ratio::from_integer(0));
            p.push(va[0]);
            q.push(vb[0]);
        }
        let d = check_variance_decomposition_weighted(&w, &p, &q).expect("valid product instance");
        let rhs = if cfg.corrupt { d.rhs + Ratio::new(1, 1000) } else { d.rhs };
        if d.covariance != Ratio::from_integer(0) || d.lhs != rhs {
            exact_failures += 1;
            let (lhs, rhs, cov) = (d.lhs.to_string(), rhs.to_string(), d.covariance.to_string());
            report.fail(|| json!({"exact": true, "lhs": lhs, "rhs": rhs, "covariance": cov}));
        }
    }
    report.notes.insert("exact_failures".into(), exact_failures as f64);
    report.notes.insert("largest_abs_gap".into(), widest_gap);
    report
}

pub fn verify_final_bound(cfg: &TheoryConfig) -> CheckReport {
    let mut rng = RngStream::new(cfg.seed, 204);
    let mut report = CheckReport::new("final_bound", cfg.trials, f64::INFINITY);
    let mut tightness: f64 = 0.0;
    let mut worst_factor: f64 = 0.0;
    for _ in 0..cfg.trials {
        let m = 2 + rng.below(11);
        let n_bound = rng.uniform_in(1.0, 10.0);
        let lo = 1.0 / (n_bound + 1.0);
        let p_ds = distribution(&mut rng, m, 0.0);
        let raw = distribution(&mut rng, m, 0.0);
        // Mix toward p_ds until no point has more than twice its mass.
        let max_r = raw.iter().zip(&p_ds).map(|(a, b)| a / b).fold(0.0, f64::max);
        let t = if max_r > 2.0 { 0.999 / (max_r - 1.0) } else { 1.0 };
        let p_s: Vec<f64> = raw.iter().zip(&p_ds).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let p_hat = (0..m).map(|_| rng.uniform_in(lo, 1.0)).collect();
        let inst = AlignedInstance {
            p_ds,
            p_s,
            p: vec![0.5; m],
            p_hat,
            n_bound,
        };
        let fb = match check_final_bound(&inst) {
            Ok(fb) => fb,
            Err(e) => {
                report.fail(|| aligned_json(&inst, json!(e.to_string())));
                continue;
            }
        };
        let mut c = Comparison { lhs: fb.lhs, rhs: fb.rhs };
        if cfg.corrupt {
            c.rhs *= 1e-3;
        }
        report.worst_margin = report.worst_margin.min(c.slack());
        if c.rhs > 0.0 {
            tightness = tightness.max(c.lhs / c.rhs);
        }
        worst_factor = worst_factor.max(fb.factor);
        if !bound_holds(c) {
            report.fail(|| aligned_json(&inst, json!({"lhs": c.lhs, "rhs": c.rhs})));
        }
    }
    report.notes.insert("max_tightness".into(), tightness);
    report.notes.insert("max_domain_factor".into(), worst_factor);
    report
}

/// All five checks in a fixed order.
pub fn verify_all(cfg: &TheoryConfig) -> Vec<CheckReport> {
    vec![
        verify_importance_identity(cfg),
        verify_bias_bound(cfg),
        verify_ratio_variance_bound(cfg),
        verify_variance_decomposition(cfg),
        verify_final_bound(cfg),
    ]
}
