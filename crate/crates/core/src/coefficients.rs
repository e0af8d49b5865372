//! Coefficient functionals `(f, g, h)` of
//! `dy = f(t, y_t) dt + g(t, y_t) d<B> + h(t, y_t) dB`, a catalog of test
//! problems, and sampling-based checkers for the monotone (H1/H2) and weak
//! monotone (A1/A2) conditions.
//!
//! The driving noise is scalar, so `g` and `h` map into `R^n` like `f`.

use std::f64::consts::E;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase_space::{euclid, log_modulus_factor, HistorySegment, SegmentView};

/// Values of the three coefficients at one `(t, segment)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffValues {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl CoeffValues {
    pub fn zeros(dim: usize) -> Self {
        Self { f: vec![0.0; dim], g: vec![0.0; dim], h: vec![0.0; dim] }
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().chain(&self.g).chain(&self.h).all(|v| v.is_finite())
    }
}

pub trait Coefficients: Send + Sync {
    fn label(&self) -> &str;

    /// State dimension `n`.
    fn dim(&self) -> usize;

    /// Writes `f(t, seg)`, `g(t, seg)`, `h(t, seg)` into `out`.
    fn eval(&self, t: f64, seg: &SegmentView<'_>, out: &mut CoeffValues);
}

/// Evaluates a coefficient triple, rejecting non-finite output.
pub fn evaluate(coeff: &dyn Coefficients, t: f64, seg: &SegmentView<'_>) -> Result<CoeffValues> {
    let mut out = CoeffValues::zeros(coeff.dim());
    coeff.eval(t, seg, &mut out);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::NonFiniteCoefficient { label: coeff.label().to_string(), t })
    }
}

/// `f = a psi(0) + d psi(-r)`, `g = c_g psi(0)`, `h = c_h psi(0)`, applied
/// componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDelay {
    pub label: String,
    pub dim: usize,
    pub a: f64,
    pub delay_coeff: f64,
    pub delay: f64,
    pub g: f64,
    pub h: f64,
}

impl Coefficients for LinearDelay {
    fn label(&self) -> &str {
        &self.label
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _t: f64, seg: &SegmentView<'_>, out: &mut CoeffValues) {
        let x = seg.at_zero();
        let lagged = if self.delay_coeff != 0.0 { Some(seg.delayed(self.delay)) } else { None };
        for k in 0..self.dim {
            out.f[k] = self.a * x[k] + lagged.map_or(0.0, |l| self.delay_coeff * l[k]);
            out.g[k] = self.g * x[k];
            out.h[k] = self.h * x[k];
        }
    }
}

/// `f = a psi(0) + b r int e^{r theta} psi(theta) d theta` (trapezoid rule on
/// the segment window), `h = c_h psi(0)`, `g = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingAverage {
    pub label: String,
    pub a: f64,
    pub b: f64,
    pub kernel_rate: f64,
    pub h: f64,
}

impl FadingAverage {
    /// Weighted history average `r int_{-tau}^0 e^{r theta} psi(theta) d theta`
    /// of the first component.
    pub fn memory_term(&self, seg: &SegmentView<'_>) -> f64 {
        let n = seg.len();
        let dt = seg.dt();
        let decay = (-self.kernel_rate * dt).exp();
        let mut w = 1.0;
        let mut acc = 0.0;
        for j in 0..n {
            let half = if j == 0 || j + 1 == n { 0.5 } else { 1.0 };
            acc += half * w * seg.lag(j)[0];
            w *= decay;
        }
        self.kernel_rate * dt * acc
    }
}

impl Coefficients for FadingAverage {
    fn label(&self) -> &str {
        &self.label
    }

    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, _t: f64, seg: &SegmentView<'_>, out: &mut CoeffValues) {
        let x = seg.at_zero()[0];
        out.f[0] = self.a * x + self.b * self.memory_term(seg);
        out.g[0] = 0.0;
        out.h[0] = self.h * x;
    }
}

/// Polynomial in `psi(0)` applied componentwise:
/// `f = f1 x + f3 x^3`, `g = 0`, `h = h1 x`, plus an optional signed
/// square-root drift `s sign(x) |x|^{1/2}` and additive noise `h0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPolynomial {
    pub label: String,
    pub f1: f64,
    pub f3: f64,
    pub sqrt_coeff: f64,
    pub h0: f64,
    pub h1: f64,
}

impl Coefficients for PointPolynomial {
    fn label(&self) -> &str {
        &self.label
    }

    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, _t: f64, seg: &SegmentView<'_>, out: &mut CoeffValues) {
        let x = seg.at_zero()[0];
        let root = if self.sqrt_coeff != 0.0 { self.sqrt_coeff * x.signum() * x.abs().sqrt() } else { 0.0 };
        out.f[0] = self.f1 * x + self.f3 * x * x * x + root;
        out.g[0] = 0.0;
        out.h[0] = self.h0 + self.h1 * x;
    }
}

type Component = Box<dyn Fn(f64, &SegmentView<'_>, &mut [f64]) + Send + Sync>;

/// Coefficients assembled from closures; unset components are zero.
pub struct FnCoefficients {
    label: String,
    dim: usize,
    f: Option<Component>,
    g: Option<Component>,
    h: Option<Component>,
}

impl FnCoefficients {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self { label: label.into(), dim, f: None, g: None, h: None }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim)
    }

    pub fn drift(mut self, f: impl Fn(f64, &SegmentView<'_>, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.f = Some(Box::new(f));
        self
    }

    pub fn qv_drift(mut self, g: impl Fn(f64, &SegmentView<'_>, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.g = Some(Box::new(g));
        self
    }

    pub fn diffusion(mut self, h: impl Fn(f64, &SegmentView<'_>, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.h = Some(Box::new(h));
        self
    }
}

impl fmt::Debug for FnCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCoefficients").field("label", &self.label).field("dim", &self.dim).finish()
    }
}

impl Coefficients for FnCoefficients {
    fn label(&self) -> &str {
        &self.label
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, seg: &SegmentView<'_>, out: &mut CoeffValues) {
        for (slot, comp) in [(&mut out.f, &self.f), (&mut out.g, &self.g), (&mut out.h, &self.h)] {
            match comp {
                Some(c) => c(t, seg, slot),
                None => slot.fill(0.0),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaRule {
    /// `kappa(u) = s u`.
    Linear,
    /// `kappa(u) = s u ln(e + 1/u)`.
    LogModulus,
}

/// Concave modulus of the weak monotonicity condition, scaled by `s > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaFunction {
    pub rule: KappaRule,
    pub scale: f64,
}

impl KappaFunction {
    pub fn linear(scale: f64) -> Self {
        Self { rule: KappaRule::Linear, scale }
    }

    pub fn log_modulus(scale: f64) -> Self {
        Self { rule: KappaRule::LogModulus, scale }
    }

    /// Parses `linear:<s>` or `log:<s>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown kappa `{s}`"));
        let (rule, scale) = s.split_once(':').ok_or_else(bad)?;
        let scale: f64 = scale.trim().parse().map_err(|_| bad())?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(bad());
        }
        match rule {
            "linear" => Ok(Self::linear(scale)),
            "log" => Ok(Self::log_modulus(scale)),
            _ => Err(bad()),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match self.rule {
            KappaRule::Linear => self.scale * u,
            KappaRule::LogModulus => self.scale * u * log_modulus_factor(u),
        }
    }

    /// Intercept `a` of the affine majorant `kappa(z) <= a + b z`.
    pub fn a(&self) -> f64 {
        match self.rule {
            KappaRule::Linear => 0.0,
            // u ln(e + 1/u) = u + u ln(1 + 1/(e u)) <= u + 1/e
            KappaRule::LogModulus => self.scale / E,
        }
    }

    /// Slope `b` of the affine majorant.
    pub fn b(&self) -> f64 {
        self.scale
    }

    /// `int_{0+} du / kappa(u) = inf` holds for both rules: the integrand
    /// behaves like `1/u` and `1/(u ln(1/u))` near zero.
    pub fn osgood(&self) -> bool {
        true
    }

    /// Midpoint concavity on a log-spaced grid, tolerance 1e-12.
    pub fn concave_on_grid(&self, points: usize) -> bool {
        let grid: Vec<f64> = (0..points).map(|i| 10f64.powf(-8.0 + 12.0 * i as f64 / (points - 1) as f64)).collect();
        grid.iter().all(|&u| {
            grid.iter().all(|&v| {
                let mid = self.eval(0.5 * (u + v));
                let chord = 0.5 * (self.eval(u) + self.eval(v));
                mid >= chord - 1e-12 * (1.0 + chord.abs())
            })
        })
    }

    pub fn nondecreasing_on_grid(&self, points: usize) -> bool {
        let vals: Vec<f64> = (0..points).map(|i| self.eval(1e-8 * 1.05f64.powi(i as i32))).collect();
        vals.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn affine_majorant_on_grid(&self, points: usize) -> bool {
        (0..points).all(|i| {
            let z = 1e-8 * 1.05f64.powi(i as i32);
            self.eval(z) <= self.a() + self.b() * z + 1e-12
        })
    }
}

impl fmt::Display for KappaFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            KappaRule::Linear => write!(f, "linear:{}", self.scale),
            KappaRule::LogModulus => write!(f, "log:{}", self.scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditionId {
    H1,
    H2,
    A1,
    A2,
}

/// A condition together with the constant it is checked at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ConditionSpec {
    H1 { k: f64 },
    H2 { k_hat: f64 },
    Weak { kappa: KappaFunction, k_tilde: f64 },
}

impl fmt::Display for ConditionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::H1 { k } => write!(f, "H1 (K = {k})"),
            Self::H2 { k_hat } => write!(f, "H2 (K^ = {k_hat})"),
            Self::Weak { kappa, k_tilde } => write!(f, "A1+A2 (kappa = {kappa}, K~ = {k_tilde})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Pass,
    Fail,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeclaredCheck {
    pub condition: ConditionSpec,
    pub expect: Expectation,
}

/// Constants a problem is declared to satisfy its conditions with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeclaredConstants {
    pub k: Option<f64>,
    pub k_hat: Option<f64>,
    pub weak: Option<(KappaFunction, f64)>,
}

pub struct CatalogEntry {
    pub id: &'static str,
    pub summary: &'static str,
    /// Initial data id used when a config does not name one.
    pub default_initial: &'static str,
    pub coeff: Arc<dyn Coefficients>,
    pub checks: Vec<DeclaredCheck>,
}

impl CatalogEntry {
    pub fn is_counterexample(&self) -> bool {
        self.checks.iter().any(|c| c.expect == Expectation::Fail)
    }

    /// Constants of the conditions declared to pass.
    pub fn declared(&self) -> DeclaredConstants {
        let mut d = DeclaredConstants { k: None, k_hat: None, weak: None };
        for c in self.checks.iter().filter(|c| c.expect == Expectation::Pass) {
            match c.condition {
                ConditionSpec::H1 { k } => d.k = Some(k),
                ConditionSpec::H2 { k_hat } => d.k_hat = Some(k_hat),
                ConditionSpec::Weak { kappa, k_tilde } => d.weak = Some((kappa, k_tilde)),
            }
        }
        d
    }

    pub fn kappa(&self) -> Option<KappaFunction> {
        self.declared().weak.map(|(k, _)| k)
    }
}

impl fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CatalogEntry").field("id", &self.id).field("checks", &self.checks).finish()
    }
}

pub const CATALOG_IDS: [&str; 6] = [
    "linear",
    "fading-average",
    "cubic-dissipative",
    "sqrt-counterexample",
    "cubic-growth-counterexample",
    "no-memory-linear",
];

fn pass(condition: ConditionSpec) -> DeclaredCheck {
    DeclaredCheck { condition, expect: Expectation::Pass }
}

fn fail(condition: ConditionSpec) -> DeclaredCheck {
    DeclaredCheck { condition, expect: Expectation::Fail }
}

/// Looks up a catalog problem. `q` is the phase-space decay rate, which sets
/// the kernel of the fading-average entry.
pub fn catalog_entry(id: &str, q: f64) -> Result<CatalogEntry> {
    let entry = match id {
        // 2<x, -x + y/2> <= y^2/8 <= e^{2 q r} N^2 / 8 with r = 0.5, q <= 1;
        // 2<x, 0.2x> = 0.4 x^2; |h|^2 = x^2. Same bounds for differences.
        "linear" => CatalogEntry {
            id: "linear",
            summary: "f = -y(t) + 0.5 y(t-0.5), g = 0.2 y(t), h = y(t)",
            default_initial: "const:1",
            coeff: Arc::new(LinearDelay {
                label: "linear".into(),
                dim: 1,
                a: -1.0,
                delay_coeff: 0.5,
                delay: 0.5,
                g: 0.2,
                h: 1.0,
            }),
            checks: vec![
                pass(ConditionSpec::H1 { k: 1.0 }),
                pass(ConditionSpec::H2 { k_hat: 1.0 }),
                pass(ConditionSpec::Weak { kappa: KappaFunction::linear(1.0), k_tilde: 0.0 }),
            ],
        },
        // kernel rate 2q: |memory| <= 2 b (1 + q dt) ||psi||_q, so
        // 2<x, -x + m/2> <= (1 + q dt)^2 / 2 N^2
        "fading-average" => CatalogEntry {
            id: "fading-average",
            summary: "f = -y(t) + 0.5 * 2q int e^{2q s} y(t+s) ds, h = 0.3 y(t)",
            default_initial: "const:1",
            coeff: Arc::new(FadingAverage {
                label: "fading-average".into(),
                a: -1.0,
                b: 0.5,
                kernel_rate: 2.0 * q,
                h: 0.3,
            }),
            checks: vec![
                pass(ConditionSpec::H1 { k: 1.0 }),
                pass(ConditionSpec::H2 { k_hat: 1.0 }),
                pass(ConditionSpec::Weak { kappa: KappaFunction::linear(1.0), k_tilde: 0.0 }),
            ],
        },
        // (z^3 - y^3)(z - y) >= 0, so the cubic term only helps
        "cubic-dissipative" => CatalogEntry {
            id: "cubic-dissipative",
            summary: "f = y - y^3, h = y",
            default_initial: "const:1",
            coeff: Arc::new(PointPolynomial {
                label: "cubic-dissipative".into(),
                f1: 1.0,
                f3: -1.0,
                sqrt_coeff: 0.0,
                h0: 0.0,
                h1: 1.0,
            }),
            checks: vec![
                pass(ConditionSpec::H1 { k: 2.0 }),
                pass(ConditionSpec::H2 { k_hat: 2.0 }),
                pass(ConditionSpec::Weak { kappa: KappaFunction::log_modulus(2.0), k_tilde: 0.0 }),
            ],
        },
        // 2|x|^{3/2} <= 2(1 + x^2) holds, but the one-sided difference ratio
        // grows like |z - y|^{-1/2} near the origin; started next to 0 the
        // iteration meets the non-Lipschitz point head on
        "sqrt-counterexample" => CatalogEntry {
            id: "sqrt-counterexample",
            summary: "f = sign(y)|y|^{1/2}, no noise",
            default_initial: "const:1e-8",
            coeff: Arc::new(PointPolynomial {
                label: "sqrt-counterexample".into(),
                f1: 0.0,
                f3: 0.0,
                sqrt_coeff: 1.0,
                h0: 0.0,
                h1: 0.0,
            }),
            checks: vec![
                pass(ConditionSpec::H1 { k: 2.0 }),
                fail(ConditionSpec::H2 { k_hat: 2.0 }),
                fail(ConditionSpec::Weak { kappa: KappaFunction::log_modulus(2.0), k_tilde: 0.0 }),
            ],
        },
        "cubic-growth-counterexample" => CatalogEntry {
            id: "cubic-growth-counterexample",
            summary: "f = y^3",
            default_initial: "const:1",
            coeff: Arc::new(PointPolynomial {
                label: "cubic-growth-counterexample".into(),
                f1: 0.0,
                f3: 1.0,
                sqrt_coeff: 0.0,
                h0: 0.0,
                h1: 0.0,
            }),
            checks: vec![fail(ConditionSpec::H1 { k: 2.0 }), fail(ConditionSpec::H2 { k_hat: 2.0 })],
        },
        "no-memory-linear" => CatalogEntry {
            id: "no-memory-linear",
            summary: "f = -y(t), h = 0.5 y(t) (no delay)",
            default_initial: "const:1",
            coeff: Arc::new(LinearDelay {
                label: "no-memory-linear".into(),
                dim: 1,
                a: -1.0,
                delay_coeff: 0.0,
                delay: 0.0,
                g: 0.0,
                h: 0.5,
            }),
            checks: vec![
                pass(ConditionSpec::H1 { k: 0.25 }),
                pass(ConditionSpec::H2 { k_hat: 0.25 }),
                pass(ConditionSpec::Weak { kappa: KappaFunction::linear(0.25), k_tilde: 0.0 }),
            ],
        },
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    Ok(entry)
}

pub fn catalog(q: f64) -> Vec<CatalogEntry> {
    CATALOG_IDS.iter().map(|id| catalog_entry(id, q).expect("catalog ids resolve")).collect()
}

/// Random segment generator over a bounded fading-norm ball.
///
/// Profiles are `psi(theta) = sum_j a_j e^{q theta / 2} cos(w_j theta + p_j)`,
/// rescaled to a target norm. Half the targets are uniform in `(0, R]`, half
/// log-uniform in `[1e-6 R, R]`. Pair partners are `z = y + eps * d` with a
/// unit-norm profile `d` and `eps` log-uniform in `[1e-8 R, R]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentSampler {
    pub q: f64,
    pub dim: usize,
    pub dt: f64,
    pub tau: f64,
    pub radius: f64,
    pub samples: usize,
    pub modes: usize,
    pub t_end: f64,
    pub seed: u64,
}

impl SegmentSampler {
    pub fn new(q: f64, seed: u64) -> Self {
        Self {
            q,
            dim: 1,
            dt: 0.02,
            tau: 12.0 / q,
            radius: 10.0,
            samples: 10_000,
            modes: 4,
            t_end: 1.0,
            seed,
        }
    }

    fn window(&self) -> usize {
        (self.tau / self.dt).ceil() as usize
    }

    fn profile(&self, rng: &mut ChaCha8Rng) -> HistorySegment {
        let modes: Vec<(f64, f64, f64)> = (0..self.modes * self.dim)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                (a, rng.random::<f64>() * 6.0, rng.random::<f64>() * std::f64::consts::TAU)
            })
            .collect();
        let q = self.q;
        let amp: f64 = modes.iter().map(|m| m.0.abs()).sum();
        let window = self.window();
        let tail = amp * (-1.5 * q * window as f64 * self.dt).exp();
        HistorySegment::from_fn(window + 1, self.dim, self.dt, q, tail, |th, out| {
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = modes[k * self.modes..(k + 1) * self.modes]
                    .iter()
                    .map(|(a, w, p)| a * (0.5 * q * th).exp() * (w * th + p).cos())
                    .sum();
            }
        })
        .expect("sampler window is well-formed")
    }

    fn normalized(&self, rng: &mut ChaCha8Rng, target: f64) -> HistorySegment {
        loop {
            let p = self.profile(rng);
            let n = p.fading_norm().expect("nonempty");
            if n > 1e-12 {
                return p.scaled(target / n);
            }
        }
    }

    fn target_norm(&self, rng: &mut ChaCha8Rng, i: usize) -> f64 {
        let u: f64 = rng.random();
        if i.is_multiple_of(2) {
            self.radius * (1.0 - u)
        } else {
            self.radius * 10f64.powf(-6.0 * u)
        }
    }

    /// `(t, psi)` samples.
    pub fn segments(&self) -> Vec<(f64, HistorySegment)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.samples)
            .map(|i| {
                let target = self.target_norm(&mut rng, i);
                let seg = self.normalized(&mut rng, target);
                (rng.random::<f64>() * self.t_end, seg)
            })
            .collect()
    }

    /// `(t, z, y)` samples.
    pub fn pairs(&self) -> Vec<(f64, HistorySegment, HistorySegment)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x005e_ed0f_9a15);
        (0..self.samples)
            .map(|i| {
                let target = self.target_norm(&mut rng, i);
                let y = self.normalized(&mut rng, target);
                let eps = self.radius * 10f64.powf(-8.0 * rng.random::<f64>());
                let d = self.normalized(&mut rng, eps);
                let z = y.sum(&d).expect("same window");
                (rng.random::<f64>() * self.t_end, z, y)
            })
            .collect()
    }

    pub fn zero_segment(&self) -> HistorySegment {
        HistorySegment::new(vec![0.0; (self.window() + 1) * self.dim], self.dim, self.dt, self.q, 0.0)
            .expect("well-formed")
    }
}

/// Worst case found by a checker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    /// `psi(0)` of each segment involved (one for H1/A2, `z` then `y` for pairs).
    pub at_zero: Vec<Vec<f64>>,
    /// Fading norm of `psi` (H1) or of `z - y` (H2/A1).
    pub norm: f64,
    pub lhs: f64,
    pub rhs: f64,
    #[serde(skip)]
    pub segments: Vec<HistorySegment>,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at: Vec<String> = self.at_zero.iter().map(|v| format!("{:.3e}", v.first().copied().unwrap_or(0.0))).collect();
        write!(f, "t = {:.3}, psi(0) = {}, norm {:.3e}, lhs {:.3e} vs rhs {:.3e}", self.t, at.join(" / "), self.norm, self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub label: String,
    pub constant: f64,
    pub n_samples: usize,
    pub worst_ratio: f64,
    pub witness: Option<Witness>,
    pub passed: bool,
}

const PASS_SLACK: f64 = 1e-9;

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs <= 0.0 {
        0.0
    } else if rhs <= 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn finish(
    condition: ConditionId,
    label: &str,
    constant: f64,
    scored: Vec<Option<(f64, Witness)>>,
) -> Result<ConditionReport> {
    let n_samples = scored.iter().filter(|s| s.is_some()).count();
    if n_samples == 0 && matches!(condition, ConditionId::H2 | ConditionId::A1) {
        return Err(Error::DegenerateSampler);
    }
    let mut worst: Option<(f64, Witness)> = None;
    for (r, w) in scored.into_iter().flatten() {
        if worst.as_ref().is_none_or(|(best, _)| r > *best) {
            worst = Some((r, w));
        }
    }
    let (worst_ratio, witness) = match worst {
        Some((r, w)) => (r, Some(w)),
        None => (0.0, None),
    };
    Ok(ConditionReport {
        condition,
        label: label.to_string(),
        constant,
        n_samples,
        worst_ratio,
        witness,
        passed: worst_ratio <= 1.0 + PASS_SLACK,
    })
}

fn one_sided_lhs(coeff: &dyn Coefficients, t: f64, z: &HistorySegment, y: &HistorySegment) -> Result<(f64, Vec<f64>)> {
    let vz = evaluate(coeff, t, &z.view())?;
    let vy = evaluate(coeff, t, &y.view())?;
    let d0 = diff(z.view().at_zero(), y.view().at_zero());
    let lhs = (2.0 * dot(&d0, &diff(&vz.f, &vy.f)))
        .max(2.0 * dot(&d0, &diff(&vz.g, &vy.g)))
        .max(euclid(&diff(&vz.h, &vy.h)).powi(2));
    Ok((lhs, d0))
}

/// H1: `2<psi(0), f> v 2<psi(0), g> v |h|^2 <= K (1 + ||psi||_q^2)`.
pub fn check_h1(coeff: &dyn Coefficients, samples: &[(f64, HistorySegment)], k: f64) -> Result<ConditionReport> {
    let scored = samples
        .par_iter()
        .map(|(t, seg)| {
            let v = evaluate(coeff, *t, &seg.view())?;
            let x = seg.view().at_zero();
            let lhs = (2.0 * dot(x, &v.f)).max(2.0 * dot(x, &v.g)).max(euclid(&v.h).powi(2));
            let norm = seg.fading_norm()?;
            let rhs = k * (1.0 + norm * norm);
            let w = Witness { t: *t, at_zero: vec![x.to_vec()], norm, lhs, rhs, segments: vec![seg.clone()] };
            Ok(Some((ratio(lhs, rhs), w)))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(ConditionId::H1, coeff.label(), k, scored)
}

fn check_pairs(
    coeff: &dyn Coefficients,
    pairs: &[(f64, HistorySegment, HistorySegment)],
    id: ConditionId,
    constant: f64,
    rhs_of: impl Fn(f64) -> f64 + Sync,
) -> Result<ConditionReport> {
    let scored = pairs
        .par_iter()
        .map(|(t, z, y)| {
            let norm = z.difference(y)?.fading_norm()?;
            if norm == 0.0 {
                return Ok(None);
            }
            let (lhs, _) = one_sided_lhs(coeff, *t, z, y)?;
            let rhs = rhs_of(norm * norm);
            let w = Witness {
                t: *t,
                at_zero: vec![z.view().at_zero().to_vec(), y.view().at_zero().to_vec()],
                norm,
                lhs,
                rhs,
                segments: vec![z.clone(), y.clone()],
            };
            Ok(Some((ratio(lhs, rhs), w)))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(id, coeff.label(), constant, scored)
}

/// H2: one-sided difference bound against `K^ ||z - y||_q^2`.
pub fn check_h2(
    coeff: &dyn Coefficients,
    pairs: &[(f64, HistorySegment, HistorySegment)],
    k_hat: f64,
) -> Result<ConditionReport> {
    check_pairs(coeff, pairs, ConditionId::H2, k_hat, |u| k_hat * u)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakReport {
    pub a1: ConditionReport,
    pub a2: ConditionReport,
}

impl WeakReport {
    pub fn passed(&self) -> bool {
        self.a1.passed && self.a2.passed
    }
}

/// A1 against `kappa(||z - y||_q^2)` on the pairs; A2 on the zero segment
/// at `time_points` equally spaced times in `[0, t_end]`.
pub fn check_a1_a2(
    coeff: &dyn Coefficients,
    kappa: Option<KappaFunction>,
    k_tilde: f64,
    pairs: &[(f64, HistorySegment, HistorySegment)],
    zero: &HistorySegment,
    t_end: f64,
    time_points: usize,
) -> Result<WeakReport> {
    let kappa = kappa.ok_or_else(|| Error::MissingKappa(coeff.label().to_string()))?;
    let a1 = check_pairs(coeff, pairs, ConditionId::A1, kappa.scale, |u| kappa.eval(u))?;
    let scored = (0..time_points)
        .map(|i| {
            let t = if time_points > 1 { t_end * i as f64 / (time_points - 1) as f64 } else { 0.0 };
            let v = evaluate(coeff, t, &zero.view())?;
            let lhs = [&v.f, &v.g, &v.h].iter().map(|c| euclid(c).powi(2)).fold(0.0, f64::max);
            let w = Witness { t, at_zero: vec![zero.view().at_zero().to_vec()], norm: 0.0, lhs, rhs: k_tilde, segments: vec![] };
            Ok(Some((ratio(lhs, k_tilde), w)))
        })
        .collect::<Result<Vec<_>>>()?;
    let a2 = finish(ConditionId::A2, coeff.label(), k_tilde, scored)?;
    Ok(WeakReport { a1, a2 })
}

/// Outcome of one declared check of a catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeclaredOutcome {
    pub check: DeclaredCheck,
    pub reports: Vec<ConditionReport>,
    pub passed: bool,
    pub as_expected: bool,
}

/// Runs every declared check of `entry` against the sampler.
pub fn verify_entry(entry: &CatalogEntry, sampler: &SegmentSampler) -> Result<Vec<DeclaredOutcome>> {
    let coeff = entry.coeff.as_ref();
    let segments = sampler.segments();
    let pairs = sampler.pairs();
    entry
        .checks
        .iter()
        .map(|check| {
            let reports = match check.condition {
                ConditionSpec::H1 { k } => vec![check_h1(coeff, &segments, k)?],
                ConditionSpec::H2 { k_hat } => vec![check_h2(coeff, &pairs, k_hat)?],
                ConditionSpec::Weak { kappa, k_tilde } => {
                    let w = check_a1_a2(coeff, Some(kappa), k_tilde, &pairs, &sampler.zero_segment(), sampler.t_end, 101)?;
                    vec![w.a1, w.a2]
                }
            };
            let passed = reports.iter().all(|r| r.passed);
            let as_expected = passed == (check.expect == Expectation::Pass);
            Ok(DeclaredOutcome { check: *check, reports, passed, as_expected })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn const_seg(c: f64, tau: f64, dt: f64) -> HistorySegment {
        let len = (tau / dt).round() as usize + 1;
        HistorySegment::new(vec![c; len], 1, dt, 1.0, 0.0).unwrap()
    }

    fn point_seg(x: f64) -> HistorySegment {
        HistorySegment::new(vec![0.0, 0.0, x], 1, 0.1, 1.0, 0.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let lin = FnCoefficients::new("neg", 1).drift(|_, s, out| out[0] = -s.at_zero()[0]);
        let v = evaluate(&lin, 0.0, &const_seg(2.0, 1.0, 0.1).view()).unwrap();
        assert_eq!(v.f, vec![-2.0]);

        let cubic = catalog_entry("cubic-dissipative", 1.0).unwrap();
        let v = evaluate(cubic.coeff.as_ref(), 0.0, &point_seg(2.0).view()).unwrap();
        assert_eq!(v.f, vec![-6.0]);
        assert_eq!(v.h, vec![2.0]);
    }

    #[test]
    fn fading_average_riemann_sum() {
        let b = 0.7;
        let fa = FadingAverage { label: "fa".into(), a: 0.0, b, kernel_rate: 1.0, h: 0.0 };
        for tau in [1.0, 5.0, 20.0] {
            let seg = const_seg(1.0, tau, 0.01);
            let v = evaluate(&fa, 0.0, &seg.view()).unwrap();
            assert_relative_eq!(v.f[0], b * (1.0 - (-tau).exp()), max_relative = 1e-4);
        }
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let bad = FnCoefficients::new("bad", 1).drift(|_, s, out| out[0] = 1.0 / s.at_zero()[0]);
        let err = evaluate(&bad, 0.5, &point_seg(0.0).view()).unwrap_err();
        assert_eq!(err, Error::NonFiniteCoefficient { label: "bad".into(), t: 0.5 });
    }

    fn sampler(samples: usize) -> SegmentSampler {
        SegmentSampler { samples, ..SegmentSampler::new(1.0, 17) }
    }

    #[test]
    fn zero_coefficients_pass_h1_with_zero_constant() {
        let zero = FnCoefficients::zero(1);
        let r = check_h1(&zero, &sampler(200).segments(), 0.0).unwrap();
        assert!(r.passed);
        assert_eq!(r.worst_ratio, 0.0);
    }

    #[test]
    fn cubic_dissipative_h1_and_h2() {
        let s = sampler(2000);
        let e = catalog_entry("cubic-dissipative", 1.0).unwrap();
        let h1 = check_h1(e.coeff.as_ref(), &s.segments(), 2.0).unwrap();
        assert!(h1.passed, "{h1:?}");
        let plain = PointPolynomial { label: "c".into(), f1: 1.0, f3: -1.0, sqrt_coeff: 0.0, h0: 0.0, h1: 0.0 };
        let h2 = check_h2(&plain, &s.pairs(), 2.0).unwrap();
        assert!(h2.passed, "{h2:?}");
    }

    #[test]
    fn pure_cubic_fails_h1_near_the_radius() {
        let e = catalog_entry("cubic-growth-counterexample", 1.0).unwrap();
        let r = check_h1(e.coeff.as_ref(), &sampler(4000).segments(), 2.0).unwrap();
        assert!(!r.passed);
        let w = r.witness.unwrap();
        assert!(w.at_zero[0][0].abs() > 8.0, "witness {:?}", w.at_zero);
        // oracle: 2x^4 / (2(1+x^2)) > 1 from x = 2 on
        let x = w.at_zero[0][0];
        assert_relative_eq!(r.worst_ratio, x.powi(4) / (1.0 + w.norm * w.norm), max_relative = 1e-9);
        assert!(r.worst_ratio > 1.0);
    }

    #[test]
    fn linear_h2_constant_from_cauchy_schwarz() {
        // f = A psi(0) with a non-symmetric 2x2 A, h = c psi(0)
        let a = [[0.3, -1.2], [0.8, -0.5]];
        let c: f64 = 1.1;
        let frob = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        let k_hat = (2.0 * frob).max(c * c);
        let coeff = FnCoefficients::new("matrix", 2)
            .drift(move |_, s, out| {
                let x = s.at_zero();
                out[0] = a[0][0] * x[0] + a[0][1] * x[1];
                out[1] = a[1][0] * x[0] + a[1][1] * x[1];
            })
            .diffusion(move |_, s, out| {
                let x = s.at_zero();
                out[0] = c * x[0];
                out[1] = c * x[1];
            });
        let s = SegmentSampler { dim: 2, ..sampler(2000) };
        let pairs = s.pairs();
        let r = check_h2(&coeff, &pairs, k_hat).unwrap();
        assert!(r.passed, "{r:?}");
        // both sides are quadratic, so rescaling pairs leaves the ratio alone
        let scaled: Vec<_> = pairs.iter().map(|(t, z, y)| (*t, z.scaled(7.5), y.scaled(7.5))).collect();
        let r2 = check_h2(&coeff, &scaled, k_hat).unwrap();
        assert_relative_eq!(r.worst_ratio, r2.worst_ratio, max_relative = 1e-9);
    }

    #[test]
    fn sqrt_drift_fails_h2_for_any_constant() {
        let e = catalog_entry("sqrt-counterexample", 1.0).unwrap();
        let r = check_h2(e.coeff.as_ref(), &sampler(4000).pairs(), 2.0).unwrap();
        assert!(!r.passed);
        assert!(r.worst_ratio > 100.0, "worst {}", r.worst_ratio);
        // shrinking the pair distance along the witness direction grows the ratio like |z - y|^{-1/2}
        let w = r.witness.unwrap();
        assert!(w.norm < 1e-2, "witness distance {}", w.norm);
    }

    #[test]
    fn identical_pairs_are_degenerate() {
        let seg = point_seg(1.0);
        let pairs = vec![(0.0, seg.clone(), seg.clone()); 5];
        let lin = catalog_entry("linear", 1.0).unwrap();
        assert_eq!(check_h2(lin.coeff.as_ref(), &pairs, 1.0).unwrap_err(), Error::DegenerateSampler);
    }

    #[test]
    fn kappa_properties() {
        for k in [KappaFunction::linear(2.0), KappaFunction::log_modulus(1.0), KappaFunction::log_modulus(3.0)] {
            assert_eq!(k.eval(0.0), 0.0);
            assert!(k.concave_on_grid(60), "{k}");
            assert!(k.nondecreasing_on_grid(500), "{k}");
            assert!(k.affine_majorant_on_grid(500), "{k}");
            assert!(k.osgood());
        }
        let log = KappaFunction::log_modulus(1.0);
        for i in 0..200 {
            let u = 1e-6 + i as f64 * 0.005;
            assert!(log.eval(u) >= u);
        }
        assert_eq!(KappaFunction::parse("log:2").unwrap(), KappaFunction::log_modulus(2.0));
        assert!(KappaFunction::parse("cube:1").is_err());
    }

    #[test]
    fn h2_pass_implies_a1_with_linear_kappa() {
        let s = sampler(1000);
        let e = catalog_entry("linear", 1.0).unwrap();
        let pairs = s.pairs();
        let h2 = check_h2(e.coeff.as_ref(), &pairs, 1.0).unwrap();
        let weak = check_a1_a2(e.coeff.as_ref(), Some(KappaFunction::linear(1.0)), 0.0, &pairs, &s.zero_segment(), 1.0, 11).unwrap();
        assert!(h2.passed && weak.passed());
        assert_relative_eq!(h2.worst_ratio, weak.a1.worst_ratio, max_relative = 1e-12);
    }

    #[test]
    fn a2_with_sine_forcing() {
        let s = sampler(10);
        let coeff = FnCoefficients::new("sine", 1).drift(|t, _, out| out[0] = t.sin());
        let pairs = s.pairs();
        let w = check_a1_a2(&coeff, Some(KappaFunction::linear(1.0)), 1.0, &pairs, &s.zero_segment(), 10.0, 1001).unwrap();
        assert!(w.a2.passed);
        assert!(w.a2.worst_ratio > 0.99);
        let w = check_a1_a2(&coeff, Some(KappaFunction::linear(1.0)), 0.5, &pairs, &s.zero_segment(), 10.0, 1001).unwrap();
        assert!(!w.a2.passed);
    }

    #[test]
    fn cubic_dissipative_passes_a1_with_log_kappa() {
        let s = sampler(2000);
        let e = catalog_entry("cubic-dissipative", 1.0).unwrap();
        let w = check_a1_a2(e.coeff.as_ref(), Some(KappaFunction::log_modulus(2.0)), 0.0, &s.pairs(), &s.zero_segment(), 1.0, 11).unwrap();
        assert!(w.passed(), "{w:?}");
    }

    #[test]
    fn missing_kappa_is_an_error() {
        let s = sampler(2);
        let e = catalog_entry("linear", 1.0).unwrap();
        let err = check_a1_a2(e.coeff.as_ref(), None, 0.0, &s.pairs(), &s.zero_segment(), 1.0, 3).unwrap_err();
        assert_eq!(err, Error::MissingKappa("linear".into()));
    }

    #[test]
    fn unknown_problem() {
        assert_eq!(catalog_entry("quartic", 1.0).unwrap_err(), Error::UnknownProblem("quartic".into()));
        assert_eq!(catalog(1.0).len(), CATALOG_IDS.len());
    }

    #[test]
    fn sampler_respects_radius() {
        let s = sampler(500);
        for (t, seg) in s.segments() {
            assert!((0.0..=1.0).contains(&t));
            assert!(seg.fading_norm().unwrap() <= 10.0 * (1.0 + 1e-12));
        }
    }
}
