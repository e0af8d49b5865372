//! Fading-memory phase space `C_q((-inf, 0]; R^n)`.
//!
//! A history `psi` lives on the infinite half-line, but every object here
//! stores it on a finite uniform window `[-tau_trunc, 0]` together with an
//! analytic `tail_bound` on `sup_{theta <= -tau_trunc} e^{q theta} |psi(theta)|`.
//! The fading norm of a stored segment is the maximum of the grid supremum
//! and that tail bound.

use std::collections::VecDeque;
use std::f64::consts::E;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Euclidean norm of a state vector.
pub fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scalar profile `theta -> zeta(theta)` of a catalog initial datum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Profile {
    /// `zeta(theta) = c`.
    Constant(f64),
    /// `zeta(theta) = e^{c theta}`.
    Exponential(f64),
    /// `zeta(theta) = (a_0 + a_1 theta + ... + a_d theta^d) e^{c theta}`.
    PolyExp { rate: f64, coeffs: Vec<f64> },
}

/// Deterministic initial history `zeta` on `(-inf, 0]`, broadcast to every
/// component of an `n`-dimensional state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialData {
    profile: Profile,
    q: f64,
    dim: usize,
}

impl InitialData {
    pub fn new(profile: Profile, q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidParameter(format!("decay rate q must be positive, got {q}")));
        }
        match &profile {
            Profile::Constant(c) if !c.is_finite() => {
                return Err(Error::InvalidParameter("constant must be finite".into()))
            }
            Profile::Exponential(c) | Profile::PolyExp { rate: c, .. } if !(*c > -q) => {
                // lim e^{q theta} zeta(theta) only exists (and is zero) when c > -q
                return Err(Error::InvalidParameter(format!(
                    "exponential rate {c} must exceed -q = {}",
                    -q
                )));
            }
            Profile::PolyExp { coeffs, .. } if coeffs.is_empty() || coeffs.iter().any(|a| !a.is_finite()) => {
                return Err(Error::InvalidParameter("polynomial needs finite coefficients".into()))
            }
            _ => {}
        }
        Ok(Self { profile, q, dim: 1 })
    }

    /// Parses a catalog id: `const:<c>`, `exp:<c>` or `poly:<c>:<a0>,<a1>,...`.
    pub fn parse(id: &str, q: f64) -> Result<Self> {
        let unknown = || Error::UnknownInitialData(id.to_string());
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| unknown());
        let mut parts = id.splitn(3, ':');
        let kind = parts.next().ok_or_else(unknown)?;
        let profile = match kind {
            "const" => Profile::Constant(num(parts.next().ok_or_else(unknown)?)?),
            "exp" => Profile::Exponential(num(parts.next().ok_or_else(unknown)?)?),
            "poly" => {
                let rate = num(parts.next().ok_or_else(unknown)?)?;
                let coeffs = parts
                    .next()
                    .ok_or_else(unknown)?
                    .split(',')
                    .map(num)
                    .collect::<Result<Vec<_>>>()?;
                Profile::PolyExp { rate, coeffs }
            }
            _ => return Err(unknown()),
        };
        if parts.next().is_some() && kind != "poly" {
            return Err(unknown());
        }
        Self::new(profile, q)
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        assert!(dim >= 1, "state dimension must be at least 1");
        self.dim = dim;
        self
    }

    pub fn id(&self) -> String {
        match &self.profile {
            Profile::Constant(c) => format!("const:{c}"),
            Profile::Exponential(c) => format!("exp:{c}"),
            Profile::PolyExp { rate, coeffs } => {
                let cs: Vec<String> = coeffs.iter().map(|a| a.to_string()).collect();
                format!("poly:{rate}:{}", cs.join(","))
            }
        }
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Scalar profile value at `theta <= 0`.
    pub fn scalar(&self, theta: f64) -> f64 {
        match &self.profile {
            Profile::Constant(c) => *c,
            Profile::Exponential(c) => (c * theta).exp(),
            Profile::PolyExp { rate, coeffs } => {
                let p = coeffs.iter().rev().fold(0.0, |acc, a| acc * theta + a);
                p * (rate * theta).exp()
            }
        }
    }

    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        out.fill(self.scalar(theta));
    }

    pub fn value(&self, theta: f64) -> Vec<f64> {
        vec![self.scalar(theta); self.dim]
    }

    /// `sup_{s >= depth} e^{-q s} |profile(-s)|`, the scalar tail supremum.
    fn scalar_tail(&self, depth: f64) -> f64 {
        let depth = depth.max(0.0);
        match &self.profile {
            Profile::Constant(c) => c.abs() * (-self.q * depth).exp(),
            Profile::Exponential(c) => (-(self.q + c) * depth).exp(),
            Profile::PolyExp { rate, coeffs } => {
                let r = self.q + rate;
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a.abs() * sup_power_exp(k, r, depth))
                    .sum()
            }
        }
    }

    fn scalar_norm(&self) -> f64 {
        match &self.profile {
            Profile::Constant(c) => c.abs(),
            Profile::Exponential(_) => 1.0,
            Profile::PolyExp { rate, coeffs } => {
                let r = self.q + rate;
                let weighted = |s: f64| (-r * s).exp() * self.scalar(-s).abs();
                let horizon = (coeffs.len() as f64 + 40.0) / r;
                let n = 20_000;
                let h = horizon / n as f64;
                let (best_i, best) = (0..=n)
                    .map(|i| (i, weighted(i as f64 * h)))
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                let refined = golden_max(
                    &weighted,
                    (best_i as f64 - 1.0).max(0.0) * h,
                    (best_i as f64 + 1.0) * h,
                );
                best.max(refined).max(self.scalar_tail(horizon))
            }
        }
    }

    /// `||zeta||_q = sup_{theta <= 0} e^{q theta} |zeta(theta)|`.
    pub fn fading_norm(&self) -> f64 {
        (self.dim as f64).sqrt() * self.scalar_norm()
    }

    /// Analytic bound on `sup_{theta <= -tau} e^{q theta} |zeta(theta)|`.
    pub fn truncation_error(&self, tau: f64) -> f64 {
        (self.dim as f64).sqrt() * self.scalar_tail(tau)
    }

    /// Smallest horizon `tau >= min_tau` (up to bisection accuracy) whose
    /// truncation error is at most `rel_tol * ||zeta||_q`.
    pub fn truncation_horizon(&self, rel_tol: f64, min_tau: f64) -> f64 {
        let target = rel_tol * self.fading_norm();
        if self.truncation_error(min_tau) <= target {
            return min_tau;
        }
        let mut hi = min_tau.max(1.0);
        while self.truncation_error(hi) > target {
            hi *= 2.0;
            if hi > 1e12 {
                return hi;
            }
        }
        let mut lo = hi / 2.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.truncation_error(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// `sup_{s >= depth} s^k e^{-r s}` for `r > 0`.
fn sup_power_exp(k: usize, r: f64, depth: f64) -> f64 {
    if k == 0 {
        return (-r * depth).exp();
    }
    let peak = k as f64 / r;
    let s = depth.max(peak);
    (k as f64 * s.ln() - r * s).exp()
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    for _ in 0..100 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    f(0.5 * (a + b))
}

/// Owned history segment on `[-tau_trunc, 0]`, stored chronologically
/// (`values[0]` is `theta = -tau_trunc`, the last sample is `theta = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    values: Vec<f64>,
    dim: usize,
    dt: f64,
    q: f64,
    tail_bound: f64,
}

impl HistorySegment {
    pub fn new(values: Vec<f64>, dim: usize, dt: f64, q: f64, tail_bound: f64) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter("segment length is not a multiple of dim".into()));
        }
        if !(dt > 0.0) || !(q > 0.0) || !(tail_bound >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "segment needs dt > 0, q > 0, tail_bound >= 0 (got {dt}, {q}, {tail_bound})"
            )));
        }
        Ok(Self { values, dim, dt, q, tail_bound })
    }

    /// Samples `psi` on the window `theta_j = -(len-1-j) dt`.
    pub fn from_fn(
        len: usize,
        dim: usize,
        dt: f64,
        q: f64,
        tail_bound: f64,
        mut psi: impl FnMut(f64, &mut [f64]),
    ) -> Result<Self> {
        let mut values = vec![0.0; len * dim];
        for (j, chunk) in values.chunks_mut(dim).enumerate() {
            psi(-((len - 1 - j) as f64) * dt, chunk);
        }
        Self::new(values, dim, dt, q, tail_bound)
    }

    /// `zeta` restricted to a window of `window` lags.
    pub fn from_initial(zeta: &InitialData, dt: f64, window: usize) -> Self {
        let tail = zeta.truncation_error(window as f64 * dt);
        Self::from_fn(window + 1, zeta.dim(), dt, zeta.q(), tail, |th, out| zeta.eval_into(th, out))
            .expect("initial data is well-formed")
    }

    pub fn view(&self) -> SegmentView<'_> {
        SegmentView {
            head: &[],
            tail: &self.values,
            dim: self.dim,
            dt: self.dt,
            q: self.q,
            tail_bound: self.tail_bound,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn tau_trunc(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn with_q(&self, q: f64) -> Result<Self> {
        Self::new(self.values.clone(), self.dim, self.dt, q, self.tail_bound)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            tail_bound: c.abs() * self.tail_bound,
            ..self.clone()
        }
    }

    /// `self - other`; the tail bounds add (triangle inequality).
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.values.len() != other.values.len() || self.dim != other.dim || self.dt != other.dt {
            return Err(Error::Mismatch("segments live on different windows".into()));
        }
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            tail_bound: self.tail_bound + other.tail_bound,
            ..self.clone()
        })
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.difference(&other.scaled(-1.0))
    }

    pub fn fading_norm(&self) -> Result<f64> {
        self.view().fading_norm()
    }
}

/// `||psi||_q` of a stored segment: grid supremum of `e^{q theta}|psi(theta)|`
/// joined with the tail bound.
pub fn fading_norm(seg: &HistorySegment) -> Result<f64> {
    seg.fading_norm()
}

/// Analytic tail bound of `zeta` beyond `tau_trunc`.
pub fn truncation_error(zeta: &InitialData, tau_trunc: f64) -> f64 {
    zeta.truncation_error(tau_trunc)
}

/// Borrowed segment: a window made of an older `head` and a newer `tail`,
/// both chronological. Coefficient functionals only ever see this type, so
/// the solver can hand out segments without copying.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a> {
    head: &'a [f64],
    tail: &'a [f64],
    dim: usize,
    dt: f64,
    q: f64,
    tail_bound: f64,
}

impl<'a> SegmentView<'a> {
    pub fn len(&self) -> usize {
        (self.head.len() + self.tail.len()) / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn tau_trunc(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.dt
    }

    /// Sample at `theta = -lag * dt`.
    pub fn lag(&self, lag: usize) -> &'a [f64] {
        let d = self.dim;
        let newer = self.tail.len() / d;
        if lag < newer {
            let i = newer - 1 - lag;
            &self.tail[i * d..(i + 1) * d]
        } else {
            let older = self.head.len() / d;
            let i = older - 1 - (lag - newer);
            &self.head[i * d..(i + 1) * d]
        }
    }

    /// `psi(0)`.
    pub fn at_zero(&self) -> &'a [f64] {
        self.lag(0)
    }

    /// Sample at the latest grid point not earlier than `-delay`, clamped to
    /// the window start. `|result| <= e^{q delay} ||psi||_q` always holds.
    pub fn delayed(&self, delay: f64) -> &'a [f64] {
        let lag = ((delay / self.dt) + 1e-9).floor().max(0.0) as usize;
        self.lag(lag.min(self.len() - 1))
    }

    pub fn fading_norm(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::DegenerateSegment);
        }
        let grid_sup = (0..self.len())
            .map(|j| (-self.q * j as f64 * self.dt).exp() * euclid(self.lag(j)))
            .fold(0.0, f64::max);
        Ok(grid_sup.max(self.tail_bound))
    }

    pub fn to_segment(&self) -> HistorySegment {
        let mut values = Vec::with_capacity(self.head.len() + self.tail.len());
        values.extend_from_slice(self.head);
        values.extend_from_slice(self.tail);
        HistorySegment {
            values,
            dim: self.dim,
            dt: self.dt,
            q: self.q,
            tail_bound: self.tail_bound,
        }
    }
}

/// `zeta` sampled once on the solver's step, shared by every path.
#[derive(Debug, Clone)]
pub struct InitialHistory {
    data: InitialData,
    dt: f64,
    window: usize,
    /// `window` samples at `theta = -window*dt, ..., -dt`.
    samples: Vec<f64>,
    zeta0: Vec<f64>,
    norm: f64,
    /// `suffix[m] = max_{m' >= m} e^{q theta_m'} |zeta(theta_m')|`.
    suffix: Vec<f64>,
}

impl InitialHistory {
    /// Samples `zeta` on a window of `ceil(tau_trunc / dt)` lags.
    pub fn new(data: InitialData, dt: f64, tau_trunc: f64) -> Result<Self> {
        if !(dt > 0.0) || !(tau_trunc > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "history needs dt > 0 and tau_trunc > 0 (got {dt}, {tau_trunc})"
            )));
        }
        let window = ((tau_trunc / dt) - 1e-9).ceil().max(1.0) as usize;
        let dim = data.dim();
        let q = data.q();
        let mut samples = vec![0.0; window * dim];
        for (m, chunk) in samples.chunks_mut(dim).enumerate() {
            data.eval_into(-((window - m) as f64) * dt, chunk);
        }
        let mut suffix = vec![0.0f64; window + 1];
        for m in (0..window).rev() {
            let theta = -((window - m) as f64) * dt;
            let w = (q * theta).exp() * euclid(&samples[m * dim..(m + 1) * dim]);
            suffix[m] = suffix[m + 1].max(w);
        }
        let zeta0 = data.value(0.0);
        let norm = data.fading_norm();
        Ok(Self { data, dt, window, samples, zeta0, norm, suffix })
    }

    pub fn data(&self) -> &InitialData {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn q(&self) -> f64 {
        self.data.q()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of lags in a segment window; segments hold `window + 1` points.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn tau_trunc(&self) -> f64 {
        self.window as f64 * self.dt
    }

    pub fn zeta0(&self) -> &[f64] {
        &self.zeta0
    }

    pub fn zeta_norm(&self) -> f64 {
        self.norm
    }

    /// Tail bound of the segment at grid index `i`; `path_tail_max` must be
    /// `max |y(t_j)|` over the path points that fell out of the window
    /// (`j < i - window`), or 0 when there are none.
    pub fn tail_bound_at(&self, i: usize, path_tail_max: f64) -> f64 {
        let q = self.q();
        let t = i as f64 * self.dt;
        if i <= self.window {
            (-q * t).exp() * self.data.truncation_error(self.tau_trunc() - t)
        } else {
            ((-q * t).exp() * self.norm).max((-q * self.tau_trunc()).exp() * path_tail_max)
        }
    }

    /// Segment at grid index `i` of a path whose values (from `t_0`) are
    /// `values`; only `values[..=i]` is read.
    pub fn segment_view<'a>(&'a self, values: &'a [f64], i: usize, path_tail_max: f64) -> SegmentView<'a> {
        let d = self.dim();
        let (head, tail): (&[f64], &[f64]) = if i >= self.window {
            (&[], &values[(i - self.window) * d..(i + 1) * d])
        } else {
            (&self.samples[i * d..], &values[..(i + 1) * d])
        };
        SegmentView {
            head,
            tail,
            dim: d,
            dt: self.dt,
            q: self.q(),
            tail_bound: self.tail_bound_at(i, path_tail_max),
        }
    }

    pub fn initial_segment(&self) -> HistorySegment {
        self.segment_view(&self.zeta0, 0, 0.0).to_segment()
    }
}

/// A solution path glued to its initial history, with the bookkeeping
/// needed to extract `y_t` at any grid time.
#[derive(Debug)]
pub struct HistoryPath<'a> {
    history: &'a InitialHistory,
    values: &'a [f64],
    grid: TimeGrid,
    prefix_max: Vec<f64>,
}

impl<'a> HistoryPath<'a> {
    pub fn new(history: &'a InitialHistory, values: &'a [f64], grid: TimeGrid) -> Result<Self> {
        let d = history.dim();
        if values.len() != grid.len() * d {
            return Err(Error::Mismatch(format!(
                "path holds {} values, grid needs {}",
                values.len(),
                grid.len() * d
            )));
        }
        if (grid.dt() - history.dt()).abs() > 1e-12 * grid.dt() {
            return Err(Error::Mismatch("history and grid use different steps".into()));
        }
        let mut prefix_max = Vec::with_capacity(grid.len());
        let mut m = 0.0f64;
        for y in values.chunks(d) {
            m = m.max(euclid(y));
            prefix_max.push(m);
        }
        Ok(Self { history, values, grid, prefix_max })
    }

    fn path_tail_max(&self, i: usize) -> f64 {
        let w = self.history.window();
        if i > w {
            self.prefix_max[i - w - 1]
        } else {
            0.0
        }
    }

    pub fn view_at(&self, i: usize) -> SegmentView<'_> {
        self.history.segment_view(self.values, i, self.path_tail_max(i))
    }

    /// Tail bound of the segment at grid index `i`.
    pub fn tail_bound(&self, i: usize) -> f64 {
        self.history.tail_bound_at(i, self.path_tail_max(i))
    }

    /// `y_t` for grid time `t`; no interpolation between grid points.
    pub fn segment_at(&self, t: f64) -> Result<HistorySegment> {
        let i = self.grid.index_of(t).ok_or(Error::OffGridSegment(t))?;
        Ok(self.view_at(i).to_segment())
    }

    /// `sup_{0 < v <= t_i} |y(v)|` (zero at `i = 0`).
    pub fn sup_after_zero(&self, i: usize) -> f64 {
        let d = self.history.dim();
        self.values[d..(i + 1) * d].chunks(d).map(euclid).fold(0.0, f64::max)
    }

    /// `||y_{t_i}||_q` for every grid index in `O(N + window)` using a
    /// sliding-window maximum over `e^{q t_j}|y(t_j)|` (kept in log form).
    pub fn fading_norms(&self) -> Vec<f64> {
        let h = self.history;
        let d = h.dim();
        let q = h.q();
        let dt = h.dt();
        let w = h.window();
        let keys: Vec<f64> = self
            .values
            .chunks(d)
            .enumerate()
            .map(|(j, y)| euclid(y).ln() + q * j as f64 * dt)
            .collect();
        let mut deque: VecDeque<usize> = VecDeque::new();
        let mut out = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.len() {
            while deque.back().is_some_and(|&b| keys[b] <= keys[i]) {
                deque.pop_back();
            }
            deque.push_back(i);
            while deque.front().is_some_and(|&f| f + w < i) {
                deque.pop_front();
            }
            let best = deque[0];
            let y_part = (-q * (i - best) as f64 * dt).exp() * euclid(&self.values[best * d..(best + 1) * d]);
            let t = i as f64 * dt;
            let zeta_part = if i < w { (-q * t).exp() * h.suffix[i] } else { 0.0 };
            let tail = h.tail_bound_at(i, self.path_tail_max(i));
            out.push(y_part.max(zeta_part).max(tail));
        }
        out
    }
}

/// `y_t` of `values` (a path on `grid` started from `history`).
pub fn segment_at(history: &InitialHistory, values: &[f64], grid: TimeGrid, t: f64) -> Result<HistorySegment> {
    HistoryPath::new(history, values, grid)?.segment_at(t)
}

/// `ln(e + 1/u)` helper shared with the kappa catalog.
pub(crate) fn log_modulus_factor(u: f64) -> f64 {
    (E + 1.0 / u).ln()
}
