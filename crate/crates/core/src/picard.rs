//! Picard iteration for the integral form
//! `y(t) = zeta(0) + int f(v, y_v) dv + int g(v, y_v) d<B>(v) + int h(v, y_v) dB(v)`
//! on simulated path bundles, plus a one-pass Euler reference scheme.
//!
//! All three integrals are left-point Riemann sums on the bundle grid.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{CoeffValues, Coefficients};
use crate::error::{Error, Result};
use crate::gbm::{BrownianPath, Estimate, ScenarioBundle};
use crate::grid::TimeGrid;
use crate::phase_space::{euclid, HistoryPath, InitialData, InitialHistory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub t_end: f64,
    pub grid_n: usize,
    pub k_max: usize,
    pub tol: f64,
    /// Explicit truncation horizon; derived from `truncation_rel_tol` when absent.
    pub tau_trunc: Option<f64>,
    pub truncation_rel_tol: f64,
    /// Iterations exempt from the stagnation check. Useful on long horizons,
    /// where successive differences may grow for the first `~M T` iterations.
    pub stall_after: usize,
    /// Keep iterating to at least this many iterations even below `tol`.
    pub min_iterations: usize,
}

impl SolverConfig {
    pub fn new(t_end: f64, grid_n: usize) -> Self {
        Self { t_end, grid_n, k_max: 50, tol: 1e-10, tau_trunc: None, truncation_rel_tol: 1e-8, stall_after: 0, min_iterations: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {}", self.t_end)));
        }
        if self.grid_n == 0 {
            return Err(Error::InvalidParameter("grid_n must be at least 1".into()));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(tau) = self.tau_trunc {
            if !(tau > 0.0) {
                return Err(Error::InvalidParameter(format!("tau_trunc must be positive, got {tau}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.grid_n)
    }

    /// Truncation horizon: the explicit value, or the smallest `tau` with
    /// `truncation_error(zeta, tau) <= rel_tol * ||zeta||_q`.
    pub fn resolve_tau(&self, zeta: &InitialData) -> f64 {
        self.tau_trunc.unwrap_or_else(|| zeta.truncation_horizon(self.truncation_rel_tol, self.t_end / self.grid_n as f64))
    }

    pub fn history(&self, zeta: &InitialData) -> Result<InitialHistory> {
        self.validate()?;
        InitialHistory::new(zeta.clone(), self.t_end / self.grid_n as f64, self.resolve_tau(zeta))
    }

    fn check_bundle(&self, bundle: &ScenarioBundle) -> Result<()> {
        let g = bundle.grid();
        if g.steps() != self.grid_n || (g.t_end() - self.t_end).abs() > 1e-12 * self.t_end {
            return Err(Error::Mismatch(format!(
                "solver grid (T = {}, N = {}) differs from bundle grid (T = {}, N = {})",
                self.t_end,
                self.grid_n,
                g.t_end(),
                g.steps()
            )));
        }
        Ok(())
    }
}

/// Solution values of one scenario; each path is `(N + 1) * dim` values,
/// one state per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSolution {
    pub id: String,
    pub paths: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SolutionEnsemble {
    grid: TimeGrid,
    history: Arc<InitialHistory>,
    scenarios: Vec<ScenarioSolution>,
}

impl SolutionEnsemble {
    /// `y == zeta(0)` on every path of `bundle`.
    pub fn constant_start(history: Arc<InitialHistory>, bundle: &ScenarioBundle) -> Self {
        let grid = *bundle.grid();
        let start: Vec<f64> = history.zeta0().iter().copied().cycle().take(grid.len() * history.dim()).collect();
        let scenarios = bundle
            .groups()
            .iter()
            .map(|g| ScenarioSolution { id: g.scenario.id().to_string(), paths: vec![start.clone(); g.paths.len()] })
            .collect();
        Self { grid, history, scenarios }
    }

    pub fn from_parts(grid: TimeGrid, history: Arc<InitialHistory>, scenarios: Vec<ScenarioSolution>) -> Result<Self> {
        let ens = Self { grid, history, scenarios };
        for s in &ens.scenarios {
            for p in &s.paths {
                HistoryPath::new(&ens.history, p, grid)?;
            }
        }
        Ok(ens)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.history.dim()
    }

    pub fn history(&self) -> &InitialHistory {
        &self.history
    }

    pub fn shared_history(&self) -> Arc<InitialHistory> {
        Arc::clone(&self.history)
    }

    pub fn scenarios(&self) -> &[ScenarioSolution] {
        &self.scenarios
    }

    pub fn path(&self, scenario: usize, path: usize) -> &[f64] {
        &self.scenarios[scenario].paths[path]
    }

    pub fn history_path(&self, scenario: usize, path: usize) -> HistoryPath<'_> {
        HistoryPath::new(&self.history, self.path(scenario, path), self.grid).expect("ensemble paths match their grid")
    }

    /// `y(t_i)` on one path.
    pub fn value(&self, scenario: usize, path: usize, i: usize) -> &[f64] {
        let d = self.dim();
        &self.path(scenario, path)[i * d..(i + 1) * d]
    }

    /// Sublinear expectation of a per-path functional.
    pub fn expectation(&self, functional: impl Fn(&[f64]) -> f64 + Sync) -> Result<Estimate> {
        let samples: Vec<(&str, Vec<f64>)> = self
            .scenarios
            .iter()
            .map(|s| (s.id.as_str(), s.paths.par_iter().map(|p| functional(p)).collect()))
            .collect();
        Estimate::from_samples(samples)
    }

    /// `E^[sup_{0<=t<=T} |y(t)|^2]`.
    pub fn sup_sq(&self) -> Result<Estimate> {
        let d = self.dim();
        self.expectation(|p| p.chunks(d).map(|y| euclid(y).powi(2)).fold(0.0, f64::max))
    }

    /// `E^[sup_{0<=t<=T} |y(t) - z(t)|^2]` over matching paths.
    pub fn sup_sq_distance(&self, other: &Self) -> Result<Estimate> {
        self.check_compatible(other)?;
        let d = self.dim();
        let samples: Vec<(&str, Vec<f64>)> = self
            .scenarios
            .iter()
            .zip(&other.scenarios)
            .map(|(a, b)| {
                let xs = a
                    .paths
                    .par_iter()
                    .zip(&b.paths)
                    .map(|(p, q)| sup_sq_diff(p, q, d))
                    .collect();
                (a.id.as_str(), xs)
            })
            .collect();
        Estimate::from_samples(samples)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        let same_shape = self.grid == other.grid
            && self.dim() == other.dim()
            && self.scenarios.len() == other.scenarios.len()
            && self
                .scenarios
                .iter()
                .zip(&other.scenarios)
                .all(|(a, b)| a.id == b.id && a.paths.len() == b.paths.len());
        if same_shape {
            Ok(())
        } else {
            Err(Error::Mismatch("ensembles differ in grid, dimension or scenario layout".into()))
        }
    }

    fn check_bundle(&self, bundle: &ScenarioBundle) -> Result<()> {
        let same = *bundle.grid() == self.grid
            && bundle.groups().len() == self.scenarios.len()
            && bundle
                .groups()
                .iter()
                .zip(&self.scenarios)
                .all(|(g, s)| g.scenario.id() == s.id && g.paths.len() == s.paths.len());
        if same {
            Ok(())
        } else {
            Err(Error::Mismatch("ensemble and bundle differ in grid or scenario layout".into()))
        }
    }

    /// Columns `scenario,path,t,y0,...`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let d = self.dim();
        let header: Vec<String> = (0..d).map(|k| format!("y{k}")).collect();
        writeln!(w, "scenario,path,t,{}", header.join(","))?;
        for s in &self.scenarios {
            for (p, path) in s.paths.iter().enumerate() {
                for (i, y) in path.chunks(d).enumerate() {
                    let ys: Vec<String> = y.iter().map(|v| format!("{v:e}")).collect();
                    writeln!(w, "{},{},{:e},{}", s.id, p, self.grid.time(i), ys.join(","))?;
                }
            }
        }
        Ok(())
    }
}

fn sup_sq_diff(a: &[f64], b: &[f64], d: usize) -> f64 {
    a.chunks(d)
        .zip(b.chunks(d))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `f dt + g d<B> + h dB` at step `i` of `bm`, written into `out`.
pub fn integrate_step(values: &CoeffValues, bm: &BrownianPath, i: usize, dt: f64, out: &mut [f64]) {
    let (dqv, db) = (bm.dqv()[i], bm.db()[i]);
    for (k, o) in out.iter_mut().enumerate() {
        *o = values.f[k] * dt + values.g[k] * dqv + values.h[k] * db;
    }
}

/// Where the segments fed to the coefficients come from.
enum Source<'a> {
    /// The previous Picard iterate.
    Iterate(&'a [f64]),
    /// The solution being built (Euler).
    Evolving,
}

struct PathLabel<'a> {
    scenario: &'a str,
    path: usize,
}

fn integrate_path(
    coeff: &dyn Coefficients,
    history: &InitialHistory,
    grid: &TimeGrid,
    bm: &BrownianPath,
    source: Source<'_>,
    label: PathLabel<'_>,
) -> Result<Vec<f64>> {
    let d = history.dim();
    let dt = grid.dt();
    let window = history.window();
    let n = grid.steps();
    let mut out = Vec::with_capacity((n + 1) * d);
    out.extend_from_slice(history.zeta0());
    let mut prefix_max = Vec::with_capacity(n + 1);
    let mut running = 0.0f64;
    let mut values = CoeffValues::zeros(d);
    let mut inc = vec![0.0; d];
    for i in 0..n {
        {
            let src: &[f64] = match source {
                Source::Iterate(prev) => prev,
                Source::Evolving => &out,
            };
            running = running.max(euclid(&src[i * d..(i + 1) * d]));
            prefix_max.push(running);
            let tail_max = if i > window { prefix_max[i - window - 1] } else { 0.0 };
            let seg = history.segment_view(src, i, tail_max);
            coeff.eval(grid.time(i), &seg, &mut values);
        }
        integrate_step(&values, bm, i, dt, &mut inc);
        if inc.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIncrement { scenario: label.scenario.to_string(), path: label.path, step: i });
        }
        for k in 0..d {
            let next = out[i * d + k] + inc[k];
            out.push(next);
        }
    }
    Ok(out)
}

fn check_dims(coeff: &dyn Coefficients, history: &InitialHistory) -> Result<()> {
    if coeff.dim() != history.dim() {
        return Err(Error::Mismatch(format!(
            "coefficients act on dimension {}, initial data has dimension {}",
            coeff.dim(),
            history.dim()
        )));
    }
    Ok(())
}

/// One Picard step: coefficients are evaluated on the segments of `prev`.
pub fn picard_iterate(prev: &SolutionEnsemble, coeff: &dyn Coefficients, bundle: &ScenarioBundle) -> Result<SolutionEnsemble> {
    prev.check_bundle(bundle)?;
    check_dims(coeff, &prev.history)?;
    let scenarios = bundle
        .groups()
        .iter()
        .zip(&prev.scenarios)
        .map(|(g, s)| {
            let paths = g
                .paths
                .par_iter()
                .zip(&s.paths)
                .enumerate()
                .map(|(p, (bm, prev_path))| {
                    let label = PathLabel { scenario: g.scenario.id(), path: p };
                    integrate_path(coeff, &prev.history, &prev.grid, bm, Source::Iterate(prev_path), label)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ScenarioSolution { id: s.id.clone(), paths })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolutionEnsemble { grid: prev.grid, history: Arc::clone(&prev.history), scenarios })
}

/// Explicit recursion `y(t_{i+1}) = y(t_i) + increment` with segments of the
/// solution built so far.
pub fn euler_reference(
    coeff: &dyn Coefficients,
    zeta: &InitialData,
    bundle: &ScenarioBundle,
    cfg: &SolverConfig,
) -> Result<SolutionEnsemble> {
    cfg.check_bundle(bundle)?;
    let history = Arc::new(cfg.history(zeta)?);
    euler_with_history(coeff, history, bundle)
}

pub fn euler_with_history(
    coeff: &dyn Coefficients,
    history: Arc<InitialHistory>,
    bundle: &ScenarioBundle,
) -> Result<SolutionEnsemble> {
    check_dims(coeff, &history)?;
    let grid = *bundle.grid();
    let scenarios = bundle
        .groups()
        .iter()
        .map(|g| {
            let paths = g
                .paths
                .par_iter()
                .enumerate()
                .map(|(p, bm)| {
                    let label = PathLabel { scenario: g.scenario.id(), path: p };
                    integrate_path(coeff, &history, &grid, bm, Source::Evolving, label)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ScenarioSolution { id: g.scenario.id().to_string(), paths })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolutionEnsemble { grid, history, scenarios })
}

/// Final ensemble of a Picard run together with its diagnostics.
///
/// `diagnostics[k]` is `d_k = E^[sup_{0<=v<=T} |y^{k+1}(v) - y^k(v)|^2]`,
/// so `diagnostics.len()` is the number of iterations performed.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub ensemble: SolutionEnsemble,
    pub diagnostics: Vec<f64>,
    pub converged: bool,
}

impl SolveOutcome {
    pub fn iterations(&self) -> usize {
        self.diagnostics.len()
    }
}

/// Picard iteration from `y^0 == zeta(0)`.
pub fn solve(
    coeff: &dyn Coefficients,
    zeta: &InitialData,
    bundle: &ScenarioBundle,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    solve_observed(coeff, zeta, bundle, cfg, |_, _| {})
}

/// Like [`solve`], calling `observe(k, &y^k)` for every iterate, `y^0` included.
pub fn solve_observed(
    coeff: &dyn Coefficients,
    zeta: &InitialData,
    bundle: &ScenarioBundle,
    cfg: &SolverConfig,
    observe: impl FnMut(usize, &SolutionEnsemble),
) -> Result<SolveOutcome> {
    cfg.check_bundle(bundle)?;
    let history = Arc::new(cfg.history(zeta)?);
    let start = SolutionEnsemble::constant_start(history, bundle);
    iterate_from(coeff, start, bundle, cfg, observe)
}

/// Picard iteration from an arbitrary starting ensemble (warm start).
pub fn solve_from(
    coeff: &dyn Coefficients,
    start: SolutionEnsemble,
    bundle: &ScenarioBundle,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.check_bundle(bundle)?;
    iterate_from(coeff, start, bundle, cfg, |_, _| {})
}

fn iterate_from(
    coeff: &dyn Coefficients,
    start: SolutionEnsemble,
    bundle: &ScenarioBundle,
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, &SolutionEnsemble),
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let mut current = start;
    observe(0, &current);
    let mut diagnostics = Vec::new();
    let mut non_decreasing = 0;
    for k in 0..cfg.k_max {
        let next = picard_iterate(&current, coeff, bundle)?;
        let d_k = next.sup_sq_distance(&current)?.value;
        observe(k + 1, &next);
        current = next;
        if let Some(&last) = diagnostics.last() {
            if d_k >= last && d_k > cfg.tol && k >= cfg.stall_after {
                non_decreasing += 1;
            } else {
                non_decreasing = 0;
            }
        }
        diagnostics.push(d_k);
        if d_k <= cfg.tol && diagnostics.len() >= cfg.min_iterations {
            return Ok(SolveOutcome { ensemble: current, diagnostics, converged: true });
        }
        if non_decreasing >= 3 {
            return Err(Error::NonContracting { iterations: diagnostics.len(), last: d_k });
        }
    }
    Ok(SolveOutcome { ensemble: current, diagnostics, converged: false })
}

/// Columns `k,d_k,bound_k`; `bound` is called with the iteration index.
pub fn write_diagnostics_csv(diagnostics: &[f64], bound: impl Fn(usize) -> f64, mut w: impl Write) -> Result<()> {
    writeln!(w, "k,d_k,bound_k")?;
    for (k, d) in diagnostics.iter().enumerate() {
        writeln!(w, "{k},{d:e},{:e}", bound(k))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{catalog_entry, FnCoefficients, LinearDelay};
    use crate::gbm::VolatilityScenario;
    use crate::phase_space::Profile;
    use approx::assert_relative_eq;

    fn setup(sigma: f64, n: usize, paths: usize) -> (ScenarioBundle, SolverConfig, InitialData) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let bundle = ScenarioBundle::simulate(&[VolatilityScenario::constant("s", sigma)], grid, paths, 7).unwrap();
        let zeta = InitialData::new(Profile::Constant(1.0), 1.0).unwrap();
        (bundle, SolverConfig::new(1.0, n), zeta)
    }

    fn unit_drift() -> FnCoefficients {
        FnCoefficients::new("one", 1).drift(|_, _, out| out[0] = 1.0)
    }

    #[test]
    fn integrate_step_examples() {
        let bm = BrownianPath::from_increments(vec![0.3], vec![0.025]).unwrap();
        let mut out = [0.0];
        let mut v = CoeffValues::zeros(1);
        v.f[0] = 1.0;
        integrate_step(&v, &bm, 0, 0.1, &mut out);
        assert_eq!(out[0], 0.1);
        let mut v = CoeffValues::zeros(1);
        v.g[0] = 1.0;
        integrate_step(&v, &bm, 0, 0.1, &mut out);
        assert_eq!(out[0], 0.025);
        let mut v = CoeffValues::zeros(1);
        v.h[0] = 1.0;
        integrate_step(&v, &bm, 0, 0.1, &mut out);
        assert_eq!(out[0], 0.3);
    }

    #[test]
    fn qv_increment_from_bundle() {
        let (bundle, cfg, zeta) = setup(0.5, 10, 2);
        let g_only = FnCoefficients::new("g", 1).qv_drift(|_, _, out| out[0] = 1.0);
        let y = euler_reference(&g_only, &zeta, &bundle, &cfg).unwrap();
        assert_relative_eq!(y.value(0, 0, 1)[0], 1.0 + 0.025, max_relative = 1e-14);
    }

    #[test]
    fn zero_coefficients_give_constant_paths() {
        let (bundle, cfg, zeta) = setup(1.0, 16, 4);
        let out = solve(&FnCoefficients::zero(1), &zeta, &bundle, &cfg).unwrap();
        assert!(out.converged);
        assert_eq!(out.diagnostics, vec![0.0]);
        for p in &out.ensemble.scenarios()[0].paths {
            assert!(p.iter().all(|&v| v == 1.0));
        }
        let e = euler_reference(&FnCoefficients::zero(1), &zeta, &bundle, &cfg).unwrap();
        assert!(e.scenarios()[0].paths.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn unit_drift_ignores_previous_iterate() {
        let (bundle, cfg, zeta) = setup(1.0, 20, 3);
        let history = Arc::new(cfg.history(&zeta).unwrap());
        let mut junk = SolutionEnsemble::constant_start(Arc::clone(&history), &bundle);
        junk.scenarios[0].paths[1][7] = 42.0;
        let y = picard_iterate(&junk, &unit_drift(), &bundle).unwrap();
        let e = euler_reference(&unit_drift(), &zeta, &bundle, &cfg).unwrap();
        for i in 0..=20 {
            let t = bundle.grid().time(i);
            assert_relative_eq!(y.value(0, 1, i)[0], 1.0 + t, max_relative = 1e-12);
            assert_relative_eq!(e.value(0, 1, i)[0], 1.0 + t, max_relative = 1e-12);
        }
    }

    fn decay() -> LinearDelay {
        LinearDelay { label: "decay".into(), dim: 1, a: -1.0, delay_coeff: 0.0, delay: 0.0, g: 0.0, h: 0.0 }
    }

    #[test]
    fn first_iterate_is_first_order_taylor() {
        let (bundle, cfg, zeta) = setup(1.0, 10, 1);
        let history = Arc::new(cfg.history(&zeta).unwrap());
        let y0 = SolutionEnsemble::constant_start(history, &bundle);
        let y1 = picard_iterate(&y0, &decay(), &bundle).unwrap();
        for i in 0..=10 {
            // 1 - sum_{j<i} dt
            let oracle = 1.0 - (0..i).map(|_| 0.1).sum::<f64>();
            assert_relative_eq!(y1.value(0, 0, i)[0], oracle, max_relative = 1e-12);
        }
        // second iterate: 1 - t_i + sum_{j<i} t_j dt
        let y2 = picard_iterate(&y1, &decay(), &bundle).unwrap();
        for i in 0..=10 {
            let oracle = 1.0 - 0.1 * i as f64 + (0..i).map(|j| 0.1 * j as f64 * 0.1).sum::<f64>();
            assert_relative_eq!(y2.value(0, 0, i)[0], oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn euler_decay_matches_closed_recursion() {
        let n = 200;
        let (bundle, cfg, zeta) = setup(1.0, n, 1);
        let y = euler_reference(&decay(), &zeta, &bundle, &cfg).unwrap();
        let end = y.value(0, 0, n)[0];
        assert_relative_eq!(end, (1.0 - 1.0 / n as f64).powi(n as i32), max_relative = 1e-12);
        assert!((end - (-1.0f64).exp()).abs() < 1.0 / n as f64);
    }

    #[test]
    fn picard_converges_to_euler() {
        let (bundle, cfg, zeta) = setup(0.8, 64, 8);
        let e = catalog_entry("linear", 1.0).unwrap();
        let out = solve(e.coeff.as_ref(), &zeta, &bundle, &cfg).unwrap();
        assert!(out.converged);
        let euler = euler_reference(e.coeff.as_ref(), &zeta, &bundle, &cfg).unwrap();
        assert!(out.ensemble.sup_sq_distance(&euler).unwrap().value <= 10.0 * cfg.tol);
    }

    #[test]
    fn bundle_mismatch_is_an_error() {
        let (bundle, _, zeta) = setup(1.0, 16, 2);
        let cfg = SolverConfig::new(1.0, 32);
        assert!(matches!(solve(&unit_drift(), &zeta, &bundle, &cfg), Err(Error::Mismatch(_))));
    }

    #[test]
    fn non_finite_increment_names_the_step() {
        let (bundle, cfg, zeta) = setup(1.0, 8, 2);
        let blowup = FnCoefficients::new("blow", 1).drift(|t, _, out| out[0] = if t > 0.3 { f64::NAN } else { 0.0 });
        let err = euler_reference(&blowup, &zeta, &bundle, &cfg).unwrap_err();
        assert_eq!(err, Error::NonFiniteIncrement { scenario: "s".into(), path: 0, step: 3 });
    }

    #[test]
    fn growing_differences_are_reported() {
        let (bundle, mut cfg, zeta) = setup(1.0, 32, 2);
        cfg.k_max = 20;
        // y^{k+1} depends on y^k only through an amplified global term, so
        // differences grow every iteration
        let amp = FnCoefficients::new("amp", 1).drift(|_, s, out| out[0] = 40.0 * s.lag(s.len() - 1)[0] + 40.0 * s.at_zero()[0]);
        let err = solve(&amp, &zeta, &bundle, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonContracting { .. }), "{err:?}");
    }

    #[test]
    fn diagnostics_csv_layout() {
        let mut buf = Vec::new();
        write_diagnostics_csv(&[0.5, 0.25], |k| k as f64, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,d_k,bound_k\n0,5e-1,0e0\n1,2.5e-1,1e0\n");
    }
}
