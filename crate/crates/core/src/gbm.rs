//! G-Brownian motion ensembles.
//!
//! The scenario family of the sublinear expectation is approximated by a
//! finite list of piecewise-constant volatility schedules inside a band
//! `[sigma_lo, sigma_hi]`. Under each schedule the canonical process is a
//! classical Brownian martingale with volatility `sigma(t)`, and `<B>` is
//! tracked exactly as `sum sigma(t_i)^2 dt`. The sublinear expectation and
//! the capacity are estimated by the maximum over scenarios of the
//! per-scenario Monte Carlo averages, which is a lower estimate of the true
//! supremum over all admissible volatility processes.
//!
//! Random numbers are counter-based: the stream of path `p` under scenario
//! `s` is a ChaCha8 stream keyed by `(seed, s)` with stream id `p`, so
//! bundles are bit-identical whatever the thread schedule.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolatilityBand {
    sigma_lo: f64,
    sigma_hi: f64,
}

impl VolatilityBand {
    pub fn new(sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        if !(sigma_lo >= 0.0 && sigma_hi > 0.0 && sigma_lo <= sigma_hi && sigma_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "volatility band needs 0 <= sigma_lo <= sigma_hi, sigma_hi > 0 (got [{sigma_lo}, {sigma_hi}])"
            )));
        }
        Ok(Self { sigma_lo, sigma_hi })
    }

    pub fn lo(&self) -> f64 {
        self.sigma_lo
    }

    pub fn hi(&self) -> f64 {
        self.sigma_hi
    }

    pub fn contains(&self, sigma: f64) -> bool {
        sigma >= self.sigma_lo && sigma <= self.sigma_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Constant,
    BangBang,
    PiecewiseRandom,
}

/// Piecewise-constant volatility schedule: `sigma(t) = levels[k]` for
/// `breaks[k] <= t < breaks[k+1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolatilityScenario {
    id: String,
    kind: ScenarioKind,
    breaks: Vec<f64>,
    levels: Vec<f64>,
}

impl VolatilityScenario {
    pub fn constant(id: impl Into<String>, sigma: f64) -> Self {
        Self {
            id: id.into(),
            kind: ScenarioKind::Constant,
            breaks: vec![0.0],
            levels: vec![sigma],
        }
    }

    /// Schedule switching between `lo` and `hi` at the given times.
    pub fn bang_bang(id: impl Into<String>, band: VolatilityBand, switches: &[f64], start_high: bool) -> Self {
        let mut breaks = vec![0.0];
        breaks.extend_from_slice(switches);
        let levels = (0..breaks.len())
            .map(|k| if (k % 2 == 0) == start_high { band.hi() } else { band.lo() })
            .collect();
        Self { id: id.into(), kind: ScenarioKind::BangBang, breaks, levels }
    }

    pub fn piecewise(id: impl Into<String>, breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != levels.len() || breaks[0] != 0.0 {
            return Err(Error::InvalidParameter("piecewise schedule needs matching breaks starting at 0".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || levels.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("breaks must increase and levels be nonnegative".into()));
        }
        Ok(Self { id: id.into(), kind: ScenarioKind::PiecewiseRandom, breaks, levels })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn sigma(&self, t: f64) -> f64 {
        let k = self.breaks.partition_point(|&b| b <= t).max(1) - 1;
        self.levels[k]
    }

    /// Left-point volatility of each grid step.
    pub fn on_grid(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..grid.steps()).map(|i| self.sigma(grid.time(i))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    BangBang,
    PiecewiseRandom,
    /// Alternates bang-bang and piecewise-random schedules.
    Mixed,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bang-bang" => Ok(Self::BangBang),
            "piecewise" | "piecewise-random" => Ok(Self::PiecewiseRandom),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::InvalidParameter(format!("unknown scenario family `{other}`"))),
        }
    }
}

/// How the non-extreme scenarios are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioFamily {
    pub kind: FamilyKind,
    /// Switch times are drawn in `(0, horizon)`.
    pub horizon: f64,
    pub max_switches: usize,
}

impl ScenarioFamily {
    pub fn new(kind: FamilyKind, horizon: f64) -> Self {
        Self { kind, horizon, max_switches: 3 }
    }
}

/// Scenario list for a band: the constant extremes `sigma = sigma_lo` and
/// `sigma = sigma_hi` first, then `count - 2` schedules from `family`.
pub fn generate_scenarios(
    band: VolatilityBand,
    family: ScenarioFamily,
    count: usize,
    seed: u64,
) -> Result<Vec<VolatilityScenario>> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 scenarios (the two extremes), got {count}"
        )));
    }
    if !(family.horizon > 0.0) || family.max_switches == 0 {
        return Err(Error::InvalidParameter("family needs a positive horizon and max_switches >= 1".into()));
    }
    let mut out = vec![
        VolatilityScenario::constant("const-lo", band.lo()),
        VolatilityScenario::constant("const-hi", band.hi()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for idx in 0..count - 2 {
        let n_sw = rng.random_range(1..=family.max_switches);
        let mut times: Vec<f64> = (0..n_sw).map(|_| rng.random::<f64>() * family.horizon).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times.retain(|&t| t > 0.0);
        let bang = match family.kind {
            FamilyKind::BangBang => true,
            FamilyKind::PiecewiseRandom => false,
            FamilyKind::Mixed => idx % 2 == 0,
        };
        if bang {
            let start_high = rng.random::<bool>();
            out.push(VolatilityScenario::bang_bang(format!("bang-bang-{idx}"), band, &times, start_high));
        } else {
            let mut breaks = vec![0.0];
            breaks.extend(times);
            let levels = breaks
                .iter()
                .map(|_| band.lo() + (band.hi() - band.lo()) * rng.random::<f64>())
                .collect();
            out.push(VolatilityScenario::piecewise(format!("piecewise-{idx}"), breaks, levels)?);
        }
    }
    Ok(out)
}

/// One sample path of `B` and `<B>` on a grid, stored both as increments
/// and as running sums.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    db: Vec<f64>,
    dqv: Vec<f64>,
    b: Vec<f64>,
    qv: Vec<f64>,
}

impl BrownianPath {
    /// Builds a path from its increments; `B(t_0) = <B>(t_0) = 0`.
    pub fn from_increments(db: Vec<f64>, dqv: Vec<f64>) -> Result<Self> {
        if db.len() != dqv.len() {
            return Err(Error::Mismatch("B and <B> increments differ in length".into()));
        }
        if dqv.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidParameter("quadratic variation increments must be nonnegative".into()));
        }
        let running = |inc: &[f64]| {
            let mut acc = 0.0;
            std::iter::once(0.0)
                .chain(inc.iter().map(|d| {
                    acc += d;
                    acc
                }))
                .collect::<Vec<_>>()
        };
        let b = running(&db);
        let qv = running(&dqv);
        Ok(Self { db, dqv, b, qv })
    }

    pub fn steps(&self) -> usize {
        self.db.len()
    }

    pub fn db(&self) -> &[f64] {
        &self.db
    }

    pub fn dqv(&self) -> &[f64] {
        &self.dqv
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn qv(&self) -> &[f64] {
        &self.qv
    }

    pub fn b_end(&self) -> f64 {
        *self.b.last().expect("path has t_0")
    }
}

/// All simulated paths of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPaths {
    pub scenario: VolatilityScenario,
    pub paths: Vec<BrownianPath>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn scenario_key(seed: u64, scenario_id: &str) -> [u8; 32] {
    // splitmix64 expansion of (seed, hash(id)) into a ChaCha key
    let mut state = seed ^ fnv1a(scenario_id.as_bytes()).rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        chunk.copy_from_slice(&(z ^ (z >> 31)).to_le_bytes());
    }
    key
}

/// Simulates `n_paths` paths under one scenario. Path `p` is a pure
/// function of `(seed, scenario.id, p)`.
pub fn simulate_paths(
    scenario: &VolatilityScenario,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<ScenarioPaths> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let sigmas = scenario.on_grid(grid);
    let key = scenario_key(seed, scenario.id());
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::from_seed(key);
            rng.set_stream(p as u64);
            let mut db = Vec::with_capacity(sigmas.len());
            let mut dqv = Vec::with_capacity(sigmas.len());
            for &s in &sigmas {
                let z: f64 = rng.sample(StandardNormal);
                db.push(s * sqrt_dt * z);
                dqv.push(s * s * dt);
            }
            BrownianPath::from_increments(db, dqv).expect("nonnegative increments")
        })
        .collect();
    Ok(ScenarioPaths { scenario: scenario.clone(), paths })
}

/// Same as [`simulate_paths`] but on explicit time points, which must form
/// a uniform grid.
pub fn simulate_paths_on(
    scenario: &VolatilityScenario,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<ScenarioPaths> {
    let grid = TimeGrid::from_times(times)?;
    simulate_paths(scenario, &grid, n_paths, seed)
}

/// Ensemble of G-Brownian paths grouped by volatility scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    grid: TimeGrid,
    seed: u64,
    groups: Vec<ScenarioPaths>,
}

impl ScenarioBundle {
    pub fn simulate(scenarios: &[VolatilityScenario], grid: TimeGrid, n_paths: usize, seed: u64) -> Result<Self> {
        let groups = scenarios
            .iter()
            .map(|s| simulate_paths(s, &grid, n_paths, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, seed, groups })
    }

    /// Band + family + counts in one call.
    pub fn generate(
        band: VolatilityBand,
        family: ScenarioFamily,
        scenarios: usize,
        grid: TimeGrid,
        n_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        let list = generate_scenarios(band, family, scenarios, seed)?;
        Self::simulate(&list, grid, n_paths, seed)
    }

    /// Assembles a bundle from hand-built paths (used for splicing tests).
    pub fn from_groups(grid: TimeGrid, seed: u64, groups: Vec<ScenarioPaths>) -> Result<Self> {
        for g in &groups {
            if g.paths.is_empty() {
                return Err(Error::InvalidParameter(format!("scenario `{}` has no paths", g.scenario.id())));
            }
            if g.paths.iter().any(|p| p.steps() != grid.steps()) {
                return Err(Error::Mismatch(format!("scenario `{}` paths do not match the grid", g.scenario.id())));
            }
        }
        Ok(Self { grid, seed, groups })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn groups(&self) -> &[ScenarioPaths] {
        &self.groups
    }

    pub fn n_paths(&self) -> usize {
        self.groups.iter().map(|g| g.paths.len()).sum()
    }

    /// Writes `scenario_id,path_id,t,B,QV` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "scenario_id,path_id,t,B,QV")?;
        for g in &self.groups {
            for (p, path) in g.paths.iter().enumerate() {
                for i in 0..self.grid.len() {
                    writeln!(
                        w,
                        "{},{},{:e},{:e},{:e}",
                        g.scenario.id(),
                        p,
                        self.grid.time(i),
                        path.b()[i],
                        path.qv()[i]
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Per-scenario Monte Carlo statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioEstimate {
    pub scenario: String,
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

/// Sup-over-scenarios estimate together with the full table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// Index into `table` of the dominating scenario.
    pub argmax: usize,
    pub table: Vec<ScenarioEstimate>,
}

impl Estimate {
    /// Builds the estimate from per-scenario samples.
    pub fn from_samples<'a>(groups: impl IntoIterator<Item = (&'a str, Vec<f64>)>) -> Result<Self> {
        let mut table = Vec::new();
        for (id, xs) in groups {
            if let Some(p) = xs.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteFunctional { scenario: id.to_string(), path: p });
            }
            if xs.is_empty() {
                return Err(Error::InvalidParameter(format!("scenario `{id}` has no samples")));
            }
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            table.push(ScenarioEstimate { scenario: id.to_string(), mean, std_err: (var / n as f64).sqrt(), n });
        }
        if table.is_empty() {
            return Err(Error::InvalidParameter("no scenarios to estimate over".into()));
        }
        let argmax = table
            .iter()
            .enumerate()
            .fold(0, |best, (i, e)| if e.mean > table[best].mean { i } else { best });
        Ok(Self { value: table[argmax].mean, argmax, table })
    }

    pub fn std_err(&self) -> f64 {
        self.table[self.argmax].std_err
    }

    pub fn dominating(&self) -> &str {
        &self.table[self.argmax].scenario
    }
}

/// `E^[X] ~ max_s mean_s X` over the bundle.
pub fn sublinear_expectation(
    functional: impl Fn(&BrownianPath) -> f64 + Sync,
    bundle: &ScenarioBundle,
) -> Result<Estimate> {
    let samples: Vec<(&str, Vec<f64>)> = bundle
        .groups
        .iter()
        .map(|g| (g.scenario.id(), g.paths.par_iter().map(&functional).collect()))
        .collect();
    Estimate::from_samples(samples)
}

/// `C^(A) ~ max_s P_s(A)` over the bundle.
pub fn capacity_estimate(event: impl Fn(&BrownianPath) -> bool + Sync, bundle: &ScenarioBundle) -> Estimate {
    let samples: Vec<(&str, Vec<f64>)> = bundle
        .groups
        .iter()
        .map(|g| {
            let xs = g.paths.par_iter().map(|p| if event(p) { 1.0 } else { 0.0 }).collect();
            (g.scenario.id(), xs)
        })
        .collect();
    Estimate::from_samples(samples).expect("indicator samples are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn band() -> VolatilityBand {
        VolatilityBand::new(0.5, 1.0).unwrap()
    }

    #[test]
    fn band_validation() {
        assert!(VolatilityBand::new(0.0, 1.0).is_ok());
        assert!(VolatilityBand::new(1.0, 0.5).is_err());
        assert!(VolatilityBand::new(0.0, 0.0).is_err());
    }

    #[test]
    fn two_scenarios_are_the_extremes() {
        let s = generate_scenarios(band(), ScenarioFamily::new(FamilyKind::Mixed, 1.0), 2, 1).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].levels(), &[0.5]);
        assert_eq!(s[1].levels(), &[1.0]);
        assert!(generate_scenarios(band(), ScenarioFamily::new(FamilyKind::Mixed, 1.0), 1, 1).is_err());
    }

    #[test]
    fn bang_bang_family_is_reproducible() {
        let fam = ScenarioFamily::new(FamilyKind::BangBang, 1.0);
        let a = generate_scenarios(band(), fam, 8, 99).unwrap();
        let b = generate_scenarios(band(), fam, 8, 99).unwrap();
        assert_eq!(a, b);
        let bang: Vec<_> = a.iter().filter(|s| s.kind() == ScenarioKind::BangBang).collect();
        assert_eq!(bang.len(), 6);
        for s in bang {
            assert!(s.levels().iter().all(|&l| l == 0.5 || l == 1.0));
        }
        assert_ne!(a, generate_scenarios(band(), fam, 8, 100).unwrap());
    }

    #[test]
    fn degenerate_band_gives_identical_scenarios() {
        let b = VolatilityBand::new(1.0, 1.0).unwrap();
        let s = generate_scenarios(b, ScenarioFamily::new(FamilyKind::Mixed, 1.0), 6, 5).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        for sc in &s {
            assert!(sc.on_grid(&grid).iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn constant_scenario_quadratic_variation() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let sp = simulate_paths(&VolatilityScenario::constant("c", 0.5), &grid, 10, 3).unwrap();
        for p in &sp.paths {
            assert_relative_eq!(*p.qv().last().unwrap(), 0.25, max_relative = 1e-12);
            assert_eq!(p.b()[0], 0.0);
            assert_eq!(p.qv()[0], 0.0);
        }
    }

    #[test]
    fn bang_bang_quadratic_variation() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let sc = VolatilityScenario::bang_bang("bb", band(), &[0.5], true);
        let oracle: f64 = sc.on_grid(&grid).iter().map(|s| s * s * grid.dt()).sum();
        assert_relative_eq!(oracle, 0.625, max_relative = 1e-12);
        let sp = simulate_paths(&sc, &grid, 4, 3).unwrap();
        for p in &sp.paths {
            assert_relative_eq!(*p.qv().last().unwrap(), 0.625, max_relative = 1e-12);
        }
    }

    #[test]
    fn terminal_mean_is_near_zero() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let sp = simulate_paths(&VolatilityScenario::constant("c", 1.0), &grid, 10_000, 11).unwrap();
        let mean = sp.paths.iter().map(|p| p.b_end()).sum::<f64>() / 1e4;
        assert!(mean.abs() < 4.0 / 100.0, "mean {mean}");
        let var = sp.paths.iter().map(|p| p.b_end().powi(2)).sum::<f64>() / 1e4;
        assert!((var - 1.0).abs() < 0.06, "var {var}");
    }

    #[test]
    fn paths_are_deterministic_and_distinct() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let sc = VolatilityScenario::constant("c", 1.0);
        let a = simulate_paths(&sc, &grid, 5, 7).unwrap();
        let b = simulate_paths(&sc, &grid, 5, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.paths[0], a.paths[1]);
        // a path does not depend on how many siblings were simulated
        let c = simulate_paths(&sc, &grid, 2, 7).unwrap();
        assert_eq!(a.paths[1], c.paths[1]);
    }

    #[test]
    fn non_uniform_grid_is_rejected() {
        let sc = VolatilityScenario::constant("c", 1.0);
        assert!(matches!(simulate_paths_on(&sc, &[0.0, 0.1, 0.3], 1, 0), Err(Error::NonUniformGrid(_))));
    }

    #[test]
    fn estimator_examples() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let scen = generate_scenarios(band(), ScenarioFamily::new(FamilyKind::BangBang, 1.0), 4, 1).unwrap();
        let bundle = ScenarioBundle::simulate(&scen, grid, 4000, 21).unwrap();
        let five = sublinear_expectation(|_| 5.0, &bundle).unwrap();
        assert_eq!(five.value, 5.0);
        let sq = sublinear_expectation(|p| p.b_end().powi(2), &bundle).unwrap();
        assert!((sq.value - 1.0).abs() <= 3.0 * sq.std_err(), "{sq:?}");
        let neg = sublinear_expectation(|p| -p.b_end().powi(2), &bundle).unwrap();
        assert!((neg.value + 0.25).abs() <= 3.0 * neg.std_err(), "{neg:?}");
        assert_eq!(capacity_estimate(|_| true, &bundle).value, 1.0);
        assert_eq!(capacity_estimate(|_| false, &bundle).value, 0.0);
    }

    #[test]
    fn nan_functional_reports_path() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let bundle = ScenarioBundle::simulate(&[VolatilityScenario::constant("c", 1.0)], grid, 3, 0).unwrap();
        let first = bundle.groups()[0].paths[2].clone();
        let err = sublinear_expectation(|p| if *p == first { f64::NAN } else { 0.0 }, &bundle).unwrap_err();
        assert_eq!(err, Error::NonFiniteFunctional { scenario: "c".into(), path: 2 });
    }

    #[test]
    fn csv_export_shape() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let bundle = ScenarioBundle::simulate(&[VolatilityScenario::constant("c", 1.0)], grid, 2, 0).unwrap();
        let mut buf = Vec::new();
        bundle.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "scenario_id,path_id,t,B,QV");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines[1].starts_with("c,0,0e0,0e0,0e0"));
    }
}
