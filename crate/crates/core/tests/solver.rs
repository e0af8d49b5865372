use std::sync::Arc;

use gsfde::coefficients::{catalog_entry, FnCoefficients};
use gsfde::gbm::{BrownianPath, FamilyKind, ScenarioBundle, ScenarioFamily, ScenarioPaths, VolatilityBand, VolatilityScenario};
use gsfde::grid::TimeGrid;
use gsfde::phase_space::InitialData;
use gsfde::picard::{euler_reference, euler_with_history, solve, SolverConfig};
use gsfde::Error;

fn desk_bundle(t_end: f64, n: usize, paths: usize, seed: u64) -> ScenarioBundle {
    let band = VolatilityBand::new(0.5, 1.0).unwrap();
    let grid = TimeGrid::new(t_end, n).unwrap();
    ScenarioBundle::generate(band, ScenarioFamily::new(FamilyKind::BangBang, t_end), 4, grid, paths, seed).unwrap()
}

fn zeta(id: &str) -> InitialData {
    InitialData::parse(id, 1.0).unwrap()
}

#[test]
fn degenerate_band_converges_within_twelve_iterations() {
    let grid = TimeGrid::new(1.0, 256).unwrap();
    let bundle = ScenarioBundle::simulate(&[VolatilityScenario::constant("one", 1.0)], grid, 64, 5).unwrap();
    let coeff = FnCoefficients::new("decay", 1)
        .drift(|_, s, out| out[0] = -s.at_zero()[0])
        .diffusion(|_, s, out| out[0] = 0.1 * s.at_zero()[0]);
    let out = solve(&coeff, &zeta("const:1"), &bundle, &SolverConfig::new(1.0, 256)).unwrap();
    assert!(out.converged);
    assert!(out.iterations() < 12, "{:?}", out.diagnostics);
    // superexponential: each ratio smaller than the one before it, once past the first few
    let d = &out.diagnostics;
    for k in 3..d.len() - 1 {
        assert!(d[k + 1] / d[k] < d[k] / d[k - 1], "{d:?}");
    }
}

#[test]
fn sqrt_counterexample_does_not_converge() {
    let entry = catalog_entry("sqrt-counterexample", 1.0).unwrap();
    let bundle = desk_bundle(1.0, 256, 16, 3);
    let cfg = SolverConfig { k_max: 40, ..SolverConfig::new(1.0, 256) };
    match solve(entry.coeff.as_ref(), &zeta(entry.default_initial), &bundle, &cfg) {
        Err(Error::NonContracting { .. }) => {}
        Ok(out) => assert!(!out.converged, "{:?}", out.diagnostics),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn picard_limit_is_the_euler_recursion_on_every_grid() {
    for id in ["linear", "no-memory-linear", "fading-average"] {
        let entry = catalog_entry(id, 1.0).unwrap();
        for n in [32, 64, 128] {
            let bundle = desk_bundle(1.0, n, 8, 11);
            let cfg = SolverConfig::new(1.0, n);
            let z = zeta("const:1");
            let picard = solve(entry.coeff.as_ref(), &z, &bundle, &cfg).unwrap();
            assert!(picard.converged, "{id} at n = {n}");
            let euler = euler_reference(entry.coeff.as_ref(), &z, &bundle, &cfg).unwrap();
            let gap = picard.ensemble.sup_sq_distance(&euler).unwrap().value;
            assert!(gap <= 10.0 * cfg.tol, "{id} at n = {n}: gap {gap:e}");
        }
    }
}

#[test]
fn memoryless_problem_ignores_truncation() {
    let entry = catalog_entry("no-memory-linear", 1.0).unwrap();
    let bundle = desk_bundle(1.0, 128, 16, 2);
    let z = zeta("exp:0.5");
    let short = SolverConfig { tau_trunc: Some(0.5), ..SolverConfig::new(1.0, 128) };
    let long = SolverConfig { tau_trunc: Some(20.0), ..SolverConfig::new(1.0, 128) };
    let a = solve(entry.coeff.as_ref(), &z, &bundle, &short).unwrap();
    let b = solve(entry.coeff.as_ref(), &z, &bundle, &long).unwrap();
    assert_eq!(a.diagnostics, b.diagnostics);
    for s in 0..a.ensemble.scenarios().len() {
        for p in 0..16 {
            assert_eq!(a.ensemble.path(s, p), b.ensemble.path(s, p));
        }
    }
}

#[test]
fn solution_is_adapted_to_the_noise() {
    // replacing every increment from step j on must leave y(t_0..t_j) untouched
    let n = 64;
    let j = 25;
    let grid = TimeGrid::new(1.0, n).unwrap();
    let base = desk_bundle(1.0, n, 8, 1);
    let other = desk_bundle(1.0, n, 8, 2);
    let groups: Vec<ScenarioPaths> = base
        .groups()
        .iter()
        .zip(other.groups())
        .map(|(a, b)| ScenarioPaths {
            scenario: a.scenario.clone(),
            paths: a
                .paths
                .iter()
                .zip(&b.paths)
                .map(|(pa, pb)| {
                    let db = pa.db()[..j].iter().chain(&pb.db()[j..]).copied().collect();
                    let dqv = pa.dqv()[..j].iter().chain(&pb.dqv()[j..]).copied().collect();
                    BrownianPath::from_increments(db, dqv).unwrap()
                })
                .collect(),
        })
        .collect();
    let spliced = ScenarioBundle::from_groups(grid, base.seed(), groups).unwrap();
    let entry = catalog_entry("linear", 1.0).unwrap();
    let cfg = SolverConfig::new(1.0, n);
    let z = zeta("const:1");
    // the Euler recursion is adapted step by step, bit for bit
    let a = euler_reference(entry.coeff.as_ref(), &z, &base, &cfg).unwrap();
    let b = euler_reference(entry.coeff.as_ref(), &z, &spliced, &cfg).unwrap();
    let mut differs_later = false;
    for s in 0..a.scenarios().len() {
        for p in 0..8 {
            assert_eq!(a.path(s, p)[..=j], b.path(s, p)[..=j]);
            differs_later |= a.path(s, p)[j + 1..] != b.path(s, p)[j + 1..];
        }
    }
    assert!(differs_later);
    // Picard stops on a whole-path criterion, so the prefixes agree to the tolerance
    let a = solve(entry.coeff.as_ref(), &z, &base, &cfg).unwrap().ensemble;
    let b = solve(entry.coeff.as_ref(), &z, &spliced, &cfg).unwrap().ensemble;
    for s in 0..a.scenarios().len() {
        for p in 0..8 {
            let gap = a.path(s, p)[..=j].iter().zip(&b.path(s, p)[..=j]).map(|(x, y)| (x - y).powi(2)).fold(0.0, f64::max);
            assert!(gap <= 10.0 * cfg.tol, "scenario {s}, path {p}: {gap:e}");
        }
    }
}

#[test]
fn warm_start_from_euler_stops_immediately() {
    let entry = catalog_entry("linear", 1.0).unwrap();
    let bundle = desk_bundle(1.0, 64, 8, 4);
    let cfg = SolverConfig::new(1.0, 64);
    let history = Arc::new(cfg.history(&zeta("const:1")).unwrap());
    let euler = euler_with_history(entry.coeff.as_ref(), history, &bundle).unwrap();
    let out = gsfde::picard::solve_from(entry.coeff.as_ref(), euler, &bundle, &cfg).unwrap();
    assert!(out.converged);
    assert_eq!(out.iterations(), 1);
    assert!(out.diagnostics[0] <= cfg.tol);
}

#[test]
fn cubic_dissipative_converges_on_a_short_horizon() {
    let entry = catalog_entry("cubic-dissipative", 1.0).unwrap();
    let bundle = desk_bundle(0.25, 256, 64, 9);
    let cfg = SolverConfig::new(0.25, 256);
    let out = solve(entry.coeff.as_ref(), &zeta("const:1"), &bundle, &cfg).unwrap();
    assert!(out.converged, "{:?}", out.diagnostics);
}
