//! Config parsing and the batch experiment runner behind the `gsfde` binary.
//!
//! Configs are flat `key = value` lines. `#` starts a comment and
//! `[section]` headers may be used for grouping; they do not namespace keys.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::coefficients::{catalog_entry, verify_entry, CatalogEntry, KappaFunction, SegmentSampler, CATALOG_IDS};
use crate::error::{Error, Result};
use crate::estimates::{
    bihari_bound, constants, gronwall_bound, growth_rate, moment_bound_check, picard_error_bound, segment_estimate_check,
    BoundReport, ConditionConstants, EstimateConstants, GrowthBound, MomentKind, StepFunction,
};
use crate::gbm::{FamilyKind, ScenarioBundle, ScenarioFamily, VolatilityBand};
use crate::grid::TimeGrid;
use crate::phase_space::InitialData;
use crate::picard::{euler_with_history, solve_from, solve_observed, write_diagnostics_csv, SolutionEnsemble, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Convergence,
    Uniqueness,
    MomentBound,
    GrowthRate,
    ConditionCheck,
    BihariDemo,
}

impl Study {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "convergence" => Study::Convergence,
            "uniqueness" => Study::Uniqueness,
            "moment-bound" => Study::MomentBound,
            "growth-rate" => Study::GrowthRate,
            "condition-check" => Study::ConditionCheck,
            "bihari-demo" => Study::BihariDemo,
            _ => return None,
        })
    }
}

/// A config problem tied to a line and key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub study: Study,
    pub problem: Option<String>,
    pub initial: String,
    pub q: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub scenarios: usize,
    pub family: FamilyKind,
    pub paths: usize,
    pub grid_n: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub seed: u64,
    pub tol: f64,
    pub k_max: usize,
    pub stall_after: usize,
    pub tau_trunc: Option<f64>,
    pub lambda: f64,
    pub c_hat: f64,
    pub c1: f64,
    pub c2: f64,
    /// Picard iterate used as the exact-solution proxy; 0 disables the check.
    pub proxy_k: usize,
    pub horizons: Vec<f64>,
    pub samples: usize,
    pub radius: f64,
    pub kappa: Option<KappaFunction>,
    pub bihari_c: f64,
    pub phi: StepFunction,
    pub bihari_points: usize,
    pub export_bundle: bool,
    pub export_solution: bool,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "study",
    "problem",
    "initial",
    "q",
    "sigma_lo",
    "sigma_hi",
    "scenarios",
    "family",
    "paths",
    "grid_n",
    "T",
    "seed",
    "tol",
    "k_max",
    "stall_after",
    "tau_trunc",
    "lambda",
    "c_hat",
    "c1",
    "c2",
    "proxy_k",
    "horizons",
    "samples",
    "radius",
    "kappa",
    "bihari_c",
    "phi",
    "bihari_points",
    "export_bundle",
    "export_solution",
    "out",
];

struct Raw {
    entries: BTreeMap<String, (usize, String)>,
    diags: Vec<Diagnostic>,
}

impl Raw {
    fn parse(text: &str) -> Self {
        let mut entries = BTreeMap::new();
        let mut diags = Vec::new();
        for (n, raw_line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                diags.push(Diagnostic { line: Some(line_no), field: line.to_string(), message: "expected `key = value`".into() });
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                diags.push(Diagnostic { line: Some(line_no), field: k.to_string(), message: "unknown key".into() });
            } else if let Some((prev, _)) = entries.get(k) {
                diags.push(Diagnostic {
                    line: Some(line_no),
                    field: k.to_string(),
                    message: format!("duplicate key (first set on line {prev})"),
                });
            } else {
                entries.insert(k.to_string(), (line_no, v.to_string()));
            }
        }
        Self { entries, diags }
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(l, _)| *l)
    }

    fn fail(&mut self, key: &str, message: impl Into<String>) {
        let line = self.line(key);
        self.diags.push(Diagnostic { line, field: key.to_string(), message: message.into() });
    }

    fn value<T>(&mut self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Option<T> {
        let (_, v) = self.entries.get(key)?.clone();
        match parse(&v) {
            Ok(x) => Some(x),
            Err(m) => {
                self.fail(key, m);
                None
            }
        }
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        self.value(key, |v| v.parse::<T>().map_err(|_| format!("cannot parse `{v}` as a number")))
            .unwrap_or(default)
    }

    fn flag(&mut self, key: &str) -> bool {
        self.value(key, |v| match v {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(format!("expected true or false, got `{v}`")),
        })
        .unwrap_or(false)
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| format!("cannot parse `{x}` in list"))).collect()
}

/// `phi = 0:1, 0.5:2` means 1 on `[0, 0.5)` and 2 afterwards.
fn parse_step(v: &str) -> std::result::Result<StepFunction, String> {
    let mut breaks = Vec::new();
    let mut values = Vec::new();
    for part in v.split(',') {
        let (b, x) = part.split_once(':').ok_or_else(|| format!("expected `start:value`, got `{part}`"))?;
        breaks.push(b.trim().parse::<f64>().map_err(|_| format!("bad break `{b}`"))?);
        values.push(x.trim().parse::<f64>().map_err(|_| format!("bad value `{x}`"))?);
    }
    StepFunction::new(breaks, values).map_err(|e| e.to_string())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, Vec<Diagnostic>> {
        let mut raw = Raw::parse(text);
        let study = match raw.entries.get("study").cloned() {
            None => {
                raw.fail("study", "missing (one of convergence, uniqueness, moment-bound, growth-rate, condition-check, bihari-demo)");
                None
            }
            Some((_, v)) => {
                let s = Study::parse(&v);
                if s.is_none() {
                    raw.fail("study", format!("unknown study `{v}`"));
                }
                s
            }
        };
        let problem = raw.entries.get("problem").map(|(_, v)| v.clone());
        match (&problem, study) {
            (None, Some(s)) if s != Study::BihariDemo => raw.fail("problem", "missing catalog problem id"),
            (Some(p), _) if !CATALOG_IDS.contains(&p.as_str()) => {
                raw.fail("problem", format!("unknown catalog problem `{p}` (see `gsfde catalog`)"))
            }
            _ => {}
        }
        let seed = if raw.entries.contains_key("seed") {
            raw.num("seed", 0u64)
        } else {
            raw.fail("seed", "missing (runs never fall back to a clock-based seed)");
            0
        };
        let q = raw.num("q", 1.0f64);
        if !(q > 0.0) {
            raw.fail("q", "must be positive");
        }
        let default_initial = problem
            .as_deref()
            .and_then(|p| catalog_entry(p, 1.0).ok())
            .map_or("const:1", |e| e.default_initial);
        let initial = raw.entries.get("initial").map_or_else(|| default_initial.to_string(), |(_, v)| v.clone());
        if q > 0.0 {
            if let Err(e) = InitialData::parse(&initial, q) {
                raw.fail("initial", e.to_string());
            }
        }
        let sigma_lo = raw.num("sigma_lo", 0.5f64);
        let sigma_hi = raw.num("sigma_hi", 1.0f64);
        if let Err(e) = VolatilityBand::new(sigma_lo, sigma_hi) {
            raw.fail("sigma_hi", e.to_string());
        }
        let scenarios = raw.num("scenarios", 8usize);
        if scenarios < 2 {
            raw.fail("scenarios", "must be at least 2 (both band extremes are always simulated)");
        }
        let family = raw
            .value("family", |v| v.parse::<FamilyKind>().map_err(|e| e.to_string()))
            .unwrap_or(FamilyKind::BangBang);
        let paths = raw.num("paths", 256usize);
        if paths == 0 {
            raw.fail("paths", "must be at least 1");
        }
        let grid_n = raw.num("grid_n", 1024usize);
        if grid_n == 0 {
            raw.fail("grid_n", "must be at least 1");
        }
        let t_end = raw.num("T", 1.0f64);
        if !(t_end > 0.0 && t_end.is_finite()) {
            raw.fail("T", "must be positive");
        }
        let tol = raw.num("tol", 1e-10f64);
        if !(tol > 0.0) {
            raw.fail("tol", "must be positive");
        }
        let k_max = raw.num("k_max", 50usize);
        if k_max == 0 {
            raw.fail("k_max", "must be at least 1");
        }
        let stall_after = raw.num("stall_after", 0usize);
        let tau_trunc = raw.value("tau_trunc", |v| v.parse::<f64>().map_err(|_| format!("cannot parse `{v}`")));
        if tau_trunc.is_some_and(|t| !(t > 0.0)) {
            raw.fail("tau_trunc", "must be positive");
        }
        let lambda = raw.num("lambda", q);
        if !(lambda > 0.0) {
            raw.fail("lambda", "must be positive");
        }
        let c_hat = raw.num("c_hat", 1.0f64);
        if !(c_hat > 0.0) {
            raw.fail("c_hat", "must be positive");
        }
        let c1 = raw.num("c1", sigma_hi * sigma_hi);
        let c2 = raw.num("c2", 2.0 * sigma_hi);
        if !(c1 >= 0.0) || !(c2 >= 0.0) {
            raw.fail("c1", "c1 and c2 must be nonnegative");
        }
        let proxy_k = raw.num("proxy_k", 0usize);
        let horizons = raw.value("horizons", parse_list).unwrap_or_else(|| vec![2.0, 4.0, 8.0]);
        if study == Some(Study::GrowthRate) {
            if horizons.len() < 3 {
                raw.fail("horizons", format!("need at least 3 horizons, got {}", horizons.len()));
            } else if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] <= 0.0 {
                raw.fail("horizons", "must be positive and strictly increasing");
            } else if (horizons[horizons.len() - 1] - t_end).abs() > 1e-12 * t_end {
                raw.fail("horizons", "the last horizon must equal T");
            } else if horizons.iter().any(|&h| TimeGrid::new(t_end, grid_n.max(1)).map_or(true, |g| g.index_of(h).is_none())) {
                raw.fail("horizons", "every horizon must fall on the time grid");
            }
        }
        let samples = raw.num("samples", 10_000usize);
        if samples == 0 {
            raw.fail("samples", "must be at least 1");
        }
        let radius = raw.num("radius", 10.0f64);
        if !(radius > 0.0) {
            raw.fail("radius", "must be positive");
        }
        let kappa = raw.value("kappa", |v| KappaFunction::parse(v).map_err(|e| e.to_string()));
        if study == Some(Study::BihariDemo) && kappa.is_none() && !raw.entries.contains_key("kappa") {
            raw.fail("kappa", "missing (linear:<b> or log:<b>)");
        }
        let bihari_c = raw.num("bihari_c", 1.0f64);
        if !(bihari_c >= 0.0) {
            raw.fail("bihari_c", "must be nonnegative");
        }
        let phi = raw.value("phi", parse_step).unwrap_or_else(|| StepFunction::constant(1.0).expect("valid"));
        let bihari_points = raw.num("bihari_points", 101usize);
        if bihari_points < 2 {
            raw.fail("bihari_points", "must be at least 2");
        }
        let export_bundle = raw.flag("export_bundle");
        let export_solution = raw.flag("export_solution");
        let out = raw.entries.get("out").map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v));

        if !raw.diags.is_empty() {
            raw.diags.sort_by_key(|d| d.line.unwrap_or(0));
            return Err(raw.diags);
        }
        Ok(Self {
            study: study.expect("checked"),
            problem,
            initial,
            q,
            sigma_lo,
            sigma_hi,
            scenarios,
            family,
            paths,
            grid_n,
            t_end,
            seed,
            tol,
            k_max,
            stall_after,
            tau_trunc,
            lambda,
            c_hat,
            c1,
            c2,
            proxy_k,
            horizons,
            samples,
            radius,
            kappa,
            bihari_c,
            phi,
            bihari_points,
            export_bundle,
            export_solution,
            out,
        })
    }

    pub fn band(&self) -> VolatilityBand {
        VolatilityBand::new(self.sigma_lo, self.sigma_hi).expect("validated")
    }

    pub fn zeta(&self) -> InitialData {
        InitialData::parse(&self.initial, self.q).expect("validated")
    }

    pub fn entry(&self) -> Option<CatalogEntry> {
        self.problem.as_deref().map(|p| catalog_entry(p, self.q).expect("validated"))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            t_end: self.t_end,
            grid_n: self.grid_n,
            k_max: self.k_max,
            tol: self.tol,
            tau_trunc: self.tau_trunc,
            truncation_rel_tol: 1e-8,
            stall_after: self.stall_after,
            min_iterations: 0,
        }
    }

    pub fn bundle(&self) -> Result<ScenarioBundle> {
        let family = ScenarioFamily::new(self.family, self.t_end);
        let grid = TimeGrid::new(self.t_end, self.grid_n)?;
        ScenarioBundle::generate(self.band(), family, self.scenarios, grid, self.paths, self.seed)
    }

    /// Estimate constants from the declared condition constants of the problem.
    pub fn constants(&self) -> Result<EstimateConstants> {
        let cond = self.entry().map_or(ConditionConstants::monotone(0.0, 0.0), |e| e.declared().into());
        constants(cond, self.band(), self.zeta().fading_norm(), self.t_end, self.lambda, self.c_hat)?.with_bdg(self.c1, self.c2)
    }
}

/// Diagnostics for a config; empty iff `run` would start.
pub fn validate(text: &str) -> Vec<Diagnostic> {
    ExperimentConfig::parse(text).err().unwrap_or_default()
}

#[derive(Debug)]
pub enum RunError {
    Config(Vec<Diagnostic>),
    Runtime(Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(d) => {
                for x in d {
                    writeln!(f, "{x}")?;
                }
                Ok(())
            }
            RunError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Runtime(e)
    }
}

/// Result of a completed run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub passed: bool,
    pub reports: Vec<BoundReport>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    tau_trunc: Option<f64>,
    constants: Option<crate::estimates::ConstantsSnapshot>,
    files: Vec<String>,
}

/// Parses `text` and runs the study, writing artifacts under `out` (or the
/// config's `out` key when `out` is `None`).
pub fn run_text(text: &str, out: Option<&Path>) -> std::result::Result<RunOutcome, RunError> {
    let mut cfg = ExperimentConfig::parse(text).map_err(RunError::Config)?;
    if let Some(o) = out {
        cfg.out = o.to_path_buf();
    }
    Ok(run(&cfg)?)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.out)?;
    let mut art = Artifacts { dir: cfg.out.clone(), files: Vec::new() };
    let reports = match cfg.study {
        Study::Convergence => convergence(cfg, &mut art)?,
        Study::Uniqueness => uniqueness(cfg, &mut art)?,
        Study::MomentBound => moment(cfg, &mut art)?,
        Study::GrowthRate => growth(cfg, &mut art)?,
        Study::ConditionCheck => conditions(cfg, &mut art)?,
        Study::BihariDemo => bihari(cfg, &mut art)?,
    };
    art.write_json("report.json", &reports)?;
    let constants = match cfg.study {
        Study::BihariDemo => None,
        _ => Some(cfg.constants()?.snapshot()),
    };
    let tau_trunc = match cfg.study {
        Study::BihariDemo | Study::ConditionCheck => None,
        _ => Some(cfg.solver().resolve_tau(&cfg.zeta())),
    };
    let mut files: Vec<String> =
        art.files.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
    files.push("manifest.json".into());
    let manifest = Manifest { config: cfg, tau_trunc, constants, files };
    art.write_json("manifest.json", &manifest)?;
    let passed = reports.iter().all(|r| r.passed);
    Ok(RunOutcome { passed, reports, files: art.files })
}

fn export(cfg: &ExperimentConfig, art: &mut Artifacts, bundle: &ScenarioBundle, ens: Option<&SolutionEnsemble>) -> Result<()> {
    if cfg.export_bundle {
        let mut w = art.create("bundle.csv")?;
        bundle.write_csv(&mut w)?;
        w.flush()?;
    }
    if let (true, Some(e)) = (cfg.export_solution, ens) {
        let mut w = art.create("solution.csv")?;
        e.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Errors that mean the iteration broke down rather than the run being misconfigured.
fn solver_failure(e: &Error) -> bool {
    matches!(e, Error::NonContracting { .. } | Error::NonFiniteIncrement { .. } | Error::NonFiniteFunctional { .. })
}

fn failed(name: &str, err: &Error) -> BoundReport {
    let mut r = BoundReport::new(name, 0.0, f64::INFINITY, 0.0, err.to_string());
    r.passed = false;
    r
}

/// Iterates `1..=PROXY_CHECKED` are compared against the exact-solution proxy.
const PROXY_CHECKED: usize = 8;

fn convergence(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<BoundReport>> {
    let entry = cfg.entry().expect("validated");
    let consts = cfg.constants()?;
    let bundle = cfg.bundle()?;
    let solver = SolverConfig { k_max: cfg.k_max.max(cfg.proxy_k), min_iterations: cfg.proxy_k, ..cfg.solver() };
    // keep the early iterates and the proxy only when the proxy check is requested
    let mut iterates: Vec<(usize, SolutionEnsemble)> = Vec::new();
    let keep = cfg.proxy_k;
    let outcome = solve_observed(entry.coeff.as_ref(), &cfg.zeta(), &bundle, &solver, |k, e| {
        if keep > 0 && (k == keep || (1..=PROXY_CHECKED.min(keep - 1)).contains(&k)) {
            iterates.push((k, e.clone()));
        }
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) if solver_failure(&e) => return Ok(vec![failed("picard convergence", &e)]),
        Err(e) => return Err(e),
    };
    let t = cfg.t_end;
    let mut w = art.create("diagnostics.csv")?;
    write_diagnostics_csv(&outcome.diagnostics, |k| consts.increment_bound(k, t), &mut w)?;
    w.flush()?;

    let mut reports = Vec::new();
    let mut conv = BoundReport::new(
        "picard convergence",
        cfg.tol,
        *outcome.diagnostics.last().expect("at least one iteration"),
        0.0,
        format!("{} iterations", outcome.iterations()),
    );
    conv.passed = outcome.converged;
    reports.push(conv);
    reports.push(decay_envelope_report(&outcome.diagnostics, &consts, 10.0));
    reports.push(superexponential_report(&outcome.diagnostics, consts.m() * t));

    if keep > 0 {
        let mut w = art.create("picard_error.csv")?;
        writeln!(w, "k,error_k,bound_k")?;
        let (_, exact) = iterates.last().expect("iterates retained");
        let mut worst = (0.0f64, String::from("none"));
        for (k, it) in iterates.iter().filter(|(k, _)| *k < keep) {
            let k = *k;
            let err = it.sup_sq_distance(exact)?.value;
            let bound = picard_error_bound(&consts, k, t);
            writeln!(w, "{k},{err:e},{bound:e}")?;
            let r = err / (10.0 * bound);
            if r > worst.0 {
                worst = (r, format!("k = {k}"));
            }
        }
        w.flush()?;
        let mut r = BoundReport::new("picard error vs proxy solution (slack 10)", 1.0, worst.0, 0.0, worst.1);
        r.passed = worst.0 <= 1.0;
        reports.push(r);
    }
    export(cfg, art, &bundle, Some(&outcome.ensemble))?;
    Ok(reports)
}

/// `d_k <= slack * L (M T)^k / k!` for every recorded `k`.
pub fn decay_envelope_report(diagnostics: &[f64], consts: &EstimateConstants, slack: f64) -> BoundReport {
    let t = consts.t_end;
    let mut worst = (0.0f64, String::from("none"));
    let mut rows = Vec::new();
    for (k, &d) in diagnostics.iter().enumerate() {
        let bound = consts.increment_bound(k, t);
        rows.push(crate::estimates::BoundRow { label: format!("k = {k}"), theoretical: slack * bound, empirical: d });
        let r = if bound > 0.0 { d / (slack * bound) } else if d > 0.0 { f64::INFINITY } else { 0.0 };
        if r > worst.0 {
            worst = (r, format!("k = {k}"));
        }
    }
    let mut r = BoundReport::new("factorial decay envelope (slack 10)", 1.0, worst.0, 0.0, worst.1);
    r.rows = rows;
    r
}

/// `d_{k+4} / d_k < 1e-2` for every `k > M T` with both values recorded.
pub fn superexponential_report(diagnostics: &[f64], mt: f64) -> BoundReport {
    let mut worst = (0.0f64, String::from("no k > MT reached before convergence"));
    for k in 0..diagnostics.len().saturating_sub(4) {
        if (k as f64) <= mt || diagnostics[k] == 0.0 {
            continue;
        }
        let r = diagnostics[k + 4] / diagnostics[k];
        if r > worst.0 || worst.1.starts_with("no k") {
            worst = (r, format!("k = {k}"));
        }
    }
    let mut r = BoundReport::new("d_(k+4)/d_k beyond k = MT", 1e-2, worst.0, 0.0, worst.1);
    r.passed = worst.0 < 1e-2;
    r
}

fn uniqueness(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<BoundReport>> {
    let entry = cfg.entry().expect("validated");
    let coeff = entry.coeff.as_ref();
    let bundle = cfg.bundle()?;
    let solver = cfg.solver();
    let cold = solve_observed(coeff, &cfg.zeta(), &bundle, &solver, |_, _| {})?;
    let history = cold.ensemble.shared_history();
    let euler = euler_with_history(coeff, history, &bundle)?;
    let warm = solve_from(coeff, euler.clone(), &bundle, &solver)?;
    let gap = cold.ensemble.sup_sq_distance(&warm.ensemble)?;
    let euler_gap = cold.ensemble.sup_sq_distance(&euler)?;
    let mut w = art.create("uniqueness.csv")?;
    writeln!(w, "quantity,value")?;
    writeln!(w, "cold_iterations,{}", cold.iterations())?;
    writeln!(w, "warm_iterations,{}", warm.iterations())?;
    writeln!(w, "cold_vs_warm,{:e}", gap.value)?;
    writeln!(w, "cold_vs_euler,{:e}", euler_gap.value)?;
    w.flush()?;
    let mut conv = BoundReport::new("both runs converge", 1.0, 0.0, 0.0, "");
    conv.passed = cold.converged && warm.converged;
    let limit = BoundReport::new("cold vs warm start limits", 10.0 * cfg.tol, gap.value, 0.0, gap.dominating());
    export(cfg, art, &bundle, Some(&cold.ensemble))?;
    Ok(vec![conv, limit])
}

fn moment(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<BoundReport>> {
    let entry = cfg.entry().expect("validated");
    let declared = entry.declared();
    let consts = cfg.constants()?;
    let bundle = cfg.bundle()?;
    let monotone = declared.k.is_some();
    let weak = declared.weak.is_some();
    let iterate_kinds: Vec<MomentKind> = [(monotone, MomentKind::Iterates), (weak, MomentKind::WeakIterates)]
        .iter()
        .filter_map(|(on, k)| on.then_some(*k))
        .collect();
    let mut per_iterate: Vec<(usize, f64)> = Vec::new();
    let mut iterate_reports: Vec<Option<BoundReport>> = vec![None; iterate_kinds.len()];
    let mut first_err = None;
    let outcome = solve_observed(entry.coeff.as_ref(), &cfg.zeta(), &bundle, &cfg.solver(), |k, e| {
        for (slot, kind) in iterate_reports.iter_mut().zip(&iterate_kinds) {
            match moment_bound_check(&[e], &consts, *kind) {
                Ok(r) => {
                    if slot.as_ref().is_none_or(|s| r.empirical > s.empirical) {
                        let mut r = r;
                        r.witness = format!("iterate {k}, {}", r.witness);
                        *slot = Some(r);
                    }
                }
                Err(err) => first_err = first_err.take().or(Some(err)),
            }
        }
        if let Ok(est) = e.sup_sq() {
            per_iterate.push((k, est.value));
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    let mut reports = Vec::new();
    // the solution bounds concern the solution, not the scheme: when Picard
    // breaks down, the Euler recursion reaches the same discrete fixed point
    let solution = match outcome {
        Ok(o) => o.ensemble,
        Err(e) if solver_failure(&e) => {
            reports.push(failed("picard convergence", &e));
            let history = Arc::new(cfg.solver().history(&cfg.zeta())?);
            match euler_with_history(entry.coeff.as_ref(), history, &bundle) {
                Ok(e) => e,
                // no solution on [0, T] (finite-time blow-up)
                Err(e) if solver_failure(&e) => {
                    reports.push(failed("euler reference solution", &e));
                    reports.extend(iterate_reports.into_iter().flatten());
                    return Ok(reports);
                }
                Err(e) => return Err(e),
            }
        }
        Err(e) => return Err(e),
    };
    if monotone {
        reports.push(moment_bound_check(&[&solution], &consts, MomentKind::Solution)?);
    }
    if weak {
        reports.push(moment_bound_check(&[&solution], &consts, MomentKind::WeakSolution)?);
    }
    reports.extend(iterate_reports.into_iter().flatten());
    reports.push(segment_estimate_check(&solution, cfg.lambda.min(2.0 * cfg.q))?);
    let mut w = art.create("moments.csv")?;
    writeln!(w, "k,sup_sq")?;
    for (k, v) in &per_iterate {
        writeln!(w, "{k},{v:e}")?;
    }
    w.flush()?;
    let mut w = art.create("bounds.csv")?;
    writeln!(w, "bound,theoretical,empirical,ratio,passed")?;
    for r in &reports {
        writeln!(w, "{},{:e},{:e},{:e},{}", r.name, r.theoretical, r.empirical, r.ratio, r.passed)?;
    }
    w.flush()?;
    export(cfg, art, &bundle, Some(&solution))?;
    Ok(reports)
}

fn growth(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<BoundReport>> {
    let entry = cfg.entry().expect("validated");
    let declared = entry.declared();
    let consts = cfg.constants()?;
    let bundle = cfg.bundle()?;
    let outcome = match solve_observed(entry.coeff.as_ref(), &cfg.zeta(), &bundle, &cfg.solver(), |_, _| {}) {
        Ok(o) => o,
        Err(e) if solver_failure(&e) => return Ok(vec![failed("picard convergence", &e)]),
        Err(e) => return Err(e),
    };
    let mut reports = Vec::new();
    let mut conv = BoundReport::new("picard convergence", cfg.tol, *outcome.diagnostics.last().expect("nonempty"), 0.0, "");
    conv.passed = outcome.converged;
    reports.push(conv);
    let mut w = art.create("growth.csv")?;
    writeln!(w, "bound,window_start,window_end,rate,limit")?;
    let kinds = [(declared.k.is_some(), GrowthBound::Alpha), (declared.weak.is_some() && declared.k.is_none(), GrowthBound::Beta)];
    for (on, which) in kinds {
        if !on {
            continue;
        }
        let r = growth_rate(&outcome.ensemble, &cfg.horizons, &consts, which)?;
        let label = match which {
            GrowthBound::Alpha => "alpha",
            GrowthBound::Beta => "beta",
        };
        for (row, pair) in r.rows.iter().zip(cfg.horizons.windows(2)) {
            writeln!(w, "{label},{},{},{:e},{:e}", pair[0], pair[1], row.empirical, row.theoretical)?;
        }
        reports.push(r);
    }
    w.flush()?;
    export(cfg, art, &bundle, Some(&outcome.ensemble))?;
    Ok(reports)
}

fn conditions(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<BoundReport>> {
    let entry = cfg.entry().expect("validated");
    let sampler = SegmentSampler {
        dim: entry.coeff.dim(),
        radius: cfg.radius,
        samples: cfg.samples,
        t_end: cfg.t_end,
        ..SegmentSampler::new(cfg.q, cfg.seed)
    };
    let outcomes = verify_entry(&entry, &sampler)?;
    let mut w = art.create("conditions.csv")?;
    writeln!(w, "condition,constant,expected,worst_ratio,passed,as_expected,witness_t,witness_norm")?;
    let mut reports = Vec::new();
    for o in &outcomes {
        for r in &o.reports {
            let (wt, wn) = r.witness.as_ref().map_or((f64::NAN, f64::NAN), |w| (w.t, w.norm));
            let expected = match o.check.expect {
                crate::coefficients::Expectation::Pass => "pass",
                crate::coefficients::Expectation::Fail => "fail",
            };
            writeln!(
                w,
                "{:?},{:e},{expected},{:e},{},{},{wt:e},{wn:e}",
                r.condition, r.constant, r.worst_ratio, r.passed, o.as_expected
            )?;
        }
        let name = format!("{} declared {}", o.check.condition, o.check.expect);
        let worst = o.reports.iter().max_by(|a, b| a.worst_ratio.total_cmp(&b.worst_ratio)).expect("at least one report");
        let witness = match &worst.witness {
            Some(w) => format!("{:?} {w}", worst.condition),
            None => "no witness".into(),
        };
        let mut report = BoundReport::new(name, 1.0, worst.worst_ratio, 1e-9, witness);
        report.passed = o.as_expected;
        reports.push(report);
    }
    w.flush()?;
    Ok(reports)
}

fn bihari(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<BoundReport>> {
    let kappa = cfg.kappa.expect("validated");
    let mut w = art.create("bihari.csv")?;
    writeln!(w, "t,bihari,phi_integral")?;
    let n = cfg.bihari_points - 1;
    let mut last = 0.0;
    for i in 0..=n {
        let t = cfg.t_end * i as f64 / n as f64;
        let b = bihari_bound(&kappa, cfg.bihari_c, &cfg.phi, t)?;
        writeln!(w, "{t:e},{b:e},{:e}", cfg.phi.integral(t))?;
        last = b;
    }
    w.flush()?;
    let mut reports = Vec::new();
    if kappa.rule == crate::coefficients::KappaRule::Linear {
        // linear kappa reduces to Gronwall with rate b * int phi / t
        let g = gronwall_bound(cfg.bihari_c, kappa.scale * cfg.phi.integral(cfg.t_end) / cfg.t_end, cfg.t_end);
        let mut r = BoundReport::new("bihari vs gronwall (relative 1e-8)", g, last, 1e-8, format!("t = {}", cfg.t_end));
        r.passed = (last - g).abs() <= 1e-8 * g.abs().max(f64::MIN_POSITIVE);
        reports.push(r);
    }
    Ok(reports)
}

/// Lines printed by `gsfde catalog`.
pub fn catalog_listing() -> Vec<String> {
    let mut out = vec!["problems:".to_string()];
    for id in CATALOG_IDS {
        let e = catalog_entry(id, 1.0).expect("catalog ids resolve");
        let checks: Vec<String> = e
            .checks
            .iter()
            .map(|c| format!("{} expect {}", c.condition, c.expect))
            .collect();
        out.push(format!("  {id:<28} {} (default initial {})", e.summary, e.default_initial));
        out.push(format!("  {:<28} {}", "", checks.join("; ")));
    }
    out.push("initial data:".into());
    out.push("  const:<c>                    zeta(theta) = c".into());
    out.push("  exp:<c>                      zeta(theta) = e^{c theta}, c > -q".into());
    out.push("  poly:<c>:<a0,a1,...>         zeta(theta) = (a0 + a1 theta + ...) e^{c theta}, c > -q".into());
    out
}
