//! JSON scenarios: validation with field-path errors, the suite runner, and
//! the CSV/JSON artifacts it writes.

use std::fmt;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::form_assembly::{
    assemble_family, classify_boundary, collapsed_form, Boundary, BoundaryClass, DiscreteForm, FormFamily, Side,
};
use crate::path_sim::{
    project_ensemble, quadratic_variation_report, qv_rates, simulate_ensemble, InitialLaw, PathEnsemble,
};
use crate::scale_measure::{
    check_nesting, example26_family, growing_removed_interval_family, single_removed_interval_family,
    CharacteristicFamily, Direction, DomainSpec, IntervalUnion, ScaleFunction, SpeedMeasure,
};
use crate::semigroup_mosco::{freeze_check, mosco_certificate, standard_dictionary, Scheme, STANDARD_TIMES};
use crate::weak_convergence::{
    fdd_convergence_suite, modulus_report, modulus_reports_csv, sup_phi, FddReport, ModulusReport, SemigroupOracle,
};

pub const DEFAULT_GRID_N: usize = 400;
pub const DEFAULT_MC_GRID_N: usize = 50;
pub const DEFAULT_N_MC: usize = 20_000;
pub const BOUNDARY_EXPANSION_STEPS: usize = 64;

/// Endpoint that may be infinite: a number, or `"inf"` / `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtReal(pub f64);

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(ExtReal(v)),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(ExtReal(f64::INFINITY)),
                "-inf" => Ok(ExtReal(f64::NEG_INFINITY)),
                other => {
                    Err(serde::de::Error::custom(format!("expected a number, \"inf\" or \"-inf\", got {other:?}")))
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub a: ExtReal,
    pub b: ExtReal,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleConfig {
    Identity,
    Knots { knots: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedConfig {
    Uniform {
        density: f64,
        #[serde(default)]
        atoms: Vec<[f64; 2]>,
    },
    Step {
        breaks: Vec<f64>,
        density: Vec<f64>,
        #[serde(default)]
        atoms: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Example26 {
        #[serde(rename = "K")]
        k: usize,
        n_list: Vec<u32>,
    },
    Explicit {
        sets: Vec<Vec<[f64; 2]>>,
        #[serde(default)]
        n_list: Option<Vec<u32>>,
    },
    SingleRemovedInterval {
        center: f64,
        width: f64,
        n_list: Vec<u32>,
    },
    GrowingRemovedInterval {
        lo: f64,
        hi: f64,
        width: f64,
        n_list: Vec<u32>,
    },
}

impl FamilyConfig {
    fn natural_direction(&self) -> Option<Direction> {
        match self {
            FamilyConfig::Example26 { .. } | FamilyConfig::GrowingRemovedInterval { .. } => Some(Direction::Decreasing),
            FamilyConfig::SingleRemovedInterval { .. } => Some(Direction::Increasing),
            FamilyConfig::Explicit { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    pub delta_list: Vec<f64>,
    pub rho: f64,
    #[serde(default, rename = "grid_N")]
    pub grid_n: Option<usize>,
    #[serde(default)]
    pub n_mc: Option<usize>,
    #[serde(default)]
    pub fdd_times: Option<Vec<f64>>,
    #[serde(default)]
    pub qv_paths: Option<usize>,
    #[serde(default)]
    pub sample_paths: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Uniform,
    PointMass { x0: f64 },
    Density { breaks: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezeConfig {
    pub t: f64,
}

/// Pass/fail thresholds applied by the runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gates {
    pub ks_slack: f64,
    pub moment_z: f64,
    pub mosco_final_max: Option<f64>,
    pub freeze_final_ratio: f64,
    pub qv_rel_error: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Self { ks_slack: 1.5, moment_z: 3.0, mosco_final_max: None, freeze_final_ratio: 0.2, qv_rel_error: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub domain: DomainConfig,
    pub scale: ScaleConfig,
    pub speed: SpeedConfig,
    pub family: FamilyConfig,
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub boundary: Option<Boundary>,
    #[serde(default, rename = "grid_N")]
    pub grid_n: Option<usize>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub dictionary: Option<String>,
    #[serde(default)]
    pub base_point: Option<f64>,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub initial_law: Option<LawConfig>,
    #[serde(default)]
    pub freeze: Option<FreezeConfig>,
    #[serde(default)]
    pub gates: Option<Gates>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

/// Rejected configuration, located by a JSON field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn cfg_err(path: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError { path: path.into(), message: message.to_string() }
}

/// A validated scenario: the normalized configuration (defaults filled in)
/// and the objects built from it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub domain: DomainSpec,
    pub scale: ScaleFunction,
    pub speed: SpeedMeasure,
    pub family: CharacteristicFamily,
    pub law: InitialLaw,
    pub base_point: f64,
    pub boundary: Boundary,
    pub grid_n: usize,
    pub times: Vec<f64>,
    pub gates: Gates,
}

/// Accepts a scenario document, or a manifest written by a previous run
/// (its `inputs` field).
pub fn validate_config(raw: &Value) -> std::result::Result<Scenario, ConfigError> {
    let doc = match raw.get("inputs") {
        Some(inner) if raw.get("files").is_some() => inner,
        _ => raw,
    };
    let mut config: ScenarioConfig = serde_path_to_error::deserialize(doc.clone()).map_err(|e| {
        let path = e.path().to_string();
        cfg_err(if path == "." { "$".to_string() } else { path }, e.into_inner())
    })?;

    let d = &config.domain;
    let window = match d.window {
        Some([lo, hi]) => (lo, hi),
        None if d.a.0.is_finite() && d.b.0.is_finite() => (d.a.0, d.b.0),
        None => return Err(cfg_err("domain.window", "required when an endpoint is infinite")),
    };
    let domain = DomainSpec::new(d.a.0, d.b.0, window).map_err(|e| cfg_err("domain", e))?;
    config.domain.window = Some([window.0, window.1]);

    let base_point = config.base_point.unwrap_or_else(|| domain.midpoint());
    if !domain.contains(base_point) {
        return Err(cfg_err("base_point", format!("{base_point} outside the window")));
    }
    config.base_point = Some(base_point);

    let scale = match &config.scale {
        ScaleConfig::Identity => ScaleFunction::identity(window.0, window.1, base_point),
        ScaleConfig::Knots { knots } => {
            let (x0, xn) = (knots.first().map(|k| k[0]), knots.last().map(|k| k[0]));
            if x0.is_none_or(|x| x > window.0) || xn.is_none_or(|x| x < window.1) {
                return Err(cfg_err("scale.knots", "knots must span the window"));
            }
            ScaleFunction::from_knots(knots.iter().map(|k| (k[0], k[1])).collect(), base_point)
        }
    }
    .map_err(|e| cfg_err("scale", e))?;
    if !scale.is_strict() {
        return Err(cfg_err("scale", "the base scale must be strictly increasing"));
    }

    let (speed, atoms) = match &config.speed {
        SpeedConfig::Uniform { density, atoms } => {
            (SpeedMeasure::uniform(window.0, window.1, *density).map_err(|e| cfg_err("speed.density", e))?, atoms)
        }
        SpeedConfig::Step { breaks, density, atoms } => {
            (SpeedMeasure::step(breaks.clone(), density.clone()).map_err(|e| cfg_err("speed", e))?, atoms)
        }
    };
    let speed = if atoms.is_empty() {
        speed
    } else {
        speed.with_atoms(atoms.iter().map(|a| (a[0], a[1])).collect()).map_err(|e| cfg_err("speed.atoms", e))?
    };

    let declared = config.direction;
    let natural = config.family.natural_direction();
    let direction = match (declared, natural) {
        (Some(d), Some(n)) if d != n => {
            return Err(cfg_err("direction", format!("{d} conflicts with the {n} family kind")));
        }
        (Some(d), _) | (None, Some(d)) => d,
        (None, None) => return Err(cfg_err("direction", "required for explicit families")),
    };
    config.direction = Some(direction);
    let family = build_family(&config.family, &domain, direction)?;

    let grid_n = config.grid_n.unwrap_or(DEFAULT_GRID_N);
    if grid_n < 3 {
        return Err(cfg_err("grid_N", format!("{grid_n} is too small to hold the mandatory points (need at least 3)")));
    }
    config.grid_n = Some(grid_n);

    let times = config.times.clone().unwrap_or_else(|| STANDARD_TIMES.to_vec());
    check_times("times", &times)?;
    config.times = Some(times.clone());

    let dictionary = config.dictionary.get_or_insert_with(|| "standard".to_string());
    if dictionary != "standard" {
        return Err(cfg_err("dictionary", format!("unknown preset {dictionary:?}; available: \"standard\"")));
    }
    let boundary = *config.boundary.get_or_insert(Boundary::NEUMANN);

    let law_cfg = config.initial_law.get_or_insert(LawConfig::Uniform).clone();
    let law = match law_cfg {
        LawConfig::Uniform => InitialLaw::uniform(&speed, window.0, window.1),
        LawConfig::PointMass { x0 } => {
            if !domain.contains(x0) {
                return Err(cfg_err("initial_law.x0", format!("{x0} outside the window")));
            }
            Ok(InitialLaw::PointMass { x0 })
        }
        LawConfig::Density { breaks, values } => Ok(InitialLaw::Density { breaks, values }),
    }
    .map_err(|e| cfg_err("initial_law", e))?;
    law.validate(&speed).map_err(|e| cfg_err("initial_law", e))?;

    if let Some(mc) = config.mc.as_mut() {
        if mc.seed.is_none() {
            return Err(cfg_err("mc.seed", "required whenever mc is present"));
        }
        if mc.n_paths == 0 {
            return Err(cfg_err("mc.n_paths", "must be positive"));
        }
        if !(mc.horizon > 0.0) || !mc.horizon.is_finite() {
            return Err(cfg_err("mc.T", "must be positive"));
        }
        if !(mc.rho > 0.0) {
            return Err(cfg_err("mc.rho", "must be positive"));
        }
        if mc.delta_list.is_empty() {
            return Err(cfg_err("mc.delta_list", "must not be empty"));
        }
        check_times("mc.delta_list", &mc.delta_list)?;
        let mc_grid = *mc.grid_n.get_or_insert(DEFAULT_MC_GRID_N);
        if mc_grid < 3 {
            return Err(cfg_err("mc.grid_N", "must be at least 3"));
        }
        let n_mc = *mc.n_mc.get_or_insert(DEFAULT_N_MC);
        if n_mc == 0 {
            return Err(cfg_err("mc.n_mc", "must be positive"));
        }
        let horizon = mc.horizon;
        let fdd = mc.fdd_times.get_or_insert_with(|| vec![0.5 * horizon, horizon]).clone();
        check_times("mc.fdd_times", &fdd)?;
        if let Some((i, &t)) = fdd.iter().enumerate().find(|(_, &t)| t > horizon) {
            return Err(cfg_err(format!("mc.fdd_times[{i}]"), format!("{t} exceeds T = {horizon}")));
        }
        let n_paths = mc.n_paths;
        mc.qv_paths.get_or_insert(n_paths.min(500));
        mc.sample_paths.get_or_insert(n_paths.min(20));
    }
    if let Some(f) = &config.freeze {
        if !(f.t > 0.0) {
            return Err(cfg_err("freeze.t", "must be positive"));
        }
        if direction != Direction::Decreasing {
            return Err(cfg_err("freeze", "freeze checks need a decreasing family"));
        }
    }
    let gates = config.gates.get_or_insert_with(Gates::default).clone();

    Ok(Scenario { config, domain, scale, speed, family, law, base_point, boundary, grid_n, times, gates })
}

fn check_times(path: &str, times: &[f64]) -> std::result::Result<(), ConfigError> {
    for (i, &t) in times.iter().enumerate() {
        if !(t > 0.0) || !t.is_finite() {
            return Err(cfg_err(format!("{path}[{i}]"), format!("{t} must be positive and finite")));
        }
    }
    Ok(())
}

fn check_n_list(path: &str, n_list: &[u32]) -> std::result::Result<(), ConfigError> {
    if n_list.is_empty() {
        return Err(cfg_err(path, "must not be empty"));
    }
    if n_list[0] == 0 {
        return Err(cfg_err(format!("{path}[0]"), "indices must be positive"));
    }
    if let Some(i) = n_list.windows(2).position(|w| w[0] >= w[1]) {
        return Err(cfg_err(format!("{path}[{}]", i + 1), "n_list must be strictly increasing"));
    }
    Ok(())
}

fn build_family(
    cfg: &FamilyConfig,
    domain: &DomainSpec,
    direction: Direction,
) -> std::result::Result<CharacteristicFamily, ConfigError> {
    match cfg {
        FamilyConfig::Example26 { k, n_list } => {
            check_n_list("family.n_list", n_list)?;
            if *k == 0 {
                return Err(cfg_err("family.K", "must be at least 1"));
            }
            example26_family(domain, *k, n_list).map_err(|e| cfg_err("family", e))
        }
        FamilyConfig::SingleRemovedInterval { center, width, n_list } => {
            check_n_list("family.n_list", n_list)?;
            single_removed_interval_family(domain, *center, *width, n_list).map_err(|e| cfg_err("family", e))
        }
        FamilyConfig::GrowingRemovedInterval { lo, hi, width, n_list } => {
            check_n_list("family.n_list", n_list)?;
            growing_removed_interval_family(domain, *lo, *hi, *width, n_list).map_err(|e| cfg_err("family", e))
        }
        FamilyConfig::Explicit { sets, n_list } => {
            if sets.is_empty() {
                return Err(cfg_err("family.sets", "must not be empty"));
            }
            let mut unions = Vec::with_capacity(sets.len());
            for (i, set) in sets.iter().enumerate() {
                let g = IntervalUnion::try_from_pairs(set.iter().map(|p| (p[0], p[1])).collect())
                    .map_err(|e| cfg_err(format!("family.sets[{i}]"), e))?;
                if !g.within(domain) {
                    return Err(cfg_err(format!("family.sets[{i}]"), "set leaves the window"));
                }
                unions.push(g);
            }
            let indices = match n_list {
                Some(n) => {
                    check_n_list("family.n_list", n)?;
                    if n.len() != sets.len() {
                        return Err(cfg_err("family.n_list", format!("{} indices for {} sets", n.len(), sets.len())));
                    }
                    n.clone()
                }
                None => (1..=sets.len() as u32).collect(),
            };
            if let Err(Error::NotNested { index }) = check_nesting(&unions, direction) {
                return Err(cfg_err(format!("family.sets[{index}]"), format!("not nested for a {direction} family")));
            }
            CharacteristicFamily::new(indices, unions, direction).map_err(|e| cfg_err("family", e))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Boundary,
    Mosco,
    Freeze,
    Fdd,
    Modulus,
    Qv,
    Samples,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::Boundary, Suite::Mosco, Suite::Freeze, Suite::Fdd, Suite::Modulus, Suite::Qv, Suite::Samples];
    pub const MOSCO: [Suite; 3] = [Suite::Boundary, Suite::Mosco, Suite::Freeze];
    pub const PATHS: [Suite; 2] = [Suite::Samples, Suite::Qv];
    pub const WEAKCONV: [Suite; 2] = [Suite::Fdd, Suite::Modulus];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub suite: Suite,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub files: Vec<(String, String)>,
    pub gates: Vec<GateResult>,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }
}

#[derive(Debug)]
pub enum RunError {
    Io(std::io::Error),
    Numerical(String),
    Library(Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Io(e) => write!(f, "i/o failure: {e}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Library(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(m) => RunError::Numerical(m),
            other => RunError::Library(other),
        }
    }
}

fn finite_or_fail(what: &str, values: impl IntoIterator<Item = f64>) -> std::result::Result<(), RunError> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(RunError::Numerical(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Forms for the scenario family on a grid of `n_cells`, together with the
/// limit form (all states merged when the limit scale is flat, and always for
/// the dense-rationals family, whose limit set is Lebesgue-null).
pub fn scenario_forms(sc: &Scenario, n_cells: usize) -> crate::error::Result<(FormFamily, DiscreteForm)> {
    let ff = assemble_family(&sc.domain, &sc.scale, &sc.speed, &sc.family, n_cells, sc.boundary, sc.base_point)?;
    let collapse = matches!(sc.config.family, FamilyConfig::Example26 { .. });
    let limit = match (&ff.limit_form, collapse) {
        (Some(f), false) => f.clone(),
        _ => collapsed_form(&ff.forms[0].grid, sc.boundary),
    };
    Ok((ff, limit))
}

fn freeze_applies(sc: &Scenario) -> bool {
    sc.config.freeze.is_some() || matches!(sc.config.family, FamilyConfig::Example26 { .. })
}

/// Hat of half-width a quarter window centred on the window midpoint.
pub fn freeze_hat(domain: &DomainSpec) -> impl Fn(f64) -> f64 {
    let (c, r) = (domain.midpoint(), 0.25 * domain.width());
    move |x| (1.0 - (x - c).abs() / r).max(0.0)
}

/// Runs the requested suites and writes their artifacts plus `manifest.json`
/// into `out_dir`.
pub fn run_scenario(
    sc: &Scenario,
    suites: &[Suite],
    out_dir: &FsPath,
    command: &str,
) -> std::result::Result<RunOutcome, RunError> {
    fs::create_dir_all(out_dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut gates = Vec::new();
    let mut write = |name: &str, body: String| -> std::result::Result<(), RunError> {
        fs::write(out_dir.join(name), body.as_bytes())?;
        files.push((name.to_string(), sha256_hex(body.as_bytes())));
        Ok(())
    };
    let labels = sc.family.indices.clone();

    if suites.contains(&Suite::Boundary) {
        let body = boundary_json(sc)?;
        write("boundary_class.json", body)?;
    }

    let needs_fine = suites.contains(&Suite::Mosco) || (suites.contains(&Suite::Freeze) && freeze_applies(sc));
    if needs_fine {
        let (ff, limit) = scenario_forms(sc, sc.grid_n)?;
        if suites.contains(&Suite::Mosco) {
            let points = &limit.grid.points;
            let dict = standard_dictionary(points, sc.domain.width() / sc.grid_n as f64);
            let mut rep = mosco_certificate(&ff.forms, &limit, &dict, &sc.times, Scheme::CrankNicolson)?;
            rep.labels = labels.clone();
            finite_or_fail("mosco distances", rep.distances.iter().flatten().flatten().copied())?;
            let mut pass = rep.monotone_ok;
            let mut detail = format!("monotone_ok={} final_max={:.3e}", rep.monotone_ok, rep.final_max);
            if let Some(tol) = sc.gates.mosco_final_max {
                pass &= rep.final_max <= tol;
                detail.push_str(&format!(" (gate {tol:e})"));
            }
            write("mosco_report.csv", rep.to_csv())?;
            gates.push(GateResult { suite: Suite::Mosco, pass, detail });
        }
        if suites.contains(&Suite::Freeze) && freeze_applies(sc) {
            let t = sc.config.freeze.as_ref().map_or(0.1, |f| f.t);
            let hat = freeze_hat(&sc.domain);
            let u: Vec<f64> = ff.forms[0].grid.points.iter().map(|&x| hat(x)).collect();
            let d = freeze_check(&ff, &u, t)?;
            finite_or_fail("freeze distances", d.iter().copied())?;
            let strictly = d.windows(2).all(|w| w[1] < w[0]);
            let ratio = d.last().copied().unwrap_or(0.0) / d.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
            let pass = strictly && ratio <= sc.gates.freeze_final_ratio;
            let mut body = String::from("n,t,distance\n");
            for (n, v) in labels.iter().zip(&d) {
                body.push_str(&format!("{n},{t},{v:.12e}\n"));
            }
            body.push_str(&format!("summary,strictly_decreasing={strictly},final_over_initial,{ratio:.6}\n"));
            write("freeze_check.csv", body)?;
            gates.push(GateResult {
                suite: Suite::Freeze,
                pass,
                detail: format!("strictly_decreasing={strictly} final/initial={ratio:.4}"),
            });
        }
    }

    let mc_suites: Vec<Suite> = suites
        .iter()
        .copied()
        .filter(|s| matches!(s, Suite::Fdd | Suite::Modulus | Suite::Qv | Suite::Samples))
        .collect();
    if !mc_suites.is_empty() {
        let Some(mc) = &sc.config.mc else {
            return Err(RunError::Library(Error::InvalidArgument("scenario has no mc block".into())));
        };
        let mc_out = run_mc(sc, mc, &mc_suites)?;
        for (stem, header, csv) in mc_out.samples {
            write(&format!("{stem}.json"), header)?;
            write(&format!("{stem}.csv"), csv)?;
        }
        if let Some((fdd, csv)) = mc_out.fdd {
            let ks_ok = fdd
                .ks_stats
                .last()
                .zip(fdd.thresholds.last())
                .is_some_and(|(s, c)| s.iter().zip(c).all(|(a, b)| *a <= sc.gates.ks_slack * b));
            let z_ok = fdd.moments.iter().all(|m| m.z <= sc.gates.moment_z);
            write("fdd_report.csv", csv)?;
            gates.push(GateResult {
                suite: Suite::Fdd,
                pass: ks_ok && z_ok,
                detail: format!(
                    "final KS within {}x critical: {ks_ok}; moments within {} se: {z_ok}",
                    sc.gates.ks_slack, sc.gates.moment_z
                ),
            });
        }
        if let Some(reports) = mc_out.modulus {
            let ok = reports.iter().all(|r| r.dominated().iter().all(|&b| b));
            write("modulus_report.csv", modulus_reports_csv(&reports, &labels))?;
            gates.push(GateResult { suite: Suite::Modulus, pass: ok, detail: format!("all dominated: {ok}") });
        }
        if let Some(qv) = mc_out.qv {
            let mut body = String::from("n,statistic,parameters,value,threshold,pass\n");
            let mut ok = true;
            for (n, (paths, err)) in labels.iter().zip(&qv) {
                let pass = *err <= sc.gates.qv_rel_error;
                ok &= pass;
                body.push_str(&format!(
                    "{n},qv_mean_rel_error,paths={paths};T={},{err:.6},{},{pass}\n",
                    mc.horizon, sc.gates.qv_rel_error
                ));
            }
            write("qv_report.csv", body)?;
            gates.push(GateResult {
                suite: Suite::Qv,
                pass: ok,
                detail: format!("mean relative error within gate: {ok}"),
            });
        }
    }

    let manifest = json!({
        "command": command,
        "seed": sc.config.mc.as_ref().and_then(|m| m.seed),
        "inputs": serde_json::to_value(&sc.config).expect("config serializes"),
        "files": files.iter().map(|(n, h)| (n.clone(), Value::String(h.clone()))).collect::<serde_json::Map<_, _>>(),
        "gates": gates,
        "timestamp": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    });
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(RunOutcome { files, gates })
}

fn boundary_json(sc: &Scenario) -> std::result::Result<String, RunError> {
    let c = sc.base_point;
    let classify = |s: &ScaleFunction| -> crate::error::Result<(BoundaryClass, BoundaryClass)> {
        Ok((
            classify_boundary(&sc.domain, s, &sc.speed, Side::Left, c, BOUNDARY_EXPANSION_STEPS)?,
            classify_boundary(&sc.domain, s, &sc.speed, Side::Right, c, BOUNDARY_EXPANSION_STEPS)?,
        ))
    };
    let mut entries = Vec::new();
    let (l, r) = classify(&sc.scale)?;
    entries.push(json!({"scale": "s", "left": l, "right": r}));
    for (n, g) in sc.family.indices.iter().zip(&sc.family.sets) {
        let sn = crate::scale_measure::derive_subscale(&sc.scale, g, c)?;
        let (l, r) = classify(&sn)?;
        entries.push(json!({"scale": "s_n", "n": n, "left": l, "right": r}));
    }
    Ok(serde_json::to_string_pretty(&json!({ "c": c, "classes": entries })).expect("json serializes"))
}

struct McOutput {
    fdd: Option<(FddReport, String)>,
    modulus: Option<Vec<ModulusReport>>,
    /// `(paths used, mean relative error)` per family member.
    qv: Option<Vec<(usize, f64)>>,
    /// `(file stem, header json, csv)` of the sample paths.
    samples: Vec<(String, String, String)>,
}

/// Ensembles are simulated one at a time and reduced to statistics before
/// the next is drawn.
fn run_mc(sc: &Scenario, mc: &McConfig, suites: &[Suite]) -> std::result::Result<McOutput, RunError> {
    let seed = mc.seed.expect("validated");
    let mc_grid = mc.grid_n.unwrap_or(DEFAULT_MC_GRID_N);
    let (ff, limit) = scenario_forms(sc, mc_grid)?;
    let z_scale = &ff.limit_scale;
    let fdd_times = mc.fdd_times.clone().unwrap_or_else(|| vec![0.5 * mc.horizon, mc.horizon]);
    let want = |s: Suite| suites.contains(&s);

    let limit_ens = if want(Suite::Fdd) {
        let raw = simulate_ensemble(&limit, &sc.speed, &sc.law, mc.horizon, mc.n_paths, seed, "limit")?;
        Some(project_ensemble(&raw, z_scale))
    } else {
        None
    };

    let f0 = |z: f64| z.cos();
    let f1 = |z: f64| 1.0 + z.sin();
    let mut ks_stats = Vec::new();
    let mut thresholds = Vec::new();
    let mut moments = Vec::new();
    let mut modulus_probs: Vec<Vec<f64>> = vec![Vec::new(); mc.delta_list.len()];
    let mut n_paths = Vec::new();
    let mut qv = Vec::new();
    let mut samples = Vec::new();
    for (k, form) in ff.forms.iter().enumerate() {
        let stream_seed = seed.wrapping_add(1 + k as u64);
        let form_id = format!("n={}", sc.family.indices[k]);
        let raw = simulate_ensemble(form, &sc.speed, &sc.law, mc.horizon, mc.n_paths, stream_seed, &form_id)?;
        if want(Suite::Samples) {
            let keep = mc.sample_paths.unwrap_or(20).min(raw.len());
            let head = PathEnsemble {
                paths: raw.paths[..keep].to_vec(),
                seed: raw.seed,
                form_id: raw.form_id.clone(),
                initial_law: raw.initial_law.clone(),
                state_values: raw.state_values.clone(),
                horizon: raw.horizon,
            };
            samples.push((format!("paths_n{}", sc.family.indices[k]), head.header_json(), head.to_csv()));
        }
        if want(Suite::Qv) {
            let f: Vec<f64> = form.positions.iter().map(|&x| ff.scales[k].eval(x)).collect();
            let phi = qv_rates(form, &f)?;
            let used = mc.qv_paths.unwrap_or(500).min(raw.len());
            let errs: Vec<f64> = raw.paths[..used]
                .par_iter()
                .map(|p| quadratic_variation_report(p, &f, &phi, mc.horizon).map(|r| r.rel_error))
                .collect::<crate::error::Result<_>>()?;
            let mean = errs.iter().sum::<f64>() / used as f64;
            finite_or_fail("qv", [mean])?;
            qv.push((used, mean));
        }
        let ens: PathEnsemble = project_ensemble(&raw, z_scale);
        drop(raw);
        if let Some(lim) = &limit_ens {
            let probs = vec![sc.law.state_probabilities(form, &sc.speed)?];
            let oracle = SemigroupOracle {
                forms: std::slice::from_ref(form),
                initial_probs: probs,
                f0: &f0,
                f1: &f1,
                t0: fdd_times[0],
                t1: *fdd_times.last().expect("nonempty"),
            };
            let mut rep = fdd_convergence_suite(std::slice::from_ref(&ens), lim, &fdd_times, Some(&oracle))?;
            ks_stats.push(rep.ks_stats.remove(0));
            thresholds.push(rep.thresholds.remove(0));
            let mut m = rep.moments.remove(0);
            m.n = k;
            finite_or_fail("fdd moments", [m.mc_mean, m.oracle])?;
            moments.push(m);
        }
        if want(Suite::Modulus) {
            for (j, &delta) in mc.delta_list.iter().enumerate() {
                modulus_probs[j].push(crate::weak_convergence::modulus_statistic(&ens, mc.horizon, delta, mc.rho)?);
            }
            n_paths.push(ens.len());
        }
    }

    let fdd = limit_ens.map(|_| {
        let pass = ks_stats.last().zip(thresholds.last()).is_none_or(|(s, c)| s.iter().zip(c).all(|(a, b)| a < b));
        let rep = FddReport { time_vector: fdd_times.clone(), ks_stats, thresholds, moments, pass };
        let csv = rep.to_csv(&sc.family.indices, sc.gates.ks_slack, sc.gates.moment_z);
        (rep, csv)
    });
    let modulus = if want(Suite::Modulus) {
        let c = sup_phi(z_scale, &sc.speed, sc.domain.lo(), sc.domain.hi());
        if !c.is_finite() {
            return Err(RunError::Numerical("sup φ is infinite: ds̊/dm is unbounded on the window".into()));
        }
        let n_mc = mc.n_mc.unwrap_or(DEFAULT_N_MC);
        let mut out = Vec::with_capacity(mc.delta_list.len());
        for (j, &delta) in mc.delta_list.iter().enumerate() {
            let mut r = modulus_report(&[], c, mc.horizon, delta, mc.rho, n_mc, seed ^ 0x9e37_79b9_7f4a_7c15)?;
            r.empirical_prob = std::mem::take(&mut modulus_probs[j]);
            r.n_paths = n_paths.clone();
            out.push(r);
        }
        Some(out)
    } else {
        None
    };
    Ok(McOutput { fdd, modulus, qv: want(Suite::Qv).then_some(qv), samples })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory: explicit override, else the scenario's `output_dir`,
/// else `./out/<scenario name>`.
pub fn resolve_output_dir(sc: &Scenario, override_dir: Option<&FsPath>) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    if let Some(d) = &sc.config.output_dir {
        return PathBuf::from(d);
    }
    PathBuf::from("out").join(sc.config.name.as_deref().unwrap_or("scenario"))
}
