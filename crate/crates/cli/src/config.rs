//! Run configuration: TOML sections, defaults, environment overrides and
//! validation that reports every problem at once.

#[cfg(test)]
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cyberinv_core::dynamics::{CostParams, LossFamily, TerminalUtility};
use cyberinv_core::gordon_loeb::{BreachFamily, BreachModel};
use cyberinv_core::hawkes::HawkesParams;
use cyberinv_core::hjb::{CyberModel, JumpMode, Lookup, SolverGrid, SolverOptions};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "CYBERINV_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HawkesSection {
    pub alpha: f64,
    pub lambda0: f64,
    pub xi: f64,
    pub beta: f64,
}

impl Default for HawkesSection {
    fn default() -> Self {
        let p = HawkesParams::standard();
        Self {
            alpha: p.alpha,
            lambda0: p.lambda0,
            xi: p.xi,
            beta: p.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreachSection {
    pub family: BreachFamily,
    pub v: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for BreachSection {
    fn default() -> Self {
        let m = BreachModel::standard();
        Self {
            family: m.family,
            v: m.v,
            a: m.a,
            b: m.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostsSection {
    pub delta: f64,
    pub gamma: f64,
    pub eta_mean: f64,
    pub eta_var: f64,
    pub rho: f64,
    pub horizon: f64,
    pub terminal: TerminalUtility,
    pub loss_family: LossFamily,
}

impl Default for CostsSection {
    fn default() -> Self {
        let c = CostParams::standard();
        Self {
            delta: c.delta,
            gamma: c.gamma,
            eta_mean: c.eta_mean,
            eta_var: c.eta_var,
            rho: c.rho,
            horizon: c.horizon,
            terminal: c.terminal,
            loss_family: c.loss_family,
        }
    }
}

/// Intensity axis bounds default to `λ₀` and 216.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<f64>,
    pub lambda_max: f64,
    pub d_lambda: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub d_h: f64,
    pub n_intervals: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = SolverGrid::full(HawkesParams::standard().lambda0, 1.0);
        Self {
            lambda_min: None,
            lambda_max: g.lambda_max,
            d_lambda: g.d_lambda,
            h_min: g.h_min,
            h_max: g.h_max,
            d_h: g.d_h,
            n_intervals: g.n_intervals,
        }
    }
}

impl GridSection {
    /// Desk-scale steps and intensity ceiling.
    pub fn make_coarse(&mut self) {
        let c = SolverGrid::coarse(0.0, 1.0);
        self.d_lambda = c.d_lambda;
        self.d_h = c.d_h;
        self.lambda_max = c.lambda_max;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub rtol: f64,
    pub atol: f64,
    pub upwind: bool,
    pub jump: JumpMode,
    pub max_steps: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            rtol: o.rtol,
            atol: o.atol,
            upwind: o.upwind,
            jump: o.jump,
            max_steps: o.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonMode {
    Baseline,
    Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub poisson_mode: PoissonMode,
    pub value_lookup: Lookup,
    pub policy_lookup: Lookup,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            poisson_mode: PoissonMode::Expectation,
            value_lookup: Lookup::Linear,
            policy_lookup: Lookup::Nearest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSection {
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub h: Vec<f64>,
}

impl Default for GainSection {
    fn default() -> Self {
        Self {
            t: vec![0.0],
            lambda: vec![27.0],
            h: vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub n_paths: usize,
    pub t_init: f64,
    pub h_init: f64,
    pub lookup: Lookup,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            n_paths: 2,
            t_init: 0.0,
            h_init: 0.0,
            lookup: Lookup::Nearest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PremiumSection {
    pub theta: f64,
    pub eta_var: Vec<f64>,
    pub mc_paths: usize,
}

impl Default for PremiumSection {
    fn default() -> Self {
        Self {
            theta: 0.3,
            eta_var: vec![10.0, 50.0, 100.0],
            mc_paths: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticSection {
    pub p: f64,
    pub loss: f64,
}

impl Default for StaticSection {
    fn default() -> Self {
        Self {
            p: 1.0,
            loss: 400.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub hawkes: HawkesSection,
    pub breach: BreachSection,
    pub costs: CostsSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub benchmark: BenchmarkSection,
    pub gain: GainSection,
    pub trace: TraceSection,
    pub premium: PremiumSection,
    #[serde(rename = "static")]
    pub static_gl: StaticSection,
    pub run: RunSection,
}

/// Every problem found while reading a configuration, keyed by
/// `section.key`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics(pub Vec<(String, String)>);

impl Diagnostics {
    fn push(&mut self, key: impl Into<String>, msg: impl Into<String>) {
        self.0.push((key.into(), msg.into()));
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, m) in &self.0 {
            writeln!(f, "{k}: {m}")?;
        }
        Ok(())
    }
}

const SECTIONS: [&str; 11] = [
    "hawkes",
    "breach",
    "costs",
    "grid",
    "solver",
    "benchmark",
    "gain",
    "trace",
    "premium",
    "static",
    "run",
];

/// Parses a scalar given on the command line or in the environment:
/// anything TOML accepts as a value, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// `CYBERINV_SECTION__KEY=value` pairs, lowercased.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(
    vars: I,
) -> Vec<(String, String, String)> {
    let mut out: Vec<_> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            let (s, key) = rest.split_once("__")?;
            Some((s.to_lowercase(), key.to_lowercase(), v))
        })
        .collect();
    out.sort();
    out
}

fn section<T: DeserializeOwned + Default>(table: &Table, name: &str, diag: &mut Diagnostics) -> T {
    match table.get(name) {
        None => T::default(),
        Some(Value::Table(t)) => {
            // one key at a time so a bad key does not hide the others
            let mut good = Table::new();
            for (k, v) in t {
                let single = Table::from_iter([(k.clone(), v.clone())]);
                match T::deserialize(Value::Table(single)) {
                    Ok(_) => {
                        good.insert(k.clone(), v.clone());
                    }
                    Err(e) => diag.push(format!("{name}.{k}"), e.to_string().trim().to_string()),
                }
            }
            match T::deserialize(Value::Table(good)) {
                Ok(v) => v,
                Err(e) => {
                    diag.push(name, e.to_string().trim().to_string());
                    T::default()
                }
            }
        }
        Some(_) => {
            diag.push(name, "expected a section");
            T::default()
        }
    }
}

fn check_sections(table: &Table, diag: &mut Diagnostics) {
    for k in table.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            diag.push(k.clone(), "unknown section");
        }
    }
}

/// Builds a configuration from TOML text plus overrides. Returns every
/// parse and constraint violation found.
pub fn from_str(
    text: &str,
    overrides: &[(String, String, String)],
) -> Result<RunConfig, Diagnostics> {
    let mut diag = Diagnostics::default();
    let mut table: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            diag.push("<file>", e.to_string().trim().to_string());
            return Err(diag);
        }
    };
    for (s, k, v) in overrides {
        let entry = table
            .entry(s.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        match entry {
            Value::Table(t) => {
                t.insert(k.clone(), parse_value(v));
            }
            _ => diag.push(format!("{s}.{k}"), "override targets a non-section key"),
        }
    }
    check_sections(&table, &mut diag);
    let cfg = RunConfig {
        hawkes: section(&table, "hawkes", &mut diag),
        breach: section(&table, "breach", &mut diag),
        costs: section(&table, "costs", &mut diag),
        grid: section(&table, "grid", &mut diag),
        solver: section(&table, "solver", &mut diag),
        benchmark: section(&table, "benchmark", &mut diag),
        gain: section(&table, "gain", &mut diag),
        trace: section(&table, "trace", &mut diag),
        premium: section(&table, "premium", &mut diag),
        static_gl: section(&table, "static", &mut diag),
        run: section(&table, "run", &mut diag),
    };
    cfg.check(&mut diag);
    if diag.is_empty() {
        Ok(cfg)
    } else {
        Err(diag)
    }
}

pub fn from_file(
    path: &Path,
    overrides: &[(String, String, String)],
) -> Result<RunConfig, Diagnostics> {
    match std::fs::read_to_string(path) {
        Ok(t) => from_str(&t, overrides),
        Err(e) => {
            let mut d = Diagnostics::default();
            d.push(path.display().to_string(), e.to_string());
            Err(d)
        }
    }
}

fn positive(diag: &mut Diagnostics, key: &str, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        diag.push(key, format!("must be positive and finite, got {x}"));
    }
}

fn nonnegative(diag: &mut Diagnostics, key: &str, x: f64) {
    if !(x >= 0.0 && x.is_finite()) {
        diag.push(key, format!("must be nonnegative and finite, got {x}"));
    }
}

impl RunConfig {
    pub fn hawkes(&self) -> HawkesParams {
        HawkesParams {
            alpha: self.hawkes.alpha,
            lambda0: self.hawkes.lambda0,
            xi: self.hawkes.xi,
            beta: self.hawkes.beta,
        }
    }

    pub fn breach(&self) -> BreachModel {
        BreachModel {
            family: self.breach.family,
            v: self.breach.v,
            a: self.breach.a,
            b: self.breach.b,
        }
    }

    pub fn costs(&self) -> CostParams {
        let c = &self.costs;
        CostParams {
            delta: c.delta,
            gamma: c.gamma,
            eta_mean: c.eta_mean,
            eta_var: c.eta_var,
            rho: c.rho,
            horizon: c.horizon,
            terminal: c.terminal,
            loss_family: c.loss_family,
        }
    }

    pub fn model(&self) -> CyberModel {
        CyberModel {
            hawkes: self.hawkes(),
            breach: self.breach(),
            costs: self.costs(),
        }
    }

    pub fn grid(&self) -> SolverGrid {
        let g = &self.grid;
        SolverGrid {
            lambda_min: g.lambda_min.unwrap_or(self.hawkes.lambda0),
            lambda_max: g.lambda_max,
            d_lambda: g.d_lambda,
            h_min: g.h_min,
            h_max: g.h_max,
            d_h: g.d_h,
            horizon: self.costs.horizon,
            n_intervals: g.n_intervals,
        }
    }

    pub fn solver(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            rtol: s.rtol,
            atol: s.atol,
            upwind: s.upwind,
            jump: s.jump,
            max_steps: s.max_steps,
        }
    }

    fn check(&self, d: &mut Diagnostics) {
        let h = &self.hawkes;
        positive(d, "hawkes.alpha", h.alpha);
        positive(d, "hawkes.lambda0", h.lambda0);
        positive(d, "hawkes.xi", h.xi);
        nonnegative(d, "hawkes.beta", h.beta);
        if h.beta >= h.xi {
            d.push(
                "hawkes.beta",
                format!(
                    "stability requires beta < xi (branching ratio beta/xi < 1), got beta = {} and xi = {}",
                    h.beta, h.xi
                ),
            );
        }
        let b = &self.breach;
        if !(0.0..=1.0).contains(&b.v) {
            d.push("breach.v", format!("must lie in [0, 1], got {}", b.v));
        }
        positive(d, "breach.a", b.a);
        if b.family == BreachFamily::ClassI {
            positive(d, "breach.b", b.b);
        }
        let c = &self.costs;
        nonnegative(d, "costs.delta", c.delta);
        positive(d, "costs.gamma", c.gamma);
        nonnegative(d, "costs.eta_mean", c.eta_mean);
        nonnegative(d, "costs.eta_var", c.eta_var);
        nonnegative(d, "costs.rho", c.rho);
        positive(d, "costs.horizon", c.horizon);
        if let Err(e) = c.terminal.validate() {
            d.push("costs.terminal", e.to_string());
        }
        let g = self.grid();
        positive(d, "grid.d_lambda", g.d_lambda);
        positive(d, "grid.d_h", g.d_h);
        nonnegative(d, "grid.h_min", g.h_min);
        if g.n_intervals < 2 {
            d.push("grid.n_intervals", "need at least 2 intervals");
        }
        if !(g.lambda_min <= h.lambda0 && h.lambda0 <= g.lambda_max) {
            d.push(
                "grid.lambda_min",
                format!(
                    "grid [{}, {}] must cover lambda0 = {}",
                    g.lambda_min, g.lambda_max, h.lambda0
                ),
            );
        }
        if let Err(e) = g.validate() {
            d.push("grid", e.to_string());
        }
        let s = &self.solver;
        positive(d, "solver.rtol", s.rtol);
        positive(d, "solver.atol", s.atol);
        if s.max_steps == 0 {
            d.push("solver.max_steps", "must be positive");
        }
        for (i, &t) in self.gain.t.iter().enumerate() {
            if !(0.0..=c.horizon).contains(&t) {
                d.push(
                    format!("gain.t[{i}]"),
                    format!("{t} outside [0, {}]", c.horizon),
                );
            }
        }
        for (i, &x) in self.gain.lambda.iter().enumerate() {
            positive(d, &format!("gain.lambda[{i}]"), x);
        }
        for (i, &x) in self.gain.h.iter().enumerate() {
            nonnegative(d, &format!("gain.h[{i}]"), x);
        }
        if !(0.0..=c.horizon).contains(&self.trace.t_init) {
            d.push(
                "trace.t_init",
                format!("{} outside [0, {}]", self.trace.t_init, c.horizon),
            );
        }
        nonnegative(d, "trace.h_init", self.trace.h_init);
        let p = &self.premium;
        nonnegative(d, "premium.theta", p.theta);
        for (i, &x) in p.eta_var.iter().enumerate() {
            nonnegative(d, &format!("premium.eta_var[{i}]"), x);
        }
        if p.mc_paths < cyberinv_core::hawkes::MIN_MC_PATHS {
            d.push(
                "premium.mc_paths",
                format!(
                    "at least {} paths are required, got {}",
                    cyberinv_core::hawkes::MIN_MC_PATHS,
                    p.mc_paths
                ),
            );
        }
        if !(0.0..=1.0).contains(&self.static_gl.p) {
            d.push(
                "static.p",
                format!("must lie in [0, 1], got {}", self.static_gl.p),
            );
        }
        nonnegative(d, "static.loss", self.static_gl.loss);
    }

    /// Canonical TOML rendering of the fully resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }
}

#[cfg(test)]
/// Flattened `section.key = value` view, used to compare configurations.
pub fn flatten(cfg: &RunConfig) -> BTreeMap<String, String> {
    let table: Table = cfg
        .to_toml()
        .parse()
        .expect("rendered configuration parses");
    let mut out = BTreeMap::new();
    for (s, v) in table {
        if let Value::Table(t) = v {
            for (k, x) in t {
                out.insert(format!("{s}.{k}"), x.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHIPPED: &str = include_str!("../standard.cfg");

    #[test]
    fn shipped_file_is_the_standard_set() {
        let cfg = from_str(SHIPPED, &[]).unwrap();
        assert_eq!(cfg.model(), CyberModel::standard());
        assert_eq!(cfg.grid(), SolverGrid::full(27.0, 1.0));
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn missing_keys_take_defaults() {
        let cfg = from_str("[costs]\nrho = 0.2\n", &[]).unwrap();
        assert_eq!(cfg.costs.gamma, 0.05);
        assert_eq!(from_str("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn instability_is_reported_with_its_key() {
        let err = from_str("[hawkes]\nbeta = 20\nxi = 15\n", &[]).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|(k, m)| k == "hawkes.beta" && m.contains("beta < xi")));
    }

    #[test]
    fn every_violation_is_listed() {
        let text = "[hawkes]\nbeta = 20\n[costs]\ngamma = -1\nrho = -2\n[bogus]\nx = 1\n[grid]\nd_h = 0.3\nwhat = 1\n";
        let err = from_str(text, &[]).unwrap_err();
        let keys: Vec<&str> = err.0.iter().map(|(k, _)| k.as_str()).collect();
        for k in ["hawkes.beta", "costs.gamma", "costs.rho", "bogus", "grid"] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = from_str("[hawkes]\ngamma = 1\n", &[]).unwrap_err();
        assert!(err.0[0].1.contains("unknown field"));
    }

    #[test]
    fn environment_overrides_apply() {
        let vars = vec![
            ("CYBERINV_COSTS__GAMMA".to_string(), "0.1".to_string()),
            (
                "CYBERINV_BREACH__FAMILY".to_string(),
                "class_ii".to_string(),
            ),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let ov = env_overrides(vars);
        assert_eq!(ov.len(), 2);
        let cfg = from_str(SHIPPED, &ov).unwrap();
        assert_eq!(cfg.costs.gamma, 0.1);
        assert_eq!(cfg.breach.family, BreachFamily::ClassII);
    }

    #[test]
    fn garbage_never_panics() {
        for text in [
            "[[",
            "hawkes = 3",
            "[hawkes]\nalpha = \"x\"",
            "[grid]\nn_intervals = -4",
            "\u{0}",
        ] {
            assert!(from_str(text, &[]).is_err());
        }
    }

    #[test]
    fn rendering_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.grid.make_coarse();
        let back = from_str(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(flatten(&back), flatten(&cfg));
    }
}
