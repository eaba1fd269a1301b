//! Policy extraction along paths, deterministic benchmark strategies and
//! the relative-gain metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    advance_level, level_after, ConstantRate, Hold, InvestmentStrategy, StepSchedule,
};
use crate::error::{Error, Result};
use crate::hawkes::{lambda_max_heuristic, AttackPath};
use crate::hjb::{CyberModel, FieldKind, Lookup, Solution};
use crate::numeric::{integrate, maximize_bounded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    HawkesOptimal,
    PoissonDeterministic,
    Constant,
}

/// Control and level sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrace {
    pub times: Vec<f64>,
    pub intensity: Vec<f64>,
    pub control: Vec<f64>,
    pub level: Vec<f64>,
    pub source: PolicySource,
}

impl PolicyTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The control as a piecewise-constant schedule, one cell per step.
    pub fn schedule(&self) -> Result<StepSchedule> {
        if self.times.len() < 2 {
            return Err(Error::Argument("trace needs at least two times".into()));
        }
        let dt = self.times[1] - self.times[0];
        StepSchedule::new(self.times[0], dt, self.control[..self.len() - 1].to_vec())
    }
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if t >= 0.0 && t <= horizon {
        Ok(())
    } else {
        Err(Error::Argument(format!("time {t} outside [0, {horizon}]")))
    }
}

fn check_level(h: f64) -> Result<()> {
    if h >= 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "level must be nonnegative, got {h}"
        )))
    }
}

fn trace_times(t_init: f64, horizon: f64, dt: f64) -> Vec<f64> {
    let n = ((horizon - t_init) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|k| t_init + k as f64 * dt).collect();
    times.push(horizon);
    times
}

fn run_trace(
    sol: &Solution,
    t_init: f64,
    h_init: f64,
    lookup: Lookup,
    source: PolicySource,
    lambda: impl Fn(f64) -> f64,
) -> Result<PolicyTrace> {
    let g = sol.grid();
    check_time(t_init, g.horizon)?;
    check_level(h_init)?;
    let rho = sol.model.costs.rho;
    let times = trace_times(t_init, g.horizon, g.dt());
    let mut intensity = Vec::with_capacity(times.len());
    let mut control = Vec::with_capacity(times.len());
    let mut level = Vec::with_capacity(times.len());
    let mut h = h_init;
    for (i, &t) in times.iter().enumerate() {
        let l = lambda(t);
        let z = sol.policy.query(t, l, h, lookup)?.max(0.0);
        intensity.push(l);
        control.push(z);
        level.push(h);
        if let Some(&next) = times.get(i + 1) {
            let dt = next - t;
            h += (z - rho * h) * dt;
        }
    }
    Ok(PolicyTrace {
        times,
        intensity,
        control,
        level,
        source,
    })
}

/// Feedback control along `path`: nearest-node (or interpolated) lookup of
/// the stored control, then an explicit Euler level update.
pub fn extract_policy(
    sol: &Solution,
    path: &AttackPath,
    t_init: f64,
    h_init: f64,
    lookup: Lookup,
) -> Result<PolicyTrace> {
    if t_init > path.horizon {
        return Err(Error::Argument(format!(
            "start time {t_init} is after the path horizon {}",
            path.horizon
        )));
    }
    let source = match sol.kind {
        FieldKind::Hawkes => PolicySource::HawkesOptimal,
        FieldKind::Poisson { .. } => PolicySource::PoissonDeterministic,
    };
    run_trace(sol, t_init, h_init, lookup, source, |t| path.intensity(t))
}

/// Deterministic control of a constant-intensity field.
pub fn extract_poisson_policy(
    sol: &Solution,
    t_init: f64,
    h_init: f64,
    lookup: Lookup,
) -> Result<PolicyTrace> {
    let FieldKind::Poisson { intensity } = sol.kind else {
        return Err(Error::Argument(
            "field does not have a constant intensity".into(),
        ));
    };
    run_trace(
        sol,
        t_init,
        h_init,
        lookup,
        PolicySource::PoissonDeterministic,
        |_| intensity,
    )
}

fn quad_tol(model: &CyberModel, lambda: f64, span: f64) -> f64 {
    1e-8 * (model.costs.eta_mean
        * model.breach.v
        * lambda.max(model.hawkes.stationary_mean())
        * span)
        .max(1.0)
}

/// Expected net benefit of investing at rate `zbar` from `(t, λ, h)`.
pub fn evaluate_constant(
    t: f64,
    lambda: f64,
    h: f64,
    zbar: f64,
    model: &CyberModel,
) -> Result<f64> {
    model.validate()?;
    let c = &model.costs;
    check_time(t, c.horizon)?;
    check_level(h)?;
    if !(zbar >= 0.0 && zbar.is_finite()) {
        return Err(Error::Policy(format!(
            "constant rate must be nonnegative, got {zbar}"
        )));
    }
    let span = c.horizon - t;
    let hw = &model.hawkes;
    let reward = integrate(
        |s| {
            let level = level_after(h, zbar, c.rho, s);
            c.eta_mean
                * (model.breach.v - model.breach.prob(level))
                * hw.conditional_mean_intensity(lambda, s)
        },
        0.0,
        span,
        quad_tol(model, lambda, span),
    )?;
    Ok(reward - span * c.running_cost(zbar) + c.terminal.eval(level_after(h, zbar, c.rho, span)))
}

/// Closed-form value of holding the level fixed (`z = ρh`).
pub fn lower_bound(t: f64, lambda: f64, h: f64, model: &CyberModel) -> Result<f64> {
    model.validate()?;
    let c = &model.costs;
    check_time(t, c.horizon)?;
    check_level(h)?;
    let span = c.horizon - t;
    let upkeep = c.rho * h;
    Ok(
        c.terminal.eval(h) - upkeep * (c.delta + c.gamma * upkeep / 2.0) * span
            + c.eta_mean
                * (model.breach.v - model.breach.prob(h))
                * model.hawkes.conditional_integrated_intensity(lambda, span),
    )
}

/// Largest rate searched by [`optimize_constant`].
pub fn constant_rate_cap(lambda: f64, model: &CyberModel) -> Result<f64> {
    let lmax = lambda.max(lambda_max_heuristic(&model.hawkes, model.costs.horizon)?);
    Ok(10.0 * model.costs.eta_mean * model.breach.v * lmax / model.costs.gamma)
}

pub const OPTIMIZER_STARTS: usize = 8;
pub const OPTIMIZER_TOL: f64 = 1e-6;

/// Best constant rate on `[0, cap]` and its value.
pub fn optimize_constant_capped(
    t: f64,
    lambda: f64,
    h: f64,
    model: &CyberModel,
    cap: f64,
) -> Result<(f64, f64)> {
    // validates everything once so the closure can unwrap
    evaluate_constant(t, lambda, h, 0.0, model)?;
    if !(cap >= 0.0 && cap.is_finite()) {
        return Err(Error::Argument(format!(
            "rate cap must be nonnegative, got {cap}"
        )));
    }
    let f = |z: f64| evaluate_constant(t, lambda, h, z, model).unwrap_or(f64::NEG_INFINITY);
    let (z, v) = maximize_bounded(f, 0.0, cap, OPTIMIZER_STARTS, OPTIMIZER_TOL);
    if !v.is_finite() {
        return Err(Error::Numerical(format!(
            "constant-rate objective failed at z = {z}"
        )));
    }
    Ok((z, v))
}

pub fn optimize_constant(t: f64, lambda: f64, h: f64, model: &CyberModel) -> Result<(f64, f64)> {
    let cap = constant_rate_cap(lambda, model)?;
    optimize_constant_capped(t, lambda, h, model, cap)
}

/// `[a, b]` pieces on which the strategy's rate is a single constant, or
/// short pieces for a general rule.
fn segments(t: f64, horizon: f64, strategy: &dyn InvestmentStrategy) -> Vec<(f64, f64)> {
    let mut cuts = vec![t];
    match strategy.hold() {
        Hold::Constant => {}
        Hold::Stepwise { start, dt } => {
            if start > t && start < horizon {
                cuts.push(start);
            }
            let mut k = ((t.max(start) - start) / dt).floor() + 1.0;
            loop {
                let c = start + k * dt;
                if c >= horizon - 1e-12 * dt {
                    break;
                }
                if c > t + 1e-12 * dt {
                    cuts.push(c);
                }
                k += 1.0;
            }
        }
        Hold::Continuous => {
            let n = ((horizon - t) / 1e-2).ceil().max(1.0) as usize;
            let w = (horizon - t) / n as f64;
            cuts.extend((1..n).map(|i| t + i as f64 * w));
        }
    }
    cuts.push(horizon);
    cuts.windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|(a, b)| b > a)
        .collect()
}

/// Expected net benefit of a deterministic rate path started at
/// `(t, λ, h)`. The strategy sees the expected intensity as its `λ` input.
pub fn evaluate_deterministic(
    t: f64,
    lambda: f64,
    h: f64,
    strategy: &dyn InvestmentStrategy,
    model: &CyberModel,
) -> Result<f64> {
    model.validate()?;
    let c = model.costs;
    check_time(t, c.horizon)?;
    check_level(h)?;
    let hw = model.hawkes;
    let mean = |s: f64| hw.conditional_mean_intensity(lambda, s - t);
    let reward_at =
        |s: f64, level: f64| c.eta_mean * (model.breach.v - model.breach.prob(level)) * mean(s);
    let tol = quad_tol(model, lambda, c.horizon - t);
    let segs = segments(t, c.horizon, strategy);
    let n = segs.len().max(1) as f64;
    let mut total = 0.0;
    let mut level = h;
    for (a, b) in segs {
        match strategy.hold() {
            Hold::Continuous => {
                let path = |s: f64| advance_level(level, a, s, c.rho, strategy, &mean);
                let f = |s: f64| match path(s) {
                    Ok(x) => {
                        reward_at(s, x) - c.running_cost(strategy.rate(s, mean(s), x).max(0.0))
                    }
                    Err(_) => f64::NAN,
                };
                total += integrate(f, a, b, tol / n)?;
                level = path(b)?;
            }
            _ => {
                let mid = 0.5 * (a + b);
                let z = strategy.rate(mid, mean(mid), level);
                if !(z >= 0.0 && z.is_finite()) {
                    return Err(Error::Policy(format!(
                        "strategy returned rate {z} at t = {mid}"
                    )));
                }
                let start = level;
                total += integrate(
                    |s| reward_at(s, level_after(start, z, c.rho, s - a)),
                    a,
                    b,
                    tol / n,
                )?;
                total -= (b - a) * c.running_cost(z);
                level = level_after(start, z, c.rho, b - a);
            }
        }
    }
    Ok(total + c.terminal.eval(level))
}

fn gain(v: f64, j: f64) -> Result<f64> {
    if j <= 0.0 {
        return Err(Error::UndefinedGain(j));
    }
    Ok(100.0 * (v - j) / j)
}

/// Lookups used when a gain is read off stored fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSettings {
    pub value_lookup: Lookup,
    pub policy_lookup: Lookup,
}

impl Default for GainSettings {
    fn default() -> Self {
        Self {
            value_lookup: Lookup::Linear,
            policy_lookup: Lookup::Nearest,
        }
    }
}

/// Percentage by which the solved value exceeds the best constant rate.
pub fn gain_vs_constant(
    t: f64,
    lambda: f64,
    h: f64,
    sol: &Solution,
    settings: &GainSettings,
) -> Result<f64> {
    let v = sol.value.query(t, lambda, h, settings.value_lookup)?;
    let (_, j) = optimize_constant(t, lambda, h, &sol.model)?;
    gain(v, j)
}

/// Value of following the constant-intensity control from `(t, λ, h)` when
/// attacks actually follow the model of `sol`.
pub fn poisson_strategy_value(
    t: f64,
    lambda: f64,
    h: f64,
    sol: &Solution,
    poisson: &Solution,
    settings: &GainSettings,
) -> Result<f64> {
    let g = poisson.grid();
    if (g.horizon - sol.grid().horizon).abs() > 1e-12 {
        return Err(Error::Argument("fields have different horizons".into()));
    }
    let trace = extract_poisson_policy(poisson, t, h, settings.policy_lookup)?;
    if trace.len() < 2 {
        return evaluate_deterministic(t, lambda, h, &ConstantRate(0.0), &sol.model);
    }
    evaluate_deterministic(t, lambda, h, &trace.schedule()?, &sol.model)
}

/// Percentage by which the solved value exceeds the constant-intensity control.
pub fn gain_vs_poisson(
    t: f64,
    lambda: f64,
    h: f64,
    sol: &Solution,
    poisson: &Solution,
    settings: &GainSettings,
) -> Result<f64> {
    let v = sol.value.query(t, lambda, h, settings.value_lookup)?;
    gain(
        v,
        poisson_strategy_value(t, lambda, h, sol, poisson, settings)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Constant,
    PoissonBaseline,
    PoissonMatched,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Constant => "constant",
            Benchmark::PoissonBaseline => "poisson_baseline",
            Benchmark::PoissonMatched => "poisson_matched",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub t: f64,
    pub lambda: f64,
    pub h: f64,
    pub gain_pct: f64,
    pub benchmark: Benchmark,
}

/// Gains at every `(t, λ, h)` point, evaluated in parallel. `poisson` must
/// be given for the two constant-intensity benchmarks.
pub fn gain_table(
    points: &[(f64, f64, f64)],
    sol: &Solution,
    benchmark: Benchmark,
    poisson: Option<&Solution>,
    settings: &GainSettings,
) -> Result<Vec<GainRow>> {
    if benchmark != Benchmark::Constant && poisson.is_none() {
        return Err(Error::Argument(format!(
            "{} gains need a constant-intensity field",
            benchmark.name()
        )));
    }
    let rows: Vec<GainRow> = points
        .par_iter()
        .map(|&(t, lambda, h)| {
            let gain_pct = match (benchmark, poisson) {
                (Benchmark::Constant, _) => gain_vs_constant(t, lambda, h, sol, settings)?,
                (_, Some(p)) => gain_vs_poisson(t, lambda, h, sol, p, settings)?,
                _ => unreachable!(),
            };
            Ok(GainRow {
                t,
                lambda,
                h,
                gain_pct,
                benchmark,
            })
        })
        .collect::<Result<_>>()?;
    for (a, b) in lambda_decreases(&rows) {
        log::warn!(
            "gain drops from {:.4}% to {:.4}% as lambda rises from {} to {} (t = {}, h = {})",
            a.gain_pct,
            b.gain_pct,
            a.lambda,
            b.lambda,
            a.t,
            a.h
        );
    }
    Ok(rows)
}

/// Pairs of rows at the same `(t, h)` where the gain falls as `λ` grows.
pub fn lambda_decreases(rows: &[GainRow]) -> Vec<(GainRow, GainRow)> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.h.total_cmp(&b.h))
            .then(a.lambda.total_cmp(&b.lambda))
    });
    sorted
        .windows(2)
        .filter(|w| {
            w[0].t == w[1].t
                && w[0].h == w[1].h
                && w[1].lambda > w[0].lambda
                && w[1].gain_pct < w[0].gain_pct
        })
        .map(|w| (w[0], w[1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Feedback, TerminalUtility};
    use crate::gordon_loeb::{BreachFamily, BreachModel};
    use crate::hjb::{solve, SolverGrid, SolverOptions};
    use crate::poisson::solve_poisson;
    use proptest::prelude::*;

    fn standard() -> CyberModel {
        CyberModel::standard()
    }

    fn no_vulnerability() -> CyberModel {
        CyberModel {
            breach: BreachModel::new(BreachFamily::ClassI, 0.0, 0.1, 1.0).unwrap(),
            ..standard()
        }
    }

    fn small_grid() -> SolverGrid {
        SolverGrid::new((27.0, 63.0, 3.0), (0.0, 20.0, 1.0), 1.0, 40).unwrap()
    }

    #[test]
    fn constant_without_vulnerability_is_terminal_minus_cost() {
        let m = no_vulnerability();
        let v = evaluate_constant(0.2, 40.0, 4.0, 0.0, &m).unwrap();
        assert!((v - (4.0 * (-0.2f64 * 0.8).exp()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn replacement_rate_matches_lower_bound() {
        let m = standard();
        for &(t, l, h) in &[
            (0.0, 27.0, 0.5),
            (0.3, 80.0, 5.0),
            (0.9, 150.0, 20.0),
            (0.0, 27.0, 0.0),
        ] {
            let a = evaluate_constant(t, l, h, m.costs.rho * h, &m).unwrap();
            let b = lower_bound(t, l, h, &m).unwrap();
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert_eq!(lower_bound(1.0, 50.0, 9.0, &m).unwrap(), 3.0);
        assert_eq!(lower_bound(0.0, 27.0, 0.0, &m).unwrap(), 0.0);
    }

    #[test]
    fn optimizer_agrees_with_sweep_and_ignores_cap() {
        let m = standard();
        let (z, v) = optimize_constant(0.0, 27.0, 0.0, &m).unwrap();
        let (zs, vs) = (0..=6000)
            .map(|k| k as f64 * 0.01)
            .map(|z| (z, evaluate_constant(0.0, 27.0, 0.0, z, &m).unwrap()))
            .fold(
                (0.0, f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            );
        assert!(v >= vs - 1e-9);
        assert!((z - zs).abs() < 0.02, "{z} vs {zs}");
        let cap = constant_rate_cap(27.0, &m).unwrap();
        let (z2, v2) = optimize_constant_capped(0.0, 27.0, 0.0, &m, 2.0 * cap).unwrap();
        assert!((z2 - z).abs() < 1e-3 && (v2 - v).abs() < 1e-8 * v);
        let (z0, _) = optimize_constant(0.0, 27.0, 0.0, &no_vulnerability()).unwrap();
        assert!(z0 < 1e-5);
    }

    #[test]
    fn deterministic_reduces_to_constant() {
        let m = standard();
        let a = evaluate_constant(0.1, 60.0, 2.0, 7.5, &m).unwrap();
        let b = evaluate_deterministic(0.1, 60.0, 2.0, &ConstantRate(7.5), &m).unwrap();
        let s = StepSchedule::new(0.0, 0.05, vec![7.5; 20]).unwrap();
        let c = evaluate_deterministic(0.1, 60.0, 2.0, &s, &m).unwrap();
        let f = Feedback(|_t: f64, _l: f64, _h: f64| 7.5);
        let d = evaluate_deterministic(0.1, 60.0, 2.0, &f, &m).unwrap();
        for x in [b, c, d] {
            assert!((x - a).abs() < 1e-8 * a.abs(), "{x} vs {a}");
        }
        let zero = evaluate_deterministic(0.0, 27.0, 9.0, &ConstantRate(0.0), &no_vulnerability())
            .unwrap();
        assert!((zero - (9.0 * (-0.2f64).exp()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fine_schedule_approximates_smooth_feedback() {
        let m = standard();
        let rate = |t: f64| 8.0 + 6.0 * (6.0 * t).sin();
        let dt = 1e-3;
        let s = StepSchedule::new(
            0.0,
            dt,
            (0..1000).map(|k| rate((k as f64 + 0.5) * dt)).collect(),
        )
        .unwrap();
        let a = evaluate_deterministic(0.0, 27.0, 0.0, &s, &m).unwrap();
        let f = Feedback(move |t: f64, _l: f64, _h: f64| rate(t));
        let b = evaluate_deterministic(0.0, 27.0, 0.0, &f, &m).unwrap();
        assert!((a - b).abs() < 1e-5 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn zero_field_gives_decaying_trace() {
        let mut m = no_vulnerability();
        m.costs.terminal = TerminalUtility::Zero;
        let sol = solve(&small_grid(), &m, &SolverOptions::default()).unwrap();
        let path = AttackPath::new(m.hawkes, 1.0, vec![0.1, 0.2, 0.5]).unwrap();
        let tr = extract_policy(&sol, &path, 0.0, 10.0, Lookup::Nearest).unwrap();
        assert!(tr.control.iter().all(|&z| z == 0.0));
        let last = *tr.level.last().unwrap();
        assert!((last - 10.0 * (-0.2f64).exp()).abs() < 5e-3);
        assert_eq!(tr.source, PolicySource::HawkesOptimal);
        assert!(extract_policy(&sol, &path, 1.5, 0.0, Lookup::Nearest).is_err());
    }

    #[test]
    fn quiet_path_matches_constant_intensity_trace() {
        let m = CyberModel {
            hawkes: crate::hawkes::HawkesParams::new(27.0, 27.0, 15.0, 0.0).unwrap(),
            ..standard()
        };
        let g = small_grid();
        let sol = solve(&g, &m, &SolverOptions::default()).unwrap();
        let p = solve_poisson(&g, 27.0, &m.breach, &m.costs, &SolverOptions::default()).unwrap();
        let quiet = AttackPath::new(m.hawkes, 1.0, vec![]).unwrap();
        let a = extract_policy(&sol, &quiet, 0.0, 0.0, Lookup::Nearest).unwrap();
        let b = extract_poisson_policy(&p, 0.0, 0.0, Lookup::Nearest).unwrap();
        for (x, y) in a.control.iter().zip(&b.control) {
            assert!((x - y).abs() <= 1e-3 * y.abs().max(1.0));
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let sol = solve(&small_grid(), &standard(), &SolverOptions::default()).unwrap();
        let path = crate::hawkes::simulate_path(&standard().hawkes, 1.0, 7).unwrap();
        let a = extract_policy(&sol, &path, 0.0, 0.0, Lookup::Nearest).unwrap();
        let b = extract_policy(&sol, &path, 0.0, 0.0, Lookup::Nearest).unwrap();
        assert_eq!(a, b);
        assert!(a.control.iter().all(|&z| z >= 0.0));
        assert_eq!(*a.times.last().unwrap(), 1.0);
    }

    #[test]
    fn gains_vanish_at_horizon() {
        let sol = solve(&small_grid(), &standard(), &SolverOptions::default()).unwrap();
        let g = gain_vs_constant(1.0, 27.0, 4.0, &sol, &GainSettings::default()).unwrap();
        assert!(g.abs() < 1e-9);
        let err = gain_vs_constant(1.0, 27.0, 0.0, &sol, &GainSettings::default());
        assert!(matches!(err, Err(Error::UndefinedGain(_))));
    }

    #[test]
    fn falling_gain_in_lambda_is_flagged() {
        let row = |lambda, h, gain_pct| GainRow {
            t: 0.0,
            lambda,
            h,
            gain_pct,
            benchmark: Benchmark::Constant,
        };
        let rows = [
            row(30.0, 1.0, 2.0),
            row(27.0, 1.0, 3.0),
            row(27.0, 2.0, 1.0),
            row(30.0, 2.0, 1.5),
        ];
        let bad = lambda_decreases(&rows);
        assert_eq!(bad.len(), 1);
        assert_eq!(
            (bad[0].0.lambda, bad[0].1.lambda, bad[0].0.h),
            (27.0, 30.0, 1.0)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn optimum_dominates_replacement_rate(t in 0.0..0.9f64, l in 27.0..200.0f64, h in 0.0..40.0f64) {
            let m = standard();
            let (_, best) = optimize_constant(t, l, h, &m).unwrap();
            let lb = lower_bound(t, l, h, &m).unwrap();
            prop_assert!(best >= lb - 1e-8 * lb.abs().max(1.0));
        }
    }
}
