//! Controlled cybersecurity level, marked attack losses and their moments.

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gordon_loeb::BreachModel;
use crate::hawkes::{self, AttackPath, HawkesParams, ThinningSampler, MIN_MC_PATHS};
use crate::rng::{RngStreams, Stream};
use crate::stats::SampleMoments;

/// Residual value `U(h)` of the level reached at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalUtility {
    Sqrt,
    Zero,
    Linear { slope: f64 },
    Power { exponent: f64 },
    Log1p,
}

impl TerminalUtility {
    pub fn eval(&self, h: f64) -> f64 {
        let h = h.max(0.0);
        match *self {
            TerminalUtility::Sqrt => h.sqrt(),
            TerminalUtility::Zero => 0.0,
            TerminalUtility::Linear { slope } => slope * h,
            TerminalUtility::Power { exponent } => h.powf(exponent),
            TerminalUtility::Log1p => h.ln_1p(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TerminalUtility::Linear { slope } if !(slope >= 0.0 && slope.is_finite()) => {
                Err(invalid(
                    "terminal_utility",
                    format!("linear slope must be nonnegative, got {slope}"),
                ))
            }
            TerminalUtility::Power { exponent } if !(exponent > 0.0 && exponent <= 1.0) => {
                Err(invalid(
                    "terminal_utility",
                    format!("power exponent must lie in (0, 1], got {exponent}"),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Nondecreasing and concave on `n` equal cells of `[0, h_max]`.
    pub fn is_increasing_concave(&self, h_max: f64, n: usize) -> bool {
        let dh = h_max / n as f64;
        let u: Vec<f64> = (0..=n).map(|i| self.eval(i as f64 * dh)).collect();
        let scale = u.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        u.windows(2).all(|w| w[1] >= w[0])
            && u.windows(3)
                .all(|w| w[2] - 2.0 * w[1] + w[0] <= 1e-12 * scale)
    }
}

/// Distribution family of the loss size of a successful breach. Only the
/// mean enters the optimization; the family shapes loss variance estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    #[default]
    Lognormal,
    Gamma,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Linear investment cost coefficient.
    pub delta: f64,
    /// Quadratic investment cost coefficient.
    pub gamma: f64,
    pub eta_mean: f64,
    pub eta_var: f64,
    /// Obsolescence rate of the cybersecurity level.
    pub rho: f64,
    pub horizon: f64,
    pub terminal: TerminalUtility,
    #[serde(default)]
    pub loss_family: LossFamily,
}

impl CostParams {
    pub fn standard() -> Self {
        Self {
            delta: 1.0,
            gamma: 0.05,
            eta_mean: 10.0,
            eta_var: 10.0,
            rho: 0.2,
            horizon: 1.0,
            terminal: TerminalUtility::Sqrt,
            loss_family: LossFamily::Lognormal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(invalid(
                    name,
                    format!("must be positive and finite, got {x}"),
                ))
            }
        };
        positive("delta", self.delta)?;
        positive("gamma", self.gamma)?;
        positive("eta_mean", self.eta_mean)?;
        positive("horizon", self.horizon)?;
        if !(self.eta_var >= 0.0 && self.eta_var.is_finite()) {
            return Err(invalid(
                "eta_var",
                format!("must be nonnegative, got {}", self.eta_var),
            ));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(invalid(
                "rho",
                format!("must be nonnegative, got {}", self.rho),
            ));
        }
        self.terminal.validate()
    }

    /// Instantaneous cost `δz + γz²/2`.
    pub fn running_cost(&self, z: f64) -> f64 {
        self.delta * z + 0.5 * self.gamma * z * z
    }

    /// Maximizer of `z·p − δz − γz²/2` over `z ≥ 0`.
    pub fn best_response(&self, marginal_value: f64) -> f64 {
        (marginal_value - self.delta).max(0.0) / self.gamma
    }

    /// `sup_{z≥0} (z·p − δz − γz²/2)`.
    pub fn hamiltonian(&self, marginal_value: f64) -> f64 {
        let x = (marginal_value - self.delta).max(0.0);
        x * x / (2.0 * self.gamma)
    }
}

pub(crate) enum LossSampler {
    Fixed(f64),
    LogNormal(LogNormal<f64>),
    Gamma(Gamma<f64>),
}

impl LossSampler {
    pub(crate) fn new(costs: &CostParams) -> Result<Self> {
        let (m, v) = (costs.eta_mean, costs.eta_var);
        if v == 0.0 || costs.loss_family == LossFamily::Deterministic {
            return Ok(LossSampler::Fixed(m));
        }
        let bad = |e: String| invalid("eta_var", e);
        Ok(match costs.loss_family {
            LossFamily::Lognormal => {
                let s2 = (v / (m * m)).ln_1p();
                LossSampler::LogNormal(
                    LogNormal::new(m.ln() - 0.5 * s2, s2.sqrt()).map_err(|e| bad(e.to_string()))?,
                )
            }
            LossFamily::Gamma => {
                LossSampler::Gamma(Gamma::new(m * m / v, v / m).map_err(|e| bad(e.to_string()))?)
            }
            LossFamily::Deterministic => unreachable!(),
        })
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            LossSampler::Fixed(m) => {
                // keep the stream aligned with the random families
                let _: f64 = rng.random();
                *m
            }
            LossSampler::LogNormal(d) => d.sample(rng),
            LossSampler::Gamma(d) => d.sample(rng),
        }
    }
}

/// How a strategy's rate may vary between attacks, which decides how the
/// level is integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hold {
    /// Same rate at all times and states.
    Constant,
    /// Depends on time only, constant on `[start + k·dt, start + (k+1)·dt)`.
    Stepwise { start: f64, dt: f64 },
    /// General feedback rule.
    Continuous,
}

/// An investment rule `z(t, λ_{t−}, H_t)`. Implementations only ever see
/// the state strictly before the current instant.
pub trait InvestmentStrategy: Sync {
    fn rate(&self, t: f64, lambda_left: f64, level: f64) -> f64;

    fn hold(&self) -> Hold {
        Hold::Continuous
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate(pub f64);

impl InvestmentStrategy for ConstantRate {
    fn rate(&self, _t: f64, _lambda: f64, _level: f64) -> f64 {
        self.0
    }
    fn hold(&self) -> Hold {
        Hold::Constant
    }
}

/// Piecewise-constant deterministic schedule; zero before `start`, last
/// value held after the final cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub start: f64,
    pub dt: f64,
    pub rates: Vec<f64>,
}

impl StepSchedule {
    pub fn new(start: f64, dt: f64, rates: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!(
                "schedule step must be positive, got {dt}"
            )));
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::Policy(format!("schedule contains invalid rate {r}")));
        }
        Ok(Self { start, dt, rates })
    }

    pub fn at(&self, t: f64) -> f64 {
        if t < self.start || self.rates.is_empty() {
            return 0.0;
        }
        let k = ((t - self.start) / self.dt).floor() as usize;
        self.rates[k.min(self.rates.len() - 1)]
    }
}

impl InvestmentStrategy for StepSchedule {
    fn rate(&self, t: f64, _lambda: f64, _level: f64) -> f64 {
        self.at(t)
    }
    fn hold(&self) -> Hold {
        Hold::Stepwise {
            start: self.start,
            dt: self.dt,
        }
    }
}

/// Wraps a closure as a continuous feedback strategy.
pub struct Feedback<F>(pub F);

impl<F: Fn(f64, f64, f64) -> f64 + Sync> InvestmentStrategy for Feedback<F> {
    fn rate(&self, t: f64, lambda: f64, level: f64) -> f64 {
        (self.0)(t, lambda, level)
    }
}

pub const RK4_MAX_STEP: f64 = 1e-3;

fn checked(z: f64, t: f64) -> Result<f64> {
    if z >= 0.0 && z.is_finite() {
        Ok(z)
    } else {
        Err(Error::Policy(format!(
            "strategy returned rate {z} at t = {t}"
        )))
    }
}

/// `H` after `d` time units at constant rate `z`.
#[inline]
pub fn level_after(h: f64, z: f64, rho: f64, d: f64) -> f64 {
    if rho == 0.0 {
        h + z * d
    } else {
        let decay = (-rho * d).exp();
        h * decay + z * (-(-rho * d).exp_m1()) / rho
    }
}

/// Advances the level from `a` to `b`; `lambda(s)` gives `λ_{s−}` on `(a, b]`.
pub(crate) fn advance_level(
    h: f64,
    a: f64,
    b: f64,
    rho: f64,
    strategy: &dyn InvestmentStrategy,
    lambda: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    if b <= a {
        return Ok(h);
    }
    match strategy.hold() {
        Hold::Constant => {
            let z = checked(strategy.rate(a, lambda(a), h), a)?;
            Ok(level_after(h, z, rho, b - a))
        }
        Hold::Stepwise { start, dt } => {
            let mut h = h;
            let mut s = a;
            while s < b {
                let end = if s < start {
                    start.min(b)
                } else {
                    let mut k = ((s - start) / dt).floor();
                    if start + (k + 1.0) * dt <= s + 1e-12 * dt {
                        k += 1.0;
                    }
                    (start + (k + 1.0) * dt).min(b)
                };
                let mid = 0.5 * (s + end);
                let z = checked(strategy.rate(mid, lambda(mid), h), mid)?;
                h = level_after(h, z, rho, end - s);
                s = end;
            }
            Ok(h)
        }
        Hold::Continuous => {
            let n = ((b - a) / RK4_MAX_STEP).ceil().max(1.0) as usize;
            let dt = (b - a) / n as f64;
            let f = |s: f64, h: f64| -> Result<f64> {
                Ok(checked(strategy.rate(s, lambda(s), h), s)? - rho * h)
            };
            let mut h = h;
            for i in 0..n {
                let s = a + i as f64 * dt;
                let k1 = f(s, h)?;
                let k2 = f(s + 0.5 * dt, h + 0.5 * dt * k1)?;
                let k3 = f(s + 0.5 * dt, h + 0.5 * dt * k2)?;
                let k4 = f(s + dt, h + dt * k3)?;
                h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            Ok(h)
        }
    }
}

/// Level trajectory on an increasing time grid starting at `times[0]`.
pub fn evolve_level(
    h0: f64,
    rho: f64,
    strategy: &dyn InvestmentStrategy,
    times: &[f64],
    lambda: &dyn Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    if !(h0 >= 0.0 && h0.is_finite()) {
        return Err(Error::Argument(format!(
            "initial level must be nonnegative, got {h0}"
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Argument("times must be nondecreasing".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut h = h0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            h = advance_level(h, times[i - 1], t, rho, strategy, lambda)?;
        }
        out.push(h);
    }
    Ok(out)
}

/// Realized outcome of one simulated year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub gross_loss: f64,
    pub n_attacks: usize,
    pub n_breaches: usize,
    pub terminal_h: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_events<I: Iterator<Item = f64>>(
    events: I,
    hawkes: &HawkesParams,
    horizon: f64,
    model: &BreachModel,
    costs: &CostParams,
    strategy: &dyn InvestmentStrategy,
    h0: f64,
    streams: &RngStreams,
    index: u64,
) -> Result<LossSample> {
    let sampler = LossSampler::new(costs)?;
    let mut breach_rng = streams.rng(Stream::Breach, index);
    let mut loss_rng = streams.rng(Stream::Losses, index);
    let (alpha, xi) = (hawkes.alpha, hawkes.xi);
    let mut t = 0.0;
    let mut h = h0;
    // λ(t+) − α at the last processed time
    let mut excess = hawkes.lambda0 - alpha;
    let mut sample = LossSample {
        gross_loss: 0.0,
        n_attacks: 0,
        n_breaches: 0,
        terminal_h: h0,
    };
    for tau in events {
        let (t0, ex0) = (t, excess);
        h = advance_level(h, t0, tau, costs.rho, strategy, &|s| {
            alpha + ex0 * (-xi * (s - t0)).exp()
        })?;
        excess *= (-xi * (tau - t)).exp();
        let u: f64 = breach_rng.random();
        let eta = sampler.draw(&mut loss_rng);
        if u < model.prob(h) {
            sample.gross_loss += eta;
            sample.n_breaches += 1;
        }
        sample.n_attacks += 1;
        excess += hawkes.beta;
        t = tau;
    }
    let (t0, ex0) = (t, excess);
    h = advance_level(h, t0, horizon, costs.rho, strategy, &|s| {
        alpha + ex0 * (-xi * (s - t0)).exp()
    })?;
    sample.terminal_h = h;
    Ok(sample)
}

fn check_start(h0: f64) -> Result<()> {
    if h0 >= 0.0 && h0.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "initial level must be nonnegative, got {h0}"
        )))
    }
}

/// Replays the attacks of `path`, drawing breach uniforms and loss sizes
/// from stream `index` of `streams` (one of each per attack).
pub fn simulate_loss(
    path: &AttackPath,
    model: &BreachModel,
    costs: &CostParams,
    strategy: &dyn InvestmentStrategy,
    h0: f64,
    streams: &RngStreams,
    index: u64,
) -> Result<LossSample> {
    check_start(h0)?;
    run_events(
        path.event_times.iter().copied(),
        &path.params,
        path.horizon,
        model,
        costs,
        strategy,
        h0,
        streams,
        index,
    )
}

/// Same as [`simulate_loss`] on path `index`, with attacks generated while
/// the level is evolved.
pub fn simulate_loss_online(
    hawkes: &HawkesParams,
    model: &BreachModel,
    costs: &CostParams,
    strategy: &dyn InvestmentStrategy,
    h0: f64,
    streams: &RngStreams,
    index: u64,
) -> Result<LossSample> {
    hawkes.validate()?;
    check_start(h0)?;
    let mut rng = streams.rng(Stream::Paths, index);
    let events = ThinningSampler::new(*hawkes, costs.horizon, &mut rng);
    run_events(
        events,
        hawkes,
        costs.horizon,
        model,
        costs,
        strategy,
        h0,
        streams,
        index,
    )
}

/// Losses over `mc_paths` reproducible paths; the strategy for each path is
/// built from the path itself.
pub fn simulate_loss_batch<S, F>(
    hawkes: &HawkesParams,
    model: &BreachModel,
    costs: &CostParams,
    h0: f64,
    mc_paths: usize,
    seed: u64,
    make_strategy: F,
) -> Result<Vec<LossSample>>
where
    S: InvestmentStrategy,
    F: Fn(&AttackPath) -> Result<S> + Sync,
{
    hawkes.validate()?;
    costs.validate()?;
    let streams = RngStreams::new(seed);
    (0..mc_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = hawkes::simulate_indexed(hawkes, costs.horizon, &streams, i)?;
            let strategy = make_strategy(&path)?;
            simulate_loss(&path, model, costs, &strategy, h0, &streams, i)
        })
        .collect()
}

pub fn loss_moments(samples: &[LossSample]) -> SampleMoments {
    let x: Vec<f64> = samples.iter().map(|s| s.gross_loss).collect();
    SampleMoments::from_slice(&x)
}

/// `E[L]` without investment: `η̄·v·E[N_T]`.
pub fn expected_loss_no_investment(
    hawkes: &HawkesParams,
    model: &BreachModel,
    costs: &CostParams,
) -> Result<f64> {
    costs.validate()?;
    Ok(costs.eta_mean * model.v * hawkes::expected_count(hawkes, costs.horizon)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Variance of the horizon loss. Without a strategy (no investment) the
/// conditional-variance decomposition is used with a Monte Carlo `Var(N_T)`;
/// otherwise losses are simulated directly from `h0 = 0`.
pub fn loss_variance(
    hawkes: &HawkesParams,
    model: &BreachModel,
    costs: &CostParams,
    strategy: Option<&dyn InvestmentStrategy>,
    mc_paths: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    costs.validate()?;
    if mc_paths < MIN_MC_PATHS {
        return Err(Error::Argument(format!(
            "at least {MIN_MC_PATHS} paths are required, got {mc_paths}"
        )));
    }
    match strategy {
        None => {
            let (v, eta, s2) = (model.v, costs.eta_mean, costs.eta_var);
            let en = hawkes::expected_count(hawkes, costs.horizon)?;
            let (var_n, var_n_se) = hawkes::count_variance(hawkes, costs.horizon, mc_paths, seed)?;
            let w = eta * eta * v * v;
            Ok(VarianceEstimate {
                value: en * (s2 * v + eta * eta * v * (1.0 - v)) + w * var_n,
                std_error: w * var_n_se,
            })
        }
        Some(s) => {
            let samples = simulate_loss_batch(hawkes, model, costs, 0.0, mc_paths, seed, |_| {
                Ok(Borrowed(s))
            })?;
            let m = loss_moments(&samples);
            Ok(VarianceEstimate {
                value: m.variance,
                std_error: m.variance_se,
            })
        }
    }
}

struct Borrowed<'a>(&'a dyn InvestmentStrategy);

impl InvestmentStrategy for Borrowed<'_> {
    fn rate(&self, t: f64, lambda: f64, level: f64) -> f64 {
        self.0.rate(t, lambda, level)
    }
    fn hold(&self) -> Hold {
        self.0.hold()
    }
}
