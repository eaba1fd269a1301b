//! Method-of-lines solver for the dynamic investment problem.
//!
//! The value function `V(t, λ, h)` is discretized on a uniform
//! `(λ, h)` grid and integrated backward from the terminal utility with the
//! Radau IIA integrator. In time-to-go `τ = T − t` every node obeys
//!
//! ```text
//! dV/dτ = ξ(α − λ)·D_λV − ρh·D_hV + λ·(V(λ + β) − V) + η̄(v − S(h))·λ
//!         + ((D_hV − δ)⁺)² / (2γ)
//! ```
//!
//! with central differences in the interior and one-sided differences on
//! the four edges. Above `lambda_max` the field is extended by its value at
//! `lambda_max`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::dynamics::CostParams;
use crate::error::{invalid, Error, Result};
use crate::gordon_loeb::BreachModel;
use crate::hawkes::HawkesParams;
use crate::radau::{self, IntegratorStats, OdeSystem, RadauOptions};

/// The three parameter blocks that define one investment problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyberModel {
    pub hawkes: HawkesParams,
    pub breach: BreachModel,
    pub costs: CostParams,
}

impl CyberModel {
    pub fn standard() -> Self {
        Self {
            hawkes: HawkesParams::standard(),
            breach: BreachModel::standard(),
            costs: CostParams::standard(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hawkes.validate()?;
        self.breach.validate()?;
        self.costs.validate()
    }

    pub fn horizon(&self) -> f64 {
        self.costs.horizon
    }
}

fn cells(lo: f64, hi: f64, step: f64) -> Option<usize> {
    let r = (hi - lo) / step;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * k.max(1.0)).then_some(k as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub d_lambda: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub d_h: f64,
    pub horizon: f64,
    /// Number of equal time intervals between stored snapshots.
    pub n_intervals: usize,
}

impl SolverGrid {
    pub const DEFAULT_INTERVALS: usize = 200;

    pub fn new(
        lambda: (f64, f64, f64),
        h: (f64, f64, f64),
        horizon: f64,
        n_intervals: usize,
    ) -> Result<Self> {
        let g = Self {
            lambda_min: lambda.0,
            lambda_max: lambda.1,
            d_lambda: lambda.2,
            h_min: h.0,
            h_max: h.1,
            d_h: h.2,
            horizon,
            n_intervals,
        };
        g.validate()?;
        Ok(g)
    }

    /// Full-resolution grid: λ ∈ [λ₀, 216] step 1, h ∈ [0, 50] step 0.5.
    pub fn full(lambda0: f64, horizon: f64) -> Self {
        Self {
            lambda_min: lambda0,
            lambda_max: 216.0,
            d_lambda: 1.0,
            h_min: 0.0,
            h_max: 50.0,
            d_h: 0.5,
            horizon,
            n_intervals: Self::DEFAULT_INTERVALS,
        }
    }

    /// Desk-scale grid: λ ∈ [λ₀, 120] step 3, h ∈ [0, 50] step 1.
    pub fn coarse(lambda0: f64, horizon: f64) -> Self {
        Self {
            lambda_min: lambda0,
            lambda_max: 120.0,
            d_lambda: 3.0,
            h_min: 0.0,
            h_max: 50.0,
            d_h: 1.0,
            horizon,
            n_intervals: Self::DEFAULT_INTERVALS,
        }
    }

    /// Steps divided by `factor` in both state directions.
    pub fn refined(&self, factor: usize) -> Self {
        let f = factor as f64;
        Self {
            d_lambda: self.d_lambda / f,
            d_h: self.d_h / f,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lambda_min,
            self.lambda_max,
            self.d_lambda,
            self.h_min,
            self.h_max,
            self.d_h,
            self.horizon,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(invalid("grid", "all bounds and steps must be finite"));
        }
        if !(self.d_lambda > 0.0) {
            return Err(invalid(
                "d_lambda",
                format!("must be positive, got {}", self.d_lambda),
            ));
        }
        if !(self.d_h > 0.0) {
            return Err(invalid(
                "d_h",
                format!("must be positive, got {}", self.d_h),
            ));
        }
        if !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min) {
            return Err(invalid("lambda_max", "need 0 < lambda_min <= lambda_max"));
        }
        if !(self.h_min >= 0.0 && self.h_max > self.h_min) {
            return Err(invalid("h_max", "need 0 <= h_min < h_max"));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.n_intervals == 0 {
            return Err(invalid("n_intervals", "need at least one time interval"));
        }
        if cells(self.lambda_min, self.lambda_max, self.d_lambda).is_none() {
            return Err(invalid("d_lambda", "must divide lambda_max - lambda_min"));
        }
        if cells(self.h_min, self.h_max, self.d_h).is_none() {
            return Err(invalid("d_h", "must divide h_max - h_min"));
        }
        Ok(())
    }

    pub fn n_lambda(&self) -> usize {
        cells(self.lambda_min, self.lambda_max, self.d_lambda).unwrap_or(0) + 1
    }

    pub fn n_h(&self) -> usize {
        cells(self.h_min, self.h_max, self.d_h).unwrap_or(0) + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_lambda() * self.n_h()
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_intervals + 1
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.lambda_min + n as f64 * self.d_lambda
    }

    pub fn h(&self, m: usize) -> f64 {
        self.h_min + m as f64 * self.d_h
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_intervals as f64
    }

    /// Snapshot times, increasing from 0 to the horizon.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_intervals {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    fn nearest(x: f64, lo: f64, step: f64, count: usize) -> usize {
        let k = ((x - lo) / step).round();
        k.clamp(0.0, (count - 1) as f64) as usize
    }

    /// Fractional position of `x` clamped to the axis: `(lower index, weight)`.
    fn bracket(x: f64, lo: f64, step: f64, count: usize) -> (usize, f64) {
        if count == 1 {
            return (0, 0.0);
        }
        let mut r = ((x - lo) / step).clamp(0.0, (count - 1) as f64);
        if (r - r.round()).abs() < 1e-9 {
            r = r.round();
        }
        let k = (r.floor() as usize).min(count - 2);
        (k, r - k as f64)
    }
}

/// How `V(λ + β)` is read off the grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpMode {
    /// Shift by `⌊⌊β⌋ / Δλ⌋` nodes, clamped at the top row.
    #[default]
    Floor,
    /// Linear interpolation at the exact shift `β / Δλ`.
    Interpolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// One-sided upwind differences for the two drift terms.
    pub upwind: bool,
    pub jump: JumpMode,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-6,
            upwind: false,
            jump: JumpMode::Floor,
            max_steps: 200_000,
        }
    }
}

/// Discrete PIDE right-hand side in time-to-go on a fixed grid.
///
/// States are ordered with the intensity index running fastest:
/// node `(n, m)` sits at `m * n_lambda + n`.
pub struct HjbOperator {
    grid: SolverGrid,
    model: CyberModel,
    upwind: bool,
    nl: usize,
    nh: usize,
    lambdas: Vec<f64>,
    drift_l: Vec<f64>,
    drift_h: Vec<f64>,
    /// `(row offset, weight)` pairs for `V(λ_n + β)`.
    jump: Vec<[(usize, f64); 2]>,
    reward: Vec<f64>,
}

type Stencil = [(usize, f64); 2];

fn central(i: usize, count: usize, step: f64) -> Stencil {
    if count == 1 {
        [(0, 0.0), (0, 0.0)]
    } else if i == 0 {
        [(1, 1.0 / step), (0, -1.0 / step)]
    } else if i == count - 1 {
        [(i, 1.0 / step), (i - 1, -1.0 / step)]
    } else {
        [(i + 1, 0.5 / step), (i - 1, -0.5 / step)]
    }
}

/// One-sided difference in the direction the drift `b` points to.
fn upwind(i: usize, count: usize, step: f64, b: f64) -> Stencil {
    if count == 1 || b == 0.0 {
        return [(i, 0.0), (i, 0.0)];
    }
    let forward = if b > 0.0 { i + 1 < count } else { i == 0 };
    if forward {
        [(i + 1, 1.0 / step), (i, -1.0 / step)]
    } else {
        [(i, 1.0 / step), (i - 1, -1.0 / step)]
    }
}

impl HjbOperator {
    pub fn new(grid: &SolverGrid, model: &CyberModel, options: &SolverOptions) -> Result<Self> {
        grid.validate()?;
        model.validate()?;
        let (nl, nh) = (grid.n_lambda(), grid.n_h());
        let hw = &model.hawkes;
        let lambdas: Vec<f64> = (0..nl).map(|n| grid.lambda(n)).collect();
        let drift_l = lambdas.iter().map(|l| hw.xi * (hw.alpha - l)).collect();
        let drift_h = (0..nh).map(|m| -model.costs.rho * grid.h(m)).collect();
        let top = nl - 1;
        let jump = match options.jump {
            JumpMode::Floor => {
                let shift = hw.beta.floor() / grid.d_lambda;
                if shift.fract() != 0.0 {
                    log::warn!(
                        "jump size {} is not a multiple of d_lambda {}; shifting by {} nodes",
                        hw.beta,
                        grid.d_lambda,
                        shift.floor()
                    );
                }
                let k = shift.floor() as usize;
                (0..nl)
                    .map(|n| [((n + k).min(top), 1.0), (0, 0.0)])
                    .collect()
            }
            JumpMode::Interpolate => {
                let shift = hw.beta / grid.d_lambda;
                let k = shift.floor() as usize;
                let w = shift - k as f64;
                (0..nl)
                    .map(|n| {
                        let lo = (n + k).min(top);
                        let hi = (n + k + 1).min(top);
                        if lo == hi {
                            [(lo, 1.0), (0, 0.0)]
                        } else {
                            [(lo, 1.0 - w), (hi, w)]
                        }
                    })
                    .collect()
            }
        };
        let mut reward = vec![0.0; nl * nh];
        for m in 0..nh {
            let gap = model.breach.v - model.breach.prob(grid.h(m));
            for n in 0..nl {
                reward[m * nl + n] = model.costs.eta_mean * gap * lambdas[n];
            }
        }
        Ok(Self {
            grid: *grid,
            model: *model,
            upwind: options.upwind,
            nl,
            nh,
            lambdas,
            drift_l,
            drift_h,
            jump,
            reward,
        })
    }

    pub fn grid(&self) -> &SolverGrid {
        &self.grid
    }

    pub fn index(&self, n: usize, m: usize) -> usize {
        m * self.nl + n
    }

    fn lambda_stencil(&self, n: usize) -> Stencil {
        if self.upwind {
            upwind(n, self.nl, self.grid.d_lambda, self.drift_l[n])
        } else {
            central(n, self.nl, self.grid.d_lambda)
        }
    }

    fn h_drift_stencil(&self, m: usize) -> Stencil {
        if self.upwind {
            upwind(m, self.nh, self.grid.d_h, self.drift_h[m])
        } else {
            central(m, self.nh, self.grid.d_h)
        }
    }

    /// Discrete `∂V/∂h` used by both the Hamiltonian and the feedback control.
    #[inline]
    pub fn dv_dh(&self, v: &[f64], n: usize, m: usize) -> f64 {
        let [(a, wa), (b, wb)] = central(m, self.nh, self.grid.d_h);
        wa * v[a * self.nl + n] + wb * v[b * self.nl + n]
    }

    fn node_rhs(&self, v: &[f64], n: usize, m: usize) -> f64 {
        let nl = self.nl;
        let i = m * nl + n;
        let [(a, wa), (b, wb)] = self.lambda_stencil(n);
        let d_l = wa * v[m * nl + a] + wb * v[m * nl + b];
        let [(a, wa), (b, wb)] = self.h_drift_stencil(m);
        let d_h = wa * v[a * nl + n] + wb * v[b * nl + n];
        let [(a, wa), (b, wb)] = self.jump[n];
        let shifted = wa * v[m * nl + a] + wb * v[m * nl + b];
        self.drift_l[n] * d_l
            + self.drift_h[m] * d_h
            + self.lambdas[n] * (shifted - v[i])
            + self.reward[i]
            + self.model.costs.hamiltonian(self.dv_dh(v, n, m))
    }

    /// Writes `dV/dτ` for the flat state `v` into `out`.
    pub fn eval(&self, v: &[f64], out: &mut [f64]) {
        let nl = self.nl;
        out.par_chunks_mut(nl)
            .enumerate()
            .with_min_len(8)
            .for_each(|(m, row)| {
                for (n, o) in row.iter_mut().enumerate() {
                    *o = self.node_rhs(v, n, m);
                }
            });
    }

    fn eval_jacobian(&self, v: &[f64], jac: &mut BandMatrix<f64>) {
        let nl = self.nl;
        let c = &self.model.costs;
        for m in 0..self.nh {
            for n in 0..nl {
                let i = m * nl + n;
                for (a, w) in self.lambda_stencil(n) {
                    if w != 0.0 {
                        jac.add(i, m * nl + a, self.drift_l[n] * w);
                    }
                }
                for (a, w) in self.h_drift_stencil(m) {
                    if w != 0.0 {
                        jac.add(i, a * nl + n, self.drift_h[m] * w);
                    }
                }
                for (a, w) in self.jump[n] {
                    if w != 0.0 {
                        jac.add(i, m * nl + a, self.lambdas[n] * w);
                    }
                }
                jac.add(i, i, -self.lambdas[n]);
                let slope = c.best_response(self.dv_dh(v, n, m));
                if slope > 0.0 {
                    for (a, w) in central(m, self.nh, self.grid.d_h) {
                        if w != 0.0 {
                            jac.add(i, a * nl + n, slope * w);
                        }
                    }
                }
            }
        }
    }

    /// `V(T, ·, ·) = U(h)` in solver order.
    pub fn terminal_state(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.nl * self.nh];
        for m in 0..self.nh {
            let u = self.model.costs.terminal.eval(self.grid.h(m));
            y[m * self.nl..(m + 1) * self.nl].fill(u);
        }
        y
    }

    /// Feedback control `(D_hV − δ)⁺/γ` for a solver-order state.
    pub fn control(&self, v: &[f64], n: usize, m: usize) -> f64 {
        self.model.costs.best_response(self.dv_dh(v, n, m))
    }
}

impl OdeSystem for HjbOperator {
    fn dim(&self) -> usize {
        self.nl * self.nh
    }
    fn bandwidths(&self) -> (usize, usize) {
        let b = if self.nh > 1 {
            self.nl
        } else {
            self.nl.saturating_sub(1)
        };
        (b, b)
    }
    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        self.eval(y, dydt);
    }
    fn jacobian(&self, _t: f64, y: &[f64], jac: &mut BandMatrix<f64>) {
        self.eval_jacobian(y, jac);
    }
}

/// Time derivative of the state, for an arbitrary field in solver order.
pub fn assemble_rhs(
    state: &[f64],
    grid: &SolverGrid,
    model: &CyberModel,
    options: &SolverOptions,
) -> Result<Vec<f64>> {
    let op = HjbOperator::new(grid, model, options)?;
    if state.len() != op.dim() {
        return Err(Error::Argument(format!(
            "state has {} entries, grid has {} nodes",
            state.len(),
            op.dim()
        )));
    }
    if state.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("state contains non-finite values".into()));
    }
    let mut out = vec![0.0; state.len()];
    op.eval(state, &mut out);
    Ok(out)
}

/// Node lookup used by [`Field::query`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookup {
    #[default]
    Nearest,
    Linear,
}

/// Values on every snapshot, stored `(snapshot, λ, h)` with `h` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: SolverGrid,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: SolverGrid) -> Self {
        let len = grid.n_snapshots() * grid.n_nodes();
        Self {
            grid,
            data: vec![0.0; len],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, n: usize, m: usize) -> f64 {
        let g = &self.grid;
        self.data[(i * g.n_lambda() + n) * g.n_h() + m]
    }

    pub fn snapshot(&self, i: usize) -> &[f64] {
        let k = self.grid.n_nodes();
        &self.data[i * k..(i + 1) * k]
    }

    pub fn snapshot_mut(&mut self, i: usize) -> &mut [f64] {
        let k = self.grid.n_nodes();
        &mut self.data[i * k..(i + 1) * k]
    }

    /// Value at `(t, λ, h)`. `λ` outside the grid is clamped (constant
    /// extension above `lambda_max`); `h` outside is clamped with a warning.
    pub fn query(&self, t: f64, lambda: f64, h: f64, lookup: Lookup) -> Result<f64> {
        let g = &self.grid;
        if !(t >= -1e-12 && t <= g.horizon + 1e-12) {
            return Err(Error::Argument(format!(
                "time {t} outside [0, {}]",
                g.horizon
            )));
        }
        if !lambda.is_finite() || !h.is_finite() {
            return Err(Error::Argument("query point must be finite".into()));
        }
        if h < g.h_min - 1e-12 || h > g.h_max + 1e-12 {
            log::warn!("level {h} outside [{}, {}], clamped", g.h_min, g.h_max);
        }
        let (nl, nh) = (g.n_lambda(), g.n_h());
        let ns = g.n_snapshots();
        Ok(match lookup {
            Lookup::Nearest => {
                let i = SolverGrid::nearest(t, 0.0, g.dt(), ns);
                let n = SolverGrid::nearest(lambda, g.lambda_min, g.d_lambda, nl);
                let m = SolverGrid::nearest(h, g.h_min, g.d_h, nh);
                self.at(i, n, m)
            }
            Lookup::Linear => {
                let (i, wi) = SolverGrid::bracket(t, 0.0, g.dt(), ns);
                let (n, wn) = SolverGrid::bracket(lambda, g.lambda_min, g.d_lambda, nl);
                let (m, wm) = SolverGrid::bracket(h, g.h_min, g.d_h, nh);
                let mut acc = 0.0;
                for (di, fi) in [(0, 1.0 - wi), (1, wi)] {
                    for (dn, fn_) in [(0, 1.0 - wn), (1, wn)] {
                        for (dm, fm) in [(0, 1.0 - wm), (1, wm)] {
                            let w = fi * fn_ * fm;
                            if w != 0.0 {
                                acc += w * self.at(i + di, n + dn, m + dm);
                            }
                        }
                    }
                }
                acc
            }
        })
    }
}

/// Whether a field covers the jump-driven intensity or a constant one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Hawkes,
    Poisson { intensity: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub integrator: IntegratorStats,
    pub nodes_checked: usize,
    pub monotone_violations_lambda: usize,
    pub monotone_violations_h: usize,
    pub violation_fraction: f64,
    /// Snapshot used for the residual check, if there were enough snapshots.
    pub residual_snapshot: Option<usize>,
    pub residual_interior: Option<f64>,
    pub residual_boundary: Option<f64>,
    pub jump_shift_nodes: f64,
    pub wall_seconds: f64,
}

/// A solved value field with its feedback control and provenance.
#[derive(Debug, Clone)]
pub struct Solution {
    pub kind: FieldKind,
    pub model: CyberModel,
    pub options: SolverOptions,
    pub value: Field,
    pub policy: Field,
    pub report: QualityReport,
}

impl Solution {
    pub fn grid(&self) -> &SolverGrid {
        &self.value.grid
    }
}

fn to_field_order(y: &[f64], nl: usize, nh: usize, out: &mut [f64]) {
    for n in 0..nl {
        for m in 0..nh {
            out[n * nh + m] = y[m * nl + n];
        }
    }
}

fn to_solver_order(snap: &[f64], nl: usize, nh: usize) -> Vec<f64> {
    let mut y = vec![0.0; nl * nh];
    for n in 0..nl {
        for m in 0..nh {
            y[m * nl + n] = snap[n * nh + m];
        }
    }
    y
}

/// Solves backward from the terminal utility and stores `V` and the
/// feedback control on every snapshot.
pub fn solve(grid: &SolverGrid, model: &CyberModel, options: &SolverOptions) -> Result<Solution> {
    solve_kind(grid, model, options, FieldKind::Hawkes)
}

pub(crate) fn solve_kind(
    grid: &SolverGrid,
    model: &CyberModel,
    options: &SolverOptions,
    kind: FieldKind,
) -> Result<Solution> {
    let start = Instant::now();
    if (grid.horizon - model.horizon()).abs() > 1e-12 * model.horizon() {
        return Err(Error::Config(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon,
            model.horizon()
        )));
    }
    let op = HjbOperator::new(grid, model, options)?;
    let (nl, nh) = (grid.n_lambda(), grid.n_h());
    let ni = grid.n_intervals;
    let mut value = Field::zeros(*grid);
    let mut policy = Field::zeros(*grid);
    let taus: Vec<f64> = (0..=ni).map(|k| grid.horizon - grid.time(ni - k)).collect();
    let ropts = RadauOptions {
        rtol: options.rtol,
        atol: options.atol,
        max_steps: options.max_steps,
        dense_output: true,
        h_max: grid.horizon / 20.0,
        ..Default::default()
    };
    let y0 = op.terminal_state();
    let stats = radau::integrate(&op, 0.0, &y0, &taus, &ropts, |k, _tau, y| {
        let i = ni - k;
        to_field_order(y, nl, nh, value.snapshot_mut(i));
        let z = policy.snapshot_mut(i);
        for n in 0..nl {
            for m in 0..nh {
                z[n * nh + m] = op.control(y, n, m);
            }
        }
    })?;
    // terminal snapshot is the initial condition itself
    to_field_order(&y0, nl, nh, value.snapshot_mut(ni));

    let mut report = QualityReport {
        integrator: stats,
        jump_shift_nodes: match options.jump {
            JumpMode::Floor => (model.hawkes.beta.floor() / grid.d_lambda).floor(),
            JumpMode::Interpolate => model.hawkes.beta / grid.d_lambda,
        },
        ..Default::default()
    };
    let (checked, vl, vh) = monotonicity_violations(&value);
    report.nodes_checked = checked;
    report.monotone_violations_lambda = vl;
    report.monotone_violations_h = vh;
    report.violation_fraction = (vl + vh) as f64 / checked.max(1) as f64;
    let mut sol = Solution {
        kind,
        model: *model,
        options: *options,
        value,
        policy,
        report,
    };
    if ni >= 2 {
        let mid = ni / 2;
        let r = hjb_residual(&sol, mid)?;
        sol.report.residual_snapshot = Some(mid);
        sol.report.residual_interior = Some(r.interior);
        sol.report.residual_boundary = Some(r.boundary);
    }
    sol.report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(sol)
}

/// Counts adjacent node pairs where `V` decreases in `λ` or in `h` by more
/// than `1e-6` of the snapshot's largest magnitude.
pub fn monotonicity_violations(value: &Field) -> (usize, usize, usize) {
    let g = &value.grid;
    let (nl, nh) = (g.n_lambda(), g.n_h());
    let (mut vl, mut vh) = (0, 0);
    for i in 0..g.n_snapshots() {
        let snap = value.snapshot(i);
        let scale = snap.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
        let tol = 1e-6 * scale;
        for n in 0..nl {
            for m in 0..nh {
                let v = snap[n * nh + m];
                if n + 1 < nl && snap[(n + 1) * nh + m] < v - tol {
                    vl += 1;
                }
                if m + 1 < nh && snap[n * nh + m + 1] < v - tol {
                    vh += 1;
                }
            }
        }
    }
    (g.n_snapshots() * nl * nh, vl, vh)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    /// Max over nodes not on any grid edge.
    pub interior: f64,
    /// Max over edge nodes.
    pub boundary: f64,
}

/// Residual of the discrete equation at snapshot `i`, with the time
/// derivative taken as a central difference of the neighbouring snapshots.
pub fn hjb_residual(sol: &Solution, i: usize) -> Result<Residual> {
    let g = sol.grid();
    if g.n_snapshots() < 3 {
        return Err(Error::Argument(
            "residual needs at least 3 snapshots".into(),
        ));
    }
    if i == 0 || i >= g.n_intervals {
        return Err(Error::Argument(format!(
            "snapshot {i} has no neighbours on both sides"
        )));
    }
    let op = HjbOperator::new(g, &sol.model, &sol.options)?;
    let (nl, nh) = (g.n_lambda(), g.n_h());
    let y = to_solver_order(sol.value.snapshot(i), nl, nh);
    let mut f = vec![0.0; y.len()];
    op.eval(&y, &mut f);
    let dt = g.time(i + 1) - g.time(i - 1);
    let (mut interior, mut boundary) = (0.0f64, 0.0f64);
    for n in 0..nl {
        for m in 0..nh {
            let v_t = (sol.value.at(i + 1, n, m) - sol.value.at(i - 1, n, m)) / dt;
            let r = (v_t + f[m * nl + n]).abs();
            let edge = (nl > 1 && (n == 0 || n == nl - 1)) || m == 0 || m == nh - 1;
            if edge {
                boundary = boundary.max(r);
            } else {
                interior = interior.max(r);
            }
        }
    }
    Ok(Residual { interior, boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TerminalUtility;
    use crate::gordon_loeb::BreachFamily;

    fn small_grid() -> SolverGrid {
        SolverGrid::new((27.0, 63.0, 3.0), (0.0, 20.0, 1.0), 1.0, 20).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = SolverGrid::coarse(27.0, 1.0);
        assert_eq!(g.n_lambda(), 32);
        assert_eq!(g.n_h(), 51);
        assert_eq!(g.time(200), 1.0);
        let f = SolverGrid::full(27.0, 1.0);
        assert_eq!(f.n_lambda(), 190);
        assert_eq!(f.n_h(), 101);
        assert!(SolverGrid::new((27.0, 120.0, 4.0), (0.0, 50.0, 1.0), 1.0, 10).is_err());
        assert!(SolverGrid::new((27.0, 27.0, 1.0), (0.0, 50.0, 1.0), 1.0, 10).is_ok());
    }

    #[test]
    fn reward_at_terminal_corner() {
        let g = small_grid();
        let model = CyberModel::standard();
        let op = HjbOperator::new(&g, &model, &SolverOptions::default()).unwrap();
        let y = op.terminal_state();
        let f = assemble_rhs(&y, &g, &model, &SolverOptions::default()).unwrap();
        // at (27, 0): ξ(α−λ)=0, ρh=0, jump term 0 (V flat in λ), S(0)=v so reward 0;
        // D_hV = (1 − 0)/1 = 1 so the Hamiltonian is 0
        assert_eq!(f[0], 0.0);
        // at (27, h=1): reward η̄(v − S(1))·27, Hamiltonian from D_hV = (√2 − 0)/2
        let i = op.index(0, 1);
        let reward = 10.0 * (0.65 - 0.65 / 1.1) * 27.0;
        let dvdh = (2f64.sqrt() - 0.0) / 2.0;
        let drift = -0.2 * 1.0 * dvdh;
        let ham = ((dvdh - 1.0f64).max(0.0)).powi(2) / 0.1;
        assert!((f[i] - (reward + drift + ham)).abs() < 1e-12);
    }

    #[test]
    fn zero_field_sees_only_reward() {
        let g = small_grid();
        let mut model = CyberModel::standard();
        model.costs.terminal = TerminalUtility::Zero;
        let op = HjbOperator::new(&g, &model, &SolverOptions::default()).unwrap();
        let y = vec![0.0; op.dim()];
        let mut f = vec![0.0; op.dim()];
        op.eval(&y, &mut f);
        for m in 0..g.n_h() {
            for n in 0..g.n_lambda() {
                let expect = 10.0 * (0.65 - model.breach.prob(g.h(m))) * g.lambda(n);
                assert!((f[op.index(n, m)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_problem_stays_zero() {
        let g = small_grid();
        let mut model = CyberModel::standard();
        model.breach = BreachModel::new(BreachFamily::ClassI, 0.0, 0.1, 1.0).unwrap();
        model.costs.terminal = TerminalUtility::Zero;
        let sol = solve(&g, &model, &SolverOptions::default()).unwrap();
        assert!(sol.value.data.iter().all(|&x| x == 0.0));
        assert!(sol.policy.data.iter().all(|&x| x == 0.0));
        let r = hjb_residual(&sol, 10).unwrap();
        assert_eq!(r.interior, 0.0);
        assert_eq!(r.boundary, 0.0);
    }

    #[test]
    fn infinite_cost_kills_hamiltonian() {
        let g = small_grid();
        let mut model = CyberModel::standard();
        model.costs.gamma = 1e300;
        let op = HjbOperator::new(&g, &model, &SolverOptions::default()).unwrap();
        let y: Vec<f64> = (0..op.dim()).map(|i| (i as f64).sqrt() * 50.0).collect();
        for n in 0..g.n_lambda() {
            for m in 0..g.n_h() {
                assert!(model.costs.hamiltonian(op.dv_dh(&y, n, m)) < 1e-290);
            }
        }
    }

    fn fd_jacobian_check(options: SolverOptions) {
        let g = SolverGrid::new((27.0, 45.0, 1.5), (0.0, 6.0, 0.5), 1.0, 4).unwrap();
        let model = CyberModel::standard();
        let op = HjbOperator::new(&g, &model, &options).unwrap();
        let y: Vec<f64> = (0..op.dim())
            .map(|i| {
                let (n, m) = (i % g.n_lambda(), i / g.n_lambda());
                20.0 * (g.h(m) + 0.3).sqrt() + 0.05 * g.lambda(n) * g.h(m)
            })
            .collect();
        let (kl, ku) = op.bandwidths();
        let mut jac = BandMatrix::zeros(op.dim(), kl, ku);
        op.jacobian(0.0, &y, &mut jac);
        let mut f0 = vec![0.0; op.dim()];
        let mut f1 = vec![0.0; op.dim()];
        for j in 0..op.dim() {
            let eps = 1e-6;
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += eps;
            ym[j] -= eps;
            op.eval(&yp, &mut f1);
            op.eval(&ym, &mut f0);
            for i in 0..op.dim() {
                let fd = (f1[i] - f0[i]) / (2.0 * eps);
                let an = if i.abs_diff(j) <= kl {
                    jac.get(i, j)
                } else {
                    0.0
                };
                assert!(
                    (fd - an).abs() < 1e-5 * (1.0 + fd.abs()),
                    "({i},{j}): {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        fd_jacobian_check(SolverOptions::default());
        fd_jacobian_check(SolverOptions {
            upwind: true,
            jump: JumpMode::Interpolate,
            ..Default::default()
        });
    }

    #[test]
    fn small_solve_structure() {
        let g = small_grid();
        let model = CyberModel::standard();
        let sol = solve(&g, &model, &SolverOptions::default()).unwrap();
        let last = g.n_intervals;
        for n in 0..g.n_lambda() {
            for m in 0..g.n_h() {
                assert_eq!(sol.value.at(last, n, m), g.h(m).sqrt());
            }
        }
        assert_eq!(sol.report.monotone_violations_h, 0);
        assert!(sol.value.at(0, 0, 0) > sol.value.at(last, 0, 0));
    }

    #[test]
    fn query_modes() {
        let g = small_grid();
        let mut f = Field::zeros(g);
        for (k, x) in f.data.iter_mut().enumerate() {
            *x = k as f64;
        }
        let t = g.time(3);
        assert_eq!(
            f.query(t, g.lambda(2), g.h(5), Lookup::Nearest).unwrap(),
            f.at(3, 2, 5)
        );
        assert_eq!(
            f.query(t, g.lambda(2), g.h(5), Lookup::Linear).unwrap(),
            f.at(3, 2, 5)
        );
        let top = g.lambda_max;
        assert_eq!(
            f.query(t, 2.0 * top, 3.0, Lookup::Nearest).unwrap(),
            f.query(t, top, 3.0, Lookup::Nearest).unwrap()
        );
        let mid = f.query(t, g.lambda(2), 5.5, Lookup::Linear).unwrap();
        let (a, b) = (f.at(3, 2, 5), f.at(3, 2, 6));
        assert!(mid > a.min(b) && mid < a.max(b));
        assert!(f.query(2.0, 30.0, 1.0, Lookup::Nearest).is_err());
    }

    #[test]
    fn residual_needs_interior_snapshot() {
        let g = SolverGrid::new((27.0, 33.0, 3.0), (0.0, 4.0, 1.0), 1.0, 1).unwrap();
        let sol = solve(&g, &CyberModel::standard(), &SolverOptions::default()).unwrap();
        assert!(hjb_residual(&sol, 0).is_err());
        assert!(sol.report.residual_interior.is_none());
    }
}
