//! Standard-deviation premia with and without optimal prevention.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    expected_loss_no_investment, loss_moments, loss_variance, simulate_loss_batch, CostParams,
    LossSample,
};
use crate::error::{Error, Result};
use crate::gordon_loeb::BreachModel;
use crate::hawkes::{HawkesParams, MIN_MC_PATHS};
use crate::hjb::{FieldKind, Lookup, Solution};
use crate::strategy::extract_policy;

/// `E + θ·σ`.
pub fn premium(expected_loss: f64, loss_std: f64, theta: f64) -> Result<f64> {
    for (name, x) in [
        ("expected_loss", expected_loss),
        ("loss_std", loss_std),
        ("theta", theta),
    ] {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::Argument(format!(
                "{name} must be nonnegative, got {x}"
            )));
        }
    }
    Ok(expected_loss + theta * loss_std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumReport {
    pub policy_label: String,
    pub eta_var: f64,
    pub expected_loss: f64,
    pub expected_loss_se: f64,
    pub loss_std: f64,
    pub loss_std_se: f64,
    pub theta: f64,
    pub premium: f64,
    pub mc_paths: usize,
}

impl PremiumReport {
    /// Standard error of the premium, treating the two estimates as independent.
    pub fn premium_se(&self) -> f64 {
        self.expected_loss_se.hypot(self.theta * self.loss_std_se)
    }
}

/// No investment: closed-form mean, conditional-variance decomposition for
/// the spread with a Monte Carlo `Var(N_T)`.
pub fn premium_report_baseline(
    hawkes: &HawkesParams,
    model: &BreachModel,
    costs: &CostParams,
    theta: f64,
    mc_paths: usize,
    seed: u64,
) -> Result<PremiumReport> {
    model.validate()?;
    let mean = expected_loss_no_investment(hawkes, model, costs)?;
    let var = loss_variance(hawkes, model, costs, None, mc_paths, seed)?;
    let std = var.value.max(0.0).sqrt();
    let std_se = if std > 0.0 {
        var.std_error / (2.0 * std)
    } else {
        0.0
    };
    Ok(PremiumReport {
        policy_label: "no_investment".into(),
        eta_var: costs.eta_var,
        expected_loss: mean,
        expected_loss_se: 0.0,
        loss_std: std,
        loss_std_se: std_se,
        theta,
        premium: premium(mean, std, theta)?,
        mc_paths,
    })
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn check_field(
    sol: &Solution,
    hawkes: &HawkesParams,
    model: &BreachModel,
    costs: &CostParams,
) -> Result<()> {
    if sol.kind != FieldKind::Hawkes {
        return Err(Error::Config(
            "premium needs a field solved for the jump-driven intensity".into(),
        ));
    }
    let (h, b, c) = (&sol.model.hawkes, &sol.model.breach, &sol.model.costs);
    let mismatch = |what: &str| {
        Err(Error::Config(format!(
            "field was solved with different {what}"
        )))
    };
    if h != hawkes {
        return mismatch("intensity parameters");
    }
    if b != model {
        return mismatch("breach parameters");
    }
    let pairs = [
        (c.delta, costs.delta),
        (c.gamma, costs.gamma),
        (c.eta_mean, costs.eta_mean),
        (c.rho, costs.rho),
        (c.horizon, costs.horizon),
    ];
    if pairs.iter().any(|&(a, b)| !same(a, b)) || c.terminal != costs.terminal {
        return mismatch("cost parameters");
    }
    Ok(())
}

/// Losses under the stored feedback control. Each simulated path gets its
/// own control trace from `h = 0`, which is then replayed against that
/// path's attacks. The loss size distribution comes from `costs`, which
/// must otherwise match the field.
pub fn optimal_losses(
    sol: &Solution,
    hawkes: &HawkesParams,
    model: &BreachModel,
    costs: &CostParams,
    mc_paths: usize,
    seed: u64,
) -> Result<Vec<LossSample>> {
    check_field(sol, hawkes, model, costs)?;
    if mc_paths < MIN_MC_PATHS {
        return Err(Error::Argument(format!(
            "at least {MIN_MC_PATHS} paths are required, got {mc_paths}"
        )));
    }
    simulate_loss_batch(hawkes, model, costs, 0.0, mc_paths, seed, |path| {
        extract_policy(sol, path, 0.0, 0.0, Lookup::Nearest)?.schedule()
    })
}

/// Report for simulated losses.
pub fn report_from_samples(
    label: &str,
    eta_var: f64,
    samples: &[LossSample],
    theta: f64,
) -> Result<PremiumReport> {
    let m = loss_moments(samples);
    let std = m.std_dev();
    Ok(PremiumReport {
        policy_label: label.into(),
        eta_var,
        expected_loss: m.mean,
        expected_loss_se: m.mean_se,
        loss_std: std,
        loss_std_se: m.std_dev_se(),
        theta,
        premium: premium(m.mean, std, theta)?,
        mc_paths: samples.len(),
    })
}

pub fn premium_report_optimal(
    sol: &Solution,
    hawkes: &HawkesParams,
    model: &BreachModel,
    costs: &CostParams,
    theta: f64,
    mc_paths: usize,
    seed: u64,
) -> Result<PremiumReport> {
    let samples = optimal_losses(sol, hawkes, model, costs, mc_paths, seed)?;
    report_from_samples("optimal", costs.eta_var, &samples, theta)
}

/// Percentage reductions `(premium, std)` achieved by `optimal`.
pub fn prevention_gap(baseline: &PremiumReport, optimal: &PremiumReport) -> Result<(f64, f64)> {
    if !same(baseline.theta, optimal.theta) {
        return Err(Error::Argument(format!(
            "loadings differ: {} vs {}",
            baseline.theta, optimal.theta
        )));
    }
    if baseline.premium <= 0.0 || baseline.loss_std <= 0.0 {
        return Err(Error::UndefinedGain(
            baseline.premium.min(baseline.loss_std),
        ));
    }
    Ok((
        100.0 * (1.0 - optimal.premium / baseline.premium),
        100.0 * (1.0 - optimal.loss_std / baseline.loss_std),
    ))
}
