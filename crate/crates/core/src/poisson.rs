//! Constant-intensity benchmark: the two matched intensities and the
//! one-dimensional value function, solved as a single-row case of the
//! two-dimensional solver.

use crate::dynamics::CostParams;
use crate::error::{invalid, Result};
use crate::gordon_loeb::BreachModel;
use crate::hawkes::HawkesParams;
use crate::hjb::{solve_kind, CyberModel, FieldKind, Solution, SolverGrid, SolverOptions};

/// Baseline-matched intensity `λ₀`.
pub fn lambda_baseline(hawkes: &HawkesParams) -> f64 {
    hawkes.lambda0
}

/// Intensity with the same expected number of attacks over the horizon,
/// using the printed closed form with decay `e^{−ξT}`.
///
/// This differs slightly from `expected_count(T) / T`, whose decay rate is
/// `ξ − β`: 60.75 against 60.77 at the standard parameters.
pub fn lambda_expectation_matched(hawkes: &HawkesParams, horizon: f64) -> Result<f64> {
    hawkes.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(
            "horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    let k = hawkes.kappa();
    let m = hawkes.lambda0 * hawkes.xi / k;
    Ok(m + (-(-hawkes.xi * horizon).exp_m1()) / (horizon * k) * (hawkes.lambda0 - m))
}

/// Jump-free intensity model pinned at `lambda_p`.
pub fn degenerate_hawkes(lambda_p: f64, xi: f64) -> Result<HawkesParams> {
    HawkesParams::new(lambda_p, lambda_p, xi, 0.0)
}

/// Grid with the intensity axis collapsed onto `lambda_p`; the level axis
/// and snapshots are taken from `grid`.
pub fn poisson_grid(grid: &SolverGrid, lambda_p: f64) -> SolverGrid {
    SolverGrid {
        lambda_min: lambda_p,
        lambda_max: lambda_p,
        d_lambda: 1.0,
        ..*grid
    }
}

/// Solves the constant-intensity problem on the level axis of `grid`.
/// The returned field has a single intensity row.
pub fn solve_poisson(
    grid: &SolverGrid,
    lambda_p: f64,
    model: &BreachModel,
    costs: &CostParams,
    options: &SolverOptions,
) -> Result<Solution> {
    if !(lambda_p > 0.0 && lambda_p.is_finite()) {
        return Err(invalid(
            "lambda_p",
            format!("must be positive, got {lambda_p}"),
        ));
    }
    let full = CyberModel {
        hawkes: degenerate_hawkes(lambda_p, 1.0)?,
        breach: *model,
        costs: *costs,
    };
    solve_kind(
        &poisson_grid(grid, lambda_p),
        &full,
        options,
        FieldKind::Poisson {
            intensity: lambda_p,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TerminalUtility;
    use crate::gordon_loeb::BreachFamily;
    use crate::hjb::solve;

    fn grid() -> SolverGrid {
        SolverGrid::new((27.0, 27.0, 1.0), (0.0, 20.0, 1.0), 1.0, 20).unwrap()
    }

    #[test]
    fn benchmark_intensities() {
        let p = HawkesParams::standard();
        assert_eq!(lambda_baseline(&p), 27.0);
        let e = lambda_expectation_matched(&p, 1.0).unwrap();
        let by_hand = 67.5 - 6.75 * (1.0 - (-15f64).exp());
        assert!((e - by_hand).abs() < 1e-12);
        assert!((e - 60.75).abs() < 0.01);
        let flat = HawkesParams::new(27.0, 27.0, 15.0, 0.0).unwrap();
        assert!((lambda_expectation_matched(&flat, 1.0).unwrap() - 27.0).abs() < 1e-12);
        let other = HawkesParams::new(27.0, 50.0, 15.0, 9.0).unwrap();
        assert_eq!(lambda_baseline(&other), 50.0);
        assert!(lambda_expectation_matched(&HawkesParams { beta: 15.0, ..p }, 1.0).is_err());
    }

    #[test]
    fn terminal_and_zero_problem() {
        let sol = solve_poisson(
            &grid(),
            27.0,
            &BreachModel::standard(),
            &CostParams::standard(),
            &Default::default(),
        )
        .unwrap();
        let g = sol.grid();
        for m in 0..g.n_h() {
            assert_eq!(sol.value.at(g.n_intervals, 0, m), g.h(m).sqrt());
        }
        assert!(sol.policy.data.iter().all(|&z| z >= 0.0));

        let mut costs = CostParams::standard();
        costs.terminal = TerminalUtility::Zero;
        let zero = BreachModel::new(BreachFamily::ClassI, 0.0, 0.1, 1.0).unwrap();
        let sol = solve_poisson(&grid(), 27.0, &zero, &costs, &Default::default()).unwrap();
        assert!(sol
            .value
            .data
            .iter()
            .chain(&sol.policy.data)
            .all(|&x| x == 0.0));
    }

    #[test]
    fn bit_identical_reruns() {
        let run = || {
            solve_poisson(
                &grid(),
                60.75,
                &BreachModel::standard(),
                &CostParams::standard(),
                &Default::default(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.value.data, b.value.data);
        assert_eq!(a.policy.data, b.policy.data);
    }

    #[test]
    fn higher_intensity_dominates() {
        let lo = solve_poisson(
            &grid(),
            27.0,
            &BreachModel::standard(),
            &CostParams::standard(),
            &Default::default(),
        )
        .unwrap();
        let hi = solve_poisson(
            &grid(),
            60.75,
            &BreachModel::standard(),
            &CostParams::standard(),
            &Default::default(),
        )
        .unwrap();
        for (a, b) in lo.value.data.iter().zip(&hi.value.data) {
            assert!(b >= a);
        }
    }

    #[test]
    fn matches_jump_free_two_dimensional_solve() {
        let g2 = SolverGrid::new((27.0, 45.0, 3.0), (0.0, 20.0, 1.0), 1.0, 20).unwrap();
        let model = CyberModel {
            hawkes: HawkesParams::new(27.0, 27.0, 15.0, 0.0).unwrap(),
            ..CyberModel::standard()
        };
        let two = solve(&g2, &model, &Default::default()).unwrap();
        let one =
            solve_poisson(&g2, 27.0, &model.breach, &model.costs, &Default::default()).unwrap();
        for i in 0..g2.n_snapshots() {
            for m in 0..g2.n_h() {
                let (a, b) = (two.value.at(i, 0, m), one.value.at(i, 0, m));
                assert!((a - b).abs() <= 0.01 * b.abs().max(1e-12), "{a} vs {b}");
            }
        }
    }
}
