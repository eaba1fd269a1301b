//! Self-exciting attack arrivals with exponential kernel.
//!
//! The intensity solves `dλ = ξ(α − λ) dt + β dN`, so between events it
//! relaxes exponentially toward `α` and jumps by `β` at each attack.

use rand::Rng;
use rand_distr::{Exp1, StandardUniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{invalid, Error, Result};
use crate::radau::{self, OdeSystem, RadauOptions};
use crate::rng::{RngStreams, Stream};
use crate::stats::SampleMoments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub alpha: f64,
    pub lambda0: f64,
    pub xi: f64,
    pub beta: f64,
}

impl HawkesParams {
    pub fn new(alpha: f64, lambda0: f64, xi: f64, beta: f64) -> Result<Self> {
        let p = Self {
            alpha,
            lambda0,
            xi,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// α = λ₀ = 27, ξ = 15, β = 9.
    pub fn standard() -> Self {
        Self {
            alpha: 27.0,
            lambda0: 27.0,
            xi: 15.0,
            beta: 9.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(
                "alpha",
                format!("must be positive and finite, got {}", self.alpha),
            ));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(invalid(
                "lambda0",
                format!("must be positive and finite, got {}", self.lambda0),
            ));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(invalid(
                "xi",
                format!("must be positive and finite, got {}", self.xi),
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid(
                "beta",
                format!("must be nonnegative and finite, got {}", self.beta),
            ));
        }
        if self.beta >= self.xi {
            return Err(Error::Unstable {
                beta: self.beta,
                xi: self.xi,
            });
        }
        Ok(())
    }

    /// `ξ − β`, the mean-reversion speed of `E[λ]`.
    pub fn kappa(&self) -> f64 {
        self.xi - self.beta
    }

    /// Stationary mean `αξ / (ξ − β)`.
    pub fn stationary_mean(&self) -> f64 {
        self.alpha * self.xi / self.kappa()
    }

    /// `E[λ_{t+dt} | λ_t = lambda]`.
    pub fn conditional_mean_intensity(&self, lambda: f64, dt: f64) -> f64 {
        let m = self.stationary_mean();
        m + (-self.kappa() * dt).exp() * (lambda - m)
    }

    /// `E[∫_t^{t+dt} λ_s ds | λ_t = lambda]`.
    pub fn conditional_integrated_intensity(&self, lambda: f64, dt: f64) -> f64 {
        let k = self.kappa();
        let m = self.stationary_mean();
        m * dt + (lambda - m) * (-(-k * dt).exp_m1()) / k
    }
}

fn check_time(name: &'static str, t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{name} must be finite and nonnegative, got {t}"
        )))
    }
}

/// Attack times of one realization on `(0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPath {
    pub params: HawkesParams,
    pub horizon: f64,
    pub event_times: Vec<f64>,
}

impl AttackPath {
    pub fn new(params: HawkesParams, horizon: f64, event_times: Vec<f64>) -> Result<Self> {
        params.validate()?;
        check_time("horizon", horizon)?;
        let increasing = event_times.windows(2).all(|w| w[0] < w[1]);
        let inside = event_times.iter().all(|&t| t > 0.0 && t <= horizon);
        if !(increasing && inside) {
            return Err(Error::Argument(
                "event times must be strictly increasing and lie in (0, horizon]".into(),
            ));
        }
        Ok(Self {
            params,
            horizon,
            event_times,
        })
    }

    pub fn n_events(&self) -> usize {
        self.event_times.len()
    }

    /// `N_t`, counting events at times `≤ t`.
    pub fn count(&self, t: f64) -> usize {
        self.event_times.partition_point(|&s| s <= t)
    }

    fn intensity_from(&self, t: f64, n: usize) -> f64 {
        let p = &self.params;
        let excite: f64 = self.event_times[..n]
            .iter()
            .map(|&s| (-p.xi * (t - s)).exp())
            .sum();
        p.alpha + (p.lambda0 - p.alpha) * (-p.xi * t).exp() + p.beta * excite
    }

    /// Right-continuous `λ_t` (events at `t` included).
    pub fn intensity(&self, t: f64) -> f64 {
        self.intensity_from(t, self.count(t))
    }

    /// Left limit `λ_{t−}` (events at `t` excluded).
    pub fn intensity_left(&self, t: f64) -> f64 {
        self.intensity_from(t, self.event_times.partition_point(|&s| s < t))
    }

    /// `λ` on an increasing time grid, by the exact exponential recursion.
    pub fn intensity_on_grid(&self, times: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let mut out = Vec::with_capacity(times.len());
        let mut t = 0.0;
        let mut excess = p.lambda0 - p.alpha;
        let mut next = 0;
        for &s in times {
            while next < self.event_times.len() && self.event_times[next] <= s {
                let tau = self.event_times[next];
                excess = excess * (-p.xi * (tau - t)).exp() + p.beta;
                t = tau;
                next += 1;
            }
            out.push(p.alpha + excess * (-p.xi * (s - t)).exp());
        }
        out
    }
}

/// Ogata thinning sampler yielding attack times in order.
///
/// Between events the intensity moves monotonically toward `α`, so
/// `max(λ(t+), α)` bounds it until the next accepted event.
pub struct ThinningSampler<'a, R: Rng> {
    params: HawkesParams,
    horizon: f64,
    rng: &'a mut R,
    t: f64,
    excess: f64,
    max_ratio: f64,
}

impl<'a, R: Rng> ThinningSampler<'a, R> {
    pub fn new(params: HawkesParams, horizon: f64, rng: &'a mut R) -> Self {
        Self {
            params,
            horizon,
            rng,
            t: 0.0,
            excess: params.lambda0 - params.alpha,
            max_ratio: 0.0,
        }
    }

    /// Largest `λ / bound` seen at any candidate point so far.
    pub fn max_ratio(&self) -> f64 {
        self.max_ratio
    }
}

impl<R: Rng> Iterator for ThinningSampler<'_, R> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let p = self.params;
        loop {
            let bound = p.alpha + self.excess.max(0.0);
            let w: f64 = self.rng.sample::<f64, _>(Exp1) / bound;
            let cand = self.t + w;
            if cand > self.horizon {
                self.t = self.horizon;
                return None;
            }
            self.excess *= (-p.xi * w).exp();
            self.t = cand;
            let lambda = p.alpha + self.excess;
            self.max_ratio = self.max_ratio.max(lambda / bound);
            let u: f64 = self.rng.sample(StandardUniform);
            if u * bound <= lambda {
                self.excess += p.beta;
                return Some(cand);
            }
        }
    }
}

pub fn simulate_path_with<R: Rng>(
    params: &HawkesParams,
    horizon: f64,
    rng: &mut R,
) -> Result<AttackPath> {
    params.validate()?;
    check_time("horizon", horizon)?;
    let event_times: Vec<f64> = ThinningSampler::new(*params, horizon, rng).collect();
    Ok(AttackPath {
        params: *params,
        horizon,
        event_times,
    })
}

/// One path drawn from the `Paths` stream of `seed`.
pub fn simulate_path(params: &HawkesParams, horizon: f64, seed: u64) -> Result<AttackPath> {
    simulate_path_with(
        params,
        horizon,
        &mut RngStreams::new(seed).rng(Stream::Paths, 0),
    )
}

/// Path `index` of a reproducible batch.
pub fn simulate_indexed(
    params: &HawkesParams,
    horizon: f64,
    streams: &RngStreams,
    index: u64,
) -> Result<AttackPath> {
    simulate_path_with(params, horizon, &mut streams.rng(Stream::Paths, index))
}

pub fn expected_intensity(params: &HawkesParams, t: f64) -> Result<f64> {
    params.validate()?;
    check_time("t", t)?;
    Ok(params.conditional_mean_intensity(params.lambda0, t))
}

pub fn expected_count(params: &HawkesParams, t: f64) -> Result<f64> {
    params.validate()?;
    check_time("t", t)?;
    Ok(params.conditional_integrated_intensity(params.lambda0, t))
}

/// First moment and variance of `λ`, integrated in centered form so that no
/// difference of large second moments is ever taken.
struct IntensityMoments {
    p: HawkesParams,
}

impl OdeSystem for IntensityMoments {
    fn dim(&self) -> usize {
        2
    }
    fn bandwidths(&self) -> (usize, usize) {
        (1, 0)
    }
    fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
        let k = self.p.kappa();
        d[0] = self.p.xi * self.p.alpha - k * y[0];
        d[1] = self.p.beta * self.p.beta * y[0] - 2.0 * k * y[1];
    }
    fn jacobian(&self, _t: f64, _y: &[f64], j: &mut BandMatrix<f64>) {
        let k = self.p.kappa();
        j.add(0, 0, -k);
        j.add(1, 0, self.p.beta * self.p.beta);
        j.add(1, 1, -2.0 * k);
    }
}

/// `Var(λ_t)` from the moment equations of the jump dynamics.
pub fn intensity_variance(params: &HawkesParams, t: f64) -> Result<f64> {
    params.validate()?;
    check_time("t", t)?;
    if t == 0.0 || params.beta == 0.0 {
        return Ok(0.0);
    }
    let opts = RadauOptions {
        rtol: 1e-10,
        atol: 1e-10,
        ..Default::default()
    };
    let mut var = f64::NAN;
    radau::integrate(
        &IntensityMoments { p: *params },
        0.0,
        &[params.lambda0, 0.0],
        &[t],
        &opts,
        |_, _, y| var = y[1],
    )?;
    Ok(var.max(0.0))
}

/// `E[λ_T] + 7·sd(λ_T)`, the truncation level for the intensity grid.
pub fn lambda_max_heuristic(params: &HawkesParams, horizon: f64) -> Result<f64> {
    Ok(expected_intensity(params, horizon)? + 7.0 * intensity_variance(params, horizon)?.sqrt())
}

pub const MIN_MC_PATHS: usize = 10_000;

/// Monte Carlo moments of `N_t` over `mc_paths` reproducible paths.
pub fn count_moments(
    params: &HawkesParams,
    t: f64,
    mc_paths: usize,
    seed: u64,
) -> Result<SampleMoments> {
    params.validate()?;
    check_time("t", t)?;
    if mc_paths < MIN_MC_PATHS {
        return Err(Error::Argument(format!(
            "at least {MIN_MC_PATHS} paths are required, got {mc_paths}"
        )));
    }
    let streams = RngStreams::new(seed);
    let counts: Vec<f64> = (0..mc_paths as u64)
        .into_par_iter()
        .map(|i| {
            ThinningSampler::new(*params, t, &mut streams.rng(Stream::Paths, i)).count() as f64
        })
        .collect();
    Ok(SampleMoments::from_slice(&counts))
}

/// Monte Carlo `Var(N_t)` with its standard error.
pub fn count_variance(
    params: &HawkesParams,
    t: f64,
    mc_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let m = count_moments(params, t, mc_paths, seed)?;
    Ok((m.variance, m.variance_se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric;

    fn std() -> HawkesParams {
        HawkesParams::standard()
    }

    #[test]
    fn rejects_unstable_and_nonpositive() {
        assert!(matches!(
            HawkesParams::new(27.0, 27.0, 15.0, 20.0),
            Err(Error::Unstable { .. })
        ));
        assert!(matches!(
            HawkesParams::new(27.0, 27.0, 15.0, 15.0),
            Err(Error::Unstable { .. })
        ));
        assert!(HawkesParams::new(0.0, 27.0, 15.0, 9.0).is_err());
        assert!(HawkesParams::new(27.0, -1.0, 15.0, 9.0).is_err());
        assert!(HawkesParams::new(27.0, 27.0, 15.0, -1.0).is_err());
    }

    #[test]
    fn mean_intensity_values() {
        let p = std();
        assert_eq!(expected_intensity(&p, 0.0).unwrap(), 27.0);
        assert!((expected_intensity(&p, 1e3).unwrap() - 67.5).abs() < 1e-12);
        let e1 = expected_intensity(&p, 1.0).unwrap();
        assert!((e1 - (67.5 - 40.5 * (-6f64).exp())).abs() < 1e-12);
        assert!((e1 - 67.40).abs() < 5e-3);
    }

    #[test]
    fn expected_count_matches_quadrature() {
        for p in [std(), HawkesParams::new(10.0, 40.0, 5.0, 3.0).unwrap()] {
            for t in [0.0, 0.3, 1.0, 2.5] {
                let q = numeric::integrate(|s| expected_intensity(&p, s).unwrap(), 0.0, t, 1e-11)
                    .unwrap();
                assert!((expected_count(&p, t).unwrap() - q).abs() < 1e-8);
            }
        }
        assert!((expected_count(&std(), 1.0).unwrap() - 60.7667).abs() < 1e-4);
        let poisson = HawkesParams::new(27.0, 27.0, 15.0, 0.0).unwrap();
        assert!((expected_count(&poisson, 1.7).unwrap() - 27.0 * 1.7).abs() < 1e-12);
    }

    /// Closed-form solution of the centered variance equation.
    fn variance_oracle(p: &HawkesParams, t: f64) -> f64 {
        let k = p.kappa();
        let m = p.stationary_mean();
        p.beta
            * p.beta
            * (m * (1.0 - (-2.0 * k * t).exp()) / (2.0 * k)
                + (p.lambda0 - m) * (-2.0 * k * t).exp() * ((k * t).exp() - 1.0) / k)
    }

    #[test]
    fn intensity_variance_against_closed_form() {
        for p in [std(), HawkesParams::new(5.0, 60.0, 4.0, 3.5).unwrap()] {
            for t in [0.05, 0.5, 1.0, 3.0] {
                let v = intensity_variance(&p, t).unwrap();
                let o = variance_oracle(&p, t);
                assert!((v - o).abs() <= 1e-7 * o.max(1.0), "t={t}: {v} vs {o}");
            }
        }
        assert_eq!(intensity_variance(&std(), 0.0).unwrap(), 0.0);
        let poisson = HawkesParams::new(27.0, 27.0, 15.0, 0.0).unwrap();
        assert_eq!(intensity_variance(&poisson, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn lambda_max_near_216() {
        let lm = lambda_max_heuristic(&std(), 1.0).unwrap();
        assert!((lm - 216.0).abs() < 5.0, "{lm}");
        let fast = HawkesParams::new(27.0, 27.0, 50.0, 9.0).unwrap();
        assert!(lambda_max_heuristic(&fast, 1.0).unwrap() < lm);
        let poisson = HawkesParams::new(27.0, 27.0, 15.0, 0.0).unwrap();
        assert_eq!(lambda_max_heuristic(&poisson, 1.0).unwrap(), 27.0);
    }

    #[test]
    fn path_intensity_forms_agree() {
        let p = std();
        let path = simulate_path(&p, 1.0, 7).unwrap();
        assert!(path.n_events() > 10);
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let rec = path.intensity_on_grid(&grid);
        for (t, r) in grid.iter().zip(&rec) {
            let exact = path.intensity(*t);
            assert!((exact - r).abs() <= 1e-12 * exact);
            assert!(exact >= p.lambda0 - 1e-12);
        }
        for &tau in &path.event_times {
            assert!((path.intensity(tau) - path.intensity_left(tau) - p.beta).abs() < 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let a = simulate_path(&std(), 1.0, 11).unwrap();
        let b = simulate_path(&std(), 1.0, 11).unwrap();
        let c = simulate_path(&std(), 1.0, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_horizon_is_usually_empty() {
        let empty = (0..200)
            .filter(|&s| simulate_path(&std(), 1e-6, s).unwrap().n_events() == 0)
            .count();
        assert!(empty >= 199);
    }

    #[test]
    fn count_variance_requires_enough_paths() {
        assert!(count_variance(&std(), 1.0, 100, 0).is_err());
    }

    #[test]
    fn attack_path_validation() {
        assert!(AttackPath::new(std(), 1.0, vec![0.2, 0.1]).is_err());
        assert!(AttackPath::new(std(), 1.0, vec![0.0]).is_err());
        assert!(AttackPath::new(std(), 1.0, vec![0.1, 1.0]).is_ok());
    }
}
