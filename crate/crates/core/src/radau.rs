//! Adaptive Radau IIA (order 5) integrator for stiff systems with a banded
//! Jacobian.
//!
//! The implementation follows the classical RADAU5 structure of Hairer and
//! Wanner: simplified Newton iterations on the transformed stage equations
//! (one real and one complex band system per factorization), the embedded
//! error estimator filtered through the real iteration matrix, Gustafsson's
//! predictive step-size controller, and the collocation polynomial for dense
//! output.

#![allow(clippy::excessive_precision)]

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};

/// An autonomous-or-not ODE system `y' = f(t, y)` with a banded Jacobian.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    /// `(lower, upper)` bandwidths of `df/dy`.
    fn bandwidths(&self) -> (usize, usize);
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);
    /// Writes `df/dy` into `jac`, which arrives zeroed.
    fn jacobian(&self, t: f64, y: &[f64], jac: &mut BandMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadauOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub newton_max_iter: usize,
    /// Jacobian/factorization reuse threshold on the Newton contraction rate.
    pub theta_max: f64,
    pub safety: f64,
    pub predictive_control: bool,
    /// Interpolate outputs from the collocation polynomial instead of
    /// landing a step on every output time. Cheaper, but only third-order
    /// accurate between steps.
    pub dense_output: bool,
}

impl Default for RadauOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            h_init: 1e-4,
            h_max: f64::INFINITY,
            max_steps: 100_000,
            newton_max_iter: 7,
            theta_max: 1e-3,
            safety: 0.9,
            predictive_control: true,
            dense_output: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub n_steps: usize,
    pub n_accepted: usize,
    pub n_rejected: usize,
    pub n_rhs: usize,
    pub n_jacobian: usize,
    pub n_factor: usize,
    pub n_newton_iter: usize,
    pub h_smallest: f64,
    pub h_largest: f64,
}

const ALPHA: f64 = 2.681_082_873_627_752_1;
const BETA: f64 = 3.050_430_199_247_410_6;
const GAMMA: f64 = 3.637_834_252_744_495_7;
const E0: f64 = -2.762_305_454_748_599_4;
const E1: f64 = 0.379_935_598_252_728_88;
const E2: f64 = -0.091_629_609_865_225_789;
const MU1: f64 = 0.155_051_025_721_682_19;
const MU2: f64 = 0.644_948_974_278_317_81;
const MU3: f64 = -0.844_948_974_278_317_81;
const MU4: f64 = -0.355_051_025_721_682_19;
const MU5: f64 = -0.489_897_948_556_635_62;
const SQRT_6: f64 = 2.449_489_742_783_178;
const C: [f64; 3] = [(4.0 - SQRT_6) / 10.0, (4.0 + SQRT_6) / 10.0, 1.0];
const T: [[f64; 3]; 3] = [
    [
        0.091_232_394_870_892_942,
        -0.141_255_295_020_954_21,
        -0.030_029_194_105_147_424,
    ],
    [
        0.241_717_932_707_107_02,
        0.204_129_352_293_799_93,
        0.382_942_112_757_261_94,
    ],
    [0.966_048_182_615_092_94, 1.0, 0.0],
];
const TI: [[f64; 3]; 3] = [
    [
        4.325_579_890_063_155_4,
        0.339_199_251_815_809_87,
        0.541_770_539_935_874_87,
    ],
    [
        -4.178_718_591_551_904_7,
        -0.327_682_820_761_062_39,
        0.476_623_554_500_550_45,
    ],
    [
        -0.502_872_634_945_786_88,
        2.571_926_949_855_605_4,
        -0.596_039_204_828_224_92,
    ],
];

struct Factors {
    real: BandLu<f64>,
    complex: BandLu<Complex64>,
}

fn factorize(jac: &BandMatrix<f64>, h: f64, stats: &mut IntegratorStats) -> Result<Factors> {
    stats.n_factor += 1;
    let (real, complex) = rayon::join(
        || BandLu::factor_shifted(jac, GAMMA / h),
        || BandLu::factor_shifted(jac, Complex64::new(ALPHA / h, BETA / h)),
    );
    Ok(Factors {
        real: real?,
        complex: complex?,
    })
}

fn rms(v: &[f64], scal: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scal).map(|(x, s)| (x / s) * (x / s)).sum();
    (s / v.len() as f64).sqrt()
}

/// Integrates from `t0` to the last entry of `t_out`, calling `on_output`
/// with the dense-output solution at every requested time (which must be
/// nondecreasing and not before `t0`).
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_out: &[f64],
    opts: &RadauOptions,
    mut on_output: F,
) -> Result<IntegratorStats>
where
    S: OdeSystem,
    F: FnMut(usize, f64, &[f64]),
{
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Argument(format!(
            "initial state has {} entries, system has {n}",
            y0.len()
        )));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Argument("tolerances must be positive".into()));
    }
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < t0) {
        return Err(Error::Argument(
            "output times must be nondecreasing and >= t0".into(),
        ));
    }
    let mut stats = IntegratorStats {
        h_smallest: f64::INFINITY,
        ..Default::default()
    };
    let Some(&t_end) = t_out.last() else {
        return Ok(stats);
    };

    // tolerance transformation used by RADAU5
    let rtol = 0.1 * opts.rtol.powf(2.0 / 3.0);
    let atol = rtol * (opts.atol / opts.rtol);
    let fnewt = (10.0 * f64::EPSILON / rtol).max(0.03f64.min(rtol.sqrt()));
    let nit = opts.newton_max_iter;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut next_out = 0;
    while next_out < t_out.len() && t_out[next_out] <= t0 {
        on_output(next_out, t_out[next_out], &y);
        next_out += 1;
    }
    if next_out == t_out.len() {
        return Ok(stats);
    }

    let (kl, ku) = sys.bandwidths();
    let mut jac = BandMatrix::zeros(n, kl, ku);
    let mut f0 = vec![0.0; n];
    sys.rhs(t, &y, &mut f0);
    stats.n_rhs += 1;
    let mut scal: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();

    let mut z = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut w = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut yc = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut stage = vec![0.0; n];
    let mut rhs_real = vec![0.0; n];
    let mut rhs_cplx = vec![Complex64::new(0.0, 0.0); n];

    let mut h = opts.h_init.min(opts.h_max).min(t_end - t);
    let mut h_prev = h;
    let mut err_prev = 1e-2;
    let mut factors: Option<Factors> = None;
    let mut jac_ok = false;
    let mut jac_fresh = false;
    let mut faccon = 1.0_f64;
    let mut first = true;
    let mut follows_reject = false;

    loop {
        if stats.n_steps >= opts.max_steps {
            return Err(Error::Solver {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        if h.abs() <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::Solver {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        let target = if opts.dense_output {
            t_end
        } else {
            t_out[next_out]
        };
        let mut last = false;
        if t + h >= target - 1e-12 * target.abs().max(1.0) {
            let clamped = target - t;
            if clamped != h {
                factors = None;
            }
            h = clamped;
            last = true;
        }
        stats.n_steps += 1;

        if factors.is_none() {
            if !jac_ok {
                jac.fill_zero();
                sys.jacobian(t, &y, &mut jac);
                stats.n_jacobian += 1;
                jac_ok = true;
                jac_fresh = true;
            }
            factors = Some(factorize(&jac, h, &mut stats)?);
        }
        let fac = factors.as_ref().expect("factorized above");

        // starting values
        if first {
            for s in 0..3 {
                z[s].iter_mut().for_each(|v| *v = 0.0);
                w[s].iter_mut().for_each(|v| *v = 0.0);
            }
        } else {
            let c3q = h / h_prev;
            let cq = [MU1 * c3q, MU2 * c3q, c3q];
            for i in 0..n {
                for s in 0..3 {
                    z[s][i] =
                        cq[s] * (yc[0][i] + (cq[s] - MU4) * (yc[1][i] + (cq[s] - MU3) * yc[2][i]));
                }
                for r in 0..3 {
                    w[r][i] = TI[r][0] * z[0][i] + TI[r][1] * z[1][i] + TI[r][2] * z[2][i];
                }
            }
        }

        let (al, be, ga) = (ALPHA / h, BETA / h, GAMMA / h);
        faccon = faccon.max(f64::EPSILON).powf(0.8);
        let mut theta = opts.theta_max;
        let mut dw_old = 0.0;
        let mut thq_old = 0.0;
        let mut converged = false;
        let mut diverged: Option<f64> = None;
        let mut newt = 0;
        while newt < nit {
            newt += 1;
            stats.n_newton_iter += 1;
            for s in 0..3 {
                for i in 0..n {
                    stage[i] = y[i] + z[s][i];
                }
                sys.rhs(t + C[s] * h, &stage, &mut k[s]);
            }
            stats.n_rhs += 3;
            for i in 0..n {
                let tk = |r: usize| TI[r][0] * k[0][i] + TI[r][1] * k[1][i] + TI[r][2] * k[2][i];
                rhs_real[i] = tk(0) - ga * w[0][i];
                let re = tk(1) - al * w[1][i] + be * w[2][i];
                let im = tk(2) - be * w[1][i] - al * w[2][i];
                rhs_cplx[i] = Complex64::new(re, im);
            }
            rayon::join(
                || fac.real.solve_in_place(&mut rhs_real),
                || fac.complex.solve_in_place(&mut rhs_cplx),
            );
            let mut ss = 0.0;
            for i in 0..n {
                let d = [rhs_real[i], rhs_cplx[i].re, rhs_cplx[i].im];
                for r in 0..3 {
                    w[r][i] += d[r];
                    ss += (d[r] / scal[i]).powi(2);
                }
                for s in 0..3 {
                    z[s][i] = T[s][0] * w[0][i] + T[s][1] * w[1][i] + T[s][2] * w[2][i];
                }
            }
            let dw = (ss / (3.0 * n as f64)).sqrt();
            if !dw.is_finite() {
                diverged = Some(0.5);
                break;
            }
            if newt > 1 && newt < nit {
                let thq = dw / dw_old;
                theta = if newt == 2 {
                    thq
                } else {
                    (thq * thq_old).sqrt()
                };
                thq_old = thq;
                if theta < 0.99 {
                    faccon = theta / (1.0 - theta);
                    let expo = (nit - 1 - newt) as f64;
                    let rel = faccon * dw * theta.powf(expo) / fnewt;
                    if rel >= 1.0 {
                        let q = rel.clamp(1e-4, 20.0);
                        diverged = Some(0.8 * q.powf(-1.0 / (4.0 + expo)));
                        break;
                    }
                } else {
                    diverged = Some(0.5);
                    break;
                }
            }
            dw_old = dw.max(f64::EPSILON);
            if faccon * dw <= fnewt {
                converged = true;
                break;
            }
        }

        if !converged {
            let mult = diverged.unwrap_or(0.5);
            log::debug!("radau: Newton failure at t={t}, h={h}, shrinking by {mult}");
            stats.n_rejected += 1;
            h *= mult;
            factors = None;
            if !jac_fresh {
                jac_ok = false;
            }
            follows_reject = true;
            continue;
        }

        // embedded error estimate
        let mut ez = vec![0.0; n];
        let mut err = vec![0.0; n];
        for i in 0..n {
            ez[i] = ga * (E0 * z[0][i] + E1 * z[1][i] + E2 * z[2][i]);
            err[i] = ez[i] + f0[i];
        }
        fac.real.solve_in_place(&mut err);
        let mut rel_err = rms(&err, &scal).max(1e-10);
        if rel_err >= 1.0 && (first || follows_reject) {
            for i in 0..n {
                stage[i] = y[i] + err[i];
            }
            let mut fpe = vec![0.0; n];
            sys.rhs(t, &stage, &mut fpe);
            stats.n_rhs += 1;
            for i in 0..n {
                err[i] = ez[i] + fpe[i];
            }
            fac.real.solve_in_place(&mut err);
            rel_err = rms(&err, &scal).max(1e-10);
        }
        if !rel_err.is_finite() {
            rel_err = 1e10;
        }

        let fac_newton = opts
            .safety
            .min(opts.safety * (1 + 2 * nit) as f64 / (newt + 2 * nit) as f64);
        let div = (rel_err.powf(0.25) / fac_newton).clamp(0.125, 5.0);
        let mut h_new = h / div;

        if rel_err < 1.0 {
            // accept
            stats.n_accepted += 1;
            stats.h_smallest = stats.h_smallest.min(h);
            stats.h_largest = stats.h_largest.max(h);
            if opts.predictive_control && stats.n_accepted > 1 {
                let g = (h_prev / h) * (rel_err * rel_err / err_prev).powf(0.25) / opts.safety;
                let g = g.clamp(0.125, 5.0);
                h_new = h / div.max(g);
            }
            h_prev = h;
            err_prev = rel_err.max(1e-2);
            let t_old = t;
            for i in 0..n {
                y[i] += z[2][i];
                yc[0][i] = (z[1][i] - z[2][i]) / MU4;
                yc[1][i] = ((z[0][i] - z[1][i]) / MU5 - yc[0][i]) / MU3;
                yc[2][i] = yc[1][i] - ((z[0][i] - z[1][i]) / MU5 - z[0][i] / MU1) / MU2;
            }
            t = if last { target } else { t + h };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver {
                    t,
                    reason: "non-finite state".into(),
                });
            }

            let mut dense = vec![0.0; n];
            while next_out < t_out.len() && t_out[next_out] <= t {
                let to = t_out[next_out];
                if (to - t).abs() <= 1e-14 * t.abs().max(1.0) || to > t {
                    on_output(next_out, to, &y);
                } else {
                    let s = (to - t) / h;
                    for i in 0..n {
                        dense[i] =
                            y[i] + s * (yc[0][i] + (s - MU4) * (yc[1][i] + (s - MU3) * yc[2][i]));
                    }
                    debug_assert!(to >= t_old - 1e-12);
                    on_output(next_out, to, &dense);
                }
                next_out += 1;
            }
            if last && next_out == t_out.len() {
                return Ok(stats);
            }

            sys.rhs(t, &y, &mut f0);
            stats.n_rhs += 1;
            for i in 0..n {
                scal[i] = atol + rtol * y[i].abs();
            }
            if follows_reject {
                h_new = h_new.min(h);
            }
            h_new = h_new.min(opts.h_max);
            first = false;
            follows_reject = false;
            jac_fresh = false;
            let q = h_new / h;
            if theta <= opts.theta_max && (1.0..=1.2).contains(&q) {
                // keep h and the current factorization
                jac_ok = true;
            } else {
                h = h_new;
                factors = None;
                jac_ok = theta <= opts.theta_max;
            }
        } else {
            stats.n_rejected += 1;
            follows_reject = true;
            h = if first { h * 0.1 } else { h_new };
            factors = None;
            if !jac_fresh {
                jac_ok = false;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y' = -k (y - cos t), stiff for large k.
    struct Prothero {
        k: f64,
    }
    impl OdeSystem for Prothero {
        fn dim(&self) -> usize {
            1
        }
        fn bandwidths(&self) -> (usize, usize) {
            (0, 0)
        }
        fn rhs(&self, t: f64, y: &[f64], d: &mut [f64]) {
            d[0] = -self.k * (y[0] - t.cos()) - t.sin();
        }
        fn jacobian(&self, _t: f64, _y: &[f64], j: &mut BandMatrix<f64>) {
            j.add(0, 0, -self.k);
        }
    }

    #[test]
    fn stiff_scalar_tracks_slow_manifold() {
        let sys = Prothero { k: 1e6 };
        let outs: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let mut got = vec![0.0; outs.len()];
        let stats = integrate(
            &sys,
            0.0,
            &[1.0],
            &outs,
            &RadauOptions::default(),
            |i, _, y| got[i] = y[0],
        )
        .unwrap();
        for (t, g) in outs.iter().zip(&got) {
            assert!((g - t.cos()).abs() < 1e-6, "t={t}: {g} vs {}", t.cos());
        }
        assert!(stats.n_accepted < 200, "{stats:?}");
    }

    /// 1-D heat equation with Dirichlet zeros; the lowest mode decays exactly.
    struct Heat {
        n: usize,
    }
    impl OdeSystem for Heat {
        fn dim(&self) -> usize {
            self.n
        }
        fn bandwidths(&self) -> (usize, usize) {
            (1, 1)
        }
        fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
            let dx = 1.0 / (self.n + 1) as f64;
            for i in 0..self.n {
                let l = if i > 0 { y[i - 1] } else { 0.0 };
                let r = if i + 1 < self.n { y[i + 1] } else { 0.0 };
                d[i] = (l - 2.0 * y[i] + r) / (dx * dx);
            }
        }
        fn jacobian(&self, _t: f64, _y: &[f64], j: &mut BandMatrix<f64>) {
            let dx = 1.0 / (self.n + 1) as f64;
            for i in 0..self.n {
                j.add(i, i, -2.0 / (dx * dx));
                if i > 0 {
                    j.add(i, i - 1, 1.0 / (dx * dx));
                }
                if i + 1 < self.n {
                    j.add(i, i + 1, 1.0 / (dx * dx));
                }
            }
        }
    }

    #[test]
    fn heat_mode_decays_at_discrete_eigenvalue() {
        let n = 50;
        let sys = Heat { n };
        let dx = 1.0 / (n + 1) as f64;
        let pi = std::f64::consts::PI;
        let y0: Vec<f64> = (1..=n).map(|i| (pi * i as f64 * dx).sin()).collect();
        let mu = -4.0 / (dx * dx) * (pi * dx / 2.0).sin().powi(2);
        let t_end = 0.05;
        let mut y_end = vec![];
        let opts = RadauOptions {
            rtol: 1e-8,
            atol: 1e-10,
            ..Default::default()
        };
        integrate(&sys, 0.0, &y0, &[0.01, t_end], &opts, |i, _, y| {
            if i == 1 {
                y_end = y.to_vec()
            }
        })
        .unwrap();
        for (a, b) in y_end.iter().zip(&y0) {
            let e = (a - b * (mu * t_end).exp()).abs();
            assert!(e < 1e-8, "{e:e}");
        }
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        // y' = y on [0, 1]: outputs at many interior points
        struct Growth;
        impl OdeSystem for Growth {
            fn dim(&self) -> usize {
                1
            }
            fn bandwidths(&self) -> (usize, usize) {
                (0, 0)
            }
            fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
                d[0] = y[0];
            }
            fn jacobian(&self, _t: f64, _y: &[f64], j: &mut BandMatrix<f64>) {
                j.add(0, 0, 1.0);
            }
        }
        let outs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let mut worst: f64 = 0.0;
        let opts = RadauOptions {
            rtol: 1e-8,
            atol: 1e-8,
            dense_output: true,
            ..Default::default()
        };
        integrate(&Growth, 0.0, &[1.0], &outs, &opts, |_, t, y| {
            worst = worst.max((y[0] - t.exp()).abs());
        })
        .unwrap();
        assert!(worst < 1e-6, "{worst}");
    }
}
