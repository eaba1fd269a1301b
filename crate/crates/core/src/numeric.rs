//! Scalar quadrature and bounded maximization.

use crate::error::{Error, Result};

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 48)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(
            "quadrature produced a non-finite value".into(),
        ))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-12 {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical(format!(
            "adaptive quadrature did not converge on [{a}, {b}]"
        )));
    }
    Ok(
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a local maximum of `f` on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Multistart bounded maximization: golden-section on `starts` equal
/// subintervals, keeping the endpoints as candidates too.
pub fn maximize_bounded<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    starts: usize,
    tol: f64,
) -> (f64, f64) {
    let mut best = (lo, f(lo));
    let fh = f(hi);
    if fh > best.1 {
        best = (hi, fh);
    }
    let k = starts.max(1);
    let w = (hi - lo) / k as f64;
    for i in 0..k {
        let a = lo + i as f64 * w;
        let cand = golden_max(&f, a, a + w, tol);
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_exponential() {
        let v = integrate(|x: f64| x.exp(), 0.0, 2.0, 1e-12).unwrap();
        assert!((v - (2f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn multistart_finds_global_maximum() {
        // two bumps, the right one higher
        let f = |x: f64| (-(x - 1.0).powi(2)).exp() + 2.0 * (-(x - 7.0).powi(2)).exp();
        let (x, _) = maximize_bounded(f, 0.0, 10.0, 8, 1e-9);
        assert!((x - 7.0).abs() < 1e-4, "{x}");
    }

    #[test]
    fn corner_maximum_is_returned() {
        let (x, v) = maximize_bounded(|x: f64| -x, 0.0, 5.0, 8, 1e-9);
        assert_eq!(x, 0.0);
        assert_eq!(v, 0.0);
    }
}
