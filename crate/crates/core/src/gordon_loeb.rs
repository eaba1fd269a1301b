//! Security-breach probability functions and the static investment optimum.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BreachFamily {
    /// `S(z, v) = v / (a z + 1)^b`
    #[serde(rename = "class_i")]
    ClassI,
    /// `S(z, v) = v^(a z + 1)`
    #[serde(rename = "class_ii")]
    ClassII,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreachModel {
    pub family: BreachFamily,
    pub v: f64,
    pub a: f64,
    pub b: f64,
}

impl BreachModel {
    pub fn new(family: BreachFamily, v: f64, a: f64, b: f64) -> Result<Self> {
        let m = Self { family, v, a, b };
        m.validate()?;
        Ok(m)
    }

    /// Class I with v = 0.65, a = 0.1, b = 1.
    pub fn standard() -> Self {
        Self {
            family: BreachFamily::ClassI,
            v: 0.65,
            a: 0.1,
            b: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.v) {
            return Err(invalid("v", format!("must lie in [0, 1], got {}", self.v)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(invalid("a", format!("must be positive, got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(invalid("b", format!("must be positive, got {}", self.b)));
        }
        Ok(())
    }

    /// Breach probability at level `z`, without argument checks.
    #[inline]
    pub fn prob(&self, z: f64) -> f64 {
        match self.family {
            BreachFamily::ClassI => self.v / (self.a * z + 1.0).powf(self.b),
            BreachFamily::ClassII => {
                if self.v == 0.0 {
                    0.0
                } else {
                    self.v.powf(self.a * z + 1.0)
                }
            }
        }
    }

    /// `∂S/∂z`.
    #[inline]
    pub fn prob_dz(&self, z: f64) -> f64 {
        match self.family {
            BreachFamily::ClassI => {
                -self.v * self.a * self.b * (self.a * z + 1.0).powf(-self.b - 1.0)
            }
            BreachFamily::ClassII => {
                if self.v == 0.0 {
                    0.0
                } else {
                    self.prob(z) * self.a * self.v.ln()
                }
            }
        }
    }

    /// `∂²S/∂z²`.
    pub fn prob_dzz(&self, z: f64) -> f64 {
        match self.family {
            BreachFamily::ClassI => {
                self.v
                    * self.a
                    * self.a
                    * self.b
                    * (self.b + 1.0)
                    * (self.a * z + 1.0).powf(-self.b - 2.0)
            }
            BreachFamily::ClassII => {
                if self.v == 0.0 {
                    0.0
                } else {
                    self.prob(z) * (self.a * self.v.ln()).powi(2)
                }
            }
        }
    }
}

fn check_level(z: f64) -> Result<()> {
    if z >= 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "investment level must be finite and nonnegative, got {z}"
        )))
    }
}

pub fn breach_prob(model: &BreachModel, z: f64) -> Result<f64> {
    check_level(z)?;
    Ok(model.prob(z))
}

pub fn breach_prob_derivative(model: &BreachModel, z: f64) -> Result<f64> {
    check_level(z)?;
    Ok(model.prob_dz(z))
}

fn check_enbis_args(p: f64, loss: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Argument(format!(
            "attack probability must lie in [0, 1], got {p}"
        )));
    }
    if !(loss >= 0.0 && loss.is_finite()) {
        return Err(Error::Argument(format!(
            "loss must be finite and nonnegative, got {loss}"
        )));
    }
    Ok(())
}

/// Expected net benefit `(v − S(z, v))·p·loss − z`.
pub fn enbis(model: &BreachModel, p: f64, loss: f64, z: f64) -> Result<f64> {
    check_enbis_args(p, loss)?;
    check_level(z)?;
    Ok((model.v - model.prob(z)) * p * loss - z)
}

/// Maximizer of [`enbis`] over `z ≥ 0`.
///
/// The marginal benefit `−S_z(z)·p·loss` is decreasing, so the optimum is
/// either the corner `z = 0` or the unique root of `−S_z·p·loss = 1`, which
/// always lies below `v·p·loss/e`.
pub fn static_optimum(model: &BreachModel, p: f64, loss: f64) -> Result<f64> {
    model.validate()?;
    check_enbis_args(p, loss)?;
    let pl = p * loss;
    let foc = |z: f64| -model.prob_dz(z) * pl - 1.0;
    if foc(0.0) <= 0.0 {
        return Ok(0.0);
    }
    if model.family == BreachFamily::ClassI && model.b == 1.0 {
        return Ok(((model.v * model.a * pl).sqrt() - 1.0) / model.a);
    }
    let (mut lo, mut hi) = (0.0, model.v * pl / std::f64::consts::E);
    if foc(hi) > 0.0 {
        return Err(Error::Numerical(
            "first-order condition not bracketed by v·p·loss/e".into(),
        ));
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = foc(z);
        if g == 0.0 {
            return Ok(z);
        }
        if g > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let dg = -model.prob_dzz(z) * pl;
        let newton = z - g / dg;
        let next = if dg < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - z).abs() <= 1e-10 * z.max(1.0) || hi - lo <= 1e-14 * hi.max(1.0) {
            return Ok(next);
        }
        z = next;
    }
    Err(Error::Numerical(
        "static optimum iteration did not converge".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::golden_max;
    use proptest::prelude::*;

    #[test]
    fn standard_values() {
        let m = BreachModel::standard();
        assert_eq!(breach_prob(&m, 0.0).unwrap(), 0.65);
        assert!((breach_prob(&m, 10.0).unwrap() - 0.325).abs() < 1e-15);
        assert!((breach_prob_derivative(&m, 0.0).unwrap() + 0.065).abs() < 1e-15);
        assert!(breach_prob(&m, -1.0).is_err());
    }

    #[test]
    fn vulnerability_zero_means_no_breach() {
        for fam in [BreachFamily::ClassI, BreachFamily::ClassII] {
            let m = BreachModel::new(fam, 0.0, 0.3, 2.0).unwrap();
            for z in [0.0, 1.0, 50.0] {
                assert_eq!(breach_prob(&m, z).unwrap(), 0.0);
                assert_eq!(breach_prob_derivative(&m, z).unwrap(), 0.0);
                assert_eq!(enbis(&m, 0.7, 100.0, z).unwrap(), -z);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for fam in [BreachFamily::ClassI, BreachFamily::ClassII] {
            let m = BreachModel::new(fam, 0.65, 0.1, 1.7).unwrap();
            let h = 1e-5;
            let fd = (m.prob(5.0 + h) - m.prob(5.0 - h)) / (2.0 * h);
            assert!((m.prob_dz(5.0) - fd).abs() < 1e-6);
            let fd2 = (m.prob_dz(5.0 + h) - m.prob_dz(5.0 - h)) / (2.0 * h);
            assert!((m.prob_dzz(5.0) - fd2).abs() < 1e-6);
        }
    }

    #[test]
    fn standard_static_optimum() {
        let m = BreachModel::standard();
        let z = static_optimum(&m, 1.0, 400.0).unwrap();
        assert!((z - (26f64.sqrt() - 1.0) / 0.1).abs() < 1e-12);
        assert!((z - 40.99).abs() < 5e-3);
        let (zg, _) = golden_max(&|x| enbis(&m, 1.0, 400.0, x).unwrap(), 0.0, 400.0, 1e-9);
        assert!((z - zg).abs() < 1e-6);
        assert!(enbis(&m, 1.0, 400.0, z).unwrap() > 0.0);
        assert!(z < 0.65 * 400.0 / std::f64::consts::E);
    }

    #[test]
    fn corner_solution() {
        let m = BreachModel::standard();
        // marginal benefit at zero is 0.065·p·loss
        assert_eq!(static_optimum(&m, 1.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn general_class_i_uses_newton() {
        let m = BreachModel::new(BreachFamily::ClassI, 0.5, 0.2, 2.5).unwrap();
        let z = static_optimum(&m, 0.8, 300.0).unwrap();
        assert!((-m.prob_dz(z) * 240.0 - 1.0).abs() < 1e-10);
    }

    fn any_model() -> impl Strategy<Value = BreachModel> {
        (any::<bool>(), 0.05f64..0.99, 0.01f64..2.0, 0.2f64..4.0).prop_map(|(c1, v, a, b)| {
            BreachModel {
                family: if c1 {
                    BreachFamily::ClassI
                } else {
                    BreachFamily::ClassII
                },
                v,
                a,
                b,
            }
        })
    }

    proptest! {
        #[test]
        fn optimum_is_global_and_below_bound(m in any_model(), p in 0.05f64..1.0, loss in 1.0f64..2000.0) {
            let z = static_optimum(&m, p, loss).unwrap();
            let best = enbis(&m, p, loss, z).unwrap();
            prop_assert!(z < m.v * p * loss / std::f64::consts::E);
            let top = m.v * p * loss;
            for i in 0..=400 {
                let zz = top * i as f64 / 400.0;
                prop_assert!(enbis(&m, p, loss, zz).unwrap() <= best + 1e-9 * top.max(1.0));
            }
            if z > 0.0 {
                prop_assert!((-m.prob_dz(z) * p * loss - 1.0).abs() < 1e-8);
            }
        }

        #[test]
        fn breach_prob_decreasing_and_convex(m in any_model(), z1 in 0.0f64..50.0, d1 in 0.01f64..10.0, d2 in 0.01f64..10.0) {
            let (a, b, c) = (m.prob(z1), m.prob(z1 + d1), m.prob(z1 + d1 + d2));
            prop_assert!(a > b && b > c);
            let slope1 = (b - a) / d1;
            let slope2 = (c - b) / d2;
            prop_assert!(slope2 > slope1);
        }
    }
}
