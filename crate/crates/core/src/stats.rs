//! Sample moments with standard errors, merged in a fixed order so results do
//! not depend on thread scheduling.

use serde::{Deserialize, Serialize};

/// Mean and variance of a sample together with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_se: f64,
    /// Delta-method standard error of the sample variance.
    pub variance_se: f64,
}

impl SampleMoments {
    pub fn from_slice(x: &[f64]) -> Self {
        let n = x.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                variance: f64::NAN,
                mean_se: f64::NAN,
                variance_se: f64::NAN,
            };
        }
        let nf = n as f64;
        let mean = x.iter().sum::<f64>() / nf;
        let (mut m2, mut m4) = (0.0, 0.0);
        for v in x {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m4 += d2 * d2;
        }
        let variance = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
        let pop2 = m2 / nf;
        let pop4 = m4 / nf;
        Self {
            n,
            mean,
            variance,
            mean_se: (variance / nf).sqrt(),
            variance_se: ((pop4 - pop2 * pop2).max(0.0) / nf).sqrt(),
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Standard error of the sample standard deviation.
    pub fn std_dev_se(&self) -> f64 {
        let sd = self.std_dev();
        if sd > 0.0 {
            self.variance_se / (2.0 * sd)
        } else {
            0.0
        }
    }
}
