use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Population moments; kurtosis is excess (Fisher) kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Mean and population variance. Defined for any nonempty input.
pub fn mean_variance(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::TooShort {
            needed: 1,
            found: 0,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, variance))
}

/// Two-pass estimate of the first four moments with 1/N normalisation.
pub fn moments(values: &[f64]) -> Result<Moments> {
    if values.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            found: values.len(),
        });
    }
    let (mean, variance) = mean_variance(values)?;
    if variance == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let n = values.len() as f64;
    let (m3, m4) = values.iter().fold((0.0, 0.0), |(m3, m4), x| {
        let d = x - mean;
        let d2 = d * d;
        (m3 + d2 * d, m4 + d2 * d2)
    });
    let sd = variance.sqrt();
    Ok(Moments {
        mean,
        variance,
        skewness: m3 / (n * sd * sd * sd),
        kurtosis: m4 / (n * variance * variance) - 3.0,
    })
}
