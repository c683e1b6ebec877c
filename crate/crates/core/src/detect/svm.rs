//! Soft-margin kernel SVM trained by sequential minimal optimisation.
//!
//! The dual is solved with maximal-violating-pair working-set selection.
//! With `F_t = -y_t G_t` (G the dual gradient) the solver stops once
//! `max_{I_up} F - min_{I_low} F < tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Poly { degree: u32, coef0: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Poly { degree, coef0 } => (dot(a, b) + coef0).powi(degree as i32),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Kernel::Linear => "linear".into(),
            Kernel::Rbf { gamma } => format!("rbf(gamma={gamma})"),
            Kernel::Poly { degree, coef0 } => format!("poly(degree={degree},coef0={coef0})"),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::InvalidInput(format!("rbf gamma must be positive, got {gamma}")))
            }
            Kernel::Poly { degree: 0, .. } => Err(Error::InvalidInput("poly degree must be at least 1".into())),
            Kernel::Poly { coef0, .. } if !coef0.is_finite() => {
                Err(Error::InvalidInput("poly coef0 must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Linear, three RBF widths, and quadratic and cubic polynomials.
pub fn standard_kernels() -> Vec<Kernel> {
    vec![
        Kernel::Linear,
        Kernel::Rbf { gamma: 0.1 },
        Kernel::Rbf { gamma: 0.01 },
        Kernel::Rbf { gamma: 0.001 },
        Kernel::Poly { degree: 2, coef0: 1.0 },
        Kernel::Poly { degree: 3, coef0: 1.0 },
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-column standardisation; zero-spread columns keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for row in x {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut std {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

/// Solves `min ½ αᵀQα − Σα` with `Q_ij = y_i y_j K_ij`, `0 ≤ α ≤ c`,
/// `Σ α_i y_i = 0`.
pub fn solve_dual(kmat: &[Vec<f64>], y: &[i8], c: f64, tol: f64) -> DualSolution {
    let n = y.len();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n * n).max(100_000);
    let mut iterations = 0;

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y < 0.0 && a < c) || (y > 0.0 && a > 0.0);

    let (m, big_m) = loop {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let f = -yf[t] * grad[t];
            if in_up(alpha[t], yf[t]) && f > m {
                m = f;
                i = t;
            }
            if in_low(alpha[t], yf[t]) && f < big_m {
                big_m = f;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || m - big_m < tol {
            break (m, big_m);
        }
        if iterations >= max_iter {
            log::warn!("SMO stopped after {iterations} iterations with gap {}", m - big_m);
            break (m, big_m);
        }
        iterations += 1;

        let eta = (kmat[i][i] + kmat[j][j] - 2.0 * kmat[i][j]).max(TAU);
        let mut lambda = (m - big_m) / eta;
        // α_i moves by y_i λ and α_j by −y_j λ; both stay in the box.
        let room_i = if yf[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let room_j = if yf[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        lambda = lambda.min(room_i).min(room_j);

        alpha[i] = (alpha[i] + yf[i] * lambda).clamp(0.0, c);
        alpha[j] = (alpha[j] - yf[j] * lambda).clamp(0.0, c);
        for t in 0..n {
            grad[t] += yf[t] * lambda * (kmat[t][i] - kmat[t][j]);
        }
    };

    let free: Vec<f64> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| -yf[t] * grad[t])
        .collect();
    let bias = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else {
        match (m.is_finite(), big_m.is_finite()) {
            (true, true) => (m + big_m) / 2.0,
            (true, false) => m,
            (false, true) => big_m,
            (false, false) => 0.0,
        }
    };
    DualSolution { alpha, bias, iterations }
}

/// Largest breach of the box-constrained optimality conditions, measured
/// on the margins `y_i f(x_i)`.
pub fn kkt_violation(kmat: &[Vec<f64>], y: &[i8], sol: &DualSolution, c: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for t in 0..n {
        let f: f64 = (0..n).map(|s| sol.alpha[s] * f64::from(y[s]) * kmat[s][t]).sum::<f64>() + sol.bias;
        let margin = f64::from(y[t]) * f;
        let a = sol.alpha[t];
        let breach = if a <= 0.0 {
            1.0 - margin
        } else if a >= c {
            margin - 1.0
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(breach);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    /// Standardised support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i y_i` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub scaler: Scaler,
}

impl SvmModel {
    pub fn dimension(&self) -> usize {
        self.scaler.mean.len()
    }

    /// Decision value for a raw (unscaled) input.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                found: x.len(),
            });
        }
        let z = self.scaler.transform(x);
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, coef)| coef * self.kernel.eval(sv, &z))
            .sum::<f64>()
            + self.bias)
    }
}

fn validate_training(x: &[Vec<f64>], y: &[i8], c: f64, tol: f64) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::InvalidInput("feature vectors are empty".into()));
    }
    for row in x {
        if row.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::InvalidInput("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::SingleClass);
    }
    if !(c > 0.0 && c.is_finite()) || !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("need c > 0 and tol > 0, got c={c}, tol={tol}")));
    }
    Ok(())
}

/// Standardises `x`, solves the dual and keeps the support vectors.
pub fn smo_train(x: &[Vec<f64>], y: &[i8], kernel: Kernel, c: f64, tol: f64) -> Result<SvmModel> {
    validate_training(x, y, c, tol)?;
    kernel.validate()?;
    let scaler = Scaler::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|row| scaler.transform(row)).collect();
    let kmat: Vec<Vec<f64>> = z.iter().map(|a| z.iter().map(|b| kernel.eval(a, b)).collect()).collect();
    let sol = solve_dual(&kmat, y, c, tol);

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(z[t].clone());
            coefficients.push(a * f64::from(y[t]));
        }
    }
    Ok(SvmModel {
        kernel,
        c,
        support_vectors,
        coefficients,
        bias: sol.bias,
        scaler,
    })
}

/// `+1` or `-1`; a zero decision value maps to `+1`.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<i8> {
    Ok(if model.decision(x)? >= 0.0 { 1 } else { -1 })
}
