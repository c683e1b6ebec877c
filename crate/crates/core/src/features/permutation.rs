//! Ordinal patterns and the MAP-smoothed permutation model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::UniformProfile;

pub const DEFAULT_ORDER: usize = 6;
const MAX_ORDER: usize = 10;

/// Indices that sort the window ascending. Equal values keep their
/// original order.
pub fn window_permutation(window: &[f64]) -> Vec<u8> {
    let mut idx: Vec<u8> = (0..window.len() as u8).collect();
    idx.sort_by(|&a, &b| window[a as usize].total_cmp(&window[b as usize]));
    idx
}

fn factorial(m: usize) -> usize {
    (1..=m).product()
}

/// Lehmer-code rank of a permutation of `0..m`, in `0..m!`.
pub fn permutation_rank(perm: &[u8]) -> usize {
    let m = perm.len();
    let mut rank = 0;
    for i in 0..m {
        let smaller = perm[i + 1..].iter().filter(|&&p| p < perm[i]).count();
        rank = rank * (m - i) + smaller;
    }
    rank
}

/// Ranks of the ordinal patterns of windows of length `m` taken every `m/2`
/// samples. A trailing partial window is dropped.
pub fn ordinal_patterns(values: &[f64], m: usize) -> impl Iterator<Item = usize> + '_ {
    let stride = (m / 2).max(1);
    let count = if values.len() < m {
        0
    } else {
        (values.len() - m) / stride + 1
    };
    (0..count).map(move |i| permutation_rank(&window_permutation(&values[i * stride..i * stride + m])))
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    m: usize,
    counts: Vec<u64>,
}

/// Distribution over the m! ordinal patterns,
/// `P(γ) = (#γ + 1) / (|O| + m!)`, with its entropy and the standard
/// deviation of the self-information. Counts are indexed by
/// [`permutation_rank`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct PermutationModel {
    m: usize,
    counts: Vec<u64>,
    total: u64,
    probabilities: Vec<f64>,
    entropy: f64,
    info_std: f64,
}

impl TryFrom<ModelRepr> for PermutationModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        Self::from_counts(r.m, r.counts)
    }
}

impl From<PermutationModel> for ModelRepr {
    fn from(m: PermutationModel) -> Self {
        ModelRepr {
            m: m.m,
            counts: m.counts,
        }
    }
}

impl PermutationModel {
    pub fn from_counts(m: usize, counts: Vec<u64>) -> Result<Self> {
        if !(2..=MAX_ORDER).contains(&m) {
            return Err(Error::InvalidInput(format!("pattern order {m} outside 2..={MAX_ORDER}")));
        }
        let size = factorial(m);
        if counts.len() != size {
            return Err(Error::InvalidInput(format!(
                "expected {size} pattern counts, got {}",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        let denom = (total + size as u64) as f64;
        let probabilities: Vec<f64> = counts.iter().map(|&c| (c + 1) as f64 / denom).collect();
        let entropy: f64 = probabilities.iter().map(|&p| -p * p.ln()).sum();
        let variance: f64 = probabilities.iter().map(|&p| p * (-p.ln() - entropy).powi(2)).sum();
        let info_std = variance.sqrt();
        // A uniform model leaves only rounding residue here.
        if info_std <= 1e-12 * entropy.max(1.0) {
            return Err(Error::DegeneratePermutationModel);
        }
        Ok(Self {
            m,
            counts,
            total,
            probabilities,
            entropy,
            info_std,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of observed windows.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, rank: usize) -> f64 {
        self.probabilities[rank]
    }

    /// Self-information `-ln P` of the pattern with this rank, in nats.
    pub fn information(&self, rank: usize) -> f64 {
        -self.probabilities[rank].ln()
    }

    /// Expected information H(P), in nats.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// Standard deviation of the information under P, in nats.
    pub fn info_std(&self) -> f64 {
        self.info_std
    }

    /// Average of `estimator`'s per-pattern term over the given ranks.
    pub fn score<I: IntoIterator<Item = usize>>(&self, ranks: I, estimator: EntropyEstimator) -> Result<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for r in ranks {
            let p = self.probabilities[r];
            sum += match estimator {
                EntropyEstimator::MeanInformation => -p.ln(),
                EntropyEstimator::WeightedInformation => -p.ln() * p,
            };
            n += 1;
        }
        if n == 0 {
            return Err(Error::TooShort {
                needed: self.m,
                found: 0,
            });
        }
        Ok(sum / n as f64)
    }
}

/// Per-run entropy estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyEstimator {
    /// `(1/n) Σ -ln P(γ_i)`, whose expectation is H(P).
    #[default]
    MeanInformation,
    /// `(1/n) Σ -ln P(γ_i) · P(γ_i)`.
    WeightedInformation,
}

/// Counts ordinal patterns across all training profiles.
pub fn learn_permutation_model(training: &[UniformProfile], m: usize) -> Result<PermutationModel> {
    if !m.is_multiple_of(2) || !(2..=MAX_ORDER).contains(&m) {
        return Err(Error::InvalidInput(format!(
            "pattern order must be even and in 2..={MAX_ORDER}, got {m}"
        )));
    }
    let mut counts = vec![0u64; factorial(m)];
    for p in training {
        if p.len() < m {
            return Err(Error::TooShort {
                needed: m,
                found: p.len(),
            });
        }
        for r in ordinal_patterns(p.values(), m) {
            counts[r] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::InvalidInput("no ordinal patterns to learn from".into()));
    }
    PermutationModel::from_counts(m, counts)
}

/// Permutation entropy of a profile under a trained model.
pub fn perm_entropy(profile: &UniformProfile, model: &PermutationModel, estimator: EntropyEstimator) -> Result<f64> {
    model.score(ordinal_patterns(profile.values(), model.m()), estimator)
}
