//! Canonical per-task baseline profile and the L² distance to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolize::{gap_statistic, kmeans, DEFAULT_RESTARTS};
use crate::trace::UniformProfile;

/// Largest cluster count tried by the gap statistic.
pub const GAP_K_MAX: usize = 8;
/// Reference datasets drawn by the gap statistic.
pub const GAP_REFERENCES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub task: String,
    pub centroid: Vec<f64>,
    pub dt: f64,
    /// Clusters found among the training profiles; 1 when they agree.
    pub clusters: usize,
}

impl BaselineProfile {
    pub fn len(&self) -> usize {
        self.centroid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroid.is_empty()
    }
}

/// Clusters equal-length (truncated) training profiles, choosing k by the
/// gap statistic. With one cluster the baseline is the pointwise mean;
/// otherwise the centroid of the largest cluster is used.
pub fn learn_baseline(training: &[UniformProfile], task: &str, seed: u64) -> Result<BaselineProfile> {
    let first = training
        .first()
        .ok_or_else(|| Error::InvalidInput(format!("no training profiles for task `{task}`")))?;
    let dt = first.dt();
    if let Some(p) = training.iter().find(|p| (p.dt() - dt).abs() > 1e-12) {
        return Err(Error::DtMismatch(dt, p.dt()));
    }
    let len = training.iter().map(UniformProfile::len).min().unwrap_or(0);
    let points: Vec<Vec<f64>> = training.iter().map(|p| p.values()[..len].to_vec()).collect();

    let k = if points.len() < 2 {
        1
    } else {
        gap_statistic(&points, GAP_K_MAX.min(points.len()), GAP_REFERENCES, seed)?.k
    };
    let clustering = kmeans(&points, k, seed, DEFAULT_RESTARTS)?;
    let centroid = if k == 1 {
        clustering.centroids.into_iter().next().unwrap()
    } else {
        let sizes = clustering.cluster_sizes();
        let largest = (0..k).fold(0, |best, j| if sizes[j] > sizes[best] { j } else { best });
        log::warn!(
            "task `{task}`: training profiles form {k} clusters (sizes {sizes:?}); using the largest as baseline"
        );
        clustering.centroids[largest].clone()
    };
    Ok(BaselineProfile {
        task: task.to_string(),
        centroid,
        dt,
        clusters: k,
    })
}

/// `sqrt(dt · Σ (p_i - b_i)²)` over the common prefix.
pub fn l2_distance(profile: &UniformProfile, base: &BaselineProfile) -> Result<f64> {
    if (profile.dt() - base.dt).abs() > 1e-12 {
        return Err(Error::DtMismatch(base.dt, profile.dt()));
    }
    let ss: f64 = profile
        .values()
        .iter()
        .zip(&base.centroid)
        .map(|(p, b)| (p - b) * (p - b))
        .sum();
    Ok((profile.dt() * ss).sqrt())
}
