//! Lloyd's k-means with distance-weighted seeding, and the gap statistic
//! for choosing k.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum over clusters of squared distances to the cluster centroid.
    pub within_dispersion: f64,
}

impl Clustering {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points
        .first()
        .map(Vec::len)
        .ok_or(Error::TooFewPoints { k: 1, points: 0 })?;
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput("points have differing dimensions".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    Ok(dim)
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, dim: usize) -> Clustering {
    let k = centroids.len();
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (j, _) = nearest(p, &centroids);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // An emptied cluster takes over the point worst served by its centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let (far, _) = points
                    .iter()
                    .zip(&assignments)
                    .enumerate()
                    .map(|(i, (p, &a))| (i, sq_dist(p, &centroids[a])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                counts[assignments[far]] -= 1;
                counts[j] = 1;
                centroids[j] = points[far].clone();
                assignments[far] = j;
            }
        }
    }
    let within_dispersion = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Clustering {
        k,
        centroids,
        assignments,
        within_dispersion,
    }
}

/// Clusters `points` into `k` groups, keeping the lowest-dispersion result of
/// `restarts` seeded initialisations.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    let dim = check_points(points)?;
    if k == 0 || k > points.len() {
        return Err(Error::TooFewPoints {
            k,
            points: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..restarts.max(1) {
        let init = seed_centroids(points, k, &mut rng);
        let result = lloyd(points, init, dim);
        if best
            .as_ref()
            .is_none_or(|b| result.within_dispersion < b.within_dispersion)
        {
            best = Some(result);
        }
        if k == 1 {
            break;
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Gap values computed on the way to choosing k. Index `i` holds k = i + 1;
/// evaluation stops as soon as the selection rule is met.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStatistic {
    pub k: usize,
    pub gap: Vec<f64>,
    pub s: Vec<f64>,
}

/// Chooses the number of clusters by comparing log dispersion against
/// `references` uniform draws from the data's bounding box: the smallest k
/// with `Gap(k) >= Gap(k+1) - s(k+1)`, or `k_max` when no k qualifies.
///
/// k is capped at one less than the number of points, where dispersion
/// vanishes for data and references alike.
pub fn gap_statistic(
    points: &[Vec<f64>],
    k_max: usize,
    references: usize,
    seed: u64,
) -> Result<GapStatistic> {
    let dim = check_points(points)?;
    if k_max == 0 || points.len() < k_max {
        return Err(Error::TooFewPoints {
            k: k_max,
            points: points.len(),
        });
    }
    if references < 2 {
        return Err(Error::InvalidInput("gap statistic needs at least two references".into()));
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for (d, &v) in p.iter().enumerate() {
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
        }
    }
    if lo == hi {
        return Ok(GapStatistic {
            k: 1,
            gap: Vec::new(),
            s: Vec::new(),
        });
    }

    let k_cap = k_max.min(points.len() - 1).max(1);
    let reference_set = |b: usize| -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(b as u64 + 1)));
        (0..points.len())
            .map(|_| {
                lo.iter()
                    .zip(&hi)
                    .map(|(&l, &h)| l + (h - l) * rng.random::<f64>())
                    .collect()
            })
            .collect()
    };
    let gap_at = |k: usize| -> Result<(f64, f64)> {
        let data = kmeans(points, k, seed.wrapping_add(k as u64), DEFAULT_RESTARTS)?;
        let log_refs = (0..references)
            .map(|b| {
                let r = kmeans(&reference_set(b), k, seed.wrapping_add(1000 * (b as u64 + 1) + k as u64), DEFAULT_RESTARTS)?;
                Ok(r.within_dispersion.ln())
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = log_refs.iter().sum::<f64>() / references as f64;
        let var = log_refs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / references as f64;
        let s = var.sqrt() * (1.0 + 1.0 / references as f64).sqrt();
        Ok((mean - data.within_dispersion.ln(), s))
    };

    let mut gap = Vec::with_capacity(k_cap);
    let mut s = Vec::with_capacity(k_cap);
    let (g, sd) = gap_at(1)?;
    gap.push(g);
    s.push(sd);
    for k in 1..k_cap {
        let (g, sd) = gap_at(k + 1)?;
        gap.push(g);
        s.push(sd);
        if gap[k - 1] >= gap[k] - s[k] {
            return Ok(GapStatistic { k, gap, s });
        }
    }
    Ok(GapStatistic { k: k_cap, gap, s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let c = kmeans(&pts(&[0.0, 2.0]), 1, 1, 10).unwrap();
        assert_eq!(c.centroids, vec![vec![1.0]]);
        assert_relative_eq!(c.within_dispersion, 2.0);
    }

    #[test]
    fn separable_pairs() {
        let c = kmeans(&pts(&[0.0, 0.1, 10.0, 10.1]), 2, 3, 10).unwrap();
        let mut cents: Vec<f64> = c.centroids.iter().map(|c| c[0]).collect();
        cents.sort_by(f64::total_cmp);
        assert_relative_eq!(cents[0], 0.05, epsilon = 1e-12);
        assert_relative_eq!(cents[1], 10.05, epsilon = 1e-12);
        assert_eq!(c.cluster_sizes(), vec![2, 2]);
    }

    #[test]
    fn one_cluster_per_point() {
        let c = kmeans(&pts(&[3.0, -1.0, 8.0, 4.5]), 4, 0, 10).unwrap();
        assert_eq!(c.within_dispersion, 0.0);
    }

    #[test]
    fn too_many_clusters() {
        assert!(matches!(
            kmeans(&pts(&[1.0, 2.0]), 3, 0, 10),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(kmeans(&[], 1, 0, 10).is_err());
    }

    #[test]
    fn duplicate_points_do_not_leave_empty_clusters() {
        let c = kmeans(&pts(&[1.0, 1.0, 1.0, 5.0]), 3, 0, 10).unwrap();
        assert!(c.cluster_sizes().iter().all(|&s| s > 0));
        assert_eq!(c.within_dispersion, 0.0);
    }

    #[test]
    fn dispersion_does_not_increase_with_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for trial in 0..20 {
            let data: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..3).map(|_| normal.sample(&mut rng)).collect())
                .collect();
            let w: Vec<f64> = (1..=6)
                .map(|k| kmeans(&data, k, trial, DEFAULT_RESTARTS).unwrap().within_dispersion)
                .collect();
            for pair in w.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9, "trial {trial}: {w:?}");
            }
        }
    }

    #[test]
    fn identical_points_give_one_cluster() {
        let data = vec![vec![2.0, 3.0]; 12];
        assert_eq!(gap_statistic(&data, 8, 20, 5).unwrap().k, 1);
    }

    #[test]
    fn gap_statistic_rejects_small_samples() {
        assert!(gap_statistic(&pts(&[1.0, 2.0, 3.0]), 8, 20, 0).is_err());
    }
}
