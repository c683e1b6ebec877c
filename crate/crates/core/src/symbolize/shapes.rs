//! Shape codebook: k-means centroids of short overlapping windows.

use serde::{Deserialize, Serialize};

use super::cluster::{kmeans, nearest, DEFAULT_RESTARTS};
use super::SymbolStream;
use crate::error::{Error, Result};
use crate::trace::UniformProfile;

pub const DEFAULT_WINDOW_SECONDS: f64 = 3.0;
pub const DEFAULT_OVERLAP_SECONDS: f64 = 1.5;

/// Canonical window shapes, ordered by descending mean power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeBook {
    pub window_seconds: f64,
    /// Spacing between consecutive window starts.
    pub overlap_seconds: f64,
    pub dt: f64,
    pub centroids: Vec<Vec<f64>>,
}

impl ShapeBook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn window_len(&self) -> usize {
        (self.window_seconds / self.dt).round() as usize
    }

    pub fn stride(&self) -> usize {
        (self.overlap_seconds / self.dt).round() as usize
    }
}

/// Number of complete windows of `window` samples at `stride` in `len`
/// samples; trailing partial windows are dropped.
pub fn window_count(len: usize, window: usize, stride: usize) -> usize {
    if len < window || stride == 0 {
        0
    } else {
        (len - window) / stride + 1
    }
}

fn windows(values: &[f64], window: usize, stride: usize) -> impl Iterator<Item = &[f64]> {
    (0..window_count(values.len(), window, stride)).map(move |i| &values[i * stride..i * stride + window])
}

/// Pools every 3 s window (1.5 s apart) from the training profiles and
/// clusters them into `k` shapes.
pub fn learn_shapes(training: &[UniformProfile], k: usize, seed: u64) -> Result<ShapeBook> {
    let dt = training
        .first()
        .map(UniformProfile::dt)
        .ok_or_else(|| Error::InvalidInput("no training profiles for shapes".into()))?;
    if k < 2 {
        return Err(Error::InvalidInput("a shape book needs at least two shapes".into()));
    }
    let mut book = ShapeBook {
        window_seconds: DEFAULT_WINDOW_SECONDS,
        overlap_seconds: DEFAULT_OVERLAP_SECONDS,
        dt,
        centroids: Vec::new(),
    };
    let (w, stride) = (book.window_len(), book.stride());
    let mut points = Vec::new();
    for p in training {
        if (p.dt() - dt).abs() > 1e-12 {
            return Err(Error::DtMismatch(dt, p.dt()));
        }
        if p.len() < w {
            return Err(Error::TooShort {
                needed: w,
                found: p.len(),
            });
        }
        points.extend(windows(p.values(), w, stride).map(<[f64]>::to_vec));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            k,
            points: points.len(),
        });
    }
    let clustering = kmeans(&points, k, seed, DEFAULT_RESTARTS)?;
    let mut centroids = clustering.centroids;
    let mean = |c: &Vec<f64>| c.iter().sum::<f64>() / c.len() as f64;
    centroids.sort_by(|a, b| mean(b).total_cmp(&mean(a)));
    book.centroids = centroids;
    Ok(book)
}

/// One symbol per window: the index of the nearest shape, ties to the lowest.
pub fn shape_encode(profile: &UniformProfile, book: &ShapeBook) -> Result<SymbolStream> {
    if (profile.dt() - book.dt).abs() > 1e-12 {
        return Err(Error::DtMismatch(book.dt, profile.dt()));
    }
    let (w, stride) = (book.window_len(), book.stride());
    if profile.len() < w {
        return Err(Error::TooShort {
            needed: w,
            found: profile.len(),
        });
    }
    let symbols = windows(profile.values(), w, stride)
        .map(|win| nearest(win, &book.centroids).0 as u8)
        .collect();
    Ok(SymbolStream::from_raw(book.k(), symbols))
}
