//! Symbolic encodings of power profiles: a binary high/low alphabet split at
//! the pooled median of two profiles, and a learned codebook of short shapes.

mod cluster;
mod shapes;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::trace::UniformProfile;

pub use cluster::{gap_statistic, kmeans, Clustering, GapStatistic, DEFAULT_RESTARTS};
pub use shapes::{learn_shapes, shape_encode, window_count, ShapeBook};

/// Streams where one symbol occupies more than this fraction are degenerate.
pub const DEGENERATE_OCCUPANCY: f64 = 0.9;

const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

/// A finite sequence over the alphabet `0..alphabet_size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolStream {
    alphabet_size: usize,
    symbols: Vec<u8>,
}

impl SymbolStream {
    pub fn new(alphabet_size: usize, symbols: Vec<u8>) -> Result<Self> {
        if !(2..=DIGITS.len()).contains(&alphabet_size) {
            return Err(Error::InvalidInput(format!(
                "alphabet size {alphabet_size} outside 2..={}",
                DIGITS.len()
            )));
        }
        if let Some(s) = symbols.iter().find(|&&s| s as usize >= alphabet_size) {
            return Err(Error::InvalidInput(format!(
                "symbol {s} outside alphabet of size {alphabet_size}"
            )));
        }
        Ok(Self {
            alphabet_size,
            symbols,
        })
    }

    /// Builds a stream without validation; callers guarantee the invariant.
    pub(crate) fn from_raw(alphabet_size: usize, symbols: Vec<u8>) -> Self {
        debug_assert!(symbols.iter().all(|&s| (s as usize) < alphabet_size));
        Self {
            alphabet_size,
            symbols,
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Fraction of the stream taken by its most frequent symbol.
    pub fn dominant_fraction(&self) -> f64 {
        if self.symbols.is_empty() {
            return 1.0;
        }
        let mut counts = vec![0usize; self.alphabet_size];
        for &s in &self.symbols {
            counts[s as usize] += 1;
        }
        *counts.iter().max().unwrap() as f64 / self.symbols.len() as f64
    }

    /// True when one symbol dominates so strongly that data smashing will
    /// almost certainly reject the stream.
    pub fn is_degenerate(&self) -> bool {
        self.dominant_fraction() > DEGENERATE_OCCUPANCY
    }

    /// Appends another stream over the same alphabet.
    pub fn concat(&self, other: &SymbolStream) -> Result<SymbolStream> {
        if self.alphabet_size != other.alphabet_size {
            return Err(Error::AlphabetMismatch(self.alphabet_size, other.alphabet_size));
        }
        let mut symbols = self.symbols.clone();
        symbols.extend_from_slice(&other.symbols);
        Ok(Self::from_raw(self.alphabet_size, symbols))
    }
}

impl fmt::Display for SymbolStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text: String = self.symbols.iter().map(|&s| DIGITS[s as usize] as char).collect();
        f.write_str(&text)
    }
}

impl SymbolStream {
    /// Parses the compact digit form, e.g. `"0110"`.
    pub fn parse(alphabet_size: usize, text: &str) -> Result<Self> {
        let symbols = text
            .bytes()
            .map(|b| {
                DIGITS
                    .iter()
                    .position(|&d| d == b.to_ascii_lowercase())
                    .map(|p| p as u8)
                    .ok_or_else(|| Error::InvalidInput(format!("bad symbol `{}`", b as char)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet_size, symbols)
    }
}

impl FromStr for SymbolStream {
    type Err = Error;

    /// Parses a binary stream.
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(2, s)
    }
}

#[derive(Serialize, Deserialize)]
struct StreamRepr {
    alphabet_size: usize,
    symbols: String,
}

impl Serialize for SymbolStream {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        StreamRepr {
            alphabet_size: self.alphabet_size,
            symbols: self.to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymbolStream {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = StreamRepr::deserialize(deserializer)?;
        SymbolStream::parse(repr.alphabet_size, &repr.symbols).map_err(serde::de::Error::custom)
    }
}

/// Median of the union of both profiles' readings (mean of the two central
/// order statistics for an even count).
pub fn pooled_threshold(a: &UniformProfile, b: &UniformProfile) -> f64 {
    let mut pooled: Vec<f64> = a.values().iter().chain(b.values()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len();
    if n % 2 == 1 {
        pooled[n / 2]
    } else {
        0.5 * (pooled[n / 2 - 1] + pooled[n / 2])
    }
}

/// Maps readings strictly above `threshold` to 1 and everything else to 0.
pub fn binarize(profile: &UniformProfile, threshold: f64) -> SymbolStream {
    let symbols = profile
        .values()
        .iter()
        .map(|&v| u8::from(v > threshold))
        .collect();
    let stream = SymbolStream::from_raw(2, symbols);
    if stream.is_degenerate() {
        log::warn!(
            "binary stream is degenerate ({:.1}% one symbol)",
            100.0 * stream.dominant_fraction()
        );
    }
    stream
}

/// The stream concatenated with itself `times` times.
pub fn concat_repeat(stream: &SymbolStream, times: usize) -> Result<SymbolStream> {
    if times == 0 {
        return Err(Error::InvalidInput("repeat count must be at least 1".into()));
    }
    Ok(SymbolStream::from_raw(
        stream.alphabet_size,
        stream.symbols.repeat(times),
    ))
}
