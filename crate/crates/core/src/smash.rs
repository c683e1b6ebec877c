//! Data-smashing distance between symbol streams.
//!
//! Two streams from the same source annihilate: summing one with the
//! inverse of the other yields flat white noise (IID uniform symbols). The
//! distance is how far that sum sits from flat white noise, measured by the
//! largest deviation of a word frequency from uniform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolize::SymbolStream;

/// Annihilation streams shorter than this are not trusted.
pub const MIN_ANNIHILATION_LEN: usize = 100;

/// How a single stream is split into two copies for the self-annihilation
/// check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopiesSplit {
    /// Even positions against odd positions.
    Interleave,
    /// First half against second half.
    Halves,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmashConfig {
    /// Longest word considered by [`deviation`].
    pub word_length_max: usize,
    pub annihilation_epsilon: f64,
    pub copies_split: CopiesSplit,
}

impl Default for SmashConfig {
    fn default() -> Self {
        Self {
            word_length_max: 3,
            annihilation_epsilon: 0.05,
            copies_split: CopiesSplit::Interleave,
        }
    }
}

impl SmashConfig {
    pub fn validate(&self) -> Result<()> {
        if self.word_length_max == 0 {
            return Err(Error::InvalidInput("word_length_max must be at least 1".into()));
        }
        if !(self.annihilation_epsilon > 0.0 && self.annihilation_epsilon < 1.0) {
            return Err(Error::InvalidInput(format!(
                "annihilation_epsilon must lie in (0, 1), got {}",
                self.annihilation_epsilon
            )));
        }
        Ok(())
    }
}

/// Distance, or a note that the streams were too short to trust one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmashOutcome {
    Distance(f64),
    Insufficient,
}

impl SmashOutcome {
    pub fn distance(&self) -> Option<f64> {
        match self {
            SmashOutcome::Distance(d) => Some(*d),
            SmashOutcome::Insufficient => None,
        }
    }
}

/// Keeps the symbols on which both streams agree, position by position.
pub fn stream_sum(a: &SymbolStream, b: &SymbolStream) -> Result<SymbolStream> {
    if a.alphabet_size() != b.alphabet_size() {
        return Err(Error::AlphabetMismatch(a.alphabet_size(), b.alphabet_size()));
    }
    let symbols = a
        .symbols()
        .iter()
        .zip(b.symbols())
        .filter(|(x, y)| x == y)
        .map(|(x, _)| *x)
        .collect();
    Ok(SymbolStream::from_raw(a.alphabet_size(), symbols))
}

/// Anti-stream. The input is decimated into `Σ-1` interleaved copies; each
/// step reads one symbol from every copy and, if they are pairwise
/// distinct, emits the one alphabet symbol none of them showed. For a
/// binary alphabet this is the complement.
pub fn stream_invert(s: &SymbolStream) -> Result<SymbolStream> {
    let sigma = s.alphabet_size();
    let copies = sigma - 1;
    if s.len() < copies {
        return Err(Error::TooShort {
            needed: copies,
            found: s.len(),
        });
    }
    let symbols = s.symbols();
    let steps = symbols.len() / copies;
    let mut out = Vec::with_capacity(steps);
    let mut seen = vec![false; sigma];
    for step in symbols.chunks_exact(copies).take(steps) {
        seen.iter_mut().for_each(|x| *x = false);
        let mut distinct = true;
        for &sym in step {
            if seen[sym as usize] {
                distinct = false;
                break;
            }
            seen[sym as usize] = true;
        }
        if distinct {
            let missing = seen.iter().position(|&x| !x).expect("one symbol unseen");
            out.push(missing as u8);
        }
    }
    Ok(SymbolStream::from_raw(sigma, out))
}

/// Largest gap between a sliding-window word frequency and its flat white
/// noise value `Σ^-|w|`, over all words of length 1 to `max_len`.
pub fn deviation(s: &SymbolStream, max_len: usize) -> Result<f64> {
    if max_len == 0 {
        return Err(Error::InvalidInput("word length must be at least 1".into()));
    }
    if s.len() < max_len {
        return Err(Error::TooShort {
            needed: max_len,
            found: s.len(),
        });
    }
    let sigma = s.alphabet_size();
    let symbols = s.symbols();
    let mut worst: f64 = 0.0;
    for len in 1..=max_len {
        let words = sigma.pow(len as u32);
        let mut counts = vec![0u64; words];
        let modulus = words / sigma;
        let mut code = 0usize;
        for (i, &sym) in symbols.iter().enumerate() {
            code = (code % modulus) * sigma + sym as usize;
            if i + 1 >= len {
                counts[code] += 1;
            }
        }
        let windows = (symbols.len() - len + 1) as f64;
        let uniform = 1.0 / words as f64;
        for c in counts {
            worst = worst.max((c as f64 / windows - uniform).abs());
        }
    }
    Ok(worst)
}

fn split_copies(s: &SymbolStream, split: CopiesSplit) -> (SymbolStream, SymbolStream) {
    let sym = s.symbols();
    let (a, b) = match split {
        CopiesSplit::Halves => {
            let mid = sym.len() / 2;
            (sym[..mid].to_vec(), sym[mid..2 * mid].to_vec())
        }
        CopiesSplit::Interleave => (
            sym.iter().step_by(2).copied().collect(),
            sym.iter().skip(1).step_by(2).copied().collect(),
        ),
    };
    (
        SymbolStream::from_raw(s.alphabet_size(), a),
        SymbolStream::from_raw(s.alphabet_size(), b),
    )
}

/// Self-annihilation: one copy of the stream summed with the inverse of the
/// other must look like flat white noise and be long enough to measure.
pub fn self_check(s: &SymbolStream, cfg: &SmashConfig) -> bool {
    let (a, b) = split_copies(s, cfg.copies_split);
    let Ok(inv) = stream_invert(&b) else {
        return false;
    };
    let Ok(sum) = stream_sum(&a, &inv) else {
        return false;
    };
    if sum.len() < MIN_ANNIHILATION_LEN {
        return false;
    }
    deviation(&sum, cfg.word_length_max).is_ok_and(|e| e <= cfg.annihilation_epsilon)
}

/// Deviation of `a` summed with the inverse of `b`; `None` when the sum is
/// too short.
fn directed(a: &SymbolStream, b: &SymbolStream, cfg: &SmashConfig) -> Result<Option<f64>> {
    let sum = stream_sum(a, &stream_invert(b)?)?;
    if sum.len() < MIN_ANNIHILATION_LEN.max(cfg.word_length_max) {
        return Ok(None);
    }
    deviation(&sum, cfg.word_length_max).map(Some)
}

/// Symmetrised data-smashing distance. Insufficient unless both streams
/// pass [`self_check`] and both directed sums are long enough.
pub fn dsd_distance(a: &SymbolStream, b: &SymbolStream, cfg: &SmashConfig) -> Result<SmashOutcome> {
    if a.alphabet_size() != b.alphabet_size() {
        return Err(Error::AlphabetMismatch(a.alphabet_size(), b.alphabet_size()));
    }
    if a.len() < a.alphabet_size() - 1 || b.len() < b.alphabet_size() - 1 {
        return Ok(SmashOutcome::Insufficient);
    }
    if !self_check(a, cfg) || !self_check(b, cfg) {
        return Ok(SmashOutcome::Insufficient);
    }
    match (directed(a, b, cfg)?, directed(b, a, cfg)?) {
        (Some(ab), Some(ba)) => Ok(SmashOutcome::Distance(0.5 * (ab + ba))),
        _ => Ok(SmashOutcome::Insufficient),
    }
}
