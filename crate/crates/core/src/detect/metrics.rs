use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Confusion counts with infected as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    /// Counts from `(actually_infected, predicted_infected)` pairs.
    pub fn from_predictions<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let mut m = Metrics::default();
        for (actual, predicted) in pairs {
            m.record(actual, predicted);
        }
        m
    }

    pub fn record(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// TP / (TP + FN); zero when there are no positives.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// FP / (FP + TP); zero when nothing was flagged.
    pub fn fdr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tp)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for Metrics {
    type Output = Metrics;

    fn add(self, o: Metrics) -> Metrics {
        Metrics {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Metrics {
    fn add_assign(&mut self, o: Metrics) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Metrics {
    fn sum<I: Iterator<Item = Metrics>>(iter: I) -> Metrics {
        iter.fold(Metrics::default(), Add::add)
    }
}

/// Expected rates of a classifier that labels runs at random in the test
/// set's class proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlindBaseline {
    pub tpr: f64,
    pub fdr: f64,
}

impl BlindBaseline {
    pub fn new(infected: usize, clean: usize) -> Self {
        let n = infected + clean;
        Self {
            tpr: ratio(infected, n),
            fdr: ratio(clean, n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rates() {
        let m = Metrics {
            tp: 15,
            fp: 3,
            tn: 12,
            fn_: 0,
        };
        assert_eq!(m.tpr(), 1.0);
        assert_relative_eq!(m.fdr(), 3.0 / 18.0);
        assert_eq!(Metrics::default().fdr(), 0.0);
        assert_eq!(Metrics::default().tpr(), 0.0);
    }

    #[test]
    fn blind_baseline_follows_class_bias() {
        let b = BlindBaseline::new(15, 5);
        assert_eq!(b.tpr, 0.75);
        assert_eq!(b.fdr, 0.25);
    }

    #[test]
    fn json_uses_fn_key() {
        let m = Metrics::from_predictions([(true, false), (true, true)]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"tp":1,"fp":0,"tn":0,"fn":1}"#);
    }
}
