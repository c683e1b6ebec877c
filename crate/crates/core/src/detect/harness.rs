//! Hold-one-family-out evaluation with micro-averaged metrics.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{FeatureKey, LabeledVector};
use super::metrics::Metrics;
use super::svm::{smo_train, svm_predict, Kernel};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::trace::Label;

/// Indices into the dataset for one held-out family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub family: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per family. Clean runs are dealt to folds round-robin in
/// dataset order; each fold tests its family's runs plus its clean share
/// and trains on everything else.
pub fn holdout_folds(labels: &[Label]) -> Result<Vec<Fold>> {
    let families: BTreeSet<&str> = labels.iter().filter_map(Label::family).collect();
    if families.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "hold-out needs at least 2 infected families, found {}",
            families.len()
        )));
    }
    let families: Vec<&str> = families.into_iter().collect();
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); families.len()];
    let mut clean_seen = 0;
    for (i, label) in labels.iter().enumerate() {
        let fold = match label.family() {
            Some(f) => families.binary_search(&f).expect("family collected above"),
            None => {
                clean_seen += 1;
                (clean_seen - 1) % families.len()
            }
        };
        tests[fold].push(i);
    }
    if clean_seen < families.len() {
        log::warn!("{clean_seen} clean runs across {} folds; some folds test no clean run", families.len());
    }
    Ok(families
        .iter()
        .zip(tests)
        .map(|(family, test)| {
            let held: BTreeSet<usize> = test.iter().copied().collect();
            Fold {
                family: family.to_string(),
                train: (0..labels.len()).filter(|i| !held.contains(i)).collect(),
                test,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub per_fold: Vec<Metrics>,
    /// `(dataset index, predicted infected)` over every fold's test set.
    pub predictions: Vec<(usize, bool)>,
    /// Sum of the per-fold counts.
    pub micro: Metrics,
}

/// Runs `predict` on each fold; it returns one infected/clean prediction
/// per index of `fold.test`.
pub fn cross_validate<P>(labels: &[Label], folds: &[Fold], mut predict: P) -> Result<CrossValidation>
where
    P: FnMut(&Fold) -> Result<Vec<bool>>,
{
    let mut per_fold = Vec::with_capacity(folds.len());
    let mut predictions = Vec::new();
    for fold in folds {
        let predicted = predict(fold)?;
        if predicted.len() != fold.test.len() {
            return Err(Error::Dimension {
                expected: fold.test.len(),
                found: predicted.len(),
            });
        }
        let m = Metrics::from_predictions(fold.test.iter().zip(&predicted).map(|(&i, &p)| (labels[i].is_infected(), p)));
        per_fold.push(m);
        predictions.extend(fold.test.iter().copied().zip(predicted));
    }
    let micro = per_fold.iter().copied().sum();
    Ok(CrossValidation {
        per_fold,
        predictions,
        micro,
    })
}

/// Columns shared by every vector: (task, feature) pairs with a numeric
/// value in all runs. Others are dropped.
pub fn design_matrix(vectors: &[&FeatureVector]) -> (Vec<FeatureKey>, Vec<Vec<f64>>) {
    let mut columns: Option<BTreeSet<FeatureKey>> = None;
    for v in vectors {
        let keys: BTreeSet<FeatureKey> = v
            .tasks
            .iter()
            .flat_map(|(t, feats)| {
                feats
                    .iter()
                    .filter(|(_, val)| val.value().is_some())
                    .map(move |(f, _)| FeatureKey::new(t, f))
            })
            .collect();
        columns = Some(match columns {
            None => keys,
            Some(c) => c.intersection(&keys).cloned().collect(),
        });
    }
    let columns: Vec<FeatureKey> = columns.unwrap_or_default().into_iter().collect();
    let rows = vectors
        .iter()
        .map(|v| {
            columns
                .iter()
                .map(|k| v.value(&k.task, &k.feature).expect("column present in every vector"))
                .collect()
        })
        .collect();
    (columns, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEvaluation {
    pub kernel: Kernel,
    pub columns: Vec<FeatureKey>,
    pub cv: CrossValidation,
}

impl KernelEvaluation {
    pub fn metrics(&self) -> Metrics {
        self.cv.micro
    }
}

fn sign(label: &Label) -> i8 {
    if label.is_infected() {
        1
    } else {
        -1
    }
}

/// Hold-one-family-out SVM evaluation of each kernel on precomputed
/// feature vectors. Kernels are trained in parallel.
pub fn holdout_evaluate(dataset: &[LabeledVector], kernels: &[Kernel], c: f64, tol: f64) -> Result<Vec<KernelEvaluation>> {
    let labels: Vec<Label> = dataset.iter().map(|lv| lv.label.clone()).collect();
    let folds = holdout_folds(&labels)?;
    let vectors: Vec<&FeatureVector> = dataset.iter().map(|lv| &lv.vector).collect();
    let (columns, x) = design_matrix(&vectors);
    if columns.is_empty() {
        return Err(Error::InvalidInput("no feature is present in every run".into()));
    }
    let y: Vec<i8> = labels.iter().map(sign).collect();

    kernels
        .par_iter()
        .map(|&kernel| {
            let cv = cross_validate(&labels, &folds, |fold| {
                let tx: Vec<Vec<f64>> = fold.train.iter().map(|&i| x[i].clone()).collect();
                let ty: Vec<i8> = fold.train.iter().map(|&i| y[i]).collect();
                let model = smo_train(&tx, &ty, kernel, c, tol)?;
                fold.test.iter().map(|&i| Ok(svm_predict(&model, &x[i])? > 0)).collect()
            })?;
            Ok(KernelEvaluation {
                kernel,
                columns: columns.clone(),
                cv,
            })
        })
        .collect()
}

/// Micro-averaged metrics keyed by kernel name.
pub fn kernel_metrics(evals: &[KernelEvaluation]) -> BTreeMap<String, Metrics> {
    evals.iter().map(|e| (e.kernel.name(), e.metrics())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureValue;

    fn thirty_runs_five_families() -> Vec<Label> {
        let mut labels: Vec<Label> = (0..15).map(|_| Label::Clean).collect();
        for f in ["a", "b", "c", "d", "e"] {
            for _ in 0..3 {
                labels.push(Label::Infected(f.into()));
            }
        }
        labels
    }

    #[test]
    fn fold_sizes() {
        let labels = thirty_runs_five_families();
        let folds = holdout_folds(&labels).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!((f.train.len(), f.test.len()), (24, 6));
            let infected = f.test.iter().filter(|&&i| labels[i].is_infected()).count();
            assert_eq!(infected, 3);
            assert!(f.test.iter().all(|&i| labels[i].family().is_none_or(|fam| fam == f.family)));
        }
        // Round-robin: clean run i lands in fold i mod 5.
        assert_eq!(&folds[1].test[..3], &[1, 6, 11]);
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn always_infected_classifier() {
        let labels = thirty_runs_five_families();
        let folds = holdout_folds(&labels).unwrap();
        let cv = cross_validate(&labels, &folds, |f| Ok(vec![true; f.test.len()])).unwrap();
        assert_eq!(cv.micro.tpr(), 1.0);
        assert_eq!(cv.micro.fdr(), 0.5);
        let union = Metrics::from_predictions(cv.predictions.iter().map(|&(i, p)| (labels[i].is_infected(), p)));
        assert_eq!(union, cv.micro);
    }

    #[test]
    fn needs_two_families() {
        let labels = vec![Label::Clean, Label::Infected("a".into())];
        assert!(holdout_folds(&labels).is_err());
    }

    #[test]
    fn design_matrix_drops_partial_columns() {
        let mk = |run: &str, dsd: FeatureValue| {
            let mut tasks = BTreeMap::new();
            let mut feats = BTreeMap::new();
            feats.insert("mean".to_string(), FeatureValue::Value(1.0));
            feats.insert("dsd_data".to_string(), dsd);
            tasks.insert("Idle".to_string(), feats);
            FeatureVector {
                run_id: run.into(),
                tasks,
            }
        };
        let a = mk("a", FeatureValue::Value(0.1));
        let b = mk("b", FeatureValue::Insufficient);
        let (cols, rows) = design_matrix(&[&a, &b]);
        assert_eq!(cols, vec![FeatureKey::new("Idle", "mean")]);
        assert_eq!(rows, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn separable_features_give_perfect_holdout() {
        let labels = thirty_runs_five_families();
        let dataset: Vec<LabeledVector> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let base = if l.is_infected() { 10.0 } else { 0.0 };
                let mut feats = BTreeMap::new();
                feats.insert("mean".to_string(), FeatureValue::Value(base + (i % 3) as f64 * 0.1));
                feats.insert("l2".to_string(), FeatureValue::Value(base + (i % 4) as f64 * 0.1));
                let mut tasks = BTreeMap::new();
                tasks.insert("Idle".to_string(), feats);
                LabeledVector {
                    vector: FeatureVector {
                        run_id: format!("r{i}"),
                        tasks,
                    },
                    label: l.clone(),
                }
            })
            .collect();
        let evals = holdout_evaluate(&dataset, &[Kernel::Linear, Kernel::Rbf { gamma: 0.1 }], 1.0, 1e-3).unwrap();
        for e in evals {
            assert_eq!(e.metrics().tpr(), 1.0);
            assert_eq!(e.metrics().fdr(), 0.0);
            assert_eq!(e.metrics().total(), 30);
        }
    }
}
