//! Detecting anomalous executions from CPU power-consumption traces.
//!
//! The pipeline turns raw rail recordings into uniformly sampled power
//! profiles ([`trace`]), cuts them into marker-delimited tasks, extracts
//! statistical and symbolic features per task ([`features`], built on
//! [`symbolize`] and [`smash`]), and classifies runs with a one-class
//! z-score voting ensemble or kernel SVMs ([`detect`]). [`synth`] produces
//! labelled synthetic corpora and [`pipeline`] wires the stages together
//! over a corpus on disk.

// Negated float comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod smash;
pub mod symbolize;
pub mod synth;
pub mod trace;

pub use detect::{
    classify, evaluate_ensemble, fit_ensemble, holdout_evaluate, smo_train, svm_predict, vote, EnsembleModel,
    FeatureKey, FeatureSubset, Kernel, Metrics, SvmModel, Verdict, VoteRecord,
};
pub use error::{Error, Result};
pub use features::{extract_features, FeatureConfig, FeatureValue, FeatureVector, TaskModel};
pub use smash::{dsd_distance, SmashConfig, SmashOutcome};
pub use symbolize::{ShapeBook, SymbolStream};
pub use trace::{Label, MarkerConfig, PowerTrace, RawRecording, RunManifest, TaskSegment, UniformProfile};

/// Mixes a textual tag into a seed so independent stages draw independent
/// random streams from one user seed.
pub(crate) fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finaliser.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
