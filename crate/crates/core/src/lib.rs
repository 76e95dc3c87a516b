//! Fuzzy rule-based classification of multispectral images with contextual
//! (neighborhood) decision rules built on Dempster-Shafer evidence theory.
//!
//! The core types are generic over the floating-point scalar; the aliases
//! below fix it to `f64` or `f32`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod context;
pub mod evidence;
pub mod harness;
pub mod pipeline;
pub mod prototypes;
pub mod raster;
pub mod rulebase;
pub mod scalar;
pub mod sofm;

use thiserror::Error;

pub use context::{
    classify_image, classify_plane, decide_neighborhood, grid_search_w, Classification, ContextConfig, ContextError,
    GridSearch, LabelPlane, Method, Neighborhood, Outcome, Rect,
};
pub use evidence::{Bpa, EvidenceError, FocalSet};
pub use harness::{
    compare_methods, evaluate, generate_scene, ComparisonTable, EvalReport, HarnessError, Layout, SceneSpec,
};
pub use pipeline::{train, train_from_samples, TrainConfig, TrainReport};
pub use prototypes::{refine_prototypes, RefineConfig, RefineError};
pub use raster::{ClassMap, GroundTruth, LabeledSample, MultibandRaster, RasterError, OUTLIER, UNLABELED};
pub use rulebase::{Decision, FuzzyRule, LabelVector, Rulebase, RulebaseConfig, RulebaseError, SpreadInit};
pub use scalar::Scalar;
pub use sofm::{PrototypeSet, SofmConfig, SofmError};

pub type Rulebase64 = Rulebase<f64>;
pub type Rulebase32 = Rulebase<f32>;
pub type Bpa64 = Bpa<f64>;
pub type Bpa32 = Bpa<f32>;
pub type LabelPlane64 = LabelPlane<f64>;
pub type LabelPlane32 = LabelPlane<f32>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type TrainConfig32 = TrainConfig<f32>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Sofm(#[from] SofmError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Rulebase(#[from] RulebaseError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
