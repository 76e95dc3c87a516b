//! End-to-end rulebase training from an image and its ground truth.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::prototypes::{refine_prototypes, winner_only_polish, RefineConfig};
use crate::raster::{sample_training_set, GroundTruth, LabeledSample, MultibandRaster};
use crate::rulebase::{build_rules, tune_rules, Rulebase, RulebaseConfig, TuneReport};
use crate::scalar::Scalar;
use crate::sofm::{label_prototypes, train_sofm, SofmConfig};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub samples_per_class: usize,
    pub sofm: SofmConfig<T>,
    pub refine: RefineConfig<T>,
    pub polish_epochs: usize,
    pub rulebase: RulebaseConfig<T>,
    /// Seeds sampling; the SOFM keeps its own seed.
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(node_count: usize, seed: u64) -> Self {
        Self {
            samples_per_class: 200,
            sofm: SofmConfig::new(node_count, seed),
            refine: RefineConfig::default(),
            polish_epochs: 10,
            rulebase: RulebaseConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub sample_count: usize,
    pub sofm_nodes: usize,
    pub refined_prototypes: usize,
    pub rule_count: usize,
    pub untuned_error_rate: f64,
    pub training_error_rate: f64,
    pub tuning: TuneReport<T>,
}

/// Runs the training chain on samples that are already drawn. The polish
/// pass sees the samples in a seeded random order.
pub fn train_from_samples<T: Scalar>(
    samples: &[LabeledSample<T>],
    config: &TrainConfig<T>,
) -> Result<(Rulebase<T>, TrainReport<T>), Error> {
    let nodes = train_sofm(samples, &config.sofm)?;
    let labeled = label_prototypes(&nodes, samples);
    let refined = refine_prototypes(&labeled, samples, &config.refine)?;
    let mut order: Vec<LabeledSample<T>> = samples.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let polished = winner_only_polish(&refined, &order, config.polish_epochs);
    let initial = build_rules(&polished, samples, &config.rulebase)?;
    let untuned_error_rate = initial.error_rate(samples);
    let (rulebase, tuning) = tune_rules(&initial, samples, &config.rulebase)?;
    let training_error_rate = rulebase.error_rate(samples);
    log::info!(
        "trained {} rules from {} nodes; training error {:.4} (untuned {:.4})",
        rulebase.len(),
        nodes.len(),
        training_error_rate,
        untuned_error_rate
    );
    let report = TrainReport {
        sample_count: samples.len(),
        sofm_nodes: nodes.len(),
        refined_prototypes: refined.len(),
        rule_count: rulebase.len(),
        untuned_error_rate,
        training_error_rate,
        tuning,
    };
    Ok((rulebase, report))
}

pub fn train<T: Scalar>(
    raster: &MultibandRaster,
    truth: &GroundTruth,
    config: &TrainConfig<T>,
) -> Result<(Rulebase<T>, TrainReport<T>), Error> {
    let samples = sample_training_set(raster, truth, config.samples_per_class, config.seed)?;
    train_from_samples(&samples, config)
}
