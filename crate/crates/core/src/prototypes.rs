//! Prototype refinement under dynamic retention thresholds.
//!
//! A prototype is retained only while it represents enough training points
//! overall (`total >= alpha * N`) and enough points of its own class
//! (`count_k >= beta_k * N_k`), with
//!
//! ```text
//! alpha   = 1 / (K1 * |V|)
//! beta_k  = 1 / (K2 * |V_k|)
//! ```
//!
//! recomputed from the current set at every iteration. Each iteration runs
//! delete -> modify -> split -> merge on the current nearest-prototype
//! partition, then re-partitions. A class is "strong" in a prototype when its
//! count passes that class's beta test.

use rayon::prelude::*;
use thiserror::Error;

use crate::raster::LabeledSample;
use crate::scalar::{squared_distance, Scalar};
use crate::sofm::{nearest, update_toward, PrototypeSet};

#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("refinement left class {0} without any prototype")]
    ClassCollapsed(usize),
    #[error("no training samples")]
    NoSamples,
    #[error("no prototypes to refine")]
    NoPrototypes,
    #[error("invalid refinement configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig<T> {
    pub k1: T,
    pub k2: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for RefineConfig<T> {
    fn default() -> Self {
        Self {
            k1: T::lit(2.0),
            k2: T::lit(2.0),
            max_iterations: 20,
        }
    }
}

impl<T: Scalar> RefineConfig<T> {
    pub fn validate(&self) -> Result<(), RefineError> {
        if !(self.k1 > T::zero() && self.k2 > T::zero()) {
            return Err(RefineError::Config("K1 and K2 must be positive".into()));
        }
        Ok(())
    }
}

/// Retention thresholds for one iteration. `beta[k]` is `None` when class
/// `k` currently has no prototype.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds<T> {
    pub alpha: T,
    pub beta: Vec<Option<T>>,
}

impl<T: Scalar> Thresholds<T> {
    /// Beta used for candidacy tests: a class without prototypes is judged
    /// as if it would own exactly one.
    fn beta_or_single(&self, class: usize, k2: T) -> T {
        self.beta[class].unwrap_or_else(|| T::one() / k2)
    }
}

pub fn compute_thresholds<T: Scalar>(
    set: &PrototypeSet<T>,
    class_count: usize,
    config: &RefineConfig<T>,
) -> Thresholds<T> {
    let alpha = T::one() / (config.k1 * T::from_count(set.len()));
    let beta = (0..class_count)
        .map(|k| match set.count_for_class(k) {
            0 => None,
            n => Some(T::one() / (config.k2 * T::from_count(n))),
        })
        .collect();
    Thresholds { alpha, beta }
}

/// Nearest-prototype partition of the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeStats {
    /// Sample indices represented by each prototype.
    pub members: Vec<Vec<usize>>,
    /// `class_counts[i][k]`: points of class `k` represented by prototype `i`.
    pub class_counts: Vec<Vec<usize>>,
    /// `N_k` over the whole training set.
    pub class_totals: Vec<usize>,
}

impl PrototypeStats {
    pub fn total(&self, i: usize) -> usize {
        self.members[i].len()
    }

    pub fn sample_count(&self) -> usize {
        self.class_totals.iter().sum()
    }
}

pub fn class_count_of<T>(samples: &[LabeledSample<T>]) -> usize {
    samples.iter().map(|s| s.label + 1).max().unwrap_or(0)
}

/// Assigns every sample to its nearest prototype (lowest index on ties).
pub fn partition<T: Scalar>(set: &PrototypeSet<T>, samples: &[LabeledSample<T>], class_count: usize) -> PrototypeStats {
    let winners: Vec<usize> = samples.par_iter().map(|s| nearest(&set.vectors, &s.features)).collect();
    let mut members = vec![Vec::new(); set.len()];
    let mut class_counts = vec![vec![0; class_count]; set.len()];
    let mut class_totals = vec![0; class_count];
    for (idx, (&w, s)) in winners.iter().zip(samples).enumerate() {
        members[w].push(idx);
        class_counts[w][s.label] += 1;
        class_totals[s.label] += 1;
    }
    PrototypeStats {
        members,
        class_counts,
        class_totals,
    }
}

fn passes(count: usize, threshold: f64, population: usize) -> bool {
    count > 0 && count as f64 >= threshold * population as f64
}

fn centroid<T: Scalar>(samples: &[LabeledSample<T>], idx: impl Iterator<Item = usize>, dim: usize) -> Vec<T> {
    let mut sum = vec![T::zero(); dim];
    let mut n = 0usize;
    for i in idx {
        for (s, &x) in sum.iter_mut().zip(&samples[i].features) {
            *s += x;
        }
        n += 1;
    }
    let n = T::from_count(n.max(1));
    sum.into_iter().map(|s| s / n).collect()
}

/// Working prototype with the points it currently represents.
struct Candidate<T> {
    vector: Vec<T>,
    label: usize,
    members: Vec<usize>,
}

/// Checks every retention test against the final partition.
pub fn satisfies_thresholds<T: Scalar>(
    set: &PrototypeSet<T>,
    samples: &[LabeledSample<T>],
    config: &RefineConfig<T>,
) -> bool {
    let classes = class_count_of(samples);
    let stats = partition(set, samples, classes);
    let th = compute_thresholds(set, classes, config);
    let n = stats.sample_count();
    (0..set.len()).all(|i| match set.labels[i] {
        Some(k) => {
            let beta = th.beta[k].unwrap().to_f64().unwrap();
            passes(stats.total(i), th.alpha.to_f64().unwrap(), n)
                && passes(stats.class_counts[i][k], beta, stats.class_totals[k])
        }
        None => false,
    })
}

/// Refines a labeled prototype set until every prototype passes its
/// retention tests. The output size is data-driven.
pub fn refine_prototypes<T: Scalar>(
    set: &PrototypeSet<T>,
    samples: &[LabeledSample<T>],
    config: &RefineConfig<T>,
) -> Result<PrototypeSet<T>, RefineError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(RefineError::NoSamples);
    }
    if set.is_empty() {
        return Err(RefineError::NoPrototypes);
    }
    let classes = class_count_of(samples);
    let dim = samples[0].features.len();
    let mut current = set.clone();

    for iteration in 0..config.max_iterations {
        let (next, changed) = refine_iteration(&current, samples, classes, dim, config);
        current = next;
        log::debug!("refinement iteration {iteration}: {} prototypes", current.len());
        if !changed {
            break;
        }
        if current.is_empty() {
            break;
        }
    }

    let current = enforce_thresholds(current, samples, classes, config);
    for k in 0..classes {
        if current.count_for_class(k) == 0 {
            return Err(RefineError::ClassCollapsed(k));
        }
    }
    Ok(current)
}

fn refine_iteration<T: Scalar>(
    set: &PrototypeSet<T>,
    samples: &[LabeledSample<T>],
    classes: usize,
    dim: usize,
    config: &RefineConfig<T>,
) -> (PrototypeSet<T>, bool) {
    let stats = partition(set, samples, classes);
    let th = compute_thresholds(set, classes, config);
    let n = stats.sample_count();
    let alpha = th.alpha.to_f64().unwrap();
    let beta: Vec<f64> = (0..classes)
        .map(|k| th.beta_or_single(k, config.k2).to_f64().unwrap())
        .collect();
    let strong = |i: usize| -> Vec<usize> {
        (0..classes)
            .filter(|&k| passes(stats.class_counts[i][k], beta[k], stats.class_totals[k]))
            .collect()
    };

    let mut changed = false;
    let mut candidates: Vec<Candidate<T>> = Vec::new();
    for i in 0..set.len() {
        let strong_classes = strong(i);
        // Deletion: too few points, or no class represented strongly.
        if !passes(stats.total(i), alpha, n) || strong_classes.is_empty() {
            changed = true;
            continue;
        }
        if strong_classes.len() >= 2 {
            // Splitting: one centroid per strongly represented class.
            changed = true;
            for &k in &strong_classes {
                let members: Vec<usize> = stats.members[i]
                    .iter()
                    .copied()
                    .filter(|&m| samples[m].label == k)
                    .collect();
                candidates.push(Candidate {
                    vector: centroid(samples, members.iter().copied(), dim),
                    label: k,
                    members,
                });
            }
            continue;
        }
        // Modification: relabel to the single strong class.
        let k = strong_classes[0];
        if set.labels[i] != Some(k) {
            changed = true;
        }
        candidates.push(Candidate {
            vector: set.vectors[i].clone(),
            label: k,
            members: stats.members[i].clone(),
        });
    }

    changed |= merge_pass(&mut candidates, samples, classes, &stats.class_totals, config);

    let vectors = candidates.iter().map(|c| c.vector.clone()).collect();
    let labels = candidates.iter().map(|c| c.label).collect();
    (PrototypeSet::labeled(vectors, labels), changed)
}

/// Merges same-class mutual nearest neighbors whose union still passes both
/// tests under the post-merge thresholds and stays dominated by that class.
fn merge_pass<T: Scalar>(
    candidates: &mut Vec<Candidate<T>>,
    samples: &[LabeledSample<T>],
    classes: usize,
    class_totals: &[usize],
    config: &RefineConfig<T>,
) -> bool {
    let len = candidates.len();
    if len < 2 {
        return false;
    }
    let nn: Vec<usize> = (0..len)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_d = T::infinity();
            for j in 0..len {
                if j != i {
                    let d = squared_distance(&candidates[i].vector, &candidates[j].vector);
                    if d < best_d {
                        best = j;
                        best_d = d;
                    }
                }
            }
            best
        })
        .collect();
    let n: usize = class_totals.iter().sum();
    let mut per_class = vec![0usize; classes];
    for c in candidates.iter() {
        per_class[c.label] += 1;
    }
    let k1 = config.k1.to_f64().unwrap();
    let k2 = config.k2.to_f64().unwrap();
    let alpha_after = 1.0 / (k1 * (len - 1) as f64);

    let mut merged_into: Vec<Option<usize>> = vec![None; len];
    let mut changed = false;
    for i in 0..len {
        let j = nn[i];
        if j <= i || nn[j] != i || candidates[i].label != candidates[j].label {
            continue;
        }
        let k = candidates[i].label;
        let mut counts = vec![0usize; classes];
        for &m in candidates[i].members.iter().chain(&candidates[j].members) {
            counts[samples[m].label] += 1;
        }
        let total: usize = counts.iter().sum();
        let beta_after = |c: usize| {
            let owners = if c == k { per_class[k] - 1 } else { per_class[c] };
            1.0 / (k2 * owners.max(1) as f64)
        };
        let keeps_class = passes(total, alpha_after, n) && passes(counts[k], beta_after(k), class_totals[k]);
        let stays_pure = (0..classes)
            .filter(|&c| c != k)
            .all(|c| !passes(counts[c], beta_after(c), class_totals[c]));
        let identical = candidates[i].vector == candidates[j].vector;
        if identical || (keeps_class && stays_pure) {
            merged_into[j] = Some(i);
            changed = true;
        }
    }
    if !changed {
        return false;
    }
    let mut out: Vec<Candidate<T>> = Vec::with_capacity(len);
    for i in 0..len {
        if merged_into[i].is_some() {
            continue;
        }
        let partner = (0..len).find(|&j| merged_into[j] == Some(i));
        let cand = &candidates[i];
        match partner {
            None => out.push(Candidate {
                vector: cand.vector.clone(),
                label: cand.label,
                members: cand.members.clone(),
            }),
            Some(j) => {
                let other = &candidates[j];
                let (wi, wj) = (cand.members.len().max(1), other.members.len().max(1));
                let (a, b) = (T::from_count(wi), T::from_count(wj));
                let vector = cand
                    .vector
                    .iter()
                    .zip(&other.vector)
                    .map(|(&x, &y)| (a * x + b * y) / (a + b))
                    .collect();
                let mut members = cand.members.clone();
                members.extend_from_slice(&other.members);
                out.push(Candidate {
                    vector,
                    label: cand.label,
                    members,
                });
            }
        }
    }
    *candidates = out;
    true
}

/// Deletes prototypes that fail a retention test on the current partition
/// until every survivor passes. Deletion-only, so it terminates.
fn enforce_thresholds<T: Scalar>(
    mut set: PrototypeSet<T>,
    samples: &[LabeledSample<T>],
    classes: usize,
    config: &RefineConfig<T>,
) -> PrototypeSet<T> {
    dedupe(&mut set);
    loop {
        if set.is_empty() {
            return set;
        }
        let stats = partition(&set, samples, classes);
        let th = compute_thresholds(&set, classes, config);
        let n = stats.sample_count();
        let alpha = th.alpha.to_f64().unwrap();
        let keep: Vec<bool> = (0..set.len())
            .map(|i| match set.labels[i] {
                Some(k) => {
                    let beta = th.beta[k].unwrap().to_f64().unwrap();
                    passes(stats.total(i), alpha, n) && passes(stats.class_counts[i][k], beta, stats.class_totals[k])
                }
                None => false,
            })
            .collect();
        if keep.iter().all(|&k| k) {
            return set;
        }
        // Drop only the weakest failing prototype per round so one removal can
        // rescue neighbors that were starved by it.
        let worst = (0..set.len())
            .filter(|&i| !keep[i])
            .min_by_key(|&i| (stats.total(i), i))
            .unwrap();
        set.vectors.remove(worst);
        set.labels.remove(worst);
    }
}

fn dedupe<T: Scalar>(set: &mut PrototypeSet<T>) {
    let mut i = 0;
    while i < set.len() {
        if set.vectors[..i].contains(&set.vectors[i]) {
            set.vectors.remove(i);
            set.labels.remove(i);
        } else {
            i += 1;
        }
    }
}

/// Winner-only SOFM passes over the samples in their given order. The
/// learning rate decays linearly from 0.1 to 0.001 across all presentations.
pub fn winner_only_polish<T: Scalar>(
    set: &PrototypeSet<T>,
    samples: &[LabeledSample<T>],
    epochs: usize,
) -> PrototypeSet<T> {
    let mut out = set.clone();
    if out.is_empty() || samples.is_empty() || epochs == 0 {
        return out;
    }
    let total = epochs * samples.len();
    let (start, end) = (T::lit(0.1), T::lit(0.001));
    let mut step = 0;
    for _ in 0..epochs {
        for s in samples {
            let frac = if total > 1 {
                T::from_count(step) / T::from_count(total - 1)
            } else {
                T::zero()
            };
            let lr = start + (end - start) * frac;
            let r = nearest(&out.vectors, &s.features);
            update_toward(&mut out.vectors[r], &s.features, lr);
            step += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cluster(center: &[f64], sd: f64, n: usize, label: usize, seed: u64) -> Vec<LabeledSample<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, sd).unwrap();
        (0..n)
            .map(|_| LabeledSample {
                features: center.iter().map(|c| c + dist.sample(&mut rng)).collect(),
                label,
            })
            .collect()
    }

    #[test]
    fn threshold_formulas() {
        let cfg = RefineConfig {
            k1: 2.0,
            k2: 1.0,
            max_iterations: 1,
        };
        let set = PrototypeSet::<f64>::labeled(vec![vec![0.0]; 10], vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        let th = compute_thresholds(&set, 3, &cfg);
        assert!((th.alpha - 0.05).abs() < 1e-15);
        assert_eq!(th.beta[1], Some(1.0));
        assert_eq!(th.beta[2], None);
    }

    #[test]
    fn well_placed_prototypes_are_a_fixed_point() {
        let mut samples = cluster(&[10.0, 10.0], 1.0, 100, 0, 1);
        samples.extend(cluster(&[80.0, 80.0], 1.0, 100, 1, 2));
        let set = PrototypeSet::labeled(vec![vec![10.0, 10.0], vec![80.0, 80.0]], vec![0, 1]);
        let out = refine_prototypes(&set, &samples, &RefineConfig::default()).unwrap();
        assert_eq!(out, set);
    }

    #[test]
    fn mixed_prototype_is_split() {
        let mut samples = cluster(&[10.0, 10.0], 1.0, 100, 0, 3);
        samples.extend(cluster(&[40.0, 40.0], 1.0, 100, 1, 4));
        let set = PrototypeSet::labeled(vec![vec![25.0, 25.0]], vec![0]);
        let cfg = RefineConfig {
            k1: 2.0,
            k2: 1.0,
            max_iterations: 20,
        };
        let out = refine_prototypes(&set, &samples, &cfg).unwrap();
        assert!(out.len() >= 2);
        assert_eq!(out.count_for_class(0), 1);
        assert_eq!(out.count_for_class(1), 1);
        assert!(satisfies_thresholds(&out, &samples, &cfg));
    }

    #[test]
    fn starved_prototype_is_deleted() {
        // 999 points around 0 of class 0, one stray point of class 0 at 100.
        let mut samples = cluster(&[0.0], 1.0, 999, 0, 5);
        samples.push(LabeledSample {
            features: vec![100.0],
            label: 0,
        });
        let set = PrototypeSet::labeled(vec![vec![0.0], vec![100.0]], vec![0, 0]);
        let cfg = RefineConfig {
            k1: 1.0,
            k2: 2.0,
            max_iterations: 5,
        };
        let stats = partition(&set, &samples, 1);
        let th = compute_thresholds(&set, 1, &cfg);
        assert_eq!(stats.total(1), 1);
        assert!((stats.total(1) as f64) < th.alpha * 1000.0);
        let out = refine_prototypes(&set, &samples, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.vectors[0], vec![0.0]);
    }

    #[test]
    fn mislabeled_prototype_is_modified() {
        let samples = cluster(&[5.0], 1.0, 50, 1, 6);
        let mut all = cluster(&[90.0], 1.0, 50, 0, 7);
        all.extend(samples);
        let set = PrototypeSet::labeled(vec![vec![90.0], vec![5.0]], vec![0, 0]);
        let out = refine_prototypes(&set, &all, &RefineConfig::default()).unwrap();
        assert_eq!(out.labels, vec![Some(0), Some(1)]);
    }

    #[test]
    fn redundant_same_class_prototypes_merge() {
        let samples = cluster(&[0.0, 0.0], 3.0, 200, 0, 8);
        let mut others = cluster(&[60.0, 60.0], 3.0, 200, 1, 9);
        others.extend(samples);
        let set = PrototypeSet::labeled(vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![60.0, 60.0]], vec![0, 0, 1]);
        let out = refine_prototypes(&set, &others, &RefineConfig::default()).unwrap();
        assert_eq!(out.count_for_class(0), 1);
        assert_eq!(out.count_for_class(1), 1);
    }

    #[test]
    fn collapse_is_reported() {
        // Class 1 is two points buried inside class 0.
        let mut samples = cluster(&[0.0], 1.0, 200, 0, 10);
        samples.push(LabeledSample {
            features: vec![0.01],
            label: 1,
        });
        samples.push(LabeledSample {
            features: vec![-0.01],
            label: 1,
        });
        let set = PrototypeSet::labeled(vec![vec![0.0]], vec![0]);
        let cfg = RefineConfig {
            k1: 2.0,
            k2: 2.0,
            max_iterations: 5,
        };
        assert!(matches!(
            refine_prototypes(&set, &samples, &cfg),
            Err(RefineError::ClassCollapsed(_))
        ));
    }

    #[test]
    fn polish_zero_epochs_is_identity() {
        let set = PrototypeSet::labeled(vec![vec![3.0]], vec![0]);
        let samples = vec![LabeledSample {
            features: vec![1.0],
            label: 0,
        }];
        assert_eq!(winner_only_polish(&set, &samples, 0), set);
    }

    #[test]
    fn polish_converges_to_midpoint_of_symmetric_pair() {
        let set = PrototypeSet::<f64>::labeled(vec![vec![20.0]], vec![0]);
        let samples = vec![
            LabeledSample {
                features: vec![-1.0],
                label: 0,
            },
            LabeledSample {
                features: vec![1.0],
                label: 0,
            },
        ];
        let mut prev = 20.0f64;
        for epochs in [1, 10, 100, 1000] {
            let out = winner_only_polish(&set, &samples, epochs);
            let d = out.vectors[0][0].abs();
            assert!(d <= prev + 1e-12);
            prev = d;
        }
        assert!(prev < 0.06, "distance to midpoint {prev}");
    }

    #[test]
    fn polish_keeps_prototypes_in_their_clusters() {
        let mut samples = cluster(&[10.0, 10.0], 1.0, 100, 0, 11);
        samples.extend(cluster(&[50.0, 30.0], 1.0, 100, 1, 12));
        let set = PrototypeSet::labeled(
            vec![samples[0].features.clone(), samples[150].features.clone()],
            vec![0, 1],
        );
        let out = winner_only_polish(&set, &samples, 20);
        for (p, range) in out.vectors.iter().zip([0..100, 100..200]) {
            for d in 0..2 {
                let lo = samples[range.clone()]
                    .iter()
                    .map(|s| s.features[d])
                    .fold(f64::INFINITY, f64::min);
                let hi = samples[range.clone()]
                    .iter()
                    .map(|s| s.features[d])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(p[d] >= lo && p[d] <= hi);
            }
        }
        assert_eq!(out.labels, set.labels);
    }
}
