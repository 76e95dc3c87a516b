//! One-dimensional self-organizing feature map.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::raster::LabeledSample;
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum SofmError {
    #[error("empty sample set")]
    NoSamples,
    #[error("empty prototype set")]
    NoPrototypes,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid SOFM configuration: {0}")]
    Config(String),
}

/// Training schedule for [`train_sofm`].
///
/// Learning rate and kernel radius decay linearly from their start to their
/// end value over the total number of presentations (`epochs * samples`).
#[derive(Debug, Clone, PartialEq)]
pub struct SofmConfig<T> {
    pub node_count: usize,
    pub epochs: usize,
    pub learning_rate_start: T,
    pub learning_rate_end: T,
    pub radius_start: T,
    pub radius_end: T,
    pub seed: u64,
}

impl<T: Scalar> SofmConfig<T> {
    pub fn new(node_count: usize, seed: u64) -> Self {
        Self {
            node_count,
            epochs: 20,
            learning_rate_start: T::lit(0.5),
            learning_rate_end: T::lit(0.01),
            radius_start: T::lit(1.0).max(T::from_count(node_count) / T::lit(2.0)),
            radius_end: T::lit(0.01),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SofmError> {
        let unit = |v: T| v > T::zero() && v <= T::one();
        if self.node_count == 0 {
            return Err(SofmError::Config("node count must be at least 1".into()));
        }
        if !unit(self.learning_rate_start) || !unit(self.learning_rate_end) {
            return Err(SofmError::Config("learning rates must lie in (0, 1]".into()));
        }
        if self.learning_rate_start < self.learning_rate_end {
            return Err(SofmError::Config("learning rate must not increase".into()));
        }
        if self.radius_end < T::zero() || self.radius_start < self.radius_end {
            return Err(SofmError::Config(
                "radius must be non-negative and non-increasing".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate and radius at presentation `step` of `total`.
    pub fn schedule(&self, step: usize, total: usize) -> (T, T) {
        let frac = if total <= 1 {
            T::zero()
        } else {
            T::from_count(step) / T::from_count(total - 1)
        };
        let lerp = |a: T, b: T| a + (b - a) * frac;
        (
            lerp(self.learning_rate_start, self.learning_rate_end),
            lerp(self.radius_start, self.radius_end),
        )
    }
}

/// Prototype vectors with an optional class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    pub vectors: Vec<Vec<T>>,
    pub labels: Vec<Option<usize>>,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn unlabeled(vectors: Vec<Vec<T>>) -> Self {
        let labels = vec![None; vectors.len()];
        Self { vectors, labels }
    }

    pub fn labeled(vectors: Vec<Vec<T>>, labels: Vec<usize>) -> Self {
        assert_eq!(vectors.len(), labels.len());
        Self {
            vectors,
            labels: labels.into_iter().map(Some).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }

    /// Number of prototypes carrying label `class`.
    pub fn count_for_class(&self, class: usize) -> usize {
        self.labels.iter().filter(|l| **l == Some(class)).count()
    }
}

/// Index of the prototype nearest to `x`; the lowest index wins ties.
pub fn find_winner<T: Scalar>(prototypes: &[Vec<T>], x: &[T]) -> Result<usize, SofmError> {
    let first = prototypes.first().ok_or(SofmError::NoPrototypes)?;
    if first.len() != x.len() {
        return Err(SofmError::Dimension {
            expected: first.len(),
            actual: x.len(),
        });
    }
    Ok(nearest(prototypes, x))
}

/// Unchecked nearest-prototype search.
pub(crate) fn nearest<T: Scalar>(prototypes: &[Vec<T>], x: &[T]) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (i, p) in prototypes.iter().enumerate() {
        let d = squared_distance(p, x);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Gaussian neighborhood kernel over 1-D grid distance. A zero radius gives
/// winner-only updates.
pub fn kernel<T: Scalar>(winner: usize, node: usize, radius: T) -> T {
    if radius <= T::zero() {
        return if winner == node { T::one() } else { T::zero() };
    }
    let d = T::from_count(winner.abs_diff(node));
    (-(d * d) / (T::lit(2.0) * radius * radius)).exp()
}

/// Moves `w` toward `x` by `rate` (already multiplied by the kernel value).
#[inline]
pub fn update_toward<T: Scalar>(w: &mut [T], x: &[T], rate: T) {
    for (wi, &xi) in w.iter_mut().zip(x) {
        *wi += rate * (xi - *wi);
    }
}

/// One presentation of `x` to the map: find the winner and pull it and its
/// grid neighbors toward `x`. Returns the winner index.
pub fn sofm_step<T: Scalar>(nodes: &mut [Vec<T>], x: &[T], learning_rate: T, radius: T) -> usize {
    let r = nearest(nodes, x);
    for (i, w) in nodes.iter_mut().enumerate() {
        let h = kernel(r, i, radius);
        if h > T::zero() {
            update_toward(w, x, learning_rate * h);
        }
    }
    r
}

/// Picks `count` initial node vectors from the samples, preferring distinct
/// vectors.
fn initial_nodes<T: Scalar, S: AsRef<[T]>>(samples: &[S], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let mut nodes: Vec<Vec<T>> = Vec::with_capacity(count);
    for &i in &order {
        if nodes.len() == count {
            break;
        }
        let v = samples[i].as_ref();
        if !nodes.iter().any(|n| n.as_slice() == v) {
            nodes.push(v.to_vec());
        }
    }
    let mut k = 0;
    while nodes.len() < count {
        nodes.push(samples[order[k % order.len()]].as_ref().to_vec());
        k += 1;
    }
    nodes
}

/// Trains a 1-D map with `config.node_count` nodes.
///
/// Deterministic for a fixed seed: the same ChaCha8 stream picks the initial
/// nodes and then shuffles the presentation order at every epoch.
pub fn train_sofm<T: Scalar, S: AsRef<[T]>>(
    samples: &[S],
    config: &SofmConfig<T>,
) -> Result<PrototypeSet<T>, SofmError> {
    config.validate()?;
    let first = samples.first().ok_or(SofmError::NoSamples)?;
    let dim = first.as_ref().len();
    if let Some(bad) = samples.iter().find(|s| s.as_ref().len() != dim) {
        return Err(SofmError::Dimension {
            expected: dim,
            actual: bad.as_ref().len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut nodes = initial_nodes(samples, config.node_count, &mut rng);
    let total = config.epochs * samples.len();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (lr, radius) = config.schedule(step, total);
            sofm_step(&mut nodes, samples[i].as_ref(), lr, radius);
            step += 1;
        }
    }
    Ok(PrototypeSet::unlabeled(nodes))
}

/// Labels each prototype with the majority class of the samples it wins.
/// Ties go to the lowest class index; prototypes winning nothing stay
/// unlabeled.
pub fn label_prototypes<T: Scalar>(prototypes: &PrototypeSet<T>, samples: &[LabeledSample<T>]) -> PrototypeSet<T> {
    let classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
    let mut votes = vec![vec![0usize; classes]; prototypes.len()];
    if !prototypes.is_empty() {
        for s in samples {
            votes[nearest(&prototypes.vectors, &s.features)][s.label] += 1;
        }
    }
    let labels = votes
        .iter()
        .map(|v| {
            let mut best: Option<(usize, usize)> = None;
            for (class, &n) in v.iter().enumerate() {
                if n > 0 && best.is_none_or(|(_, b)| n > b) {
                    best = Some((class, n));
                }
            }
            best.map(|(c, _)| c)
        })
        .collect();
    PrototypeSet {
        vectors: prototypes.vectors.clone(),
        labels,
    }
}
