//! Dempster-Shafer evidence over a frame of at most 64 classes.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::scalar::{argmax, Scalar};

/// Masses at or below this are dropped after combination.
pub const PRUNE_BELOW: f64 = 1e-12;
/// Conflict this close to one is treated as total.
pub const TOTAL_CONFLICT_MARGIN: f64 = 1e-12;
pub const MAX_FRAME: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum EvidenceError {
    #[error("total conflict between bodies of evidence")]
    TotalConflict,
    #[error("class counts differ: {0} vs {1}")]
    FrameMismatch(usize, usize),
    #[error("frame of {0} classes exceeds the supported {MAX_FRAME}")]
    FrameTooLarge(usize),
    #[error("mass assigned to the empty set")]
    EmptyFocalSet,
    #[error("focal set {0} has members outside the frame")]
    OutsideFrame(FocalSet),
    #[error("mass {0} is outside (0, 1]")]
    InvalidMass(String),
    #[error("masses sum to {0}, not 1")]
    NotNormalized(String),
    #[error("no bodies of evidence to combine")]
    NothingToCombine,
}

/// Subset of the class frame as a bitmask; bit `k` is class `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FocalSet(pub u64);

impl FocalSet {
    pub fn singleton(class: usize) -> Self {
        Self(1u64 << class)
    }

    pub fn pair(a: usize, b: usize) -> Self {
        Self((1u64 << a) | (1u64 << b))
    }

    pub fn full(class_count: usize) -> Self {
        if class_count >= 64 {
            Self(u64::MAX)
        } else {
            Self((1u64 << class_count) - 1)
        }
    }

    pub fn from_classes(classes: impl IntoIterator<Item = usize>) -> Self {
        Self(classes.into_iter().fold(0, |m, k| m | (1u64 << k)))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, class: usize) -> bool {
        self.0 >> class & 1 == 1
    }

    pub fn intersect(self, other: Self) -> Self {
        Self(self.0 & other.0)
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |k| bits >> k & 1 == 1)
    }
}

impl fmt::Display for FocalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.members().map(|k| k.to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Basic probability assignment: mass on non-empty focal sets, summing to one.
/// Focal sets are kept sorted by bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct Bpa<T> {
    class_count: usize,
    masses: Vec<(FocalSet, T)>,
}

impl<T: Scalar> Bpa<T> {
    /// Validated constructor. Zero masses are dropped; duplicate focal sets are summed.
    pub fn new(class_count: usize, masses: impl IntoIterator<Item = (FocalSet, T)>) -> Result<Self, EvidenceError> {
        if class_count > MAX_FRAME {
            return Err(EvidenceError::FrameTooLarge(class_count));
        }
        let frame = FocalSet::full(class_count);
        let mut map: BTreeMap<FocalSet, T> = BTreeMap::new();
        for (set, m) in masses {
            if !(m >= T::zero() && m <= T::one() + T::mass_tolerance()) {
                return Err(EvidenceError::InvalidMass(m.to_string()));
            }
            if m == T::zero() {
                continue;
            }
            if set.is_empty() {
                return Err(EvidenceError::EmptyFocalSet);
            }
            if set.0 & !frame.0 != 0 {
                return Err(EvidenceError::OutsideFrame(set));
            }
            *map.entry(set).or_insert(T::zero()) += m;
        }
        let total: T = map.values().copied().sum();
        if (total - T::one()).abs() > T::mass_tolerance() {
            return Err(EvidenceError::NotNormalized(total.to_string()));
        }
        Ok(Self {
            class_count,
            masses: map.into_iter().collect(),
        })
    }

    /// All mass on the whole frame.
    pub fn vacuous(class_count: usize) -> Self {
        Self {
            class_count,
            masses: vec![(FocalSet::full(class_count), T::one())],
        }
    }

    /// Singleton masses from a probability vector.
    pub fn bayesian(probabilities: &[T]) -> Result<Self, EvidenceError> {
        Self::new(
            probabilities.len(),
            probabilities
                .iter()
                .enumerate()
                .map(|(k, &p)| (FocalSet::singleton(k), p)),
        )
    }

    /// Builds from non-negative weights by dividing through by their sum.
    /// Returns `None` when the weights sum to zero.
    pub(crate) fn from_weights(class_count: usize, weights: impl IntoIterator<Item = (FocalSet, T)>) -> Option<Self> {
        let mut map: BTreeMap<FocalSet, T> = BTreeMap::new();
        for (set, w) in weights {
            if w > T::zero() {
                *map.entry(set).or_insert(T::zero()) += w;
            }
        }
        let total: T = map.values().copied().sum();
        if !(total > T::zero()) {
            return None;
        }
        Some(Self {
            class_count,
            masses: map.into_iter().map(|(s, w)| (s, w / total)).collect(),
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn focal_elements(&self) -> &[(FocalSet, T)] {
        &self.masses
    }

    pub fn mass(&self, set: FocalSet) -> T {
        self.masses
            .binary_search_by_key(&set, |(s, _)| *s)
            .map_or(T::zero(), |i| self.masses[i].1)
    }

    pub fn is_vacuous(&self) -> bool {
        self.masses.len() == 1 && self.masses[0].0 == FocalSet::full(self.class_count)
    }

    pub fn is_bayesian(&self) -> bool {
        self.masses.iter().all(|(s, _)| s.len() == 1)
    }

    pub fn total(&self) -> T {
        self.masses.iter().map(|(_, m)| *m).sum()
    }
}

/// Dempster's rule: normalized conjunctive combination.
pub fn combine<T: Scalar>(m1: &Bpa<T>, m2: &Bpa<T>) -> Result<Bpa<T>, EvidenceError> {
    if m1.class_count != m2.class_count {
        return Err(EvidenceError::FrameMismatch(m1.class_count, m2.class_count));
    }
    let mut acc: BTreeMap<FocalSet, T> = BTreeMap::new();
    let mut conflict = T::zero();
    for &(b, mb) in &m1.masses {
        for &(c, mc) in &m2.masses {
            let a = b.intersect(c);
            let p = mb * mc;
            if a.is_empty() {
                conflict += p;
            } else {
                *acc.entry(a).or_insert(T::zero()) += p;
            }
        }
    }
    let retained: T = acc.values().copied().sum();
    if conflict >= T::one() - T::lit(TOTAL_CONFLICT_MARGIN) || !(retained > T::zero()) {
        return Err(EvidenceError::TotalConflict);
    }
    // Normalizing by the retained mass equals dividing by 1 - K, and keeps the
    // sum at one after pruning.
    let prune = T::lit(PRUNE_BELOW) * retained;
    let kept: T = acc.values().copied().filter(|&m| m > prune).sum();
    Ok(Bpa {
        class_count: m1.class_count,
        masses: acc
            .into_iter()
            .filter(|&(_, m)| m > prune)
            .map(|(s, m)| (s, m / kept))
            .collect(),
    })
}

/// Left fold of [`combine`] over the list.
pub fn combine_all<'a, T: Scalar + 'a>(bpas: impl IntoIterator<Item = &'a Bpa<T>>) -> Result<Bpa<T>, EvidenceError> {
    let mut iter = bpas.into_iter();
    let first = iter.next().ok_or(EvidenceError::NothingToCombine)?;
    iter.try_fold(first.clone(), |acc, m| combine(&acc, m))
}

/// Splits each focal element's mass evenly among its members.
pub fn pignistic<T: Scalar>(m: &Bpa<T>) -> Vec<T> {
    let mut p = vec![T::zero(); m.class_count];
    for &(set, mass) in &m.masses {
        let share = mass / T::from_count(set.len());
        for k in set.members() {
            p[k] += share;
        }
    }
    p
}

/// Class with the highest probability; lowest index on ties.
pub fn decide<T: Scalar>(probabilities: &[T]) -> Option<usize> {
    argmax(probabilities)
}
