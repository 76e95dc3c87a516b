//! Contextual decisions over a pixel's 3x3 neighborhood of label vectors.
//!
//! * Method 1 averages the nine possibilistic label vectors.
//! * Method 2 builds one Bayesian BPA per neighbor from the neighbor's and the
//!   center's label vectors and multiplies them out in closed form.
//! * Method 3 is Method 2 with extra mass on two-class focal sets, combined
//!   pairwise with Dempster's rule.
//! * Method 4 gives every pixel a simple support function on its top class,
//!   neighbors scaled by a weight `w`.
//!
//! Border pixels use only the neighbors that exist.

use rayon::prelude::*;
use thiserror::Error;

use crate::evidence::{combine_all, pignistic, Bpa, EvidenceError, FocalSet};
use crate::raster::{ClassMap, GroundTruth, MultibandRaster, RasterError, OUTLIER};
use crate::rulebase::{Decision, Rulebase};
use crate::scalar::{argmax, Scalar};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("label vectors carry no evidence")]
    DegenerateEvidence,
    #[error("rulebase expects {expected} bands, raster has {actual}")]
    BandMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("weight w = {0} is outside [0, 1]")]
    InvalidWeight(String),
    #[error("empty weight grid")]
    EmptyGrid,
    #[error("sub-image {0:?} lies outside the raster")]
    RectOutside(Rect),
    #[error("no labeled pixels in the evaluation window")]
    NoLabeledPixels,
    #[error("{0}")]
    Raster(#[from] RasterError),
}

/// Decision rule applied per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// The pixel's own label vector only.
    Noncontextual,
    M1,
    M2,
    M3,
    M4,
}

impl Method {
    pub const CONTEXTUAL: [Method; 4] = [Method::M1, Method::M2, Method::M3, Method::M4];

    pub fn name(self) -> &'static str {
        match self {
            Method::Noncontextual => "noncontextual",
            Method::M1 => "method1",
            Method::M2 => "method2",
            Method::M3 => "method3",
            Method::M4 => "method4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextConfig<T> {
    pub method: Method,
    /// Neighbor weight for Method 4.
    pub w: T,
}

impl<T: Scalar> ContextConfig<T> {
    pub fn new(method: Method, w: T) -> Result<Self, ContextError> {
        if !(w >= T::zero() && w <= T::one()) {
            return Err(ContextError::InvalidWeight(w.to_string()));
        }
        Ok(Self { method, w })
    }

    pub fn method(method: Method) -> Self {
        Self { method, w: T::one() }
    }
}

/// Label vectors of a pixel and its eight neighbors, neighbors in row-major
/// order (NW, N, NE, W, E, SW, S, SE); `None` past the image border.
#[derive(Debug, Clone, Copy)]
pub struct Neighborhood<'a, T> {
    pub center: &'a [T],
    pub neighbors: [Option<&'a [T]>; 8],
}

impl<'a, T: Scalar> Neighborhood<'a, T> {
    pub fn new(center: &'a [T], neighbors: [Option<&'a [T]>; 8]) -> Self {
        Self { center, neighbors }
    }

    pub fn present(&self) -> impl Iterator<Item = &'a [T]> + '_ {
        self.neighbors.iter().flatten().copied()
    }

    fn classes(&self) -> usize {
        self.center.len()
    }
}

/// Result of one contextual decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub decision: Decision,
    /// The evidence was in total conflict and the noncontextual decision was used.
    pub conflict_fallback: bool,
}

impl Outcome {
    fn plain(decision: Decision) -> Self {
        Self {
            decision,
            conflict_fallback: false,
        }
    }

    fn fallback(center: &[impl Scalar], conflict: bool) -> Self {
        Self {
            decision: Decision::from_scores(center),
            conflict_fallback: conflict,
        }
    }
}

fn decide_pignistic<T: Scalar>(m: &Bpa<T>) -> Decision {
    Decision::from_scores(&pignistic(m))
}

/// Mean of the present label vectors, then argmax.
pub fn method1<T: Scalar>(nb: &Neighborhood<'_, T>) -> Decision {
    let mut sum = nb.center.to_vec();
    let mut count = 1usize;
    for v in nb.present() {
        for (s, &a) in sum.iter_mut().zip(v) {
            *s += a;
        }
        count += 1;
    }
    let n = T::from_count(count);
    sum.iter_mut().for_each(|s| *s /= n);
    Decision::from_scores(&sum)
}

/// Singleton masses `(alpha_k^i + alpha_k^0) / S`.
pub fn method2_masses<T: Scalar>(center: &[T], neighbor: &[T]) -> Result<Vec<T>, ContextError> {
    let raw: Vec<T> = center.iter().zip(neighbor).map(|(&a, &b)| a + b).collect();
    let s: T = raw.iter().copied().sum();
    if !(s > T::zero()) {
        return Err(ContextError::DegenerateEvidence);
    }
    Ok(raw.into_iter().map(|r| r / s).collect())
}

pub fn method2_bpa<T: Scalar>(center: &[T], neighbor: &[T]) -> Result<Bpa<T>, ContextError> {
    let masses = method2_masses(center, neighbor)?;
    Ok(Bpa::from_weights(
        masses.len(),
        masses.iter().enumerate().map(|(k, &m)| (FocalSet::singleton(k), m)),
    )
    .expect("masses sum to one"))
}

/// Closed-form global BPA of Method 2: the normalized per-class product of the
/// neighbors' singleton masses. `Ok(None)` when every neighbor is degenerate.
pub fn method2_global<T: Scalar>(nb: &Neighborhood<'_, T>) -> Result<Option<Vec<T>>, EvidenceError> {
    let mut product: Option<Vec<T>> = None;
    for v in nb.present() {
        let Ok(m) = method2_masses(nb.center, v) else { continue };
        match product.as_mut() {
            None => product = Some(m),
            Some(p) => p.iter_mut().zip(&m).for_each(|(a, b)| *a *= *b),
        }
    }
    let Some(p) = product else { return Ok(None) };
    let z: T = p.iter().copied().sum();
    if !(z > T::zero()) {
        return Err(EvidenceError::TotalConflict);
    }
    Ok(Some(p.into_iter().map(|x| x / z).collect()))
}

pub fn method2<T: Scalar>(nb: &Neighborhood<'_, T>) -> Outcome {
    match method2_global(nb) {
        Ok(Some(g)) => Outcome::plain(Decision::from_scores(&g)),
        Ok(None) => Outcome::fallback(nb.center, false),
        Err(_) => Outcome::fallback(nb.center, true),
    }
}

/// Singleton and two-class masses, renormalized to sum to one:
/// singleton `{k}` gets `alpha_k^i + alpha_k^0`, pair `{l, m}` gets
/// `((alpha_l^i + alpha_m^0) + (alpha_m^i + alpha_l^0)) / 2`.
pub fn method3_bpa<T: Scalar>(center: &[T], neighbor: &[T]) -> Result<Bpa<T>, ContextError> {
    let c = center.len();
    let half = T::lit(0.5);
    let singles = (0..c).map(|k| (FocalSet::singleton(k), neighbor[k] + center[k]));
    let pairs = (0..c).flat_map(|l| {
        (l + 1..c).map(move |m| {
            (
                FocalSet::pair(l, m),
                ((neighbor[l] + center[m]) + (neighbor[m] + center[l])) * half,
            )
        })
    });
    Bpa::from_weights(c, singles.chain(pairs)).ok_or(ContextError::DegenerateEvidence)
}

pub fn method3<T: Scalar>(nb: &Neighborhood<'_, T>) -> Outcome {
    let bpas: Vec<Bpa<T>> = nb.present().filter_map(|v| method3_bpa(nb.center, v).ok()).collect();
    if bpas.is_empty() {
        return Outcome::fallback(nb.center, false);
    }
    match combine_all(&bpas) {
        Ok(m) => Outcome::plain(decide_pignistic(&m)),
        Err(_) => Outcome::fallback(nb.center, true),
    }
}

fn simple_support<T: Scalar>(classes: usize, top: usize, mass: T) -> Bpa<T> {
    if mass <= T::zero() {
        return Bpa::vacuous(classes);
    }
    Bpa::from_weights(
        classes,
        [
            (FocalSet::singleton(top), mass),
            (FocalSet::full(classes), T::one() - mass),
        ],
    )
    .expect("positive mass")
}

/// Simple support function on the top class: `m({C_q}) = alpha_q` for the
/// center, `w * alpha_q` for a neighbor; the remainder goes to the frame.
pub fn method4_bpa<T: Scalar>(alpha: &[T], w: T, is_center: bool) -> Bpa<T> {
    let classes = alpha.len();
    match argmax(alpha) {
        Some(q) if alpha[q] > T::zero() => {
            let mass = if is_center { alpha[q] } else { w * alpha[q] };
            simple_support(classes, q, mass)
        }
        _ => Bpa::vacuous(classes),
    }
}

/// The unweighted assignment: every pixel, center included, puts `alpha_q` on
/// its top class.
pub fn method4_unweighted_bpa<T: Scalar>(alpha: &[T]) -> Bpa<T> {
    let classes = alpha.len();
    match argmax(alpha) {
        Some(q) if alpha[q] > T::zero() => simple_support(classes, q, alpha[q]),
        _ => Bpa::vacuous(classes),
    }
}

fn combine_and_decide<T: Scalar>(center: &[T], bpas: Vec<Bpa<T>>) -> Outcome {
    if bpas.iter().all(Bpa::is_vacuous) {
        return Outcome::plain(Decision::Outlier);
    }
    match combine_all(&bpas) {
        Ok(m) => Outcome::plain(decide_pignistic(&m)),
        Err(_) => Outcome::fallback(center, true),
    }
}

pub fn method4<T: Scalar>(nb: &Neighborhood<'_, T>, w: T) -> Outcome {
    let mut bpas = Vec::with_capacity(9);
    bpas.push(method4_bpa(nb.center, w, true));
    bpas.extend(nb.present().map(|v| method4_bpa(v, w, false)));
    combine_and_decide(nb.center, bpas)
}

pub fn method4_unweighted<T: Scalar>(nb: &Neighborhood<'_, T>) -> Outcome {
    let mut bpas = Vec::with_capacity(9);
    bpas.push(method4_unweighted_bpa(nb.center));
    bpas.extend(nb.present().map(method4_unweighted_bpa));
    combine_and_decide(nb.center, bpas)
}

pub fn decide_neighborhood<T: Scalar>(nb: &Neighborhood<'_, T>, config: &ContextConfig<T>) -> Outcome {
    debug_assert!(nb.present().all(|v| v.len() == nb.classes()));
    match config.method {
        Method::Noncontextual => Outcome::plain(Decision::from_scores(nb.center)),
        Method::M1 => Outcome::plain(method1(nb)),
        Method::M2 => method2(nb),
        Method::M3 => method3(nb),
        Method::M4 => method4(nb, config.w),
    }
}

/// Label vectors for every pixel, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPlane<T> {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<T>,
}

impl<T: Scalar> LabelPlane<T> {
    pub fn compute(raster: &MultibandRaster, rulebase: &Rulebase<T>) -> Result<Self, ContextError> {
        if rulebase.dim != raster.bands() {
            return Err(ContextError::BandMismatch {
                expected: rulebase.dim,
                actual: raster.bands(),
            });
        }
        let classes = rulebase.class_count;
        let mut data = vec![T::zero(); raster.pixel_count() * classes];
        if classes > 0 {
            data.par_chunks_mut(classes).enumerate().for_each_init(
                || (Vec::with_capacity(raster.bands()), Vec::with_capacity(raster.bands())),
                |(features, scratch), (i, out)| {
                    raster.pixel_features_into(i, features);
                    rulebase.label_vector_into(features, out, scratch);
                },
            );
        }
        Ok(Self {
            width: raster.width(),
            height: raster.height(),
            classes,
            data,
        })
    }

    /// Builds a plane from precomputed vectors (`width * height * classes` values).
    pub fn from_vectors(width: usize, height: usize, classes: usize, data: Vec<T>) -> Result<Self, ContextError> {
        if data.len() != width * height * classes {
            return Err(ContextError::Dimension(format!(
                "expected {} values, got {}",
                width * height * classes,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            classes,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn vector(&self, row: usize, col: usize) -> &[T] {
        let i = (row * self.width + col) * self.classes;
        &self.data[i..i + self.classes]
    }

    pub fn neighborhood(&self, row: usize, col: usize) -> Neighborhood<'_, T> {
        let mut neighbors = [None; 8];
        let mut slot = 0;
        for dr in [-1isize, 0, 1] {
            for dc in [-1isize, 0, 1] {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (r, c) = (row as isize + dr, col as isize + dc);
                if r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width {
                    neighbors[slot] = Some(self.vector(r as usize, c as usize));
                }
                slot += 1;
            }
        }
        Neighborhood::new(self.vector(row, col), neighbors)
    }

    /// Decisions for every pixel in row-major order.
    pub fn decide_all(&self, config: &ContextConfig<T>) -> Vec<Outcome> {
        (0..self.width * self.height)
            .into_par_iter()
            .map(|i| decide_neighborhood(&self.neighborhood(i / self.width, i % self.width), config))
            .collect()
    }
}

/// Class map plus per-image counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub map: ClassMap,
    pub outliers: usize,
    pub conflict_fallbacks: usize,
}

pub fn classify_plane<T: Scalar>(plane: &LabelPlane<T>, config: &ContextConfig<T>) -> Classification {
    let outcomes = plane.decide_all(config);
    let mut outliers = 0;
    let mut conflict_fallbacks = 0;
    let labels = outcomes
        .iter()
        .map(|o| {
            conflict_fallbacks += o.conflict_fallback as usize;
            match o.decision {
                Decision::Class(k) => k as u8,
                Decision::Outlier => {
                    outliers += 1;
                    OUTLIER
                }
            }
        })
        .collect();
    if conflict_fallbacks > 0 {
        log::info!(
            "{}: {conflict_fallbacks} pixels fell back to the noncontextual decision after total conflict",
            config.method.name()
        );
    }
    Classification {
        map: ClassMap::new(plane.width, plane.height, plane.classes, labels).expect("labels below class count"),
        outliers,
        conflict_fallbacks,
    }
}

pub fn classify_image<T: Scalar>(
    raster: &MultibandRaster,
    rulebase: &Rulebase<T>,
    config: &ContextConfig<T>,
) -> Result<Classification, ContextError> {
    Ok(classify_plane(&LabelPlane::compute(raster, rulebase)?, config))
}

/// Pixel window: `row`/`col` of the top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.col + self.width <= width && self.row + self.height <= height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch<T> {
    pub best_w: T,
    pub best_error: f64,
    /// `(w, error)` for every grid value, in grid order.
    pub curve: Vec<(T, f64)>,
}

impl<T: Scalar> GridSearch<T> {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("w,error\n");
        for (w, e) in &self.curve {
            s.push_str(&format!("{w},{e}\n"));
        }
        s
    }
}

/// `0.05, 0.10, ..., 1.00`.
pub fn default_w_grid<T: Scalar>() -> Vec<T> {
    (1..=20).map(|i| T::from_count(i) / T::lit(20.0)).collect()
}

/// Method 4 error on the labeled pixels of `rect` for each grid value of `w`.
/// Ties resolve to the smaller `w`.
pub fn grid_search_w<T: Scalar>(
    plane: &LabelPlane<T>,
    truth: &GroundTruth,
    rect: Rect,
    grid: &[T],
) -> Result<GridSearch<T>, ContextError> {
    if grid.is_empty() {
        return Err(ContextError::EmptyGrid);
    }
    if truth.width() != plane.width || truth.height() != plane.height {
        return Err(ContextError::Dimension(
            "ground truth and label plane differ in size".into(),
        ));
    }
    if !rect.fits(plane.width, plane.height) {
        return Err(ContextError::RectOutside(rect));
    }
    let pixels: Vec<(usize, usize, usize)> = (rect.row..rect.row + rect.height)
        .flat_map(|r| (rect.col..rect.col + rect.width).map(move |c| (r, c)))
        .filter_map(|(r, c)| truth.class_at(r * truth.width() + c).map(|k| (r, c, k)))
        .collect();
    if pixels.is_empty() {
        return Err(ContextError::NoLabeledPixels);
    }
    let mut curve = Vec::with_capacity(grid.len());
    for &w in grid {
        let config = ContextConfig::new(Method::M4, w)?;
        let wrong = pixels
            .par_iter()
            .filter(|&&(r, c, k)| {
                decide_neighborhood(&plane.neighborhood(r, c), &config).decision != Decision::Class(k)
            })
            .count();
        curve.push((w, wrong as f64 / pixels.len() as f64));
    }
    let (best_w, best_error) = curve
        .iter()
        .copied()
        .fold(None, |best: Option<(T, f64)>, (w, e)| match best {
            Some((bw, be)) if e > be || (e == be && w >= bw) => Some((bw, be)),
            _ => Some((w, e)),
        })
        .unwrap();
    Ok(GridSearch {
        best_w,
        best_error,
        curve,
    })
}
