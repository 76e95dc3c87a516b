//! Synthetic scenes and accuracy reports.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{classify_plane, Classification, ContextConfig, LabelPlane};
use crate::raster::{ClassMap, GroundTruth, MultibandRaster, RasterError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("unknown preset `{0}` (expected patches-large or patches-small)")]
    UnknownPreset(String),
    #[error("scene file: {0}")]
    Parse(String),
    #[error("dimension mismatch: prediction is {0}x{1}, ground truth is {2}x{3}")]
    Dimension(usize, usize, usize, usize),
    #[error("class count mismatch: prediction has {0}, ground truth has {1}")]
    ClassCount(usize, usize),
    #[error("{0}")]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Voronoi cells seeded on a jittered grid: regular, compact regions.
    LargePatches,
    /// Voronoi cells seeded uniformly at random: irregular regions including
    /// very small slivers.
    FragmentedPatches,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpectrum {
    #[serde(default)]
    pub name: String,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Everything needed to regenerate a scene bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub layout: Layout,
    /// Mean spacing of patch seeds, in pixels.
    pub patch_scale: f64,
    /// Multiplier on every class's per-band standard deviation.
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    pub classes: Vec<ClassSpectrum>,
}

const PATCHES_LARGE: &str = include_str!("../../../presets/patches-large.toml");
const PATCHES_SMALL: &str = include_str!("../../../presets/patches-small.toml");

impl SceneSpec {
    pub fn preset(name: &str) -> Result<Self, HarnessError> {
        match name {
            "patches-large" => Self::from_toml(PATCHES_LARGE),
            "patches-small" => Self::from_toml(PATCHES_SMALL),
            other => Err(HarnessError::UnknownPreset(other.to_string())),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Scene(m));
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return fail("width, height and bands must be positive".into());
        }
        if self.classes.is_empty() || self.classes.len() > crate::raster::MAX_CLASSES {
            return fail(format!("class count must lie in 1..={}", crate::raster::MAX_CLASSES));
        }
        if !(self.patch_scale >= 1.0) {
            return fail("patch scale must be at least 1".into());
        }
        if !(self.noise_sd >= 0.0) {
            return fail("noise sd must be non-negative".into());
        }

        for (k, c) in self.classes.iter().enumerate() {
            if c.mean.len() != self.bands || c.sd.len() != self.bands {
                return fail(format!("class {k}: spectra must have {} bands", self.bands));
            }
            if c.mean.iter().any(|m| !(0.0..=255.0).contains(m)) {
                return fail(format!("class {k}: means must lie in [0, 255]"));
            }
            if c.sd.iter().any(|s| !(*s >= 0.0)) {
                return fail(format!("class {k}: standard deviations must be non-negative"));
            }
        }
        Ok(())
    }
}

struct Seeds {
    points: Vec<(f64, f64, u8)>,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl Seeds {
    fn new(points: Vec<(f64, f64, u8)>, cell: f64, width: usize, height: usize) -> Self {
        let cols = (width as f64 / cell).ceil() as usize + 1;
        let rows = (height as f64 / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, &(x, y, _)) in points.iter().enumerate() {
            let bx = ((x / cell).floor().max(0.0) as usize).min(cols - 1);
            let by = ((y / cell).floor().max(0.0) as usize).min(rows - 1);
            buckets[by * cols + bx].push(i);
        }
        Self {
            points,
            cell,
            cols,
            rows,
            buckets,
        }
    }

    /// Class of the nearest seed; ties go to the lower seed index.
    fn class_at(&self, x: f64, y: f64) -> u8 {
        let bx = ((x / self.cell).floor() as isize).clamp(0, self.cols as isize - 1);
        let by = ((y / self.cell).floor() as isize).clamp(0, self.rows as isize - 1);
        let mut best: Option<(f64, usize)> = None;
        let max_ring = self.cols.max(self.rows) as isize;
        for ring in 0..=max_ring {
            // Every seed outside this ring is at least `ring * cell` away.
            if let Some((d, _)) = best {
                let reach = (ring - 1).max(0) as f64 * self.cell;
                if reach * reach > d {
                    break;
                }
            }
            for gy in by - ring..=by + ring {
                for gx in bx - ring..=bx + ring {
                    let on_ring = (gy - by).abs() == ring || (gx - bx).abs() == ring;
                    if !on_ring || gx < 0 || gy < 0 || gx >= self.cols as isize || gy >= self.rows as isize {
                        continue;
                    }
                    for &i in &self.buckets[gy as usize * self.cols + gx as usize] {
                        let (sx, sy, _) = self.points[i];
                        let d = (sx - x).powi(2) + (sy - y).powi(2);
                        if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        self.points[best.expect("at least one seed").1].2
    }
}

fn class_layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let s = spec.patch_scale;
    let c = spec.class_count();
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut points = Vec::new();
    match spec.layout {
        Layout::LargePatches => {
            let nx = (w / s).ceil() as usize;
            let ny = (h / s).ceil() as usize;
            for gy in 0..ny {
                for gx in 0..nx {
                    let x = (gx as f64 + rng.random::<f64>()) * s;
                    let y = (gy as f64 + rng.random::<f64>()) * s;
                    points.push((x, y, 0));
                }
            }
        }
        Layout::FragmentedPatches => {
            let n = ((w * h) / (s * s)).ceil().max(1.0) as usize;
            for _ in 0..n {
                let x = rng.random::<f64>() * w;
                let y = rng.random::<f64>() * h;
                points.push((x, y, 0));
            }
        }
    }
    // Balanced class assignment so that every class occurs whenever there
    // are at least as many seeds as classes.
    let mut classes: Vec<u8> = (0..points.len()).map(|i| (i % c) as u8).collect();
    classes.shuffle(rng);
    for (p, k) in points.iter_mut().zip(classes) {
        p.2 = k;
    }
    let seeds = Seeds::new(points, s, spec.width, spec.height);
    let mut labels = Vec::with_capacity(spec.width * spec.height);
    for r in 0..spec.height {
        for col in 0..spec.width {
            labels.push(seeds.class_at(col as f64 + 0.5, r as f64 + 0.5));
        }
    }
    labels
}

/// Voronoi class patches filled with per-class Gaussian spectra, clipped and
/// rounded to `[0, 255]`. Deterministic for a fixed spec (seed included).
pub fn generate_scene(spec: &SceneSpec) -> Result<(MultibandRaster, GroundTruth), HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels = class_layout(spec, &mut rng);
    let mut raster = MultibandRaster::zeros(spec.width, spec.height, spec.bands);
    for (i, &label) in labels.iter().enumerate() {
        let class = &spec.classes[label as usize];
        let (r, c) = (i / spec.width, i % spec.width);
        for b in 0..spec.bands {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = class.mean[b] + spec.noise_sd * class.sd[b] * z;
            raster.set(r, c, b, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    let truth = ClassMap::new(spec.width, spec.height, spec.class_count(), labels)?;
    Ok((raster, truth))
}

/// Fraction of interior pixels whose whole 3x3 window shares one class.
pub fn homogeneous_fraction(truth: &GroundTruth) -> f64 {
    let (w, h) = (truth.width(), truth.height());
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut same = 0usize;
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let v = truth.get(r, c);
            if (r - 1..=r + 1).all(|rr| (c - 1..=c + 1).all(|cc| truth.get(rr, cc) == v)) {
                same += 1;
            }
        }
    }
    same as f64 / ((w - 2) * (h - 2)) as f64
}

/// Accuracy of a class map against ground truth over labeled pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `confusion[truth][predicted]`; column `c` counts outlier predictions.
    pub confusion: Vec<Vec<usize>>,
    pub overall_error_rate: f64,
    pub per_class_accuracy: Vec<f64>,
    pub class_frequency: Vec<usize>,
    pub outlier_count: usize,
    pub conflict_fallback_count: usize,
}

impl EvalReport {
    pub fn class_count(&self) -> usize {
        self.class_frequency.len()
    }

    pub fn total(&self) -> usize {
        self.class_frequency.iter().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.class_count()).map(|k| self.confusion[k][k]).sum()
    }

    pub fn to_text(&self) -> String {
        let c = self.class_count();
        let mut s = String::new();
        let _ = writeln!(s, "overall error rate: {:.4}%", 100.0 * self.overall_error_rate);
        let _ = writeln!(
            s,
            "outliers: {}  conflict fallbacks: {}",
            self.outlier_count, self.conflict_fallback_count
        );
        let _ = writeln!(s, "{:>8} {:>10} {:>10}", "class", "frequency", "accuracy");
        for k in 0..c {
            let _ = writeln!(
                s,
                "{:>8} {:>10} {:>9.2}%",
                k,
                self.class_frequency[k],
                100.0 * self.per_class_accuracy[k]
            );
        }
        let _ = writeln!(s, "confusion (rows truth, columns predicted, last column outlier):");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>7}")).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,frequency,accuracy\n");
        for k in 0..self.class_count() {
            let _ = writeln!(s, "{k},{},{}", self.class_frequency[k], self.per_class_accuracy[k]);
        }
        let _ = writeln!(s, "overall_error,{},{}", self.total(), self.overall_error_rate);
        s
    }
}

/// Compares a prediction with ground truth. Unlabeled truth pixels are
/// ignored; outlier predictions count as errors.
pub fn evaluate(predicted: &ClassMap, truth: &GroundTruth) -> Result<EvalReport, HarnessError> {
    if predicted.width() != truth.width() || predicted.height() != truth.height() {
        return Err(HarnessError::Dimension(
            predicted.width(),
            predicted.height(),
            truth.width(),
            truth.height(),
        ));
    }
    if predicted.class_count() > truth.class_count() {
        return Err(HarnessError::ClassCount(predicted.class_count(), truth.class_count()));
    }
    let c = truth.class_count();
    let mut confusion = vec![vec![0usize; c + 1]; c];
    let mut outliers = 0;
    for i in 0..truth.labels().len() {
        let Some(t) = truth.class_at(i) else { continue };
        match predicted.class_at(i) {
            Some(p) => confusion[t][p] += 1,
            None => {
                confusion[t][c] += 1;
                outliers += 1;
            }
        }
    }
    let class_frequency: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let per_class_accuracy = (0..c)
        .map(|k| {
            if class_frequency[k] == 0 {
                0.0
            } else {
                confusion[k][k] as f64 / class_frequency[k] as f64
            }
        })
        .collect();
    let total: usize = class_frequency.iter().sum();
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    Ok(EvalReport {
        confusion,
        overall_error_rate: if total == 0 {
            0.0
        } else {
            1.0 - correct as f64 / total as f64
        },
        per_class_accuracy,
        class_frequency,
        outlier_count: outliers,
        conflict_fallback_count: 0,
    })
}

pub fn evaluate_classification(result: &Classification, truth: &GroundTruth) -> Result<EvalReport, HarnessError> {
    let mut report = evaluate(&result.map, truth)?;
    report.conflict_fallback_count = result.conflict_fallbacks;
    Ok(report)
}

/// One row per decision rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<(String, EvalReport)>,
}

fn row_label<T: Scalar>(config: &ContextConfig<T>) -> String {
    match config.method {
        crate::context::Method::M4 => format!("method4(w={})", config.w),
        m => m.name().to_string(),
    }
}

pub fn compare_methods<T: Scalar>(
    plane: &LabelPlane<T>,
    truth: &GroundTruth,
    configs: &[ContextConfig<T>],
) -> Result<ComparisonTable, HarnessError> {
    let rows = configs
        .iter()
        .map(|cfg| {
            let result = classify_plane(plane, cfg);
            Ok((row_label(cfg), evaluate_classification(&result, truth)?))
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn error_of(&self, label: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, r)| r.overall_error_rate)
    }

    /// Error rates, then class-wise accuracies with class frequencies.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(6).max(6);
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>8}  {:>9}",
            "method", "error", "outliers", "fallbacks"
        );
        for (label, r) in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8.2}%  {:>8}  {:>9}",
                label,
                100.0 * r.overall_error_rate,
                r.outlier_count,
                r.conflict_fallback_count
            );
        }
        if let Some((_, first)) = self.rows.first() {
            let _ = writeln!(s, "\nclass-wise accuracy (%)");
            let _ = write!(s, "{:<16}", "class(freq)");
            for (label, _) in &self.rows {
                let _ = write!(s, " {:>width$}", label);
            }
            s.push('\n');
            for k in 0..first.class_count() {
                let _ = write!(s, "{:<16}", format!("{k}({})", first.class_frequency[k]));
                for (_, r) in &self.rows {
                    let _ = write!(s, " {:>width$.2}", 100.0 * r.per_class_accuracy[k]);
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,error_rate,outliers,conflict_fallbacks");
        let classes = self.rows.first().map_or(0, |(_, r)| r.class_count());
        for k in 0..classes {
            let _ = write!(s, ",class{k}_accuracy");
        }
        s.push('\n');
        for (label, r) in &self.rows {
            let _ = write!(
                s,
                "{label},{},{},{}",
                r.overall_error_rate, r.outlier_count, r.conflict_fallback_count
            );
            for a in &r.per_class_accuracy {
                let _ = write!(s, ",{a}");
            }
            s.push('\n');
        }
        s
    }
}
