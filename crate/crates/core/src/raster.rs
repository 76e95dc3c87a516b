//! Band-sequential rasters, class maps and stratified training samples.
//!
//! Every raster on disk is a pair of files sharing a stem: `<name>.hdr`, a
//! text header of `key=value` lines, and `<name>.bsq`, the raw 8-bit samples
//! stored band after band, each band in row-major order.
//!
//! ```text
//! width=512
//! height=512
//! bands=7
//! dtype=u8
//! layout=bsq
//! ```
//!
//! Class maps (ground truth and classifier output) are 1-band rasters with an
//! extra `classes=<c>` line. Value 255 marks an unlabeled pixel and 254 an
//! outlier decision.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;

/// Class-map value for pixels that carry no ground-truth label.
pub const UNLABELED: u8 = 255;
/// Class-map value for pixels that fired no rule.
pub const OUTLIER: u8 = 254;
/// Largest class count a class map can encode.
pub const MAX_CLASSES: usize = OUTLIER as usize;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed header: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("unsupported dtype `{0}` (only u8 is supported)")]
    UnsupportedDtype(String),
    #[error("unsupported layout `{0}` (only bsq is supported)")]
    UnsupportedLayout(String),
    #[error("data size mismatch: header implies {expected} bytes, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} at pixel {index} is not below class count {classes}")]
    LabelOutOfRange { label: u8, index: usize, classes: usize },
    #[error("class count {0} exceeds the encodable maximum of {MAX_CLASSES}")]
    TooManyClasses(usize),
    #[error("class {0} has no labeled pixels")]
    EmptyClass(usize),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RasterError + '_ {
    move |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A `width x height x bands` grid of 8-bit intensities, band-sequential.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultibandRaster {
    width: usize,
    height: usize,
    bands: usize,
    data: Vec<u8>,
}

impl MultibandRaster {
    pub fn new(width: usize, height: usize, bands: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        let expected = width * height * bands;
        if data.len() != expected {
            return Err(RasterError::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if bands == 0 {
            return Err(RasterError::Invalid("raster must have at least one band".into()));
        }
        Ok(Self {
            width,
            height,
            bands,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, bands: usize) -> Self {
        Self::new(width, height, bands, vec![0; width * height * bands]).expect("consistent size")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> u8 {
        self.data[band * self.pixel_count() + row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, band: usize, value: u8) {
        let n = self.pixel_count();
        self.data[band * n + row * self.width + col] = value;
    }

    /// Feature vector of the pixel at row-major index `index`.
    pub fn pixel_features<T: Scalar>(&self, index: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.bands);
        self.pixel_features_into(index, &mut out);
        out
    }

    pub fn pixel_features_into<T: Scalar>(&self, index: usize, out: &mut Vec<T>) {
        let n = self.pixel_count();
        out.clear();
        out.extend((0..self.bands).map(|b| T::from_u8(self.data[b * n + index]).unwrap()));
    }
}

/// Single-band class-index raster. Used for ground truth and classifier output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    width: usize,
    height: usize,
    class_count: usize,
    labels: Vec<u8>,
}

/// Ground truth is a class map whose only sentinel is [`UNLABELED`].
pub type GroundTruth = ClassMap;

impl ClassMap {
    pub fn new(width: usize, height: usize, class_count: usize, labels: Vec<u8>) -> Result<Self, RasterError> {
        if class_count > MAX_CLASSES {
            return Err(RasterError::TooManyClasses(class_count));
        }
        if labels.len() != width * height {
            return Err(RasterError::SizeMismatch {
                expected: width * height,
                actual: labels.len(),
            });
        }
        for (index, &label) in labels.iter().enumerate() {
            if label != UNLABELED && label != OUTLIER && label as usize >= class_count {
                return Err(RasterError::LabelOutOfRange {
                    label,
                    index,
                    classes: class_count,
                });
            }
        }
        Ok(Self {
            width,
            height,
            class_count,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    /// Class index at `index`, or `None` for sentinels.
    #[inline]
    pub fn class_at(&self, index: usize) -> Option<usize> {
        let l = self.labels[index];
        if l == UNLABELED || l == OUTLIER {
            None
        } else {
            Some(l as usize)
        }
    }

    pub fn same_shape(&self, raster: &MultibandRaster) -> bool {
        self.width == raster.width && self.height == raster.height
    }

    fn to_raster(&self) -> MultibandRaster {
        MultibandRaster {
            width: self.width,
            height: self.height,
            bands: 1,
            data: self.labels.clone(),
        }
    }
}

/// One training pixel: its band values and class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    pub features: Vec<T>,
    pub label: usize,
}

impl<T> AsRef<[T]> for LabeledSample<T> {
    fn as_ref(&self) -> &[T] {
        &self.features
    }
}

/// Resolves `foo`, `foo.hdr` or `foo.bsq` into the `(hdr, bsq)` pair.
pub fn file_pair(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("hdr") | Some("bsq") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut hdr = stem.clone().into_os_string();
    hdr.push(".hdr");
    let mut bsq = stem.into_os_string();
    bsq.push(".bsq");
    (hdr.into(), bsq.into())
}

#[derive(Debug, Default)]
struct Header {
    width: usize,
    height: usize,
    bands: usize,
    classes: Option<usize>,
}

fn parse_header(path: &Path, text: &str) -> Result<Header, RasterError> {
    let bad = |reason: String| RasterError::Header {
        path: path.to_path_buf(),
        reason,
    };
    let mut fields = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got `{line}`")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let count = |key: &str| -> Result<usize, RasterError> {
        fields
            .get(key)
            .ok_or_else(|| bad(format!("missing `{key}`")))?
            .parse()
            .map_err(|_| bad(format!("`{key}` is not a non-negative integer")))
    };
    let dtype = fields.get("dtype").map(String::as_str).unwrap_or("u8");
    if dtype != "u8" {
        return Err(RasterError::UnsupportedDtype(dtype.to_string()));
    }
    let layout = fields.get("layout").map(String::as_str).unwrap_or("bsq");
    if layout != "bsq" {
        return Err(RasterError::UnsupportedLayout(layout.to_string()));
    }
    let classes = if fields.contains_key("classes") {
        Some(count("classes")?)
    } else {
        None
    };
    Ok(Header {
        width: count("width")?,
        height: count("height")?,
        bands: count("bands")?,
        classes,
    })
}

fn header_text(width: usize, height: usize, bands: usize, classes: Option<usize>) -> String {
    let mut s = format!("width={width}\nheight={height}\nbands={bands}\ndtype=u8\nlayout=bsq\n");
    if let Some(c) = classes {
        s.push_str(&format!("classes={c}\n"));
    }
    s
}

fn read_pair(path: &Path) -> Result<(Header, Vec<u8>), RasterError> {
    let (hdr, bsq) = file_pair(path);
    let text = fs::read_to_string(&hdr).map_err(io_err(&hdr))?;
    let header = parse_header(&hdr, &text)?;
    let data = fs::read(&bsq).map_err(io_err(&bsq))?;
    let expected = header.width * header.height * header.bands;
    if data.len() != expected {
        return Err(RasterError::SizeMismatch {
            expected,
            actual: data.len(),
        });
    }
    Ok((header, data))
}

fn write_pair(path: &Path, header: &str, data: &[u8]) -> Result<(), RasterError> {
    let (hdr, bsq) = file_pair(path);
    fs::write(&bsq, data).map_err(io_err(&bsq))?;
    fs::write(&hdr, header).map_err(io_err(&hdr))?;
    Ok(())
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<MultibandRaster, RasterError> {
    let (h, data) = read_pair(path.as_ref())?;
    MultibandRaster::new(h.width, h.height, h.bands, data)
}

pub fn write_raster(path: impl AsRef<Path>, raster: &MultibandRaster) -> Result<(), RasterError> {
    let header = header_text(raster.width, raster.height, raster.bands, None);
    write_pair(path.as_ref(), &header, &raster.data)
}

/// Reads a class map. Without a `classes` header line the class count is
/// inferred as one more than the largest non-sentinel label.
pub fn read_class_map(path: impl AsRef<Path>) -> Result<ClassMap, RasterError> {
    let (h, data) = read_pair(path.as_ref())?;
    if h.bands != 1 {
        return Err(RasterError::DimensionMismatch(format!(
            "class map must have 1 band, found {}",
            h.bands
        )));
    }
    let classes = h.classes.unwrap_or_else(|| {
        data.iter()
            .filter(|&&l| l != UNLABELED && l != OUTLIER)
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0)
    });
    ClassMap::new(h.width, h.height, classes, data)
}

pub fn write_class_map(path: impl AsRef<Path>, map: &ClassMap) -> Result<(), RasterError> {
    let r = map.to_raster();
    let header = header_text(r.width, r.height, 1, Some(map.class_count));
    write_pair(path.as_ref(), &header, &r.data)
}

/// Draws up to `per_class` labeled pixels from each class without replacement.
///
/// Algorithm: a single ChaCha8 stream seeded with `seed` is consumed class by
/// class in ascending class order. For each class the labeled pixel indices are
/// collected in row-major order, Fisher-Yates shuffled, and the first
/// `min(per_class, available)` taken. Samples come out grouped by class.
pub fn sample_training_set<T: Scalar>(
    raster: &MultibandRaster,
    truth: &GroundTruth,
    per_class: usize,
    seed: u64,
) -> Result<Vec<LabeledSample<T>>, RasterError> {
    if !truth.same_shape(raster) {
        return Err(RasterError::DimensionMismatch(format!(
            "raster is {}x{}, ground truth is {}x{}",
            raster.width, raster.height, truth.width, truth.height
        )));
    }
    if per_class == 0 {
        return Ok(Vec::new());
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); truth.class_count];
    for (i, &l) in truth.labels.iter().enumerate() {
        if (l as usize) < truth.class_count && l != UNLABELED && l != OUTLIER {
            by_class[l as usize].push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (class, mut indices) in by_class.into_iter().enumerate() {
        if indices.is_empty() {
            return Err(RasterError::EmptyClass(class));
        }
        if indices.len() < per_class {
            log::warn!(
                "class {class}: only {} labeled pixels available, {per_class} requested",
                indices.len()
            );
        }
        indices.shuffle(&mut rng);
        out.extend(indices.into_iter().take(per_class).map(|i| LabeledSample {
            features: raster.pixel_features(i),
            label: class,
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_band_sequential_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("tiny");
        fs::write(
            stem.with_extension("hdr"),
            "width=2\nheight=2\nbands=1\ndtype=u8\nlayout=bsq\n",
        )
        .unwrap();
        fs::write(stem.with_extension("bsq"), [0u8, 1, 2, 3]).unwrap();
        let r = read_raster(&stem).unwrap();
        assert_eq!(r.get(1, 1, 0), 3);
        assert_eq!(r.get(0, 1, 0), 1);
    }

    #[test]
    fn short_data_file_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("short");
        fs::write(
            stem.with_extension("hdr"),
            "width=512\nheight=512\nbands=7\ndtype=u8\nlayout=bsq\n",
        )
        .unwrap();
        fs::write(stem.with_extension("bsq"), vec![0u8; 1000]).unwrap();
        assert!(matches!(read_raster(&stem), Err(RasterError::SizeMismatch { .. })));
    }

    #[test]
    fn rejects_other_bit_depths_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("deep");
        fs::write(
            stem.with_extension("hdr"),
            "width=1\nheight=1\nbands=1\ndtype=u16\nlayout=bsq\n",
        )
        .unwrap();
        fs::write(stem.with_extension("bsq"), [0u8, 0]).unwrap();
        assert!(matches!(read_raster(&stem), Err(RasterError::UnsupportedDtype(_))));
        assert!(matches!(
            read_raster(dir.path().join("nope")),
            Err(RasterError::Io { .. })
        ));
    }

    #[test]
    fn file_pair_accepts_either_extension() {
        let (h, b) = file_pair("a/scene.hdr");
        assert_eq!(h, PathBuf::from("a/scene.hdr"));
        assert_eq!(b, PathBuf::from("a/scene.bsq"));
        assert_eq!(file_pair("scene").1, PathBuf::from("scene.bsq"));
    }

    #[test]
    fn class_map_round_trip_keeps_class_count() {
        let dir = tempfile::tempdir().unwrap();
        let m = ClassMap::new(3, 1, 6, vec![0, UNLABELED, OUTLIER]).unwrap();
        write_class_map(dir.path().join("m"), &m).unwrap();
        assert_eq!(read_class_map(dir.path().join("m.bsq")).unwrap(), m);
    }

    #[test]
    fn class_map_rejects_out_of_range_labels() {
        assert!(matches!(
            ClassMap::new(2, 1, 2, vec![0, 2]),
            Err(RasterError::LabelOutOfRange { label: 2, .. })
        ));
    }

    fn striped(width: usize, height: usize, classes: usize) -> (MultibandRaster, GroundTruth) {
        let n = width * height;
        let mut data = Vec::with_capacity(n * 2);
        for b in 0..2 {
            data.extend((0..n).map(|i| ((i * (b + 3)) % 251) as u8));
        }
        let labels = (0..n).map(|i| (i % classes) as u8).collect();
        (
            MultibandRaster::new(width, height, 2, data).unwrap(),
            ClassMap::new(width, height, classes, labels).unwrap(),
        )
    }

    #[test]
    fn sampling_counts_and_labels() {
        let (r, gt) = striped(40, 40, 4);
        let s = sample_training_set::<f64>(&r, &gt, 100, 9).unwrap();
        assert_eq!(s.len(), 400);
        for sample in &s {
            let idx = (0..r.pixel_count())
                .find(|&i| r.pixel_features::<f64>(i) == sample.features && gt.class_at(i) == Some(sample.label));
            assert!(idx.is_some());
        }
        assert!(sample_training_set::<f64>(&r, &gt, 0, 9).unwrap().is_empty());
    }

    #[test]
    fn sampling_takes_everything_when_short() {
        let (r, mut gt) = striped(10, 10, 2);
        for i in 0..100 {
            if i % 2 == 1 && i > 10 {
                gt.labels[i] = UNLABELED;
            }
        }
        let s = sample_training_set::<f32>(&r, &gt, 30, 1).unwrap();
        assert_eq!(s.iter().filter(|x| x.label == 0).count(), 30);
        assert_eq!(s.iter().filter(|x| x.label == 1).count(), 5);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let (r, gt) = striped(30, 30, 3);
        let a = sample_training_set::<f64>(&r, &gt, 50, 42).unwrap();
        let b = sample_training_set::<f64>(&r, &gt, 50, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_rejects_empty_class() {
        let (r, _) = striped(4, 4, 2);
        let gt = ClassMap::new(4, 4, 3, vec![0; 16]).unwrap();
        assert!(matches!(
            sample_training_set::<f64>(&r, &gt, 1, 0),
            Err(RasterError::EmptyClass(1))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn write_read_round_trip(w in 1usize..20, h in 1usize..20, bands in 1usize..5, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<u8> = (0..w * h * bands).map(|_| rng.random()).collect();
            let r = MultibandRaster::new(w, h, bands, data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt");
            write_raster(&p, &r).unwrap();
            prop_assert_eq!(read_raster(&p).unwrap(), r);
        }
    }
}
