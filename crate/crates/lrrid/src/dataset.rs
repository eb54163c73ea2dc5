//! Image-set ingestion, preprocessing, synthetic corruption, seeded
//! train/test splits, and dictionary initialization.
//!
//! Dataset directories hold one subdirectory per subject containing
//! grayscale images (PGM, PNG, JPEG, or BMP). Subjects and files are read
//! in sorted name order. Expected shapes:
//! - `orl`: 40 subjects with 10 images each;
//! - `extended_yale_b`: 38 subjects with 59 to 64 images each;
//! - `ar`: 26 images per subject named `<anything>-<index>.<ext>` with
//!   index 1..=26 following the usual AR convention (1-13 session one,
//!   14-26 session two; within a session 1-7 unobscured, 8-10 sunglasses,
//!   11-13 scarf).
//!
//! Every randomized operation takes an explicit seed and replays
//! bit-identically.

use std::fs;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::LabelMatrix;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::prox;

/// A grayscale image with intensities in `[0, v_max]` of its set.
/// Pixels are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), height * width);
        Image { height, width, pixels }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image::new(height, width, vec![0.0; height * width])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.pixels[r * self.width + c] = v;
    }

    /// Resizes by averaging over source bins (plain area interpolation).
    /// Exact identity when the target equals the source size; upscaling
    /// replicates rows/columns.
    pub fn resize_area(&self, height: usize, width: usize) -> Image {
        let (src_h, src_w) = (self.height, self.width);
        let mut out = Image::zeros(height, width);
        for r in 0..height {
            let r0 = r * src_h / height;
            let r1 = (((r + 1) * src_h).div_ceil(height)).clamp(r0 + 1, src_h);
            for c in 0..width {
                let c0 = c * src_w / width;
                let c1 = (((c + 1) * src_w).div_ceil(width)).clamp(c0 + 1, src_w);
                let mut acc = 0.0;
                for rr in r0..r1 {
                    for cc in c0..c1 {
                        acc += self.get(rr, cc);
                    }
                }
                out.set(r, c, acc / ((r1 - r0) * (c1 - c0)) as f64);
            }
        }
        out
    }
}

/// Session/condition tag attached to AR images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArTag {
    /// 1 or 2.
    pub session: u8,
    pub condition: ArCondition,
    /// Position inside the session, 1..=13.
    pub within_session: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArCondition {
    Unobscured,
    Sunglasses,
    Scarf,
}

/// A labeled collection of same-sized grayscale images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub images: Vec<Image>,
    /// Class index per image, in `[0, n_classes)`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Largest representable intensity (255 for 8-bit sources).
    pub v_max: f64,
    /// Present only for the AR layout.
    pub ar_tags: Option<Vec<ArTag>>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Common (height, width); errors when images disagree.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let first = self
            .images
            .first()
            .ok_or_else(|| Error::argument("image set is empty"))?;
        let hw = (first.height, first.width);
        for (i, img) in self.images.iter().enumerate() {
            if (img.height, img.width) != hw {
                return Err(Error::argument(format!(
                    "image {i} is {}x{}, expected {}x{}",
                    img.height, img.width, hw.0, hw.1
                )));
            }
        }
        Ok(hw)
    }

    /// Image indices grouped by class.
    pub fn per_class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_classes];
        for (i, &c) in self.labels.iter().enumerate() {
            groups[c].push(i);
        }
        groups
    }

    /// New set holding the given image indices (in the given order).
    pub fn subset(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            v_max: self.v_max,
            ar_tags: self
                .ar_tags
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Orl,
    ExtendedYaleB,
    Ar,
}

/// Geometry transform applied uniformly to a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreprocessTarget {
    /// Center crop to the given size.
    Crop { height: usize, width: usize },
    /// Block-average over `factor x factor` tiles; trailing rows/columns
    /// that do not fill a tile are dropped.
    Downsample { factor: usize },
    /// Area-average to an explicit size (must not exceed the source).
    DownsampleTo { height: usize, width: usize },
}

/// What corruption to apply; fractions are validated to `[0, 1]` by the
/// constructors.
#[derive(Debug, Clone)]
pub enum CorruptionKind {
    None,
    /// Paste a square patch covering `fraction` of the image area at a
    /// uniformly random location fully inside the image. The occluder is
    /// area-resized to the patch size.
    BlockOcclusion { fraction: f64, occluder: Image },
    /// Replace `round(fraction * pixels)` distinct pixel positions with
    /// independent uniform draws from `[0, v_max]`.
    UniformNoise { fraction: f64 },
}

#[derive(Debug, Clone)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        CorruptionSpec { kind: CorruptionKind::None, seed: 0 }
    }

    pub fn block_occlusion(fraction: f64, occluder: Image, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::argument(format!(
                "occlusion fraction {fraction} outside [0, 1]"
            )));
        }
        Ok(CorruptionSpec {
            kind: CorruptionKind::BlockOcclusion { fraction, occluder },
            seed,
        })
    }

    pub fn uniform_noise(fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::argument(format!(
                "noise fraction {fraction} outside [0, 1]"
            )));
        }
        Ok(CorruptionSpec {
            kind: CorruptionKind::UniformNoise { fraction },
            seed,
        })
    }
}

/// Per-class train/test counts plus the seed driving the selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_per_class: usize,
    /// `None` assigns every remaining image of the class to the test set.
    pub test_per_class: Option<usize>,
    pub seed: u64,
    pub trial: usize,
}

const IMAGE_EXTENSIONS: &[&str] = &["pgm", "ppm", "pnm", "pbm", "png", "jpg", "jpeg", "bmp"];

/// Loads a dataset directory, validating it against the layout.
pub fn load_dataset(root: &Path, layout: Layout) -> Result<ImageSet> {
    if !root.is_dir() {
        return Err(Error::Ingestion(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let mut subject_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subject_dirs.sort();
    if subject_dirs.is_empty() {
        return Err(Error::Ingestion(format!(
            "no subject directories under {}",
            root.display()
        )));
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut ar_tags = Vec::new();
    let mut counts = Vec::new();

    for (class, dir) in subject_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                        .unwrap_or(false)
            })
            .collect();
        files.sort();
        counts.push((dir.clone(), files.len()));
        for file in &files {
            let img = image::open(file).map_err(|e| {
                Error::Ingestion(format!("cannot read {}: {e}", file.display()))
            })?;
            let gray = img.to_luma8();
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            let pixels = gray.into_raw().into_iter().map(f64::from).collect();
            images.push(Image::new(h, w, pixels));
            labels.push(class);
            if layout == Layout::Ar {
                ar_tags.push(parse_ar_tag(dir, file)?);
            }
        }
    }

    validate_layout_counts(layout, &counts)?;

    let set = ImageSet {
        images,
        labels,
        n_classes: subject_dirs.len(),
        v_max: 255.0,
        ar_tags: (layout == Layout::Ar).then_some(ar_tags),
    };
    set.dims().map_err(|e| Error::Ingestion(e.to_string()))?;
    Ok(set)
}

fn parse_ar_tag(subject_dir: &Path, file: &Path) -> Result<ArTag> {
    let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let index: u32 = stem
        .rsplit('-')
        .next()
        .and_then(|t| t.parse().ok())
        .filter(|&i| (1..=26).contains(&i))
        .ok_or_else(|| {
            Error::Ingestion(format!(
                "subject {}: file {} lacks a session index 1..=26 in its name",
                subject_dir.display(),
                file.display()
            ))
        })?;
    let (session, within) = if index <= 13 { (1, index) } else { (2, index - 13) };
    let condition = match within {
        1..=7 => ArCondition::Unobscured,
        8..=10 => ArCondition::Sunglasses,
        _ => ArCondition::Scarf,
    };
    Ok(ArTag {
        session,
        condition,
        within_session: within as u8,
    })
}

fn validate_layout_counts(layout: Layout, counts: &[(PathBuf, usize)]) -> Result<()> {
    let (expected_subjects, range): (usize, (usize, usize)) = match layout {
        Layout::Orl => (40, (10, 10)),
        Layout::ExtendedYaleB => (38, (59, 64)),
        Layout::Ar => (counts.len(), (26, 26)),
    };
    if counts.len() != expected_subjects {
        return Err(Error::Ingestion(format!(
            "{:?} layout expects {} subjects, found {}",
            layout,
            expected_subjects,
            counts.len()
        )));
    }
    let offenders: Vec<String> = counts
        .iter()
        .filter(|(_, n)| *n < range.0 || *n > range.1)
        .map(|(p, n)| format!("{} ({n} images)", p.display()))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Ingestion(format!(
            "{:?} layout expects {}..={} images per subject; offenders: {}",
            layout,
            range.0,
            range.1,
            offenders.join(", ")
        )));
    }
    Ok(())
}

/// Applies a geometry transform to every image.
pub fn preprocess(set: &ImageSet, target: PreprocessTarget) -> Result<ImageSet> {
    let (h, w) = set.dims()?;
    let apply: Box<dyn Fn(&Image) -> Image> = match target {
        PreprocessTarget::Crop { height, width } => {
            if height > h || width > w || height == 0 || width == 0 {
                return Err(Error::argument(format!(
                    "cannot crop {h}x{w} to {height}x{width}"
                )));
            }
            let r0 = (h - height) / 2;
            let c0 = (w - width) / 2;
            Box::new(move |img: &Image| {
                let mut out = Image::zeros(height, width);
                for r in 0..height {
                    for c in 0..width {
                        out.set(r, c, img.get(r0 + r, c0 + c));
                    }
                }
                out
            })
        }
        PreprocessTarget::Downsample { factor } => {
            if factor == 0 || h / factor == 0 || w / factor == 0 {
                return Err(Error::argument(format!(
                    "cannot downsample {h}x{w} by factor {factor}"
                )));
            }
            let (oh, ow) = (h / factor, w / factor);
            Box::new(move |img: &Image| {
                let mut out = Image::zeros(oh, ow);
                for r in 0..oh {
                    for c in 0..ow {
                        let mut acc = 0.0;
                        for rr in r * factor..(r + 1) * factor {
                            for cc in c * factor..(c + 1) * factor {
                                acc += img.get(rr, cc);
                            }
                        }
                        out.set(r, c, acc / (factor * factor) as f64);
                    }
                }
                out
            })
        }
        PreprocessTarget::DownsampleTo { height, width } => {
            if height > h || width > w || height == 0 || width == 0 {
                return Err(Error::argument(format!(
                    "cannot downsample {h}x{w} to {height}x{width}"
                )));
            }
            Box::new(move |img: &Image| img.resize_area(height, width))
        }
    };
    Ok(ImageSet {
        images: set.images.iter().map(&apply).collect(),
        labels: set.labels.clone(),
        n_classes: set.n_classes,
        v_max: set.v_max,
        ar_tags: set.ar_tags.clone(),
    })
}

/// Applies the corruption to every image; deterministic given the seed.
pub fn corrupt(set: &ImageSet, spec: &CorruptionSpec) -> Result<ImageSet> {
    let (h, w) = set.dims()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = set.clone();
    match &spec.kind {
        CorruptionKind::None => {}
        CorruptionKind::BlockOcclusion { fraction, occluder } => {
            let side = ((fraction * (h * w) as f64).sqrt().round() as usize).min(h).min(w);
            if side > 0 {
                let patch = occluder.resize_area(side, side);
                for img in &mut out.images {
                    let top = rng.random_range(0..=(h - side));
                    let left = rng.random_range(0..=(w - side));
                    for r in 0..side {
                        for c in 0..side {
                            let v = patch.get(r, c).clamp(0.0, set.v_max);
                            img.set(top + r, left + c, v);
                        }
                    }
                }
            }
        }
        CorruptionKind::UniformNoise { fraction } => {
            let k = (fraction * (h * w) as f64).round() as usize;
            if k > 0 {
                for img in &mut out.images {
                    let positions = rand::seq::index::sample(&mut rng, h * w, k);
                    for p in positions {
                        img.pixels[p] = rng.random_range(0.0..=set.v_max);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-class random split without replacement. Selected indices are kept
/// in ascending order inside each class, and classes are emitted in
/// order, so both halves are class-blocked.
pub fn split(set: &ImageSet, spec: &SplitSpec) -> Result<(ImageSet, ImageSet)> {
    if spec.train_per_class == 0 {
        return Err(Error::argument("train_per_class must be at least 1"));
    }
    if spec.test_per_class == Some(0) {
        return Err(Error::argument("test_per_class must be at least 1"));
    }
    let groups = set.per_class_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, group) in groups.iter().enumerate() {
        let n_test = match spec.test_per_class {
            Some(t) => t,
            None => group.len().saturating_sub(spec.train_per_class),
        };
        if n_test == 0 || spec.train_per_class + n_test > group.len() {
            return Err(Error::argument(format!(
                "class {class} has {} images; cannot take {} train + {} test",
                group.len(),
                spec.train_per_class,
                n_test
            )));
        }
        let mut order = group.clone();
        order.shuffle(&mut rng);
        let mut tr: Vec<usize> = order[..spec.train_per_class].to_vec();
        let mut te: Vec<usize> = order[spec.train_per_class..spec.train_per_class + n_test].to_vec();
        tr.sort_unstable();
        te.sort_unstable();
        train_idx.extend(tr);
        test_idx.extend(te);
    }
    Ok((set.subset(&train_idx), set.subset(&test_idx)))
}

/// Flattens every image into a column (column-major pixel order: pixel
/// `(r, c)` lands at row `c*height + r`) and one-hot encodes the labels.
/// With `normalize` set, nonzero columns are scaled to unit l2 norm;
/// all-zero images stay zero with a warning.
pub fn vectorize(set: &ImageSet, normalize: bool) -> Result<(Mat, LabelMatrix)> {
    let (h, w) = set.dims()?;
    let d = h * w;
    let n = set.len();
    let mut y = Mat::zeros(d, n);
    for (j, img) in set.images.iter().enumerate() {
        for c in 0..w {
            for r in 0..h {
                y[(c * h + r, j)] = img.get(r, c);
            }
        }
        if normalize {
            let mut col = y.column_mut(j);
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            } else {
                log::warn!("image {j} is all zeros; leaving its column unnormalized");
            }
        }
    }
    let labels = LabelMatrix::from_labels(&set.labels, set.n_classes)?;
    Ok((y, labels))
}

/// Initial dictionary: `atoms_per_class` training columns chosen
/// uniformly without replacement inside each class (ascending order,
/// classes concatenated in order), projected onto the unit ball.
pub fn init_dictionary(
    train: &Mat,
    labels: &LabelMatrix,
    atoms_per_class: usize,
    seed: u64,
) -> Result<Mat> {
    if atoms_per_class == 0 {
        return Err(Error::argument("atoms_per_class must be at least 1"));
    }
    if train.ncols() != labels.n_samples() {
        return Err(Error::argument(format!(
            "{} training columns but {} labels",
            train.ncols(),
            labels.n_samples()
        )));
    }
    let lab = labels.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for class in 0..labels.n_classes() {
        let group: Vec<usize> = (0..lab.len()).filter(|&j| lab[j] == class).collect();
        if group.len() < atoms_per_class {
            return Err(Error::argument(format!(
                "class {class} has {} training columns, need {atoms_per_class} atoms",
                group.len()
            )));
        }
        let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, group.len(), atoms_per_class)
            .into_iter()
            .map(|i| group[i])
            .collect();
        picks.sort_unstable();
        chosen.extend(picks);
    }
    let mut d = Mat::zeros(train.nrows(), chosen.len());
    for (k, &j) in chosen.iter().enumerate() {
        d.set_column(k, &train.column(j));
    }
    Ok(prox::project_columns_unit_ball(&d))
}

/// Deterministic 64x64 busy grayscale texture used as the default
/// occluder when no occluder image is supplied.
pub fn default_occluder() -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0CC1_0DE5);
    let mut img = Image::zeros(64, 64);
    for r in 0..64 {
        for c in 0..64 {
            let plaid = 127.5 * (1.0 + ((r as f64) * 0.37).sin() * ((c as f64) * 0.23).cos());
            let grain: f64 = rng.random_range(-45.0..45.0);
            img.set(r, c, (plaid + grain).clamp(0.0, 255.0));
        }
    }
    img
}
