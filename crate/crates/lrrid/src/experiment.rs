//! End-to-end benchmark protocols: configuration, multi-trial runs,
//! accuracy aggregation, decomposition-image dumps, and table/plot-data
//! emission.
//!
//! Trial `i` of a run derives its seed as `base_seed + i`; inside a trial,
//! each randomized stage (split, train corruption, test corruption,
//! dictionary init, synthetic generation) draws from its own stream
//! derived from the trial seed, so a replay with the same config is
//! byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, LabelMatrix};
use crate::dataset::{
    self, ArCondition, CorruptionSpec, Image, ImageSet, Layout, PreprocessTarget, SplitSpec,
};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::solver::{self, Hyperparams, SolveResult};

/// Which solver backs the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Full solve with dictionary learning.
    #[default]
    Lrrid,
    /// Fixed dictionary composed of all training columns.
    Lrrs,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lrrid => "lrrid",
            Method::Lrrs => "lrrs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArScenario {
    Sunglasses,
    Scarf,
    Mixed,
}

/// Benchmark protocol. Occlusion/noise levels are fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    /// Random per-class split of ORL, both halves occluded by a block
    /// covering `level` of the image area.
    OrlOcclusion {
        level: f64,
        #[serde(default = "default_five")]
        train_per_class: usize,
        #[serde(default = "default_five")]
        test_per_class: usize,
    },
    /// Extended Yale B at feature dimension 30, 56, or 120 (downsample
    /// factors 32, 24, 16); remaining images per class form the test set.
    EyalebDim {
        dim: usize,
        #[serde(default = "default_thirty_two")]
        train_per_class: usize,
    },
    /// AR disguise scenarios built from the natural sunglasses/scarf
    /// images following the session rules.
    ArScenario { scenario: ArScenario },
    /// AR unobscured session split with uniform pixel noise on both halves.
    ArUniformNoise { level: f64 },
    /// Self-contained separable classes; needs no dataset on disk.
    Synthetic {
        #[serde(default = "default_five")]
        classes: usize,
        #[serde(default = "default_five")]
        train_per_class: usize,
        #[serde(default = "default_five")]
        test_per_class: usize,
        #[serde(default = "default_synth_height")]
        height: usize,
        #[serde(default = "default_synth_width")]
        width: usize,
    },
}

fn default_five() -> usize {
    5
}
fn default_thirty_two() -> usize {
    32
}
fn default_synth_height() -> usize {
    12
}
fn default_synth_width() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub layout: Layout,
    /// Geometry transform; ignored by protocols that fix their own
    /// (Extended Yale B dims and the AR factor-3 downsample).
    #[serde(default)]
    pub preprocess: Option<PreprocessTarget>,
    /// Occluder image for block occlusion; a built-in texture by default.
    #[serde(default)]
    pub occluder: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub method: Method,
    pub protocol: Protocol,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default = "default_five")]
    pub atoms_per_class: usize,
    #[serde(default = "default_eta_ridge")]
    pub eta_ridge: f64,
    #[serde(default = "default_one")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Scale data columns to unit l2 norm before solving.
    #[serde(default = "default_true")]
    pub normalize_columns: bool,
    /// Corrupt at native resolution and downsample afterwards; unset to
    /// flip the order.
    #[serde(default = "default_true")]
    pub corrupt_at_native_resolution: bool,
    /// Write a per-iteration solver trace per trial into the output dir.
    #[serde(default = "default_true")]
    pub write_traces: bool,
    /// Export the fitted classifier per trial into the output dir.
    #[serde(default = "default_true")]
    pub write_models: bool,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
}

fn default_eta_ridge() -> f64 {
    1.0
}
fn default_one() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

/// Outcome of a single trial. `wall_time_s` is informational and kept out
/// of every file output so replays stay byte-identical.
#[derive(Debug, Clone)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub mean_accuracy: f64,
    /// Sample standard deviation over successful trials (0 when fewer
    /// than two).
    pub std_accuracy: f64,
    pub trials_used: usize,
    /// `(trial, error)` pairs for trials that failed numerically.
    pub failures: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<TrialReport>,
    pub summary: Summary,
}

/// Everything one trial feeds the solver and classifier.
#[derive(Debug, Clone)]
pub struct TrialData {
    /// Train columns first, then test columns.
    pub y: Mat,
    pub n_train: usize,
    pub train_labels: LabelMatrix,
    pub test_labels: Vec<usize>,
    /// (height, width) of the vectorized images.
    pub image_dims: (usize, usize),
    pub d_init: Mat,
}

// Per-stage RNG streams inside one trial.
const STREAM_SPLIT: u64 = 0;
const STREAM_CORRUPT_TRAIN: u64 = 1;
const STREAM_CORRUPT_TEST: u64 = 2;
const STREAM_DICT: u64 = 3;
const STREAM_SYNTH: u64 = 4;

/// Mixes a trial seed with a stage stream id (splitmix64 finalizer).
fn derive_seed(trial_seed: u64, stream: u64) -> u64 {
    let mut z = trial_seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trial_seed(config: &ExperimentConfig, trial: usize) -> u64 {
    config.base_seed.wrapping_add(trial as u64)
}

struct PreparedDataset {
    set: Option<ImageSet>,
    occluder: Image,
}

fn required_layout(protocol: &Protocol) -> Option<Layout> {
    match protocol {
        Protocol::OrlOcclusion { .. } => Some(Layout::Orl),
        Protocol::EyalebDim { .. } => Some(Layout::ExtendedYaleB),
        Protocol::ArScenario { .. } | Protocol::ArUniformNoise { .. } => Some(Layout::Ar),
        Protocol::Synthetic { .. } => None,
    }
}

fn validate_config(config: &ExperimentConfig) -> Result<()> {
    if config.trials == 0 {
        return Err(Error::argument("trials must be at least 1"));
    }
    config.hyperparams.validate()?;
    if config.eta_ridge.is_nan() || config.eta_ridge <= 0.0 {
        return Err(Error::argument("eta_ridge must be positive"));
    }
    match config.protocol {
        Protocol::OrlOcclusion { level, .. } | Protocol::ArUniformNoise { level } => {
            if level.is_nan() || !(0.0..=1.0).contains(&level) {
                return Err(Error::argument(format!("level {level} outside [0, 1]")));
            }
        }
        Protocol::EyalebDim { dim, .. } => {
            eyaleb_factor(dim)?;
        }
        _ => {}
    }
    if let Some(layout) = required_layout(&config.protocol) {
        match &config.dataset {
            None => {
                return Err(Error::argument(
                    "this protocol needs a [dataset] section in the config",
                ))
            }
            Some(ds) if ds.layout != layout => {
                return Err(Error::argument(format!(
                    "protocol expects the {layout:?} layout, config says {:?}",
                    ds.layout
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

fn eyaleb_factor(dim: usize) -> Result<usize> {
    match dim {
        30 => Ok(32),
        56 => Ok(24),
        120 => Ok(16),
        other => Err(Error::argument(format!(
            "unsupported Extended Yale B dimension {other}; use 30, 56, or 120"
        ))),
    }
}

fn prepare_dataset(config: &ExperimentConfig) -> Result<PreparedDataset> {
    let occluder = match config.dataset.as_ref().and_then(|d| d.occluder.as_ref()) {
        Some(path) => {
            let img = image::open(path)
                .map_err(|e| Error::Ingestion(format!("cannot read occluder {}: {e}", path.display())))?
                .to_luma8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            Image::new(h, w, img.into_raw().into_iter().map(f64::from).collect())
        }
        None => dataset::default_occluder(),
    };
    let set = match (&config.dataset, required_layout(&config.protocol)) {
        (Some(ds), Some(_)) => Some(dataset::load_dataset(&ds.path, ds.layout)?),
        _ => None,
    };
    Ok(PreparedDataset { set, occluder })
}

/// Effective geometry transform for the run; protocol-pinned targets win
/// over the dataset config.
fn effective_preprocess(config: &ExperimentConfig) -> Result<Option<PreprocessTarget>> {
    Ok(match config.protocol {
        Protocol::EyalebDim { dim, .. } => Some(PreprocessTarget::Downsample {
            factor: eyaleb_factor(dim)?,
        }),
        Protocol::ArScenario { .. } | Protocol::ArUniformNoise { .. } => {
            Some(PreprocessTarget::Downsample { factor: 3 })
        }
        _ => config.dataset.as_ref().and_then(|d| d.preprocess),
    })
}

/// Builds the solver input for one trial (public so the decomposition
/// dump can rebuild exactly what a run saw).
pub fn build_trial_data(config: &ExperimentConfig, trial: usize) -> Result<TrialData> {
    validate_config(config)?;
    let prepared = prepare_dataset(config)?;
    assemble_trial(config, &prepared, trial)
}

fn assemble_trial(
    config: &ExperimentConfig,
    prepared: &PreparedDataset,
    trial: usize,
) -> Result<TrialData> {
    let seed = trial_seed(config, trial);
    let preproc = effective_preprocess(config)?;

    let (train_set, test_set) = match config.protocol {
        Protocol::Synthetic {
            classes,
            train_per_class,
            test_per_class,
            height,
            width,
        } => {
            let set = synthetic_image_set(
                classes,
                train_per_class + test_per_class,
                height,
                width,
                derive_seed(seed, STREAM_SYNTH),
            )?;
            let spec = SplitSpec {
                train_per_class,
                test_per_class: Some(test_per_class),
                seed: derive_seed(seed, STREAM_SPLIT),
                trial,
            };
            dataset::split(&set, &spec)?
        }
        Protocol::OrlOcclusion {
            level,
            train_per_class,
            test_per_class,
        } => {
            let set = prepared.set.as_ref().expect("validated");
            let spec = SplitSpec {
                train_per_class,
                test_per_class: Some(test_per_class),
                seed: derive_seed(seed, STREAM_SPLIT),
                trial,
            };
            let occlusion = |stream| {
                CorruptionSpec::block_occlusion(
                    level,
                    prepared.occluder.clone(),
                    derive_seed(seed, stream),
                )
            };
            split_corrupt_preprocess(
                set,
                &spec,
                Some((occlusion(STREAM_CORRUPT_TRAIN)?, occlusion(STREAM_CORRUPT_TEST)?)),
                preproc,
                config.corrupt_at_native_resolution,
            )?
        }
        Protocol::EyalebDim {
            train_per_class, ..
        } => {
            let set = prepared.set.as_ref().expect("validated");
            let spec = SplitSpec {
                train_per_class,
                test_per_class: None,
                seed: derive_seed(seed, STREAM_SPLIT),
                trial,
            };
            split_corrupt_preprocess(set, &spec, None, preproc, true)?
        }
        Protocol::ArScenario { scenario } => {
            let set = prepared.set.as_ref().expect("validated");
            let (train, test) = ar_scenario_split(set, scenario, derive_seed(seed, STREAM_SPLIT))?;
            let target = preproc.expect("AR protocols pin their preprocess");
            (
                dataset::preprocess(&train, target)?,
                dataset::preprocess(&test, target)?,
            )
        }
        Protocol::ArUniformNoise { level } => {
            let set = prepared.set.as_ref().expect("validated");
            let (train, test) = ar_unobscured_split(set)?;
            let noise = |stream| CorruptionSpec::uniform_noise(level, derive_seed(seed, stream));
            let (train, test) = if config.corrupt_at_native_resolution {
                let train = dataset::corrupt(&train, &noise(STREAM_CORRUPT_TRAIN)?)?;
                let test = dataset::corrupt(&test, &noise(STREAM_CORRUPT_TEST)?)?;
                let target = preproc.expect("AR protocols pin their preprocess");
                (
                    dataset::preprocess(&train, target)?,
                    dataset::preprocess(&test, target)?,
                )
            } else {
                let target = preproc.expect("AR protocols pin their preprocess");
                let train = dataset::preprocess(&train, target)?;
                let test = dataset::preprocess(&test, target)?;
                (
                    dataset::corrupt(&train, &noise(STREAM_CORRUPT_TRAIN)?)?,
                    dataset::corrupt(&test, &noise(STREAM_CORRUPT_TEST)?)?,
                )
            };
            (train, test)
        }
    };

    let (y_train, train_labels) = dataset::vectorize(&train_set, config.normalize_columns)?;
    let (y_test, test_label_matrix) = dataset::vectorize(&test_set, config.normalize_columns)?;
    if y_train.nrows() != y_test.nrows() {
        return Err(Error::argument(
            "train and test images vectorize to different dimensions",
        ));
    }
    if let Protocol::EyalebDim { dim, .. } = config.protocol {
        if y_train.nrows() != dim {
            return Err(Error::argument(format!(
                "downsampling produced {} features, expected {dim}; the source \
                 images are not the standard 192x168 crops",
                y_train.nrows()
            )));
        }
    }
    let dims = train_set.dims()?;
    let n_train = y_train.ncols();
    let mut y = Mat::zeros(y_train.nrows(), n_train + y_test.ncols());
    y.columns_mut(0, n_train).copy_from(&y_train);
    y.columns_mut(n_train, y_test.ncols()).copy_from(&y_test);

    let d_init = match config.method {
        Method::Lrrid => dataset::init_dictionary(
            &y_train,
            &train_labels,
            config.atoms_per_class,
            derive_seed(seed, STREAM_DICT),
        )?,
        Method::Lrrs => y_train.clone(),
    };

    Ok(TrialData {
        y,
        n_train,
        train_labels,
        test_labels: test_label_matrix.labels(),
        image_dims: dims,
        d_init,
    })
}

fn split_corrupt_preprocess(
    set: &ImageSet,
    spec: &SplitSpec,
    corruption: Option<(CorruptionSpec, CorruptionSpec)>,
    preproc: Option<PreprocessTarget>,
    corrupt_native: bool,
) -> Result<(ImageSet, ImageSet)> {
    let maybe_preprocess = |s: &ImageSet| -> Result<ImageSet> {
        match preproc {
            Some(t) => dataset::preprocess(s, t),
            None => Ok(s.clone()),
        }
    };
    if corrupt_native {
        let (mut train, mut test) = dataset::split(set, spec)?;
        if let Some((spec_tr, spec_te)) = &corruption {
            train = dataset::corrupt(&train, spec_tr)?;
            test = dataset::corrupt(&test, spec_te)?;
        }
        Ok((maybe_preprocess(&train)?, maybe_preprocess(&test)?))
    } else {
        let pre = maybe_preprocess(set)?;
        let (mut train, mut test) = dataset::split(&pre, spec)?;
        if let Some((spec_tr, spec_te)) = &corruption {
            train = dataset::corrupt(&train, spec_tr)?;
            test = dataset::corrupt(&test, spec_te)?;
        }
        Ok((train, test))
    }
}

fn ar_groups(
    set: &ImageSet,
    class: usize,
    group: &[usize],
) -> Result<[Vec<usize>; 6]> {
    let tags = set
        .ar_tags
        .as_ref()
        .ok_or_else(|| Error::argument("AR protocol needs the ar layout (session tags missing)"))?;
    let pick = |cond: ArCondition, session: u8| -> Vec<usize> {
        group
            .iter()
            .copied()
            .filter(|&i| tags[i].condition == cond && tags[i].session == session)
            .collect()
    };
    let parts = [
        pick(ArCondition::Unobscured, 1),
        pick(ArCondition::Unobscured, 2),
        pick(ArCondition::Sunglasses, 1),
        pick(ArCondition::Sunglasses, 2),
        pick(ArCondition::Scarf, 1),
        pick(ArCondition::Scarf, 2),
    ];
    let expected = [7usize, 7, 3, 3, 3, 3];
    for (part, &want) in parts.iter().zip(&expected) {
        if part.len() != want {
            return Err(Error::Ingestion(format!(
                "class {class}: expected {expected:?} images per (condition, session), found {:?}",
                parts.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
    }
    Ok(parts)
}

/// Disguise-scenario split: 7 unobscured session-1 images plus 1 (or 2
/// for mixed) randomly chosen occluded session-1 images train; session-2
/// unobscured images and the remaining occluded images test.
fn ar_scenario_split(
    set: &ImageSet,
    scenario: ArScenario,
    seed: u64,
) -> Result<(ImageSet, ImageSet)> {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let groups = set.per_class_indices();
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, group) in groups.iter().enumerate() {
        let [s1_unob, s2_unob, s1_sun, s2_sun, s1_scarf, s2_scarf] =
            ar_groups(set, class, group)?;
        let mut train = s1_unob.clone();
        let mut test = s2_unob.clone();
        let take_occluded = |s1: &[usize], s2: &[usize], rng: &mut rand_chacha::ChaCha8Rng,
                                 train: &mut Vec<usize>, test: &mut Vec<usize>| {
            let chosen = s1[rng.random_range(0..s1.len())];
            train.push(chosen);
            test.extend(s1.iter().copied().filter(|&i| i != chosen));
            test.extend_from_slice(s2);
        };
        match scenario {
            ArScenario::Sunglasses => {
                take_occluded(&s1_sun, &s2_sun, &mut rng, &mut train, &mut test)
            }
            ArScenario::Scarf => {
                take_occluded(&s1_scarf, &s2_scarf, &mut rng, &mut train, &mut test)
            }
            ArScenario::Mixed => {
                take_occluded(&s1_sun, &s2_sun, &mut rng, &mut train, &mut test);
                take_occluded(&s1_scarf, &s2_scarf, &mut rng, &mut train, &mut test);
            }
        }
        train_idx.extend(train);
        test_idx.extend(test);
    }
    Ok((set.subset(&train_idx), set.subset(&test_idx)))
}

/// Uniform-noise protocol split: session-1 unobscured images train,
/// session-2 unobscured images test.
fn ar_unobscured_split(set: &ImageSet) -> Result<(ImageSet, ImageSet)> {
    let groups = set.per_class_indices();
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, group) in groups.iter().enumerate() {
        let [s1_unob, s2_unob, ..] = ar_groups(set, class, group)?;
        train_idx.extend(s1_unob);
        test_idx.extend(s2_unob);
    }
    Ok((set.subset(&train_idx), set.subset(&test_idx)))
}

/// Separable synthetic classes: each class owns a bright textured band on
/// a faint background, with small per-image perturbations.
pub fn synthetic_image_set(
    classes: usize,
    per_class: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<ImageSet> {
    use rand::prelude::*;
    if classes == 0 || per_class == 0 || width == 0 {
        return Err(Error::argument("need at least one class, image, and column"));
    }
    if height < classes {
        return Err(Error::argument(format!(
            "need height >= classes for distinct bands, got {height} < {classes}"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let band = height / classes;
    let mut images = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let mut template = Image::zeros(height, width);
        let r0 = c * band;
        let r1 = if c + 1 == classes { height } else { r0 + band };
        for r in 0..height {
            for col in 0..width {
                let v = if (r0..r1).contains(&r) {
                    180.0 + 60.0 * (((col + 3 * c) as f64) * 0.7).cos().abs()
                } else {
                    20.0 + 10.0 * (((r + 2 * c) as f64) * 0.9).sin().abs()
                };
                template.set(r, col, v.clamp(0.0, 255.0));
            }
        }
        for _ in 0..per_class {
            let mut img = template.clone();
            for p in img.pixels.iter_mut() {
                *p = (*p + rng.random_range(-4.0..4.0)).clamp(0.0, 255.0);
            }
            images.push(img);
            labels.push(c);
        }
    }
    Ok(ImageSet {
        images,
        labels,
        n_classes: classes,
        v_max: 255.0,
        ar_tags: None,
    })
}

/// Runs all trials; numerical failures are logged, recorded in the
/// summary, and excluded from the mean.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    validate_config(config)?;
    let prepared = prepare_dataset(config)?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for trial in 0..config.trials {
        match run_trial(config, &prepared, trial) {
            Ok(report) => reports.push(report),
            Err(e @ Error::Numerical { .. }) => {
                log::warn!(
                    "trial {trial} FAILED numerically and is excluded from the mean: {e}"
                );
                failures.push((trial, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let summary = summarize(&reports, failures);
    Ok(RunOutcome { reports, summary })
}

fn run_trial(
    config: &ExperimentConfig,
    prepared: &PreparedDataset,
    trial: usize,
) -> Result<TrialReport> {
    let started = Instant::now();
    let data = assemble_trial(config, prepared, trial)?;
    let result = solve_trial(config, &data, trial)?;
    let model = classifier::fit(&result.x_train, &data.train_labels, config.eta_ridge)?;
    if config.write_models {
        fs::create_dir_all(&config.output_dir)?;
        model.export(&config.output_dir.join(format!("model_trial{trial}.txt")))?;
    }
    let predicted = classifier::predict(&model, &result.x_test)?;
    let accuracy = classifier::accuracy(&predicted, &data.test_labels);
    Ok(TrialReport {
        trial,
        seed: trial_seed(config, trial),
        accuracy,
        iterations: result.iters_used,
        converged: result.converged,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn solve_trial(config: &ExperimentConfig, data: &TrialData, trial: usize) -> Result<SolveResult> {
    let params = &config.hyperparams;
    if config.write_traces {
        fs::create_dir_all(&config.output_dir)?;
        let path = config.output_dir.join(format!("trace_trial{trial}.csv"));
        let mut sink = std::io::BufWriter::new(fs::File::create(path)?);
        let res = match config.method {
            Method::Lrrid => solver::solve_lrrid_traced(
                &data.y,
                data.n_train,
                data.d_init.clone(),
                params,
                &mut sink,
            ),
            Method::Lrrs => solver::solve_lrrs_traced(
                &data.y,
                data.n_train,
                data.d_init.clone(),
                params,
                &mut sink,
            ),
        }?;
        sink.flush()?;
        Ok(res)
    } else {
        match config.method {
            Method::Lrrid => {
                solver::solve_lrrid(&data.y, data.n_train, data.d_init.clone(), params)
            }
            Method::Lrrs => solver::solve_lrrs(&data.y, data.n_train, data.d_init.clone(), params),
        }
    }
}

/// Solves one assembled trial without writing a trace (the decomposition
/// dump path).
pub fn solve_trial_data(config: &ExperimentConfig, data: &TrialData) -> Result<SolveResult> {
    match config.method {
        Method::Lrrid => {
            solver::solve_lrrid(&data.y, data.n_train, data.d_init.clone(), &config.hyperparams)
        }
        Method::Lrrs => {
            solver::solve_lrrs(&data.y, data.n_train, data.d_init.clone(), &config.hyperparams)
        }
    }
}

fn summarize(reports: &[TrialReport], failures: Vec<(usize, String)>) -> Summary {
    let n = reports.len();
    let mean = if n == 0 {
        0.0
    } else {
        reports.iter().map(|r| r.accuracy).sum::<f64>() / n as f64
    };
    let std = if n > 1 {
        let var = reports
            .iter()
            .map(|r| (r.accuracy - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };
    Summary {
        mean_accuracy: mean,
        std_accuracy: std,
        trials_used: n,
        failures,
    }
}

/// Per-trial CSV without wall time (kept out so replays are byte-identical).
pub fn write_trial_reports(reports: &[TrialReport], w: &mut dyn Write) -> Result<()> {
    writeln!(w, "trial,seed,accuracy,iterations,converged")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.trial, r.seed, r.accuracy, r.iterations, r.converged
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    AlignedText,
}

/// One `(level, method)` cell of a results table; `mean_accuracy` is a
/// fraction in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub level: String,
    pub method: String,
    pub mean_accuracy: f64,
}

/// Writes the results table with one row per method and one column per
/// level (levels sorted ascending, numerically when possible), mean
/// accuracy in percent with two decimals.
pub fn emit_table(rows: &[SummaryRow], format: TableFormat, w: &mut dyn Write) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::argument("emit_table needs at least one row"));
    }
    let mut levels: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !levels.contains(&r.level) {
            levels.push(r.level.clone());
        }
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(vals) = numeric {
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        levels = order.into_iter().map(|i| levels[i].clone()).collect();
    } else {
        levels.sort();
    }

    let cell = |method: &str, level: &str| -> String {
        rows.iter()
            .find(|r| r.method == method && r.level == level)
            .map(|r| format!("{:.2}", r.mean_accuracy * 100.0))
            .unwrap_or_default()
    };

    match format {
        TableFormat::Csv => {
            writeln!(w, "method,{}", levels.join(","))?;
            for m in &methods {
                let cells: Vec<String> = levels.iter().map(|l| cell(m, l)).collect();
                writeln!(w, "{},{}", m, cells.join(","))?;
            }
        }
        TableFormat::AlignedText => {
            let mut widths: Vec<usize> = levels.iter().map(|l| l.len().max(6)).collect();
            let method_w = methods.iter().map(String::len).max().unwrap_or(6).max(6);
            for (i, l) in levels.iter().enumerate() {
                for m in &methods {
                    widths[i] = widths[i].max(cell(m, l).len());
                }
                widths[i] = widths[i].max(l.len());
            }
            write!(w, "{:<method_w$}", "method")?;
            for (i, l) in levels.iter().enumerate() {
                write!(w, "  {:>width$}", l, width = widths[i])?;
            }
            writeln!(w)?;
            for m in &methods {
                write!(w, "{:<method_w$}", m)?;
                for (i, l) in levels.iter().enumerate() {
                    write!(w, "  {:>width$}", cell(m, l), width = widths[i])?;
                }
                writeln!(w)?;
            }
        }
    }
    Ok(())
}

/// Writes `(level, mean accuracy %)` pairs sorted ascending by level, for
/// external plotting. Values use the same two-decimal formatting as
/// [`emit_table`].
pub fn plot_noise_curve(points: &[(f64, f64)], w: &mut dyn Write) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::argument("plot_noise_curve needs at least two levels"));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    writeln!(w, "level,mean_accuracy")?;
    for (level, acc) in sorted {
        writeln!(w, "{},{:.2}", level, acc * 100.0)?;
    }
    Ok(())
}

/// Writes, for the first `k` test columns, four grayscale PNGs each:
/// original, best-matching dictionary atom, reconstruction `D*x`, and
/// error column. Each panel is affinely rescaled to the full gray range;
/// a constant panel maps to mid-gray. Pixel order matches
/// [`dataset::vectorize`] (column-major).
pub fn dump_decomposition(
    result: &SolveResult,
    y: &Mat,
    image_dims: (usize, usize),
    k: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let (h, w) = image_dims;
    if h * w != y.nrows() {
        return Err(Error::argument(format!(
            "image dims {h}x{w} do not match the {} data rows",
            y.nrows()
        )));
    }
    let n_test = result.x_test.ncols();
    if k > n_test {
        return Err(Error::argument(format!(
            "asked for {k} dumps but only {n_test} test columns exist"
        )));
    }
    let n_train = result.x_train.ncols();
    let mut paths = Vec::new();
    if k == 0 {
        return Ok(paths);
    }
    fs::create_dir_all(out_dir)?;
    for t in 0..k {
        let col = n_train + t;
        let original: Vec<f64> = y.column(col).iter().copied().collect();
        let recon_col = &result.d * result.x_test.column(t);
        let recon: Vec<f64> = recon_col.iter().copied().collect();
        let error: Vec<f64> = result.e.column(col).iter().copied().collect();
        let code = result.x_test.column(t);
        let mut best_atom = 0;
        for j in 1..code.len() {
            if code[j].abs() > code[best_atom].abs() {
                best_atom = j;
            }
        }
        let atom: Vec<f64> = result.d.column(best_atom).iter().copied().collect();

        for (panel, values) in [
            ("original", &original),
            ("atom", &atom),
            ("reconstruction", &recon),
            ("error", &error),
        ] {
            let path = out_dir.join(format!("test{t:03}_{panel}.png"));
            write_gray_png(&path, values, h, w)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Affine min-max rescale to 0..=255 and PNG write; constant input maps
/// to mid-gray (128).
fn write_gray_png(path: &Path, values: &[f64], h: usize, w: usize) -> Result<()> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let v = values[c * h + r];
            let px = if hi - lo < 1e-12 {
                128u8
            } else {
                ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
            };
            img.put_pixel(c as u32, r as u32, image::Luma([px]));
        }
    }
    img.save(path)?;
    Ok(())
}

/// Replaces the sweepable field of a protocol (occlusion/noise level, or
/// the Extended Yale B dimension).
pub fn with_level(protocol: &Protocol, level: f64) -> Result<Protocol> {
    match *protocol {
        Protocol::OrlOcclusion {
            train_per_class,
            test_per_class,
            ..
        } => Ok(Protocol::OrlOcclusion {
            level,
            train_per_class,
            test_per_class,
        }),
        Protocol::ArUniformNoise { .. } => Ok(Protocol::ArUniformNoise { level }),
        Protocol::EyalebDim {
            train_per_class, ..
        } => Ok(Protocol::EyalebDim {
            dim: level as usize,
            train_per_class,
        }),
        _ => Err(Error::argument("this protocol has no sweepable level")),
    }
}
