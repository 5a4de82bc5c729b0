//! The `sarglr` command line: simulation, pair detection, cumulative
//! monitoring, change-type classification, REACTIV composites and ROC
//! evaluation.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::HashSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::classify::classify_stack;
use crate::error::Error;
use crate::glr::{
    cumulative_monitor, pair_detect, weighted_detect, Domain, ImageStack, WeightKind,
};
use crate::io;
use crate::magviz::{rainbow_colorize, SignedMagnitudeMap, DEFAULT_ALPHA1, DEFAULT_ALPHA2};
use crate::raster::Raster;
use crate::reactiv::{compose_reactiv, hue_legend, ReactivOptions, TimeMode};
use crate::roc::roc_curve;
use crate::speckle::{simulate_changes, ChangeKind, ChangeProfile, ReflectivityMap};

#[derive(Parser)]
#[command(name = "sarglr", version, about = "Multitemporal SAR change detection and visualization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a speckled stack with planted changes from a scene config.
    Simulate {
        /// Scene description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scene's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect changes between two dates of a stack.
    DetectPair {
        /// Stack manifest (TOML).
        #[arg(long)]
        stack: PathBuf,
        /// Reference date (1-based index into the manifest).
        #[arg(long)]
        t: usize,
        /// Compared date (1-based index).
        #[arg(long)]
        t2: usize,
        /// Change probability threshold (default 0.99; exclusive with --far).
        #[arg(long)]
        tau: Option<f64>,
        /// False alarm rate; sets tau = 1 - far.
        #[arg(long)]
        far: Option<f64>,
        #[arg(long, value_enum, default_value_t = WeightsArg::None)]
        weights: WeightsArg,
        /// Raw dissimilarity threshold, required for weighted variants
        /// (their scale has no calibrated default).
        #[arg(long, allow_negative_numbers = true)]
        threshold_s: Option<f64>,
        /// Magnitude normalization bounds.
        #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_ALPHA1)]
        alpha1: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_ALPHA2)]
        alpha2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect every date against a fixed reference date.
    Monitor {
        #[arg(long)]
        stack: PathBuf,
        /// Reference date (1-based index).
        #[arg(long)]
        reference: usize,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        far: Option<f64>,
        #[arg(long, value_enum, default_value_t = WeightsArg::None)]
        weights: WeightsArg,
        #[arg(long, allow_negative_numbers = true)]
        threshold_s: Option<f64>,
        #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_ALPHA1)]
        alpha1: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_ALPHA2)]
        alpha2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify the per-pixel temporal change type of a stack.
    Classify {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        far: Option<f64>,
        /// EWMA smoothing factor in (0, 1]; smoothing is off when absent.
        #[arg(long)]
        ewma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an HSV change-time composite.
    Reactiv {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::MaxChange)]
        mode: ModeArg,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        far: Option<f64>,
        /// Disable the coefficient-of-variation prescreen.
        #[arg(long)]
        no_prescreen: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a score raster against a truth raster; prints AUC=<value>.
    Roc {
        #[arg(long)]
        scores: PathBuf,
        /// Truth raster: nonzero marks changed pixels.
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightsArg {
    None,
    Mean,
    Distance,
}

impl From<WeightsArg> for WeightKind {
    fn from(w: WeightsArg) -> WeightKind {
        match w {
            WeightsArg::None => WeightKind::None,
            WeightsArg::Mean => WeightKind::Mean,
            WeightsArg::Distance => WeightKind::Distance,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    MaxValue,
    Start,
    MaxChange,
    Stop,
}

impl From<ModeArg> for TimeMode {
    fn from(m: ModeArg) -> TimeMode {
        match m {
            ModeArg::MaxValue => TimeMode::MaxValue,
            ModeArg::Start => TimeMode::Start,
            ModeArg::MaxChange => TimeMode::MaxChange,
            ModeArg::Stop => TimeMode::Stop,
        }
    }
}

enum RunError {
    Usage(String),
    Data(String),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Data(e.to_string())
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

/// Parses and executes one CLI invocation; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(RunError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(RunError::Data(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn resolve_tau(tau: Option<f64>, far: Option<f64>) -> RunResult<f64> {
    let tau = match (tau, far) {
        (Some(_), Some(_)) => {
            return Err(RunError::Usage("--tau and --far are exclusive".into()))
        }
        (Some(t), None) => t,
        (None, Some(f)) => 1.0 - f,
        (None, None) => 0.99,
    };
    if !(tau > 0.0 && tau < 1.0) {
        return Err(RunError::Usage(format!(
            "change probability must lie in (0, 1), got {tau}"
        )));
    }
    Ok(tau)
}

/// Output sink that refuses to overwrite any input file.
struct Outputs {
    dir: PathBuf,
    inputs: HashSet<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path, inputs: &[&Path]) -> RunResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| RunError::Data(e.to_string()))?;
        let mut set = HashSet::new();
        for input in inputs {
            if let Ok(c) = input.canonicalize() {
                set.insert(c);
            }
        }
        Ok(Outputs {
            dir: dir.to_path_buf(),
            inputs: set,
        })
    }

    fn path(&self, name: &str) -> RunResult<PathBuf> {
        let path = self.dir.join(name);
        if let Ok(c) = path.canonicalize() {
            if self.inputs.contains(&c) {
                return Err(RunError::Usage(format!(
                    "output {} would overwrite an input file",
                    path.display()
                )));
            }
        }
        Ok(path)
    }

    fn raster(&self, name: &str, raster: &Raster) -> RunResult<()> {
        io::write_raster(&self.path(name)?, raster).map_err(RunError::from)
    }

    fn png_rgb(&self, name: &str, rgb: &crate::raster::RgbRaster) -> RunResult<()> {
        io::write_png_rgb(&self.path(name)?, rgb).map_err(RunError::from)
    }

    fn png_gray(&self, name: &str, data: &[u8], w: usize, h: usize) -> RunResult<()> {
        io::write_png_gray(&self.path(name)?, data, w, h).map_err(RunError::from)
    }
}

fn execute(command: Command) -> RunResult<()> {
    match command {
        Command::Simulate { config, seed, out } => simulate_cmd(&config, seed, &out),
        Command::DetectPair {
            stack,
            t,
            t2,
            tau,
            far,
            weights,
            threshold_s,
            alpha1,
            alpha2,
            out,
        } => detect_pair_cmd(
            &stack,
            t,
            t2,
            resolve_tau(tau, far)?,
            weights,
            threshold_s,
            alpha1,
            alpha2,
            &out,
        ),
        Command::Monitor {
            stack,
            reference,
            tau,
            far,
            weights,
            threshold_s,
            alpha1,
            alpha2,
            out,
        } => monitor_cmd(
            &stack,
            reference,
            resolve_tau(tau, far)?,
            weights,
            threshold_s,
            alpha1,
            alpha2,
            &out,
        ),
        Command::Classify {
            stack,
            tau,
            far,
            ewma,
            seed,
            out,
        } => classify_cmd(&stack, resolve_tau(tau, far)?, ewma, seed, &out),
        Command::Reactiv {
            stack,
            mode,
            tau,
            far,
            no_prescreen,
            out,
        } => reactiv_cmd(&stack, mode, resolve_tau(tau, far)?, no_prescreen, &out),
        Command::Roc { scores, truth } => roc_cmd(&scores, &truth),
    }
}

// ─── simulate ───────────────────────────────────────────────────────────

fn default_looks() -> f64 {
    1.0
}

fn default_background() -> f64 {
    1.0
}

fn default_date_step() -> i64 {
    12
}

fn default_start_date() -> String {
    "2020-01-01".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneConfig {
    width: usize,
    height: usize,
    /// Number of dates M.
    times: usize,
    #[serde(default = "default_looks")]
    looks: f64,
    /// Constant background reflectivity (ignored when `base` is set).
    #[serde(default = "default_background")]
    background: f64,
    /// Optional reflectivity raster used instead of the constant background.
    base: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_start_date")]
    start_date: String,
    #[serde(default = "default_date_step")]
    date_step_days: i64,
    #[serde(default)]
    profiles: Vec<SceneProfile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneProfile {
    kind: ChangeKind,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    /// 1-based onset date.
    onset: usize,
    /// 1-based end date (exclusive for impulse; defaults to M).
    offset: Option<usize>,
    factor: f64,
}

fn simulate_cmd(config: &Path, seed_override: Option<u64>, out: &Path) -> RunResult<()> {
    let text = std::fs::read_to_string(config).map_err(|e| RunError::Data(e.to_string()))?;
    let scene: SceneConfig = toml::from_str(&text)
        .map_err(|e| RunError::Data(format!("{}: {e}", config.display())))?;
    let base = match &scene.base {
        Some(path) => {
            let resolved = if path.is_absolute() {
                path.clone()
            } else {
                config.parent().unwrap_or(Path::new(".")).join(path)
            };
            ReflectivityMap::new(io::read_raster(&resolved)?)?
        }
        None => ReflectivityMap::constant(scene.width, scene.height, scene.background as f32)?,
    };
    let profiles: Vec<ChangeProfile> = scene
        .profiles
        .iter()
        .map(|p| {
            ChangeProfile::rect(
                p.kind,
                p.x,
                p.y,
                p.w,
                p.h,
                p.onset,
                p.offset.unwrap_or(scene.times),
                p.factor,
            )
        })
        .collect();
    let seed = seed_override.unwrap_or(scene.seed);
    let sim = simulate_changes(&base, &profiles, scene.times, scene.looks, seed)?;

    let start = chrono::NaiveDate::parse_from_str(&scene.start_date, "%Y-%m-%d")
        .map_err(|e| RunError::Data(format!("bad start_date {:?}: {e}", scene.start_date)))?;
    let inputs: Vec<&Path> = scene.base.iter().map(|p| p.as_path()).collect();
    let outputs = Outputs::new(out, &inputs)?;

    let mut entries = Vec::new();
    for (t, img) in sim.stack.images().iter().enumerate() {
        let name = format!("img_{:03}.rst", t + 1);
        outputs.raster(&name, img)?;
        entries.push(io::ManifestEntry {
            date: (start + chrono::Days::new((t as i64 * scene.date_step_days) as u64))
                .format("%Y-%m-%d")
                .to_string(),
            path: name.into(),
            enl: scene.looks,
        });
        let truth: Vec<f32> = sim.truth[t].iter().map(|&b| b as u8 as f32).collect();
        outputs.raster(
            &format!("truth_{:03}.rst", t + 1),
            &Raster::from_vec(scene.width, scene.height, truth)?,
        )?;
        outputs.raster(&format!("mult_{:03}.rst", t + 1), &sim.multipliers[t])?;
    }
    io::write_manifest(
        &outputs.path("manifest.toml")?,
        &io::StackManifest {
            domain: Domain::Intensity,
            entries,
        },
    )?;

    // planted class map: the last profile covering a pixel defines its class
    let mut classmap = vec![0u8; scene.width * scene.height];
    for p in &profiles {
        let class = match p.kind {
            ChangeKind::Step => 1,
            ChangeKind::Impulse => 2,
            ChangeKind::Cycle => 3,
            ChangeKind::Complex => 4,
        };
        for &(x, y) in &p.region {
            classmap[y * scene.width + x] = class;
        }
    }
    outputs.raster(
        "classmap.rst",
        &Raster::from_vec(
            scene.width,
            scene.height,
            classmap.iter().map(|&c| c as f32).collect(),
        )?,
    )?;
    Ok(())
}

// ─── detect-pair / monitor ──────────────────────────────────────────────

fn load_intensity_stack(path: &Path) -> RunResult<ImageStack> {
    let stack = io::load_stack(path)?;
    Ok(match stack.domain() {
        Domain::Intensity => stack,
        Domain::Amplitude => stack.to_intensity(),
    })
}

fn date_index(label: &str, value: usize, len: usize) -> RunResult<usize> {
    if value < 1 || value > len {
        return Err(RunError::Usage(format!(
            "--{label} must be a 1-based date index in 1..={len}, got {value}"
        )));
    }
    Ok(value - 1)
}

#[allow(clippy::too_many_arguments)]
fn detect_pair_cmd(
    stack_path: &Path,
    t: usize,
    t2: usize,
    tau: f64,
    weights: WeightsArg,
    threshold_s: Option<f64>,
    alpha1: f64,
    alpha2: f64,
    out: &Path,
) -> RunResult<()> {
    let stack = load_intensity_stack(stack_path)?;
    let ti = date_index("t", t, stack.len())?;
    let t2i = date_index("t2", t2, stack.len())?;
    let outputs = Outputs::new(out, &[stack_path])?;
    match weights {
        WeightsArg::None => {
            let det = pair_detect(&stack, ti, t2i, tau)?;
            write_detection(&outputs, "", &det.similarity.values, det.mask.mask.as_slice(),
                &det.signs, alpha1, alpha2)?;
            outputs.raster("probability.rst", &det.probability.values)?;
        }
        _ => {
            let threshold = threshold_s.ok_or_else(|| {
                RunError::Usage(
                    "--threshold-s is required with --weights mean|distance (no calibrated default)"
                        .into(),
                )
            })?;
            let det = weighted_detect(&stack, ti, t2i, weights.into(), threshold)?;
            write_detection(&outputs, "", &det.values, det.mask.mask.as_slice(), &det.signs,
                alpha1, alpha2)?;
        }
    }
    Ok(())
}

fn write_detection(
    outputs: &Outputs,
    prefix: &str,
    values: &Raster,
    mask: &[bool],
    signs: &[i8],
    alpha1: f64,
    alpha2: f64,
) -> RunResult<()> {
    outputs.raster(&format!("{prefix}similarity.rst"), values)?;
    let mask_raster = Raster::from_vec(
        values.width(),
        values.height(),
        mask.iter().map(|&b| b as u8 as f32).collect(),
    )?;
    outputs.raster(&format!("{prefix}mask.rst"), &mask_raster)?;
    let mask_png: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    outputs.png_gray(
        &format!("{prefix}mask.png"),
        &mask_png,
        values.width(),
        values.height(),
    )?;
    let signed = SignedMagnitudeMap::from_values(values, signs, alpha1, alpha2)?;
    outputs.raster(&format!("{prefix}signed.rst"), &signed.to_raster())?;
    outputs.png_rgb(&format!("{prefix}signed.png"), &rainbow_colorize(&signed))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn monitor_cmd(
    stack_path: &Path,
    reference: usize,
    tau: f64,
    weights: WeightsArg,
    threshold_s: Option<f64>,
    alpha1: f64,
    alpha2: f64,
    out: &Path,
) -> RunResult<()> {
    let stack = load_intensity_stack(stack_path)?;
    let refi = date_index("reference", reference, stack.len())?;
    let outputs = Outputs::new(out, &[stack_path])?;
    match weights {
        WeightsArg::None => {
            let steps = cumulative_monitor(&stack, refi, tau)?;
            for step in &steps {
                let prefix = format!("t{:03}_", step.t + 1);
                write_detection(
                    &outputs,
                    &prefix,
                    &step.detection.similarity.values,
                    &step.detection.mask.mask,
                    &step.detection.signs,
                    alpha1,
                    alpha2,
                )?;
                let signed_mask: Vec<f32> = step
                    .detection
                    .mask
                    .mask
                    .iter()
                    .zip(&step.detection.signs)
                    .map(|(&m, &s)| if m { s as f32 } else { 0.0 })
                    .collect();
                outputs.raster(
                    &format!("{prefix}mask_signed.rst"),
                    &Raster::from_vec(stack.width(), stack.height(), signed_mask)?,
                )?;
                outputs.raster(&format!("{prefix}ratio.rst"), &step.ratio)?;
            }
        }
        _ => {
            let threshold = threshold_s.ok_or_else(|| {
                RunError::Usage(
                    "--threshold-s is required with --weights mean|distance (no calibrated default)"
                        .into(),
                )
            })?;
            for t in 0..stack.len() {
                if t == refi {
                    continue;
                }
                let det = weighted_detect(&stack, refi, t, weights.into(), threshold)?;
                write_detection(
                    &outputs,
                    &format!("t{:03}_", t + 1),
                    &det.values,
                    &det.mask.mask,
                    &det.signs,
                    alpha1,
                    alpha2,
                )?;
            }
        }
    }
    Ok(())
}

// ─── classify / reactiv / roc ───────────────────────────────────────────

fn classify_cmd(
    stack_path: &Path,
    tau: f64,
    ewma: Option<f64>,
    seed: u64,
    out: &Path,
) -> RunResult<()> {
    let stack = load_intensity_stack(stack_path)?;
    let map = classify_stack(&stack, tau, ewma, seed)?;
    let outputs = Outputs::new(out, &[stack_path])?;
    let labels = map.labels_u8();
    outputs.raster(
        "labels.rst",
        &Raster::from_vec(
            map.width(),
            map.height(),
            labels.iter().map(|&v| v as f32).collect(),
        )?,
    )?;
    outputs.png_gray("labels.png", &labels, map.width(), map.height())?;
    outputs.png_rgb("classes.png", &map.to_rgb())?;
    Ok(())
}

fn reactiv_cmd(
    stack_path: &Path,
    mode: ModeArg,
    tau: f64,
    no_prescreen: bool,
    out: &Path,
) -> RunResult<()> {
    let stack = io::load_stack(stack_path)?;
    let comp = compose_reactiv(
        &stack,
        &ReactivOptions {
            mode: mode.into(),
            tau,
            prescreen: !no_prescreen,
        },
    )?;
    let outputs = Outputs::new(out, &[stack_path])?;
    outputs.png_rgb("composite.png", &comp.rgb)?;
    outputs.raster(
        "time_index.rst",
        &Raster::from_vec(
            comp.hue.width(),
            comp.hue.height(),
            comp.time_index.iter().map(|&t| t as f32).collect(),
        )?,
    )?;
    outputs.raster("saturation.rst", &comp.saturation)?;
    outputs.raster("value.rst", &comp.value)?;
    outputs.png_rgb("legend.png", &hue_legend(256, 24))?;
    Ok(())
}

fn roc_cmd(scores_path: &Path, truth_path: &Path) -> RunResult<()> {
    let scores = io::read_raster(scores_path)?;
    let truth_raster = io::read_raster(truth_path)?;
    if !scores.same_shape(&truth_raster) {
        return Err(RunError::Data(format!(
            "scores are {}x{} but truth is {}x{}",
            scores.width(),
            scores.height(),
            truth_raster.width(),
            truth_raster.height()
        )));
    }
    let truth: Vec<bool> = truth_raster.data().iter().map(|&v| v != 0.0).collect();
    let roc = roc_curve(&scores, &truth)?;
    println!("AUC={:.6}", roc.auc);
    Ok(())
}
