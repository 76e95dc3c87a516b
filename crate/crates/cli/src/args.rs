use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fuzzy_context::{Method, Rect, RefineConfig, RulebaseConfig, SofmConfig, SpreadInit, TrainConfig64};

#[derive(Debug, Parser)]
#[command(
    name = "fzctx",
    version,
    about = "Fuzzy rule-based contextual classification of multiband rasters"
)]
pub struct Cli {
    /// TOML file of flag values (keys are long flag names). Flags given on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (0 uses every core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Seed for scene synthesis, sampling and SOFM initialization.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene and its ground truth.
    Synth(SynthArgs),
    /// Learn a rulebase from an image and its ground truth.
    Train(TrainArgs),
    /// Tune an existing rulebase on fresh training samples.
    Tune(TuneArgs),
    /// Classify an image with one decision method.
    Classify(ClassifyArgs),
    /// Compare a class map with ground truth.
    Evaluate(EvaluateArgs),
    /// Evaluate every decision method on one image.
    Compare(CompareArgs),
    /// Grid search for the Method 4 neighbor weight.
    TuneW(TuneWArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in scene (patches-large or patches-small).
    #[arg(long, default_value = "patches-large")]
    pub preset: String,
    /// Scene description in TOML; replaces the preset.
    #[arg(long, value_name = "FILE")]
    pub scene: Option<PathBuf>,
    /// Output image (`.hdr`/`.bsq` pair).
    #[arg(long)]
    pub raster: PathBuf,
    /// Output ground truth (`.hdr`/`.bsq` pair).
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Training pixels drawn per class.
    #[arg(long, default_value_t = 200)]
    pub samples_per_class: usize,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    /// Initial spread multiplier.
    #[arg(long, default_value_t = 4.0)]
    pub kw: f64,
    /// Soft-match exponent.
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub q: f64,
    /// Firing strength below which a rule counts as silent.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = SpreadMode::Rms)]
    pub spread_init: SpreadMode,
    /// Gradient step size for tuning.
    #[arg(long, default_value_t = 30.0)]
    pub learning_rate: f64,
    /// Upper bound on tuning epochs (0 disables tuning).
    #[arg(long, default_value_t = 100)]
    pub tune_epochs: usize,
    /// Relative decrease of the tuning error that counts as progress.
    #[arg(long, default_value_t = 1e-4)]
    pub min_improvement: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub spread_floor: f64,
}

impl RuleArgs {
    pub fn config(&self) -> RulebaseConfig<f64> {
        RulebaseConfig {
            kw: self.kw,
            q: self.q,
            epsilon: self.epsilon,
            learning_rate: self.learning_rate,
            max_tune_epochs: self.tune_epochs,
            min_improvement: self.min_improvement,
            spread_floor: self.spread_floor,
            spread_init: self.spread_init.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpreadMode {
    Rms,
    AsPrinted,
}

impl From<SpreadMode> for SpreadInit {
    fn from(m: SpreadMode) -> Self {
        match m {
            SpreadMode::Rms => SpreadInit::Rms,
            SpreadMode::AsPrinted => SpreadInit::AsPrinted,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: SampleArgs,
    /// Output rulebase file.
    #[arg(long)]
    pub out: PathBuf,
    /// SOFM nodes (0: one per class).
    #[arg(long, default_value_t = 0)]
    pub nodes: usize,
    #[arg(long, default_value_t = 20)]
    pub sofm_epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sofm_rate_start: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sofm_rate_end: f64,
    /// Initial neighborhood radius (0: half the node count, at least 1).
    #[arg(long, default_value_t = 0.0)]
    pub sofm_radius_start: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sofm_radius_end: f64,
    /// Global retention factor: a prototype keeps at least N / (k1 * prototypes) points.
    #[arg(long, default_value_t = 2.0)]
    pub k1: f64,
    /// Per-class retention factor: at least N_k / (k2 * prototypes of class k) own-class points.
    #[arg(long, default_value_t = 2.0)]
    pub k2: f64,
    #[arg(long, default_value_t = 20)]
    pub refine_iterations: usize,
    /// Winner-only passes after refinement.
    #[arg(long, default_value_t = 10)]
    pub polish_epochs: usize,
    #[command(flatten)]
    pub rules: RuleArgs,
}

impl TrainArgs {
    pub fn config(&self, classes: usize, seed: u64) -> TrainConfig64 {
        let nodes = if self.nodes == 0 { classes } else { self.nodes };
        let mut sofm = SofmConfig::new(nodes, seed);
        sofm.epochs = self.sofm_epochs;
        sofm.learning_rate_start = self.sofm_rate_start;
        sofm.learning_rate_end = self.sofm_rate_end;
        if self.sofm_radius_start > 0.0 {
            sofm.radius_start = self.sofm_radius_start;
        }
        sofm.radius_end = self.sofm_radius_end;
        TrainConfig64 {
            samples_per_class: self.input.samples_per_class,
            sofm,
            refine: RefineConfig {
                k1: self.k1,
                k2: self.k2,
                max_iterations: self.refine_iterations,
            },
            polish_epochs: self.polish_epochs,
            rulebase: self.rules.config(),
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub input: SampleArgs,
    /// Rulebase to tune.
    #[arg(long)]
    pub rulebase: PathBuf,
    /// Output rulebase file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub rules: RuleArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Noncontextual,
    M1,
    M2,
    M3,
    M4,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Noncontextual => Method::Noncontextual,
            MethodArg::M1 => Method::M1,
            MethodArg::M2 => Method::M2,
            MethodArg::M3 => Method::M3,
            MethodArg::M4 => Method::M4,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub rulebase: PathBuf,
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::M4)]
    pub method: MethodArg,
    /// Neighbor weight for Method 4, in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    /// Output class map.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted class map.
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Write the report as CSV here as well as printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub rulebase: PathBuf,
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Neighbor weight for the Method 4 row.
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    /// Write the table as CSV here as well as printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneWArgs {
    #[arg(long)]
    pub rulebase: PathBuf,
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Search window as `row,col,height,width` (default: whole image).
    #[arg(long)]
    pub rect: Option<RectArg>,
    /// Output CSV of the error curve.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct RectArg(pub Rect);

impl FromStr for RectArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("expected row,col,height,width: {e}"))?;
        match parts[..] {
            [row, col, height, width] => Ok(RectArg(Rect {
                row,
                col,
                height,
                width,
            })),
            _ => Err("expected four comma-separated integers row,col,height,width".into()),
        }
    }
}
