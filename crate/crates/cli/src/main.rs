mod args;
mod config;

use std::ffi::OsString;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use fuzzy_context::context::default_w_grid;
use fuzzy_context::raster::{read_class_map, read_raster, sample_training_set, write_class_map, write_raster};
use fuzzy_context::rulebase::{load_rulebase, rulebase_to_string, tune_rules};
use fuzzy_context::{
    classify_plane, compare_methods, evaluate, generate_scene, grid_search_w, train, ContextConfig, ContextError,
    Error, EvidenceError, HarnessError, LabelPlane64, Method, RasterError, Rect, RefineError, Rulebase64,
    RulebaseError, SceneSpec, SofmError,
};
use thiserror::Error as ThisError;

use crate::args::{Cli, Command};

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error(transparent)]
    Clap(clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Clap(_) | CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        let usage = CliError::Usage(msg.clone());
        let data = CliError::Data(msg.clone());
        let numeric = CliError::Numeric(msg);
        match e {
            Error::Raster(_) => data,
            Error::Sofm(SofmError::Config(_)) => usage,
            Error::Sofm(_) => data,
            Error::Refine(RefineError::Config(_)) => usage,
            Error::Refine(RefineError::ClassCollapsed(_)) => numeric,
            Error::Refine(_) => data,
            Error::Rulebase(RulebaseError::Config(_) | RulebaseError::ZeroExponent) => usage,
            Error::Rulebase(RulebaseError::NonPositiveValue(_) | RulebaseError::EmptyInput) => numeric,
            Error::Rulebase(_) => data,
            Error::Evidence(EvidenceError::TotalConflict) => numeric,
            Error::Evidence(_) => numeric,
            Error::Context(ContextError::InvalidWeight(_) | ContextError::EmptyGrid | ContextError::RectOutside(_)) => {
                usage
            }
            Error::Context(ContextError::DegenerateEvidence) => numeric,
            Error::Context(_) => data,
            Error::Harness(HarnessError::Scene(_) | HarnessError::UnknownPreset(_) | HarnessError::Parse(_)) => usage,
            Error::Harness(_) => data,
        }
    }
}

macro_rules! from_module_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        })*
    };
}

from_module_error!(RasterError, RulebaseError, ContextError, HarnessError);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("fzctx: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(argv: Vec<OsString>) -> Result<(), CliError> {
    let cmd = Cli::command();
    let (argv, from_file) = config::merge_config_file(&cmd, argv)?;
    let matches = cmd.clone().try_get_matches_from(argv).map_err(CliError::Clap)?;
    let cli = Cli::from_arg_matches(&matches).map_err(CliError::Clap)?;

    eprintln!("fzctx: parameters");
    for line in config::describe(&cmd, &matches, &from_file) {
        eprintln!("  {line}");
    }

    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {} threads: {e}", cli.threads)))?;
    }

    match cli.command {
        Command::Synth(a) => synth(&a, cli.seed),
        Command::Train(a) => train_cmd(&a, cli.seed),
        Command::Tune(a) => tune_cmd(&a, cli.seed),
        Command::Classify(a) => classify_cmd(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Compare(a) => compare_cmd(&a),
        Command::TuneW(a) => tune_w_cmd(&a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn load_rules(path: &Path) -> Result<Rulebase64, CliError> {
    Ok(load_rulebase(path)?)
}

fn check_bands(rb: &Rulebase64, bands: usize) -> Result<(), CliError> {
    if rb.dim != bands {
        return Err(CliError::Data(format!(
            "rulebase expects {} bands, raster has {bands}",
            rb.dim
        )));
    }
    Ok(())
}

fn context(method: Method, w: f64) -> Result<ContextConfig<f64>, CliError> {
    Ok(ContextConfig::new(method, w)?)
}

fn synth(a: &args::SynthArgs, seed: u64) -> Result<(), CliError> {
    let spec = match &a.scene {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            SceneSpec::from_toml(&text)?
        }
        None => SceneSpec::preset(&a.preset)?,
    }
    .with_seed(seed);
    let (raster, truth) = generate_scene(&spec)?;
    write_raster(&a.raster, &raster)?;
    write_class_map(&a.truth, &truth)?;
    println!(
        "scene {}x{}x{} with {} classes written",
        raster.width(),
        raster.height(),
        raster.bands(),
        truth.class_count()
    );
    Ok(())
}

fn train_cmd(a: &args::TrainArgs, seed: u64) -> Result<(), CliError> {
    let raster = read_raster(&a.input.raster)?;
    let truth = read_class_map(&a.input.truth)?;
    let config = a.config(truth.class_count(), seed);
    let (rb, report) = train(&raster, &truth, &config)?;
    write_text(&a.out, &rulebase_to_string(&rb))?;
    println!("rules: {}", report.rule_count);
    println!("training error: {:.2}%", 100.0 * report.training_error_rate);
    println!(
        "training error before tuning: {:.2}%",
        100.0 * report.untuned_error_rate
    );
    println!(
        "samples: {}  sofm nodes: {}  refined prototypes: {}  tuning epochs: {}",
        report.sample_count,
        report.sofm_nodes,
        report.refined_prototypes,
        report.tuning.error_history.len() - 1
    );
    Ok(())
}

fn tune_cmd(a: &args::TuneArgs, seed: u64) -> Result<(), CliError> {
    let rb = load_rules(&a.rulebase)?;
    let raster = read_raster(&a.input.raster)?;
    let truth = read_class_map(&a.input.truth)?;
    check_bands(&rb, raster.bands())?;
    let samples = sample_training_set::<f64>(&raster, &truth, a.input.samples_per_class, seed)?;
    let before = rb.error_rate(&samples);
    let (tuned, report) = tune_rules(&rb, &samples, &a.rules.config())?;
    let after = tuned.error_rate(&samples);
    write_text(&a.out, &rulebase_to_string(&tuned))?;
    let history = &report.error_history;
    println!("rules: {}", tuned.len());
    println!("tuning error: {} -> {}", history[0], history[history.len() - 1]);
    println!("training error: {:.2}% -> {:.2}%", 100.0 * before, 100.0 * after);
    Ok(())
}

fn label_plane(rulebase: &Path, raster: &Path) -> Result<LabelPlane64, CliError> {
    let rb = load_rules(rulebase)?;
    let raster = read_raster(raster)?;
    check_bands(&rb, raster.bands())?;
    Ok(LabelPlane64::compute(&raster, &rb)?)
}

fn classify_cmd(a: &args::ClassifyArgs) -> Result<(), CliError> {
    let config = context(a.method.into(), a.w)?;
    let plane = label_plane(&a.rulebase, &a.raster)?;
    let result = classify_plane(&plane, &config);
    let pixels = plane.width() * plane.height();
    if pixels > 0 && result.conflict_fallbacks == pixels {
        return Err(CliError::Numeric(format!(
            "{}: every pixel's evidence was in total conflict",
            config.method.name()
        )));
    }
    write_class_map(&a.out, &result.map)?;
    println!(
        "{}: {} pixels, {} outliers, {} conflict fallbacks",
        config.method.name(),
        pixels,
        result.outliers,
        result.conflict_fallbacks
    );
    Ok(())
}

fn evaluate_cmd(a: &args::EvaluateArgs) -> Result<(), CliError> {
    let map = read_class_map(&a.map)?;
    let truth = read_class_map(&a.truth)?;
    let report = evaluate(&map, &truth)?;
    if let Some(out) = &a.out {
        write_text(out, &report.to_csv())?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn compare_cmd(a: &args::CompareArgs) -> Result<(), CliError> {
    let m4 = context(Method::M4, a.w)?;
    let plane = label_plane(&a.rulebase, &a.raster)?;
    let truth = read_class_map(&a.truth)?;
    let mut configs = vec![ContextConfig::method(Method::Noncontextual)];
    configs.extend([Method::M1, Method::M2, Method::M3].map(ContextConfig::method));
    configs.push(m4);
    let table = compare_methods(&plane, &truth, &configs)?;
    if let Some(out) = &a.out {
        write_text(out, &table.to_csv())?;
    }
    print!("{}", table.to_text());
    Ok(())
}

fn tune_w_cmd(a: &args::TuneWArgs) -> Result<(), CliError> {
    let plane = label_plane(&a.rulebase, &a.raster)?;
    let truth = read_class_map(&a.truth)?;
    let rect = a.rect.map(|r| r.0).unwrap_or(Rect {
        row: 0,
        col: 0,
        height: plane.height(),
        width: plane.width(),
    });
    let grid = default_w_grid::<f64>();
    let shown: Vec<String> = grid.iter().map(|w| format!("{w:.2}")).collect();
    eprintln!("  w grid = {}", shown.join(","));
    let search = grid_search_w(&plane, &truth, rect, &grid)?;
    if let Some(out) = &a.out {
        write_text(out, &search.to_csv())?;
    }
    println!("best w: {}", search.best_w);
    println!("error at best w: {:.4}%", 100.0 * search.best_error);
    Ok(())
}
