//! Command-line driver: dataset synthesis, variant training, session
//! inference, and cross-validated evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure,
//! 4 session halted before completion (infer only).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bip_core::dataset::{self, config_hash};
use bip_core::error::Error;
use bip_core::eval::{compare_variants, cross_validate, EvalConfig};
use bip_core::filter::Session;
use bip_core::modelfile;
use bip_core::synth::{self, EdgeCase, ScenarioConfig};
use bip_core::train::{train, TrainParams, Variant};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_HALTED: u8 = 4;

/// Final mean phase at or above this marks a completed session.
const COMPLETION_PHASE: f64 = 0.95;

#[derive(Parser)]
#[command(
    name = "bip",
    about = "Ensemble Bayesian interaction primitives: synthesize datasets, train sparsity-reduced models, run inference sessions, and evaluate variants",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic demonstration dataset with ground truth.
    Synth(SynthArgs),
    /// Train one model variant on a dataset.
    Train(TrainArgs),
    /// Run an inference session against recorded frames or an edge case.
    Infer(InferArgs),
    /// Cross-validate variants and write the comparison report.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file (fields default when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of demonstrations (overrides the config).
    #[arg(long)]
    demos: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `bip synth`.
    #[arg(long)]
    dataset: PathBuf,
    /// Model variant.
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    train_flags: TrainFlags,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Uniform basis functions per channel.
    #[arg(long, default_value_t = 8)]
    basis: usize,
    /// MI estimator bins (default: ceil(sqrt(demo count))).
    #[arg(long)]
    bins: Option<usize>,
    /// Per-step MI improvement threshold.
    #[arg(long, default_value_t = 0.07)]
    mi_threshold: f64,
    /// OLS unexplained-energy stopping tolerance.
    #[arg(long, default_value_t = 1e-4)]
    ols_tolerance: f64,
    /// Uniform OLS candidate centers per force channel.
    #[arg(long, default_value_t = 64)]
    ols_candidates: usize,
    /// Basis width as a multiple of center spacing.
    #[arg(long, default_value_t = 1.0)]
    width_factor: f64,
}

impl TrainFlags {
    fn to_params(&self) -> TrainParams {
        TrainParams {
            basis_per_channel: self.basis,
            width_factor: self.width_factor,
            mi_bins: self.bins,
            mi_threshold: self.mi_threshold,
            ols_tolerance: self.ols_tolerance,
            ols_candidates: self.ols_candidates,
            ..TrainParams::default()
        }
    }
}

#[derive(Args)]
struct InferArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Frame file over the model's raw observed channels.
    #[arg(long, conflicts_with = "edge_case")]
    frames: Option<PathBuf>,
    /// Edge-case scenario name: do-nothing, delay-before-hug,
    /// delay-after-raise, hug-air, hug-no-contact.
    #[arg(long)]
    edge_case: Option<String>,
    /// Scenario config for edge-case generation (defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output trace file.
    #[arg(long)]
    out: PathBuf,
    /// Phase look-ahead offset, >= 0.
    #[arg(long, default_value_t = 0.0)]
    look_ahead: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory produced by `bip synth`.
    #[arg(long)]
    dataset: PathBuf,
    /// Output report directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated variants to compare.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant,
          default_value = "all,mifs,group,group-ols")]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Comma-separated look-ahead offsets.
    #[arg(long, value_delimiter = ',', default_value = "0.0,0.05,0.1")]
    look_ahead: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    train_flags: TrainFlags,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s)
        .ok_or_else(|| format!("unknown variant '{s}' (expected all, mifs, group, group-ols)"))
}

/// Top-level synth configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthConfig {
    n_demos: usize,
    scenario: ScenarioConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n_demos: 121, scenario: ScenarioConfig::default() }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Validation(_)
        | Error::Layout(_)
        | Error::Parse(_)
        | Error::ModelFile(_)
        | Error::Io(_) => EXIT_DATA,
        Error::Basis(_) | Error::Filter(_) | Error::Selection(_) | Error::Eval(_) => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, everything else is usage
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_synth_config(path: Option<&PathBuf>) -> Result<SynthConfig, Error> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        }
        None => Ok(SynthConfig::default()),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<u8, Error> {
    let mut config = load_synth_config(args.config.as_ref())?;
    if let Some(n) = args.demos {
        config.n_demos = n;
    }
    if let Some(seed) = args.seed {
        config.scenario.seed = seed;
    }
    let hash = config_hash(&config)?;
    let dataset = synth::generate_dataset(&config.scenario, config.n_demos)?;
    dataset::write_dataset(&args.out, &dataset, config.scenario.seed, &hash)?;
    let layout = &dataset.layout;
    let count = |m: bip_core::Modality, r: bip_core::Role| {
        layout.channels().iter().filter(|c| c.modality == m && c.role == r).count()
    };
    println!(
        "wrote {} demos to {}: {} input force + {} joint + {} pose + {} output force channels (D = {})",
        dataset.demos.len(),
        args.out.display(),
        count(bip_core::Modality::ContactForce, bip_core::Role::Observed),
        count(bip_core::Modality::JointPosition, bip_core::Role::Controlled),
        count(bip_core::Modality::Pose, bip_core::Role::Observed),
        count(bip_core::Modality::ContactForce, bip_core::Role::Controlled),
        layout.len()
    );
    Ok(0)
}

fn cmd_train(args: TrainArgs) -> Result<u8, Error> {
    let ds = dataset::load_dataset(&args.dataset)?;
    let params = args.train_flags.to_params();
    let model = train(&ds.demos, &ds.layout, args.variant, &params)?;
    #[derive(Serialize)]
    struct TrainStamp<'a> {
        variant: &'a str,
        params: &'a TrainParams,
        dataset_hash: &'a str,
        seed: u64,
    }
    let hash = config_hash(&TrainStamp {
        variant: args.variant.name(),
        params: &params,
        dataset_hash: &ds.manifest.config_hash,
        seed: args.seed,
    })?;
    modelfile::save_model(&args.out, &model, args.seed, &hash)?;
    if let Some(sel) = &model.selection {
        println!("selected {} input force channels", sel.selected.len());
    }
    println!(
        "trained variant {} on {} demos: latent dimension {} ({} channels), wrote {}",
        args.variant.name(),
        ds.demos.len(),
        model.latent_dim(),
        model.layout.len(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_infer(args: InferArgs) -> Result<u8, Error> {
    let (model, meta) = modelfile::load_model(&args.model)?;
    if args.look_ahead < 0.0 {
        return Err(Error::Parse("look-ahead must be >= 0".into()));
    }
    let raw_observed: Vec<String> = model
        .raw_layout
        .observed_indices()
        .iter()
        .map(|&i| model.raw_layout.channel(i).name.clone())
        .collect();
    let raw_frames = match (&args.frames, &args.edge_case) {
        (Some(path), None) => dataset::read_frames(path, &raw_observed)?,
        (None, Some(name)) => {
            let kind = EdgeCase::parse(name).ok_or_else(|| {
                Error::Parse(format!(
                    "unknown edge case '{name}' (expected one of: {})",
                    EdgeCase::ALL.map(|e| e.name()).join(", ")
                ))
            })?;
            let config = match &args.config {
                Some(p) => load_synth_config(Some(p))?.scenario,
                None => ScenarioConfig::default(),
            };
            let plan = synth::plan_layout(&config)?;
            if plan.layout != model.raw_layout {
                return Err(Error::Layout(
                    "edge-case scenario layout does not match the model's training layout".into(),
                ));
            }
            synth::generate_edge_case(kind, &config)?
        }
        _ => return Err(Error::Parse("provide exactly one of --frames or --edge-case".into())),
    };
    let frames = model.reduce_frames(&raw_frames)?;
    let mut session = Session::new(model.make_ensemble()?, args.seed);

    let observed_names: Vec<String> = model
        .layout
        .observed_indices()
        .iter()
        .map(|&i| model.layout.channel(i).name.clone())
        .collect();
    let mut out = String::new();
    out.push_str(&format!("# seed={}\n", args.seed));
    out.push_str(&format!("# config_hash={}\n", meta.config_hash));
    out.push_str(&format!("# look_ahead={}\n", args.look_ahead));
    out.push_str(&format!("# variant={}\n", model.variant.name()));
    out.push_str("step,phase,phase_velocity");
    for c in model.layout.channels() {
        out.push_str(&format!(",decoded_{}", c.name));
    }
    for n in &observed_names {
        out.push_str(&format!(",innovation_{n}"));
    }
    out.push('\n');

    let mut final_phase = 0.0;
    for (step, frame) in frames.iter().enumerate() {
        let outcome = session.step(frame)?;
        let inferred = session.infer(args.look_ahead);
        final_phase = inferred.phase.value;
        out.push_str(&format!("{step},{},{}", inferred.phase.value, inferred.phase.velocity));
        for v in &inferred.decoded {
            out.push_str(&format!(",{v}"));
        }
        for v in &outcome.innovation {
            match v {
                Some(x) => out.push_str(&format!(",{x}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    std::fs::write(&args.out, out)?;
    if final_phase >= COMPLETION_PHASE {
        println!("session completed: final phase {final_phase:.3} over {} steps", frames.len());
        Ok(0)
    } else {
        println!("session halted: final phase {final_phase:.3} over {} steps", frames.len());
        Ok(EXIT_HALTED)
    }
}

fn cmd_eval(args: EvalArgs) -> Result<u8, Error> {
    if args.variants.is_empty() {
        return Err(Error::Parse("at least one variant required".into()));
    }
    let ds = dataset::load_dataset(&args.dataset)?;
    let cfg = EvalConfig {
        folds: args.folds,
        look_aheads: args.look_ahead.clone(),
        seed: args.seed,
        train: args.train_flags.to_params(),
    };
    let mut reports = Vec::new();
    for &variant in &args.variants {
        eprintln!("cross-validating {} ...", variant.name());
        let report = cross_validate(&ds.demos, &ds.layout, variant, &cfg)
            .map_err(|e| Error::Eval(format!("variant {}: {e}", variant.name())))?;
        reports.push(report);
    }
    let comparison = compare_variants(&reports)?;

    std::fs::create_dir_all(&args.out)?;
    #[derive(Serialize)]
    struct EvalStamp<'a> {
        dataset_hash: &'a str,
        cfg: &'a EvalConfig,
        variants: Vec<&'a str>,
    }
    let hash = config_hash(&EvalStamp {
        dataset_hash: &ds.manifest.config_hash,
        cfg: &cfg,
        variants: args.variants.iter().map(|v| v.name()).collect(),
    })?;
    let stamp = format!("# seed={}\n# config_hash={hash}\n", args.seed);
    std::fs::write(
        args.out.join("report_table.tsv"),
        format!("{stamp}{}", comparison.render_table()),
    )?;
    std::fs::write(
        args.out.join("report_summary.txt"),
        format!("{stamp}{}", comparison.render_summary()),
    )?;
    #[derive(Serialize)]
    struct FullReport<'a> {
        seed: u64,
        config_hash: &'a str,
        comparison: &'a bip_core::eval::ComparisonReport,
        reports: &'a [bip_core::eval::EvalReport],
    }
    let full =
        FullReport { seed: args.seed, config_hash: &hash, comparison: &comparison, reports: &reports };
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&full).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    print!("{}", comparison.render_summary());
    println!("wrote report files to {}", args.out.display());
    Ok(0)
}
