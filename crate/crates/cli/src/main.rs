use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tabrisk::config::PipelineConfig;
use tabrisk::pipeline::{self, Workspace};
use tabrisk::synth::{self, ClassConditionalSpec, GeneratorConfig};

/// Tabular clinical risk modelling pipeline.
#[derive(Parser, Debug)]
#[command(name = "tabrisk", version)]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort CSV.
    Synth(SynthArgs),
    /// Write the builtin demo configuration.
    Init {
        /// Destination of the config file.
        path: PathBuf,
    },
    /// Load or generate the cohort and validate it.
    Ingest,
    /// Split, fit imputation/encoding/scaling on the training partition.
    Preprocess,
    /// Two-stage feature selection.
    Select,
    /// Grid-search CV and final fits.
    Train,
    /// Train and test metric tables with ROC curves.
    Evaluate,
    /// Leave-one-feature-out ablation.
    Ablate,
    /// Accumulated local effects.
    Ale,
    /// Aggregate stage outputs into text tables.
    Report,
    /// Run every stage.
    Run {
        /// Use the builtin synthetic demo instead of --config.
        #[arg(long)]
        demo: bool,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 1535)]
    n: usize,
    #[arg(long, default_value_t = synth::DEFAULT_PREVALENCE)]
    prevalence: f64,
    #[arg(long, default_value_t = 0.0)]
    missingness: f64,
    /// Class-conditional spec (JSON) replacing the builtin one.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = tabrisk::config::DEFAULT_OUTCOME)]
    outcome_column: String,
    /// Output CSV path.
    #[arg(short, long)]
    output: PathBuf,
}

fn load_config(cli: &Cli, demo: bool) -> Result<PipelineConfig> {
    let mut cfg = match (&cli.config, demo) {
        (Some(p), false) => PipelineConfig::load(p)?,
        (None, true) => PipelineConfig::demo(cli.out.clone().unwrap_or_else(|| "tabrisk-out".into()), cli.seed.unwrap_or(2024)),
        (Some(_), true) => anyhow::bail!(tabrisk::Error::Config("--demo and --config are exclusive".into())),
        (None, false) => anyhow::bail!(tabrisk::Error::Config("--config is required".into())),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth_cmd(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let spec: ClassConditionalSpec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| tabrisk::Error::Config(e.to_string()))?
        }
        None => synth::builtin_paper_spec(),
    };
    spec.check()?;
    let gen = GeneratorConfig {
        n_rows: args.n,
        prevalence: args.prevalence,
        seed: cli.seed.unwrap_or(0),
        missingness_rate: args.missingness,
    };
    gen.check()?;
    let frame = synth::generate(&spec, &gen)?;
    tabrisk::cohort::write_csv_file(&frame, &args.output, &args.outcome_column)?;
    println!("wrote {} rows ({} positive) to {}", frame.n_rows(), frame.positives(), args.output.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    let stage = |f: fn(&PipelineConfig, &mut Workspace) -> tabrisk::Result<()>| -> Result<()> {
        let cfg = load_config(cli, false)?;
        let mut ws = Workspace::new(&cfg.output_dir)?;
        f(&cfg, &mut ws)?;
        Ok(())
    };
    match &cli.command {
        Command::Synth(args) => synth_cmd(cli, args),
        Command::Init { path } => {
            let cfg = PipelineConfig::demo(cli.out.clone().unwrap_or_else(|| "tabrisk-out".into()), cli.seed.unwrap_or(2024));
            std::fs::write(path, cfg.to_json()? + "\n")?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Ingest => stage(|c, w| pipeline::stage_ingest(c, w).map(drop)),
        Command::Preprocess => stage(|c, w| pipeline::stage_preprocess(c, w).map(drop)),
        Command::Select => stage(|c, w| pipeline::stage_select(c, w).map(drop)),
        Command::Train => stage(|c, w| pipeline::stage_train(c, w).map(drop)),
        Command::Evaluate => stage(|c, w| {
            let ev = pipeline::stage_evaluate(c, w)?;
            print!("{}", tabrisk::report::metrics_table(&ev.test));
            Ok(())
        }),
        Command::Ablate => stage(|c, w| pipeline::stage_ablate(c, w).map(drop)),
        Command::Ale => stage(|c, w| pipeline::stage_ale(c, w).map(drop)),
        Command::Report => stage(|_, w| {
            print!("{}", pipeline::stage_report(w)?);
            Ok(())
        }),
        Command::Run { demo } => {
            let cfg = load_config(cli, *demo)?;
            let manifest = pipeline::run(&cfg)?;
            let total: f64 = manifest.timings.iter().map(|t| t.seconds).sum();
            println!(
                "wrote {} files to {} in {total:.1}s (config {})",
                manifest.files.len() + 1,
                cfg.output_dir.display(),
                &manifest.config_hash[..12]
            );
            Ok(())
        }
    }
}

/// 2 for invalid input or configuration, 3 for a missing upstream
/// artifact, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tabrisk::Error>() {
            let mut e = e;
            while let tabrisk::Error::Stage { source, .. } = e {
                e = source;
            }
            if matches!(e, tabrisk::Error::MissingArtifact { .. }) {
                return 3;
            }
            if e.is_validation() {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
