use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vizattack::harness::run::{EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK};
use vizattack::harness::{exit_code_for, read_manifest, run, verify_manifest, AttackKind, ExperimentConfig, Stage};

/// Train visualization models and attack them.
#[derive(Parser)]
#[command(name = "vizattack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory; defaults to the config's `output`, then `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    OneAttr,
    Invert,
    Overwrite,
    Outlier,
    Blank,
    Shuffle,
    Pipeline,
}

impl From<Kind> for AttackKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::OneAttr => AttackKind::OneAttr,
            Kind::Invert => AttackKind::Invert,
            Kind::Overwrite => AttackKind::Overwrite,
            Kind::Outlier => AttackKind::Outlier,
            Kind::Blank => AttackKind::Blank,
            Kind::Shuffle => AttackKind::Shuffle,
            Kind::Pipeline => AttackKind::Pipeline,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the target projector.
    TrainDr(Common),
    /// Train the target projector and fit a substitute to it.
    FitSubstitute(Common),
    /// Train the chart recommender on the synthetic corpus.
    TrainRec(Common),
    /// Run one attack end to end.
    Attack {
        kind: Kind,
        #[command(flatten)]
        common: Common,
    },
    /// Check a finished run against its manifest.
    Report(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), i32> {
    let mut config = ExperimentConfig::load(&common.config).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| Path::new("runs").join(config.display_name()));
    Ok((config, out))
}

fn execute(config: &ExperimentConfig, stage: Stage, out: &Path) -> i32 {
    match run(config, stage, out) {
        Ok(outcome) => {
            let r = &outcome.report;
            let verdict = if r.success { "succeeded" } else { "failed" };
            match &r.error {
                Some(e) => eprintln!("{}: {verdict}: {e}", r.name),
                None => println!("{}: {verdict}", r.name),
            }
            println!("artifacts in {}", outcome.out_dir.display());
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn report(out: &Path) -> i32 {
    let manifest = match read_manifest(out) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INTERNAL;
        }
    };
    match verify_manifest(out) {
        Ok(bad) if bad.is_empty() => {
            for a in &manifest.artifacts {
                println!("{}  {:>9}  {}", a.sha256, a.bytes, a.name);
            }
            println!("{} artifacts verified ({})", manifest.artifacts.len(), manifest.created);
            EXIT_OK
        }
        Ok(bad) => {
            for name in bad {
                eprintln!("mismatch: {name}");
            }
            EXIT_INTERNAL
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INTERNAL
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, stage) = match &cli.command {
        Command::TrainDr(c) => (c, Some(Stage::TrainDr)),
        Command::FitSubstitute(c) => (c, Some(Stage::FitSubstitute)),
        Command::TrainRec(c) => (c, Some(Stage::TrainRec)),
        Command::Attack { common, .. } => (common, Some(Stage::Attack)),
        Command::Report(c) => (c, None),
    };
    let (mut config, out) = match load(common) {
        Ok(v) => v,
        Err(code) => return ExitCode::from(code as u8),
    };
    if let Command::Attack { kind, .. } = &cli.command {
        config.attack.kind = (*kind).into();
    }
    let code = match stage {
        Some(stage) => execute(&config, stage, &out),
        None => report(&out),
    };
    ExitCode::from(code as u8)
}
