use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sticky_core::experiment::{fixtures, run, simulate, ExperimentConfig, ExperimentError, FIXTURE_NAMES};
use sticky_core::process_sim::io as sim_io;

/// Sticky processes, scenario trees and equivalent martingale measures.
#[derive(Parser)]
#[command(name = "sticky", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded run; same output as the parallel one.
    #[arg(long, global = true)]
    serial: bool,
}

#[derive(Subcommand)]
enum Verb {
    /// Sample the path ensemble.
    Simulate(Input),
    /// Build the scenario tree.
    Tree(Input),
    /// Check stickiness on the tree.
    Sticky(Input),
    /// Build the approximating martingale measure.
    Approximate(Input),
    /// Localized construction over increasing levels.
    Localize(Input),
    /// Dual NA2 certificate for the approximation.
    Certify(Input),
    /// Every configured stage, with a manifest.
    Run(Input),
    /// List the built-in fixtures, or print one.
    Fixtures {
        name: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Toml,
}

#[derive(Args)]
struct Input {
    /// Config file, TOML or JSON by extension.
    #[arg(required_unless_present = "fixture", conflicts_with = "fixture")]
    config: Option<PathBuf>,
    /// Use a built-in fixture instead of a config file.
    #[arg(long)]
    fixture: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Input {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match (&self.config, &self.fixture) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Some(n)) => fixtures(n)?,
            (None, None) => return Err(ExperimentError::Config("no config given".into())),
        };
        if let Some(s) = self.seed {
            cfg.model.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        Ok(cfg)
    }
}

fn require<T>(section: &Option<T>, name: &str) -> Result<(), ExperimentError> {
    match section {
        Some(_) => Ok(()),
        None => Err(ExperimentError::Config(format!("this verb needs a [{name}] section"))),
    }
}

fn execute(verb: Verb) -> Result<(), ExperimentError> {
    let (input, keep) = match verb {
        Verb::Fixtures { name: None, .. } => {
            for n in FIXTURE_NAMES {
                println!("{n}");
            }
            return Ok(());
        }
        Verb::Fixtures { name: Some(n), format } => {
            let cfg = fixtures(&n)?;
            match format {
                Format::Json => println!("{}", cfg.to_json()),
                Format::Toml => print!("{}", cfg.to_toml()),
            }
            return Ok(());
        }
        Verb::Simulate(i) => {
            let cfg = i.load()?;
            cfg.validate()?;
            let ens = simulate(&cfg.model)?;
            std::fs::create_dir_all(&cfg.output.dir)?;
            let f = std::fs::File::create(cfg.output.dir.join("ensemble.bin"))?;
            sim_io::write_binary(&ens, std::io::BufWriter::new(f)).map_err(|e| ExperimentError::Stage { stage: "output", message: e.to_string() })?;
            if cfg.output.ensemble_csv {
                let f = std::fs::File::create(cfg.output.dir.join("ensemble.csv"))?;
                sim_io::write_csv(&ens, std::io::BufWriter::new(f)).map_err(|e| ExperimentError::Stage { stage: "output", message: e.to_string() })?;
            }
            println!("{} paths of {} steps written to {}", ens.n_paths, ens.grid.steps, cfg.output.dir.display());
            return Ok(());
        }
        Verb::Tree(i) => (i, "tree"),
        Verb::Sticky(i) => (i, "sticky"),
        Verb::Approximate(i) => (i, "approximation"),
        Verb::Localize(i) => (i, "localization"),
        Verb::Certify(i) => (i, "na2"),
        Verb::Run(i) => (i, "all"),
    };
    let mut cfg = input.load()?;
    match keep {
        "tree" => {
            cfg.sticky = None;
            cfg.approximation = None;
            cfg.localization = None;
            cfg.na2 = None;
        }
        "sticky" => {
            require(&cfg.sticky, "sticky")?;
            cfg.approximation = None;
            cfg.localization = None;
            cfg.na2 = None;
        }
        "approximation" => {
            require(&cfg.approximation, "approximation")?;
            cfg.localization = None;
            cfg.na2 = None;
        }
        "localization" => {
            require(&cfg.localization, "localization")?;
            cfg.na2 = None;
        }
        "na2" => {
            require(&cfg.na2, "na2")?;
            cfg.localization = None;
        }
        _ => {}
    }
    let manifest = run(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
    manifest.check()
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let threads = if cli.serial { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
