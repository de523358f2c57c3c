use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use eitmem_cli::{load, run, Scenario};

/// Run one EIT memory scenario from a TOML config.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out`, default `out` next to the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `scenario`.
    #[arg(long)]
    scenario: Option<Scenario>,
}

/// Exit status when a sweep stops early and only partial outputs exist.
const PARTIAL: u8 = 3;

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.scenario {
        cfg.scenario = Some(s);
    }
    let base = args
        .config
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_default();
    let out = match (&args.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("out"),
    };
    match run(&cfg, &base, &out) {
        Ok(o) => {
            for f in o.files.iter().chain([&o.manifest]) {
                println!("{}", f.display());
            }
            match o.failure {
                None => ExitCode::SUCCESS,
                Some(msg) => {
                    eprintln!("error: {msg} (partial results written)");
                    ExitCode::from(PARTIAL)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
