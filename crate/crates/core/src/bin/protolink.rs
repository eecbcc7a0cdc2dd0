use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use protolink::config::{Config, RunConfig};
use protolink::{pipeline, plots, Error};

#[derive(Parser)]
#[command(version, about = "Entity linking over a prototype embedding space")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Key-value run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0, global = true)]
    threads: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the prototype space and write it with a manifest.
    BuildIndex,
    /// Write top-k candidates for every corpus mention.
    Link,
    /// Link, rerank and write the evaluation report and series.
    Evaluate,
    /// Render SVG charts from the evaluation series.
    ExportPlots,
}

fn run(cli: &Cli) -> Result<(), Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = Config::load(path)?;
    for o in &cli.overrides {
        cfg.set(o)?;
    }
    let run = RunConfig::from_config(&cfg)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    match cli.command {
        Command::BuildIndex => {
            let m = pipeline::cmd_build_index(&run)?;
            info!("wrote {} rows of dim {} for {} entities", m.rows, m.dim, m.entities);
        }
        Command::Link => {
            let linked = pipeline::cmd_link(&run)?;
            info!("linked {} mentions", linked.len());
        }
        Command::Evaluate => {
            let ev = pipeline::cmd_evaluate(&run)?;
            let r = &ev.report;
            info!(
                "{} mentions, R@1 {:.4}, exact/related/missed {:.4}/{:.4}/{:.4}",
                r.mentions,
                r.baseline.r_at.get(&1).copied().unwrap_or(f64::NAN),
                r.baseline.breakdown.exact,
                r.baseline.breakdown.related,
                r.baseline.breakdown.missed
            );
        }
        Command::ExportPlots => {
            for p in plots::export_plots(&run.paths.output)? {
                info!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
