use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use selar_core::experiment::{generate_files, report, run_experiment, thread_limit, write_atomic, GenConfig, RunConfig};
use selar_core::Error;

/// Self-supervised auxiliary learning experiments on heterogeneous graphs.
#[derive(Parser)]
#[command(name = "selar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph as nodes.tsv / edges.tsv / labels.tsv.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every configured seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare completed runs as a table of mean ± std test metrics.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen { config, out } => {
            let cfg = GenConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("data"));
            for path in generate_files(&cfg, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            let outcome = run_experiment(&cfg, &out, thread_limit())?;
            for run in &outcome.seeds {
                println!(
                    "seed {}: best epoch {} valid {} {:.4} test {:.4}",
                    run.seed, run.best_epoch, run.metric, run.best_valid, run.test_at_best
                );
            }
            for (split, r) in &outcome.aggregate {
                println!("{split} {}: {:.4} ± {:.4} (n={})", r.name, r.mean, r.std, r.n);
            }
            println!("{}", outcome.dir.display());
        }
        Command::Report { dirs, csv } => {
            let table = report(&dirs)?;
            if let Some(path) = csv {
                write_atomic(&path, table.to_csv().as_bytes())?;
            }
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
