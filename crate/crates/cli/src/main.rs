use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sparsepot_cli::{report, run, ReportFormat, RunOptions, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "sparsepot", version, about = "Sparse potential experiments on graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Gnuplot,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out_dir: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Convert the tables of a finished run into plot-ready files.
    Report {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out_dir, seed, threads } => {
            run(&config, &RunOptions { out_dir: out_dir.clone(), seed, threads }).map(|m| {
                println!("{} finished in {:.2} s; outputs in {}", m.kind, m.elapsed_seconds, out_dir.display());
            })
        }
        Command::Report { manifest, format } => {
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
                Format::Gnuplot => ReportFormat::Gnuplot,
            };
            report(&manifest, format).map(|files| {
                for f in files {
                    println!("{}", f.display());
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
