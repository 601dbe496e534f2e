use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccgate::experiment::run;

#[derive(Parser)]
#[command(name = "ccgate", version, about = "Coupled-cavity controlled-phase gate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write its CSV tables and JSON manifest.
    Run {
        spec_file: PathBuf,
        /// Output directory.
        #[arg(long, env = "CCGATE_OUT_DIR", default_value = "out")]
        out: PathBuf,
        /// Worker threads for sweeps (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Override the preset named in the spec file.
        #[arg(long)]
        preset: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let Command::Run {
        spec_file,
        out,
        threads,
        preset,
    } = cli.command;
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&spec_file, &out, preset.as_deref()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
