use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dirichlet_lab::{catalog, run_experiment, Config, LabResult, RunOptions};

#[derive(Parser)]
#[command(name = "dirichlet-lab", version, about = "Run and validate stochastic calculus experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config file or bundled experiment id.
    Run {
        config: String,
        /// Output directory; artifacts go to <out>/<id>/.
        #[arg(long, env = "DIRICHLET_LAB_OUT", default_value = "lab-out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// List bundled experiments.
    List,
    /// Check a config against the schema without running it.
    Validate { config: String },
}

fn run(cli: Cli) -> LabResult<u8> {
    match cli.cmd {
        Cmd::Run { config, out, workers, seed_override } => {
            let text = catalog::resolve(&config)?;
            let cfg = Config::from_json(&text)?;
            let res = run_experiment(&cfg, &text, &RunOptions { out_dir: out, workers, seed_override })?;
            for a in &res.analyses {
                println!("[{}] {}: {}", a.verdict, a.name, a.summary);
            }
            println!("overall: {} -> {}", res.verdict, res.dir.display());
            Ok(res.exit_code as u8)
        }
        Cmd::List => {
            for e in catalog::list()? {
                println!("{}\t{}\t{}", e.id, e.description, e.expected_runtime);
            }
            Ok(0)
        }
        Cmd::Validate { config } => {
            let cfg = Config::from_json(&catalog::resolve(&config)?)?;
            println!("ok: {} ({} analyses)", cfg.id, cfg.analyses.len());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // usage errors exit 1: exit 2 is reserved for inconsistent verdicts
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
