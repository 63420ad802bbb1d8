use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dfl_sim::cli::{cmd_compare, cmd_run, cmd_toy, exit_code};
use dfl_sim::config::{parse_algorithms, parse_seeds};
use dfl_sim::Result;

#[derive(Parser)]
#[command(name = "dfl-sim", version, about = "Decentralized federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration for one or more seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seed list, e.g. `1,2,3` or `0..5`.
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config value, e.g. `--set collaboration.tau=0.3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run several algorithms on one configuration.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// e.g. `afind_plus,gossip_k(5),local_only`
        #[arg(long)]
        algos: String,
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Three-client cooperation scenario.
    Toy {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out, set } => {
            let seeds = seed.as_deref().map(parse_seeds).transpose()?;
            let (manifest, summaries) = cmd_run(&config, seeds, out.as_deref(), &set)?;
            for s in &summaries {
                println!(
                    "{} seed={} best={:.4} final={:.4}",
                    s.run_id, s.seed, s.best_acc, s.final_acc
                );
            }
            println!("wrote {}", manifest.out_dir.display());
        }
        Command::Compare {
            config,
            algos,
            seeds,
            out,
            set,
        } => {
            let rows = cmd_compare(
                &config,
                &parse_algorithms(&algos)?,
                &parse_seeds(&seeds)?,
                out.as_deref(),
                &set,
            )?;
            for r in &rows {
                println!("{:<20} {}", r.algorithm, r.best_acc);
            }
        }
        Command::Toy { out } => {
            for r in cmd_toy(out.as_deref())? {
                println!(
                    "seed {}: solo {:.3}  coop(1,2) {:.3}  coop(2,3) {:.3}  coop(1,2,3) {:.3}",
                    r.seed, r.solo, r.coop_similar, r.coop_dissimilar, r.coop_all
                );
            }
        }
    }
    Ok(())
}
