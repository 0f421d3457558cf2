use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ebsim::experiment::{Experiment, RunOptions};

#[derive(Parser)]
#[command(name = "ebsim", version, about = "Emissions-budget autoscaling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file (or a named preset) and write CSV reports.
    Run {
        #[command(flatten)]
        source: Source,
        /// Print the scenarios that would run and exit.
        #[arg(long)]
        dry_run: bool,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only this scenario, e.g. `greedy_budget-DE1`. Repeatable.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Workload seed (overrides `workload.seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Skip the per-second step CSVs.
        #[arg(long)]
        no_steps: bool,
    },
    /// Check an experiment file without running it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Experiment TOML file.
    file: Option<PathBuf>,
    /// Built-in experiment instead of a file (`evaluation`).
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<Experiment, String> {
        match (&self.file, &self.preset) {
            (Some(path), _) => Experiment::load(path).map_err(|e| e.to_string()),
            (None, Some(name)) => Experiment::preset(name).ok_or_else(|| format!("unknown preset `{name}`")),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { source } => {
            let experiment = match source.load() {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let diagnostics = experiment.validate();
            for d in &diagnostics {
                println!("{d}");
            }
            if diagnostics.is_empty() {
                println!("ok: {} scenarios", experiment.scenario_labels().len());
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Command::Run { source, dry_run, out, scenarios, seed, no_steps } => {
            let experiment = match source.load() {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let opts = RunOptions {
                out_dir: out,
                scenarios,
                seed,
                dry_run,
                write_steps: no_steps.then_some(false),
                progress: true,
            };
            match experiment.run(&opts) {
                Ok(outcome) if dry_run => {
                    for label in &outcome.scenarios {
                        println!("{label}");
                    }
                    println!("would write to {}", outcome.out_dir.display());
                    ExitCode::SUCCESS
                }
                Ok(outcome) => {
                    print!("{}", outcome.summary_csv);
                    eprintln!("reports written to {}", outcome.out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
