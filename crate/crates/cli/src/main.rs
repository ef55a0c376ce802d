use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chaoskit::config::ExperimentConfig;
use chaoskit::experiments::{frontier_rows, frontier_table, FRONTIER_HEADER};
use chaoskit::report::write_table;

#[derive(Parser)]
#[command(name = "chaoskit", version, about = "Mean-field particle system and propagation-of-chaos audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Parse and validate a config file without running it.
    Check { config: PathBuf },
    /// Print the contraction constants over a range of well depths as CSV.
    Frontier {
        #[arg(long)]
        a_min: f64,
        #[arg(long)]
        a_max: f64,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
}

fn init_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("CHAOSKIT_THREADS") {
        let n: usize = v.parse().map_err(|_| format!("CHAOSKIT_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            return Err("CHAOSKIT_THREADS must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<ExperimentConfig, String> {
    ExperimentConfig::from_file(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Check { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}: ok ({})", config.display(), cfg.experiment.name());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match chaoskit::run(&cfg) {
                Ok(summary) => {
                    for c in &summary.checks {
                        println!("{} {}: {} (threshold {}) {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold, c.detail);
                    }
                    println!("{}: {} -> {}", summary.experiment, if summary.pass { "pass" } else { "FAIL" }, cfg.output_dir.display());
                    if summary.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Frontier { a_min, a_max, eps, points, dim } => {
            if !(a_min > 0.0 && a_max > a_min) || points == 0 || !(1..=3).contains(&dim) || !(eps >= 0.0) {
                eprintln!("error: need 0 < a_min < a_max, eps >= 0, points >= 1 and dim in 1..=3");
                return ExitCode::from(2);
            }
            match frontier_table(a_min, a_max, eps, points, dim) {
                Ok((rows, a_star)) => {
                    if let Err(e) = write_table(std::io::stdout().lock(), &FRONTIER_HEADER, &frontier_rows(&rows, eps)) {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                    match a_star {
                        Some(a) => eprintln!("largest feasible a in range: {a}"),
                        None => eprintln!("no feasible a in [{a_min}, {a_max}] at eps = {eps}"),
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
