use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hessquot::verify::{run_all, SuiteSizes};
use hessquot_cli::config::{load_config, to_json, RunConfig};
use hessquot_cli::report::{emit_report, report_dir, summary};
use hessquot_cli::run::{run_solve, run_subsolution_check, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER};

#[derive(Parser)]
#[command(name = "hessquot", version, about = "Solver for degenerate Hessian quotient equations with oblique boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one or more problems. Configs sharing a report directory get
    /// one subdirectory each, named after the file.
    Solve {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Run independent configs concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Run the regularization sweep regardless of `problem.regularize`.
    Sweep { config: PathBuf },
    /// Check the config's subsolution expression against the discrete problem.
    CheckSubsolution { config: PathBuf },
    /// Run the property suites.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Divide every sample count by this factor.
        #[arg(long, default_value_t = 1)]
        scale_down: usize,
    },
    /// Print the effective config with defaults filled in.
    Config { config: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig, u8> {
    load_config(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        EXIT_CONFIG
    })
}

/// Report directory for a config. When several configs of one batch would
/// write to the same directory, each gets a subdirectory named after its
/// file stem.
fn out_dir(cfg: &RunConfig, path: &Path, shared: bool) -> PathBuf {
    let base = report_dir(cfg);
    if shared {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        base.join(stem)
    } else {
        base
    }
}

/// Configs whose report directory collides with another config's.
fn shared_dirs(paths: &[PathBuf]) -> Vec<bool> {
    let dirs: Vec<Option<PathBuf>> = paths.iter().map(|p| load_config(p).ok().map(|c| report_dir(&c))).collect();
    dirs.iter()
        .map(|d| d.is_some() && dirs.iter().filter(|e| *e == d).count() > 1)
        .collect()
}

fn solve_one(path: &Path, shared: bool, sweep: bool) -> u8 {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = match run_solve(&cfg, sweep) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let dir = out_dir(&cfg, path, shared);
    if let Err(e) = emit_report(&result, &cfg, &dir) {
        eprintln!("{}: cannot write report to {}: {e}", path.display(), dir.display());
        return EXIT_SOLVER;
    }
    let s = summary(&result, &cfg);
    match (&s.error, &s.last) {
        (Some(err), _) => eprintln!("{}: solver error: {err}", path.display()),
        (None, Some(last)) if !s.converged => eprintln!(
            "{}: not converged ({}{})",
            path.display(),
            last.status,
            last.message.as_deref().map(|m| format!(": {m}")).unwrap_or_default()
        ),
        _ => {}
    }
    println!(
        "{}: {} converged={} iterations={} report={}",
        path.display(),
        s.mode,
        s.converged,
        s.iterations,
        dir.display()
    );
    result.exit_code()
}

fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Solve { configs, parallel } => {
            let shared = shared_dirs(&configs);
            let codes: Vec<u8> = if parallel && configs.len() > 1 {
                std::thread::scope(|s| {
                    let handles: Vec<_> = configs
                        .iter()
                        .zip(&shared)
                        .map(|(p, &sh)| s.spawn(move || solve_one(p, sh, false)))
                        .collect();
                    handles.into_iter().map(|h| h.join().unwrap_or(EXIT_SOLVER)).collect()
                })
            } else {
                configs.iter().zip(&shared).map(|(p, &sh)| solve_one(p, sh, false)).collect()
            };
            // A config error outranks a solver failure.
            if codes.contains(&EXIT_CONFIG) {
                EXIT_CONFIG
            } else {
                codes.into_iter().max().unwrap_or(EXIT_OK)
            }
        }
        Command::Sweep { config } => solve_one(&config, false, true),
        Command::CheckSubsolution { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_subsolution_check(&cfg) {
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    EXIT_CONFIG
                }
                Ok(Err(e)) => {
                    eprintln!("{}: subsolution rejected: {e}", config.display());
                    EXIT_SOLVER
                }
                Ok(Ok(report)) => {
                    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
                    if report.passes {
                        EXIT_OK
                    } else {
                        EXIT_SOLVER
                    }
                }
            }
        }
        Command::Verify { seed, scale_down } => {
            let d = scale_down.max(1);
            let full = SuiteSizes::default();
            let sizes = SuiteSizes {
                symmetric: (full.symmetric / d).max(1),
                chain: (full.chain / d).max(1),
                ellipticity: (full.ellipticity / d).max(1),
                concavity: (full.concavity / d).max(1),
                matrices: (full.matrices / d).max(full.repeated),
                repeated: full.repeated,
            };
            let outcomes = run_all(&sizes, seed);
            for o in &outcomes {
                println!("{}", o.line());
            }
            if outcomes.iter().all(|o| o.passed) {
                EXIT_OK
            } else {
                EXIT_SOLVER
            }
        }
        Command::Config { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}", to_json(&cfg));
                EXIT_OK
            }
            Err(code) => code,
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    ExitCode::from(run(cli))
}
