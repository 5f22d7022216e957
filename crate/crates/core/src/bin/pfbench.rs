//! `pfbench`: run the tracking benchmark, single trials, or print the
//! sample-size table.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 every trial
//! of some method failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kldpf::benchmark::{self, run_monte_carlo, run_trial, size_table, BenchConfig};
use kldpf::{Error, MethodTag, SampleSizeBound};

#[derive(Parser)]
#[command(
    name = "pfbench",
    version,
    about = "KLD adaptive particle filter benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo comparison of all configured methods.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "pfbench-out")]
        out: PathBuf,
        /// Worker threads (default: all cores). Output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        /// Also write the trace of this trial index for every method. Repeatable.
        #[arg(long = "trace")]
        traces: Vec<usize>,
    },
    /// Run and trace a single trial of one method.
    Trial {
        #[arg(long)]
        method: MethodTag,
        #[arg(long)]
        trial_index: usize,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wilson-Hilferty sample size against the exact chi-square bound.
    SizeTable {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        k_max: usize,
    },
}

enum Failure {
    Error(Error),
    AllTrialsFailed(Vec<MethodTag>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::AllTrialsFailed(methods)) => {
            let names: Vec<&str> = methods.iter().map(|m| m.as_str()).collect();
            eprintln!("pfbench: every trial failed for: {}", names.join(", "));
            ExitCode::from(4)
        }
        Err(Failure::Error(e)) => {
            eprintln!("pfbench: {e}");
            match e {
                Error::Io { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            trials,
            seed,
            out,
            threads,
            traces,
        } => {
            let mut cfg = BenchConfig::load(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            cfg.validate()?;
            if let Some(&bad) = traces.iter().find(|&&i| i >= cfg.trials) {
                return Err(Error::Config(format!(
                    "--trace {bad} is out of range for {} trials",
                    cfg.trials
                ))
                .into());
            }

            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            let report = pool.install(|| run_monte_carlo(&cfg))?;

            let traces: Vec<_> = cfg
                .methods
                .iter()
                .flat_map(|&m| traces.iter().map(move |&i| (m, i)))
                .filter_map(|(m, i)| run_trial(&cfg, m, i).ok())
                .collect();
            benchmark::emit_outputs(&report, &traces, &out)?;

            println!("method,mean_error,mean_n,failed_trials,trials");
            for m in &report.methods {
                let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                println!(
                    "{},{},{},{},{}",
                    m.method,
                    fmt(m.time_averaged_error()),
                    fmt(m.time_averaged_n()),
                    m.failed(),
                    m.trials
                );
            }

            let failed: Vec<MethodTag> = report
                .methods
                .iter()
                .filter(|m| m.all_failed())
                .map(|m| m.method)
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::AllTrialsFailed(failed))
            }
        }
        Command::Trial {
            method,
            trial_index,
            config,
            out,
        } => {
            let cfg = BenchConfig::load(&config)?;
            match run_trial(&cfg, method, trial_index) {
                Ok(trace) => {
                    std::fs::create_dir_all(&out).map_err(|source| Error::Io {
                        path: out.clone(),
                        source,
                    })?;
                    let path = out.join(benchmark::trace_file_name(method, trial_index));
                    std::fs::write(&path, benchmark::write_trace_csv(&trace)).map_err(
                        |source| Error::Io {
                            path: path.clone(),
                            source,
                        },
                    )?;
                    println!("{}", path.display());
                    Ok(())
                }
                Err(f) => {
                    eprintln!(
                        "pfbench: trial {} of {} failed{}: {}",
                        f.trial_index,
                        f.method,
                        f.step.map(|s| format!(" at step {s}")).unwrap_or_default(),
                        f.message
                    );
                    Err(Failure::AllTrialsFailed(vec![method]))
                }
            }
        }
        Command::SizeTable {
            epsilon,
            delta,
            k_max,
        } => {
            let bound = SampleSizeBound::new(epsilon, delta, 1, usize::MAX)
                .map_err(|e| Error::Config(e.to_string()))?;
            let rows = size_table(&bound, k_max).map_err(|e| Error::Config(e.to_string()))?;
            println!("k,wilson_hilferty,exact_chi_square");
            for r in rows {
                println!("{},{},{}", r.k, r.wilson_hilferty, r.exact_chi_square);
            }
            Ok(())
        }
    }
}
