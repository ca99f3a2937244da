use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gossip_rmf::experiment::{
    self, parse_config_with, preset, timing_report, write_csv, write_plot_script,
};
use gossip_rmf::{verify, Execution};

/// Classic and refined mean-field analysis of the gossip shuffle protocol.
#[derive(Parser)]
#[command(name = "gossip-rmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (a file path, or a shipped preset such as `fig7`).
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_max: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated subset of classic,refined,popsim,agentsim,exact.
        #[arg(long)]
        methods: Option<String>,
        /// Output CSV path; `-` writes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a matplotlib script next to the CSV.
        #[arg(long)]
        plot: bool,
    },
    /// Run the built-in property suites.
    Verify,
    /// Time classic and refined analysis for N = 100 and N = 2500.
    Bench {
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;
const VERIFY_FAILURE: u8 = 3;

fn execution() -> Execution {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = std::env::var("RMF_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
        {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
            if n <= 1 {
                return Execution::Sequential;
            }
        }
        Execution::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    {
        Execution::Sequential
    }
}

fn load(config: &str) -> Result<String, String> {
    if Path::new(config).exists() {
        std::fs::read_to_string(config).map_err(|e| format!("{config}: {e}"))
    } else if let Some(text) = preset(config) {
        Ok(text.to_string())
    } else {
        Err(format!("{config}: no such file or preset"))
    }
}

fn run(
    config: &str,
    overrides: Vec<(&str, String)>,
    plot: bool,
    exec: Execution,
) -> Result<(), (u8, String)> {
    let text = load(config).map_err(|e| (CONFIG_ERROR, e))?;
    let cfg = parse_config_with(&text, &overrides).map_err(|e| (CONFIG_ERROR, e.to_string()))?;
    let table = experiment::run_with(&cfg, exec).map_err(|e| (RUNTIME_ERROR, e.to_string()))?;
    match &cfg.out {
        Some(path) => {
            write_csv(&table, path).map_err(|e| (RUNTIME_ERROR, e.to_string()))?;
            if plot {
                let script = path.with_extension("py");
                write_plot_script(&table, path, &script)
                    .map_err(|e| (RUNTIME_ERROR, e.to_string()))?;
            }
        }
        None => print!("{}", table.to_csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = execution();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            t_max,
            runs,
            methods,
            out,
            plot,
        } => {
            let mut overrides = Vec::new();
            if let Some(v) = seed {
                overrides.push(("seed", v.to_string()));
            }
            if let Some(v) = t_max {
                overrides.push(("t_max", v.to_string()));
            }
            if let Some(v) = runs {
                overrides.push(("runs", v.to_string()));
            }
            if let Some(v) = methods {
                overrides.push(("methods", v));
            }
            if let Some(v) = out {
                let v = if v.as_os_str() == "-" {
                    String::new()
                } else {
                    v.display().to_string()
                };
                overrides.push(("out", v));
            }
            run(&config, overrides, plot, exec)
        }
        Command::Verify => match verify::run_all(exec) {
            Ok(report) => {
                for c in &report.checks {
                    let status = if c.passed() { "PASS" } else { "FAIL" };
                    println!(
                        "{status}  {}  (worst {:.3e}, tolerance {:.0e})",
                        c.name, c.worst, c.tolerance
                    );
                }
                if report.passed() {
                    Ok(())
                } else {
                    Err((VERIFY_FAILURE, "some checks failed".into()))
                }
            }
            Err(e) => Err((RUNTIME_ERROR, e.to_string())),
        },
        Command::Bench { reps } => match timing_report(&[100, 2500], reps, exec) {
            Ok(rows) => {
                for r in rows {
                    println!("N={:<5} {:.3}s ({})", r.population, r.seconds, r.label);
                }
                Ok(())
            }
            Err(e) => Err((RUNTIME_ERROR, e.to_string())),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
