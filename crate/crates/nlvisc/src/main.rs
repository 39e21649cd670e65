use clap::{Parser, Subcommand};
use nlvisc::{Config, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "NLVISC_THREADS";

#[derive(Parser)]
#[command(name = "nlvisc", version, about = "Run and inspect nonlocal viscosity experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write its report and artifacts.
    Run {
        path: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Override a tolerance, as name=value. Repeatable.
        #[arg(long = "tol-override", value_parser = Overrides::parse_tol)]
        tol_override: Vec<(String, f64)>,
    },
    /// Print the parsed configuration without running it.
    Describe {
        path: PathBuf,
        #[arg(long = "tol-override", value_parser = Overrides::parse_tol)]
        tol_override: Vec<(String, f64)>,
    },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_VAR}: expected a thread count, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| format!("{THREADS_VAR}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.cmd {
        Cmd::Run { path, out_dir, tol_override } => Config::load(&path).and_then(|cfg| {
            let ov = Overrides { tolerances: tol_override };
            let out = nlvisc::run(&cfg, &out_dir, &ov)?;
            for c in &out.checks {
                println!("{} {}: {}", if c.pass { "pass" } else { "FAIL" }, c.clause, c.detail);
            }
            out.into_result().map(|_| ())
        }),
        Cmd::Describe { path, tol_override } => Config::load(&path).and_then(|cfg| {
            let ov = Overrides { tolerances: tol_override };
            print!("{}", nlvisc::describe(&cfg, &ov)?);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
