use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gpdf_cli::manifest::{check_manifest, FileStatus};
use gpdf_cli::{parse_config, run_scenario, Scenario};

/// Default output root when `--out` is not given; runs go to `<root>/<scenario>`.
const OUT_ROOT_VAR: &str = "GPDF_OUT_ROOT";

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "gpdf", version, about = "Cubic NLS and de Finetti hierarchy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its tables and manifest.
    Run {
        scenario: String,
        /// Key-value configuration; defaults are used for anything it leaves out.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to $GPDF_OUT_ROOT/<scenario>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the available scenarios.
    ListScenarios,
    /// Re-verify the digests recorded in a run manifest.
    Check { manifest: PathBuf },
}

fn run(scenario: &str, config: Option<&Path>, out: Option<PathBuf>, threads: Option<usize>, seed: Option<u64>) -> ExitCode {
    let scenario: Scenario = match scenario.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}; see `gpdf list-scenarios`");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let text = match config.map(std::fs::read_to_string).transpose() {
        Ok(t) => t.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: cannot read config: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut cfg = match parse_config(&text, Some(scenario)) {
        Ok(c) => c,
        Err(e) => {
            let name = config.map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
            eprintln!("error: {name}: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Some(t) = threads {
        cfg.run.threads = t;
    }
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let dir = match out {
        Some(d) => d,
        None => {
            let root = std::env::var_os(OUT_ROOT_VAR).map_or_else(|| PathBuf::from("gpdf-out"), PathBuf::from);
            root.join(scenario.name())
        }
    };
    if cfg.run.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let manifest = match run_scenario(&cfg, &dir) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {scenario}: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    for t in &manifest.terminations {
        println!("{t}");
    }
    for n in &manifest.notes {
        println!("note: {n}");
    }
    for a in &manifest.assertions {
        let status = if a.passed { "ok  " } else { "FAIL" };
        println!("{status} {}{}", a.name, if a.detail.is_empty() { String::new() } else { format!(" ({})", a.detail) });
    }
    println!("wrote {} files to {} in {:.2}s", manifest.outputs.len(), dir.display(), manifest.wall_time_s);
    if manifest.passed() {
        ExitCode::SUCCESS
    } else {
        let failed: Vec<&str> = manifest.failed().iter().map(|a| a.name.as_str()).collect();
        eprintln!("failed: {}", failed.join(", "));
        ExitCode::from(EXIT_FAILED)
    }
}

fn check(path: &Path) -> ExitCode {
    match check_manifest(path) {
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Ok(files) => {
            let mut bad = 0;
            for (name, status) in &files {
                match status {
                    FileStatus::Ok => println!("ok      {name}"),
                    FileStatus::Missing => {
                        bad += 1;
                        println!("missing {name}");
                    }
                    FileStatus::Changed { expected, found } => {
                        bad += 1;
                        println!("changed {name} (expected {expected}, found {found})");
                    }
                }
            }
            if bad == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, config, out, threads, seed } => run(&scenario, config.as_deref(), out, threads, seed),
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<20} {}", s.name(), s.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Check { manifest } => check(&manifest),
    }
}
