use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use bubbler::{emit, parse_config, run_pipeline, Stage};

/// Constructs and verifies multi-bubble solutions of the singular Liouville
/// problem on the unit disk.
#[derive(Parser, Debug)]
#[command(name = "bubbler", version)]
struct Cli {
    /// Stage to run; its prerequisites run first.
    #[arg(value_enum)]
    stage: Stage,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Stage progress on stderr.
    #[arg(long)]
    verbose: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("BUBBLER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("BUBBLER_THREADS = {v:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("bubbler: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("bubbler: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let dir = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bubbler-out"));
    let out = run_pipeline(&cfg, cli.stage, cli.verbose);
    if let Err(e) = emit(&out, &dir) {
        eprintln!("bubbler: writing {}: {e}", dir.display());
        return ExitCode::from(EXIT_INTERNAL);
    }
    for c in &out.report.checks {
        println!(
            "{} {}: {:.3e} (tolerance {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if cli.verbose {
        eprintln!("[bubbler] report written to {}", dir.join("report.json").display());
    }
    ExitCode::from(out.report.exit_code() as u8)
}
