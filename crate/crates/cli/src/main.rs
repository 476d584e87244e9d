//! `collapse` - run a scenario or two-boundary problem from a JSON config and
//! write `report.json` plus one CSV per series.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use collapse_core::report::ScenarioReport;
use collapse_core::scenarios::ScenarioConfig;
use collapse_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;
const EXIT_OUTPUT: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "collapse", version, about = "Unitary-history scenarios and two-boundary localization problems")]
struct Args {
    /// Scenario name; optional when the config has a `scenario` field.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(ScenarioConfig::NAMES))]
    scenario: Option<String>,

    /// JSON config file.
    #[arg(long)]
    config: PathBuf,

    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Overrides the ensemble size (transit, history).
    #[arg(long)]
    ensemble_size: Option<usize>,

    /// Overrides the localization threshold (transit, history, two_boundary).
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Convergence(String),
    Output(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Convergence(_) => EXIT_CONVERGENCE,
            Failure::Output(_) => EXIT_OUTPUT,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Convergence { .. } => Failure::Convergence(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn load(args: &Args) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut cfg = ScenarioConfig::from_json_with_name(&text, args.scenario.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = args.ensemble_size {
        cfg.set_ensemble_size(n)?;
    }
    if let Some(l) = args.lambda {
        cfg.set_lambda(l)?;
    }
    Ok(cfg)
}

/// Write via a temp file in the same directory and rename into place.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let fail = |e: std::io::Error| Failure::Output(format!("cannot write {}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(dir.join(name)).map_err(|e| fail(e.error))?;
    Ok(())
}

fn emit(report: &ScenarioReport, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Output(format!("cannot create {}: {e}", out.display())))?;
    let mut files = vec![(String::from("report.json"), report.to_json())];
    for s in &report.series {
        files.push((format!("{}.csv", s.name), s.to_csv()));
    }
    let mut written = Vec::new();
    for (name, body) in &files {
        write_atomic(out, name, body)?;
        written.push(out.join(name));
    }
    Ok(written)
}

fn run(args: &Args) -> Result<Vec<PathBuf>, Failure> {
    let cfg = load(args)?;
    let report = cfg.run()?;
    emit(&report, &args.out)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            let msg = match &f {
                Failure::Config(m) => format!("config error: {m}"),
                Failure::Convergence(m) => format!("solver error: {m}"),
                Failure::Output(m) => format!("output error: {m}"),
            };
            eprintln!("collapse: {msg}");
            ExitCode::from(f.code())
        }
    }
}
