use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ivory::cli::{emit_plotdata, load_config, run_with_threads, write_run, Report, Scenario, ScenarioConfig, Status};
use ivory::Error;

/// Numerical checks for confocal quadrics and their Bäcklund transformations.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Scenario to run; optional when the config names one.
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// JSON scenario config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for report.json and the CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies every tolerance (lower bounds are divided).
    #[arg(long)]
    tol_scale: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Regenerate the CSV tables of an earlier run in DIR and exit.
    #[arg(long, value_name = "DIR")]
    plotdata: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

fn config(args: &Args) -> Result<ScenarioConfig, Error> {
    let mut cfg = match (&args.config, args.scenario) {
        (Some(p), s) => {
            let cfg = load_config(p)?;
            if let Some(s) = s {
                if s != cfg.scenario {
                    return Err(Error::Config(format!(
                        "--scenario {} does not match the config's {}",
                        s.name(),
                        cfg.scenario.name()
                    )));
                }
            }
            cfg
        }
        (None, Some(s)) => ScenarioConfig::new(s),
        (None, None) => return Err(Error::Config("give --scenario or --config".into())),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.tol_scale.is_some() {
        cfg.tol_scale = args.tol_scale;
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    Ok(cfg)
}

fn summary(r: &Report) {
    for c in &r.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
            Status::Error => "ERR ",
        };
        let crit = c.criterion.map(|k| format!("[C{k}] ")).unwrap_or_default();
        let v = c.value.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        let t = c.tolerance.map(|v| format!("{v:.1e}")).unwrap_or_else(|| "-".into());
        let note = if c.note.is_empty() { String::new() } else { format!("  ({})", c.note) };
        println!("{tag} {crit}{:<28} {v:>11} tol {t:>8}  n={} {:.2}s{note}", c.name, c.samples, c.runtime_s);
    }
    println!("{}: {}", r.scenario.name(), if r.pass { "pass" } else { "FAIL" });
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::MissingRun(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(dir) = &args.plotdata {
        return match emit_plotdata(dir) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        };
    }
    let report = match config(&args).and_then(|c| run_with_threads(&c, args.threads)) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        summary(&report);
    }
    if let Some(dir) = &report.config.out {
        if let Err(e) = write_run(&report, dir) {
            return fail(&e);
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
