use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use gridloop::engine::{export_csv, run_scenario, Scenario, SimulationRecord};
use gridloop::error::EngineError;
use gridloop::service::{serve, ServeOptions, TOKEN_ENV};

const EXIT_VALIDATION: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_DIGEST: u8 = 3;

#[derive(Parser)]
#[command(name = "gridloop", version, about = "Two-generator microgrid simulator with supervisory control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario offline and print its digest.
    Run {
        scenario: PathBuf,
        /// Directory for record.json and CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also export generators, load_bus and decisions CSVs.
        #[arg(long, requires = "out")]
        csv: bool,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Run a scenario live and serve it over TCP.
    Serve {
        scenario: PathBuf,
        #[arg(long)]
        listen: String,
        /// Wall-clock pacing factor; 0 runs unpaced.
        #[arg(long, default_value_t = 1.0)]
        pace: f64,
        /// Control periods per telemetry message.
        #[arg(long, default_value_t = 20)]
        decimation: u32,
        /// Outbound messages buffered per client before it is dropped.
        #[arg(long, default_value_t = 1024)]
        queue: usize,
        /// Wait for this many subscribers before starting the run.
        #[arg(long, default_value_t = 0)]
        wait_for: usize,
        /// Write the final record here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a saved record's scenario and compare digests and decision logs.
    Replay {
        record: PathBuf,
        /// Expected digest; defaults to the digest stored in the record.
        #[arg(long)]
        check: Option<String>,
    },
}

fn load(path: &Path) -> Result<Scenario, EngineError> {
    let s = Scenario::load(path)?;
    s.validate()?;
    Ok(s)
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn report(record: &SimulationRecord) -> ExitCode {
    println!("{}", record.digest);
    match &record.diagnostic {
        Some(d) => fail(EXIT_DIVERGENCE, format!("run stopped after {} frames: {d}", record.frames.len())),
        None => ExitCode::SUCCESS,
    }
}

fn save(record: &SimulationRecord, out: &Path, csv: bool) -> Result<(), EngineError> {
    std::fs::create_dir_all(out)?;
    record.save(&out.join("record.json"))?;
    std::fs::write(out.join("decisions.log"), record.decision_log())?;
    if csv {
        export_csv(record, out, &[])?;
    }
    Ok(())
}

fn run(path: &Path, out: Option<&Path>, csv: bool, seed: Option<u64>) -> ExitCode {
    let mut scenario = match load(path) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let record = match run_scenario(&scenario) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    if let Some(out) = out {
        if let Err(e) = save(&record, out, csv) {
            return fail(EXIT_VALIDATION, e);
        }
    }
    report(&record)
}

struct ServeArgs {
    listen: String,
    options: ServeOptions,
    wait_for: usize,
    out: Option<PathBuf>,
}

fn serve_cmd(path: &Path, args: ServeArgs) -> ExitCode {
    let scenario = match load(path) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    let handle = match serve(scenario, &args.listen, args.options) {
        Ok(h) => h,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    eprintln!("listening on {}", handle.local_addr());
    while handle.subscriber_count() < args.wait_for {
        std::thread::sleep(Duration::from_millis(20));
    }
    handle.start();
    let record = handle.wait(Duration::from_secs(2));
    if let Some(out) = &args.out {
        if let Err(e) = save(&record, out, false) {
            return fail(EXIT_VALIDATION, e);
        }
    }
    report(&record)
}

fn replay(path: &Path, check: Option<String>) -> ExitCode {
    let saved = match SimulationRecord::load(path) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    if let Err(e) = saved.scenario.validate() {
        return fail(EXIT_VALIDATION, e);
    }
    let expected = check.unwrap_or_else(|| saved.digest.clone());
    let fresh = match run_scenario(&saved.scenario) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    println!("{}", fresh.digest);
    if fresh.digest != expected {
        return fail(EXIT_DIGEST, format!("digest mismatch: expected {expected}, replay gave {}", fresh.digest));
    }
    if fresh.decision_log() != saved.decision_log() {
        return fail(EXIT_DIGEST, "decision log differs from the saved record");
    }
    if fresh.diagnostic.is_some() {
        return report(&fresh);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { scenario, out, csv, seed } => run(&scenario, out.as_deref(), csv, seed),
        Command::Validate { scenario } => match load(&scenario) {
            Ok(s) => {
                println!("{}: ok ({} control periods)", s.name, s.period_count());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_VALIDATION, e),
        },
        Command::Serve {
            scenario,
            listen,
            pace,
            decimation,
            queue,
            wait_for,
            out,
        } => {
            let Ok(token) = std::env::var(TOKEN_ENV) else {
                return fail(EXIT_VALIDATION, format!("{TOKEN_ENV} is not set"));
            };
            let mut options = ServeOptions::new(token);
            options.pace = pace;
            options.decimation = decimation.max(1);
            options.queue_capacity = queue;
            options.autostart = false;
            serve_cmd(
                &scenario,
                ServeArgs {
                    listen,
                    options,
                    wait_for,
                    out,
                },
            )
        }
        Command::Replay { record, check } => replay(&record, check),
    }
}
