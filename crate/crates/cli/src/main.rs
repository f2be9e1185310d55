use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use membrane_eit::harness::{self, Beta, Radius, Scenario};
use membrane_eit::mesh::Shape;

/// Simulate and reconstruct pressure on an EIT membrane sensor.
#[derive(Debug, Parser)]
#[command(name = "membrane-eit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Membrane solve, conductivity, and voltage data for a scenario.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out/simulate")]
        out: PathBuf,
    },
    /// Reduced quadratic reconstruction (plus the linearized baseline)
    /// from a voltage-difference file.
    Reconstruct {
        scenario: PathBuf,
        w_file: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out/reconstruct")]
        out: PathBuf,
    },
    /// Dimensions of the reduced sensitivity matrix on the reference mesh.
    Table1 {
        shape: Shape,
        /// Also write the report as JSON into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite; exits non-zero if any check fails.
    Verify {
        /// Also write the results as JSON into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Scenario fields that can be overridden from the command line.
#[derive(Debug, Args)]
struct Overrides {
    /// Reduction radius: a number or a multiple of h such as `5h`.
    #[arg(long)]
    delta: Option<Radius>,
    /// Regularization weight, or `discrepancy`.
    #[arg(long)]
    beta: Option<Beta>,
    /// Relative noise level added to the voltage differences.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Merge (k, l) and (l, k) into one unknown.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    merge_pairs: Option<bool>,
}

impl Overrides {
    fn apply(&self, mut s: Scenario) -> membrane_eit::Result<Scenario> {
        if let Some(d) = self.delta {
            s.delta = d;
        }
        if let Some(b) = self.beta {
            s.beta = b;
        }
        if let Some(n) = self.noise {
            s.noise = n;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(m) = self.merge_pairs {
            s.merge_pairs = m;
        }
        s.validate()?;
        Ok(s)
    }
}

fn write_json(dir: &std::path::Path, name: &str, value: &impl serde::Serialize) -> membrane_eit::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(cli: Cli) -> membrane_eit::Result<bool> {
    match cli.command {
        Command::Simulate { scenario, overrides, out } => {
            let scenario = overrides.apply(Scenario::load(&scenario)?)?;
            let manifest = harness::run_simulate(&scenario, &out)?;
            let r = &manifest["results"];
            println!(
                "{}: p0 = {}, max slope = {}, |W| = {}",
                scenario.name, r["p0"], r["max_slope"], r["w_norm"]
            );
            println!("wrote {}", out.join("manifest.json").display());
        }
        Command::Reconstruct { scenario, w_file, overrides, out } => {
            let scenario = overrides.apply(Scenario::load(&scenario)?)?;
            let manifest = harness::run_reconstruct(&scenario, &w_file, &out)?;
            let r = &manifest["results"];
            println!(
                "{}: {}x{} system, beta = {}, residual = {}, IoU = {}, baseline IoU = {}",
                scenario.name,
                r["rows"],
                r["columns"],
                r["beta"],
                r["residual"],
                r["metrics"]["iou"],
                r["baseline_metrics"]["iou"]
            );
            println!("wrote {}", out.join("manifest.json").display());
        }
        Command::Table1 { shape, out } => {
            let report = harness::table1(shape)?;
            print!("{}", report.render());
            if let Some(dir) = out {
                write_json(&dir, &format!("table1-{shape}.json"), &report)?;
            }
        }
        Command::Verify { out } => {
            let checks = harness::run_verify();
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(dir) = out {
                write_json(&dir, "verify.json", &checks)?;
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                log::error!("{failed} check(s) failed");
            }
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
