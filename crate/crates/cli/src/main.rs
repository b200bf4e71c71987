//! Batch driver for the relativistic linearized Boltzmann pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod config;
mod manifest;
mod stages;

use clap::{Parser, Subcommand, ValueEnum};
use config::RunConfig;
use manifest::Output;
use relboltz::io::write_atomic;
use relboltz::semigroup::ScenarioKind;
use serde::Serialize;
use stages::{Failure, Run, CODE_ASSEMBLY, CODE_CONFIG, CODE_DECAY, CODE_MOMENTS, CODE_SPECTRUM};
use std::path::PathBuf;
use std::process::ExitCode;

/// Environment variable overriding the output directory (the `--out` flag wins).
const OUT_ENV: &str = "RELBOLTZ_OUT_DIR";
const DEFAULT_OUT: &str = "relboltz-out";

#[derive(Parser)]
#[command(name = "relboltz", version, about = "Spectral and decay analysis of the linearized relativistic Boltzmann operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// QMC seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Relative tolerance of the moment quadrature, overriding the configuration.
    #[arg(long, global = true)]
    rtol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Maxwellian moments and fluid constants.
    Moments,
    /// Collision, streaming and projector matrices.
    Assemble,
    /// Fluid branches and the expansion check.
    Spectrum,
    /// Dispersion roots against the eigen-branches.
    Dispersion,
    /// Decay series and remainder rates.
    Decay {
        #[arg(long, value_enum)]
        scenario: Option<Scenario>,
    },
    /// Every stage, both decay scenarios.
    Report,
}

#[derive(ValueEnum, Clone, Copy)]
enum Scenario {
    Generic,
    Microscopic,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Moments => "moments",
            Self::Assemble => "assemble",
            Self::Spectrum => "spectrum",
            Self::Dispersion => "dispersion",
            Self::Decay { .. } => "decay",
            Self::Report => "report",
        }
    }
}

#[derive(Serialize)]
struct ErrorsFile<'a> {
    command: &'a str,
    exit_code: i32,
    errors: &'a [Failure],
}

fn write_errors(dir: &std::path::Path, command: &str, code: i32, errors: &[Failure]) {
    let doc = ErrorsFile { command, exit_code: code, errors };
    let mut text = serde_json::to_string_pretty(&doc).expect("errors serialize");
    text.push('\n');
    if let Err(e) = std::fs::create_dir_all(dir).map_err(relboltz::Error::from).and_then(|_| write_atomic(&dir.join("errors.json"), text.as_bytes())) {
        eprintln!("relboltz: cannot write errors.json: {e}");
    }
}

fn resolve_config(cli: &Cli) -> relboltz::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.quadrature.seed = seed;
    }
    if let Some(rtol) = cli.rtol {
        cfg.tolerances.moments = rtol;
    }
    if let Command::Decay { scenario: Some(s) } = cli.command {
        cfg.decay.scenario = match s {
            Scenario::Generic => ScenarioKind::Generic,
            Scenario::Microscopic => ScenarioKind::Microscopic,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn execute(run: &mut Run, command: Command) {
    let Some(mom) = run.stage("moments", CODE_MOMENTS, stages::moments) else { return };
    if matches!(command, Command::Moments) {
        return;
    }
    let Some(asm) = run.stage("assemble", CODE_ASSEMBLY, |r| stages::assemble(r, &mom)) else { return };
    if matches!(command, Command::Assemble) {
        return;
    }
    let code = if matches!(command, Command::Decay { .. }) { CODE_DECAY } else { CODE_SPECTRUM };
    let Some(ms) = run.stage("model", code, |r| stages::model(r, &mom, &asm)) else { return };
    if matches!(command, Command::Spectrum | Command::Report) {
        run.stage("spectrum", CODE_SPECTRUM, |r| stages::spectrum(r, &ms));
    }
    if matches!(command, Command::Dispersion | Command::Report) {
        run.stage("dispersion", CODE_SPECTRUM, |r| stages::dispersion(r, &ms));
    }
    if matches!(command, Command::Decay { .. } | Command::Report) {
        let kinds = match command {
            Command::Report => vec![ScenarioKind::Generic, ScenarioKind::Microscopic],
            _ => vec![run.cfg.decay.scenario],
        };
        run.stage("decay", CODE_DECAY, |r| stages::decay(r, &ms, &kinds));
        run.stage("remainder", CODE_DECAY, |r| stages::remainder(r, &ms));
    }
    if matches!(command, Command::Report) {
        #[derive(Serialize)]
        struct Report<'a> {
            config_hash: String,
            pass: bool,
            checks: Vec<serde_json::Value>,
            failures: &'a [Failure],
        }
        let checks = run
            .checks
            .iter()
            .map(|(stage, c)| serde_json::json!({ "stage": stage, "check": c }))
            .collect();
        let report = Report { config_hash: run.cfg.hash(), pass: run.failures.is_empty(), checks, failures: &run.failures };
        let key = run.cfg.hash();
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        if let Err(e) = run.out.write("report.json", text.as_bytes(), "report", &key) {
            run.failures.push(Failure::from_error("report", CODE_CONFIG, &e));
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command;
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("relboltz: thread pool: {e}");
        }
    }
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("relboltz: {e}");
            let f = Failure::from_error("config", CODE_CONFIG, &e);
            write_errors(&out_dir(&cli, None), command.name(), CODE_CONFIG, &[f]);
            return ExitCode::from(CODE_CONFIG as u8);
        }
    };
    let dir = out_dir(&cli, Some(&cfg));
    let out = match Output::open(dir.clone(), &cfg.hash()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("relboltz: {e}");
            let f = Failure::from_error("output", CODE_CONFIG, &e);
            write_errors(&dir, command.name(), CODE_CONFIG, &[f]);
            return ExitCode::from(CODE_CONFIG as u8);
        }
    };
    let mut run = Run::new(cfg, out);
    execute(&mut run, command);
    if let Err(e) = run.out.save_manifest() {
        run.failures.push(Failure::from_error("manifest", CODE_CONFIG, &e));
    }
    let code = run.exit_code();
    for f in &run.failures {
        eprintln!("relboltz: [{}] {}", f.stage, f.message);
    }
    write_errors(&dir, command.name(), code, &run.failures);
    ExitCode::from(code as u8)
}
