//! `foreclosure-lab`: scenario-driven command-line front end.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Map};

use crate::commands::Ctx;
use crate::error::CliError;
use crate::output::{Emitter, Format, Metadata};
use crate::scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "foreclosure-lab", version, about = "QoS foreclosure equilibrium, calibration and audit toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario document (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = "FORECLOSURE_LAB_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Restrict firm-level outputs to one profile.
    #[arg(long, global = true, value_name = "NAME")]
    pub firm: Option<String>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Stage-1 equilibria and comparative statics for the `solve` entries.
    Solve,
    /// Equilibrium QoS gap per firm profile.
    Gap,
    /// Calibration sensitivity sweep.
    Sweep,
    /// Comparative risk map.
    Riskmap,
    /// Welfare-loss table consistency and welfare decomposition.
    Welfare,
    /// Designation verdicts.
    Designate,
    /// Two-period lock-in and entry deterrence.
    Dynamic,
    /// Assistant routing bias.
    Routing,
    /// Tier-gating foreclosure gain.
    Tier,
    /// Optimal discrimination tolerance.
    Tolerance,
    /// Audit simulation, power, bimodality and episode attribution.
    Audit,
    /// Gather existing outputs into one JSON document.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Gap => "gap",
            Command::Sweep => "sweep",
            Command::Riskmap => "riskmap",
            Command::Welfare => "welfare",
            Command::Designate => "designate",
            Command::Dynamic => "dynamic",
            Command::Routing => "routing",
            Command::Tier => "tier",
            Command::Tolerance => "tolerance",
            Command::Audit => "audit",
            Command::Report => "report",
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Usage("the following required argument was not provided: --scenario <PATH>".into()))?;
    let sc = Scenario::load(path)?;
    if let Some(f) = &cli.firm {
        if sc.profiles.firm(f).is_none() {
            return Err(CliError::Validation(format!("--firm: unknown firm `{f}`")));
        }
    }
    let seed = cli.seed.or(sc.doc.seed);
    let em = Emitter::new(&cli.out, cli.format, Metadata { hash: sc.hash.clone(), seed })?;
    let mut ctx = Ctx {
        sc: &sc,
        firm: cli.firm.clone(),
        seed,
        seed_forced: cli.seed.is_some(),
        em,
        nonconverged: Vec::new(),
        extra: Map::new(),
    };
    let sub = cli.command.name();
    match cli.command {
        Command::Solve => commands::solve(&mut ctx)?,
        Command::Gap => commands::gap(&mut ctx)?,
        Command::Sweep => commands::sweep(&mut ctx)?,
        Command::Riskmap => commands::riskmap(&mut ctx)?,
        Command::Welfare => commands::welfare(&mut ctx)?,
        Command::Designate => commands::designation(&mut ctx)?,
        Command::Dynamic => commands::dynamic(&mut ctx)?,
        Command::Routing => commands::routing(&mut ctx)?,
        Command::Tier => commands::tier(&mut ctx)?,
        Command::Tolerance => commands::tolerance(&mut ctx)?,
        Command::Audit => commands::audit(&mut ctx)?,
        Command::Report => commands::report(&mut ctx)?,
    }
    let d = &sc.doc;
    let mut settings = json!({
        "scenario_file": path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "as_of": d.as_of,
        "firm_filter": cli.firm,
        "solver": d.solver,
        "baseline": d.baseline,
        "margin_scale": d.calibration.margin_scale,
        "non_converged": ctx.nonconverged,
    });
    settings.as_object_mut().expect("object").extend(std::mem::take(&mut ctx.extra));
    ctx.em.manifest(sub, settings)?;
    if ctx.nonconverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("solver did not converge: {}", ctx.nonconverged.join(", "))))
    }
}

#[cfg(test)]
mod tests;
