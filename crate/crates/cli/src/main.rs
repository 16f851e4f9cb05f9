//! `causalcheck`: check, monitor, simulate and fuzz read-write store
//! histories.
//!
//! Exit status is 0 when everything checked is consistent, 1 when a
//! violation was found and its evidence re-validated, and 2 on usage or
//! input errors. Diagnostics go to standard error.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use causalcheck::consistency::{validate_pattern, CheckMode, Checker, Criterion, Evidence, Verdict};
use causalcheck::history::{
    derive_history, parse_line, parse_trace_bytes, serialize_trace, EventStream, Execution, History,
};
use causalcheck::monitor::{build_mcc, feed, MonitorState};
use causalcheck::oracle::{encode_sat, parse_dimacs, validate_witness, OracleConfig};
use causalcheck::relations::HbMode;
use causalcheck::simstore::{fuzz, run_sim, Protocol, SimConfig};

#[derive(Parser)]
#[command(
    name = "causalcheck",
    version,
    about = "Causal consistency checking for read-write store histories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a trace against CC, CM and/or CCv.
    Check(CheckArgs),
    /// Stream a trace through the online CC observer.
    Monitor(MonitorArgs),
    /// Run one simulation and emit its trace.
    Simulate(SimArgs),
    /// Run many simulations and check each one.
    Fuzz(FuzzArgs),
    /// Encode a DIMACS CNF formula as a history.
    EncodeSat(EncodeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Cc,
    Cm,
    Ccv,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Fast,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum HbArg {
    SiteMaximal,
    PerOperation,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    /// Largest history the oracle accepts.
    #[arg(long, default_value_t = causalcheck::oracle::DEFAULT_CAP)]
    cap: usize,
    /// How happened-before is computed on the fast path (diagnostic).
    #[arg(long, value_enum, default_value = "site-maximal")]
    hb: HbArg,
    trace: PathBuf,
}

#[derive(Args)]
struct MonitorArgs {
    /// Trace file, or `-` for standard input.
    #[arg(default_value = "-")]
    trace: String,
}

#[derive(Args)]
struct SimFlags {
    #[arg(long, default_value_t = 3)]
    sites: usize,
    #[arg(long, default_value_t = 2)]
    variables: usize,
    #[arg(long, default_value_t = 40)]
    ops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "correct", value_parser = parse_protocol)]
    protocol: Protocol,
    #[arg(long, default_value_t = 0.5)]
    write_ratio: f64,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    sim: SimFlags,
    /// Write the trace here instead of standard output.
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    #[command(flatten)]
    sim: SimFlags,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Write the per-run report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    dimacs: PathBuf,
    /// Write the trace here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse()
}

impl SimFlags {
    fn config(&self) -> Result<SimConfig> {
        if self.sites == 0 || self.variables == 0 {
            bail!("--sites and --variables must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.write_ratio) {
            bail!("--write-ratio must lie in [0, 1]");
        }
        Ok(SimConfig {
            sites: self.sites,
            variables: self.variables,
            ops: self.ops,
            seed: self.seed,
            protocol: self.protocol,
            write_ratio: self.write_ratio,
        })
    }
}

/// Outcome of a subcommand that did not fail.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Clean,
    Violation,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(a) => cmd_check(&a),
        Command::Monitor(a) => cmd_monitor(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fuzz(a) => cmd_fuzz(&a),
        Command::EncodeSat(a) => cmd_encode_sat(&a),
    };
    match result {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("causalcheck: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_trace(path: &Path) -> Result<Execution> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_trace_bytes(&bytes).with_context(|| format!("{}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("cannot write to standard output"),
    }
}

/// Confirms that a violation verdict carries evidence that holds.
fn revalidate(h: &History, v: &Verdict) -> Result<()> {
    match &v.evidence {
        Some(Evidence::Pattern(p)) => validate_pattern(h, p).map_err(|e| anyhow!("internal error: {e}")),
        Some(Evidence::Refuted { .. }) => Ok(()),
        _ => bail!("internal error: {} violation without evidence", v.criterion),
    }
}

fn cmd_check(a: &CheckArgs) -> Result<Status> {
    let h = derive_history(&read_trace(&a.trace)?);
    let mode = match a.mode {
        ModeArg::Auto => CheckMode::Auto,
        ModeArg::Fast => CheckMode::Fast,
        ModeArg::Oracle => CheckMode::Oracle,
    };
    let checker = Checker {
        mode,
        oracle: OracleConfig::with_cap(a.cap)?,
        hb: match a.hb {
            HbArg::SiteMaximal => HbMode::SiteMaximal,
            HbArg::PerOperation => HbMode::PerOperation,
        },
    };
    let criteria: Vec<Criterion> = match a.criterion {
        CriterionArg::Cc => vec![Criterion::CC],
        CriterionArg::Cm => vec![Criterion::CM],
        CriterionArg::Ccv => vec![Criterion::CCv],
        CriterionArg::All => Criterion::ALL.to_vec(),
    };
    let verdicts = checker.check_many(&h, &criteria)?;
    let mut out = String::new();
    let mut status = Status::Clean;
    for v in verdicts.values() {
        if v.consistent {
            if let Some(Evidence::Orders(w)) = &v.evidence {
                validate_witness(&h, v.criterion, w).map_err(|e| anyhow!("internal error: {e}"))?;
            }
        } else {
            revalidate(&h, v)?;
            status = Status::Violation;
        }
        out.push_str(&v.line());
        out.push('\n');
    }
    write_output(None, &out)?;
    Ok(status)
}

fn cmd_monitor(a: &MonitorArgs) -> Result<Status> {
    let reader: Box<dyn BufRead> = if a.trace == "-" {
        Box::new(io::stdin().lock())
    } else {
        let f = fs::File::open(&a.trace).with_context(|| format!("cannot read {}", a.trace))?;
        Box::new(io::BufReader::new(f))
    };
    let automaton = build_mcc();
    let mut state = MonitorState::new(&automaton);
    let mut stream = EventStream::new();
    let mut seen = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("line {}: not valid UTF-8 text", i + 1))?;
        let Some(parsed) = parse_line(&line, i + 1)? else {
            continue;
        };
        let event = stream.push(parsed, i + 1)?;
        state = feed(state, &automaton, &event).with_context(|| format!("line {}", i + 1))?;
        seen.push(event);
        if let Some(branch) = state.branch() {
            let h = derive_history(&Execution::new(seen)?);
            let cc = Checker::default().check(&h, Criterion::CC)?;
            if cc.consistent {
                bail!("internal error: observer accepted a CC prefix");
            }
            revalidate(&h, &cc)?;
            write_output(None, &format!("VIOLATION {branch}\n"))?;
            return Ok(Status::Violation);
        }
    }
    Ok(Status::Clean)
}

fn cmd_simulate(a: &SimArgs) -> Result<Status> {
    let e = run_sim(&a.sim.config()?);
    write_output(a.emit.as_deref(), &serialize_trace(&e))?;
    Ok(Status::Clean)
}

fn cmd_fuzz(a: &FuzzArgs) -> Result<Status> {
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let template = a.sim.config()?;
    let report = fuzz(&template, a.runs);
    let rendered = report.render();
    if let Some(path) = &a.report {
        write_output(Some(path), &rendered)?;
    }
    let mut out = rendered.lines().last().unwrap_or_default().to_string();
    out.push('\n');
    for (c, (seed, p)) in &report.first {
        let h = derive_history(&run_sim(&SimConfig {
            seed: *seed,
            ..template.clone()
        }));
        validate_pattern(&h, p).map_err(|e| anyhow!("internal error: seed {seed}: {e}"))?;
        out.push_str(&format!("first {} seed={seed} {p}\n", c.token()));
    }
    write_output(None, &out)?;
    Ok(if report.any_violation() {
        Status::Violation
    } else {
        Status::Clean
    })
}

fn cmd_encode_sat(a: &EncodeArgs) -> Result<Status> {
    let text = fs::read_to_string(&a.dimacs).with_context(|| format!("cannot read {}", a.dimacs.display()))?;
    let cnf = parse_dimacs(&text).with_context(|| format!("{}", a.dimacs.display()))?;
    let h = encode_sat(&cnf)?;
    let e = Execution::new(h.ops().to_vec())?;
    write_output(a.out.as_deref(), &serialize_trace(&e))?;
    Ok(Status::Clean)
}
