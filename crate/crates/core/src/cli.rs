//! `dynabc` command line: exit 0 when everything passed, 1 on a failed
//! assertion or numerical failure, 2 on usage or configuration errors.
//! Failures are also written to stderr as one JSON object.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::Error;
use crate::experiments::{self, Table};
use crate::io::{self, RunConfig};
use crate::operator::suite::{run_suite, SuiteOptions};
use crate::potentials::verify::{catalogue, verify_calculus};
use crate::solver::{self, RunResult};
use crate::noise::StreamKey;

#[derive(Parser, Debug)]
#[command(name = "dynabc", version, about = "Stochastic Allen-Cahn with dynamic boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run configuration (flat `section.key = value` text).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the sample count of the subcommand (trajectories, Monte
    /// Carlo samples or verification trials).
    #[arg(long, value_name = "M")]
    samples: Option<usize>,
    /// No report on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one or more trajectories and write series.csv + meta.json.
    Simulate(Common),
    /// Contraction, maximum principle, asymptotics, smoothing and Jensen checks.
    VerifyOperator(Common),
    /// Sampled resolvent/Yosida/Moreau/Fenchel checks and the growth hypothesis.
    VerifyPotentials(Common),
    /// Frozen-noise convergence as λ is halved.
    SweepLambda(Common),
    /// Vanishing surface viscosity ε → 0.
    SweepEps(Common),
    /// Lipschitz dependence on initial data across perturbation sizes.
    ContinuousDependence(Common),
    /// Monte Carlo check of the discrete energy inequality.
    McEnergy(Common),
    /// Print the effective configuration, defaults included.
    EchoConfig(Common),
}

struct Outcome {
    passed: bool,
    report: Value,
    failed: Vec<String>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::ConfigList(_) | Error::Syntax { .. } | Error::Io(_) => 2,
        _ => 1,
    }
}

fn error_json(e: &Error) -> Value {
    let kind = match e {
        Error::Config(_) | Error::ConfigList(_) => "config",
        Error::Syntax { .. } => "syntax",
        Error::Io(_) => "io",
        Error::Decode { .. } => "decode",
        _ => "numerical",
    };
    let mut v = json!({ "error": kind, "message": e.to_string() });
    match e {
        Error::ConfigList(list) => v["problems"] = json!(list),
        Error::Syntax { line, .. } => v["line"] = json!(line),
        _ => {}
    }
    v
}

fn load(c: &Common) -> crate::Result<RunConfig> {
    match &c.config {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", p.display())),
            other => other,
        }),
    }
}

fn envelope(command: &str, cfg: &RunConfig, seed: u64, passed: bool, report: Value) -> Value {
    json!({
        "command": command,
        "fingerprint": cfg.fingerprint(),
        "seed": seed,
        "passed": passed,
        "report": report,
    })
}

fn failed_names<'a>(checks: impl IntoIterator<Item = &'a crate::operator::verify::CheckReport>) -> Vec<String> {
    checks.into_iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
}

fn finish(out: Option<&Path>, cfg: &RunConfig, seed: u64, o: &Outcome, tables: &[Table]) -> crate::Result<()> {
    if let Some(dir) = out {
        io::write_report(dir, &o.report, tables)?;
        io::write_meta(dir, cfg, seed, json!({ "passed": o.passed }))?;
    }
    Ok(())
}

fn simulate(c: &Common, cfg: &RunConfig) -> crate::Result<Outcome> {
    let out = c
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("simulate needs --out DIR".into()))?;
    let m = c.samples.unwrap_or(1);
    if m == 0 {
        return Err(Error::Config("--samples must be >= 1".into()));
    }
    let results: Vec<RunResult> = if m == 1 {
        vec![solver::run_trajectory(&cfg.solver, c.seed)?]
    } else {
        let jobs: Vec<_> = (0..m as u64).map(|k| (cfg.solver.clone(), StreamKey::new(c.seed, k))).collect();
        experiments::run_batch(&jobs)?
    };
    let mut runs = Vec::new();
    for r in &results {
        let dir = if m == 1 { out.to_path_buf() } else { out.join(format!("trajectory_{:03}", r.trajectory)) };
        io::write_run(&dir, cfg, r)?;
        let last = r.series.len().saturating_sub(1);
        runs.push(json!({
            "trajectory": r.trajectory,
            "valid": r.is_valid(),
            "failure": r.failure,
            "final_t": r.series.t.get(last),
            "final_energy_GL": r.series.energy_gl.get(last),
            "final_norm_H": r.series.norm_h.get(last),
        }));
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.is_valid())
        .map(|r| format!("trajectory {}: {}", r.trajectory, r.failure.clone().unwrap_or_default()))
        .collect();
    if m > 1 {
        io::write_meta(out, cfg, c.seed, json!({ "trajectories": m }))?;
    }
    let passed = failed.is_empty();
    Ok(Outcome { passed, report: envelope("simulate", cfg, c.seed, passed, json!(runs)), failed })
}

fn run(cmd: &Command) -> crate::Result<Outcome> {
    let (name, c) = match cmd {
        Command::Simulate(c) => ("simulate", c),
        Command::VerifyOperator(c) => ("verify-operator", c),
        Command::VerifyPotentials(c) => ("verify-potentials", c),
        Command::SweepLambda(c) => ("sweep-lambda", c),
        Command::SweepEps(c) => ("sweep-eps", c),
        Command::ContinuousDependence(c) => ("continuous-dependence", c),
        Command::McEnergy(c) => ("mc-energy", c),
        Command::EchoConfig(c) => ("echo-config", c),
    };
    let mut cfg = load(c)?;
    let x = &mut cfg.experiments;
    if let Some(m) = c.samples {
        if m == 0 {
            return Err(Error::Config("--samples must be >= 1".into()));
        }
        match cmd {
            Command::VerifyOperator(_) => x.verify_trials = m,
            Command::VerifyPotentials(_) => x.verify_samples = m,
            Command::ContinuousDependence(_) => x.continuous_samples = m,
            Command::McEnergy(_) => x.mc_samples = m,
            _ => {}
        }
    }
    let cfg = cfg;
    let seed = c.seed;
    let s = &cfg.solver;
    let x = &cfg.experiments;
    let fp = cfg.fingerprint();
    let out = c.out.as_deref();
    let sweep = |mut r: experiments::SweepReport| -> crate::Result<Outcome> {
        r.fingerprint = fp.clone();
        let o = Outcome {
            passed: r.passed,
            failed: failed_names(&r.checks),
            report: envelope(name, &cfg, seed, r.passed, serde_json::to_value(&r)?),
        };
        finish(out, &cfg, seed, &o, &r.tables)?;
        Ok(o)
    };
    match cmd {
        Command::Simulate(_) => simulate(c, &cfg),
        Command::EchoConfig(_) => Ok(Outcome { passed: true, report: json!(cfg.echo()), failed: vec![] }),
        Command::VerifyOperator(_) => {
            let g = &s.grid;
            let opts = SuiteOptions {
                nx: g.nx(),
                ny: g.ny(),
                lx: g.lx(),
                ly: g.ly(),
                trials: x.verify_trials,
                seed,
                ..SuiteOptions::default()
            };
            if g.mode() != crate::geometry::GridMode::Strip {
                return Err(Error::Config("verify-operator needs grid.mode = strip".into()));
            }
            let r = run_suite(&opts)?;
            let o = Outcome {
                passed: r.passed,
                failed: failed_names(r.all()),
                report: envelope(name, &cfg, seed, r.passed, serde_json::to_value(&r)?),
            };
            finish(out, &cfg, seed, &o, &[])?;
            Ok(o)
        }
        Command::VerifyPotentials(_) => {
            let mut graphs = catalogue();
            for b in [&s.gamma.bulk.beta, &s.gamma.boundary.beta] {
                if !graphs.contains(b) {
                    graphs.push(b.clone());
                }
            }
            let checks = verify_calculus(&graphs, x.verify_samples, seed)?;
            let hyp = s.gamma.check_hypothesis(s.eps);
            let mut failed = failed_names(&checks);
            if !hyp.passed {
                failed.push(format!("hypothesis {}", s.gamma.hypothesis));
            }
            let passed = failed.is_empty();
            let report = json!({
                "graphs": graphs.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
                "samples": x.verify_samples,
                "checks": checks,
                "hypothesis": hyp,
            });
            let o = Outcome { passed, failed, report: envelope(name, &cfg, seed, passed, report) };
            finish(out, &cfg, seed, &o, &[])?;
            Ok(o)
        }
        Command::SweepLambda(_) => sweep(experiments::lambda_sweep(s, &x.sweep_lambdas, seed)?),
        Command::SweepEps(_) => sweep(experiments::eps_sweep(s, &x.sweep_eps, seed)?),
        Command::ContinuousDependence(_) => sweep(experiments::continuous_dependence(
            s,
            &x.continuous_deltas,
            x.continuous_samples,
            seed,
        )?),
        Command::McEnergy(_) => {
            let mut r = experiments::energy_bound(s, &x.mc_lambdas, x.mc_samples, seed)?;
            r.fingerprint = fp.clone();
            let stat = experiments::mc_expectation(s, x.mc_samples, x.mc_statistic, seed)?;
            let report = json!({ "energy_bound": r, "statistic": stat });
            let o = Outcome {
                passed: r.passed,
                failed: failed_names(&r.checks),
                report: envelope(name, &cfg, seed, r.passed, report),
            };
            finish(out, &cfg, seed, &o, &[r.table()])?;
            Ok(o)
        }
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn main_with(args: Vec<OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return 0;
            }
            let _ = write!(stderr, "{}", e.render());
            let _ = writeln!(stderr, "{}", json!({ "error": "usage", "message": e.kind().to_string() }));
            return 2;
        }
    };
    let quiet = match &cli.command {
        Command::Simulate(c)
        | Command::VerifyOperator(c)
        | Command::VerifyPotentials(c)
        | Command::SweepLambda(c)
        | Command::SweepEps(c)
        | Command::ContinuousDependence(c)
        | Command::McEnergy(c)
        | Command::EchoConfig(c) => c.quiet,
    };
    match run(&cli.command) {
        Ok(o) => {
            if !quiet {
                let _ = match &o.report {
                    Value::String(s) => write!(stdout, "{s}"),
                    v => writeln!(stdout, "{}", serde_json::to_string_pretty(v).unwrap_or_default()),
                };
            }
            if o.passed {
                0
            } else {
                let _ = writeln!(stderr, "{}", json!({ "error": "assertion", "failed": o.failed }));
                1
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_json(&e));
            exit_code(&e)
        }
    }
}
