//! Flat dotted-key run configuration.
//!
//! ```text
//! # comment
//! grid.nx = 32
//! [potentials]
//! beta = power:3          # same as potentials.beta
//! ```
//!
//! Lexical problems stop at the first offending line. Everything after that
//! (unknown keys, bad values, violated invariants) is collected and reported
//! together.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiments::Statistic;
use crate::geometry::{Grid, GridMode};
use crate::noise::{DiffusionKind, Mollifier, NoiseModel};
use crate::potentials::{GammaOperator, Hypothesis, MonotoneGraph, Perturbation, PotentialPair, Side};
use crate::solver::{self, InitialProfile, SolverConfig};

/// Experiment-specific settings that ride along with the solver config.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sweep_lambdas: Vec<f64>,
    pub sweep_eps: Vec<f64>,
    pub continuous_deltas: Vec<f64>,
    pub continuous_samples: usize,
    pub mc_samples: usize,
    pub mc_statistic: Statistic,
    pub mc_lambdas: Vec<f64>,
    pub verify_trials: usize,
    pub verify_samples: usize,
    pub write_states: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweep_lambdas: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            sweep_eps: vec![0.1, 0.05, 0.025, 0.0125, 0.0],
            continuous_deltas: vec![1e-3, 1e-2, 1e-1],
            continuous_samples: 10,
            mc_samples: 20,
            mc_statistic: Statistic::EnergyLhs,
            mc_lambdas: vec![0.1, 0.05, 0.025, 0.0125],
            verify_trials: 200,
            verify_samples: 10_000,
            write_states: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub experiments: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = Grid::strip(32, 17, 1.0, 1.0).expect("default grid is valid");
        let mut solver = SolverConfig::new(grid);
        solver.noise = NoiseModel {
            n_modes_bulk: 8,
            n_modes_boundary: 8,
            sigma0: 0.5,
            ..NoiseModel::default()
        };
        solver.initial = InitialProfile::Sin { amplitude: 1.0, kx: 1, ky: 1 };
        Self { solver, experiments: ExperimentConfig::default() }
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    /// Every key with its effective value, defaults included.
    pub fn entries(&self) -> Vec<(String, String)> {
        let x = &self.experiments;
        let mut e = self.solver.canonical_entries();
        e.extend([
            ("sweep_lambda.values".into(), list(&x.sweep_lambdas)),
            ("sweep_eps.values".into(), list(&x.sweep_eps)),
            ("continuous.deltas".into(), list(&x.continuous_deltas)),
            ("continuous.samples".into(), x.continuous_samples.to_string()),
            ("mc.samples".into(), x.mc_samples.to_string()),
            ("mc.statistic".into(), x.mc_statistic.to_string()),
            ("mc.lambdas".into(), list(&x.mc_lambdas)),
            ("verify.trials".into(), x.verify_trials.to_string()),
            ("verify.samples".into(), x.verify_samples.to_string()),
            ("output.states".into(), x.write_states.to_string()),
        ]);
        e.sort();
        e
    }

    /// Stable hash of [`RunConfig::entries`].
    pub fn fingerprint(&self) -> String {
        solver::fingerprint(&self.entries())
    }

    /// Renders a config file that parses back to `self`.
    pub fn echo(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.echo())
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Splits the text into `key -> value` pairs. Fails on the first malformed
/// line or repeated key.
fn lex(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let syntax = |message: String| Error::Syntax { line, message };
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| syntax(format!("unterminated section header '{body}'")))?
                .trim();
            if !is_ident(name) {
                return Err(syntax(format!("bad section name '{name}'")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| syntax(format!("expected 'key = value', got '{body}'")))?;
        let k = k.trim();
        let full = match (&section, k.contains('.')) {
            (Some(s), false) => format!("{s}.{k}"),
            (None, false) => return Err(syntax(format!("key '{k}' needs a section ('section.key')"))),
            (_, true) => k.to_string(),
        };
        if !full.split('.').all(is_ident) || full.split('.').count() != 2 {
            return Err(syntax(format!("bad key '{k}'")));
        }
        let value = unquote(v.trim()).map_err(syntax)?;
        if let Some(prev) = out.get(&full).map(|e: &Entry| e.line) {
            return Err(syntax(format!("duplicate key '{full}' (first set on line {prev})")));
        }
        out.insert(full, Entry { value, line });
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn unquote(v: &str) -> std::result::Result<String, String> {
    match v.strip_prefix('"') {
        None if v.contains('"') => Err(format!("stray quote in '{v}'")),
        None => Ok(v.to_string()),
        Some(rest) => match rest.strip_suffix('"') {
            Some(inner) if !inner.contains('"') => Ok(inner.to_string()),
            _ => Err(format!("unterminated or nested quotes in '{v}'")),
        },
    }
}

/// Typed access to the lexed entries; records every problem instead of
/// stopping.
struct Fields {
    entries: BTreeMap<String, Entry>,
    problems: Vec<String>,
}

impl Fields {
    fn get<T>(&mut self, key: &str, default: T, parse: impl FnOnce(&str) -> std::result::Result<T, String>) -> T {
        match self.entries.remove(key) {
            None => default,
            Some(e) => parse(&e.value).unwrap_or_else(|msg| {
                self.problems.push(format!("line {}: {key}: {msg}", e.line));
                default
            }),
        }
    }

    fn num(&mut self, key: &str, default: f64) -> f64 {
        self.get(key, default, parse_f64)
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        self.get(key, default, |s| s.parse::<usize>().map_err(|_| format!("expected a non-negative integer, got '{s}'")))
    }

    fn list(&mut self, key: &str, default: Vec<f64>) -> Vec<f64> {
        self.get(key, default, |s| {
            let v = s.split(',').map(|t| parse_f64(t.trim())).collect::<std::result::Result<Vec<_>, _>>()?;
            if v.is_empty() {
                Err("empty list".into())
            } else {
                Ok(v)
            }
        })
    }

    fn parsed<T: FromStr<Err = Error>>(&mut self, key: &str, default: T) -> T {
        self.get(key, default, |s| s.parse::<T>().map_err(|e| e.to_string()))
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("expected a finite number, got '{s}'"))
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut f = Fields { entries: lex(text)?, problems: Vec::new() };
        let d = RunConfig::default();
        let ds = &d.solver;

        let mode = f.get("grid.mode", GridMode::Strip, |s| match s {
            "strip" => Ok(GridMode::Strip),
            "interval" => Ok(GridMode::Interval),
            _ => Err(format!("expected strip or interval, got '{s}'")),
        });
        let nx = f.count("grid.nx", ds.grid.nx());
        let ny = f.count("grid.ny", ds.grid.ny());
        let lx = f.num("grid.Lx", ds.grid.lx());
        let ly = f.num("grid.Ly", ds.grid.ly());
        let grid = match mode {
            GridMode::Strip => Grid::strip(nx, ny, lx, ly),
            GridMode::Interval => Grid::interval(ny, ly),
        };
        let grid = grid.unwrap_or_else(|e| {
            f.problems.push(format!("grid: {e}"));
            ds.grid.clone()
        });

        let beta: MonotoneGraph = f.parsed("potentials.beta", ds.gamma.bulk.beta.clone());
        let pi: Perturbation = f.parsed("potentials.pi", ds.gamma.bulk.pi.clone());
        let beta_g: MonotoneGraph = f.parsed("potentials.beta_gamma", ds.gamma.boundary.beta.clone());
        let pi_g: Perturbation = f.parsed("potentials.pi_gamma", ds.gamma.boundary.pi.clone());
        let hypothesis: Hypothesis = f.parsed("potentials.hypothesis", ds.gamma.hypothesis);

        let dn = &ds.noise;
        let n_modes_bulk = f.count("noise.modes", dn.n_modes_bulk);
        let n_modes_boundary = f.count("noise.modes_boundary", dn.n_modes_boundary);
        let decay = f.num("noise.decay", dn.decay);
        let kind: DiffusionKind = f.parsed("noise.kind", dn.kind);
        let sigma0 = f.num("noise.sigma0", dn.sigma0);
        let substeps = f.count("noise.substeps", ds.substeps as usize) as u64;
        let mollify_delta = f.num("noise.mollify_delta", 0.0);
        let mollify_m = f.count("noise.mollify_m", 1);

        let dt = f.num("solver.dt", ds.dt);
        let t_final = f.num("solver.T", ds.t_final);
        let lambda = f.num("solver.lambda", ds.lambda);
        let eps = f.num("solver.eps", ds.eps);
        let newton_tol = f.num("solver.newton_tol", ds.newton_tol);
        let newton_max = f.count("solver.newton_max", ds.newton_max);
        let save_every = f.count("solver.save_every", ds.save_every);
        let initial: InitialProfile = f.parsed("solver.initial", ds.initial.clone());

        let dx = &d.experiments;
        let experiments = ExperimentConfig {
            sweep_lambdas: f.list("sweep_lambda.values", dx.sweep_lambdas.clone()),
            sweep_eps: f.list("sweep_eps.values", dx.sweep_eps.clone()),
            continuous_deltas: f.list("continuous.deltas", dx.continuous_deltas.clone()),
            continuous_samples: f.count("continuous.samples", dx.continuous_samples),
            mc_samples: f.count("mc.samples", dx.mc_samples),
            mc_statistic: f.parsed("mc.statistic", dx.mc_statistic),
            mc_lambdas: f.list("mc.lambdas", dx.mc_lambdas.clone()),
            verify_trials: f.count("verify.trials", dx.verify_trials),
            verify_samples: f.count("verify.samples", dx.verify_samples),
            write_states: f.get("output.states", dx.write_states, |s| {
                s.parse::<bool>().map_err(|_| format!("expected true or false, got '{s}'"))
            }),
        };

        let leftover: Vec<(String, usize)> = f.entries.iter().map(|(k, e)| (k.clone(), e.line)).collect();
        for (k, line) in leftover {
            f.problems.push(format!("line {line}: unknown key '{k}'"));
        }

        for (name, v) in [
            ("sweep_lambda.values", &experiments.sweep_lambdas),
            ("continuous.deltas", &experiments.continuous_deltas),
            ("mc.lambdas", &experiments.mc_lambdas),
        ] {
            if v.iter().any(|&x| x <= 0.0) {
                f.problems.push(format!("{name}: all values must be > 0"));
            }
        }
        if experiments.sweep_eps.iter().any(|&x| x < 0.0) {
            f.problems.push("sweep_eps.values: all values must be >= 0".into());
        }
        for (name, n) in [
            ("continuous.samples", experiments.continuous_samples),
            ("mc.samples", experiments.mc_samples),
            ("verify.trials", experiments.verify_trials),
            ("verify.samples", experiments.verify_samples),
        ] {
            if n == 0 {
                f.problems.push(format!("{name} must be >= 1"));
            }
        }

        let mollify = if mollify_delta == 0.0 {
            None
        } else {
            Some(Mollifier { delta: mollify_delta, m: mollify_m })
        };
        let solver = SolverConfig {
            grid,
            eps,
            dt,
            t_final,
            lambda,
            newton_tol,
            newton_max,
            save_every,
            gamma: GammaOperator {
                bulk: PotentialPair { beta, pi, side: Side::Bulk },
                boundary: PotentialPair { beta: beta_g, pi: pi_g, side: Side::Boundary },
                hypothesis,
            },
            noise: NoiseModel { n_modes_bulk, n_modes_boundary, decay, kind, sigma0, mollify },
            initial,
            substeps,
        };
        match solver.validate() {
            Ok(()) => {}
            Err(Error::ConfigList(list)) => f.problems.extend(list),
            Err(e) => f.problems.push(e.to_string()),
        }

        if f.problems.is_empty() {
            Ok(RunConfig { solver, experiments })
        } else {
            Err(Error::ConfigList(f.problems))
        }
    }
}
