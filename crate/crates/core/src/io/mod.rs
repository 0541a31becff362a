//! Configuration files and everything written to an output directory.

pub mod config;
pub mod series;
pub mod states;

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

pub use config::{ExperimentConfig, RunConfig};
pub use series::{read_series, series_to_string, write_series};
pub use states::{Frame, StatesFile};

use crate::error::Result;
use crate::experiments::Table;
use crate::solver::RunResult;

/// Config echo plus whatever the caller wants to add; no timestamps, so the
/// file is reproducible.
pub fn meta(cfg: &RunConfig, seed: u64, extra: Value) -> Value {
    let config: Map<String, Value> = cfg.entries().into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    let mut m = json!({
        "fingerprint": cfg.fingerprint(),
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    if let (Some(m), Value::Object(extra)) = (m.as_object_mut(), extra) {
        m.extend(extra);
    }
    m
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_meta(dir: &Path, cfg: &RunConfig, seed: u64, extra: Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("meta.json"), &meta(cfg, seed, extra))
}

/// `series.csv`, `meta.json` and, when asked for, `states.bin`.
pub fn write_run(dir: &Path, cfg: &RunConfig, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_series(fs::File::create(dir.join("series.csv"))?, &result.series)?;
    if cfg.experiments.write_states {
        let file = StatesFile::from_saved(&cfg.solver.grid, cfg.solver.save_every, &result.saved);
        fs::write(dir.join("states.bin"), file.encode()?)?;
    }
    let extra = json!({
        "trajectory": result.trajectory,
        "steps": cfg.solver.n_steps(),
        "valid": result.is_valid(),
        "failure": result.failure,
        "newton_monotone": result.newton_monotone,
        "duality_gap_max": result.duality_gap_max,
        "noise_checksum": format!("{:016x}", result.noise_checksum),
    });
    write_meta(dir, cfg, result.seed, extra)
}

pub fn write_table(dir: &Path, table: &Table) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", table.name))).map_err(csv_err)?;
    w.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(e.into())
}

/// `report.json` and `tables/*.csv`.
pub fn write_report(dir: &Path, report: &impl Serialize, tables: &[Table]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), report)?;
    for t in tables {
        write_table(&dir.join("tables"), t)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::run_trajectory;

    #[test]
    fn run_directory_contents() {
        let mut cfg: RunConfig = "grid.nx = 8\ngrid.ny = 5\nsolver.T = 0.005\noutput.states = true\n".parse().unwrap();
        cfg.solver.save_every = 2;
        let r = run_trajectory(&cfg.solver, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &cfg, &r).unwrap();
        let text = fs::read_to_string(dir.path().join("series.csv")).unwrap();
        assert_eq!(read_series(text.as_bytes()).unwrap(), r.series);
        let states = StatesFile::decode(&fs::read(dir.path().join("states.bin")).unwrap()).unwrap();
        assert_eq!((states.nx, states.ny, states.save_every), (8, 5, 2));
        assert_eq!(states.frames.len(), r.saved.len());
        assert_eq!(states.frames.last().unwrap().x, r.final_state().unwrap().x);
        let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["fingerprint"], cfg.fingerprint());
        assert_eq!(meta["seed"], 3);
        assert_eq!(meta["config"]["grid.nx"], "8");
        assert_eq!(meta["steps"], 5);
    }

    #[test]
    fn tables_use_round_trip_floats() {
        let dir = tempfile::tempdir().unwrap();
        let t = Table { name: "demo".into(), header: vec!["a".into(), "b".into()], rows: vec![vec![0.1, 1.0 / 3.0]] };
        write_report(dir.path(), &json!({"ok": true}), &[t]).unwrap();
        let text = fs::read_to_string(dir.path().join("tables/demo.csv")).unwrap();
        assert_eq!(text, "a,b\n0.1,0.3333333333333333\n");
        assert!(dir.path().join("report.json").exists());
    }
}
