//! Replays the checked-in fuzz seeds through the same invariants the fuzz
//! targets assert, so the seeds stay valid as formats evolve.

use std::fs;
use std::path::PathBuf;

use dynabc::io::{read_series, series_to_string, RunConfig, StatesFile};
use dynabc::potentials::{MonotoneGraph, Perturbation};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds_parse_and_echo() {
    for (name, bytes) in seeds("config") {
        let cfg: RunConfig = std::str::from_utf8(&bytes).unwrap().parse().unwrap_or_else(|e| panic!("{name}: {e}"));
        let again: RunConfig = cfg.echo().parse().unwrap();
        assert_eq!(again.fingerprint(), cfg.fingerprint(), "{name}");
    }
}

#[test]
fn graph_seeds_round_trip() {
    let mut parsed = 0;
    for (_, bytes) in seeds("graph_spec") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(g) = text.parse::<MonotoneGraph>() {
            assert_eq!(g.to_string().parse::<MonotoneGraph>().unwrap(), g);
            parsed += 1;
        }
        if let Ok(p) = text.parse::<Perturbation>() {
            assert_eq!(p.to_string().parse::<Perturbation>().unwrap(), p);
        }
    }
    assert!(parsed >= 5);
}

#[test]
fn series_seeds_round_trip() {
    for (name, bytes) in seeds("series_csv") {
        let s = read_series(bytes.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(series_to_string(&s).unwrap().as_bytes(), bytes.as_slice(), "{name}");
    }
}

#[test]
fn states_seeds_round_trip() {
    for (name, bytes) in seeds("states_bin") {
        let f = StatesFile::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(f.encode().unwrap(), bytes, "{name}");
    }
}

#[test]
fn non_finite_graph_parameters_are_rejected() {
    for s in ["linear:NaN", "power:inf", "linear:-1", "piecewise:0/0,NaN/1"] {
        let ok = s.parse::<MonotoneGraph>().is_ok_and(|g| g.validate().is_ok());
        assert!(!ok, "{s} accepted");
    }
}
