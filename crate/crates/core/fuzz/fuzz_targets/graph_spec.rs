#![no_main]

use dynabc::noise::DiffusionKind;
use dynabc::potentials::{MonotoneGraph, Perturbation};
use dynabc::solver::InitialProfile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = text.parse::<MonotoneGraph>() {
        let back: MonotoneGraph = g.to_string().parse().expect("display parses");
        assert_eq!(back, g);
        if g.validate().is_ok() {
            for r in [-3.0, -0.5, 0.0, 0.7, 2.0] {
                let _ = g.resolvent(r, 0.1);
            }
        }
    }
    if let Ok(p) = text.parse::<Perturbation>() {
        let _ = p.to_string().parse::<Perturbation>().expect("display parses");
    }
    let _ = text.parse::<InitialProfile>();
    let _ = text.parse::<DiffusionKind>();
});
