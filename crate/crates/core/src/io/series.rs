//! `series.csv`: one row per step, floats in shortest round-trip form.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::solver::Series;

pub const HEADER: [&str; 9] = [
    "step",
    "t",
    "norm_H",
    "grad_norm",
    "surf_grad_norm",
    "energy_GL",
    "newton_iters",
    "duality_mass",
    "xi_pairing",
];

pub fn write_series<W: Write>(w: W, s: &Series) -> Result<()> {
    if !s.is_consistent() {
        return Err(Error::Decode { what: "series", message: "columns have different lengths".into() });
    }
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.into());
    out.write_record(HEADER).map_err(io)?;
    for n in 0..s.len() {
        out.write_record([
            s.step[n].to_string(),
            format!("{:?}", s.t[n]),
            format!("{:?}", s.norm_h[n]),
            format!("{:?}", s.grad_norm[n]),
            format!("{:?}", s.surf_grad_norm[n]),
            format!("{:?}", s.energy_gl[n]),
            s.newton_iters[n].to_string(),
            format!("{:?}", s.duality_mass[n]),
            format!("{:?}", s.xi_pairing[n]),
        ])
        .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

pub fn series_to_string(s: &Series) -> Result<String> {
    let mut buf = Vec::new();
    write_series(&mut buf, s)?;
    Ok(String::from_utf8(buf).expect("csv output is ascii"))
}

fn bad(message: String) -> Error {
    Error::Decode { what: "series.csv", message }
}

pub fn read_series<R: Read>(r: R) -> Result<Series> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(bad(format!("unexpected header '{}'", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut s = Series::default();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| bad(format!("row {row}: {e}")))?;
        if rec.len() != HEADER.len() {
            return Err(bad(format!("row {row}: {} fields, expected {}", rec.len(), HEADER.len())));
        }
        let float = |c: usize| {
            rec[c]
                .parse::<f64>()
                .map_err(|_| bad(format!("row {row}, column {}: bad number '{}'", HEADER[c], &rec[c])))
        };
        let int = |c: usize| {
            rec[c]
                .parse::<u64>()
                .map_err(|_| bad(format!("row {row}, column {}: bad integer '{}'", HEADER[c], &rec[c])))
        };
        s.step.push(int(0)?);
        s.t.push(float(1)?);
        s.norm_h.push(float(2)?);
        s.grad_norm.push(float(3)?);
        s.surf_grad_norm.push(float(4)?);
        s.energy_gl.push(float(5)?);
        s.newton_iters.push(int(6)? as usize);
        s.duality_mass.push(float(7)?);
        s.xi_pairing.push(float(8)?);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Series {
        Series {
            step: vec![0, 1],
            t: vec![0.0, 0.1],
            norm_h: vec![1.0, 1.0 / 3.0],
            grad_norm: vec![1e-300, 2.5],
            surf_grad_norm: vec![0.0, f64::MIN_POSITIVE],
            energy_gl: vec![-0.0, 123456.789],
            newton_iters: vec![0, 4],
            duality_mass: vec![0.5, 0.25],
            xi_pairing: vec![0.5, 7e22],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let text = series_to_string(&s).unwrap();
        assert!(text.starts_with("step,t,norm_H,grad_norm,surf_grad_norm,energy_GL,newton_iters,duality_mass,xi_pairing\n"));
        let back = read_series(text.as_bytes()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.energy_gl[0].to_bits(), (-0.0f64).to_bits());
        assert_eq!(series_to_string(&back).unwrap(), text);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_series("a,b\n1,2\n".as_bytes()).is_err());
        let mut text = series_to_string(&sample()).unwrap();
        text.push_str("2,x,1,1,1,1,1,1,1\n");
        let err = read_series(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 4"), "{err}");
        assert!(read_series("".as_bytes()).is_err());
    }
}
