//! `states.bin`: saved states as flat little-endian frames.
//!
//! ```text
//! "DYNS" | u32 version | u64 nx, ny, save_every, n_bulk, n_boundary, frames
//! per frame: u64 step | f64 t | f64 x[n_bulk] | f64 y[n_boundary]
//! ```

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::solver::SavedState;

pub const MAGIC: &[u8; 4] = b"DYNS";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 6 * 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step: u64,
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatesFile {
    pub nx: u64,
    pub ny: u64,
    pub save_every: u64,
    pub n_bulk: u64,
    pub n_boundary: u64,
    pub frames: Vec<Frame>,
}

impl StatesFile {
    pub fn from_saved(grid: &Grid, save_every: usize, saved: &[SavedState]) -> Self {
        Self {
            nx: grid.nx() as u64,
            ny: grid.ny() as u64,
            save_every: save_every as u64,
            n_bulk: grid.n_bulk() as u64,
            n_boundary: grid.n_boundary() as u64,
            frames: saved
                .iter()
                .map(|s| Frame { step: s.step, t: s.t, x: s.state.x.clone(), y: s.state.y.clone() })
                .collect(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let (nb, ng) = (self.n_bulk as usize, self.n_boundary as usize);
        let mut out = Vec::with_capacity(HEADER_LEN + self.frames.len() * 8 * (2 + nb + ng));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.nx, self.ny, self.save_every, self.n_bulk, self.n_boundary, self.frames.len() as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for f in &self.frames {
            if f.x.len() != nb || f.y.len() != ng {
                return Err(Error::Dimension {
                    what: "states.bin frame",
                    expected: nb + ng,
                    got: f.x.len() + f.y.len(),
                });
            }
            out.extend_from_slice(&f.step.to_le_bytes());
            out.extend_from_slice(&f.t.to_le_bytes());
            for v in f.x.iter().chain(&f.y) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |message: String| Error::Decode { what: "states.bin", message };
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes"));
        let (nx, ny, save_every, n_bulk, n_boundary, n_frames) = (word(0), word(1), word(2), word(3), word(4), word(5));
        let per_frame = n_bulk
            .checked_add(n_boundary)
            .and_then(|n| n.checked_add(2))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| bad("frame size overflows".into()))?;
        let body = (bytes.len() - HEADER_LEN) as u64;
        if per_frame.checked_mul(n_frames) != Some(body) {
            return Err(bad(format!("{body} body bytes do not hold {n_frames} frames of {per_frame} bytes")));
        }
        let mut frames = Vec::with_capacity(n_frames as usize);
        let mut vals = bytes[HEADER_LEN..].chunks_exact(8).map(|c| c.try_into().expect("8 bytes"));
        let mut next = || vals.next().expect("length checked above");
        for _ in 0..n_frames {
            let step = u64::from_le_bytes(next());
            let t = f64::from_le_bytes(next());
            let x = (0..n_bulk).map(|_| f64::from_le_bytes(next())).collect();
            let y = (0..n_boundary).map(|_| f64::from_le_bytes(next())).collect();
            frames.push(Frame { step, t, x, y });
        }
        Ok(Self { nx, ny, save_every, n_bulk, n_boundary, frames })
    }
}
