//! Binary checkpoints.
//!
//! Layout (little-endian): magic `SMKL`, version `u16`, kind `u8` (0 quantum,
//! 1 classical), `d: u32`, `N: u32`, `hbar: f64`, `L: f64`, `J: u64`, payload of
//! `f64`, then a CRC-32 of everything before it.
//!
//! Quantum payload: `J` weights, then `J` wavefunctions as interleaved `(re, im)`.
//! Classical payload: per particle `weight, x_1..x_d, xi_1..xi_d`.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIM};
use crate::state::{ClassicalEnsemble, QuantumMixedState};

pub const MAGIC: &[u8; 4] = b"SMKL";
pub const VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 1 + 4 + 4 + 8 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Quantum(QuantumMixedState),
    Classical(ClassicalEnsemble),
}

fn header(out: &mut Vec<u8>, kind: u8, grid: &Grid, hbar: f64, count: usize) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&(grid.dim as u32).to_le_bytes());
    out.extend_from_slice(&(grid.points as u32).to_le_bytes());
    out.extend_from_slice(&hbar.to_le_bytes());
    out.extend_from_slice(&grid.length.to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
}

fn seal(mut out: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn encode_quantum(state: &QuantumMixedState) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * state.rank() * (1 + 2 * state.grid.len()) + 4);
    header(&mut out, 0, &state.grid, state.hbar, state.rank());
    for w in &state.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for psi in &state.wavefunctions {
        for z in psi {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    seal(out)
}

/// `hbar` is stored for symmetry with quantum checkpoints.
pub fn encode_classical(ensemble: &ClassicalEnsemble, hbar: f64) -> Vec<u8> {
    let d = ensemble.grid.dim;
    let mut out = Vec::with_capacity(HEADER + 8 * ensemble.len() * (1 + 2 * d) + 4);
    header(&mut out, 1, &ensemble.grid, hbar, ensemble.len());
    for i in 0..ensemble.len() {
        out.extend_from_slice(&ensemble.weights[i].to_le_bytes());
        for a in 0..d {
            out.extend_from_slice(&ensemble.positions[i][a].to_le_bytes());
        }
        for a in 0..d {
            out.extend_from_slice(&ensemble.velocities[i][a].to_le_bytes());
        }
    }
    seal(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.at + K;
        let slice = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::CheckpointCorrupt(format!("truncated at byte {}", self.at)))?;
        self.at = end;
        Ok(slice.try_into().expect("length checked"))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
}

/// Returns the hbar stored in the header along with the object.
pub fn decode(bytes: &[u8]) -> Result<(Checkpoint, f64)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::CheckpointCorrupt("bad magic (expected SMKL)".into()));
    }
    if bytes.len() < HEADER + 4 {
        return Err(Error::CheckpointCorrupt(format!("truncated header ({} bytes)", bytes.len())));
    }
    let mut r = Reader { bytes, at: 4 };
    let version = u16::from_le_bytes(r.take()?);
    if version != VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: VERSION });
    }
    let body = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body..].try_into().expect("4 bytes"));
    let crc = crc32fast::hash(&bytes[..body]);
    let [kind] = r.take::<1>()?;
    let d = r.u32()? as usize;
    let n = r.u32()? as usize;
    let hbar = r.f64()?;
    let length = r.f64()?;
    let count = u64::from_le_bytes(r.take()?) as usize;
    let grid = Grid::new(d, n, length).map_err(|e| Error::CheckpointCorrupt(format!("header: {e}")))?;
    let per = match kind {
        0 => 1 + 2 * grid.len(),
        1 => 1 + 2 * d,
        k => return Err(Error::CheckpointCorrupt(format!("unknown kind {k}"))),
    };
    let expected = count.checked_mul(per).and_then(|v| v.checked_mul(8)).map(|v| v + HEADER + 4);
    if expected != Some(bytes.len()) {
        return Err(Error::CheckpointCorrupt(format!(
            "length {} does not match header (expected {})",
            bytes.len(),
            expected.map_or("overflow".to_string(), |v| v.to_string())
        )));
    }
    if crc != stored {
        return Err(Error::CheckpointCorrupt(format!("checksum mismatch: stored {stored:08x}, computed {crc:08x}")));
    }
    let object = if kind == 0 {
        let weights = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut wavefunctions = Vec::with_capacity(count);
        for _ in 0..count {
            let psi = (0..grid.len())
                .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
                .collect::<Result<Vec<_>>>()?;
            wavefunctions.push(psi);
        }
        Checkpoint::Quantum(QuantumMixedState::new(grid, hbar, weights, wavefunctions)?)
    } else {
        let mut weights = Vec::with_capacity(count);
        let mut positions = Vec::with_capacity(count);
        let mut velocities = Vec::with_capacity(count);
        for _ in 0..count {
            weights.push(r.f64()?);
            let mut x = [0.0; MAX_DIM];
            let mut v = [0.0; MAX_DIM];
            for xa in x.iter_mut().take(d) {
                *xa = r.f64()?;
            }
            for va in v.iter_mut().take(d) {
                *va = r.f64()?;
            }
            positions.push(x);
            velocities.push(v);
        }
        Checkpoint::Classical(ClassicalEnsemble::new(grid, positions, velocities, weights)?)
    };
    Ok((object, hbar))
}

pub fn write_quantum(state: &QuantumMixedState, path: &Path) -> Result<()> {
    std::fs::write(path, encode_quantum(state))?;
    Ok(())
}

pub fn write_classical(ensemble: &ClassicalEnsemble, hbar: f64, path: &Path) -> Result<()> {
    std::fs::write(path, encode_classical(ensemble, hbar))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(Checkpoint, f64)> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{coherent_state, sample_classical_gaussian};

    #[test]
    fn quantum_round_trip_is_exact() {
        let g = Grid::new(2, 64, 14.0).unwrap();
        let s = coherent_state(&[0.2, -0.1], &[0.3, 0.0], 0.75, g, 0.4).unwrap();
        let (back, hbar) = decode(&encode_quantum(&s)).unwrap();
        assert_eq!(hbar, 0.4);
        assert_eq!(back, Checkpoint::Quantum(s));
    }

    #[test]
    fn classical_round_trip_is_exact() {
        let g = Grid::new(3, 8, 6.0).unwrap();
        let e = sample_classical_gaussian(g, &[0.0; 3], &[0.1; 3], 0.5, 0.2, 50, 9).unwrap();
        let (back, _) = decode(&encode_classical(&e, 0.1)).unwrap();
        assert_eq!(back, Checkpoint::Classical(e));
    }

    #[test]
    fn damaged_files_are_refused() {
        let g = Grid::new(1, 64, 16.0).unwrap();
        let s = coherent_state(&[0.0], &[0.0], 0.6, g, 0.1).unwrap();
        let bytes = encode_quantum(&s);
        assert!(matches!(decode(&bytes[..bytes.len() - 9]), Err(Error::CheckpointCorrupt(_))));
        let mut flipped = bytes.clone();
        flipped[HEADER + 3] ^= 1;
        assert!(matches!(decode(&flipped), Err(Error::CheckpointCorrupt(_))));
        let mut future = bytes;
        future[4] = 7;
        match decode(&future) {
            Err(e @ Error::CheckpointVersion { .. }) => {
                let msg = e.to_string();
                assert!(msg.contains('7') && msg.contains('1'), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }
}
