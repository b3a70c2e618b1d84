//! The switched linear system `ẋ = A(t) x`, `A(t) ∈ {A_1, …, A_N}`, and its
//! JSON file format.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A finite family of `n × n` modes between which the dynamics switch
/// arbitrarily.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    n: usize,
    modes: Vec<DMatrix<f64>>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    n: usize,
    modes: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
}

impl SwitchedSystem {
    pub fn new(modes: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::with_labels(modes, Vec::new())
    }

    /// Builds a system with mode names. `labels` must be empty or have one
    /// entry per mode.
    pub fn with_labels(modes: Vec<DMatrix<f64>>, labels: Vec<String>) -> Result<Self> {
        let Some(first) = modes.first() else {
            return Err(Error::InvalidSystem("at least one mode is required".into()));
        };
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidSystem("state dimension must be positive".into()));
        }
        for (i, a) in modes.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::InvalidSystem(format!(
                    "mode {} is {}x{}, expected {n}x{n}",
                    i + 1,
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSystem(format!("mode {} has non-finite entries", i + 1)));
            }
        }
        if !labels.is_empty() && labels.len() != modes.len() {
            return Err(Error::InvalidSystem(format!(
                "{} labels given for {} modes",
                labels.len(),
                modes.len()
            )));
        }
        Ok(Self { n, modes, labels })
    }

    /// Convenience constructor from row-major nested arrays.
    pub fn from_rows(modes: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mats = modes
            .iter()
            .enumerate()
            .map(|(i, rows)| matrix_from_rows(rows).map_err(|e| Error::InvalidSystem(format!("mode {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(mats)
    }

    /// The two-mode planar example used throughout the test-suite and
    /// shipped as `systems/two_mode.json`.
    pub fn two_mode_example() -> Self {
        let a1 = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, -0.5]);
        let a2 = DMatrix::from_row_slice(2, 2, &[-2.5, 2.5, -2.5, 1.5]);
        Self::with_labels(vec![a1, a2], vec!["A1".into(), "A2".into()]).expect("valid example")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[DMatrix<f64>] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &DMatrix<f64> {
        &self.modes[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Indices of modes whose spectrum is not strictly in the open left
    /// half-plane. A non-empty result is a warning, not an error.
    pub fn non_hurwitz_modes(&self) -> Vec<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, a)| crate::linalg::spectral_abscissa(a) >= 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// SHA-256 over `n`, `N` and the little-endian IEEE-754 bytes of every
    /// entry (row-major), hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.modes.len() as u64).to_le_bytes());
        for a in &self.modes {
            for r in 0..self.n {
                for c in 0..self.n {
                    // normalise -0.0 so that sign-of-zero noise does not change identity
                    let v = if a[(r, c)] == 0.0 { 0.0f64 } else { a[(r, c)] };
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(text)?;
        let modes = file
            .modes
            .iter()
            .enumerate()
            .map(|(i, rows)| matrix_from_rows(rows).map_err(|e| Error::InvalidSystem(format!("mode {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        let sys = Self::with_labels(modes, file.labels)?;
        if sys.n != file.n {
            return Err(Error::InvalidSystem(format!(
                "declared n = {} but modes are {}x{}",
                file.n, sys.n, sys.n
            )));
        }
        Ok(sys)
    }

    pub fn to_json(&self) -> String {
        let file = SystemFile {
            n: self.n,
            modes: self.modes.iter().map(matrix_to_rows).collect(),
            labels: self.labels.clone(),
        };
        serde_json::to_string_pretty(&file).expect("system serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let nr = rows.len();
    if nr == 0 {
        return Err("empty matrix".into());
    }
    let nc = rows[0].len();
    if rows.iter().any(|r| r.len() != nc) {
        return Err("ragged rows".into());
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_preserves_digest() {
        let sys = SwitchedSystem::two_mode_example();
        let back = SwitchedSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(sys, back);
        assert_eq!(sys.digest(), back.digest());
    }

    #[test]
    fn rejects_bad_shapes() {
        let err = SwitchedSystem::from_json(r#"{"n": 2, "modes": [[[1, 0], [0]]]}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidSystem(_)));
        let err = SwitchedSystem::from_json(r#"{"n": 3, "modes": [[[1, 0], [0, 1]]]}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidSystem(_)));
        let err = SwitchedSystem::from_json(r#"{"n": 1, "modes": []}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidSystem(_)));
    }

    #[test]
    fn digest_detects_mutation() {
        let sys = SwitchedSystem::two_mode_example();
        let mut modes = sys.modes().to_vec();
        modes[1][(1, 1)] += 1e-12;
        let other = SwitchedSystem::new(modes).unwrap();
        assert_ne!(sys.digest(), other.digest());
    }

    #[test]
    fn hurwitz_warning() {
        assert!(SwitchedSystem::two_mode_example().non_hurwitz_modes().is_empty());
        let unstable = SwitchedSystem::new(vec![DMatrix::identity(2, 2)]).unwrap();
        assert_eq!(unstable.non_hurwitz_modes(), vec![0]);
    }
}
