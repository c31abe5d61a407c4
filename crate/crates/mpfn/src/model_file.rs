//! Persisted router: a binary body and a JSON sidecar.
//!
//! Body layout, all integers `u64` and floats `f64`, little-endian:
//! `b"MICP1"`, K, B, d, K*d center coordinates row-major, then for each
//! prompter its support length followed by that many training row indices.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use mixturepfn_core::micp::{ClusterMode, MicpConfig, MicpModel};
use mixturepfn_core::Matrix;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 5] = b"MICP1";

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: not a router file")]
    BadMagic(PathBuf),
    #[error("{path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Sidecar {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub gamma: f64,
    pub mode: String,
    pub seed: u64,
    pub n_train: usize,
    pub kmeans_iters: usize,
    pub self_routing: bool,
    pub leaf_size: usize,
}

/// Plain data read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub budget: usize,
    pub centers: Matrix,
    pub supports: Vec<Vec<usize>>,
    pub sidecar: Sidecar,
}

impl StoredModel {
    pub fn from_model(model: &MicpModel, cfg: &MicpConfig) -> Self {
        Self {
            budget: model.budget(),
            centers: model.centers().clone(),
            supports: model.prompt_supports().to_vec(),
            sidecar: Sidecar {
                gamma: model.gamma(),
                mode: model.mode().as_str().into(),
                seed: model.seed(),
                n_train: model.n_train(),
                kmeans_iters: cfg.kmeans_iters,
                self_routing: cfg.self_routing,
                leaf_size: cfg.leaf_size,
            },
        }
    }

    pub fn config(&self) -> Option<MicpConfig> {
        Some(MicpConfig {
            budget: self.budget,
            gamma: self.sidecar.gamma,
            mode: ClusterMode::parse(&self.sidecar.mode)?,
            seed: self.sidecar.seed,
            kmeans_iters: self.sidecar.kmeans_iters,
            self_routing: self.sidecar.self_routing,
            leaf_size: self.sidecar.leaf_size,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [self.supports.len(), self.budget, self.centers.cols()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in self.centers.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for s in &self.supports {
            out.extend_from_slice(&(s.len() as u64).to_le_bytes());
            for &i in s {
                out.extend_from_slice(&(i as u64).to_le_bytes());
            }
        }
        out
    }

    /// Parses a body; the sidecar is supplied separately.
    pub fn decode(bytes: &[u8], sidecar: Sidecar) -> Result<Self, String> {
        let rest = bytes.strip_prefix(MAGIC).ok_or("bad magic")?;
        let mut words = rest.chunks_exact(8);
        if !words.remainder().is_empty() {
            return Err("truncated body".into());
        }
        fn next(words: &mut std::slice::ChunksExact<'_, u8>) -> Result<[u8; 8], String> {
            words
                .next()
                .map(|w| w.try_into().expect("8-byte chunk"))
                .ok_or_else(|| "truncated body".to_string())
        }
        fn next_usize(words: &mut std::slice::ChunksExact<'_, u8>) -> Result<usize, String> {
            usize::try_from(u64::from_le_bytes(next(words)?))
                .map_err(|_| "count overflows".to_string())
        }
        let k = next_usize(&mut words)?;
        let budget = next_usize(&mut words)?;
        let d = next_usize(&mut words)?;
        let n_coords = k.checked_mul(d).ok_or("center matrix too large")?;
        if n_coords > rest.len() / 8 {
            return Err("truncated body".into());
        }
        let mut coords = Vec::with_capacity(n_coords);
        for _ in 0..n_coords {
            coords.push(f64::from_le_bytes(next(&mut words)?));
        }
        let mut supports = Vec::with_capacity(k);
        for _ in 0..k {
            let len = next_usize(&mut words)?;
            if len > rest.len() / 8 {
                return Err("truncated body".into());
            }
            let mut s = Vec::with_capacity(len);
            for _ in 0..len {
                s.push(next_usize(&mut words)?);
            }
            supports.push(s);
        }
        if next(&mut words).is_ok() {
            return Err("trailing bytes".into());
        }
        Ok(Self {
            budget,
            centers: Matrix::from_vec(k, d, coords),
            supports,
            sidecar,
        })
    }
}

/// Sidecar path for a body path: `model.micp` -> `model.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save(path: &Path, model: &StoredModel) -> Result<(), ModelFileError> {
    let io = |source| ModelFileError::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = crate::csvio::create(path).map_err(io)?;
    w.write_all(&model.encode()).map_err(io)?;
    w.flush().map_err(io)?;
    crate::csvio::write_json(&sidecar_path(path), &model.sidecar).map_err(|source| {
        ModelFileError::Io {
            path: sidecar_path(path),
            source,
        }
    })
}

pub fn load(path: &Path) -> Result<StoredModel, ModelFileError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| ModelFileError::Io {
            path: path.to_owned(),
            source,
        })?;
    if !bytes.starts_with(MAGIC) {
        return Err(ModelFileError::BadMagic(path.to_owned()));
    }
    let sc = sidecar_path(path);
    let text = std::fs::read_to_string(&sc).map_err(|source| ModelFileError::Io {
        path: sc.clone(),
        source,
    })?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|source| ModelFileError::Sidecar { path: sc, source })?;
    StoredModel::decode(&bytes, sidecar).map_err(|msg| ModelFileError::Corrupt {
        path: path.to_owned(),
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sidecar() -> Sidecar {
        Sidecar {
            gamma: 1.5,
            mode: "constrained".into(),
            seed: 9,
            n_train: 100,
            kmeans_iters: 100,
            self_routing: true,
            leaf_size: 32,
        }
    }

    #[test]
    fn header_layout() {
        let m = StoredModel {
            budget: 3000,
            centers: Matrix::from_rows(&[[1.0, -2.0]]),
            supports: vec![vec![4, 7]],
            sidecar: sidecar(),
        };
        let b = m.encode();
        assert_eq!(&b[..5], b"MICP1");
        assert_eq!(u64::from_le_bytes(b[5..13].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[13..21].try_into().unwrap()), 3000);
        assert_eq!(u64::from_le_bytes(b[21..29].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[29..37].try_into().unwrap()), 1.0);
        assert_eq!(b.len(), 5 + 3 * 8 + 2 * 8 + 8 + 2 * 8);
        assert!(StoredModel::decode(&b[..b.len() - 3], sidecar()).is_err());
        assert!(StoredModel::decode(b"MICP2", sidecar()).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            d in 1usize..5,
            supports in proptest::collection::vec(proptest::collection::vec(0usize..1000, 0..20), 1..6),
            scale in -1e6f64..1e6,
        ) {
            let k = supports.len();
            let centers = Matrix::from_vec(k, d, (0..k * d).map(|i| scale / (i as f64 + 1.0)).collect());
            let m = StoredModel { budget: 20, centers, supports, sidecar: sidecar() };
            prop_assert_eq!(StoredModel::decode(&m.encode(), sidecar()).unwrap(), m);
        }
    }
}
