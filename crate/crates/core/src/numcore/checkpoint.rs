//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "MOTIFCKP"
//! version u32      1
//! hlen    u32      length of the JSON header in bytes
//! header  hlen     {"scalar","step","seed","config","run_config","groups":[{name,shape}]}
//! payload          parameter values in group order, raw IEEE-754 LE
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::denoiser::{DenoiserConfig, DenoiserParams, Weights};
use super::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MOTIFCKP";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: DenoiserParams<T>,
    pub step: u64,
    /// Echo of whatever configuration produced this checkpoint.
    pub run_config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct GroupHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    scalar: String,
    step: u64,
    seed: u64,
    config: DenoiserConfig,
    run_config: serde_json::Value,
    groups: Vec<GroupHeader>,
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            scalar: T::TAG.to_string(),
            step: self.step,
            seed: self.params.seed,
            config: self.params.config.clone(),
            run_config: self.run_config.clone(),
            groups: self
                .params
                .weights
                .params()
                .iter()
                .map(|p| GroupHeader {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header.len() + self.params.param_count() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.params.weights.params() {
            T::to_le_bytes_vec(&p.data, &mut out);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::format("checkpoint", r);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.scalar != T::TAG {
            return Err(bad(&format!(
                "stored scalar type {} but {} requested",
                header.scalar,
                T::TAG
            )));
        }
        header.config.validate()?;
        let mut weights = Weights::<T>::zeros(&header.config);
        let width = std::mem::size_of::<T>();
        let mut cursor = 16 + hlen;
        {
            let groups = weights.params_mut();
            if groups.len() != header.groups.len() {
                return Err(bad("group count does not match config"));
            }
            for (p, g) in groups.into_iter().zip(&header.groups) {
                if p.name != g.name || p.shape != g.shape {
                    return Err(bad(&format!("unexpected group {}", g.name)));
                }
                let n = p.data.len() * width;
                let raw = bytes
                    .get(cursor..cursor + n)
                    .ok_or_else(|| bad("truncated payload"))?;
                p.data = T::from_le_bytes_slice(raw);
                cursor += n;
            }
        }
        if cursor != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            params: DenoiserParams {
                config: header.config,
                seed: header.seed,
                weights,
            },
            step: header.step,
            run_config: header.run_config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
            _ => Error::io(path, e),
        })?;
        Self::from_bytes(&bytes)
    }
}
