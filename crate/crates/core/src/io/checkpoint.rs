//! Checkpoint byte format (little-endian throughout):
//!
//! ```text
//! "MSDC"                     magic, 4 bytes
//! u32                        format version (1)
//! u32 + UTF-8                TOML header: [network] config, epoch, seed
//! u32                        tensor count
//! per tensor:
//!   u16 + UTF-8              name
//!   u8                       rank
//!   u32 × rank               dims
//!   f32 × Π dims             values, row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::net::{param_layout, Network, NetworkConfig};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"MSDC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

/// Serialized network parameters with the configuration that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub epoch: usize,
    pub seed: u64,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    epoch: usize,
    seed: u64,
    network: NetworkConfig,
}

impl Checkpoint {
    /// Snapshot of a network's parameters, stored as `f32`.
    pub fn from_network<T: Scalar>(net: &Network<T>, epoch: usize, seed: u64) -> Self {
        let tensors = net
            .param_info()
            .iter()
            .zip(net.params())
            .map(|(info, values)| NamedTensor {
                name: info.name.clone(),
                dims: info.dims.clone(),
                values: values.iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect();
        Checkpoint {
            config: net.config().clone(),
            epoch,
            seed,
            tensors,
        }
    }

    /// Checks that every layout tensor appears once, in order, with its
    /// expected dims and element count.
    pub fn validate(&self) -> Result<()> {
        let layout = param_layout(&self.config)?;
        if layout.len() != self.tensors.len() {
            return Err(Error::TensorMismatch {
                name: "*".into(),
                detail: format!(
                    "{} tensors stored, configuration needs {}",
                    self.tensors.len(),
                    layout.len()
                ),
            });
        }
        for (info, t) in layout.iter().zip(&self.tensors) {
            if info.name != t.name {
                return Err(Error::TensorMismatch {
                    name: t.name.clone(),
                    detail: format!("expected {} at this position", info.name),
                });
            }
            if info.dims != t.dims || t.values.len() != info.len() {
                return Err(Error::TensorMismatch {
                    name: t.name.clone(),
                    detail: format!("dims {:?} do not match configured {:?}", t.dims, info.dims),
                });
            }
        }
        Ok(())
    }

    pub fn to_network<T: Scalar>(&self) -> Result<Network<T>> {
        self.validate()?;
        let values = self
            .tensors
            .iter()
            .map(|t| t.values.iter().map(|&v| T::of(f64::from(v))).collect())
            .collect();
        Network::from_parts(self.config.clone(), values)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = toml::to_string(&Header {
            epoch: self.epoch,
            seed: self.seed,
            network: self.config.clone(),
        })
        .map_err(|e| Error::Config(format!("cannot serialize checkpoint header: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let name_len = u16::try_from(name.len()).map_err(|_| Error::TensorMismatch {
                name: t.name.clone(),
                detail: "name too long".into(),
            })?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses and validates checkpoint bytes; `path` labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            path,
        };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                found: magic,
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                expected: VERSION,
                found: version,
            });
        }
        let header_len = r.u32("header length")? as usize;
        let header_text = std::str::from_utf8(r.take(header_len, "header")?).map_err(|_| {
            Error::Config(format!(
                "{}: checkpoint header is not UTF-8",
                path.display()
            ))
        })?;
        let header: Header = toml::from_str(header_text)
            .map_err(|e| Error::Config(format!("{}: checkpoint header: {e}", path.display())))?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len =
                u16::from_le_bytes(r.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
            let name =
                String::from_utf8(r.take(name_len, "tensor name")?.to_vec()).map_err(|_| {
                    Error::TensorMismatch {
                        name: "?".into(),
                        detail: "name is not UTF-8".into(),
                    }
                })?;
            let rank = r.take(1, "rank")?[0] as usize;
            let dims = (0..rank)
                .map(|_| r.u32("dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = dims.iter().product();
            let values = r
                .take(len * 4, "tensor values")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(NamedTensor { name, dims, values });
        }
        let ckpt = Checkpoint {
            config: header.network,
            epoch: header.epoch,
            seed: header.seed,
            tensors,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < n {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                what,
                expected: n,
                found: rest.len(),
            });
        }
        self.pos += n;
        Ok(&rest[..n])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Writes a checkpoint atomically.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_network, count_parameters, ParamScope};

    fn small() -> NetworkConfig {
        NetworkConfig {
            measurement_rate: 0.25,
            block_size: 4,
            mfe_channels: 2,
            layers_per_channel: 2,
            filters_per_layer: 3,
            channel_patterns: Vec::new(),
            fusion_filters: 3,
            head_kernel: 3,
        }
        .normalized()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let net: Network<f32> = build_network(&small(), 4).unwrap();
        let ckpt = Checkpoint::from_network(&net, 3, 4);
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_checkpoint(&ckpt, &a).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        assert_eq!(loaded, ckpt);
        save_checkpoint(&loaded, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(loaded.to_network::<f32>().unwrap(), net);
    }

    #[test]
    fn layout_of_bytes() {
        let net: Network<f32> = build_network(&small(), 1).unwrap();
        let bytes = Checkpoint::from_network(&net, 0, 1).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"MSDC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[12..12 + header_len]).unwrap();
        assert!(header.contains("measurement_rate = 0.25"));
        let count = u32::from_le_bytes(bytes[12 + header_len..16 + header_len].try_into().unwrap());
        assert_eq!(count as usize, net.param_info().len());
        let first = 16 + header_len;
        let name_len = u16::from_le_bytes(bytes[first..first + 2].try_into().unwrap()) as usize;
        assert_eq!(
            &bytes[first + 2..first + 2 + name_len],
            b"measurement.weight"
        );
        assert_eq!(bytes[first + 2 + name_len], 4);
    }

    #[test]
    fn corruption_is_reported_distinctly() {
        let net: Network<f32> = build_network(&small(), 1).unwrap();
        let good = Checkpoint::from_network(&net, 0, 1).to_bytes().unwrap();
        let p = Path::new("x.ckpt");

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad, p),
            Err(Error::BadMagic { .. })
        ));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&bad, p),
            Err(Error::VersionMismatch { found: 2, .. })
        ));

        assert!(matches!(
            Checkpoint::from_bytes(&good[..good.len() - 3], p),
            Err(Error::Truncated { .. })
        ));

        let mut ckpt = Checkpoint::from_network(&net, 0, 1);
        ckpt.tensors[1].dims = vec![1, 1, 4, 16];
        let bytes = ckpt.to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes, p),
            Err(Error::TensorMismatch { .. })
        ));
    }

    #[test]
    fn full_size_mfe_tensors_match_parameter_count() {
        let cfg = NetworkConfig::new(0.1, 2);
        let net: Network<f32> = build_network(&cfg, 0).unwrap();
        let ckpt = Checkpoint::from_network(&net, 0, 0);
        let mfe: usize = ckpt
            .tensors
            .iter()
            .filter(|t| t.name.starts_with("mfe.") && t.name.ends_with(".weight"))
            .map(|t| t.values.len())
            .sum();
        assert_eq!(mfe, 88_640);
        assert_eq!(mfe, count_parameters(&cfg, ParamScope::MfeOnly).unwrap());
    }
}
