//! Binary parameter files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "VZA1"            4 bytes magic
//! width_count       u32
//! widths            u32 × width_count
//! activation tag    u8   (0 relu, 1 sigmoid, 2 tanh, 3 identity)
//! seed              u64
//! parameters        f64 × parameter_count, layer order w0 b0 w1 b1 ...
//! ```
//!
//! Weights are stored row-major as `in × out`. A JSON sidecar with the
//! same header fields is written next to the binary file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, MlpSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VZA1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderSidecar {
    pub magic: String,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub parameter_count: usize,
}

pub fn encode(mlp: &Mlp) -> Vec<u8> {
    let spec = mlp.spec();
    let mut out = Vec::with_capacity(17 + 4 * spec.widths.len() + 8 * spec.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(spec.widths.len() as u32).to_le_bytes());
    for &w in &spec.widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.push(spec.activation.tag());
    out.extend_from_slice(&spec.seed.to_le_bytes());
    for v in mlp.flat_params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::BadModelFile("truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::BadModelFile("bad magic".into()));
    }
    let count = r.u32()? as usize;
    if count > 64 {
        return Err(Error::BadModelFile("too many layers".into()));
    }
    let widths = (0..count)
        .map(|_| r.u32().map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let activation = Activation::from_tag(r.take(1)?[0])?;
    let seed = r.u64()?;
    let spec = MlpSpec::new(widths, activation, seed)?;
    let n = spec.parameter_count();
    let flat = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::BadModelFile("trailing bytes".into()));
    }
    let mut mlp = Mlp::init(&spec)?;
    mlp.set_flat_params(&flat)?;
    Ok(mlp)
}

pub fn sidecar(mlp: &Mlp) -> HeaderSidecar {
    let spec = mlp.spec();
    HeaderSidecar {
        magic: "VZA1".into(),
        widths: spec.widths.clone(),
        activation: spec.activation,
        seed: spec.seed,
        parameter_count: spec.parameter_count(),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes `path` and `path.json`.
pub fn save(mlp: &Mlp, path: &Path) -> Result<()> {
    fs::write(path, encode(mlp)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar(mlp))?;
    fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_roundtrip(widths in prop::collection::vec(1usize..6, 2..5), seed in any::<u64>(), act in 0u8..4) {
            let spec = MlpSpec::new(widths, Activation::from_tag(act).unwrap(), seed).unwrap();
            let mlp = Mlp::init(&spec).unwrap();
            let back = decode(&encode(&mlp)).unwrap();
            prop_assert_eq!(back, mlp);
        }
    }

    #[test]
    fn header_layout() {
        let spec = MlpSpec::new(vec![2, 3], Activation::Tanh, 7).unwrap();
        let bytes = encode(&Mlp::init(&spec).unwrap());
        assert_eq!(&bytes[..4], b"VZA1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(bytes[16], 2);
        assert_eq!(&bytes[17..25], &7u64.to_le_bytes());
        assert_eq!(bytes.len(), 25 + 8 * 9);
    }

    #[test]
    fn rejects_corrupt_files() {
        let spec = MlpSpec::new(vec![2, 3], Activation::Relu, 7).unwrap();
        let mut bytes = encode(&Mlp::init(&spec).unwrap());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vza");
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Sigmoid, 1).unwrap();
        let mlp = Mlp::init(&spec).unwrap();
        save(&mlp, &path).unwrap();
        assert_eq!(load(&path).unwrap(), mlp);
        let side: HeaderSidecar =
            serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side, sidecar(&mlp));
    }
}
