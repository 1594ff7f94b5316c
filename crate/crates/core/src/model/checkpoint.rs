//! Binary checkpoint format.
//!
//! Layout: the 8-byte magic `GFCKPT01`, a little-endian `u64` manifest length,
//! the JSON manifest, then every tensor as row-major little-endian `f32`
//! in manifest order. `offset` in the manifest counts elements from the start
//! of the data section.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Parameters};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GFCKPT01";
pub const FORMAT: &str = "groupformer-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn for_params(p: &Parameters<f32>) -> Self {
        let mut offset = 0;
        let tensors = p
            .named()
            .into_iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name,
                    shape: [t.rows(), t.cols()],
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config: p.config.clone(),
            tensors,
        }
    }
}

pub fn write_checkpoint(w: &mut impl Write, p: &Parameters<f32>) -> Result<()> {
    let manifest = serde_json::to_vec(&Manifest::for_params(p))?;
    w.write_all(MAGIC)?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(&manifest)?;
    for (_, t) in p.named() {
        for &x in t.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Parameters<f32>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut manifest = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut manifest)?;
    let manifest: Manifest = serde_json::from_slice(&manifest)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    manifest.config.validate()?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() % 4 != 0 {
        return Err(Error::Checkpoint("data section is not whole f32 values".into()));
    }
    let values: Vec<f32> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut params = Parameters::<f32>::zeros(&manifest.config);
    let expected = params.named().len();
    if manifest.tensors.len() != expected {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, config implies {expected}",
            manifest.tensors.len()
        )));
    }
    for ((name, t), entry) in params.named_mut().into_iter().zip(&manifest.tensors) {
        if entry.name != name {
            return Err(Error::Checkpoint(format!(
                "expected tensor {name}, found {}",
                entry.name
            )));
        }
        if entry.shape != [t.rows(), t.cols()] {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?} does not match config ({}, {})",
                entry.shape,
                t.rows(),
                t.cols()
            )));
        }
        let src = values
            .get(entry.offset..entry.offset + t.len())
            .ok_or_else(|| Error::Checkpoint(format!("{name}: data section too short")))?;
        t.as_mut_slice().copy_from_slice(src);
    }
    Ok(params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, p: &Parameters<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, p)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Parameters<f32>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    read_checkpoint(&mut BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let p = Parameters::<f32>::init(&ModelConfig::tiny());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let q = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_corruption() {
        let p = Parameters::<f32>::init(&ModelConfig::tiny());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_checkpoint(&mut bad.as_slice()),
            Err(Error::Checkpoint(_))
        ));
        buf.truncate(buf.len() - 4);
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
    }
}
