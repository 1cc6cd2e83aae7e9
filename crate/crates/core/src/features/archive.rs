//! The `NNWT` weight archive.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "NNWT" | u32 version (1) | u32 tensor count
//! per tensor: u16 name length | name (UTF-8) | u8 rank | u32 extents[rank] | f32 payload
//! u32 metadata length | metadata (UTF-8 JSON)
//! u32 CRC-32 of every preceding byte
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::BackboneSpec;
use crate::error::{Error, Result};
use crate::image_io::write_atomic;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"NNWT";
pub const VERSION: u32 = 1;

/// Input preprocessing for one backbone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneMeta {
    pub mean: [f32; 3],
    pub std: [f32; 3],
    /// Square input extent the backbone was trained at; 0 means "use as given".
    pub input_resolution: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    pub backbones: BTreeMap<String, BackboneMeta>,
}

/// A named tensor with its declared extents (rank 1 to 4).
#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveTensor {
    pub name: String,
    pub extents: Vec<usize>,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightArchive {
    tensors: Vec<ArchiveTensor>,
    index: HashMap<String, usize>,
    pub metadata: ArchiveMetadata,
}

fn extents_to_shape(extents: &[usize]) -> Option<Shape> {
    let mut d = [1usize; 4];
    if extents.is_empty() || extents.len() > 4 {
        return None;
    }
    d[4 - extents.len()..].copy_from_slice(extents);
    Some(Shape::new(d[0], d[1], d[2], d[3]))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("truncated archive at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl WeightArchive {
    pub fn new(metadata: ArchiveMetadata) -> Self {
        WeightArchive {
            metadata,
            ..Default::default()
        }
    }

    /// Adds a tensor whose declared extents are `extents`.
    pub fn insert(&mut self, name: &str, extents: &[usize], data: Vec<f32>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Format(format!("duplicate tensor name `{name}`")));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::Format(format!("tensor name too long: {} bytes", name.len())));
        }
        let shape = extents_to_shape(extents)
            .ok_or_else(|| Error::Format(format!("tensor `{name}` has unsupported rank {}", extents.len())))?;
        let tensor = Tensor::new(shape, data)
            .map_err(|_| Error::Format(format!("tensor `{name}` payload does not match extents {extents:?}")))?;
        self.index.insert(name.to_string(), self.tensors.len());
        self.tensors.push(ArchiveTensor {
            name: name.to_string(),
            extents: extents.to_vec(),
            tensor,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i].tensor)
    }

    pub fn tensors(&self) -> &[ArchiveTensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn backbone_meta(&self, id: &str) -> Result<&BackboneMeta> {
        self.metadata
            .backbones
            .get(id)
            .ok_or_else(|| Error::config(format!("archive carries no metadata for backbone `{id}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.extents.len() as u8);
            for &e in &t.extents {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for v in t.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let meta = serde_json::to_vec(&self.metadata).map_err(|e| Error::Format(e.to_string()))?;
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parses and verifies an archive, then checks that every backbone named
    /// in the metadata has all the tensors its layer spec uses.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 4 + 4 + 4 {
            return Err(Error::Format(format!("archive too short ({} bytes)", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if &body[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected NNWT".into()));
        }
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Format(format!(
                "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported archive version {version}")));
        }
        let count = r.u32()?;
        let mut archive = WeightArchive::default();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8()? as usize;
            let extents = (0..rank).map(|_| r.u32().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = extents.iter().product();
            let payload = r.take(numel.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            archive.insert(&name, &extents, data)?;
        }
        let meta_len = r.u32()? as usize;
        let meta = r.take(meta_len)?;
        if r.pos != body.len() {
            return Err(Error::Format(format!("{} trailing bytes before checksum", body.len() - r.pos)));
        }
        archive.metadata =
            serde_json::from_slice(meta).map_err(|e| Error::Format(format!("metadata: {e}")))?;
        archive.check_complete()?;
        Ok(archive)
    }

    fn check_complete(&self) -> Result<()> {
        for id in self.metadata.backbones.keys() {
            let spec = BackboneSpec::by_id(id)
                .ok_or_else(|| Error::Format(format!("metadata names unknown backbone `{id}`")))?;
            if let Some(missing) = spec.required_tensors().into_iter().find(|n| self.get(n).is_none()) {
                return Err(Error::IncompleteArchive(missing));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> WeightArchive {
        let mut a = WeightArchive::new(ArchiveMetadata::default());
        a.insert("w", &[2, 1, 1, 1], vec![1.5, -2.0]).unwrap();
        a.insert("b", &[2], vec![0.25, f32::MIN_POSITIVE]).unwrap();
        a
    }

    #[test]
    fn hand_assembled_bytes_parse() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"NNWT");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'x');
        bytes.push(2);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3.0f32.to_le_bytes());
        bytes.extend_from_slice(&(-1.0f32).to_le_bytes());
        let meta = br#"{"backbones":{}}"#;
        bytes.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        bytes.extend_from_slice(meta);
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());

        let a = WeightArchive::from_bytes(&bytes).unwrap();
        assert_eq!(a.tensors()[0].extents, vec![1, 2]);
        assert_eq!(a.get("x").unwrap().data(), &[3.0, -1.0]);
        assert_eq!(a.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let a = tiny();
        let bytes = a.to_bytes().unwrap();
        let b = WeightArchive::from_bytes(&bytes).unwrap();
        for (x, y) in a.tensors().iter().zip(b.tensors()) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.extents, y.extents);
            let xb: Vec<u32> = x.tensor.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.tensor.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        assert_eq!(b.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn truncation_and_corruption_are_format_errors() {
        let bytes = tiny().to_bytes().unwrap();
        for cut in [3, 10, bytes.len() - 1] {
            assert!(matches!(WeightArchive::from_bytes(&bytes[..cut]), Err(Error::Format(_))));
        }
        let mut flipped = bytes.clone();
        flipped[20] ^= 0x40;
        assert!(matches!(WeightArchive::from_bytes(&flipped), Err(Error::Format(_))));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(WeightArchive::from_bytes(&magic), Err(Error::Format(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut a = tiny();
        assert!(a.insert("w", &[1], vec![0.0]).is_err());
    }
}
