//! Binary snapshot of a network: magic, JSON header, raw little-endian payload.
//!
//! ```text
//! 43 4E 56 42 31 0A 00 00   magic "CNVB1\n\0\0"
//! u64 LE                    header length in bytes
//! JSON header               config, metadata, tensor table
//! f64 LE ...                tensors in header order, row-major
//! ```

use std::fs;
use std::path::Path;

use cnvb_core::network::NetworkConfig;
use cnvb_core::norms::ParamSet;
use cnvb_core::tensor::{RealMatrix, RealTensor4};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const MAGIC: [u8; 8] = *b"CNVB1\n\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u64>,
    /// Free-form creation timestamp; left out by default so files stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub config: NetworkConfig,
    pub params: ParamSet,
    pub initial: Option<ParamSet>,
    pub metadata: Metadata,
}

impl Snapshot {
    pub fn new(config: NetworkConfig, params: ParamSet, initial: Option<ParamSet>) -> Result<Self> {
        config.check_params(&params)?;
        if let Some(init) = &initial {
            config.check_params(init)?;
        }
        Ok(Self {
            config,
            params,
            initial,
            metadata: Metadata::default(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: NetworkConfig,
    metadata: Metadata,
    conv_input_sizes: Vec<usize>,
    has_initial: bool,
    tensors: Vec<TensorEntry>,
}

fn tensor_table(prefix: &str, p: &ParamSet, table: &mut Vec<(TensorEntry, Vec<f64>)>) {
    let mut push = |name: String, shape: Vec<usize>, data: &[f64]| {
        table.push((
            TensorEntry {
                name,
                shape,
                offset: 0,
            },
            data.to_vec(),
        ))
    };
    for (i, k) in p.conv.iter().enumerate() {
        push(format!("{prefix}.conv.{i}"), k.dims().to_vec(), k.data());
    }
    for (i, m) in p.fc.iter().enumerate() {
        push(format!("{prefix}.fc.{i}"), vec![m.rows(), m.cols()], m.data());
    }
    if let Some(w) = &p.readout {
        push(format!("{prefix}.readout"), vec![w.len()], w);
    }
}

/// Serialize to the on-disk byte layout.
pub fn encode_snapshot(snap: &Snapshot) -> Result<Vec<u8>> {
    let mut table = Vec::new();
    tensor_table("current", &snap.params, &mut table);
    if let Some(init) = &snap.initial {
        if init.conv_input_sizes != snap.params.conv_input_sizes {
            return Err(Error::Format("initial parameters use different feature map sizes".into()));
        }
        tensor_table("initial", init, &mut table);
    }
    let mut offset = 0u64;
    for (entry, data) in &mut table {
        entry.offset = offset;
        offset += 8 * data.len() as u64;
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: snap.config.clone(),
        metadata: snap.metadata.clone(),
        conv_input_sizes: snap.params.conv_input_sizes.clone(),
        has_initial: snap.initial.is_some(),
        tensors: table.iter().map(|(e, _)| e.clone()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(format!("header: {e}")))?;
    let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, data) in &table {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Payload {
    entries: std::collections::HashMap<String, Vec<f64>>,
}

impl Payload {
    fn take(&mut self, name: &str) -> Option<Vec<f64>> {
        self.entries.remove(name)
    }
}

fn read_tensors(header: &Header, payload: &[u8]) -> Result<Payload> {
    let mut entries = std::collections::HashMap::new();
    let mut expected = 0u64;
    for t in &header.tensors {
        let count = t
            .shape
            .iter()
            .try_fold(1u64, |acc, &s| acc.checked_mul(s as u64))
            .ok_or_else(|| Error::Format(format!("tensor {} has an oversized shape", t.name)))?;
        if t.offset != expected {
            return Err(Error::Format(format!(
                "tensor {} starts at byte {} but the previous tensor ends at {expected}",
                t.name, t.offset
            )));
        }
        let len = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("tensor {} has an oversized shape", t.name)))?;
        let end = t.offset + len;
        if end > payload.len() as u64 {
            return Err(Error::Format(format!(
                "tensor {} is incomplete: needs bytes {}..{end}, payload has {}",
                t.name,
                t.offset,
                payload.len()
            )));
        }
        let raw = &payload[t.offset as usize..end as usize];
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("tensor {} holds {} at element {i}", t.name, data[i])));
        }
        if entries.insert(t.name.clone(), data).is_some() {
            return Err(Error::Format(format!("tensor {} listed twice", t.name)));
        }
        expected = end;
    }
    if expected != payload.len() as u64 {
        return Err(Error::Format(format!(
            "payload has {} bytes but the tensor table describes {expected}",
            payload.len()
        )));
    }
    Ok(Payload { entries })
}

fn shape_error(name: &str, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("tensor {name}: {e}"))
}

fn assemble(prefix: &str, header: &Header, payload: &mut Payload) -> Result<ParamSet> {
    let shapes: std::collections::HashMap<&str, &[usize]> =
        header.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
    let missing = |name: &str| Error::Format(format!("tensor {name} missing from the header"));
    let mut conv = Vec::new();
    for i in 0..header.config.conv.len() {
        let name = format!("{prefix}.conv.{i}");
        let shape = shapes.get(name.as_str()).ok_or_else(|| missing(&name))?;
        let dims: [usize; 4] = (*shape).try_into().map_err(|_| shape_error(&name, "expected 4 dimensions"))?;
        let data = payload.take(&name).ok_or_else(|| missing(&name))?;
        conv.push(RealTensor4::new(dims, data).map_err(|e| shape_error(&name, e))?);
    }
    let mut fc = Vec::new();
    for i in 0..header.config.fc_widths.len() {
        let name = format!("{prefix}.fc.{i}");
        let shape = shapes.get(name.as_str()).ok_or_else(|| missing(&name))?;
        let [r, c]: [usize; 2] = (*shape).try_into().map_err(|_| shape_error(&name, "expected 2 dimensions"))?;
        let data = payload.take(&name).ok_or_else(|| missing(&name))?;
        fc.push(RealMatrix::new(r, c, data).map_err(|e| shape_error(&name, e))?);
    }
    let name = format!("{prefix}.readout");
    let readout = payload.take(&name);
    let p = ParamSet::new(conv, header.conv_input_sizes.clone(), fc, readout)
        .map_err(|e| Error::Format(format!("{prefix} parameters: {e}")))?;
    header
        .config
        .check_params(&p)
        .map_err(|e| Error::Format(format!("{prefix} parameters do not fit the config: {e}")))?;
    Ok(p)
}

/// Parse the on-disk byte layout.
pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < 8 || bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic: not a snapshot file".into()));
    }
    let len_bytes: [u8; 8] = bytes
        .get(8..16)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Format("file ends inside the header length".into()))?;
    let header_len = u64::from_le_bytes(len_bytes);
    let rest = &bytes[16..];
    if header_len > rest.len() as u64 {
        return Err(Error::Format(format!(
            "header length {header_len} exceeds the {} bytes left in the file",
            rest.len()
        )));
    }
    let (json, payload) = rest.split_at(header_len as usize);
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {}", header.format_version)));
    }
    header
        .config
        .validate()
        .map_err(|e| Error::Format(format!("config: {e}")))?;
    let mut tensors = read_tensors(&header, payload)?;
    let params = assemble("current", &header, &mut tensors)?;
    let initial = if header.has_initial {
        Some(assemble("initial", &header, &mut tensors)?)
    } else {
        None
    };
    if let Some(name) = tensors.entries.keys().min() {
        return Err(Error::Format(format!("unexpected tensor {name}")));
    }
    Ok(Snapshot {
        config: header.config,
        params,
        initial,
        metadata: header.metadata,
    })
}

pub fn write_snapshot(path: impl AsRef<Path>, snap: &Snapshot) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_snapshot(snap)?).map_err(io_err(path))
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    decode_snapshot(&fs::read(path).map_err(io_err(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cnvb_core::network::Activation;
    use cnvb_core::rng::SeededRng;
    use cnvb_core::train::init_params;

    fn sample() -> Snapshot {
        let config = NetworkConfig::basic(4, 2, 3, 2, Activation::Relu);
        let p = init_params(&config, &mut SeededRng::new(3)).unwrap();
        Snapshot::new(config, p.clone(), Some(p)).unwrap()
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let bytes = encode_snapshot(&s).unwrap();
        assert_eq!(&bytes[..8], &[0x43, 0x4E, 0x56, 0x42, 0x31, 0x0A, 0x00, 0x00]);
        assert_eq!(decode_snapshot(&bytes).unwrap(), s);
        assert_eq!(encode_snapshot(&decode_snapshot(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn truncation_names_first_incomplete_tensor() {
        let bytes = encode_snapshot(&sample()).unwrap();
        let err = decode_snapshot(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("initial.readout")), "{err}");
        // cut inside the first tensor
        let hl = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let err = decode_snapshot(&bytes[..16 + hl + 12]).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("current.conv.0")), "{err}");
    }

    #[test]
    fn nan_is_numeric() {
        let mut bytes = encode_snapshot(&sample()).unwrap();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_snapshot(&bytes), Err(Error::Numeric(_))));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_snapshot(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_snapshot(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_snapshot(&[]), Err(Error::Format(_))));
    }
}
