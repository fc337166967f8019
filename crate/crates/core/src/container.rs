//! Binary interchange container.
//!
//! Layout: 8-byte magic `SCDMTEN\0`, a 4-byte little-endian header length,
//! a UTF-8 JSON header, then the row-major little-endian payload. The same
//! container carries series, epoch sets, rasters, and checkpoints; optional
//! header fields select what is stored.

use crate::error::{Result, ScdmError};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SCDMTEN\0";

/// Named slice of a checkpoint's flat parameter table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ContainerHeader {
    pub dims: Vec<usize>,
    pub dtype: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_labels: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Present only in checkpoints: flat parameter table keyed by layer path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<ParamEntry>>,
    /// Present only in checkpoints: config echo.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl ContainerHeader {
    pub fn new(dims: Vec<usize>) -> Self {
        ContainerHeader {
            dims,
            dtype: "f64".to_string(),
            ..Default::default()
        }
    }

    pub fn n_elements(&self) -> usize {
        self.dims.iter().product()
    }
}

pub fn encode(header: &ContainerHeader, payload: &[f64]) -> Result<Vec<u8>> {
    if header.n_elements() != payload.len() {
        return Err(ScdmError::shape(format!(
            "header dims {:?} imply {} elements, payload has {}",
            header.dims,
            header.n_elements(),
            payload.len()
        )));
    }
    let header_json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(12 + header_json.len() + payload.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    match header.dtype.as_str() {
        "f64" => {
            for v in payload {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        "f32" => {
            for v in payload {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        other => return Err(ScdmError::Container(format!("unsupported dtype {other:?}"))),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(ContainerHeader, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(ScdmError::Container("bad magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + hlen {
        return Err(ScdmError::Container("truncated header".into()));
    }
    let header: ContainerHeader = serde_json::from_slice(&bytes[12..12 + hlen])?;
    let body = &bytes[12 + hlen..];
    let n = header.n_elements();
    let payload = match header.dtype.as_str() {
        "f64" => {
            if body.len() != n * 8 {
                return Err(ScdmError::shape(format!(
                    "payload is {} bytes, dims {:?} require {}",
                    body.len(),
                    header.dims,
                    n * 8
                )));
            }
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f64>>()
        }
        "f32" => {
            if body.len() != n * 4 {
                return Err(ScdmError::shape(format!(
                    "payload is {} bytes, dims {:?} require {}",
                    body.len(),
                    header.dims,
                    n * 4
                )));
            }
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect::<Vec<f64>>()
        }
        other => return Err(ScdmError::Container(format!("unsupported dtype {other:?}"))),
    };
    if payload.iter().any(|v| !v.is_finite()) {
        return Err(ScdmError::NonFinite("container payload".into()));
    }
    Ok((header, payload))
}

pub fn write_file(path: impl AsRef<Path>, header: &ContainerHeader, payload: &[f64]) -> Result<()> {
    let bytes = encode(header, payload)?;
    File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<(ContainerHeader, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_identity() {
        let header = ContainerHeader {
            sample_rate: Some(100.0),
            channel_labels: Some(vec!["a".into(), "b".into()]),
            ..ContainerHeader::new(vec![2, 10])
        };
        let payload: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let bytes = encode(&header, &payload).unwrap();
        let (h2, p2) = decode(&bytes).unwrap();
        assert_eq!(p2, payload);
        assert_eq!(h2.dims, header.dims);
        // re-encoding yields identical bytes
        let bytes2 = encode(&h2, &p2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let header = ContainerHeader::new(vec![30, 10]);
        // payload for 29 channels only
        let payload = vec![0.0; 29 * 10];
        assert!(matches!(
            encode(&header, &payload),
            Err(ScdmError::Shape(_))
        ));
        // forged byte stream with truncated payload
        let good = encode(&ContainerHeader::new(vec![2, 3]), &[1.0; 6]).unwrap();
        let forged = &good[..good.len() - 8];
        assert!(decode(forged).is_err());
    }

    #[test]
    fn non_finite_payload_rejected() {
        let header = ContainerHeader::new(vec![2]);
        let bytes = encode(&header, &[1.0, f64::NAN]);
        // encode does not validate, decode does
        let bytes = bytes.unwrap();
        assert!(matches!(decode(&bytes), Err(ScdmError::NonFinite(_))));
    }

    #[test]
    fn f32_dtype_supported() {
        let header = ContainerHeader {
            dtype: "f32".into(),
            ..ContainerHeader::new(vec![4])
        };
        let bytes = encode(&header, &[1.0, 2.5, -3.0, 0.125]).unwrap();
        let (_, p) = decode(&bytes).unwrap();
        assert_eq!(p, vec![1.0, 2.5, -3.0, 0.125]);
    }
}
