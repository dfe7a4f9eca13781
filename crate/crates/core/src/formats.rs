//! Binary artifact formats shared with downstream consumers.
//!
//! `PRIQ` holds one channel of complex baseband samples:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PRIQ"
//! 4       2     version (u16 LE) = 1
//! 6       8     sample_rate (f64 LE, Hz)
//! 14      8     sample_count (u64 LE)
//! 22      8*n   interleaved f32 LE (I, Q)
//! ```
//!
//! `PSGM` holds a row-major matrix (time-Doppler map, CFAR mask, threshold map):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PSGM"
//! 4       2     version (u16 LE) = 1
//! 6       4     rows (u32 LE)
//! 10      4     cols (u32 LE)
//! 14      1     payload kind (0 = f32 magnitude, 1 = interleaved f32 complex)
//! 15      ...   row-major body, f32 LE
//! ```
//!
//! Every artifact written through this module gets a JSON sidecar next to it
//! (`<file>.json`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::caf::DopplerMap;
use crate::cfar::CfarMap;
use crate::error::{Error, Result};
use crate::iq::IqBuffer;

pub const PRIQ_MAGIC: &[u8; 4] = b"PRIQ";
pub const PSGM_MAGIC: &[u8; 4] = b"PSGM";
pub const FORMAT_VERSION: u16 = 1;
pub const PRIQ_HEADER_LEN: usize = 22;
pub const PSGM_HEADER_LEN: usize = 15;

/// Size in bytes of a PRIQ file holding `sample_count` samples.
pub fn priq_file_len(sample_count: u64) -> u64 {
    PRIQ_HEADER_LEN as u64 + 8 * sample_count
}

pub fn encode_priq(buf: &IqBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(PRIQ_HEADER_LEN + 8 * buf.len());
    out.extend_from_slice(PRIQ_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.len() as u64).to_le_bytes());
    for s in &buf.samples {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_priq(bytes: &[u8]) -> std::result::Result<IqBuffer, String> {
    if bytes.len() < PRIQ_HEADER_LEN {
        return Err(format!("file too short for header ({} bytes)", bytes.len()));
    }
    if &bytes[0..4] != PRIQ_MAGIC {
        return Err("bad magic".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let sample_rate = f64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let body = &bytes[PRIQ_HEADER_LEN..];
    if body.len() as u64 != count * 8 {
        return Err(format!(
            "body holds {} bytes, header announces {} samples",
            body.len(),
            count
        ));
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok(IqBuffer::new(samples, sample_rate))
}

pub fn write_priq(path: &Path, buf: &IqBuffer) -> Result<()> {
    write_bytes(path, &encode_priq(buf))
}

pub fn read_priq(path: &Path) -> Result<IqBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_priq(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum PayloadKind {
    Magnitude = 0,
    Complex = 1,
}

/// In-memory image of a PSGM file.
#[derive(Debug, Clone, PartialEq)]
pub struct Psgm {
    pub rows: u32,
    pub cols: u32,
    pub kind: PayloadKind,
    /// Row-major; interleaved (re, im) for [`PayloadKind::Complex`].
    pub data: Vec<f32>,
}

impl Psgm {
    pub fn magnitude(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            rows: rows as u32,
            cols: cols as u32,
            kind: PayloadKind::Magnitude,
            data,
        }
    }

    pub fn from_doppler_map(map: &DopplerMap, kind: PayloadKind) -> Self {
        let data = match kind {
            PayloadKind::Magnitude => map.values.iter().map(|v| v.norm() as f32).collect(),
            PayloadKind::Complex => map
                .values
                .iter()
                .flat_map(|v| [v.re as f32, v.im as f32])
                .collect(),
        };
        Self {
            rows: map.rows as u32,
            cols: map.cols as u32,
            kind,
            data,
        }
    }

    /// Detection mask as 0.0 / 1.0 values.
    pub fn from_detections(map: &CfarMap) -> Self {
        let data = map
            .detections
            .iter()
            .map(|&d| if d { 1.0 } else { 0.0 })
            .collect();
        Self::magnitude(map.rows, map.cols, data)
    }

    pub fn from_thresholds(map: &CfarMap) -> Self {
        let data = map.threshold_map.iter().map(|&t| t as f32).collect();
        Self::magnitude(map.rows, map.cols, data)
    }

    /// Complex values widened back to f64; `None` for magnitude payloads.
    pub fn complex_values(&self) -> Option<Vec<Complex64>> {
        match self.kind {
            PayloadKind::Magnitude => None,
            PayloadKind::Complex => Some(
                self.data
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0] as f64, c[1] as f64))
                    .collect(),
            ),
        }
    }

    /// Per-cell magnitude regardless of payload kind.
    pub fn magnitudes(&self) -> Vec<f32> {
        match self.kind {
            PayloadKind::Magnitude => self.data.clone(),
            PayloadKind::Complex => self
                .data
                .chunks_exact(2)
                .map(|c| (c[0] as f64).hypot(c[1] as f64) as f32)
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PSGM_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(PSGM_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        out.push(self.kind as u8);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < PSGM_HEADER_LEN {
            return Err(format!("file too short for header ({} bytes)", bytes.len()));
        }
        if &bytes[0..4] != PSGM_MAGIC {
            return Err("bad magic".into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let kind = match bytes[14] {
            0 => PayloadKind::Magnitude,
            1 => PayloadKind::Complex,
            k => return Err(format!("unknown payload kind {k}")),
        };
        let per_cell = if kind == PayloadKind::Complex { 2 } else { 1 };
        let expected = rows as usize * cols as usize * per_cell * 4;
        let body = &bytes[PSGM_HEADER_LEN..];
        if body.len() != expected {
            return Err(format!(
                "body holds {} bytes, expected {expected}",
                body.len()
            ));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            rows,
            cols,
            kind,
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// JSON sidecar accompanying a PSGM file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramSidecar {
    pub doppler_axis: Vec<f64>,
    pub time_axis: Vec<f64>,
    pub channel_id: u8,
    pub scenario_hash: String,
    pub config_hash: String,
    /// What the matrix holds: "caf", "cfar" or "threshold".
    pub content: String,
    pub payload_kind: PayloadKind,
    #[serde(default = "yes")]
    pub clutter_cancelled: bool,
}

fn yes() -> bool {
    true
}

/// JSON sidecar accompanying a PRIQ file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqSidecar {
    /// "ref", "sur1" or "sur2".
    pub channel: String,
    pub sample_rate: f64,
    pub sample_count: u64,
    pub scenario_hash: String,
    pub config_hash: String,
}

/// `foo.psgm` → `foo.psgm.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a Doppler map as PSGM plus its sidecar.
pub fn write_doppler_map(
    path: &Path,
    map: &DopplerMap,
    kind: PayloadKind,
    scenario_hash: &str,
    config_hash: &str,
) -> Result<()> {
    Psgm::from_doppler_map(map, kind).write(path)?;
    write_json(
        &sidecar_path(path),
        &SpectrogramSidecar {
            doppler_axis: map.doppler_axis.clone(),
            time_axis: map.time_axis.clone(),
            channel_id: map.channel_id,
            scenario_hash: scenario_hash.to_string(),
            config_hash: config_hash.to_string(),
            content: "caf".into(),
            payload_kind: kind,
            clutter_cancelled: map.clutter_cancelled,
        },
    )
}

/// Reads a complex PSGM map and its sidecar back into a [`DopplerMap`].
pub fn read_doppler_map(path: &Path) -> Result<DopplerMap> {
    let psgm = Psgm::read(path)?;
    let side: SpectrogramSidecar = read_json(&sidecar_path(path))?;
    let values = psgm.complex_values().ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        reason: "magnitude payload cannot be expanded to a complex map".into(),
    })?;
    if side.doppler_axis.len() != psgm.cols as usize || side.time_axis.len() != psgm.rows as usize
    {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "sidecar axes disagree with matrix dimensions".into(),
        });
    }
    Ok(DopplerMap {
        values,
        rows: psgm.rows as usize,
        cols: psgm.cols as usize,
        doppler_axis: side.doppler_axis,
        time_axis: side.time_axis,
        channel_id: side.channel_id,
        clutter_cancelled: side.clutter_cancelled,
    })
}

/// Writes the CFAR detection mask and threshold map as two PSGM files.
pub fn write_cfar_map(
    detections_path: &Path,
    thresholds_path: &Path,
    map: &CfarMap,
    source: &DopplerMap,
    scenario_hash: &str,
    config_hash: &str,
) -> Result<()> {
    for (path, psgm, content) in [
        (detections_path, Psgm::from_detections(map), "cfar"),
        (thresholds_path, Psgm::from_thresholds(map), "threshold"),
    ] {
        psgm.write(path)?;
        write_json(
            &sidecar_path(path),
            &SpectrogramSidecar {
                doppler_axis: source.doppler_axis.clone(),
                time_axis: source.time_axis.clone(),
                channel_id: source.channel_id,
                scenario_hash: scenario_hash.to_string(),
                config_hash: config_hash.to_string(),
                content: content.into(),
                payload_kind: PayloadKind::Magnitude,
                clutter_cancelled: source.clutter_cancelled,
            },
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn priq_header_layout() {
        let buf = IqBuffer::new(vec![Complex64::new(1.0, -2.0)], 125e3);
        let bytes = encode_priq(&buf);
        assert_eq!(bytes.len() as u64, priq_file_len(1));
        assert_eq!(&bytes[0..4], b"PRIQ");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(f64::from_le_bytes(bytes[6..14].try_into().unwrap()), 125e3);
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 1);
        assert_eq!(f32::from_le_bytes(bytes[22..26].try_into().unwrap()), 1.0);
        assert_eq!(f32::from_le_bytes(bytes[26..30].try_into().unwrap()), -2.0);
    }

    #[test]
    fn ten_seconds_at_ten_megahertz_is_eight_hundred_megabytes_of_body() {
        let n = (10.0 * 10e6) as u64;
        assert_eq!(n, 100_000_000);
        assert_eq!(priq_file_len(n) - PRIQ_HEADER_LEN as u64, 800_000_000);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut bytes = encode_priq(&IqBuffer::zeros(4, 1.0));
        bytes[0] = b'X';
        assert!(decode_priq(&bytes).is_err());
        let mut bytes = Psgm::magnitude(1, 2, vec![0.0, 1.0]).encode();
        bytes[3] = b'X';
        assert!(Psgm::decode(&bytes).is_err());
    }

    #[test]
    fn truncated_body_rejected() {
        let bytes = encode_priq(&IqBuffer::zeros(4, 1.0));
        assert!(decode_priq(&bytes[..bytes.len() - 1]).is_err());
        let bytes = Psgm::magnitude(2, 2, vec![0.0; 4]).encode();
        assert!(Psgm::decode(&bytes[..bytes.len() - 4]).is_err());
    }

    #[test]
    fn psgm_header_layout() {
        let p = Psgm {
            rows: 2,
            cols: 3,
            kind: PayloadKind::Complex,
            data: (0..12).map(|v| v as f32).collect(),
        };
        let bytes = p.encode();
        assert_eq!(bytes.len(), PSGM_HEADER_LEN + 48);
        assert_eq!(&bytes[0..4], b"PSGM");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 3);
        assert_eq!(bytes[14], 1);
    }

    proptest! {
        #[test]
        fn priq_roundtrip_is_exact_in_f32(vals in prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), 0..64), rate in 1.0f64..1e8) {
            let buf = IqBuffer::new(vals.iter().map(|&(a, b)| Complex64::new(a as f64, b as f64)).collect(), rate);
            let back = decode_priq(&encode_priq(&buf)).unwrap();
            prop_assert_eq!(back, buf);
        }

        #[test]
        fn psgm_roundtrip(rows in 1usize..6, cols in 1usize..6, complex in any::<bool>(), seed in any::<u32>()) {
            let per = if complex { 2 } else { 1 };
            let data: Vec<f32> = (0..rows * cols * per).map(|i| (i as f32 + seed as f32).sin()).collect();
            let p = Psgm { rows: rows as u32, cols: cols as u32, kind: if complex { PayloadKind::Complex } else { PayloadKind::Magnitude }, data };
            prop_assert_eq!(Psgm::decode(&p.encode()).unwrap(), p);
        }
    }
}
