//! SpecCube v1 container.
//!
//! ```text
//! "SPECCUB1" | u32 LE header length | UTF-8 JSON header | f32 LE payload (channel-major)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CalibrationState, SpectralCube};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPECCUB1";
const LAYOUT_BSQ: &str = "bsq";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    width: usize,
    height: usize,
    channels: usize,
    wavelength_start_nm: f64,
    wavelength_step_nm: f64,
    calibration_state: CalibrationState,
    layout: String,
}

/// Serializes a cube into any writer.
pub fn write_cube<W: Write>(cube: &SpectralCube, mut w: W) -> std::io::Result<()> {
    let header = Header {
        width: cube.width(),
        height: cube.height(),
        channels: cube.channels(),
        wavelength_start_nm: cube.wavelength_start_nm(),
        wavelength_step_nm: cube.wavelength_step_nm(),
        calibration_state: cube.state(),
        layout: LAYOUT_BSQ.to_string(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut payload = Vec::with_capacity(cube.values().len() * 4);
    for v in cube.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    w.flush()
}

/// Parses a cube from an in-memory SpecCube v1 byte stream.
pub fn read_cube(bytes: &[u8]) -> Result<SpectralCube> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"SPECCUB1\""));
    }
    let len_end = MAGIC.len() + 4;
    if bytes.len() < len_end {
        return Err(Error::format(MAGIC.len() as u64, "truncated header length"));
    }
    let header_len = u32::from_le_bytes(bytes[MAGIC.len()..len_end].try_into().unwrap()) as usize;
    let header_end = len_end
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::format(len_end as u64, format!("header of {header_len} bytes exceeds file")))?;
    let header: Header = serde_json::from_slice(&bytes[len_end..header_end])
        .map_err(|e| Error::format(len_end as u64, format!("invalid header JSON: {e}")))?;
    if header.layout != LAYOUT_BSQ {
        return Err(Error::format(
            len_end as u64,
            format!("unsupported layout `{}`, expected `bsq`", header.layout),
        ));
    }
    let count = header
        .width
        .checked_mul(header.height)
        .and_then(|v| v.checked_mul(header.channels))
        .ok_or_else(|| Error::format(len_end as u64, "header dimensions overflow"))?;
    let payload = &bytes[header_end..];
    if payload.len() != count * 4 {
        return Err(Error::format(
            header_end as u64,
            format!(
                "payload holds {} bytes but the header declares {count} values ({} bytes)",
                payload.len(),
                count * 4
            ),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                (header_end + 4 * i) as u64,
                format!("non-finite value {v}"),
            ));
        }
        values.push(v);
    }
    SpectralCube::new(
        header.width,
        header.height,
        header.channels,
        header.wavelength_start_nm,
        header.wavelength_step_nm,
        header.calibration_state,
        values,
    )
    .map_err(|e| Error::format(header_end as u64, e.to_string()))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<SpectralCube> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_cube(&bytes)
}

pub fn save_cube(cube: &SpectralCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cube(cube, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn to_bytes(cube: &SpectralCube) -> Vec<u8> {
        let mut buf = Vec::new();
        write_cube(cube, &mut buf).unwrap();
        buf
    }

    fn small_cube() -> SpectralCube {
        let values: Vec<f32> = (0..2 * 3 * 4).map(|v| v as f32 * 0.25).collect();
        SpectralCube::new(3, 2, 4, 500.0, 5.0, CalibrationState::Reflectance, values).unwrap()
    }

    #[test]
    fn layout_of_written_file() {
        let bytes = to_bytes(&small_cube());
        assert_eq!(&bytes[..8], b"SPECCUB1");
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[12..12 + hlen]).unwrap();
        assert_eq!(header["layout"], "bsq");
        assert_eq!(header["calibration_state"], "reflectance");
        assert_eq!(header["channels"], 4);
        assert_eq!(bytes.len() - 12 - hlen, 24 * 4);
        // first payload value is channel 0, pixel 0; second is channel 0, pixel 1
        assert_eq!(
            f32::from_le_bytes(bytes[12 + hlen + 4..12 + hlen + 8].try_into().unwrap()),
            0.25
        );
    }

    #[test]
    fn full_size_payload() {
        let cube = SpectralCube::filled(640, 480, 100, CalibrationState::RawCounts, 1.0).unwrap();
        let bytes = to_bytes(&cube);
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(bytes.len() - 12 - hlen, 640 * 480 * 100 * 4);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = to_bytes(&small_cube());
        bytes[0] = b'X';
        match read_cube(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload() {
        let bytes = to_bytes(&small_cube());
        let err = read_cube(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("payload"));
    }

    #[test]
    fn non_finite_payload_names_offset() {
        let mut bytes = to_bytes(&small_cube());
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        match read_cube(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, n - 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.speccube");
        let cube = small_cube();
        save_cube(&cube, &path).unwrap();
        assert_eq!(load_cube(&path).unwrap(), cube);
        assert!(matches!(load_cube(dir.path().join("missing")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            w in 1usize..6, h in 1usize..6, c in 1usize..5,
            start in 300.0f64..800.0, step in 0.5f64..20.0,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed, 0);
            let values: Vec<f32> = (0..w * h * c).map(|_| rng.random_range(-1e6f32..1e6)).collect();
            let cube = SpectralCube::new(w, h, c, start, step, CalibrationState::RawCounts, values).unwrap();
            let bytes = to_bytes(&cube);
            let back = read_cube(&bytes).unwrap();
            prop_assert_eq!(&back, &cube);
            prop_assert_eq!(to_bytes(&back), bytes);
        }
    }
}
