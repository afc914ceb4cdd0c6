//! Binary HSI and MSI containers.
//!
//! Layout: magic, `u32` little-endian header length, `key=value` UTF-8 header lines, then
//! little-endian samples band-sequential (band-major, then row-major).

use std::path::Path;

use super::header::{join_block, split_block, Header};
use crate::cube::{HsiCube, MsiImage};
use crate::error::{Error, Result};
use crate::scalar::Dtype;

pub const HSI_MAGIC: &[u8] = b"SSRH1";
pub const MSI_MAGIC: &[u8] = b"SSRM1";
const LAYOUT: &str = "band-sequential";

fn push_samples(out: &mut Vec<u8>, data: &[f64], dtype: Dtype) {
    out.reserve(data.len() * dtype.size_of());
    for &v in data {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

fn read_samples(payload: &[u8], count: usize, dtype: Dtype) -> Result<Vec<f64>> {
    let want = count * dtype.size_of();
    if payload.len() < want {
        return Err(Error::TruncatedPayload { expected: want, found: payload.len() });
    }
    if payload.len() > want {
        return Err(Error::Format(format!("{} trailing bytes after the payload", payload.len() - want)));
    }
    let data = match dtype {
        Dtype::F32 => payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4")) as f64).collect(),
        Dtype::F64 => payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8"))).collect(),
    };
    Ok(data)
}

fn check_layout(h: &Header) -> Result<Dtype> {
    let layout = h.get("layout")?;
    if layout != LAYOUT {
        return Err(Error::Format(format!("unsupported layout `{layout}`")));
    }
    h.get("dtype")?.parse()
}

pub fn encode_hsi(cube: &HsiCube, dtype: Dtype) -> Vec<u8> {
    let mut h = Header::new();
    h.push("height", cube.height());
    h.push("width", cube.width());
    h.push("c_bands", cube.c_bands());
    h.push("dtype", dtype);
    h.push("layout", LAYOUT);
    let grid: Vec<String> = cube.grid().iter().map(|w| format!("{w}")).collect();
    h.push("wavelengths_nm", grid.join(","));
    let mut out = join_block(HSI_MAGIC, &h);
    push_samples(&mut out, cube.data(), dtype);
    out
}

/// Parses a cube, validating the whole header before touching the payload.
pub fn decode_hsi(bytes: &[u8]) -> Result<HsiCube> {
    let (h, payload) = split_block(bytes, HSI_MAGIC)?;
    let (height, width, c) = (h.dim("height")?, h.dim("width")?, h.dim("c_bands")?);
    let dtype = check_layout(&h)?;
    let grid = h
        .get("wavelengths_nm")?
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad wavelength `{s}`"))))
        .collect::<Result<Vec<f64>>>()?;
    if grid.len() != c {
        return Err(Error::Format(format!("{} wavelengths for {c} bands", grid.len())));
    }
    if grid.iter().any(|w| !w.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Format("wavelengths must be finite and strictly increasing".into()));
    }
    let count = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Format("dims overflow".into()))?;
    let data = read_samples(payload, count, dtype)?;
    HsiCube::new(height, width, grid, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_hsi(cube: &HsiCube, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    std::fs::write(path, encode_hsi(cube, dtype))?;
    Ok(())
}

pub fn read_hsi(path: impl AsRef<Path>) -> Result<HsiCube> {
    decode_hsi(&std::fs::read(path)?)
}

pub fn encode_msi(img: &MsiImage, dtype: Dtype) -> Vec<u8> {
    let mut h = Header::new();
    h.push("height", img.height());
    h.push("width", img.width());
    h.push("m_bands", img.m_bands());
    h.push("dtype", dtype);
    h.push("layout", LAYOUT);
    h.push("srf_name", img.srf_name());
    let mut out = join_block(MSI_MAGIC, &h);
    push_samples(&mut out, img.data(), dtype);
    out
}

pub fn decode_msi(bytes: &[u8]) -> Result<MsiImage> {
    let (h, payload) = split_block(bytes, MSI_MAGIC)?;
    let (height, width, m) = (h.dim("height")?, h.dim("width")?, h.dim("m_bands")?);
    let dtype = check_layout(&h)?;
    let name = h.get("srf_name")?.to_string();
    let count = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(m))
        .ok_or_else(|| Error::Format("dims overflow".into()))?;
    let data = read_samples(payload, count, dtype)?;
    MsiImage::new(m, height, width, data, name).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_msi(img: &MsiImage, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    std::fs::write(path, encode_msi(img, dtype))?;
    Ok(())
}

pub fn read_msi(path: impl AsRef<Path>) -> Result<MsiImage> {
    decode_msi(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> HsiCube {
        let grid = vec![400.0, 450.5, 2500.0];
        let data = (0..3 * 2 * 4).map(|i| (i as f64 * 0.731).sin() / 3.0).collect();
        HsiCube::new(2, 4, grid, data).unwrap()
    }

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let c = cube();
        assert_eq!(decode_hsi(&encode_hsi(&c, Dtype::F64)).unwrap(), c);
    }

    #[test]
    fn f32_round_trip_is_bit_exact_for_f32_values() {
        let c = cube();
        let rounded: Vec<f64> = c.data().iter().map(|&v| v as f32 as f64).collect();
        let c = HsiCube::new(2, 4, c.grid().to_vec(), rounded).unwrap();
        assert_eq!(decode_hsi(&encode_hsi(&c, Dtype::F32)).unwrap(), c);
    }

    #[test]
    fn single_sample_file_size() {
        let c = HsiCube::new(1, 1, vec![550.0], vec![0.25]).unwrap();
        let b32 = encode_hsi(&c, Dtype::F32);
        let b64 = encode_hsi(&c, Dtype::F64);
        assert_eq!(b64.len() - b32.len(), 4);
        let header_len = u32::from_le_bytes(b32[5..9].try_into().unwrap()) as usize;
        assert_eq!(b32.len(), 5 + 4 + header_len + 4);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = encode_hsi(&cube(), Dtype::F64);
        let good = bytes.clone();
        bytes[0] = b'X';
        assert!(matches!(decode_hsi(&bytes), Err(Error::Format(_))));
        let short = &good[..good.len() - 3];
        assert!(matches!(decode_hsi(short), Err(Error::TruncatedPayload { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_hsi(&long), Err(Error::Format(_))));

        let text = String::from_utf8_lossy(&good[9..]).to_string();
        for (from, to) in [
            ("c_bands=3", "c_bands=4"),
            ("dtype=f64", "dtype=f16"),
            ("layout=band-sequential", "layout=bip"),
            ("400,", "460,"),
        ] {
            let swapped = text.replacen(from, to, 1);
            let h_end = swapped.find("wavelengths_nm=").unwrap();
            let h_end = h_end + swapped[h_end..].find('\n').unwrap() + 1;
            let mut b = HSI_MAGIC.to_vec();
            b.extend_from_slice(&(h_end as u32).to_le_bytes());
            b.extend_from_slice(&swapped.as_bytes()[..h_end]);
            b.extend_from_slice(&good[good.len() - 3 * 8 * 8..]);
            assert!(matches!(decode_hsi(&b), Err(Error::Format(_))), "{from} -> {to}");
        }
    }

    #[test]
    fn msi_round_trip_and_files() {
        let img = MsiImage::new(2, 1, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "cam 7").unwrap();
        assert_eq!(decode_msi(&encode_msi(&img, Dtype::F64)).unwrap(), img);
        assert!(decode_msi(&encode_hsi(&cube(), Dtype::F64)).is_err());
        let dir = std::env::temp_dir().join(format!("ssrno-container-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        write_hsi(&cube(), dir.join("c.hsi"), Dtype::F64).unwrap();
        assert_eq!(read_hsi(dir.join("c.hsi")).unwrap(), cube());
        assert!(matches!(read_hsi(dir.join("missing.hsi")), Err(Error::Io(_))));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
