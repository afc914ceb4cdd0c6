//! Error maps and spectra for visual inspection.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::GrayImage;
use ssrno::HsiCube;

/// Per-pixel spectral angle; zero-norm pixels map to 0.
fn sam_map(pred: &HsiCube, truth: &HsiCube) -> Vec<f64> {
    (0..truth.n_pixels())
        .map(|n| {
            let (p, t) = (pred.pixel(n), truth.pixel(n));
            let dot: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
            let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nt = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if np == 0.0 || nt == 0.0 {
                0.0
            } else {
                (dot / (np * nt)).clamp(-1.0, 1.0).acos()
            }
        })
        .collect()
}

/// 8-bit image of `values / scale`, clamped to [0, 1].
fn gray(width: usize, height: usize, values: &[f64], scale: f64) -> GrayImage {
    let px: Vec<u8> = values
        .iter()
        .map(|v| if scale > 0.0 { ((v / scale).clamp(0.0, 1.0) * 255.0).round() as u8 } else { 0 })
        .collect();
    GrayImage::from_raw(width as u32, height as u32, px).expect("buffer matches dimensions")
}

/// Writes `error_band_NNN.png` (absolute error, common scale), `sam.png`,
/// `band_errors.csv` and `spectra.csv` for the selected `(row, col)` pixels.
pub fn write_report(pred: &HsiCube, truth: &HsiCube, pixels: &[(usize, usize)], dir: &Path) -> Result<Vec<PathBuf>> {
    ssrno::pipeline::evaluate(pred, truth)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (h, w, np) = (truth.height(), truth.width(), truth.n_pixels());
    let err: Vec<f64> = pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b).abs()).collect();
    let scale = err.iter().cloned().fold(0.0, f64::max);
    let mut written = Vec::new();

    let mut table = String::from("band,wavelength_nm,mae,rmse,max_abs\n");
    for (c, wl) in truth.grid().iter().enumerate() {
        let e = &err[c * np..(c + 1) * np];
        let path = dir.join(format!("error_band_{c:03}.png"));
        gray(w, h, e, scale).save(&path).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        let mae = e.iter().sum::<f64>() / np as f64;
        let rmse = (e.iter().map(|v| v * v).sum::<f64>() / np as f64).sqrt();
        let max = e.iter().cloned().fold(0.0, f64::max);
        let _ = writeln!(table, "{c},{wl},{mae},{rmse},{max}");
    }
    let sam = sam_map(pred, truth);
    let path = dir.join("sam.png");
    gray(w, h, &sam, sam.iter().cloned().fold(0.0, f64::max)).save(&path)?;
    written.push(path);
    let path = dir.join("band_errors.csv");
    std::fs::write(&path, table)?;
    written.push(path);

    let mut header = vec!["wavelength_nm".to_string()];
    for (r, c) in pixels {
        if *r >= h || *c >= w {
            return Err(ssrno::Error::OutOfRange(format!("pixel ({r}, {c}) outside {h}x{w}")).into());
        }
        header.push(format!("truth_r{r}_c{c}"));
        header.push(format!("pred_r{r}_c{c}"));
    }
    let mut spectra = header.join(",") + "\n";
    let columns: Vec<(Vec<f64>, Vec<f64>)> =
        pixels.iter().map(|(r, c)| (truth.pixel(r * w + c), pred.pixel(r * w + c))).collect();
    for (b, wl) in truth.grid().iter().enumerate() {
        let mut line = wl.to_string();
        for (t, p) in &columns {
            let _ = write!(line, ",{},{}", t[b], p[b]);
        }
        spectra.push_str(&line);
        spectra.push('\n');
    }
    let path = dir.join("spectra.csv");
    std::fs::write(&path, spectra)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sam_map_orthogonal_and_zero() {
        let grid = vec![500.0, 600.0];
        let t = HsiCube::new(1, 2, grid.clone(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let p = HsiCube::new(1, 2, grid, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let s = sam_map(&p, &t);
        assert!((s[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn gray_scales_and_clamps() {
        let img = gray(3, 1, &[0.0, 0.5, 2.0], 1.0);
        assert_eq!(img.as_raw(), &vec![0, 128, 255]);
        assert_eq!(gray(1, 1, &[3.0], 0.0).as_raw(), &vec![0]);
    }
}
