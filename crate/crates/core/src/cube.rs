//! Image containers shared across the pipeline.

use crate::error::{Error, Result};

/// Hyperspectral cube, band-sequential: `data[c·H·W + h·W + w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    grid: Vec<f64>,
    data: Vec<f64>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, grid: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        let want = grid.len() * height * width;
        if data.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} cube needs {want} values, got {}",
                grid.len(),
                height,
                width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("cube sample {i}")));
        }
        Ok(Self { height, width, grid, data })
    }

    pub fn zeros(height: usize, width: usize, grid: Vec<f64>) -> Result<Self> {
        let n = grid.len() * height * width;
        Self::new(height, width, grid, vec![0.0; n])
    }

    pub fn c_bands(&self) -> usize {
        self.grid.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn band(&self, c: usize) -> &[f64] {
        let n = self.n_pixels();
        &self.data[c * n..(c + 1) * n]
    }

    /// Spectrum of pixel `n` (row-major pixel index).
    pub fn pixel(&self, n: usize) -> Vec<f64> {
        let np = self.n_pixels();
        (0..self.c_bands()).map(|c| self.data[c * np + n]).collect()
    }

    pub fn set_pixel(&mut self, n: usize, spectrum: &[f64]) {
        let np = self.n_pixels();
        for (c, v) in spectrum.iter().enumerate() {
            self.data[c * np + n] = *v;
        }
    }

    /// Pixel-major copy: spectrum of each pixel contiguous.
    pub fn to_pixel_major(&self) -> Vec<f64> {
        let (np, nc) = (self.n_pixels(), self.c_bands());
        let mut out = vec![0.0; np * nc];
        for c in 0..nc {
            for n in 0..np {
                out[n * nc + c] = self.data[c * np + n];
            }
        }
        out
    }

    pub fn from_pixel_major(height: usize, width: usize, grid: Vec<f64>, pm: &[f64]) -> Result<Self> {
        let (np, nc) = (height * width, grid.len());
        if pm.len() != np * nc {
            return Err(Error::ShapeMismatch("pixel-major buffer length".into()));
        }
        let mut data = vec![0.0; np * nc];
        for n in 0..np {
            for c in 0..nc {
                data[c * np + n] = pm[n * nc + c];
            }
        }
        Self::new(height, width, grid, data)
    }

    /// Keeps only the listed bands, in the given order.
    pub fn select_bands(&self, bands: &[usize]) -> Result<Self> {
        let np = self.n_pixels();
        let mut grid = Vec::with_capacity(bands.len());
        let mut data = Vec::with_capacity(bands.len() * np);
        for &c in bands {
            if c >= self.c_bands() {
                return Err(Error::ShapeMismatch(format!("band {c} out of range")));
            }
            grid.push(self.grid[c]);
            data.extend_from_slice(self.band(c));
        }
        Self::new(self.height, self.width, grid, data)
    }

    /// Spatial crop `[y0, y0+h) × [x0, x0+w)`, all bands.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::ShapeMismatch(format!(
                "crop {h}x{w}@({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.c_bands() * h * w);
        for c in 0..self.c_bands() {
            let band = self.band(c);
            for y in y0..y0 + h {
                data.extend_from_slice(&band[y * self.width + x0..y * self.width + x0 + w]);
            }
        }
        Self::new(h, w, self.grid.clone(), data)
    }
}

/// Multispectral observation `X`, band-sequential like [`HsiCube`].
#[derive(Debug, Clone, PartialEq)]
pub struct MsiImage {
    m_bands: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    srf_name: String,
}

impl MsiImage {
    pub fn new(
        m_bands: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
        srf_name: impl Into<String>,
    ) -> Result<Self> {
        if data.len() != m_bands * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{m_bands}x{height}x{width} image needs {} values, got {}",
                m_bands * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("image sample {i}")));
        }
        Ok(Self { m_bands, height, width, data, srf_name: srf_name.into() })
    }

    pub fn m_bands(&self) -> usize {
        self.m_bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn srf_name(&self) -> &str {
        &self.srf_name
    }

    pub fn pixel(&self, n: usize) -> Vec<f64> {
        let np = self.n_pixels();
        (0..self.m_bands).map(|m| self.data[m * np + n]).collect()
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::ShapeMismatch("msi crop out of bounds".into()));
        }
        let np = self.n_pixels();
        let mut data = Vec::with_capacity(self.m_bands * h * w);
        for m in 0..self.m_bands {
            let band = &self.data[m * np..(m + 1) * np];
            for y in y0..y0 + h {
                data.extend_from_slice(&band[y * self.width + x0..y * self.width + x0 + w]);
            }
        }
        Self::new(self.m_bands, h, w, data, self.srf_name.clone())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::ShapeMismatch("wavelength grid is empty".into()));
    }
    if grid.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteValue("wavelength grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridMismatch("wavelengths must be strictly increasing".into()));
    }
    Ok(())
}

/// `count` evenly spaced wavelengths from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count).map(|i| if i == count - 1 { stop } else { start + step * i as f64 }).collect()
        }
    }
}

/// Parses a `start:stop:count` grid specification (nm).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Parse { line: 0, message: format!("grid `{spec}` is not start:stop:count") };
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || (count > 1 && stop <= start) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    Ok(linspace(start, stop, count))
}
