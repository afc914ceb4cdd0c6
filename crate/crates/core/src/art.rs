//! Direct-beam irradiance from an extraterrestrial spectrum and atmospheric
//! transmittance factors, and the guidance prior built from it.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::csv::{parse_sections, write_section};
use crate::numerics::{kernel_regress, median_spacing};

/// Validity range of the beam-irradiance composition (nm).
pub const VALID_RANGE_NM: (f64, f64) = (280.0, 4000.0);
const TRANSMITTANCE_SLACK: f64 = 1e-9;

/// Tabulated spectrum: (wavelength nm, value).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    samples: Vec<(f64, f64)>,
}

impl SpectrumTable {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if samples.iter().any(|(w, v)| !w.is_finite() || !v.is_finite()) {
            return Err(Error::NonFiniteValue("spectrum sample".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::GridMismatch("spectrum wavelengths must be strictly increasing".into()));
        }
        if let Some((w, v)) = samples.iter().find(|(_, v)| *v < 0.0) {
            return Err(Error::OutOfRange(format!("negative spectral value {v} at {w} nm")));
        }
        Ok(Self { samples })
    }

    pub fn from_grid(grid: &[f64], values: &[f64]) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::ShapeMismatch("grid and values differ in length".into()));
        }
        Self::new(grid.iter().copied().zip(values.iter().copied()).collect())
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// Kernel regression onto `grid` with the median-spacing bandwidth.
    pub fn resample(&self, grid: &[f64]) -> Result<Vec<f64>> {
        kernel_regress(&self.samples, grid, median_spacing(&self.wavelengths()))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let sections = parse_sections(text)?;
        let sec = &sections[0];
        if sections.len() != 1 || sec.header.len() != 2 {
            return Err(Error::Parse { line: 1, message: "spectrum CSV needs exactly `wavelength_nm,value`".into() });
        }
        Self::new(sec.rows.iter().map(|(_, r)| (r[0], r[1])).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|(w, v)| vec![*w, *v]).collect();
        write_section(&mut out, None, &["wavelength_nm", "value"], &rows);
        out
    }
}

/// Transmittance factor kinds in canonical accumulation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransmittanceKind {
    Rayleigh,
    Ozone,
    No2,
    MixedGas,
    WaterVapor,
    Aerosol,
}

impl std::str::FromStr for TransmittanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "rayleigh" => Self::Rayleigh,
            "ozone" => Self::Ozone,
            "no2" => Self::No2,
            "mixed_gas" | "mixedgas" => Self::MixedGas,
            "water_vapor" | "watervapor" | "h2o" => Self::WaterVapor,
            "aerosol" => Self::Aerosol,
            other => return Err(Error::InvalidConfig(format!("unknown transmittance kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorSource {
    Table(SpectrumTable),
    Rayleigh { airmass: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceFactor {
    pub kind: TransmittanceKind,
    pub source: FactorSource,
}

impl TransmittanceFactor {
    pub fn table(kind: TransmittanceKind, table: SpectrumTable) -> Self {
        Self { kind, source: FactorSource::Table(table) }
    }

    pub fn rayleigh(airmass: f64) -> Self {
        Self { kind: TransmittanceKind::Rayleigh, source: FactorSource::Rayleigh { airmass } }
    }

    /// Factor values on `grid`, each in [0, 1].
    pub fn evaluate(&self, grid: &[f64]) -> Result<Vec<f64>> {
        match &self.source {
            FactorSource::Rayleigh { airmass } => rayleigh_transmittance(grid, *airmass),
            FactorSource::Table(t) => {
                if let Some(&(w, v)) = t.samples().iter().find(|(_, v)| *v > 1.0 + TRANSMITTANCE_SLACK) {
                    return Err(Error::InvalidTransmittance { wavelength: w, value: v });
                }
                let clamped: Vec<(f64, f64)> = t.samples().iter().map(|&(w, v)| (w, v.clamp(0.0, 1.0))).collect();
                let wl: Vec<f64> = clamped.iter().map(|s| s.0).collect();
                kernel_regress(&clamped, grid, median_spacing(&wl))
            }
        }
    }
}

/// `T_R(λ) = exp(−airmass · 0.008735 · λ_µm^−4.08)`, clamped to [0, 1].
pub fn rayleigh_transmittance(grid: &[f64], airmass: f64) -> Result<Vec<f64>> {
    if !(airmass >= 0.0) || !airmass.is_finite() {
        return Err(Error::InvalidConfig(format!("airmass must be non-negative, got {airmass}")));
    }
    Ok(grid
        .iter()
        .map(|&nm| {
            let um = nm / 1000.0;
            (-airmass * 0.008735 * um.powf(-4.08)).exp().clamp(0.0, 1.0)
        })
        .collect())
}

fn check_grid_range(grid: &[f64]) -> Result<()> {
    let (lo, hi) = VALID_RANGE_NM;
    if let Some(w) = grid.iter().find(|w| !(**w >= lo && **w <= hi)) {
        return Err(Error::OutOfRange(format!("{w} nm is outside [{lo}, {hi}] nm")));
    }
    Ok(())
}

/// Ground-level direct-beam irradiance: `e_on` resampled onto `grid` times every factor.
///
/// Factors are multiplied in canonical kind order regardless of their order in
/// `factors`, so permutations give bit-identical output.
pub fn compose_beam_irradiance(
    e_on: &SpectrumTable,
    factors: &[TransmittanceFactor],
    grid: &[f64],
) -> Result<SpectrumTable> {
    check_grid_range(grid)?;
    let mut values = e_on.resample(grid)?;
    let mut ordered: Vec<&TransmittanceFactor> = factors.iter().collect();
    ordered.sort_by_key(|f| f.kind);
    for f in ordered {
        let t = f.evaluate(grid)?;
        for (v, t) in values.iter_mut().zip(t) {
            *v *= t;
        }
    }
    SpectrumTable::from_grid(grid, &values)
}

/// Guidance matrix `Z` (C×N), column-major by pixel in the sense `data[c·N + n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorCube {
    n_pixels: usize,
    grid: Vec<f64>,
    data: Vec<f64>,
}

impl PriorCube {
    pub fn new(grid: Vec<f64>, n_pixels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() * n_pixels {
            return Err(Error::ShapeMismatch(format!(
                "prior {}x{n_pixels} needs {} values, got {}",
                grid.len(),
                grid.len() * n_pixels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("prior".into()));
        }
        Ok(Self { n_pixels, grid, data })
    }

    pub fn zeros(grid: Vec<f64>, n_pixels: usize) -> Self {
        let n = grid.len() * n_pixels;
        Self { n_pixels, grid, data: vec![0.0; n] }
    }

    /// Same spectrum at every pixel.
    pub fn broadcast(grid: Vec<f64>, spectrum: &[f64], n_pixels: usize) -> Result<Self> {
        if spectrum.len() != grid.len() {
            return Err(Error::ShapeMismatch("spectrum length differs from grid".into()));
        }
        let data = spectrum.iter().flat_map(|&v| std::iter::repeat_n(v, n_pixels)).collect();
        Self::new(grid, n_pixels, data)
    }

    /// Uses an image cube directly as guidance (pixels in row-major order).
    pub fn from_cube(cube: &crate::cube::HsiCube) -> Self {
        Self { n_pixels: cube.n_pixels(), grid: cube.grid().to_vec(), data: cube.data().to_vec() }
    }

    pub fn c_bands(&self) -> usize {
        self.grid.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        (0..self.c_bands()).map(|c| self.data[c * self.n_pixels + n]).collect()
    }
}

/// Resamples `e_bn` onto `grid`, rescales to unit peak and broadcasts to `n_pixels`.
pub fn build_prior_cube(e_bn: &SpectrumTable, grid: &[f64], n_pixels: usize) -> Result<PriorCube> {
    if n_pixels == 0 {
        return Err(Error::InvalidConfig("prior needs at least one pixel".into()));
    }
    let mut spec = e_bn.resample(grid)?;
    let peak = spec.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::EmptySpectrum);
    }
    for v in &mut spec {
        *v /= peak;
    }
    PriorCube::broadcast(grid.to_vec(), &spec, n_pixels)
}

/// Built-in stand-ins for externally generated reference tables, used by the synthetic
/// data generator and tests when no measured tables are supplied.
pub mod reference {
    use super::*;

    /// Blackbody at 5778 K scaled to ≈1361 W·m⁻² total, sampled every `step` nm on [280, 4000].
    pub fn extraterrestrial(step: f64) -> SpectrumTable {
        const H: f64 = 6.626_070_15e-34;
        const C: f64 = 2.997_924_58e8;
        const K: f64 = 1.380_649e-23;
        const T: f64 = 5778.0;
        // (R_sun / 1 AU)²
        const DILUTION: f64 = 2.1646e-5;
        let n = ((4000.0 - 280.0) / step).floor() as usize;
        let samples = (0..=n)
            .map(|i| {
                let nm = 280.0 + step * i as f64;
                let l = nm * 1e-9;
                let radiance = 2.0 * H * C * C / l.powi(5) / ((H * C / (l * K * T)).exp() - 1.0);
                // W·m⁻²·m⁻¹ → W·m⁻²·nm⁻¹
                (nm, std::f64::consts::PI * radiance * DILUTION * 1e-9)
            })
            .collect();
        SpectrumTable::new(samples).expect("blackbody table is valid")
    }

    fn absorption_table(step: f64, lines: &[(f64, f64, f64)]) -> SpectrumTable {
        let n = ((4000.0 - 280.0) / step).floor() as usize;
        let samples = (0..=n)
            .map(|i| {
                let nm = 280.0 + step * i as f64;
                let tau: f64 = lines.iter().map(|(c, w, d)| d * (-(nm - c).powi(2) / (2.0 * w * w)).exp()).sum();
                (nm, (-tau).exp())
            })
            .collect();
        SpectrumTable::new(samples).expect("absorption table is valid")
    }

    /// Water-vapour bands (centre nm, width nm, optical depth).
    pub fn water_vapor(step: f64) -> SpectrumTable {
        absorption_table(
            step,
            &[
                (720.0, 10.0, 0.15),
                (820.0, 12.0, 0.2),
                (940.0, 25.0, 0.9),
                (1130.0, 35.0, 1.2),
                (1380.0, 60.0, 6.0),
                (1870.0, 80.0, 7.0),
                (2700.0, 120.0, 8.0),
            ],
        )
    }

    /// Oxygen A-band and CO₂ features.
    pub fn mixed_gas(step: f64) -> SpectrumTable {
        absorption_table(step, &[(762.0, 4.0, 1.5), (1270.0, 8.0, 0.3), (2010.0, 20.0, 0.8), (2060.0, 15.0, 0.6)])
    }

    /// Broad Chappuis band and the UV Hartley–Huggins edge.
    pub fn ozone(step: f64) -> SpectrumTable {
        absorption_table(step, &[(600.0, 70.0, 0.035), (280.0, 18.0, 3.0)])
    }

    /// Default beam irradiance: blackbody top-of-atmosphere spectrum, Rayleigh at airmass
    /// 1.5 and the tabulated absorbers above.
    pub fn beam_irradiance(grid: &[f64]) -> Result<SpectrumTable> {
        let step = 2.0;
        compose_beam_irradiance(
            &extraterrestrial(step),
            &[
                TransmittanceFactor::rayleigh(1.5),
                TransmittanceFactor::table(TransmittanceKind::Ozone, ozone(step)),
                TransmittanceFactor::table(TransmittanceKind::MixedGas, mixed_gas(step)),
                TransmittanceFactor::table(TransmittanceKind::WaterVapor, water_vapor(step)),
            ],
            grid,
        )
    }
}
