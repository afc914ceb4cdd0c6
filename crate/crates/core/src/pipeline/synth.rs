//! Synthetic paired scenes: smooth spectra imprinted with the beam-irradiance shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::art::SpectrumTable;
use crate::cube::{linspace, HsiCube, MsiImage};
use crate::error::{Error, Result};
use crate::srf::{degrade, discretize_srf, SrfCurveSet, SrfMatrix};

/// Endmember spectra shared by every scene of a dataset.
pub const ENDMEMBERS: usize = 6;
const BLOBS_PER_MAP: usize = 5;

/// One ground-truth cube with its observation and sensor.
#[derive(Debug, Clone)]
pub struct Scene {
    pub y: HsiCube,
    pub x: MsiImage,
    pub srf: SrfMatrix,
    pub sensor: SrfCurveSet,
}

impl Scene {
    /// Keeps only `bands`, re-discretizing the sensor and re-deriving the observation.
    pub fn restrict(&self, bands: &[usize]) -> Result<Scene> {
        let y = self.y.select_bands(bands)?;
        let srf = discretize_srf(&self.sensor, y.grid())?;
        let x = degrade(&srf, &y)?;
        Ok(Scene { y, x, srf, sensor: self.sensor.clone() })
    }
}

fn endmember(rng: &mut ChaCha8Rng, grid: &[f64]) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(2..=4))
        .map(|_| (rng.gen_range(400.0..2500.0), rng.gen_range(150.0..600.0), rng.gen_range(0.2..1.0)))
        .collect();
    let base = rng.gen_range(0.05..0.2);
    grid.iter()
        .map(|&w| base + bumps.iter().map(|(c, s, a)| a * (-(w - c).powi(2) / (2.0 * s * s)).exp()).sum::<f64>())
        .collect()
}

/// Smooth nonnegative map: a floor plus a few Gaussian blobs.
fn abundance(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let s = size as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..BLOBS_PER_MAP)
        .map(|_| {
            (rng.gen_range(0.0..s), rng.gen_range(0.0..s), rng.gen_range(0.1 * s..0.4 * s), rng.gen_range(0.0..1.0))
        })
        .collect();
    let floor = rng.gen_range(0.0..0.1);
    (0..size * size)
        .map(|i| {
            let (r, c) = ((i / size) as f64, (i % size) as f64);
            floor
                + blobs
                    .iter()
                    .map(|(br, bc, rad, a)| a * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * rad * rad)).exp())
                    .sum::<f64>()
        })
        .collect()
}

/// Generates `scenes` paired cubes of `size × size` pixels on `linspace(400, 2500, c_bands)`.
///
/// Spectra are nonnegative mixtures of a dataset-wide endmember library, multiplied
/// band-wise by `beam` and scaled per scene to peak 1. Each scene picks a random sensor
/// from `srf_db` and observes `X = S·Y`.
pub fn synth_dataset(
    seed: u64,
    scenes: usize,
    size: usize,
    c_bands: usize,
    srf_db: &[SrfCurveSet],
    beam: &SpectrumTable,
) -> Result<Vec<Scene>> {
    if srf_db.is_empty() {
        return Err(Error::InvalidConfig("sensor database is empty".into()));
    }
    if size == 0 || c_bands < 2 {
        return Err(Error::InvalidConfig("scenes need at least 1 pixel and 2 bands".into()));
    }
    let grid = linspace(400.0, 2500.0, c_bands);
    let shape = beam.resample(&grid)?;
    let peak = shape.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::EmptySpectrum);
    }
    let mut lib_rng = ChaCha8Rng::seed_from_u64(seed);
    let library: Vec<Vec<f64>> = (0..ENDMEMBERS).map(|_| endmember(&mut lib_rng, &grid)).collect();

    (0..scenes)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let sensor = srf_db[rng.gen_range(0..srf_db.len())].clone();
            let maps: Vec<Vec<f64>> = (0..ENDMEMBERS).map(|_| abundance(&mut rng, size)).collect();
            let np = size * size;
            let mut data = vec![0.0; c_bands * np];
            for (c, band) in data.chunks_mut(np).enumerate() {
                let imprint = shape[c] / peak;
                for (p, v) in band.iter_mut().enumerate() {
                    *v = imprint * maps.iter().zip(&library).map(|(m, e)| m[p] * e[c]).sum::<f64>();
                }
            }
            let top = data.iter().cloned().fold(0.0, f64::max);
            if top > 0.0 {
                for v in &mut data {
                    *v /= top;
                }
            }
            let y = HsiCube::new(size, size, grid.clone(), data)?;
            let srf = discretize_srf(&sensor, &grid)?;
            let x = degrade(&srf, &y)?;
            Ok(Scene { y, x, srf, sensor })
        })
        .collect()
}
