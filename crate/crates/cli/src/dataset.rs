//! On-disk layout of a synthetic dataset directory.
//!
//! ```text
//! scene_000.hsi   ground truth
//! scene_000.msi   observation; its SRF name selects the sensor
//! sensors.csv     SRF database
//! beam.csv        beam-irradiance prior used to imprint the scenes
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ssrno::art::SpectrumTable;
use ssrno::io::{read_hsi, read_msi, write_hsi, write_msi};
use ssrno::pipeline::Scene;
use ssrno::srf::{discretize_srf, find_sensor, load_srf_database, write_srf_database, SrfCurveSet};
use ssrno::Dtype;

pub const SENSORS_FILE: &str = "sensors.csv";
pub const BEAM_FILE: &str = "beam.csv";

fn scene_path(dir: &Path, k: usize, ext: &str) -> PathBuf {
    dir.join(format!("scene_{k:03}.{ext}"))
}

/// Writes scenes, the sensors they use (in first-use order) and the beam table.
pub fn write_dataset(dir: &Path, scenes: &[Scene], beam: &SpectrumTable, dtype: Dtype) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut sensors: Vec<SrfCurveSet> = Vec::new();
    for (k, s) in scenes.iter().enumerate() {
        let (hp, mp) = (scene_path(dir, k, "hsi"), scene_path(dir, k, "msi"));
        write_hsi(&s.y, &hp, dtype)?;
        write_msi(&s.x, &mp, dtype)?;
        written.extend([hp, mp]);
        if !sensors.iter().any(|x| x.name == s.sensor.name) {
            sensors.push(s.sensor.clone());
        }
    }
    let sp = dir.join(SENSORS_FILE);
    std::fs::write(&sp, write_srf_database(&sensors)?)?;
    let bp = dir.join(BEAM_FILE);
    std::fs::write(&bp, beam.to_csv())?;
    written.extend([sp, bp]);
    Ok(written)
}

/// Reads every `scene_NNN` pair in index order.
pub fn read_dataset(dir: &Path) -> Result<Vec<Scene>> {
    let db = load_srf_database(dir.join(SENSORS_FILE))?;
    let mut scenes = Vec::new();
    for k in 0.. {
        let hp = scene_path(dir, k, "hsi");
        if !hp.exists() {
            break;
        }
        let y = read_hsi(&hp).with_context(|| format!("reading {}", hp.display()))?;
        let x = read_msi(scene_path(dir, k, "msi"))?;
        let sensor = find_sensor(&db, x.srf_name())?.clone();
        let srf = discretize_srf(&sensor, y.grid())?;
        scenes.push(Scene { y, x, srf, sensor });
    }
    if scenes.is_empty() {
        bail!(ssrno::Error::InvalidConfig(format!("no scenes in {}", dir.display())));
    }
    Ok(scenes)
}

pub fn read_beam(dir: &Path) -> Result<SpectrumTable> {
    Ok(SpectrumTable::load(dir.join(BEAM_FILE))?)
}
