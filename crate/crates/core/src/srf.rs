//! Spectral response functions: loading, discretisation onto a wavelength grid, the
//! rank check, and the linear degradation `X = S·Y`.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::{HsiCube, MsiImage};
use crate::error::{Error, Result};
use crate::io::csv::{parse_sections, write_section};
use crate::numerics::{kernel_regress, median_spacing, DenseMatrix};

/// Relative singular-value threshold for the full-row-rank check.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Rows whose raw discretised sum falls below this are rejected as degenerate.
pub const DEGENERATE_ROW_SUM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SrfCurve {
    pub label: String,
    /// (wavelength nm, sensitivity), strictly increasing in wavelength.
    pub samples: Vec<(f64, f64)>,
}

/// All band curves of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SrfCurveSet {
    pub name: String,
    pub bands: Vec<SrfCurve>,
}

impl SrfCurveSet {
    pub fn m_bands(&self) -> usize {
        self.bands.len()
    }
}

/// Parses an SRF database. Sections are introduced by `# sensor: NAME`; a file without
/// such markers holds a single sensor called `default_name`.
pub fn parse_srf_database(text: &str, default_name: &str) -> Result<Vec<SrfCurveSet>> {
    let sections = parse_sections(text)?;
    let single = sections.len() == 1;
    let mut out = Vec::with_capacity(sections.len());
    for (i, sec) in sections.into_iter().enumerate() {
        let name = match sec.name {
            Some(n) => n,
            None if single => default_name.to_string(),
            None => format!("{default_name}_{i}"),
        };
        if sec.rows.len() < 2 {
            return Err(Error::Parse {
                line: sec.rows[0].0,
                message: format!("sensor `{name}` needs at least two wavelength samples"),
            });
        }
        for (line, row) in &sec.rows {
            if let Some(&v) = row[1..].iter().find(|v| **v < 0.0) {
                return Err(Error::NegativeSensitivity { line: *line, value: v });
            }
        }
        let bands = sec.header[1..]
            .iter()
            .enumerate()
            .map(|(b, label)| SrfCurve {
                label: label.clone(),
                samples: sec.rows.iter().map(|(_, r)| (r[0], r[b + 1])).collect(),
            })
            .collect();
        out.push(SrfCurveSet { name, bands });
    }
    Ok(out)
}

/// Loads an SRF database from a CSV file, or from every `*.csv` in a directory
/// (sorted by file name, each file contributing its sensors).
pub fn load_srf_database(path: impl AsRef<Path>) -> Result<Vec<SrfCurveSet>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let mut all = Vec::new();
        for f in files {
            all.extend(load_srf_file(&f)?);
        }
        if all.is_empty() {
            return Err(Error::Parse { line: 0, message: format!("no SRF files in {}", path.display()) });
        }
        return Ok(all);
    }
    load_srf_file(path)
}

fn load_srf_file(path: &Path) -> Result<Vec<SrfCurveSet>> {
    let text = std::fs::read_to_string(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sensor");
    parse_srf_database(&text, stem)
}

/// Serialises sensors in the sectioned CSV form. Bands of one sensor must share
/// their wavelength samples.
pub fn write_srf_database(sets: &[SrfCurveSet]) -> Result<String> {
    let mut out = String::new();
    for set in sets {
        let first =
            set.bands.first().ok_or_else(|| Error::InvalidConfig(format!("sensor `{}` has no bands", set.name)))?;
        let wl: Vec<f64> = first.samples.iter().map(|s| s.0).collect();
        if set.bands.iter().any(|b| b.samples.iter().map(|s| s.0).ne(wl.iter().copied())) {
            return Err(Error::InvalidConfig(format!("bands of `{}` use different wavelength samples", set.name)));
        }
        let mut header = vec!["wavelength_nm"];
        header.extend(set.bands.iter().map(|b| b.label.as_str()));
        let rows: Vec<Vec<f64>> = wl
            .iter()
            .enumerate()
            .map(|(i, w)| std::iter::once(*w).chain(set.bands.iter().map(|b| b.samples[i].1)).collect())
            .collect();
        write_section(&mut out, Some(&set.name), &header, &rows);
        out.push('\n');
    }
    Ok(out)
}

pub fn find_sensor<'a>(db: &'a [SrfCurveSet], name: &str) -> Result<&'a SrfCurveSet> {
    db.iter().find(|s| s.name == name).ok_or_else(|| Error::UnknownSensor(name.to_string()))
}

/// Discretised SRF `S` (M×C) on a wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SrfMatrix {
    name: String,
    grid: Vec<f64>,
    matrix: DenseMatrix,
}

impl SrfMatrix {
    /// Wraps explicit rows without normalising them. Entries must be finite and
    /// non-negative; the rank is not checked here.
    pub fn from_rows(name: impl Into<String>, grid: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let matrix = DenseMatrix::from_rows(rows)?;
        if matrix.cols() != grid.len() {
            return Err(Error::GridMismatch(format!("{} columns for a {}-point grid", matrix.cols(), grid.len())));
        }
        if matrix.data().iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidConfig("SRF entries must be non-negative".into()));
        }
        Ok(Self { name: name.into(), grid, matrix })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn m_bands(&self) -> usize {
        self.matrix.rows()
    }

    pub fn c_bands(&self) -> usize {
        self.matrix.cols()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn row(&self, m: usize) -> &[f64] {
        self.matrix.row(m)
    }
}

/// Kernel-regresses each band onto `grid` and normalises rows to unit sum.
pub fn discretize_srf(curves: &SrfCurveSet, grid: &[f64]) -> Result<SrfMatrix> {
    let mut rows = Vec::with_capacity(curves.m_bands());
    for band in &curves.bands {
        let wl: Vec<f64> = band.samples.iter().map(|s| s.0).collect();
        let (lo, hi) = (wl[0], wl[wl.len() - 1]);
        let mut row = kernel_regress(&band.samples, grid, median_spacing(&wl))?;
        // no response outside the measured support
        for (v, &g) in row.iter_mut().zip(grid) {
            *v = if g < lo || g > hi { 0.0 } else { v.max(0.0) };
        }
        let sum: f64 = row.iter().sum();
        if sum < DEGENERATE_ROW_SUM {
            return Err(Error::DegenerateBand { band: format!("{}/{}", curves.name, band.label), sum });
        }
        for v in &mut row {
            *v /= sum;
        }
        rows.push(row);
    }
    let s = SrfMatrix::from_rows(curves.name.clone(), grid.to_vec(), &rows)?;
    let report = check_full_row_rank(&s);
    if !report.full_rank {
        return Err(Error::RankDeficient { smallest: report.smallest_singular, largest: report.largest_singular });
    }
    Ok(s)
}

/// Uses tabulated curves as the matrix itself: the grid is the shared sample wavelengths
/// and entries are taken verbatim, without resampling or normalisation.
pub fn tabulated_srf(curves: &SrfCurveSet) -> Result<SrfMatrix> {
    let first =
        curves.bands.first().ok_or_else(|| Error::InvalidConfig(format!("sensor `{}` has no bands", curves.name)))?;
    let grid: Vec<f64> = first.samples.iter().map(|s| s.0).collect();
    if curves.bands.iter().any(|b| b.samples.iter().map(|s| s.0).ne(grid.iter().copied())) {
        return Err(Error::GridMismatch(format!("bands of `{}` use different wavelength samples", curves.name)));
    }
    let rows: Vec<Vec<f64>> = curves.bands.iter().map(|b| b.samples.iter().map(|s| s.1).collect()).collect();
    let s = SrfMatrix::from_rows(curves.name.clone(), grid, &rows)?;
    let report = check_full_row_rank(&s);
    if !report.full_rank {
        return Err(Error::RankDeficient { smallest: report.smallest_singular, largest: report.largest_singular });
    }
    Ok(s)
}

/// Applies `X[m, p] = Σ_c S[m, c]·Y[c, p]`.
pub fn degrade(s: &SrfMatrix, y: &HsiCube) -> Result<MsiImage> {
    check_same_grid(s.grid(), y.grid())?;
    let np = y.n_pixels();
    let mut data = vec![0.0; s.m_bands() * np];
    for m in 0..s.m_bands() {
        let out = &mut data[m * np..(m + 1) * np];
        for (c, &w) in s.row(m).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(y.band(c)) {
                *o += w * v;
            }
        }
    }
    MsiImage::new(s.m_bands(), y.height(), y.width(), data, s.name())
}

pub(crate) fn check_same_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} bands", a.len(), b.len())));
    }
    if let Some(i) = a.iter().zip(b).position(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0)) {
        return Err(Error::GridMismatch(format!("band {i}: {} nm vs {} nm", a[i], b[i])));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    pub smallest_singular: f64,
    pub largest_singular: f64,
    pub full_rank: bool,
}

/// Singular values of `S` from the eigenvalues of `S·Sᵀ`.
pub fn check_full_row_rank(s: &SrfMatrix) -> RankReport {
    let g = s.matrix().gram();
    let m = g.rows();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(m, m, g.data()));
    let sv: Vec<f64> = eig.eigenvalues.iter().map(|e| e.max(0.0).sqrt()).collect();
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    let smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    RankReport {
        smallest_singular: smallest,
        largest_singular: largest,
        full_rank: s.m_bands() <= s.c_bands() && largest > 0.0 && smallest > RANK_TOLERANCE * largest,
    }
}

/// Seeded database of camera-like sensors with Gaussian bands between 440 and 920 nm.
///
/// Curves are sampled every 5 nm on [380, 1050] nm and tapered to exactly zero at both
/// ends, so their support stays inside the visible/near-infrared range.
pub fn synthetic_sensor_database(seed: u64, sensors: usize, m_bands: usize) -> Vec<SrfCurveSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (380.0, 1050.0);
    let wl: Vec<f64> = (0..=((hi - lo) / 5.0) as usize).map(|i| lo + 5.0 * i as f64).collect();
    let seg = (920.0 - 440.0) / m_bands.max(1) as f64;
    (0..sensors)
        .map(|s| {
            let bands = (0..m_bands)
                .map(|b| {
                    let centre = 440.0 + seg * (b as f64 + rng.gen_range(0.2..0.8));
                    let sigma = rng.gen_range(35.0..70.0);
                    let amp = rng.gen_range(0.6..1.0);
                    let samples = wl
                        .iter()
                        .map(|&w| {
                            let taper = (std::f64::consts::PI * (w - lo) / (hi - lo)).sin().powi(2);
                            let g = amp * (-(w - centre).powi(2) / (2.0 * sigma * sigma)).exp() * taper;
                            (w, if g < 1e-9 { 0.0 } else { g })
                        })
                        .collect();
                    SrfCurve { label: format!("band_{}", b + 1), samples }
                })
                .collect();
            SrfCurveSet { name: format!("synthetic_cam_{s:02}"), bands }
        })
        .collect()
}
