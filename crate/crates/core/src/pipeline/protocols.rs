//! Spectral interpolation and extrapolation protocols.

use super::metrics::MetricsReport;
use super::synth::Scene;
use super::train::{evaluate_scenes, train, EpochLoss, Model, TrainConfig};
use crate::art::SpectrumTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ProtocolReport {
    pub train_bands: usize,
    pub eval_bands: usize,
    /// Three-stage reconstruction on the full grid.
    pub model: MetricsReport,
    /// Stage 1 alone on the full grid, with the same prior setting.
    pub baseline: MetricsReport,
    pub curve: Vec<EpochLoss>,
    pub trained: Model,
}

fn run(
    config: &TrainConfig,
    bands: &[usize],
    train_set: &[Scene],
    test_set: &[Scene],
    beam: &SpectrumTable,
) -> Result<ProtocolReport> {
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::InvalidConfig("protocols need training and test scenes".into()));
    }
    if bands.len() < 2 {
        return Err(Error::InvalidConfig(format!("only {} training bands selected", bands.len())));
    }
    let restricted = train_set.iter().map(|s| s.restrict(bands)).collect::<Result<Vec<_>>>()?;
    let outcome = train(config, &restricted, &[], beam)?;
    let prior = config.use_art_prior.then_some(beam);
    Ok(ProtocolReport {
        train_bands: bands.len(),
        eval_bands: test_set[0].y.c_bands(),
        model: evaluate_scenes(Some(&outcome.model), test_set, prior, config.use_refinement)?,
        baseline: evaluate_scenes(None, test_set, prior, true)?,
        curve: outcome.curve,
        trained: outcome.model,
    })
}

/// Trains on every `factor`-th band and evaluates on the full grid.
pub fn protocol_continuous(
    config: &TrainConfig,
    train_set: &[Scene],
    test_set: &[Scene],
    beam: &SpectrumTable,
    factor: usize,
) -> Result<ProtocolReport> {
    if factor == 0 {
        return Err(Error::InvalidConfig("downsampling factor must be positive".into()));
    }
    let c = train_set.first().map_or(0, |s| s.y.c_bands());
    let bands: Vec<usize> = (0..c).step_by(factor).collect();
    run(config, &bands, train_set, test_set, beam)
}

/// Trains only on bands below `cutoff_nm` and evaluates on the full grid.
pub fn protocol_zeroshot(
    config: &TrainConfig,
    train_set: &[Scene],
    test_set: &[Scene],
    beam: &SpectrumTable,
    cutoff_nm: f64,
) -> Result<ProtocolReport> {
    let bands: Vec<usize> = train_set
        .first()
        .map(|s| s.y.grid().iter().enumerate().filter(|(_, w)| **w < cutoff_nm).map(|(i, _)| i).collect())
        .unwrap_or_default();
    run(config, &bands, train_set, test_set, beam)
}
