//! Patch-based training of the neural operator through stages 1 and 2.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{degraded_l1_pixels, loss_pixels, MetricsReport};
use super::stages::{reconstruct, stage1_upsample};
use super::synth::Scene;
use crate::art::{build_prior_cube, SpectrumTable};
use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::io::patch_windows;
use crate::numerics::SpectralTensor;
use crate::operator::{
    backward_tensor, forward_tensor, init_params, operator_forward, CoordinateGrid, OperatorConfig, OperatorParams,
};
use crate::scalar::{Dtype, Scalar};
use crate::srf::SrfMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_sam: f64,
    /// Weight of the degraded-domain penalty; only used when `use_refinement` is off.
    pub ablation_alpha: f64,
    pub use_art_prior: bool,
    pub use_refinement: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Patches per optimizer step.
    pub batch: usize,
    pub patch: usize,
    /// Distance between patch origins; `None` tiles without overlap.
    pub stride: Option<usize>,
    pub seed: u64,
    pub precision: Dtype,
    pub operator: OperatorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_sam: 0.1,
            ablation_alpha: 0.5,
            use_art_prior: true,
            use_refinement: true,
            learning_rate: 1e-3,
            epochs: 10,
            batch: 4,
            patch: 32,
            stride: None,
            seed: 0,
            precision: Dtype::F64,
            operator: OperatorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lambda_sam >= 0.0 && self.lambda_sam.is_finite()) {
            return bad("lambda_sam must be finite and >= 0");
        }
        if !(self.ablation_alpha >= 0.0 && self.ablation_alpha.is_finite()) {
            return bad("ablation_alpha must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.patch < 8 {
            return bad("patch must be at least 8");
        }
        if self.batch == 0 || self.stride == Some(0) {
            return bad("batch and stride must be positive");
        }
        self.operator.validate()
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.patch)
    }
}

/// Adam with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8` on a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((w, g), (m, v)) in theta.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *w -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: Option<f64>,
}

/// Trained parameters in their storage precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    F32(OperatorParams<f32>),
    F64(OperatorParams<f64>),
}

impl Model {
    pub fn init(config: &OperatorConfig, precision: Dtype) -> Result<Self> {
        Ok(match precision {
            Dtype::F32 => Model::F32(init_params(config)?),
            Dtype::F64 => Model::F64(init_params(config)?),
        })
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            Model::F32(_) => Dtype::F32,
            Model::F64(_) => Dtype::F64,
        }
    }

    pub fn config(&self) -> &OperatorConfig {
        match self {
            Model::F32(p) => &p.config,
            Model::F64(p) => &p.config,
        }
    }

    pub fn num_parameters(&self) -> usize {
        match self {
            Model::F32(p) => p.num_parameters(),
            Model::F64(p) => p.num_parameters(),
        }
    }

    pub fn forward(&self, y_bar: &HsiCube) -> Result<HsiCube> {
        let grid = CoordinateGrid::new(y_bar.grid())?;
        match self {
            Model::F32(p) => operator_forward(y_bar, &grid, p),
            Model::F64(p) => operator_forward(y_bar, &grid, p),
        }
    }

    pub fn reconstruct(&self, scene: &Scene, prior: Option<&SpectrumTable>, refine: bool) -> Result<HsiCube> {
        let z = prior.map(|e| build_prior_cube(e, scene.y.grid(), scene.x.n_pixels())).transpose()?;
        let out = match self {
            Model::F32(p) => reconstruct(&scene.x, &scene.srf, z.as_ref(), Some(p), refine)?,
            Model::F64(p) => reconstruct(&scene.x, &scene.srf, z.as_ref(), Some(p), refine)?,
        };
        Ok(out.output)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<EpochLoss>,
}

/// Stage-1 input and ground truth for one scene, both pixel-major.
struct Prepared {
    height: usize,
    width: usize,
    c: usize,
    input: Vec<f64>,
    target: Vec<f64>,
    srf: SrfMatrix,
}

impl Prepared {
    fn new(scene: &Scene, prior: Option<&SpectrumTable>) -> Result<Self> {
        let z = prior.map(|e| build_prior_cube(e, scene.y.grid(), scene.x.n_pixels())).transpose()?;
        let y_bar = stage1_upsample(&scene.x, &scene.srf, z.as_ref())?.y_star;
        Ok(Self {
            height: scene.y.height(),
            width: scene.y.width(),
            c: scene.y.c_bands(),
            input: y_bar.to_pixel_major(),
            target: scene.y.to_pixel_major(),
            srf: scene.srf.clone(),
        })
    }

    fn window(&self, data: &[f64], r: usize, col: usize, patch: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(patch * patch * self.c);
        for row in r..r + patch {
            let start = (row * self.width + col) * self.c;
            out.extend_from_slice(&data[start..start + patch * self.c]);
        }
        out
    }
}

struct Objective<'a> {
    config: &'a TrainConfig,
}

impl Objective<'_> {
    /// Loss and its gradient w.r.t. the prediction, both in f64.
    fn eval(&self, pred: &[f64], target: &[f64], c: usize, srf: &SrfMatrix) -> (f64, Vec<f64>) {
        let (mut l, mut g) = loss_pixels(pred, target, c, self.config.lambda_sam);
        if !self.config.use_refinement && self.config.ablation_alpha > 0.0 {
            l += degraded_l1_pixels(srf, pred, target, self.config.ablation_alpha, &mut g);
        }
        (l, g)
    }

    fn item<T: Scalar>(
        &self,
        params: &OperatorParams<T>,
        coords: &[T],
        input: &[f64],
        target: &[f64],
        dims: [usize; 5],
        srf: &SrfMatrix,
    ) -> Result<(f64, Vec<f64>)> {
        let values = SpectralTensor::from_vec(dims, input.iter().map(|&v| T::of(v)).collect())?;
        let (out, tape) = forward_tensor(params, &values, coords)?;
        let pred: Vec<f64> = out.data().iter().map(|v| v.f64()).collect();
        let (l, g) = self.eval(&pred, target, dims[4], srf);
        let gy = SpectralTensor::from_vec(dims, g.into_iter().map(T::of).collect())?;
        let (grads, _) = backward_tensor(params, &tape, &gy)?;
        Ok((l, grads.flatten().into_iter().map(|v| v.f64()).collect()))
    }

    fn validation<T: Scalar>(&self, params: &OperatorParams<T>, coords: &[T], val: &[Prepared]) -> Result<f64> {
        let mut total = 0.0;
        for p in val {
            let (l, _) = self.item(params, coords, &p.input, &p.target, [1, 1, p.height, p.width, p.c], &p.srf)?;
            total += l;
        }
        Ok(total / val.len() as f64)
    }
}

fn same_grid(scenes: &[&Scene]) -> Result<Vec<f64>> {
    let grid = scenes[0].y.grid().to_vec();
    for s in scenes {
        crate::srf::check_same_grid(&grid, s.y.grid())?;
    }
    Ok(grid)
}

/// Trains from seeded initialization.
///
/// Stage 1 is computed once per scene (with `beam` as prior when `use_art_prior` is set).
/// Each epoch visits every patch of every training scene in a seeded order. Patch
/// gradients are computed in parallel and summed in patch order, so results do not
/// depend on the worker count. Validation loss uses whole validation scenes.
pub fn train(
    config: &TrainConfig,
    train_set: &[Scene],
    val_set: &[Scene],
    beam: &SpectrumTable,
) -> Result<TrainOutcome> {
    let model = Model::init(&config.operator, config.precision)?;
    train_from(config, model, train_set, val_set, beam)
}

/// Like [`train`] but continues from existing parameters.
pub fn train_from(
    config: &TrainConfig,
    model: Model,
    train_set: &[Scene],
    val_set: &[Scene],
    beam: &SpectrumTable,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let all: Vec<&Scene> = train_set.iter().chain(val_set).collect();
    let grid = same_grid(&all)?;
    if grid.len() < 2 {
        return Err(Error::InvalidConfig("training needs at least 2 bands".into()));
    }
    let prior = config.use_art_prior.then_some(beam);
    let prepare = |set: &[Scene]| set.par_iter().map(|s| Prepared::new(s, prior)).collect::<Result<Vec<_>>>();
    let (train_p, val_p) = (prepare(train_set)?, prepare(val_set)?);
    for p in &train_p {
        if config.patch > p.height.min(p.width) {
            return Err(Error::PatchTooLarge { patch: config.patch, height: p.height, width: p.width });
        }
    }
    let coords = CoordinateGrid::new(&grid)?.normalized().to_vec();
    match model {
        Model::F32(p) => {
            run(config, p, &coords, &train_p, &val_p).map(|(p, curve)| TrainOutcome { model: Model::F32(p), curve })
        }
        Model::F64(p) => {
            run(config, p, &coords, &train_p, &val_p).map(|(p, curve)| TrainOutcome { model: Model::F64(p), curve })
        }
    }
}

fn run<T: Scalar>(
    config: &TrainConfig,
    mut params: OperatorParams<T>,
    coords: &[f64],
    train_p: &[Prepared],
    val_p: &[Prepared],
) -> Result<(OperatorParams<T>, Vec<EpochLoss>)> {
    let coords: Vec<T> = coords.iter().map(|&v| T::of(v)).collect();
    let objective = Objective { config };
    let mut theta: Vec<f64> = params.flatten().into_iter().map(|v| v.f64()).collect();
    let mut adam = Adam::new(theta.len(), config.learning_rate);
    let patch = config.patch;
    let c = coords.len();
    let dims = [1, 1, patch, patch, c];
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        let mut items = Vec::new();
        for (k, p) in train_p.iter().enumerate() {
            let seed = config.seed ^ ((epoch as u64) << 32 | k as u64);
            for (r, col) in patch_windows(p.height, p.width, patch, config.stride(), seed)? {
                items.push((k, r, col));
            }
        }
        items.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for (step, chunk) in items.chunks(config.batch).enumerate() {
            let results: Vec<(f64, Vec<f64>)> = chunk
                .par_iter()
                .map(|&(k, r, col)| {
                    let p = &train_p[k];
                    let input = p.window(&p.input, r, col, patch);
                    let target = p.window(&p.target, r, col, patch);
                    objective.item(&params, &coords, &input, &target, dims, &p.srf)
                })
                .collect::<Result<_>>()?;
            let scale = 1.0 / chunk.len() as f64;
            let mut grad = vec![0.0; theta.len()];
            let mut batch_loss = 0.0;
            for (l, g) in &results {
                batch_loss += l * scale;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b * scale;
                }
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!("batch loss {batch_loss}, {} patches", chunk.len()),
                });
            }
            adam.step(&mut theta, &grad);
            params.unflatten(&theta.iter().map(|&v| T::of(v)).collect::<Vec<_>>())?;
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, detail: "parameters diverged".into() });
            }
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        let val = if val_p.is_empty() { None } else { Some(objective.validation(&params, &coords, val_p)?) };
        curve.push(EpochLoss { epoch, train: epoch_loss / items.len() as f64, val });
    }
    Ok((params, curve))
}

/// Mean metrics of `model` (or stage 1 alone when `None`) over `scenes`.
pub fn evaluate_scenes(
    model: Option<&Model>,
    scenes: &[Scene],
    prior: Option<&SpectrumTable>,
    refine: bool,
) -> Result<MetricsReport> {
    let reports = scenes
        .par_iter()
        .map(|s| {
            let y_hat = match model {
                Some(m) => m.reconstruct(s, prior, refine)?,
                None => {
                    let z = prior.map(|e| build_prior_cube(e, s.y.grid(), s.x.n_pixels())).transpose()?;
                    stage1_upsample(&s.x, &s.srf, z.as_ref())?.y_star
                }
            };
            super::metrics::evaluate(&y_hat, &s.y)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::mean(&reports).ok_or_else(|| Error::InvalidConfig("no scenes to evaluate".into()))
}
