use crate::art::PriorCube;
use crate::cube::{HsiCube, MsiImage};
use crate::error::Result;
use crate::gmp::{project, ProjectionResult, DEFAULT_TOLERANCE};
use crate::operator::{operator_forward, CoordinateGrid, OperatorParams};
use crate::scalar::Scalar;
use crate::srf::SrfMatrix;

/// Stage 1: closed-form projection of the prior onto `{Y : S·Y = X}`.
///
/// Passing `None` uses the zero prior, which yields the minimum-norm solution.
pub fn stage1_upsample(x: &MsiImage, s: &SrfMatrix, z: Option<&PriorCube>) -> Result<ProjectionResult> {
    match z {
        Some(z) => project(z, s, x, DEFAULT_TOLERANCE),
        None => project(&PriorCube::zeros(s.grid().to_vec(), x.n_pixels()), s, x, DEFAULT_TOLERANCE),
    }
}

/// Stage 2: residual neural-operator refinement.
pub fn stage2_reconstruct<T: Scalar>(
    y_bar: &HsiCube,
    grid: &CoordinateGrid,
    params: &OperatorParams<T>,
) -> Result<HsiCube> {
    operator_forward(y_bar, grid, params)
}

/// Stage 3: projection of the stage-2 estimate back onto the observation constraint.
pub fn stage3_refine(y_tilde: &HsiCube, s: &SrfMatrix, x: &MsiImage) -> Result<ProjectionResult> {
    project(&PriorCube::from_cube(y_tilde), s, x, DEFAULT_TOLERANCE)
}

/// Outputs of a full reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub stage1: HsiCube,
    pub stage2: Option<HsiCube>,
    pub output: HsiCube,
    /// Pixels that fell back to the minimum-norm solution in the last projection.
    pub fallback_count: usize,
    pub feasibility_residual: f64,
}

/// Runs stage 1, then stage 2 when `params` is given, then stage 3 when `refine` is set.
pub fn reconstruct<T: Scalar>(
    x: &MsiImage,
    s: &SrfMatrix,
    prior: Option<&PriorCube>,
    params: Option<&OperatorParams<T>>,
    refine: bool,
) -> Result<Reconstruction> {
    let p1 = stage1_upsample(x, s, prior)?;
    let Some(params) = params else {
        return Ok(Reconstruction {
            stage1: p1.y_star.clone(),
            stage2: None,
            output: p1.y_star,
            fallback_count: p1.fallback_count,
            feasibility_residual: p1.feasibility_residual,
        });
    };
    let grid = CoordinateGrid::new(s.grid())?;
    let y2 = stage2_reconstruct(&p1.y_star, &grid, params)?;
    if !refine {
        let residual =
            crate::srf::degrade(s, &y2)?.data().iter().zip(x.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        return Ok(Reconstruction {
            stage1: p1.y_star,
            output: y2.clone(),
            stage2: Some(y2),
            fallback_count: p1.fallback_count,
            feasibility_residual: residual,
        });
    }
    let p3 = stage3_refine(&y2, s, x)?;
    Ok(Reconstruction {
        stage1: p1.y_star,
        stage2: Some(y2),
        output: p3.y_star,
        fallback_count: p3.fallback_count,
        feasibility_residual: p3.feasibility_residual,
    })
}
