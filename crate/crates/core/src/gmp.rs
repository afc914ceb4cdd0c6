//! Guidance matrix projection.
//!
//! For every pixel, picks the point of the affine set `{y : S·y = x}` with the largest
//! cosine similarity to the guidance spectrum `z`:
//!
//! ```text
//! y* = Sᵀ(SSᵀ)⁻¹x + (I − Sᵀ(SSᵀ)⁻¹S)·(γ/α)·z
//! α = xᵀ(SSᵀ)⁻¹S z,  β = zᵀ(I − Sᵀ(SSᵀ)⁻¹S) z,  γ = xᵀ(SSᵀ)⁻¹x
//! ```
//!
//! The closed form requires α, β, γ > 0. Pixels that violate this fall back to the
//! minimum-norm solution `Sᵀ(SSᵀ)⁻¹x`.

use rayon::prelude::*;

use crate::art::PriorCube;
use crate::cube::{HsiCube, MsiImage};
use crate::error::{Error, Result};
use crate::numerics::Cholesky;
use crate::srf::{check_full_row_rank, check_same_grid, SrfMatrix};

/// Strictness threshold for α, β, γ.
pub const ASSUMPTION_EPS: f64 = 1e-12;
/// Default per-pixel feasibility tolerance, relative to `max(1, ‖x‖∞)`.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GmpCoefficients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub xi_star: Vec<f64>,
    pub assumption_ok: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub y_star: HsiCube,
    pub coeffs: GmpCoefficients,
    pub fallback_count: usize,
    /// Max over pixels of `‖S·y* − x‖∞`.
    pub feasibility_residual: f64,
}

#[derive(Debug, Clone, Copy)]
struct PixelCoeffs {
    alpha: f64,
    beta: f64,
    gamma: f64,
    ok: bool,
}

/// Factorisation of `S·Sᵀ` reused across all pixels of one SRF.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    s: &'a SrfMatrix,
    chol: Cholesky,
}

impl<'a> Projector<'a> {
    pub fn new(s: &'a SrfMatrix) -> Result<Self> {
        let chol = Cholesky::factor(&s.matrix().gram()).map_err(|_| {
            let r = check_full_row_rank(s);
            Error::RankDeficient { smallest: r.smallest_singular, largest: r.largest_singular }
        })?;
        Ok(Self { s, chol })
    }

    /// Returns `(SSᵀ)⁻¹x`, γ and, when `z` is given, `(SSᵀ)⁻¹Sz`, α, β and `P_S z`.
    fn pieces(&self, x: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>, PixelCoeffs) {
        let s = self.s.matrix();
        let mut u = x.to_vec();
        self.chol.solve_in_place(&mut u);
        let gamma = dot(x, &u);
        let mut v = s.mul_vec(z);
        self.chol.solve_in_place(&mut v);
        let alpha = dot(x, &v);
        let st_v = s.tr_mul_vec(&v);
        let null_z: Vec<f64> = z.iter().zip(&st_v).map(|(a, b)| a - b).collect();
        let beta = dot(&null_z, &null_z);
        let ok = alpha > ASSUMPTION_EPS && beta > ASSUMPTION_EPS && gamma > ASSUMPTION_EPS;
        (u, null_z, PixelCoeffs { alpha, beta, gamma, ok })
    }

    fn coefficients_pixel(&self, x: &[f64], z: &[f64]) -> PixelCoeffs {
        self.pieces(x, z).2
    }

    /// Projects a single pixel; returns `(y*, coefficients)`.
    fn project_pixel(&self, x: &[f64], z: &[f64]) -> (Vec<f64>, PixelCoeffs) {
        let (u, null_z, k) = self.pieces(x, z);
        let mut y = self.s.matrix().tr_mul_vec(&u);
        if k.ok {
            let xi = k.gamma / k.alpha;
            for (y, n) in y.iter_mut().zip(&null_z) {
                *y += xi * n;
            }
        }
        (y, k)
    }

    /// Minimum-norm solution `Sᵀ(SSᵀ)⁻¹x`.
    pub fn min_norm(&self, x: &[f64]) -> Vec<f64> {
        let mut u = x.to_vec();
        self.chol.solve_in_place(&mut u);
        self.s.matrix().tr_mul_vec(&u)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_shapes(z: &PriorCube, s: &SrfMatrix, x: &MsiImage) -> Result<()> {
    check_same_grid(s.grid(), z.grid())?;
    if x.m_bands() != s.m_bands() {
        return Err(Error::ShapeMismatch(format!("MSI has {} bands, SRF has {}", x.m_bands(), s.m_bands())));
    }
    if z.n_pixels() != x.n_pixels() {
        return Err(Error::ShapeMismatch(format!("prior has {} pixels, MSI has {}", z.n_pixels(), x.n_pixels())));
    }
    Ok(())
}

pub fn compute_coefficients(s: &SrfMatrix, x: &MsiImage, z: &PriorCube) -> Result<GmpCoefficients> {
    check_shapes(z, s, x)?;
    let proj = Projector::new(s)?;
    let per: Vec<PixelCoeffs> =
        (0..x.n_pixels()).into_par_iter().map(|n| proj.coefficients_pixel(&x.pixel(n), &z.column(n))).collect();
    Ok(collect_coeffs(&per))
}

fn collect_coeffs(per: &[PixelCoeffs]) -> GmpCoefficients {
    GmpCoefficients {
        alpha: per.iter().map(|k| k.alpha).collect(),
        beta: per.iter().map(|k| k.beta).collect(),
        gamma: per.iter().map(|k| k.gamma).collect(),
        xi_star: per.iter().map(|k| k.gamma / k.alpha).collect(),
        assumption_ok: per.iter().map(|k| k.ok).collect(),
    }
}

/// Closed-form projection of the guidance `z` onto the solution set of `S·Y = X`.
pub fn project(z: &PriorCube, s: &SrfMatrix, x: &MsiImage, tolerance: f64) -> Result<ProjectionResult> {
    check_shapes(z, s, x)?;
    let proj = Projector::new(s)?;
    let np = x.n_pixels();
    let pixels: Vec<(Vec<f64>, PixelCoeffs, f64)> = (0..np)
        .into_par_iter()
        .map(|n| {
            let xn = x.pixel(n);
            let (y, k) = proj.project_pixel(&xn, &z.column(n));
            let resid = s.matrix().mul_vec(&y).iter().zip(&xn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (y, k, resid)
        })
        .collect();

    let mut cube = HsiCube::zeros(x.height(), x.width(), s.grid().to_vec())?;
    let mut worst = 0.0_f64;
    for (n, (y, _, resid)) in pixels.iter().enumerate() {
        let scale = x.pixel(n).iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if !(resid.is_finite() && *resid <= tolerance * scale) {
            return Err(Error::FeasibilityViolation { pixel: n, residual: *resid, tolerance: tolerance * scale });
        }
        worst = worst.max(*resid);
        cube.set_pixel(n, y);
    }
    let per: Vec<PixelCoeffs> = pixels.iter().map(|p| p.1).collect();
    let coeffs = collect_coeffs(&per);
    let fallback_count = coeffs.assumption_ok.iter().filter(|ok| !**ok).count();
    Ok(ProjectionResult { y_star: cube, coeffs, fallback_count, feasibility_residual: worst })
}

/// Numerical solution of the per-pixel cosine-maximisation problem, for verification.
///
/// Builds `S†` and a null-space basis from nalgebra's SVD and eigendecomposition (a
/// different route from the Cholesky-based closed form) and runs gradient ascent with
/// Barzilai–Borwein steps and Armijo backtracking from several starting points.
pub mod oracle {
    use nalgebra::{DMatrix, DVector, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::error::{Error, Result};
    use crate::srf::SrfMatrix;

    pub const MAX_ITERATIONS: usize = 100_000;
    pub const STATIONARITY: f64 = 1e-10;

    struct Problem {
        y0: DVector<f64>,
        basis: DMatrix<f64>,
        z: DVector<f64>,
    }

    impl Problem {
        fn point(&self, c: &DVector<f64>) -> DVector<f64> {
            &self.y0 + &self.basis * c
        }

        fn value(&self, c: &DVector<f64>) -> f64 {
            let y = self.point(c);
            y.dot(&self.z) / (y.norm() * self.z.norm())
        }

        fn gradient(&self, c: &DVector<f64>) -> DVector<f64> {
            let y = self.point(c);
            let (ny, nz) = (y.norm(), self.z.norm());
            let cos = y.dot(&self.z) / (ny * nz);
            let gy = &self.z / (ny * nz) - &y * (cos / (ny * ny));
            self.basis.transpose() * gy
        }

        fn ascend(&self, mut c: DVector<f64>) -> Result<(DVector<f64>, f64)> {
            let mut g = self.gradient(&c);
            let mut f = self.value(&c);
            let mut step = 1.0;
            for _ in 0..MAX_ITERATIONS {
                if g.norm() <= STATIONARITY {
                    return Ok((c, f));
                }
                let mut t = step;
                let accepted = loop {
                    let c_new = &c + &g * t;
                    let f_new = self.value(&c_new);
                    // slack lets BB steps continue once value changes drop below round-off
                    if f_new >= f + 1e-4 * t * g.norm_squared() - 1e-13 {
                        break Some((c_new, f_new));
                    }
                    t *= 0.5;
                    if t < 1e-30 * step {
                        break None;
                    }
                };
                let Some((c_new, f_new)) = accepted else { break };
                let g_new = self.gradient(&c_new);
                let s = &c_new - &c;
                let yk = &g - &g_new;
                let sy = s.dot(&yk);
                step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e12) } else { 1.0 };
                c = c_new;
                f = f_new;
                g = g_new;
            }
            Err(Error::NoConvergence { iterations: MAX_ITERATIONS, stationarity: g.norm() })
        }
    }

    /// Maximises `cos(y, z)` subject to `S·y = x` numerically.
    pub fn oracle_project(z: &[f64], s: &SrfMatrix, x: &[f64]) -> Result<Vec<f64>> {
        let (m, c) = (s.m_bands(), s.c_bands());
        if z.len() != c || x.len() != m {
            return Err(Error::ShapeMismatch("oracle inputs".into()));
        }
        let smat = DMatrix::from_row_slice(m, c, s.matrix().data());
        let svd = smat.clone().svd(true, true);
        let y0 = svd
            .solve(&DVector::from_column_slice(x), 1e-14)
            .map_err(|e| Error::InvalidConfig(format!("pseudo-inverse failed: {e}")))?;
        let eig = SymmetricEigen::new(smat.transpose() * &smat);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let null_cols: Vec<usize> = (0..c).filter(|&i| eig.eigenvalues[i] <= 1e-10 * top).collect();
        let mut basis = DMatrix::zeros(c, null_cols.len());
        for (j, &i) in null_cols.iter().enumerate() {
            basis.set_column(j, &eig.eigenvectors.column(i));
        }
        let problem = Problem { y0, basis, z: DVector::from_column_slice(z) };
        let k = null_cols.len();

        let zc = problem.basis.transpose() * &problem.z;
        let mut starts = vec![DVector::zeros(k), zc.clone(), zc * 10.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..2 {
            starts.push(DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)));
        }
        let mut best: Option<(DVector<f64>, f64)> = None;
        let mut last_err = None;
        for start in starts {
            match problem.ascend(start) {
                Ok((c, f)) => {
                    if best.as_ref().is_none_or(|b| f > b.1) {
                        best = Some((c, f));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        match best {
            Some((c, _)) => Ok(problem.point(&c).iter().copied().collect()),
            None => Err(last_err.unwrap_or(Error::NoConvergence { iterations: 0, stationarity: f64::NAN })),
        }
    }
}
