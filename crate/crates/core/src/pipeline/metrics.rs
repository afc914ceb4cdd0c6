//! Training losses and image-quality metrics.

use std::fmt;

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::srf::SrfMatrix;

/// Clamp margin on the cosine inside `arccos`.
pub const SAM_DELTA: f64 = 1e-7;
pub const MRAE_FLOOR: f64 = 1e-4;
pub const PSNR_CAP: f64 = 300.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mrae: f64,
    pub psnr: f64,
    pub sam: f64,
    pub ssim: f64,
}

impl MetricsReport {
    /// Element-wise mean, e.g. over test scenes.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport { mrae: sum(|r| r.mrae), psnr: sum(|r| r.psnr), sam: sum(|r| r.sam), ssim: sum(|r| r.ssim) })
    }

    pub fn is_finite(&self) -> bool {
        self.mrae.is_finite() && self.psnr.is_finite() && self.sam.is_finite() && self.ssim.is_finite()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mrae={} psnr={} sam={} ssim={}", self.mrae, self.psnr, self.sam, self.ssim)
    }
}

fn check_pair(a: &HsiCube, b: &HsiCube) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() || a.c_bands() != b.c_bands() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.c_bands(),
            a.height(),
            a.width(),
            b.c_bands(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// L1 + λ·SAM on pixel-major spectra (`[n·c + band]`), with the gradient w.r.t. `pred`.
pub fn loss_pixels(pred: &[f64], target: &[f64], c: usize, lambda_sam: f64) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() / c;
    let inv_l1 = 1.0 / pred.len() as f64;
    let mut grad: Vec<f64> = pred.iter().zip(target).map(|(p, t)| sign(p - t) * inv_l1).collect();
    let l1 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() * inv_l1;
    if lambda_sam == 0.0 {
        return (l1, grad);
    }
    let mut angle_sum = 0.0;
    let scale = lambda_sam / n as f64;
    for i in 0..n {
        let (p, t) = (&pred[i * c..(i + 1) * c], &target[i * c..(i + 1) * c]);
        let (np, nt) = (norm(p), norm(t));
        if np < NORM_EPS || nt < NORM_EPS {
            continue;
        }
        let dotp: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
        let cos = dotp / (np * nt);
        let clamped = cos.clamp(-1.0 + SAM_DELTA, 1.0 - SAM_DELTA);
        angle_sum += clamped.acos();
        if clamped == cos {
            let outer = -scale / (1.0 - cos * cos).sqrt();
            for ((g, a), b) in grad[i * c..(i + 1) * c].iter_mut().zip(p).zip(t) {
                *g += outer * (b / (np * nt) - cos * a / (np * np));
            }
        }
    }
    (l1 + lambda_sam * angle_sum / n as f64, grad)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `mean|ŷ − y| + λ·mean_n arccos(clamp(cos_n))`; gradient returned as a cube.
pub fn loss(y_hat: &HsiCube, y: &HsiCube, lambda_sam: f64) -> Result<(f64, HsiCube)> {
    check_pair(y_hat, y)?;
    let c = y.c_bands();
    let (l, g) = loss_pixels(&y_hat.to_pixel_major(), &y.to_pixel_major(), c, lambda_sam);
    Ok((l, HsiCube::from_pixel_major(y.height(), y.width(), y.grid().to_vec(), &g)?))
}

/// `α·mean|S·ŷ − S·y|` on pixel-major spectra, accumulating its gradient into `grad`.
pub fn degraded_l1_pixels(s: &SrfMatrix, pred: &[f64], target: &[f64], alpha: f64, grad: &mut [f64]) -> f64 {
    let (m, c) = (s.m_bands(), s.c_bands());
    let n = pred.len() / c;
    let inv = 1.0 / (m * n) as f64;
    let mut total = 0.0;
    for i in 0..n {
        let (p, t) = (&pred[i * c..(i + 1) * c], &target[i * c..(i + 1) * c]);
        for r in 0..m {
            let row = s.row(r);
            let d: f64 = row.iter().zip(p.iter().zip(t)).map(|(w, (a, b))| w * (a - b)).sum();
            total += d.abs();
            let g = alpha * inv * sign(d);
            if g != 0.0 {
                for (gi, w) in grad[i * c..(i + 1) * c].iter_mut().zip(row) {
                    *gi += g * w;
                }
            }
        }
    }
    alpha * total * inv
}

/// [`loss`] plus `α·L1(S·ỹ, S·y)`, used when refinement is disabled.
pub fn regularized_loss(
    y_tilde: &HsiCube,
    y: &HsiCube,
    s: &SrfMatrix,
    lambda_sam: f64,
    alpha: f64,
) -> Result<(f64, HsiCube)> {
    check_pair(y_tilde, y)?;
    crate::srf::check_same_grid(s.grid(), y.grid())?;
    let c = y.c_bands();
    let (p, t) = (y_tilde.to_pixel_major(), y.to_pixel_major());
    let (l, mut g) = loss_pixels(&p, &t, c, lambda_sam);
    let extra = degraded_l1_pixels(s, &p, &t, alpha, &mut g);
    Ok((l + extra, HsiCube::from_pixel_major(y.height(), y.width(), y.grid().to_vec(), &g)?))
}

pub fn mrae(y_hat: &HsiCube, y: &HsiCube) -> Result<f64> {
    check_pair(y_hat, y)?;
    let n = y.data().len() as f64;
    Ok(y_hat.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs() / b.max(MRAE_FLOOR)).sum::<f64>() / n)
}

/// Peak 1, capped at [`PSNR_CAP`].
pub fn psnr(y_hat: &HsiCube, y: &HsiCube) -> Result<f64> {
    check_pair(y_hat, y)?;
    let mse = y_hat.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean spectral angle in radians over pixels where both spectra are nonzero.
pub fn sam(y_hat: &HsiCube, y: &HsiCube) -> Result<f64> {
    check_pair(y_hat, y)?;
    let c = y.c_bands();
    let (a, b) = (y_hat.to_pixel_major(), y.to_pixel_major());
    let (mut total, mut count) = (0.0, 0usize);
    for (p, t) in a.chunks(c).zip(b.chunks(c)) {
        let (np, nt) = (norm(p), norm(t));
        if np < NORM_EPS || nt < NORM_EPS {
            continue;
        }
        // 2·atan2(|u − v|, |u + v|) on unit vectors: exact zero for parallel spectra
        let (mut diff, mut sum) = (0.0, 0.0);
        for (x, z) in p.iter().zip(t) {
            let (u, v) = (x / np, z / nt);
            diff += (u - v) * (u - v);
            sum += (u + v) * (u + v);
        }
        total += 2.0 * diff.sqrt().atan2(sum.sqrt());
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> =
        (0..SSIM_WINDOW).map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter; taps falling outside the image are dropped and the
/// remaining weights renormalized.
fn blur(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let half = taps.len() as isize / 2;
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (k, &t) in taps.iter().enumerate() {
                    let off = k as isize - half;
                    let (rr, cc) =
                        if along_rows { (r as isize + off, c as isize) } else { (r as isize, c as isize + off) };
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    acc += t * src[rr as usize * w + cc as usize];
                    wsum += t;
                }
                out[r * w + c] = acc / wsum;
            }
        }
        out
    };
    pass(&pass(img, false), true)
}

fn ssim_band(a: &[f64], b: &[f64], h: usize, w: usize, taps: &[f64]) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mu_a = blur(a, h, w, taps);
    let mu_b = blur(b, h, w, taps);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let e_aa = blur(&prod(a, a), h, w, taps);
    let e_bb = blur(&prod(b, b), h, w, taps);
    let e_ab = blur(&prod(a, b), h, w, taps);
    let mut total = 0.0;
    for i in 0..h * w {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / (h * w) as f64
}

/// Per-band SSIM (Gaussian 11×11, σ = 1.5, peak 1) averaged over bands.
pub fn ssim(y_hat: &HsiCube, y: &HsiCube) -> Result<f64> {
    check_pair(y_hat, y)?;
    let taps = gaussian_window();
    let (h, w) = (y.height(), y.width());
    let total: f64 = (0..y.c_bands()).map(|c| ssim_band(y_hat.band(c), y.band(c), h, w, &taps)).sum();
    Ok((total / y.c_bands() as f64).clamp(-1.0, 1.0))
}

pub fn evaluate(y_hat: &HsiCube, y: &HsiCube) -> Result<MetricsReport> {
    Ok(MetricsReport { mrae: mrae(y_hat, y)?, psnr: psnr(y_hat, y)?, sam: sam(y_hat, y)?, ssim: ssim(y_hat, y)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::linspace;
    use crate::numerics::finite_diff_grad;

    fn cube(seed: u64, h: usize, w: usize, c: usize) -> HsiCube {
        let data = (0..h * w * c).map(|i| 0.2 + 0.6 * ((i as f64 + seed as f64 * 17.0) * 0.377).sin().abs()).collect();
        HsiCube::new(h, w, linspace(400.0, 2500.0, c), data).unwrap()
    }

    fn scaled(y: &HsiCube, f: impl Fn(f64) -> f64) -> HsiCube {
        HsiCube::new(y.height(), y.width(), y.grid().to_vec(), y.data().iter().map(|&v| f(v)).collect()).unwrap()
    }

    #[test]
    fn identical_inputs() {
        let y = cube(1, 12, 13, 5);
        let r = evaluate(&y, &y).unwrap();
        assert_eq!(r, MetricsReport { mrae: 0.0, psnr: 300.0, sam: 0.0, ssim: 1.0 });
    }

    #[test]
    fn scaled_prediction() {
        let y = cube(2, 6, 6, 7);
        let r = evaluate(&scaled(&y, |v| 1.1 * v), &y).unwrap();
        assert!((r.mrae - 0.1).abs() < 1e-9);
        assert!(r.sam < 1e-7);
    }

    #[test]
    fn psnr_of_uniform_error() {
        let y = cube(3, 4, 5, 3);
        assert!((psnr(&scaled(&y, |v| v + 0.1), &y).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn sam_skips_zero_pixels_and_sees_orthogonality() {
        let grid = linspace(400.0, 500.0, 2);
        // pixels: (1,0)/(0,1) orthogonal, second pixel zero in the prediction
        let a = HsiCube::new(1, 2, grid.clone(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = HsiCube::new(1, 2, grid, vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((sam(&a, &b).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn ssim_drops_for_noise() {
        let y = cube(4, 16, 16, 2);
        let noisy = scaled(&y, |v| v + 0.05 * (v * 1e4).sin());
        let s = ssim(&noisy, &y).unwrap();
        assert!(s < 0.999 && s > -1.0);
    }

    #[test]
    fn loss_values() {
        let y = cube(5, 3, 3, 6);
        let (l, g) = loss(&y, &y, 0.1).unwrap();
        assert!(l <= 0.1 * SAM_DELTA.mul_add(-1.0, 1.0).acos() + 1e-15);
        assert!(g.data().iter().all(|v| *v == 0.0));
        let mean: f64 = y.data().iter().sum::<f64>() / y.data().len() as f64;
        let (l, _) = loss(&scaled(&y, |v| 1.1 * v), &y, 0.0).unwrap();
        assert!((l - 0.1 * mean).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let y = cube(6, 2, 3, 5);
        let p = cube(7, 2, 3, 5);
        let (_, g) = loss(&p, &y, 0.1).unwrap();
        let fd = finite_diff_grad(
            |v| loss(&HsiCube::new(2, 3, y.grid().to_vec(), v.to_vec()).unwrap(), &y, 0.1).unwrap().0,
            p.data(),
            1e-6,
        )
        .unwrap();
        for (a, b) in g.data().iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn regularized_loss_composition() {
        let grid = linspace(400.0, 900.0, 5);
        let s =
            SrfMatrix::from_rows("t", grid.clone(), &[vec![0.5, 0.5, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.2, 0.3, 0.5]])
                .unwrap();
        let y = HsiCube::new(2, 2, grid.clone(), (0..20).map(|i| 0.1 + 0.04 * i as f64).collect()).unwrap();
        let p =
            HsiCube::new(2, 2, grid.clone(), (0..20).map(|i| 0.3 + 0.5 * (i as f64).cos().abs()).collect()).unwrap();
        assert_eq!(regularized_loss(&y, &y, &s, 0.1, 0.5).unwrap().0, loss(&y, &y, 0.1).unwrap().0);
        assert_eq!(regularized_loss(&p, &y, &s, 0.1, 0.0).unwrap().0, loss(&p, &y, 0.1).unwrap().0);

        let sp = crate::srf::degrade(&s, &p).unwrap();
        let sy = crate::srf::degrade(&s, &y).unwrap();
        let l1: f64 = sp.data().iter().zip(sy.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / sp.data().len() as f64;
        let want = loss(&p, &y, 0.1).unwrap().0 + 0.5 * l1;
        let (got, g) = regularized_loss(&p, &y, &s, 0.1, 0.5).unwrap();
        assert!((got - want).abs() < 1e-14);
        let fd = finite_diff_grad(
            |v| regularized_loss(&HsiCube::new(2, 2, grid.clone(), v.to_vec()).unwrap(), &y, &s, 0.1, 0.5).unwrap().0,
            p.data(),
            1e-6,
        )
        .unwrap();
        for (a, b) in g.data().iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn mismatched_shapes() {
        assert!(evaluate(&cube(1, 2, 2, 3), &cube(1, 2, 3, 3)).is_err());
    }
}
