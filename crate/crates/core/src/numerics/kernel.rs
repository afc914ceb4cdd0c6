use crate::error::{Error, Result};

/// Nadaraya–Watson estimate with a Gaussian kernel of width `bandwidth` (nm).
///
/// Weights are evaluated in the log domain so that queries far outside the sample
/// support fall back to the nearest sample instead of `0/0`.
pub fn kernel_regress(samples: &[(f64, f64)], query: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidConfig(format!("kernel bandwidth must be positive, got {bandwidth}")));
    }
    if samples.iter().any(|(w, v)| !w.is_finite() || !v.is_finite()) {
        return Err(Error::NonFiniteValue("kernel regression sample".into()));
    }
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut logw = vec![0.0; samples.len()];
    Ok(query
        .iter()
        .map(|&q| {
            let mut top = f64::NEG_INFINITY;
            for (lw, (w, _)) in logw.iter_mut().zip(samples) {
                let d = q - w;
                *lw = -d * d * inv;
                top = top.max(*lw);
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (lw, (_, v)) in logw.iter().zip(samples) {
                let k = (lw - top).exp();
                num += k * v;
                den += k;
            }
            num / den
        })
        .collect())
}

/// Median spacing of consecutive sample wavelengths; the default kernel bandwidth.
///
/// Falls back to 1 nm for a single sample, where the bandwidth has no effect.
pub fn median_spacing(wavelengths: &[f64]) -> f64 {
    let mut gaps: Vec<f64> = wavelengths.windows(2).map(|w| (w[1] - w[0]).abs()).filter(|g| *g > 0.0).collect();
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    if gaps.len() % 2 == 1 {
        gaps[mid]
    } else {
        0.5 * (gaps[mid - 1] + gaps[mid])
    }
}
