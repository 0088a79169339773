//! Full-reference quality metrics for hyperspectral reconstructions.
//!
//! All metrics assume a peak value of 1. SAM is reported in degrees.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::degradation::{SpatialOperator, SpectralResponse};
use crate::error::{Error, Result};
use crate::solver::ExposureField;
use crate::tensor::{BandMatrix, HsiCube};

/// Returned by [`psnr`] when the mean squared error is below `1e-30`.
pub const PSNR_CAP_DB: f64 = 300.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SAM_EPS: f64 = 1e-12;
const ERGAS_MEAN_FLOOR: f64 = 1e-12;

fn check_same(r: &HsiCube, e: &HsiCube) -> Result<()> {
    if r.dims() != e.dims() {
        return Err(Error::mismatch("metric inputs", r.dims(), e.dims()));
    }
    Ok(())
}

pub fn psnr(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    check_same(reference, estimate)?;
    let n = reference.data().len() as f64;
    let mse = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse < 1e-30 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

fn ssim_band(a: &[f64], b: &[f64], w: usize, h: usize, g: &[f64]) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let r = SSIM_WINDOW / 2;
    let full = w >= SSIM_WINDOW && h >= SSIM_WINDOW;
    let (us, hs) = if full { (r..w - r, r..h - r) } else { (0..w, 0..h) };

    let mut total = 0.0;
    let mut count = 0usize;
    for u in us {
        for v in hs.clone() {
            let (mut sw, mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, gi) in g.iter().enumerate() {
                let Some(uu) = (u + i).checked_sub(r).filter(|&x| x < w) else {
                    continue;
                };
                for (j, gj) in g.iter().enumerate() {
                    let Some(vv) = (v + j).checked_sub(r).filter(|&x| x < h) else {
                        continue;
                    };
                    let wt = gi * gj;
                    let (x, y) = (a[uu * h + vv], b[uu * h + vv]);
                    sw += wt;
                    ma += wt * x;
                    mb += wt * y;
                    saa += wt * x * x;
                    sbb += wt * y * y;
                    sab += wt * x * y;
                }
            }
            let (ma, mb) = (ma / sw, mb / sw);
            let va = saa / sw - ma * ma;
            let vb = sbb / sw - mb * mb;
            let cov = sab / sw - ma * mb;
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Band-averaged SSIM with an 11×11 Gaussian window (σ = 1.5).
///
/// When both spatial dims are at least 11 only fully covered window positions
/// are averaged. Smaller images use a truncated, renormalized window at every pixel.
pub fn ssim(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    check_same(reference, estimate)?;
    let g = gaussian_window();
    let (w, h) = (reference.width(), reference.height());
    let sum: f64 = (0..reference.bands())
        .map(|b| ssim_band(reference.band(b), estimate.band(b), w, h, &g))
        .sum();
    Ok(sum / reference.bands() as f64)
}

/// Angle in radians between two vectors via `2·atan2(‖r̂ − ê‖, ‖r̂ + ê‖)`.
fn angle(r: &[f64], e: &[f64], rn: f64, en: f64) -> f64 {
    let (mut d, mut s) = (0.0, 0.0);
    for (a, b) in r.iter().zip(e) {
        let (x, y) = (a / rn, b / en);
        d += (x - y) * (x - y);
        s += (x + y) * (x + y);
    }
    2.0 * d.sqrt().atan2(s.sqrt())
}

/// Mean spectral angle in degrees over pixels whose reference spectrum has norm ≥ `eps`.
///
/// An estimate spectrum with norm below `eps` counts as orthogonal (90°). Returns 0
/// with a warning when every pixel is skipped.
pub fn sam(reference: &HsiCube, estimate: &HsiCube, eps: f64) -> Result<f64> {
    check_same(reference, estimate)?;
    let c = reference.bands();
    let n = reference.dims().pixels();
    let mut r = vec![0.0; c];
    let mut e = vec![0.0; c];
    let mut total = 0.0;
    let mut used = 0usize;
    for p in 0..n {
        for b in 0..c {
            r[b] = reference.data()[b * n + p];
            e[b] = estimate.data()[b * n + p];
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn < eps {
            continue;
        }
        let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        total += if en < eps {
            std::f64::consts::FRAC_PI_2
        } else {
            angle(&r, &e, rn, en)
        };
        used += 1;
    }
    if used == 0 {
        log::warn!("SAM: every reference spectrum is below eps; reporting 0");
        return Ok(0.0);
    }
    Ok((total / used as f64).to_degrees())
}

/// `(100/K)·sqrt(mean_b RMSE_b² / μ_b²)`, normalized by the reference band means.
///
/// Bands whose reference mean is below `1e-12` in magnitude are skipped and the
/// average runs over the remaining bands.
pub fn ergas(reference: &HsiCube, estimate: &HsiCube, ratio: usize) -> Result<f64> {
    check_same(reference, estimate)?;
    if ratio == 0 {
        return Err(Error::InvalidParameter("ERGAS ratio must be >= 1".into()));
    }
    let n = reference.dims().pixels() as f64;
    let mut acc = 0.0;
    let mut used = 0usize;
    for b in 0..reference.bands() {
        let (rb, eb) = (reference.band(b), estimate.band(b));
        let mean = rb.iter().sum::<f64>() / n;
        if mean.abs() < ERGAS_MEAN_FLOOR {
            log::warn!("ERGAS: skipping band {b} with near-zero mean");
            continue;
        }
        let mse = rb.iter().zip(eb).map(|(a, e)| (a - e) * (a - e)).sum::<f64>() / n;
        acc += mse / (mean * mean);
        used += 1;
    }
    if used == 0 {
        return Err(Error::ErgasUndefined);
    }
    Ok(100.0 / ratio as f64 * (acc / used as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub eta1: f64,
    pub eta2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { eta1: 0.3, eta2: 0.1 }
    }
}

/// Reference data for [`consistency_loss`].
#[derive(Debug, Clone, Copy)]
pub struct LossReference<'a> {
    pub z: &'a BandMatrix,
    pub zx: &'a BandMatrix,
    pub zy: &'a BandMatrix,
    pub x: &'a BandMatrix,
    pub y: &'a BandMatrix,
}

/// ℓ₁ loss of a solver output against ground truth, exposure-degraded references
/// and both observations:
///
/// ```text
/// ‖Ẑ−Z‖₁ + η₁‖Ẑx − Z∘L₁‖₁ + η₁‖Ẑy − Z∘L₂‖₁ + η₂‖X̂ − (Z∘L₁)H‖₁ + η₂‖Ŷ − P(Z∘L₂)‖₁
/// ```
pub fn consistency_loss(
    z: &BandMatrix,
    l1: &ExposureField,
    l2: &ExposureField,
    reference: LossReference<'_>,
    op: &SpatialOperator,
    p: &SpectralResponse,
    weights: LossWeights,
) -> Result<f64> {
    let zl1 = z.hadamard(l1.as_matrix())?;
    let zl2 = z.hadamard(l2.as_matrix())?;
    let base = reference.z.sub(z)?.l1_norm();
    let ex = reference.zx.sub(&zl1)?.l1_norm();
    let ey = reference.zy.sub(&zl2)?.l1_norm();
    let ox = reference.x.sub(&op.apply_h(&zl1)?)?.l1_norm();
    let oy = reference.y.sub(&p.apply_p(&zl2)?)?.l1_norm();
    Ok(base + weights.eta1 * (ex + ey) + weights.eta2 * (ox + oy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub sam: f64,
    pub ergas: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str = "psnr,ssim,sam,ergas,loss";

impl MetricReport {
    pub fn compute(reference: &HsiCube, estimate: &HsiCube, ratio: usize) -> Result<Self> {
        Ok(Self {
            psnr: psnr(reference, estimate)?,
            ssim: ssim(reference, estimate)?,
            sam: sam(reference, estimate, SAM_EPS)?,
            ergas: ergas(reference, estimate, ratio)?,
            loss: None,
        })
    }

    /// One CSV data row matching [`REPORT_CSV_HEADER`]; an absent loss is an empty field.
    pub fn csv_row(&self) -> String {
        let loss = self.loss.map(|v| v.to_string()).unwrap_or_default();
        format!("{},{},{},{},{}", self.psnr, self.ssim, self.sam, self.ergas, loss)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{REPORT_CSV_HEADER}\n{}", self.csv_row()).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}
