//! Explicit proximal operators `prox_Φ(A) = argmin_M ½‖A − M‖² + Φ(M)`.
//!
//! Each regularizer is applied entrywise except total variation, which acts on
//! every band (row) as a `W × H` image using forward differences with
//! Neumann boundary conditions and the isotropic norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::BandMatrix;

/// Value reported by [`regularizer_value`] for points outside a box constraint.
///
/// It is `+∞`; callers must test for it before combining it with other terms.
pub const INFEASIBLE: f64 = f64::INFINITY;

pub const DEFAULT_TV_ITERS: usize = 20;

fn default_tv_iters() -> usize {
    DEFAULT_TV_ITERS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxSpec {
    Identity,
    SoftThreshold {
        tau: f64,
    },
    Box {
        lo: f64,
        hi: f64,
    },
    #[serde(rename = "total_variation_2d")]
    TotalVariation2D {
        tau: f64,
        #[serde(default = "default_tv_iters")]
        inner_iters: usize,
    },
}

impl ProxSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            ProxSpec::Identity => Ok(()),
            ProxSpec::SoftThreshold { tau } if !(tau >= 0.0 && tau.is_finite()) => {
                bad(format!("soft threshold tau must be >= 0, got {tau}"))
            }
            ProxSpec::Box { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                bad(format!("box needs finite lo < hi, got [{lo}, {hi}]"))
            }
            ProxSpec::TotalVariation2D { tau, inner_iters } => {
                if !(tau >= 0.0 && tau.is_finite()) {
                    bad(format!("TV tau must be >= 0, got {tau}"))
                } else if inner_iters == 0 {
                    bad("TV needs at least one inner iteration".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// The operator for `weight · Φ`.
    pub fn scaled(&self, weight: f64) -> ProxSpec {
        match *self {
            ProxSpec::SoftThreshold { tau } => ProxSpec::SoftThreshold { tau: tau * weight },
            ProxSpec::TotalVariation2D { tau, inner_iters } => ProxSpec::TotalVariation2D {
                tau: tau * weight,
                inner_iters,
            },
            other => other,
        }
    }

    fn needs_dims(&self) -> bool {
        matches!(self, ProxSpec::TotalVariation2D { .. })
    }
}

fn check_dims(spec: &ProxSpec, a: &BandMatrix, dims: Option<(usize, usize)>) -> Result<(usize, usize)> {
    match dims {
        Some((w, h)) if w * h == a.cols() => Ok((w, h)),
        Some((w, h)) => Err(Error::mismatch("TV spatial dims", w * h, a.cols())),
        None if spec.needs_dims() => Err(Error::InvalidParameter(
            "total variation needs the spatial dims (W, H)".into(),
        )),
        None => Ok((a.cols(), 1)),
    }
}

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

pub fn prox_apply(spec: &ProxSpec, a: &BandMatrix, dims: Option<(usize, usize)>) -> Result<BandMatrix> {
    spec.validate()?;
    let (w, h) = check_dims(spec, a, dims)?;
    Ok(match *spec {
        ProxSpec::Identity => a.clone(),
        ProxSpec::SoftThreshold { tau } => a.map(|v| soft_threshold(v, tau)),
        ProxSpec::Box { lo, hi } => a.map(|v| v.clamp(lo, hi)),
        ProxSpec::TotalVariation2D { tau, .. } if tau == 0.0 => a.clone(),
        ProxSpec::TotalVariation2D { tau, inner_iters } => {
            let mut out = a.clone();
            for b in 0..a.rows() {
                tv_denoise_band(a.row(b), out.row_mut(b), w, h, tau, inner_iters);
            }
            out
        }
    })
}

/// `Φ(A)` for objective reporting; [`INFEASIBLE`] outside a box.
pub fn regularizer_value(spec: &ProxSpec, a: &BandMatrix, dims: Option<(usize, usize)>) -> Result<f64> {
    spec.validate()?;
    let (w, h) = check_dims(spec, a, dims)?;
    Ok(match *spec {
        ProxSpec::Identity => 0.0,
        ProxSpec::SoftThreshold { tau } => tau * a.l1_norm(),
        ProxSpec::Box { lo, hi } => {
            if a.data().iter().all(|v| (lo..=hi).contains(v)) {
                0.0
            } else {
                INFEASIBLE
            }
        }
        ProxSpec::TotalVariation2D { tau, .. } => {
            tau * (0..a.rows()).map(|b| total_variation(a.row(b), w, h)).sum::<f64>()
        }
    })
}

/// Isotropic total variation of one `w × h` band.
pub fn total_variation(band: &[f64], w: usize, h: usize) -> f64 {
    let mut tv = 0.0;
    for i in 0..w {
        for j in 0..h {
            let v = band[i * h + j];
            let dx = if i + 1 < w { band[(i + 1) * h + j] - v } else { 0.0 };
            let dy = if j + 1 < h { band[i * h + j + 1] - v } else { 0.0 };
            tv += (dx * dx + dy * dy).sqrt();
        }
    }
    tv
}

// Forward-difference gradient with Neumann boundary.
fn gradient(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for i in 0..w {
        for j in 0..h {
            let k = i * h + j;
            gx[k] = if i + 1 < w { u[k + h] - u[k] } else { 0.0 };
            gy[k] = if j + 1 < h { u[k + 1] - u[k] } else { 0.0 };
        }
    }
}

// Negative adjoint of `gradient`.
fn divergence(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for i in 0..w {
        for j in 0..h {
            let k = i * h + j;
            let mut d = 0.0;
            if i + 1 < w {
                d += px[k];
            }
            if i > 0 {
                d -= px[k - h];
            }
            if j + 1 < h {
                d += py[k];
            }
            if j > 0 {
                d -= py[k - 1];
            }
            out[k] = d;
        }
    }
}

/// Fast gradient projection on the TV dual: `u = f − λ·div p` with `|p| ≤ 1`
/// pointwise, projected gradient steps of `1/8` and Nesterov momentum.
/// Runs exactly `iters` iterations.
fn tv_denoise_band(f: &[f64], u: &mut [f64], w: usize, h: usize, lambda: f64, iters: usize) {
    let n = w * h;
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut rx = vec![0.0; n];
    let mut ry = vec![0.0; n];
    let mut prev_x = vec![0.0; n];
    let mut prev_y = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut t = 1.0f64;

    for _ in 0..iters {
        divergence(&rx, &ry, w, h, &mut div);
        for k in 0..n {
            u[k] = f[k] - lambda * div[k];
        }
        gradient(u, w, h, &mut gx, &mut gy);
        prev_x.copy_from_slice(&px);
        prev_y.copy_from_slice(&py);
        let step = 1.0 / (8.0 * lambda);
        for k in 0..n {
            let qx = rx[k] - step * gx[k];
            let qy = ry[k] - step * gy[k];
            let norm = (qx * qx + qy * qy).sqrt().max(1.0);
            px[k] = qx / norm;
            py[k] = qy / norm;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        for k in 0..n {
            rx[k] = px[k] + momentum * (px[k] - prev_x[k]);
            ry[k] = py[k] + momentum * (py[k] - prev_y[k]);
        }
        t = t_next;
    }
    divergence(&px, &py, w, h, &mut div);
    for k in 0..n {
        u[k] = f[k] - lambda * div[k];
    }
}
