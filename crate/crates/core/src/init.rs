//! Deterministic starting points `(L₁⁰, L₂⁰, Z⁰)` for the solver and the
//! initialization objective used to score them.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::degradation::{SpatialOperator, SpectralResponse};
use crate::error::{Error, Result};
use crate::solver::ExposureField;
use crate::tensor::BandMatrix;

pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_INIT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitKind {
    NaiveOnes,
    FusedLeastSquares {
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    /// Start from caller-supplied fields (typically the simulation ground truth).
    Oracle,
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

fn default_lambda() -> f64 {
    DEFAULT_INIT_LAMBDA
}

impl Default for InitKind {
    fn default() -> Self {
        InitKind::FusedLeastSquares { ridge: DEFAULT_RIDGE }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitKind::NaiveOnes => f.write_str("naive"),
            InitKind::FusedLeastSquares { .. } => f.write_str("fused"),
            InitKind::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(InitKind::NaiveOnes),
            "fused" => Ok(InitKind::default()),
            "oracle" => Ok(InitKind::Oracle),
            other => Err(Error::InvalidParameter(format!(
                "unknown init strategy {other:?} (expected naive, fused or oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitStrategy {
    #[serde(flatten)]
    pub kind: InitKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

impl Default for InitStrategy {
    fn default() -> Self {
        Self {
            kind: InitKind::default(),
            lambda: DEFAULT_INIT_LAMBDA,
        }
    }
}

impl InitStrategy {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let InitKind::FusedLeastSquares { ridge } = self.kind {
            if !(ridge >= 0.0 && ridge.is_finite()) {
                return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
            }
        }
        Ok(())
    }
}

pub type InitTriple = (ExposureField, ExposureField, BandMatrix);

/// Source position and blend weight along one axis, pixel centres aligned.
fn axis_weights(n: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    let last = (n - 1) as f64;
    (0..n * factor)
        .map(|p| {
            let c = ((p as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, last);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, c - i0 as f64)
        })
        .collect()
}

/// Per-band bilinear upsampling of a `C × (w·h)` matrix to `C × (Kw·Kh)`.
pub fn bilinear_upsample(x: &BandMatrix, dims: (usize, usize), factor: usize) -> Result<BandMatrix> {
    let (w, h) = dims;
    if factor == 0 || w == 0 || h == 0 {
        return Err(Error::InvalidParameter("upsampling needs nonzero dims and factor".into()));
    }
    if x.cols() != w * h {
        return Err(Error::mismatch("upsample input pixels", w * h, x.cols()));
    }
    let rw = axis_weights(w, factor);
    let rh = axis_weights(h, factor);
    let (wo, ho) = (w * factor, h * factor);
    let mut out = BandMatrix::zeros(x.rows(), wo * ho);
    for b in 0..x.rows() {
        let src = x.row(b);
        let dst = out.row_mut(b);
        for (u, &(a0, a1, fa)) in rw.iter().enumerate() {
            for (v, &(c0, c1, fc)) in rh.iter().enumerate() {
                let top = (1.0 - fc) * src[a0 * h + c0] + fc * src[a0 * h + c1];
                let bot = (1.0 - fc) * src[a1 * h + c0] + fc * src[a1 * h + c1];
                dst[u * ho + v] = (1.0 - fa) * top + fa * bot;
            }
        }
    }
    Ok(out)
}

fn check_observations(x: &BandMatrix, y: &BandMatrix, op: &SpatialOperator, p: &SpectralResponse) -> Result<()> {
    if x.rows() != p.bands() {
        return Err(Error::mismatch("X bands", p.bands(), x.rows()));
    }
    if x.cols() != op.out_pixels() {
        return Err(Error::mismatch("X pixels", op.out_pixels(), x.cols()));
    }
    if y.rows() != p.channels() {
        return Err(Error::mismatch("Y channels", p.channels(), y.rows()));
    }
    if y.cols() != op.in_pixels() {
        return Err(Error::mismatch("Y pixels", op.in_pixels(), y.cols()));
    }
    Ok(())
}

/// Unit exposures and `Z⁰` = bilinear upsampling of `X`.
pub fn init_naive(x: &BandMatrix, y: &BandMatrix, op: &SpatialOperator, p: &SpectralResponse) -> Result<InitTriple> {
    check_observations(x, y, op, p)?;
    let z = bilinear_upsample(x, op.out_dims(), op.ratio())?;
    let (c, n) = z.shape();
    Ok((ExposureField::ones(c, n), ExposureField::ones(c, n), z))
}

/// Upsampled `X` corrected by the ridge back-projection `Pᵀ(PPᵀ + ridge·I)⁻¹(Y − P·Z_up)`.
pub fn init_fused(
    x: &BandMatrix,
    y: &BandMatrix,
    op: &SpatialOperator,
    p: &SpectralResponse,
    ridge: f64,
) -> Result<InitTriple> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
    }
    let (l1, l2, z_up) = init_naive(x, y, op, p)?;
    let residual = y.sub(&p.apply_p(&z_up)?)?;

    let m = p.channels();
    let pm = p.matrix();
    let gram = DMatrix::from_fn(m, m, |i, j| {
        let g: f64 = pm.row(i).iter().zip(pm.row(j)).map(|(a, b)| a * b).sum();
        if i == j {
            g + ridge
        } else {
            g
        }
    });
    let scale = gram.diagonal().max();
    let chol = gram.cholesky().ok_or(Error::SingularSpectralGram)?;
    // squared pivots are the Schur complements; tiny ones mean rank deficiency
    let pivot_min = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if !(pivot_min > 1e-12 * scale) {
        return Err(Error::SingularSpectralGram);
    }

    let n = residual.cols();
    let mut coeffs = BandMatrix::zeros(m, n);
    let mut rhs = DVector::zeros(m);
    for j in 0..n {
        for i in 0..m {
            rhs[i] = residual.get(i, j);
        }
        let sol = chol.solve(&rhs);
        for i in 0..m {
            coeffs.row_mut(i)[j] = sol[i];
        }
    }
    let z = z_up.add(&p.apply_pt(&coeffs)?)?;
    Ok((l1, l2, z))
}

/// `‖Ẑ − Z⁰‖₁ + λ‖Ẑx − Z⁰∘L₁⁰‖₁ + λ‖Ẑy − Z⁰∘L₂⁰‖₁`
pub fn init_objective(
    z0: &BandMatrix,
    l1: &ExposureField,
    l2: &ExposureField,
    z_ref: &BandMatrix,
    zx_ref: &BandMatrix,
    zy_ref: &BandMatrix,
    lambda: f64,
) -> Result<f64> {
    let base = z_ref.sub(z0)?.l1_norm();
    let ex = zx_ref.sub(&z0.hadamard(l1.as_matrix())?)?.l1_norm();
    let ey = zy_ref.sub(&z0.hadamard(l2.as_matrix())?)?.l1_norm();
    Ok(base + lambda * ex + lambda * ey)
}
