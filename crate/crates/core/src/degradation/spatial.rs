//! Blur-plus-decimation operator `H` and its adjoint.
//!
//! The forward map sends a `W × H` band to a `(W/K) × (H/K)` band:
//!
//! ```text
//! x[u, v] = Σ_{i,j} k[i, j] · z[b(K·u + s + i), b(K·v + s + j)]
//! ```
//!
//! with `s = floor((K − size) / 2)` and `b` the boundary index map. For the
//! default `size = 8, K = 4` this puts the taps at `K·u − 2 ..= K·u + 5`, i.e.
//! at offsets `−3.5 ..= +3.5` around the centre of each `K × K` block. The
//! adjoint scatters with the same taps, so `⟨Hz, x⟩ = ⟨z, Hᵀx⟩` holds by
//! construction for every boundary mode.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::BandMatrix;

/// How blur taps that fall outside the image are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Mirror with edge duplication (`… 1 0 | 0 1 2 …`).
    #[default]
    Symmetric,
    Periodic,
    /// Taps outside the image read zero.
    Zero,
}

impl Boundary {
    /// Maps a possibly out-of-range index onto `0..n`, or `None` for zero padding.
    pub fn resolve(self, i: isize, n: usize) -> Option<usize> {
        let n_i = n as isize;
        match self {
            Boundary::Periodic => Some(i.rem_euclid(n_i) as usize),
            Boundary::Symmetric => {
                let m = i.rem_euclid(2 * n_i);
                Some(if m < n_i { m } else { 2 * n_i - 1 - m } as usize)
            }
            Boundary::Zero => (0..n_i).contains(&i).then_some(i as usize),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Symmetric => "symmetric",
            Boundary::Periodic => "periodic",
            Boundary::Zero => "zero",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Boundary::Symmetric),
            "periodic" => Ok(Boundary::Periodic),
            "zero" => Ok(Boundary::Zero),
            other => Err(Error::InvalidParameter(format!(
                "unknown boundary mode {other:?} (expected symmetric, periodic or zero)"
            ))),
        }
    }
}

/// Square, nonnegative blur kernel normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    size: usize,
    weights: Vec<f64>,
}

impl BlurKernel {
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || weights.len() != size * size {
            return Err(Error::mismatch(
                "BlurKernel::from_weights",
                size * size,
                weights.len(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "kernel weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "kernel weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { size, weights })
    }

    pub fn delta() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.size + j]
    }
}

/// Sampled isotropic Gaussian on a `size × size` grid centred at `(size − 1) / 2`,
/// normalized to unit sum. Even sizes place taps at half-integer offsets.
pub fn make_blur_kernel(size: usize, sigma: f64) -> Result<BlurKernel> {
    if size == 0 {
        return Err(Error::InvalidParameter("kernel size must be >= 1".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kernel sigma must be positive, got {sigma}"
        )));
    }
    let centre = (size as f64 - 1.0) / 2.0;
    let profile: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - centre;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let mut weights = Vec::with_capacity(size * size);
    for &a in &profile {
        for &b in &profile {
            weights.push(a * b);
        }
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(BlurKernel { size, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialOperator {
    kernel: BlurKernel,
    ratio: usize,
    boundary: Boundary,
    in_dims: (usize, usize),
    out_dims: (usize, usize),
    // resolved source index of tap i for output row u: row_taps[u * size + i]
    row_taps: Vec<Option<usize>>,
    col_taps: Vec<Option<usize>>,
}

impl SpatialOperator {
    pub fn new(
        kernel: BlurKernel,
        ratio: usize,
        in_dims: (usize, usize),
        boundary: Boundary,
    ) -> Result<Self> {
        let (w, h) = in_dims;
        if ratio == 0 {
            return Err(Error::InvalidParameter("decimation ratio must be >= 1".into()));
        }
        if w == 0 || h == 0 || w % ratio != 0 || h % ratio != 0 {
            return Err(Error::mismatch(
                "spatial operator dims",
                format!("width and height divisible by K = {ratio}"),
                format!("{w}x{h}"),
            ));
        }
        let out_dims = (w / ratio, h / ratio);
        let shift = (ratio as isize - kernel.size as isize).div_euclid(2);
        let taps = |n_out: usize, n_in: usize| -> Vec<Option<usize>> {
            (0..n_out)
                .flat_map(|u| {
                    (0..kernel.size).map(move |i| {
                        boundary.resolve((ratio * u) as isize + shift + i as isize, n_in)
                    })
                })
                .collect()
        };
        let row_taps = taps(out_dims.0, w);
        let col_taps = taps(out_dims.1, h);
        Ok(Self {
            kernel,
            ratio,
            boundary,
            in_dims,
            out_dims,
            row_taps,
            col_taps,
        })
    }

    pub fn identity(dims: (usize, usize)) -> Self {
        Self::new(BlurKernel::delta(), 1, dims, Boundary::Periodic)
            .expect("delta operator is always valid")
    }

    pub fn kernel(&self) -> &BlurKernel {
        &self.kernel
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn in_dims(&self) -> (usize, usize) {
        self.in_dims
    }

    pub fn out_dims(&self) -> (usize, usize) {
        self.out_dims
    }

    /// N, the number of high-resolution pixels.
    pub fn in_pixels(&self) -> usize {
        self.in_dims.0 * self.in_dims.1
    }

    /// N_HSI, the number of low-resolution pixels.
    pub fn out_pixels(&self) -> usize {
        self.out_dims.0 * self.out_dims.1
    }

    fn forward_band(&self, src: &[f64], dst: &mut [f64]) {
        let k = self.kernel.size;
        let h_in = self.in_dims.1;
        let h_out = self.out_dims.1;
        for u in 0..self.out_dims.0 {
            let rows = &self.row_taps[u * k..(u + 1) * k];
            for v in 0..h_out {
                let cols = &self.col_taps[v * k..(v + 1) * k];
                let mut acc = 0.0;
                for (i, r) in rows.iter().enumerate() {
                    let Some(r) = r else { continue };
                    let krow = &self.kernel.weights[i * k..(i + 1) * k];
                    let srow = &src[r * h_in..(r + 1) * h_in];
                    for (wgt, c) in krow.iter().zip(cols) {
                        if let Some(c) = c {
                            acc += wgt * srow[*c];
                        }
                    }
                }
                dst[u * h_out + v] = acc;
            }
        }
    }

    fn adjoint_band(&self, src: &[f64], dst: &mut [f64]) {
        let k = self.kernel.size;
        let h_in = self.in_dims.1;
        let h_out = self.out_dims.1;
        for u in 0..self.out_dims.0 {
            let rows = &self.row_taps[u * k..(u + 1) * k];
            for v in 0..h_out {
                let cols = &self.col_taps[v * k..(v + 1) * k];
                let val = src[u * h_out + v];
                if val == 0.0 {
                    continue;
                }
                for (i, r) in rows.iter().enumerate() {
                    let Some(r) = r else { continue };
                    let krow = &self.kernel.weights[i * k..(i + 1) * k];
                    let drow = &mut dst[r * h_in..(r + 1) * h_in];
                    for (wgt, c) in krow.iter().zip(cols) {
                        if let Some(c) = c {
                            drow[*c] += wgt * val;
                        }
                    }
                }
            }
        }
    }

    /// `Z ↦ Z·H`: blur and decimate every band (row) independently.
    pub fn apply_h(&self, z: &BandMatrix) -> Result<BandMatrix> {
        if z.cols() != self.in_pixels() {
            return Err(Error::mismatch("apply_h columns", self.in_pixels(), z.cols()));
        }
        let mut out = BandMatrix::zeros(z.rows(), self.out_pixels());
        for b in 0..z.rows() {
            self.forward_band(z.row(b), out.row_mut(b));
        }
        Ok(out)
    }

    /// `X ↦ X·Hᵀ`, the exact adjoint of [`apply_h`](Self::apply_h).
    pub fn apply_ht(&self, x: &BandMatrix) -> Result<BandMatrix> {
        if x.cols() != self.out_pixels() {
            return Err(Error::mismatch("apply_ht columns", self.out_pixels(), x.cols()));
        }
        let mut out = BandMatrix::zeros(x.rows(), self.in_pixels());
        for b in 0..x.rows() {
            self.adjoint_band(x.row(b), out.row_mut(b));
        }
        Ok(out)
    }
}
