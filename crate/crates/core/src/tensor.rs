//! Dense cube and band-matrix containers.
//!
//! An [`HsiCube`] stores `bands × width × height` values band-major. Inside a
//! band the spatial plane is a `width × height` array in row-major order, so
//! the pixel `(w, h)` lives at offset `w * height + h`. The mode-1 unfolding
//! of a cube is therefore the same buffer viewed as a `bands × (width·height)`
//! [`BandMatrix`], and every spatial operator in this crate indexes pixels the
//! same way.

use crate::error::{Error, Result};

/// Cube dimensions `(bands, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CubeDims {
    pub bands: usize,
    pub width: usize,
    pub height: usize,
}

impl CubeDims {
    pub fn new(bands: usize, width: usize, height: usize) -> Self {
        Self {
            bands,
            width,
            height,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.bands * self.pixels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for CubeDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.bands, self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    dims: CubeDims,
    data: Vec<f64>,
}

impl HsiCube {
    pub fn new(bands: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let dims = CubeDims::new(bands, width, height);
        if bands == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "cube dimensions must be positive, got {dims}"
            )));
        }
        if data.len() != dims.len() {
            return Err(Error::mismatch("HsiCube::new", dims.len(), data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: CubeDims, value: f64) -> Result<Self> {
        Self::new(
            dims.bands,
            dims.width,
            dims.height,
            vec![value; dims.len()],
        )
    }

    /// Builds a cube by evaluating `f(band, w, h)` at every entry.
    pub fn from_fn(
        dims: CubeDims,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for b in 0..dims.bands {
            for w in 0..dims.width {
                for h in 0..dims.height {
                    data.push(f(b, w, h));
                }
            }
        }
        Self::new(dims.bands, dims.width, dims.height, data)
    }

    pub fn dims(&self) -> CubeDims {
        self.dims
    }

    pub fn bands(&self) -> usize {
        self.dims.bands
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[f64] {
        let n = self.dims.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, b: usize, w: usize, h: usize) -> f64 {
        self.data[b * self.dims.pixels() + w * self.dims.height + h]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> HsiCube {
        HsiCube {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Checks that every value is finite and, when `unit_range` is set, inside `[0, 1]`.
    pub fn validate(&self, unit_range: bool) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cube"));
        }
        if unit_range {
            if let Some(v) = self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidParameter(format!(
                    "cube value {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Row-major real matrix; rows are bands, columns are pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::mismatch(
                "BandMatrix::new",
                format!("{rows}x{cols} = {} values", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::mismatch("BandMatrix::from_rows", cols, bad.len()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn same_shape(&self, other: &BandMatrix, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::mismatch(
                context,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &BandMatrix,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<BandMatrix> {
        self.same_shape(other, context)?;
        Ok(BandMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> BandMatrix {
        BandMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn hadamard(&self, other: &BandMatrix) -> Result<BandMatrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn add(&self, other: &BandMatrix) -> Result<BandMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &BandMatrix) -> Result<BandMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &BandMatrix) -> Result<BandMatrix> {
        self.zip_with(other, "axpy", |a, b| a + s * b)
    }

    pub fn scale(&self, s: f64) -> BandMatrix {
        self.map(|v| v * s)
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &BandMatrix) -> Result<BandMatrix> {
        if self.cols != other.rows {
            return Err(Error::mismatch(
                "matmul inner dimension",
                self.cols,
                other.rows,
            ));
        }
        let mut out = BandMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = out.row_mut(i);
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> BandMatrix {
        BandMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn dot(&self, other: &BandMatrix) -> Result<f64> {
        self.same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &BandMatrix) -> Result<f64> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Mode-1 unfolding: one row per band, one column per pixel.
pub fn mode1_unfold(cube: &HsiCube) -> BandMatrix {
    BandMatrix {
        rows: cube.bands(),
        cols: cube.dims().pixels(),
        data: cube.data().to_vec(),
    }
}

/// Inverse of [`mode1_unfold`].
pub fn mode1_fold(m: &BandMatrix, dims: CubeDims) -> Result<HsiCube> {
    if m.rows() != dims.bands || m.cols() != dims.pixels() {
        return Err(Error::mismatch(
            "mode1_fold",
            format!("{}x{} for cube {dims}", dims.bands, dims.pixels()),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    HsiCube::new(dims.bands, dims.width, dims.height, m.data().to_vec())
}

/// Element-wise product of two equally shaped matrices.
pub fn hadamard(a: &BandMatrix, b: &BandMatrix) -> Result<BandMatrix> {
    a.hadamard(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unfold_degenerate_cube() {
        let c = HsiCube::new(1, 1, 1, vec![0.5]).unwrap();
        let m = mode1_unfold(&c);
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m.get(0, 0), 0.5);
        assert_eq!(mode1_fold(&m, c.dims()).unwrap(), c);
    }

    #[test]
    fn unfold_layout_is_band_rows() {
        let (a, b, c, d) = (0.1, 0.2, 0.3, 0.4);
        let cube = HsiCube::new(2, 2, 1, vec![a, b, c, d]).unwrap();
        let m = mode1_unfold(&cube);
        assert_eq!(m, BandMatrix::from_rows(&[vec![a, b], vec![c, d]]).unwrap());
    }

    #[test]
    fn pixel_order_is_row_major_over_width_height() {
        let dims = CubeDims::new(1, 2, 3);
        let cube = HsiCube::from_fn(dims, |_, w, h| (10 * w + h) as f64).unwrap();
        assert_eq!(cube.data(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(cube.get(0, 1, 2), 12.0);
    }

    #[test]
    fn fold_rejects_mismatched_dims() {
        let m = BandMatrix::zeros(2, 3);
        let err = mode1_fold(&m, CubeDims::new(2, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(err.to_string().contains("2x3"));
    }

    #[test]
    fn cube_rejects_bad_construction() {
        assert!(HsiCube::new(0, 1, 1, vec![]).is_err());
        assert!(HsiCube::new(1, 2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn validate_flags_range_and_nan() {
        let c = HsiCube::new(1, 1, 2, vec![0.5, 1.5]).unwrap();
        assert!(c.validate(false).is_ok());
        assert!(c.validate(true).is_err());
        let n = HsiCube::new(1, 1, 1, vec![f64::NAN]).unwrap();
        assert!(matches!(n.validate(false), Err(Error::NonFinite(_))));
    }

    #[test]
    fn hadamard_examples() {
        let a = BandMatrix::from_rows(&[vec![2.0, 3.0]]).unwrap();
        let b = BandMatrix::from_rows(&[vec![4.0, 5.0]]).unwrap();
        assert_eq!(hadamard(&a, &b).unwrap().data(), &[8.0, 15.0]);
        assert_eq!(hadamard(&a, &BandMatrix::ones(1, 2)).unwrap(), a);
        assert_eq!(
            hadamard(&a, &BandMatrix::zeros(1, 2)).unwrap(),
            BandMatrix::zeros(1, 2)
        );
        assert!(hadamard(&a, &BandMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn matmul_and_transpose() {
        let a = BandMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = BandMatrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[17.0, 39.0]);
        assert_eq!(a.transpose().data(), &[1.0, 3.0, 2.0, 4.0]);
        assert!(b.matmul(&b).is_err());
    }

    fn dyadic() -> impl Strategy<Value = f64> {
        (-64i32..64).prop_map(|k| k as f64 / 8.0)
    }

    proptest! {
        #[test]
        fn fold_unfold_round_trip_is_bitwise(
            c in 1usize..4, w in 1usize..5, h in 1usize..5, seed in any::<u64>()
        ) {
            let dims = CubeDims::new(c, w, h);
            let mut state = seed;
            let cube = HsiCube::from_fn(dims, |_, _, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            }).unwrap();
            let m = mode1_unfold(&cube);
            let back = mode1_fold(&m, dims).unwrap();
            prop_assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            cube.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            let mut sorted_in = cube.data().to_vec();
            let mut sorted_out = m.data().to_vec();
            sorted_in.sort_by(f64::total_cmp);
            sorted_out.sort_by(f64::total_cmp);
            prop_assert_eq!(sorted_in, sorted_out);
        }

        #[test]
        fn hadamard_commutes_and_associates_on_dyadics(
            v in prop::collection::vec((dyadic(), dyadic(), dyadic()), 1..12)
        ) {
            let n = v.len();
            let a = BandMatrix::new(1, n, v.iter().map(|t| t.0).collect()).unwrap();
            let b = BandMatrix::new(1, n, v.iter().map(|t| t.1).collect()).unwrap();
            let c = BandMatrix::new(1, n, v.iter().map(|t| t.2).collect()).unwrap();
            prop_assert_eq!(a.hadamard(&b).unwrap(), b.hadamard(&a).unwrap());
            prop_assert_eq!(
                a.hadamard(&b).unwrap().hadamard(&c).unwrap(),
                a.hadamard(&b.hadamard(&c).unwrap()).unwrap()
            );
        }
    }
}
