//! Spectral response matrix `P` (multispectral channels × hyperspectral bands).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::BandMatrix;

/// Centres of the synthetic blue, green and red bumps on the normalized band axis.
pub const SYNTHETIC_CENTRES: [f64; 3] = [1.0 / 6.0, 0.5, 5.0 / 6.0];
/// Width of each synthetic bump on the normalized band axis.
pub const SYNTHETIC_WIDTH: f64 = 1.0 / 7.0;

/// Nonnegative, row-normalized `C_MSI × C` response matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResponse {
    matrix: BandMatrix,
}

impl SpectralResponse {
    /// Validates and row-normalizes a measured response.
    ///
    /// Square matrices (`C_MSI = C`) are accepted so that `P = I` can be used
    /// as a degenerate sensor; anything with more channels than bands is rejected.
    pub fn from_matrix(matrix: BandMatrix) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::SpectralResponse("empty matrix".into()));
        }
        if rows > cols {
            return Err(Error::SpectralResponse(format!(
                "{rows} channels for {cols} bands; need C_MSI <= C"
            )));
        }
        if let Some(v) = matrix.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::SpectralResponse(format!(
                "entries must be finite and nonnegative, found {v}"
            )));
        }
        let mut matrix = matrix;
        for r in 0..rows {
            let row = matrix.row_mut(r);
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(Error::SpectralResponse(format!("row {r} sums to zero")));
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self { matrix })
    }

    pub fn identity(bands: usize) -> Self {
        Self {
            matrix: BandMatrix::from_fn(bands, bands, |i, j| if i == j { 1.0 } else { 0.0 }),
        }
    }

    /// Reads `C_MSI` rows of `C` comma-separated values (no header).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        Error::SpectralResponse(format!("row {i}: cannot parse {f:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let matrix = BandMatrix::from_rows(&rows)
            .map_err(|_| Error::SpectralResponse("rows have different lengths".into()))?;
        Self::from_matrix(matrix)
    }

    /// Writes one comma-separated row per channel; [`from_csv`](Self::from_csv) reads it back exactly.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path.as_ref())?;
        for r in 0..self.channels() {
            w.write_record(self.matrix.row(r).iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn matrix(&self) -> &BandMatrix {
        &self.matrix
    }

    /// C_MSI
    pub fn channels(&self) -> usize {
        self.matrix.rows()
    }

    /// C
    pub fn bands(&self) -> usize {
        self.matrix.cols()
    }

    /// `P·Z`
    pub fn apply_p(&self, z: &BandMatrix) -> Result<BandMatrix> {
        if z.rows() != self.bands() {
            return Err(Error::mismatch("apply_p rows", self.bands(), z.rows()));
        }
        self.matrix.matmul(z)
    }

    /// `Pᵀ·Y`
    pub fn apply_pt(&self, y: &BandMatrix) -> Result<BandMatrix> {
        if y.rows() != self.channels() {
            return Err(Error::mismatch("apply_pt rows", self.channels(), y.rows()));
        }
        let mut out = BandMatrix::zeros(self.bands(), y.cols());
        for c in 0..self.channels() {
            let y_row = y.row(c);
            for (b, &w) in self.matrix.row(c).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (o, &v) in out.row_mut(b).iter_mut().zip(y_row) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// Synthetic three-channel response standing in for a measured RGB camera curve.
///
/// Row `k` is `exp(−(t_b − μ_k)² / (2ω²))` over the normalized band positions
/// `t_b = b / (C − 1)`, with `μ = (1/6, 1/2, 5/6)` (blue, green, red) and
/// `ω = 1/7`, then normalized to unit row sum.
pub fn default_spectral_response(bands: usize) -> Result<SpectralResponse> {
    if bands < 4 {
        return Err(Error::InvalidParameter(format!(
            "synthetic spectral response needs at least 4 bands, got {bands}"
        )));
    }
    let last = (bands - 1) as f64;
    let matrix = BandMatrix::from_fn(3, bands, |k, b| {
        let d = b as f64 / last - SYNTHETIC_CENTRES[k];
        (-d * d / (2.0 * SYNTHETIC_WIDTH * SYNTHETIC_WIDTH)).exp()
    });
    SpectralResponse::from_matrix(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn argmax(row: &[f64]) -> usize {
        row.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
    }

    #[test]
    fn default_response_31_bands() {
        let p = default_spectral_response(31).unwrap();
        assert_eq!(p.matrix().shape(), (3, 31));
        for r in 0..3 {
            let s: f64 = p.matrix().row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(argmax(p.matrix().row(0)) < 31 / 3);
        assert!(argmax(p.matrix().row(2)) >= 2 * 31 / 3);
    }

    #[test]
    fn default_response_six_bands_matches_closed_form() {
        // bump formula evaluated independently in float64
        let expected = [
            [
                2.8883428272353107e-01,
                5.5512118474224603e-01,
                1.5028293851756475e-01,
                5.7307883689398107e-03,
                3.0782357572642446e-05,
                2.3290145521024070e-08,
            ],
            [
                1.2218674594253133e-03,
                6.1582663414880716e-02,
                4.3719546912569396e-01,
                4.3719546912569396e-01,
                6.1582663414880660e-02,
                1.2218674594253133e-03,
            ],
            [
                2.3290145521024073e-08,
                3.0782357572642561e-05,
                5.7307883689398115e-03,
                1.5028293851756475e-01,
                5.5512118474224614e-01,
                2.8883428272353118e-01,
            ],
        ];
        let p = default_spectral_response(6).unwrap();
        for (r, row) in expected.iter().enumerate() {
            for (c, &e) in row.iter().enumerate() {
                assert!((p.matrix().get(r, c) - e).abs() < 1e-15, "({r},{c})");
            }
        }
    }

    #[test]
    fn too_few_bands() {
        assert!(default_spectral_response(3).is_err());
    }

    #[test]
    fn identity_response_is_identity_map() {
        let p = SpectralResponse::identity(3);
        let z = BandMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.1);
        assert_eq!(p.apply_p(&z).unwrap(), z);
        assert_eq!(p.apply_pt(&z).unwrap(), z);
    }

    #[test]
    fn spectrally_constant_cube_maps_to_constant_channels() {
        let p = default_spectral_response(10).unwrap();
        let z = BandMatrix::filled(10, 7, 0.42);
        let y = p.apply_p(&z).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.42).abs() < 1e-15));
    }

    #[test]
    fn rejects_negative_and_oversized() {
        let neg = BandMatrix::from_rows(&[vec![1.0, -0.1, 0.5]]).unwrap();
        assert!(matches!(
            SpectralResponse::from_matrix(neg),
            Err(Error::SpectralResponse(_))
        ));
        let tall = BandMatrix::ones(4, 3);
        assert!(SpectralResponse::from_matrix(tall).is_err());
        let zero_row = BandMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(SpectralResponse::from_matrix(zero_row).is_err());
    }

    #[test]
    fn dimension_checks() {
        let p = default_spectral_response(5).unwrap();
        assert!(p.apply_p(&BandMatrix::zeros(4, 2)).is_err());
        assert!(p.apply_pt(&BandMatrix::zeros(5, 2)).is_err());
    }

    #[test]
    fn csv_loader_normalizes_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# measured curve").unwrap();
        writeln!(f, "1, 2, 1, 0").unwrap();
        writeln!(f, "0, 0, 1, 3").unwrap();
        let p = SpectralResponse::from_csv(f.path()).unwrap();
        assert_eq!(p.matrix().row(0), &[0.25, 0.5, 0.25, 0.0]);
        assert_eq!(p.matrix().row(1), &[0.0, 0.0, 0.25, 0.75]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = default_spectral_response(31).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        p.to_csv(f.path()).unwrap();
        let back = SpectralResponse::from_csv(f.path()).unwrap();
        // renormalizing an already normalized row may move the last bit
        assert!(back.matrix().max_abs_diff(p.matrix()).unwrap() < 1e-16);
    }

    #[test]
    fn csv_loader_rejects_negatives_and_garbage() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,2,-1").unwrap();
        assert!(SpectralResponse::from_csv(f.path()).is_err());
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "1,abc,1").unwrap();
        assert!(SpectralResponse::from_csv(g.path()).is_err());
    }
}
