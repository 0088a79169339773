//! Observation model and the simulation pipeline that manufactures
//! exposure-degraded LR-HSI / HR-MSI pairs from a reference cube.
//!
//! `X = (Z ∘ L₁)·H` is the blurred, decimated hyperspectral observation and
//! `Y = P·(Z ∘ L₂)` the full-resolution multispectral one. Exposure is
//! synthesized with a gain-gamma curve `clip(α·z^γ, 0, 1)`, and the
//! ground-truth exposure fields are recovered as the ratio of the degraded
//! cube to the reference.

mod spatial;
mod spectral;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use spatial::{make_blur_kernel, BlurKernel, Boundary, SpatialOperator};
pub use spectral::{default_spectral_response, SpectralResponse};

use crate::error::{Error, Result};
use crate::solver::ExposureField;
use crate::tensor::{mode1_fold, mode1_unfold, BandMatrix, CubeDims, HsiCube};

pub const DEFAULT_KERNEL_SIZE: usize = 8;
pub const DEFAULT_RATIO: usize = 4;
pub const DEFAULT_EXPOSURE_EPS: f64 = 1e-6;

pub fn default_kernel_sigma() -> f64 {
    3f64.sqrt()
}

/// Gain `alpha` and exponent `gamma` of the exposure curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl GammaParams {
    /// Range used when drawing random training exposures.
    pub const ALPHA_RANGE: (f64, f64) = (0.2, 2.0);
    pub const GAMMA_RANGE: (f64, f64) = (0.5, 3.0);

    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let g = Self { alpha, gamma };
        g.check()?;
        Ok(g)
    }

    pub fn neutral() -> Self {
        Self {
            alpha: 1.0,
            gamma: 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            alpha: rng.gen_range(Self::ALPHA_RANGE.0..=Self::ALPHA_RANGE.1),
            gamma: rng.gen_range(Self::GAMMA_RANGE.0..=Self::GAMMA_RANGE.1),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma parameters must be positive, got alpha = {}, gamma = {}",
                self.alpha, self.gamma
            )));
        }
        Ok(())
    }

    pub fn apply(&self, v: f64) -> f64 {
        (self.alpha * v.max(0.0).powf(self.gamma)).clamp(0.0, 1.0)
    }
}

/// The two benchmark exposure settings (HSI parameters, MSI parameters).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureCase {
    /// Dim, flattened HSI; bright, contrasty MSI.
    Case1,
    /// Dark, contrasty HSI; moderately dim MSI.
    Case2,
}

impl ExposureCase {
    pub fn params(self) -> (GammaParams, GammaParams) {
        match self {
            ExposureCase::Case1 => (
                GammaParams {
                    alpha: 0.5,
                    gamma: 0.7,
                },
                GammaParams {
                    alpha: 1.3,
                    gamma: 1.5,
                },
            ),
            ExposureCase::Case2 => (
                GammaParams {
                    alpha: 0.5,
                    gamma: 2.0,
                },
                GammaParams {
                    alpha: 0.8,
                    gamma: 1.5,
                },
            ),
        }
    }
}

/// `clip(α · in^γ, 0, 1)` elementwise.
pub fn gamma_correct(cube: &HsiCube, g: GammaParams) -> Result<HsiCube> {
    g.check()?;
    Ok(cube.map(|v| g.apply(v)))
}

/// Everything produced by [`simulate_observations`].
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    /// LR-HSI, `C × W/K × H/K`.
    pub x_obs: HsiCube,
    /// HR-MSI, `C_MSI × W × H`.
    pub y_obs: HsiCube,
    pub z_ref: HsiCube,
    pub zx_ref: HsiCube,
    pub zy_ref: HsiCube,
    pub l1_true: ExposureField,
    pub l2_true: ExposureField,
}

fn exposure_ratio(degraded: &HsiCube, reference: &HsiCube, eps: f64) -> ExposureField {
    let z = mode1_unfold(reference);
    let d = mode1_unfold(degraded);
    let ratio = BandMatrix::from_fn(z.rows(), z.cols(), |i, j| {
        let zv = z.get(i, j);
        if zv > eps {
            d.get(i, j) / zv
        } else {
            1.0
        }
    });
    ExposureField::new(ratio)
}

pub fn simulate_observations(
    z: &HsiCube,
    g_hsi: GammaParams,
    g_msi: GammaParams,
    op: &SpatialOperator,
    p: &SpectralResponse,
    eps: f64,
) -> Result<SimulationOutput> {
    let dims = z.dims();
    if (dims.width, dims.height) != op.in_dims() {
        return Err(Error::mismatch(
            "simulate_observations spatial dims",
            format!("{:?}", op.in_dims()),
            format!("{:?}", (dims.width, dims.height)),
        ));
    }
    if dims.bands != p.bands() {
        return Err(Error::mismatch(
            "simulate_observations bands",
            p.bands(),
            dims.bands,
        ));
    }
    let zx = gamma_correct(z, g_hsi)?;
    let zy = gamma_correct(z, g_msi)?;
    let x = op.apply_h(&mode1_unfold(&zx))?;
    let y = p.apply_p(&mode1_unfold(&zy))?;
    let (wo, ho) = op.out_dims();
    Ok(SimulationOutput {
        x_obs: mode1_fold(&x, CubeDims::new(dims.bands, wo, ho))?,
        y_obs: mode1_fold(&y, CubeDims::new(p.channels(), dims.width, dims.height))?,
        l1_true: exposure_ratio(&zx, z, eps),
        l2_true: exposure_ratio(&zy, z, eps),
        z_ref: z.clone(),
        zx_ref: zx,
        zy_ref: zy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cube(seed: u64, dims: CubeDims) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HsiCube::from_fn(dims, |_, _, _| rng.gen_range(0.05..0.95)).unwrap()
    }

    #[test]
    fn gamma_neutral_is_identity() {
        let c = random_cube(1, CubeDims::new(2, 3, 3));
        assert_eq!(gamma_correct(&c, GammaParams::neutral()).unwrap(), c);
    }

    #[test]
    fn gamma_scalar_value() {
        // 0.5 · 0.25^0.7 at 40 significant digits: 0.18946457081379976029…
        let c = HsiCube::new(1, 1, 1, vec![0.25]).unwrap();
        let out = gamma_correct(&c, GammaParams::new(0.5, 0.7).unwrap()).unwrap();
        assert!((out.data()[0] - 0.189_464_570_813_799_76).abs() < 1e-15);
    }

    #[test]
    fn gamma_clips() {
        let c = HsiCube::new(1, 1, 1, vec![0.8]).unwrap();
        let out = gamma_correct(&c, GammaParams::new(2.0, 1.0).unwrap()).unwrap();
        assert_eq!(out.data()[0], 1.0);
    }

    #[test]
    fn gamma_rejects_non_positive() {
        assert!(GammaParams::new(0.0, 1.0).is_err());
        assert!(GammaParams::new(1.0, -2.0).is_err());
        let c = HsiCube::new(1, 1, 1, vec![0.5]).unwrap();
        let bad = GammaParams {
            alpha: -1.0,
            gamma: 1.0,
        };
        assert!(matches!(gamma_correct(&c, bad), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn gamma_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let g = GammaParams::sample(&mut rng);
            assert!((0.2..=2.0).contains(&g.alpha) && (0.5..=3.0).contains(&g.gamma));
            let mut prev = -1.0;
            for i in 0..=100 {
                let v = g.apply(i as f64 / 100.0);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    fn setup(dims: CubeDims) -> (SpatialOperator, SpectralResponse) {
        let k = make_blur_kernel(DEFAULT_KERNEL_SIZE, default_kernel_sigma()).unwrap();
        let op = SpatialOperator::new(k, DEFAULT_RATIO, (dims.width, dims.height), Boundary::Symmetric)
            .unwrap();
        (op, default_spectral_response(dims.bands).unwrap())
    }

    #[test]
    fn neutral_simulation_is_pure_linear_model() {
        let dims = CubeDims::new(6, 8, 12);
        let z = random_cube(2, dims);
        let (op, p) = setup(dims);
        let g = GammaParams::neutral();
        let sim = simulate_observations(&z, g, g, &op, &p, DEFAULT_EXPOSURE_EPS).unwrap();
        let zm = mode1_unfold(&z);
        let x = op.apply_h(&zm).unwrap();
        let y = p.apply_p(&zm).unwrap();
        assert_eq!(mode1_unfold(&sim.x_obs), x);
        assert_eq!(mode1_unfold(&sim.y_obs), y);
        assert_eq!(sim.x_obs.dims(), CubeDims::new(6, 2, 3));
        assert_eq!(sim.y_obs.dims(), CubeDims::new(3, 8, 12));
        assert!(sim.l1_true.as_matrix().data().iter().all(|&v| v == 1.0));
        assert!(sim.l2_true.as_matrix().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn case_one_darkens_the_hsi() {
        let dims = CubeDims::new(6, 8, 8);
        let z = random_cube(3, dims);
        let (op, p) = setup(dims);
        let (gh, gm) = ExposureCase::Case1.params();
        let sim = simulate_observations(&z, gh, gm, &op, &p, DEFAULT_EXPOSURE_EPS).unwrap();
        assert!(sim.zx_ref.mean() < z.mean());
    }

    #[test]
    fn exposure_fields_reproduce_degraded_cubes() {
        let dims = CubeDims::new(5, 8, 8);
        let mut z = random_cube(4, dims).into_data();
        z[3] = 0.0;
        z[7] = 1e-9;
        let z = HsiCube::new(5, 8, 8, z).unwrap();
        let (op, p) = setup(dims);
        let (gh, gm) = ExposureCase::Case2.params();
        let sim = simulate_observations(&z, gh, gm, &op, &p, DEFAULT_EXPOSURE_EPS).unwrap();
        let zm = mode1_unfold(&z);
        let zx = zm.hadamard(sim.l1_true.as_matrix()).unwrap();
        let zy = zm.hadamard(sim.l2_true.as_matrix()).unwrap();
        for (j, &zv) in zm.data().iter().enumerate() {
            if zv > DEFAULT_EXPOSURE_EPS {
                assert!((zx.data()[j] - sim.zx_ref.data()[j]).abs() < 1e-12);
                assert!((zy.data()[j] - sim.zy_ref.data()[j]).abs() < 1e-12);
            }
        }
        assert_eq!(sim.l1_true.as_matrix().data()[3], 1.0);
        assert_eq!(sim.l1_true.as_matrix().data()[7], 1.0);
    }

    #[test]
    fn simulation_rejects_mismatched_inputs() {
        let dims = CubeDims::new(5, 8, 8);
        let z = random_cube(6, dims);
        let (op, _) = setup(dims);
        let p_wrong = default_spectral_response(6).unwrap();
        let g = GammaParams::neutral();
        assert!(simulate_observations(&z, g, g, &op, &p_wrong, 1e-6).is_err());
        let (op_wrong, p) = setup(CubeDims::new(5, 12, 8));
        assert!(simulate_observations(&z, g, g, &op_wrong, &p, 1e-6).is_err());
    }
}
