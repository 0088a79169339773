//! Central finite-difference check of the analytic block gradients on seeded
//! random tiny instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::degradation::{make_blur_kernel, Boundary, SpatialOperator, SpectralResponse};
use crate::error::{Error, Result};
use crate::solver::{ExposureField, FusionProblem};
use crate::tensor::BandMatrix;

pub const FD_STEP: f64 = 1e-6;
pub const GRADCHECK_TOL: f64 = 1e-5;
pub const DEFAULT_INSTANCES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub max_rel_l1: f64,
    pub max_rel_l2: f64,
    pub max_rel_z: f64,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.max_rel_l1.max(self.max_rel_l2).max(self.max_rel_z)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel() < tol
    }

    pub fn ensure(&self, tol: f64) -> Result<()> {
        if self.passes(tol) {
            Ok(())
        } else {
            Err(Error::GradCheckFailed(self.max_rel()))
        }
    }
}

/// Random instance with `C ≤ 4`, `N ≤ 16`, `N_HSI ≤ 4`, `C_MSI ≤ 2`.
pub struct TinyInstance {
    pub problem: FusionProblem,
    pub z: BandMatrix,
    pub l1: ExposureField,
    pub l2: ExposureField,
}

pub fn tiny_instance(rng: &mut ChaCha8Rng) -> Result<TinyInstance> {
    let c = rng.gen_range(2..=4);
    let m = rng.gen_range(1..=2);
    let dims = [(2, 2), (2, 4), (4, 2), (4, 4)][rng.gen_range(0..4)];
    let size = rng.gen_range(1..=3);
    let kernel = make_blur_kernel(size, rng.gen_range(0.5..1.5))?;
    let boundary = [Boundary::Symmetric, Boundary::Periodic, Boundary::Zero][rng.gen_range(0..3)];
    let op = SpatialOperator::new(kernel, 2, dims, boundary)?;
    let p = SpectralResponse::from_matrix(BandMatrix::from_fn(m, c, |_, _| rng.gen_range(0.05..1.0)))?;
    let n = op.in_pixels();
    let x = BandMatrix::from_fn(c, op.out_pixels(), |_, _| rng.gen_range(0.0..1.0));
    let y = BandMatrix::from_fn(m, n, |_, _| rng.gen_range(0.0..1.0));
    let z = BandMatrix::from_fn(c, n, |_, _| rng.gen_range(0.05..1.0));
    let l1 = ExposureField::new(BandMatrix::from_fn(c, n, |_, _| rng.gen_range(0.2..2.0)));
    let l2 = ExposureField::new(BandMatrix::from_fn(c, n, |_, _| rng.gen_range(0.2..2.0)));
    Ok(TinyInstance {
        problem: FusionProblem::new(x, y, op, p)?,
        z,
        l1,
        l2,
    })
}

/// `−∇f(v)` by central differences with step `h`.
fn fd_descent(v: &BandMatrix, h: f64, f: impl Fn(&BandMatrix) -> Result<f64>) -> Result<BandMatrix> {
    let mut probe = v.clone();
    let mut out = BandMatrix::zeros(v.rows(), v.cols());
    for k in 0..v.data().len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let fp = f(&probe)?;
        probe.data_mut()[k] = orig - h;
        let fm = f(&probe)?;
        probe.data_mut()[k] = orig;
        out.data_mut()[k] = -(fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &BandMatrix, b: &BandMatrix) -> Result<f64> {
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(a.sub(b)?.frobenius_norm() / scale)
}

/// Relative errors `(L₁, L₂, Z)` for one instance.
pub fn check_instance(inst: &TinyInstance, h: f64) -> Result<(f64, f64, f64)> {
    let TinyInstance { problem, z, l1, l2 } = inst;
    let data = |z: &BandMatrix, l1: &ExposureField, l2: &ExposureField| -> Result<f64> {
        let (fx, fy) = problem.data_terms(z, l1, l2)?;
        Ok(fx + fy)
    };
    let fd1 = fd_descent(l1.as_matrix(), h, |v| data(z, &ExposureField::new(v.clone()), l2))?;
    let fd2 = fd_descent(l2.as_matrix(), h, |v| data(z, l1, &ExposureField::new(v.clone())))?;
    let fdz = fd_descent(z, h, |v| data(v, l1, l2))?;
    Ok((
        relative_error(&problem.grad_l1(z, l1)?, &fd1)?,
        relative_error(&problem.grad_l2(z, l2)?, &fd2)?,
        relative_error(&problem.grad_z(z, l1, l2)?, &fdz)?,
    ))
}

pub fn run_gradcheck(seed: u64, instances: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        instances,
        max_rel_l1: 0.0,
        max_rel_l2: 0.0,
        max_rel_z: 0.0,
    };
    for _ in 0..instances {
        let inst = tiny_instance(&mut rng)?;
        let (e1, e2, ez) = check_instance(&inst, FD_STEP)?;
        report.max_rel_l1 = report.max_rel_l1.max(e1);
        report.max_rel_l2 = report.max_rel_l2.max(e2);
        report.max_rel_z = report.max_rel_z.max(ez);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let r = run_gradcheck(0, DEFAULT_INSTANCES).unwrap();
        assert!(r.passes(GRADCHECK_TOL), "{r:?}");
        r.ensure(GRADCHECK_TOL).unwrap();
    }

    #[test]
    fn instances_respect_size_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let inst = tiny_instance(&mut rng).unwrap();
            let p = &inst.problem;
            assert!(p.bands() <= 4 && p.pixels() <= 16);
            assert!(p.x().cols() <= 4 && p.y().rows() <= 2);
        }
    }

    #[test]
    fn wrong_sign_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = tiny_instance(&mut rng).unwrap();
        let g = inst.problem.grad_z(&inst.z, &inst.l1, &inst.l2).unwrap();
        let e = relative_error(&g, &g.scale(-1.0)).unwrap();
        assert!((e - 2.0).abs() < 1e-12);
        let failing = GradCheckReport {
            instances: 1,
            max_rel_l1: 0.0,
            max_rel_l2: 2.0,
            max_rel_z: 0.0,
        };
        assert!(matches!(failing.ensure(GRADCHECK_TOL), Err(Error::GradCheckFailed(_))));
    }
}
