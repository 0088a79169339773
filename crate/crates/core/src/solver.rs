//! Block proximal gradient descent for the exposure-aware fusion objective
//!
//! ```text
//! min_{L₁,L₂,Z}  ½‖X − (Z∘L₁)H‖²  +  ½‖Y − P(Z∘L₂)‖²  +  β₁Φ₁(L₁) + β₂Φ₂(L₂) + β₃Φ₃(Z)
//! ```
//!
//! One outer iteration updates `L₁` then `L₂` (both against the current `Z`)
//! and finally `Z` against the fresh exposure fields. Every block update is
//! `prox_{βᵢsᵢΦᵢ}(V + sᵢ·Gᵢ)` where `Gᵢ` is the negative gradient of the data
//! terms, so `+` is a descent step.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::degradation::{SpatialOperator, SpectralResponse};
use crate::error::{Error, Result};
use crate::prox::{prox_apply, regularizer_value, ProxSpec, INFEASIBLE};
use crate::tensor::BandMatrix;

/// Multiplicative per-band, per-pixel exposure (`C × N`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureField(BandMatrix);

impl ExposureField {
    pub fn new(values: BandMatrix) -> Self {
        Self(values)
    }

    pub fn ones(bands: usize, pixels: usize) -> Self {
        Self(BandMatrix::ones(bands, pixels))
    }

    pub fn as_matrix(&self) -> &BandMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> BandMatrix {
        self.0
    }
}

impl From<BandMatrix> for ExposureField {
    fn from(m: BandMatrix) -> Self {
        Self(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    L1,
    L2,
    Z,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::L1 => "L1",
            Block::L2 => "L2",
            Block::Z => "Z",
        })
    }
}

/// One value per block, in update order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerBlock<T> {
    pub l1: T,
    pub l2: T,
    pub z: T,
}

impl<T: Copy> PerBlock<T> {
    pub fn uniform(v: T) -> Self {
        Self { l1: v, l2: v, z: v }
    }

    pub fn get(&self, block: Block) -> T {
        match block {
            Block::L1 => self.l1,
            Block::L2 => self.l2,
            Block::Z => self.z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearch {
    pub enabled: bool,
    /// Step multiplier applied after a rejected trial.
    pub backtrack: f64,
    pub max_trials: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            enabled: false,
            backtrack: 0.5,
            max_trials: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub steps: PerBlock<f64>,
    pub reg_weights: PerBlock<f64>,
    pub prox: PerBlock<ProxSpec>,
    pub outer_iters: usize,
    /// Relative objective change below which the solver stops; 0 disables.
    pub tol: f64,
    pub line_search: LineSearch,
}

pub const DEFAULT_REG_WEIGHTS: PerBlock<f64> = PerBlock {
    l1: 0.001,
    l2: 0.001,
    z: 0.005,
};
pub const DEFAULT_OUTER_ITERS: usize = 3;

impl Default for SolverConfig {
    fn default() -> Self {
        let exposure_box = ProxSpec::Box { lo: 0.01, hi: 10.0 };
        Self {
            steps: DEFAULT_REG_WEIGHTS,
            reg_weights: DEFAULT_REG_WEIGHTS,
            prox: PerBlock {
                l1: exposure_box,
                l2: exposure_box,
                z: ProxSpec::TotalVariation2D {
                    tau: 1.0,
                    inner_iters: crate::prox::DEFAULT_TV_ITERS,
                },
            },
            outer_iters: DEFAULT_OUTER_ITERS,
            tol: 0.0,
            line_search: LineSearch::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for block in [Block::L1, Block::L2, Block::Z] {
            let s = self.steps.get(block);
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "step for {block} must be finite and >= 0, got {s}"
                )));
            }
            let b = self.reg_weights.get(block);
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "regularization weight for {block} must be >= 0, got {b}"
                )));
            }
            self.prox.get(block).validate()?;
        }
        if self.outer_iters == 0 {
            return Err(Error::InvalidParameter("outer_iters must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be >= 0, got {}", self.tol)));
        }
        let ls = &self.line_search;
        if ls.enabled && !(ls.backtrack > 0.0 && ls.backtrack < 1.0 && ls.max_trials >= 1) {
            return Err(Error::InvalidParameter(
                "line search needs 0 < backtrack < 1 and max_trials >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub l1: ExposureField,
    pub l2: ExposureField,
    pub z: BandMatrix,
    pub t: usize,
    pub objective_history: Vec<f64>,
}

impl SolverState {
    pub fn new(l1: ExposureField, l2: ExposureField, z: BandMatrix) -> Self {
        Self {
            l1,
            l2,
            z,
            t: 0,
            objective_history: Vec::new(),
        }
    }
}

/// Record of one accepted (or abandoned) block update, passed to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockUpdate {
    pub block: Block,
    pub iteration: usize,
    /// Step actually used; the initial step when line search is off.
    pub step: f64,
    pub trials: usize,
    /// False when every line-search trial increased the block objective.
    pub accepted: bool,
}

/// Observations `X` (`C × N_HSI`) and `Y` (`C_MSI × N`) with their operators.
#[derive(Debug, Clone)]
pub struct FusionProblem {
    x: BandMatrix,
    y: BandMatrix,
    op: SpatialOperator,
    p: SpectralResponse,
}

impl FusionProblem {
    pub fn new(x: BandMatrix, y: BandMatrix, op: SpatialOperator, p: SpectralResponse) -> Result<Self> {
        if x.rows() != p.bands() {
            return Err(Error::mismatch("X bands vs P columns", p.bands(), x.rows()));
        }
        if x.cols() != op.out_pixels() {
            return Err(Error::mismatch("X pixels vs H output", op.out_pixels(), x.cols()));
        }
        if y.rows() != p.channels() {
            return Err(Error::mismatch("Y channels vs P rows", p.channels(), y.rows()));
        }
        if y.cols() != op.in_pixels() {
            return Err(Error::mismatch("Y pixels vs H input", op.in_pixels(), y.cols()));
        }
        Ok(Self { x, y, op, p })
    }

    pub fn x(&self) -> &BandMatrix {
        &self.x
    }

    pub fn y(&self) -> &BandMatrix {
        &self.y
    }

    pub fn operator(&self) -> &SpatialOperator {
        &self.op
    }

    pub fn response(&self) -> &SpectralResponse {
        &self.p
    }

    pub fn bands(&self) -> usize {
        self.p.bands()
    }

    pub fn pixels(&self) -> usize {
        self.op.in_pixels()
    }

    fn dims(&self) -> Option<(usize, usize)> {
        Some(self.op.in_dims())
    }

    fn check_var(&self, m: &BandMatrix, what: &'static str) -> Result<()> {
        if m.shape() != (self.bands(), self.pixels()) {
            return Err(Error::mismatch(
                what,
                format!("{}x{}", self.bands(), self.pixels()),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
        Ok(())
    }

    /// `X − (Z∘L₁)H`
    pub fn residual_x(&self, z: &BandMatrix, l1: &BandMatrix) -> Result<BandMatrix> {
        self.check_var(z, "Z")?;
        self.check_var(l1, "L1")?;
        self.x.sub(&self.op.apply_h(&z.hadamard(l1)?)?)
    }

    /// `Y − P(Z∘L₂)`
    pub fn residual_y(&self, z: &BandMatrix, l2: &BandMatrix) -> Result<BandMatrix> {
        self.check_var(z, "Z")?;
        self.check_var(l2, "L2")?;
        self.y.sub(&self.p.apply_p(&z.hadamard(l2)?)?)
    }

    /// The two data-fit terms `(½‖X − (Z∘L₁)H‖², ½‖Y − P(Z∘L₂)‖²)`.
    pub fn data_terms(&self, z: &BandMatrix, l1: &ExposureField, l2: &ExposureField) -> Result<(f64, f64)> {
        Ok((
            0.5 * self.residual_x(z, l1.as_matrix())?.sum_squares(),
            0.5 * self.residual_y(z, l2.as_matrix())?.sum_squares(),
        ))
    }

    fn weighted_reg(&self, cfg: &SolverConfig, block: Block, v: &BandMatrix) -> Result<f64> {
        let beta = cfg.reg_weights.get(block);
        let phi = regularizer_value(&cfg.prox.get(block), v, self.dims())?;
        Ok(if phi == INFEASIBLE {
            INFEASIBLE
        } else if beta == 0.0 {
            0.0
        } else {
            beta * phi
        })
    }

    /// Full objective; [`INFEASIBLE`] when any box constraint is violated.
    pub fn objective(
        &self,
        z: &BandMatrix,
        l1: &ExposureField,
        l2: &ExposureField,
        cfg: &SolverConfig,
    ) -> Result<f64> {
        let (fx, fy) = self.data_terms(z, l1, l2)?;
        let regs = [
            self.weighted_reg(cfg, Block::L1, l1.as_matrix())?,
            self.weighted_reg(cfg, Block::L2, l2.as_matrix())?,
            self.weighted_reg(cfg, Block::Z, z)?,
        ];
        if regs.contains(&INFEASIBLE) {
            return Ok(INFEASIBLE);
        }
        Ok(fx + fy + regs.iter().sum::<f64>())
    }

    /// `Z ∘ ((X − (Z∘L₁)H)Hᵀ)`, the negative gradient of the first data term in `L₁`.
    pub fn grad_l1(&self, z: &BandMatrix, l1: &ExposureField) -> Result<BandMatrix> {
        let r = self.residual_x(z, l1.as_matrix())?;
        z.hadamard(&self.op.apply_ht(&r)?)
    }

    /// `Z ∘ (Pᵀ(Y − P(Z∘L₂)))`, the negative gradient of the second data term in `L₂`.
    pub fn grad_l2(&self, z: &BandMatrix, l2: &ExposureField) -> Result<BandMatrix> {
        let r = self.residual_y(z, l2.as_matrix())?;
        z.hadamard(&self.p.apply_pt(&r)?)
    }

    /// `((X − (Z∘L₁)H)Hᵀ) ∘ L₁ + (Pᵀ(Y − P(Z∘L₂))) ∘ L₂`, the negative gradient of
    /// both data terms in `Z`.
    pub fn grad_z(&self, z: &BandMatrix, l1: &ExposureField, l2: &ExposureField) -> Result<BandMatrix> {
        let rx = self.residual_x(z, l1.as_matrix())?;
        let ry = self.residual_y(z, l2.as_matrix())?;
        let gx = self.op.apply_ht(&rx)?.hadamard(l1.as_matrix())?;
        let gy = self.p.apply_pt(&ry)?.hadamard(l2.as_matrix())?;
        gx.add(&gy)
    }

    fn block_objective(
        &self,
        block: Block,
        cfg: &SolverConfig,
        z: &BandMatrix,
        l1: &BandMatrix,
        l2: &BandMatrix,
    ) -> Result<f64> {
        let (data, var) = match block {
            Block::L1 => (0.5 * self.residual_x(z, l1)?.sum_squares(), l1),
            Block::L2 => (0.5 * self.residual_y(z, l2)?.sum_squares(), l2),
            Block::Z => (
                0.5 * self.residual_x(z, l1)?.sum_squares() + 0.5 * self.residual_y(z, l2)?.sum_squares(),
                z,
            ),
        };
        let reg = self.weighted_reg(cfg, block, var)?;
        Ok(if reg == INFEASIBLE { INFEASIBLE } else { data + reg })
    }

    fn step_block(
        &self,
        block: Block,
        cfg: &SolverConfig,
        current: &BandMatrix,
        grad: &BandMatrix,
        iteration: usize,
        block_obj: impl Fn(&BandMatrix) -> Result<f64>,
    ) -> Result<(BandMatrix, BlockUpdate)> {
        let spec = cfg.prox.get(block);
        let beta = cfg.reg_weights.get(block);
        let mut step = cfg.steps.get(block);
        let propose = |s: f64| -> Result<BandMatrix> {
            let moved = current.axpy(s, grad)?;
            prox_apply(&spec.scaled(beta * s), &moved, self.dims())
        };
        let diverged = || Error::Diverged { block, iteration };

        if !cfg.line_search.enabled {
            let next = propose(step)?;
            if !next.is_finite() {
                return Err(diverged());
            }
            let info = BlockUpdate {
                block,
                iteration,
                step,
                trials: 1,
                accepted: true,
            };
            return Ok((next, info));
        }

        let f0 = block_obj(current)?;
        if !f0.is_finite() {
            return Err(diverged());
        }
        for trial in 1..=cfg.line_search.max_trials {
            let cand = propose(step)?;
            if cand.is_finite() {
                let f = block_obj(&cand)?;
                if f <= f0 {
                    let info = BlockUpdate {
                        block,
                        iteration,
                        step,
                        trials: trial,
                        accepted: true,
                    };
                    return Ok((cand, info));
                }
            }
            step *= cfg.line_search.backtrack;
        }
        let info = BlockUpdate {
            block,
            iteration,
            step,
            trials: cfg.line_search.max_trials,
            accepted: false,
        };
        Ok((current.clone(), info))
    }

    /// One outer iteration in the order `L₁`, `L₂`, `Z`.
    pub fn pgd_iterate(&self, state: &SolverState, cfg: &SolverConfig) -> Result<SolverState> {
        self.pgd_iterate_observed(state, cfg, &mut |_| {})
    }

    /// As [`pgd_iterate`](Self::pgd_iterate), reporting each block update to `observer`.
    pub fn pgd_iterate_observed(
        &self,
        state: &SolverState,
        cfg: &SolverConfig,
        observer: &mut dyn FnMut(&BlockUpdate),
    ) -> Result<SolverState> {
        let it = state.t + 1;
        let z = &state.z;
        let l2_old = state.l2.as_matrix();

        let g1 = self.grad_l1(z, &state.l1)?;
        let (l1, info) = self.step_block(Block::L1, cfg, state.l1.as_matrix(), &g1, it, |c| {
            self.block_objective(Block::L1, cfg, z, c, l2_old)
        })?;
        observer(&info);

        let g2 = self.grad_l2(z, &state.l2)?;
        let (l2, info) = self.step_block(Block::L2, cfg, l2_old, &g2, it, |c| {
            self.block_objective(Block::L2, cfg, z, &l1, c)
        })?;
        observer(&info);

        let l1 = ExposureField::new(l1);
        let l2 = ExposureField::new(l2);
        let gz = self.grad_z(z, &l1, &l2)?;
        let (z_next, info) = self.step_block(Block::Z, cfg, z, &gz, it, |c| {
            self.block_objective(Block::Z, cfg, c, l1.as_matrix(), l2.as_matrix())
        })?;
        observer(&info);

        Ok(SolverState {
            l1,
            l2,
            z: z_next,
            t: it,
            objective_history: state.objective_history.clone(),
        })
    }

    fn blame(&self, state: &SolverState) -> Block {
        if !state.l1.as_matrix().is_finite() {
            return Block::L1;
        }
        if !state.l2.as_matrix().is_finite() {
            return Block::L2;
        }
        if !state.z.is_finite() {
            return Block::Z;
        }
        match self.data_terms(&state.z, &state.l1, &state.l2) {
            Ok((fx, _)) if !fx.is_finite() => Block::L1,
            Ok((_, fy)) if !fy.is_finite() => Block::L2,
            _ => Block::Z,
        }
    }

    /// Runs up to `cfg.outer_iters` outer iterations from `init`.
    pub fn solve(&self, cfg: &SolverConfig, init: SolverState) -> Result<SolverState> {
        self.solve_observed(cfg, init, &mut |_| {})
    }

    pub fn solve_observed(
        &self,
        cfg: &SolverConfig,
        init: SolverState,
        observer: &mut dyn FnMut(&BlockUpdate),
    ) -> Result<SolverState> {
        cfg.validate()?;
        self.check_var(&init.z, "Z")?;
        self.check_var(init.l1.as_matrix(), "L1")?;
        self.check_var(init.l2.as_matrix(), "L2")?;

        let mut state = init;
        state.t = 0;
        let f0 = self.objective(&state.z, &state.l1, &state.l2, cfg)?;
        if !f0.is_finite() {
            return Err(Error::InfeasibleStart);
        }
        state.objective_history = vec![f0];

        while state.t < cfg.outer_iters {
            let mut next = self.pgd_iterate_observed(&state, cfg, observer)?;
            let f = self.objective(&next.z, &next.l1, &next.l2, cfg)?;
            if !f.is_finite() {
                return Err(Error::Diverged {
                    block: self.blame(&next),
                    iteration: next.t,
                });
            }
            let prev = *next.objective_history.last().expect("history is seeded");
            next.objective_history.push(f);
            state = next;
            if cfg.tol > 0.0 && (prev - f).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::{make_blur_kernel, Boundary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_problem(rng: &mut ChaCha8Rng) -> (FusionProblem, BandMatrix, ExposureField, ExposureField) {
        let c = 4;
        let k = make_blur_kernel(3, 1.0).unwrap();
        let op = SpatialOperator::new(k, 2, (4, 4), Boundary::Symmetric).unwrap();
        let raw = BandMatrix::from_fn(2, c, |_, _| rng.gen_range(0.1..1.0));
        let p = SpectralResponse::from_matrix(raw).unwrap();
        let x = BandMatrix::from_fn(c, 4, |_, _| rng.gen_range(0.0..1.0));
        let y = BandMatrix::from_fn(2, 16, |_, _| rng.gen_range(0.0..1.0));
        let z = BandMatrix::from_fn(c, 16, |_, _| rng.gen_range(0.1..1.0));
        let l1 = ExposureField::new(BandMatrix::from_fn(c, 16, |_, _| rng.gen_range(0.3..1.5)));
        let l2 = ExposureField::new(BandMatrix::from_fn(c, 16, |_, _| rng.gen_range(0.3..1.5)));
        (FusionProblem::new(x, y, op, p).unwrap(), z, l1, l2)
    }

    fn consistent_problem(rng: &mut ChaCha8Rng) -> (FusionProblem, BandMatrix, ExposureField, ExposureField) {
        let (prob, z, l1, l2) = tiny_problem(rng);
        let x = prob.op.apply_h(&z.hadamard(l1.as_matrix()).unwrap()).unwrap();
        let y = prob.p.apply_p(&z.hadamard(l2.as_matrix()).unwrap()).unwrap();
        let prob = FusionProblem::new(x, y, prob.op, prob.p).unwrap();
        (prob, z, l1, l2)
    }

    fn identity_cfg() -> SolverConfig {
        SolverConfig {
            prox: PerBlock::uniform(ProxSpec::Identity),
            ..SolverConfig::default()
        }
    }

    #[test]
    fn default_config_values() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.reg_weights, PerBlock { l1: 0.001, l2: 0.001, z: 0.005 });
        assert_eq!(cfg.steps, cfg.reg_weights);
        assert_eq!(cfg.outer_iters, 3);
        assert_eq!(cfg.tol, 0.0);
        assert!(!cfg.line_search.enabled);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_json_round_trip_and_partial() {
        let cfg = SolverConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        let back: SolverConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let partial: SolverConfig =
            serde_json::from_str(r#"{"outer_iters": 10, "line_search": {"enabled": true}}"#).unwrap();
        assert_eq!(partial.outer_iters, 10);
        assert!(partial.line_search.enabled);
        assert_eq!(partial.line_search.max_trials, 20);
        assert_eq!(partial.steps, DEFAULT_REG_WEIGHTS);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default();
        cfg.outer_iters = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.steps.z = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.line_search = LineSearch {
            enabled: true,
            backtrack: 1.5,
            max_trials: 3,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn problem_rejects_inconsistent_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (prob, ..) = tiny_problem(&mut rng);
        let bad_x = BandMatrix::zeros(4, 5);
        assert!(FusionProblem::new(bad_x, prob.y.clone(), prob.op.clone(), prob.p.clone()).is_err());
        let bad_y = BandMatrix::zeros(3, 16);
        assert!(FusionProblem::new(prob.x.clone(), bad_y, prob.op.clone(), prob.p.clone()).is_err());
        let z = BandMatrix::zeros(4, 15);
        assert!(prob.grad_l1(&z, &ExposureField::ones(4, 15)).is_err());
    }

    #[test]
    fn gradients_vanish_at_consistency_and_zero_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (prob, z, l1, l2) = consistent_problem(&mut rng);
        assert!(prob.grad_l1(&z, &l1).unwrap().max_abs() < 1e-15);
        assert!(prob.grad_l2(&z, &l2).unwrap().max_abs() < 1e-15);
        assert!(prob.grad_z(&z, &l1, &l2).unwrap().max_abs() < 1e-15);

        let zero = BandMatrix::zeros(4, 16);
        assert_eq!(prob.grad_l1(&zero, &l1).unwrap().max_abs(), 0.0);
        assert_eq!(prob.grad_l2(&zero, &l2).unwrap().max_abs(), 0.0);
        let no_exposure = ExposureField::new(BandMatrix::zeros(4, 16));
        assert_eq!(prob.grad_z(&z, &no_exposure, &no_exposure).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn objective_closed_form_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (prob, ..) = tiny_problem(&mut rng);
        let ones = ExposureField::ones(4, 16);
        let f = prob
            .objective(&BandMatrix::zeros(4, 16), &ones, &ones, &identity_cfg())
            .unwrap();
        let expected = 0.5 * prob.x.sum_squares() + 0.5 * prob.y.sum_squares();
        assert!((f - expected).abs() < 1e-15);
    }

    #[test]
    fn objective_reports_infeasible_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (prob, z, _, l2) = tiny_problem(&mut rng);
        let cfg = SolverConfig::default();
        let outside = ExposureField::new(BandMatrix::filled(4, 16, 20.0));
        assert_eq!(prob.objective(&z, &outside, &l2, &cfg).unwrap(), INFEASIBLE);
        let err = prob.solve(&cfg, SolverState::new(outside, l2, z)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart));
    }

    #[test]
    fn fixed_point_with_identity_prox() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (prob, z, l1, l2) = consistent_problem(&mut rng);
        let mut cfg = identity_cfg();
        cfg.steps = PerBlock::uniform(0.5);
        let state = SolverState::new(l1.clone(), l2.clone(), z.clone());
        let next = prob.pgd_iterate(&state, &cfg).unwrap();
        assert!(next.z.max_abs_diff(&z).unwrap() < 1e-12);
        assert!(next.l1.as_matrix().max_abs_diff(l1.as_matrix()).unwrap() < 1e-12);
        assert!(next.l2.as_matrix().max_abs_diff(l2.as_matrix()).unwrap() < 1e-12);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn zero_steps_leave_state_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (prob, z, l1, l2) = tiny_problem(&mut rng);
        let mut cfg = identity_cfg();
        cfg.steps = PerBlock::uniform(0.0);
        let state = SolverState::new(l1.clone(), l2.clone(), z.clone());
        let next = prob.pgd_iterate(&state, &cfg).unwrap();
        assert_eq!(next.z, z);
        assert_eq!(next.l1, l1);
        assert_eq!(next.l2, l2);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn blocks_update_in_order_and_z_sees_fresh_exposures() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (prob, z, l1, l2) = tiny_problem(&mut rng);
        let mut cfg = identity_cfg();
        cfg.steps = PerBlock { l1: 0.3, l2: 0.4, z: 0.2 };
        let state = SolverState::new(l1.clone(), l2.clone(), z.clone());
        let mut order = Vec::new();
        let next = prob
            .pgd_iterate_observed(&state, &cfg, &mut |u| order.push(u.block))
            .unwrap();
        assert_eq!(order, vec![Block::L1, Block::L2, Block::Z]);

        let l1_new = l1.as_matrix().axpy(0.3, &prob.grad_l1(&z, &l1).unwrap()).unwrap();
        let l2_new = l2.as_matrix().axpy(0.4, &prob.grad_l2(&z, &l2).unwrap()).unwrap();
        let (f1, f2) = (ExposureField::new(l1_new.clone()), ExposureField::new(l2_new.clone()));
        let z_new = z.axpy(0.2, &prob.grad_z(&z, &f1, &f2).unwrap()).unwrap();
        assert_eq!(next.l1.as_matrix(), &l1_new);
        assert_eq!(next.l2.as_matrix(), &l2_new);
        assert_eq!(next.z, z_new);
        // using the stale exposures would give a different Z
        let z_stale = z.axpy(0.2, &prob.grad_z(&z, &l1, &l2).unwrap()).unwrap();
        assert!(z_stale.max_abs_diff(&z_new).unwrap() > 1e-6);
    }

    #[test]
    fn line_search_gives_monotone_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (prob, z, l1, l2) = tiny_problem(&mut rng);
        let mut cfg = SolverConfig::default();
        cfg.steps = PerBlock::uniform(5.0);
        cfg.outer_iters = 25;
        cfg.line_search.enabled = true;
        let out = prob.solve(&cfg, SolverState::new(l1, l2, z)).unwrap();
        assert_eq!(out.objective_history.len(), 26);
        for w in out.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(out.objective_history.last().unwrap() < &out.objective_history[0]);
    }

    #[test]
    fn default_runs_exactly_three_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (prob, z, l1, l2) = tiny_problem(&mut rng);
        let cfg = SolverConfig::default();
        let mut count = 0;
        let out = prob
            .solve_observed(&cfg, SolverState::new(l1, l2, z), &mut |u| {
                if u.block == Block::Z {
                    count += 1
                }
            })
            .unwrap();
        assert_eq!(out.t, 3);
        assert_eq!(count, 3);
        assert_eq!(out.objective_history.len(), 4);
    }

    #[test]
    fn tolerance_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (prob, z, l1, l2) = consistent_problem(&mut rng);
        let mut cfg = identity_cfg();
        cfg.outer_iters = 50;
        cfg.tol = 1e-6;
        let out = prob.solve(&cfg, SolverState::new(l1, l2, z)).unwrap();
        assert_eq!(out.t, 1);
    }

    #[test]
    fn huge_steps_without_line_search_diverge() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (prob, z, l1, l2) = tiny_problem(&mut rng);
        let mut cfg = identity_cfg();
        cfg.steps = PerBlock::uniform(1e200);
        cfg.outer_iters = 20;
        let err = prob.solve(&cfg, SolverState::new(l1, l2, z)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
        assert!(err.is_numerical());
    }

    #[test]
    fn zero_data_returns_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (prob, _, l1, l2) = tiny_problem(&mut rng);
        let prob = FusionProblem::new(
            BandMatrix::zeros(4, 4),
            BandMatrix::zeros(2, 16),
            prob.op.clone(),
            prob.p.clone(),
        )
        .unwrap();
        let z = BandMatrix::zeros(4, 16);
        let out = prob
            .solve(&identity_cfg(), SolverState::new(l1.clone(), l2.clone(), z.clone()))
            .unwrap();
        assert_eq!(out.z, z);
        assert_eq!(out.l1, l1);
        assert_eq!(out.t, 3);
    }

    #[test]
    fn scale_coupling_leaves_data_terms_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (prob, z, l1, l2) = tiny_problem(&mut rng);
        let (fx, fy) = prob.data_terms(&z, &l1, &l2).unwrap();
        // power-of-two scale keeps every product exact
        let c = 4.0;
        let zs = z.scale(c);
        let l1s = ExposureField::new(l1.as_matrix().scale(1.0 / c));
        let l2s = ExposureField::new(l2.as_matrix().scale(1.0 / c));
        let (gx, gy) = prob.data_terms(&zs, &l1s, &l2s).unwrap();
        assert_eq!(fx, gx);
        assert_eq!(fy, gy);
    }
}
