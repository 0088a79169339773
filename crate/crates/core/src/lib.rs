//! Exposure-aware fusion of hyperspectral and multispectral images.
//!
//! A low-resolution hyperspectral cube `X` and a high-resolution
//! multispectral image `Y`, each captured under its own unknown exposure, are
//! fused into a high-resolution hyperspectral estimate `Z` together with
//! per-band, per-pixel exposure fields `L₁`, `L₂`, by block proximal gradient
//! descent on
//!
//! ```text
//! ½‖X − (Z∘L₁)H‖² + ½‖Y − P(Z∘L₂)‖² + β₁Φ₁(L₁) + β₂Φ₂(L₂) + β₃Φ₃(Z)
//! ```

pub mod bench;
pub mod cli;
pub mod degradation;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod io;
pub mod metrics;
pub mod prox;
pub mod solver;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
