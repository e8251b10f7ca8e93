//! Importance-aware feature allocation for semantic image transmission.
//!
//! The crate is a link-level simulator built around one idea: a semantic
//! encoder produces `c` features of unequal importance, the wireless channel
//! offers `c` resource blocks of unequal quality, and matching the two by
//! rank (most important feature on the best block) beats transmitting in a
//! fixed order.
//!
//! Layout:
//!
//! - [`fading`]: sum-of-sinusoids Rayleigh fading, SISO/MIMO CSI sequences, AWGN.
//! - [`mimo`]: MMSE equalization, per-antenna SINR, SVD precoding.
//! - [`predictor`]: CSI prediction (oracle and linear-MMSE).
//! - [`codec`]: desk-scale affine semantic encoder/decoder and its SGD trainer.
//! - [`importance`]: gradient-based feature importance and the distilled evaluator.
//! - [`allocator`]: time-domain and space-time rank-matched allocation.
//! - [`metrics`]: MSE, PSNR, SSIM.
//! - [`harness`]: configuration, datasets, experiment runner and reports.

pub mod allocator;
pub mod codec;
pub mod error;
pub mod fading;
pub mod harness;
pub mod importance;
pub mod metrics;
pub mod mimo;
pub mod predictor;
pub mod seeding;
pub mod stats;

mod binio;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type Complex = num_complex::Complex64;

/// Dense complex matrix (`rows x cols`).
pub type CMatrix = nalgebra::DMatrix<Complex>;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex>;
