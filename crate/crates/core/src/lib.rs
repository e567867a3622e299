//! Dual-stream residual decomposition networks for multimodal fusion.
//!
//! This crate implements the full stack for a two-modality representation
//! learner that splits each modality's latent code into a shared stream and a
//! private stream, aligns the shared streams across modalities, and fuses
//! them through a learned gate:
//!
//! * [`autodiff`]: a reverse-mode tape over dense `f64` matrices with
//!   hand-written vector-Jacobian products and a central-difference checker,
//! * [`encoders`], [`dualstream`], [`model`]: the network itself,
//! * [`losses`]: contrastive, alignment, decorrelation, orthogonality, and
//!   smoothed cross-entropy objectives with their weighted combination,
//! * [`trainer`]: AdamW, warmup plus cosine decay, gradient clipping,
//!   regularizer ramp-in, and early stopping,
//! * [`data`]: a latent-factor synthetic generator, CSV ingestion, splits,
//!   and modality dropout,
//! * [`eval`]: rank-based AUC, accuracy, F1, robustness sweeps, ablations,
//!   and representation diagnostics,
//! * [`checkpoint`], [`config`]: durable artifacts and strict JSON config.
//!
//! Training itself is single threaded per run; seed sweeps, ablation cells
//! and gradient probes fan out through [`parallel`], which falls back to
//! sequential iteration when the `parallel` feature is off.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod dualstream;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod losses;
pub mod model;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
