//! Spectral- and energy-efficiency tools for MIMO links with low-resolution
//! ADCs: Gaussian-matched quantizers, the Bussgang linear model, a clustered
//! mmWave channel generator, WMMSE-based beamforming and per-antenna bit
//! allocation.

pub mod beamforming;
pub mod bitalloc;
pub mod bussgang;
pub mod channel;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod quantizer;
pub mod seeding;

pub use error::{Error, Result};
