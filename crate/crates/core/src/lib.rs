//! Liquid structural state-space kernels.
//!
//! The crate builds HiPPO-LegS systems in diagonal-plus-low-rank form,
//! discretizes them with the bilinear transform, generates S4 convolution
//! kernels through the Cauchy/Woodbury generating-function path, and adds the
//! liquid (input-correlation) kernels in KB and PB modes. Every fast path has a
//! brute-force recurrent counterpart used for verification.

pub mod bench;
pub mod conv;
pub mod error;
pub mod fft;
pub mod kernel;
pub mod linalg;
pub mod liquid;
pub mod model;
pub mod ssm;
pub mod task;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
