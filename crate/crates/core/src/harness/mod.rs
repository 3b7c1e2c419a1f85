//! Synthetic data, augmentation, optimization, training, ablation and
//! gradient-check runners, and file formats used by the command line.

pub mod ablate;
pub mod augment;
pub mod config;
pub mod data;
pub mod gradcheck;
pub mod netpbm;
pub mod optim;
pub mod train;
