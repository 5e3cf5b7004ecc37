//! Cascade-VAE anomaly detection toolkit.
//!
//! A self-contained CPU implementation of reconstruction-based image anomaly
//! detection: a cascade variational autoencoder reconstructs in-distribution
//! images through a primary latent code and a wider detail branch, a binary
//! discriminator learns to tell real images from their reconstructions, and
//! the anomaly score averages the min-max-normalized generator loss with the
//! discriminator's OOD probability. The toolkit covers the full loop: synthetic
//! benchmark generation, two-stage training, calibration, scoring, and
//! ROC/AUROC evaluation with bootstrap uncertainty.
//!
//! ## Examples
//!
//! One runnable example per capability lives in `examples/`:
//!
//! - **`gradient_check`** - finite-difference verification of every layer kernel
//! - **`synth_dataset`** - generate the synthetic ID/OOD benchmark
//! - **`train_pipeline`** - two-stage training plus calibration at toy scale
//! - **`score_and_evaluate`** - anomaly scores, ROC/AUROC, bootstrap report
//! - **`reconstruction_grid`** - dump branch/primary/combined reconstruction panels
//! - **`vanilla_vae`** - the branch-disabled degenerate configuration
//!
//! ```bash
//! cargo run --release -p cvad --example train_pipeline
//! ```
//!
//! The same capabilities are exposed as subcommands of the `cvad` binary
//! (`synth | train | score | eval | recon`); see the README.

pub mod check;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod render;
pub mod rng;
pub mod scoring;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Element, Tensor};
