//! Granger-causal network inference from multivariate time series.
//!
//! One recurrent predictor is fitted per component series. Each predictor is
//! either a statistical recurrent unit (SRU) or its economy variant (eSRU),
//! trained by proximal gradient descent with a group-lasso penalty on the
//! columns of its input-layer weights. Series `j` is declared Granger-causal
//! for series `i` exactly when column `j` of model `i`'s input weights
//! survives the group soft-thresholding, so the inferred graph carries no
//! tolerance parameter.
//!
//! Module map:
//!
//! * [`numerics`]: activations, group soft-thresholding, seeded sampling.
//! * [`datagen`]: Lorenz-96 and sparse VAR(3) benchmark generators.
//! * [`ingest`]: CSV loaders for external series and ground-truth graphs.
//! * [`model`]: SRU/eSRU parameters, forward recurrence, BPTT gradients.
//! * [`optim`]: penalized loss, proximal step, per-component training.
//! * [`infer`]: all-component fits, adjacency extraction, lambda sweeps.
//! * [`eval`]: confusion counts, ROC curves and AUROC.
//! * [`cli`]: experiment configuration, presets and the batch commands.

pub mod cli;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod infer;
pub mod ingest;
pub mod model;
pub mod numerics;
pub mod optim;

pub use error::{Error, Result};
