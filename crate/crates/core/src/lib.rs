//! Toolkit for multi-task expression inference on circumplex affect data:
//! joint discrete-expression classification and continuous valence/arousal
//! regression, trained end-to-end on synthetic data through a built-in
//! reverse-mode differentiation engine.
//!
//! Modules follow the pipeline: [`affect`] declares label spaces and value
//! transforms, [`data`] loads manifests / generates synthetic datasets /
//! augments images, [`autodiff`] + [`optim`] provide gradients and the
//! optimizer, [`losses`] the training objectives, [`model`] the two-head
//! network, [`metrics`] + [`analysis`] the evaluation and dataset reports,
//! and [`train`] ties everything into runnable training, evaluation, and
//! cross-dataset validation.

pub mod affect;
pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
