//! Semi-supervised regression through deep metric learning.
//!
//! A Siamese multilayer perceptron is trained to estimate target-value
//! differences between pairs of labeled samples, while a ranked-list triplet
//! objective shapes its embedding space using unlabeled samples. The two
//! objectives are optimized alternately, one epoch each, and a new sample is
//! predicted by averaging antisymmetrized difference estimates against every
//! labeled sample.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, CSV loading and the
//! command-line runner live in the companion `dml-s2r` crate.
//!
//! Module map:
//!
//! - [`data`]: datasets, min-max normalization, seeded labeled/unlabeled/test splits.
//! - [`nn`], [`adam`], [`gradcheck`]: the MLP engine, optimizer and finite-difference checker.
//! - [`siamese`]: shared-weight towers, the pair head and embedding distances.
//! - [`psm`]: pair construction and the pairwise difference regression step.
//! - [`dml`]: positive/negative set selection and the ranked list loss step.
//! - [`trainer`]: the alternating loop and the symmetrized predictor.
//! - [`metrics`]: MAE, medians and the k-NN baseline.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod adam;
pub mod data;
pub mod dml;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod psm;
pub mod seed;
pub mod siamese;
pub mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use data::{Dataset, ExperimentSplit, NormParams};
pub use dml::{RllConfig, TripletSets};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use nn::{Activation, Gradients, Mlp, Parameters};
pub use psm::PairBatch;
pub use siamese::{DifferenceModel, SiameseGrads, SiameseModel};
pub use trainer::{TrainConfig, TrainHistory, Trainer};
