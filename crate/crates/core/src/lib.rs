//! Divide-and-conquer nearest-neighbor classification.
//!
//! [`BigNnModel`] splits the training data into `s = N^gamma` random
//! subsamples, runs a k-NN classifier on each and takes a majority vote.
//! [`DenoisedModel`] relabels small subsamples with bigNN predictions so that
//! later queries need only a handful of 1-NN lookups. The [`harness`] module
//! reproduces the convergence-rate and speedup experiments.

pub mod bignn;
pub mod cv;
pub mod dataset;
pub mod denoise;
pub mod error;
pub mod harness;
pub mod knn;
pub mod kselect;
pub mod metrics;
pub mod model_io;
pub mod partition;
pub mod rng;
pub mod synthgen;

pub use bignn::BigNnModel;
pub use dataset::{Dataset, Label, LabeledPoint};
pub use denoise::{pretrain, pretrain_with, DenoisedModel, SubsampleSource};
pub use error::{Error, Result};
pub use knn::{KnnIndex, Neighbor, NeighborSet, SearchStrategy};
pub use kselect::{alpha_from_holder, divide_oracle_k, select_k, select_k_sim3, KRule};
pub use metrics::{fit_rate, Classifier, RateFit, RateObservation, ValueKind};
pub use model_io::{load_model, save_model, TrainedModel};
pub use partition::{make_partition, subsample_count, PartitionPlan};
pub use rng::{RngStream, StreamId};
pub use synthgen::{Component, GaussianClassModel};
