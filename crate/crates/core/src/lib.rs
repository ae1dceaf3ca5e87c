//! Multi-view semi-supervised node classification on feature data.
//!
//! The pipeline learns one graph per view jointly with a linear projection of
//! that view onto the label space, fuses the per-view graphs with
//! smoothness-derived weights, re-weights labeled nodes by their topological
//! position (personalized PageRank conflict scores), and finally trains a
//! two-layer graph convolutional network on the concatenated projections with
//! a re-weighted cross-entropy, a scheduled pseudo-label term and a Laplacian
//! smoothness term.
//!
//! Module map:
//!
//! * [`dataset`]: loading, normalization, stratified splits, synthetic data.
//! * [`view_graph`]: per-view alternating graph / projection solver.
//! * [`fusion`]: view weights, fused graph, normalized operators.
//! * [`renode`]: personalized PageRank, conflict scores, cosine weights.
//! * [`gcn`]: two-layer GCN forward/backward.
//! * [`objective`]: loss terms, pseudo-label schedules, gradients w.r.t. the output.
//! * [`trainer`]: training loop, baselines, finite-difference gradient check.
//! * [`experiment`]: repeated splits, ablations, parameter sweeps.
//! * [`config`]: flat `key=value` configuration files.

pub mod config;
pub mod dataset;
mod error;
pub mod experiment;
pub mod fusion;
pub mod gcn;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod optim;
pub mod renode;
pub mod trainer;
pub mod view_graph;

pub use error::{Error, Result};

pub use nalgebra::DMatrix;
