//! Spectral unmixing toolkit.
//!
//! Decomposes hyperspectral scenes `X` (bands x pixels) into endmember
//! signatures `A` and abundance fractions `S` with `X ~ A*S`, using
//! multiplicative-update nonnegative matrix factorization in four
//! flavors: plain NMF, L1/2-sparse NMF, graph-regularized NMF, and
//! sparse GNMF (both penalties, with an annealed sparsity weight).
//!
//! The crate also ships the supporting machinery needed to benchmark
//! these solvers end to end: a synthetic block-scene generator with
//! SNR-calibrated noise ([`synthgen`]), VCA-style initialization plus
//! fully constrained least squares ([`init`]), spectral/abundance angle
//! metrics with optimal endmember alignment ([`metrics`]), and loaders
//! for spectral libraries and raw hyperspectral cubes ([`io`]).

pub mod error;
pub mod graph;
pub mod init;
pub mod io;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod synthgen;

pub use error::{Result, UnmixError};
pub use graph::{build_knn_graph, graph_quadratic, AffinityGraph, SigmaPolicy};
pub use init::{init_fcls, init_random, init_vca, initialize, InitMethod, InitSpec};
pub use metrics::{aad, match_endmembers, sad, score, score_endmembers, EvaluationReport};
pub use model::{
    residual_fro, synthesize_lmm, validate_abundances, AbundanceMatrix, ConstraintReport,
    EndmemberMatrix, NoiseMatrix, ObservationMatrix,
};
pub use solver::{
    augment_asc, lambda_schedule, objective, run_unmix, update_abundances, update_endmembers,
    SolverConfig, StopReason, TraceRecord, UnmixResult, Variant,
};
pub use synthgen::{
    add_noise_snr, apply_lowpass, demo_library, generate_block_abundances, generate_scene,
    SceneSpec, SyntheticScene,
};
