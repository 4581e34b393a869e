//! Ensemble Bayesian interaction primitives for learning and inferring
//! multimodal human-robot interactions from demonstrations.
//!
//! An interaction is a multichannel time series of observed (human) and
//! controlled (robot) degrees of freedom. Each channel is decomposed over
//! phase-dependent Gaussian basis functions into a time-invariant weight
//! vector; an ensemble filter over the augmented state
//! [phase, phase velocity, weights] then tracks a live interaction from
//! partial observations and decodes the full response, optionally at a
//! phase look-ahead.
//!
//! High-dimensional, sparsely active contact-force channels are reduced
//! three ways before filtering:
//! * max-over-group aggregation of co-located force sensors,
//! * mutual-information selection of informative input force channels, and
//! * orthogonal least squares selection of a non-uniform basis covering
//!   only the informative phase subregion.
//!
//! The `synth` module generates hug-like synthetic datasets with known
//! ground truth, and `eval` cross-validates the four model variants
//! (All, MIFS, Group, Group+OLS) with MAE metrics and Mann-Whitney U
//! significance tests.

pub mod basis;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod filter;
pub mod model;
pub mod modelfile;
pub mod sparsity;
pub mod synth;
pub mod train;

pub use basis::{
    basis_row, decode, fit, ols_select, BasisSpace, ChannelBasis, DecompositionResult,
    LatentModel, OlsSelection,
};
pub use error::{Error, Result, ValidationIssue, ValidationReport};
pub use filter::{
    run_session, EnsembleState, InferenceOutput, ObservationFrame, ProcessNoise, Session,
};
pub use model::{
    phase_of, validate_interaction, ChannelSpec, Interaction, Modality, Phase, Role, SensorLayout,
};
pub use sparsity::{group_reduce, mi_binned, select_inputs, GroupMap, MiEstimate, SelectionReport};
