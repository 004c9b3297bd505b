//! Beam-splitter-tree photon-number-resolving detector: analytic model,
//! Monte Carlo pulse simulator, POVM tomography and validation metrics.
//!
//! The detector is four click/no-click SPADs behind a tree of three 50:50
//! splitters. Its POVM is diagonal in the photon-number basis, so it is fully
//! described by the matrix `Xi[n][m]` of probabilities to report `n` clicks
//! when `m` photons arrive.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod detector;
pub mod error;
pub mod io;
pub mod probes;
pub mod reconstruction;
pub mod simulator;

mod numeric;

pub use analysis::{fidelity, q_function, q_grid, FidelityReport, Mesh, QGrid};
pub use detector::{Branch, ClickPattern, DetectorParams, PovmMatrix, BRANCHES, OUTCOMES};
pub use error::{Error, Result};
pub use probes::{
    build_probe_matrix, choose_truncation, poisson_coeff, CoherentProbe, ProbeMatrix,
};
pub use reconstruction::{
    build_objective, predicted_response, reconstruct, solve, QuadraticProgram,
    ReconstructionConfig, ReconstructionResult, Regularizer, Weighting,
};
pub use simulator::{run_experiment, simulate_pulse, GatingPolicy, OutcomeStats, SimulationConfig};
