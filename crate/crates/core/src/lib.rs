//! Diffusion sampling on analytic Gaussian-mixture targets.
//!
//! * [`gmm`]: smoothed densities, scores and the continuation potential `f_t`.
//! * [`prox`]: the proximal subproblem and its one-step gradient approximation.
//! * [`oracle`]: score oracles (exact, perturbed, synthetic) and parameterization changes.
//! * [`schedule`], [`sampler`]: noise grids and the Euler, Heun and robust samplers.
//! * [`curvature`]: the curvature-change index and worst-case perturbation solvers.
//! * [`harness`]: labeling, paired comparisons, ROC sweeps and critical-step maps.
//! * [`verify`]: the numerical identity suite behind `rods verify`.
//! * [`testbed`]: the perturbed bimodal hallucination testbed.

pub mod curvature;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod prox;
pub mod sampler;
pub mod schedule;
pub mod serde_ext;
pub mod testbed;
pub mod verify;

pub use error::{Error, Result};
pub use gmm::{Component, GaussianMixture, SmoothedEval};
pub use oracle::{
    oracle_from_gmm, GmmOracle, OracleOutput, Parameterization, PerturbationSpec, PerturbedOracle, ScoreOracle,
};
pub use sampler::{Method, SamplerConfig, TrajectoryRecord};
pub use schedule::{make_schedule, ScheduleSpec, TimeSchedule};
