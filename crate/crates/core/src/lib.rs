//! Numerical laboratory for rotating Ginzburg-Landau vortices: recovery
//! sequences, Green equilibrium measures and their audits on planar domains.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annulus;
pub mod curve;
pub mod elliptic;
pub mod equilibrium;
pub mod error;
pub mod glfield;
pub mod greens;
pub mod grid;
pub mod harness;
pub mod io;
pub mod recovery;
pub mod render;

pub use annulus::{
    energy_decomposition_audit, hole_mode, min_h, optimal_degree, AnnulusContext, ExampleOracle, HoleModeResult, MinH,
};
pub use curve::{build_curve, cumulative_mass, mollify, place_vortices, Curve, CurveKind, CurveMeasure, Placement};
pub use elliptic::{solve_harmonic_two_values, solve_poisson, BoundaryValues, Preconditioner, SolverParams};
pub use equilibrium::{
    assemble_kernel, equilibrium_measure, green_energy, optimal_vorticity, EquilibriumResult, KernelMatrix, QpParams,
};
pub use error::{Error, Result};
pub use glfield::{
    energy, hminus1_distance, hodge_check, minimize_f, pre_jacobian, vorticity, EnergyBreakdown, OmegaChoice,
    RotationSchedule, VorticityMeasure,
};
pub use greens::{GreenProvider, RegularPart};
pub use grid::{
    rasterize_domain, BoundaryPart, ComplexField, Dims, DomainSpec, Grid2D, LatticeMask, LevelSet, NodeStatus,
    PlaquetteField, ScalarField, VectorField,
};
pub use harness::{predict, run_sweep, ExperimentConfig, ExperimentReport, Predictions, SweepRow};
pub use recovery::{
    assemble_trial, assemble_trial_annulus, audit_recovery, build_density, build_phase, build_trial, solve_h, AuditRow,
    TrialState,
};
