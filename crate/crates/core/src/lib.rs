//! Numerical toolkit for degenerate Kolmogorov operators on homogeneous Lie
//! groups: group geometry, Gaussian fundamental solutions, group
//! convolutions with homogeneous kernels, and empirical checks of the
//! associated Sobolev, Morrey and compactness estimates.

pub mod cauchy;
pub mod convolve;
pub mod embedding;
pub mod error;
pub mod exponents;
pub mod fundamental;
pub mod grid;
pub mod group;
pub mod kernel;
pub mod par;
pub mod report;
pub mod scenario;

pub use error::{Error, Result};
pub use cauchy::{
    kinetic_scenario, mc_transition_moments, representation_check, semigroup_check, solve_cauchy, CauchyField, CauchyProblem,
    CauchySolution, GaussianSolution, SdeOracle, SolutionField,
};
pub use convolve::{convolve, convolve_at, convolve_with, young_check, ConvolveOptions, YoungReport};
pub use embedding::{compactness_modulus, increment_split_diagnostic, morrey_ratio, sobolev_ratio};
pub use exponents::{admissible_q_range, sobolev_conjugates, ExponentPlan, QRange};
pub use fundamental::{prototype_gamma, CovarianceMatrix, FundamentalSolution, GammaSlice, KernelArgument};
pub use grid::{Axis, FunctionFamily, GridFunction, GridSpec, ShiftResult};
pub use group::{GeometryConfig, GeometryKind, GroupGeometry, Point};
pub use kernel::{HomogeneousKernel, Kernel, KernelConfig, ShellConstants, WeakLqEstimate};
pub use par::Execution;
pub use report::{emit_report, Check, Format, Table, VerificationReport, SCHEMA_VERSION};
pub use scenario::{run_scenario, Scenario, ScenarioKind};
