//! Backstepping boundary control of 2x2 hyperbolic systems on `[0, 1]`.
//!
//! The crate solves the kernel equations of the Volterra transforms by successive
//! approximations along characteristics, builds the boundary feedback, simulates
//! linear and quasilinear closed loops with first-order upwind schemes, and
//! evaluates Lyapunov diagnostics on the resulting traces.

pub mod backstepping;
pub mod characteristics;
pub mod diagnostics;
pub mod error;
pub mod goursat;
pub mod interp;
pub mod model;
pub mod simulator;

pub use error::{Error, Result};

pub use backstepping::{
    assemble_direct_kernel_problem, assemble_inverse_kernel_problem, assemble_q0_kernel_problem,
    build_linear_spec, check_natural_compatibility, control_value, direct_transform, init_extension,
    inverse_transform, ControllerGains, DynamicExtension,
};
pub use characteristics::CharacteristicMaps;
pub use diagnostics::{build_r, check_symmetry_identity, fit_decay_rate, lyapunov_v1, weight_d, LyapunovWeights};
pub use goursat::{picard_solve, residual_check, verify_picard_bound, GoursatProblem, KernelSet, PicardOptions};
pub use model::{
    norm_h1, norm_h2, norm_l2, norm_sup, GridFunction2T, LinearSystemSpec, QuasilinearSystemSpec,
    SimulationTrace, StateField, TriangularGrid,
};
pub use simulator::{simulate_linear, simulate_quasilinear, step_report, target_exact, SchemeConfig};
