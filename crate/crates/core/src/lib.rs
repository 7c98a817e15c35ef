//! Distributed Dykstra projection.
//!
//! A point `x̄` is projected onto the intersection of closed convex sets
//! `C_0 ∩ … ∩ C_{n-1}`, where set `C_i` lives at vertex `i` of a connected
//! graph. Consensus between neighbouring vertices is enforced through edge
//! subspaces, so every update touches only one vertex or one edge and the
//! whole iteration can be simulated as a message-passing scheme.
//!
//! The crate is organised around the dual objective
//!
//! ```text
//! F(z) = Σ_i δ*_{C_i}(z_i) + ½ Σ_i ‖x_i‖²,   x_i = x̄ − z_i − Σ_{e∋i} sign_i(e)·v_e
//! ```
//!
//! which block-coordinate ascent drives monotonically to the primal optimum.
//! `F` also certifies progress: on instances whose known optimum sits at the
//! origin, every vertex satisfies `‖x_i‖ ≤ √(2F)`.
//!
//! Modules:
//! - [`convex_sets`]: exact projections, support functions, normal-cone residuals
//! - [`topology`]: graphs, decoupled blocks, update schedules
//! - [`engine`]: the dual block-coordinate solver
//! - [`instances`]: problem descriptions, seeded generators, certificates
//! - [`diagnostics`]: dual value, gap bounds, rate fitting, trace audits
//! - [`oracle`]: an independent centralized solver used for cross-checks
//! - [`cli`]: the `dykstra` command-line front end

pub mod cli;
pub mod convex_sets;
pub mod diagnostics;
pub mod engine;
pub mod instances;
pub mod oracle;
pub mod topology;

pub(crate) mod vecops;

pub use convex_sets::{ConvexSet, ProjectionResult};
pub use diagnostics::{audit, dual_value, fit_rate, gap_bound, RateFit, Trace};
pub use engine::{init_state, run, run_from, DualState, RunOptions, StepReport, StopRule};
pub use instances::{generate, reduce_anchors, Certificate, GenParams, Instance, InstanceKind};
pub use oracle::{centralized_dykstra, certify, OracleResult, OracleSettings};
pub use topology::{make_schedule, validate_schedule, Block, BlockMember, Graph, Schedule, SchedulePolicy};
