//! Synthesis and validation of quantum repeater protocols.
//!
//! The crate answers one question: given hardware parameters, a target
//! distance and a target fidelity, what sequence of entanglement
//! generation, connection (swapping) and pumping (purification) steps
//! delivers an entangled pair of that quality in the least expected time?
//!
//! The pieces fit together like this:
//!
//! - [`states`] — Bell-diagonal pair states, the `(fidelity, shape)`
//!   classification grid used for bookkeeping.
//! - [`noise`] — hardware parameters, the elementary-generation model
//!   `F0(tau_e)`, and the noisy measurement / depolarized-gate models.
//! - [`oracle`] — an exact few-qubit density-matrix simulator; ground
//!   truth for every transfer function.
//! - [`kernels`] — closed-form Bell-diagonal maps for connection,
//!   pumping and teleported gates, with coefficients generated from the
//!   oracle at table-build time.
//! - [`planner`] — inductive dynamic programming over (distance, state
//!   class) that emits optimal protocol trees.
//! - [`baseline`] — the fixed unoptimized BDCZ / CTSL constructions used
//!   as the denominator of improvement factors.
//! - [`simulate`] — seeded Monte Carlo execution of protocol trees.
//! - [`config`] — run configuration (key-value file format) shared by
//!   the CLI and the library entry points.

pub mod baseline;
pub mod channel;
pub mod config;
pub mod kernels;
pub mod noise;
pub mod oracle;
pub mod planner;
pub mod protocol;
pub mod simulate;
pub mod states;

pub use noise::HardwareParams;
pub use planner::{DpTable, PlannerOptions};
pub use protocol::{ProtocolNode, Scheme};
pub use states::{BellDiagonalState, ClassGrid, StateClass};
