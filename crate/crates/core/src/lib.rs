//! Steady-state analysis and closed-loop simulation of DC microgrids whose
//! secondary control trades voltage regulation against proportional current
//! sharing through a single factor `theta` in `[0, 1]`.
//!
//! - [`plant`]: line and filter dynamics, admittance matrices and a direct
//!   steady-state solver.
//! - [`topology`]: communication graphs, Laplacians, Kron reduction.
//! - [`analysis`]: closed-form equilibria, deviation ratios, design of
//!   `theta` and the admissible `omega` range.
//! - [`control`]: the distributed controller and its plug-and-play events.
//! - [`sim`]: fixed-step RK4 integration of plant plus controller.
//! - [`scenario`]: the TOML scenario format and three bundled scenarios.
//!
//! Examples, one per capability:
//!
//! ```text
//! cargo run --release --example case1_compromise      # uniform control, theta sweep
//! cargo run --release --example case2_critical_nodes  # critical buses, omega boundary
//! cargo run --release --example case3_plug_and_play   # DG removal and return
//! cargo run --release --example custom_network        # model built in code, CSV trace
//! cargo run --example design_sweep                    # trade-off curve, theta vs gamma
//! cargo run --example kron_observer                   # relay buses and the reduced graph
//! cargo run --example conflict_check                  # when both objectives coexist
//! ```

// `!(x > 0.0)` is used on purpose: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod error;
pub mod model;
pub mod linalg;
pub mod plant;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
