//! Motion cueing for six-DoF Stewart flight-simulator platforms.
//!
//! The crate builds a linear prediction model that couples the platform
//! kinematics with a human vestibular perception model, and drives it with
//! a switchable model predictive controller: an MPC with terminal
//! constraints is used while it stays feasible, an unconstrained-terminal
//! MPC takes over when it does not, and a supervisor blends the two
//! commands across each handover. A classical washout filter is included as
//! a baseline, together with synthetic scenario generators, tracking metrics
//! and a batch harness.
//!
//! Module map:
//!
//! - [`vestibular`]: canal, otolith and tilt-coordination transfer functions
//!   and their 21-state composition.
//! - [`kinematics`]: Stewart geometry, leg vectors, leg-rate Jacobian and
//!   actuator limit checks.
//! - [`prediction`]: the integrated continuous model, zero-order-hold
//!   discretization and incremental (Δu) augmentation.
//! - [`mpc`]: condensed QP construction for both MPC variants, the dense
//!   active-set QP solver and the Riccati terminal weight.
//! - [`supervisor`]: switching logic, command blending, the closed loop and
//!   the receding-horizon stability check.
//! - [`cwf`]: classical washout filter baseline.
//! - [`metrics`]: NAAD / AAS tracking scores.
//! - [`scenarios`]: deterministic reference trajectories.
//! - [`harness`]: configuration, orchestration and CSV reports.
//!
//! The guide under `book/` walks through each piece; its code listings are
//! compiled as doctests of this crate.

pub mod cwf;
pub mod harness;
pub mod kinematics;
pub mod linalg;
pub mod metrics;
pub mod mpc;
pub mod prediction;
pub mod scenarios;
pub mod state_space;
pub mod supervisor;
pub mod vestibular;

pub use state_space::{StateSpaceError, StateSpaceModel};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/vestibular.md")]
    mod vestibular {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/mpc.md")]
    mod mpc {}
    #[doc = include_str!("../../../book/src/supervisor.md")]
    mod supervisor {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
