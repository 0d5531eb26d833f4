//! Controllers mapping the observed history to a control: a rule-based
//! heuristic, model predictive control and SDDP.

pub mod cuts;
pub mod heuristic;
pub mod mpc;
pub mod sddp;

use std::time::Duration;

use thiserror::Error;

use crate::lp::{LpError, LpStatus};
use crate::model::{admissible_controls, Control, ModelError, State, SystemParams, Uncertainty};

pub use cuts::{evaluate_vf, terminal_cuts, Cut, ValueFunctions};
pub use heuristic::{heuristic_decide, Heuristic};
pub use mpc::{mpc_decide, perfect_foresight, Mpc};
pub use sddp::{sddp_decide, sddp_train, SddpPolicy, StoppingRule, TrainingLog, TrainingRecord};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("LP ended with status {0:?}")]
    Status(LpStatus),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub solve_time: Duration,
    pub lp_rows: usize,
    pub lp_cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision {
    pub control: Control,
    /// Optimal value of the problem solved to take the decision (zero for
    /// rule-based controllers).
    pub predicted_cost: f64,
    pub diagnostics: Diagnostics,
}

/// A nonanticipative controller. `observed` holds `w_0, …, w_t`.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    /// Clears per-scenario memory.
    fn reset(&mut self);

    fn decide(&mut self, t: usize, x: &State, observed: &[Uncertainty]) -> Result<PolicyDecision, PolicyError>;

    fn boxed_clone(&self) -> Box<dyn Policy>;
}

impl Clone for Box<dyn Policy> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Nets the battery split and clips the result to the admissible box.
/// LP optima may carry simultaneous charge and discharge when surplus
/// energy is free to spill.
pub(crate) fn finalize_control(
    x: &State,
    f_plus: f64,
    f_minus: f64,
    f_t: f64,
    f_h: f64,
    p: &SystemParams,
) -> Result<Control, ModelError> {
    let cbox = admissible_controls(x, p)?;
    Ok(cbox.clip(&Control::new(f_plus - f_minus, f_t, f_h)))
}
