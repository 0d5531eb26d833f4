//! Rule-based controller: store PV surplus in the battery, keep the tank
//! topped up and run the heater with a hysteresis band.

use std::sync::Arc;
use std::time::Instant;

use super::{Diagnostics, Policy, PolicyDecision, PolicyError};
use crate::model::{admissible_controls, Control, State, SystemParams, Uncertainty};

pub const DEFAULT_MARGIN: f64 = 1.0;

/// One evaluation of the rules. `heater_on` is the heater state from the
/// previous step; the returned flag is the new one.
#[allow(clippy::too_many_arguments)]
pub fn heuristic_decide(
    t: usize,
    x: &State,
    w_obs: &Uncertainty,
    p: &SystemParams,
    h0: f64,
    margin: f64,
    heater_on: bool,
) -> Result<(PolicyDecision, bool), PolicyError> {
    let start = Instant::now();
    let cbox = admissible_controls(x, p)?;

    let net = w_obs.d_el_net;
    let f_b = if net < 0.0 { (-net).min(cbox.f_b.hi) } else { -net.min(-cbox.f_b.lo) };

    let f_h = if x.h < h0 { p.f_h_max } else { 0.0 };

    let set = p.theta_set[t];
    let on = if x.theta_i < set {
        true
    } else if x.theta_i > set + margin {
        false
    } else {
        heater_on
    };
    let f_t = if on { p.f_t_max } else { 0.0 };

    let control = cbox.clip(&Control::new(f_b, f_t, f_h));
    let decision = PolicyDecision {
        control,
        predicted_cost: 0.0,
        diagnostics: Diagnostics { solve_time: start.elapsed(), lp_rows: 0, lp_cols: 0 },
    };
    Ok((decision, on))
}

#[derive(Debug, Clone)]
pub struct Heuristic {
    params: Arc<SystemParams>,
    h0: f64,
    margin: f64,
    heater_on: bool,
}

impl Heuristic {
    pub fn new(params: Arc<SystemParams>, x0: &State, margin: f64) -> Self {
        Heuristic { params, h0: x0.h, margin, heater_on: false }
    }
}

impl Policy for Heuristic {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn reset(&mut self) {
        self.heater_on = false;
    }

    fn decide(&mut self, t: usize, x: &State, observed: &[Uncertainty]) -> Result<PolicyDecision, PolicyError> {
        let w = observed.get(t).ok_or_else(|| PolicyError::Input(format!("no observation for step {t}")))?;
        let (d, on) = heuristic_decide(t, x, w, &self.params, self.h0, self.margin, self.heater_on)?;
        self.heater_on = on;
        Ok(d)
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}
