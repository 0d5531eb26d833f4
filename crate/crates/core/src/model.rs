//! Physical model of the domestic microgrid: battery, hot-water tank and a
//! two-node (wall / indoor) thermal envelope, discretized with forward Euler.
//!
//! Units: energies in kWh, powers in kW, temperatures in °C, time in hours.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when checking bounds on controls and states.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value in {0}")]
    Domain(&'static str),
    #[error("{component} = {value} violates bounds [{lower}, {upper}]")]
    ConstraintViolation { component: &'static str, value: f64, lower: f64, upper: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameter {field}: {reason}")]
    InvalidParams { field: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub b: f64,
    pub h: f64,
    pub theta_w: f64,
    pub theta_i: f64,
}

impl State {
    pub fn new(b: f64, h: f64, theta_w: f64, theta_i: f64) -> Self {
        State { b, h, theta_w, theta_i }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.b, self.h, self.theta_w, self.theta_i]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        State { b: a[0], h: a[1], theta_w: a[2], theta_i: a[3] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Stocks within their bounds (up to `tol`) and all components finite.
    pub fn within_bounds(&self, p: &SystemParams, tol: f64) -> bool {
        self.is_finite()
            && self.b >= p.b_min - tol
            && self.b <= p.b_max + tol
            && self.h >= -tol
            && self.h <= p.h_max + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    /// Battery exchange, positive when charging.
    pub f_b: f64,
    /// Space heater.
    pub f_t: f64,
    /// Tank heater.
    pub f_h: f64,
}

impl Control {
    pub fn new(f_b: f64, f_t: f64, f_h: f64) -> Self {
        Control { f_b, f_t, f_h }
    }

    pub fn is_finite(&self) -> bool {
        self.f_b.is_finite() && self.f_t.is_finite() && self.f_h.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Uncertainty {
    /// Electrical demand minus PV production; negative under surplus.
    pub d_el_net: f64,
    pub d_hw: f64,
}

impl Uncertainty {
    pub fn new(d_el_net: f64, d_hw: f64) -> Self {
        Uncertainty { d_el_net, d_hw }
    }

    pub fn is_valid(&self) -> bool {
        self.d_el_net.is_finite() && self.d_hw.is_finite() && self.d_hw >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Recourse {
    pub f_ne: f64,
    pub spill: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }
}

/// Per-component bounds on the controls admissible from a given state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    pub f_b: Interval,
    pub f_t: Interval,
    pub f_h: Interval,
}

impl ControlBox {
    pub fn contains(&self, u: &Control, tol: f64) -> bool {
        self.f_b.contains(u.f_b, tol) && self.f_t.contains(u.f_t, tol) && self.f_h.contains(u.f_h, tol)
    }

    pub fn clip(&self, u: &Control) -> Control {
        Control { f_b: self.f_b.clip(u.f_b), f_t: self.f_t.clip(u.f_t), f_h: self.f_h.clip(u.f_h) }
    }

    fn check(&self, u: &Control) -> Result<(), ModelError> {
        for (name, iv, v) in [("f_b", self.f_b, u.f_b), ("f_t", self.f_t, u.f_t), ("f_h", self.f_h, u.f_h)] {
            if !iv.contains(v, BOUND_TOL) {
                return Err(ModelError::ConstraintViolation { component: name, value: v, lower: iv.lo, upper: iv.hi });
            }
        }
        Ok(())
    }
}

/// Resistances in K/W, capacities in J/K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R6C2 {
    pub r_i: f64,
    pub r_s: f64,
    pub r_m: f64,
    pub r_e: f64,
    pub r_v: f64,
    pub r_f: f64,
    pub c_i: f64,
    pub c_m: f64,
    /// Share of the heater power dissipated into the wall.
    pub gamma: f64,
}

impl Default for R6C2 {
    fn default() -> Self {
        R6C2 {
            r_i: 0.0025,
            r_s: 0.0015,
            r_m: 0.03,
            r_e: 0.01,
            r_v: 0.05,
            r_f: 0.066,
            c_i: 3.1e6,
            c_m: 3.96e7,
            gamma: 0.3,
        }
    }
}

/// Converts a tank volume and temperature range into a stored-energy bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankConversion {
    /// Litres.
    pub v_h: f64,
    /// kJ/(kg·K).
    pub c_p: f64,
    /// kg/l.
    pub rho_water: f64,
    pub t_ref: f64,
    pub t_max: f64,
}

impl Default for TankConversion {
    fn default() -> Self {
        TankConversion { v_h: 120.0, c_p: 4.186, rho_water: 1.0, t_ref: 15.0, t_max: 55.0 }
    }
}

impl TankConversion {
    /// Energy (kWh) stored at temperature `t` relative to `t_ref`.
    pub fn energy_at(&self, t: f64) -> f64 {
        self.rho_water * self.v_h * self.c_p * (t - self.t_ref) / 3600.0
    }

    pub fn h_max(&self) -> f64 {
        self.energy_at(self.t_max)
    }
}

/// Thermal rates written as affine functions of (θw, θi, f_t), in K/h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalLinear {
    pub ww: f64,
    pub wi: f64,
    pub wt: f64,
    pub w0: f64,
    pub iw: f64,
    pub ii: f64,
    pub it: f64,
    pub i0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub delta: f64,
    pub horizon_steps: usize,
    pub rho_c: f64,
    pub rho_d: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub f_b_max: f64,
    pub h_max: f64,
    pub f_h_max: f64,
    pub f_t_max: f64,
    pub beta_h: f64,
    pub r6c2: R6C2,
    pub theta_o: Vec<f64>,
    pub p_int: Vec<f64>,
    pub p_ext: Vec<f64>,
    pub pi_e: Vec<f64>,
    pub pi_d: Vec<f64>,
    pub theta_set: Vec<f64>,
    pub kappa: f64,
    /// Price (€/kWh) of hot-water demand the tank cannot serve.
    pub pi_hw_shortfall: f64,
}

/// Hour of day at the start of step `t`.
pub fn hour_of_day(t: usize, delta: f64) -> f64 {
    (t as f64 * delta).rem_euclid(24.0)
}

/// On-peak price between 07:00 and 23:00, off-peak otherwise.
pub fn tariff_series(steps: usize, delta: f64, on_peak: f64, off_peak: f64) -> Vec<f64> {
    (0..=steps)
        .map(|t| {
            let hr = hour_of_day(t, delta);
            if (7.0..23.0).contains(&hr) {
                on_peak
            } else {
                off_peak
            }
        })
        .collect()
}

/// Night setback between 00:00 and 06:00.
pub fn setpoint_series(steps: usize, delta: f64, night: f64, day: f64) -> Vec<f64> {
    (0..=steps).map(|t| if hour_of_day(t, delta) < 6.0 { night } else { day }).collect()
}

impl Default for SystemParams {
    fn default() -> Self {
        let steps = 96;
        let delta = 0.25;
        SystemParams {
            delta,
            horizon_steps: steps,
            rho_c: 0.95,
            rho_d: 0.95,
            b_min: 0.9,
            b_max: 3.0,
            f_b_max: 3.0,
            h_max: TankConversion::default().h_max(),
            f_h_max: 3.0,
            f_t_max: 6.0,
            beta_h: 0.9,
            r6c2: R6C2::default(),
            theta_o: vec![10.0; steps + 1],
            p_int: vec![0.0; steps + 1],
            p_ext: vec![0.0; steps + 1],
            pi_e: tariff_series(steps, delta, 0.18, 0.13),
            pi_d: vec![0.1; steps + 1],
            theta_set: setpoint_series(steps, delta, 16.0, 20.0),
            kappa: 1.0,
            pi_hw_shortfall: 2.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &str, reason: &str| {
            Err(ModelError::InvalidParams { field: field.to_string(), reason: reason.to_string() })
        };
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad("delta", "must be positive");
        }
        if self.horizon_steps == 0 {
            return bad("horizon_steps", "must be at least 1");
        }
        for (name, v) in [("rho_c", self.rho_c), ("rho_d", self.rho_d), ("beta_h", self.beta_h)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(name, "must lie in (0, 1]");
            }
        }
        if !(self.b_min.is_finite() && self.b_max.is_finite() && self.b_min < self.b_max && self.b_min >= 0.0) {
            return bad("b_min/b_max", "need 0 <= b_min < b_max");
        }
        for (name, v) in [
            ("f_b_max", self.f_b_max),
            ("h_max", self.h_max),
            ("f_h_max", self.f_h_max),
            ("f_t_max", self.f_t_max),
            ("kappa", self.kappa),
            ("pi_hw_shortfall", self.pi_hw_shortfall),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name, "must be finite and nonnegative");
            }
        }
        let r = &self.r6c2;
        for (name, v) in [
            ("r6c2.r_i", r.r_i),
            ("r6c2.r_s", r.r_s),
            ("r6c2.r_m", r.r_m),
            ("r6c2.r_e", r.r_e),
            ("r6c2.r_v", r.r_v),
            ("r6c2.r_f", r.r_f),
            ("r6c2.c_i", r.c_i),
            ("r6c2.c_m", r.c_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(name, "must be positive");
            }
        }
        if !(0.0..=1.0).contains(&r.gamma) {
            return bad("r6c2.gamma", "must lie in [0, 1]");
        }
        let n = self.horizon_steps + 1;
        for (name, s) in [
            ("theta_o", &self.theta_o),
            ("p_int", &self.p_int),
            ("p_ext", &self.p_ext),
            ("pi_e", &self.pi_e),
            ("pi_d", &self.pi_d),
            ("theta_set", &self.theta_set),
        ] {
            if s.len() != n {
                return bad(name, &format!("expected {n} values, got {}", s.len()));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return bad(name, "contains non-finite values");
            }
        }
        for (name, s) in [("pi_e", &self.pi_e), ("pi_d", &self.pi_d)] {
            if s.iter().any(|&v| v < 0.0) {
                return bad(name, "prices must be nonnegative");
            }
        }
        Ok(())
    }

    pub fn thermal_linear(&self, t: usize) -> ThermalLinear {
        let r = &self.r6c2;
        let kw = 3600.0 / r.c_m;
        let ki = 3600.0 / r.c_i;
        let rsi = r.r_i + r.r_s;
        let rme = r.r_m + r.r_e;
        let g_out = 1.0 / r.r_v + 1.0 / r.r_f;
        let (to, pint, pext) = (self.theta_o[t], 1000.0 * self.p_int[t], 1000.0 * self.p_ext[t]);
        ThermalLinear {
            ww: -kw * (1.0 / rsi + 1.0 / rme),
            wi: kw / rsi,
            wt: kw * r.gamma * 1000.0,
            w0: kw * (to / rme + r.r_i / rsi * pint + r.r_e / rme * pext),
            iw: ki / rsi,
            ii: -ki * (1.0 / rsi + g_out),
            it: ki * (1.0 - r.gamma) * 1000.0,
            i0: ki * (to * g_out + r.r_s / rsi * pint),
        }
    }
}

pub fn split_flow(f: f64) -> Result<(f64, f64), ModelError> {
    if !f.is_finite() {
        return Err(ModelError::Domain("flow"));
    }
    Ok((f.max(0.0), (-f).max(0.0)))
}

fn battery_rate(f_b: f64, p: &SystemParams) -> f64 {
    let pos = f_b.max(0.0);
    let neg = (-f_b).max(0.0);
    p.rho_c * pos - neg / p.rho_d
}

/// Hot-water demand (kW) the tank cannot cover over the step; it is
/// bought as a penalty instead of driving the tank negative.
pub fn hw_shortfall(x: &State, u: &Control, w: &Uncertainty, p: &SystemParams) -> f64 {
    (w.d_hw - p.beta_h * u.f_h - x.h / p.delta).max(0.0)
}

/// Time derivative of the state (per hour) under constant `u` and `w`.
pub fn continuous_dynamics(t: usize, x: &State, u: &Control, w: &Uncertainty, p: &SystemParams) -> State {
    let r = &p.r6c2;
    let rsi = r.r_i + r.r_s;
    let rme = r.r_m + r.r_e;
    let to = p.theta_o[t];
    let pint = 1000.0 * p.p_int[t];
    let pext = 1000.0 * p.p_ext[t];
    let heat = 1000.0 * u.f_t;
    let wall_w = (x.theta_i - x.theta_w) / rsi
        + (to - x.theta_w) / rme
        + r.gamma * heat
        + r.r_i / rsi * pint
        + r.r_e / rme * pext;
    let indoor_w = (x.theta_w - x.theta_i) / rsi
        + (to - x.theta_i) / r.r_v
        + (to - x.theta_i) / r.r_f
        + (1.0 - r.gamma) * heat
        + r.r_s / rsi * pint;
    State {
        b: battery_rate(u.f_b, p),
        h: p.beta_h * u.f_h - w.d_hw + hw_shortfall(x, u, w, p),
        theta_w: 3600.0 * wall_w / r.c_m,
        theta_i: 3600.0 * indoor_w / r.c_i,
    }
}

/// Forward Euler transition `x + Δ·F(t, x, u, w_next)`.
pub fn step(t: usize, x: &State, u: &Control, w_next: &Uncertainty, p: &SystemParams) -> Result<State, ModelError> {
    if !u.is_finite() {
        return Err(ModelError::Domain("control"));
    }
    if !w_next.is_valid() {
        return Err(ModelError::Domain("uncertainty"));
    }
    admissible_controls(x, p)?.check(u)?;
    let f = continuous_dynamics(t, x, u, w_next, p);
    Ok(State {
        b: x.b + p.delta * f.b,
        h: x.h + p.delta * f.h,
        theta_w: x.theta_w + p.delta * f.theta_w,
        theta_i: x.theta_i + p.delta * f.theta_i,
    })
}

pub fn recourse(u: &Control, w_next: &Uncertainty) -> Recourse {
    let net = u.f_b + u.f_t + u.f_h + w_next.d_el_net;
    Recourse { f_ne: net.max(0.0), spill: (-net).max(0.0) }
}

pub fn admissible_controls(x: &State, p: &SystemParams) -> Result<ControlBox, ModelError> {
    if !x.is_finite() {
        return Err(ModelError::InvalidState("non-finite component".into()));
    }
    if !x.within_bounds(p, BOUND_TOL) {
        return Err(ModelError::InvalidState(format!(
            "b = {} outside [{}, {}] or h = {} outside [0, {}]",
            x.b, p.b_min, p.b_max, x.h, p.h_max
        )));
    }
    let charge = p.f_b_max.min((p.b_max - x.b) / (p.delta * p.rho_c)).max(0.0);
    let discharge = p.f_b_max.min(p.rho_d * (x.b - p.b_min) / p.delta).max(0.0);
    let tank = p.f_h_max.min((p.h_max - x.h) / (p.delta * p.beta_h)).max(0.0);
    Ok(ControlBox {
        f_b: Interval { lo: -discharge, hi: charge },
        f_t: Interval { lo: 0.0, hi: p.f_t_max },
        f_h: Interval { lo: 0.0, hi: tank },
    })
}

pub fn discomfort(t: usize, x: &State, p: &SystemParams) -> f64 {
    (p.theta_set[t] - x.theta_i).max(0.0)
}

pub fn stage_cost(t: usize, x: &State, u: &Control, w_next: &Uncertainty, p: &SystemParams) -> f64 {
    let rc = recourse(u, w_next);
    p.pi_e[t] * p.delta * rc.f_ne
        + p.pi_d[t] * discomfort(t, x, p)
        + p.pi_hw_shortfall * p.delta * hw_shortfall(x, u, w_next, p)
}

/// One-sided penalty on the stocks (battery and tank) ending below their
/// initial level.
pub fn terminal_cost(x_t: &State, x_0: &State, kappa: f64) -> f64 {
    kappa * ((x_0.b - x_t.b).max(0.0) + (x_0.h - x_t.h).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_params() -> SystemParams {
        let mut p = SystemParams::default();
        p.theta_o = vec![18.0; p.horizon_steps + 1];
        p
    }

    #[test]
    fn split_flow_examples() {
        assert_eq!(split_flow(1.0).unwrap(), (1.0, 0.0));
        assert_eq!(split_flow(0.0).unwrap(), (0.0, 0.0));
        assert_eq!(split_flow(-2.5).unwrap(), (0.0, 2.5));
        assert!(split_flow(f64::NAN).is_err());
    }

    #[test]
    fn thermal_equilibrium_has_zero_rates() {
        let p = quiet_params();
        let x = State::new(2.0, 3.0, 18.0, 18.0);
        let f = continuous_dynamics(0, &x, &Control::default(), &Uncertainty::default(), &p);
        assert_eq!(f, State::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(step(0, &x, &Control::default(), &Uncertainty::default(), &p).unwrap(), x);
    }

    #[test]
    fn battery_and_tank_rates() {
        let p = quiet_params();
        let x = State::new(1.5, 2.0, 18.0, 18.0);
        let f = continuous_dynamics(0, &x, &Control::new(1.0, 0.0, 0.0), &Uncertainty::default(), &p);
        assert!((f.b - 0.95).abs() < 1e-15);
        let f = continuous_dynamics(0, &x, &Control::new(0.0, 0.0, 1.0), &Uncertainty::new(0.0, 0.4), &p);
        assert!((f.h - 0.5).abs() < 1e-15);
    }

    #[test]
    fn euler_examples() {
        let p = quiet_params();
        let x = State::new(1.5, 2.0, 18.0, 18.0);
        let x1 = step(0, &x, &Control::new(1.0, 0.0, 0.0), &Uncertainty::default(), &p).unwrap();
        assert!((x1.b - 1.7375).abs() < 1e-15);
        let x2 = step(0, &x, &Control::default(), &Uncertainty::new(0.0, 1.0), &p).unwrap();
        assert!((x2.h - 1.75).abs() < 1e-15);
    }

    #[test]
    fn inadmissible_control_is_reported() {
        let p = quiet_params();
        let x = State::new(p.b_max, 2.0, 18.0, 18.0);
        let err = step(0, &x, &Control::new(0.5, 0.0, 0.0), &Uncertainty::default(), &p).unwrap_err();
        assert!(matches!(err, ModelError::ConstraintViolation { component: "f_b", .. }));
    }

    #[test]
    fn recourse_examples() {
        let r = recourse(&Control::new(1.0, 0.5, 0.0), &Uncertainty::new(0.5, 0.0));
        assert_eq!(r, Recourse { f_ne: 2.0, spill: 0.0 });
        assert_eq!(recourse(&Control::default(), &Uncertainty::default()), Recourse::default());
        let r = recourse(&Control::new(-1.0, 0.0, 0.0), &Uncertainty::new(-0.5, 0.0));
        assert_eq!(r, Recourse { f_ne: 0.0, spill: 1.5 });
    }

    #[test]
    fn admissible_box_examples() {
        let p = quiet_params();
        let full = admissible_controls(&State::new(p.b_max, 1.0, 18.0, 18.0), &p).unwrap();
        assert_eq!(full.f_b.hi, 0.0);
        let empty = admissible_controls(&State::new(p.b_min, 1.0, 18.0, 18.0), &p).unwrap();
        assert_eq!(empty.f_b.lo, 0.0);
        let mid = admissible_controls(&State::new(2.525, 1.0, 18.0, 18.0), &p).unwrap();
        assert!((mid.f_b.hi - 2.0).abs() < 1e-12);
        assert!(admissible_controls(&State::new(p.b_max + 0.1, 1.0, 18.0, 18.0), &p).is_err());
    }

    #[test]
    fn stage_cost_examples() {
        let mut p = quiet_params();
        p.pi_e = vec![0.18; p.horizon_steps + 1];
        p.theta_set = vec![20.0; p.horizon_steps + 1];
        let warm = State::new(2.0, 3.0, 20.0, 21.0);
        assert_eq!(stage_cost(0, &warm, &Control::default(), &Uncertainty::default(), &p), 0.0);
        let c = stage_cost(0, &warm, &Control::default(), &Uncertainty::new(2.0, 0.0), &p);
        assert!((c - 0.09).abs() < 1e-15);
        let cold = State::new(2.0, 3.0, 18.0, 18.0);
        let c = stage_cost(0, &cold, &Control::default(), &Uncertainty::new(-1.0, 0.0), &p);
        assert!((c - 0.2).abs() < 1e-15);
    }

    #[test]
    fn terminal_cost_examples() {
        let x0 = State::new(2.0, 3.0, 19.0, 20.0);
        assert_eq!(terminal_cost(&x0, &x0, 1.0), 0.0);
        let low = State::new(1.5, 2.5, 10.0, 10.0);
        assert!((terminal_cost(&low, &x0, 1.0) - 1.0).abs() < 1e-15);
        let high = State::new(2.5, 3.5, 10.0, 10.0);
        assert_eq!(terminal_cost(&high, &x0, 1.0), 0.0);
    }

    #[test]
    fn tank_shortfall_keeps_tank_nonnegative() {
        let p = quiet_params();
        let x = State::new(2.0, 0.1, 18.0, 18.0);
        let w = Uncertainty::new(0.0, 3.0);
        let x1 = step(0, &x, &Control::default(), &w, &p).unwrap();
        assert!(x1.h.abs() < 1e-15);
        assert!((hw_shortfall(&x, &Control::default(), &w, &p) - 2.6).abs() < 1e-12);
    }

    #[test]
    fn linear_thermal_form_matches_dynamics() {
        let mut p = SystemParams::default();
        p.p_int = vec![0.3; p.horizon_steps + 1];
        p.p_ext = vec![0.7; p.horizon_steps + 1];
        let x = State::new(2.0, 3.0, 15.0, 19.0);
        let u = Control::new(0.0, 2.5, 0.0);
        let f = continuous_dynamics(5, &x, &u, &Uncertainty::default(), &p);
        let l = p.thermal_linear(5);
        let w = l.ww * x.theta_w + l.wi * x.theta_i + l.wt * u.f_t + l.w0;
        let i = l.iw * x.theta_w + l.ii * x.theta_i + l.it * u.f_t + l.i0;
        assert!((w - f.theta_w).abs() < 1e-12);
        assert!((i - f.theta_i).abs() < 1e-12);
    }

    #[test]
    fn default_time_constants_are_realistic() {
        let l = SystemParams::default().thermal_linear(0);
        let tau_wall = -1.0 / l.ww;
        let tau_in = -1.0 / l.ii;
        assert!((30.0..50.0).contains(&tau_wall), "wall {tau_wall}");
        assert!((2.0..4.0).contains(&tau_in), "indoor {tau_in}");
    }

    #[test]
    fn tank_conversion_default() {
        let h = TankConversion::default().h_max();
        assert!((h - 5.58).abs() < 0.01);
    }

    #[test]
    fn validation_rejects_zero_step() {
        let mut p = SystemParams::default();
        assert!(p.validate().is_ok());
        p.delta = 0.0;
        assert!(p.validate().is_err());
        let mut p = SystemParams::default();
        p.theta_o.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn tariff_and_setpoint_schedules() {
        let pi = tariff_series(96, 0.25, 0.18, 0.13);
        assert_eq!(pi[0], 0.13);
        assert_eq!(pi[27], 0.13);
        assert_eq!(pi[28], 0.18);
        assert_eq!(pi[91], 0.18);
        assert_eq!(pi[92], 0.13);
        let set = setpoint_series(96, 0.25, 16.0, 20.0);
        assert_eq!(set[23], 16.0);
        assert_eq!(set[24], 20.0);
    }
}
