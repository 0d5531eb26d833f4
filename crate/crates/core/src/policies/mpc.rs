//! Model predictive control over the remaining horizon with a deterministic
//! forecast, keeping only the first decision.

use std::sync::Arc;
use std::time::Instant;

use super::{finalize_control, Diagnostics, Policy, PolicyDecision, PolicyError};
use crate::lp::{LpBuilder, LpStatus, Simplex};
use crate::model::{discomfort, hw_shortfall, recourse, Control, State, SystemParams, Uncertainty};
use crate::scenarios::{update_forecast, ArModel};

const INF: f64 = f64::INFINITY;

/// Variable and row indices of a multi-step deterministic LP covering steps
/// `t0 .. T`. Local step `k` is global step `t0 + k`.
#[derive(Debug, Clone)]
pub(crate) struct HorizonLp {
    pub t0: usize,
    pub steps: usize,
    pub fp: Vec<usize>,
    pub fm: Vec<usize>,
    pub ft: Vec<usize>,
    pub fh: Vec<usize>,
    pub fne: Vec<usize>,
    pub spill: Vec<usize>,
    pub short: Vec<usize>,
    pub disc: Vec<usize>,
    pub b: Vec<usize>,
    pub h: Vec<usize>,
    pub tw: Vec<usize>,
    pub ti: Vec<usize>,
    pub bal_row: Vec<usize>,
    pub tank_row: Vec<usize>,
    /// Rows whose variables are all pinned once the step is in the past.
    pub closed_rows: Vec<Vec<usize>>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub terminal: [usize; 2],
}

impl HorizonLp {
    fn record(&mut self, b: &mut LpBuilder, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        let r = b.add_eq(&terms, rhs);
        self.rows.push(terms);
        r
    }

    fn record_ineq(&mut self, b: &mut LpBuilder, terms: Vec<(usize, f64)>, rhs: f64, ge: bool) -> usize {
        let s = b.num_vars();
        let r = if ge { b.add_ge(&terms, rhs) } else { b.add_le(&terms, rhs) };
        let mut full = terms;
        full.push((s, if ge { -1.0 } else { 1.0 }));
        self.rows.push(full);
        self.cost.push(0.0);
        r
    }

    fn var(&mut self, b: &mut LpBuilder, name: String, cost: f64, lo: f64, hi: f64) -> usize {
        self.cost.push(cost);
        b.add_var(name, cost, lo, hi)
    }

    /// Builds the LP starting from the known state `x_t` at step `t0`.
    /// `forecast[k]` is the uncertainty realized at step `t0 + k + 1`.
    pub fn build(
        p: &SystemParams,
        t0: usize,
        x_t: &State,
        x0: &State,
        forecast: &[Uncertainty],
    ) -> (LpBuilder, HorizonLp) {
        let steps = p.horizon_steps - t0;
        assert_eq!(forecast.len(), steps, "forecast must cover steps {t0}..{}", p.horizon_steps);
        let mut b = LpBuilder::new();
        let mut lp = HorizonLp {
            t0,
            steps,
            fp: Vec::with_capacity(steps),
            fm: Vec::with_capacity(steps),
            ft: Vec::with_capacity(steps),
            fh: Vec::with_capacity(steps),
            fne: Vec::with_capacity(steps),
            spill: Vec::with_capacity(steps),
            short: Vec::with_capacity(steps),
            disc: Vec::with_capacity(steps),
            b: Vec::with_capacity(steps + 1),
            h: Vec::with_capacity(steps + 1),
            tw: Vec::with_capacity(steps + 1),
            ti: Vec::with_capacity(steps + 1),
            bal_row: Vec::with_capacity(steps),
            tank_row: Vec::with_capacity(steps),
            closed_rows: Vec::with_capacity(steps),
            rows: Vec::new(),
            cost: Vec::new(),
            terminal: [0, 0],
        };
        let d = p.delta;

        let state_vars = |lp: &mut HorizonLp, b: &mut LpBuilder, k: usize, fixed: Option<&State>| {
            let (bb, hb) = match fixed {
                Some(x) => ((x.b, x.b), (x.h, x.h)),
                None => ((p.b_min, p.b_max), (0.0, p.h_max)),
            };
            let (wb, ib) = match fixed {
                Some(x) => ((x.theta_w, x.theta_w), (x.theta_i, x.theta_i)),
                None => ((-INF, INF), (-INF, INF)),
            };
            let v = lp.var(b, format!("b{k}"), 0.0, bb.0, bb.1);
            lp.b.push(v);
            let v = lp.var(b, format!("h{k}"), 0.0, hb.0, hb.1);
            lp.h.push(v);
            let v = lp.var(b, format!("tw{k}"), 0.0, wb.0, wb.1);
            lp.tw.push(v);
            let v = lp.var(b, format!("ti{k}"), 0.0, ib.0, ib.1);
            lp.ti.push(v);
        };

        state_vars(&mut lp, &mut b, 0, Some(x_t));
        for k in 0..steps {
            let j = t0 + k;
            let fp = lp.var(&mut b, format!("fp{k}"), 0.0, 0.0, p.f_b_max);
            let fm = lp.var(&mut b, format!("fm{k}"), 0.0, 0.0, p.f_b_max);
            let ft = lp.var(&mut b, format!("ft{k}"), 0.0, 0.0, p.f_t_max);
            let fh = lp.var(&mut b, format!("fh{k}"), 0.0, 0.0, p.f_h_max);
            let fne = lp.var(&mut b, format!("fne{k}"), p.pi_e[j] * d, 0.0, INF);
            let spill = lp.var(&mut b, format!("spill{k}"), 0.0, 0.0, INF);
            let short = lp.var(&mut b, format!("short{k}"), p.pi_hw_shortfall * d, 0.0, INF);
            let disc = lp.var(&mut b, format!("disc{k}"), p.pi_d[j], 0.0, INF);
            lp.fp.push(fp);
            lp.fm.push(fm);
            lp.ft.push(ft);
            lp.fh.push(fh);
            lp.fne.push(fne);
            lp.spill.push(spill);
            lp.short.push(short);
            lp.disc.push(disc);
            state_vars(&mut lp, &mut b, k + 1, None);

            let (b0, b1) = (lp.b[k], lp.b[k + 1]);
            let (h0, h1) = (lp.h[k], lp.h[k + 1]);
            let (w0, w1) = (lp.tw[k], lp.tw[k + 1]);
            let (i0, i1) = (lp.ti[k], lp.ti[k + 1]);
            let th = p.thermal_linear(j);
            let w = forecast[k];

            let r_bat = lp.record(
                &mut b,
                vec![(b1, 1.0), (b0, -1.0), (fp, -d * p.rho_c), (fm, d / p.rho_d)],
                0.0,
            );
            let r_tank =
                lp.record(&mut b, vec![(h1, 1.0), (h0, -1.0), (fh, -d * p.beta_h), (short, -d)], -d * w.d_hw);
            let r_wall = lp.record(
                &mut b,
                vec![(w1, 1.0), (w0, -(1.0 + d * th.ww)), (i0, -d * th.wi), (ft, -d * th.wt)],
                d * th.w0,
            );
            let r_in = lp.record(
                &mut b,
                vec![(i1, 1.0), (w0, -d * th.iw), (i0, -(1.0 + d * th.ii)), (ft, -d * th.it)],
                d * th.i0,
            );
            let r_bal = lp.record(
                &mut b,
                vec![(fne, 1.0), (spill, -1.0), (fp, -1.0), (fm, 1.0), (ft, -1.0), (fh, -1.0)],
                w.d_el_net,
            );
            lp.record_ineq(&mut b, vec![(disc, 1.0), (i0, 1.0)], p.theta_set[j], true);
            lp.record_ineq(&mut b, vec![(h0, 1.0), (fh, d * p.beta_h)], p.h_max, false);
            lp.bal_row.push(r_bal);
            lp.tank_row.push(r_tank);
            lp.closed_rows.push(vec![r_bat, r_tank, r_wall, r_in, r_bal]);
        }
        let tb = lp.var(&mut b, "tb".into(), p.kappa, 0.0, INF);
        let th = lp.var(&mut b, "th".into(), p.kappa, 0.0, INF);
        lp.record_ineq(&mut b, vec![(tb, 1.0), (lp.b[steps], 1.0)], x0.b, true);
        lp.record_ineq(&mut b, vec![(th, 1.0), (lp.h[steps], 1.0)], x0.h, true);
        lp.terminal = [tb, th];
        (b, lp)
    }

    fn step_vars(&self, k: usize) -> [usize; 8] {
        [self.fp[k], self.fm[k], self.ft[k], self.fh[k], self.fne[k], self.spill[k], self.short[k], self.disc[k]]
    }

    /// Objective restricted to local steps `k0..` and the terminal penalty.
    fn tail_cost(&self, values: &[f64], k0: usize) -> f64 {
        let mut c = 0.0;
        for k in k0..self.steps {
            for v in self.step_vars(k) {
                c += self.cost[v] * values[v];
            }
        }
        for v in self.terminal {
            c += self.cost[v] * values[v];
        }
        c
    }

    fn first_control(&self, s: &Simplex, k: usize, x: &State, p: &SystemParams) -> Result<Control, PolicyError> {
        Ok(finalize_control(
            x,
            s.value(self.fp[k]),
            s.value(self.fm[k]),
            s.value(self.ft[k]),
            s.value(self.fh[k]),
            p,
        )?)
    }
}

/// Solves the deterministic problem over steps `t..T` from state `x` with
/// `forecast = (w̄_{t+1}, …, w̄_T)` and returns the step-`t` control.
pub fn mpc_decide(
    t: usize,
    x: &State,
    forecast: &[Uncertainty],
    p: &SystemParams,
    x0: &State,
) -> Result<PolicyDecision, PolicyError> {
    let start = Instant::now();
    if t >= p.horizon_steps || forecast.len() != p.horizon_steps - t {
        return Err(PolicyError::Input(format!(
            "forecast of length {} at step {t} (horizon {})",
            forecast.len(),
            p.horizon_steps
        )));
    }
    let (b, lp) = HorizonLp::build(p, t, x, x0, forecast);
    let (rows, cols) = (b.num_rows(), b.num_vars());
    let mut s = b.into_simplex();
    match s.solve()? {
        LpStatus::Optimal => {}
        other => return Err(PolicyError::Status(other)),
    }
    Ok(PolicyDecision {
        control: lp.first_control(&s, 0, x, p)?,
        predicted_cost: s.objective(),
        diagnostics: Diagnostics { solve_time: start.elapsed(), lp_rows: rows, lp_cols: cols },
    })
}

/// Anticipative optimum of a whole scenario (`scenario[t]` for `t = 0..=T`).
pub fn perfect_foresight(p: &SystemParams, x0: &State, scenario: &[Uncertainty]) -> Result<f64, PolicyError> {
    if scenario.len() != p.horizon_steps + 1 {
        return Err(PolicyError::Input(format!(
            "scenario has {} steps, expected {}",
            scenario.len(),
            p.horizon_steps + 1
        )));
    }
    let (b, _) = HorizonLp::build(p, 0, x0, x0, &scenario[1..]);
    let mut s = b.into_simplex();
    match s.solve()? {
        LpStatus::Optimal => Ok(s.objective()),
        other => Err(PolicyError::Status(other)),
    }
}

struct Template {
    solver: Simplex,
    lp: HorizonLp,
}

/// Shrinking-horizon MPC with AR(1) forecasts. Within a scenario the full
/// horizon LP is kept and warm-started: past steps are pinned to what
/// happened and only the forecast of the next step changes.
#[derive(Clone)]
pub struct Mpc {
    params: Arc<SystemParams>,
    ar: Arc<ArModel>,
    means: Arc<Vec<Uncertainty>>,
    x0: State,
    template: Arc<Template>,
    working: Option<Simplex>,
    next_step: usize,
    last: Option<(State, Control)>,
}

impl Mpc {
    /// `means` are the per-step means of the optimization scenarios.
    pub fn new(
        params: Arc<SystemParams>,
        ar: Arc<ArModel>,
        means: Arc<Vec<Uncertainty>>,
        x0: State,
    ) -> Result<Self, PolicyError> {
        let steps = params.horizon_steps;
        if ar.horizon() != steps || means.len() != steps + 1 {
            return Err(PolicyError::Input("AR model or means do not match the horizon".into()));
        }
        let (b, lp) = HorizonLp::build(&params, 0, &x0, &x0, &means[1..]);
        let mut solver = b.into_simplex();
        match solver.solve()? {
            LpStatus::Optimal => {}
            other => return Err(PolicyError::Status(other)),
        }
        Ok(Mpc {
            params,
            ar,
            means,
            x0,
            template: Arc::new(Template { solver, lp }),
            working: None,
            next_step: 0,
            last: None,
        })
    }

    fn pin_past_step(&mut self, k: usize, x_prev: &State, u: &Control, w: &Uncertainty, x_now: &State) {
        let p = &*self.params;
        let lp = &self.template.lp;
        let s = self.working.as_mut().expect("working solver");
        let rc = recourse(u, w);
        let values = [
            (lp.fp[k], u.f_b.max(0.0)),
            (lp.fm[k], (-u.f_b).max(0.0)),
            (lp.ft[k], u.f_t),
            (lp.fh[k], u.f_h),
            (lp.fne[k], rc.f_ne),
            (lp.spill[k], rc.spill),
            (lp.short[k], hw_shortfall(x_prev, u, w, p)),
            (lp.disc[k], discomfort(lp.t0 + k, x_prev, p)),
            (lp.b[k + 1], x_now.b),
            (lp.h[k + 1], x_now.h),
            (lp.tw[k + 1], x_now.theta_w),
            (lp.ti[k + 1], x_now.theta_i),
        ];
        for (v, val) in values {
            s.set_bounds(v, val, val);
        }
        for &r in &lp.closed_rows[k] {
            let lhs: f64 = lp.rows[r].iter().map(|&(j, a)| a * s.bounds(j).0).sum();
            s.set_rhs(r, lhs);
        }
    }

    fn pin_state(&mut self, k: usize, x: &State) {
        let lp = &self.template.lp;
        let s = self.working.as_mut().expect("working solver");
        for (v, val) in [(lp.b[k], x.b), (lp.h[k], x.h), (lp.tw[k], x.theta_w), (lp.ti[k], x.theta_i)] {
            s.set_bounds(v, val, val);
        }
    }
}

impl Policy for Mpc {
    fn name(&self) -> &str {
        "mpc"
    }

    fn reset(&mut self) {
        self.working = None;
        self.next_step = 0;
        self.last = None;
    }

    fn decide(&mut self, t: usize, x: &State, observed: &[Uncertainty]) -> Result<PolicyDecision, PolicyError> {
        let p = Arc::clone(&self.params);
        if t >= p.horizon_steps || observed.len() <= t {
            return Err(PolicyError::Input(format!("step {t} with {} observations", observed.len())));
        }
        let forecast = update_forecast(&self.ar, t, &observed[t], &self.means);
        let in_sequence = t == 0 || (self.working.is_some() && self.next_step == t && self.last.is_some());
        if !in_sequence {
            self.reset();
            return mpc_decide(t, x, &forecast, &p, &self.x0);
        }

        let start = Instant::now();
        if t == 0 {
            self.working = Some(self.template.solver.clone());
            self.pin_state(0, x);
        } else {
            let (x_prev, u_prev) = self.last.expect("checked above");
            self.pin_past_step(t - 1, &x_prev, &u_prev, &observed[t], x);
        }
        let template = Arc::clone(&self.template);
        let lp = &template.lp;
        let s = self.working.as_mut().expect("working solver");
        s.set_rhs(lp.bal_row[t], forecast[0].d_el_net);
        s.set_rhs(lp.tank_row[t], -p.delta * forecast[0].d_hw);
        let mut status = s.resolve()?;
        if status != LpStatus::Optimal {
            s.refactor()?;
            status = s.solve()?;
        }
        if status != LpStatus::Optimal {
            return Err(PolicyError::Status(status));
        }
        let control = lp.first_control(s, t, x, &p)?;
        let predicted_cost = lp.tail_cost(&s.values(), t);
        let diagnostics =
            Diagnostics { solve_time: start.elapsed(), lp_rows: s.num_rows(), lp_cols: s.num_structural() };
        self.last = Some((*x, control));
        self.next_step = t + 1;
        Ok(PolicyDecision { control, predicted_cost, diagnostics })
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        let mut c = self.clone();
        c.reset();
        Box::new(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(steps: usize) -> SystemParams {
        let mut p = SystemParams::default();
        p.horizon_steps = steps;
        let n = steps + 1;
        p.theta_o = vec![20.0; n];
        p.p_int = vec![0.0; n];
        p.p_ext = vec![0.0; n];
        p.pi_e = vec![0.18; n];
        p.pi_d = vec![0.1; n];
        p.theta_set = vec![16.0; n];
        p
    }

    #[test]
    fn nothing_to_do_at_last_step() {
        let p = tiny(4);
        let x = State::new(2.0, 3.0, 20.0, 20.0);
        let d = mpc_decide(3, &x, &[Uncertainty::default()], &p, &x).unwrap();
        assert_eq!(d.control, Control::default());
        assert!(d.predicted_cost.abs() < 1e-12);
    }

    #[test]
    fn forced_import_with_empty_stocks() {
        let mut p = tiny(4);
        p.b_min = 0.9;
        let x = State::new(p.b_min, 0.0, 20.0, 20.0);
        let dem = 1.2;
        let d = mpc_decide(3, &x, &[Uncertainty::new(dem, 0.0)], &p, &x).unwrap();
        assert_eq!(d.control, Control::default());
        assert!((d.predicted_cost - dem * p.delta * p.pi_e[3]).abs() < 1e-12);
    }
}
