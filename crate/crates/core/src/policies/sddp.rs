//! Stochastic dual dynamic programming: offline cut generation and the
//! online one-stage lookahead policy.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cuts::{max_cut, Cut, ValueFunctions};
use super::{finalize_control, Diagnostics, Policy, PolicyDecision, PolicyError};
use crate::lp::{LpBuilder, LpStatus, RowSense, Simplex};
use crate::model::{stage_cost, step, terminal_cost, Control, State, SystemParams, Uncertainty};
use crate::scenarios::DiscreteDistribution;

const INF: f64 = f64::INFINITY;
/// A cut is added to a block when it exceeds the block's epigraph variable
/// by more than this (relative to the cut value).
const CUT_TOL: f64 = 1e-10;
/// Warm re-solves between two refactorizations of a stage solver.
const REFACTOR_EVERY: usize = 40;
const RESIDUAL_TOL: f64 = 1e-9;
/// Cut rows kept per block before slack cuts are dropped.
const ROWS_PER_BLOCK: usize = 6;

#[derive(Debug, Clone, Copy)]
#[cfg_attr(not(test), allow(dead_code))]
struct Block {
    fne: usize,
    spill: usize,
    short: usize,
    h_next: usize,
    theta: usize,
}

/// One-stage problem: the decision at `t` against the discrete law of
/// `w_{t+1}`, with one epigraph variable per outcome bounded below by the
/// cuts of `V_{t+1}`. The incoming state is pinned by equality rows whose
/// multipliers are the cut slopes.
#[derive(Clone)]
pub(crate) struct StageLp {
    solver: Simplex,
    pins: [usize; 4],
    fp: usize,
    fm: usize,
    ft: usize,
    fh: usize,
    b_next: usize,
    tw_next: usize,
    ti_next: usize,
    blocks: Vec<Block>,
    /// Cut rows per block: cut index, slack column and the cut itself.
    present: Vec<Vec<(usize, usize, Cut)>>,
    /// The problem without cut rows, never solved.
    base: Simplex,
    purge_at: usize,
    warm_solves: usize,
}

pub(crate) struct StageSolution {
    pub value: f64,
    pub slopes: [f64; 4],
    pub control: Control,
}

impl StageLp {
    pub fn new(t: usize, p: &SystemParams, dist: &DiscreteDistribution, x: &State) -> Self {
        let d = p.delta;
        let mut b = LpBuilder::new();
        let z: Vec<usize> = ["zb", "zh", "zw", "zi"].iter().map(|n| b.add_var(*n, 0.0, -INF, INF)).collect();
        let xa = x.to_array();
        let pins = [
            b.add_eq(&[(z[0], 1.0)], xa[0]),
            b.add_eq(&[(z[1], 1.0)], xa[1]),
            b.add_eq(&[(z[2], 1.0)], xa[2]),
            b.add_eq(&[(z[3], 1.0)], xa[3]),
        ];
        let fp = b.add_var("fp", 0.0, 0.0, p.f_b_max);
        let fm = b.add_var("fm", 0.0, 0.0, p.f_b_max);
        let ft = b.add_var("ft", 0.0, 0.0, p.f_t_max);
        let fh = b.add_var("fh", 0.0, 0.0, p.f_h_max);
        let disc = b.add_var("disc", p.pi_d[t], 0.0, INF);
        let b_next = b.add_var("b_next", 0.0, p.b_min, p.b_max);
        let h_pre = b.add_var("h_pre", 0.0, -INF, p.h_max);
        let tw_next = b.add_var("tw_next", 0.0, -INF, INF);
        let ti_next = b.add_var("ti_next", 0.0, -INF, INF);
        let th = p.thermal_linear(t);

        b.add_ge(&[(disc, 1.0), (z[3], 1.0)], p.theta_set[t]);
        b.add_eq(&[(b_next, 1.0), (z[0], -1.0), (fp, -d * p.rho_c), (fm, d / p.rho_d)], 0.0);
        b.add_eq(&[(h_pre, 1.0), (z[1], -1.0), (fh, -d * p.beta_h)], 0.0);
        b.add_eq(&[(tw_next, 1.0), (z[2], -(1.0 + d * th.ww)), (z[3], -d * th.wi), (ft, -d * th.wt)], d * th.w0);
        b.add_eq(&[(ti_next, 1.0), (z[2], -d * th.iw), (z[3], -(1.0 + d * th.ii)), (ft, -d * th.it)], d * th.i0);

        let mut blocks = Vec::with_capacity(dist.len());
        for (s, (w, &prob)) in dist.points.iter().zip(&dist.weights).enumerate() {
            let fne = b.add_var(format!("fne{s}"), prob * p.pi_e[t] * d, 0.0, INF);
            let spill = b.add_var(format!("spill{s}"), 0.0, 0.0, INF);
            let short = b.add_var(format!("short{s}"), prob * p.pi_hw_shortfall * d, 0.0, INF);
            let h_next = b.add_var(format!("h_next{s}"), 0.0, 0.0, p.h_max);
            // all value functions are nonnegative, so theta >= 0 is the zero cut
            let theta = b.add_var(format!("theta{s}"), prob, 0.0, INF);
            b.add_eq(&[(fne, 1.0), (spill, -1.0), (fp, -1.0), (fm, 1.0), (ft, -1.0), (fh, -1.0)], w.d_el_net);
            b.add_eq(&[(h_next, 1.0), (h_pre, -1.0), (short, -d)], -d * w.d_hw);
            blocks.push(Block { fne, spill, short, h_next, theta });
        }
        let n = blocks.len();
        let solver = b.into_simplex();
        StageLp {
            base: solver.clone(),
            purge_at: ROWS_PER_BLOCK * n,
            solver,
            pins,
            fp,
            fm,
            ft,
            fh,
            b_next,
            tw_next,
            ti_next,
            blocks,
            present: vec![Vec::new(); n],
            warm_solves: 0,
        }
    }

    pub fn size(&self) -> (usize, usize) {
        (self.solver.num_rows(), self.solver.num_structural())
    }

    fn next_state(&self, block: &Block) -> [f64; 4] {
        [
            self.solver.value(self.b_next),
            self.solver.value(block.h_next),
            self.solver.value(self.tw_next),
            self.solver.value(self.ti_next),
        ]
    }

    fn add_cut_row(&mut self, s: usize, j: usize, cut: &Cut) {
        let blk = self.blocks[s];
        let coeffs = [
            (blk.theta, 1.0),
            (self.b_next, -cut.lambda[0]),
            (blk.h_next, -cut.lambda[1]),
            (self.tw_next, -cut.lambda[2]),
            (self.ti_next, -cut.lambda[3]),
        ];
        let coeffs: Vec<(usize, f64)> = coeffs.into_iter().filter(|&(_, a)| a != 0.0).collect();
        let slack = self.solver.add_row(&coeffs, RowSense::Ge, cut.beta).expect("inequality row has a slack");
        self.present[s].push((j, slack, *cut));
    }

    /// Rebuilds the solver with only the cut rows that are tight at the
    /// current solution, then re-solves from scratch.
    fn purge(&mut self) -> Result<(), PolicyError> {
        let kept: Vec<Vec<(usize, usize, Cut)>> = self
            .present
            .iter()
            .map(|rows| {
                rows.iter()
                    .filter(|&&(_, slack, cut)| self.solver.value(slack) <= 1e-7 * (1.0 + cut.beta.abs()))
                    .copied()
                    .collect()
            })
            .collect();
        self.solver = self.base.clone();
        self.present = vec![Vec::new(); self.blocks.len()];
        for (s, rows) in kept.into_iter().enumerate() {
            for (j, _, cut) in rows {
                self.add_cut_row(s, j, &cut);
            }
        }
        let total: usize = self.present.iter().map(Vec::len).sum();
        self.purge_at = (2 * total).max(ROWS_PER_BLOCK * self.blocks.len());
        self.warm_solves = 0;
        self.reoptimize(false)
    }

    fn reoptimize(&mut self, warm: bool) -> Result<(), PolicyError> {
        let mut status = if warm && self.solver.is_solved() {
            self.warm_solves += 1;
            if self.warm_solves.is_multiple_of(REFACTOR_EVERY) {
                self.solver.refactor()?;
            }
            self.solver.resolve()?
        } else {
            self.solver.solve()?
        };
        if status == LpStatus::Optimal && self.solver.max_residual() > RESIDUAL_TOL {
            self.solver.refactor()?;
            status = self.solver.resolve()?;
        }
        if status != LpStatus::Optimal {
            status = self.solver.solve()?;
        }
        if status != LpStatus::Optimal {
            return Err(PolicyError::Status(status));
        }
        Ok(())
    }

    /// Solves at incoming state `x` against the cuts of `V_{t+1}`. Cut rows
    /// are added lazily until every block's epigraph variable dominates all
    /// cuts at its next state, so the result is optimal for the full LP.
    pub fn solve(&mut self, x: &State, next: &[Cut], warm: bool, p: &SystemParams) -> Result<StageSolution, PolicyError> {
        for (r, v) in self.pins.iter().zip(x.to_array()) {
            self.solver.set_rhs(*r, v);
        }
        self.reoptimize(warm)?;
        loop {
            let mut added = false;
            for s in 0..self.blocks.len() {
                let xs = self.next_state(&self.blocks[s]);
                let (j, v) = max_cut(next, &xs);
                let theta = self.solver.value(self.blocks[s].theta);
                if v - theta > CUT_TOL * (1.0 + v.abs()) && !self.present[s].iter().any(|r| r.0 == j) {
                    self.add_cut_row(s, j, &next[j]);
                    added = true;
                }
            }
            if !added {
                break;
            }
            self.reoptimize(true)?;
        }
        let y = self.solver.duals();
        let value = self.solver.objective();
        let slopes = [y[self.pins[0]], y[self.pins[1]], y[self.pins[2]], y[self.pins[3]]];
        let control = finalize_control(
            x,
            self.solver.value(self.fp),
            self.solver.value(self.fm),
            self.solver.value(self.ft),
            self.solver.value(self.fh),
            p,
        )?;
        if self.present.iter().map(Vec::len).sum::<usize>() > self.purge_at {
            self.purge()?;
        }
        Ok(StageSolution { value, slopes, control })
    }

    /// The stage problem solved at `x0` against `next`, from which every
    /// decision of the stage starts.
    fn template(
        t: usize,
        p: &SystemParams,
        dist: &DiscreteDistribution,
        x0: &State,
        next: &[Cut],
    ) -> Result<Self, PolicyError> {
        let mut lp = StageLp::new(t, p, dist, x0);
        lp.solve(x0, next, false, p)?;
        Ok(lp)
    }

    /// Decision at `x` from a copy of a template. Depends only on the
    /// template, `x` and `next`.
    fn decide_from(&self, x: &State, next: &[Cut], p: &SystemParams) -> Result<(StageSolution, StageLp), PolicyError> {
        let mut lp = self.clone();
        let sol = lp.solve(x, next, true, p)?;
        Ok((sol, lp))
    }

    #[cfg(test)]
    pub(crate) fn recourse_of(&self, s: usize) -> (f64, f64, f64) {
        let b = self.blocks[s];
        (self.solver.value(b.fne), self.solver.value(b.spill), self.solver.value(b.short))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iters: usize,
    /// Relative lower-bound change regarded as stagnation.
    pub lb_rel_tol: f64,
    /// Consecutive stagnating iterations that stop the training.
    pub stall_iters: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule { max_iters: 100, lb_rel_tol: 1e-4, stall_iters: 10 }
    }
}

impl StoppingRule {
    pub fn fixed(iters: usize) -> Self {
        StoppingRule { max_iters: iters, lb_rel_tol: 0.0, stall_iters: usize::MAX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub iteration: usize,
    pub lower_bound: f64,
    pub forward_cost: f64,
    pub cuts: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<TrainingRecord>,
}

impl TrainingLog {
    pub fn lower_bounds(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lower_bound).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sample(dist: &DiscreteDistribution, rng: &mut ChaCha8Rng) -> Uncertainty {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (p, w) in dist.points.iter().zip(&dist.weights) {
        acc += w;
        if u < acc {
            return *p;
        }
    }
    *dist.points.last().expect("non-empty distribution")
}

fn check_distributions(p: &SystemParams, dists: &[DiscreteDistribution]) -> Result<(), PolicyError> {
    if dists.len() != p.horizon_steps {
        return Err(PolicyError::Input(format!(
            "{} stage distributions for a horizon of {}",
            dists.len(),
            p.horizon_steps
        )));
    }
    for (k, d) in dists.iter().enumerate() {
        d.check().map_err(|e| PolicyError::Input(e.to_string()))?;
        if d.t != k + 1 {
            return Err(PolicyError::Input(format!("distribution {k} is labelled t = {}", d.t)));
        }
    }
    Ok(())
}

/// Trains value functions with forward passes sampled i.i.d. from `dists`
/// (`dists[t - 1]` is the law of `w_t`) and backward cut generation.
pub fn sddp_train(
    p: &SystemParams,
    dists: &[DiscreteDistribution],
    x0: &State,
    stop: &StoppingRule,
    seed: u64,
) -> Result<(ValueFunctions, TrainingLog), PolicyError> {
    check_distributions(p, dists)?;
    let steps = p.horizon_steps;
    let mut vf = ValueFunctions::initial(steps, x0, p.kappa);
    let mut stages: Vec<StageLp> = (0..steps).map(|t| StageLp::new(t, p, &dists[t], x0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = TrainingLog::default();
    let start = Instant::now();
    let mut stall = 0usize;
    let mut states = vec![*x0; steps + 1];

    for it in 0..stop.max_iters {
        // forward decisions are made exactly as the online policy makes them
        let mut cost = 0.0;
        let mut x = *x0;
        for t in 0..steps {
            let template = StageLp::template(t, p, &dists[t], x0, vf.stage(t + 1))?;
            let (sol, _) = template.decide_from(&x, vf.stage(t + 1), p)?;
            let w = sample(&dists[t], &mut rng);
            cost += stage_cost(t, &x, &sol.control, &w, p);
            x = step(t, &x, &sol.control, &w, p)?;
            states[t + 1] = x;
        }
        cost += terminal_cost(&x, x0, p.kappa);

        let mut lower_bound = 0.0;
        for t in (0..steps).rev() {
            let xt = states[t];
            let (head, tail) = vf.cuts.split_at_mut(t + 1);
            let sol = stages[t].solve(&xt, &tail[0], true, p)?;
            let xa = xt.to_array();
            let beta = sol.value - (0..4).map(|i| sol.slopes[i] * xa[i]).sum::<f64>();
            head[t].push(Cut { lambda: sol.slopes, beta });
            if t == 0 {
                lower_bound = sol.value;
            }
        }

        let prev = log.records.last().map(|r| r.lower_bound);
        log.records.push(TrainingRecord {
            iteration: it + 1,
            lower_bound,
            forward_cost: cost,
            cuts: vf.num_cuts(),
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        log::debug!("sddp iteration {}: lower bound {lower_bound:.6}, forward cost {cost:.6}", it + 1);
        if let Some(prev) = prev {
            let scale = lower_bound.abs().max(prev.abs());
            let change = (lower_bound - prev).abs();
            if change <= stop.lb_rel_tol * scale || (scale == 0.0 && change == 0.0) {
                stall += 1;
            } else {
                stall = 0;
            }
            if stall >= stop.stall_iters {
                break;
            }
        }
    }
    Ok((vf, log))
}

/// One-stage lookahead decision against the cuts of `V_{t+1}` and the
/// online law `dist_online` of `w_{t+1}`, solved from scratch.
pub fn sddp_decide(
    t: usize,
    x: &State,
    vf: &ValueFunctions,
    dist_online: &DiscreteDistribution,
    p: &SystemParams,
) -> Result<PolicyDecision, PolicyError> {
    let start = Instant::now();
    if t >= p.horizon_steps || vf.horizon() != p.horizon_steps {
        return Err(PolicyError::Input(format!("step {t} outside the trained horizon")));
    }
    let mut lp = StageLp::new(t, p, dist_online, x);
    let sol = lp.solve(x, vf.stage(t + 1), false, p)?;
    let (rows, cols) = lp.size();
    Ok(PolicyDecision {
        control: sol.control,
        predicted_cost: sol.value,
        diagnostics: Diagnostics { solve_time: start.elapsed(), lp_rows: rows, lp_cols: cols },
    })
}

struct Online {
    params: Arc<SystemParams>,
    vf: Arc<ValueFunctions>,
    templates: Vec<StageLp>,
}

/// Online SDDP controller. Each stage problem is prepared once at `x0`
/// and every decision starts from a copy of it, so decisions do not depend
/// on which scenarios were simulated before.
#[derive(Clone)]
pub struct SddpPolicy {
    online: Arc<Online>,
}

impl SddpPolicy {
    /// `online[t - 1]` is the law of `w_t` used when deciding at `t - 1`.
    pub fn new(
        params: Arc<SystemParams>,
        vf: Arc<ValueFunctions>,
        online: &[DiscreteDistribution],
        x0: &State,
    ) -> Result<Self, PolicyError> {
        check_distributions(&params, online)?;
        if vf.horizon() != params.horizon_steps {
            return Err(PolicyError::Input(format!(
                "value functions cover {} stages, horizon is {}",
                vf.horizon(),
                params.horizon_steps
            )));
        }
        vf.validate().map_err(PolicyError::Input)?;
        let mut templates = Vec::with_capacity(params.horizon_steps);
        for t in 0..params.horizon_steps {
            templates.push(StageLp::template(t, &params, &online[t], x0, vf.stage(t + 1))?);
        }
        Ok(SddpPolicy { online: Arc::new(Online { params, vf, templates }) })
    }

    pub fn value_functions(&self) -> &ValueFunctions {
        &self.online.vf
    }
}

impl Policy for SddpPolicy {
    fn name(&self) -> &str {
        "sddp"
    }

    fn reset(&mut self) {}

    fn decide(&mut self, t: usize, x: &State, _observed: &[Uncertainty]) -> Result<PolicyDecision, PolicyError> {
        let on = &*self.online;
        let p = &*on.params;
        if t >= p.horizon_steps {
            return Err(PolicyError::Input(format!("step {t} beyond horizon {}", p.horizon_steps)));
        }
        let start = Instant::now();
        let (sol, lp) = on.templates[t].decide_from(x, on.vf.stage(t + 1), p)?;
        let (rows, cols) = lp.size();
        Ok(PolicyDecision {
            control: sol.control,
            predicted_cost: sol.value,
            diagnostics: Diagnostics { solve_time: start.elapsed(), lp_rows: rows, lp_cols: cols },
        })
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}
