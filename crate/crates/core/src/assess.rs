//! Out-of-sample Monte Carlo assessment: roll policies over held-out
//! scenarios and summarise the bills.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    admissible_controls, recourse, stage_cost, step, terminal_cost, Control, ModelError, Recourse, State,
    SystemParams, Uncertainty, BOUND_TOL,
};
use crate::policies::{Policy, PolicyError};
use crate::scenarios::{Assessment, ScenarioSet};

pub use crate::scenarios::split_scenarios;

pub const HISTOGRAM_BINS: usize = 40;
/// Two-sided 95 % normal quantile.
pub const Z95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("policy {policy} at step {t}: {source}")]
    Policy { policy: String, t: usize, source: PolicyError },
    #[error("policy {policy} at step {t} chose an inadmissible control {control:?}")]
    Inadmissible { policy: String, t: usize, control: Control },
    #[error("policy {policy} at step {t}: {source}")]
    Model { policy: String, t: usize, source: ModelError },
    #[error("load balance broken at step {t}: residual {residual:e}")]
    Conservation { t: usize, residual: f64 },
    #[error("{0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Everything that happened along one simulated day. `states` has `T + 1`
/// entries, the per-step vectors `T`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    pub recourse: Vec<Recourse>,
    pub stage_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub cost: f64,
    pub trajectory: Trajectory,
    /// Wall-clock time spent in `decide`, per step.
    pub decision_times: Vec<Duration>,
}

/// `f_ne - spill - (f_b + f_t + f_h + d_el_net)`.
pub fn balance_residual(u: &Control, w: &Uncertainty, rc: &Recourse) -> f64 {
    rc.f_ne - rc.spill - (u.f_b + u.f_t + u.f_h + w.d_el_net)
}

/// Rolls `policy` over `scenario` (`w_0, …, w_T`) from `x0`.
pub fn simulate_policy(
    policy: &mut dyn Policy,
    scenario: &[Uncertainty],
    x0: &State,
    p: &SystemParams,
) -> Result<Simulation, AssessError> {
    let steps = p.horizon_steps;
    if scenario.len() != steps + 1 {
        return Err(AssessError::Input(format!(
            "scenario has {} entries, expected {}",
            scenario.len(),
            steps + 1
        )));
    }
    let name = policy.name().to_string();
    let model_err = |t: usize| {
        let name = name.clone();
        move |source| AssessError::Model { policy: name, t, source }
    };
    policy.reset();
    let mut traj = Trajectory {
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps),
        recourse: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
    };
    let mut times = Vec::with_capacity(steps);
    let mut x = *x0;
    traj.states.push(x);
    let mut cost = 0.0;
    for t in 0..steps {
        let start = Instant::now();
        let decision = policy
            .decide(t, &x, &scenario[..=t])
            .map_err(|source| AssessError::Policy { policy: name.clone(), t, source })?;
        times.push(start.elapsed());
        let u = decision.control;
        let cbox = admissible_controls(&x, p).map_err(model_err(t))?;
        if !u.is_finite() || !cbox.contains(&u, BOUND_TOL) {
            return Err(AssessError::Inadmissible { policy: name, t, control: u });
        }
        let w = &scenario[t + 1];
        let rc = recourse(&u, w);
        let residual = balance_residual(&u, w, &rc);
        if residual.abs() > 1e-12 {
            return Err(AssessError::Conservation { t, residual });
        }
        let c = stage_cost(t, &x, &u, w, p);
        cost += c;
        x = step(t, &x, &u, w, p).map_err(model_err(t))?;
        if !x.within_bounds(p, BOUND_TOL) {
            return Err(AssessError::Model {
                policy: name,
                t,
                source: ModelError::InvalidState(format!("{x:?} out of bounds")),
            });
        }
        traj.controls.push(u);
        traj.recourse.push(rc);
        traj.stage_costs.push(c);
        traj.states.push(x);
    }
    cost += terminal_cost(&x, x0, p.kappa);
    Ok(Simulation { cost, trajectory: traj, decision_times: times })
}

/// Mean, sample standard deviation and 95 % half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
}

/// Welford accumulation; `std` uses the `n - 1` denominator.
pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let std = if n > 1 { (m2.max(0.0) / (n - 1) as f64).sqrt() } else { 0.0 };
    let ci95 = if n > 0 { Z95 * std / (n as f64).sqrt() } else { 0.0 };
    Summary { mean, std, ci95 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

/// Fixed-width bins over `[min, max]`; the last bin is closed.
pub fn histogram(xs: &[f64], bins: usize) -> Histogram {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0; bins];
    if xs.is_empty() {
        return Histogram { lo: 0.0, hi: 0.0, width: 0.0, counts };
    }
    let width = (hi - lo) / bins as f64;
    for &x in xs {
        let k = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }
    Histogram { lo, hi, width, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub name: String,
    pub costs: Vec<f64>,
    #[serde(flatten)]
    pub summary: Summary,
    pub mean_decision_s: f64,
    pub max_decision_s: f64,
}

/// Per-scenario differences `first - second`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub first: String,
    pub second: String,
    pub gaps: Vec<f64>,
    #[serde(flatten)]
    pub summary: Summary,
    /// Share of scenarios where `first` is strictly cheaper.
    pub win_fraction: f64,
    pub histogram: Histogram,
}

impl GapStats {
    pub fn from_costs(first: &PolicyStats, second: &PolicyStats) -> Self {
        let gaps: Vec<f64> = first.costs.iter().zip(&second.costs).map(|(a, b)| a - b).collect();
        let wins = first.costs.iter().zip(&second.costs).filter(|(a, b)| a < b).count();
        GapStats {
            first: first.name.clone(),
            second: second.name.clone(),
            summary: summarize(&gaps),
            win_fraction: wins as f64 / gaps.len().max(1) as f64,
            histogram: histogram(&gaps, HISTOGRAM_BINS),
            gaps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub n_scenarios: usize,
    pub horizon: usize,
    pub policies: Vec<PolicyStats>,
    /// One entry per unordered pair, in policy order.
    pub gaps: Vec<GapStats>,
    /// `trajectories[policy][scenario]` when recording was requested.
    #[serde(skip)]
    pub trajectories: Option<Vec<Vec<Trajectory>>>,
}

impl AssessmentReport {
    pub fn policy(&self, name: &str) -> Option<&PolicyStats> {
        self.policies.iter().find(|s| s.name == name)
    }

    pub fn gap(&self, first: &str, second: &str) -> Option<&GapStats> {
        self.gaps.iter().find(|g| g.first == first && g.second == second)
    }

    /// Builds the statistics from a cost matrix `costs[policy][scenario]`.
    pub fn from_costs(names: &[String], costs: Vec<Vec<f64>>, horizon: usize) -> Result<Self, AssessError> {
        if names.len() != costs.len() {
            return Err(AssessError::Input("one cost list per policy expected".into()));
        }
        let n = costs.first().map_or(0, Vec::len);
        if costs.iter().any(|c| c.len() != n) {
            return Err(AssessError::Input("policies were assessed on different scenario counts".into()));
        }
        let policies: Vec<PolicyStats> = names
            .iter()
            .zip(costs)
            .map(|(name, c)| PolicyStats {
                name: name.clone(),
                summary: summarize(&c),
                costs: c,
                mean_decision_s: 0.0,
                max_decision_s: 0.0,
            })
            .collect();
        let mut gaps = Vec::new();
        for i in 0..policies.len() {
            for j in i + 1..policies.len() {
                gaps.push(GapStats::from_costs(&policies[i], &policies[j]));
            }
        }
        Ok(AssessmentReport { n_scenarios: n, horizon, policies, gaps, trajectories: None })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AssessOptions {
    pub record_trajectories: bool,
}

struct ScenarioResult {
    costs: Vec<f64>,
    time_sum: Vec<Duration>,
    time_max: Vec<Duration>,
    trajectories: Vec<Trajectory>,
}

/// Simulates every policy on every assessment scenario. Scenarios run in
/// parallel on the current rayon pool; results are keyed by scenario index.
pub fn run_assessment(
    policies: &[Box<dyn Policy>],
    assessment: &ScenarioSet<Assessment>,
    x0: &State,
    p: &SystemParams,
    opts: AssessOptions,
) -> Result<AssessmentReport, AssessError> {
    if assessment.len() < 2 {
        return Err(AssessError::Input("assessment needs at least two scenarios".into()));
    }
    if policies.is_empty() {
        return Err(AssessError::Input("no policies to assess".into()));
    }
    let names: Vec<String> = policies.iter().map(|q| q.name().to_string()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(AssessError::Input(format!("policy name {n} appears twice")));
        }
    }
    let results: Vec<ScenarioResult> = assessment
        .scenarios()
        .par_iter()
        .map_init(
            || policies.to_vec(),
            |pols, scenario| {
                let mut r = ScenarioResult {
                    costs: Vec::with_capacity(pols.len()),
                    time_sum: Vec::with_capacity(pols.len()),
                    time_max: Vec::with_capacity(pols.len()),
                    trajectories: Vec::new(),
                };
                for pol in pols.iter_mut() {
                    let sim = simulate_policy(pol.as_mut(), scenario, x0, p)?;
                    r.costs.push(sim.cost);
                    r.time_sum.push(sim.decision_times.iter().sum());
                    r.time_max.push(sim.decision_times.iter().copied().max().unwrap_or_default());
                    if opts.record_trajectories {
                        r.trajectories.push(sim.trajectory);
                    }
                }
                Ok(r)
            },
        )
        .collect::<Result<_, AssessError>>()?;

    let k = policies.len();
    let costs: Vec<Vec<f64>> = (0..k).map(|i| results.iter().map(|r| r.costs[i]).collect()).collect();
    let mut report = AssessmentReport::from_costs(&names, costs, p.horizon_steps)?;
    let decisions = (results.len() * p.horizon_steps).max(1) as f64;
    for (i, stats) in report.policies.iter_mut().enumerate() {
        let total: Duration = results.iter().map(|r| r.time_sum[i]).sum();
        stats.mean_decision_s = total.as_secs_f64() / decisions;
        stats.max_decision_s =
            results.iter().map(|r| r.time_max[i]).max().unwrap_or_default().as_secs_f64();
    }
    if opts.record_trajectories {
        let mut by_policy: Vec<Vec<Trajectory>> = vec![Vec::with_capacity(results.len()); k];
        for r in results {
            for (i, t) in r.trajectories.into_iter().enumerate() {
                by_policy[i].push(t);
            }
        }
        report.trajectories = Some(by_policy);
    }
    Ok(report)
}

#[derive(Serialize)]
struct CostRow<'a> {
    scenario: usize,
    policy: &'a str,
    cost: f64,
}

#[derive(Serialize)]
struct GapRow<'a> {
    scenario: usize,
    first: &'a str,
    second: &'a str,
    gap: f64,
}

#[derive(Serialize)]
struct BinRow<'a> {
    first: &'a str,
    second: &'a str,
    bin: usize,
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Serialize)]
struct TrajRow {
    scenario: usize,
    t: usize,
    b: f64,
    h: f64,
    theta_w: f64,
    theta_i: f64,
    f_ne: Option<f64>,
}

/// Writes `report.json`, `costs.csv`, `gaps.csv`, `gap_histogram.csv` and,
/// when recorded, one `trajectories_<policy>.csv` per policy into `dir`.
/// `f_ne` on the row of step `t` is the import over `[t, t + 1)`; it is
/// empty on the final row.
pub fn write_report(report: &AssessmentReport, dir: &Path) -> Result<(), AssessError> {
    std::fs::create_dir_all(dir)?;
    let f = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(f, report)?;

    let mut w = csv::Writer::from_path(dir.join("costs.csv"))?;
    for s in &report.policies {
        for (i, &c) in s.costs.iter().enumerate() {
            w.serialize(CostRow { scenario: i, policy: &s.name, cost: c })?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("gaps.csv"))?;
    for g in &report.gaps {
        for (i, &gap) in g.gaps.iter().enumerate() {
            w.serialize(GapRow { scenario: i, first: &g.first, second: &g.second, gap })?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("gap_histogram.csv"))?;
    for g in &report.gaps {
        let h = &g.histogram;
        for (k, &count) in h.counts.iter().enumerate() {
            let lo = h.lo + k as f64 * h.width;
            w.serialize(BinRow { first: &g.first, second: &g.second, bin: k, lo, hi: lo + h.width, count })?;
        }
    }
    w.flush()?;

    if let Some(trajs) = &report.trajectories {
        for (stats, runs) in report.policies.iter().zip(trajs) {
            let mut w = csv::Writer::from_path(dir.join(format!("trajectories_{}.csv", stats.name)))?;
            for (s, tr) in runs.iter().enumerate() {
                for (t, x) in tr.states.iter().enumerate() {
                    w.serialize(TrajRow {
                        scenario: s,
                        t,
                        b: x.b,
                        h: x.h,
                        theta_w: x.theta_w,
                        theta_i: x.theta_i,
                        f_ne: tr.recourse.get(t).map(|r| r.f_ne),
                    })?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}
