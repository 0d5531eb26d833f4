//! The offline/online workflow driven by a [`RunConfig`]: generate, split,
//! fit and quantize, train, then assess.

use std::sync::Arc;

use log::info;
use thiserror::Error;

use crate::assess::{run_assessment, AssessError, AssessOptions, AssessmentReport};
use crate::config::{ConfigError, RunConfig};
use crate::model::{State, SystemParams, Uncertainty};
use crate::policies::{sddp_train, Heuristic, Mpc, Policy, PolicyError, SddpPolicy, TrainingLog, ValueFunctions};
use crate::scenarios::{
    fit_ar, generate_scenarios, quantize_stagewise, split_scenarios, ArModel, Assessment, DiscreteDistribution,
    Optimization, ScenarioError, ScenarioSet, Unlabeled,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Assess(#[from] AssessError),
    #[error("{0}")]
    Input(String),
}

/// Generates `n_opt + n_sim` scenarios from the configured generator.
pub fn generate(cfg: &RunConfig) -> Result<ScenarioSet<Unlabeled>, PipelineError> {
    let p = cfg.params()?;
    let n = cfg.assessment.n_opt + cfg.assessment.n_sim;
    Ok(generate_scenarios(&cfg.generator, p.horizon_steps, p.delta, n, cfg.seed)?)
}

/// Splits a scenario set according to the config. Extra assessment
/// scenarios beyond `n_sim` are dropped.
pub fn split(
    cfg: &RunConfig,
    all: ScenarioSet<Unlabeled>,
) -> Result<(ScenarioSet<Optimization>, ScenarioSet<Assessment>), PipelineError> {
    let p = cfg.params()?;
    if all.horizon() != Some(p.horizon_steps) {
        return Err(PipelineError::Input(format!(
            "scenarios have horizon {:?}, the system {}",
            all.horizon(),
            p.horizon_steps
        )));
    }
    let (opt, asm) = split_scenarios(all, cfg.assessment.n_opt, cfg.assessment.seed)?;
    let n_sim = cfg.assessment.n_sim.min(asm.len());
    Ok((opt, asm.truncated(n_sim)))
}

/// Statistical models built from the optimization scenarios only.
#[derive(Debug, Clone)]
pub struct Models {
    pub ar: ArModel,
    pub means: Vec<Uncertainty>,
    pub offline: Vec<DiscreteDistribution>,
    pub online: Vec<DiscreteDistribution>,
}

pub fn build_models(cfg: &RunConfig, opt: &ScenarioSet<Optimization>) -> Result<Models, PipelineError> {
    let s = &cfg.sddp;
    let ar = fit_ar(opt)?;
    let offline = quantize_stagewise(opt, s.s_offline, s.lloyd_tol, s.lloyd_max_iter, s.seed)?;
    let online = if s.s_online == s.s_offline {
        offline.clone()
    } else {
        quantize_stagewise(opt, s.s_online, s.lloyd_tol, s.lloyd_max_iter, s.seed.wrapping_add(1))?
    };
    Ok(Models { ar, means: opt.means(), offline, online })
}

pub fn train(cfg: &RunConfig, models: &Models) -> Result<(ValueFunctions, TrainingLog), PipelineError> {
    let p = cfg.params()?;
    let (vf, log) =
        sddp_train(&p, &models.offline, &cfg.initial_state, &cfg.sddp.stopping_rule(), cfg.sddp.seed)?;
    if let Some(r) = log.records.last() {
        info!("trained {} iterations, lower bound {:.6}, {} cuts", r.iteration, r.lower_bound, r.cuts);
    }
    Ok((vf, log))
}

/// SDDP, then MPC when enabled, then the heuristic.
pub fn build_policies(
    cfg: &RunConfig,
    models: &Models,
    vf: ValueFunctions,
) -> Result<Vec<Box<dyn Policy>>, PipelineError> {
    let p = Arc::new(cfg.params()?);
    let x0 = cfg.initial_state;
    if vf.horizon() != p.horizon_steps {
        return Err(PipelineError::Input(format!(
            "cuts cover {} stages, the system {}",
            vf.horizon(),
            p.horizon_steps
        )));
    }
    let mut out: Vec<Box<dyn Policy>> = vec![Box::new(SddpPolicy::new(p.clone(), Arc::new(vf), &models.online, &x0)?)];
    if cfg.mpc.enabled {
        out.push(Box::new(Mpc::new(p.clone(), Arc::new(models.ar.clone()), Arc::new(models.means.clone()), x0)?));
    }
    out.push(Box::new(Heuristic::new(p, &x0, cfg.heuristic.margin_deg_c)));
    Ok(out)
}

pub fn assess(
    cfg: &RunConfig,
    policies: &[Box<dyn Policy>],
    asm: &ScenarioSet<Assessment>,
) -> Result<AssessmentReport, PipelineError> {
    let p: SystemParams = cfg.params()?;
    let x0: State = cfg.initial_state;
    let opts = AssessOptions { record_trajectories: cfg.assessment.record_trajectories };
    Ok(run_assessment(policies, asm, &x0, &p, opts)?)
}

/// Everything a full run produces.
pub struct BenchOutput {
    pub value_functions: ValueFunctions,
    pub log: TrainingLog,
    pub report: AssessmentReport,
}

pub fn bench(cfg: &RunConfig, all: ScenarioSet<Unlabeled>) -> Result<BenchOutput, PipelineError> {
    let (opt, asm) = split(cfg, all)?;
    info!("{} optimization / {} assessment scenarios", opt.len(), asm.len());
    let models = build_models(cfg, &opt)?;
    let (vf, log) = train(cfg, &models)?;
    let policies = build_policies(cfg, &models, vf.clone())?;
    let report = assess(cfg, &policies, &asm)?;
    Ok(BenchOutput { value_functions: vf, log, report })
}
