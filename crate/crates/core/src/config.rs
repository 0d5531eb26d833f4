//! Run configuration: system parameters, scenario generator, solver knobs
//! and file locations, read from JSON.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{hour_of_day, setpoint_series, tariff_series, State, SystemParams, TankConversion, R6C2};
use crate::policies::heuristic::DEFAULT_MARGIN;
use crate::policies::StoppingRule;
use crate::scenarios::GeneratorConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
    #[error("file not found: {0}")]
    Missing(PathBuf),
}

fn field_err(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), reason: reason.into() }
}

/// A per-step series of length `T + 1`, given inline, as a rule or as a
/// CSV file (header row, first column used).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Values(Vec<f64>),
    Constant {
        constant: f64,
    },
    /// `mean + amplitude · cos(2π (hour - peak_hour) / 24)`.
    Daily {
        mean: f64,
        amplitude: f64,
        peak_hour: f64,
    },
    Tariff {
        on_peak: f64,
        off_peak: f64,
    },
    Setpoint {
        night: f64,
        day: f64,
    },
    Csv {
        csv: PathBuf,
    },
}

impl Series {
    pub fn resolve(&self, field: &str, steps: usize, delta: f64, base: &Path) -> Result<Vec<f64>, ConfigError> {
        let n = steps + 1;
        let v = match self {
            Series::Values(v) => v.clone(),
            Series::Constant { constant } => vec![*constant; n],
            Series::Daily { mean, amplitude, peak_hour } => (0..n)
                .map(|t| mean + amplitude * (2.0 * PI * (hour_of_day(t, delta) - peak_hour) / 24.0).cos())
                .collect(),
            Series::Tariff { on_peak, off_peak } => tariff_series(steps, delta, *on_peak, *off_peak),
            Series::Setpoint { night, day } => setpoint_series(steps, delta, *night, *day),
            Series::Csv { csv } => read_series_csv(field, &base.join(csv))?,
        };
        if v.len() != n {
            return Err(field_err(field, format!("expected {n} values, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(field_err(field, "contains non-finite values"));
        }
        Ok(v)
    }

    fn file(&self) -> Option<&Path> {
        match self {
            Series::Csv { csv } => Some(csv),
            _ => None,
        }
    }
}

fn read_series_csv(field: &str, path: &Path) -> Result<Vec<f64>, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::Missing(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| field_err(field, e.to_string()))?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| field_err(field, e.to_string()))?;
        let cell = rec.get(0).unwrap_or("").trim();
        let v: f64 = cell
            .parse()
            .map_err(|_| field_err(field, format!("{}: line {}: bad number {cell:?}", path.display(), k + 2)))?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub delta: f64,
    pub horizon_steps: usize,
    pub rho_c: f64,
    pub rho_d: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub f_b_max: f64,
    /// Tank capacity in kWh; derived from `tank` when absent.
    pub h_max: Option<f64>,
    pub tank: TankConversion,
    pub f_h_max: f64,
    pub f_t_max: f64,
    pub beta_h: f64,
    pub r6c2: R6C2,
    pub theta_o: Series,
    pub p_int: Series,
    pub p_ext: Series,
    pub pi_e: Series,
    pub pi_d: Series,
    pub theta_set: Series,
    pub kappa: f64,
    pub pi_hw_shortfall: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::default();
        SystemSection {
            delta: p.delta,
            horizon_steps: p.horizon_steps,
            rho_c: p.rho_c,
            rho_d: p.rho_d,
            b_min: p.b_min,
            b_max: p.b_max,
            f_b_max: p.f_b_max,
            h_max: None,
            tank: TankConversion::default(),
            f_h_max: p.f_h_max,
            f_t_max: p.f_t_max,
            beta_h: p.beta_h,
            r6c2: p.r6c2,
            theta_o: Series::Constant { constant: 10.0 },
            p_int: Series::Constant { constant: 0.0 },
            p_ext: Series::Constant { constant: 0.0 },
            pi_e: Series::Tariff { on_peak: 0.18, off_peak: 0.13 },
            pi_d: Series::Constant { constant: 0.1 },
            theta_set: Series::Setpoint { night: 16.0, day: 20.0 },
            kappa: p.kappa,
            pi_hw_shortfall: p.pi_hw_shortfall,
        }
    }
}

impl SystemSection {
    pub fn to_params(&self, base: &Path) -> Result<SystemParams, ConfigError> {
        let (n, d) = (self.horizon_steps, self.delta);
        if !(d.is_finite() && d > 0.0) {
            return Err(field_err("system.delta", "must be positive"));
        }
        let series = |name: &str, s: &Series| s.resolve(&format!("system.{name}"), n, d, base);
        let p = SystemParams {
            delta: d,
            horizon_steps: n,
            rho_c: self.rho_c,
            rho_d: self.rho_d,
            b_min: self.b_min,
            b_max: self.b_max,
            f_b_max: self.f_b_max,
            h_max: self.h_max.unwrap_or_else(|| self.tank.h_max()),
            f_h_max: self.f_h_max,
            f_t_max: self.f_t_max,
            beta_h: self.beta_h,
            r6c2: self.r6c2,
            theta_o: series("theta_o", &self.theta_o)?,
            p_int: series("p_int", &self.p_int)?,
            p_ext: series("p_ext", &self.p_ext)?,
            pi_e: series("pi_e", &self.pi_e)?,
            pi_d: series("pi_d", &self.pi_d)?,
            theta_set: series("theta_set", &self.theta_set)?,
            kappa: self.kappa,
            pi_hw_shortfall: self.pi_hw_shortfall,
        };
        p.validate().map_err(|e| match e {
            crate::model::ModelError::InvalidParams { field, reason } => field_err(format!("system.{field}"), reason),
            other => field_err("system", other.to_string()),
        })?;
        Ok(p)
    }

    fn series(&self) -> [(&'static str, &Series); 6] {
        [
            ("theta_o", &self.theta_o),
            ("p_int", &self.p_int),
            ("p_ext", &self.p_ext),
            ("pi_e", &self.pi_e),
            ("pi_d", &self.pi_d),
            ("theta_set", &self.theta_set),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SddpSection {
    /// Quantization points per stage for training.
    #[serde(rename = "S_offline")]
    pub s_offline: usize,
    /// Quantization points per stage for the online lookahead.
    #[serde(rename = "S_online")]
    pub s_online: usize,
    pub max_iters: usize,
    pub lb_tol: f64,
    pub stall_iters: usize,
    pub seed: u64,
    pub lloyd_tol: f64,
    pub lloyd_max_iter: usize,
}

impl Default for SddpSection {
    fn default() -> Self {
        let stop = StoppingRule::default();
        SddpSection {
            s_offline: 20,
            s_online: 20,
            max_iters: stop.max_iters,
            lb_tol: stop.lb_rel_tol,
            stall_iters: stop.stall_iters,
            seed: 0,
            lloyd_tol: 1e-6,
            lloyd_max_iter: 200,
        }
    }
}

impl SddpSection {
    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule { max_iters: self.max_iters, lb_rel_tol: self.lb_tol, stall_iters: self.stall_iters }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSection {
    pub enabled: bool,
}

impl Default for MpcSection {
    fn default() -> Self {
        MpcSection { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicSection {
    pub margin_deg_c: f64,
}

impl Default for HeuristicSection {
    fn default() -> Self {
        HeuristicSection { margin_deg_c: DEFAULT_MARGIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessmentSection {
    pub n_opt: usize,
    pub n_sim: usize,
    /// Seed of the optimization/assessment split.
    pub seed: u64,
    pub record_trajectories: bool,
}

impl Default for AssessmentSection {
    fn default() -> Self {
        AssessmentSection { n_opt: 1000, n_sim: 1000, seed: 0, record_trajectories: false }
    }
}

/// Relative paths are taken from the directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Scenario CSV to use instead of generating.
    pub scenarios: Option<PathBuf>,
    pub cuts: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Seed of the scenario generator.
    pub seed: u64,
    pub initial_state: State,
    pub system: SystemSection,
    pub generator: GeneratorConfig,
    pub sddp: SddpSection,
    pub mpc: MpcSection,
    pub heuristic: HeuristicSection,
    pub assessment: AssessmentSection,
    pub paths: PathsSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: String::new(),
            seed: 0,
            initial_state: State::new(2.0, 3.0, 18.0, 19.0),
            system: SystemSection::default(),
            generator: GeneratorConfig::default(),
            sddp: SddpSection::default(),
            mpc: MpcSection::default(),
            heuristic: HeuristicSection::default(),
            assessment: AssessmentSection::default(),
            paths: PathsSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, serde_json::Error> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            return Err(ConfigError::Missing(path.to_path_buf()));
        }
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    /// Overrides every seed of the run.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sddp.seed = seed;
        self.assessment.seed = seed;
    }

    pub fn params(&self) -> Result<SystemParams, ConfigError> {
        self.system.to_params(&self.base_dir)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.params()?;
        self.generator.validate().map_err(|e| field_err("generator", e.to_string()))?;
        if !self.initial_state.within_bounds(&p, 0.0) {
            return Err(field_err("initial_state", "battery or tank outside bounds"));
        }
        let s = &self.sddp;
        if s.s_offline == 0 || s.s_online == 0 {
            return Err(field_err("sddp.S_offline/S_online", "must be at least 1"));
        }
        if s.max_iters == 0 {
            return Err(field_err("sddp.max_iters", "must be at least 1"));
        }
        if !(s.lb_tol.is_finite() && s.lb_tol >= 0.0) {
            return Err(field_err("sddp.lb_tol", "must be finite and nonnegative"));
        }
        if !(s.lloyd_tol.is_finite() && s.lloyd_tol >= 0.0) || s.lloyd_max_iter == 0 {
            return Err(field_err("sddp.lloyd_tol/lloyd_max_iter", "need lloyd_tol >= 0 and lloyd_max_iter >= 1"));
        }
        if !(self.heuristic.margin_deg_c.is_finite() && self.heuristic.margin_deg_c >= 0.0) {
            return Err(field_err("heuristic.margin_deg_c", "must be finite and nonnegative"));
        }
        let a = &self.assessment;
        if a.n_opt < 2 {
            return Err(field_err("assessment.n_opt", "must be at least 2"));
        }
        if a.n_sim < 2 {
            return Err(field_err("assessment.n_sim", "must be at least 2"));
        }
        for (name, s) in self.system.series() {
            if let Some(f) = s.file() {
                let f = self.resolve_path(f);
                if !f.exists() {
                    return Err(field_err(format!("system.{name}"), format!("file not found: {}", f.display())));
                }
            }
        }
        for (name, f) in [("paths.scenarios", &self.paths.scenarios), ("paths.cuts", &self.paths.cuts)] {
            if let Some(f) = f {
                let f = self.resolve_path(f);
                if !f.exists() {
                    return Err(field_err(name, format!("file not found: {}", f.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = RunConfig::from_json("{}", Path::new(".")).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.params().unwrap(), SystemParams::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "name": "x",
            "system": { "horizon_steps": 4, "theta_o": [1, 2, 3, 4, 5],
                        "p_ext": { "mean": 0.1, "amplitude": 0.1, "peak_hour": 13 } },
            "sddp": { "S_offline": 3, "S_online": 5, "seed": 18446744073709551615 }
        }"#;
        let cfg = RunConfig::from_json(text, Path::new(".")).unwrap();
        assert_eq!(cfg.sddp.seed, u64::MAX);
        let again = RunConfig::from_json(&cfg.to_json(), Path::new(".")).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_json(), cfg.to_json());
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(RunConfig::from_json(r#"{"sddp": {"iters": 3}}"#, Path::new(".")).is_err());
    }

    #[test]
    fn wrong_series_length_names_field() {
        let cfg = RunConfig::from_json(r#"{"system": {"pi_d": [1, 2]}}"#, Path::new(".")).unwrap();
        match cfg.validate() {
            Err(ConfigError::Field { field, .. }) => assert_eq!(field, "system.pi_d"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn daily_profile_peaks_at_given_hour() {
        let s = Series::Daily { mean: 10.0, amplitude: 3.0, peak_hour: 15.0 };
        let v = s.resolve("t", 96, 0.25, Path::new(".")).unwrap();
        assert!((v[60] - 13.0).abs() < 1e-12);
        assert!((v[12] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn csv_series() {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<String> = (0..5).map(|k| format!("{}", k as f64 * 0.5)).collect();
        std::fs::write(dir.path().join("t.csv"), format!("theta\n{}\n", vals.join("\n"))).unwrap();
        let text = r#"{"system": {"horizon_steps": 4, "theta_o": {"csv": "t.csv"}}}"#;
        let cfg = RunConfig::from_json(text, dir.path()).unwrap();
        assert_eq!(cfg.params().unwrap().theta_o, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let missing = RunConfig::from_json(r#"{"system": {"theta_o": {"csv": "nope.csv"}}}"#, dir.path()).unwrap();
        assert!(missing.validate().is_err());
    }
}
