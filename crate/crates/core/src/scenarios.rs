//! Uncertainty scenarios: synthetic generation, CSV exchange, AR(1)
//! forecasting and Lloyd-Max quantization into stagewise discrete laws.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::marker::PhantomData;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{hour_of_day, Uncertainty};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("inconsistent scenario set: {0}")]
    Shape(String),
    #[error("{0}")]
    Input(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Marker for scenarios whose role has not been decided yet.
#[derive(Debug, Clone, Copy)]
pub struct Unlabeled;
/// Marker for scenarios used to build statistical models and train policies.
#[derive(Debug, Clone, Copy)]
pub struct Optimization;
/// Marker for held-out scenarios used only to evaluate policies.
#[derive(Debug, Clone, Copy)]
pub struct Assessment;

/// Scenarios of equal length `T + 1`. The type parameter records what the
/// set may be used for.
#[derive(Debug, Clone)]
pub struct ScenarioSet<L = Unlabeled> {
    data: Vec<Vec<Uncertainty>>,
    _label: PhantomData<L>,
}

impl<L> PartialEq for ScenarioSet<L> {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl<L> ScenarioSet<L> {
    fn wrap(data: Vec<Vec<Uncertainty>>) -> Self {
        ScenarioSet { data, _label: PhantomData }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of transitions `T`, if the set is non-empty.
    pub fn horizon(&self) -> Option<usize> {
        self.data.first().map(|s| s.len() - 1)
    }

    pub fn scenarios(&self) -> &[Vec<Uncertainty>] {
        &self.data
    }

    pub fn get(&self, i: usize) -> &[Uncertainty] {
        &self.data[i]
    }

    /// Drops the label.
    pub fn unlabeled(self) -> ScenarioSet<Unlabeled> {
        ScenarioSet::wrap(self.data)
    }

    /// Keeps the first `n` scenarios.
    pub fn truncated(mut self, n: usize) -> Self {
        self.data.truncate(n);
        self
    }

    /// Per-step sample mean, length `T + 1`.
    pub fn means(&self) -> Vec<Uncertainty> {
        let Some(t1) = self.data.first().map(|s| s.len()) else {
            return Vec::new();
        };
        let n = self.data.len() as f64;
        (0..t1)
            .map(|t| {
                let (mut e, mut h) = (0.0, 0.0);
                for s in &self.data {
                    e += s[t].d_el_net;
                    h += s[t].d_hw;
                }
                Uncertainty::new(e / n, h / n)
            })
            .collect()
    }
}

impl ScenarioSet<Unlabeled> {
    pub fn new(data: Vec<Vec<Uncertainty>>) -> Result<Self, ScenarioError> {
        if let Some(first) = data.first() {
            if first.len() < 2 {
                return Err(ScenarioError::Shape("scenarios need at least two steps".into()));
            }
            for (i, s) in data.iter().enumerate() {
                if s.len() != first.len() {
                    return Err(ScenarioError::Shape(format!(
                        "scenario {i} has {} steps, expected {}",
                        s.len(),
                        first.len()
                    )));
                }
                if let Some(t) = s.iter().position(|w| !w.is_valid()) {
                    return Err(ScenarioError::Shape(format!(
                        "scenario {i} step {t}: non-finite value or negative hot-water demand"
                    )));
                }
            }
        }
        Ok(Self::wrap(data))
    }

    /// Declares the whole set as optimization data (statistics and training).
    pub fn into_optimization(self) -> ScenarioSet<Optimization> {
        ScenarioSet::wrap(self.data)
    }

    /// Declares the whole set as held-out assessment data.
    pub fn into_assessment(self) -> ScenarioSet<Assessment> {
        ScenarioSet::wrap(self.data)
    }
}

/// Disjoint split after a seeded shuffle: the first `n_opt` shuffled
/// scenarios become optimization data, the rest assessment data.
pub fn split_scenarios(
    all: ScenarioSet<Unlabeled>,
    n_opt: usize,
    seed: u64,
) -> Result<(ScenarioSet<Optimization>, ScenarioSet<Assessment>), ScenarioError> {
    if n_opt >= all.len() {
        return Err(ScenarioError::Input(format!(
            "n_opt = {n_opt} must be smaller than the number of scenarios ({})",
            all.len()
        )));
    }
    let mut idx: Vec<usize> = (0..all.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let mut slots: Vec<Option<Vec<Uncertainty>>> = all.data.into_iter().map(Some).collect();
    let mut take = |i: usize| slots[i].take().expect("index used once");
    let opt = idx[..n_opt].iter().map(|&i| take(i)).collect();
    let assess = idx[n_opt..].iter().map(|&i| take(i)).collect();
    Ok((ScenarioSet::wrap(opt), ScenarioSet::wrap(assess)))
}

/// Synthetic household day. Demands are in kW, PV energy in kWh per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub base_load_kw: f64,
    pub midday_peak_kw: f64,
    pub evening_peak_kw: f64,
    /// Std of the Gaussian jitter on peak times, hours.
    pub peak_jitter_h: f64,
    /// Relative spread of peak amplitudes across scenarios.
    pub amplitude_spread: f64,
    /// Relative per-step noise on the demand.
    pub step_noise: f64,
    /// Mean number of appliance spikes per hour between 07:00 and 23:00.
    pub spike_rate_per_h: f64,
    pub spike_kw: f64,
    /// Clear-sky PV energy over the day.
    pub pv_daily_kwh: f64,
    pub pv_sunrise_h: f64,
    pub pv_sunset_h: f64,
    /// Largest fraction of PV lost to clouds, in [0, 1].
    pub cloud_variability: f64,
    /// Energy drawn by one shower.
    pub hw_shower_kwh: f64,
    pub hw_morning_draws: f64,
    pub hw_evening_draws: f64,
    /// Small daytime draws (sink, kitchen).
    pub hw_base_kw: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            base_load_kw: 0.1,
            midday_peak_kw: 1.2,
            evening_peak_kw: 1.6,
            peak_jitter_h: 0.4,
            amplitude_spread: 0.3,
            step_noise: 0.15,
            spike_rate_per_h: 0.25,
            spike_kw: 1.5,
            pv_daily_kwh: 8.4,
            pv_sunrise_h: 8.0,
            pv_sunset_h: 17.5,
            cloud_variability: 0.6,
            hw_shower_kwh: 1.5,
            hw_morning_draws: 1.2,
            hw_evening_draws: 1.0,
            hw_base_kw: 0.05,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fields = [
            ("base_load_kw", self.base_load_kw),
            ("midday_peak_kw", self.midday_peak_kw),
            ("evening_peak_kw", self.evening_peak_kw),
            ("peak_jitter_h", self.peak_jitter_h),
            ("amplitude_spread", self.amplitude_spread),
            ("step_noise", self.step_noise),
            ("spike_rate_per_h", self.spike_rate_per_h),
            ("spike_kw", self.spike_kw),
            ("pv_daily_kwh", self.pv_daily_kwh),
            ("cloud_variability", self.cloud_variability),
            ("hw_shower_kwh", self.hw_shower_kwh),
            ("hw_morning_draws", self.hw_morning_draws),
            ("hw_evening_draws", self.hw_evening_draws),
            ("hw_base_kw", self.hw_base_kw),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ScenarioError::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.cloud_variability > 1.0 {
            return Err(ScenarioError::Config("cloud_variability must be at most 1".into()));
        }
        if !(self.pv_sunrise_h >= 0.0 && self.pv_sunrise_h < self.pv_sunset_h && self.pv_sunset_h <= 24.0) {
            return Err(ScenarioError::Config("need 0 <= pv_sunrise_h < pv_sunset_h <= 24".into()));
        }
        Ok(())
    }
}

/// Raw components of one generated day, each of length `T + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDay {
    pub demand: Vec<f64>,
    pub pv: Vec<f64>,
    pub hot_water: Vec<f64>,
}

impl GeneratedDay {
    pub fn to_uncertainties(&self) -> Vec<Uncertainty> {
        (0..self.demand.len())
            .map(|t| Uncertainty::new(self.demand[t] - self.pv[t], self.hot_water[t]))
            .collect()
    }
}

fn bump(hr: f64, center: f64, width: f64) -> f64 {
    let z = (hr - center) / width;
    (-0.5 * z * z).exp()
}

/// Unit-energy PV shape (integrates to one over the day, per hour).
fn pv_shape(hr: f64, sunrise: f64, sunset: f64) -> f64 {
    if hr <= sunrise || hr >= sunset {
        return 0.0;
    }
    let len = sunset - sunrise;
    let s = (std::f64::consts::PI * (hr - sunrise) / len).sin();
    s * s * 2.0 / len
}

fn lognormal_factor(rng: &mut ChaCha8Rng, spread: f64) -> f64 {
    if spread == 0.0 {
        return 1.0;
    }
    let n = Normal::new(-0.5 * spread * spread, spread).expect("spread is finite");
    n.sample(rng).exp()
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    d as usize
}

/// One day drawn from the scenario's own random stream.
pub fn generate_day(cfg: &GeneratorConfig, steps: usize, delta: f64, seed: u64, index: u64) -> GeneratedDay {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = steps + 1;
    let jitter = Normal::new(0.0, cfg.peak_jitter_h.max(1e-12)).expect("finite jitter");
    let noise = Normal::new(0.0, cfg.step_noise.max(1e-12)).expect("finite noise");

    let mid_amp = cfg.midday_peak_kw * lognormal_factor(&mut rng, cfg.amplitude_spread);
    let eve_amp = cfg.evening_peak_kw * lognormal_factor(&mut rng, cfg.amplitude_spread);
    let mid_at = 12.5 + jitter.sample(&mut rng);
    let eve_at = 20.0 + jitter.sample(&mut rng);

    let mut demand: Vec<f64> = (0..n)
        .map(|t| {
            let hr = hour_of_day(t, delta);
            let shape = cfg.base_load_kw + mid_amp * bump(hr, mid_at, 1.0) + eve_amp * bump(hr, eve_at, 1.2);
            (shape * (1.0 + noise.sample(&mut rng))).max(0.0)
        })
        .collect();

    let active_steps: Vec<usize> = (0..n).filter(|&t| (7.0..23.0).contains(&hour_of_day(t, delta))).collect();
    if !active_steps.is_empty() && cfg.spike_kw > 0.0 {
        let hours = active_steps.len() as f64 * delta;
        for _ in 0..poisson(&mut rng, cfg.spike_rate_per_h * hours) {
            let start = active_steps[rng.random_range(0..active_steps.len())];
            let len = rng.random_range(1..=3usize);
            let kw = cfg.spike_kw * rng.random_range(0.5..1.5);
            for d in demand.iter_mut().skip(start).take(len) {
                *d += kw;
            }
        }
    }

    let clear = 1.0 - cfg.cloud_variability * rng.random::<f64>();
    let mut cloud = 0.0;
    let pv = (0..n)
        .map(|t| {
            cloud = 0.8 * cloud + 0.2 * (rng.random::<f64>() - 0.5);
            let hr = hour_of_day(t, delta);
            let factor = (clear + cfg.cloud_variability * cloud).clamp(0.0, 1.0);
            cfg.pv_daily_kwh * pv_shape(hr + 0.5 * delta, cfg.pv_sunrise_h, cfg.pv_sunset_h) * factor
        })
        .collect();

    let mut hot_water: Vec<f64> = (0..n)
        .map(|t| {
            let hr = hour_of_day(t, delta);
            if (7.0..23.0).contains(&hr) {
                cfg.hw_base_kw * rng.random_range(0.0..2.0)
            } else {
                0.0
            }
        })
        .collect();
    let windows = [(6.5, 8.5, cfg.hw_morning_draws), (19.0, 22.0, cfg.hw_evening_draws)];
    for (from, to, mean) in windows {
        let slots: Vec<usize> = (0..n).filter(|&t| (from..to).contains(&hour_of_day(t, delta))).collect();
        if slots.is_empty() {
            continue;
        }
        for _ in 0..poisson(&mut rng, mean) {
            let start = slots[rng.random_range(0..slots.len())];
            let len = ((0.5 / delta).round() as usize).max(1);
            let kw = cfg.hw_shower_kwh * rng.random_range(0.7..1.3) / (len as f64 * delta);
            for d in hot_water.iter_mut().skip(start).take(len) {
                *d += kw;
            }
        }
    }

    GeneratedDay { demand, pv, hot_water }
}

/// `n` independent synthetic days. Scenario `i` only depends on
/// `(cfg, seed, i)`, so sets generated with the same seed share prefixes.
pub fn generate_scenarios(
    cfg: &GeneratorConfig,
    steps: usize,
    delta: f64,
    n: usize,
    seed: u64,
) -> Result<ScenarioSet<Unlabeled>, ScenarioError> {
    cfg.validate()?;
    if n == 0 {
        return Err(ScenarioError::Input("scenario count must be at least 1".into()));
    }
    if steps == 0 || !(delta > 0.0) {
        return Err(ScenarioError::Input("need at least one step of positive length".into()));
    }
    let data = (0..n as u64)
        .into_par_iter()
        .map(|i| generate_day(cfg, steps, delta, seed, i).to_uncertainties())
        .collect();
    ScenarioSet::new(data)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioRow {
    scenario: usize,
    t: usize,
    d_el_net: f64,
    d_hw: f64,
}

pub fn write_scenarios<L, W: Write>(set: &ScenarioSet<L>, out: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "t", "d_el_net", "d_hw"])?;
    for (s, sc) in set.data.iter().enumerate() {
        for (t, u) in sc.iter().enumerate() {
            w.write_record([
                s.to_string(),
                t.to_string(),
                format!("{:.16e}", u.d_el_net),
                format!("{:.16e}", u.d_hw),
            ])?;
        }
    }
    w.flush().map_err(|e| ScenarioError::Io { path: "<writer>".into(), source: e })?;
    Ok(())
}

pub fn read_scenarios<R: Read>(input: R) -> Result<ScenarioSet<Unlabeled>, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let expected = ["scenario", "t", "d_el_net", "d_hw"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(ScenarioError::Parse { line: 1, msg: format!("expected header {}", expected.join(",")) });
    }
    let mut by_scenario: BTreeMap<usize, Vec<Uncertainty>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            ScenarioError::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: ScenarioRow =
            rec.deserialize(Some(&header)).map_err(|e| ScenarioError::Parse { line, msg: e.to_string() })?;
        let w = Uncertainty::new(row.d_el_net, row.d_hw);
        if !w.is_valid() {
            return Err(ScenarioError::Parse { line, msg: "non-finite value or negative d_hw".into() });
        }
        let steps = by_scenario.entry(row.scenario).or_default();
        if row.t != steps.len() {
            return Err(ScenarioError::Parse {
                line,
                msg: format!("scenario {} expected step {}, found {}", row.scenario, steps.len(), row.t),
            });
        }
        steps.push(w);
    }
    if let Some((&last, _)) = by_scenario.iter().next_back() {
        if last + 1 != by_scenario.len() {
            return Err(ScenarioError::Shape("scenario ids must be 0..N without gaps".into()));
        }
    }
    ScenarioSet::new(by_scenario.into_values().collect())
}

pub fn save_scenarios<L>(set: &ScenarioSet<L>, path: &Path) -> Result<(), ScenarioError> {
    let f = File::create(path).map_err(|e| ScenarioError::Io { path: path.display().to_string(), source: e })?;
    write_scenarios(set, std::io::BufWriter::new(f))
}

pub fn load_scenarios(path: &Path) -> Result<ScenarioSet<Unlabeled>, ScenarioError> {
    let f = File::open(path).map_err(|e| ScenarioError::Io { path: path.display().to_string(), source: e })?;
    read_scenarios(std::io::BufReader::new(f))
}

/// Component order used by [`ArModel`] arrays.
pub const EL: usize = 0;
pub const HW: usize = 1;

fn component(w: &Uncertainty, i: usize) -> f64 {
    if i == EL {
        w.d_el_net
    } else {
        w.d_hw
    }
}

/// Per-step AR(1) model `d_{t+1} = alpha_t d_t + beta_t + eps_t` for each
/// of the two uncertainty components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub alpha: Vec<[f64; 2]>,
    pub beta: Vec<[f64; 2]>,
    pub resid_std: Vec<[f64; 2]>,
    /// Steps where the regressor had no variance and the mean was used.
    pub fallback: Vec<[bool; 2]>,
}

impl ArModel {
    pub fn horizon(&self) -> usize {
        self.alpha.len()
    }
}

/// Least-squares fit of `y ≈ a x + b`; `None` when `x` is (numerically) constant.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let scale = 1e-12 * (1.0 + mx.abs());
    if sxx / n <= scale * scale {
        return None;
    }
    let a = sxy / sxx;
    Some((a, my - a * mx))
}

pub fn fit_ar(opt: &ScenarioSet<Optimization>) -> Result<ArModel, ScenarioError> {
    if opt.len() < 2 {
        return Err(ScenarioError::Input("AR fitting needs at least two scenarios".into()));
    }
    let steps = opt.horizon().expect("non-empty");
    let n = opt.len() as f64;
    let mut model = ArModel {
        alpha: vec![[0.0; 2]; steps],
        beta: vec![[0.0; 2]; steps],
        resid_std: vec![[0.0; 2]; steps],
        fallback: vec![[false; 2]; steps],
    };
    for t in 0..steps {
        for i in [EL, HW] {
            let x: Vec<f64> = opt.data.iter().map(|s| component(&s[t], i)).collect();
            let y: Vec<f64> = opt.data.iter().map(|s| component(&s[t + 1], i)).collect();
            let (a, b) = match least_squares(&x, &y) {
                Some(ab) => ab,
                None => {
                    model.fallback[t][i] = true;
                    (0.0, y.iter().sum::<f64>() / n)
                }
            };
            let ssr: f64 = x.iter().zip(&y).map(|(xv, yv)| (yv - a * xv - b).powi(2)).sum();
            model.alpha[t][i] = a;
            model.beta[t][i] = b;
            model.resid_std[t][i] = (ssr / (n - 1.0)).sqrt();
        }
    }
    Ok(model)
}

/// Forecast `(w̄_{t+1}, …, w̄_T)`: one AR step from the observed `w_t`, then
/// the offline per-step means.
pub fn update_forecast(ar: &ArModel, t: usize, w_t: &Uncertainty, means: &[Uncertainty]) -> Vec<Uncertainty> {
    let steps = ar.horizon();
    assert!(t < steps, "forecast requested at t = {t} beyond horizon {steps}");
    let mut out = Vec::with_capacity(steps - t);
    out.push(Uncertainty::new(
        ar.alpha[t][EL] * w_t.d_el_net + ar.beta[t][EL],
        (ar.alpha[t][HW] * w_t.d_hw + ar.beta[t][HW]).max(0.0),
    ));
    for m in &means[t + 2..=steps] {
        out.push(Uncertainty::new(m.d_el_net, m.d_hw.max(0.0)));
    }
    out
}

/// Finite discrete law of the uncertainty at stage `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    pub t: usize,
    pub points: Vec<Uncertainty>,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionJson {
    t: usize,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl Serialize for DiscreteDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DistributionJson {
            t: self.t,
            points: self.points.iter().map(|p| [p.d_el_net, p.d_hw]).collect(),
            weights: self.weights.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = DistributionJson::deserialize(d)?;
        if j.points.len() != j.weights.len() || j.points.is_empty() {
            return Err(serde::de::Error::custom("points and weights must be non-empty and of equal length"));
        }
        Ok(DiscreteDistribution {
            t: j.t,
            points: j.points.iter().map(|p| Uncertainty::new(p[0], p[1])).collect(),
            weights: j.weights,
        })
    }
}

impl DiscreteDistribution {
    pub fn dirac(t: usize, w: Uncertainty) -> Self {
        DiscreteDistribution { t, points: vec![w], weights: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> Uncertainty {
        let mut m = Uncertainty::default();
        for (p, w) in self.points.iter().zip(&self.weights) {
            m.d_el_net += w * p.d_el_net;
            m.d_hw += w * p.d_hw;
        }
        m
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        if self.points.is_empty() || self.points.len() != self.weights.len() {
            return Err(ScenarioError::Shape(format!("stage {}: bad point/weight lengths", self.t)));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(ScenarioError::Shape(format!("stage {}: negative weight", self.t)));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ScenarioError::Shape(format!("stage {}: weights sum to {total}", self.t)));
        }
        Ok(())
    }
}

pub fn save_distributions(dists: &[DiscreteDistribution], path: &Path) -> Result<(), ScenarioError> {
    let f = File::create(path).map_err(|e| ScenarioError::Io { path: path.display().to_string(), source: e })?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), dists)?;
    Ok(())
}

pub fn load_distributions(path: &Path) -> Result<Vec<DiscreteDistribution>, ScenarioError> {
    let f = File::open(path).map_err(|e| ScenarioError::Io { path: path.display().to_string(), source: e })?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// Lloyd-Max output: centroids with their cell frequencies, plus the
/// distortion after every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub distortion: Vec<f64>,
    pub iterations: usize,
    /// Set when fewer cells than requested were returned.
    pub reduced: bool,
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn nearest(p: &[f64; 2], centers: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, dist2(p, &centers[0]));
    for (k, c) in centers.iter().enumerate().skip(1) {
        let d = dist2(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn distinct_points(points: &[[f64; 2]]) -> Vec<([f64; 2], usize)> {
    let mut keyed: BTreeMap<(u64, u64), ([f64; 2], usize)> = BTreeMap::new();
    for p in points {
        // +0.0 and -0.0 are the same point
        let key = ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits());
        keyed.entry(key).or_insert((*p, 0)).1 += 1;
    }
    let mut out: Vec<([f64; 2], usize)> = keyed.into_values().collect();
    out.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
    out
}

fn kmeans_pp(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if r < *di {
                    idx = i;
                    break;
                }
                r -= di;
            }
            if d[idx] == 0.0 {
                idx = d.iter().enumerate().fold(0, |b, (i, v)| if *v > d[b] { i } else { b });
            }
            idx
        } else {
            0
        };
        let c = points[pick];
        for (di, p) in d.iter_mut().zip(points) {
            *di = di.min(dist2(p, &c));
        }
        centers.push(c);
    }
    centers
}

struct Partition {
    assign: Vec<usize>,
    centers: Vec<[f64; 2]>,
    distortion: f64,
}

fn lloyd_iteration(points: &[[f64; 2]], centers: &[[f64; 2]]) -> Partition {
    let k = centers.len();
    let mut assign = Vec::with_capacity(points.len());
    let mut dist = Vec::with_capacity(points.len());
    let mut counts = vec![0usize; k];
    for p in points {
        let (c, d) = nearest(p, centers);
        assign.push(c);
        dist.push(d);
        counts[c] += 1;
    }
    // empty cells take the point farthest from its own centroid
    for e in 0..k {
        if counts[e] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..points.len() {
            if counts[assign[i]] > 1 && far.is_none_or(|f| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        counts[assign[i]] -= 1;
        assign[i] = e;
        counts[e] = 1;
        dist[i] = 0.0;
    }
    let mut sums = vec![[0.0f64; 2]; k];
    for (p, &c) in points.iter().zip(&assign) {
        sums[c][0] += p[0];
        sums[c][1] += p[1];
    }
    let centers: Vec<[f64; 2]> = sums
        .iter()
        .zip(&counts)
        .zip(centers)
        .map(|((s, &n), old)| if n > 0 { [s[0] / n as f64, s[1] / n as f64] } else { *old })
        .collect();
    let distortion =
        points.iter().zip(&assign).map(|(p, &c)| dist2(p, &centers[c])).sum::<f64>() / points.len() as f64;
    Partition { assign, centers, distortion }
}

/// Lloyd-Max quantization of 2-D points into at most `s` cells.
pub fn lloyd_max(
    points: &[[f64; 2]],
    s: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<Quantization, ScenarioError> {
    if points.is_empty() || s == 0 {
        return Err(ScenarioError::Input("quantization needs at least one point and one cell".into()));
    }
    if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(ScenarioError::Input("non-finite point".into()));
    }
    let n = points.len() as f64;
    let distinct = distinct_points(points);
    if distinct.len() <= s {
        return Ok(Quantization {
            points: distinct.iter().map(|(p, _)| *p).collect(),
            weights: distinct.iter().map(|(_, c)| *c as f64 / n).collect(),
            distortion: vec![0.0],
            iterations: 0,
            reduced: distinct.len() < s,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans_pp(points, s, &mut rng);
    let mut current = lloyd_iteration(points, &seeds);
    let mut distortion = vec![current.distortion];
    let mut iterations = 1;
    while iterations < max_iter && current.distortion > 0.0 {
        let next = lloyd_iteration(points, &current.centers);
        iterations += 1;
        if next.distortion > current.distortion {
            break;
        }
        let prev = current.distortion;
        current = next;
        distortion.push(current.distortion);
        if (prev - current.distortion) / prev < tol {
            break;
        }
    }

    let mut cells: BTreeMap<(u64, u64), ([f64; 2], usize)> = BTreeMap::new();
    for (k, c) in current.centers.iter().enumerate() {
        let count = current.assign.iter().filter(|&&a| a == k).count();
        if count == 0 {
            continue;
        }
        let key = ((c[0] + 0.0).to_bits(), (c[1] + 0.0).to_bits());
        cells.entry(key).or_insert((*c, 0)).1 += count;
    }
    let mut cells: Vec<([f64; 2], usize)> = cells.into_values().collect();
    cells.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
    let reduced = cells.len() < s;
    Ok(Quantization {
        points: cells.iter().map(|(p, _)| *p).collect(),
        weights: cells.iter().map(|(_, c)| *c as f64 / n).collect(),
        distortion,
        iterations,
        reduced,
    })
}

fn stage_seed(seed: u64, t: usize) -> u64 {
    seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One discrete law per stage `t = 1..=T` (index `t - 1` in the result).
pub fn quantize_stagewise(
    opt: &ScenarioSet<Optimization>,
    s: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<Vec<DiscreteDistribution>, ScenarioError> {
    let steps = opt.horizon().ok_or_else(|| ScenarioError::Input("empty scenario set".into()))?;
    (1..=steps)
        .into_par_iter()
        .map(|t| {
            let pts: Vec<[f64; 2]> = opt.data.iter().map(|sc| [sc[t].d_el_net, sc[t].d_hw]).collect();
            let q = lloyd_max(&pts, s, tol, max_iter, stage_seed(seed, t))?;
            if q.reduced {
                log::debug!("stage {t}: {} cells instead of {s}", q.points.len());
            }
            Ok(DiscreteDistribution {
                t,
                points: q.points.iter().map(|p| Uncertainty::new(p[0], p[1])).collect(),
                weights: q.weights,
            })
        })
        .collect()
}
