use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use microgrid_core::assess::write_report;
use microgrid_core::config::{ConfigError, RunConfig};
use microgrid_core::pipeline::{self, PipelineError};
use microgrid_core::policies::ValueFunctions;
use microgrid_core::scenarios::{load_scenarios, save_scenarios, ScenarioError, ScenarioSet, Unlabeled};

/// Microgrid energy management: scenario generation, SDDP training and
/// out-of-sample comparison of SDDP, MPC and a rule-based heuristic.
#[derive(Parser)]
#[command(name = "microgrid", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenarios.
    Generate,
    /// Train SDDP cuts on the optimization scenarios.
    Train {
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        cuts_out: Option<PathBuf>,
    },
    /// Assess all policies on the held-out scenarios.
    Assess {
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        cuts: Option<PathBuf>,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Generate, split, fit, quantize, train and assess in one go.
    Bench,
}

/// A required input file does not exist.
#[derive(Debug)]
struct MissingFile(PathBuf);

impl std::fmt::Display for MissingFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "file not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingFile {}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(MissingFile(path.to_path_buf()).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_name: &'a str,
    config_sha256: String,
    tool_version: &'static str,
    seeds: Seeds,
    threads: usize,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Seeds {
    generator: u64,
    sddp: u64,
    split: u64,
}

fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_json().as_bytes()))
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, outputs: &[&Path]) -> Result<()> {
    let m = Manifest {
        command,
        config_name: &cfg.name,
        config_sha256: config_hash(cfg),
        tool_version: env!("CARGO_PKG_VERSION"),
        seeds: Seeds { generator: cfg.seed, sddp: cfg.sddp.seed, split: cfg.assessment.seed },
        threads: rayon::current_num_threads(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let Some(path) = &common.config else {
        bail!("--config is required");
    };
    require(path)?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.paths.out_dir.as_ref().map(|p| cfg.resolve_path(p)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Scenarios from the flag, then from the config, otherwise generated.
fn scenarios(flag: Option<&PathBuf>, cfg: &RunConfig) -> Result<ScenarioSet<Unlabeled>> {
    let path = flag.cloned().or_else(|| cfg.paths.scenarios.as_ref().map(|p| cfg.resolve_path(p)));
    match path {
        Some(p) => {
            require(&p)?;
            info!("reading scenarios from {}", p.display());
            Ok(load_scenarios(&p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => Ok(pipeline::generate(cfg)?),
    }
}

fn cmd_generate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);
    fs::create_dir_all(&dir)?;
    let all = pipeline::generate(&cfg)?;
    let path = dir.join("scenarios.csv");
    save_scenarios(&all, &path)?;
    info!("wrote {} scenarios to {}", all.len(), path.display());
    write_manifest(&dir, "generate", &cfg, &[&path])
}

fn cmd_train(common: &Common, scen: Option<&PathBuf>, cuts_out: Option<&PathBuf>) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);
    fs::create_dir_all(&dir)?;
    let all = scenarios(scen, &cfg)?;
    let (opt, _) = pipeline::split(&cfg, all)?;
    let models = pipeline::build_models(&cfg, &opt)?;
    let (vf, log) = pipeline::train(&cfg, &models)?;
    let cuts_path = cuts_out.cloned().unwrap_or_else(|| dir.join("cuts.json"));
    if let Some(parent) = cuts_path.parent() {
        fs::create_dir_all(parent)?;
    }
    vf.save(&cuts_path).with_context(|| format!("writing {}", cuts_path.display()))?;
    let log_path = dir.join("training_log.csv");
    log.write_csv(&log_path)?;
    write_manifest(&dir, "train", &cfg, &[&cuts_path, &log_path])
}

fn cmd_assess(
    common: &Common,
    scen: Option<&PathBuf>,
    cuts: Option<&PathBuf>,
    report_out: Option<&PathBuf>,
) -> Result<()> {
    let cfg = load_config(common)?;
    let cuts_path = cuts
        .cloned()
        .or_else(|| cfg.paths.cuts.as_ref().map(|p| cfg.resolve_path(p)))
        .context("no cuts given (--cuts or paths.cuts)")?;
    require(&cuts_path)?;
    let vf = ValueFunctions::load(&cuts_path).with_context(|| format!("reading {}", cuts_path.display()))?;
    let all = scenarios(scen, &cfg)?;
    let (opt, asm) = pipeline::split(&cfg, all)?;
    let models = pipeline::build_models(&cfg, &opt)?;
    let policies = pipeline::build_policies(&cfg, &models, vf)?;
    let start = Instant::now();
    let report = pipeline::assess(&cfg, &policies, &asm)?;
    info!("assessed {} scenarios in {:.1?}", asm.len(), start.elapsed());
    let dir = report_out.cloned().unwrap_or_else(|| out_dir(common, &cfg));
    write_report(&report, &dir)?;
    print_summary(&report);
    write_manifest(&dir, "assess", &cfg, &[&dir.join("report.json")])
}

fn cmd_bench(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);
    fs::create_dir_all(&dir)?;
    let all = scenarios(None, &cfg)?;
    let scen_path = dir.join("scenarios.csv");
    save_scenarios(&all, &scen_path)?;
    let out = pipeline::bench(&cfg, all)?;
    let cuts_path = dir.join("cuts.json");
    out.value_functions.save(&cuts_path)?;
    let log_path = dir.join("training_log.csv");
    out.log.write_csv(&log_path)?;
    write_report(&out.report, &dir)?;
    print_summary(&out.report);
    let report_path = dir.join("report.json");
    write_manifest(&dir, "bench", &cfg, &[&scen_path, &cuts_path, &log_path, &report_path])
}

fn print_summary(report: &microgrid_core::assess::AssessmentReport) {
    println!("{:<10} {:>10} {:>10} {:>10} {:>12}", "policy", "mean €", "std", "ci95", "ms/step");
    for s in &report.policies {
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>12.3}",
            s.name,
            s.summary.mean,
            s.summary.std,
            s.summary.ci95,
            1e3 * s.mean_decision_s
        );
    }
    for g in &report.gaps {
        println!(
            "{} - {}: mean gap {:.4} ± {:.4}, {} cheaper on {:.1}% of scenarios",
            g.first,
            g.second,
            g.summary.mean,
            g.summary.ci95,
            g.first,
            100.0 * g.win_fraction
        );
    }
}

fn is_missing_file(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        if e.is::<MissingFile>() {
            return true;
        }
        if let Some(ConfigError::Missing(_)) = e.downcast_ref::<ConfigError>() {
            return true;
        }
        if let Some(PipelineError::Config(ConfigError::Missing(_))) = e.downcast_ref::<PipelineError>() {
            return true;
        }
        if let Some(ScenarioError::Io { source, .. }) = e.downcast_ref::<ScenarioError>() {
            return source.kind() == std::io::ErrorKind::NotFound;
        }
        e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::NotFound)
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Generate => cmd_generate(&cli.common),
        Command::Train { scenarios, cuts_out } => cmd_train(&cli.common, scenarios.as_ref(), cuts_out.as_ref()),
        Command::Assess { scenarios, cuts, report_out } => {
            cmd_assess(&cli.common, scenarios.as_ref(), cuts.as_ref(), report_out.as_ref())
        }
        Command::Bench => cmd_bench(&cli.common),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MICROGRID_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_missing_file(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
