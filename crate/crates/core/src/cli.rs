//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! data and numeric errors. Every output file is written atomically.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{BootstrapError, BootstrapKind, BootstrapSpec};
use crate::debias::{debias, DebiasError};
use crate::distributions::RewardDistribution;
use crate::estimators::{evaluate, parse_estimators, EstimatorError};
use crate::harness::{run_plan, write_results, ExperimentPlan, HarnessError};
use crate::io::{meta_path_for, read_log, write_json, write_log, IoError};
use crate::policies::{ConfigError, PolicySpec};
use crate::simulator::run_experiment;
use crate::theory::{
    bahadur_rao_constants, bootstrap_rate_check, etc_bias_asymptotic, etc_bias_gaussian,
    etc_bias_general, exact_tail, log_bias_g, plug_in_rate_experiment, BootstrapRateReport,
    EtcGaussianParams, LDProfile, PlugInRateRow, TailMoments, TheoryError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DebiasError> for CliError {
    fn from(e: DebiasError) -> Self {
        match e {
            DebiasError::Bootstrap(BootstrapError::InvalidSpec(_)) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::UnknownEstimator(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        match e {
            TheoryError::InvalidParams(_) | TheoryError::Config(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io(io) => io.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bandit-debias",
    version,
    about = "Bootstrap bias correction for bandit experiments"
)]
pub struct Cli {
    /// Worker threads; 0 uses one per core. Never changes numeric output.
    #[arg(
        long,
        global = true,
        env = "BANDIT_DEBIAS_WORKERS",
        default_value_t = 0
    )]
    pub workers: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one bandit experiment and write its log with a metadata sidecar.
    Simulate(SimulateArgs),
    /// Bootstrap-debias the arm means of a logged experiment.
    Debias(DebiasArgs),
    /// Compute sample-mean, IPW and AIPW estimates from a log.
    Evaluate(EvaluateArgs),
    /// Evaluate closed-form ETC biases and large-deviation profiles.
    Theory(TheoryArgs),
    /// Run a replicated experiment plan.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyName {
    Etc,
    Ucb,
    Ts,
    Eg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub policy: PolicyName,
    /// Exploration pulls per arm (etc).
    #[arg(long)]
    pub m: Option<usize>,
    /// Exploration probability (eg).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Prior mean (ts).
    #[arg(long, allow_negative_numbers = true)]
    pub prior_mean: Option<f64>,
    /// Prior variance (ts).
    #[arg(long)]
    pub prior_variance: Option<f64>,
    /// Likelihood variance (ts).
    #[arg(long)]
    pub likelihood_variance: Option<f64>,
    #[arg(long = "K")]
    pub arms_count: usize,
    #[arg(long = "T")]
    pub horizon: usize,
    /// JSON array of reward distributions, one per arm.
    #[arg(long)]
    pub arms: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Log CSV; the sidecar is written next to it as `<stem>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DebiasArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Defaults to `<stem>.meta.json` beside the log.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, default_value = "mb")]
    pub bootstrap: BootstrapKind,
    #[arg(long = "B", default_value_t = 1000)]
    pub replays: usize,
    #[arg(long)]
    pub seed: u64,
    /// Report JSON; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, default_value = "mean,ipw,aipw")]
    pub estimators: String,
    /// Seeds the Monte Carlo propensities of Thompson sampling with K > 2.
    #[arg(long)]
    pub seed: u64,
    /// Include the per-round propensity trace.
    #[arg(long)]
    pub propensities: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// JSON file listing the quantities to evaluate.
    #[arg(long)]
    pub config: PathBuf,
    /// Seeds the ratio experiments.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Plan JSON.
    #[arg(long)]
    pub plan: PathBuf,
    /// Master seed for cells without their own seed.
    #[arg(long)]
    pub seed: u64,
    /// Results directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override every cell's replication count.
    #[arg(long = "R")]
    pub replications: Option<usize>,
    /// Override every cell's bootstrap replay count.
    #[arg(long = "B")]
    pub replays: Option<usize>,
}

/// Two Gaussian arms for the closed-form ETC bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtcGaussianQuery {
    pub mu: [f64; 2],
    pub var: [f64; 2],
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtcGeneralQuery {
    pub arms: [RewardDistribution; 2],
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
}

fn default_multiple() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileQuery {
    pub distribution: RewardDistribution,
    pub mu2: f64,
    #[serde(default)]
    pub m_grid: Vec<usize>,
    /// `T = horizon_multiple · m` for the asymptotic bias.
    #[serde(default = "default_multiple")]
    pub horizon_multiple: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlugInRateQuery {
    pub mu: [f64; 2],
    pub var: [f64; 2],
    pub m_grid: Vec<usize>,
    #[serde(default = "default_multiple")]
    pub horizon_multiple: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapRateQuery {
    pub distribution: RewardDistribution,
    pub mu2: f64,
    pub m_grid: Vec<usize>,
    #[serde(default = "default_multiple")]
    pub horizon_multiple: usize,
    pub replications: usize,
}

/// Contents of the `theory --config` file. Every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default)]
    pub etc_gaussian: Vec<EtcGaussianQuery>,
    #[serde(default)]
    pub etc_general: Vec<EtcGeneralQuery>,
    #[serde(default)]
    pub profiles: Vec<ProfileQuery>,
    #[serde(default)]
    pub plug_in_rates: Vec<PlugInRateQuery>,
    #[serde(default)]
    pub bootstrap_rates: Vec<BootstrapRateQuery>,
}

#[derive(Debug, Serialize)]
struct EtcGaussianOutput {
    #[serde(flatten)]
    query: EtcGaussianQuery,
    bias: [f64; 2],
    /// `ln|bias|`; absent when the bias is exactly zero.
    log_abs_bias: [Option<f64>; 2],
}

#[derive(Debug, Serialize)]
struct EtcGeneralOutput {
    m: usize,
    #[serde(rename = "T")]
    horizon: usize,
    bias: [f64; 2],
}

#[derive(Debug, Serialize)]
struct ProfileRow {
    m: usize,
    #[serde(rename = "T")]
    horizon: usize,
    tail_approximation: f64,
    tail_expectation_scale: f64,
    bias_asymptotic: f64,
    threshold_on_lattice: Option<bool>,
    /// Absent when the law cannot be enumerated.
    exact: Option<TailMoments>,
}

#[derive(Debug, Serialize)]
struct ProfileOutput {
    profile: LDProfile,
    tail_expectation_limit: f64,
    rows: Vec<ProfileRow>,
}

#[derive(Debug, Serialize)]
struct TheoryOutput {
    etc_gaussian: Vec<EtcGaussianOutput>,
    etc_general: Vec<EtcGeneralOutput>,
    profiles: Vec<ProfileOutput>,
    plug_in_rates: Vec<Vec<PlugInRateRow>>,
    bootstrap_rates: Vec<BootstrapRateReport>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Usage(format!("{what} {}: {e}", path.display())))
}

fn check_output_file(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        return Err(CliError::Usage(format!(
            "output {} is a directory",
            path.display()
        )));
    }
    Ok(())
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_json(path, value)?;
            info!("wrote {}", path.display());
        }
        None => {
            let text =
                serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(())
}

fn policy_from(args: &SimulateArgs) -> Result<PolicySpec, CliError> {
    let missing = |flag: &str, name: &str| {
        CliError::Usage(format!("--{flag} is required for --policy {name}"))
    };
    Ok(match args.policy {
        PolicyName::Etc => PolicySpec::Etc {
            m: args.m.ok_or_else(|| missing("m", "etc"))?,
        },
        PolicyName::Ucb => PolicySpec::Ucb,
        PolicyName::Eg => PolicySpec::Eg {
            epsilon: args.epsilon.ok_or_else(|| missing("epsilon", "eg"))?,
        },
        PolicyName::Ts => {
            let PolicySpec::Ts {
                prior_mean,
                prior_variance,
                likelihood_variance,
            } = PolicySpec::thompson()
            else {
                unreachable!()
            };
            PolicySpec::Ts {
                prior_mean: args.prior_mean.unwrap_or(prior_mean),
                prior_variance: args.prior_variance.unwrap_or(prior_variance),
                likelihood_variance: args.likelihood_variance.unwrap_or(likelihood_variance),
            }
        }
    })
}

fn simulate_cmd(args: &SimulateArgs) -> Result<(), CliError> {
    let policy = policy_from(args)?;
    let arms: Vec<RewardDistribution> = read_json(&args.arms, "arms file")?;
    check_output_file(&args.out)?;
    let log = run_experiment(args.arms_count, args.horizon, &policy, &arms, args.seed)?;
    let meta = write_log(&args.out, &log)?;
    info!("wrote {} and {}", args.out.display(), meta.display());
    Ok(())
}

fn load_log(log: &Path, meta: Option<&PathBuf>) -> Result<crate::simulator::BanditLog, CliError> {
    let meta = meta.cloned().unwrap_or_else(|| meta_path_for(log));
    debug!("reading {} with metadata {}", log.display(), meta.display());
    Ok(read_log(log, &meta)?)
}

fn debias_cmd(args: &DebiasArgs) -> Result<(), CliError> {
    let spec = BootstrapSpec::new(args.bootstrap, args.replays)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(out) = &args.out {
        check_output_file(out)?;
    }
    let log = load_log(&args.log, args.meta.as_ref())?;
    let report = debias(&log, &spec, args.seed)?;
    for a in &report.arms {
        if a.zero_pull_replays > 0 {
            log::warn!(
                "arm {}: {} replays never pulled it",
                a.arm,
                a.zero_pull_replays
            );
        }
    }
    emit(args.out.as_deref(), &report)
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), CliError> {
    let kinds = parse_estimators(&args.estimators)?;
    if let Some(out) = &args.out {
        check_output_file(out)?;
    }
    let log = load_log(&args.log, args.meta.as_ref())?;
    let mut set = evaluate(&log, &kinds, Some(args.seed))?;
    if !args.propensities {
        set.propensities = None;
    }
    emit(args.out.as_deref(), &set)
}

fn profile_output(q: &ProfileQuery) -> Result<ProfileOutput, TheoryError> {
    let profile = bahadur_rao_constants(&q.distribution, q.mu2)?;
    let rows = q
        .m_grid
        .iter()
        .map(|&m| {
            let horizon = q.horizon_multiple * m;
            let exact = match exact_tail(&q.distribution, q.mu2, m) {
                Ok(t) => Some(t),
                Err(TheoryError::Enumeration(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(ProfileRow {
                m,
                horizon,
                tail_approximation: profile.tail_approximation(m),
                tail_expectation_scale: profile.tail_expectation_scale(m),
                bias_asymptotic: etc_bias_asymptotic(&q.distribution, q.mu2, m, horizon)?,
                threshold_on_lattice: profile.threshold_on_mean_lattice(m),
                exact,
            })
        })
        .collect::<Result<_, TheoryError>>()?;
    Ok(ProfileOutput {
        tail_expectation_limit: profile.tail_expectation_limit(),
        profile,
        rows,
    })
}

/// Evaluates every query in `config`.
fn theory_output(config: &TheoryConfig, seed: u64) -> Result<TheoryOutput, TheoryError> {
    let etc_gaussian = config
        .etc_gaussian
        .iter()
        .map(|q| {
            let p = EtcGaussianParams::new(q.mu, q.var, q.m, q.horizon)?;
            let log_abs = |k| match log_bias_g(&p, k) {
                Ok(g) => Ok(Some(g)),
                Err(TheoryError::LogOfZero) => Ok(None),
                Err(e) => Err(e),
            };
            Ok(EtcGaussianOutput {
                query: q.clone(),
                bias: [etc_bias_gaussian(&p, 0), etc_bias_gaussian(&p, 1)],
                log_abs_bias: [log_abs(0)?, log_abs(1)?],
            })
        })
        .collect::<Result<_, TheoryError>>()?;
    let etc_general = config
        .etc_general
        .iter()
        .map(|q| {
            Ok(EtcGeneralOutput {
                m: q.m,
                horizon: q.horizon,
                bias: [
                    etc_bias_general(&q.arms, q.m, q.horizon, 0)?,
                    etc_bias_general(&q.arms, q.m, q.horizon, 1)?,
                ],
            })
        })
        .collect::<Result<_, TheoryError>>()?;
    let profiles = config
        .profiles
        .iter()
        .map(profile_output)
        .collect::<Result<_, _>>()?;
    let plug_in_rates = config
        .plug_in_rates
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let m0 = q.m_grid.first().copied().unwrap_or(1);
            let truth = EtcGaussianParams::new(q.mu, q.var, m0, q.horizon_multiple.max(2) * m0)?;
            plug_in_rate_experiment(
                &truth,
                &q.m_grid,
                q.horizon_multiple,
                q.replications,
                crate::rng::derive_seed(seed, i as u64),
            )
        })
        .collect::<Result<_, _>>()?;
    let bootstrap_rates = config
        .bootstrap_rates
        .iter()
        .enumerate()
        .map(|(i, q)| {
            bootstrap_rate_check(
                &q.distribution,
                q.mu2,
                &q.m_grid,
                q.horizon_multiple,
                q.replications,
                crate::rng::derive_seed(seed, (config.plug_in_rates.len() + i) as u64),
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(TheoryOutput {
        etc_gaussian,
        etc_general,
        profiles,
        plug_in_rates,
        bootstrap_rates,
    })
}

fn theory_cmd(args: &TheoryArgs) -> Result<(), CliError> {
    let config: TheoryConfig = read_json(&args.config, "theory config")?;
    if let Some(out) = &args.out {
        check_output_file(out)?;
    }
    emit(args.out.as_deref(), &theory_output(&config, args.seed)?)
}

fn plan_cmd(args: &PlanArgs) -> Result<(), CliError> {
    let mut plan = ExperimentPlan::from_json(&read_text(&args.plan)?)?;
    for cell in &mut plan.cells {
        if let Some(r) = args.replications {
            cell.replications = r;
        }
        if let (Some(b), Some(spec)) = (args.replays, cell.bootstrap.as_mut()) {
            spec.replays = b;
        }
    }
    plan.validate()?;
    if args.out.is_file() {
        return Err(CliError::Usage(format!(
            "output {} is a file, expected a directory",
            args.out.display()
        )));
    }
    let results = run_plan(&plan, args.seed)?;
    for cell in &results {
        let failed: usize = cell.failures.values().sum();
        if failed > 0 {
            log::warn!(
                "cell {}: {failed} replication-horizon pairs had errors",
                cell.name
            );
        }
    }
    write_results(&args.out, &results)?;
    info!("wrote {} cells to {}", results.len(), args.out.display());
    Ok(())
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    // a second initialisation (e.g. repeated in-process calls) is harmless
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
}

/// Runs an already parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cli.workers)))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Debias(a) => debias_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Theory(a) => theory_cmd(a),
        Command::Plan(a) => plan_cmd(a),
    })
}

/// Parses `argv`, runs the command, and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(&cli);
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn s(p: &Path) -> String {
        p.to_string_lossy().into_owned()
    }

    const NORMAL_ARMS: &str = r#"[{"type":"gaussian","mean":1.0,"variance":1.0},{"type":"gaussian","mean":1.5,"variance":1.0}]"#;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn simulate_then_debias() {
        let dir = tempfile::tempdir().unwrap();
        let arms = write(dir.path(), "arms.json", NORMAL_ARMS);
        let log = dir.path().join("log.csv");
        let args = [
            "x", "simulate", "--policy", "etc", "--m", "10", "--K", "2", "--T", "100",
        ];
        let code = dispatch(args.iter().map(|a| a.to_string()).chain([
            "--arms".into(),
            s(&arms),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            s(&log),
        ]));
        assert_eq!(code, 0);
        assert!(dir.path().join("log.meta.json").is_file());
        let report = dir.path().join("report.json");
        let code = dispatch([
            "x".into(),
            "debias".into(),
            "--log".into(),
            s(&log),
            "--B".into(),
            "50".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            s(&report),
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(v["arms"].as_array().unwrap().len(), 2);
        assert_eq!(v["bootstrap"]["B"], 50);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(dispatch(["x", "simulate", "--policy", "etc"]), 1);
        assert_eq!(dispatch(["x", "bogus"]), 1);
        assert_eq!(dispatch(["x", "--help"]), 0);
        let dir = tempfile::tempdir().unwrap();
        let arms = write(dir.path(), "arms.json", NORMAL_ARMS);
        let out = s(&dir.path().join("log.csv"));
        let base = |extra: &[&str]| {
            let mut v: Vec<String> = ["x", "simulate", "--K", "2", "--T", "100", "--seed", "1"]
                .iter()
                .map(|a| a.to_string())
                .collect();
            v.extend(["--arms".into(), s(&arms), "--out".into(), out.clone()]);
            v.extend(extra.iter().map(|a| a.to_string()));
            v
        };
        // --seed is mandatory
        let no_seed: Vec<String> = base(&["--policy", "ucb"])
            .into_iter()
            .filter(|a| a != "--seed" && a != "1")
            .collect();
        assert_eq!(dispatch(no_seed), 1);
        assert_eq!(dispatch(base(&["--policy", "etc"])), 1);
        assert_eq!(dispatch(base(&["--policy", "etc", "--m", "60"])), 1);
        assert_eq!(dispatch(base(&["--policy", "eg", "--epsilon", "1.5"])), 1);
        assert_eq!(dispatch(base(&["--policy", "ucb"])), 0);
    }

    #[test]
    fn unknown_policy_in_metadata_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let log = write(dir.path(), "log.csv", "t,arm,reward\n1,1,0.5\n2,2,0.1\n");
        write(
            dir.path(),
            "log.meta.json",
            r#"{"K":2,"T":2,"policy":{"name":"softmax"},"world":"real"}"#,
        );
        let err = debias_cmd(&DebiasArgs {
            log,
            meta: None,
            bootstrap: BootstrapKind::MultiplierGaussian,
            replays: 10,
            seed: 1,
            out: None,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("`policy`"), "{err}");
    }

    #[test]
    fn data_errors_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "log.meta.json",
            r#"{"K":2,"T":3,"policy":{"name":"ucb"}}"#,
        );
        let log = write(
            dir.path(),
            "log.csv",
            "t,arm,reward\n1,1,0.5\n2,1,0.1\n3,1,0.2\n",
        );
        let args = DebiasArgs {
            log: log.clone(),
            meta: None,
            bootstrap: BootstrapKind::Efron,
            replays: 10,
            seed: 1,
            out: None,
        };
        // arm 2 was never pulled
        assert_eq!(debias_cmd(&args).unwrap_err().exit_code(), 2);
        write(dir.path(), "log.csv", "t,arm,reward\n1,1,zero\n");
        assert_eq!(debias_cmd(&args).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn theory_config_evaluates_every_section() {
        let config: TheoryConfig = serde_json::from_str(
            r#"{
                "etc_gaussian": [{"mu":[1.0,1.5],"var":[1.0,1.0],"m":10,"T":100}],
                "etc_general": [{"arms":[{"type":"bernoulli","p":0.3},{"type":"bernoulli","p":0.6}],"m":10,"T":100}],
                "profiles": [{"distribution":{"type":"bernoulli","p":0.3},"mu2":0.6,"m_grid":[25,50]}],
                "bootstrap_rates": [{"distribution":{"type":"gaussian","mean":0.0,"variance":1.0},"mu2":1.0,"m_grid":[20],"replications":10}]
            }"#,
        )
        .unwrap();
        let out = theory_output(&config, 3).unwrap();
        assert!((out.etc_gaussian[0].bias[0] + 0.0424432365807606).abs() < 1e-12);
        assert!(out.etc_general[0].bias.iter().all(|&b| b < 0.0));
        let row = &out.profiles[0].rows[0];
        assert_eq!(row.threshold_on_lattice, Some(true));
        let ratio = row.exact.unwrap().probability / row.tail_approximation;
        assert!(ratio > 0.9 && ratio < 1.0, "{ratio}");
        assert_eq!(out.bootstrap_rates[0].rows[0].ratio.used, 10);
        assert_eq!(
            theory_output(&config, 3).unwrap().bootstrap_rates,
            out.bootstrap_rates
        );
    }

    #[test]
    fn theory_rejects_unknown_sections() {
        let dir = tempfile::tempdir().unwrap();
        let config = write(dir.path(), "t.json", r#"{"bogus": []}"#);
        let err = theory_cmd(&TheoryArgs {
            config,
            seed: 0,
            out: None,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
