use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use trialtransport::dgp::{simulate_actual_population_with, DgpSpec, SimulationOptions};
use trialtransport::domain::{Arm, DesignSpec, TreatmentProb};
use trialtransport::estimators::{
    run_estimator, EstimateReport, EstimatorSpec, IpwOptions, Method, Models, Population,
};
use trialtransport::experiment::{
    design_comparison, generalizability_diagnostic, run_experiment, summaries_to_csv,
    ExperimentConfig, SweepConfig,
};
use trialtransport::io::{load_dataset, save_dataset, sidecar_path};
use trialtransport::outcome::fit_outcome;
use trialtransport::participation::fit_participation;
use trialtransport::sampling::apply_design;
use trialtransport::Error;

#[derive(Parser)]
#[command(
    name = "trialtransport",
    version,
    about = "Extend trial results to a target population"
)]
struct Cli {
    /// Override every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a population, apply a design and write the observed data.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Dataset CSV; the sidecar goes next to it with a .json extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit models and estimate potential outcome means.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimandArg::Target)]
        estimand: EstimandArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Gformula)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = ArmArg::Both)]
        arm: ArmArg,
        /// Cap IP weights at this quantile.
        #[arg(long)]
        truncate_q: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare outcome means among trial participants and non-randomized
    /// individuals.
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment and write the summary CSV.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run an experiment over a grid of designs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimandArg {
    Target,
    Nonrandomized,
    Randomized,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Gformula,
    /// Hajek-normalized inverse probability weighting.
    Ipw,
    IpwHt,
    TrialOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    #[value(name = "0")]
    Control,
    #[value(name = "1")]
    Treated,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Configuration of `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    dgp: DgpSpec,
    design: DesignSpec,
    n: usize,
    /// Shift added to both potential outcomes of non-participants.
    #[serde(default, skip_serializing_if = "is_zero")]
    nonparticipant_shift: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NotIdentifiable { .. } => 3,
            Error::NoExternalRows => 4,
            e if e.is_numerical() => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| config_error(path, e))
}

/// `runs/a.csv` -> `runs/a.config.json`.
fn config_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::from(e)))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Refuses outputs that would overwrite the input config.
fn guard_outputs(config: &Path, outputs: &[PathBuf]) -> Result<(), Failure> {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let input = abs(config);
    match outputs.iter().find(|o| abs(o) == input) {
        Some(o) => Err(config_error(
            config,
            format!("output {} would overwrite the input config", o.display()),
        )),
        None => Ok(()),
    }
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    guard_outputs(
        config,
        &[out.to_path_buf(), sidecar_path(out), config_path(out)],
    )?;
    let mut cfg: SimulateConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.dgp.seed = s;
    }
    let opts = SimulationOptions {
        aux_split: cfg.design.aux_split(),
        nonparticipant_shift: cfg.nonparticipant_shift,
    };
    let population = simulate_actual_population_with(&cfg.dgp, cfg.n, &opts)?;
    let data = apply_design(
        &population,
        &cfg.design,
        TreatmentProb::new(cfg.dgp.treatment_prob)?,
        cfg.dgp.seed,
    )?;
    save_dataset(&data, out)?;
    write_json(&config_path(out), &cfg)?;
    println!("trial participants (S=1, D=1): {}", data.n_trial());
    println!("  arm 0: {}", data.n_arm(Arm::Control));
    println!("  arm 1: {}", data.n_arm(Arm::Treated));
    println!("sampled non-randomized (S=0, D=1): {}", data.n_external());
    match data.n_unsampled_nonrandomized() {
        Some(k) => println!("unsampled non-randomized (S=0, D=0): {k}"),
        None => println!("unsampled non-randomized (S=0, D=0): unknown"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    data_path: &Path,
    estimand: EstimandArg,
    method: MethodArg,
    arm: ArmArg,
    truncate_q: Option<f64>,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let data = load_dataset(data_path)?;
    let estimand = match estimand {
        EstimandArg::Target => Population::Target,
        EstimandArg::Nonrandomized => Population::NonRandomized,
        EstimandArg::Randomized => Population::Randomized,
    };
    let method = match method {
        MethodArg::Gformula => Method::GFormula,
        MethodArg::Ipw => Method::IpwHajek,
        MethodArg::IpwHt => Method::IpwHt,
        MethodArg::TrialOnly => Method::TrialOnly,
    };
    let arms: &[Arm] = match arm {
        ArmArg::Control => &[Arm::Control],
        ArmArg::Treated => &[Arm::Treated],
        ArmArg::Both => &Arm::BOTH,
    };
    let specs: Vec<EstimatorSpec> = arms
        .iter()
        .map(|&a| EstimatorSpec::new(estimand, method, a))
        .collect();
    for s in &specs {
        s.validate()?;
        s.check_identified(data.design())?;
    }
    let participation = method
        .needs_participation_model()
        .then(|| fit_participation(&data))
        .transpose()?;
    let outcome = method
        .needs_outcome_model()
        .then(|| fit_outcome(&data))
        .transpose()?;
    let models = Models {
        participation: participation.as_ref(),
        outcome: outcome.as_ref(),
    };
    let ipw = IpwOptions {
        truncate_quantile: truncate_q,
    };
    let reports = specs
        .iter()
        .map(|s| run_estimator(&data, s, models, &ipw))
        .collect::<Result<Vec<EstimateReport>, Error>>()?;
    for r in &reports {
        for w in &r.warnings {
            eprintln!("warning: {}", serde_json::to_string(w).unwrap_or_default());
        }
    }
    let text = match format {
        Format::Json => {
            let mut t = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])
            } else {
                serde_json::to_string_pretty(&reports)
            }
            .map_err(|e| Failure::from(Error::from(e)))?;
            t.push('\n');
            t
        }
        Format::Csv => {
            let mut t = reports[0].to_csv()?;
            for r in &reports[1..] {
                t.push_str(r.to_csv()?.lines().nth(1).unwrap_or_default());
                t.push('\n');
            }
            t
        }
    };
    write_output(out, &text)
}

#[derive(Serialize)]
struct DiagnoseRecord<'a> {
    data: &'a Path,
    bootstrap: usize,
    seed: u64,
}

fn diagnose(
    data_path: &Path,
    b: usize,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let data = load_dataset(data_path)?;
    let seed = seed.unwrap_or(0);
    let rows = generalizability_diagnostic(&data, b, seed, Default::default())?;
    let mut text =
        serde_json::to_string_pretty(&rows).map_err(|e| Failure::from(Error::from(e)))?;
    text.push('\n');
    if let Some(p) = out {
        write_json(
            &config_path(p),
            &DiagnoseRecord {
                data: data_path,
                bootstrap: b,
                seed,
            },
        )?;
    }
    write_output(out, &text)
}

fn with_pool<T>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure>
where
    T: Send,
{
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Failure {
                    code: 2,
                    message: format!("cannot build worker pool: {e}"),
                })?;
            Ok(pool.install(f))
        }
    }
}

fn experiment(
    config: &Path,
    out: &Path,
    workers: Option<usize>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    write_json(&config_path(out), &cfg)?;
    let summary = with_pool(workers, || run_experiment(&cfg))??;
    fs::write(out, summary.to_csv()?).map_err(|e| io_error(out, e))?;
    write_json(&out.with_extension("summary.json"), &summary)?;
    report_failures(&[summary]);
    Ok(())
}

fn sweep(
    config: &Path,
    out: &Path,
    workers: Option<usize>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg: SweepConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.base.master_seed = s;
    }
    cfg.cells()?;
    cfg.base.validate()?;
    write_json(&config_path(out), &cfg)?;
    let summaries = with_pool(workers, || design_comparison(&cfg))??;
    fs::write(out, summaries_to_csv(&summaries)?).map_err(|e| io_error(out, e))?;
    report_failures(&summaries);
    Ok(())
}

fn report_failures(summaries: &[trialtransport::ExperimentSummary]) {
    for s in summaries {
        for row in &s.rows {
            if row.failures > 0 {
                eprintln!(
                    "{} {} arm {} ({}): {} failed replications; first: {}",
                    row.spec.estimand,
                    row.spec.method,
                    row.spec.arm,
                    s.design,
                    row.failures,
                    row.failure_messages
                        .first()
                        .map(String::as_str)
                        .unwrap_or("")
                );
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, out } => simulate(&config, &out, cli.seed),
        Command::Estimate {
            data,
            estimand,
            method,
            arm,
            truncate_q,
            format,
            out,
        } => estimate(
            &data,
            estimand,
            method,
            arm,
            truncate_q,
            format,
            out.as_deref(),
        ),
        Command::Diagnose {
            data,
            bootstrap,
            out,
        } => diagnose(&data, bootstrap, cli.seed, out.as_deref()),
        Command::Experiment {
            config,
            out,
            workers,
        } => experiment(&config, &out, workers, cli.seed),
        Command::Sweep {
            config,
            out,
            workers,
        } => sweep(&config, &out, workers, cli.seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
