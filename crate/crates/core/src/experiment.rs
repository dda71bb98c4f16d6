//! Monte Carlo replication harness and bootstrap.
//!
//! One replication simulates a population, applies the design, fits the
//! models and runs every requested estimator. Replication `r` draws all of
//! its randomness from `mix(master_seed, r)`, and results are reduced in
//! replication order, so summaries do not depend on the worker count.

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{
    oracle_truth_with, simulate_actual_population_with, DgpSpec, OracleTruth, SimulationOptions,
};
use crate::domain::{Arm, DesignSpec, ObservedDataset, ObservedRecord, TreatmentProb};
use crate::error::{Error, Result};
use crate::estimators::{
    gformula_mean_nonrandomized, gformula_mean_randomized, run_estimator, EstimateReport,
    EstimatorSpec, IpwOptions, Models,
};
use crate::outcome::{fit_outcome_with, OutcomeModel};
use crate::participation::{fit_participation_with, Basis, FitOptions, ParticipationModel};
use crate::rng::{self, Purpose};
use crate::sampling::apply_design;

/// Default Monte Carlo size of the oracle.
pub const DEFAULT_ORACLE_M: usize = 1_000_000;

/// Smallest bootstrap size accepted.
pub const MIN_BOOTSTRAP: usize = 100;

/// Deliberate departures from the correctly specified analysis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Misspecification {
    /// Fit an intercept-only participation model.
    #[serde(default)]
    pub participation: bool,
    /// Fit intercept-only outcome models.
    #[serde(default)]
    pub outcome: bool,
    /// Add this shift to both potential outcomes of non-participants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generalizability_violation: Option<f64>,
}

/// Model and weighting choices shared by every estimate of a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimationOptions {
    pub participation: FitOptions,
    pub outcome_basis: Basis,
    pub ipw: IpwOptions,
}

fn default_specs() -> Vec<EstimatorSpec> {
    EstimatorSpec::all()
}

fn default_oracle_m() -> usize {
    DEFAULT_ORACLE_M
}

/// The population seed inside `dgp` is ignored; every replication derives
/// its own seeds from `master_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp: DgpSpec,
    pub design: DesignSpec,
    pub n: usize,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default = "default_specs")]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub misspecify: Misspecification,
    /// Bootstrap resamples per replication; 0 turns the bootstrap off.
    #[serde(default)]
    pub bootstrap: usize,
    #[serde(default = "default_oracle_m")]
    pub oracle_m: usize,
    #[serde(default)]
    pub ipw: IpwOptions,
}

impl ExperimentConfig {
    pub fn new(
        dgp: DgpSpec,
        design: DesignSpec,
        n: usize,
        replications: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            dgp,
            design,
            n,
            replications,
            master_seed,
            estimators: default_specs(),
            misspecify: Misspecification::default(),
            bootstrap: 0,
            oracle_m: DEFAULT_ORACLE_M,
            ipw: IpwOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.design.validate()?;
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::invalid("population size n must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("no estimators requested"));
        }
        for s in &self.estimators {
            s.validate()?;
        }
        if self.bootstrap != 0 && self.bootstrap < MIN_BOOTSTRAP {
            return Err(Error::invalid(format!(
                "bootstrap needs B >= {MIN_BOOTSTRAP} (or 0 to disable)"
            )));
        }
        if let Some(d) = self.misspecify.generalizability_violation {
            if !d.is_finite() {
                return Err(Error::invalid("generalizability_violation must be finite"));
            }
        }
        Ok(())
    }

    pub fn estimation_options(&self) -> EstimationOptions {
        let basis = |mis: bool| {
            if mis {
                Basis::InterceptOnly
            } else {
                Basis::MainEffects
            }
        };
        EstimationOptions {
            participation: FitOptions {
                basis: basis(self.misspecify.participation),
                ..Default::default()
            },
            outcome_basis: basis(self.misspecify.outcome),
            ipw: self.ipw,
        }
    }

    fn shift(&self) -> f64 {
        self.misspecify.generalizability_violation.unwrap_or(0.0)
    }

    /// Seed of replication `r`.
    pub fn replication_seed(&self, r: usize) -> u64 {
        rng::mix(self.master_seed, r as u64)
    }

    pub fn oracle_seed(&self) -> u64 {
        rng::derive_seed(self.master_seed, Purpose::Oracle, 0)
    }

    /// Simulates and samples the dataset of replication `r`.
    pub fn replicate_dataset(&self, r: usize) -> Result<ObservedDataset> {
        let seed = self.replication_seed(r);
        let mut dgp = self.dgp.clone();
        dgp.seed = seed;
        let opts = SimulationOptions {
            aux_split: self.design.aux_split(),
            nonparticipant_shift: self.shift(),
        };
        let population = simulate_actual_population_with(&dgp, self.n, &opts)?;
        apply_design(
            &population,
            &self.design,
            TreatmentProb::new(dgp.treatment_prob)?,
            seed,
        )
    }

    pub fn oracle(&self) -> Result<OracleTruth> {
        oracle_truth_with(&self.dgp, self.oracle_m, self.oracle_seed(), self.shift())
    }
}

/// Result of one estimator on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecOutcome {
    Estimate(EstimateReport),
    NotIdentifiable,
    Failed(String),
}

impl SpecOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            SpecOutcome::Estimate(r) => r.value,
            _ => None,
        }
    }
}

/// Fits whatever models `specs` need and runs each estimator. The
/// identification gate is applied before any model is consulted, so a
/// non-identifiable request is reported as such even if a fit failed.
pub fn estimate_all(
    data: &ObservedDataset,
    specs: &[EstimatorSpec],
    opts: &EstimationOptions,
) -> Vec<SpecOutcome> {
    let design = data.design();
    let identified = |s: &EstimatorSpec| s.check_identified(design).is_ok();
    let need_p = specs
        .iter()
        .any(|s| identified(s) && s.method.needs_participation_model());
    let need_o = specs
        .iter()
        .any(|s| identified(s) && s.method.needs_outcome_model());
    let participation: Option<Result<ParticipationModel>> =
        need_p.then(|| fit_participation_with(data, &opts.participation));
    let outcome: Option<Result<OutcomeModel>> =
        need_o.then(|| fit_outcome_with(data, opts.outcome_basis));

    specs
        .iter()
        .map(|spec| {
            if let Err(e) = spec.check_identified(design) {
                debug_assert!(matches!(e, Error::NotIdentifiable { .. }));
                return SpecOutcome::NotIdentifiable;
            }
            let mut models = Models::default();
            if spec.method.needs_participation_model() {
                match participation.as_ref().expect("fitted above") {
                    Ok(m) => models.participation = Some(m),
                    Err(e) => return SpecOutcome::Failed(format!("participation fit: {e}")),
                }
            }
            if spec.method.needs_outcome_model() {
                match outcome.as_ref().expect("fitted above") {
                    Ok(m) => models.outcome = Some(m),
                    Err(e) => return SpecOutcome::Failed(format!("outcome fit: {e}")),
                }
            }
            match run_estimator(data, spec, models, &opts.ipw) {
                Ok(r) => SpecOutcome::Estimate(r),
                Err(Error::NotIdentifiable { .. }) => SpecOutcome::NotIdentifiable,
                Err(e) => SpecOutcome::Failed(e.to_string()),
            }
        })
        .collect()
}

/// Stratified bootstrap resample: trial rows and external rows are drawn
/// with replacement separately, and the unsampled tally is kept.
pub fn resample(data: &ObservedDataset, seed: u64, b: usize) -> Result<ObservedDataset> {
    let mut g = rng::stream(seed, Purpose::Bootstrap, b as u64);
    let trial: Vec<&ObservedRecord> = data.records().iter().filter(|r| r.is_trial()).collect();
    let external: Vec<&ObservedRecord> = data.records().iter().filter(|r| !r.is_trial()).collect();
    let mut rows = Vec::with_capacity(data.records().len());
    for group in [&trial, &external] {
        for _ in 0..group.len() {
            rows.push(group[g.random_range(0..group.len())].clone());
        }
    }
    ObservedDataset::new(
        rows,
        data.n_unsampled_nonrandomized(),
        data.design().clone(),
        data.p(),
        data.treatment_prob(),
    )
}

/// Standard deviation of `statistic` over `b` stratified resamples. The
/// first failing resample (in index order) aborts with its error.
pub fn bootstrap_sd<F>(data: &ObservedDataset, b: usize, seed: u64, statistic: F) -> Result<f64>
where
    F: Fn(&ObservedDataset) -> Result<f64> + Sync,
{
    if b < MIN_BOOTSTRAP {
        return Err(Error::invalid(format!(
            "bootstrap needs B >= {MIN_BOOTSTRAP}, got {b}"
        )));
    }
    let values = (0..b)
        .into_par_iter()
        .map(|i| statistic(&resample(data, seed, i)?))
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(sample_sd(&values).expect("b >= 2"))
}

/// Bootstrap standard error of one estimator, refitting models in each
/// resample.
pub fn bootstrap_se(
    data: &ObservedDataset,
    spec: &EstimatorSpec,
    b: usize,
    seed: u64,
    opts: &EstimationOptions,
) -> Result<f64> {
    spec.check_identified(data.design())?;
    bootstrap_sd(data, b, seed, |d| {
        match estimate_all(d, std::slice::from_ref(spec), opts).remove(0) {
            SpecOutcome::Estimate(r) => Ok(r.value.expect("estimate has a value")),
            SpecOutcome::NotIdentifiable => unreachable!("checked above"),
            SpecOutcome::Failed(msg) => Err(Error::InsufficientData(format!(
                "bootstrap resample failed: {msg}"
            ))),
        }
    })
}

fn sample_sd(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Per-arm comparison of outcome means among trial participants and among
/// non-randomized individuals, both standardized through the outcome model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDiagnostic {
    pub arm: Arm,
    pub mean_randomized: f64,
    pub mean_nonrandomized: f64,
    pub difference: f64,
    pub bootstrap_se: Option<f64>,
}

pub fn generalizability_diagnostic(
    data: &ObservedDataset,
    b: usize,
    seed: u64,
    outcome_basis: Basis,
) -> Result<Vec<ArmDiagnostic>> {
    if data.n_external() == 0 {
        return Err(Error::NoExternalRows);
    }
    let difference = |d: &ObservedDataset, arm: Arm, model: &OutcomeModel| -> Result<(f64, f64)> {
        let r = gformula_mean_randomized(d, model, arm)?
            .value
            .expect("value");
        let nr = gformula_mean_nonrandomized(d, model, arm)?
            .value
            .expect("value");
        Ok((r, nr))
    };
    let model = fit_outcome_with(data, outcome_basis)?;
    Arm::BOTH
        .iter()
        .map(|&arm| {
            let (r, nr) = difference(data, arm, &model)?;
            let se = if b == 0 {
                None
            } else {
                Some(bootstrap_sd(data, b, seed, |d| {
                    let m = fit_outcome_with(d, outcome_basis)?;
                    difference(d, arm, &m).map(|(r, nr)| r - nr)
                })?)
            };
            Ok(ArmDiagnostic {
                arm,
                mean_randomized: r,
                mean_nonrandomized: nr,
                difference: r - nr,
                bootstrap_se: se,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(flatten)]
    pub spec: EstimatorSpec,
    pub truth: f64,
    pub mean: Option<f64>,
    pub bias: Option<f64>,
    pub sd: Option<f64>,
    pub rmse: Option<f64>,
    pub successes: usize,
    pub not_identifiable: usize,
    pub failures: usize,
    pub not_identifiable_frac: f64,
    pub boot_se_mean: Option<f64>,
    /// One failure message per distinct cause, in first-seen order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failure_messages: Vec<String>,
    /// Per-replication estimates (`None` where unavailable).
    #[serde(skip)]
    pub estimates: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub design: String,
    pub c: Option<f64>,
    pub n: usize,
    pub replications: usize,
    pub oracle: OracleTruth,
    /// Replications whose dataset could not be built at all.
    pub dataset_failures: usize,
    pub rows: Vec<SummaryRow>,
}

pub const SUMMARY_CSV_HEADER: [&str; 14] = [
    "estimand",
    "arm",
    "method",
    "design",
    "c",
    "n",
    "R",
    "truth",
    "mean",
    "bias",
    "sd",
    "rmse",
    "not_identifiable_frac",
    "boot_se_mean",
];

impl ExperimentSummary {
    pub fn row(&self, spec: &EstimatorSpec) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| &r.spec == spec)
    }

    fn write_rows<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                row.spec.estimand.to_string(),
                row.spec.arm.to_string(),
                row.spec.method.to_string(),
                self.design.clone(),
                opt(self.c),
                self.n.to_string(),
                self.replications.to_string(),
                row.truth.to_string(),
                opt(row.mean),
                opt(row.bias),
                opt(row.sd),
                opt(row.rmse),
                row.not_identifiable_frac.to_string(),
                opt(row.boot_se_mean),
            ])?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        summaries_to_csv(std::slice::from_ref(self))
    }
}

/// One CSV table with a row per estimator and summary.
pub fn summaries_to_csv(summaries: &[ExperimentSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_CSV_HEADER)?;
    for s in summaries {
        s.write_rows(&mut w)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

struct Replication {
    outcomes: Vec<SpecOutcome>,
    boot: Vec<Option<f64>>,
    dataset_failed: bool,
}

fn run_replication(cfg: &ExperimentConfig, opts: &EstimationOptions, r: usize) -> Replication {
    let data = match cfg.replicate_dataset(r) {
        Ok(d) => d,
        Err(e) => {
            let msg = format!("dataset: {e}");
            // gated estimands stay gated even without data
            let outcomes = cfg
                .estimators
                .iter()
                .map(|s| match s.check_identified(&cfg.design) {
                    Err(_) => SpecOutcome::NotIdentifiable,
                    Ok(()) => SpecOutcome::Failed(msg.clone()),
                })
                .collect();
            return Replication {
                outcomes,
                boot: vec![None; cfg.estimators.len()],
                dataset_failed: true,
            };
        }
    };
    let outcomes = estimate_all(&data, &cfg.estimators, opts);
    let boot = cfg
        .estimators
        .iter()
        .zip(&outcomes)
        .map(|(spec, out)| {
            if cfg.bootstrap == 0 || !matches!(out, SpecOutcome::Estimate(_)) {
                return None;
            }
            bootstrap_se(&data, spec, cfg.bootstrap, cfg.replication_seed(r), opts).ok()
        })
        .collect();
    Replication {
        outcomes,
        boot,
        dataset_failed: false,
    }
}

/// Runs the experiment on the global thread pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let oracle = cfg.oracle()?;
    run_experiment_with_truth(cfg, &oracle)
}

/// Runs the experiment on a dedicated pool of `workers` threads.
pub fn run_experiment_in(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_experiment(cfg))
}

/// Runs the replications against a precomputed oracle.
pub fn run_experiment_with_truth(
    cfg: &ExperimentConfig,
    oracle: &OracleTruth,
) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let opts = cfg.estimation_options();
    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, &opts, r))
        .collect();

    let rows = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let truth = oracle.value(spec.estimand, spec.arm);
            let estimates: Vec<Option<f64>> =
                reps.iter().map(|rep| rep.outcomes[j].value()).collect();
            let values: Vec<f64> = estimates.iter().flatten().copied().collect();
            let not_identifiable = reps
                .iter()
                .filter(|rep| rep.outcomes[j] == SpecOutcome::NotIdentifiable)
                .count();
            let mut failure_messages = Vec::new();
            for rep in &reps {
                if let SpecOutcome::Failed(m) = &rep.outcomes[j] {
                    if !failure_messages.contains(m) {
                        failure_messages.push(m.clone());
                    }
                }
            }
            let failures = reps
                .iter()
                .filter(|rep| matches!(rep.outcomes[j], SpecOutcome::Failed(_)))
                .count();
            let k = values.len();
            let mean = (k > 0).then(|| values.iter().sum::<f64>() / k as f64);
            let rmse = (k > 0).then(|| {
                (values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / k as f64).sqrt()
            });
            let boots: Vec<f64> = reps.iter().filter_map(|rep| rep.boot[j]).collect();
            SummaryRow {
                spec: *spec,
                truth,
                mean,
                bias: mean.map(|m| m - truth),
                sd: sample_sd(&values),
                rmse,
                successes: k,
                not_identifiable,
                failures,
                not_identifiable_frac: not_identifiable as f64 / cfg.replications as f64,
                boot_se_mean: (!boots.is_empty())
                    .then(|| boots.iter().sum::<f64>() / boots.len() as f64),
                failure_messages,
                estimates,
            }
        })
        .collect();

    Ok(ExperimentSummary {
        design: cfg.design.name().to_string(),
        c: cfg.design.constant_c(),
        n: cfg.n,
        replications: cfg.replications,
        oracle: oracle.clone(),
        dataset_failures: reps.iter().filter(|r| r.dataset_failed).count(),
        rows,
    })
}

/// Grid of designs sharing everything else in `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub designs: Vec<DesignSpec>,
    /// Shorthand for sub-sampled nested designs with these fractions.
    #[serde(default)]
    pub c_values: Vec<f64>,
}

impl SweepConfig {
    pub fn cells(&self) -> Result<Vec<DesignSpec>> {
        let mut cells = self.designs.clone();
        cells.extend(self.c_values.iter().map(|&c| DesignSpec::subsampled(c)));
        if cells.is_empty() {
            return Err(Error::invalid("sweep grid is empty"));
        }
        for d in &cells {
            d.validate()?;
        }
        Ok(cells)
    }
}

/// Runs the base experiment once per design cell. Every cell reuses the
/// same replication seeds and oracle, so cells differ only by design.
pub fn design_comparison(sweep: &SweepConfig) -> Result<Vec<ExperimentSummary>> {
    let cells = sweep.cells()?;
    sweep.base.validate()?;
    let oracle = sweep.base.oracle()?;
    cells
        .into_iter()
        .map(|design| {
            let cfg = ExperimentConfig {
                design,
                ..sweep.base.clone()
            };
            run_experiment_with_truth(&cfg, &oracle)
        })
        .collect()
}

/// Participation-model coefficients over `replications` datasets. Failed
/// fits are returned as errors in place.
pub fn participation_fit_replications(
    cfg: &ExperimentConfig,
    fit: &FitOptions,
) -> Vec<Result<Vec<f64>>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let data = cfg.replicate_dataset(r)?;
            Ok(fit_participation_with(&data, fit)?.coefficients().to_vec())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{Method, Population};

    fn small(design: DesignSpec) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DgpSpec::dgp1(0), design, 2_000, 8, 11);
        cfg.oracle_m = 200_000;
        cfg
    }

    #[test]
    fn config_json_defaults() {
        let json = r#"{
            "dgp": {"covariates":[{"dist":"normal","mean":0.0,"sd":1.0}],
                    "participation_logit":[-1.0,0.5],"treatment_prob":0.5,
                    "outcome_mean_a0":[1.0,1.0],"outcome_mean_a1":[2.0,1.3],
                    "noise_sd":1.0,"seed":0},
            "design": {"variant":"census_nested"},
            "n": 100, "replications": 2, "master_seed": 5
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.estimators.len(), 14);
        assert_eq!(cfg.bootstrap, 0);
        assert_eq!(cfg.oracle_m, DEFAULT_ORACLE_M);
        cfg.validate().unwrap();
        let bad = json.replace("\"n\": 100", "\"n\": 100, \"extra\": 1");
        assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());
    }

    #[test]
    fn rejects_zero_replications_and_small_bootstrap() {
        let mut cfg = small(DesignSpec::CensusNested);
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small(DesignSpec::CensusNested);
        cfg.bootstrap = 20;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_nested_target_is_always_gated() {
        let cfg = small(DesignSpec::non_nested(0.2).unwrap());
        let s = run_experiment(&cfg).unwrap();
        for row in &s.rows {
            if row.spec.estimand == Population::Target {
                assert_eq!(row.not_identifiable_frac, 1.0);
                assert!(row.mean.is_none());
            } else {
                assert_eq!(row.not_identifiable, 0);
                assert_eq!(row.successes, cfg.replications);
            }
        }
    }

    #[test]
    fn bias_is_mean_minus_truth_exactly() {
        let s = run_experiment(&small(DesignSpec::subsampled(0.5))).unwrap();
        for row in &s.rows {
            assert_eq!(row.bias.unwrap(), row.mean.unwrap() - row.truth);
        }
        let csv = s.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 14);
        assert!(csv.starts_with("estimand,arm,method,design,c,n,R,truth,mean,bias,sd,rmse,not_identifiable_frac,boot_se_mean\n"));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = small(DesignSpec::subsampled(0.3));
        let a = run_experiment_in(&cfg, 1).unwrap().to_csv().unwrap();
        let b = run_experiment_in(&cfg, 3).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_outcome_has_zero_bootstrap_se() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let a = if i % 2 == 0 {
                Arm::Treated
            } else {
                Arm::Control
            };
            rows.push(ObservedRecord::TrialParticipant {
                x: vec![i as f64],
                a,
                y: 3.0,
            });
        }
        rows.push(ObservedRecord::SampledNonRandomized { x: vec![0.5] });
        let ds = ObservedDataset::new(
            rows,
            Some(0),
            DesignSpec::CensusNested,
            1,
            TreatmentProb::default(),
        )
        .unwrap();
        let spec = EstimatorSpec::new(Population::Randomized, Method::TrialOnly, Arm::Treated);
        let se = bootstrap_se(&ds, &spec, 100, 1, &EstimationOptions::default()).unwrap();
        assert_eq!(se, 0.0);
        assert!(bootstrap_se(&ds, &spec, 99, 1, &EstimationOptions::default()).is_err());
    }

    #[test]
    fn resample_preserves_strata_sizes() {
        let cfg = small(DesignSpec::subsampled(0.4));
        let ds = cfg.replicate_dataset(0).unwrap();
        let rs = resample(&ds, 9, 0).unwrap();
        assert_eq!(rs.n_trial(), ds.n_trial());
        assert_eq!(rs.n_external(), ds.n_external());
        assert_eq!(
            rs.n_unsampled_nonrandomized(),
            ds.n_unsampled_nonrandomized()
        );
        assert_ne!(rs.records(), ds.records());
    }

    #[test]
    fn sweep_has_one_summary_per_cell() {
        let sweep = SweepConfig {
            base: small(DesignSpec::CensusNested),
            designs: vec![],
            c_values: vec![0.5],
        };
        let out = design_comparison(&sweep).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].c, Some(0.5));
        let empty = SweepConfig {
            c_values: vec![],
            ..sweep
        };
        assert!(design_comparison(&empty).is_err());
    }

    #[test]
    fn diagnostic_requires_external_rows() {
        let rows = vec![
            ObservedRecord::TrialParticipant {
                x: vec![0.0],
                a: Arm::Treated,
                y: 1.0,
            },
            ObservedRecord::TrialParticipant {
                x: vec![1.0],
                a: Arm::Treated,
                y: 2.0,
            },
            ObservedRecord::TrialParticipant {
                x: vec![2.0],
                a: Arm::Treated,
                y: 2.5,
            },
            ObservedRecord::TrialParticipant {
                x: vec![0.0],
                a: Arm::Control,
                y: 1.0,
            },
            ObservedRecord::TrialParticipant {
                x: vec![1.0],
                a: Arm::Control,
                y: 0.0,
            },
            ObservedRecord::TrialParticipant {
                x: vec![2.0],
                a: Arm::Control,
                y: 1.5,
            },
        ];
        let ds = ObservedDataset::new(
            rows,
            Some(0),
            DesignSpec::CensusNested,
            1,
            TreatmentProb::default(),
        )
        .unwrap();
        assert!(matches!(
            generalizability_diagnostic(&ds, 0, 0, Basis::MainEffects),
            Err(Error::NoExternalRows)
        ));
    }
}
