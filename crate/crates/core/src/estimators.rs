//! Point estimators of potential outcome means.
//!
//! Two routes per estimand: the g-formula standardizes the trial outcome
//! regression over the covariate distribution of the population of
//! interest, and inverse probability weighting reweights trial outcomes by
//! participation probabilities (target population) or participation odds
//! (non-randomized population). Each estimator checks the design's
//! identification matrix before doing any work.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Arm, DesignSpec, Estimand, ObservedDataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::outcome::OutcomeModel;
use crate::participation::{
    log_odds_population, participation_probability, ParticipationModel, Scale,
};

/// Largest normalized weight tolerated before a report carries a warning.
pub const EXTREME_WEIGHT_THRESHOLD: f64 = 0.1;

/// Population over which the potential outcome mean is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// Whole target population, `E[Y^a]`.
    Target,
    /// Non-randomized individuals, `E[Y^a | S = 0]`.
    #[serde(rename = "nonrandomized")]
    NonRandomized,
    /// Trial participants, `E[Y^a | S = 1]`.
    Randomized,
}

impl Population {
    pub const ALL: [Population; 3] = [
        Population::Target,
        Population::NonRandomized,
        Population::Randomized,
    ];

    /// Identification-matrix entry needed to estimate this mean.
    pub fn required_estimand(self) -> Option<Estimand> {
        match self {
            Population::Target => Some(Estimand::MeanTarget),
            Population::NonRandomized => Some(Estimand::MeanNonRandomized),
            Population::Randomized => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Population::Target => "target",
            Population::NonRandomized => "nonrandomized",
            Population::Randomized => "randomized",
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Population {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(Population::Target),
            "nonrandomized" | "non_randomized" => Ok(Population::NonRandomized),
            "randomized" => Ok(Population::Randomized),
            other => Err(Error::invalid(format!(
                "unknown estimand population '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "gformula")]
    GFormula,
    /// Horvitz-Thompson IPW, normalized by the estimated population size.
    IpwHt,
    /// Hajek IPW, normalized by the weight sum.
    IpwHajek,
    /// Unweighted arm mean among trial participants.
    TrialOnly,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::GFormula => "gformula",
            Method::IpwHt => "ipw_ht",
            Method::IpwHajek => "ipw_hajek",
            Method::TrialOnly => "trial_only",
        }
    }

    pub fn needs_participation_model(self) -> bool {
        matches!(self, Method::IpwHt | Method::IpwHajek)
    }

    pub fn needs_outcome_model(self) -> bool {
        self == Method::GFormula
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gformula" | "g-formula" => Ok(Method::GFormula),
            "ipw" | "ipw_hajek" | "ipw-hajek" | "hajek" => Ok(Method::IpwHajek),
            "ipw_ht" | "ipw-ht" | "ht" => Ok(Method::IpwHt),
            "trial_only" | "trial-only" => Ok(Method::TrialOnly),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Per-record standardization weights aligned with `data.records()`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Empirical target-population covariate distribution: weight 1 on trial
/// rows and the inverse sampling probability on sampled external rows.
pub fn target_weights(data: &ObservedDataset) -> Result<WeightedSample> {
    let design = data.design();
    design.require(Estimand::MeanTarget)?;
    let weights = data
        .records()
        .iter()
        .map(|r| match r {
            ObservedRecord::TrialParticipant { .. } => 1.0,
            ObservedRecord::SampledNonRandomized { x } => {
                1.0 / design.known_sampling_probability(x).expect("nested design")
            }
        })
        .collect();
    Ok(WeightedSample { weights })
}

/// Empirical covariate distribution among non-randomized individuals.
/// Sampled rows count once, except under a covariate-dependent design where
/// they are expanded by `1/c(X1)` to undo the selective sampling.
pub fn nonrandomized_weights(data: &ObservedDataset) -> Result<WeightedSample> {
    if data.n_external() == 0 {
        return Err(Error::NoExternalRows);
    }
    let design = data.design();
    let weights = data
        .records()
        .iter()
        .map(|r| match (r.is_trial(), design) {
            (true, _) => 0.0,
            (false, DesignSpec::SubsampledNestedCovariate { c_table }) => 1.0 / c_table.eval(r.x()),
            (false, _) => 1.0,
        })
        .collect();
    Ok(WeightedSample { weights })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimateWarning {
    ExtremeWeights { max_normalized_weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimand: Population,
    pub arm: Arm,
    pub method: Method,
    pub value: Option<f64>,
    /// Effective sample size `(sum w)^2 / sum w^2` of the weights used.
    pub ess: Option<f64>,
    /// Largest weight divided by the weight sum.
    pub max_weight: Option<f64>,
    pub identifiable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<EstimateWarning>,
    /// Cap applied to IP weights, if truncation was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_cap: Option<f64>,
}

pub const REPORT_CSV_HEADER: [&str; 7] = [
    "estimand",
    "arm",
    "method",
    "value",
    "ess",
    "max_weight",
    "identifiable",
];

impl EstimateReport {
    fn with_weights(
        estimand: Population,
        arm: Arm,
        method: Method,
        value: f64,
        weights: &[f64],
    ) -> Self {
        let (ess, max_weight) = weight_diagnostics(weights);
        let mut warnings = Vec::new();
        if method.needs_participation_model() && max_weight > EXTREME_WEIGHT_THRESHOLD {
            warnings.push(EstimateWarning::ExtremeWeights {
                max_normalized_weight: max_weight,
            });
        }
        Self {
            estimand,
            arm,
            method,
            value: Some(value),
            ess: Some(ess),
            max_weight: Some(max_weight),
            identifiable: true,
            warnings,
            weight_cap: None,
        }
    }

    /// Report for an estimand the design cannot identify.
    pub fn not_identifiable(estimand: Population, arm: Arm, method: Method) -> Self {
        Self {
            estimand,
            arm,
            method,
            value: None,
            ess: None,
            max_weight: None,
            identifiable: false,
            warnings: Vec::new(),
            weight_cap: None,
        }
    }

    pub fn csv_record(&self) -> [String; 7] {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            self.estimand.to_string(),
            self.arm.to_string(),
            self.method.to_string(),
            opt(self.value),
            opt(self.ess),
            opt(self.max_weight),
            self.identifiable.to_string(),
        ]
    }

    /// Header plus one data row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_CSV_HEADER)?;
        w.write_record(self.csv_record())?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// `(effective sample size, max normalized weight)`.
pub fn weight_diagnostics(weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    let max = weights.iter().copied().fold(0.0, f64::max);
    (total * total / sq, max / total)
}

fn weighted_prediction_mean(
    data: &ObservedDataset,
    model: &OutcomeModel,
    arm: Arm,
    w: &WeightedSample,
) -> f64 {
    let num: f64 = data
        .records()
        .iter()
        .zip(&w.weights)
        .filter(|(_, &wi)| wi != 0.0)
        .map(|(r, wi)| wi * model.predict(arm, r.x()))
        .sum();
    num / w.total()
}

/// g-formula estimate of `E[Y^a]`: predictions averaged with target weights.
pub fn gformula_mean_target(
    data: &ObservedDataset,
    model: &OutcomeModel,
    arm: Arm,
) -> Result<EstimateReport> {
    let w = target_weights(data)?;
    let value = weighted_prediction_mean(data, model, arm, &w);
    Ok(EstimateReport::with_weights(
        Population::Target,
        arm,
        Method::GFormula,
        value,
        &w.weights,
    ))
}

/// g-formula estimate of `E[Y^a | S = 0]`: predictions averaged over the
/// sampled non-randomized rows (inverse-`c(X1)` weighted when sampling
/// depends on covariates). Identified under every design.
pub fn gformula_mean_nonrandomized(
    data: &ObservedDataset,
    model: &OutcomeModel,
    arm: Arm,
) -> Result<EstimateReport> {
    data.design().require(Estimand::MeanNonRandomized)?;
    let w = nonrandomized_weights(data)?;
    let value = weighted_prediction_mean(data, model, arm, &w);
    let ext: Vec<f64> = w.weights.iter().copied().filter(|&v| v > 0.0).collect();
    Ok(EstimateReport::with_weights(
        Population::NonRandomized,
        arm,
        Method::GFormula,
        value,
        &ext,
    ))
}

/// g-formula estimate of `E[Y^a | S = 1]`: predictions averaged over trial
/// rows of both arms.
pub fn gformula_mean_randomized(
    data: &ObservedDataset,
    model: &OutcomeModel,
    arm: Arm,
) -> Result<EstimateReport> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (x, _, _) in data.trial_rows() {
        total += model.predict(arm, x);
        n += 1;
    }
    let ones = vec![1.0; n];
    Ok(EstimateReport::with_weights(
        Population::Randomized,
        arm,
        Method::GFormula,
        total / n as f64,
        &ones,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpwVariant {
    HorvitzThompson,
    Hajek,
}

impl IpwVariant {
    fn method(self) -> Method {
        match self {
            IpwVariant::HorvitzThompson => Method::IpwHt,
            IpwVariant::Hajek => Method::IpwHajek,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IpwOptions {
    /// Cap IP weights at this quantile of their empirical distribution.
    pub truncate_quantile: Option<f64>,
}

/// Caps weights at their `q`-quantile; returns the cap.
fn truncate(weights: &mut [f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!(
            "truncation quantile must lie in (0, 1], got {q}"
        )));
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    let cap = sorted[idx];
    for w in weights.iter_mut() {
        *w = w.min(cap);
    }
    Ok(cap)
}

/// IPW estimate of `E[Y^a]` with weights `1 / (p(x) e_a)` on arm-`a` trial
/// rows. Horvitz-Thompson divides by the estimated population size (the
/// target-weight total); Hajek divides by the IP-weight total.
pub fn ipw_mean_target(
    data: &ObservedDataset,
    model: &ParticipationModel,
    arm: Arm,
    variant: IpwVariant,
    opts: &IpwOptions,
) -> Result<EstimateReport> {
    let design = data.design();
    let target = target_weights(data)?;
    let e = data.treatment_prob().for_arm(arm);
    let mut weights = Vec::with_capacity(data.n_arm(arm));
    let mut ys = Vec::with_capacity(weights.capacity());
    for (x, y) in data.arm_rows(arm) {
        let p = participation_probability(model, design, x)?;
        weights.push(1.0 / (p * e));
        ys.push(y);
    }
    let cap = opts
        .truncate_quantile
        .map(|q| truncate(&mut weights, q))
        .transpose()?;
    let num: f64 = weights.iter().zip(&ys).map(|(w, y)| w * y).sum();
    let denom = match variant {
        IpwVariant::HorvitzThompson => target.total(),
        IpwVariant::Hajek => weights.iter().sum(),
    };
    let mut report = EstimateReport::with_weights(
        Population::Target,
        arm,
        variant.method(),
        num / denom,
        &weights,
    );
    report.weight_cap = cap;
    Ok(report)
}

/// Log of the participation odds up to an additive constant that is common
/// to every row. The constant cancels in ratio estimators, so the intercept
/// (which carries the unknown `-ln u` in non-nested fits) is left out.
fn log_odds_up_to_constant(
    model: &ParticipationModel,
    design: &DesignSpec,
    x: &[f64],
) -> Result<f64> {
    match model.scale() {
        // sample-scale odds differ from population odds by c(X1), which
        // need not be constant
        Scale::Sample => log_odds_population(model, design, x),
        Scale::Population | Scale::Shifted => Ok(model.slope_predictor(x)),
    }
}

/// Ratio IPW estimate of `E[Y^a | S = 0]` with weights proportional to
/// `Pr[S=0|X] / (Pr[S=1|X] e_a)`.
///
/// Only odds up to a constant are needed, so the estimate is unchanged when
/// the model's odds are multiplied by any positive factor; this is what
/// makes it available under non-nested designs.
pub fn ipw_mean_nonrandomized(
    data: &ObservedDataset,
    model: &ParticipationModel,
    arm: Arm,
    opts: &IpwOptions,
) -> Result<EstimateReport> {
    let design = data.design();
    design.require(Estimand::MeanNonRandomized)?;
    if data.n_external() == 0 {
        return Err(Error::NoExternalRows);
    }
    let mut log_w = Vec::with_capacity(data.n_arm(arm));
    let mut ys = Vec::with_capacity(log_w.capacity());
    for (x, y) in data.arm_rows(arm) {
        log_w.push(-log_odds_up_to_constant(model, design, x)?);
        ys.push(y);
    }
    // e_a is constant within the arm and cancels as well
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_w.iter().map(|l| (l - shift).exp()).collect();
    let cap = opts
        .truncate_quantile
        .map(|q| truncate(&mut weights, q))
        .transpose()?;
    let num: f64 = weights.iter().zip(&ys).map(|(w, y)| w * y).sum();
    let den: f64 = weights.iter().sum();
    let mut report = EstimateReport::with_weights(
        Population::NonRandomized,
        arm,
        Method::IpwHajek,
        num / den,
        &weights,
    );
    report.weight_cap = cap;
    Ok(report)
}

/// Unweighted mean outcome in arm `a` among trial participants.
pub fn trial_only_mean(data: &ObservedDataset, arm: Arm) -> Result<EstimateReport> {
    let ys: Vec<f64> = data.arm_rows(arm).map(|(_, y)| y).collect();
    if ys.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no trial rows in arm {arm}"
        )));
    }
    let value = ys.iter().sum::<f64>() / ys.len() as f64;
    let ones = vec![1.0; ys.len()];
    Ok(EstimateReport::with_weights(
        Population::Randomized,
        arm,
        Method::TrialOnly,
        value,
        &ones,
    ))
}

/// One requested estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub estimand: Population,
    pub method: Method,
    pub arm: Arm,
}

impl EstimatorSpec {
    pub fn new(estimand: Population, method: Method, arm: Arm) -> Self {
        Self {
            estimand,
            method,
            arm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = matches!(
            (self.estimand, self.method),
            (
                Population::Target,
                Method::GFormula | Method::IpwHt | Method::IpwHajek
            ) | (
                Population::NonRandomized,
                Method::GFormula | Method::IpwHajek
            ) | (Population::Randomized, Method::GFormula | Method::TrialOnly)
        );
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "method {} is not available for the {} mean",
                self.method, self.estimand
            )))
        }
    }

    /// Every supported estimand/method pair for both arms.
    pub fn all() -> Vec<EstimatorSpec> {
        let pairs = [
            (Population::Target, Method::GFormula),
            (Population::Target, Method::IpwHt),
            (Population::Target, Method::IpwHajek),
            (Population::NonRandomized, Method::GFormula),
            (Population::NonRandomized, Method::IpwHajek),
            (Population::Randomized, Method::GFormula),
            (Population::Randomized, Method::TrialOnly),
        ];
        let mut out = Vec::new();
        for (estimand, method) in pairs {
            for arm in Arm::BOTH {
                out.push(EstimatorSpec::new(estimand, method, arm));
            }
        }
        out
    }

    /// Refuses estimands the design cannot identify.
    pub fn check_identified(&self, design: &DesignSpec) -> Result<()> {
        match self.estimand.required_estimand() {
            Some(e) => design.require(e),
            None => Ok(()),
        }
    }
}

/// Fitted models an estimator may draw on.
#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub participation: Option<&'a ParticipationModel>,
    pub outcome: Option<&'a OutcomeModel>,
}

/// Runs one estimator. The identification gate is checked before models
/// are looked at.
pub fn run_estimator(
    data: &ObservedDataset,
    spec: &EstimatorSpec,
    models: Models<'_>,
    opts: &IpwOptions,
) -> Result<EstimateReport> {
    spec.validate()?;
    spec.check_identified(data.design())?;
    let outcome = || {
        models
            .outcome
            .ok_or_else(|| Error::invalid("outcome model required"))
    };
    let participation = || {
        models
            .participation
            .ok_or_else(|| Error::invalid("participation model required"))
    };
    match (spec.estimand, spec.method) {
        (Population::Target, Method::GFormula) => gformula_mean_target(data, outcome()?, spec.arm),
        (Population::Target, Method::IpwHt) => ipw_mean_target(
            data,
            participation()?,
            spec.arm,
            IpwVariant::HorvitzThompson,
            opts,
        ),
        (Population::Target, Method::IpwHajek) => {
            ipw_mean_target(data, participation()?, spec.arm, IpwVariant::Hajek, opts)
        }
        (Population::NonRandomized, Method::GFormula) => {
            gformula_mean_nonrandomized(data, outcome()?, spec.arm)
        }
        (Population::NonRandomized, Method::IpwHajek) => {
            ipw_mean_nonrandomized(data, participation()?, spec.arm, opts)
        }
        (Population::Randomized, Method::GFormula) => {
            gformula_mean_randomized(data, outcome()?, spec.arm)
        }
        (Population::Randomized, Method::TrialOnly) => trial_only_mean(data, spec.arm),
        _ => unreachable!("validated above"),
    }
}
