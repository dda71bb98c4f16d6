//! Trial-participation model `Pr[S = 1 | X]`.
//!
//! The model is a main-effects logistic regression fitted by weighted
//! maximum likelihood on the sampled rows. In nested designs, sampled
//! non-participants carry weight `1 / c` (or `1 / c(X1)`), so the weighted
//! objective has the same large-sample limit as the full-population
//! likelihood and the fit targets population coefficients directly. In a
//! non-nested design the sampling fraction `u` is unknown: the unweighted
//! fit recovers the population slopes, but its intercept is shifted to
//! `beta_0 - ln u` and only odds up to a constant factor are available.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::logistic;
use crate::domain::{DesignSpec, Estimand, ObservedDataset};
use crate::error::{Error, Result};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
pub const SEPARATION_BOUND: f64 = 30.0;
const MAX_HALVINGS: usize = 40;
const RANK_TOLERANCE: f64 = 1e-12;

/// What the fitted intercept means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    /// Coefficients of `Pr[S = 1 | X]` in the target population.
    #[serde(rename = "population")]
    Population,
    /// Non-nested fit: intercept is `beta_0 - ln u` with `u` unknown.
    #[serde(rename = "shifted")]
    Shifted,
    /// Unweighted fit on sub-sampled nested data: coefficients describe
    /// `Pr[S = 1 | X, D = 1]`; population odds follow by multiplying by
    /// the known sampling probability.
    #[serde(rename = "sample")]
    Sample,
}

/// How sampled non-participants are weighted in the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Inverse sampling probability for nested designs, unit weights for
    /// non-nested designs.
    #[default]
    Design,
    /// Unit weights everywhere.
    Unweighted,
}

/// Covariate basis of the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    #[default]
    MainEffects,
    /// Drops all covariates; used to stress misspecification.
    InterceptOnly,
}

impl Basis {
    pub fn width(self, p: usize) -> usize {
        match self {
            Basis::MainEffects => p + 1,
            Basis::InterceptOnly => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub basis: Basis,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Weighted log-likelihood divided by the weight total, at the optimum.
    pub objective: f64,
    /// Max-norm of the gradient of that normalized objective.
    pub grad_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationModel {
    coefficients: Vec<f64>,
    scale: Scale,
    #[serde(flatten)]
    diagnostics: FitDiagnostics,
}

impl ParticipationModel {
    pub fn new(coefficients: Vec<f64>, scale: Scale, diagnostics: FitDiagnostics) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(
                "participation coefficients must be finite and include an intercept",
            ));
        }
        Ok(Self {
            coefficients,
            scale,
            diagnostics,
        })
    }

    #[inline]
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    #[inline]
    pub fn scale(&self) -> Scale {
        self.scale
    }

    #[inline]
    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// `g0 + g'x`, using as many leading coordinates of `x` as there are
    /// slopes.
    #[inline]
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients[0] + self.slope_predictor(x)
    }

    /// `g'x` without the intercept.
    #[inline]
    pub fn slope_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients[1..]
            .iter()
            .zip(x)
            .map(|(g, v)| g * v)
            .sum()
    }

    /// Same model with the intercept moved by `delta`; multiplies every
    /// odds value by `exp(delta)`.
    pub fn with_intercept_shift(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.coefficients[0] += delta;
        out
    }
}

/// Weighted logistic log-likelihood, normalized by the total weight.
///
/// Rows are stored with a leading 1 for the intercept.
#[derive(Debug, Clone)]
pub struct WeightedLogistic {
    dim: usize,
    design: Vec<f64>,
    response: Vec<f64>,
    weights: Vec<f64>,
    weight_total: f64,
}

impl WeightedLogistic {
    /// `rows` are covariate vectors (without the intercept column).
    pub fn new<'a, I>(rows: I, dim: usize, response: Vec<bool>, weights: Vec<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut design = Vec::with_capacity(response.len() * dim);
        let mut n = 0;
        for x in rows {
            if x.len() + 1 < dim {
                return Err(Error::invalid("row shorter than the model basis"));
            }
            design.push(1.0);
            design.extend_from_slice(&x[..dim - 1]);
            n += 1;
        }
        if n != response.len() || n != weights.len() {
            return Err(Error::invalid(
                "rows, responses, and weights differ in length",
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!("invalid likelihood weight {w}")));
        }
        let weight_total: f64 = weights.iter().sum();
        if weight_total <= 0.0 {
            return Err(Error::InsufficientData(
                "total likelihood weight is zero".into(),
            ));
        }
        Ok(Self {
            dim,
            design,
            response: response
                .into_iter()
                .map(|s| if s { 1.0 } else { 0.0 })
                .collect(),
            weights,
            weight_total,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight_total(&self) -> f64 {
        self.weight_total
    }

    fn rows(&self) -> impl Iterator<Item = (&[f64], f64, f64)> + '_ {
        self.design
            .chunks_exact(self.dim)
            .zip(&self.response)
            .zip(&self.weights)
            .map(|((x, &s), &w)| (x, s, w))
    }

    #[inline]
    fn eta(x: &[f64], g: &[f64]) -> f64 {
        x.iter().zip(g).map(|(a, b)| a * b).sum()
    }

    /// `sum w [s log p + (1 - s) log(1 - p)] / sum w`.
    pub fn objective(&self, g: &[f64]) -> f64 {
        let mut total = 0.0;
        for (x, s, w) in self.rows() {
            total += w * log_lik(s, Self::eta(x, g));
        }
        total / self.weight_total
    }

    pub fn gradient(&self, g: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim];
        for (x, s, w) in self.rows() {
            let r = w * (s - logistic(Self::eta(x, g)));
            for (gj, xj) in grad.iter_mut().zip(x) {
                *gj += r * xj;
            }
        }
        grad.iter_mut().for_each(|v| *v /= self.weight_total);
        grad
    }

    /// Objective, gradient, and negative Hessian in one pass.
    fn evaluate(&self, g: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim;
        let mut obj = 0.0;
        let mut grad = DVector::zeros(d);
        let mut info = DMatrix::zeros(d, d);
        for (x, s, w) in self.rows() {
            let eta = Self::eta(x, g);
            let p = logistic(eta);
            obj += w * log_lik(s, eta);
            let r = w * (s - p);
            let v = w * p * (1.0 - p);
            for a in 0..d {
                grad[a] += r * x[a];
                for b in 0..=a {
                    info[(a, b)] += v * x[a] * x[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        let t = self.weight_total;
        (obj / t, grad / t, info / t)
    }

    /// Newton-Raphson with step halving. Stops when the gradient max-norm
    /// drops below [`GRADIENT_TOLERANCE`].
    pub fn maximize(&self) -> Result<(Vec<f64>, FitDiagnostics)> {
        let mut g = vec![0.0; self.dim];
        let (mut obj, mut grad, mut info) = self.evaluate(&g);
        for iter in 0..=MAX_ITERATIONS {
            let grad_norm = grad.amax();
            if grad_norm < GRADIENT_TOLERANCE {
                return Ok((
                    g,
                    FitDiagnostics {
                        objective: obj,
                        grad_norm,
                        iterations: iter,
                    },
                ));
            }
            if iter == MAX_ITERATIONS {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    grad_norm,
                });
            }
            let step = solve_information(&info, &grad)?;
            let mut t = 1.0;
            let mut candidate: Vec<f64>;
            let mut halvings = 0;
            loop {
                candidate = g.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
                let cand_obj = self.objective(&candidate);
                if cand_obj >= obj || halvings == MAX_HALVINGS {
                    break;
                }
                t *= 0.5;
                halvings += 1;
            }
            if let Some((index, value)) = candidate
                .iter()
                .enumerate()
                .find(|(_, c)| c.abs() > SEPARATION_BOUND || !c.is_finite())
            {
                return Err(Error::SeparationDetected {
                    iteration: iter + 1,
                    index,
                    value: *value,
                });
            }
            g = candidate;
            (obj, grad, info) = self.evaluate(&g);
        }
        unreachable!("loop returns on its last iteration")
    }
}

/// Solves `info * step = grad`, refusing numerically singular systems.
fn solve_information(info: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = info.diagonal().amax();
    let singular = || Error::RankDeficient {
        context: "participation information matrix is singular".into(),
    };
    let chol = info.clone().cholesky().ok_or_else(singular)?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d * d)
        .fold(f64::INFINITY, f64::min);
    // negated so that NaN also counts as singular
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(min_pivot > RANK_TOLERANCE * scale) {
        return Err(singular());
    }
    Ok(chol.solve(grad))
}

/// `s log p + (1 - s) log(1 - p)` with `p = logistic(eta)`, evaluated
/// without cancellation.
#[inline]
fn log_lik(s: f64, eta: f64) -> f64 {
    // log p = -softplus(-eta), log(1 - p) = -softplus(eta)
    -(s * softplus(-eta) + (1.0 - s) * softplus(eta))
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Likelihood weight of one sampled row.
#[inline]
pub fn likelihood_weight(
    design: &DesignSpec,
    is_trial: bool,
    x: &[f64],
    weighting: Weighting,
) -> f64 {
    if is_trial || weighting == Weighting::Unweighted {
        return 1.0;
    }
    design
        .known_sampling_probability(x)
        .map_or(1.0, |c| 1.0 / c)
}

/// Builds the participation likelihood for a dataset.
pub fn participation_likelihood(
    data: &ObservedDataset,
    opts: &FitOptions,
) -> Result<WeightedLogistic> {
    let design = data.design();
    let records = data.records();
    let response = records.iter().map(|r| r.is_trial()).collect();
    let weights = records
        .iter()
        .map(|r| likelihood_weight(design, r.is_trial(), r.x(), opts.weighting))
        .collect();
    WeightedLogistic::new(
        records.iter().map(|r| r.x()),
        opts.basis.width(data.p()),
        response,
        weights,
    )
}

/// Fits the participation model with design weights and main effects.
pub fn fit_participation(data: &ObservedDataset) -> Result<ParticipationModel> {
    fit_participation_with(data, &FitOptions::default())
}

pub fn fit_participation_with(
    data: &ObservedDataset,
    opts: &FitOptions,
) -> Result<ParticipationModel> {
    if data.n_external() == 0 {
        return Err(Error::NoExternalRows);
    }
    let problem = participation_likelihood(data, opts)?;
    let (coefficients, diagnostics) = problem.maximize()?;
    let scale = match (data.design(), opts.weighting) {
        (DesignSpec::NonNested { .. }, _) => Scale::Shifted,
        (DesignSpec::CensusNested, _) | (_, Weighting::Design) => Scale::Population,
        (_, Weighting::Unweighted) => Scale::Sample,
    };
    ParticipationModel::new(coefficients, scale, diagnostics)
}

/// `Pr[S = 1] = {1 + (n_{S=0,D=1} / n_{S=1}) / c}^{-1}`.
///
/// With a covariate-dependent `c(X1)` the count of sampled non-participants
/// is replaced by the sum of their inverse sampling probabilities.
pub fn marginal_participation_probability(data: &ObservedDataset) -> Result<f64> {
    let design = data.design();
    design.require(Estimand::MarginalParticipation)?;
    let n1 = data.n_trial() as f64;
    if let Some(c) = design.constant_c() {
        let n0 = data.n_external() as f64;
        return Ok(1.0 / (1.0 + (n0 / n1) / c));
    }
    let expanded: f64 = data
        .external_rows()
        .map(|x| 1.0 / design.known_sampling_probability(x).expect("nested design"))
        .sum();
    Ok(1.0 / (1.0 + expanded / n1))
}

/// `exp(g0 + g'x)`: the target-population odds of participation times an
/// unknown positive constant (the constant is 1 for population-scale
/// models, `1/u` for non-nested fits, `1/c` for unweighted nested fits).
#[inline]
pub fn participation_odds_up_to_constant(model: &ParticipationModel, x: &[f64]) -> f64 {
    model.linear_predictor(x).exp()
}

/// Population log-odds of participation at `x`.
pub fn log_odds_population(
    model: &ParticipationModel,
    design: &DesignSpec,
    x: &[f64],
) -> Result<f64> {
    let not_identified = || Error::NotIdentifiable {
        estimand: Estimand::ConditionalParticipation,
        design: design.name(),
    };
    let c = design
        .known_sampling_probability(x)
        .ok_or_else(not_identified)?;
    match model.scale() {
        Scale::Population => Ok(model.linear_predictor(x)),
        Scale::Sample => Ok(model.linear_predictor(x) + c.ln()),
        Scale::Shifted => Err(not_identified()),
    }
}

/// Population odds `Pr[S=1|X] / Pr[S=0|X]`: the sample odds times the known
/// sampling probability for unweighted fits, the fitted odds directly for
/// design-weighted fits.
pub fn odds_population(model: &ParticipationModel, design: &DesignSpec, x: &[f64]) -> Result<f64> {
    match model.scale() {
        Scale::Sample => {
            let c = design
                .known_sampling_probability(x)
                .ok_or(Error::NotIdentifiable {
                    estimand: Estimand::ConditionalParticipation,
                    design: design.name(),
                })?;
            Ok(participation_odds_up_to_constant(model, x) * c)
        }
        _ => log_odds_population(model, design, x).map(f64::exp),
    }
}

/// `Pr[S = 1 | X = x]` in the target population.
pub fn participation_probability(
    model: &ParticipationModel,
    design: &DesignSpec,
    x: &[f64],
) -> Result<f64> {
    log_odds_population(model, design, x).map(logistic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Arm, ObservedRecord, SamplingTable, TreatmentProb};

    fn dataset(
        n_trial: usize,
        n_ext: usize,
        design: DesignSpec,
        unsampled: Option<usize>,
    ) -> ObservedDataset {
        let mut rows = Vec::new();
        for i in 0..n_trial {
            let a = if i % 2 == 0 {
                Arm::Treated
            } else {
                Arm::Control
            };
            rows.push(ObservedRecord::TrialParticipant {
                x: vec![],
                a,
                y: 0.0,
            });
        }
        for _ in 0..n_ext {
            rows.push(ObservedRecord::SampledNonRandomized { x: vec![] });
        }
        ObservedDataset::new(rows, unsampled, design, 0, TreatmentProb::default()).unwrap()
    }

    #[test]
    fn intercept_only_census_is_log_odds() {
        let ds = dataset(3, 2, DesignSpec::CensusNested, Some(0));
        let m = fit_participation(&ds).unwrap();
        assert!((m.coefficients()[0] - (1.5f64).ln()).abs() < 1e-7);
        assert_eq!(m.scale(), Scale::Population);
        assert!(m.diagnostics().grad_norm < GRADIENT_TOLERANCE);
    }

    #[test]
    fn intercept_only_weighted_subsample() {
        // score: 3 (1 - p) = 2 p  =>  p = 3/5, logit = ln(3/2)
        let ds = dataset(3, 1, DesignSpec::subsampled(0.5), Some(1));
        let m = fit_participation(&ds).unwrap();
        assert!((m.coefficients()[0] - (1.5f64).ln()).abs() < 1e-7);
    }

    #[test]
    fn unweighted_subsample_is_sample_scale() {
        let ds = dataset(3, 1, DesignSpec::subsampled(0.5), Some(1));
        let m = fit_participation_with(
            &ds,
            &FitOptions {
                weighting: Weighting::Unweighted,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.scale(), Scale::Sample);
        assert!((m.coefficients()[0] - 3f64.ln()).abs() < 1e-7);
        // odds 3 * c = 1.5 match the weighted fit
        let odds = odds_population(&m, ds.design(), &[]).unwrap();
        assert!((odds - 1.5).abs() < 1e-7);
    }

    #[test]
    fn non_nested_fit_is_shifted_and_gated() {
        let ds = dataset(4, 2, DesignSpec::NonNested { u_hidden: None }, None);
        let m = fit_participation(&ds).unwrap();
        assert_eq!(m.scale(), Scale::Shifted);
        assert!(matches!(
            participation_probability(&m, ds.design(), &[]),
            Err(Error::NotIdentifiable { .. })
        ));
        assert!(matches!(
            odds_population(&m, ds.design(), &[]),
            Err(Error::NotIdentifiable { .. })
        ));
        assert!(
            (participation_odds_up_to_constant(&m, &[]) - 2.0).abs() < 1e-7,
            "{m:?}"
        );
    }

    #[test]
    fn shifted_model_is_gated_even_with_nested_design() {
        let m = ParticipationModel::new(
            vec![0.3],
            Scale::Shifted,
            FitDiagnostics {
                objective: 0.0,
                grad_norm: 0.0,
                iterations: 0,
            },
        )
        .unwrap();
        assert!(participation_probability(&m, &DesignSpec::CensusNested, &[]).is_err());
    }

    #[test]
    fn zero_coefficients_give_one_half() {
        let m = ParticipationModel::new(
            vec![0.0, 0.0, 0.0],
            Scale::Population,
            FitDiagnostics {
                objective: 0.0,
                grad_norm: 0.0,
                iterations: 0,
            },
        )
        .unwrap();
        for x in [[0.0, 0.0], [3.0, -1.0], [-10.0, 5.0]] {
            assert_eq!(
                participation_probability(&m, &DesignSpec::CensusNested, &x).unwrap(),
                0.5
            );
            assert_eq!(participation_odds_up_to_constant(&m, &x), 1.0);
        }
    }

    #[test]
    fn census_odds_equal_sample_odds() {
        let m = ParticipationModel::new(
            vec![0.2, -0.7],
            Scale::Sample,
            FitDiagnostics {
                objective: 0.0,
                grad_norm: 0.0,
                iterations: 0,
            },
        )
        .unwrap();
        let x = [1.3];
        assert_eq!(
            odds_population(&m, &DesignSpec::CensusNested, &x).unwrap(),
            participation_odds_up_to_constant(&m, &x)
        );
    }

    #[test]
    fn marginal_probability_fixture() {
        let ds = dataset(200, 300, DesignSpec::subsampled(0.25), Some(900));
        let p = marginal_participation_probability(&ds).unwrap();
        assert!((p - 1.0 / 7.0).abs() <= 2.0 * f64::EPSILON);
        let census = dataset(200, 1200, DesignSpec::CensusNested, Some(0));
        assert!(
            (marginal_participation_probability(&census).unwrap() - 1.0 / 7.0).abs()
                <= 2.0 * f64::EPSILON
        );
        let nn = dataset(200, 300, DesignSpec::NonNested { u_hidden: None }, None);
        assert!(matches!(
            marginal_participation_probability(&nn),
            Err(Error::NotIdentifiable {
                estimand: Estimand::MarginalParticipation,
                ..
            })
        ));
    }

    #[test]
    fn marginal_probability_with_covariate_table() {
        let rows = vec![
            ObservedRecord::TrialParticipant {
                x: vec![1.0],
                a: Arm::Treated,
                y: 0.0,
            },
            ObservedRecord::TrialParticipant {
                x: vec![-1.0],
                a: Arm::Control,
                y: 0.0,
            },
            ObservedRecord::SampledNonRandomized { x: vec![-1.0] },
            ObservedRecord::SampledNonRandomized { x: vec![2.0] },
        ];
        let design = DesignSpec::SubsampledNestedCovariate {
            c_table: SamplingTable::step(0, 0.0, 0.2, 0.8),
        };
        let ds = ObservedDataset::new(rows, Some(3), design, 1, TreatmentProb::default()).unwrap();
        // 2 / (2 + 5 + 1.25)
        let p = marginal_participation_probability(&ds).unwrap();
        assert!((p - 2.0 / 8.25).abs() < 1e-15);
    }

    #[test]
    fn perfect_separation_is_detected() {
        let rows = vec![
            ObservedRecord::TrialParticipant {
                x: vec![0.1],
                a: Arm::Treated,
                y: 0.0,
            },
            ObservedRecord::TrialParticipant {
                x: vec![0.2],
                a: Arm::Control,
                y: 0.0,
            },
            ObservedRecord::SampledNonRandomized { x: vec![-0.1] },
            ObservedRecord::SampledNonRandomized { x: vec![-0.2] },
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
            fit_participation(&ds),
            Err(Error::SeparationDetected { .. })
        ));
    }

    #[test]
    fn collinear_columns_are_rank_deficient() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let v = (i as f64 * 0.37).sin();
            rows.push(if i % 3 == 0 {
                ObservedRecord::SampledNonRandomized { x: vec![v, v] }
            } else {
                ObservedRecord::TrialParticipant {
                    x: vec![v, v],
                    a: if i % 2 == 0 {
                        Arm::Treated
                    } else {
                        Arm::Control
                    },
                    y: 0.0,
                }
            });
        }
        let ds = ObservedDataset::new(
            rows,
            Some(0),
            DesignSpec::CensusNested,
            2,
            TreatmentProb::default(),
        )
        .unwrap();
        assert!(matches!(
            fit_participation(&ds),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn intercept_shift_scales_odds() {
        let m = ParticipationModel::new(
            vec![-0.4, 0.9],
            Scale::Shifted,
            FitDiagnostics {
                objective: 0.0,
                grad_norm: 0.0,
                iterations: 0,
            },
        )
        .unwrap();
        let shifted = m.with_intercept_shift(10f64.ln());
        for x in [-2.0, 0.0, 0.5, 3.0] {
            let r = participation_odds_up_to_constant(&shifted, &[x])
                / participation_odds_up_to_constant(&m, &[x]);
            assert!((r - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn model_json_shape() {
        let m = ParticipationModel::new(
            vec![1.0, 2.0],
            Scale::Shifted,
            FitDiagnostics {
                objective: -0.5,
                grad_norm: 1e-10,
                iterations: 5,
            },
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["scale"], "shifted");
        assert_eq!(v["iterations"], 5);
        assert_eq!(v["coefficients"][1], 2.0);
        let back: ParticipationModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
