//! Core data model: covariates, simulator-side truth records, the
//! design-masked observed data, and the sampling-design taxonomy.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_index(a: u8) -> Result<Self> {
        match a {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treated),
            other => Err(Error::invalid(format!(
                "treatment arm must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl TryFrom<u8> for Arm {
    type Error = Error;
    fn try_from(a: u8) -> Result<Self> {
        Arm::from_index(a)
    }
}

impl From<Arm> for u8 {
    fn from(a: Arm) -> u8 {
        a.index() as u8
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Baseline covariates `X = (X1, X2)`, where the first `aux_split`
/// coordinates are auxiliary covariates known for the whole actual
/// population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector {
    values: Vec<f64>,
    aux_split: usize,
}

impl CovariateVector {
    pub fn new(values: Vec<f64>, aux_split: usize) -> Result<Self> {
        if aux_split > values.len() {
            return Err(Error::invalid(format!(
                "aux split {aux_split} exceeds covariate dimension {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite covariate value {v}")));
        }
        Ok(Self { values, aux_split })
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn aux_split(&self) -> usize {
        self.aux_split
    }

    /// Auxiliary block `X1`.
    pub fn auxiliary(&self) -> &[f64] {
        &self.values[..self.aux_split]
    }

    /// Remaining block `X2`, observed only for sampled units.
    pub fn remaining(&self) -> &[f64] {
        &self.values[self.aux_split..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// One unit of the actual population with both potential outcomes.
/// Simulator-side only; estimators never see these.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub x: CovariateVector,
    /// Trial participation `S`.
    pub s: bool,
    /// Assigned treatment, present only for trial participants.
    pub a: Option<Arm>,
    pub y0: f64,
    pub y1: f64,
    /// Realized outcome. Trial participants follow consistency; for
    /// non-participants this is the untreated outcome `y0`.
    pub y: f64,
    /// Sampling indicator `D`.
    pub d: bool,
}

impl TruthRecord {
    pub fn potential(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.y0,
            Arm::Treated => self.y1,
        }
    }
}

/// A row of the analysis data. Non-sampled non-randomized units carry no
/// data at all and only appear as a tally on [`ObservedDataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum ObservedRecord {
    TrialParticipant { x: Vec<f64>, a: Arm, y: f64 },
    SampledNonRandomized { x: Vec<f64> },
}

impl ObservedRecord {
    #[inline]
    pub fn x(&self) -> &[f64] {
        match self {
            ObservedRecord::TrialParticipant { x, .. } => x,
            ObservedRecord::SampledNonRandomized { x } => x,
        }
    }

    #[inline]
    pub fn is_trial(&self) -> bool {
        matches!(self, ObservedRecord::TrialParticipant { .. })
    }
}

/// Step function `c(X1)` giving the sampling probability of a
/// non-randomized unit from one auxiliary coordinate.
///
/// `probs[j]` applies when exactly `j` thresholds lie strictly below the
/// coordinate value, so `thresholds = [0]`, `probs = [0.2, 0.8]` encodes
/// `c(X1) = 0.2 + 0.6 * 1{X1 > 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingTable {
    /// Number of leading covariates treated as auxiliary (`k`).
    pub aux_split: usize,
    /// Auxiliary coordinate the table is keyed on; must be `< aux_split`.
    pub coordinate: usize,
    pub thresholds: Vec<f64>,
    pub probs: Vec<f64>,
}

impl SamplingTable {
    pub fn step(coordinate: usize, threshold: f64, below: f64, above: f64) -> Self {
        Self {
            aux_split: coordinate + 1,
            coordinate,
            thresholds: vec![threshold],
            probs: vec![below, above],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coordinate >= self.aux_split {
            return Err(Error::invalid(format!(
                "c_table coordinate {} is not auxiliary (k = {})",
                self.coordinate, self.aux_split
            )));
        }
        if self.probs.len() != self.thresholds.len() + 1 {
            return Err(Error::invalid(
                "c_table needs exactly one more probability than thresholds",
            ));
        }
        if !self.thresholds.iter().all(|t| t.is_finite())
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid(
                "c_table thresholds must be finite and strictly increasing",
            ));
        }
        if let Some(c) = self.probs.iter().find(|&&c| !(c > 0.0 && c <= 1.0)) {
            return Err(Error::invalid(format!(
                "c_table probabilities must lie in (0, 1], got {c}"
            )));
        }
        Ok(())
    }

    /// Index of the cell containing `x`.
    pub fn cell(&self, x: &[f64]) -> usize {
        let v = x[self.coordinate];
        self.thresholds.iter().filter(|&&t| v > t).count()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.probs[self.cell(x)]
    }
}

/// Unknown sampling fraction of a non-nested design. Only the simulator
/// can read it; estimators see a redacted design without it.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HiddenFraction(f64);

impl HiddenFraction {
    pub fn new(u: f64) -> Result<Self> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::invalid(format!(
                "sampling fraction u must lie in (0, 1], got {u}"
            )));
        }
        Ok(Self(u))
    }

    #[inline]
    pub(crate) fn reveal(self) -> f64 {
        self.0
    }
}

impl fmt::Debug for HiddenFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("HiddenFraction(<sealed>)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    CensusNested,
    SubsampledNested {
        c: f64,
    },
    SubsampledNestedCovariate {
        c_table: SamplingTable,
    },
    NonNested {
        #[serde(rename = "u", default, skip_serializing_if = "Option::is_none")]
        u_hidden: Option<HiddenFraction>,
    },
}

impl DesignSpec {
    pub fn subsampled(c: f64) -> Self {
        DesignSpec::SubsampledNested { c }
    }

    pub fn non_nested(u: f64) -> Result<Self> {
        Ok(DesignSpec::NonNested {
            u_hidden: Some(HiddenFraction::new(u)?),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DesignSpec::CensusNested => Ok(()),
            DesignSpec::SubsampledNested { c } => {
                if *c > 0.0 && *c <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "sampling probability c must lie in (0, 1], got {c}"
                    )))
                }
            }
            DesignSpec::SubsampledNestedCovariate { c_table } => c_table.validate(),
            DesignSpec::NonNested { u_hidden } => match u_hidden {
                Some(u) => HiddenFraction::new(u.0).map(|_| ()),
                None => Ok(()),
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DesignSpec::CensusNested => "census_nested",
            DesignSpec::SubsampledNested { .. } => "subsampled_nested",
            DesignSpec::SubsampledNestedCovariate { .. } => "subsampled_nested_covariate",
            DesignSpec::NonNested { .. } => "non_nested",
        }
    }

    #[inline]
    pub fn is_nested(&self) -> bool {
        !matches!(self, DesignSpec::NonNested { .. })
    }

    /// Number of auxiliary covariates `k` the design relies on.
    pub fn aux_split(&self) -> usize {
        match self {
            DesignSpec::SubsampledNestedCovariate { c_table } => c_table.aux_split,
            _ => 0,
        }
    }

    /// Known sampling probability of a non-randomized unit with covariates
    /// `x`; `None` under a non-nested design.
    #[inline]
    pub fn known_sampling_probability(&self, x: &[f64]) -> Option<f64> {
        match self {
            DesignSpec::CensusNested => Some(1.0),
            DesignSpec::SubsampledNested { c } => Some(*c),
            DesignSpec::SubsampledNestedCovariate { c_table } => Some(c_table.eval(x)),
            DesignSpec::NonNested { .. } => None,
        }
    }

    /// Constant sampling probability, if the design has one.
    pub fn constant_c(&self) -> Option<f64> {
        match self {
            DesignSpec::CensusNested => Some(1.0),
            DesignSpec::SubsampledNested { c } => Some(*c),
            _ => None,
        }
    }

    /// Simulator-side keep probability, including the hidden `u`.
    pub(crate) fn keep_probability(&self, x: &[f64]) -> Result<f64> {
        match self {
            DesignSpec::NonNested { u_hidden: Some(u) } => Ok(u.reveal()),
            DesignSpec::NonNested { u_hidden: None } => Err(Error::invalid(
                "non-nested design used for sampling needs a sampling fraction u",
            )),
            nested => Ok(nested.known_sampling_probability(x).expect("nested design")),
        }
    }

    /// Estimator-facing view: identical except that `u` is dropped.
    pub fn redacted(&self) -> Self {
        match self {
            DesignSpec::NonNested { .. } => DesignSpec::NonNested { u_hidden: None },
            other => other.clone(),
        }
    }

    pub fn identifies(&self, estimand: Estimand) -> bool {
        identification_matrix(self).contains(&estimand)
    }

    pub(crate) fn require(&self, estimand: Estimand) -> Result<()> {
        if self.identifies(estimand) {
            Ok(())
        } else {
            Err(Error::NotIdentifiable {
                estimand,
                design: self.name(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// `E[Y^a]` in the target population.
    MeanTarget,
    /// `E[Y^a | S = 0]`.
    MeanNonRandomized,
    /// `Pr[S = 1]`.
    MarginalParticipation,
    /// `Pr[S = 1 | X]`.
    ConditionalParticipation,
}

impl Estimand {
    pub const ALL: [Estimand; 4] = [
        Estimand::MeanTarget,
        Estimand::MeanNonRandomized,
        Estimand::MarginalParticipation,
        Estimand::ConditionalParticipation,
    ];
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Estimand::MeanTarget => "E[Y^a]",
            Estimand::MeanNonRandomized => "E[Y^a | S = 0]",
            Estimand::MarginalParticipation => "Pr[S = 1]",
            Estimand::ConditionalParticipation => "Pr[S = 1 | X]",
        };
        f.write_str(s)
    }
}

/// Which quantities a design identifies.
///
/// Nested designs (census or sub-sampled with known `c` or `c(X1)`)
/// identify everything; a non-nested design identifies only the
/// potential outcome means among non-randomized individuals.
pub fn identification_matrix(design: &DesignSpec) -> BTreeSet<Estimand> {
    if design.is_nested() {
        Estimand::ALL.into_iter().collect()
    } else {
        BTreeSet::from([Estimand::MeanNonRandomized])
    }
}

/// `Pr[A = 1 | X, S = 1]`, fixed by the trial protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreatmentProb(f64);

impl TreatmentProb {
    pub fn new(p_treated: f64) -> Result<Self> {
        if !(p_treated > 0.0 && p_treated < 1.0) {
            return Err(Error::invalid(format!(
                "treatment probability must lie in (0, 1), got {p_treated}"
            )));
        }
        Ok(Self(p_treated))
    }

    #[inline]
    pub fn treated(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn for_arm(self, arm: Arm) -> f64 {
        match arm {
            Arm::Treated => self.0,
            Arm::Control => 1.0 - self.0,
        }
    }
}

impl Default for TreatmentProb {
    fn default() -> Self {
        Self(0.5)
    }
}

/// Design-masked analysis data.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    records: Vec<ObservedRecord>,
    n_unsampled_nonrandomized: Option<usize>,
    design: DesignSpec,
    p: usize,
    k: usize,
    treatment_prob: TreatmentProb,
}

impl ObservedDataset {
    /// Validates and assembles a dataset. The design is stored redacted.
    pub fn new(
        records: Vec<ObservedRecord>,
        n_unsampled_nonrandomized: Option<usize>,
        design: DesignSpec,
        p: usize,
        treatment_prob: TreatmentProb,
    ) -> Result<Self> {
        design.validate()?;
        let k = design.aux_split();
        if k > p {
            return Err(Error::invalid(format!(
                "design uses {k} auxiliary covariates but rows have only {p}"
            )));
        }
        match (design.is_nested(), n_unsampled_nonrandomized) {
            (true, None) => {
                return Err(Error::invalid(
                    "nested designs must record the number of unsampled non-randomized units",
                ))
            }
            (false, Some(_)) => {
                return Err(Error::invalid(
                    "non-nested designs cannot know the number of unsampled non-randomized units",
                ))
            }
            _ => {}
        }
        if matches!(design, DesignSpec::CensusNested) && n_unsampled_nonrandomized != Some(0) {
            return Err(Error::invalid("a census leaves no unsampled units"));
        }
        let mut arm_counts = [0usize; 2];
        for (i, r) in records.iter().enumerate() {
            let x = r.x();
            if x.len() != p {
                return Err(Error::invalid(format!(
                    "row {i} has {} covariates, expected {p}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "row {i} has a non-finite covariate"
                )));
            }
            if let ObservedRecord::TrialParticipant { a, y, .. } = r {
                if !y.is_finite() {
                    return Err(Error::invalid(format!("row {i} has a non-finite outcome")));
                }
                arm_counts[a.index()] += 1;
            }
        }
        if arm_counts.contains(&0) {
            return Err(Error::InsufficientData(format!(
                "need at least one trial participant per arm, got {arm_counts:?}"
            )));
        }
        Ok(Self {
            records,
            n_unsampled_nonrandomized,
            design: design.redacted(),
            p,
            k,
            treatment_prob,
        })
    }

    #[inline]
    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    #[inline]
    pub fn n_unsampled_nonrandomized(&self) -> Option<usize> {
        self.n_unsampled_nonrandomized
    }

    #[inline]
    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn treatment_prob(&self) -> TreatmentProb {
        self.treatment_prob
    }

    pub fn trial_rows(&self) -> impl Iterator<Item = (&[f64], Arm, f64)> + '_ {
        self.records.iter().filter_map(|r| match r {
            ObservedRecord::TrialParticipant { x, a, y } => Some((x.as_slice(), *a, *y)),
            _ => None,
        })
    }

    pub fn arm_rows(&self, arm: Arm) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.trial_rows()
            .filter(move |(_, a, _)| *a == arm)
            .map(|(x, _, y)| (x, y))
    }

    pub fn external_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.records.iter().filter_map(|r| match r {
            ObservedRecord::SampledNonRandomized { x } => Some(x.as_slice()),
            _ => None,
        })
    }

    pub fn n_trial(&self) -> usize {
        self.records.iter().filter(|r| r.is_trial()).count()
    }

    pub fn n_external(&self) -> usize {
        self.records.len() - self.n_trial()
    }

    pub fn n_arm(&self, arm: Arm) -> usize {
        self.arm_rows(arm).count()
    }

    /// Actual-population size, known only for nested designs.
    pub fn population_size(&self) -> Option<usize> {
        self.n_unsampled_nonrandomized
            .map(|u| u + self.records.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(x: f64, a: Arm, y: f64) -> ObservedRecord {
        ObservedRecord::TrialParticipant { x: vec![x], a, y }
    }

    fn ext(x: f64) -> ObservedRecord {
        ObservedRecord::SampledNonRandomized { x: vec![x] }
    }

    #[test]
    fn identification_matrix_by_design() {
        let all: BTreeSet<_> = Estimand::ALL.into_iter().collect();
        assert_eq!(identification_matrix(&DesignSpec::CensusNested), all);
        assert_eq!(identification_matrix(&DesignSpec::subsampled(0.3)), all);
        assert_eq!(
            identification_matrix(&DesignSpec::SubsampledNestedCovariate {
                c_table: SamplingTable::step(0, 0.0, 0.2, 0.8)
            }),
            all
        );
        assert_eq!(
            identification_matrix(&DesignSpec::non_nested(0.4).unwrap()),
            BTreeSet::from([Estimand::MeanNonRandomized])
        );
        assert_eq!(
            identification_matrix(&DesignSpec::subsampled(1.0)),
            identification_matrix(&DesignSpec::CensusNested)
        );
    }

    #[test]
    fn step_table_matches_indicator_form() {
        let t = SamplingTable::step(0, 0.0, 0.2, 0.8);
        t.validate().unwrap();
        assert_eq!(t.eval(&[-1.0]), 0.2);
        assert_eq!(t.eval(&[0.0]), 0.2);
        assert_eq!(t.eval(&[1e-12]), 0.8);
    }

    #[test]
    fn table_rejects_nonpositive_probabilities() {
        let mut t = SamplingTable::step(0, 0.0, 0.0, 0.8);
        assert!(t.validate().is_err());
        t.probs = vec![0.5, 1.2];
        assert!(t.validate().is_err());
    }

    #[test]
    fn design_bounds() {
        assert!(DesignSpec::subsampled(0.0).validate().is_err());
        assert!(DesignSpec::subsampled(1.5).validate().is_err());
        assert!(DesignSpec::non_nested(0.0).is_err());
    }

    #[test]
    fn redaction_hides_u() {
        let d = DesignSpec::non_nested(0.25).unwrap();
        assert_eq!(d.keep_probability(&[]).unwrap(), 0.25);
        let r = d.redacted();
        assert!(r.keep_probability(&[]).is_err());
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"variant":"non_nested"}"#
        );
        assert!(!format!("{d:?}").contains("0.25"));
    }

    #[test]
    fn design_json_shapes() {
        let d: DesignSpec =
            serde_json::from_str(r#"{"variant":"subsampled_nested","c":0.25}"#).unwrap();
        assert_eq!(d, DesignSpec::subsampled(0.25));
        let d: DesignSpec = serde_json::from_str(r#"{"variant":"non_nested","u":0.1}"#).unwrap();
        assert_eq!(d.keep_probability(&[]).unwrap(), 0.1);
        assert!(serde_json::from_str::<DesignSpec>(r#"{"variant":"census"}"#).is_err());
    }

    #[test]
    fn dataset_invariants() {
        let rows = vec![
            trial(0.0, Arm::Treated, 1.0),
            trial(1.0, Arm::Control, 2.0),
            ext(0.5),
        ];
        let ds = ObservedDataset::new(
            rows.clone(),
            Some(0),
            DesignSpec::CensusNested,
            1,
            TreatmentProb::default(),
        )
        .unwrap();
        assert_eq!(ds.n_trial(), 2);
        assert_eq!(ds.n_external(), 1);
        assert_eq!(ds.population_size(), Some(3));

        // unsampled tally present iff nested
        let nn = DesignSpec::non_nested(0.5).unwrap();
        assert!(ObservedDataset::new(
            rows.clone(),
            Some(3),
            nn.clone(),
            1,
            TreatmentProb::default()
        )
        .is_err());
        let ds = ObservedDataset::new(rows.clone(), None, nn, 1, TreatmentProb::default()).unwrap();
        assert_eq!(ds.design(), &DesignSpec::NonNested { u_hidden: None });
        assert!(ObservedDataset::new(
            rows.clone(),
            None,
            DesignSpec::subsampled(0.5),
            1,
            TreatmentProb::default()
        )
        .is_err());
        assert!(ObservedDataset::new(
            rows.clone(),
            Some(2),
            DesignSpec::CensusNested,
            1,
            TreatmentProb::default()
        )
        .is_err());

        // both arms required
        let one_arm = vec![trial(0.0, Arm::Treated, 1.0), ext(0.5)];
        assert!(matches!(
            ObservedDataset::new(
                one_arm,
                Some(0),
                DesignSpec::CensusNested,
                1,
                TreatmentProb::default()
            ),
            Err(Error::InsufficientData(_))
        ));

        // dimension check
        assert!(ObservedDataset::new(
            rows,
            Some(0),
            DesignSpec::CensusNested,
            2,
            TreatmentProb::default()
        )
        .is_err());
    }

    #[test]
    fn covariate_blocks() {
        let x = CovariateVector::new(vec![1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(x.auxiliary(), &[1.0]);
        assert_eq!(x.remaining(), &[2.0, 3.0]);
        assert!(CovariateVector::new(vec![1.0], 2).is_err());
        assert!(CovariateVector::new(vec![f64::NAN], 0).is_err());
    }

    #[test]
    fn treatment_prob_per_arm() {
        let e = TreatmentProb::new(0.3).unwrap();
        assert_eq!(e.for_arm(Arm::Treated), 0.3);
        assert_eq!(e.for_arm(Arm::Control), 0.7);
        assert!(TreatmentProb::new(1.0).is_err());
    }
}
