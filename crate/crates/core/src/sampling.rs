//! Applying a sampling design to an actual population.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::domain::{DesignSpec, ObservedDataset, ObservedRecord, TreatmentProb, TruthRecord};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Sampling indicators `D` for every unit. Participants are always kept;
/// each non-participant is kept independently with its design probability.
pub fn sampling_indicators(
    population: &[TruthRecord],
    design: &DesignSpec,
    seed: u64,
) -> Result<Vec<bool>> {
    design.validate()?;
    population
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.s {
                return Ok(true);
            }
            let keep = design.keep_probability(r.x.values())?;
            if keep >= 1.0 {
                return Ok(true);
            }
            let mut g = rng::stream(seed, Purpose::Sampling, i as u64);
            Ok(g.random::<f64>() < keep)
        })
        .collect()
}

/// Sets `d` on each record in place.
pub fn mark_sampled(population: &mut [TruthRecord], design: &DesignSpec, seed: u64) -> Result<()> {
    let d = sampling_indicators(population, design, seed)?;
    for (r, keep) in population.iter_mut().zip(d) {
        r.d = keep;
    }
    Ok(())
}

/// Produces the design-masked analysis data.
///
/// Trial participants keep `(x, a, y)`, sampled non-participants keep only
/// `x`, and unsampled non-participants become a count that is recorded for
/// nested designs and discarded for non-nested ones.
pub fn apply_design(
    population: &[TruthRecord],
    design: &DesignSpec,
    treatment_prob: TreatmentProb,
    seed: u64,
) -> Result<ObservedDataset> {
    let first = population
        .first()
        .ok_or_else(|| Error::invalid("population is empty"))?;
    if !population.iter().any(|r| r.s) {
        return Err(Error::InsufficientData(
            "population has no trial participants".into(),
        ));
    }
    let p = first.x.len();
    let kept = sampling_indicators(population, design, seed)?;
    let mut records = Vec::with_capacity(kept.iter().filter(|&&k| k).count());
    let mut dropped = 0usize;
    for (r, keep) in population.iter().zip(kept) {
        if r.s {
            let a =
                r.a.ok_or_else(|| Error::invalid("trial participant without treatment"))?;
            records.push(ObservedRecord::TrialParticipant {
                x: r.x.values().to_vec(),
                a,
                y: r.y,
            });
        } else if keep {
            records.push(ObservedRecord::SampledNonRandomized {
                x: r.x.values().to_vec(),
            });
        } else {
            dropped += 1;
        }
    }
    let tally = design.is_nested().then_some(dropped);
    ObservedDataset::new(records, tally, design.clone(), p, treatment_prob)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCheck {
    pub label: String,
    pub n: usize,
    pub kept: usize,
    pub expected: f64,
    pub fraction: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub strata: Vec<StratumCheck>,
    pub pass: bool,
}

/// Checks empirically that sampling of non-participants ignores `X` and `Y`:
/// within covariate quartiles and outcome-sign strata, the kept fraction
/// must be within four binomial standard errors of the design probability.
/// For covariate-dependent designs the strata are the cells of `c(X1)`
/// crossed with the same splits.
pub fn sampling_indicator_independence_check(
    population: &[TruthRecord],
    design: &DesignSpec,
    seed: u64,
) -> Result<IndependenceReport> {
    if matches!(design, DesignSpec::CensusNested) {
        return Err(Error::invalid(
            "independence check applies to sub-sampled or non-nested designs",
        ));
    }
    let kept = sampling_indicators(population, design, seed)?;
    let nonpart: Vec<(&TruthRecord, bool)> =
        population.iter().zip(kept).filter(|(r, _)| !r.s).collect();

    // Cells of c(X1); a single cell otherwise.
    let cell_of = |r: &TruthRecord| match design {
        DesignSpec::SubsampledNestedCovariate { c_table } => c_table.cell(r.x.values()),
        _ => 0,
    };
    let n_cells = match design {
        DesignSpec::SubsampledNestedCovariate { c_table } => c_table.probs.len(),
        _ => 1,
    };

    let p = population.first().map_or(0, |r| r.x.len());
    let mut strata = Vec::new();
    for cell in 0..n_cells {
        let members: Vec<&(&TruthRecord, bool)> =
            nonpart.iter().filter(|(r, _)| cell_of(r) == cell).collect();
        let Some(first) = members.first() else {
            continue;
        };
        let expected = design.keep_probability(first.0.x.values())?;
        let prefix = if n_cells > 1 {
            format!("cell{cell}/")
        } else {
            String::new()
        };

        let mut push = |label: String, group: Vec<bool>| {
            if group.is_empty() {
                return;
            }
            let n = group.len();
            let k = group.iter().filter(|&&b| b).count();
            let fraction = k as f64 / n as f64;
            let se = (expected * (1.0 - expected) / n as f64).sqrt();
            let pass = (fraction - expected).abs() <= 4.0 * se;
            strata.push(StratumCheck {
                label,
                n,
                kept: k,
                expected,
                fraction,
                se,
                pass,
            });
        };

        for j in 0..p {
            let mut vals: Vec<f64> = members.iter().map(|(r, _)| r.x.values()[j]).collect();
            vals.sort_by(f64::total_cmp);
            let q = |f: f64| vals[((vals.len() - 1) as f64 * f).round() as usize];
            let cuts = [q(0.25), q(0.5), q(0.75)];
            let mut groups: [Vec<bool>; 4] = Default::default();
            for (r, d) in &members {
                let v = r.x.values()[j];
                let g = cuts.iter().filter(|&&c| v > c).count();
                groups[g].push(*d);
            }
            for (g, group) in groups.into_iter().enumerate() {
                push(format!("{prefix}x{}_q{}", j + 1, g + 1), group);
            }
        }
        let neg = members
            .iter()
            .filter(|(r, _)| r.y < 0.0)
            .map(|(_, d)| *d)
            .collect();
        let pos = members
            .iter()
            .filter(|(r, _)| r.y >= 0.0)
            .map(|(_, d)| *d)
            .collect();
        push(format!("{prefix}y_negative"), neg);
        push(format!("{prefix}y_nonnegative"), pos);
    }
    let pass = strata.iter().all(|s| s.pass);
    Ok(IndependenceReport { strata, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate_actual_population, DgpSpec};
    use crate::domain::{Arm, CovariateVector, SamplingTable};

    fn unit(s: bool, a: Option<Arm>, x: f64) -> TruthRecord {
        TruthRecord {
            x: CovariateVector::new(vec![x], 0).unwrap(),
            s,
            a,
            y0: x,
            y1: x + 1.0,
            y: if a == Some(Arm::Treated) { x + 1.0 } else { x },
            d: true,
        }
    }

    /// 200 participants (alternating arms) and 1200 non-participants.
    fn fixed_population() -> Vec<TruthRecord> {
        let mut pop = Vec::new();
        for i in 0..200 {
            let arm = if i % 2 == 0 {
                Arm::Treated
            } else {
                Arm::Control
            };
            pop.push(unit(true, Some(arm), i as f64 / 200.0));
        }
        for i in 0..1200 {
            pop.push(unit(false, None, i as f64 / 1200.0 - 0.5));
        }
        pop
    }

    #[test]
    fn census_keeps_everyone() {
        let pop = fixed_population();
        let ds =
            apply_design(&pop, &DesignSpec::CensusNested, TreatmentProb::default(), 1).unwrap();
        assert_eq!(ds.records().len(), pop.len());
        assert_eq!(ds.n_unsampled_nonrandomized(), Some(0));
    }

    #[test]
    fn subsample_counts_add_up() {
        let pop = fixed_population();
        let ds = apply_design(
            &pop,
            &DesignSpec::subsampled(0.25),
            TreatmentProb::default(),
            42,
        )
        .unwrap();
        assert_eq!(ds.n_trial(), 200);
        let ext = ds.n_external();
        assert_eq!(ext + ds.n_unsampled_nonrandomized().unwrap(), 1200);
        // Binomial(1200, 0.25): mean 300, sd 15.
        assert!((ext as f64 - 300.0).abs() < 4.0 * 15.0, "{ext}");
    }

    #[test]
    fn non_nested_drops_the_tally() {
        let pop = fixed_population();
        let nested = apply_design(
            &pop,
            &DesignSpec::subsampled(0.25),
            TreatmentProb::default(),
            42,
        )
        .unwrap();
        let nn = apply_design(
            &pop,
            &DesignSpec::non_nested(0.25).unwrap(),
            TreatmentProb::default(),
            42,
        )
        .unwrap();
        assert_eq!(nn.n_unsampled_nonrandomized(), None);
        // same thinning stream, so the same rows are kept
        assert_eq!(nn.records(), nested.records());
    }

    #[test]
    fn no_outcomes_on_external_rows() {
        let pop = simulate_actual_population(&DgpSpec::dgp1(5), 5_000).unwrap();
        let ds = apply_design(
            &pop,
            &DesignSpec::subsampled(0.5),
            TreatmentProb::default(),
            3,
        )
        .unwrap();
        let n_s1 = pop.iter().filter(|r| r.s).count();
        assert_eq!(ds.n_trial(), n_s1);
        for (r, rec) in pop.iter().filter(|r| r.s).zip(ds.trial_rows()) {
            assert_eq!(r.x.values(), rec.0);
            assert_eq!(Some(rec.1), r.a);
            assert_eq!(r.y, rec.2);
        }
        let n_s0 = pop.len() - n_s1;
        assert_eq!(
            ds.n_external() + ds.n_unsampled_nonrandomized().unwrap(),
            n_s0
        );
    }

    #[test]
    fn rejects_population_without_participants() {
        let pop: Vec<_> = (0..10).map(|i| unit(false, None, i as f64)).collect();
        assert!(
            apply_design(&pop, &DesignSpec::CensusNested, TreatmentProb::default(), 0).is_err()
        );
        assert!(apply_design(&[], &DesignSpec::CensusNested, TreatmentProb::default(), 0).is_err());
    }

    #[test]
    fn rejects_invalid_table() {
        let pop = fixed_population();
        let bad = DesignSpec::SubsampledNestedCovariate {
            c_table: SamplingTable::step(0, 0.0, -0.1, 0.5),
        };
        assert!(apply_design(&pop, &bad, TreatmentProb::default(), 0).is_err());
    }

    #[test]
    fn seeded_output_is_stable() {
        let pop = fixed_population();
        let a = apply_design(
            &pop,
            &DesignSpec::subsampled(0.3),
            TreatmentProb::default(),
            8,
        )
        .unwrap();
        let b = apply_design(
            &pop,
            &DesignSpec::subsampled(0.3),
            TreatmentProb::default(),
            8,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_sampling_keeps_every_stratum_exactly() {
        let pop = simulate_actual_population(&DgpSpec::dgp1(2), 4_000).unwrap();
        let rep =
            sampling_indicator_independence_check(&pop, &DesignSpec::subsampled(1.0), 1).unwrap();
        assert!(rep.pass);
        assert!(rep.strata.iter().all(|s| s.fraction == 1.0));
    }

    #[test]
    fn census_is_not_checkable() {
        let pop = fixed_population();
        assert!(sampling_indicator_independence_check(&pop, &DesignSpec::CensusNested, 0).is_err());
    }
}
