//! Parametric data-generating processes for the actual population and
//! Monte Carlo oracle values of the causal estimands.
//!
//! Participation follows a logistic model in the covariates, treatment is
//! randomized with a constant probability among participants, and each
//! potential outcome is linear in the covariates plus independent Gaussian
//! noise. Potential outcomes are drawn independently of `S` given `X`, so
//! exchangeability over `S` and within the trial hold by construction, and
//! the logistic link keeps every participation probability inside (0, 1).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Arm, CovariateVector, TreatmentProb, TruthRecord};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateDist {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl CovariateDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CovariateDist::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            CovariateDist::Bernoulli { p } => (0.0..=1.0).contains(&p),
            CovariateDist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid covariate distribution {self:?}"
            )))
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateDist::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            CovariateDist::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            CovariateDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CovariateDist::Normal { mean, .. } => mean,
            CovariateDist::Bernoulli { p } => p,
            CovariateDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            CovariateDist::Normal { sd, .. } => sd * sd,
            CovariateDist::Bernoulli { p } => p * (1.0 - p),
            CovariateDist::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
        }
    }
}

/// Data-generating process. Coefficient vectors are `(intercept, slopes...)`
/// with one slope per covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub covariates: Vec<CovariateDist>,
    pub participation_logit: Vec<f64>,
    pub treatment_prob: f64,
    pub outcome_mean_a0: Vec<f64>,
    pub outcome_mean_a1: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl DgpSpec {
    /// One standard-normal covariate, `logit Pr[S=1|X] = -1 + 0.5 X`,
    /// `m0(X) = 1 + X`, `m1(X) = 2 + 1.3 X`, unit noise and balanced
    /// randomization.
    pub fn dgp1(seed: u64) -> Self {
        Self {
            covariates: vec![CovariateDist::Normal { mean: 0.0, sd: 1.0 }],
            participation_logit: vec![-1.0, 0.5],
            treatment_prob: 0.5,
            outcome_mean_a0: vec![1.0, 1.0],
            outcome_mean_a1: vec![2.0, 1.3],
            noise_sd: 1.0,
            seed,
        }
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        for dist in &self.covariates {
            dist.validate()?;
        }
        for (name, coefs) in [
            ("participation_logit", &self.participation_logit),
            ("outcome_mean_a0", &self.outcome_mean_a0),
            ("outcome_mean_a1", &self.outcome_mean_a1),
        ] {
            if coefs.len() != p + 1 {
                return Err(Error::invalid(format!(
                    "{name} needs {} coefficients (intercept + {p} slopes), got {}",
                    p + 1,
                    coefs.len()
                )));
            }
            if coefs.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} has non-finite coefficients"
                )));
            }
        }
        TreatmentProb::new(self.treatment_prob)?;
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::invalid(format!(
                "noise_sd must be finite and >= 0, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn participation_probability(&self, x: &[f64]) -> f64 {
        logistic(linear(&self.participation_logit, x))
    }

    #[inline]
    pub fn outcome_mean(&self, arm: Arm, x: &[f64]) -> f64 {
        match arm {
            Arm::Control => linear(&self.outcome_mean_a0, x),
            Arm::Treated => linear(&self.outcome_mean_a1, x),
        }
    }

    pub fn covariate_means(&self) -> Vec<f64> {
        self.covariates.iter().map(CovariateDist::mean).collect()
    }

    /// `E[Y^a] = alpha_0a + alpha_a' E[X]` for the linear outcome model.
    pub fn closed_form_mean_target(&self, arm: Arm) -> f64 {
        self.outcome_mean(arm, &self.covariate_means())
    }

    #[inline]
    fn draw_covariates(&self, rng: &mut SimRng, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.covariates.iter().map(|d| d.sample(rng)));
    }
}

#[inline]
pub(crate) fn linear(coefs: &[f64], x: &[f64]) -> f64 {
    coefs[0] + coefs[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Knobs beyond the plain process.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimulationOptions {
    /// Number of leading covariates tagged as auxiliary on each record.
    pub aux_split: usize,
    /// Additive shift applied to both potential outcomes of
    /// non-participants. Any nonzero value breaks mean exchangeability
    /// over `S`.
    pub nonparticipant_shift: f64,
}

/// Draws `n` i.i.d. units of the actual population. All `d` are set to 1;
/// sampling is applied separately.
pub fn simulate_actual_population(dgp: &DgpSpec, n: usize) -> Result<Vec<TruthRecord>> {
    simulate_actual_population_with(dgp, n, &SimulationOptions::default())
}

pub fn simulate_actual_population_with(
    dgp: &DgpSpec,
    n: usize,
    opts: &SimulationOptions,
) -> Result<Vec<TruthRecord>> {
    if n == 0 {
        return Err(Error::invalid("population size must be at least 1"));
    }
    dgp.validate()?;
    if opts.aux_split > dgp.p() {
        return Err(Error::invalid("aux split exceeds covariate dimension"));
    }
    if !opts.nonparticipant_shift.is_finite() {
        return Err(Error::invalid("non-finite outcome shift"));
    }
    let e = dgp.treatment_prob;
    let sigma = dgp.noise_sd;
    let records = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(dgp.seed, Purpose::Population, i);
            let mut x = Vec::with_capacity(dgp.p());
            dgp.draw_covariates(&mut rng, &mut x);
            let s = rng.random::<f64>() < dgp.participation_probability(&x);
            let treat_draw: f64 = rng.random();
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            let shift = if s { 0.0 } else { opts.nonparticipant_shift };
            let y0 = dgp.outcome_mean(Arm::Control, &x) + sigma * e0 + shift;
            let y1 = dgp.outcome_mean(Arm::Treated, &x) + sigma * e1 + shift;
            let a = s.then_some(if treat_draw < e {
                Arm::Treated
            } else {
                Arm::Control
            });
            let y = match a {
                Some(Arm::Treated) => y1,
                _ => y0,
            };
            TruthRecord {
                x: CovariateVector::new(x, opts.aux_split).expect("finite draws"),
                s,
                a,
                y0,
                y1,
                y,
                d: true,
            }
        })
        .collect();
    Ok(records)
}

/// Monte Carlo truth for one process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    /// `E[Y^a]`, indexed by arm.
    pub mean_target: [f64; 2],
    /// `E[Y^a | S = 0]`.
    pub mean_nonrandomized: [f64; 2],
    /// `E[Y^a | S = 1]`.
    pub mean_randomized: [f64; 2],
    /// `Pr[S = 1]`.
    pub pr_s1: f64,
    pub mc_sample_size: usize,
    pub se_mean_target: [f64; 2],
    pub se_mean_nonrandomized: [f64; 2],
    pub se_mean_randomized: [f64; 2],
    pub se_pr_s1: f64,
    /// `alpha_0a + alpha_a' E[X]`; only reported without an outcome shift.
    pub closed_form_mean_target: Option<[f64; 2]>,
}

const ORACLE_CHUNK: usize = 1 << 16;

/// Minimum Monte Carlo size accepted by [`oracle_truth`].
pub const ORACLE_MIN_DRAWS: usize = 100_000;

pub fn oracle_truth(dgp: &DgpSpec, m: usize, oracle_seed: u64) -> Result<OracleTruth> {
    oracle_truth_with(dgp, m, oracle_seed, 0.0)
}

/// Estimates every estimand as a ratio of covariate-only expectations,
/// e.g. `E[Y^a | S = 0] = E[m_a(X) (1 - p(X))] / E[1 - p(X)]`. Averaging
/// the conditional means instead of noisy outcomes removes the outcome
/// noise, and the covariates (whose means are known exactly) serve as
/// control variates. Standard errors come from the linearized ratio with
/// the control-variate residual variance.
pub fn oracle_truth_with(
    dgp: &DgpSpec,
    m: usize,
    oracle_seed: u64,
    nonparticipant_shift: f64,
) -> Result<OracleTruth> {
    if m < ORACLE_MIN_DRAWS {
        return Err(Error::invalid(format!(
            "oracle needs at least {ORACLE_MIN_DRAWS} draws, got {m}"
        )));
    }
    dgp.validate()?;
    let delta = nonparticipant_shift;
    // (numerator, denominator) per quantity:
    // 0,1 target; 2,3 randomized; 4,5 non-randomized; 6 Pr[S=1]
    let terms = |x: &[f64]| -> [(f64, f64); 7] {
        let p = dgp.participation_probability(x);
        let m0 = dgp.outcome_mean(Arm::Control, x);
        let m1 = dgp.outcome_mean(Arm::Treated, x);
        [
            (m0 + delta * (1.0 - p), 1.0),
            (m1 + delta * (1.0 - p), 1.0),
            (m0 * p, p),
            (m1 * p, p),
            ((m0 + delta) * (1.0 - p), 1.0 - p),
            ((m1 + delta) * (1.0 - p), 1.0 - p),
            (p, 1.0),
        ]
    };

    let mu = dgp.covariate_means();
    let controls: Vec<usize> = (0..dgp.p())
        .filter(|&j| dgp.covariates[j].variance() > 0.0)
        .collect();
    let q = controls.len();
    let n_chunks = m.div_ceil(ORACLE_CHUNK);
    let chunk_len = |c: usize| ORACLE_CHUNK.min(m - c * ORACLE_CHUNK);

    // Pass 1: ratio point estimates.
    let sums: Vec<[(f64, f64); 7]> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(oracle_seed, Purpose::Oracle, c as u64);
            let mut x = Vec::with_capacity(dgp.p());
            let mut acc = [(0.0, 0.0); 7];
            for _ in 0..chunk_len(c) {
                dgp.draw_covariates(&mut rng, &mut x);
                for (a, t) in acc.iter_mut().zip(terms(&x)) {
                    a.0 += t.0;
                    a.1 += t.1;
                }
            }
            acc
        })
        .collect();
    let mut num = [0.0; 7];
    let mut den = [0.0; 7];
    for acc in &sums {
        for j in 0..7 {
            num[j] += acc[j].0;
            den[j] += acc[j].1;
        }
    }
    let ratio: [f64; 7] = std::array::from_fn(|j| num[j] / den[j]);
    let den_mean: [f64; 7] = std::array::from_fn(|j| den[j] / m as f64);

    // Pass 2: influence values and control-variate moments.
    struct Moments {
        sx: Vec<f64>,
        sxx: Vec<f64>,
        spsi: [f64; 7],
        spsi2: [f64; 7],
        sxpsi: Vec<f64>,
    }
    let moments: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(oracle_seed, Purpose::Oracle, c as u64);
            let mut x = Vec::with_capacity(dgp.p());
            let mut mo = Moments {
                sx: vec![0.0; q],
                sxx: vec![0.0; q * q],
                spsi: [0.0; 7],
                spsi2: [0.0; 7],
                sxpsi: vec![0.0; q * 7],
            };
            let mut xc = vec![0.0; q];
            for _ in 0..chunk_len(c) {
                dgp.draw_covariates(&mut rng, &mut x);
                for (slot, &j) in xc.iter_mut().zip(&controls) {
                    *slot = x[j] - mu[j];
                }
                for a in 0..q {
                    mo.sx[a] += xc[a];
                    for b in 0..q {
                        mo.sxx[a * q + b] += xc[a] * xc[b];
                    }
                }
                for (j, t) in terms(&x).into_iter().enumerate() {
                    let psi = (t.0 - ratio[j] * t.1) / den_mean[j];
                    mo.spsi[j] += psi;
                    mo.spsi2[j] += psi * psi;
                    for a in 0..q {
                        mo.sxpsi[j * q + a] += xc[a] * psi;
                    }
                }
            }
            mo
        })
        .collect();
    let mut total = Moments {
        sx: vec![0.0; q],
        sxx: vec![0.0; q * q],
        spsi: [0.0; 7],
        spsi2: [0.0; 7],
        sxpsi: vec![0.0; q * 7],
    };
    for mo in &moments {
        for (t, v) in total.sx.iter_mut().zip(&mo.sx) {
            *t += v;
        }
        for (t, v) in total.sxx.iter_mut().zip(&mo.sxx) {
            *t += v;
        }
        for j in 0..7 {
            total.spsi[j] += mo.spsi[j];
            total.spsi2[j] += mo.spsi2[j];
        }
        for (t, v) in total.sxpsi.iter_mut().zip(&mo.sxpsi) {
            *t += v;
        }
    }

    let mf = m as f64;
    let xbar = DVector::from_iterator(q, total.sx.iter().map(|s| s / mf));
    let sxx_c = DMatrix::from_row_slice(q, q, &total.sxx) - &xbar * xbar.transpose() * mf;
    let chol = if q > 0 {
        sxx_c.clone().cholesky()
    } else {
        None
    };

    let mut est = [0.0; 7];
    let mut se = [0.0; 7];
    for j in 0..7 {
        let psibar = total.spsi[j] / mf;
        let mut ss = total.spsi2[j] - mf * psibar * psibar;
        let mut value = ratio[j];
        let mut dof = mf - 1.0;
        if let Some(chol) = &chol {
            let sxpsi_c = DVector::from_iterator(
                q,
                (0..q).map(|a| total.sxpsi[j * q + a] - mf * xbar[a] * psibar),
            );
            let beta = chol.solve(&sxpsi_c);
            value -= beta.dot(&xbar);
            ss -= beta.dot(&sxpsi_c);
            dof -= q as f64;
        }
        est[j] = value;
        se[j] = (ss.max(0.0) / dof / mf).sqrt();
    }

    let closed_form = (delta == 0.0).then(|| {
        [
            dgp.closed_form_mean_target(Arm::Control),
            dgp.closed_form_mean_target(Arm::Treated),
        ]
    });
    Ok(OracleTruth {
        mean_target: [est[0], est[1]],
        mean_randomized: [est[2], est[3]],
        mean_nonrandomized: [est[4], est[5]],
        pr_s1: est[6],
        mc_sample_size: m,
        se_mean_target: [se[0], se[1]],
        se_mean_randomized: [se[2], se[3]],
        se_mean_nonrandomized: [se[4], se[5]],
        se_pr_s1: se[6],
        closed_form_mean_target: closed_form,
    })
}

impl OracleTruth {
    pub fn value(&self, population: crate::estimators::Population, arm: Arm) -> f64 {
        use crate::estimators::Population::*;
        let a = arm.index();
        match population {
            Target => self.mean_target[a],
            NonRandomized => self.mean_nonrandomized[a],
            Randomized => self.mean_randomized[a],
        }
    }

    pub fn se(&self, population: crate::estimators::Population, arm: Arm) -> f64 {
        use crate::estimators::Population::*;
        let a = arm.index();
        match population {
            Target => self.se_mean_target[a],
            NonRandomized => self.se_mean_nonrandomized[a],
            Randomized => self.se_mean_randomized[a],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_constant_mean_is_exact() {
        let mut dgp = DgpSpec::dgp1(3);
        dgp.noise_sd = 0.0;
        dgp.outcome_mean_a0 = vec![4.5, 0.0];
        let pop = simulate_actual_population(&dgp, 500).unwrap();
        assert!(pop.iter().all(|r| r.y0 == 4.5));
    }

    #[test]
    fn records_respect_consistency() {
        let pop = simulate_actual_population(&DgpSpec::dgp1(11), 2_000).unwrap();
        for r in &pop {
            assert!(r.d);
            match r.a {
                Some(Arm::Treated) => assert_eq!(r.y, r.y1),
                Some(Arm::Control) => assert_eq!(r.y, r.y0),
                None => {
                    assert!(!r.s);
                    assert_eq!(r.y, r.y0);
                }
            }
            assert_eq!(r.s, r.a.is_some());
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let dgp = DgpSpec::dgp1(99);
        let a = simulate_actual_population(&dgp, 3_000).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| simulate_actual_population(&dgp, 3_000).unwrap());
        assert_eq!(a, b);
        let c = simulate_actual_population(&DgpSpec::dgp1(100), 3_000).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dgp = DgpSpec::dgp1(1);
        assert!(simulate_actual_population(&dgp, 0).is_err());
        let mut bad = dgp.clone();
        bad.participation_logit[1] = f64::NAN;
        assert!(simulate_actual_population(&bad, 10).is_err());
        let mut bad = dgp.clone();
        bad.outcome_mean_a1.pop();
        assert!(simulate_actual_population(&bad, 10).is_err());
        let mut bad = dgp;
        bad.treatment_prob = 1.0;
        assert!(simulate_actual_population(&bad, 10).is_err());
    }

    #[test]
    fn oracle_target_means_match_closed_form() {
        let dgp = DgpSpec::dgp1(0);
        let t = oracle_truth(&dgp, 200_000, 5).unwrap();
        // linear outcome means are fully absorbed by the covariate control
        assert!((t.mean_target[1] - 2.0).abs() < 1e-9);
        assert!((t.mean_target[0] - 1.0).abs() < 1e-9);
        assert_eq!(t.closed_form_mean_target, Some([1.0, 2.0]));
        for a in 0..2 {
            let recomposed =
                t.mean_randomized[a] * t.pr_s1 + t.mean_nonrandomized[a] * (1.0 - t.pr_s1);
            let tol =
                4.0 * (t.se_mean_randomized[a] + t.se_mean_nonrandomized[a] + t.se_mean_target[a]);
            assert!((recomposed - t.mean_target[a]).abs() <= tol.max(1e-12));
        }
    }

    #[test]
    fn oracle_without_selection_has_equal_strata() {
        let mut dgp = DgpSpec::dgp1(0);
        dgp.participation_logit = vec![-0.4, 0.0];
        let t = oracle_truth(&dgp, 100_000, 9).unwrap();
        for a in 0..2 {
            assert!((t.mean_nonrandomized[a] - t.mean_target[a]).abs() < 1e-9);
            assert!((t.mean_randomized[a] - t.mean_target[a]).abs() < 1e-9);
        }
        assert!((t.pr_s1 - logistic(-0.4)).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_small_m() {
        assert!(oracle_truth(&DgpSpec::dgp1(0), 10, 0).is_err());
    }

    #[test]
    fn oracle_shift_moves_nonrandomized_means() {
        let dgp = DgpSpec::dgp1(0);
        let base = oracle_truth(&dgp, 100_000, 2).unwrap();
        let shifted = oracle_truth_with(&dgp, 100_000, 2, 0.5).unwrap();
        for a in 0..2 {
            assert!(
                (shifted.mean_nonrandomized[a] - base.mean_nonrandomized[a] - 0.5).abs() < 1e-9
            );
            assert!((shifted.mean_randomized[a] - base.mean_randomized[a]).abs() < 1e-12);
        }
        assert!(shifted.closed_form_mean_target.is_none());
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0);
        assert_eq!(logistic(800.0), 1.0);
        assert!((logistic(-1.0) - 0.2689414213699951).abs() < 1e-15);
    }
}
