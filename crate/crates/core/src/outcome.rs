//! Outcome regression among trial participants, `E[Y | X, S = 1, A = a]`,
//! fitted separately per arm by least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{Arm, ObservedDataset};
use crate::error::{Error, Result};
use crate::participation::Basis;

const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFit {
    pub coefficients: Vec<f64>,
    pub residual_variance: f64,
    pub n: usize,
}

/// Per-arm linear mean model `b0a + ba'x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    arms: [ArmFit; 2],
}

impl OutcomeModel {
    pub fn new(control: ArmFit, treated: ArmFit) -> Result<Self> {
        for fit in [&control, &treated] {
            if fit.coefficients.is_empty() || fit.coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(
                    "outcome coefficients must be finite and include an intercept",
                ));
            }
        }
        Ok(Self {
            arms: [control, treated],
        })
    }

    #[inline]
    pub fn arm(&self, arm: Arm) -> &ArmFit {
        &self.arms[arm.index()]
    }

    #[inline]
    pub fn predict(&self, arm: Arm, x: &[f64]) -> f64 {
        let b = &self.arms[arm.index()].coefficients;
        b[0] + b[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

#[inline]
pub fn predict(model: &OutcomeModel, arm: Arm, x: &[f64]) -> f64 {
    model.predict(arm, x)
}

pub fn fit_outcome(data: &ObservedDataset) -> Result<OutcomeModel> {
    fit_outcome_with(data, Basis::MainEffects)
}

/// Ordinary least squares per arm on trial rows only, solved through a
/// Householder QR factorization.
pub fn fit_outcome_with(data: &ObservedDataset, basis: Basis) -> Result<OutcomeModel> {
    let width = basis.width(data.p());
    let fit_arm = |arm: Arm| -> Result<ArmFit> {
        let rows: Vec<(&[f64], f64)> = data.arm_rows(arm).collect();
        let n = rows.len();
        if n < width + 1 {
            return Err(Error::InsufficientData(format!(
                "arm {arm} has {n} trial rows; at least {} needed",
                width + 1
            )));
        }
        let design = DMatrix::from_fn(n, width, |i, j| if j == 0 { 1.0 } else { rows[i].0[j - 1] });
        let response = DVector::from_iterator(n, rows.iter().map(|r| r.1));
        let (coefficients, residual_ss) =
            least_squares(design, response).ok_or_else(|| Error::RankDeficient {
                context: format!("outcome design for arm {arm}"),
            })?;
        Ok(ArmFit {
            coefficients,
            residual_variance: residual_ss / (n - width) as f64,
            n,
        })
    };
    OutcomeModel::new(fit_arm(Arm::Control)?, fit_arm(Arm::Treated)?)
}

/// Returns coefficients and the residual sum of squares, or `None` when the
/// design is numerically rank deficient.
fn least_squares(design: DMatrix<f64>, response: DVector<f64>) -> Option<(Vec<f64>, f64)> {
    let width = design.ncols();
    let qr = design.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if diag_max == 0.0
        || r.diagonal()
            .iter()
            .any(|d| d.abs() <= RANK_TOLERANCE * diag_max)
    {
        return None;
    }
    let mut qty = response;
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, width).into_owned();
    let coef = r.solve_upper_triangular(&head)?;
    let residual_ss = qty.rows(width, qty.len() - width).norm_squared();
    Some((coef.iter().copied().collect(), residual_ss))
}
