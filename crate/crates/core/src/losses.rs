//! Graph builders for every training objective.
//!
//! All `-log` terms use `ln(max(x, 1e-12))`. Per-sample weights (μ, s) are
//! plain slices and enter the graph as constant leaves, so no gradient
//! flows through them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndgrad::{Array2, NdError, Tape, Var};
use crate::scalar::Scalar;

pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error("{0} on an empty batch")]
    EmptyBatch(&'static str),
    #[error("adversarial loss needs both source and target samples")]
    MissingDomain,
    #[error("label {label} at row {row} outside [0, {classes})")]
    BadLabel { row: usize, label: usize, classes: usize },
    #[error("{len} weights for {rows} rows")]
    WeightCount { len: usize, rows: usize },
    #[error("loss weight {name} = {value} is negative")]
    NegativeWeight { name: &'static str, value: f64 },
}

fn constant_column<T: Scalar>(tape: &mut Tape<T>, values: &[T]) -> Result<Var, NdError> {
    tape.leaf(Array2::column(values.to_vec()))
}

/// `-(1/n) Σ_i w_i ln g_i[y_i]`; unit weights when `weights` is `None`.
pub fn loss_classifier<T: Scalar>(
    tape: &mut Tape<T>,
    g: Var,
    labels: &[usize],
    weights: Option<&[T]>,
) -> Result<Var, LossError> {
    let (rows, classes) = tape.shape(g);
    if rows == 0 {
        return Err(LossError::EmptyBatch("classifier loss"));
    }
    if labels.len() != rows {
        return Err(LossError::WeightCount {
            len: labels.len(),
            rows,
        });
    }
    if let Some(w) = weights {
        if w.len() != rows {
            return Err(LossError::WeightCount { len: w.len(), rows });
        }
    }
    let mut pick = Array2::zeros(rows, classes);
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(LossError::BadLabel { row, label, classes });
        }
        pick.set(row, label, weights.map_or(T::one(), |w| w[row]));
    }
    let pick = tape.leaf(pick)?;
    let logg = tape.log_clamped(g, T::lit(LOG_FLOOR))?;
    let picked = tape.mul(logg, pick)?;
    let total = tape.sum(picked)?;
    Ok(tape.scale(total, -T::one() / T::lit(rows as f64))?)
}

/// `(1/n) Σ_i c_i · (-ln x_i)` for a column `x` and constant weights `c`.
fn weighted_neg_log_mean<T: Scalar>(tape: &mut Tape<T>, x: Var, coef: &[T]) -> Result<Var, LossError> {
    let rows = tape.shape(x).0;
    let logx = tape.log_clamped(x, T::lit(LOG_FLOOR))?;
    let c = constant_column(tape, coef)?;
    let weighted = tape.mul(logx, c)?;
    let total = tape.sum(weighted)?;
    Ok(tape.scale(total, -T::one() / T::lit(rows as f64))?)
}

/// Domain part of the adversarial objective with transferability weights:
/// `mean_src (1+μ)(-ln p) + mean_tgt (1+μ)(-ln(1-p))`.
///
/// `p_src` and `p_tgt` are discriminator output columns; when the features
/// passed through gradient reversal, minimizing this trains G_d to separate
/// the domains while G_f receives the reversed signal.
pub fn loss_adversarial_weighted<T: Scalar>(
    tape: &mut Tape<T>,
    p_src: Var,
    p_tgt: Var,
    mu_src: &[T],
    mu_tgt: &[T],
) -> Result<Var, LossError> {
    let (ns, nt) = (tape.shape(p_src).0, tape.shape(p_tgt).0);
    if ns == 0 || nt == 0 {
        return Err(LossError::MissingDomain);
    }
    if mu_src.len() != ns {
        return Err(LossError::WeightCount {
            len: mu_src.len(),
            rows: ns,
        });
    }
    if mu_tgt.len() != nt {
        return Err(LossError::WeightCount {
            len: mu_tgt.len(),
            rows: nt,
        });
    }
    let cs: Vec<T> = mu_src.iter().map(|&m| T::one() + m).collect();
    let ct: Vec<T> = mu_tgt.iter().map(|&m| T::one() + m).collect();
    let src = weighted_neg_log_mean(tape, p_src, &cs)?;
    let q_tgt = tape.one_minus(p_tgt)?;
    let tgt = weighted_neg_log_mean(tape, q_tgt, &ct)?;
    Ok(tape.add(src, tgt)?)
}

/// `‖U‖² = Σ_i u_i²` over a column of per-sample variances.
pub fn loss_bias<T: Scalar>(tape: &mut Tape<T>, u: Var) -> Result<Var, LossError> {
    let sq = tape.square(u)?;
    Ok(tape.sum(sq)?)
}

fn check_selection<T: Scalar>(tape: &Tape<T>, g: Var, mask: &Array2<T>, s: &[T]) -> Result<(), LossError> {
    let shape = tape.shape(g);
    if mask.shape() != shape {
        return Err(NdError::Shape {
            op: "pseudo-label mask",
            left: shape,
            right: mask.shape(),
        }
        .into());
    }
    if s.len() != shape.0 {
        return Err(LossError::WeightCount {
            len: s.len(),
            rows: shape.0,
        });
    }
    Ok(())
}

/// `(1/n) Σ_i s_i Σ_c mask_ic · (-q_ic ln q_ic)` for `q` built from `g`.
fn soft_entropy_term<T: Scalar>(tape: &mut Tape<T>, q: Var, mask: &Array2<T>, s: &[T]) -> Result<Var, LossError> {
    let rows = tape.shape(q).0;
    let logq = tape.log_clamped(q, T::lit(LOG_FLOOR))?;
    let qlogq = tape.mul(q, logq)?;
    let m = tape.leaf(mask.clone())?;
    let selected = tape.mul(qlogq, m)?;
    let per_row = tape.sum_rows(selected)?;
    let sv = constant_column(tape, s)?;
    let weighted = tape.mul(per_row, sv)?;
    let total = tape.sum(weighted)?;
    Ok(tape.scale(total, -T::one() / T::lit(rows as f64))?)
}

fn zero<T: Scalar>(tape: &mut Tape<T>) -> Result<Var, LossError> {
    Ok(tape.leaf(Array2::scalar(T::zero()))?)
}

/// Positive soft pseudo-label loss `-E[s Σ_c h g ln g]`; zero on an empty batch.
pub fn loss_pce<T: Scalar>(tape: &mut Tape<T>, g: Var, h: &Array2<T>, s: &[T]) -> Result<Var, LossError> {
    if tape.shape(g).0 == 0 {
        return zero(tape);
    }
    check_selection(tape, g, h, s)?;
    soft_entropy_term(tape, g, h, s)
}

/// Negative soft pseudo-label loss `-E[s Σ_c l (1-g) ln(1-g)]`; zero on an empty batch.
pub fn loss_nce<T: Scalar>(tape: &mut Tape<T>, g: Var, l: &Array2<T>, s: &[T]) -> Result<Var, LossError> {
    if tape.shape(g).0 == 0 {
        return zero(tape);
    }
    check_selection(tape, g, l, s)?;
    let q = tape.one_minus(g)?;
    soft_entropy_term(tape, q, l, s)
}

/// Trade-off coefficients of the full objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha_adv: f64,
    pub alpha_nce: f64,
    pub alpha_bias: f64,
    pub alpha_tce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_adv: 1.0,
            alpha_nce: 1.0,
            alpha_bias: 1.0,
            alpha_tce: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [
            ("alpha_adv", self.alpha_adv),
            ("alpha_nce", self.alpha_nce),
            ("alpha_bias", self.alpha_bias),
            ("alpha_tce", self.alpha_tce),
        ] {
            if !(value >= 0.0) {
                return Err(LossError::NegativeWeight { name, value });
            }
        }
        Ok(())
    }
}

/// `L_tce = L_pce + α_nce L_nce`.
pub fn loss_tce<T: Scalar>(tape: &mut Tape<T>, pce: Var, nce: Var, alpha_nce: f64) -> Result<Var, LossError> {
    if !(alpha_nce >= 0.0) {
        return Err(LossError::NegativeWeight {
            name: "alpha_nce",
            value: alpha_nce,
        });
    }
    let scaled = tape.scale(nce, T::lit(alpha_nce))?;
    Ok(tape.add(pce, scaled)?)
}

/// `L_adv = L_y + α_adv · L_d`, where `L_d` is the (weighted) domain term.
pub fn loss_adv<T: Scalar>(tape: &mut Tape<T>, l_y: Var, l_d: Var, alpha_adv: f64) -> Result<Var, LossError> {
    if !(alpha_adv >= 0.0) {
        return Err(LossError::NegativeWeight {
            name: "alpha_adv",
            value: alpha_adv,
        });
    }
    let scaled = tape.scale(l_d, T::lit(alpha_adv))?;
    Ok(tape.add(l_y, scaled)?)
}

/// `L = L_adv + α_bias L_bias + α_tce L_tce`.
pub fn loss_total<T: Scalar>(
    tape: &mut Tape<T>,
    l_adv: Var,
    l_bias: Var,
    l_tce: Var,
    alpha_bias: f64,
    alpha_tce: f64,
) -> Result<Var, LossError> {
    for (name, value) in [("alpha_bias", alpha_bias), ("alpha_tce", alpha_tce)] {
        if !(value >= 0.0) {
            return Err(LossError::NegativeWeight { name, value });
        }
    }
    let b = tape.scale(l_bias, T::lit(alpha_bias))?;
    let c = tape.scale(l_tce, T::lit(alpha_tce))?;
    let s = tape.add(l_adv, b)?;
    Ok(tape.add(s, c)?)
}

/// Scalar values of one evaluation of the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_y: f64,
    pub l_adv_domain: f64,
    pub l_adv: f64,
    pub l_bias: f64,
    pub l_pce: f64,
    pub l_nce: f64,
    pub l_tce: f64,
    pub l_total: f64,
}
