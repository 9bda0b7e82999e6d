//! Threshold pseudo-label selection on classifier probabilities.

use thiserror::Error;

use crate::ndgrad::Array2;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum PseudoError {
    #[error("positive threshold beta = {0} outside (0, 1)")]
    Beta(f64),
    #[error("negative threshold gamma = {0} outside (0, 1)")]
    Gamma(f64),
    #[error("gamma = {gamma} must be below beta = {beta}")]
    Order { beta: f64, gamma: f64 },
}

fn check_open_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

/// h^[c] = 1[g^[c] ≥ β], inclusive.
pub fn select_positive<T: Scalar>(g: &Array2<T>, beta: T) -> Result<Array2<T>, PseudoError> {
    if !check_open_unit(beta.as_f64()) {
        return Err(PseudoError::Beta(beta.as_f64()));
    }
    Ok(g.map(|p| if p >= beta { T::one() } else { T::zero() }))
}

/// l^[c] = 1[g^[c] ≤ γ], inclusive.
pub fn select_negative<T: Scalar>(g: &Array2<T>, gamma: T) -> Result<Array2<T>, PseudoError> {
    if !check_open_unit(gamma.as_f64()) {
        return Err(PseudoError::Gamma(gamma.as_f64()));
    }
    Ok(g.map(|p| if p <= gamma { T::one() } else { T::zero() }))
}

/// Positive and negative selections for one batch of unlabeled samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelSet<T> {
    pub g: Array2<T>,
    pub positive: Array2<T>,
    pub negative: Array2<T>,
    pub beta: T,
    pub gamma: T,
}

impl<T: Scalar> PseudoLabelSet<T> {
    /// Requires `0 < γ < β < 1`, which makes the two masks disjoint.
    pub fn select(g: Array2<T>, beta: T, gamma: T) -> Result<Self, PseudoError> {
        if gamma >= beta {
            return Err(PseudoError::Order {
                beta: beta.as_f64(),
                gamma: gamma.as_f64(),
            });
        }
        let positive = select_positive(&g, beta)?;
        let negative = select_negative(&g, gamma)?;
        Ok(Self {
            g,
            positive,
            negative,
            beta,
            gamma,
        })
    }

    pub fn positive_count(&self, row: usize) -> usize {
        count_ones(self.positive.row(row))
    }

    pub fn negative_count(&self, row: usize) -> usize {
        count_ones(self.negative.row(row))
    }

    /// `sample_id,argmax,g_max,h_count,l_count,s` rows with a header.
    pub fn to_csv(&self, s: &[T]) -> String {
        let mut out = String::from("sample_id,argmax,g_max,h_count,l_count,s\n");
        let argmax = self.g.argmax_rows();
        for (i, &c) in argmax.iter().enumerate() {
            out.push_str(&format!(
                "{i},{c},{},{},{},{}\n",
                self.g.get(i, c),
                self.positive_count(i),
                self.negative_count(i),
                s[i]
            ));
        }
        out
    }
}

fn count_ones<T: Scalar>(row: &[T]) -> usize {
    row.iter().filter(|&&v| v == T::one()).count()
}
