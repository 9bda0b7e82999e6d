//! MC-Dropout variance of the discriminator and the weights derived from it.
//!
//! For every sample, `u` is the population variance (divisor K) of K
//! stochastic discriminator outputs. A source sample reads P̂(d=1|x) and a
//! target sample P̂(d=0|x) = 1 - P̂(d=1|x); both give the same variance, so
//! a single code path serves both domains. Within a batch the variances
//! form `U`, which is normalized to μ(x) = (u - min U) / max U and turned
//! into the pseudo-label selection weight s(x) = 1 - μ(x).

use log::warn;
use serde::Serialize;
use thiserror::Error;

use crate::ndgrad::{Array2, NdError, RngStream, Tape, Var};
use crate::nets::{MaskSource, ModelBundle, NetError};
use crate::scalar::Scalar;

/// Below this `max(U)` the batch is treated as uncertainty-free and μ ≡ 0.
pub const EPS_VAR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("at least two stochastic passes are needed, got K = {0}")]
    TooFewPasses(usize),
    #[error("uncertainty vector is empty")]
    Empty,
    #[error("negative variance {0} in U")]
    Negative(f64),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Nd(#[from] NdError),
}

/// Population variance, divisor `len`. Deviations are taken from the first
/// value before centering, so a constant sequence gives exactly zero.
pub fn population_variance<T: Scalar>(values: &[T]) -> T {
    let Some(&first) = values.first() else {
        return T::zero();
    };
    let n = T::lit(values.len() as f64);
    let shifted: Vec<T> = values.iter().map(|&v| v - first).collect();
    let mean = shifted.iter().copied().sum::<T>() / n;
    shifted.iter().map(|&d| (d - mean) * (d - mean)).sum::<T>() / n
}

/// `passes[k][i]`: discriminator output of sample `i` on pass `k`, with a
/// fresh dropout mask per pass.
pub fn mc_outputs<T: Scalar>(
    bundle: &ModelBundle<T>,
    features: &Array2<T>,
    passes: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vec<T>>, UncertaintyError> {
    (0..passes)
        .map(|_| Ok(bundle.forward_discriminator(features, MaskSource::Fresh(rng))?))
        .collect()
}

/// Per-sample MC-Dropout variance over `passes` stochastic forwards.
pub fn mc_variance<T: Scalar>(
    bundle: &ModelBundle<T>,
    features: &Array2<T>,
    passes: usize,
    rng: &mut RngStream,
) -> Result<Vec<T>, UncertaintyError> {
    if passes < 2 {
        return Err(UncertaintyError::TooFewPasses(passes));
    }
    if bundle.arch.dropout_rate == 0.0 {
        warn!("discriminator dropout rate is 0, MC variance is identically zero");
        return Ok(vec![T::zero(); features.rows()]);
    }
    let outs = mc_outputs(bundle, features, passes, rng)?;
    Ok(variance_across_passes(&outs))
}

/// Column-wise population variance of `passes[k][i]` over `k`.
pub fn variance_across_passes<T: Scalar>(passes: &[Vec<T>]) -> Vec<T> {
    let n = passes.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let column: Vec<T> = passes.iter().map(|p| p[i]).collect();
            population_variance(&column)
        })
        .collect()
}

/// Differentiable population variance across `K` column nodes of equal
/// shape: `(1/K) Σ_k (p_k - p̄)²`, computed on deviations from the first
/// pass like [`population_variance`].
pub fn variance_node<T: Scalar>(tape: &mut Tape<T>, passes: &[Var]) -> Result<Var, UncertaintyError> {
    if passes.len() < 2 {
        return Err(UncertaintyError::TooFewPasses(passes.len()));
    }
    let inv_k = T::one() / T::lit(passes.len() as f64);
    let shifted = passes
        .iter()
        .map(|&p| tape.sub(p, passes[0]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = shifted[0];
    for &d in &shifted[1..] {
        total = tape.add(total, d)?;
    }
    let mean = tape.scale(total, inv_k)?;
    let mut acc: Option<Var> = None;
    for &p in &shifted {
        let d = tape.sub(p, mean)?;
        let sq = tape.square(d)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, sq)?,
            None => sq,
        });
    }
    Ok(tape.scale(acc.expect("non-empty passes"), inv_k)?)
}

/// μ_i = (U_i - min U) / max U, or all zeros when max U ≤ [`EPS_VAR`].
/// The denominator is `max U`, not `max U - min U`.
pub fn normalize_mu<T: Scalar>(u: &[T]) -> Result<Vec<T>, UncertaintyError> {
    if u.is_empty() {
        return Err(UncertaintyError::Empty);
    }
    if let Some(&neg) = u.iter().find(|&&v| v < T::zero()) {
        return Err(UncertaintyError::Negative(neg.as_f64()));
    }
    let min = u.iter().copied().fold(T::infinity(), T::min);
    let max = u.iter().copied().fold(T::neg_infinity(), T::max);
    if max <= T::lit(EPS_VAR) {
        return Ok(vec![T::zero(); u.len()]);
    }
    Ok(u.iter().map(|&v| (v - min) / max).collect())
}

/// s = 1 - μ.
pub fn selection_weight<T: Scalar>(mu: &[T]) -> Vec<T> {
    mu.iter().map(|&m| T::one() - m).collect()
}

/// Per-sample uncertainty bookkeeping for one batch.
#[derive(Clone, Debug, Serialize)]
pub struct UncertaintyRecord<T> {
    pub passes: usize,
    /// 1 for source samples, 0 for target.
    pub domain: Vec<u8>,
    pub u: Vec<T>,
    pub mu: Vec<T>,
    pub s: Vec<T>,
}

impl<T: Scalar> UncertaintyRecord<T> {
    pub fn from_variances(u: Vec<T>, domain: Vec<u8>, passes: usize) -> Result<Self, UncertaintyError> {
        let mu = normalize_mu(&u)?;
        let s = selection_weight(&mu);
        Ok(Self {
            passes,
            domain,
            u,
            mu,
            s,
        })
    }

    pub fn mean_u(&self) -> T {
        mean(&self.u)
    }

    pub fn mean_mu(&self) -> T {
        mean(&self.mu)
    }

    /// `sample_id,domain,u,mu,s` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,domain,u,mu,s\n");
        for i in 0..self.u.len() {
            out.push_str(&format!("{i},{},{},{},{}\n", self.domain[i], self.u[i], self.mu[i], self.s[i]));
        }
        out
    }
}

fn mean<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        T::zero()
    } else {
        v.iter().copied().sum::<T>() / T::lit(v.len() as f64)
    }
}
