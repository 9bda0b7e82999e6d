//! Domain-discrepancy diagnostics: discriminator density ratios and the
//! proxy A-distance.

use thiserror::Error;

use crate::ndgrad::{sigmoid, Array2, RngStream};
use crate::nets::{MaskSource, ModelBundle, NetError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("proxy A-distance needs at least {min} samples per domain, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("feature widths differ: {0} vs {1}")]
    Width(usize, usize),
    #[error("rank correlation needs two equally long series of length >= 2")]
    Series,
    #[error(transparent)]
    Net(#[from] NetError),
}

pub const DEFAULT_RATIO_CLAMP: f64 = 100.0;
pub const MIN_PAD_SAMPLES: usize = 20;

/// ŵ = (1 - p) / p clamped to `[0, clamp]`, for p = P̂(d = 1 | x).
pub fn ratio_from_probability<T: Scalar>(p: T, clamp: T) -> T {
    if p <= T::zero() {
        return clamp;
    }
    ((T::one() - p) / p).max(T::zero()).min(clamp)
}

/// Estimated transferability ŵ(x) for each row of `x`, dropout off. Pools
/// are assumed balanced, so the sample-size factor is 1.
pub fn density_ratio<T: Scalar>(bundle: &ModelBundle<T>, x: &Array2<T>, clamp: T) -> Result<Vec<T>, MetricError> {
    let f = bundle.forward_features(x)?;
    let p = bundle.forward_discriminator(&f, MaskSource::Off)?;
    Ok(p.into_iter().map(|p| ratio_from_probability(p, clamp)).collect())
}

/// `2 (1 - 2ε)` floored at 0.
pub fn a_distance_from_error(err: f64) -> f64 {
    (2.0 * (1.0 - 2.0 * err)).max(0.0)
}

const PROBE_EPOCHS: usize = 100;
const PROBE_LR: f64 = 0.05;

/// Proxy A-distance between two feature sets.
///
/// The pooled features are shuffled and split 50/50; a logistic probe
/// (z-scored inputs, per-sample SGD for 100 epochs, weights averaged over
/// the second half) is trained to tell the domains apart on the first half
/// and its error ε on the second half gives `2 (1 - 2ε)`, floored at 0.
pub fn proxy_a_distance(src: &Array2<f64>, tgt: &Array2<f64>, seed: u64) -> Result<f64, MetricError> {
    let min_n = src.rows().min(tgt.rows());
    if min_n < MIN_PAD_SAMPLES {
        return Err(MetricError::TooFewSamples {
            min: MIN_PAD_SAMPLES,
            got: min_n,
        });
    }
    if src.cols() != tgt.cols() {
        return Err(MetricError::Width(src.cols(), tgt.cols()));
    }
    let dim = src.cols();
    let mut rows: Vec<(&[f64], f64)> = (0..src.rows())
        .map(|i| (src.row(i), 1.0))
        .chain((0..tgt.rows()).map(|i| (tgt.row(i), 0.0)))
        .collect();
    let mut rng = RngStream::new(seed, 20);
    rng.shuffle(&mut rows);
    let (train, test) = rows.split_at(rows.len() / 2);

    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    for (x, _) in train {
        for (m, v) in mean.iter_mut().zip(*x) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; dim];
    for (x, _) in train {
        for ((s, v), m) in sd.iter_mut().zip(*x).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|v| v.sqrt().max(1e-8)).collect();
    let z = |x: &[f64]| -> Vec<f64> { x.iter().zip(&mean).zip(&sd).map(|((v, m), s)| (v - m) / s).collect() };
    let train_z: Vec<(Vec<f64>, f64)> = train.iter().map(|(x, d)| (z(x), *d)).collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; dim];
    let mut b_avg = 0.0;
    let mut averaged = 0.0;
    let mut order: Vec<usize> = (0..train_z.len()).collect();
    for epoch in 0..PROBE_EPOCHS {
        rng.shuffle(&mut order);
        for &i in &order {
            let (x, d) = &train_z[i];
            let logit = b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            let g = sigmoid(logit) - d;
            for (wk, xk) in w.iter_mut().zip(x) {
                *wk -= PROBE_LR * g * xk;
            }
            b -= PROBE_LR * g;
            if epoch >= PROBE_EPOCHS / 2 {
                averaged += 1.0;
                for (a, wk) in w_avg.iter_mut().zip(&w) {
                    *a += (wk - *a) / averaged;
                }
                b_avg += (b - b_avg) / averaged;
            }
        }
    }
    let (w, b) = (w_avg, b_avg);
    let wrong = test
        .iter()
        .filter(|(x, d)| {
            let xz = z(x);
            let logit = b + w.iter().zip(&xz).map(|(a, c)| a * c).sum::<f64>();
            (logit >= 0.0) != (*d == 1.0)
        })
        .count();
    Ok(a_distance_from_error(wrong as f64 / test.len() as f64))
}

/// Average ranks (1-based), ties share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(MetricError::Series);
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len().is_multiple_of(2) { (s[m - 1] + s[m]) / 2.0 } else { s[m] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(ratio_from_probability(0.5f64, 100.0), 1.0);
        assert!((ratio_from_probability(0.2f64, 100.0) - 4.0).abs() < 1e-12);
        assert_eq!(ratio_from_probability(1e-9f64, 100.0), 100.0);
        assert_eq!(ratio_from_probability(0.0f64, 100.0), 100.0);
    }

    #[test]
    fn ratio_is_strictly_decreasing() {
        let ps: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        for w in ps.windows(2) {
            assert!(ratio_from_probability(w[0], 1e9) > ratio_from_probability(w[1], 1e9));
        }
    }

    #[test]
    fn a_distance_examples() {
        assert_eq!(a_distance_from_error(0.25), 1.0);
        assert_eq!(a_distance_from_error(0.0), 2.0);
        assert_eq!(a_distance_from_error(0.5), 0.0);
        assert_eq!(a_distance_from_error(0.7), 0.0);
    }

    #[test]
    fn separable_domains_give_two() {
        let mut rng = RngStream::new(1, 0);
        let a = rng.uniform_array::<f64>(100, 3, 1.0);
        let b = a.map(|v| v + 10.0);
        assert_eq!(proxy_a_distance(&a, &b, 4).unwrap(), 2.0);
    }

    #[test]
    fn identical_distributions_give_near_zero() {
        let mut rng = RngStream::new(2, 0);
        let a = rng.uniform_array::<f64>(500, 2, 1.0);
        let b = rng.uniform_array::<f64>(500, 2, 1.0);
        assert!(proxy_a_distance(&a, &b, 4).unwrap() < 0.2);
    }

    #[test]
    fn too_few_samples() {
        let a = Array2::zeros(10, 2);
        assert!(matches!(
            proxy_a_distance(&a, &a, 1),
            Err(MetricError::TooFewSamples { got: 10, .. })
        ));
    }

    #[test]
    fn spearman_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 90.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
