//! Synthetic source/target pools and the labeled/unlabeled splits used by
//! each training mode.

use std::f64::consts::PI;
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndgrad::{Array2, RngStream};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("need at least {min} samples per domain, got {got}")]
    TooFew { min: usize, got: usize },
    #[error("invalid generator parameter: {0}")]
    Param(String),
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("{needed} labeled samples requested but class {class} has only {available}")]
    NotEnoughPerClass {
        class: usize,
        needed: usize,
        available: usize,
    },
    #[error("{shots}-shot labeling of {classes} classes needs {needed} samples, pool has {available}")]
    KShot {
        shots: usize,
        classes: usize,
        needed: usize,
        available: usize,
    },
    #[error("closed-form density ratio is only defined for Gaussian blobs with sigma > 0")]
    NoClosedForm,
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// Samples with ground-truth labels; visibility is decided by the split.
#[derive(Clone, Debug, PartialEq)]
pub struct Pool {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Pool {
        Pool {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    fn empty(dim: usize) -> Pool {
        Pool {
            x: Array2::zeros(0, dim),
            y: Vec::new(),
        }
    }

    fn class_indices(&self, classes: usize) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); classes];
        for (i, &c) in self.y.iter().enumerate() {
            by_class[c].push(i);
        }
        by_class
    }
}

/// How a pair was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    Moons {
        rotation_deg: f64,
        translation: [f64; 2],
        noise: f64,
    },
    Blobs {
        means: Vec<Vec<f64>>,
        shift: Vec<f64>,
        sigma: f64,
        /// Class proportions, identical in both domains.
        priors: Vec<f64>,
    },
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainPair {
    pub source: Pool,
    pub target: Pool,
    pub classes: usize,
    pub generator: Generator,
    /// Target samples whose labels an imported dataset marks as revealed.
    pub target_revealed: Vec<bool>,
}

fn class_counts(n: usize, classes: usize) -> Vec<usize> {
    (0..classes).map(|c| n / classes + usize::from(c < n % classes)).collect()
}

fn shuffled_pool(rows: Vec<Vec<f64>>, y: Vec<usize>, rng: &mut RngStream) -> Pool {
    let perm = rng.permutation(y.len());
    let x = Array2::from_rows(&perm.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>())
        .expect("rows share a width");
    Pool {
        x,
        y: perm.iter().map(|&i| y[i]).collect(),
    }
}

const MOONS_CENTER: [f64; 2] = [0.5, 0.25];

fn moons_pool(n: usize, noise: f64, rotation_deg: f64, translation: [f64; 2], rng: &mut RngStream) -> Pool {
    let (sin, cos) = rotation_deg.to_radians().sin_cos();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for (class, count) in class_counts(n, 2).into_iter().enumerate() {
        for _ in 0..count {
            let t = PI * rng.uniform();
            let (mut a, mut b) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            a += noise * rng.normal();
            b += noise * rng.normal();
            let (da, db) = (a - MOONS_CENTER[0], b - MOONS_CENTER[1]);
            rows.push(vec![
                MOONS_CENTER[0] + cos * da - sin * db + translation[0],
                MOONS_CENTER[1] + sin * da + cos * db + translation[1],
            ]);
            y.push(class);
        }
    }
    shuffled_pool(rows, y, rng)
}

/// Two interleaved moons as source; the target moons are rotated by
/// `rotation_deg` about the moons' centre and then translated.
pub fn gen_two_moons_shift(
    n_per_domain: usize,
    rotation_deg: f64,
    translation: [f64; 2],
    noise: f64,
    seed: u64,
) -> Result<DomainPair, DataError> {
    if n_per_domain < 4 {
        return Err(DataError::TooFew {
            min: 4,
            got: n_per_domain,
        });
    }
    if !(0.0..=90.0).contains(&rotation_deg) {
        return Err(DataError::Param(format!("rotation {rotation_deg} outside [0, 90]")));
    }
    if !(noise >= 0.0) {
        return Err(DataError::Param(format!("noise {noise} is negative")));
    }
    let source = moons_pool(n_per_domain, noise, 0.0, [0.0, 0.0], &mut RngStream::new(seed, 0));
    let target = moons_pool(n_per_domain, noise, rotation_deg, translation, &mut RngStream::new(seed, 1));
    Ok(DomainPair {
        target_revealed: vec![false; target.len()],
        source,
        target,
        classes: 2,
        generator: Generator::Moons {
            rotation_deg,
            translation,
            noise,
        },
    })
}

/// Class means: on a circle of radius 3 in the first two coordinates, or
/// spaced 3 apart on a line when `dim == 1`.
pub fn blob_means(classes: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mut m = vec![0.0; dim];
            if dim == 1 {
                m[0] = 3.0 * c as f64;
            } else {
                let a = 2.0 * PI * c as f64 / classes as f64;
                m[0] = 3.0 * a.cos();
                m[1] = 3.0 * a.sin();
            }
            m
        })
        .collect()
}

/// `classes` isotropic Gaussian clusters; target means are source means + `shift`.
pub fn gen_gaussian_blobs(
    classes: usize,
    dim: usize,
    shift: &[f64],
    sigma: f64,
    n_per_domain: usize,
    seed: u64,
) -> Result<DomainPair, DataError> {
    if classes < 2 {
        return Err(DataError::Param(format!("need at least 2 classes, got {classes}")));
    }
    if dim == 0 || shift.len() != dim {
        return Err(DataError::Param(format!(
            "shift has {} components for dimension {dim}",
            shift.len()
        )));
    }
    if !(sigma >= 0.0) {
        return Err(DataError::Param(format!("sigma {sigma} is negative")));
    }
    if n_per_domain < classes {
        return Err(DataError::TooFew {
            min: classes,
            got: n_per_domain,
        });
    }
    if sigma == 0.0 && shift.iter().all(|&d| d == 0.0) {
        warn!("sigma = 0 and zero shift: both domains are identical point masses");
    }
    let means = blob_means(classes, dim);
    let counts = class_counts(n_per_domain, classes);
    let draw = |offset: &[f64], rng: &mut RngStream| {
        let mut rows = Vec::with_capacity(n_per_domain);
        let mut y = Vec::with_capacity(n_per_domain);
        for (c, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                rows.push(
                    (0..dim)
                        .map(|k| means[c][k] + offset[k] + sigma * rng.normal())
                        .collect(),
                );
                y.push(c);
            }
        }
        shuffled_pool(rows, y, rng)
    };
    let source = draw(&vec![0.0; dim], &mut RngStream::new(seed, 0));
    let target = draw(shift, &mut RngStream::new(seed, 1));
    let priors = counts.iter().map(|&c| c as f64 / n_per_domain as f64).collect();
    Ok(DomainPair {
        target_revealed: vec![false; target.len()],
        source,
        target,
        classes,
        generator: Generator::Blobs {
            means,
            shift: shift.to_vec(),
            sigma,
            priors,
        },
    })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl DomainPair {
    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// w(x) = p_t(x) / p_s(x) from the generating mixtures (blobs only).
    pub fn true_density_ratio(&self, x: &[f64]) -> Result<f64, DataError> {
        let Generator::Blobs {
            means,
            shift,
            sigma,
            priors,
        } = &self.generator
        else {
            return Err(DataError::NoClosedForm);
        };
        if *sigma <= 0.0 {
            return Err(DataError::NoClosedForm);
        }
        let log_mix = |offset: &[f64]| {
            let terms: Vec<f64> = means
                .iter()
                .zip(priors)
                .map(|(m, &pi)| {
                    let d2: f64 = x
                        .iter()
                        .zip(m)
                        .zip(offset)
                        .map(|((xi, mi), oi)| (xi - mi - oi).powi(2))
                        .sum();
                    pi.ln() - d2 / (2.0 * sigma * sigma)
                })
                .collect();
            log_sum_exp(&terms)
        };
        Ok((log_mix(shift) - log_mix(&vec![0.0; x.len()])).exp())
    }

    /// Bayes-optimal source label for blobs: the nearest class mean.
    pub fn nearest_source_mean(&self, x: &[f64]) -> Option<usize> {
        let Generator::Blobs { means, .. } = &self.generator else {
            return None;
        };
        let dist = |m: &Vec<f64>| x.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        (0..means.len()).min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b])))
    }

    /// Dataset CSV: header `x0,…,x{d-1},y,domain,labeled`, source rows
    /// (domain 1, labeled 1) first.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out: String = (0..d).map(|k| format!("x{k},")).collect();
        out.push_str("y,domain,labeled\n");
        let mut write = |pool: &Pool, domain: u8, labeled: &dyn Fn(usize) -> bool| {
            for i in 0..pool.len() {
                for v in pool.x.row(i) {
                    out.push_str(&format!("{v},"));
                }
                out.push_str(&format!("{},{domain},{}\n", pool.y[i], u8::from(labeled(i))));
            }
        };
        write(&self.source, 1, &|_| true);
        write(&self.target, 0, &|i| self.target_revealed[i]);
        out
    }

    /// Parses the dataset CSV written by [`DomainPair::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(DataError::Csv {
            line: 1,
            msg: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let n = cols.len();
        if n < 4 || cols[n - 3..] != ["y", "domain", "labeled"] {
            return Err(DataError::Csv {
                line: 1,
                msg: "header must be x0,...,y,domain,labeled".into(),
            });
        }
        let dim = n - 3;
        let (mut src_rows, mut src_y) = (Vec::new(), Vec::new());
        let (mut tgt_rows, mut tgt_y, mut revealed) = (Vec::new(), Vec::new(), Vec::new());
        for (ln, line) in lines {
            let err = |msg: String| DataError::Csv { line: ln + 1, msg };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != n {
                return Err(err(format!("expected {n} fields, got {}", fields.len())));
            }
            let x = fields[..dim]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| err(format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(err("non-finite feature".into()));
            }
            let int = |f: &str| f.parse::<usize>().map_err(|e| err(format!("{f:?}: {e}")));
            let (y, domain, labeled) = (int(fields[dim])?, int(fields[dim + 1])?, int(fields[dim + 2])?);
            match domain {
                1 => {
                    src_rows.push(x);
                    src_y.push(y);
                }
                0 => {
                    tgt_rows.push(x);
                    tgt_y.push(y);
                    revealed.push(labeled == 1);
                }
                other => return Err(err(format!("domain must be 0 or 1, got {other}"))),
            }
        }
        if src_y.is_empty() {
            return Err(DataError::EmptyPool("source"));
        }
        if tgt_y.is_empty() {
            return Err(DataError::EmptyPool("target"));
        }
        let classes = src_y.iter().chain(&tgt_y).max().map_or(0, |m| m + 1).max(2);
        let pool = |rows: Vec<Vec<f64>>, y| Pool {
            x: Array2::from_rows(&rows).expect("rows share a width"),
            y,
        };
        Ok(Self {
            source: pool(src_rows, src_y),
            target: pool(tgt_rows, tgt_y),
            classes,
            generator: Generator::External,
            target_revealed: revealed,
        })
    }
}

/// How many target (or, for SSL, in-domain) labels are revealed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Labeling {
    Fraction(f64),
    PerClass(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Uda,
    Ssda(Labeling),
    /// Single domain: the source pool with `k` labels per class.
    Ssl { shots: usize },
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Uda => write!(f, "uda"),
            Mode::Ssda(_) => write!(f, "ssda"),
            Mode::Ssl { .. } => write!(f, "ssl"),
        }
    }
}

/// Training view of a pair. `source` is the labeled domain (d = 1); the
/// two target pools together form d = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub source: Pool,
    pub target_labeled: Pool,
    pub target_unlabeled: Pool,
    pub classes: usize,
}

fn stratified(
    pool: &Pool,
    classes: usize,
    per_class: impl Fn(usize) -> usize,
    rng: &mut RngStream,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    let mut chosen = Vec::new();
    for (c, mut idx) in pool.class_indices(classes).into_iter().enumerate() {
        let needed = per_class(idx.len());
        if needed > idx.len() {
            return Err(DataError::NotEnoughPerClass {
                class: c,
                needed,
                available: idx.len(),
            });
        }
        rng.shuffle(&mut idx);
        chosen.extend_from_slice(&idx[..needed]);
    }
    chosen.sort_unstable();
    let mut is_chosen = vec![false; pool.len()];
    for &i in &chosen {
        is_chosen[i] = true;
    }
    let rest = (0..pool.len()).filter(|&i| !is_chosen[i]).collect();
    Ok((chosen, rest))
}

/// Builds the labeled/unlabeled view for a training mode. SSDA labels are
/// class-stratified with at least one per class; an imported dataset's
/// revealed flags take precedence.
pub fn make_splits(pair: &DomainPair, mode: Mode, seed: u64) -> Result<Split, DataError> {
    let mut rng = RngStream::new(seed, 10);
    let classes = pair.classes;
    match mode {
        Mode::Uda => Ok(Split {
            source: pair.source.clone(),
            target_labeled: Pool::empty(pair.dim()),
            target_unlabeled: pair.target.clone(),
            classes,
        }),
        Mode::Ssda(labeling) => {
            let (labeled, unlabeled) = if pair.target_revealed.iter().any(|&r| r) {
                let (l, u): (Vec<usize>, Vec<usize>) =
                    (0..pair.target.len()).partition(|&i| pair.target_revealed[i]);
                (l, u)
            } else {
                if let Labeling::PerClass(k) = labeling {
                    check_k_shot(k, classes, pair.target.len())?;
                }
                let per_class = |n: usize| match labeling {
                    Labeling::Fraction(f) => ((f * n as f64).round() as usize).max(1),
                    Labeling::PerClass(k) => k,
                };
                stratified(&pair.target, classes, per_class, &mut rng)?
            };
            Ok(Split {
                source: pair.source.clone(),
                target_labeled: pair.target.select(&labeled),
                target_unlabeled: pair.target.select(&unlabeled),
                classes,
            })
        }
        Mode::Ssl { shots } => {
            check_k_shot(shots, classes, pair.source.len())?;
            let (labeled, unlabeled) = stratified(&pair.source, classes, |_| shots, &mut rng)?;
            Ok(Split {
                source: pair.source.select(&labeled),
                target_labeled: Pool::empty(pair.dim()),
                target_unlabeled: pair.source.select(&unlabeled),
                classes,
            })
        }
    }
}

fn check_k_shot(shots: usize, classes: usize, available: usize) -> Result<(), DataError> {
    if shots == 0 || shots * classes > available {
        return Err(DataError::KShot {
            shots,
            classes,
            needed: shots * classes,
            available,
        });
    }
    Ok(())
}

/// Up-samples `pool` to `target_len`: every original row once, then
/// uniform draws with replacement.
pub fn upsample(pool: &Pool, target_len: usize, rng: &mut RngStream) -> Pool {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    while idx.len() < target_len {
        idx.push(rng.below(pool.len()));
    }
    pool.select(&idx)
}

/// Resamples the smaller pool with replacement until both have equal size.
pub fn balance_upsample(pair: &DomainPair, seed: u64) -> Result<DomainPair, DataError> {
    if pair.source.is_empty() {
        return Err(DataError::EmptyPool("source"));
    }
    if pair.target.is_empty() {
        return Err(DataError::EmptyPool("target"));
    }
    let mut rng = RngStream::new(seed, 11);
    let (ns, nt) = (pair.source.len(), pair.target.len());
    let mut out = pair.clone();
    if ns < nt {
        out.source = upsample(&pair.source, nt, &mut rng);
    } else if nt < ns {
        let mut idx: Vec<usize> = (0..nt).collect();
        while idx.len() < ns {
            idx.push(rng.below(nt));
        }
        out.target = pair.target.select(&idx);
        out.target_revealed = idx.iter().map(|&i| pair.target_revealed[i]).collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_are_deterministic_and_balanced() {
        let a = gen_two_moons_shift(101, 30.0, [0.0, 0.0], 0.1, 3).unwrap();
        let b = gen_two_moons_shift(101, 30.0, [0.0, 0.0], 0.1, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source.len(), 101);
        let ones = a.source.y.iter().filter(|&&y| y == 1).count();
        assert_eq!(ones, 50);
        assert_eq!(a.target.y.iter().filter(|&&y| y == 1).count(), 50);
    }

    #[test]
    fn moons_parameter_errors() {
        assert!(matches!(gen_two_moons_shift(3, 0.0, [0.0; 2], 0.1, 1), Err(DataError::TooFew { .. })));
        assert!(gen_two_moons_shift(10, 120.0, [0.0; 2], 0.1, 1).is_err());
        assert!(gen_two_moons_shift(10, 10.0, [0.0; 2], -0.1, 1).is_err());
    }

    #[test]
    fn noiseless_zero_rotation_target_lies_on_source_moons() {
        let p = gen_two_moons_shift(50, 0.0, [0.0, 0.0], 0.0, 9).unwrap();
        for i in 0..p.target.len() {
            let (a, b) = (p.target.x.get(i, 0), p.target.x.get(i, 1));
            let r = if p.target.y[i] == 0 {
                (a * a + b * b).sqrt()
            } else {
                ((a - 1.0).powi(2) + (b - 0.5).powi(2)).sqrt()
            };
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_shift_blobs_have_unit_ratio() {
        let p = gen_gaussian_blobs(3, 2, &[0.0, 0.0], 1.0, 60, 1).unwrap();
        for i in 0..p.source.len() {
            let w = p.true_density_ratio(p.source.x.row(i)).unwrap();
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_ratio_matches_direct_mixture() {
        let p = gen_gaussian_blobs(3, 2, &[2.0, 0.0], 1.0, 90, 1).unwrap();
        let Generator::Blobs { means, .. } = &p.generator else { unreachable!() };
        let x = [0.7, -1.1];
        let dens = |off: f64| -> f64 {
            means
                .iter()
                .map(|m| {
                    let d2 = (x[0] - m[0] - off).powi(2) + (x[1] - m[1]).powi(2);
                    (-d2 / 2.0).exp() / 3.0
                })
                .sum()
        };
        let direct = dens(2.0) / dens(0.0);
        assert!((p.true_density_ratio(&x).unwrap() - direct).abs() < 1e-12 * direct.max(1.0));
    }

    #[test]
    fn nearest_mean_is_bayes_label_at_the_means() {
        let p = gen_gaussian_blobs(3, 2, &[2.0, 0.0], 1.0, 30, 1).unwrap();
        for (c, m) in blob_means(3, 2).iter().enumerate() {
            assert_eq!(p.nearest_source_mean(m), Some(c));
        }
    }

    #[test]
    fn moons_have_no_closed_form() {
        let p = gen_two_moons_shift(10, 0.0, [0.0; 2], 0.1, 1).unwrap();
        assert_eq!(p.true_density_ratio(&[0.0, 0.0]), Err(DataError::NoClosedForm));
    }

    #[test]
    fn uda_split_hides_all_target_labels() {
        let p = gen_two_moons_shift(100, 30.0, [0.0; 2], 0.1, 1).unwrap();
        let s = make_splits(&p, Mode::Uda, 1).unwrap();
        assert_eq!(s.target_labeled.len(), 0);
        assert_eq!(s.target_unlabeled.len(), 100);
    }

    #[test]
    fn ssda_one_percent_is_stratified() {
        let p = gen_two_moons_shift(1000, 30.0, [0.0; 2], 0.1, 1).unwrap();
        let s = make_splits(&p, Mode::Ssda(Labeling::Fraction(0.01)), 4).unwrap();
        assert_eq!(s.target_labeled.len(), 10);
        assert_eq!(s.target_labeled.y.iter().filter(|&&y| y == 0).count(), 5);
        assert_eq!(s.target_unlabeled.len(), 990);
    }

    #[test]
    fn ssda_tiny_fraction_still_labels_each_class() {
        let p = gen_two_moons_shift(40, 30.0, [0.0; 2], 0.1, 1).unwrap();
        let s = make_splits(&p, Mode::Ssda(Labeling::Fraction(0.001)), 4).unwrap();
        assert_eq!(s.target_labeled.len(), 2);
    }

    #[test]
    fn ssl_three_shot() {
        let p = gen_gaussian_blobs(4, 2, &[0.0, 0.0], 1.0, 100, 1).unwrap();
        let s = make_splits(&p, Mode::Ssl { shots: 3 }, 2).unwrap();
        assert_eq!(s.source.len(), 12);
        for c in 0..4 {
            assert_eq!(s.source.y.iter().filter(|&&y| y == c).count(), 3);
        }
        assert_eq!(s.target_unlabeled.len(), 88);
        assert!(matches!(
            make_splits(&p, Mode::Ssl { shots: 30 }, 2),
            Err(DataError::KShot { .. })
        ));
    }

    #[test]
    fn balancing() {
        let p = gen_two_moons_shift(100, 30.0, [0.0; 2], 0.1, 1).unwrap();
        assert_eq!(balance_upsample(&p, 3).unwrap(), p);

        let mut q = p.clone();
        q.source = p.source.select(&(0..80).collect::<Vec<_>>());
        let b = balance_upsample(&q, 3).unwrap();
        assert_eq!(b.source.len(), 100);
        assert_eq!(b.source.select(&(0..80).collect::<Vec<_>>()), q.source);
        assert_eq!(b, balance_upsample(&q, 3).unwrap());

        let mut e = p.clone();
        e.target = Pool::empty(2);
        e.target_revealed.clear();
        assert_eq!(balance_upsample(&e, 1), Err(DataError::EmptyPool("target")));
    }

    #[test]
    fn csv_round_trip() {
        let mut p = gen_gaussian_blobs(3, 2, &[1.0, -0.5], 0.7, 30, 8).unwrap();
        p.target_revealed[2] = true;
        let back = DomainPair::from_csv(&p.to_csv()).unwrap();
        assert_eq!(back.source, p.source);
        assert_eq!(back.target, p.target);
        assert_eq!(back.target_revealed, p.target_revealed);
        assert_eq!(back.classes, 3);
        assert!(p.to_csv().starts_with("x0,x1,y,domain,labeled\n"));
    }

    #[test]
    fn csv_errors_name_the_line() {
        let bad = "x0,y,domain,labeled\n0.5,1,1,1\n0.2,0,7,0\n";
        assert!(matches!(DomainPair::from_csv(bad), Err(DataError::Csv { line: 3, .. })));
    }
}
