//! Mini-batch training of the adversarial adaptation model.
//!
//! Every random draw comes from a dedicated stream of the run seed:
//! initialization, batch sampling, the adversarial dropout mask and the
//! uncertainty passes each have their own, and each epoch's diagnostics use
//! a fresh stream. Switching the uncertainty machinery on or off therefore
//! never perturbs the other draws, which is what lets a plain adversarial
//! run and a zero-weighted uncertainty run agree bit for bit.

mod config;
mod metrics;
mod optim;

use std::time::Instant;

use log::{debug, info};
use thiserror::Error;

pub use config::{ConfigError, DatasetKind, ExperimentConfig, Method, ModeKind};
pub use metrics::{MetricsLog, MetricsRow, METRICS_HEADER};
pub use optim::sgd_step;

use crate::evalmetrics::{proxy_a_distance, MetricError};
use crate::losses::{
    loss_adv, loss_adversarial_weighted, loss_bias, loss_classifier, loss_nce, loss_pce, loss_tce, loss_total,
    LossError,
};
use crate::ndgrad::{gradcheck, Array2, GradcheckReport, NdError, RngStream, Tape, Var};
use crate::nets::{grl_lambda, Architecture, BoundBundle, BoundDense, MaskSource, ModelBundle, NetError};
use crate::pseudo::{PseudoError, PseudoLabelSet};
use crate::scalar::Scalar;
use crate::synthdata::{
    gen_gaussian_blobs, gen_two_moons_shift, make_splits, upsample, DataError, DomainPair, Pool, Split,
};
use crate::uncertainty::{mc_variance, normalize_mu, selection_weight, variance_node, UncertaintyError, UncertaintyRecord};

pub const STREAM_INIT: u64 = 0;
pub const STREAM_BATCH: u64 = 1;
pub const STREAM_ADVERSARIAL: u64 = 2;
pub const STREAM_UNCERTAINTY: u64 = 3;
pub const STREAM_BALANCE: u64 = 4;
/// Epoch `e` evaluates with stream `STREAM_EVAL + e`.
pub const STREAM_EVAL: u64 = 100;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot read dataset {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("non-finite value at epoch {epoch}, step {step}: {detail}")]
    NonFinite {
        epoch: usize,
        step: usize,
        detail: String,
        /// CSV dump of the offending batch.
        batch: String,
    },
    #[error("training step failed at epoch {epoch}, step {step}: {detail}")]
    Step { epoch: usize, step: usize, detail: String },
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("{0} subset is empty")]
    EmptySubset(&'static str),
    #[error("metric row for epoch {0} is not finite")]
    NonFiniteMetrics(usize),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Pseudo(#[from] PseudoError),
}

/// Error raised inside one step, before the batch context is attached.
#[derive(Debug)]
struct StepFailure {
    non_finite: bool,
    detail: String,
}

impl From<NdError> for StepFailure {
    fn from(e: NdError) -> Self {
        Self {
            non_finite: matches!(e, NdError::NonFinite { .. }),
            detail: e.to_string(),
        }
    }
}

impl From<NetError> for StepFailure {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Nd(nd) => nd.into(),
            other => Self {
                non_finite: false,
                detail: other.to_string(),
            },
        }
    }
}

impl From<LossError> for StepFailure {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Nd(nd) => nd.into(),
            other => Self {
                non_finite: false,
                detail: other.to_string(),
            },
        }
    }
}

impl From<UncertaintyError> for StepFailure {
    fn from(e: UncertaintyError) -> Self {
        match e {
            UncertaintyError::Nd(nd) => nd.into(),
            UncertaintyError::Net(net) => net.into(),
            other => Self {
                non_finite: false,
                detail: other.to_string(),
            },
        }
    }
}

impl From<PseudoError> for StepFailure {
    fn from(e: PseudoError) -> Self {
        Self {
            non_finite: false,
            detail: e.to_string(),
        }
    }
}

/// Which terms of the objective a method actually trains with.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Objective {
    reverse: bool,
    uncertainty: bool,
    mu_src: bool,
    mu_tgt: bool,
    bias_src: bool,
    bias_tgt: bool,
    pce: bool,
    nce: bool,
    alpha_adv: f64,
    alpha_bias: f64,
    alpha_tce: f64,
    alpha_nce: f64,
}

impl Objective {
    fn of(cfg: &ExperimentConfig) -> Self {
        let plain = Objective {
            reverse: false,
            uncertainty: false,
            mu_src: false,
            mu_tgt: false,
            bias_src: false,
            bias_tgt: false,
            pce: false,
            nce: false,
            alpha_adv: cfg.alpha_adv,
            alpha_bias: 0.0,
            alpha_tce: 0.0,
            alpha_nce: cfg.alpha_nce,
        };
        match cfg.method {
            Method::SourceOnly => plain,
            Method::Dann => Objective { reverse: true, ..plain },
            Method::DannUtep => Objective {
                reverse: true,
                uncertainty: true,
                mu_src: cfg.mu_weight_source,
                mu_tgt: cfg.mu_weight_target,
                bias_src: cfg.bias_source,
                bias_tgt: cfg.bias_target,
                pce: cfg.use_pce,
                nce: cfg.use_nce,
                alpha_bias: cfg.alpha_bias,
                alpha_tce: cfg.alpha_tce,
                ..plain
            },
        }
    }

    fn mu_weights<T: Scalar>(&self, mu: &[T], ns: usize) -> (Vec<T>, Vec<T>) {
        let pick = |on: bool, part: &[T]| if on { part.to_vec() } else { vec![T::zero(); part.len()] };
        (pick(self.mu_src, &mu[..ns]), pick(self.mu_tgt, &mu[ns..]))
    }

    fn bias_mask<T: Scalar>(&self, ns: usize, n: usize) -> Vec<T> {
        (0..n)
            .map(|i| {
                let on = if i < ns { self.bias_src } else { self.bias_tgt };
                if on {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

/// α_tce ramps linearly from 0 over the first `warmup_frac` of all steps.
pub fn tce_weight(alpha_tce: f64, warmup_frac: f64, step: usize, total_steps: usize) -> f64 {
    let ramp = warmup_frac * total_steps as f64;
    if ramp <= 0.0 {
        alpha_tce
    } else {
        alpha_tce * (step as f64 / ramp).min(1.0)
    }
}

/// Builds the domain pair a config describes.
pub fn load_pair(cfg: &ExperimentConfig) -> Result<DomainPair, TrainError> {
    let seed = cfg.data_seed();
    Ok(match cfg.dataset {
        DatasetKind::Moons => gen_two_moons_shift(
            cfg.n_per_domain,
            cfg.rotation_deg,
            [cfg.translation_x, cfg.translation_y],
            cfg.noise,
            seed,
        )?,
        DatasetKind::Blobs => gen_gaussian_blobs(
            cfg.blob_classes,
            cfg.blob_dim,
            &cfg.blob_shift,
            cfg.blob_sigma,
            cfg.n_per_domain,
            seed,
        )?,
        DatasetKind::Csv => {
            let text = std::fs::read_to_string(&cfg.dataset_path).map_err(|e| TrainError::Io {
                path: cfg.dataset_path.clone(),
                msg: e.to_string(),
            })?;
            DomainPair::from_csv(&text)?
        }
    })
}

pub fn architecture(cfg: &ExperimentConfig, input_dim: usize, classes: usize) -> Architecture {
    Architecture {
        input_dim,
        hidden_dim: cfg.hidden_dim,
        feature_dim: cfg.feature_dim,
        classes,
        disc_hidden: cfg.disc_hidden,
        dropout_rate: cfg.dropout,
    }
}

/// The network a run starts from.
pub fn initial_bundle<T: Scalar>(cfg: &ExperimentConfig, input_dim: usize, classes: usize) -> ModelBundle<T> {
    ModelBundle::new(
        architecture(cfg, input_dim, classes),
        &mut RngStream::new(cfg.seed, STREAM_INIT),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subset {
    UnlabeledTarget,
    Source,
    All,
}

/// Fraction of argmax-correct predictions on `pool`, dropout off.
pub fn accuracy<T: Scalar>(bundle: &ModelBundle<T>, pool: &Pool) -> Result<f64, TrainError> {
    if pool.is_empty() {
        return Err(TrainError::EmptySubset("evaluation"));
    }
    let g = bundle.forward_classifier(&pool.x.cast())?;
    let correct = g.argmax_rows().iter().zip(&pool.y).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / pool.len() as f64)
}

pub fn evaluate<T: Scalar>(bundle: &ModelBundle<T>, split: &Split, subset: Subset) -> Result<f64, TrainError> {
    match subset {
        Subset::UnlabeledTarget if split.target_unlabeled.is_empty() => Err(TrainError::EmptySubset("unlabeled target")),
        Subset::UnlabeledTarget => accuracy(bundle, &split.target_unlabeled),
        Subset::Source if split.source.is_empty() => Err(TrainError::EmptySubset("source")),
        Subset::Source => accuracy(bundle, &split.source),
        Subset::All => {
            let mut all = split.source.clone();
            for pool in [&split.target_labeled, &split.target_unlabeled] {
                all.x = all.x.vstack(&pool.x).map_err(NetError::from)?;
                all.y.extend_from_slice(&pool.y);
            }
            accuracy(bundle, &all)
        }
    }
}

/// Everything observable about one finished epoch.
pub struct EpochReport<'a, T> {
    pub row: &'a MetricsRow,
    /// Uncertainty of every diagnostic sample (source rows first).
    pub uncertainty: &'a UncertaintyRecord<T>,
    /// Pseudo-label selection on the unlabeled target rows.
    pub pseudo: &'a PseudoLabelSet<T>,
    /// Selection weights of the unlabeled target rows.
    pub pseudo_weights: &'a [T],
}

pub struct TrainOutcome<T> {
    pub bundle: ModelBundle<T>,
    pub log: MetricsLog,
    pub steps: usize,
    pub split: Split,
}

/// Cycles through a pool in shuffled order, reshuffling on wrap-around.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(len: usize, rng: &mut RngStream) -> Self {
        Self {
            order: rng.permutation(len),
            pos: 0,
        }
    }

    fn take(&mut self, n: usize, rng: &mut RngStream) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            if self.pos == self.order.len() {
                rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

struct Batch<T> {
    x: Array2<T>,
    labels: Vec<usize>,
    ns: usize,
    n_labeled_target: usize,
}

fn batch_dump(parts: &[(&Pool, &[usize], &str, bool)]) -> String {
    let dim = parts.first().map_or(0, |p| p.0.dim());
    let mut out = String::from("row,domain,labeled,y");
    for j in 0..dim {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    let mut row = 0;
    for (pool, idx, domain, labeled) in parts {
        for &i in *idx {
            out.push_str(&format!("{row},{domain},{},{}", u8::from(*labeled), pool.y[i]));
            for v in pool.x.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
            row += 1;
        }
    }
    out
}

fn stack<T: Scalar>(pools: &[&Array2<f64>]) -> Array2<T> {
    let cols = pools[0].cols();
    let data: Vec<T> = pools.iter().flat_map(|p| p.data().iter().map(|&v| T::lit(v))).collect();
    Array2::from_vec(data.len() / cols.max(1), cols, data).expect("pools share a width")
}

struct Run<'c, T> {
    cfg: &'c ExperimentConfig,
    obj: Objective,
    bundle: ModelBundle<T>,
    velocity: Vec<Array2<T>>,
    adv_rng: RngStream,
    mc_rng: RngStream,
    source: Pool,
    target_labeled: Pool,
    target_unlabeled: Pool,
}

struct Diagnostics<T> {
    row: MetricsRow,
    record: UncertaintyRecord<T>,
    pseudo: PseudoLabelSet<T>,
    pseudo_weights: Vec<T>,
}

/// Dropout masks and detached per-sample quantities of one objective
/// evaluation, in the order they were drawn.
#[derive(Clone, Debug, Default)]
struct Detached<T> {
    masks: Vec<Array2<T>>,
    mu: Vec<T>,
    pseudo: Option<PseudoLabelSet<T>>,
}

/// Source of the random and detached inputs of the objective: either
/// fresh draws (recorded as they are made) or a replay of a recording.
struct Draws<'a, T> {
    rngs: Option<(&'a mut RngStream, &'a mut RngStream)>,
    record: Detached<T>,
    next_mask: usize,
}

impl<'a, T: Scalar> Draws<'a, T> {
    fn sample(adversarial: &'a mut RngStream, uncertainty: &'a mut RngStream) -> Self {
        Self {
            rngs: Some((adversarial, uncertainty)),
            record: Detached::default(),
            next_mask: 0,
        }
    }

    fn replay(record: Detached<T>) -> Self {
        Self {
            rngs: None,
            record,
            next_mask: 0,
        }
    }

    fn mask(&mut self, adversarial: bool, rows: usize, cols: usize, rate: f64) -> Array2<T> {
        match &mut self.rngs {
            Some((adv, mc)) => {
                let rng = if adversarial { adv } else { mc };
                let m = rng.dropout_mask(rows, cols, rate);
                self.record.masks.push(m.clone());
                m
            }
            None => {
                self.next_mask += 1;
                self.record.masks[self.next_mask - 1].clone()
            }
        }
    }

    fn mu(&mut self, fresh: impl FnOnce() -> Result<Vec<T>, UncertaintyError>) -> Result<Vec<T>, UncertaintyError> {
        if self.rngs.is_some() {
            self.record.mu = fresh()?;
        }
        Ok(self.record.mu.clone())
    }

    fn pseudo(
        &mut self,
        fresh: impl FnOnce() -> Result<PseudoLabelSet<T>, PseudoError>,
    ) -> Result<PseudoLabelSet<T>, PseudoError> {
        if self.rngs.is_some() || self.record.pseudo.is_none() {
            self.record.pseudo = Some(fresh()?);
        }
        Ok(self.record.pseudo.clone().expect("set above"))
    }
}

fn zero_node<T: Scalar>(tape: &mut Tape<T>) -> Result<Var, NdError> {
    tape.leaf(Array2::scalar(T::zero()))
}

/// Builds the training objective of one batch on `tape`; `grl` is the
/// reversal coefficient in front of the discriminator (`None` leaves the
/// features unreversed).
#[allow(clippy::too_many_arguments)]
fn assemble<T: Scalar>(
    tape: &mut Tape<T>,
    bundle: &ModelBundle<T>,
    bound: &BoundBundle,
    cfg: &ExperimentConfig,
    obj: Objective,
    batch: &Batch<T>,
    grl: Option<T>,
    alpha_tce: f64,
    draws: &mut Draws<'_, T>,
) -> Result<Var, StepFailure> {
    let n = batch.x.rows();
    let (ns, n_lab) = (batch.ns, batch.ns + batch.n_labeled_target);
    let (hidden, rate) = (bundle.arch.disc_hidden, bundle.arch.dropout_rate);
    let xv = tape.leaf(batch.x.clone())?;
    let f = bundle.features(tape, bound, xv)?;
    let g = bundle.class_probs(tape, bound, f)?;
    let g_lab = tape.slice_rows(g, 0, n_lab)?;
    let l_y = loss_classifier(tape, g_lab, &batch.labels, None)?;

    let mask = draws.mask(true, n, hidden, rate);
    let p = bundle.discriminate(tape, bound, f, MaskSource::Fixed(&mask), grl)?;

    let (mu, s, l_bias) = if obj.uncertainty {
        let mut passes = Vec::with_capacity(cfg.passes);
        for _ in 0..cfg.passes {
            let m = draws.mask(false, n, hidden, rate);
            passes.push(bundle.discriminate(tape, bound, f, MaskSource::Fixed(&m), None)?);
        }
        let u = variance_node(tape, &passes)?;
        let mu = draws.mu(|| normalize_mu(tape.value(u).data()))?;
        let s = selection_weight(&mu);
        let mask = tape.leaf(Array2::column(obj.bias_mask(ns, n)))?;
        let masked = tape.mul(u, mask)?;
        (mu, s, loss_bias(tape, masked)?)
    } else {
        (vec![T::zero(); n], vec![T::one(); n], zero_node(tape)?)
    };

    let p_src = tape.slice_rows(p, 0, ns)?;
    let p_tgt = tape.slice_rows(p, ns, n)?;
    let (mu_src, mu_tgt) = obj.mu_weights(&mu, ns);
    let l_d = loss_adversarial_weighted(tape, p_src, p_tgt, &mu_src, &mu_tgt)?;
    let l_adv = loss_adv(tape, l_y, l_d, obj.alpha_adv)?;

    let (l_pce, l_nce) = if obj.uncertainty && n > n_lab {
        let g_u = tape.slice_rows(g, n_lab, n)?;
        let set = draws.pseudo(|| {
            PseudoLabelSet::select(tape.value(g_u).clone(), T::lit(cfg.beta), T::lit(cfg.gamma))
        })?;
        let s_u = &s[n_lab..];
        let pce = if obj.pce {
            loss_pce(tape, g_u, &set.positive, s_u)?
        } else {
            zero_node(tape)?
        };
        let nce = if obj.nce {
            loss_nce(tape, g_u, &set.negative, s_u)?
        } else {
            zero_node(tape)?
        };
        (pce, nce)
    } else {
        (zero_node(tape)?, zero_node(tape)?)
    };
    let l_tce = loss_tce(tape, l_pce, l_nce, obj.alpha_nce)?;
    Ok(loss_total(tape, l_adv, l_bias, l_tce, obj.alpha_bias, alpha_tce)?)
}

const GRADCHECK_CANDIDATES: usize = 50;

/// Smallest distance of any relu input of the network from zero on `x`.
fn relu_margin<T: Scalar>(bundle: &ModelBundle<T>, x: &Array2<T>) -> Result<f64, NetError> {
    let pre = |input: &Array2<T>, layer: &crate::nets::Dense<T>| {
        let z = input.dot(&layer.weight);
        let bias = layer.bias.data();
        let mut out = z.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v + bias[i % bias.len()];
        }
        out
    };
    let hidden = pre(x, &bundle.feature[0]);
    let disc = pre(&bundle.forward_features(x)?, &bundle.discriminator[0]);
    Ok(hidden
        .data()
        .iter()
        .chain(disc.data())
        .map(|v| v.as_f64().abs())
        .fold(f64::INFINITY, f64::min))
}

/// Compares reverse-mode gradients of the full training objective with
/// central differences on one batch of the split. Dropout masks,
/// uncertainty weights and pseudo labels are frozen at their values for
/// the initial parameters, and gradient reversal is left out because it
/// deliberately makes the propagated gradient differ from the derivative.
pub fn objective_gradcheck<T: Scalar>(
    cfg: &ExperimentConfig,
    pair: &DomainPair,
    step: T,
) -> Result<GradcheckReport, TrainError> {
    cfg.validate()?;
    let split = make_splits(pair, cfg.split_mode(), cfg.data_seed())?;
    let bundle: ModelBundle<T> = initial_bundle(cfg, pair.dim(), pair.classes);
    let window = |pool: &Pool, k: usize, c: usize| -> Vec<usize> {
        let k = k.min(pool.len());
        (0..k).map(|i| (c * k + i) % pool.len()).collect()
    };
    let make_batch = |c: usize| {
        let si = window(&split.source, cfg.batch_src, c);
        let li = window(&split.target_labeled, cfg.batch_tgt_labeled, c);
        let ui = window(&split.target_unlabeled, cfg.batch_tgt_unlabeled, c);
        Batch {
            x: stack(&[
                &split.source.x.select_rows(&si),
                &split.target_labeled.x.select_rows(&li),
                &split.target_unlabeled.x.select_rows(&ui),
            ]),
            labels: si
                .iter()
                .map(|&i| split.source.y[i])
                .chain(li.iter().map(|&i| split.target_labeled.y[i]))
                .collect(),
            ns: si.len(),
            n_labeled_target: li.len(),
        }
    };
    if split.source.is_empty() || split.target_unlabeled.is_empty() {
        return Err(TrainError::EmptySubset("gradient check batch"));
    }
    // Central differences are meaningless across a relu kink, so take the
    // first window of rows whose relu inputs all keep a safe distance from
    // zero (or the best of the candidates).
    let safe = 20.0 * step.as_f64();
    let mut batch = make_batch(0);
    let mut best = relu_margin(&bundle, &batch.x)?;
    for c in 1..GRADCHECK_CANDIDATES {
        if best >= safe {
            break;
        }
        let candidate = make_batch(c);
        let margin = relu_margin(&bundle, &candidate.x)?;
        if margin > best {
            best = margin;
            batch = candidate;
        }
    }
    let obj = Objective::of(cfg);
    let failed = |e: StepFailure| TrainError::Step {
        epoch: 0,
        step: 0,
        detail: e.detail,
    };

    let mut adv = RngStream::new(cfg.seed, STREAM_ADVERSARIAL);
    let mut mc = RngStream::new(cfg.seed, STREAM_UNCERTAINTY);
    let mut draws = Draws::sample(&mut adv, &mut mc);
    let mut tape = Tape::new();
    let bound = bundle.bind(&mut tape).map_err(NetError::from)?;
    assemble(&mut tape, &bundle, &bound, cfg, obj, &batch, None, obj.alpha_tce, &mut draws).map_err(failed)?;
    let record = draws.record;

    let params: Vec<Array2<T>> = bundle.params().into_iter().cloned().collect();
    gradcheck(
        |tape: &mut Tape<T>, vars: &[Var]| -> Result<Var, StepFailure> {
            let layer = |i: usize| BoundDense {
                weight: vars[2 * i],
                bias: vars[2 * i + 1],
            };
            let bound = BoundBundle {
                feature: [layer(0), layer(1)],
                classifier: layer(2),
                discriminator: [layer(3), layer(4)],
            };
            let mut draws = Draws::replay(record.clone());
            assemble(tape, &bundle, &bound, cfg, obj, &batch, None, obj.alpha_tce, &mut draws)
        },
        &params,
        step,
    )
    .map_err(failed)
}

impl<T: Scalar> Run<'_, T> {
    /// One SGD step; returns the total loss.
    fn step(&mut self, batch: &Batch<T>, progress: f64, alpha_tce: f64) -> Result<f64, StepFailure> {
        let cfg = self.cfg;
        let lambda = if self.obj.reverse {
            Some(grl_lambda(T::lit(progress)))
        } else {
            Some(T::zero())
        };
        let mut tape = Tape::new();
        let bound = self.bundle.bind(&mut tape)?;
        let mut draws = Draws::sample(&mut self.adv_rng, &mut self.mc_rng);
        let total = assemble(
            &mut tape,
            &self.bundle,
            &bound,
            cfg,
            self.obj,
            batch,
            lambda,
            alpha_tce,
            &mut draws,
        )?;

        let grads = tape.backward(total)?;
        let grads: Vec<Array2<T>> = bound.vars().iter().map(|&v| grads.wrt(v)).collect();
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(StepFailure {
                non_finite: true,
                detail: format!("gradient of {}", ModelBundle::<T>::PARAM_NAMES[i]),
            });
        }
        let mut params = self.bundle.params_mut();
        sgd_step(&mut params, &grads, &mut self.velocity, T::lit(cfg.lr), T::lit(cfg.momentum))
            .map_err(|e| StepFailure {
                non_finite: false,
                detail: e.to_string(),
            })?;
        Ok(tape.value(total).item().map_or(f64::NAN, Scalar::as_f64))
    }

    /// Full-pool diagnostics with dropout off (the uncertainty passes use
    /// their own per-epoch stream). Computed identically for every method,
    /// so the loss columns are measurements of the current network rather
    /// than of the terms a method happens to train with; only `L_total`
    /// applies the method's weights.
    fn diagnostics(&self, epoch: usize, alpha_tce: f64, split: &Split) -> Result<Diagnostics<T>, TrainError> {
        let cfg = self.cfg;
        let obj = self.obj;
        let (src, tl, tu) = (&self.source, &self.target_labeled, &self.target_unlabeled);
        let (ns, n_lab) = (src.len(), src.len() + tl.len());
        let x: Array2<T> = stack(&[&src.x, &tl.x, &tu.x]);
        let n = x.rows();
        let labels: Vec<usize> = src.y.iter().chain(&tl.y).copied().collect();

        let mut tape = Tape::new();
        let bound = self.bundle.bind(&mut tape).map_err(NetError::from)?;
        let xv = tape.leaf(x).map_err(NetError::from)?;
        let f = self.bundle.features(&mut tape, &bound, xv)?;
        let g = self.bundle.class_probs(&mut tape, &bound, f).map_err(NetError::from)?;
        let g_lab = tape.slice_rows(g, 0, n_lab).map_err(NetError::from)?;
        let l_y = loss_classifier(&mut tape, g_lab, &labels, None)?;
        let p = self
            .bundle
            .discriminate(&mut tape, &bound, f, MaskSource::Off, None)
            .map_err(NetError::from)?;
        let features = tape.value(f).clone();

        let mut eval_rng = RngStream::new(cfg.seed, STREAM_EVAL + epoch as u64);
        let u = if cfg.dropout == 0.0 {
            vec![T::zero(); n]
        } else {
            mc_variance(&self.bundle, &features, cfg.passes.max(2), &mut eval_rng)?
        };
        let domain = (0..n).map(|i| u8::from(i < ns)).collect();
        let record = UncertaintyRecord::from_variances(u, domain, cfg.passes.max(2))?;

        let p_src = tape.slice_rows(p, 0, ns).map_err(NetError::from)?;
        let p_tgt = tape.slice_rows(p, ns, n).map_err(NetError::from)?;
        let (mu_src, mu_tgt) = if obj.uncertainty {
            obj.mu_weights(&record.mu, ns)
        } else {
            (vec![T::zero(); ns], vec![T::zero(); n - ns])
        };
        let l_d = loss_adversarial_weighted(&mut tape, p_src, p_tgt, &mu_src, &mu_tgt)?;
        let l_adv = loss_adv(&mut tape, l_y, l_d, obj.alpha_adv)?;

        let g_u = tape.slice_rows(g, n_lab, n).map_err(NetError::from)?;
        let pseudo = PseudoLabelSet::select(tape.value(g_u).clone(), T::lit(cfg.beta), T::lit(cfg.gamma))?;
        let s_u = record.s[n_lab..].to_vec();
        let l_pce = loss_pce(&mut tape, g_u, &pseudo.positive, &s_u)?;
        let l_nce = loss_nce(&mut tape, g_u, &pseudo.negative, &s_u)?;

        let value = |v: Var| tape.value(v).item().map_or(f64::NAN, Scalar::as_f64);
        let l_bias: f64 = record.u.iter().map(|&v| v.as_f64() * v.as_f64()).sum();
        let trained_bias: f64 = if obj.uncertainty {
            let mask: Vec<T> = obj.bias_mask(ns, n);
            record.u.iter().zip(&mask).map(|(&v, &m)| (v * v * m).as_f64()).sum()
        } else {
            0.0
        };
        let trained_tce = if obj.uncertainty {
            let pce = if obj.pce { value(l_pce) } else { 0.0 };
            let nce = if obj.nce { value(l_nce) } else { 0.0 };
            pce + obj.alpha_nce * nce
        } else {
            0.0
        };

        let pad_seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64);
        let to_f64 = |a: Array2<T>| a.cast::<f64>();
        let pad = proxy_a_distance(
            &to_f64(features.slice_rows(0, ns)),
            &to_f64(features.slice_rows(n_lab, n)),
            pad_seed,
        )?;

        let row = MetricsRow {
            epoch,
            l_y: value(l_y),
            l_adv: value(l_adv),
            l_bias,
            l_pce: value(l_pce),
            l_nce: value(l_nce),
            l_total: value(l_adv) + obj.alpha_bias * trained_bias + alpha_tce * trained_tce,
            target_accuracy: evaluate(&self.bundle, split, Subset::UnlabeledTarget)?,
            source_accuracy: evaluate(&self.bundle, split, Subset::Source)?,
            mean_u: record.mean_u().as_f64(),
            mean_mu: record.mean_mu().as_f64(),
            proxy_a_distance: pad,
            wall_ms: 0,
        };
        if !row.is_finite() {
            return Err(TrainError::NonFiniteMetrics(epoch));
        }
        Ok(Diagnostics {
            row,
            record,
            pseudo,
            pseudo_weights: s_u,
        })
    }
}

pub fn train<T: Scalar>(cfg: &ExperimentConfig, pair: &DomainPair) -> Result<TrainOutcome<T>, TrainError> {
    train_observed(cfg, pair, |_| {})
}

/// Trains per `cfg`, calling `observer` after every epoch's diagnostics.
pub fn train_observed<T: Scalar>(
    cfg: &ExperimentConfig,
    pair: &DomainPair,
    mut observer: impl FnMut(&EpochReport<'_, T>),
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    let split = make_splits(pair, cfg.split_mode(), cfg.data_seed())?;
    if split.source.is_empty() {
        return Err(TrainError::EmptySubset("source"));
    }
    if split.target_unlabeled.is_empty() {
        return Err(TrainError::EmptySubset("unlabeled target"));
    }

    let mut balance_rng = RngStream::new(cfg.seed, STREAM_BALANCE);
    let n_balanced = split.source.len().max(split.target_unlabeled.len());
    let source = upsample(&split.source, n_balanced, &mut balance_rng);
    let target_unlabeled = upsample(&split.target_unlabeled, n_balanced, &mut balance_rng);

    let bundle: ModelBundle<T> = initial_bundle(cfg, pair.dim(), pair.classes);
    let velocity = bundle.params().iter().map(|p| Array2::zeros(p.rows(), p.cols())).collect();
    let mut run = Run {
        cfg,
        obj: Objective::of(cfg),
        bundle,
        velocity,
        adv_rng: RngStream::new(cfg.seed, STREAM_ADVERSARIAL),
        mc_rng: RngStream::new(cfg.seed, STREAM_UNCERTAINTY),
        source,
        target_labeled: split.target_labeled.clone(),
        target_unlabeled,
    };

    let mut batch_rng = RngStream::new(cfg.seed, STREAM_BATCH);
    let mut src_cycle = Cycler::new(run.source.len(), &mut batch_rng);
    let mut tl_cycle = Cycler::new(run.target_labeled.len(), &mut batch_rng);
    let mut tu_cycle = Cycler::new(run.target_unlabeled.len(), &mut batch_rng);
    let n_tl = if run.target_labeled.is_empty() {
        0
    } else {
        cfg.batch_tgt_labeled
    };

    let steps_per_epoch = n_balanced.div_ceil(cfg.batch_src).max(n_balanced.div_ceil(cfg.batch_tgt_unlabeled));
    let total_steps = steps_per_epoch * cfg.epochs;
    info!(
        "training {} / {} for {} epochs ({} steps), {} source, {} labeled target, {} unlabeled target",
        cfg.method,
        cfg.mode,
        cfg.epochs,
        total_steps,
        split.source.len(),
        split.target_labeled.len(),
        split.target_unlabeled.len()
    );

    let started = Instant::now();
    let mut log = MetricsLog::default();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        for within in 0..steps_per_epoch {
            let si = src_cycle.take(cfg.batch_src, &mut batch_rng);
            let li = tl_cycle.take(n_tl, &mut batch_rng);
            let ui = tu_cycle.take(cfg.batch_tgt_unlabeled, &mut batch_rng);
            let batch = Batch {
                x: stack(&[
                    &run.source.x.select_rows(&si),
                    &run.target_labeled.x.select_rows(&li),
                    &run.target_unlabeled.x.select_rows(&ui),
                ]),
                labels: si
                    .iter()
                    .map(|&i| run.source.y[i])
                    .chain(li.iter().map(|&i| run.target_labeled.y[i]))
                    .collect(),
                ns: si.len(),
                n_labeled_target: li.len(),
            };
            let progress = step as f64 / total_steps as f64;
            let alpha_tce = tce_weight(run.obj.alpha_tce, cfg.warmup_frac, step, total_steps);
            if let Err(fail) = run.step(&batch, progress, alpha_tce) {
                let dump = batch_dump(&[
                    (&run.source, &si, "source", true),
                    (&run.target_labeled, &li, "target", true),
                    (&run.target_unlabeled, &ui, "target", false),
                ]);
                return Err(if fail.non_finite {
                    TrainError::NonFinite {
                        epoch,
                        step: within,
                        detail: fail.detail,
                        batch: dump,
                    }
                } else {
                    TrainError::Step {
                        epoch,
                        step: within,
                        detail: fail.detail,
                    }
                });
            }
            step += 1;
        }
        let alpha_tce = tce_weight(run.obj.alpha_tce, cfg.warmup_frac, step, total_steps);
        let mut diag = run.diagnostics(epoch, alpha_tce, &split)?;
        if cfg.record_wall_time {
            diag.row.wall_ms = started.elapsed().as_millis() as u64;
        }
        debug!(
            "epoch {epoch}: L_total {:.4}, target acc {:.4}, source acc {:.4}, mean u {:.3e}, PAD {:.3}",
            diag.row.l_total,
            diag.row.target_accuracy,
            diag.row.source_accuracy,
            diag.row.mean_u,
            diag.row.proxy_a_distance
        );
        observer(&EpochReport {
            row: &diag.row,
            uncertainty: &diag.record,
            pseudo: &diag.pseudo,
            pseudo_weights: &diag.pseudo_weights,
        });
        log.push(diag.row);
    }
    Ok(TrainOutcome {
        bundle: run.bundle,
        log,
        steps: step,
        split,
    })
}
