//! Feature extractor, classifier and dropout-bearing domain discriminator.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndgrad::{Array2, NdError, RngStream, Tape, Var};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error("input has {got} features, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Layer widths and the discriminator dropout rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub classes: usize,
    pub disc_hidden: usize,
    pub dropout_rate: f64,
}

impl Architecture {
    /// input → 64 → 32 features; classifier 32 → C; discriminator 32 → 32 (ρ = 0.5) → 1.
    pub fn desk(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: 64,
            feature_dim: 32,
            classes,
            disc_hidden: 32,
            dropout_rate: 0.5,
        }
    }
}

/// Weight `fan_in × fan_out` and bias `1 × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array2<T>,
}

impl<T: Scalar> Dense<T> {
    fn init(rng: &mut RngStream, fan_in: usize, fan_out: usize, relu_follows: bool) -> Self {
        let bound = if relu_follows {
            (6.0 / fan_in as f64).sqrt()
        } else {
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        };
        Self {
            weight: rng.uniform_array(fan_in, fan_out, bound),
            bias: Array2::zeros(1, fan_out),
        }
    }

    fn bind(&self, tape: &mut Tape<T>) -> Result<BoundDense, NdError> {
        Ok(BoundDense {
            weight: tape.leaf(self.weight.clone())?,
            bias: tape.leaf(self.bias.clone())?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    pub weight: Var,
    pub bias: Var,
}

impl BoundDense {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var, NdError> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add(xw, self.bias)
    }
}

/// G_f, G_y and G_d together with their architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle<T> {
    pub arch: Architecture,
    pub feature: [Dense<T>; 2],
    pub classifier: Dense<T>,
    pub discriminator: [Dense<T>; 2],
}

/// The bundle's parameters as tape leaves, in [`ModelBundle::PARAM_NAMES`] order.
#[derive(Clone, Copy, Debug)]
pub struct BoundBundle {
    pub feature: [BoundDense; 2],
    pub classifier: BoundDense,
    pub discriminator: [BoundDense; 2],
}

impl BoundBundle {
    pub fn vars(&self) -> [Var; 10] {
        let [f0, f1] = self.feature;
        let c = self.classifier;
        let [d0, d1] = self.discriminator;
        [
            f0.weight, f0.bias, f1.weight, f1.bias, c.weight, c.bias, d0.weight, d0.bias, d1.weight,
            d1.bias,
        ]
    }
}

/// Where the discriminator's hidden-layer dropout mask comes from.
pub enum MaskSource<'a, T> {
    /// No dropout: deterministic evaluation forward.
    Off,
    Fixed(&'a Array2<T>),
    Fresh(&'a mut RngStream),
}

impl<T: Scalar> ModelBundle<T> {
    pub const PARAM_NAMES: [&'static str; 10] = [
        "feature.0.weight",
        "feature.0.bias",
        "feature.1.weight",
        "feature.1.bias",
        "classifier.weight",
        "classifier.bias",
        "discriminator.0.weight",
        "discriminator.0.bias",
        "discriminator.1.weight",
        "discriminator.1.bias",
    ];

    pub fn new(arch: Architecture, rng: &mut RngStream) -> Self {
        Self {
            arch,
            feature: [
                Dense::init(rng, arch.input_dim, arch.hidden_dim, true),
                Dense::init(rng, arch.hidden_dim, arch.feature_dim, false),
            ],
            classifier: Dense::init(rng, arch.feature_dim, arch.classes, false),
            discriminator: [
                Dense::init(rng, arch.feature_dim, arch.disc_hidden, true),
                Dense::init(rng, arch.disc_hidden, 1, false),
            ],
        }
    }

    pub fn params(&self) -> [&Array2<T>; 10] {
        let [f0, f1] = &self.feature;
        let c = &self.classifier;
        let [d0, d1] = &self.discriminator;
        [
            &f0.weight, &f0.bias, &f1.weight, &f1.bias, &c.weight, &c.bias, &d0.weight, &d0.bias,
            &d1.weight, &d1.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Array2<T>; 10] {
        let [f0, f1] = &mut self.feature;
        let c = &mut self.classifier;
        let [d0, d1] = &mut self.discriminator;
        [
            &mut f0.weight,
            &mut f0.bias,
            &mut f1.weight,
            &mut f1.bias,
            &mut c.weight,
            &mut c.bias,
            &mut d0.weight,
            &mut d0.bias,
            &mut d1.weight,
            &mut d1.bias,
        ]
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Result<BoundBundle, NdError> {
        Ok(BoundBundle {
            feature: [self.feature[0].bind(tape)?, self.feature[1].bind(tape)?],
            classifier: self.classifier.bind(tape)?,
            discriminator: [self.discriminator[0].bind(tape)?, self.discriminator[1].bind(tape)?],
        })
    }

    /// f = relu(x W1 + b1) W2 + b2.
    pub fn features(&self, tape: &mut Tape<T>, bound: &BoundBundle, x: Var) -> Result<Var, NetError> {
        let cols = tape.shape(x).1;
        if cols != self.arch.input_dim {
            return Err(NetError::InputDim {
                expected: self.arch.input_dim,
                got: cols,
            });
        }
        let h = bound.feature[0].forward(tape, x)?;
        let h = tape.relu(h)?;
        Ok(bound.feature[1].forward(tape, h)?)
    }

    /// g(x) = softmax(f W_y + b_y).
    pub fn class_probs(&self, tape: &mut Tape<T>, bound: &BoundBundle, features: Var) -> Result<Var, NdError> {
        let logits = bound.classifier.forward(tape, features)?;
        tape.softmax(logits)
    }

    /// P̂(d = 1 | x) as a column. With `grl = Some(λ)` the features pass
    /// through a gradient-reversal node first.
    pub fn discriminate(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundBundle,
        features: Var,
        mask: MaskSource<'_, T>,
        grl: Option<T>,
    ) -> Result<Var, NdError> {
        let input = match grl {
            Some(lambda) => tape.gradient_reverse(features, lambda)?,
            None => features,
        };
        let h = bound.discriminator[0].forward(tape, input)?;
        let h = tape.relu(h)?;
        let rate = T::lit(self.arch.dropout_rate);
        let h = match mask {
            MaskSource::Off => h,
            MaskSource::Fixed(m) => tape.dropout(h, m, rate)?,
            MaskSource::Fresh(rng) => {
                let (r, c) = tape.shape(h);
                let m = rng.dropout_mask(r, c, self.arch.dropout_rate);
                tape.dropout(h, &m, rate)?
            }
        };
        let logit = bound.discriminator[1].forward(tape, h)?;
        tape.sigmoid(logit)
    }

    /// Eager G_f(x).
    pub fn forward_features(&self, x: &Array2<T>) -> Result<Array2<T>, NetError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let xv = tape.leaf(x.clone())?;
        let f = self.features(&mut tape, &bound, xv)?;
        Ok(tape.value(f).clone())
    }

    /// Eager g(x) = G_y(G_f(x)), one probability row per sample.
    pub fn forward_classifier(&self, x: &Array2<T>) -> Result<Array2<T>, NetError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let xv = tape.leaf(x.clone())?;
        let f = self.features(&mut tape, &bound, xv)?;
        let g = self.class_probs(&mut tape, &bound, f)?;
        Ok(tape.value(g).clone())
    }

    /// Eager discriminator outputs on precomputed features.
    pub fn forward_discriminator(&self, features: &Array2<T>, mask: MaskSource<'_, T>) -> Result<Vec<T>, NetError> {
        if features.cols() != self.arch.feature_dim {
            return Err(NetError::InputDim {
                expected: self.arch.feature_dim,
                got: features.cols(),
            });
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let fv = tape.leaf(features.clone())?;
        let p = self.discriminate(&mut tape, &bound, fv, mask, None)?;
        Ok(tape.value(p).data().to_vec())
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.data().len()).sum()
    }

    /// Flat JSON object `{name: {rows, cols, data}}`; reals use shortest
    /// round-trip formatting so reading back is lossless.
    pub fn to_checkpoint_json(&self) -> String {
        let map: BTreeMap<&str, CheckpointEntry> = Self::PARAM_NAMES
            .iter()
            .zip(self.params())
            .map(|(name, p)| {
                (
                    *name,
                    CheckpointEntry {
                        rows: p.rows(),
                        cols: p.cols(),
                        data: p.data().iter().map(|v| v.as_f64()).collect(),
                    },
                )
            })
            .collect();
        serde_json::to_string_pretty(&map).expect("checkpoint serializes")
    }

    /// Reads a checkpoint; the architecture is recovered from the shapes.
    pub fn from_checkpoint_json(json: &str, dropout_rate: f64) -> Result<Self, NetError> {
        let mut map: BTreeMap<String, CheckpointEntry> =
            serde_json::from_str(json).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        let mut take = |name: &str| -> Result<Array2<T>, NetError> {
            let e = map
                .remove(name)
                .ok_or_else(|| NetError::Checkpoint(format!("missing layer {name}")))?;
            let data = e.data.into_iter().map(T::lit).collect();
            Ok(Array2::from_vec(e.rows, e.cols, data)?)
        };
        let mut dense = |w: &str, b: &str| -> Result<Dense<T>, NetError> {
            Ok(Dense {
                weight: take(w)?,
                bias: take(b)?,
            })
        };
        let n = Self::PARAM_NAMES;
        let f0 = dense(n[0], n[1])?;
        let f1 = dense(n[2], n[3])?;
        let c = dense(n[4], n[5])?;
        let d0 = dense(n[6], n[7])?;
        let d1 = dense(n[8], n[9])?;
        let arch = Architecture {
            input_dim: f0.weight.rows(),
            hidden_dim: f0.weight.cols(),
            feature_dim: f1.weight.cols(),
            classes: c.weight.cols(),
            disc_hidden: d0.weight.cols(),
            dropout_rate,
        };
        let bundle = Self {
            arch,
            feature: [f0, f1],
            classifier: c,
            discriminator: [d0, d1],
        };
        bundle.check_shapes()?;
        Ok(bundle)
    }

    fn check_shapes(&self) -> Result<(), NetError> {
        let a = self.arch;
        let expect = [
            (a.input_dim, a.hidden_dim),
            (1, a.hidden_dim),
            (a.hidden_dim, a.feature_dim),
            (1, a.feature_dim),
            (a.feature_dim, a.classes),
            (1, a.classes),
            (a.feature_dim, a.disc_hidden),
            (1, a.disc_hidden),
            (a.disc_hidden, 1),
            (1, 1),
        ];
        for ((name, p), shape) in Self::PARAM_NAMES.iter().zip(self.params()).zip(expect) {
            if p.shape() != shape {
                return Err(NetError::Checkpoint(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    p.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Gradient-reversal coefficient λ(p) = 2 / (1 + exp(-10 p)) - 1 for
/// training progress `p`; values outside `[0, 1]` are clamped.
pub fn grl_lambda<T: Scalar>(progress: T) -> T {
    let p = if progress < T::zero() || progress > T::one() {
        warn!("training progress {progress} outside [0, 1], clamping");
        progress.max(T::zero()).min(T::one())
    } else {
        progress
    };
    T::lit(2.0) / (T::one() + (T::lit(-10.0) * p).exp()) - T::one()
}
