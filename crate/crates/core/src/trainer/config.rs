use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synthdata::{Labeling, Mode};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for key `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    Uda,
    Ssda,
    Ssl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Classifier on source labels only; the discriminator is still trained
    /// as a monitor but its gradient never reaches the features.
    SourceOnly,
    Dann,
    DannUtep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    Moons,
    Blobs,
    Csv,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }
    };
}

keyword_enum!(ModeKind { Uda => "uda", Ssda => "ssda", Ssl => "ssl" });
keyword_enum!(Method { SourceOnly => "source_only", Dann => "dann", DannUtep => "dann_utep" });
keyword_enum!(DatasetKind { Moons => "moons", Blobs => "blobs", Csv => "csv" });

/// Every knob of one training run. Read from and echoed as flat
/// `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: ModeKind,
    pub method: Method,
    /// MC-Dropout passes K.
    pub passes: usize,
    pub beta: f64,
    pub gamma: f64,
    pub dropout: f64,
    pub alpha_adv: f64,
    pub alpha_bias: f64,
    pub alpha_tce: f64,
    pub alpha_nce: f64,
    pub warmup_frac: f64,
    pub lr: f64,
    pub momentum: f64,
    pub batch_src: usize,
    pub batch_tgt_unlabeled: usize,
    pub batch_tgt_labeled: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Defaults to `seed` when absent.
    pub data_seed: Option<u64>,
    pub ssda_fraction: f64,
    /// When non-zero, SSDA reveals this many labels per class instead of a fraction.
    pub ssda_shots: usize,
    pub ssl_shots: usize,
    pub mu_weight_source: bool,
    pub mu_weight_target: bool,
    pub bias_source: bool,
    pub bias_target: bool,
    pub use_pce: bool,
    pub use_nce: bool,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub disc_hidden: usize,
    pub ratio_clamp: f64,
    pub record_wall_time: bool,
    pub dataset: DatasetKind,
    pub dataset_path: String,
    pub n_per_domain: usize,
    pub rotation_deg: f64,
    pub translation_x: f64,
    pub translation_y: f64,
    pub noise: f64,
    pub blob_classes: usize,
    pub blob_dim: usize,
    pub blob_shift: Vec<f64>,
    pub blob_sigma: f64,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_mode(ModeKind::Uda)
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true or false".into(),
        }),
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Desk defaults; batch composition depends on the mode.
    pub fn for_mode(mode: ModeKind) -> Self {
        let (batch_src, batch_tgt_labeled, batch_tgt_unlabeled) = match mode {
            ModeKind::Uda | ModeKind::Ssl => (16, 0, 16),
            ModeKind::Ssda => (8, 8, 16),
        };
        Self {
            mode,
            method: Method::DannUtep,
            passes: 10,
            beta: 0.95,
            gamma: 0.05,
            dropout: 0.5,
            alpha_adv: 1.0,
            alpha_bias: 1.0,
            alpha_tce: 1.0,
            alpha_nce: 1.0,
            warmup_frac: 0.2,
            lr: 0.01,
            momentum: 0.9,
            batch_src,
            batch_tgt_unlabeled,
            batch_tgt_labeled,
            epochs: 200,
            seed: 0,
            data_seed: None,
            ssda_fraction: 0.01,
            ssda_shots: 0,
            ssl_shots: 3,
            mu_weight_source: true,
            mu_weight_target: true,
            bias_source: true,
            bias_target: true,
            use_pce: true,
            use_nce: true,
            hidden_dim: 64,
            feature_dim: 32,
            disc_hidden: 32,
            ratio_clamp: 100.0,
            record_wall_time: false,
            dataset: DatasetKind::Moons,
            dataset_path: String::new(),
            n_per_domain: 500,
            rotation_deg: 30.0,
            translation_x: 0.0,
            translation_y: 0.0,
            noise: 0.1,
            blob_classes: 3,
            blob_dim: 2,
            blob_shift: vec![2.0, 0.0],
            blob_sigma: 1.0,
            output_dir: "runs/default".into(),
        }
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn split_mode(&self) -> Mode {
        match self.mode {
            ModeKind::Uda => Mode::Uda,
            ModeKind::Ssda if self.ssda_shots > 0 => Mode::Ssda(Labeling::PerClass(self.ssda_shots)),
            ModeKind::Ssda => Mode::Ssda(Labeling::Fraction(self.ssda_fraction)),
            ModeKind::Ssl => Mode::Ssl {
                shots: self.ssl_shots,
            },
        }
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value;
        match key {
            "mode" => self.mode = parse_value(key, v)?,
            "method" => self.method = parse_value(key, v)?,
            "passes" | "k" => self.passes = parse_value(key, v)?,
            "beta" => self.beta = parse_value(key, v)?,
            "gamma" => self.gamma = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "alpha_adv" => self.alpha_adv = parse_value(key, v)?,
            "alpha_bias" => self.alpha_bias = parse_value(key, v)?,
            "alpha_tce" => self.alpha_tce = parse_value(key, v)?,
            "alpha_nce" => self.alpha_nce = parse_value(key, v)?,
            "warmup_frac" => self.warmup_frac = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "momentum" => self.momentum = parse_value(key, v)?,
            "batch_src" => self.batch_src = parse_value(key, v)?,
            "batch_tgt_unlabeled" => self.batch_tgt_unlabeled = parse_value(key, v)?,
            "batch_tgt_labeled" => self.batch_tgt_labeled = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "data_seed" => {
                self.data_seed = match v {
                    "" | "seed" => None,
                    _ => Some(parse_value(key, v)?),
                }
            }
            "ssda_fraction" => self.ssda_fraction = parse_value(key, v)?,
            "ssda_shots" => self.ssda_shots = parse_value(key, v)?,
            "ssl_shots" => self.ssl_shots = parse_value(key, v)?,
            "mu_weight_source" => self.mu_weight_source = parse_bool(key, v)?,
            "mu_weight_target" => self.mu_weight_target = parse_bool(key, v)?,
            "bias_source" => self.bias_source = parse_bool(key, v)?,
            "bias_target" => self.bias_target = parse_bool(key, v)?,
            "use_pce" => self.use_pce = parse_bool(key, v)?,
            "use_nce" => self.use_nce = parse_bool(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, v)?,
            "feature_dim" => self.feature_dim = parse_value(key, v)?,
            "disc_hidden" => self.disc_hidden = parse_value(key, v)?,
            "ratio_clamp" => self.ratio_clamp = parse_value(key, v)?,
            "record_wall_time" => self.record_wall_time = parse_bool(key, v)?,
            "dataset" => self.dataset = parse_value(key, v)?,
            "dataset_path" => self.dataset_path = v.to_string(),
            "n_per_domain" => self.n_per_domain = parse_value(key, v)?,
            "rotation_deg" => self.rotation_deg = parse_value(key, v)?,
            "translation_x" => self.translation_x = parse_value(key, v)?,
            "translation_y" => self.translation_y = parse_value(key, v)?,
            "noise" => self.noise = parse_value(key, v)?,
            "blob_classes" => self.blob_classes = parse_value(key, v)?,
            "blob_dim" => self.blob_dim = parse_value(key, v)?,
            "blob_shift" => {
                self.blob_shift = v
                    .split(',')
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "blob_sigma" => self.blob_sigma = parse_value(key, v)?,
            "output_dir" => self.output_dir = v.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Builds a config from assignments; `mode` is applied first so that
    /// mode-dependent batch defaults can be overridden by later keys.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)> + Clone) -> Result<Self, ConfigError> {
        let mode = match pairs.clone().into_iter().filter(|(k, _)| *k == "mode").last() {
            Some((k, v)) => parse_value(k, v)?,
            None => ModeKind::Uda,
        };
        let mut cfg = Self::for_mode(mode);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses flat `key = value` text; `#` starts a comment, values may be quoted.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax(i + 1));
            }
            let v = v.trim().trim_matches('"');
            pairs.push((k.to_string(), v.to_string()));
        }
        Self::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        for (name, a) in [
            ("alpha_adv", self.alpha_adv),
            ("alpha_bias", self.alpha_bias),
            ("alpha_tce", self.alpha_tce),
            ("alpha_nce", self.alpha_nce),
        ] {
            if !(a >= 0.0 && a.is_finite()) {
                return bad(format!("{name} = {a} must be a finite value >= 0"));
            }
        }
        if !(0.0 < self.gamma && self.gamma < self.beta && self.beta < 1.0) {
            return bad(format!(
                "thresholds must satisfy 0 < gamma < beta < 1, got gamma = {}, beta = {}",
                self.gamma, self.beta
            ));
        }
        if self.method == Method::DannUtep && self.passes < 2 {
            return bad(format!("dann_utep needs passes >= 2, got {}", self.passes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return bad(format!("warmup_frac {} outside [0, 1]", self.warmup_frac));
        }
        if self.batch_src == 0 || self.batch_tgt_unlabeled == 0 {
            return bad("batch_src and batch_tgt_unlabeled must be positive".into());
        }
        if self.mode == ModeKind::Ssda && self.batch_tgt_labeled == 0 {
            return bad("ssda mode needs batch_tgt_labeled > 0".into());
        }
        if !(self.ssda_fraction > 0.0 && self.ssda_fraction <= 1.0) {
            return bad(format!("ssda_fraction {} outside (0, 1]", self.ssda_fraction));
        }
        if self.hidden_dim == 0 || self.feature_dim == 0 || self.disc_hidden == 0 {
            return bad("layer widths must be positive".into());
        }
        if !(self.ratio_clamp > 0.0) {
            return bad(format!("ratio_clamp {} must be positive", self.ratio_clamp));
        }
        if self.dataset == DatasetKind::Csv && self.dataset_path.is_empty() {
            return bad("dataset = csv needs dataset_path".into());
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mode", self.mode.to_string()),
            ("method", self.method.to_string()),
            ("passes", self.passes.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("dropout", self.dropout.to_string()),
            ("alpha_adv", self.alpha_adv.to_string()),
            ("alpha_bias", self.alpha_bias.to_string()),
            ("alpha_tce", self.alpha_tce.to_string()),
            ("alpha_nce", self.alpha_nce.to_string()),
            ("warmup_frac", self.warmup_frac.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("batch_src", self.batch_src.to_string()),
            ("batch_tgt_unlabeled", self.batch_tgt_unlabeled.to_string()),
            ("batch_tgt_labeled", self.batch_tgt_labeled.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("data_seed", self.data_seed.map_or_else(|| "seed".into(), |s| s.to_string())),
            ("ssda_fraction", self.ssda_fraction.to_string()),
            ("ssda_shots", self.ssda_shots.to_string()),
            ("ssl_shots", self.ssl_shots.to_string()),
            ("mu_weight_source", self.mu_weight_source.to_string()),
            ("mu_weight_target", self.mu_weight_target.to_string()),
            ("bias_source", self.bias_source.to_string()),
            ("bias_target", self.bias_target.to_string()),
            ("use_pce", self.use_pce.to_string()),
            ("use_nce", self.use_nce.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("disc_hidden", self.disc_hidden.to_string()),
            ("ratio_clamp", self.ratio_clamp.to_string()),
            ("record_wall_time", self.record_wall_time.to_string()),
            ("dataset", self.dataset.to_string()),
            ("dataset_path", self.dataset_path.clone()),
            ("n_per_domain", self.n_per_domain.to_string()),
            ("rotation_deg", self.rotation_deg.to_string()),
            ("translation_x", self.translation_x.to_string()),
            ("translation_y", self.translation_y.to_string()),
            ("noise", self.noise.to_string()),
            ("blob_classes", self.blob_classes.to_string()),
            ("blob_dim", self.blob_dim.to_string()),
            ("blob_shift", join_floats(&self.blob_shift)),
            ("blob_sigma", self.blob_sigma.to_string()),
            ("output_dir", self.output_dir.clone()),
        ]
    }

    pub fn to_kv_string(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_reparses_identically() {
        let mut cfg = ExperimentConfig::for_mode(ModeKind::Ssda);
        cfg.lr = 0.1 + 0.2;
        cfg.blob_shift = vec![1.0 / 3.0, -2.5];
        cfg.data_seed = Some(17);
        cfg.use_nce = false;
        let back = ExperimentConfig::parse(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_quotes_and_mode_defaults() {
        let cfg = ExperimentConfig::parse("# desk run\nmode = \"ssda\"\nepochs = 3 # short\n").unwrap();
        assert_eq!((cfg.batch_src, cfg.batch_tgt_labeled, cfg.batch_tgt_unlabeled), (8, 8, 16));
        assert_eq!(cfg.epochs, 3);
        let uda = ExperimentConfig::parse("").unwrap();
        assert_eq!((uda.batch_src, uda.batch_tgt_labeled, uda.batch_tgt_unlabeled), (16, 0, 16));
    }

    #[test]
    fn unknown_key_is_named() {
        assert_eq!(
            ExperimentConfig::parse("learning_rate = 0.1"),
            Err(ConfigError::UnknownKey("learning_rate".into()))
        );
    }

    #[test]
    fn bad_values_and_invariants() {
        assert!(matches!(ExperimentConfig::parse("lr = fast"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse("no equals sign"), Err(ConfigError::Syntax(1))));
        assert!(matches!(ExperimentConfig::parse("gamma = 0.96"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("alpha_tce = -1"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("passes = 1"), Err(ConfigError::Invalid(_))));
        assert!(ExperimentConfig::parse("passes = 1\nmethod = dann").is_ok());
    }
}
