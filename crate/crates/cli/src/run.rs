use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use utep_core::trainer::{
    evaluate, load_pair, train_observed, ConfigError, ExperimentConfig, Subset, TrainError, TrainOutcome,
};

use crate::args::RunArgs;
use crate::{load_config, output_dir, write_file, CliError};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const DIVERGED_BATCH_FILE: &str = "nonfinite_batch.csv";

/// What a finished run reports. Serialized deterministically: `wall_ms`
/// stays 0 unless the config asks for wall-clock recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Every config key with its value; parses back to the same config.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    pub final_target_accuracy: f64,
    pub final_source_accuracy: f64,
    /// Absent when no epoch ran.
    pub final_proxy_a_distance: Option<f64>,
    pub final_mean_u: Option<f64>,
    pub best_target_accuracy: f64,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub wall_ms: u64,
}

impl RunSummary {
    pub fn from_outcome(cfg: &ExperimentConfig, out: &TrainOutcome<f64>, wall_ms: u64) -> Result<Self, TrainError> {
        let final_target = evaluate(&out.bundle, &out.split, Subset::UnlabeledTarget)?;
        let final_source = evaluate(&out.bundle, &out.split, Subset::Source)?;
        let (best_epoch, best) = out
            .log
            .rows
            .iter()
            .fold((0, final_target), |(e, a), r| {
                if e == 0 || r.target_accuracy > a {
                    (r.epoch, r.target_accuracy)
                } else {
                    (e, a)
                }
            });
        let last = out.log.last();
        Ok(Self {
            config: cfg.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            seed: cfg.seed,
            epochs: out.log.len(),
            steps: out.steps,
            final_target_accuracy: final_target,
            final_source_accuracy: final_source,
            final_proxy_a_distance: last.map(|r| r.proxy_a_distance),
            final_mean_u: last.map(|r| r.mean_u),
            best_target_accuracy: best,
            best_epoch,
            wall_ms: if cfg.record_wall_time { wall_ms } else { 0 },
        })
    }

    /// The echoed config, parsed back.
    pub fn experiment_config(&self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_pairs(self.config.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Trains `cfg` and writes metrics, summary and checkpoint into `out`.
/// With `dump` set, per-epoch uncertainty and pseudo-label tables go to
/// `out/uncertainty/` and `out/pseudo/`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, dump: bool) -> Result<RunSummary, CliError> {
    let pair = load_pair(cfg).map_err(CliError::Train)?;
    std::fs::create_dir_all(out).map_err(|e| crate::io_error(out, e))?;
    let started = Instant::now();
    let mut dump_error = None;
    let trained = train_observed::<f64>(cfg, &pair, |r| {
        info!(
            "{}: epoch {}/{} target acc {:.4} source acc {:.4} L_total {:.4} PAD {:.3}",
            out.display(),
            r.row.epoch,
            cfg.epochs,
            r.row.target_accuracy,
            r.row.source_accuracy,
            r.row.l_total,
            r.row.proxy_a_distance
        );
        if dump && dump_error.is_none() {
            let name = format!("epoch_{:04}.csv", r.row.epoch);
            let written = write_file(&out.join("uncertainty").join(&name), &r.uncertainty.to_csv())
                .and_then(|()| write_file(&out.join("pseudo").join(&name), &r.pseudo.to_csv(r.pseudo_weights)));
            dump_error = written.err();
        }
    });
    let outcome = match trained {
        Ok(o) => o,
        Err(TrainError::NonFinite {
            epoch,
            step,
            detail,
            batch,
        }) => {
            let path = out.join(DIVERGED_BATCH_FILE);
            write_file(&path, &batch)?;
            return Err(CliError::Diverged {
                detail: format!("epoch {epoch}, step {step}: {detail}"),
                dump: path.display().to_string(),
            });
        }
        Err(e) => return Err(CliError::Train(e)),
    };
    if let Some(e) = dump_error {
        return Err(e);
    }
    let wall_ms = started.elapsed().as_millis() as u64;
    let summary = RunSummary::from_outcome(cfg, &outcome, wall_ms).map_err(CliError::Train)?;
    write_file(&out.join(METRICS_FILE), &outcome.log.to_csv())?;
    write_file(&out.join(CHECKPOINT_FILE), &outcome.bundle.to_checkpoint_json())?;
    write_file(&out.join(SUMMARY_FILE), &summary.to_json())?;
    Ok(summary)
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = output_dir(args.out.as_deref(), &cfg);
    cfg.output_dir = out.display().to_string();
    let summary = run_experiment(&cfg, &out, args.dump_uncertainty)?;
    info!(
        "done: final target accuracy {:.4}, best {:.4} at epoch {}, results in {}",
        summary.final_target_accuracy,
        summary.best_target_accuracy,
        summary.best_epoch,
        out.display()
    );
    Ok(())
}
