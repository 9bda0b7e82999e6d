use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use utep_core::trainer::{ExperimentConfig, Method};

use crate::args::SweepArgs;
use crate::run::{run_experiment, RunSummary};
use crate::{load_config, output_dir, write_file, CliError};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

/// Component toggles of one ablation row, in column order
/// SIW, TIW, SBL, TBL, PCE, NCE.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub toggles: [bool; 6],
}

/// The seven ablation rows, from the plain adversarial baseline to the
/// full configuration.
pub const ABLATION_VARIANTS: [Variant; 7] = [
    Variant {
        name: "baseline",
        toggles: [false, false, false, false, false, false],
    },
    Variant {
        name: "weights_bias",
        toggles: [true, true, true, true, false, false],
    },
    Variant {
        name: "weights_pseudo",
        toggles: [true, true, false, false, true, true],
    },
    Variant {
        name: "weights_bias_pce",
        toggles: [true, true, true, true, true, false],
    },
    Variant {
        name: "source_side",
        toggles: [true, false, true, false, true, true],
    },
    Variant {
        name: "no_target_bias",
        toggles: [true, true, true, false, true, true],
    },
    Variant {
        name: "full",
        toggles: [true, true, true, true, true, true],
    },
];

pub const TOGGLE_COLUMNS: [&str; 6] = ["SIW", "TIW", "SBL", "TBL", "PCE", "NCE"];

impl Variant {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let [siw, tiw, sbl, tbl, pce, nce] = self.toggles;
        cfg.method = Method::DannUtep;
        cfg.mu_weight_source = siw;
        cfg.mu_weight_target = tiw;
        cfg.bias_source = sbl;
        cfg.bias_target = tbl;
        cfg.use_pce = pce;
        cfg.use_nce = nce;
    }
}

fn toggles_of(cfg: &ExperimentConfig) -> [bool; 6] {
    [
        cfg.mu_weight_source,
        cfg.mu_weight_target,
        cfg.bias_source,
        cfg.bias_target,
        cfg.use_pce,
        cfg.use_nce,
    ]
}

/// One `key=v1,v2,...` argument. Values are split on `;` when present
/// (for list-valued keys such as `blob_shift`), otherwise on `,`.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub key: String,
    pub values: Vec<String>,
}

impl Override {
    pub fn parse(arg: &str) -> Result<Self, CliError> {
        let usage = || CliError::Usage(format!("override `{arg}` is not of the form key=value[,value...]"));
        let (key, rest) = arg.split_once('=').ok_or_else(usage)?;
        let key = key.trim();
        let sep = if rest.contains(';') { ';' } else { ',' };
        let values: Vec<String> = rest.split(sep).map(|v| v.trim().to_string()).collect();
        if key.is_empty() || values.iter().any(String::is_empty) {
            return Err(usage());
        }
        Ok(Self {
            key: key.to_string(),
            values,
        })
    }
}

/// One point of the sweep grid.
#[derive(Clone, Debug)]
pub struct PlannedRun {
    pub name: String,
    pub variant: Option<&'static str>,
    pub assignments: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' })
        .collect()
}

/// Cartesian product of the overrides (first key varies slowest), crossed
/// with the ablation variants when requested. Every point is validated
/// before anything runs.
pub fn plan(base: &ExperimentConfig, overrides: &[Override], ablation: bool) -> Result<Vec<PlannedRun>, CliError> {
    let mut grid: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for o in overrides {
        grid = grid
            .into_iter()
            .flat_map(|point| {
                o.values.iter().map(move |v| {
                    let mut p = point.clone();
                    p.push((o.key.clone(), v.clone()));
                    p
                })
            })
            .collect();
    }
    let variants: Vec<Option<Variant>> = if ablation {
        ABLATION_VARIANTS.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let mut runs = Vec::new();
    for variant in &variants {
        for point in &grid {
            let mut cfg = base.clone();
            for (k, v) in point {
                cfg.set(k, v).map_err(|source| CliError::Config {
                    path: format!("override {k}={v}"),
                    source,
                })?;
            }
            if let Some(var) = variant {
                var.apply(&mut cfg);
            }
            cfg.validate().map_err(|source| CliError::Config {
                path: "sweep point".into(),
                source,
            })?;
            let mut parts: Vec<String> = variant.iter().map(|v| v.name.to_string()).collect();
            parts.extend(point.iter().map(|(k, v)| sanitize(&format!("{k}={v}"))));
            let name = if parts.is_empty() { "base".to_string() } else { parts.join("__") };
            runs.push(PlannedRun {
                name,
                variant: variant.map(|v| v.name),
                assignments: point.clone(),
                config: cfg,
            });
        }
    }
    Ok(runs)
}

/// Outcome of one sub-run.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub run: PlannedRun,
    pub result: Result<RunSummary, String>,
}

/// Trains every planned run in its own subdirectory with up to `jobs`
/// runs in flight; failures are recorded rather than propagated.
pub fn execute(runs: Vec<PlannedRun>, root: &Path, jobs: usize) -> Vec<SweepRow> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunSummary, String>>>> = Mutex::new(vec![None; runs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, runs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(run) = runs.get(i) else { break };
                let dir: PathBuf = root.join(&run.name);
                let mut cfg = run.config.clone();
                cfg.output_dir = dir.display().to_string();
                info!("sweep run {}/{}: {}", i + 1, runs.len(), run.name);
                let r = run_experiment(&cfg, &dir, false).map_err(|e| e.to_string());
                if let Err(msg) = &r {
                    warn!("sweep run {} failed: {msg}", run.name);
                }
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("no worker panicked");
    runs.into_iter()
        .zip(results)
        .map(|(run, r)| SweepRow {
            run,
            result: r.expect("every run was executed"),
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// One row per run: name, variant, toggles, override values, status and
/// final numbers (empty on failure).
pub fn sweep_csv(rows: &[SweepRow], keys: &[String]) -> String {
    let mut out = String::from("run,variant");
    for c in TOGGLE_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    for k in keys {
        out.push(',');
        out.push_str(&csv_field(k));
    }
    out.push_str(",status,final_target_accuracy,best_target_accuracy,final_proxy_a_distance,steps\n");
    for row in rows {
        let run = &row.run;
        out.push_str(&csv_field(&run.name));
        out.push(',');
        out.push_str(run.variant.unwrap_or(""));
        for t in toggles_of(&run.config) {
            out.push(',');
            out.push_str(bit(t));
        }
        for (_, v) in &run.assignments {
            out.push(',');
            out.push_str(&csv_field(v));
        }
        match &row.result {
            Ok(s) => out.push_str(&format!(
                ",ok,{},{},{},{}\n",
                s.final_target_accuracy,
                s.best_target_accuracy,
                s.final_proxy_a_distance.map_or(String::new(), |p| p.to_string()),
                s.steps
            )),
            Err(msg) => out.push_str(&format!(",{},,,,\n", csv_field(&format!("failed: {msg}")))),
        }
    }
    out
}

/// Mean final target accuracy of one variant over its successful runs.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantMean {
    pub variant: Variant,
    pub runs: usize,
    pub failed: usize,
    pub mean_target_accuracy: f64,
}

pub fn ablation_means(rows: &[SweepRow]) -> Vec<VariantMean> {
    ABLATION_VARIANTS
        .iter()
        .map(|v| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.run.variant == Some(v.name)).collect();
            let accs: Vec<f64> = mine
                .iter()
                .filter_map(|r| r.result.as_ref().ok().map(|s| s.final_target_accuracy))
                .collect();
            VariantMean {
                variant: *v,
                runs: mine.len(),
                failed: mine.len() - accs.len(),
                mean_target_accuracy: if accs.is_empty() {
                    f64::NAN
                } else {
                    accs.iter().sum::<f64>() / accs.len() as f64
                },
            }
        })
        .collect()
}

pub fn ablation_csv(means: &[VariantMean]) -> String {
    let mut out = String::from("variant");
    for c in TOGGLE_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",runs,failed,mean_target_accuracy\n");
    for m in means {
        out.push_str(m.variant.name);
        for t in m.variant.toggles {
            out.push(',');
            out.push_str(bit(t));
        }
        out.push_str(&format!(",{},{},{}\n", m.runs, m.failed, m.mean_target_accuracy));
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut base = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    let root = output_dir(args.out.as_deref(), &base);
    let overrides = args
        .overrides
        .iter()
        .map(|a| Override::parse(a))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = plan(&base, &overrides, args.ablation)?;
    info!("sweep of {} runs into {} with {} jobs", runs.len(), root.display(), args.jobs);
    let rows = execute(runs, &root, args.jobs);

    let keys: Vec<String> = overrides.iter().map(|o| o.key.clone()).collect();
    write_file(&root.join(SWEEP_FILE), &sweep_csv(&rows, &keys))?;
    if args.ablation {
        let table = ablation_csv(&ablation_means(&rows));
        write_file(&root.join(ABLATION_FILE), &table)?;
        print!("{table}");
    }
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r.result.is_err())
        .map(|r| r.run.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} of {} sweep runs failed: {}",
            failed.len(),
            rows.len(),
            failed.join(", ")
        )))
    }
}
