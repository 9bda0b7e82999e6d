use std::io::Write;

use thiserror::Error;

use utep_core::losses::{loss_adversarial_weighted, loss_bias, loss_classifier, loss_nce, loss_pce, LossError};
use utep_core::ndgrad::{gradcheck, Array2, GradcheckReport, NdError, RngStream, Tape, Var};
use utep_core::pseudo::PseudoLabelSet;
use utep_core::trainer::{load_pair, objective_gradcheck, ExperimentConfig, ModeKind};
use utep_core::uncertainty::{variance_node, UncertaintyError};

use crate::args::GradcheckArgs;
use crate::{load_config, CliError};

pub const TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

type Fragment = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, FragmentError>>;

/// One row of the report table.
#[derive(Clone, Debug)]
pub struct OpResult {
    pub name: String,
    pub report: GradcheckReport,
}

/// Sums an arbitrary node against fixed random weights so every output
/// entry gets a distinct upstream gradient.
fn contract(t: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var, NdError> {
    let (r, c) = t.shape(v);
    let w = t.leaf(RngStream::new(seed, 99).uniform_array(r, c, 1.0))?;
    let p = t.mul(v, w)?;
    t.sum(p)
}

/// Failure while building a check fragment.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct FragmentError(String);

impl From<NdError> for FragmentError {
    fn from(e: NdError) -> Self {
        Self(e.to_string())
    }
}

impl From<LossError> for FragmentError {
    fn from(e: LossError) -> Self {
        Self(e.to_string())
    }
}

impl From<UncertaintyError> for FragmentError {
    fn from(e: UncertaintyError) -> Self {
        Self(e.to_string())
    }
}

/// Every tape op and loss, each through a random contraction.
pub fn op_cases(seed: u64) -> Vec<(String, Vec<Array2<f64>>, Fragment)> {
    let mut rng = RngStream::new(seed, 0);
    let mut draw = |r: usize, c: usize, shift: f64| rng.uniform_array::<f64>(r, c, 2.0).map(|v| v + shift);
    let a = draw(4, 3, 0.0);
    let b = draw(4, 3, 0.0);
    let w = draw(3, 2, 0.0);
    let row = draw(1, 3, 0.0);
    let pos = draw(4, 3, 2.5);
    let logits = draw(6, 3, 0.0);
    let col = draw(6, 1, 0.0);
    let passes: Vec<Array2<f64>> = (0..4).map(|_| draw(6, 1, 0.0)).collect();
    let mask = RngStream::new(seed, 1).dropout_mask::<f64>(4, 3, 0.5);
    let c = seed;

    let unary = |name: &str, x: &Array2<f64>, op: fn(&mut Tape<f64>, Var) -> Result<Var, NdError>| {
        let f: Fragment = Box::new(move |t, v| {
            let y = op(t, v[0])?;
            Ok(contract(t, y, c)?)
        });
        (name.to_string(), vec![x.clone()], f)
    };
    let binary = |name: &str, x: &Array2<f64>, y: &Array2<f64>, op: fn(&mut Tape<f64>, Var, Var) -> Result<Var, NdError>| {
        let f: Fragment = Box::new(move |t, v| {
            let z = op(t, v[0], v[1])?;
            Ok(contract(t, z, c)?)
        });
        (name.to_string(), vec![x.clone(), y.clone()], f)
    };

    let mut cases = vec![
        binary("matmul", &a, &w, |t, x, y| t.matmul(x, y)),
        binary("add", &a, &b, |t, x, y| t.add(x, y)),
        binary("add (row broadcast)", &a, &row, |t, x, y| t.add(x, y)),
        binary("sub", &a, &b, |t, x, y| t.sub(x, y)),
        binary("mul", &a, &b, |t, x, y| t.mul(x, y)),
        binary("concat_rows", &a, &b, |t, x, y| t.concat_rows(x, y)),
        unary("scale", &a, |t, x| t.scale(x, -1.7)),
        unary("add_scalar", &a, |t, x| t.add_scalar(x, 0.3)),
        unary("one_minus", &a, |t, x| t.one_minus(x)),
        unary("relu", &a, |t, x| t.relu(x)),
        unary("sigmoid", &a, |t, x| t.sigmoid(x)),
        unary("softmax", &a, |t, x| t.softmax(x)),
        unary("log", &pos, |t, x| t.log(x)),
        unary("log_clamped", &pos, |t, x| t.log_clamped(x, 1e-12)),
        unary("exp", &a, |t, x| t.exp(x)),
        unary("square", &a, |t, x| t.square(x)),
        unary("sum_rows", &a, |t, x| t.sum_rows(x)),
        unary("slice_rows", &a, |t, x| t.slice_rows(x, 1, 3)),
        // The reversal node's backward factor is -lambda; at lambda = -1 it
        // must agree with differentiating its identity forward map.
        unary("gradient_reverse", &a, |t, x| t.gradient_reverse(x, -1.0)),
    ];
    let sq_sum: Fragment = Box::new(|t, v| {
        let s = t.square(v[0])?;
        Ok(t.sum(s)?)
    });
    cases.push(("sum".into(), vec![a.clone()], sq_sum));
    let sq_mean: Fragment = Box::new(|t, v| {
        let s = t.square(v[0])?;
        Ok(t.mean(s)?)
    });
    cases.push(("mean".into(), vec![a.clone()], sq_mean));
    let drop: Fragment = Box::new(move |t, v| {
        let d = t.dropout(v[0], &mask, 0.5)?;
        Ok(contract(t, d, c)?)
    });
    cases.push(("dropout (frozen mask)".into(), vec![a.clone()], drop));

    let variance: Fragment = Box::new(move |t, v| {
        let ps = v
            .iter()
            .map(|&x| t.sigmoid(x))
            .collect::<Result<Vec<_>, _>>()?;
        let u = variance_node(t, &ps)?;
        Ok(contract(t, u, c)?)
    });
    cases.push(("mc_variance".into(), passes, variance));

    let labels = vec![0, 2, 1, 1, 0, 2];
    let weights: Vec<f64> = (0..6).map(|i| 0.5 + 0.1 * i as f64).collect();
    let ce: Fragment = Box::new(move |t, v| {
        let g = t.softmax(v[0])?;
        Ok(loss_classifier(t, g, &labels, Some(&weights))?)
    });
    cases.push(("loss_classifier".into(), vec![logits.clone()], ce));

    let adv: Fragment = Box::new(|t, v| {
        let p = t.sigmoid(v[0])?;
        let ps = t.slice_rows(p, 0, 2)?;
        let pt = t.slice_rows(p, 2, 6)?;
        Ok(loss_adversarial_weighted(t, ps, pt, &[0.2, 0.9], &[0.0, 0.5, 1.0, 0.3])?)
    });
    cases.push(("loss_adversarial_weighted".into(), vec![col.clone()], adv));

    let bias: Fragment = Box::new(|t, v| Ok(loss_bias(t, v[0])?));
    cases.push(("loss_bias".into(), vec![col], bias));

    let probs = {
        let mut t = Tape::new();
        let l = t.leaf(logits.clone()).expect("finite");
        let g = t.softmax(l).expect("softmax");
        t.value(g).clone()
    };
    let set = PseudoLabelSet::select(probs, 0.4, 0.3).expect("valid thresholds");
    let s: Vec<f64> = (0..6).map(|i| 1.0 - 0.15 * i as f64).collect();
    let (h, l, s2) = (set.positive.clone(), set.negative.clone(), s.clone());
    let pce: Fragment = Box::new(move |t, v| {
        let g = t.softmax(v[0])?;
        Ok(loss_pce(t, g, &h, &s)?)
    });
    cases.push(("loss_pce".into(), vec![logits.clone()], pce));
    let nce: Fragment = Box::new(move |t, v| {
        let g = t.softmax(v[0])?;
        Ok(loss_nce(t, g, &l, &s2)?)
    });
    cases.push(("loss_nce".into(), vec![logits], nce));
    cases
}

/// Runs every op case plus the full objective in UDA and SSDA form.
pub fn run_suite(seed: u64, base: &ExperimentConfig) -> Result<Vec<OpResult>, CliError> {
    let mut results = Vec::new();
    for (name, inputs, f) in op_cases(seed) {
        let report = gradcheck(|t: &mut Tape<f64>, v: &[Var]| f(t, v), &inputs, STEP)
            .map_err(|e| CliError::Failed(format!("{name}: {e}")))?;
        results.push(OpResult { name, report });
    }
    for mode in [ModeKind::Uda, ModeKind::Ssda] {
        let mut cfg = ExperimentConfig::for_mode(mode);
        for (k, v) in base.to_pairs() {
            if !k.starts_with("batch_") && k != "mode" {
                cfg.set(k, &v).expect("keys come from a valid config");
            }
        }
        cfg.seed = seed;
        if mode == ModeKind::Ssda && cfg.ssda_shots == 0 {
            cfg.ssda_shots = 3;
        }
        let pair = load_pair(&cfg).map_err(CliError::Train)?;
        let report = objective_gradcheck(&cfg, &pair, STEP).map_err(CliError::Train)?;
        results.push(OpResult {
            name: format!("L_total ({mode}, frozen masks)"),
            report,
        });
    }
    Ok(results)
}

pub fn format_table(results: &[OpResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(2).max(2);
    let mut out = format!("{:<width$}  {:>8}  {:>12}\n", "op", "entries", "max_rel_err");
    for r in results {
        out.push_str(&format!(
            "{:<width$}  {:>8}  {:>12.3e}\n",
            r.name, r.report.entries_checked, r.report.max_relative_error
        ));
    }
    let worst = results.iter().map(|r| r.report.max_relative_error).fold(0.0, f64::max);
    out.push_str(&format!("max relative error: {worst:.3e} (tolerance {TOLERANCE:e})\n"));
    out
}

pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut impl Write) -> Result<(), CliError> {
    let base = load_config(args.config.as_deref())?;
    let results = run_suite(args.seed, &base)?;
    out.write_all(format_table(&results).as_bytes()).map_err(|e| CliError::Io {
        path: "stdout".into(),
        msg: e.to_string(),
    })?;
    let failing: Vec<&str> = results
        .iter()
        .filter(|r| !r.report.passes(TOLERANCE))
        .map(|r| r.name.as_str())
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("gradient check above tolerance: {}", failing.join(", "))))
    }
}
