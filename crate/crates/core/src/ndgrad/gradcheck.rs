use serde::Serialize;

use super::{Array2, NdError, Tape, Var};
use crate::scalar::Scalar;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    /// Input holding the worst entry, and the entry's flat index.
    pub worst_input: usize,
    pub worst_entry: usize,
    pub entries_checked: usize,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Checks every entry of every input of a scalar-valued fragment.
///
/// `fragment` rebuilds the graph from leaves for each evaluation, so any
/// randomness (dropout masks) must be captured outside of it.
pub fn gradcheck<T, E, F>(fragment: F, inputs: &[Array2<T>], step: T) -> Result<GradcheckReport, E>
where
    T: Scalar,
    E: From<NdError>,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, E>,
{
    let eval = |values: &[Array2<T>]| -> Result<(Tape<T>, Vec<Var>, Var), E> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|v| tape.leaf(v.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = fragment(&mut tape, &vars)?;
        if tape.shape(out) != (1, 1) {
            return Err(NdError::NotScalar(tape.shape(out)).into());
        }
        Ok((tape, vars, out))
    };

    let (tape, vars, out) = eval(inputs)?;
    let grads = tape.backward(out)?;

    let mut report = GradcheckReport {
        max_relative_error: 0.0,
        worst_input: 0,
        worst_entry: 0,
        entries_checked: 0,
    };
    let mut probe: Vec<Array2<T>> = inputs.to_vec();
    let two_h = step.as_f64() * 2.0;
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for j in 0..inputs[i].data().len() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + step;
            let (t, _, o) = eval(&probe)?;
            let plus = t.value(o).data()[0].as_f64();
            probe[i].data_mut()[j] = orig - step;
            let (t, _, o) = eval(&probe)?;
            let minus = t.value(o).data()[0].as_f64();
            probe[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / two_h;
            let err = relative_error(analytic.data()[j].as_f64(), numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_input = i;
                report.worst_entry = j;
            }
        }
    }
    Ok(report)
}
